//! Binary mel matrix files.
//!
//! Layout, all little-endian: the 8-byte magic, a `u32` format version, `u32`
//! frame count, `u32` mel count, then `frames * mels` `f64` values in row
//! order.

use std::io::{self, Read, Write};

use ndarray::Array2;

use super::MelSpectrogram;

pub const MEL_FILE_MAGIC: [u8; 8] = *b"SKMEL\0\0\0";
pub const MEL_FILE_VERSION: u32 = 1;

pub fn write_mel(mel: &MelSpectrogram, mut w: impl Write) -> io::Result<()> {
    let dim = |n: usize| {
        u32::try_from(n)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))
    };
    w.write_all(&MEL_FILE_MAGIC)?;
    w.write_all(&MEL_FILE_VERSION.to_le_bytes())?;
    w.write_all(&dim(mel.frame_count())?.to_le_bytes())?;
    w.write_all(&dim(mel.num_mels())?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(mel.values().len() * 8);
    for v in mel.values().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_mel(mut r: impl Read) -> io::Result<MelSpectrogram> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MEL_FILE_MAGIC {
        return Err(bad("not a mel matrix file".into()));
    }
    let mut word = [0u8; 4];
    let mut next = |r: &mut dyn Read| -> io::Result<u32> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let version = next(&mut r)?;
    if version != MEL_FILE_VERSION {
        return Err(bad(format!("unsupported mel file version {version}")));
    }
    let frames = next(&mut r)? as usize;
    let mels = next(&mut r)? as usize;
    let count = frames
        .checked_mul(mels)
        .filter(|&c| c <= isize::MAX as usize / 8)
        .ok_or_else(|| bad("mel dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.take(count as u64 * 8 + 1).read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(bad(format!(
            "expected {} bytes of data, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let m = Array2::from_shape_vec((frames, mels), values).map_err(|e| bad(e.to_string()))?;
    MelSpectrogram::new(m).map_err(|e| bad(e.to_string()))
}
