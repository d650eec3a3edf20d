use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use speakerkit::audio_io::save_wav;
use speakerkit::dsp::{MEL_FILE_MAGIC, MEL_FILE_VERSION};
use speakerkit::training::synthetic_corpus;

fn speakerkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speakerkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = speakerkit(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

/// Three clips for each of `speakers` synthetic voices.
fn write_clips(dir: &Path, speakers: usize) -> Vec<Vec<PathBuf>> {
    let corpus = synthetic_corpus(speakers, 3, 22050, 8);
    corpus
        .speakers
        .iter()
        .enumerate()
        .map(|(s, rec)| {
            rec.clips
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let p = dir.join(format!("s{s}_{i}.wav"));
                    save_wav(c, &p).unwrap();
                    p
                })
                .collect()
        })
        .collect()
}

fn strs(paths: &[PathBuf]) -> Vec<&str> {
    paths.iter().map(|p| p.to_str().unwrap()).collect()
}

#[test]
fn preprocess_then_vocode() {
    let dir = TempDir::new().unwrap();
    let clips = write_clips(dir.path(), 1);
    let wav = clips[0][0].to_str().unwrap();
    let mel = dir.path().join("x.mel");
    let summary: Value = serde_json::from_str(&ok(&[
        "preprocess",
        wav,
        "--config",
        "vctk",
        "--out",
        mel.to_str().unwrap(),
    ]))
    .unwrap();
    let frames = summary["frames"].as_u64().unwrap() as usize;
    assert_eq!(summary["mels"], 80);

    let bytes = fs::read(&mel).unwrap();
    assert_eq!(&bytes[..8], &MEL_FILE_MAGIC);
    assert_eq!(
        u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
        MEL_FILE_VERSION
    );
    assert_eq!(
        u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize,
        frames
    );
    assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 80);
    assert_eq!(bytes.len(), 20 + frames * 80 * 8);

    let out = dir.path().join("back.wav");
    let info: Value = serde_json::from_str(&ok(&[
        "vocode",
        mel.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iterations",
        "5",
    ]))
    .unwrap();
    assert_eq!(
        info["samples"].as_u64().unwrap() as usize,
        (frames - 1) * 256 + 1024
    );
    assert_eq!(info["power"], 1.4);
    assert!(out.exists());

    // not a mel file
    let o = speakerkit(&["vocode", wav]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn enroll_embed_and_search() {
    let dir = TempDir::new().unwrap();
    let clips = write_clips(dir.path(), 2);
    let store = dir.path().join("store.json");
    let store_s = store.to_str().unwrap();
    for (s, paths) in clips.iter().enumerate() {
        let id = format!("spk{s}");
        let mut args = vec!["enroll", id.as_str()];
        args.extend(strs(paths));
        args.extend(["--store", store_s, "--variant", "t2", "--enhance", "none"]);
        let record: Value = serde_json::from_str(&ok(&args)).unwrap();
        assert_eq!(record["sample_count"], 3);
        assert_eq!(record["speaker_id"], id);
    }

    // duplicate id: failure exit, store untouched
    let before = fs::read(&store).unwrap();
    let mut args = vec!["enroll", "spk0"];
    args.extend(strs(&clips[1]));
    args.extend(["--store", store_s]);
    let o = speakerkit(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("already enrolled"));
    assert_eq!(fs::read(&store).unwrap(), before);

    let mut args = vec!["embed"];
    args.extend(strs(&clips[1]));
    let embedding: Vec<f64> = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(embedding.len(), 256);

    let mut args = vec!["similar", store_s];
    args.extend(strs(&clips[1]));
    args.extend(["-k", "1"]);
    let out = ok(&args);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1);
    let (id, sim) = lines[0].split_once('\t').unwrap();
    assert_eq!(id, "spk1");
    assert!((sim.parse::<f64>().unwrap() - 1.0).abs() < 1e-6);

    // a missing clip is named in the error
    let o = speakerkit(&["embed", "/nonexistent/clip.wav"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/clip.wav"));
}

#[test]
fn trained_params_feed_the_encoder() {
    let dir = TempDir::new().unwrap();
    let params = dir.path().join("params.json");
    let args = [
        "train-toy",
        "--seed",
        "3",
        "--epochs",
        "2",
        "--speakers",
        "2",
        "--clips",
        "6",
        "--save-params",
        params.to_str().unwrap(),
    ];
    let first = ok(&args);
    let lines: Vec<Value> = first
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["epoch"], 2);
    assert!(lines
        .iter()
        .all(|l| l["loss"].as_f64().unwrap().is_finite()));
    assert_eq!(ok(&args), first);

    let clips = write_clips(dir.path(), 1);
    let mut embed = vec!["embed"];
    embed.extend(strs(&clips[0]));
    let untrained = ok(&embed);
    embed.extend(["--params", params.to_str().unwrap()]);
    let trained = ok(&embed);
    assert_ne!(trained, untrained);

    // weights of another shape are refused
    embed.extend(["--config", "libritts-encoder"]);
    assert_eq!(speakerkit(&embed).status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck"]);
    assert!(out.lines().last().unwrap().ends_with("pass"), "{out}");
}

#[test]
fn bench_reports_reference_numbers() {
    let dir = TempDir::new().unwrap();
    let clips = write_clips(dir.path(), 1);
    let mut args = vec!["bench"];
    args.extend(strs(&clips[0]));
    args.extend(["--repetitions", "3", "--config", "vctk"]);
    let report: Value = serde_json::from_str(&ok(&args)).unwrap();
    assert_eq!(report["samples"], 3);
    assert_eq!(report["encoder_reference"], "11 sec.");
    assert_eq!(report["adaptation_reference"], "15 min.");
    let t = |k: &str| report[k].as_f64().unwrap();
    assert!(t("min_secs") <= t("median_secs") && t("median_secs") <= t("max_secs"));

    args.extend(["--repetitions", "2"]);
    assert_eq!(speakerkit(&args).status.code(), Some(2));
}

#[test]
fn bad_arguments_are_rejected() {
    assert!(!speakerkit(&["embed", "x.wav", "--variant", "t3"])
        .status
        .success());
    assert!(!speakerkit(&["embed", "x.wav", "--enhance", "loud"])
        .status
        .success());
    assert!(!speakerkit(&["enroll", "a", "x.wav"]).status.success());
    assert!(!speakerkit(&["embed"]).status.success());
}
