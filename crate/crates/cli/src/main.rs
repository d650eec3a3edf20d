use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use speakerkit::audio_io::{load_wav, resample, save_wav};
use speakerkit::config::AdamSettings;
use speakerkit::dsp::{self, read_mel, write_mel};
use speakerkit::enhancement::EnhancementMethod;
use speakerkit::enrollment::{
    bench_enroll_with, enroll, load_params, nearest, save_params, EmbeddingStore, Pipeline,
};
use speakerkit::repro::{latency_clips, run_acceptance_with, DEFAULT_SEED};
use speakerkit::training::{
    gradcheck_config, gradient_check_suite_with, synthetic_corpus, train_toy_with_callback,
    TrainOptions, GRADCHECK_TOLERANCE,
};
use speakerkit::vocoder::{vocode_mel, DEFAULT_ITERATIONS};
use speakerkit::{DspConfig, EncoderConfig, EncoderParams, Execution, Hyperparameters, Variant};

#[derive(Parser)]
#[command(
    name = "speakerkit",
    version,
    about = "Few-shot speaker embeddings from a handful of clips"
)]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mel spectrogram of a WAV file, written as a binary matrix.
    Preprocess {
        wav: PathBuf,
        #[arg(long, default_value = "vctk")]
        config: String,
        /// Defaults to the input path with a `.mel` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode clips and add the speaker to a store file.
    Enroll {
        id: String,
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Print the embedding of one speaker's clips as JSON.
    Embed {
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Rank enrolled speakers by cosine similarity to the clips.
    Similar {
        store: PathBuf,
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        #[arg(short, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Griffin-Lim reconstruction of a mel matrix file.
    Vocode {
        melfile: PathBuf,
        #[arg(long, default_value = "vctk")]
        config: String,
        /// Defaults to the input path with a `.wav` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        iterations: usize,
        /// Magnitude sharpening exponent; defaults to the config's `power`.
        #[arg(long)]
        power: Option<f64>,
    },
    /// Train on synthetic speakers, one JSON line per epoch.
    TrainToy {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        #[arg(long, default_value_t = 6)]
        clips: usize,
        #[arg(long, default_value = "t2")]
        variant: Variant,
        #[arg(long, default_value = "vctk")]
        config: String,
        /// Write the trained encoder weights here.
        #[arg(long)]
        save_params: Option<PathBuf>,
        /// Apply the config's warmup schedule; at toy epoch counts it keeps
        /// the learning rate near zero.
        #[arg(long)]
        noam: bool,
    },
    /// Finite-difference check of every encoder gradient.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Time enrollment; without clips, six synthetic 5-second ones are used.
    Bench {
        wavs: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value = "libritts-encoder")]
        config: String,
        #[arg(long, default_value = "t2")]
        variant: Variant,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run every acceptance criterion and write the report.
    Repro {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EncoderArgs {
    /// A bundled config name (`vctk`, `libritts-encoder`) or a JSON file.
    #[arg(long, default_value = "vctk")]
    config: String,
    #[arg(long, default_value = "t2")]
    variant: Variant,
    #[arg(long, default_value = "none")]
    enhance: EnhancementMethod,
    /// Encoder weights saved by `train-toy --save-params`.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Seed for freshly initialized weights when `--params` is absent.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

struct Encoder {
    cfg: EncoderConfig,
    dsp: DspConfig,
    params: EncoderParams,
    enhance: EnhancementMethod,
    exec: Execution,
}

impl Encoder {
    fn from_args(args: &EncoderArgs, exec: Execution) -> Result<Self> {
        let hp = hyperparameters(&args.config)?;
        let cfg = hp.encoder(args.variant)?;
        let dsp = hp.dsp()?;
        let params = match &args.params {
            Some(p) => {
                let params = load_params(p)?;
                params
                    .check(&cfg)
                    .with_context(|| format!("{} does not fit the encoder config", p.display()))?;
                params
            }
            None => {
                log::info!(
                    "no --params given; using untrained weights from seed {}",
                    args.seed
                );
                EncoderParams::init(&cfg, args.seed)
            }
        };
        Ok(Self {
            cfg,
            dsp,
            params,
            enhance: args.enhance,
            exec,
        })
    }

    fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            exec: self.exec,
            ..Pipeline::new(&self.cfg, &self.dsp, &self.params, &self.enhance)
        }
    }
}

fn hyperparameters(name: &str) -> Result<Hyperparameters> {
    Ok(match name {
        "vctk" => Hyperparameters::vctk(),
        "libritts-encoder" => Hyperparameters::libritts_encoder(),
        "libritts-tts" => Hyperparameters::libritts_tts(),
        path => Hyperparameters::load(path)?,
    })
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn preprocess(wav: &Path, config: &str, out: Option<PathBuf>) -> Result<()> {
    let dsp_cfg = hyperparameters(config)?.dsp()?;
    let clip = load_wav(wav)?;
    let clip = resample(&clip, dsp_cfg.sample_rate)?;
    let mel = dsp::melspectrogram(&clip, &dsp_cfg)?;
    let out = out.unwrap_or_else(|| wav.with_extension("mel"));
    let mut w = BufWriter::new(File::create(&out).with_context(|| out.display().to_string())?);
    write_mel(&mel, &mut w).with_context(|| out.display().to_string())?;
    let v = mel.values();
    print_json(&json!({
        "out": out,
        "frames": mel.frame_count(),
        "mels": mel.num_mels(),
        "duration_secs": clip.duration_secs(),
        "min": v.iter().copied().fold(f64::INFINITY, f64::min),
        "max": v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "mean": v.mean().unwrap_or(0.0),
    }))
}

fn vocode(
    melfile: &Path,
    config: &str,
    out: Option<PathBuf>,
    iterations: usize,
    power: Option<f64>,
) -> Result<()> {
    let hp = hyperparameters(config)?;
    let dsp_cfg = hp.dsp()?;
    let file = File::open(melfile).with_context(|| melfile.display().to_string())?;
    let mel = read_mel(BufReader::new(file)).with_context(|| melfile.display().to_string())?;
    let power = power.unwrap_or_else(|| hp.power());
    let clip = vocode_mel(&mel, &dsp_cfg, iterations, power)?;
    let out = out.unwrap_or_else(|| melfile.with_extension("wav"));
    save_wav(&clip, &out)?;
    print_json(&json!({
        "out": out,
        "samples": clip.len(),
        "sample_rate": clip.sample_rate(),
        "iterations": iterations,
        "power": power,
    }))
}

#[allow(clippy::too_many_arguments)]
fn train(
    seed: u64,
    epochs: usize,
    speakers: usize,
    clips: usize,
    variant: Variant,
    config: &str,
    save: Option<PathBuf>,
    noam: bool,
    exec: Execution,
) -> Result<()> {
    let hp = hyperparameters(config)?;
    let cfg = hp.encoder(variant)?;
    let dsp_cfg = hp.dsp()?;
    let data = synthetic_corpus(speakers, clips, dsp_cfg.sample_rate, seed);
    let opts = TrainOptions {
        adam: AdamSettings { noam, ..hp.adam()? },
        exec,
        ..TrainOptions::new(epochs, seed)
    };
    let stdout = std::io::stdout();
    let mut failure = None;
    let outcome = train_toy_with_callback(&data, &cfg, &dsp_cfg, &opts, |m| {
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(stdout.lock(), "{line}") {
            failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    if let Some(path) = save {
        save_params(&path, &outcome.params)?;
        log::info!("saved encoder weights to {}", path.display());
    }
    Ok(())
}

fn gradcheck(seed: u64, exec: Execution) -> Result<bool> {
    let report = gradient_check_suite_with(exec, &gradcheck_config(Variant::T2), seed);
    for g in &report.groups {
        println!(
            "{:<4} {:<12} entries {:>3}  relative error {:.3e}",
            g.variant.to_string(),
            g.group,
            g.entries,
            g.relative_error
        );
    }
    let ok = report.passes(GRADCHECK_TOLERANCE);
    println!(
        "worst {:.3e}, tolerance {:.0e}: {}",
        report.worst(),
        GRADCHECK_TOLERANCE,
        if ok { "pass" } else { "FAIL" }
    );
    Ok(ok)
}

fn bench(
    wavs: Vec<PathBuf>,
    repetitions: usize,
    config: &str,
    variant: Variant,
    seed: u64,
    exec: Execution,
) -> Result<()> {
    let hp = hyperparameters(config)?;
    let cfg = hp.encoder(variant)?;
    let encoder = Encoder {
        params: EncoderParams::init(&cfg, seed),
        cfg,
        dsp: hp.dsp()?,
        enhance: EnhancementMethod::Passthrough,
        exec,
    };
    let scratch;
    let paths = if wavs.is_empty() {
        scratch = tempfile::tempdir()?;
        let mut paths = Vec::new();
        for (i, clip) in latency_clips(seed).iter().enumerate() {
            let clip = resample(clip, encoder.dsp.sample_rate)?;
            let p = scratch.path().join(format!("clip{i}.wav"));
            save_wav(&clip, &p)?;
            paths.push(p);
        }
        paths
    } else {
        wavs
    };
    let mut rep = 0;
    let report = bench_enroll_with(&paths, &encoder.pipeline(), repetitions, |t| {
        rep += 1;
        eprintln!("repetition {rep}: {t:.3} s");
    })?;
    print_json(&report)
}

fn repro(seed: u64, out: Option<PathBuf>) -> Result<bool> {
    let report = run_acceptance_with(seed, |c| println!("{}", c.line()));
    let passed = report.criteria.iter().filter(|c| c.passed).count();
    println!("{passed}/{} criteria pass", report.criteria.len());
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(&path, text).with_context(|| path.display().to_string())?;
    }
    Ok(report.all_passed())
}

fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Preprocess { wav, config, out } => preprocess(&wav, &config, out)?,
        Command::Enroll {
            id,
            wavs,
            store,
            encoder,
        } => {
            let enc = Encoder::from_args(&encoder, exec)?;
            let record = enroll(&store, &id, &wavs, &enc.pipeline())?;
            print_json(&record)?;
        }
        Command::Embed { wavs, encoder } => {
            let enc = Encoder::from_args(&encoder, exec)?;
            let embedding = enc.pipeline().embed(&wavs)?;
            print_json(&embedding.values())?;
        }
        Command::Similar {
            store,
            wavs,
            k,
            encoder,
        } => {
            if k == 0 {
                bail!("-k must be at least 1");
            }
            let enc = Encoder::from_args(&encoder, exec)?;
            let store = EmbeddingStore::load(&store)?;
            let query = enc.pipeline().embed(&wavs)?;
            for hit in nearest(&store, &query, k)? {
                println!("{}\t{:.6}", hit.speaker_id, hit.similarity);
            }
        }
        Command::Vocode {
            melfile,
            config,
            out,
            iterations,
            power,
        } => vocode(&melfile, &config, out, iterations, power)?,
        Command::TrainToy {
            seed,
            epochs,
            speakers,
            clips,
            variant,
            config,
            save_params,
            noam,
        } => train(
            seed,
            epochs,
            speakers,
            clips,
            variant,
            &config,
            save_params,
            noam,
            exec,
        )?,
        Command::Gradcheck { seed } => return gradcheck(seed, exec),
        Command::Bench {
            wavs,
            repetitions,
            config,
            variant,
            seed,
        } => bench(wavs, repetitions, &config, variant, seed, exec)?,
        Command::Repro { seed, out } => return repro(seed, out),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
