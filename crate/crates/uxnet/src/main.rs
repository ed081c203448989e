use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use uxnet::bench::{complexity_records, measure_rtf};
use uxnet::dataset::{load_split, write_dataset, PoolConfig};
use uxnet::wav::{read_wav, write_wav, WavFormat};
use uxnet::{Checkpoint, RunConfig};
use uxnet_core::framing::StreamingFramer;
use uxnet_core::model::{Model, ModelConfig, StreamState};
use uxnet_core::profile::ComplexityReport;
use uxnet_core::synth::{DatasetConfig, Split, TargetKind};
use uxnet_core::train::{evaluate, Trainer};

/// Causal streaming speech separation.
#[derive(Parser)]
#[command(name = "uxnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic multi-room dataset.
    Synth(SynthArgs),
    /// Train a model on a dataset written by `synth`.
    Train(TrainArgs),
    /// Separate a WAV file into one WAV per source.
    Separate(SeparateArgs),
    /// Separate raw little-endian f32 interleaved samples from stdin to stdout.
    Stream(StreamArgs),
    /// Print complexity and real-time factor.
    Bench(BenchArgs),
    /// Summarise a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Reverberant,
    Early,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 40)]
    val: usize,
    #[arg(long, default_value_t = 40)]
    test: usize,
    /// Seconds per mixture.
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long, default_value_t = 2)]
    sources: usize,
    #[arg(long)]
    anechoic: bool,
    #[arg(long, value_enum, default_value = "reverberant")]
    target: Target,
    #[arg(long, default_value_t = 20)]
    speakers: usize,
    #[arg(long, default_value_t = 10)]
    per_speaker: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SeparateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pcm16: bool,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Preset name (`ulnet256`, `ugnet256`, ...).
    #[arg(long, conflicts_with = "model")]
    config: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Seconds of audio per timed run.
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Skip the timing and report complexity only.
    #[arg(long)]
    no_timing: bool,
    /// Emit JSON lines instead of text.
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Separate(a) => separate(a),
        Command::Stream(a) => stream(a),
        Command::Bench(a) => bench(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let cfg = DatasetConfig {
        train: a.train,
        val: a.val,
        test: a.test,
        seed: a.seed,
        channels: a.channels,
        sources: a.sources,
        anechoic: a.anechoic,
        target: match a.target {
            Target::Reverberant => TargetKind::Reverberant,
            Target::Early => TargetKind::Early,
        },
        duration: a.duration,
    };
    let pool = PoolConfig {
        speakers: a.speakers,
        per_speaker: a.per_speaker,
    };
    let entries = write_dataset(&a.out, &cfg, &pool)?;
    eprintln!("wrote {} mixtures to {}", entries.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &a.preset {
        cfg.set("preset", p).map_err(anyhow::Error::msg)?;
    }
    cfg.apply_overrides(a.sets.iter().map(String::as_str))?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(d) = a.data {
        cfg.data_dir = d;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    cfg.validate()?;

    let rate = cfg.model.sample_rate;
    let train = load_split(&cfg.data_dir, Split::Train, rate)?;
    let val = load_split(&cfg.data_dir, Split::Val, rate)?;
    let test = load_split(&cfg.data_dir, Split::Test, rate)?;
    if train.is_empty() {
        bail!("{}: no training mixtures", cfg.data_dir.display());
    }
    if train[0].mixture.len() != cfg.model.in_channels || train[0].sources.len() != cfg.model.sources {
        bail!(
            "dataset has {} channels and {} sources, model expects {} and {}",
            train[0].mixture.len(),
            train[0].sources.len(),
            cfg.model.in_channels,
            cfg.model.sources
        );
    }
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| cfg.out_dir.display().to_string())?;
    std::fs::write(cfg.out_dir.join("run.cfg"), cfg.to_text())?;

    let mut model = Model::<f32>::new(cfg.model, cfg.seed)?;
    let mut trainer = Trainer::new(&model, cfg.train)?;
    let log_path = cfg.out_dir.join("train.jsonl");
    let mut log = BufWriter::new(std::fs::File::create(&log_path).with_context(|| log_path.display().to_string())?);
    let mut log_err = None;
    let outcome = trainer.fit(&mut model, &train, &val, |p| {
        let Some(val_loss) = p.val_loss else { return };
        let line = serde_json::json!({
            "epoch": p.epoch, "step": p.step, "loss": p.loss, "val_loss": val_loss, "lr": p.lr,
        });
        eprintln!("{line}");
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context(log_path.display().to_string());
    }
    log.flush()?;
    let ckpt = cfg.out_dir.join("best.uxnt");
    Checkpoint::from_model(&model).save(&ckpt)?;
    eprintln!(
        "best epoch {} (validation loss {:.3}), saved {}",
        outcome.best_epoch,
        outcome.best_val_loss,
        ckpt.display()
    );
    if !test.is_empty() {
        let ev = evaluate(&model, &test, &cfg.train.si_snr)?;
        println!("test_si_snri: {:.3}", ev.si_snri);
    }
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<Model<f32>> {
    let ckpt = Checkpoint::load(path).with_context(|| path.display().to_string())?;
    Ok(ckpt.into_model()?)
}

fn separate(a: SeparateArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let cfg = *model.config();
    let audio = read_wav(&a.input, Some(cfg.sample_rate))?;
    if audio.channels.len() != cfg.in_channels {
        bail!(
            "{}: {} channels, model expects {}",
            a.input.display(),
            audio.channels.len(),
            cfg.in_channels
        );
    }
    let sources = model.separate_waveform(&audio.channels)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
    let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("mix");
    let format = if a.pcm16 { WavFormat::Pcm16 } else { WavFormat::Float32 };
    for (k, s) in sources.into_iter().enumerate() {
        let path = a.out_dir.join(format!("{stem}_s{k}.wav"));
        write_wav(&path, &[s], cfg.sample_rate, format)?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Reads interleaved `M`-channel f32 samples until EOF and writes `C`
/// interleaved channels, `hop` samples per completed frame.
fn stream(a: StreamArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let cfg = *model.config();
    let (m, c, hop) = (cfg.in_channels, cfg.sources, cfg.hop);
    let mut state = StreamState::new(&model)?;
    let mut framer = StreamingFramer::new(cfg.frame_spec(), m)?;
    let mut input = BufReader::new(std::io::stdin().lock());
    let mut output = BufWriter::new(std::io::stdout().lock());
    let mut chunk = vec![0.0f32; c * hop];
    let mut raw = vec![0u8; 4 * m];
    let mut sample = vec![0.0f32; m];
    let mut total = 0usize;
    let mut written = 0usize;
    let write = |out: &mut BufWriter<_>, chunk: &[f32], frames: usize, limit: usize| -> std::io::Result<usize> {
        let mut n = 0;
        for t in 0..frames {
            if limit == n {
                break;
            }
            for ch in 0..c {
                out.write_all(&chunk[ch * frames + t].to_le_bytes())?;
            }
            n += 1;
        }
        Ok(n)
    };
    loop {
        match input.read_exact(&mut raw) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e).context("stdin"),
        }
        for (s, b) in sample.iter_mut().zip(raw.chunks_exact(4)) {
            *s = f32::from_le_bytes(b.try_into().expect("four bytes"));
        }
        total += 1;
        if let Some(frame) = framer.push(&sample)? {
            model.stream_frame(&mut state, frame, &mut chunk)?;
            written += write(&mut output, &chunk, hop, usize::MAX)?;
            output.flush()?;
        }
    }
    if let Some(frame) = framer.finish() {
        model.stream_frame(&mut state, frame, &mut chunk)?;
        written += write(&mut output, &chunk, hop, total - written)?;
    }
    let tail = model.flush_stream(&mut state);
    let remaining = total.saturating_sub(written);
    let tail_len = tail.first().map_or(0, Vec::len);
    let flat: Vec<f32> = tail.concat();
    write(&mut output, &flat, tail_len, remaining)?;
    output.flush()?;
    Ok(())
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let model = match (&a.config, &a.model) {
        (_, Some(p)) => load_model(p)?,
        (preset, None) => {
            let cfg = ModelConfig::preset(preset.as_deref().unwrap_or("ulnet256"))?;
            Model::new(cfg, a.seed)?
        }
    };
    let cfg = *model.config();
    let report = ComplexityReport::new(&cfg, model.params())?;
    let rtf = if a.no_timing {
        None
    } else {
        Some(measure_rtf(&model, a.seconds, a.runs)?)
    };
    if a.json {
        for line in complexity_records(&report) {
            println!("{line}");
        }
        if let Some(r) = &rtf {
            println!("{}", serde_json::to_string(r)?);
        }
    } else {
        print!("{}", report.to_text());
        println!("Parameters (M): {:.2}", report.total_params() as f64 / 1e6);
        println!("FFPF (M): {:.2}", report.ffpf() as f64 / 1e6);
        if let Some(r) = &rtf {
            println!("rtf: {:.4}", r.rtf);
            println!("rtf_runs: {}", r.runs.len());
        }
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&a.model).with_context(|| a.model.display().to_string())?;
    let mut run = RunConfig::default();
    run.model = ckpt.config;
    let text = run.to_text();
    for line in text.lines().take_while(|l| !l.starts_with("epochs")) {
        println!("{line}");
    }
    println!("tensors: {}", ckpt.params.len());
    println!("parameters: {}", ckpt.params.scalar_count());
    for (name, t) in ckpt.params.iter() {
        println!("  {name}: {:?}", t.shape());
    }
    ckpt.into_model()?;
    Ok(())
}
