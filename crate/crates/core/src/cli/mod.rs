//! Command-line front end: `simulate`, `train`, `enhance`, `wpe`,
//! `evaluate` and `gradcheck`.
//!
//! Settings come from an optional TOML file (see [`config`]), then the
//! `DEREVKIT_SEED` environment variable, then flags; later sources win.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::metrics::{evaluate_corpus, MetricsReport};
use crate::neural::{
    self, grad_check, load_checkpoint, save_checkpoint, synthetic_example, train_baseline_blstm, train_stage1_dc,
    train_stage2_joint, Dataset, Hyper, ModelParams, TrainOutcome,
};
use crate::roomsim::manifest::{generate_rirs, read_manifest, synthesize_rows, write_manifest};
use crate::roomsim::{build_manifest, SimulationConfig};
use crate::signal::wav::{read_wav, write_wav_f32, write_wav_pcm16};
use crate::signal::Waveform;
use crate::wpe::wpe_enhance_wave;
use crate::SAMPLE_RATE;

pub use config::{EvaluateSection, ModelChoice, RunConfig, StageChoice, TrainSection};

#[derive(Debug, Parser)]
#[command(name = "derevkit", version, about = "Monaural speech denoising and dereverberation toolkit")]
pub struct Cli {
    /// Worker threads; 1 forces the deterministic sequential mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a manifest and render impulse responses, mixtures and targets.
    Simulate(SimulateArgs),
    /// Train the two-stage model or the single-stage baseline.
    Train(TrainArgs),
    /// Enhance a WAV file or a directory tree with a trained model.
    Enhance(EnhanceArgs),
    /// Dereverberate a WAV file or a directory tree with WPE.
    Wpe(WpeArgs),
    /// Score enhanced outputs against the anechoic targets.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Use the built-in desk-scale corpus when no `[simulate]` section is given.
    #[arg(long)]
    pub toy: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write only the manifest.
    #[arg(long)]
    pub manifest_only: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    #[arg(long, value_enum)]
    pub stage: Option<StageChoice>,
    /// Stage-1 checkpoint for `--stage joint`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Sets both the minimum and maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep the embedding stage fixed during joint training.
    #[arg(long)]
    pub freeze_dc: bool,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Checkpoint of a trained model.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WpeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub taps: Option<usize>,
    #[arg(long)]
    pub delay: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub enhanced_dir: Option<PathBuf>,
    /// Comma separated; `unprocessed` scores the mixtures themselves.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "proposed")]
    pub model: ModelChoice,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 9)]
    pub bins: usize,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a, cli.threads),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Wpe(a) => cmd_wpe(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn resolve_seed(config: u64, flag: Option<u64>) -> Result<u64> {
    Ok(flag.or(config::env_seed()?).unwrap_or(config))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let file = RunConfig::load(args.config.as_deref())?;
    let mut cfg = match (file.simulate, args.toy) {
        (Some(c), _) => c,
        (None, true) => SimulationConfig::toy(1),
        (None, false) => return Err(invalid_config("no [simulate] section given; pass --config or --toy")),
    };
    cfg.seed = resolve_seed(cfg.seed, args.seed)?;
    let rows = build_manifest(&cfg)?;
    create_dir(&args.out)?;
    write_manifest(args.out.join("manifest.jsonl"), &rows)?;
    RunConfig::write_resolved(&args.out, "simulate", &cfg)?;
    eprintln!("manifest: {} rows", rows.len());
    if args.manifest_only {
        return Ok(());
    }
    let rate = cfg.sample_rate;
    for (id, rir) in generate_rirs(&rows, rate) {
        if let Ok(rir) = rir {
            let w = Waveform::new(rir.taps.clone(), rate)?;
            write_wav_f32(args.out.join("rirs").join(format!("{id}.wav")), &w)?;
        }
    }
    let mut errors = String::new();
    let mut ok = 0usize;
    for (row, sample) in rows.iter().zip(synthesize_rows(&rows, rate)) {
        match sample {
            Ok(s) => {
                let base = args.out.join(&row.split);
                let file = format!("{}.wav", row.id);
                write_wav_pcm16(base.join("mixture").join(&file), &s.mixture)?;
                write_wav_pcm16(base.join("target").join(&file), &s.anechoic_target)?;
                write_wav_pcm16(base.join("reverberant").join(&file), &s.reverberant_speech)?;
                write_wav_pcm16(base.join("noise").join(&file), &s.noise)?;
                ok += 1;
            }
            Err(e) => errors += &format!("{},\"{}\"\n", row.id, e.to_string().replace('"', "'")),
        }
    }
    if !errors.is_empty() {
        write_text(&args.out.join("simulate_errors.csv"), &format!("id,error\n{errors}"))?;
        eprintln!("{} row(s) failed; see simulate_errors.csv", rows.len() - ok);
    }
    if ok == 0 && !rows.is_empty() {
        return Err(invalid_input("no row could be rendered"));
    }
    println!("simulated {ok} of {} rows into {}", rows.len(), args.out.display());
    Ok(())
}

fn save_outcome(out_dir: &Path, name: &str, outcome: &TrainOutcome) -> Result<PathBuf> {
    let ckpt = out_dir.join(format!("{name}.ckpt"));
    let tmp = out_dir.join(format!(".{name}.ckpt.partial"));
    save_checkpoint(&outcome.params, &tmp)?;
    std::fs::rename(&tmp, &ckpt).map_err(|e| Error::io(format!("finalizing {}", ckpt.display()), e))?;
    write_text(&out_dir.join(format!("{name}_log.csv")), &outcome.log.to_csv())?;
    println!(
        "{name}: dev loss {:.6} -> {:.6} after {} epoch(s), lr {:.3e}; checkpoint {}",
        outcome.initial_dev_loss,
        outcome.best_dev_loss,
        outcome.epochs,
        outcome.final_lr,
        ckpt.display()
    );
    Ok(ckpt)
}

pub fn cmd_train(args: TrainArgs, threads: Option<usize>) -> Result<()> {
    let mut sec = RunConfig::load(args.config.as_deref())?.train.unwrap_or_default();
    if let Some(v) = args.manifest {
        sec.manifest = Some(v);
    }
    if let Some(v) = args.out {
        sec.out_dir = Some(v);
    }
    if let Some(v) = args.model {
        sec.model = v;
    }
    if let Some(v) = args.stage {
        sec.stage = v;
    }
    if let Some(v) = args.init {
        sec.init = Some(v);
    }
    if let Some(v) = args.embed_dim {
        sec.embed_dim = v;
    }
    if let Some(v) = args.hidden {
        sec.hidden = v;
    }
    let opt = &mut sec.optimizer;
    if let Some(v) = args.epochs {
        opt.min_epochs = v;
        opt.max_epochs = v;
    }
    if let Some(v) = args.lr {
        opt.lr = v;
    }
    if let Some(v) = args.batch {
        opt.batch_utterances = v;
    }
    if let Some(v) = threads {
        opt.threads = v;
    }
    opt.freeze_dc |= args.freeze_dc;
    opt.seed = resolve_seed(opt.seed, args.seed)?;
    opt.validate()?;
    let manifest = sec.manifest.clone().ok_or_else(|| invalid_config("train needs --manifest"))?;
    let out_dir = sec.out_dir.clone().ok_or_else(|| invalid_config("train needs --out"))?;
    if sec.hidden == 0 || (sec.model == ModelChoice::Proposed && sec.embed_dim == 0) {
        return Err(invalid_config("hidden and embed_dim must be positive"));
    }
    let rows = read_manifest(&manifest)?;
    let data = Dataset::from_manifest(&rows, SAMPLE_RATE)?;
    let bins = data
        .train
        .first()
        .map(|e| e.bins())
        .ok_or_else(|| invalid_config("manifest has no train rows"))?;
    create_dir(&out_dir)?;
    RunConfig::write_resolved(&out_dir, "train", &sec)?;
    let cfg = &sec.optimizer;
    match (sec.model, sec.stage) {
        (ModelChoice::BaselineBlstm, _) => {
            let out = train_baseline_blstm(&data, Hyper::baseline(bins, sec.hidden), cfg)?;
            save_outcome(&out_dir, "baseline_blstm", &out)?;
        }
        (ModelChoice::Proposed, StageChoice::Dc) => {
            let out = train_stage1_dc(&data, Hyper::proposed(bins, sec.embed_dim, sec.hidden), cfg)?;
            save_outcome(&out_dir, "stage1_dc", &out)?;
        }
        (ModelChoice::Proposed, StageChoice::Joint) => {
            let init = sec.init.as_ref().ok_or_else(|| invalid_config("--stage joint needs --init"))?;
            let out = train_stage2_joint(&data, cfg, load_checkpoint(init)?)?;
            save_outcome(&out_dir, "stage2_joint", &out)?;
        }
        (ModelChoice::Proposed, StageChoice::Both) => {
            let first = train_stage1_dc(&data, Hyper::proposed(bins, sec.embed_dim, sec.hidden), cfg)?;
            save_outcome(&out_dir, "stage1_dc", &first)?;
            let second = train_stage2_joint(&data, cfg, first.params)?;
            save_outcome(&out_dir, "stage2_joint", &second)?;
        }
    }
    Ok(())
}

/// `(input, output)` pairs: the file itself, or every `.wav` below a
/// directory mirrored under `out`.
fn wav_jobs(input: &Path, out: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if input.is_file() {
        return Ok(vec![(input.to_path_buf(), out.to_path_buf())]);
    }
    if !input.is_dir() {
        return Err(invalid_input(format!("{} does not exist", input.display())));
    }
    let mut jobs = Vec::new();
    for entry in walkdir::WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| invalid_input(format!("walking {}: {e}", input.display())))?;
        let p = entry.path();
        let is_wav = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            let rel = p.strip_prefix(input).expect("walk stays below its root");
            jobs.push((p.to_path_buf(), out.join(rel)));
        }
    }
    Ok(jobs)
}

fn process_tree(input: &Path, out: &Path, f: impl Fn(&Waveform) -> Result<Waveform>) -> Result<()> {
    let jobs = wav_jobs(input, out)?;
    if jobs.is_empty() {
        return Err(invalid_input(format!("no .wav files under {}", input.display())));
    }
    for (src, dst) in &jobs {
        let w = read_wav(src, SAMPLE_RATE)?;
        let y = f(&w)?;
        write_wav_pcm16(dst, &y)?;
    }
    println!("processed {} file(s) into {}", jobs.len(), out.display());
    Ok(())
}

pub fn cmd_enhance(args: EnhanceArgs) -> Result<()> {
    let params: ModelParams<f32> = load_checkpoint(&args.model)?;
    process_tree(&args.input, &args.out, |w| neural::enhance(&params, w))
}

pub fn cmd_wpe(args: WpeArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?.wpe.unwrap_or_default();
    if let Some(v) = args.taps {
        cfg.taps = v;
    }
    if let Some(v) = args.delay {
        cfg.delay = v;
    }
    if let Some(v) = args.iters {
        cfg.iterations = v;
    }
    cfg.validate()?;
    process_tree(&args.input, &args.out, |w| wpe_enhance_wave(w, &cfg))
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut sec: EvaluateSection = RunConfig::load(args.config.as_deref())?.evaluate.unwrap_or_default();
    if let Some(v) = args.manifest {
        sec.manifest = Some(v);
    }
    if let Some(v) = args.data_dir {
        sec.data_dir = Some(v);
    }
    if let Some(v) = args.enhanced_dir {
        sec.enhanced_dir = Some(v);
    }
    if let Some(v) = args.methods {
        sec.methods = v;
    }
    if let Some(v) = args.split {
        sec.split = v;
    }
    if let Some(v) = args.out {
        sec.out_dir = Some(v);
    }
    let manifest = sec.manifest.clone().ok_or_else(|| invalid_config("evaluate needs --manifest"))?;
    let data_dir = sec
        .data_dir
        .clone()
        .or_else(|| manifest.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let enhanced = sec.enhanced_dir.clone().unwrap_or_else(|| data_dir.join("enhanced"));
    let out_dir = sec.out_dir.clone().ok_or_else(|| invalid_config("evaluate needs --out"))?;
    if sec.methods.is_empty() {
        return Err(invalid_config("no methods to evaluate"));
    }
    let rows: Vec<_> = read_manifest(&manifest)?
        .into_iter()
        .filter(|r| r.split == sec.split)
        .collect();
    if rows.is_empty() {
        return Err(invalid_input(format!("manifest has no {} rows", sec.split)));
    }
    let report: MetricsReport = evaluate_corpus(&rows, &data_dir, &enhanced, &sec.methods, SAMPLE_RATE);
    create_dir(&out_dir)?;
    RunConfig::write_resolved(&out_dir, "evaluate", &sec)?;
    write_text(&out_dir.join("report.csv"), &report.to_csv())?;
    write_text(&out_dir.join("report.txt"), &report.render_table())?;
    write_text(&out_dir.join("errors.csv"), &report.errors_csv())?;
    print!("{}", report.render_table());
    if report.success_rate() < 0.9 {
        return Err(invalid_input(format!(
            "only {:.0}% of rows could be evaluated",
            100.0 * report.success_rate()
        )));
    }
    Ok(())
}

pub fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let hyper = match args.model {
        ModelChoice::Proposed => Hyper::proposed(args.bins, args.embed_dim, args.hidden),
        ModelChoice::BaselineBlstm => Hyper::baseline(args.bins, args.hidden),
    };
    let params = ModelParams::<f64>::new(hyper, args.seed);
    let example = synthetic_example(args.frames, args.bins, args.seed.wrapping_add(1));
    let report = grad_check(&params, &example, args.epsilon)?;
    print!("{}", report.render());
    if report.max_error() >= args.tolerance {
        return Err(Error::Numeric(format!(
            "max relative error {:.3e} exceeds {:.1e}",
            report.max_error(),
            args.tolerance
        )));
    }
    Ok(())
}
