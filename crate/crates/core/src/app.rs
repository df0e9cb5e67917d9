//! Command-line front end: `generate`, `train`, `render`, `eval` and `experiments run`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::camera::{hemisphere_poses, Intrinsics, Pose};
use crate::checkpoint;
use crate::dataset::{self, generate, load_dataset, save_dataset, Dataset, GenerateConfig, Split, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::experiments::{self, Experiment, ExperimentSettings};
use crate::render::render_image;
use crate::sampling::Strategy;
use crate::training::{evaluate, train, EpochSummary, StepReport, TrainConfig, TrainObserver, TrainState};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "DEPTH_NERF_THREADS";

#[derive(Parser, Debug)]
#[command(name = "depth-nerf", version, about = "Depth-supervised radiance fields with local sampling")]
pub struct Cli {
    /// Worker threads (default: $DEPTH_NERF_THREADS, else all logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic RGB-D dataset.
    Generate(GenerateArgs),
    /// Fit a field to a dataset.
    Train(TrainArgs),
    /// Render color, depth and depth error from a checkpoint.
    Render(RenderArgs),
    /// Score a checkpoint against a dataset.
    Eval(EvalArgs),
    /// Scripted comparison runs.
    Experiments {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value = "cube")]
    pub scene: String,
    #[arg(long, default_value_t = 8)]
    pub views: usize,
    /// Additional held-out views.
    #[arg(long, default_value_t = 0)]
    pub test_views: usize,
    /// Square resolution in pixels.
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    #[arg(long, default_value_t = 40.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of Gaussian noise on inverse depth (1/m).
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Flat JSON file overriding configuration defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// uniform | stratified | gaussian | adaptive
    #[arg(long)]
    pub sampler: Option<Strategy>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from a checkpoint; its configuration is used unless overridden.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also print progress records to standard output.
    #[arg(long)]
    pub progress_stdout: bool,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset whose cameras are rendered; depth errors are written when it has depth.
    #[arg(long, conflicts_with = "orbit")]
    pub poses: Option<PathBuf>,
    /// Render this many new hemisphere cameras instead.
    #[arg(long)]
    pub orbit: Option<usize>,
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    #[arg(long, default_value_t = 40.0)]
    pub fov: f64,
    #[arg(long, default_value_t = 4.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1)]
    pub orbit_seed: u64,
    /// Steer the trained sampler with the dataset depth.
    #[arg(long)]
    pub eval_with_depth: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train | test | all (default: test when present, else train)
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub eval_with_depth: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum ExperimentAction {
    /// sampling | sample-count | view-count | noise
    Run(ExperimentArgs),
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    pub name: String,
    /// JSON settings file (`data`, `train`, sweep lists).
    #[arg(long)]
    pub settings: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::data(path, format!("cannot write: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::data(dir, format!("cannot create directory: {e}")))
}

/// Missing inputs are usage errors; malformed ones are data errors.
fn open_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(Error::Config(format!("no dataset at {} (missing {MANIFEST_FILE})", dir.display())));
    }
    load_dataset(dir)
}

fn open_checkpoint(path: &Path) -> Result<(TrainConfig, TrainState)> {
    if !path.is_file() {
        return Err(Error::Config(format!("checkpoint {} does not exist", path.display())));
    }
    checkpoint::load(path)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = GenerateConfig {
        scene: a.scene.clone(),
        views: a.views,
        test_views: a.test_views,
        width: a.res,
        height: a.res,
        fov_deg: a.fov,
        seed: a.seed,
        noise_sigma: a.noise_sigma,
        ..GenerateConfig::default()
    };
    let ds = generate(&cfg)?;
    save_dataset(&ds, &a.out)?;
    write_json(&a.out.join("generate.json"), &cfg)?;
    println!("wrote {} frames to {}", ds.frames.len(), a.out.display());
    Ok(())
}

/// Writes JSON-lines progress and one checkpoint per epoch.
struct RunLog {
    progress: BufWriter<File>,
    echo: bool,
    checkpoints: PathBuf,
    config: TrainConfig,
    last_good: Option<PathBuf>,
}

impl TrainObserver for RunLog {
    fn on_step(&mut self, r: &StepReport) -> Result<()> {
        let line = serde_json::to_string(r)?;
        writeln!(self.progress, "{line}")?;
        if self.echo {
            println!("{line}");
        }
        Ok(())
    }

    fn on_epoch(&mut self, state: &TrainState, summary: &EpochSummary) -> Result<()> {
        self.progress.flush()?;
        let path = self.checkpoints.join(format!("epoch_{:04}.ckpt", summary.epoch));
        checkpoint::save(&path, &self.config, state)?;
        self.last_good = Some(path);
        Ok(())
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let ds = open_dataset(&a.data)?;
    let (mut cfg, resume) = match &a.resume {
        Some(p) => {
            let (cfg, state) = open_checkpoint(p)?;
            (cfg, Some(state))
        }
        None => {
            let mut cfg = TrainConfig::default();
            cfg.sampler.global_near = ds.near;
            cfg.sampler.global_far = ds.far;
            (cfg, None)
        }
    };
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let map = value
            .as_object()
            .ok_or_else(|| Error::Config(format!("{}: config must be a JSON object", path.display())))?;
        cfg = cfg.merged(map)?;
    }
    if let Some(s) = a.sampler {
        cfg.sampler.strategy = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(n) = a.samples {
        cfg.sampler.n_samples = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;

    let checkpoints = a.out.join("checkpoints");
    create_dir(&checkpoints)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    let progress_path = a.out.join("progress.jsonl");
    let progress = if resume.is_some() {
        fs::OpenOptions::new().create(true).append(true).open(&progress_path)
    } else {
        File::create(&progress_path)
    }
    .map_err(|e| Error::data(&progress_path, format!("cannot open: {e}")))?;
    let mut log = RunLog {
        progress: BufWriter::new(progress),
        echo: a.progress_stdout,
        checkpoints,
        config: cfg.clone(),
        last_good: a.resume.clone(),
    };
    match train(&ds, &cfg, resume, &mut log) {
        Ok(state) => {
            log.progress.flush()?;
            let final_path = a.out.join("final.ckpt");
            checkpoint::save(&final_path, &cfg, &state)?;
            println!("trained {} epochs, checkpoint {}", state.next_epoch, final_path.display());
            Ok(())
        }
        Err(Error::Divergence(msg)) => {
            let _ = log.progress.flush();
            let last = log.last_good.map_or("none".to_string(), |p| p.display().to_string());
            Err(Error::Divergence(format!("{msg}; last good checkpoint: {last}")))
        }
        Err(e) => Err(e),
    }
}

/// Black → red → yellow → white ramp for `t` in `[0, 1]`.
pub fn heat_color(t: f64) -> [f64; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 1.0 };
    [(3.0 * t).min(1.0), (3.0 * t - 1.0).clamp(0.0, 1.0), (3.0 * t - 2.0).clamp(0.0, 1.0)]
}

/// Depth errors at or above this many meters saturate the heat map.
const ERROR_SCALE_M: f64 = 0.5;

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let (cfg, state) = open_checkpoint(&a.checkpoint)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    let (intr, background, poses, gt): (Intrinsics, [f64; 3], Vec<Pose>, Option<Dataset>) = match (&a.poses, a.orbit) {
        (Some(dir), _) => {
            let ds = open_dataset(dir)?;
            let poses = ds.frames.iter().map(|f| f.pose).collect();
            (ds.intrinsics, ds.background, poses, Some(ds))
        }
        (None, Some(n)) => {
            if a.eval_with_depth {
                return Err(Error::Config("--eval-with-depth needs --poses with depth maps".into()));
            }
            let intr = Intrinsics::from_fov(a.res, a.res, a.fov)?;
            (intr, [0.0; 3], hemisphere_poses(n, a.radius, a.orbit_seed)?, None)
        }
        (None, None) => return Err(Error::Config("pass --poses <dataset> or --orbit <n>".into())),
    };
    let opts = cfg.render_options(background, a.eval_with_depth);
    for (i, pose) in poses.iter().enumerate() {
        let guide = match (&gt, a.eval_with_depth) {
            (Some(ds), true) => Some(ds.frames[i].depth.as_slice()),
            _ => None,
        };
        let img = render_image(&state.params, &intr, pose, i, guide, &opts)?;
        dataset::write_png(&a.out.join(format!("{i:04}_rgb.png")), intr.width, intr.height, &img.color)?;
        dataset::write_pfm(&a.out.join(format!("{i:04}_depth.pfm")), intr.width, intr.height, &img.depth)?;
        if let Some(ds) = &gt {
            let reference = ds.frames[i].reference_depth();
            let heat: Vec<f64> = img
                .depth
                .iter()
                .zip(reference)
                .flat_map(|(p, g)| if *g > 0.0 { heat_color((p - g).abs() / ERROR_SCALE_M) } else { [0.0; 3] })
                .collect();
            dataset::write_png(&a.out.join(format!("{i:04}_depth_error.png")), intr.width, intr.height, &heat)?;
        }
    }
    println!("rendered {} views to {}", poses.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (cfg, state) = open_checkpoint(&a.checkpoint)?;
    let ds = open_dataset(&a.data)?;
    let frames: Vec<usize> = match a.split.as_deref() {
        Some("train") => ds.split_indices(Split::Train),
        Some("test") => ds.split_indices(Split::Test),
        Some("all") => (0..ds.frames.len()).collect(),
        Some(other) => return Err(Error::Config(format!("unknown split '{other}', expected train, test or all"))),
        None => {
            let test = ds.split_indices(Split::Test);
            if test.is_empty() {
                ds.split_indices(Split::Train)
            } else {
                test
            }
        }
    };
    if frames.is_empty() {
        return Err(Error::Config("selected split has no frames".into()));
    }
    let (report, _) = evaluate(&state.params, &ds, &cfg, &frames, a.eval_with_depth)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    write_json(&a.out.join("report.json"), &report)?;
    let table = report.to_table();
    fs::write(a.out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let experiment: Experiment = a.name.parse()?;
    let mut settings = match &a.settings {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read settings {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentSettings::default(),
    };
    if let Some(e) = a.epochs {
        settings.train.epochs = e;
    }
    if let Some(r) = a.res {
        settings.data.width = r;
        settings.data.height = r;
    }
    settings.train.validate()?;
    let result = experiments::run(experiment, &settings, &a.out)?;
    print!("{}", result.to_table());
    Ok(())
}

fn thread_count(cli: &Cli) -> Result<Option<usize>> {
    if cli.deterministic {
        return Ok(Some(1));
    }
    if let Some(n) = cli.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = thread_count(cli)? {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        // the pool can only be set once per process; later calls keep the first setting
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Experiments {
            action: ExperimentAction::Run(a),
        } => cmd_experiment(a),
    }
}

/// Parses the process arguments, runs the command and exits with its status code.
pub fn main() -> ! {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code())
        }
    }
}
