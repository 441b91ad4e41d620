//! Command-line front end. [`run_command`] never exits the process; it
//! returns the exit code and the diagnostics it printed.

mod eval;
mod preview;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::bench::{run_benchmark, BenchMode, BenchOptions};
use crate::error::{Error, Result, EXIT_OK, EXIT_USAGE};
use crate::pipeline::{make_ablation_config, ablation_variants, Pipeline, PipelineConfig, TransformSpec, Transform};
use crate::volume::{load_nifti, preprocess, save_nifti, LabelMapping, LabelMap, RawLabelMap, Sample, Volume};

pub use eval::{evaluate_dirs, EvalSummary, MethodSummary, NamedDir};
pub use preview::render_preview;

/// Environment variable capping the worker count of batch subcommands.
pub const THREADS_ENV: &str = "VOXELAUG_THREADS";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub messages: Vec<String>,
}

/// Collects diagnostics and mirrors them to standard error.
#[derive(Debug, Default)]
pub struct Diag {
    messages: Vec<String>,
}

impl Diag {
    pub fn messages(&self) -> &[String] {
        &self.messages
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = format!("warning: {}", msg.into());
        eprintln!("{msg}");
        self.messages.push(msg);
    }

    fn error(&mut self, msg: impl Into<String>) {
        let msg = format!("error: {}", msg.into());
        eprintln!("{msg}");
        self.messages.push(msg);
    }
}

#[derive(Parser, Debug)]
#[command(name = "voxelaug", version, about = "Volumetric augmentation engine for spine CT/MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reorient to PIR, resample to 1 mm and map labels to semantic classes.
    Preprocess(PreprocessArgs),
    /// Apply one named transform with explicit parameters.
    Augment(AugmentArgs),
    /// Apply a full pipeline config to one pair or a batch directory.
    Pipeline(PipelineArgs),
    /// Write every ablation variant config into a directory.
    Ablate(AblateArgs),
    /// Dice CSVs and significance matrices from prediction/reference directories.
    Eval(EvalArgs),
    /// Time the pipeline on synthetic patches.
    Bench(BenchArgs),
    /// Render a per-transform mosaic of mid slices as NIfTI.
    Preview(PreviewArgs),
}

#[derive(Args, Debug)]
struct PairIo {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out_image: PathBuf,
    #[arg(long)]
    out_labels: PathBuf,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[command(flatten)]
    io: PairIo,
    /// JSON label mapping `{"entries": {"7": 1}, "strict": true}`; defaults to 1, 2, 3 unchanged.
    #[arg(long)]
    mapping: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Seeds {
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    sample_id: u64,
    #[arg(long, default_value_t = 0)]
    epoch: u64,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[command(flatten)]
    io: PairIo,
    #[arg(long)]
    transform: String,
    /// Parameter object as inline JSON, or `@path` to a JSON file.
    #[arg(long)]
    params: Option<String>,
    #[command(flatten)]
    seeds: Seeds,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Pipeline config JSON; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    seeds: Seeds,
    #[arg(long, requires_all = ["labels", "out_image", "out_labels"], conflicts_with = "input_dir")]
    image: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out_image: Option<PathBuf>,
    #[arg(long)]
    out_labels: Option<PathBuf>,
    /// Batch mode: reads `images/` and `labels/` with matching file names.
    /// File n (sorted by name) gets sample id `sample_id + n`.
    #[arg(long, requires = "output_dir")]
    input_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Prediction directory, optionally named as `NAME=DIR`. Repeatable.
    #[arg(long = "pred", required = true)]
    preds: Vec<String>,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "128,128,128", value_parser = parse_dims)]
    patch: [usize; 3],
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "pipeline")]
    mode: BenchMode,
    /// Sets every gate to this probability in pipeline mode.
    #[arg(long)]
    force_probability: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PreviewArgs {
    /// Input images, one mosaic row each. A synthetic sample when omitted.
    #[arg(long = "image")]
    images: Vec<PathBuf>,
    /// Label maps matching `--image` in order.
    #[arg(long = "labels")]
    labels: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slice axis; 2 is sagittal for PIR data.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..3))]
    axis: u8,
    #[arg(long)]
    out: PathBuf,
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [x, y, z] if x > 0 && y > 0 && z > 0 => Ok([x, y, z]),
        _ => Err(format!("expected three positive integers like 128,128,128, got {s:?}")),
    }
}

/// Worker count: the request (or logical cores), capped by `VOXELAUG_THREADS`.
pub fn resolve_workers(requested: Option<usize>) -> usize {
    let default = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    let n = requested.unwrap_or(default).max(1);
    cap.map_or(n, |c| n.min(c))
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start worker pool: {e}")))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    path.map_or_else(|| Ok(PipelineConfig::default_config()), PipelineConfig::load)
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.to_path_buf(), source })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

fn load_pair(image: &Path, labels: &Path) -> Result<Sample<f32>> {
    let image: Volume<f32> = load_nifti(image)?;
    let labels: LabelMap = load_nifti(labels)?;
    Sample::new(image, labels)
}

fn save_pair(s: &Sample<f32>, image: &Path, labels: &Path) -> Result<()> {
    ensure_parent(image)?;
    ensure_parent(labels)?;
    save_nifti(&s.image, image)?;
    save_nifti(&s.labels, labels)
}

/// Strips `.nii` / `.nii.gz`.
pub(crate) fn nifti_stem(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".nii.gz").or_else(|| name.strip_suffix(".nii")).map(str::to_string)
}

pub(crate) fn list_nifti(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| Error::Io { path: dir.to_path_buf(), source })?.path();
        if path.is_file() && nifti_stem(&path).is_some() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let mapping = match &a.mapping {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| Error::Io { path: p.clone(), source })?;
            let m: LabelMapping = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
            m.validate()?;
            m
        }
        None => LabelMapping::identity(),
    };
    let image: Volume<f32> = load_nifti(&a.io.image)?;
    let labels: RawLabelMap = load_nifti(&a.io.labels)?;
    let out = preprocess(&image, &labels, &mapping)?;
    save_pair(&out, &a.io.out_image, &a.io.out_labels)
}

fn parse_params(raw: Option<&str>) -> Result<Map<String, Value>> {
    let Some(raw) = raw else { return Ok(Map::new()) };
    let text = match raw.strip_prefix('@') {
        Some(p) => fs::read_to_string(p).map_err(|source| Error::Io { path: p.into(), source })?,
        None => raw.to_string(),
    };
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::arg("--params must be a JSON object")),
        Err(e) => Err(Error::arg(format!("--params is not valid JSON: {e}"))),
    }
}

/// One-spec config at probability 1 placed in the section the transform
/// belongs to.
fn single_transform_config(name: &str, params: Map<String, Value>, seed: u64) -> Result<PipelineConfig> {
    let transform = Transform::from_spec(name, &params).map_err(|e| match e {
        Error::Config(m) => Error::Argument(m),
        other => other,
    })?;
    let mut cfg = PipelineConfig::default_config();
    cfg.global_seed = seed;
    cfg.geometric.clear();
    cfg.novel.clear();
    cfg.baseline_intensity.clear();
    let spec = TransformSpec { params, ..TransformSpec::new(name, 1.0) };
    match (transform.is_spatial(), transform.is_novel()) {
        (true, _) => cfg.geometric.push(spec),
        (false, true) => cfg.novel.push(spec),
        (false, false) => cfg.baseline_intensity.push(spec),
    }
    Ok(cfg)
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    let params = parse_params(a.params.as_deref())?;
    let cfg = single_transform_config(&a.transform, params, a.seeds.seed.unwrap_or(0))?;
    let s = load_pair(&a.io.image, &a.io.labels)?;
    let out = Pipeline::compile(&cfg)?.apply(&s, a.seeds.sample_id, a.seeds.epoch)?;
    save_pair(&out, &a.io.out_image, &a.io.out_labels)
}

fn run_pair(p: &Pipeline, image: &Path, labels: &Path, out_image: &Path, out_labels: &Path, id: u64, epoch: u64) -> Result<()> {
    let s = load_pair(image, labels)?;
    let out = p.apply(&s, id, epoch)?;
    save_pair(&out, out_image, out_labels)
}

fn cmd_pipeline(a: &PipelineArgs, diag: &mut Diag) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seeds.seed {
        cfg.global_seed = seed;
    }
    let pipeline = Pipeline::compile(&cfg)?;
    let epoch = a.seeds.epoch;
    if let (Some(image), Some(labels), Some(oi), Some(ol)) = (&a.image, &a.labels, &a.out_image, &a.out_labels) {
        return run_pair(&pipeline, image, labels, oi, ol, a.seeds.sample_id, epoch);
    }
    let (Some(input), Some(output)) = (&a.input_dir, &a.output_dir) else {
        return Err(Error::arg("pipeline needs --image/--labels/--out-image/--out-labels or --input-dir/--output-dir"));
    };
    let mut jobs = Vec::new();
    for image in list_nifti(&input.join("images"))? {
        let name = image.file_name().expect("listed file has a name").to_owned();
        let labels = input.join("labels").join(&name);
        if !labels.is_file() {
            diag.warn(format!("{} has no label map, skipped", image.display()));
            continue;
        }
        jobs.push((image, labels, output.join("images").join(&name), output.join("labels").join(&name)));
    }
    if jobs.is_empty() {
        return Err(Error::Io {
            path: input.clone(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no image/label pairs found"),
        });
    }
    let workers = resolve_workers(a.workers);
    log::info!("pipeline batch: {} pairs on {workers} worker(s)", jobs.len());
    let pool = thread_pool(workers)?;
    let results: Vec<Result<()>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .enumerate()
            .map(|(n, (i, l, oi, ol))| run_pair(&pipeline, i, l, oi, ol, a.seeds.sample_id + n as u64, epoch))
            .collect()
    });
    results.into_iter().collect()
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    create_dir(&a.out_dir)?;
    for variant in ablation_variants() {
        let cfg = make_ablation_config(a.seed, &variant)?;
        write_text(&a.out_dir.join(format!("{variant}.json")), &cfg.to_json())?;
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let name = a
        .config
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(|| "default".to_string(), |s| s.to_string_lossy().into_owned());
    let opts = BenchOptions {
        patch_dims: a.patch,
        iterations: a.iters,
        warmup: a.warmup,
        mode: a.mode,
        workers: resolve_workers(Some(a.workers)),
        force_probability: a.force_probability,
        seed: a.seed,
    };
    let report = run_benchmark(&cfg, &name, &opts)?;
    println!("{report}");
    if let Some(path) = &a.json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write_text(path, &text)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli, diag: &mut Diag) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Pipeline(a) => cmd_pipeline(a, diag),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Eval(a) => {
            let preds = a.preds.iter().map(|p| eval::parse_named_dir(p)).collect::<Result<Vec<_>>>()?;
            let workers = resolve_workers(a.workers);
            let pool = thread_pool(workers)?;
            let summary = pool.install(|| evaluate_dirs(&preds, &a.reference, &a.out_dir, diag))?;
            println!("{summary}");
            Ok(())
        }
        Command::Bench(a) => cmd_bench(a),
        Command::Preview(a) => {
            let cfg = load_config(a.config.as_deref())?;
            let columns = render_preview(&a.images, &a.labels, &cfg, a.seed, a.axis as usize, &a.out)?;
            println!("columns: {}", columns.join(", "));
            Ok(())
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(argv: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return CommandOutcome {
                exit_code: code,
                messages: if code == EXIT_OK { Vec::new() } else { vec![e.to_string()] },
            };
        }
    };
    let mut diag = Diag::default();
    let exit_code = match dispatch(&cli, &mut diag) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            diag.error(e.to_string());
            e.exit_code()
        }
    };
    CommandOutcome { exit_code, messages: diag.messages }
}
