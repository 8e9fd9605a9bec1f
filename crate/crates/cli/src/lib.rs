//! The `longtail` command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or integrity error, 4 I/O
//! error. Every command writes a `run_meta.json` next to its outputs.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use longtail::augment::{self, AugmentConfig, BiasSpec, ClipPolicy, DirectorySource, MixupSpec};
use longtail::coco::{self, DatasetIndex};
use longtail::curation::{self, CurationConfig};
use longtail::sampling::{self, Aggregation};
use longtail::{fixture, reweigh, rng, stats};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Environment variable that overrides `--log-level`.
pub const LOG_ENV: &str = "LONGTAIL_LOG";

#[derive(Debug, Parser, Serialize)]
#[command(name = "longtail", version, about = "Long-tailed detection dataset toolkit")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    /// error, warn, info, debug or trace; LONGTAIL_LOG takes precedence.
    #[arg(long, global = true, default_value = "warn")]
    #[serde(skip)]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Build a long-tailed subset of a COCO dataset.
    Curate(CurateArgs),
    /// Write per-epoch sampling schedules.
    Sample(SampleArgs),
    /// Compute inverse-frequency class loss weights.
    Weights(WeightsArgs),
    /// Generate mosaic / mixup samples with YOLO labels.
    Augment(AugmentArgs),
    /// Per-class histograms, Zipf fit and charts.
    Stats(StatsArgs),
    /// Write a synthetic dataset with procedurally drawn images.
    #[command(hide = true)]
    Fixture(FixtureArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got `{s}`")),
    }
}

fn finite_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got `{s}`")),
    }
}

fn probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a probability in [0, 1], got `{s}`")),
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

#[derive(Debug, Args, Serialize)]
struct CurateArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = at_least_one)]
    top_k: usize,
    /// Keep images with at most this many annotations.
    #[arg(long, default_value_t = 10)]
    max_detections: usize,
    #[arg(long, default_value_t = 1.01, value_parser = finite_f64)]
    zipf_s: f64,
    /// Randomly draw this many images before filtering.
    #[arg(long, value_parser = at_least_one)]
    pool_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Validation annotations to cap and strip with the selected categories.
    #[arg(long, requires = "val_out")]
    val_annotations: Option<PathBuf>,
    #[arg(long, requires = "val_annotations")]
    val_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum StrategyArg {
    Uniform,
    Cas,
    Rfs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AggArg {
    Max,
    Mean,
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, value_enum, default_value = "uniform")]
    strategy: StrategyArg,
    /// Repeat-factor oversampling threshold.
    #[arg(long, default_value_t = sampling::DEFAULT_THRESHOLD, value_parser = positive_f64)]
    t: f64,
    #[arg(long, value_enum, default_value = "max")]
    agg: AggArg,
    #[arg(long, default_value_t = 1, value_parser = at_least_one)]
    epochs: usize,
    /// Draws per class-aware epoch (default: number of images).
    #[arg(long, value_parser = at_least_one)]
    length: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct WeightsArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum ModeArg {
    #[value(name = "mosaic")]
    #[serde(rename = "mosaic")]
    Mosaic,
    #[value(name = "mosaic+mixup")]
    #[serde(rename = "mosaic+mixup")]
    MosaicMixup,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum BiasArg {
    None,
    Underrep,
}

#[derive(Debug, Args, Serialize)]
struct AugmentArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Directory holding the images named in the annotations.
    #[arg(long)]
    images: PathBuf,
    #[arg(long, value_enum, default_value = "mosaic")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0.3, value_parser = probability)]
    mixup_prob: f64,
    #[arg(long, default_value_t = 32.0, value_parser = positive_f64)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "none")]
    bias: BiasArg,
    /// Chance that a biased slot draws from the rare classes.
    #[arg(long, default_value_t = 0.5, value_parser = probability)]
    bias_prob: f64,
    /// Number of rarest categories treated as rare (default: half, rounded up).
    #[arg(long, value_parser = at_least_one)]
    rare_k: Option<usize>,
    /// Mosaic base size; the canvas is twice this.
    #[arg(long, default_value_t = 640, value_parser = clap::value_parser!(u32).range(1..=8192))]
    size: u32,
    #[arg(long, value_parser = at_least_one)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = 1.01, value_parser = finite_f64)]
    zipf_s: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500, value_parser = at_least_one)]
    images: usize,
    #[arg(long, default_value_t = 14, value_parser = at_least_one)]
    classes: usize,
    #[arg(long, default_value_t = 48, value_parser = clap::value_parser!(u32).range(8..=4096))]
    min_side: u32,
    #[arg(long, default_value_t = 96, value_parser = clap::value_parser!(u32).range(8..=4096))]
    max_side: u32,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(longtail::Error),
}

impl From<longtail::Error> for CliError {
    fn from(e: longtail::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_io() => EXIT_IO,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(longtail::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("JSON serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

fn load_index(path: &Path) -> CliResult<DatasetIndex> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let (index, report) = coco::parse_coco_with_report(&bytes)?;
    info!(
        "{}: {} images, {} annotations, {} categories",
        path.display(),
        index.images().len(),
        index.annotations().len(),
        index.categories().len()
    );
    if report.clamped > 0 || report.dropped > 0 {
        warn!(
            "{}: {} boxes clamped, {} dropped",
            path.display(),
            report.clamped,
            report.dropped
        );
    }
    Ok(index)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    rng: &'static str,
    seed: u64,
    threads: Option<u16>,
    command: &'a Command,
}

fn write_run_meta(dir: &Path, cli: &Cli) -> CliResult {
    let meta = RunMeta {
        tool: "longtail",
        version: env!("CARGO_PKG_VERSION"),
        rng: rng::STREAM_VERSION,
        seed: cli.seed,
        threads: cli.threads,
        command: &cli.command,
    };
    write_file(&dir.join("run_meta.json"), &pretty_json(&meta))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn curate(cli: &Cli, args: &CurateArgs) -> CliResult {
    let index = load_index(&args.annotations)?;
    let config = CurationConfig {
        top_k: args.top_k,
        max_detections: args.max_detections,
        zipf_s: args.zipf_s,
        pool_size: args.pool_size,
        seed: cli.seed,
    };
    let curated = curation::curate(&index, &config)?;
    for class in &curated.report.classes {
        info!(
            "rank {:>2} {:<16} images {:>6} (target {:>6}) instances {:>6}",
            class.rank, class.name, class.image_count, class.target_images, class.instance_count
        );
    }
    write_file(&args.out, &coco::write_manifest(&curated.index))?;
    write_file(&args.report, &pretty_json(&curated.report))?;
    if let (Some(val_in), Some(val_out)) = (&args.val_annotations, &args.val_out) {
        let val = load_index(val_in)?;
        let keep = curated.rank_order.iter().copied().collect();
        let val = curation::curate_validation(&val, args.max_detections, &keep)?;
        write_file(val_out, &coco::write_manifest(&val))?;
    }
    write_run_meta(&parent_dir(&args.out), cli)
}

fn sample(cli: &Cli, args: &SampleArgs) -> CliResult {
    let index = load_index(&args.annotations)?;
    create_dir(&args.out)?;
    let aggregation = match args.agg {
        AggArg::Max => Aggregation::Max,
        AggArg::Mean => Aggregation::Mean,
    };
    let table = match args.strategy {
        StrategyArg::Rfs => {
            let table = sampling::repeat_factors(&index, args.t, aggregation)?;
            write_file(&args.out.join("repeat_factors.json"), &pretty_json(&table))?;
            Some(table)
        }
        _ => None,
    };
    let length = args.length.unwrap_or(index.images().len());
    let epochs: Vec<u64> = (0..args.epochs as u64).collect();
    let schedules = epochs
        .par_iter()
        .map(|&epoch| match (args.strategy, &table) {
            (StrategyArg::Uniform, _) => sampling::uniform_schedule(&index, cli.seed, epoch),
            (StrategyArg::Cas, _) => sampling::class_aware_schedule(&index, length, cli.seed, epoch),
            (StrategyArg::Rfs, Some(t)) => sampling::repeat_factor_schedule(&index, t, cli.seed, epoch),
            (StrategyArg::Rfs, None) => unreachable!("table is built for rfs"),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let path = args.out.join("schedule.jsonl");
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    sampling::write_schedules(BufWriter::new(file), &schedules).map_err(|e| io_err(&path, e))?;
    write_run_meta(&args.out, cli)
}

fn weights(cli: &Cli, args: &WeightsArgs) -> CliResult {
    let index = load_index(&args.annotations)?;
    let w = reweigh::class_weights(&index)?;
    write_file(&args.out, &pretty_json(&w.weights))?;
    write_run_meta(&parent_dir(&args.out), cli)
}

#[derive(Serialize)]
struct ManifestRecord<'a> {
    sample: u64,
    image: String,
    labels_file: String,
    sources: Vec<longtail::ImageId>,
    labels: &'a [longtail::Label],
    provenance: &'a augment::Provenance,
}

/// Samples generated in parallel per chunk, then written in order.
const AUGMENT_CHUNK: usize = 32;

fn augment_cmd(cli: &Cli, args: &AugmentArgs) -> CliResult {
    let index = load_index(&args.annotations)?;
    let bias = match args.bias {
        BiasArg::None => None,
        BiasArg::Underrep => {
            let k = args.rare_k.unwrap_or(index.categories().len().div_ceil(2));
            Some(BiasSpec::rarest(&index, k, args.bias_prob))
        }
    };
    let config = AugmentConfig {
        base_size: args.size,
        mixup: match args.mode {
            ModeArg::Mosaic => None,
            ModeArg::MosaicMixup => Some(MixupSpec {
                alpha: args.alpha,
                probability: args.mixup_prob,
            }),
        },
        bias,
        clip: ClipPolicy::default(),
    };
    let source = DirectorySource::new(&args.images);
    let classes = augment::yolo_class_map(&index);
    let image_dir = args.out.join("images");
    let label_dir = args.out.join("labels");
    create_dir(&image_dir)?;
    create_dir(&label_dir)?;

    let mut names = String::new();
    for (c, name) in index.categories() {
        names.push_str(&format!("{} {} {}\n", classes[c], c, name));
    }
    write_file(&args.out.join("classes.txt"), names.as_bytes())?;

    let manifest_path = args.out.join("augment_manifest.jsonl");
    let file = fs::File::create(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let mut manifest = BufWriter::new(file);
    let all: Vec<u64> = (0..args.count as u64).collect();
    for chunk in all.chunks(AUGMENT_CHUNK) {
        let samples = chunk
            .par_iter()
            .map(|&i| augment::augment_sample(&index, &source, &config, cli.seed, i))
            .collect::<Result<Vec<_>, _>>()?;
        for (&i, sample) in chunk.iter().zip(&samples) {
            let image = format!("images/{i:06}.png");
            let labels_file = format!("labels/{i:06}.txt");
            let image_path = args.out.join(&image);
            sample
                .pixels
                .save_with_format(&image_path, image::ImageFormat::Png)
                .map_err(|source| longtail::Error::Image {
                    path: image_path.clone(),
                    source,
                })?;
            write_file(
                &args.out.join(&labels_file),
                augment::yolo_label_text(sample, &classes)?.as_bytes(),
            )?;
            let record = ManifestRecord {
                sample: i,
                sources: sample.provenance.sources(),
                image,
                labels_file,
                labels: &sample.labels,
                provenance: &sample.provenance,
            };
            let line = serde_json::to_string(&record).expect("JSON serialization cannot fail");
            writeln!(manifest, "{line}").map_err(|e| io_err(&manifest_path, e))?;
        }
    }
    manifest.flush().map_err(|e| io_err(&manifest_path, e))?;
    write_run_meta(&args.out, cli)
}

fn stats_cmd(cli: &Cli, args: &StatsArgs) -> CliResult {
    let index = load_index(&args.annotations)?;
    let hist = stats::histogram(&index);
    let fit = if hist.order.is_empty() || hist.total_images() == 0 {
        None
    } else {
        let spec = curation::zipf_targets(args.zipf_s, hist.order.len())?;
        Some(stats::zipf_fit(&hist, &spec)?)
    };
    stats::emit_report(&hist, fit.as_ref(), &args.out)?;
    write_run_meta(&args.out, cli)
}

fn fixture_cmd(cli: &Cli, args: &FixtureArgs) -> CliResult {
    if args.max_side < args.min_side {
        return Err(CliError::Usage("--max-side must be at least --min-side".into()));
    }
    let generated = fixture::generate(&fixture::FixtureConfig {
        images: args.images,
        classes: args.classes,
        min_side: args.min_side,
        max_side: args.max_side,
        seed: cli.seed,
    });
    generated.write_to(&args.out)?;
    write_run_meta(&args.out, cli)
}

fn init_logging(level: log::LevelFilter) {
    let mut builder = env_logger::Builder::new();
    builder.filter_level(level).format_timestamp(None);
    if let Ok(spec) = std::env::var(LOG_ENV) {
        builder.parse_filters(&spec);
    }
    let _ = builder.try_init();
}

fn dispatch(cli: &Cli) -> CliResult {
    if let Some(n) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(usize::from(n)).build_global();
    }
    match &cli.command {
        Command::Curate(a) => curate(cli, a),
        Command::Sample(a) => sample(cli, a),
        Command::Weights(a) => weights(cli, a),
        Command::Augment(a) => augment_cmd(cli, a),
        Command::Stats(a) => stats_cmd(cli, a),
        Command::Fixture(a) => fixture_cmd(cli, a),
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.log_level);
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("longtail: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn help_and_unknown_flags() {
        assert_eq!(run(["longtail", "--help"]), EXIT_OK);
        assert_eq!(run(["longtail", "--version"]), EXIT_OK);
        assert_eq!(run(["longtail", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["longtail", "stats", "--annotations", "a.json", "--out", "x", "--nope"]), EXIT_USAGE);
        assert_eq!(run(["longtail"]), EXIT_USAGE);
    }

    #[test]
    fn flags_validated_before_work() {
        let base = ["longtail", "sample", "--annotations", "missing.json", "--out", "x"];
        let with = |extra: &[&str]| base.iter().chain(extra).map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(run(with(&["--t", "0"])), EXIT_USAGE);
        assert_eq!(run(with(&["--t", "-1"])), EXIT_USAGE);
        assert_eq!(run(with(&["--strategy", "sometimes"])), EXIT_USAGE);
        assert_eq!(run(with(&["--epochs", "0"])), EXIT_USAGE);
        // valid flags, missing input file
        assert_eq!(run(with(&[])), EXIT_IO);
    }

    #[test]
    fn data_errors_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        fs::write(&bad, b"{\"images\": [").unwrap();
        let out = dir.path().join("w.json");
        let code = run([
            "longtail".as_ref(),
            "weights".as_ref(),
            "--annotations".as_ref(),
            bad.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }
}
