use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vomask::degrade::{self, DegradeSpec};
use vomask::experiment::{self, ExperimentConfig, MaskDropData};
use vomask::metrics::{self, EvalFlags, FrameSequence};
use vomask::muse::{self, CompressionMode, CompressionSpec};
use vomask::pairselect::{self, PairManifest};
use vomask::randmask::{self, Curve, Dynamics, MaskGenSpec, Shape};
use vomask::{gradcheck, seqio, MaskSequence};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "vomask", version, about = "Mask tooling for video object removal")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with the subcommand's settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a random occlusion mask.
    GenMask(GenMaskArgs),
    /// Degrade a mask by bbox coarsening, morphology and frame dropout.
    Degrade(DegradeArgs),
    /// Compress a mask onto the latent frame grid.
    Compress(CompressArgs),
    /// Windowed union followed by expansion back to full length.
    Preprocess(PreprocessArgs),
    /// Keep one frame every k from a mask or frame directory.
    Subsample(SubsampleArgs),
    /// Score a prediction and write a metrics report.
    Eval(EvalArgs),
    /// Rank paired candidates by background consistency.
    SelectPairs(SelectArgs),
    /// Run the gradient and invariant checks of the segmentation head.
    DasegCheck(DasegArgs),
    /// Run a protocol experiment.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Rectangle,
    Circle,
    Ellipse,
    FullFrame,
}

#[derive(Clone, Copy, ValueEnum)]
enum DynamicsArg {
    FullSpan,
    Interval,
    PerFrameRandom,
    PerFrameJitter,
    ConstantSpeed,
    VariableSpeed,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurveArg {
    Parabolic,
    SShaped,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Union,
    Nearest,
}

#[derive(Args)]
struct GenMaskArgs {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Drawn from the seed when omitted.
    #[arg(long, value_enum)]
    shape: Option<ShapeArg>,
    /// Drawn from the seed when omitted.
    #[arg(long, value_enum)]
    dynamics: Option<DynamicsArg>,
    #[arg(long, value_enum)]
    curve: Option<CurveArg>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DegradeArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    drop_rate: Option<f64>,
    #[arg(long)]
    erode: Option<usize>,
    #[arg(long)]
    dilate: Option<usize>,
    #[arg(long)]
    bbox: bool,
    /// Draw the stages at random instead of using the flags above.
    #[arg(long)]
    random: bool,
    /// Drop one contiguous run of frames instead of scattered frames.
    #[arg(long)]
    contiguous: bool,
}

#[derive(Args)]
struct CompressArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    ratio: Option<usize>,
}

#[derive(Args)]
struct PreprocessArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    ratio: Option<usize>,
}

#[derive(Args)]
struct SubsampleArgs {
    /// `.mseq` file or frame directory.
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(short)]
    k: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted frame directory.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth frame directory for paired metrics.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Unedited input frames, the masked-metric reference when unpaired.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    mask: PathBuf,
    /// Dilate the exclusion region by this many pixels for masked metrics.
    #[arg(long)]
    exclude_dilate: Option<usize>,
    #[arg(long)]
    require_paired: bool,
    /// Report JSON; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    manifest: PathBuf,
    #[arg(short)]
    k: Option<usize>,
    #[arg(long)]
    min_frames: Option<usize>,
    /// Selection JSON; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DasegArgs {
    /// Finite-difference points per gradient.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum ExperimentKind {
    Skipframe,
    Maskdrop,
    All,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    #[arg(short, long)]
    output: PathBuf,
    /// Frame directory for the mask-drop curve instead of synthetic clips.
    #[arg(long, requires = "mask")]
    video: Option<PathBuf>,
    #[arg(long, requires = "video")]
    mask: Option<PathBuf>,
    /// Fixed prediction to score instead of the mean-fill baseline.
    #[arg(long, requires = "video")]
    pred: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CompressConfig {
    ratio: Option<usize>,
    mode: Option<CompressionMode>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SubsampleConfig {
    k: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SelectConfig {
    k: Option<usize>,
    min_frames: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DasegConfig {
    points: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenMaskConfig {
    frames: Option<usize>,
    height: Option<usize>,
    width: Option<usize>,
    shape: Option<Shape>,
    dynamics: Option<Dynamics>,
    curve: Option<Curve>,
    size_range: Option<[f64; 2]>,
    jitter_amplitude: Option<u32>,
    velocity_range: Option<[f64; 2]>,
    seed: Option<u64>,
    center: Option<[f64; 2]>,
    velocity: Option<[f64; 2]>,
    half_extent: Option<[f64; 2]>,
    interval: Option<[usize; 2]>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_slice(&bytes).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        None => print_json(value),
        Some(p) => {
            let mut s = serde_json::to_string_pretty(value)?;
            s.push('\n');
            std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))
        }
    }
}

fn load_mask(path: &Path) -> Result<MaskSequence> {
    seqio::load_mseq(path).with_context(|| format!("reading mask {}", path.display()))
}

fn save_mask(m: &MaskSequence, path: &Path) -> Result<()> {
    seqio::save_mseq(m, path).with_context(|| format!("writing mask {}", path.display()))?;
    Ok(())
}

fn load_video(path: &Path) -> Result<FrameSequence> {
    seqio::load_frames(path).with_context(|| format!("reading frames {}", path.display()))
}

fn gen_mask(a: GenMaskArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let c: GenMaskConfig = load_config(config)?;
    let seed = seed.or(c.seed).unwrap_or(0);
    let (frames, height, width) = match (a.frames.or(c.frames), a.height.or(c.height), a.width.or(c.width)) {
        (Some(f), Some(h), Some(w)) => (f, h, w),
        _ => bail!("--frames, --height and --width are required (flag or config)"),
    };
    let (drawn_shape, drawn_dyn, drawn_curve) = randmask::random_kinds(seed);
    let shape = a.shape.map(shape_of).or(c.shape);
    let dynamics = a.dynamics.map(dynamics_of).or(c.dynamics);
    let curve = a.curve.map(curve_of).or(c.curve);
    let sampled = shape.is_none() || dynamics.is_none();
    let mut spec = MaskGenSpec::new(frames, height, width, shape.unwrap_or(drawn_shape), dynamics.unwrap_or(drawn_dyn))
        .with_seed(seed);
    spec.curve = curve.unwrap_or(if sampled { drawn_curve } else { spec.curve });
    if let Some(v) = c.size_range {
        spec.size_range = v;
    }
    if let Some(v) = c.jitter_amplitude {
        spec.jitter_amplitude = v;
    }
    if let Some(v) = c.velocity_range {
        spec.velocity_range = v;
    }
    spec.center = c.center;
    spec.velocity = c.velocity;
    spec.half_extent = c.half_extent;
    spec.interval = c.interval;
    let m = randmask::generate(&spec)?;
    save_mask(&m, &a.output)?;
    print_json(&json!({
        "spec": spec,
        "sampled_kinds": sampled,
        "kind_sampling": "uniform over shapes, dynamics and curves",
        "active_frames": (0..m.frames()).filter(|&t| !m.is_frame_empty(t)).count(),
        "mask_sha256": seqio::mask_sha256(&m),
    }))
}

fn shape_of(s: ShapeArg) -> Shape {
    match s {
        ShapeArg::Rectangle => Shape::Rectangle,
        ShapeArg::Circle => Shape::Circle,
        ShapeArg::Ellipse => Shape::Ellipse,
        ShapeArg::FullFrame => Shape::FullFrame,
    }
}

fn dynamics_of(d: DynamicsArg) -> Dynamics {
    match d {
        DynamicsArg::FullSpan => Dynamics::FullSpan,
        DynamicsArg::Interval => Dynamics::Interval,
        DynamicsArg::PerFrameRandom => Dynamics::PerFrameRandom,
        DynamicsArg::PerFrameJitter => Dynamics::PerFrameJitter,
        DynamicsArg::ConstantSpeed => Dynamics::ConstantSpeed,
        DynamicsArg::VariableSpeed => Dynamics::VariableSpeed,
    }
}

fn curve_of(c: CurveArg) -> Curve {
    match c {
        CurveArg::Parabolic => Curve::Parabolic,
        CurveArg::SShaped => Curve::SShaped,
    }
}

fn degrade_cmd(a: DegradeArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let mut spec: DegradeSpec = load_config(config)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(v) = a.drop_rate {
        spec.drop_rate = v;
    }
    if let Some(v) = a.erode {
        spec.erode_radius = v;
    }
    if let Some(v) = a.dilate {
        spec.dilate_radius = v;
    }
    spec.bbox |= a.bbox;
    spec.compose_random |= a.random;
    spec.contiguous |= a.contiguous;
    let m = load_mask(&a.input)?;
    let (out, stages) = degrade::apply_resolved(&m, &spec)?;
    save_mask(&out, &a.output)?;
    print_json(&json!({ "spec": spec, "stages": stages, "mask_sha256": seqio::mask_sha256(&out) }))
}

fn compress_cmd(a: CompressArgs, config: Option<&Path>) -> Result<()> {
    let c: CompressConfig = load_config(config)?;
    let spec = CompressionSpec {
        ratio: a.ratio.or(c.ratio).unwrap_or(muse::DEFAULT_RATIO),
        mode: a
            .mode
            .map(|m| match m {
                ModeArg::Union => CompressionMode::Union,
                ModeArg::Nearest => CompressionMode::Nearest,
            })
            .or(c.mode)
            .unwrap_or(CompressionMode::Union),
    };
    let m = load_mask(&a.input)?;
    let out = spec.compress(&m)?;
    save_mask(&out, &a.output)?;
    print_json(&json!({
        "mode": spec.mode,
        "ratio": spec.ratio,
        "frames": m.frames(),
        "latent_frames": out.frames(),
        "nearest_sampling": "window_start",
    }))
}

fn preprocess_cmd(a: PreprocessArgs, config: Option<&Path>) -> Result<()> {
    let c: CompressConfig = load_config(config)?;
    let ratio = a.ratio.or(c.ratio).unwrap_or(muse::DEFAULT_RATIO);
    let out = muse::muse_preprocess(&load_mask(&a.input)?, ratio)?;
    save_mask(&out, &a.output)
}

fn subsample_cmd(a: SubsampleArgs, config: Option<&Path>) -> Result<()> {
    let c: SubsampleConfig = load_config(config)?;
    let k = a.k.or(c.k).unwrap_or(1);
    if a.input.is_dir() {
        let (v, manifest) = seqio::read_frames(&a.input)?;
        seqio::write_frames(&a.output, &v.temporal_subsample(k)?, manifest.fps / k as f64)?;
    } else {
        save_mask(&load_mask(&a.input)?.temporal_subsample(k)?, &a.output)?;
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let mut flags: EvalFlags = load_config(config)?;
    if let Some(d) = a.exclude_dilate {
        flags.exclusion_dilation = d;
    }
    flags.require_paired |= a.require_paired;
    let pred = load_video(&a.pred)?;
    let gt = a.gt.as_deref().map(load_video).transpose()?;
    let source = a.source.as_deref().map(load_video).transpose()?;
    let mask = load_mask(&a.mask)?;
    let mut report = metrics::evaluate_with_source(&pred, gt.as_ref(), source.as_ref(), &mask, &flags)?;
    if let Some(s) = seed {
        report.metadata.insert("seed".into(), json!(s));
    }
    match &a.output {
        Some(p) => {
            let f = std::fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
            seqio::write_report_json(&report, std::io::BufWriter::new(f))?;
        }
        None => seqio::write_report_json(&report, std::io::stdout().lock())?,
    }
    if let Some(p) = &a.csv {
        std::fs::write(p, seqio::report_csv(&report)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn select_cmd(a: SelectArgs, config: Option<&Path>) -> Result<()> {
    let c: SelectConfig = load_config(config)?;
    let k = a.k.or(c.k).unwrap_or(pairselect::DEFAULT_TOP_K);
    let min_frames = a.min_frames.or(c.min_frames).unwrap_or(pairselect::DEFAULT_MIN_FRAMES);
    let manifest = PairManifest::load(&a.manifest).with_context(|| format!("reading manifest {}", a.manifest.display()))?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let (cands, load_failures) = manifest.load_candidates(base, min_frames);
    if !load_failures.is_empty() {
        log::warn!("{} candidates failed to load", load_failures.len());
    }
    let mut sel = pairselect::select_top(&cands, k)?;
    sel.excluded.extend(load_failures);
    sel.excluded.sort_by(|a, b| a.id.cmp(&b.id));
    write_json(&sel, a.output.as_deref())
}

fn daseg_cmd(a: DasegArgs, seed: Option<u64>, config: Option<&Path>) -> Result<bool> {
    let c: DasegConfig = load_config(config)?;
    let points = a.points.or(c.points).unwrap_or(gradcheck::DEFAULT_POINTS);
    let rows = gradcheck::run_suite(seed.unwrap_or(0), points)?;
    print!("{}", gradcheck::format_table(&rows));
    println!("losses are means over elements; finite differences are central with h = {}", gradcheck::STEP);
    Ok(rows.iter().all(|r| r.passed))
}

fn experiment_cmd(a: ExperimentArgs, seed: Option<u64>, config: Option<&Path>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    if matches!(a.kind, ExperimentKind::Skipframe | ExperimentKind::All) {
        let t = experiment::experiment_skipframe(&cfg)?;
        experiment::write_outputs(&a.output, "skipframe", &t, &t.to_csv())?;
    }
    if matches!(a.kind, ExperimentKind::Maskdrop | ExperimentKind::All) {
        let data = match (&a.video, &a.mask) {
            (Some(v), Some(m)) => Some(MaskDropData {
                video: load_video(v)?,
                mask: load_mask(m)?,
                prediction: a.pred.as_deref().map(load_video).transpose()?,
            }),
            _ => None,
        };
        let c = experiment::experiment_maskdrop(&cfg, data.as_ref())?;
        experiment::write_outputs(&a.output, "maskdrop", &c, &c.to_csv())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let config = cli.config.as_deref();
    let seed = cli.seed;
    match cli.cmd {
        Command::GenMask(a) => gen_mask(a, seed, config)?,
        Command::Degrade(a) => degrade_cmd(a, seed, config)?,
        Command::Compress(a) => compress_cmd(a, config)?,
        Command::Preprocess(a) => preprocess_cmd(a, config)?,
        Command::Subsample(a) => subsample_cmd(a, config)?,
        Command::Eval(a) => eval_cmd(a, seed, config)?,
        Command::SelectPairs(a) => select_cmd(a, config)?,
        Command::DasegCheck(a) => return daseg_cmd(a, seed, config),
        Command::Experiment(a) => experiment_cmd(a, seed, config)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_DATA),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
