//! `plot`: label scenes, evaluate labels, synthesize oracle scenes and draw
//! BEV plots.
//!
//! Exit codes: 0 success, 1 no objects labelled, 2 input error, 3 internal
//! error. Log level comes from `PLOT_LOG` (default `warn`); log lines are
//! `key=value` formatted on stderr.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use plot_core::ingest::{self, read_kitti_labels, read_label_dir, write_kitti_labels, IngestError};
use plot_core::metrics::{evaluate, EvalConfig, FramePair};
use plot_core::oracle::{self, emit_scene, generate, occlusion_benchmark, OracleError, SceneSpec};
use plot_core::pipeline::{self, ConfigError, PipelineConfig, PipelineError};
use plot_core::viz::bev_svg;
use plot_core::{KittiLabel, PriorTable};

#[derive(Debug, Parser)]
#[command(name = "plot", version, about = "Pseudo-label 3D boxes from monocular video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label a scene directory and write KITTI label files.
    Label(LabelArgs),
    /// Compare predicted label files against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Draw labels (and optional truth) as a bird's-eye-view SVG.
    Viz(VizArgs),
}

#[derive(Debug, Args)]
struct LabelArgs {
    /// Scene directory in the ingest layout.
    scene: PathBuf,
    /// Output directory for `%06d.txt` label files.
    #[arg(short, long)]
    out: PathBuf,
    /// Pipeline config (TOML); every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frames per window.
    #[arg(long)]
    window: Option<usize>,
    /// Output frame index.
    #[arg(long)]
    target_frame: Option<usize>,
    /// Label the target frame from its own observation only.
    #[arg(long)]
    single_frame: bool,
    /// Write labels for every frame of the window.
    #[arg(long)]
    all_frames: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of predicted `%06d.txt` files.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth `%06d.txt` files.
    #[arg(long)]
    gt: PathBuf,
    /// Write the JSON report here.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Fold orientation errors modulo π.
    #[arg(long)]
    mod_pi: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene spec file, or the name of a bundled spec.
    #[arg(required_unless_present = "benchmark")]
    spec: Option<String>,
    /// Emit the seeded occlusion benchmark scene instead of a spec.
    #[arg(long, conflicts_with = "spec")]
    benchmark: Option<u64>,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VizArgs {
    /// KITTI label file to draw.
    labels: PathBuf,
    /// Ground-truth label file, drawn dashed.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    /// Bad or missing input files, arguments or config.
    Input(String),
    /// The run finished but produced no objects.
    Empty(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Empty(_) => 1,
            Failure::Input(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Empty(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Input(format!("ingest: {e}"))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Input(format!("pipeline: {e}"))
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::Input(format!("synth: {e}"))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn label_config(args: &LabelArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = args.window {
        cfg.window = w;
    }
    if args.target_frame.is_some() {
        cfg.target_frame = args.target_frame;
    }
    cfg.all_frames |= args.all_frames;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_label(args: &LabelArgs) -> Result<(), Failure> {
    let mut cfg = label_config(args)?;
    let scene = ingest::load_scene(&args.scene)?;
    let priors = match &cfg.priors {
        Some(path) => ingest::load_priors(path, true)?,
        None => PriorTable::builtin(),
    };
    if args.single_frame {
        // Keep the frame the full configuration would label.
        if cfg.target_frame.is_none() {
            let (_, target) = pipeline::select_window(&scene, &cfg)?;
            cfg.target_frame = Some(target);
        }
        cfg = cfg.single_frame();
    }
    let out = pipeline::run(&scene, &priors, &cfg)?;
    let by_frame = out.labels_by_frame();
    let frames: Vec<usize> = if cfg.all_frames {
        out.window.clone()
    } else {
        vec![out.target_frame]
    };
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.out.display())))?;
    let mut written = 0;
    for f in &frames {
        let labels = by_frame.get(f).map(Vec::as_slice).unwrap_or(&[]);
        write_kitti_labels(labels, &args.out.join(format!("{f:06}.txt")))?;
        written += labels.len();
    }
    info!(
        "stage=label frames={} labels={} out={}",
        frames.len(),
        written,
        args.out.display()
    );
    if written == 0 {
        return Err(Failure::Empty(format!(
            "no objects labelled in {}",
            args.scene.display()
        )));
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    let preds = read_label_dir(&args.pred)?;
    let gts = read_label_dir(&args.gt)?;
    let pred_frames: BTreeSet<usize> = preds.keys().copied().collect();
    let gt_frames: BTreeSet<usize> = gts.keys().copied().collect();
    if pred_frames != gt_frames {
        warn!(
            "stage=eval frame_mismatch pred_only={} gt_only={} evaluating={}",
            pred_frames.difference(&gt_frames).count(),
            gt_frames.difference(&pred_frames).count(),
            pred_frames.intersection(&gt_frames).count()
        );
    }
    let pairs: Vec<FramePair> = pred_frames
        .intersection(&gt_frames)
        .map(|f| FramePair {
            preds: &preds[f],
            gts: &gts[f],
        })
        .collect();
    let cfg = EvalConfig {
        mod_pi: args.mod_pi,
        ..EvalConfig::default()
    };
    let report = evaluate(&pairs, &cfg);
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| Failure::Internal(format!("report serialization: {e}")))?;
        write_file(path, format!("{json}\n").as_bytes())?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn load_spec(arg: &str) -> Result<SceneSpec, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        return SceneSpec::from_toml(&text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())));
    }
    if oracle::bundled_spec(arg).is_some() {
        return Ok(SceneSpec::bundled(arg)?);
    }
    Err(Failure::Input(format!(
        "{arg}: no such spec file or bundled scene (bundled: {})",
        oracle::BUNDLED_SCENES.join(", ")
    )))
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let mut spec = match (&args.spec, args.benchmark) {
        (_, Some(seed)) => occlusion_benchmark(seed),
        (Some(s), None) => load_spec(s)?,
        (None, None) => return Err(Failure::Input("no scene spec given".into())),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let scene = generate(&spec)?;
    emit_scene(&scene, &args.out)?;
    info!(
        "stage=synth frames={} objects={} out={}",
        spec.frames,
        spec.objects.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_viz(args: &VizArgs) -> Result<(), Failure> {
    let boxes = |labels: Vec<KittiLabel>| labels.into_iter().map(|l| l.box3d).collect::<Vec<_>>();
    let preds = boxes(read_kitti_labels(&args.labels)?);
    let truth = match &args.truth {
        Some(path) => boxes(read_kitti_labels(path)?),
        None => Vec::new(),
    };
    write_file(&args.out, bev_svg(&preds, &truth).as_bytes())
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLOT_LOG", "warn"))
        .format(|buf, record| {
            writeln!(
                buf,
                "level={} target={} {}",
                record.level().as_str().to_lowercase(),
                record.target(),
                record.args()
            )
        })
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let result = panic::catch_unwind(AssertUnwindSafe(|| match &cli.command {
        Command::Label(a) => cmd_label(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Viz(a) => cmd_viz(a),
    }))
    .unwrap_or_else(|_| Err(Failure::Internal("internal error (panic)".into())));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("plot: {f}");
            ExitCode::from(f.code())
        }
    }
}
