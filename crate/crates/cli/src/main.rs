use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use steploc::datamodel::{
    load_annotations, load_detections, load_lexicon, load_proposals, write_detections, write_json,
    write_proposals, DetectionSet, ProposalFile,
};
use steploc::metrics::{frame_accuracy_set, mss_oce, EvalConfig, MetricReport};
use steploc::orderdependency::{
    apply_od_all, build_transition, Criterion, Distribution, Fusion, OdConfig, TransitionModel,
    WatershedConfig,
};
use steploc::postprocess::{combine_files, nms_all, NmsConfig};
use steploc::synth::{generate_corpus, SynthConfig};
use steploc::taskconsistency::{apply_tc_all, AggregateMode, TcConfig, DEFAULT_GAMMA};
use steploc::Error;

#[derive(Parser)]
#[command(
    name = "steploc",
    version,
    about = "Step-localization proposal refinement and evaluation"
)]
struct Cli {
    /// Worker threads for per-video processing (0 = all cores). Never changes output.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Task-consistency refinement of proposal scores.
    Tc(TcArgs),
    /// Build a transition model from training annotations.
    Transitions(TransitionsArgs),
    /// Ordering-dependency refinement of proposal scores.
    Od(OdArgs),
    /// Class-wise NMS turning proposals into detections.
    Nms(NmsArgs),
    /// Weighted fusion of two modalities' proposal scores.
    Fuse(FuseArgs),
    /// mAP / mAR at IoU thresholds.
    EvalMap(EvalMapArgs),
    /// Frame accuracy at a fixed sampling rate.
    EvalFrames(EvalFramesArgs),
    /// Missing-step score and order-consistency error per task.
    Stats(StatsArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TcArgs {
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = Aggregate::Sum)]
    aggregate: Aggregate,
    /// Refined proposals.
    #[arg(long)]
    out: PathBuf,
    /// Predicted-task sidecar; defaults to the output path with a `.tasks.json` extension.
    #[arg(long)]
    tasks_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Aggregate {
    Sum,
    Average,
}

#[derive(Args)]
struct TransitionsArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OdArgs {
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    transitions: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long, value_enum, default_value_t = Dist::Gaussian)]
    dist: Dist,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 100)]
    slots: usize,
    /// Stop the watershed sweep once the average gap (in slots) is below this.
    #[arg(long, conflicts_with = "theta_len")]
    theta_gap: Option<f64>,
    /// Stop the watershed sweep once the average length (in slots) exceeds this.
    #[arg(long)]
    theta_len: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    ws_hi: f64,
    #[arg(long, default_value_t = 0.05)]
    ws_lo: f64,
    #[arg(long, default_value_t = 0.05)]
    ws_step: f64,
    #[arg(long, value_enum, default_value_t = FusionArg::Weighted)]
    fusion: FusionArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Gaussian,
    Triangle,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Weighted,
    Rms,
    Geometric,
    Max,
}

#[derive(Args)]
struct NmsArgs {
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    nms_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    weight_a: f64,
    #[arg(long, default_value_t = 0.5)]
    weight_b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalMapArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
    alphas: Vec<f64>,
    /// CSV report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalFramesArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    fps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// File of key=value lines; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_tasks: Option<usize>,
    #[arg(long)]
    steps_per_task: Option<usize>,
    #[arg(long)]
    n_videos: Option<usize>,
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    swap_prob: Option<f64>,
    #[arg(long)]
    jitter_s: Option<f64>,
    #[arg(long)]
    confusion_prob: Option<f64>,
    #[arg(long)]
    proposals_per_segment: Option<usize>,
    #[arg(long)]
    label_noise_prob: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(flag: &str, e: Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{flag}: {e}"),
    }
}

fn sorted(mut file: ProposalFile) -> ProposalFile {
    file.videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    file
}

fn write_report(out: Option<&Path>, report: &MetricReport) -> Result<(), Failure> {
    print!("{}", report.to_table());
    if let Some(path) = out {
        std::fs::write(path, report.to_csv()).map_err(|source| {
            Failure::from(Error::Io {
                path: path.to_path_buf(),
                source,
            })
        })?;
    }
    Ok(())
}

fn run_tc(args: TcArgs) -> Result<(), Failure> {
    let aggregate = match args.aggregate {
        Aggregate::Sum => AggregateMode::Sum,
        Aggregate::Average => AggregateMode::Average,
    };
    let cfg = TcConfig::new(args.gamma, aggregate).map_err(|e| usage("--gamma", e))?;
    let lexicon = load_lexicon(&args.lexicon)?;
    let proposals = load_proposals(&args.proposals, Some(&lexicon))?;
    let results = apply_tc_all(&proposals, &lexicon, &cfg)?;
    let tasks: Vec<_> = {
        let mut rows: Vec<_> = results
            .iter()
            .map(|r| {
                json!({
                    "video_id": r.refined.video_id,
                    "task": r.predicted_task,
                    "task_scores": r.task_scores,
                    "video_score": r.video_score,
                })
            })
            .collect();
        rows.sort_by(|a, b| a["video_id"].as_str().cmp(&b["video_id"].as_str()));
        rows
    };
    let refined = sorted(ProposalFile {
        videos: results.into_iter().map(|r| r.refined).collect(),
    });
    write_proposals(&args.out, &refined)?;
    let sidecar = args
        .tasks_out
        .unwrap_or_else(|| args.out.with_extension("tasks.json"));
    write_json(&sidecar, &json!({ "videos": tasks }))?;
    Ok(())
}

fn run_transitions(args: TransitionsArgs) -> Result<(), Failure> {
    let lexicon = load_lexicon(&args.lexicon)?;
    let annotations = load_annotations(&args.annotations, Some(&lexicon))?;
    build_transition(&annotations, lexicon.num_steps())?.save(&args.out)?;
    Ok(())
}

fn run_od(args: OdArgs) -> Result<(), Failure> {
    let criterion = match (args.theta_gap, args.theta_len) {
        (_, Some(len)) => Criterion::AvgLen(len),
        (Some(gap), None) => Criterion::AvgGap(gap),
        (None, None) => Criterion::AvgGap(6.0),
    };
    let cfg = OdConfig {
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        distribution: match args.dist {
            Dist::Gaussian => Distribution::Gaussian { beta: args.beta },
            Dist::Triangle => Distribution::Triangle,
        },
        slots: args.slots,
        watershed: WatershedConfig {
            hi_frac: args.ws_hi,
            lo_frac: args.ws_lo,
            step_frac: args.ws_step,
            criterion,
        },
        fusion: match args.fusion {
            FusionArg::Weighted => Fusion::WeightedSum,
            FusionArg::Rms => Fusion::Rms,
            FusionArg::Geometric => Fusion::Geometric,
            FusionArg::Max => Fusion::MaxPool,
        },
    };
    cfg.validate().map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    let model = TransitionModel::load(&args.transitions)?;
    let proposals = load_proposals(&args.proposals, None)?;
    let refined = apply_od_all(&proposals, &model, &cfg)?;
    write_proposals(&args.out, &sorted(refined))?;
    Ok(())
}

fn run_nms(args: NmsArgs) -> Result<(), Failure> {
    let cfg = NmsConfig::new(args.nms_threshold).map_err(|e| usage("--nms-threshold", e))?;
    let proposals = load_proposals(&args.proposals, None)?;
    let mut detections: DetectionSet = nms_all(&proposals, &cfg);
    detections
        .videos
        .sort_by(|a, b| a.video_id.cmp(&b.video_id));
    write_detections(&args.out, &detections)?;
    Ok(())
}

fn run_fuse(args: FuseArgs) -> Result<(), Failure> {
    let a = load_proposals(&args.a, None)?;
    let b = load_proposals(&args.b, None)?;
    let fused = combine_files(&a, &b, (args.weight_a, args.weight_b))?;
    write_proposals(&args.out, &sorted(fused))?;
    Ok(())
}

fn run_eval_map(args: EvalMapArgs) -> Result<(), Failure> {
    let cfg = EvalConfig {
        alphas: args.alphas,
        ..Default::default()
    };
    cfg.validate().map_err(|e| usage("--alphas", e))?;
    let detections = load_detections(&args.detections, None)?;
    let annotations = load_annotations(&args.annotations, None)?;
    let report = MetricReport::detection(&detections, &annotations, &cfg)?;
    write_report(args.out.as_deref(), &report)
}

fn run_eval_frames(args: EvalFramesArgs) -> Result<(), Failure> {
    if !(args.fps > 0.0 && args.fps.is_finite()) {
        return Err(Failure {
            code: 2,
            message: format!("--fps: must be positive, got {}", args.fps),
        });
    }
    let detections = load_detections(&args.detections, None)?;
    let annotations = load_annotations(&args.annotations, None)?;
    let report = MetricReport {
        frame_accuracy: Some(frame_accuracy_set(&detections, &annotations, args.fps)?),
        ..Default::default()
    };
    write_report(args.out.as_deref(), &report)
}

fn run_stats(args: StatsArgs) -> Result<(), Failure> {
    let lexicon = load_lexicon(&args.lexicon)?;
    let annotations = load_annotations(&args.annotations, Some(&lexicon))?;
    let report = MetricReport {
        order: Some(mss_oce(&annotations, &lexicon)?),
        ..Default::default()
    };
    write_report(args.out.as_deref(), &report)
}

fn run_synth(args: SynthArgs) -> Result<(), Failure> {
    let mut cfg = SynthConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| {
            Failure::from(Error::Io {
                path: path.clone(),
                source,
            })
        })?;
        cfg.apply_lines(&text)
            .map_err(|e| usage(&format!("--config {}", path.display()), e))?;
    }
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    apply!(
        seed,
        n_tasks,
        steps_per_task,
        n_videos,
        drop_prob,
        swap_prob,
        jitter_s,
        confusion_prob,
        proposals_per_segment,
        label_noise_prob
    );
    cfg.validate().map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    generate_corpus(&cfg)?.write_to(&args.out_dir)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Tc(a) => run_tc(a),
        Command::Transitions(a) => run_transitions(a),
        Command::Od(a) => run_od(a),
        Command::Nms(a) => run_nms(a),
        Command::Fuse(a) => run_fuse(a),
        Command::EvalMap(a) => run_eval_map(a),
        Command::EvalFrames(a) => run_eval_frames(a),
        Command::Stats(a) => run_stats(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
