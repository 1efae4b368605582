use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use facetseg::datagen::{self, shapes, GeneratorConfig, SplitCounts};
use facetseg::eval::{run_experiment, ExperimentSpec, Variant};
use facetseg::matchlift::{
    estimate_m, harden, read_matrix, solve_matchlift, write_matrix, MatrixKind, PairKind, PairMatrix,
};
use facetseg::patching::{patch_statistics, PatchSidecar};
use facetseg::pipeline::{patch_cloud, segment, PipelineConfig};
use facetseg::predictor::{predict_matrix, train, MlpModel, PairPredictor, PatchedCloud};
use facetseg::rgs::{rgs_segment, RgsParams};
use facetseg::rounding::{clusters_to_points, round_clusters};
use facetseg::{ply, AnalyticPredictor, Error};

#[derive(Parser)]
#[command(name = "facetseg", version, about = "Face segmentation of 3D point clouds")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Pipeline configuration JSON; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled polyhedra dataset.
    Gen(GenArgs),
    /// Region-growing baseline segmentation.
    Rgs(RgsArgs),
    /// Train the pair predictor.
    Train(TrainArgs),
    /// Patch a cloud and write its pairwise probability matrix.
    Predict(PredictArgs),
    /// Denoise a pair matrix with the convex relaxation.
    Lift(LiftArgs),
    /// Cluster patches from a matrix and label the points.
    Round(RoundArgs),
    /// Run the full pipeline on one cloud.
    Segment(SegmentArgs),
    /// Evaluate pipeline variants over a directory of labeled clouds.
    Eval(EvalArgs),
    /// Color a labeled cloud by cluster.
    Export(ExportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SplitCounts::REFERENCE.train)]
    train: usize,
    #[arg(long, default_value_t = SplitCounts::REFERENCE.val)]
    val: usize,
    #[arg(long, default_value_t = SplitCounts::REFERENCE.test)]
    test: usize,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    max_points: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Probability that a cloud gets rounded edges.
    #[arg(long)]
    rounding_prob: Option<f64>,
    /// Comma-separated built-in shapes for train and val (default: the built-in training set).
    #[arg(long, value_delimiter = ',')]
    train_shapes: Vec<String>,
    /// Comma-separated built-in shapes for test (default: the built-in test set).
    #[arg(long, value_delimiter = ',')]
    test_shapes: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RgsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 3.0)]
    alpha_deg: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    min_cluster: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory with `train/` and optionally `val/`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write per-epoch metrics as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct PredictorArgs {
    /// Trained model file.
    #[arg(long, conflicts_with = "analytic")]
    model: Option<PathBuf>,
    /// Use the closed-form normal/coplanarity predictor instead of a model.
    #[arg(long)]
    analytic: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    predictor: PredictorArgs,
    #[arg(long)]
    input: PathBuf,
    /// Matrix output (`.csv` for text, anything else binary).
    #[arg(long)]
    output: PathBuf,
    /// Patch sidecar output, needed by `round`.
    #[arg(long)]
    patches: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    estimate_m: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Threshold the input before solving.
    #[arg(long, conflicts_with = "soft")]
    hard: bool,
    /// Solve on the probabilities (default).
    #[arg(long)]
    soft: bool,
}

#[derive(Args)]
struct RoundArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    patches: PathBuf,
    /// Cloud whose points the patches index.
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    predictor: PredictorArgs,
    #[arg(long)]
    input: PathBuf,
    /// Directory for the labeled cloud, matrices, patches and report.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    estimate_m: bool,
    #[arg(long)]
    hard: bool,
    /// Round the (thresholded) input directly.
    #[arg(long)]
    skip_lift: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    predictor: PredictorArgs,
    /// Directory of labeled `.ply` clouds.
    #[arg(long)]
    data: PathBuf,
    /// Results JSON.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.032])]
    noise: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

/// A failure with its exit code: 1 for pipeline errors, 2 for usage and I/O.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: if e.is_io() { 2 } else { 1 }, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn staged(stage: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let f = Failure::from(e);
        Failure { message: format!("{stage}: {}", f.message), ..f }
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(Failure::from),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_predictor(args: &PredictorArgs) -> Result<Box<dyn PairPredictor>, Failure> {
    match (&args.model, args.analytic) {
        (Some(path), _) => Ok(Box::new(MlpModel::load(path)?)),
        (None, true) => Ok(Box::new(AnalyticPredictor::default())),
        (None, false) => Err(usage("either --model <PATH> or --analytic is required")),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn specs(names: &[String], default: Vec<datagen::PolyhedronSpec>) -> Result<Vec<datagen::PolyhedronSpec>, Failure> {
    if names.is_empty() {
        return Ok(default);
    }
    names.iter().map(|n| shapes::builtin(n).ok_or_else(|| usage(format!("unknown shape `{n}`")))).collect()
}

fn cmd_gen(args: &GenArgs) -> CmdResult {
    let mut config = GeneratorConfig::default();
    if let Some(v) = args.min_points {
        config.num_points_range[0] = v;
    }
    if let Some(v) = args.max_points {
        config.num_points_range[1] = v;
    }
    if let Some(v) = args.noise {
        config.noise_sigma = v;
    }
    if let Some(v) = args.rounding_prob {
        config.rounding_apply_prob = v;
    }
    if let Some(v) = args.seed {
        config.rng_seed = v;
    }
    let train_specs = specs(&args.train_shapes, shapes::train_specs())?;
    let test_specs = specs(&args.test_shapes, shapes::test_specs())?;
    let counts = SplitCounts { train: args.train, val: args.val, test: args.test };
    let ds = datagen::generate_dataset(&train_specs, &test_specs, &config, counts)?;
    datagen::write_dataset(&args.out, &ds, &config)?;
    eprintln!("wrote {} clouds to {}", ds.manifest.len(), args.out.display());
    Ok(())
}

fn cmd_rgs(args: &RgsArgs) -> CmdResult {
    let cloud = facetseg::geometry::normalize(&ply::read_cloud(&args.input)?)?;
    let params = RgsParams { min_cluster_size: args.min_cluster, ..RgsParams::from_degrees(args.k, args.alpha_deg, args.gamma) };
    let c = rgs_segment(&cloud, &params)?;
    ply::write_clustering(&args.output, &cloud.points, &c)?;
    eprintln!("{} clusters, {} outliers", c.num_clusters, c.num_outliers());
    Ok(())
}

fn patched_split(dir: &Path, config: &PipelineConfig) -> Result<Vec<PatchedCloud>, Failure> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let clouds = datagen::load_split(dir)?;
    clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (_, patches) = patch_cloud(c, config, i as u64)?;
            Ok(PatchedCloud::from_patches(c.name.clone(), &patches)?)
        })
        .collect()
}

fn cmd_train(args: &TrainArgs, mut config: PipelineConfig) -> CmdResult {
    if let Some(v) = args.epochs {
        config.train.epochs = v;
    }
    if let Some(v) = args.lr {
        config.train.lr = v;
    }
    if let Some(v) = args.seed {
        config.train.rng_seed = v;
        config.seed = v;
    }
    config.validate()?;
    let train_dir = args.data.join("train");
    if !train_dir.is_dir() {
        return Err(usage(format!("{}: no such directory", train_dir.display())));
    }
    let train_set = patched_split(&train_dir, &config)?;
    let val_set = patched_split(&args.data.join("val"), &config)?;
    let model = MlpModel::new(config.model, &mut rand_seeded(config.train.rng_seed));
    let outcome = train(model, &train_set, &val_set, &config.train).map_err(staged("train"))?;
    for m in &outcome.history {
        eprintln!(
            "epoch {:>3}  loss {:.5}  train acc {:.4}  val acc {}",
            m.epoch,
            m.mean_loss,
            m.train_accuracy,
            m.val_accuracy.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    outcome.model.save(&args.output)?;
    if let Some(h) = &args.history {
        write_json(h, &json!({ "best_epoch": outcome.best_epoch, "history": outcome.history, "config": config }))?;
    }
    eprintln!("kept epoch {}", outcome.best_epoch);
    Ok(())
}

fn rand_seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn cmd_predict(args: &PredictArgs, mut config: PipelineConfig) -> CmdResult {
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    let predictor = load_predictor(&args.predictor)?;
    let cloud = ply::read_cloud(&args.input)?;
    let (normalized, patches) = patch_cloud(&cloud, &config, 0).map_err(staged("patching"))?;
    let features: Vec<_> = patches.iter().map(patch_statistics).collect();
    let centroids: Vec<_> = patches.iter().map(|p| p.centroid).collect();
    let q = predict_matrix(predictor.as_ref(), &features, &centroids);
    write_matrix(&args.output, &q.to_mat(), MatrixKind::Soft)?;
    if let Some(p) = &args.patches {
        PatchSidecar { num_points: normalized.len(), knn_k: config.knn_k(normalized.len()), l_b: config.l_b, patches }
            .write(p)?;
    }
    eprintln!("{} patches", q.n());
    Ok(())
}

fn read_pair_matrix(path: &Path) -> Result<PairMatrix, Failure> {
    let (m, kind) = read_matrix(path)?;
    let kind = match kind {
        MatrixKind::Hard => PairKind::Hard,
        _ => PairKind::Soft,
    };
    PairMatrix::from_mat(&m, kind).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_lift(args: &LiftArgs, mut config: PipelineConfig) -> CmdResult {
    if let Some(v) = args.tol {
        config.solver.tol = v;
    }
    if let Some(v) = args.max_iter {
        config.solver.max_iter = v;
    }
    config.validate()?;
    let mut x = read_pair_matrix(&args.input)?;
    if args.hard {
        x = harden(&x, config.threshold);
    }
    let m = if args.estimate_m { estimate_m(&x) } else { args.m.unwrap_or(config.m) };
    let solution = match solve_matchlift(&x, m, &config.solver) {
        Ok(s) => s,
        Err(Error::NotConverged(s)) => {
            eprintln!("warning: solver stopped at max_iter before reaching tol");
            *s
        }
        Err(e) => return Err(staged("lift")(e)),
    };
    write_matrix(&args.output, &solution.x, MatrixKind::Lifted)?;
    println!("{}", serde_json::to_string(&solution).map_err(Error::from)?);
    Ok(())
}

fn cmd_round(args: &RoundArgs, config: PipelineConfig) -> CmdResult {
    let (x, _) = read_matrix(&args.matrix)?;
    let sidecar = PatchSidecar::read(&args.patches)?;
    let cloud = ply::read_cloud(&args.cloud)?;
    if sidecar.num_points != cloud.len() {
        return Err(Failure::from(Error::IndexMismatch(format!(
            "sidecar describes {} points, cloud has {}",
            sidecar.num_points,
            cloud.len()
        ))));
    }
    let m = args.m.unwrap_or(config.m);
    let clusters = round_clusters(&x, m).map_err(staged("rounding"))?;
    let points = clusters_to_points(&clusters, &sidecar.patches, cloud.len()).map_err(staged("rounding"))?;
    ply::write_clustering(&args.output, &cloud.points, &points)?;
    eprintln!("{} clusters", points.num_clusters);
    Ok(())
}

fn cmd_segment(args: &SegmentArgs, mut config: PipelineConfig) -> CmdResult {
    if let Some(v) = args.m {
        config.m = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.estimate_m |= args.estimate_m;
    config.hard_input |= args.hard;
    config.skip_lift |= args.skip_lift;
    config.validate()?;
    let predictor = load_predictor(&args.predictor)?;
    let cloud = ply::read_cloud(&args.input)?;
    let seg = segment(&cloud, predictor.as_ref(), &config).map_err(staged("segment"))?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    ply::write_clustering(dir.join("labels.ply"), &seg.normalized.points, &seg.points)?;
    write_matrix(dir.join("soft.bin"), &seg.result.soft.to_mat(), MatrixKind::Soft)?;
    if let Some(l) = &seg.result.lifted {
        write_matrix(dir.join("lifted.bin"), &l.x, MatrixKind::Lifted)?;
    }
    PatchSidecar {
        num_points: seg.normalized.len(),
        knn_k: config.knn_k(seg.normalized.len()),
        l_b: config.l_b,
        patches: seg.patches.clone(),
    }
    .write(dir.join("patches.json"))?;
    let report = json!({
        "input": args.input,
        "num_points": seg.normalized.len(),
        "num_patches": seg.patches.len(),
        "m_used": seg.result.m_used,
        "num_clusters": seg.points.num_clusters,
        "solver": seg.result.lifted,
        "timings": seg.timings,
        "config": config,
    });
    write_json(&dir.join("report.json"), &report)?;
    eprintln!("{} patches, {} clusters", seg.patches.len(), seg.points.num_clusters);
    Ok(())
}

fn cmd_eval(args: &EvalArgs, mut config: PipelineConfig) -> CmdResult {
    if let Some(v) = args.seed {
        config.seed = v;
    }
    let predictor = load_predictor(&args.predictor)?;
    let clouds = datagen::load_split(&args.data)?;
    let spec = ExperimentSpec {
        noise_levels: args.noise.clone(),
        variants: Variant::TABLE.to_vec(),
        config,
        noise_seed: args.seed.unwrap_or(0),
    };
    let results = run_experiment(&clouds, predictor.as_ref(), &spec).map_err(staged("eval"))?;
    write_json(&args.output, &results)?;
    print!("{}", results.render_table());
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| usage(format!("--workers: {e}")))?;
    }
    let config = load_config(cli)?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Rgs(a) => cmd_rgs(a),
        Command::Train(a) => cmd_train(a, config),
        Command::Predict(a) => cmd_predict(a, config),
        Command::Lift(a) => cmd_lift(a, config),
        Command::Round(a) => cmd_round(a, config),
        Command::Segment(a) => cmd_segment(a, config),
        Command::Eval(a) => cmd_eval(a, config),
        Command::Export(a) => Ok(ply::export_colored(&a.input, &a.output)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
