use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sfgraph::config::ConfigFile;
use sfgraph::eval::{
    gaussian_similarity, mcfs_select, spectral_clustering, spectral_embedding, ClusterScores,
    KMeansConfig,
};
use sfgraph::lcs::write_partition;
use sfgraph::matrix::{load_csv, load_labels, write_csv, write_labels, LabelColumn};
use sfgraph::pipeline::{angles_csv, AngleHistogram};
use sfgraph::synth::{generate, SynthSpec};
use sfgraph::{
    build_sfg, find_lcs, reduce_matrix, report_render, run_pipeline, AngleRule, Error,
    FeatureMatrix, LabelVector, OmpConfig, PipelineConfig, Result, SparseFeatureGraph,
};

#[derive(Parser)]
#[command(
    name = "sfgraph",
    version,
    about = "Redundant feature removal with sparse feature graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted redundancy.
    Synth(SynthArgs),
    /// Build and filter the sparse feature graph; writes sfg.tsv and angles.csv.
    Sfg(SfgArgs),
    /// Group features into local compressible subgraphs.
    Lcs(LcsArgs),
    /// Keep one representative per subgraph and write the reduced matrix.
    Reduce(LcsArgs),
    /// Spectral clustering of a dataset, scored against labels.
    EvalSc(EvalArgs),
    /// MCFS feature selection, scored by spectral clustering.
    EvalMcfs(McfsArgs),
    /// Full threshold sweep with baseline, reports, and optional MCFS grid.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Numeric CSV, one sample per row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Label file with one integer per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CSV column holding labels: an index, a header name, or `last`.
    #[arg(long)]
    label_column: Option<LabelColumn>,
}

impl DataArgs {
    fn load(&self) -> Result<(FeatureMatrix, Option<LabelVector>)> {
        let input = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("--input is required".into()))?;
        let (matrix, mut labels) = load_csv(input, self.label_column.as_ref())?;
        if let Some(path) = &self.labels {
            labels = Some(load_labels(path)?);
        }
        Ok((matrix, labels))
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 20)]
    base: usize,
    #[arg(long, default_value_t = 0)]
    duplicates: usize,
    #[arg(long, default_value_t = 0)]
    mixtures: usize,
    #[arg(long, default_value_t = 1e-3)]
    mixture_noise: f64,
    #[arg(long, default_value_t = 0)]
    noise: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SfgArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 15.0)]
    max_angle_deg: f64,
    /// Fail representations whose angle is below the threshold instead.
    #[arg(long)]
    invert_angle_filter: bool,
    #[arg(long, default_value_t = 18)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LcsArgs {
    /// Filtered graph written by `sfg`.
    #[arg(long)]
    graph: PathBuf,
    /// Feature matrix, needed by `reduce`.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long = "theta", required = true)]
    thetas: Vec<f64>,
    #[arg(long)]
    drop_singletons: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Cluster count; defaults to the number of distinct labels.
    #[arg(long)]
    k: Option<usize>,
    /// Gaussian kernel width; defaults to the mean pairwise distance.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

impl ClusterArgs {
    fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            seed: self.seed,
            restarts: self.restarts,
            ..KMeansConfig::default()
        }
    }

    fn k(&self, labels: Option<&LabelVector>) -> Result<usize> {
        self.k
            .or(labels.map(LabelVector::distinct))
            .ok_or_else(|| Error::Config("--k or labels are required".into()))
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McfsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    cluster: ClusterArgs,
    /// Number of features to select; repeatable.
    #[arg(long = "m", required = true)]
    m: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Flat `key = value` file using the long flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_angle_deg: Option<f64>,
    #[arg(long = "theta")]
    thetas: Vec<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Selected-feature count for the MCFS grid; repeatable. Enables the grid.
    #[arg(long = "m")]
    m: Vec<usize>,
    /// Run the MCFS grid with the default feature counts.
    #[arg(long)]
    mcfs: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    drop_singletons: bool,
    #[arg(long)]
    invert_angle_filter: bool,
    #[arg(long)]
    require_labels: bool,
}

const CONFIG_KEYS: &[&str] = &[
    "input",
    "labels",
    "label-column",
    "epsilon",
    "max-angle-deg",
    "theta",
    "k",
    "sigma",
    "m",
    "mcfs",
    "seed",
    "restarts",
    "out",
    "drop-singletons",
    "invert-angle-filter",
    "require-labels",
];

fn angle_radians(deg: f64) -> Result<f64> {
    if !(deg > 0.0 && deg <= 90.0) {
        return Err(Error::Config(format!("max angle {deg}° outside (0, 90]")));
    }
    Ok(deg.to_radians())
}

fn angle_rule(invert: bool) -> AngleRule {
    if invert {
        AngleRule::FailBelow
    } else {
        AngleRule::FailAbove
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: PathBuf, text: String) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn synth(args: SynthArgs) -> Result<()> {
    let data = generate(&SynthSpec {
        n: args.n,
        clusters: args.clusters,
        separation: args.separation,
        base_features: args.base,
        duplicate_pairs: args.duplicates,
        mixture_features: args.mixtures,
        mixture_noise: args.mixture_noise,
        noise_features: args.noise,
        seed: args.seed,
    })?;
    create_dir(&args.out)?;
    write_csv(&data.matrix, args.out.join("data.csv"))?;
    write_labels(&data.labels, args.out.join("labels.txt"))?;
    write_text(
        args.out.join("ground_truth.json"),
        serde_json::to_string_pretty(&data.truth)?,
    )
}

fn sfg(args: SfgArgs) -> Result<()> {
    let (matrix, _) = args.data.load()?;
    let features = matrix.normalize_features().matrix;
    let graph = build_sfg(&features, &OmpConfig::new(args.epsilon)?)?;
    let hist = graph.angle_histogram(&features, args.bins)?;
    let filtered = graph.filter_failed(
        &features,
        angle_radians(args.max_angle_deg)?,
        angle_rule(args.invert_angle_filter),
    )?;
    create_dir(&args.out)?;
    let path = args.out.join("sfg.tsv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    filtered
        .write_tsv(BufWriter::new(file))
        .map_err(|e| Error::io(&path, e))?;
    write_text(
        args.out.join("angles.csv"),
        angles_csv(&AngleHistogram {
            bin_edges: hist.bin_edges,
            counts: hist.counts,
            overflow: hist.overflow,
        }),
    )?;
    eprintln!(
        "{} edges, {} failed nodes",
        filtered.edge_count(),
        filtered.failed_nodes().len()
    );
    Ok(())
}

fn read_graph(path: &Path) -> Result<SparseFeatureGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    SparseFeatureGraph::read_tsv(BufReader::new(file))
}

fn lcs(args: LcsArgs, reduce: bool) -> Result<()> {
    let graph = read_graph(&args.graph)?;
    let features = if reduce {
        let (matrix, _) = args.data.load()?;
        Some(matrix)
    } else {
        None
    };
    create_dir(&args.out)?;
    for &theta in &args.thetas {
        let partition = find_lcs(&graph, theta)?;
        let reduced = sfgraph::select_representatives(&partition, &graph, args.drop_singletons);
        match &features {
            Some(matrix) => {
                let out = reduce_matrix(matrix, &reduced)?;
                write_csv(&out, args.out.join(format!("reduced_{theta}.csv")))?;
                write_text(
                    args.out.join(format!("kept_{theta}.txt")),
                    reduced.kept.iter().map(|k| format!("{k}\n")).collect(),
                )?;
            }
            None => {
                let path = args.out.join(format!("lcs_{theta}.txt"));
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_partition(&partition, &reduced, BufWriter::new(file))
                    .map_err(|e| Error::io(&path, e))?;
            }
        }
        println!(
            "theta={theta} subgraphs={} kept={}",
            partition.subgraphs.len(),
            reduced.kept.len()
        );
    }
    Ok(())
}

fn eval_sc(args: EvalArgs) -> Result<()> {
    let (matrix, labels) = args.data.load()?;
    let k = args.cluster.k(labels.as_ref())?;
    let features = matrix.normalize_features().matrix;
    let predicted = spectral_clustering(&features, k, args.cluster.sigma, &args.cluster.kmeans())?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_labels(&predicted, out.join("predicted.txt"))?;
    }
    if let Some(truth) = &labels {
        let s = ClusterScores::compare(&predicted, truth)?;
        println!("{}", serde_json::to_string(&s)?);
    }
    Ok(())
}

fn eval_mcfs(args: McfsArgs) -> Result<()> {
    let (matrix, labels) = args.data.load()?;
    let k = args.cluster.k(labels.as_ref())?;
    let features = matrix.normalize_features().matrix;
    let graph = gaussian_similarity(&features, args.cluster.sigma)?;
    let embedding = spectral_embedding(&graph, k)?;
    let mut rows = Vec::new();
    for &m in &args.m {
        let selection = mcfs_select(&features, &embedding, m, m)?;
        let scores = match &labels {
            Some(truth) => {
                let chosen = features.select_columns(&selection.selected)?;
                let predicted =
                    spectral_clustering(&chosen, k, args.cluster.sigma, &args.cluster.kmeans())?;
                Some(ClusterScores::compare(&predicted, truth)?)
            }
            None => None,
        };
        rows.push(serde_json::json!({
            "m": m,
            "selected": selection.selected,
            "nmi": scores.map(|s| s.nmi),
            "acc": scores.map(|s| s.acc),
        }));
    }
    let text = serde_json::to_string_pretty(&rows)?;
    match &args.out {
        Some(out) => {
            create_dir(out)?;
            write_text(out.join("mcfs.json"), text)
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pipeline(mut args: PipelineArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    file.check_keys(CONFIG_KEYS)?;

    let data = &mut args.data;
    data.input = data.input.take().or(file.get("input")?);
    data.labels = data.labels.take().or(file.get("labels")?);
    data.label_column = data.label_column.take().or(file.get("label-column")?);
    let require_labels = args.require_labels || file.get_flag("require-labels")?.unwrap_or(false);
    if require_labels && data.labels.is_none() && data.label_column.is_none() {
        return Err(Error::Config(
            "labels are required: pass --labels or --label-column".into(),
        ));
    }
    if let Some(path) = &data.labels {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "label file {} not found",
                path.display()
            )));
        }
    }

    let defaults = PipelineConfig::default();
    let thetas = if args.thetas.is_empty() {
        file.get_list("theta")?
    } else {
        args.thetas
    };
    let counts = if args.m.is_empty() {
        file.get_list("m")?
    } else {
        args.m
    };
    let max_angle = match args.max_angle_deg.or(file.get("max-angle-deg")?) {
        Some(deg) => angle_radians(deg)?,
        None => defaults.max_angle,
    };
    let invert = args.invert_angle_filter || file.get_flag("invert-angle-filter")?.unwrap_or(false);
    let config = PipelineConfig {
        epsilon: args
            .epsilon
            .or(file.get("epsilon")?)
            .unwrap_or(defaults.epsilon),
        max_angle,
        angle_rule: angle_rule(invert),
        theta_list: if thetas.is_empty() {
            defaults.theta_list.clone()
        } else {
            thetas
        },
        k_clusters: args.k.or(file.get("k")?),
        run_mcfs: args.mcfs || !counts.is_empty() || file.get_flag("mcfs")?.unwrap_or(false),
        mcfs_counts: if counts.is_empty() {
            defaults.mcfs_counts.clone()
        } else {
            counts
        },
        sigma: args.sigma.or(file.get("sigma")?),
        seed: args.seed.or(file.get("seed")?).unwrap_or(defaults.seed),
        restarts: args
            .restarts
            .or(file.get("restarts")?)
            .unwrap_or(defaults.restarts),
        drop_singletons: args.drop_singletons || file.get_flag("drop-singletons")?.unwrap_or(false),
        require_labels,
        ..defaults
    };
    config.validate()?;
    let out: PathBuf = args
        .out
        .or(file.get("out")?)
        .unwrap_or_else(|| PathBuf::from("sfgraph_out"));

    let (matrix, labels) = data.load()?;
    let report = run_pipeline(&config, &matrix, labels.as_ref())?;
    report_render(&report, &out)?;
    let b = &report.baseline;
    eprintln!(
        "baseline: {} features, nmi={:?} acc={:?}",
        b.retained, b.nmi, b.acc
    );
    for r in &report.sweep {
        match &r.error {
            Some(e) => eprintln!("theta={:?}: {} features, failed: {e}", r.theta, r.retained),
            None => eprintln!(
                "theta={:?}: {} features, nmi={:?} acc={:?}",
                r.theta, r.retained, r.nmi, r.acc
            ),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Sfg(a) => sfg(a),
        Command::Lcs(a) => lcs(a, false),
        Command::Reduce(a) => lcs(a, true),
        Command::EvalSc(a) => eval_sc(a),
        Command::EvalMcfs(a) => eval_mcfs(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
