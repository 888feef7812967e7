//! Batch front end: dataset generation, clustering runs, evaluation and
//! hyperparameter sweeps.
//!
//! Every solver flag can also be set through an environment variable named
//! `CFMVC_<FLAG>` (for example `CFMVC_LAMBDA`, `CFMVC_MAX_ITER`); flags win.

pub mod report;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cfmvc::data::{self, MultiViewDataset};
use cfmvc::metrics;
use cfmvc::solver::{self, AnchorCount, DistanceMode, InitStrategy, SolverConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use report::Metrics;

/// Exit status of a failed command.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    Usage(String),
    /// The library refused or failed; exit code 1.
    Run(cfmvc::Error),
    /// Anything else at run time (I/O outside the library, partial sweeps); exit code 1.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{}: {e}", e.kind_name()),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<cfmvc::Error> for CliError {
    fn from(e: cfmvc::Error) -> Self {
        CliError::Run(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cfmvc", version, about = "Centroid-free multi-view clustering")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CFMVC_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset directory.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Cluster a dataset directory and write a report plus predicted labels.
    Cluster(ClusterArgs),
    /// Compare two label files and print ACC, NMI and purity.
    Eval { pred: PathBuf, truth: PathBuf },
    /// Run the solver over a hyperparameter grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum GenerateKind {
    TwoMoon(ToyArgs),
    ThreeRing(ToyArgs),
    Blobs {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        c: usize,
        #[arg(long, default_value_t = 2)]
        dims: usize,
        /// Distance between adjacent blob centers, in units of the blob standard deviation.
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        /// Size ratio of the largest to the smallest blob.
        #[arg(long, default_value_t = 1.0)]
        imbalance: f64,
        #[arg(long, default_value_t = 2)]
        views: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistanceArg {
    Butterworth,
    Euclidean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Auto,
    PerViewFeatures,
}

/// `0.5` (has a decimal point) is a ratio of N, `100` is an absolute count.
pub fn parse_anchors(s: &str) -> Result<AnchorCount, String> {
    if s.contains('.') || s.contains('e') {
        let r: f64 = s.parse().map_err(|_| format!("bad anchor ratio {s:?}"))?;
        if !(r > 0.0 && r <= 1.0) {
            return Err(format!("anchor ratio must lie in (0, 1], got {r}"));
        }
        Ok(AnchorCount::Ratio(r))
    } else {
        s.parse().map(AnchorCount::Count).map_err(|_| format!("bad anchor count {s:?}"))
    }
}

/// Solver flags; unset flags keep the library defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    #[arg(long, env = "CFMVC_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "CFMVC_R")]
    pub r: Option<f64>,
    #[arg(long, env = "CFMVC_P")]
    pub p: Option<f64>,
    #[arg(long, env = "CFMVC_OMEGA")]
    pub omega: Option<f64>,
    /// Anchor ratio (e.g. 0.5) or absolute count (e.g. 100).
    #[arg(long, env = "CFMVC_ANCHORS", value_parser = parse_anchors)]
    pub anchors: Option<AnchorCount>,
    #[arg(long, env = "CFMVC_KNN")]
    pub knn: Option<usize>,
    #[arg(long, env = "CFMVC_RHO")]
    pub rho: Option<f64>,
    #[arg(long, env = "CFMVC_MU0")]
    pub mu0: Option<f64>,
    #[arg(long, env = "CFMVC_MU_MAX")]
    pub mu_max: Option<f64>,
    #[arg(long, env = "CFMVC_MAX_ITER")]
    pub max_iter: Option<usize>,
    #[arg(long, env = "CFMVC_TOL")]
    pub tol: Option<f64>,
    #[arg(long, env = "CFMVC_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "CFMVC_DISTANCE", value_enum)]
    pub distance: Option<DistanceArg>,
    #[arg(long, env = "CFMVC_INIT", value_enum)]
    pub init: Option<InitArg>,
    /// Row sweeps per label update.
    #[arg(long, env = "CFMVC_SWEEPS")]
    pub sweeps: Option<usize>,
}

impl SolverArgs {
    pub fn to_config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            r: self.r.unwrap_or(d.r),
            p: self.p.unwrap_or(d.p),
            omega: self.omega.unwrap_or(d.omega),
            anchors: self.anchors.unwrap_or(d.anchors),
            k_nn: self.knn.unwrap_or(d.k_nn),
            rho: self.rho.unwrap_or(d.rho),
            mu0: self.mu0.unwrap_or(d.mu0),
            mu_max: self.mu_max.unwrap_or(d.mu_max),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            tol: self.tol.unwrap_or(d.tol),
            seed: self.seed.unwrap_or(d.seed),
            distance: match self.distance {
                Some(DistanceArg::Euclidean) => DistanceMode::Euclidean,
                Some(DistanceArg::Butterworth) => DistanceMode::Butterworth,
                None => d.distance,
            },
            init: match self.init {
                Some(InitArg::PerViewFeatures) => InitStrategy::PerViewFeatures,
                Some(InitArg::Auto) => InitStrategy::Auto,
                None => d.init,
            },
            sweeps: self.sweeps.unwrap_or(d.sweeps),
        }
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    pub dataset: PathBuf,
    /// Report path (default: `<dataset>/report.jsonl`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Predicted labels path (default: `<dataset>/predicted.csv`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub dataset: PathBuf,
    /// Output directory for `summary.csv` and per-point reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma list (`0.1,1,10`) or inclusive range `start:stop:step`.
    #[arg(long)]
    pub grid_lambda: Option<String>,
    #[arg(long)]
    pub grid_r: Option<String>,
    #[arg(long)]
    pub grid_p: Option<String>,
    #[arg(long)]
    pub grid_omega: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

/// Parses `a,b,c` or the inclusive range `start:stop:step`.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let usage = |m: String| CliError::Usage(format!("grid {spec:?}: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("{s:?} is not a number")));
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(usage("ranges are start:stop:step".into()));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(usage("need step > 0 and stop >= start".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(num)
            .collect::<CliResult<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(usage("no values".into()));
    }
    Ok(values)
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match cli.command {
        Command::Generate { kind } => cmd_generate(kind),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Eval { pred, truth } => cmd_eval(&pred, &truth),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

pub fn cmd_generate(kind: GenerateKind) -> CliResult<()> {
    let (ds, out) = match kind {
        GenerateKind::TwoMoon(a) => (data::gen_two_moon(a.n, a.noise, a.seed)?, a.out),
        GenerateKind::ThreeRing(a) => (data::gen_three_ring(a.n, a.noise, a.seed)?, a.out),
        GenerateKind::Blobs {
            n,
            c,
            dims,
            separation,
            imbalance,
            views,
            seed,
            out,
        } => (data::gen_blobs(n, c, dims, separation, imbalance, views, seed)?, out),
    };
    data::save_dataset(&ds, &out)?;
    println!(
        "wrote {} samples, {} views, {} clusters to {}",
        ds.n_samples(),
        ds.n_views(),
        ds.n_clusters,
        out.display()
    );
    Ok(())
}

fn score(pred: &[usize], truth: &[usize]) -> CliResult<Metrics> {
    Ok(Metrics {
        acc: metrics::accuracy(pred, truth)?,
        nmi: metrics::nmi(pred, truth)?,
        purity: metrics::purity(pred, truth)?,
    })
}

struct RunOutcome {
    report: Vec<report::Record>,
    labels: Vec<usize>,
    metrics: Option<Metrics>,
    iterations: usize,
    converged: bool,
    final_residual: f64,
}

fn run_solver(ds: &MultiViewDataset, name: &str, config: &SolverConfig) -> CliResult<RunOutcome> {
    let out = solver::solve(&ds.views, ds.n_clusters, config)?;
    let labels = out.labels.labels().to_vec();
    let metrics = ds.truth.as_ref().map(|t| score(&labels, t)).transpose()?;
    Ok(RunOutcome {
        report: report::records(name, ds.n_views(), config, &out, metrics.clone()),
        iterations: out.iterations(),
        converged: out.state.converged,
        final_residual: out.state.history.last().map_or(f64::NAN, |h| h.residual),
        labels,
        metrics,
    })
}

fn write_report(path: &Path, recs: &[report::Record]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
    report::write_records(std::io::BufWriter::new(file), recs)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_cluster(args: ClusterArgs) -> CliResult<()> {
    let config = args.solver.to_config();
    config.validate()?;
    let ds = data::load_dataset(&args.dataset)?;
    let name = args.dataset.display().to_string();
    let outcome = run_solver(&ds, &name, &config)?;
    let report_path = args.report.unwrap_or_else(|| args.dataset.join("report.jsonl"));
    let labels_path = args.labels.unwrap_or_else(|| args.dataset.join("predicted.csv"));
    write_report(&report_path, &outcome.report)?;
    data::write_labels(&labels_path, &outcome.labels)?;

    let state = if outcome.converged { "converged" } else { "stopped" };
    println!(
        "{state} after {} iterations (residual {:.3e})",
        outcome.iterations, outcome.final_residual
    );
    if let Some(m) = outcome.metrics {
        println!("ACC {:.4}  NMI {:.4}  Purity {:.4}", m.acc, m.nmi, m.purity);
    }
    Ok(())
}

pub fn cmd_eval(pred: &Path, truth: &Path) -> CliResult<()> {
    let p = data::read_labels(pred, None)?;
    let t = data::read_labels(truth, None)?;
    let m = score(&p, &t)?;
    println!("ACC {:.6}", m.acc);
    println!("NMI {:.6}", m.nmi);
    println!("Purity {:.6}", m.purity);
    Ok(())
}

/// One row of `summary.csv`.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub lambda: f64,
    pub r: f64,
    pub p: f64,
    pub omega: f64,
    pub result: Result<(usize, bool, f64, Option<Metrics>), String>,
}

pub const SUMMARY_HEADER: &str = "point,lambda,r,p,omega,status,iterations,converged,final_residual,acc,nmi,purity,error";

pub fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let base = args.solver.to_config();
    let grid = |spec: &Option<String>, default: f64| spec.as_deref().map_or(Ok(vec![default]), parse_grid);
    if [&args.grid_lambda, &args.grid_r, &args.grid_p, &args.grid_omega]
        .iter()
        .all(|g| g.is_none())
    {
        return Err(CliError::Usage("give at least one of --grid-lambda/--grid-r/--grid-p/--grid-omega".into()));
    }
    let lambdas = grid(&args.grid_lambda, base.lambda)?;
    let rs = grid(&args.grid_r, base.r)?;
    let ps = grid(&args.grid_p, base.p)?;
    let omegas = grid(&args.grid_omega, base.omega)?;

    let mut points = Vec::new();
    for &lambda in &lambdas {
        for &r in &rs {
            for &p in &ps {
                for &omega in &omegas {
                    points.push((lambda, r, p, omega));
                }
            }
        }
    }
    points.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
    });

    let ds = data::load_dataset(&args.dataset)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::Other(format!("cannot create {}: {e}", args.out.display())))?;
    let name = args.dataset.display().to_string();

    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(lambda, r, p, omega))| {
            let config = SolverConfig {
                lambda,
                r,
                p,
                omega,
                ..base.clone()
            };
            let result = config
                .validate()
                .map_err(CliError::from)
                .and_then(|_| run_solver(&ds, &name, &config))
                .and_then(|o| {
                    write_report(&args.out.join(format!("point_{i:03}.jsonl")), &o.report)?;
                    Ok((o.iterations, o.converged, o.final_residual, o.metrics))
                })
                .map_err(|e| e.to_string());
            if let Err(e) = &result {
                log::error!("grid point {i} failed: {e}");
            }
            SweepRow {
                lambda,
                r,
                p,
                omega,
                result,
            }
        })
        .collect();

    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    for (i, row) in rows.iter().enumerate() {
        let head = format!("{i},{},{},{},{}", row.lambda, row.r, row.p, row.omega);
        let line = match &row.result {
            Ok((iters, conv, res, m)) => {
                let (a, n, pu) = m
                    .as_ref()
                    .map_or((String::new(), String::new(), String::new()), |m| {
                        (m.acc.to_string(), m.nmi.to_string(), m.purity.to_string())
                    });
                format!("{head},ok,{iters},{conv},{res:e},{a},{n},{pu},")
            }
            Err(e) => format!("{head},failed,,,,,,,\"{}\"", e.replace('"', "'")),
        };
        csv.push_str(&line);
        csv.push('\n');
    }
    let summary = args.out.join("summary.csv");
    fs::write(&summary, csv).map_err(|e| CliError::Other(format!("cannot write {}: {e}", summary.display())))?;

    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    println!("{} grid points, {failed} failed; summary in {}", rows.len(), summary.display());
    if failed > 0 {
        return Err(CliError::Other(format!("{failed} of {} grid points failed", rows.len())));
    }
    Ok(())
}
