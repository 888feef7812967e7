//! Alternating minimization over per-view labels, the low-rank copy `𝓙`,
//! multipliers `𝓠`, view weights `α` and the penalty `μ`.

pub mod objective;
pub mod updates;

use std::time::Instant;

use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_view_graph, euclidean_distance, spectral_embedding, DistanceMatrix, FeatureMatrix, ViewGraph};
use crate::kmeans::kmeans_best_of;
use crate::labels::LabelMatrix;
use crate::tensor3::Tensor3;

pub use objective::{kmeans_objective, trace_objective, view_label_objective};
pub use updates::{fuse_labels, label_tensor, update_alpha, update_j, update_labels, update_mu, update_q};

const INIT_RESTARTS: usize = 10;
const INIT_ITERS: usize = 100;

/// How many anchors each view gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorCount {
    Count(usize),
    /// Fraction of `N`, rounded and clamped to `[max(C, 2), N]`.
    Ratio(f64),
}

impl AnchorCount {
    pub fn resolve(&self, n: usize, c: usize) -> Result<usize> {
        match *self {
            AnchorCount::Count(t) => {
                if t < c || t > n || t < 2 {
                    return Err(Error::Config(format!(
                        "anchor count {t} must lie in {}..={n}",
                        c.max(2)
                    )));
                }
                Ok(t)
            }
            AnchorCount::Ratio(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::Config(format!("anchor ratio must lie in (0, 1], got {r}")));
                }
                let lo = c.max(2).min(n);
                Ok(((r * n as f64).round() as usize).clamp(lo, n))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Butterworth-filtered anchor-graph similarity.
    Butterworth,
    /// Dense squared Euclidean distances between raw features.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Candidate partitions from features and graph embeddings; the one with
    /// the smallest summed trace objective seeds every view.
    Auto,
    /// Independent feature k-means in every view.
    PerViewFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lambda: f64,
    pub r: f64,
    pub p: f64,
    pub omega: f64,
    pub anchors: AnchorCount,
    pub k_nn: usize,
    pub rho: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub distance: DistanceMode,
    pub init: InitStrategy,
    /// Row sweeps per label update.
    pub sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            r: 3.0,
            p: 0.5,
            omega: 0.01,
            anchors: AnchorCount::Ratio(0.5),
            k_nn: 4,
            rho: 1.1,
            mu0: 1e-4,
            mu_max: 1e10,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
            distance: DistanceMode::Butterworth,
            init: InitStrategy::Auto,
            sweeps: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: String| Err(Error::Config(format!("{what}, got {v}")));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive", self.lambda.to_string());
        }
        if !(self.r > 1.0 && self.r.is_finite()) {
            return bad("r must exceed 1", self.r.to_string());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p must lie in (0, 1]", self.p.to_string());
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("omega must be positive", self.omega.to_string());
        }
        if self.k_nn == 0 {
            return bad("k_nn must be at least 1", "0".into());
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return bad("rho must exceed 1", self.rho.to_string());
        }
        if !(self.mu0 > 0.0) {
            return bad("mu0 must be positive", self.mu0.to_string());
        }
        if !(self.mu_max >= self.mu0 && self.mu_max.is_finite()) {
            return bad("mu_max must be finite and >= mu0", self.mu_max.to_string());
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1", "0".into());
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be >= 0", self.tol.to_string());
        }
        if self.sweeps == 0 {
            return bad("sweeps must be at least 1", "0".into());
        }
        if let AnchorCount::Ratio(r) = self.anchors {
            if !(r > 0.0 && r <= 1.0) {
                return bad("anchor ratio must lie in (0, 1]", r.to_string());
            }
        }
        Ok(())
    }
}

/// Where the starting labels came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSource {
    Features { view: usize },
    Embedding { view: usize },
    JointEmbedding,
    PerView,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub mu: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Timings {
    pub graph_secs: f64,
    pub init_secs: f64,
    pub iterate_secs: f64,
}

/// Everything the iteration loop leaves behind.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub labels: Vec<LabelMatrix>,
    pub j: Tensor3,
    pub q: Tensor3,
    pub alpha: Vec<f64>,
    pub mu: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub labels: LabelMatrix,
    pub state: SolverState,
    pub init: InitSource,
    pub theta: usize,
    pub k_nn: usize,
    pub timings: Timings,
}

impl SolverOutput {
    pub fn iterations(&self) -> usize {
        self.state.history.len()
    }
}

fn anchor_seed(seed: u64, view: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(view as u64 + 1)
}

/// Runs the iteration loop from given starting labels and distances.
pub fn iterate(
    distances: &[DistanceMatrix],
    init: Vec<LabelMatrix>,
    config: &SolverConfig,
) -> Result<SolverState> {
    config.validate()?;
    let v = distances.len();
    if v == 0 || init.len() != v {
        return Err(Error::LengthMismatch {
            left: v,
            right: init.len(),
        });
    }
    for (d, y) in distances.iter().zip(&init) {
        if d.len() != y.n_samples() {
            return Err(Error::LengthMismatch {
                left: d.len(),
                right: y.n_samples(),
            });
        }
    }

    let mut labels = init;
    let mut y = label_tensor(&labels)?;
    let (n, c, _) = y.dims();
    let mut j = y.clone();
    let mut q = Tensor3::zeros(n, c, v)?;
    let mut alpha = vec![1.0 / v as f64; v];
    let mut mu = config.mu0;
    let mut history = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iter {
        let s_tensor = j.add_scaled(&q, -1.0 / mu)?;
        labels = labels
            .par_iter()
            .enumerate()
            .map(|(view, y_v)| {
                let s = s_tensor.slice(view);
                let mut current = y_v.clone();
                for _ in 0..config.sweeps {
                    current = update_labels(&distances[view], s, alpha[view], config.r, mu, &current)?;
                }
                Ok(current)
            })
            .collect::<Result<_>>()?;
        y = label_tensor(&labels)?;
        j = update_j(&y, &q, config.lambda, mu, config.p)?;
        q = update_q(&q, mu, &y, &j)?;
        let traces = labels
            .iter()
            .zip(distances)
            .map(|(y_v, d)| trace_objective(y_v, d, false))
            .collect::<Result<Vec<_>>>()?;
        alpha = update_alpha(&traces, config.r)?;
        mu = update_mu(mu, config.rho, config.mu_max);
        let residual = y.distance_sq(&j)?;
        log::debug!("iter {iteration}: residual {residual:.3e}, mu {mu:.3e}");
        history.push(IterationRecord {
            iteration,
            residual,
            mu,
            alpha: alpha.clone(),
        });
        if residual < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("stopped after {} iterations without reaching tol {}", config.max_iter, config.tol);
    }
    Ok(SolverState {
        labels,
        j,
        q,
        alpha,
        mu,
        history,
        converged,
    })
}

fn summed_trace(candidate: &LabelMatrix, distances: &[DistanceMatrix]) -> Result<f64> {
    distances.iter().map(|d| trace_objective(candidate, d, false)).sum()
}

fn initial_labels(
    views: &[FeatureMatrix],
    graphs: Option<&[ViewGraph]>,
    distances: &[DistanceMatrix],
    c: usize,
    config: &SolverConfig,
) -> Result<(Vec<LabelMatrix>, InitSource)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut feature_runs = Vec::with_capacity(views.len());
    for x in views {
        let km = kmeans_best_of(x.view(), c, INIT_ITERS, INIT_RESTARTS, &mut rng);
        feature_runs.push(LabelMatrix::new(km.labels, c)?);
    }
    if config.init == InitStrategy::PerViewFeatures {
        return Ok((feature_runs, InitSource::PerView));
    }

    let mut candidates: Vec<(LabelMatrix, InitSource)> = feature_runs
        .into_iter()
        .enumerate()
        .map(|(view, y)| (y, InitSource::Features { view }))
        .collect();
    if let Some(graphs) = graphs {
        let embeddings = graphs
            .iter()
            .map(|g| spectral_embedding(&g.anchor_graph, c))
            .collect::<Result<Vec<Array2<f64>>>>()?;
        for (view, e) in embeddings.iter().enumerate() {
            let km = kmeans_best_of(e.view(), c, INIT_ITERS, INIT_RESTARTS, &mut rng);
            candidates.push((LabelMatrix::new(km.labels, c)?, InitSource::Embedding { view }));
        }
        if embeddings.len() > 1 {
            let views: Vec<_> = embeddings.iter().map(|e| e.view()).collect();
            let joint = concatenate(Axis(1), &views).map_err(|e| Error::domain(e.to_string()))?
                / (embeddings.len() as f64).sqrt();
            let km = kmeans_best_of(joint.view(), c, INIT_ITERS, INIT_RESTARTS, &mut rng);
            candidates.push((LabelMatrix::new(km.labels, c)?, InitSource::JointEmbedding));
        }
    }

    let mut best: Option<(f64, usize)> = None;
    for (i, (y, source)) in candidates.iter().enumerate() {
        let f = summed_trace(y, distances)?;
        log::debug!("init candidate {source:?}: objective {f:.6e}");
        if best.is_none_or(|(bf, _)| f < bf) {
            best = Some((f, i));
        }
    }
    let (_, i) = best.expect("at least one candidate");
    let (y, source) = candidates.swap_remove(i);
    Ok((vec![y; views.len()], source))
}

/// Checks view shapes and returns `N`.
fn check_views(views: &[FeatureMatrix], c: usize) -> Result<usize> {
    let first = views.first().ok_or_else(|| Error::Config("at least one view is required".into()))?;
    let n = first.nrows();
    if let Some(bad) = views.iter().find(|x| x.nrows() != n) {
        return Err(Error::LengthMismatch {
            left: n,
            right: bad.nrows(),
        });
    }
    if c == 0 || c > n {
        return Err(Error::Config(format!("cluster count must lie in 1..={n}, got {c}")));
    }
    Ok(n)
}

/// Builds graphs, picks starting labels, iterates and fuses.
pub fn solve(views: &[FeatureMatrix], c: usize, config: &SolverConfig) -> Result<SolverOutput> {
    config.validate()?;
    let n = check_views(views, c)?;
    let theta = config.anchors.resolve(n, c)?;
    let k_nn = config.k_nn.min(theta - 1);
    if k_nn < config.k_nn {
        log::warn!("k_nn {} reduced to {k_nn} to stay below the anchor count {theta}", config.k_nn);
    }

    let start = Instant::now();
    let graphs = match config.distance {
        DistanceMode::Butterworth => Some(
            views
                .par_iter()
                .enumerate()
                .map(|(v, x)| build_view_graph(x, theta, k_nn, config.omega, anchor_seed(config.seed, v)))
                .collect::<Result<Vec<_>>>()?,
        ),
        DistanceMode::Euclidean => None,
    };
    let distances: Vec<DistanceMatrix> = match &graphs {
        Some(gs) => gs.iter().map(|g| g.distance.clone()).collect(),
        None => views.par_iter().map(euclidean_distance).collect(),
    };
    let graph_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (init, source) = initial_labels(views, graphs.as_deref(), &distances, c, config)?;
    let init_secs = start.elapsed().as_secs_f64();
    log::info!("starting labels from {source:?}");

    let start = Instant::now();
    let state = iterate(&distances, init, config)?;
    let iterate_secs = start.elapsed().as_secs_f64();

    let labels = fuse_labels(&state.labels, &state.alpha, config.r)?;
    Ok(SolverOutput {
        labels,
        state,
        init: source,
        theta,
        k_nn,
        timings: Timings {
            graph_secs,
            init_secs,
            iterate_secs,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn two_blobs(seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((40, 2));
        let mut truth = Vec::new();
        for i in 0..40 {
            let c = i / 20;
            x[[i, 0]] = c as f64 * 10.0 + rng.random_range(-0.5..0.5);
            x[[i, 1]] = rng.random_range(-0.5..0.5);
            truth.push(c);
        }
        (FeatureMatrix::new(x).unwrap(), truth)
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.iter().zip(b).all(|(x, y)| {
            a.iter().zip(b).all(|(u, w)| (x == u) == (y == w))
        })
    }

    #[test]
    fn defaults_validate() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SolverConfig::default();
        let cases = [
            SolverConfig { lambda: 0.0, ..base.clone() },
            SolverConfig { r: 1.0, ..base.clone() },
            SolverConfig { p: 0.0, ..base.clone() },
            SolverConfig { p: 1.5, ..base.clone() },
            SolverConfig { omega: -1.0, ..base.clone() },
            SolverConfig { rho: 1.0, ..base.clone() },
            SolverConfig { mu_max: 1e-6, ..base.clone() },
            SolverConfig { max_iter: 0, ..base.clone() },
            SolverConfig { anchors: AnchorCount::Ratio(0.0), ..base.clone() },
            SolverConfig { k_nn: 0, ..base.clone() },
        ];
        for cfg in cases {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn anchor_resolution() {
        assert_eq!(AnchorCount::Ratio(0.5).resolve(100, 3).unwrap(), 50);
        assert_eq!(AnchorCount::Ratio(0.01).resolve(100, 3).unwrap(), 3);
        assert_eq!(AnchorCount::Count(10).resolve(100, 3).unwrap(), 10);
        assert!(AnchorCount::Count(2).resolve(100, 3).is_err());
        assert!(AnchorCount::Count(101).resolve(100, 3).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SolverConfig {
            anchors: AnchorCount::Count(12),
            distance: DistanceMode::Euclidean,
            ..SolverConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<SolverConfig>(&text).unwrap(), cfg);
        let partial: SolverConfig = toml::from_str("lambda = 2.5").unwrap();
        assert_eq!(partial.lambda, 2.5);
        assert_eq!(partial.r, 3.0);
    }

    #[test]
    fn separable_single_view_is_recovered() {
        for distance in [DistanceMode::Butterworth, DistanceMode::Euclidean] {
            let (x, truth) = two_blobs(5);
            let cfg = SolverConfig {
                distance,
                ..SolverConfig::default()
            };
            let out = solve(&[x], 2, &cfg).unwrap();
            assert!(same_partition(out.labels.labels(), &truth), "{distance:?}");
            assert_eq!(out.state.alpha, vec![1.0]);
        }
    }

    #[test]
    fn iterate_stops_on_residual() {
        let (x, truth) = two_blobs(6);
        let d = euclidean_distance(&x);
        let y = LabelMatrix::new(truth, 2).unwrap();
        let cfg = SolverConfig {
            tol: 1e-3,
            ..SolverConfig::default()
        };
        let state = iterate(&[d.clone(), d], vec![y.clone(), y], &cfg).unwrap();
        assert!(state.converged);
        assert!(state.history.last().unwrap().residual < 1e-3);
        assert!(state.history.len() < cfg.max_iter);
        for pair in state.history.windows(2) {
            assert!(pair[1].mu >= pair[0].mu);
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let (x, _) = two_blobs(7);
        let (x2, _) = two_blobs(8);
        let cfg = SolverConfig::default();
        let a = solve(&[x.clone(), x2.clone()], 2, &cfg).unwrap();
        let b = solve(&[x, x2], 2, &cfg).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.state.j, b.state.j);
        assert_eq!(a.iterations(), b.iterations());
    }

    #[test]
    fn mismatched_views_are_rejected() {
        let (x, _) = two_blobs(9);
        let short = FeatureMatrix::new(Array2::zeros((5, 2))).unwrap();
        assert!(solve(&[x.clone(), short], 2, &SolverConfig::default()).is_err());
        assert!(solve(std::slice::from_ref(&x), 0, &SolverConfig::default()).is_err());
        assert!(solve(&[], 2, &SolverConfig::default()).is_err());
    }
}
