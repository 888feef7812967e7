//! Per-view anchor graphs and the filtered distance matrices built from them.
//!
//! Pipeline for one view: anchors by lite k-means, a k-sparse row-stochastic
//! sample-to-anchor graph `B`, the doubly-stochastic similarity
//! `W = B Δ⁻¹ Bᵀ` (`Δ` holds the anchor column masses), and finally the
//! Butterworth-filtered distance `d_ij = sqrt(1 / (1 + (w_ij/Ω)⁴))`.
//!
//! `W` is sparse: two samples are similar only if they share an anchor. Every
//! pair with `w_ij = 0` maps to distance exactly 1, so a [`DistanceMatrix`]
//! from the Butterworth filter stores that background value plus the entries
//! that differ from it. Dense storage is used for Euclidean distances.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kmeans::{lite_kmeans, sq_dist};

/// Lloyd iterations used for anchor selection.
pub const ANCHOR_KMEANS_ITERS: usize = 10;

const ROW_SUM_TOL: f64 = 1e-9;

/// Samples of one view, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::domain("feature matrix needs at least one row and one column"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("feature matrix contains NaN or infinite values"));
        }
        Ok(Self(values))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Compressed sparse rows with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
struct Csr {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|p| vals[p])
    }

    fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows(), self.ncols));
        for i in 0..self.nrows() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[i, c]] = v;
            }
        }
        out
    }
}

/// Nonnegative, row-stochastic `N × θ` sample-to-anchor affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGraph {
    csr: Csr,
    degenerate_rows: usize,
}

impl AnchorGraph {
    /// Wraps a dense affinity matrix, validating nonnegativity and unit row sums.
    pub fn from_dense(b: ArrayView2<f64>) -> Result<Self> {
        let mut rows = Vec::with_capacity(b.nrows());
        for (i, row) in b.outer_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::domain(format!("anchor graph row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::domain(format!("anchor graph row {i} sums to {sum}, not 1")));
            }
            rows.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect(),
            );
        }
        Ok(Self {
            csr: Csr::from_rows(b.ncols(), rows),
            degenerate_rows: 0,
        })
    }

    pub fn nrows(&self) -> usize {
        self.csr.nrows()
    }

    pub fn n_anchors(&self) -> usize {
        self.csr.ncols
    }

    /// Anchor indices (ascending) and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.csr.row(i)
    }

    /// Rows whose nearest-anchor distances were all tied and got uniform weights.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_anchors()];
        for (&c, &v) in self.csr.cols.iter().zip(&self.csr.vals) {
            sums[c] += v;
        }
        sums
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.csr.to_dense()
    }
}

/// Symmetric doubly-stochastic `N × N` similarity, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    csr: Csr,
    dropped_anchors: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.csr.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j).unwrap_or(0.0)
    }

    /// Column indices (ascending) and values of the stored entries of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.csr.row(i)
    }

    pub fn nnz(&self) -> usize {
        self.csr.cols.len()
    }

    /// Anchors removed because no sample put weight on them.
    pub fn dropped_anchors(&self) -> &[usize] {
        &self.dropped_anchors
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.csr.to_dense()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DistanceStorage {
    Dense(Array2<f64>),
    /// Off-diagonal entries equal `background` except the listed ones.
    Filtered { background: f64, exceptions: Csr },
}

/// Symmetric `N × N` pairwise distances with an exactly-zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    storage: DistanceStorage,
}

impl DistanceMatrix {
    /// Wraps a dense matrix. It must be square, symmetric and nonnegative; the
    /// diagonal is zeroed.
    pub fn from_dense(mut d: Array2<f64>) -> Result<Self> {
        let n = d.nrows();
        if n == 0 || d.ncols() != n {
            return Err(Error::domain("distance matrix must be square and nonempty"));
        }
        for i in 0..n {
            d[[i, i]] = 0.0;
            for j in 0..i {
                let (a, b) = (d[[i, j]], d[[j, i]]);
                if !(a >= 0.0) || !a.is_finite() || a != b {
                    return Err(Error::domain(format!(
                        "distance matrix entry ({i},{j}) is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            storage: DistanceStorage::Dense(d),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.storage {
            DistanceStorage::Dense(d) => d[[i, j]],
            DistanceStorage::Filtered {
                background,
                exceptions,
            } => exceptions.get(i, j).unwrap_or(*background),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.storage {
            DistanceStorage::Dense(d) => d.clone(),
            DistanceStorage::Filtered {
                background,
                exceptions,
            } => {
                let mut d = Array2::from_elem((self.n, self.n), *background);
                for i in 0..self.n {
                    let (cols, vals) = exceptions.row(i);
                    for (&c, &v) in cols.iter().zip(vals) {
                        d[[i, c]] = v;
                    }
                    d[[i, i]] = 0.0;
                }
                d
            }
        }
    }

    /// Writes `Σ_{i ≠ k, label(i) = c} d_ki` into `out[c]` for every cluster `c`.
    ///
    /// `counts[c]` must be the number of samples currently labelled `c`,
    /// including sample `k` itself.
    pub fn cluster_sums(&self, k: usize, labels: &[usize], counts: &[usize], out: &mut [f64]) {
        match &self.storage {
            DistanceStorage::Dense(d) => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for (i, (&dist, &l)) in d.row(k).iter().zip(labels).enumerate() {
                    if i != k {
                        out[l] += dist;
                    }
                }
            }
            DistanceStorage::Filtered {
                background,
                exceptions,
            } => {
                for (c, v) in out.iter_mut().enumerate() {
                    let others = counts[c] - usize::from(labels[k] == c);
                    *v = background * others as f64;
                }
                let (cols, vals) = exceptions.row(k);
                for (&i, &dist) in cols.iter().zip(vals) {
                    if i != k {
                        out[labels[i]] += dist - background;
                    }
                }
            }
        }
    }

    /// `Σ_{i,j: label(i) = label(j) = c} d_ij` for every cluster `c`.
    pub fn within_cluster_sums(&self, labels: &[usize], n_clusters: usize) -> Vec<f64> {
        let mut sums = vec![0.0; n_clusters];
        match &self.storage {
            DistanceStorage::Dense(d) => {
                for (i, row) in d.outer_iter().enumerate() {
                    let li = labels[i];
                    for (j, &dist) in row.iter().enumerate() {
                        if labels[j] == li && i != j {
                            sums[li] += dist;
                        }
                    }
                }
            }
            DistanceStorage::Filtered {
                background,
                exceptions,
            } => {
                let mut counts = vec![0usize; n_clusters];
                for &l in labels {
                    counts[l] += 1;
                }
                for (c, s) in sums.iter_mut().enumerate() {
                    let m = counts[c] as f64;
                    *s = background * m * (m - 1.0);
                }
                for i in 0..self.n {
                    let (cols, vals) = exceptions.row(i);
                    for (&j, &dist) in cols.iter().zip(vals) {
                        if j != i && labels[j] == labels[i] {
                            sums[labels[i]] += dist - background;
                        }
                    }
                }
            }
        }
        sums
    }
}

/// Picks `theta` anchors by lite k-means; deterministic for a given seed.
pub fn select_anchors(x: &FeatureMatrix, theta: usize, seed: u64) -> Result<FeatureMatrix> {
    if theta == 0 || theta > x.nrows() {
        return Err(Error::domain(format!(
            "anchor count must lie in 1..={}, got {theta}",
            x.nrows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = lite_kmeans(x.view(), theta, ANCHOR_KMEANS_ITERS, &mut rng);
    FeatureMatrix::new(km.centers)
}

/// k-sparse simplex weights from squared distances sorted ascending
/// (`k + 1` of them). Returns `None` when all are tied.
fn simplex_weights(sorted_sq: &[f64], k: usize) -> Option<Vec<f64>> {
    let next = sorted_sq[k];
    let head: f64 = sorted_sq[..k].iter().sum();
    let denom = k as f64 * next - head;
    if !(denom > 0.0) {
        return None;
    }
    Some(sorted_sq[..k].iter().map(|&d| (next - d) / denom).collect())
}

/// Connects every sample to its `k` nearest anchors with the closed-form
/// weights `b_ij = (δ_{k+1} − δ_j) / (k·δ_{k+1} − Σ_{j' ≤ k} δ_{j'})`.
///
/// Distance ties go to the lower anchor index. A row whose `k + 1` nearest
/// distances are all equal gets uniform `1/k` weights and is counted in
/// [`AnchorGraph::degenerate_rows`].
pub fn build_anchor_graph(x: &FeatureMatrix, anchors: &FeatureMatrix, k: usize) -> Result<AnchorGraph> {
    let theta = anchors.nrows();
    if k == 0 || k >= theta {
        return Err(Error::domain(format!(
            "anchor neighbours k must satisfy 1 <= k < {theta}, got {k}"
        )));
    }
    if x.ncols() != anchors.ncols() {
        return Err(Error::domain("anchors and samples have different feature counts"));
    }
    let a = anchors.view();
    let rows: Vec<(Vec<(usize, f64)>, bool)> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let xi = x.view().row(i).to_owned();
            let mut dists: Vec<(f64, usize)> = a
                .outer_iter()
                .enumerate()
                .map(|(j, aj)| (sq_dist(xi.view(), aj), j))
                .collect();
            dists.select_nth_unstable_by(k, |p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            let mut nearest = dists[..=k].to_vec();
            nearest.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            let sorted_sq: Vec<f64> = nearest.iter().map(|p| p.0).collect();
            match simplex_weights(&sorted_sq, k) {
                Some(w) => (
                    nearest[..k]
                        .iter()
                        .zip(w)
                        .filter(|(_, w)| *w > 0.0)
                        .map(|(p, w)| (p.1, w))
                        .collect(),
                    false,
                ),
                None => (nearest[..k].iter().map(|p| (p.1, 1.0 / k as f64)).collect(), true),
            }
        })
        .collect();
    let degenerate_rows = rows.iter().filter(|r| r.1).count();
    if degenerate_rows > 0 {
        warn!("{degenerate_rows} samples are equidistant from their nearest anchors; using uniform weights");
    }
    Ok(AnchorGraph {
        csr: Csr::from_rows(theta, rows.into_iter().map(|r| r.0).collect()),
        degenerate_rows,
    })
}

/// `W = B Δ⁻¹ Bᵀ`. Anchors with zero column mass are dropped with a warning.
pub fn doubly_stochastic(b: &AnchorGraph) -> Result<SimilarityMatrix> {
    let n = b.nrows();
    let mass = b.column_sums();
    let dropped_anchors: Vec<usize> = (0..mass.len()).filter(|&a| mass[a] <= 0.0).collect();
    if !dropped_anchors.is_empty() {
        warn!("dropping {} anchors with no assigned mass", dropped_anchors.len());
    }

    // members[a] lists (sample, weight) in ascending sample order
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mass.len()];
    for i in 0..n {
        let (cols, vals) = b.row(i);
        for (&a, &v) in cols.iter().zip(vals) {
            members[a].push((i, v));
        }
    }

    // Each row accumulates its shared anchors in ascending anchor order, so
    // w_ij and w_ji see the same additions and the result is exactly symmetric.
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n], Vec::<usize>::new()),
            |(acc, touched), i| {
                let (cols, vals) = b.row(i);
                for (&a, &bia) in cols.iter().zip(vals) {
                    if mass[a] <= 0.0 {
                        continue;
                    }
                    for &(j, bja) in &members[a] {
                        if acc[j] == 0.0 {
                            touched.push(j);
                        }
                        acc[j] += bia * bja / mass[a];
                    }
                }
                let row = touched.iter().map(|&j| (j, acc[j])).collect();
                for &j in touched.iter() {
                    acc[j] = 0.0;
                }
                touched.clear();
                row
            },
        )
        .collect();

    Ok(SimilarityMatrix {
        csr: Csr::from_rows(n, rows),
        dropped_anchors,
    })
}

/// Butterworth order-4 response `sqrt(1 / (1 + (w/Ω)⁴))`.
pub fn butterworth_response(w: f64, omega: f64) -> f64 {
    (1.0 / (1.0 + (w / omega).powi(4))).sqrt()
}

/// Filters similarities into distances; zero similarity maps to distance 1
/// and the diagonal is forced to 0.
pub fn butterworth_distance(w: &SimilarityMatrix, omega: f64) -> Result<DistanceMatrix> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::domain(format!("Butterworth cutoff must be positive, got {omega}")));
    }
    let n = w.len();
    let rows = (0..n)
        .map(|i| {
            let (cols, vals) = w.row(i);
            cols.iter()
                .zip(vals)
                .filter(|(&j, _)| j != i)
                .map(|(&j, &v)| (j, butterworth_response(v, omega)))
                .collect()
        })
        .collect();
    Ok(DistanceMatrix {
        n,
        storage: DistanceStorage::Filtered {
            background: 1.0,
            exceptions: Csr::from_rows(n, rows),
        },
    })
}

/// Squared Euclidean pairwise distances.
pub fn euclidean_distance(x: &FeatureMatrix) -> DistanceMatrix {
    let n = x.nrows();
    let v = x.view();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let dist = sq_dist(v.row(i), v.row(j));
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    DistanceMatrix {
        n,
        storage: DistanceStorage::Dense(d),
    }
}

/// Row-normalized top-`dims` eigenvectors of `W = B Δ⁻¹ Bᵀ`.
///
/// Computed through the `θ × θ` Gram matrix of `B Δ^(-1/2)`, so the cost is
/// linear in the sample count.
pub fn spectral_embedding(b: &AnchorGraph, dims: usize) -> Result<Array2<f64>> {
    let n = b.nrows();
    let mass = b.column_sums();
    let live: Vec<usize> = (0..mass.len()).filter(|&a| mass[a] > 0.0).collect();
    if dims == 0 || dims > live.len() {
        return Err(Error::domain(format!(
            "embedding dimension must lie in 1..={}, got {dims}",
            live.len()
        )));
    }
    let mut slot = vec![usize::MAX; mass.len()];
    for (s, &a) in live.iter().enumerate() {
        slot[a] = s;
    }
    let m = live.len();
    let scaled_row = |i: usize| -> Vec<(usize, f64)> {
        let (cols, vals) = b.row(i);
        cols.iter()
            .zip(vals)
            .map(|(&a, &v)| (slot[a], v / mass[a].sqrt()))
            .collect()
    };

    let mut gram = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        let z = scaled_row(i);
        for &(a, za) in &z {
            for &(c, zc) in &z {
                gram[(a, c)] += za * zc;
            }
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]).then(p.cmp(&q)));

    let mut out = Array2::zeros((n, dims));
    for i in 0..n {
        let z = scaled_row(i);
        for (col, &e) in order[..dims].iter().enumerate() {
            let lambda = eig.eigenvalues[e].max(1e-12);
            let dot: f64 = z.iter().map(|&(a, za)| za * eig.eigenvectors[(a, e)]).sum();
            out[[i, col]] = dot / lambda.sqrt();
        }
        let norm = out.row(i).dot(&out.row(i)).sqrt();
        if norm > 0.0 {
            out.row_mut(i).mapv_inplace(|v| v / norm);
        }
    }
    Ok(out)
}

/// Graph pieces built for one view.
#[derive(Debug, Clone)]
pub struct ViewGraph {
    pub anchors: FeatureMatrix,
    pub anchor_graph: AnchorGraph,
    pub similarity: SimilarityMatrix,
    pub distance: DistanceMatrix,
}

/// Anchors → anchor graph → similarity → Butterworth distance for one view.
pub fn build_view_graph(
    x: &FeatureMatrix,
    theta: usize,
    k: usize,
    omega: f64,
    seed: u64,
) -> Result<ViewGraph> {
    let anchors = select_anchors(x, theta, seed)?;
    let anchor_graph = build_anchor_graph(x, &anchors, k)?;
    let similarity = doubly_stochastic(&anchor_graph)?;
    let distance = butterworth_distance(&similarity, omega)?;
    Ok(ViewGraph {
        anchors,
        anchor_graph,
        similarity,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn features(a: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(a).unwrap()
    }

    fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
        features(Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0)))
    }

    fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, theta: usize) -> AnchorGraph {
        let mut b = Array2::from_shape_fn((n, theta), |_| rng.random_range(0.1..1.0));
        for mut row in b.outer_iter_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        AnchorGraph::from_dense(b.view()).unwrap()
    }

    #[test]
    fn feature_matrix_rejects_nan() {
        assert!(FeatureMatrix::new(array![[1.0, f64::NAN]]).is_err());
        assert!(FeatureMatrix::new(Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn all_samples_as_anchors_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_features(&mut rng, 12, 3);
        let anchors = select_anchors(&x, 12, 4).unwrap();
        let mut used = [false; 12];
        for a in anchors.view().outer_iter() {
            let hit = (0..12)
                .find(|&i| !used[i] && x.view().row(i) == a)
                .expect("anchor is a sample");
            used[hit] = true;
        }
    }

    #[test]
    fn single_anchor_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_features(&mut rng, 9, 2);
        let anchors = select_anchors(&x, 1, 0).unwrap();
        let mean = x.view().mean_axis(ndarray::Axis(0)).unwrap();
        for (a, m) in anchors.view().row(0).iter().zip(mean.iter()) {
            assert!((a - m).abs() < 1e-9);
        }
    }

    #[test]
    fn two_blobs_get_one_anchor_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = Array2::zeros((40, 2));
        for i in 0..40 {
            let base = if i < 20 { 0.0 } else { 100.0 };
            data[[i, 0]] = base + rng.random_range(0.0..1.0);
            data[[i, 1]] = base + rng.random_range(0.0..1.0);
        }
        let x = features(data);
        for seed in 0..5 {
            let anchors = select_anchors(&x, 2, seed).unwrap();
            let mut hits = [0, 0];
            for a in anchors.view().outer_iter() {
                let blob = usize::from(a[0] > 50.0);
                let base = blob as f64 * 100.0;
                assert!(a[0] >= base && a[0] <= base + 1.0 && a[1] >= base && a[1] <= base + 1.0);
                hits[blob] += 1;
            }
            assert_eq!(hits, [1, 1]);
        }
    }

    #[test]
    fn select_anchors_validates_count() {
        let x = features(array![[0.0], [1.0]]);
        assert!(select_anchors(&x, 0, 0).is_err());
        assert!(select_anchors(&x, 3, 0).is_err());
    }

    #[test]
    fn sample_on_anchor_gets_full_weight() {
        let x = features(array![[1.0, 1.0]]);
        let anchors = features(array![[0.0, 0.0], [1.0, 1.0], [3.0, 0.0]]);
        let b = build_anchor_graph(&x, &anchors, 1).unwrap();
        assert_eq!(b.row(0), (&[1usize][..], &[1.0][..]));
    }

    #[test]
    fn equidistant_anchors_share_weight() {
        let x = features(array![[0.0, 0.0]]);
        let anchors = features(array![[1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]]);
        let b = build_anchor_graph(&x, &anchors, 2).unwrap();
        let (cols, vals) = b.row(0);
        assert_eq!(cols, &[0, 1]);
        assert!((vals[0] - 0.5).abs() < 1e-15 && (vals[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fully_tied_row_is_uniform() {
        let x = features(array![[0.0, 0.0]]);
        let anchors = features(array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]);
        let b = build_anchor_graph(&x, &anchors, 2).unwrap();
        assert_eq!(b.degenerate_rows(), 1);
        assert_eq!(b.row(0).1, &[0.5, 0.5]);
    }

    #[test]
    fn anchor_graph_validates_k() {
        let x = features(array![[0.0]]);
        let anchors = features(array![[0.0], [1.0]]);
        assert!(build_anchor_graph(&x, &anchors, 0).is_err());
        assert!(build_anchor_graph(&x, &anchors, 2).is_err());
    }

    /// Exhaustive active-set solution of `min_{b ∈ simplex} δᵀb + γ‖b‖²`.
    fn simplex_qp_oracle(delta: &[f64], gamma: f64) -> Vec<f64> {
        let m = delta.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << m) {
            let support: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
            let s = support.len() as f64;
            let sum_d: f64 = support.iter().map(|&j| delta[j]).sum();
            let eta = (1.0 + sum_d / (2.0 * gamma)) / s;
            let mut b = vec![0.0; m];
            let mut feasible = true;
            for &j in &support {
                b[j] = eta - delta[j] / (2.0 * gamma);
                if b[j] < -1e-12 {
                    feasible = false;
                }
            }
            if !feasible {
                continue;
            }
            let obj: f64 = (0..m).map(|j| delta[j] * b[j] + gamma * b[j] * b[j]).sum();
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, b));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn anchor_weights_match_simplex_qp() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_features(&mut rng, 20, 2);
        let anchors = random_features(&mut rng, 5, 2);
        let k = 3;
        let b = build_anchor_graph(&x, &anchors, k).unwrap().to_dense();
        for i in 0..20 {
            let delta: Vec<f64> = anchors
                .view()
                .outer_iter()
                .map(|a| sq_dist(x.view().row(i), a))
                .collect();
            let mut sorted = delta.clone();
            sorted.sort_by(f64::total_cmp);
            let gamma = (k as f64 * sorted[k] - sorted[..k].iter().sum::<f64>()) / 2.0;
            let oracle = simplex_qp_oracle(&delta, gamma);
            for j in 0..5 {
                assert!((b[[i, j]] - oracle[j]).abs() < 1e-5, "row {i} anchor {j}");
            }
            assert!((b.row(i).sum() - 1.0).abs() < 1e-9);
            assert!(b.row(i).iter().filter(|&&v| v > 0.0).count() <= k);
        }
    }

    #[test]
    fn identity_graph_gives_identity_similarity() {
        let b = AnchorGraph::from_dense(Array2::<f64>::eye(4).view()).unwrap();
        let w = doubly_stochastic(&b).unwrap().to_dense();
        assert_eq!(w, Array2::<f64>::eye(4));
    }

    #[test]
    fn uniform_graph_gives_uniform_similarity() {
        let b = AnchorGraph::from_dense(Array2::from_elem((6, 3), 1.0 / 3.0).view()).unwrap();
        let w = doubly_stochastic(&b).unwrap().to_dense();
        for v in w.iter() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn similarity_matches_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_stochastic(&mut rng, 8, 3);
        let w = doubly_stochastic(&b).unwrap().to_dense();
        let dense = b.to_dense();
        let mass = dense.sum_axis(ndarray::Axis(0));
        let mut oracle = Array2::<f64>::zeros((8, 8));
        for i in 0..8 {
            for j in 0..8 {
                for a in 0..3 {
                    oracle[[i, j]] += dense[[i, a]] * dense[[j, a]] / mass[a];
                }
            }
        }
        for i in 0..8 {
            assert!((w.row(i).sum() - 1.0).abs() < 1e-9);
            for j in 0..8 {
                assert!((w[[i, j]] - oracle[[i, j]]).abs() < 1e-12);
                assert!((w[[i, j]] - w[[j, i]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dead_anchor_is_dropped() {
        let b = AnchorGraph::from_dense(array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]].view()).unwrap();
        let w = doubly_stochastic(&b).unwrap();
        assert_eq!(w.dropped_anchors(), &[1]);
        assert_eq!(w.to_dense(), Array2::<f64>::eye(2));
    }

    #[test]
    fn anchor_graph_rejects_non_stochastic_rows() {
        assert!(AnchorGraph::from_dense(array![[0.5, 0.4]].view()).is_err());
        assert!(AnchorGraph::from_dense(array![[1.5, -0.5]].view()).is_err());
    }

    #[test]
    fn butterworth_reference_points() {
        let omega = 0.01;
        assert_eq!(butterworth_response(0.0, omega), 1.0);
        assert!((butterworth_response(omega, omega) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((butterworth_response(2.0 * omega, omega) - (1.0f64 / 17.0).sqrt()).abs() < 1e-15);
        assert!((butterworth_response(2.0 * omega, omega) - 0.24254).abs() < 1e-5);
    }

    #[test]
    fn butterworth_distance_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_stochastic(&mut rng, 6, 4);
        let w = doubly_stochastic(&b).unwrap();
        assert!(butterworth_distance(&w, 0.0).is_err());
        assert!(butterworth_distance(&w, -1.0).is_err());
        let d = butterworth_distance(&w, 0.05).unwrap();
        let dense = d.to_dense();
        let wd = w.to_dense();
        for i in 0..6 {
            assert_eq!(dense[[i, i]], 0.0);
            for j in 0..6 {
                assert_eq!(dense[[i, j]], dense[[j, i]]);
                assert!((0.0..=1.0).contains(&dense[[i, j]]));
                if i != j {
                    assert_eq!(dense[[i, j]], butterworth_response(wd[[i, j]], 0.05));
                    assert_eq!(d.get(i, j), dense[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn euclidean_reference_points() {
        let x = features(array![[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]]);
        let d = euclidean_distance(&x);
        assert_eq!(d.get(0, 1), 25.0);
        assert_eq!(d.get(0, 2), 0.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn euclidean_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_features(&mut rng, 6, 3);
        let d = euclidean_distance(&x).to_dense();
        for i in 0..6 {
            for l in 0..6 {
                let mut s = 0.0;
                for c in 0..3 {
                    let diff = x.view()[[i, c]] - x.view()[[l, c]];
                    s += diff * diff;
                }
                assert!((d[[i, l]] - s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cluster_sums_agree_between_storages() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_features(&mut rng, 30, 2);
        let g = build_view_graph(&x, 10, 3, 0.02, 1).unwrap();
        let dense = DistanceMatrix::from_dense(g.distance.to_dense()).unwrap();
        let labels: Vec<usize> = (0..30).map(|i| (i * 7) % 3).collect();
        let mut counts = vec![0; 3];
        for &l in &labels {
            counts[l] += 1;
        }
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        for k in 0..30 {
            g.distance.cluster_sums(k, &labels, &counts, &mut a);
            dense.cluster_sums(k, &labels, &counts, &mut b);
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-10);
            }
        }
        let wa = g.distance.within_cluster_sums(&labels, 3);
        let wb = dense.within_cluster_sums(&labels, 3);
        for c in 0..3 {
            assert!((wa[c] - wb[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_separates_disconnected_components() {
        // two components, each with its own pair of anchors
        let b = AnchorGraph::from_dense(
            array![
                [0.6, 0.4, 0.0, 0.0],
                [0.3, 0.7, 0.0, 0.0],
                [0.5, 0.5, 0.0, 0.0],
                [0.0, 0.0, 0.8, 0.2],
                [0.0, 0.0, 0.4, 0.6],
            ]
            .view(),
        )
        .unwrap();
        let u = spectral_embedding(&b, 2).unwrap();
        let same = |i: usize, j: usize| (u.row(i).dot(&u.row(j)) - 1.0).abs() < 1e-9;
        assert!(same(0, 1) && same(0, 2) && same(3, 4));
        assert!(u.row(0).dot(&u.row(3)).abs() < 1e-9);
    }
}
