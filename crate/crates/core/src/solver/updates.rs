//! One block of the alternating scheme per function.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::graph::DistanceMatrix;
use crate::labels::LabelMatrix;
use crate::tensor3::{prox_schatten_p, Tensor3};

/// One ascending sweep over the rows of `Y^(v)`.
///
/// Row `k` moves to `argmin_j (2·α_v^r·Y*ᵀ d_k − μ·s_k)_j`, where `Y*` already
/// holds the new labels of rows `< k`. Ties go to the lowest cluster index.
/// `s` is `J^(v) − Q^(v)/μ`.
pub fn update_labels(
    d: &DistanceMatrix,
    s: ArrayView2<f64>,
    alpha_v: f64,
    r: f64,
    mu: f64,
    labels_in: &LabelMatrix,
) -> Result<LabelMatrix> {
    let n = labels_in.n_samples();
    let c = labels_in.n_clusters();
    if d.len() != n || s.dim() != (n, c) {
        return Err(Error::domain(format!(
            "label update shapes disagree: {n} labels, distance {}, S {:?}",
            d.len(),
            s.dim()
        )));
    }
    let weight = 2.0 * alpha_v.powf(r);
    let mut labels = labels_in.clone();
    let mut counts = labels.cluster_sizes();
    let mut sums = vec![0.0; c];

    for k in 0..n {
        d.cluster_sums(k, labels.labels(), &counts, &mut sums);
        let mut best = 0;
        let mut best_score = f64::INFINITY;
        for j in 0..c {
            let score = weight * sums[j] - mu * s[[k, j]];
            if score < best_score {
                best = j;
                best_score = score;
            }
        }
        let old = labels.labels()[k];
        if old != best {
            counts[old] -= 1;
            counts[best] += 1;
            labels.set(k, best);
        }
    }
    Ok(labels)
}

/// View weights `α_v ∝ M_v^(1/(1−r))`, normalized to sum to one.
///
/// Views with `M_v = 0` are infinitely preferred; when any exist they share
/// all the weight equally.
pub fn update_alpha(traces: &[f64], r: f64) -> Result<Vec<f64>> {
    if traces.is_empty() {
        return Err(Error::domain("at least one view trace is required"));
    }
    if !(r > 1.0) {
        return Err(Error::domain(format!("weight exponent r must exceed 1, got {r}")));
    }
    if let Some(bad) = traces.iter().find(|&&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::domain(format!("view trace must be finite and >= 0, got {bad}")));
    }
    let zeros = traces.iter().filter(|&&m| m == 0.0).count();
    if zeros > 0 {
        log::debug!("{zeros} views have zero trace; splitting weight among them");
        return Ok(traces
            .iter()
            .map(|&m| if m == 0.0 { 1.0 / zeros as f64 } else { 0.0 })
            .collect());
    }
    // log-space normalization keeps large exponents 1/(1-r) from underflowing
    let exponent = 1.0 / (1.0 - r);
    let logs: Vec<f64> = traces.iter().map(|m| exponent * m.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// `prox_{(λ/μ)‖·‖_Sp^p}(𝓨 + 𝓠/μ)`.
pub fn update_j(y: &Tensor3, q: &Tensor3, lambda: f64, mu: f64, p: f64) -> Result<Tensor3> {
    if !(mu > 0.0) {
        return Err(Error::domain(format!("penalty mu must be positive, got {mu}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let target = y.add_scaled(q, 1.0 / mu)?;
    prox_schatten_p(&target, lambda / mu, p)
}

/// Multiplier ascent `𝓠 + μ(𝓨 − 𝓙)`.
pub fn update_q(q: &Tensor3, mu: f64, y: &Tensor3, j: &Tensor3) -> Result<Tensor3> {
    q.check_same_dims(y)?;
    q.check_same_dims(j)?;
    let data = q
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .zip(j.as_slice())
        .map(|((qv, yv), jv)| qv + mu * (yv - jv))
        .collect();
    Tensor3::from_vec(q.dims(), data)
}

pub fn update_mu(mu: f64, rho: f64, mu_max: f64) -> f64 {
    (rho * mu).min(mu_max)
}

/// Final assignment `argmax_j (Σ_v α_v^r Y^(v))_ij`, lowest index on ties.
pub fn fuse_labels(labels: &[LabelMatrix], alpha: &[f64], r: f64) -> Result<LabelMatrix> {
    let first = labels
        .first()
        .ok_or_else(|| Error::domain("fusion needs at least one view"))?;
    if labels.len() != alpha.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: alpha.len(),
        });
    }
    let (n, c) = (first.n_samples(), first.n_clusters());
    if labels.iter().any(|y| y.n_samples() != n || y.n_clusters() != c) {
        return Err(Error::domain("views disagree on label matrix shape"));
    }
    let weights: Vec<f64> = alpha.iter().map(|a| a.powf(r)).collect();
    let mut fused = Vec::with_capacity(n);
    let mut votes = vec![0.0; c];
    for i in 0..n {
        votes.iter_mut().for_each(|v| *v = 0.0);
        for (y, w) in labels.iter().zip(&weights) {
            votes[y.labels()[i]] += w;
        }
        let mut best = 0;
        for j in 1..c {
            if votes[j] > votes[best] {
                best = j;
            }
        }
        fused.push(best);
    }
    LabelMatrix::new(fused, c)
}

/// Stacks per-view label matrices as the frontal slices of an `N × C × V` tensor.
pub fn label_tensor(labels: &[LabelMatrix]) -> Result<Tensor3> {
    let slices: Vec<_> = labels.iter().map(LabelMatrix::to_dense).collect();
    Tensor3::from_slices(&slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::objective::view_label_objective;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_distance(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
        let raw = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
        DistanceMatrix::from_dense(&raw + &raw.t()).unwrap()
    }

    #[test]
    fn zero_distance_follows_largest_s() {
        let d = DistanceMatrix::from_dense(Array2::zeros((3, 3))).unwrap();
        let s = array![[0.1, 0.9, 0.0], [0.5, 0.2, 0.7], [0.3, 0.3, 0.1]];
        let y0 = LabelMatrix::new(vec![0, 0, 0], 3).unwrap();
        let y = update_labels(&d, s.view(), 0.5, 3.0, 1.0, &y0).unwrap();
        assert_eq!(y.labels(), &[1, 2, 0]);
    }

    #[test]
    fn single_row_takes_larger_s() {
        let d = DistanceMatrix::from_dense(Array2::zeros((1, 1))).unwrap();
        let y0 = LabelMatrix::new(vec![1], 2).unwrap();
        let y = update_labels(&d, array![[0.9, 0.1]].view(), 1.0, 2.0, 1e-4, &y0).unwrap();
        assert_eq!(y.to_dense(), array![[1.0, 0.0]]);
    }

    /// Sweep score of every cluster for row `k`, by a direct double loop.
    fn row_scores(d: &DistanceMatrix, s: &Array2<f64>, y: &LabelMatrix, k: usize, w: f64, mu: f64) -> Vec<f64> {
        let dense = y.to_dense();
        (0..y.n_clusters())
            .map(|j| {
                let mut acc = 0.0;
                for i in 0..y.n_samples() {
                    acc += dense[[i, j]] * d.get(k, i);
                }
                w * acc - mu * s[[k, j]]
            })
            .collect()
    }

    #[test]
    fn four_point_instance_against_exhaustive_search() {
        let d = DistanceMatrix::from_dense(array![
            [0.0, 0.1, 0.9, 0.8],
            [0.1, 0.0, 0.7, 0.9],
            [0.9, 0.7, 0.0, 0.2],
            [0.8, 0.9, 0.2, 0.0]
        ])
        .unwrap();
        let s = array![[0.6, 0.4], [0.2, 0.8], [0.5, 0.5], [0.7, 0.3]];
        let (alpha, r, mu): (f64, f64, f64) = (0.5, 2.0, 0.3);
        let y0 = LabelMatrix::new(vec![1, 0, 0, 1], 2).unwrap();

        // replay the sweep, checking each row's choice against direct scores
        let mut replay = y0.clone();
        for k in 0..4 {
            let scores = row_scores(&d, &s, &replay, k, 2.0 * alpha.powf(r), mu);
            let best = (0..2).min_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
            replay.set(k, best);
        }
        let y = update_labels(&d, s.view(), alpha, r, mu, &y0).unwrap();
        assert_eq!(y, replay);

        // the result must be a local optimum reachable by single-row moves
        let objective = |y: &LabelMatrix| view_label_objective(y, &d, s.view(), alpha, r, mu).unwrap();
        let mut all = Vec::new();
        for mask in 0u32..16 {
            let labels = (0..4).map(|i| ((mask >> i) & 1) as usize).collect();
            all.push(LabelMatrix::new(labels, 2).unwrap());
        }
        let f = objective(&y);
        for other in &all {
            let differing = (0..4).filter(|&i| other.labels()[i] != y.labels()[i]).count();
            if differing == 1 {
                assert!(objective(other) >= f - 1e-12);
            }
        }
        let global = all.iter().map(objective).fold(f64::INFINITY, f64::min);
        assert!(f >= global - 1e-12);
        assert!(f <= objective(&y0) + 1e-12);
    }

    #[test]
    fn sweep_leaves_every_row_optimal_and_never_increases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (n, c) = (9, 3);
            let d = random_distance(&mut rng, n);
            let s = Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0));
            let y0 = LabelMatrix::new((0..n).map(|_| rng.random_range(0..c)).collect(), c).unwrap();
            let (alpha, r, mu) = (rng.random_range(0.1..1.0), 3.0, rng.random_range(0.01..2.0));
            let before = view_label_objective(&y0, &d, s.view(), alpha, r, mu).unwrap();
            let mut y = update_labels(&d, s.view(), alpha, r, mu, &y0).unwrap();
            let after = view_label_objective(&y, &d, s.view(), alpha, r, mu).unwrap();
            assert!(after <= before + 1e-12);
            // a second sweep from a converged point changes nothing row-wise
            for _ in 0..20 {
                let next = update_labels(&d, s.view(), alpha, r, mu, &y).unwrap();
                if next == y {
                    break;
                }
                y = next;
            }
            for k in 0..n {
                let base = view_label_objective(&y, &d, s.view(), alpha, r, mu).unwrap();
                for j in 0..c {
                    let mut alt = y.clone();
                    alt.set(k, j);
                    let f = view_label_objective(&alt, &d, s.view(), alpha, r, mu).unwrap();
                    assert!(f >= base - 1e-12);
                }
            }
        }
    }

    #[test]
    fn alpha_reference_values() {
        let a = update_alpha(&[2.0, 2.0, 2.0], 4.0).unwrap();
        assert!(a.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let a = update_alpha(&[1.0, 4.0], 2.0).unwrap();
        assert!((a[0] - 0.8).abs() < 1e-12 && (a[1] - 0.2).abs() < 1e-12);

        let a = update_alpha(&[1.0, 2.0, 4.0], 3.0).unwrap();
        let raw = [1.0, 2f64.powf(-0.5), 0.5];
        let total: f64 = raw.iter().sum();
        for (v, e) in a.iter().zip(raw) {
            assert!((v - e / total).abs() < 1e-12);
        }
        // rounded: 0.4531, 0.3204, 0.2265
        assert!((a[0] - 0.45308).abs() < 1e-5 && (a[1] - 0.32037).abs() < 1e-5 && (a[2] - 0.22654).abs() < 1e-5);
    }

    #[test]
    fn alpha_zero_traces_take_all_weight() {
        assert_eq!(update_alpha(&[0.0, 3.0, 0.0], 2.0).unwrap(), vec![0.5, 0.0, 0.5]);
        assert!(update_alpha(&[1.0], 1.0).is_err());
        assert!(update_alpha(&[-1.0], 2.0).is_err());
        assert!(update_alpha(&[], 2.0).is_err());
    }

    #[test]
    fn alpha_survives_extreme_exponents() {
        let a = update_alpha(&[1e-300, 1e300], 1.0001).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a[0] > a[1]);
    }

    #[test]
    fn j_update_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let data = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = Tensor3::from_vec((4, 3, 2), data).unwrap();
        let q = Tensor3::from_vec((4, 3, 2), (0..24).map(|i| i as f64 * 0.01).collect()).unwrap();
        let mu = 0.5;
        let j = update_j(&y, &q, 0.0, mu, 0.5).unwrap();
        assert_eq!(j, y.add_scaled(&q, 1.0 / mu).unwrap());

        let zero_q = Tensor3::zeros(4, 3, 2).unwrap();
        let huge = 10.0 * y.frobenius_sq().max(1.0);
        let j = update_j(&y, &zero_q, huge, 1.0, 0.5).unwrap();
        assert!(j.as_slice().iter().all(|v| v.abs() < 1e-8));
        assert!(update_j(&y, &zero_q, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn q_update_values() {
        let y = Tensor3::from_vec((1, 2, 1), vec![1.0, 2.0]).unwrap();
        let q = Tensor3::from_vec((1, 2, 1), vec![0.5, -0.5]).unwrap();
        assert_eq!(update_q(&q, 3.0, &y, &y).unwrap(), q);

        let zero = Tensor3::zeros(1, 2, 1).unwrap();
        let j = Tensor3::from_vec((1, 2, 1), vec![0.0, 1.0]).unwrap();
        assert_eq!(update_q(&zero, 2.0, &y, &j).unwrap().as_slice(), &[2.0, 2.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mk = |rng: &mut ChaCha8Rng| {
            Tensor3::from_vec((3, 2, 2), (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let (q, y, j) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let out = update_q(&q, 0.7, &y, &j).unwrap();
        for i in 0..3 {
            for c in 0..2 {
                for v in 0..2 {
                    assert_eq!(out.get(i, c, v), q.get(i, c, v) + 0.7 * (y.get(i, c, v) - j.get(i, c, v)));
                }
            }
        }
    }

    #[test]
    fn mu_schedule() {
        assert!((update_mu(1e-4, 1.1, 1e10) - 1.1e-4).abs() < 1e-18);
        assert_eq!(update_mu(1e10, 1.1, 1e10), 1e10);
        // 1e-4 * 1.1^300 is about 2.6e8; the cap needs 339 steps
        let mut mu = 1e-4;
        let mut steps = 0;
        while mu < 1e10 {
            let next = update_mu(mu, 1.1, 1e10);
            assert!(next > mu);
            mu = next;
            steps += 1;
            if steps == 300 {
                assert!((mu / (1e-4 * 1.1f64.powi(300)) - 1.0).abs() < 1e-9);
                assert!((mu - 2.617e8).abs() < 1e5);
            }
        }
        assert_eq!(steps, 339);
        assert_eq!(update_mu(mu, 1.1, 1e10), 1e10);
    }

    #[test]
    fn fusion_cases() {
        let y = LabelMatrix::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(fuse_labels(&[y.clone(), y.clone()], &[0.5, 0.5], 3.0).unwrap(), y);

        let other = LabelMatrix::new(vec![1, 0, 0], 2).unwrap();
        assert_eq!(fuse_labels(&[y.clone(), other.clone()], &[1.0, 0.0], 1.0).unwrap(), y);
        assert_eq!(fuse_labels(&[y.clone(), other.clone()], &[0.6, 0.4], 3.0).unwrap(), y);
        assert_eq!(fuse_labels(&[y.clone(), other.clone()], &[0.4, 0.6], 3.0).unwrap(), other);
        // exact tie: lowest column wins
        assert_eq!(fuse_labels(&[y.clone(), other], &[0.5, 0.5], 2.0).unwrap().labels(), &[0, 0, 0]);
        assert!(fuse_labels(&[y], &[0.5, 0.5], 2.0).is_err());
    }
}
