//! Lightweight Lloyd k-means with k-means++ seeding.
//!
//! Used for anchor selection and for the initial label candidates. Assignment
//! ties go to the lowest center index; a center that loses all its points keeps
//! its previous position.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centers: Array2<f64>,
    pub labels: Vec<usize>,
    /// Sum of squared distances from each point to its center.
    pub inertia: f64,
}

#[inline]
pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.outer_iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(x: ArrayView2<f64>, centers: &Array2<f64>) -> Vec<(usize, f64)> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| nearest(x.row(i), centers))
        .collect()
}

fn seed_plus_plus<R: Rng>(x: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total mass has a positive entry")
        } else {
            // every point coincides with a chosen one: fall back to an unused index
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(pick);
        taken[pick] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }

    let mut centers = Array2::zeros((k, x.ncols()));
    for (c, &i) in chosen.iter().enumerate() {
        centers.row_mut(c).assign(&x.row(i));
    }
    centers
}

/// One k-means run: k-means++ seeding followed by at most `max_iter` Lloyd updates.
///
/// Panics if `k == 0` or `k > x.nrows()`; callers validate.
pub fn lite_kmeans<R: Rng>(x: ArrayView2<f64>, k: usize, max_iter: usize, rng: &mut R) -> KMeans {
    assert!(k >= 1 && k <= x.nrows(), "k-means needs 1 <= k <= n");
    let mut centers = seed_plus_plus(x, k, rng);
    let mut labels: Option<Vec<usize>> = None;

    for _ in 0..max_iter {
        let assignment: Vec<usize> = assign(x, &centers).into_iter().map(|(c, _)| c).collect();
        if labels.as_ref() == Some(&assignment) {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &x.row(i);
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean = &sums.row(c) / count as f64;
                centers.row_mut(c).assign(&mean);
            }
        }
        labels = Some(assignment);
    }

    let final_assign = assign(x, &centers);
    let inertia = final_assign.iter().map(|(_, d)| d).sum();
    KMeans {
        centers,
        labels: final_assign.into_iter().map(|(c, _)| c).collect(),
        inertia,
    }
}

/// Best (lowest inertia) of `restarts` independent runs; earlier runs win ties.
pub fn kmeans_best_of<R: Rng>(
    x: ArrayView2<f64>,
    k: usize,
    max_iter: usize,
    restarts: usize,
    rng: &mut R,
) -> KMeans {
    let mut best = lite_kmeans(x, k, max_iter, rng);
    for _ in 1..restarts {
        let run = lite_kmeans(x, k, max_iter, rng);
        if run.inertia < best.inertia {
            best = run;
        }
    }
    best
}
