//! ACC, NMI and purity for integer label vectors.
//!
//! The three scores measure different things and are not ordered relative to
//! each other; only `0 ≤ score ≤ 1` holds for each.

use pathfinding::prelude::{kuhn_munkres, Matrix};

use crate::error::{Error, Result};

struct Contingency {
    /// `counts[p][t]`: samples with predicted id `p` and true id `t`.
    counts: Vec<Vec<usize>>,
    n: usize,
}

impl Contingency {
    fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: truth.len(),
            });
        }
        let rows = pred.iter().max().map_or(0, |m| m + 1);
        let cols = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0; cols]; rows];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(Self { counts, n: pred.len() })
    }

    fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|t| self.counts.iter().map(|r| r[t]).sum()).collect()
    }
}

/// Best matched fraction over one-to-one maps from predicted to true ids.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    if table.n == 0 {
        return Ok(1.0);
    }
    let size = table.counts.len().max(table.counts[0].len());
    let weights = Matrix::from_fn(size, size, |(p, t)| {
        table.counts.get(p).and_then(|r| r.get(t)).map_or(0, |&c| c as i64)
    });
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / table.n as f64)
}

fn entropy(sums: &[usize], n: f64) -> f64 {
    sums.iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let q = s as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Mutual information over the geometric mean of the two entropies, natural
/// log. A constant labeling has zero entropy and scores 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    if table.n == 0 {
        return Ok(0.0);
    }
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let (hp, ht) = (entropy(&rows, n), entropy(&cols, n));
    if hp <= 0.0 || ht <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (p, row) in table.counts.iter().enumerate() {
        for (t, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[p] as f64 * cols[t] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Fraction of samples that belong to the majority true class of their
/// predicted cluster.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    if table.n == 0 {
        return Ok(1.0);
    }
    let majority: usize = table
        .counts
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / table.n as f64)
}
