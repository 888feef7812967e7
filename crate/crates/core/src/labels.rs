use ndarray::Array2;

use crate::error::{Error, Result};

/// `N × C` one-hot cluster assignment, stored as one cluster id per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl LabelMatrix {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if n_clusters == 0 {
            return Err(Error::domain("a label matrix needs at least one cluster"));
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_clusters) {
            return Err(Error::domain(format!(
                "row {row} has cluster id {l}, outside 0..{n_clusters}"
            )));
        }
        Ok(Self { labels, n_clusters })
    }

    /// Reads a binary matrix, requiring exactly one 1 per row.
    pub fn from_dense(y: &Array2<f64>) -> Result<Self> {
        let mut labels = Vec::with_capacity(y.nrows());
        for (i, row) in y.outer_iter().enumerate() {
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(j, _)| j)
                .collect();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones.len() != 1 || zeros + 1 != row.len() {
                return Err(Error::domain(format!("row {i} is not one-hot")));
            }
            labels.push(ones[0]);
        }
        Self::new(labels, y.ncols())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut y = Array2::zeros((self.labels.len(), self.n_clusters));
        for (i, &l) in self.labels.iter().enumerate() {
            y[[i, l]] = 1.0;
        }
        y
    }

    pub(crate) fn set(&mut self, row: usize, cluster: usize) {
        self.labels[row] = cluster;
    }
}
