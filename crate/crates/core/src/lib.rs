//! Centroid-free multi-view clustering.
//!
//! Each view gets an anchor graph whose doubly stochastic similarity is pushed
//! through a Butterworth filter to give a bounded distance matrix. Per-view
//! discrete label matrices are then optimized jointly with a tensor Schatten
//! p-norm penalty that pulls the views toward a shared low-rank structure.
//!
//! ```no_run
//! use cfmvc::{data, solver};
//!
//! let ds = data::gen_two_moon(200, 0.05, 0).unwrap();
//! let out = solver::solve(&ds.views, ds.n_clusters, &solver::SolverConfig::default()).unwrap();
//! let acc = cfmvc::metrics::accuracy(out.labels.labels(), ds.truth.as_ref().unwrap()).unwrap();
//! println!("ACC {acc:.3}");
//! ```

pub mod data;
pub mod error;
pub mod graph;
pub mod kmeans;
pub mod labels;
pub mod metrics;
pub mod solver;
pub mod tensor3;

pub use error::{Error, Result};
pub use graph::{DistanceMatrix, FeatureMatrix};
pub use labels::LabelMatrix;
pub use solver::{solve, SolverConfig, SolverOutput};
pub use tensor3::Tensor3;
