//! Principal graph learning with graph-regularized Gaussian mixtures.
//!
//! A point cloud is modelled as a mixture of spherical Gaussians plus a
//! uniform background component. Centroids are tied together by a graph
//! prior (a minimum spanning tree, or an average of subsampled spanning
//! trees that can carry cycles), and the parameters are fitted by MAP
//! expectation-maximization.
//!
//! ```
//! use grmm::datagen::{gen_three_branch, ThreeBranchConfig};
//! use grmm::em::{fit, FitOptions, InitCentroids};
//!
//! let data = gen_three_branch(&ThreeBranchConfig { n: 300, ..Default::default() }, 1);
//! let mut opts = FitOptions::default();
//! opts.init_mu = InitCentroids::RandomSubset { seed: 1 };
//! opts.hp.components = 20;
//! opts.init_variance = Some(0.01);
//! opts.hp.lambda_mu = 5.0 / 0.01;
//! let fitted = fit(data.points.view(), &opts).unwrap();
//! assert_eq!(fitted.graph.node_count(), 20);
//! ```

pub mod datagen;
pub mod em;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod model;
pub mod svg;

mod par;

pub use error::{Error, Result};
