//! Bernoulli bond percolation on `Z^d` at desk scale.
//!
//! Every edge carries a uniform variate derived by hashing `(seed, trial,
//! edge)`, so one trial realizes all values of `p` at once and clusters grow
//! monotonically in `p`. On top of that sit a restricted BFS explorer, a
//! union-find spanning census, an exact enumerator for tiny graphs, Monte
//! Carlo estimators and the fits used to read exponents off them.

pub mod census;
pub mod error;
pub mod estimators;
pub mod explorer;
pub mod lattice;
pub mod oracle;
pub mod sampler;
pub mod scaling;
pub mod validation;

pub use estimators::{Estimate, MonteCarlo, TailCurve};
pub use error::{Error, Result, TruncationReason};
pub use explorer::{Budget, ClusterReport, Target};
pub use lattice::{Edge, LatticeModel, Region, Vertex};
pub use sampler::{SamplerConfig, SAMPLER_ID};
