//! Streaming subspace clustering with a hidden semi-Markov sequence model,
//! its task-parameterized variant, and controllers that turn a learned model
//! into motion.

pub mod control;
mod eigen;
mod error;
pub mod gaussmath;
pub mod hsmm;
mod params;
pub mod persist;
pub mod sosc;
pub mod subspace;
pub mod tp;

pub use eigen::{clamped_inverse, orthonormality_drift, orthonormalize, sym_eigen, SymEigen};
pub use error::{Error, Result};
pub use gaussmath::{condition, product, transform, Frame, Gaussian};
pub use hsmm::{SemiMarkovChain, StreamCursor, TransitionCounts};
pub use params::{Hyperparams, WeightMode};
pub use sosc::{SoscModel, StepReport};
pub use subspace::{Assignment, DurationStats, SubspaceCluster};
pub use tp::{Combined, TpCluster, TpSoscModel};

pub use nalgebra::{DMatrix, DVector};
