//! Optimal survival trees.
//!
//! Learns size-constrained survival trees that are globally optimal on the
//! training likelihood loss. Leaves carry a proportional-hazard coefficient
//! against a shared Nelson-Aalen baseline, and the search is a dynamic
//! program over dataset subsets with caching, bounding and a dedicated
//! depth-two routine.
//!
//! Around the solver sit the pieces needed for a full experiment: binarization
//! of raw tabular data, synthetic censored data generation, Harrell's C-index
//! and the integrated Brier score, and cross-validated budget tuning.
//!
//! ```
//! use surtree::{fit_baseline, BitVector, Dataset, Instance, SolverConfig};
//!
//! let rows = [(1.0, true, [true, false]), (2.0, true, [false, true]), (3.0, false, [true, true])];
//! let instances = rows
//!     .iter()
//!     .map(|(t, e, f)| Instance::new(*t, *e, BitVector::from_bools(f)).unwrap())
//!     .collect();
//! let data = Dataset::new(instances, 2).unwrap();
//! let baseline = fit_baseline(&data).unwrap();
//! let data = data.with_baseline(&baseline);
//! let (tree, loss) = surtree::solve(&data, &SolverConfig::new(1, 1)).unwrap();
//! assert!(loss >= 0.0);
//! assert!(tree.depth() <= 1);
//! ```

pub mod bits;
pub mod cli;
pub mod error;
pub mod format;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod solver;
pub mod synth;
pub mod table;
pub mod tune;

pub use bits::BitVector;
pub use error::{Error, Result};
pub use loss::{leaf_loss, leaf_loss_direct, normalized_loss, theta_hat, tuple_of, CostTuple};
pub use model::{
    eval_cumulative_hazard, fit_baseline, predict_survival, predict_theta, split_dataset,
    BaselineHazard, Dataset, Instance, StepFunction, SurvivalTree,
};
pub use solver::{solve, SolverConfig};
