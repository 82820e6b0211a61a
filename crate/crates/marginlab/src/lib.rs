//! Margin-shifted surrogate losses and consistency diagnostics for pairwise
//! preference learning.
//!
//! The crate works with finite-support preference distributions, where every
//! risk is an exact expectation. On top of that it provides:
//!
//! - [`loss`] — the surrogate loss zoo (logistic/DPO, exponential, polynomial
//!   hinge, squared IPO, GCE, MAE), uniform and structure-aware margin
//!   shifts, consistency coefficients and margin-capacity profiles.
//! - [`data`] — preference datasets, semantic distances, seeded synthetic
//!   generators (Bradley-Terry, generalized links, synonym stress pairs,
//!   the single-tuple squashing construction) and JSONL I/O.
//! - [`model`] — tabular / linear / global scoring functions with capacity
//!   clamps, score quantization and scaling.
//! - [`risk`] — exact target and surrogate risks, best-in-class conditional
//!   errors, minimizability and approximation gaps, and numeric verifiers for
//!   the consistency bounds, their tightness, and the no-margin failure mode.
//! - [`train`] — full-batch gradient descent on exact risks plus the packaged
//!   experiments (synonym stress, capacity hierarchy, profile sweep).
//! - [`cli`] — the config-driven `lab` command line harness.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --example loss_landscape
//! cargo run --example profile_hierarchy
//! cargo run --example vanishing_surrogate
//! cargo run --example margin_tightness
//! cargo run --example synonym_stress
//! cargo run --example capacity_hierarchy
//! cargo run --example scaling_gap
//! cargo run --example bt_minimizability
//! ```

pub mod cli;
pub mod data;
pub mod loss;
pub mod model;
mod numeric;
pub mod risk;
pub mod train;

pub use data::{PreferenceDataset, PreferenceExample};
pub use loss::{MarginSpec, SurrogateLoss};
pub use model::ScoringModel;
