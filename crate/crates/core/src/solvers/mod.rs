//! Output-weight solvers: direct ridge solutions, exact merging of
//! subnetwork solutions, hierarchical training and incremental growth.

mod direct;
mod hierarchy;
mod incremental;
mod merge;
mod woodbury;

pub use direct::{regime_for, solve_auto, solve_dual, solve_primal, SolveRegime};
pub use hierarchy::{hierarchical_solve, hierarchical_train, PartitionTree};
pub use incremental::{incremental_add, incremental_init, update_operators, IncrementalState, UpdateOperators};
pub use merge::{build_merge_operands, build_z_symmetric, merge_primal, MergeMatrices, MergeOperands};
pub use woodbury::{merge_dual, merge_dual_with_adjustment};

use crate::error::{ElmError, Result};

/// Used when no regularization strength is given.
pub const DEFAULT_ALPHA: f64 = 1e3;

/// Ridge strength `alpha` in `min ‖HW − Y‖² + alpha‖W‖²`'s closed form
/// `(HᵀH + I/alpha)⁻¹HᵀY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeConfig {
    alpha: f64,
}

impl RidgeConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ElmError::invalid(format!("alpha must be positive and finite, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA }
    }
}
