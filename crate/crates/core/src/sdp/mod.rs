//! Semidefinite formulations of atomic-norm recovery and their
//! operator-splitting solver.

mod dual;
mod primal;
mod splitting;

pub use dual::{lambda_matrix, solve_dual, solve_dual_raw, DualSolution};
pub use primal::{measure, solve_primal, solve_primal_raw, PrimalChecks, PrimalSolution, UserBlock};
pub use splitting::{
    run, splitting_step, IterationRecord, SolverDiagnostics, SolverOpts, SolverState, SolverStatus,
    SplittingOutput, SplittingProblem,
};

impl PrimalSolution {
    /// Fails with [`crate::Error::MaxIterations`] unless the solver converged.
    pub fn into_converged(self) -> crate::Result<Self> {
        match self.diagnostics.status {
            SolverStatus::Converged => Ok(self),
            SolverStatus::MaxIterations => {
                Err(crate::Error::MaxIterations { iterations: self.diagnostics.iterations })
            }
        }
    }
}

impl DualSolution {
    /// Fails with [`crate::Error::MaxIterations`] unless the solver converged.
    pub fn into_converged(self) -> crate::Result<Self> {
        match self.diagnostics.status {
            SolverStatus::Converged => Ok(self),
            SolverStatus::MaxIterations => {
                Err(crate::Error::MaxIterations { iterations: self.diagnostics.iterations })
            }
        }
    }
}
