//! Generic operator-splitting (ADMM) engine for block-diagonal semidefinite
//! programs.
//!
//! A problem supplies the sizes of its Hermitian PSD blocks and a proximal
//! operator for its structural part (affine constraints, linear objective,
//! data fidelity). The engine alternates
//!
//! ```text
//! X ← prox_struct(S − U, ρ)
//! S ← Π_PSD(X + U)
//! U ← U + X − S
//! ```
//!
//! so at every iterate `X` satisfies the structure exactly and `S` is PSD;
//! the primal residual measures their disagreement.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{project_psd, CMat};

/// Solver settings. All fields have defaults when read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOpts {
    /// Relative primal/dual residual tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial penalty ρ.
    pub penalty_init: f64,
    /// Rebalance ρ every 100 iterations when residuals differ by > 10×.
    pub penalty_adapt: bool,
    /// Record every iteration in [`SolverDiagnostics::trace`].
    pub trace: bool,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 50_000, penalty_init: 1.0, penalty_adapt: true, trace: false }
    }
}

impl SolverOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return domain(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return domain("max_iters must be at least 1");
        }
        if !(self.penalty_init > 0.0 && self.penalty_init.is_finite()) {
            return domain(format!("penalty_init must be positive, got {}", self.penalty_init));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub penalty: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub status: SolverStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub penalty: f64,
    /// Smallest eigenvalue clipped by the last PSD projection.
    pub min_eigenvalue: f64,
    pub trace: Vec<IterationRecord>,
}

impl SolverDiagnostics {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }

    /// Writes the iteration trace as CSV.
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for rec in &self.trace {
            w.serialize(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Short human-readable summary.
    pub fn summary(&self, mut out: impl Write) -> Result<()> {
        writeln!(
            out,
            "{:?} after {} iterations: primal {:.3e}, dual {:.3e}, rho {:.3e}",
            self.status, self.iterations, self.primal_residual, self.dual_residual, self.penalty
        )?;
        Ok(())
    }
}

/// A block-diagonal SDP in splitting form.
pub trait SplittingProblem {
    /// Side lengths of the Hermitian PSD blocks.
    fn block_sizes(&self) -> Vec<usize>;

    /// `argmin_X f(X) + ρ/2 Σ_b ‖X_b − targets_b‖²` over the structural set.
    fn prox(&self, targets: &[CMat], rho: f64) -> Result<Vec<CMat>>;

    /// Objective value of a structured iterate.
    fn objective(&self, x: &[CMat]) -> f64;
}

/// Full ADMM state; `u` is the scaled dual variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<CMat>,
    pub s: Vec<CMat>,
    pub u: Vec<CMat>,
    pub rho: f64,
    pub iteration: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub min_eigenvalue: f64,
}

impl SolverState {
    /// All-zero start.
    pub fn new(block_sizes: &[usize], rho: f64) -> Self {
        let zeros: Vec<CMat> = block_sizes.iter().map(|&n| CMat::zeros(n, n)).collect();
        Self {
            x: zeros.clone(),
            s: zeros.clone(),
            u: zeros,
            rho,
            iteration: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            min_eigenvalue: 0.0,
        }
    }
}

fn total_norm(blocks: &[CMat]) -> f64 {
    blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

/// One X/S/U sweep. Updates residuals in `state`.
pub fn splitting_step<P: SplittingProblem + ?Sized>(problem: &P, state: &mut SolverState) -> Result<()> {
    let targets: Vec<CMat> = state.s.iter().zip(&state.u).map(|(s, u)| s - u).collect();
    let x = problem.prox(&targets, state.rho)?;
    if x.len() != state.x.len() {
        return domain(format!("prox returned {} blocks, expected {}", x.len(), state.x.len()));
    }

    let mut s = Vec::with_capacity(x.len());
    let mut min_eig = f64::INFINITY;
    for (xb, ub) in x.iter().zip(&state.u) {
        let (proj, lam) = project_psd(&(xb + ub))?;
        min_eig = min_eig.min(lam);
        s.push(proj);
    }

    let mut diff_sq = 0.0;
    let mut change_sq = 0.0;
    for b in 0..x.len() {
        let r = &x[b] - &s[b];
        diff_sq += r.norm_squared();
        change_sq += (&s[b] - &state.s[b]).norm_squared();
        state.u[b] += r;
    }
    let primal = diff_sq.sqrt() / (1.0 + total_norm(&x).max(total_norm(&s)));
    let dual = state.rho * change_sq.sqrt() / (1.0 + state.rho * total_norm(&state.u));
    if !primal.is_finite() || !dual.is_finite() {
        return Err(Error::Numerical(format!("non-finite residual at iteration {}", state.iteration + 1)));
    }

    state.x = x;
    state.s = s;
    state.primal_residual = primal;
    state.dual_residual = dual;
    state.min_eigenvalue = min_eig;
    state.iteration += 1;
    Ok(())
}

/// Iterates returned by [`run`] along with their diagnostics.
#[derive(Debug, Clone)]
pub struct SplittingOutput {
    /// Structured iterate (satisfies the problem's affine constraints).
    pub x: Vec<CMat>,
    /// PSD iterate.
    pub s: Vec<CMat>,
    /// Scaled dual variable.
    pub u: Vec<CMat>,
    pub objective: f64,
    pub diagnostics: SolverDiagnostics,
}

/// Runs [`splitting_step`] until both relative residuals drop below
/// `opts.tol` or the iteration limit is reached. On the limit, the iterate
/// with the smallest residual is returned with status `MaxIterations`.
pub fn run<P: SplittingProblem + ?Sized>(problem: &P, opts: &SolverOpts) -> Result<SplittingOutput> {
    opts.validate()?;
    let mut state = SolverState::new(&problem.block_sizes(), opts.penalty_init);
    let mut trace = Vec::new();
    let mut best: Option<(f64, SolverState)> = None;
    let mut status = SolverStatus::MaxIterations;

    while state.iteration < opts.max_iters {
        splitting_step(problem, &mut state)?;
        if opts.trace {
            trace.push(IterationRecord {
                iteration: state.iteration,
                primal_residual: state.primal_residual,
                dual_residual: state.dual_residual,
                penalty: state.rho,
                objective: problem.objective(&state.x),
            });
        }
        let worst = state.primal_residual.max(state.dual_residual);
        if worst <= opts.tol {
            status = SolverStatus::Converged;
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| worst < *b) {
            best = Some((worst, state.clone()));
        }
        if opts.penalty_adapt && state.iteration % 100 == 0 {
            let factor = if state.primal_residual > 10.0 * state.dual_residual {
                2.0
            } else if state.dual_residual > 10.0 * state.primal_residual {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                state.rho *= factor;
                for u in &mut state.u {
                    u.unscale_mut(factor);
                }
            }
        }
    }

    let state = match (status, best) {
        (SolverStatus::MaxIterations, Some((_, b))) => b,
        _ => state,
    };
    let diagnostics = SolverDiagnostics {
        status,
        iterations: state.iteration,
        primal_residual: state.primal_residual,
        dual_residual: state.dual_residual,
        penalty: state.rho,
        min_eigenvalue: state.min_eigenvalue,
        trace,
    };
    Ok(SplittingOutput {
        objective: problem.objective(&state.x),
        x: state.x,
        s: state.s,
        u: state.u,
        diagnostics,
    })
}
