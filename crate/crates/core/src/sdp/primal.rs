//! Primal atomic-norm SDP.
//!
//! For every user `i` the solver finds a Hermitian block
//!
//! ```text
//! S_i = [ T(V_i)  G_i ]  ⪰ 0,   G_i = Z_iᵀ ∈ C^{L×k_i}
//!       [ G_iᴴ    W_i ]
//! ```
//!
//! minimizing `Σ_i (1/2L) tr T(V_i) + ½ tr W_i` subject to
//! `‖y − Σ_i meas_i(Z_i)‖ ≤ η`, where `meas_i(Z)_n = Σ_k D_i[n,k] Z[k,n]`.

use serde::{Deserialize, Serialize};

use super::splitting::{run, SolverDiagnostics, SolverOpts, SplittingProblem};
use crate::atoms::{toeplitz_generator, toeplitz_project, Dims, ToeplitzTensor};
use crate::error::{domain, Result};
use crate::linalg::{hermitian_part, min_eigenvalue, CMat, CVec, C64};
use crate::model::{stacked_row_norms, Codebook, MeasurementSet};

/// Solution of the primal program for one user.
#[derive(Debug, Clone)]
pub struct UserBlock {
    /// `T(V_i)`, `L×L`.
    pub toeplitz: CMat,
    /// Generator `V_i` of `toeplitz`.
    pub generator: ToeplitzTensor,
    /// `Z_i`, `k_i×L`.
    pub z: CMat,
    /// `W_i`, `k_i×k_i`.
    pub w: CMat,
    /// `(1/2L) tr T(V_i) + ½ tr W_i`.
    pub atomic_norm: f64,
    /// Smallest eigenvalue of the assembled block.
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub users: Vec<UserBlock>,
    pub objective: f64,
    /// `‖y − Σ_i meas_i(Z_i)‖`.
    pub residual_norm: f64,
    pub eta: f64,
    pub diagnostics: SolverDiagnostics,
}

/// Invariants of a returned primal solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimalChecks {
    /// Data residual exceeds `η` by at most this relative amount.
    pub feasibility_excess: f64,
    pub min_block_eigenvalue: f64,
    pub objective_non_negative: bool,
}

impl PrimalSolution {
    pub fn checks(&self, y_norm: f64) -> PrimalChecks {
        PrimalChecks {
            feasibility_excess: ((self.residual_norm - self.eta) / y_norm.max(f64::MIN_POSITIVE)).max(0.0),
            min_block_eigenvalue: self.users.iter().map(|u| u.min_eigenvalue).fold(f64::INFINITY, f64::min),
            objective_non_negative: self.objective >= 0.0,
        }
    }
}

/// `meas(Z)_n = Σ_k D[n,k]·Z[k,n]` for one user.
pub fn measure(codebook: &Codebook, z: &CMat) -> Result<CVec> {
    let d = &codebook.matrix;
    if z.nrows() != d.ncols() || z.ncols() != d.nrows() {
        return domain(format!(
            "Z is {}x{}, codebook implies {}x{}",
            z.nrows(),
            z.ncols(),
            d.ncols(),
            d.nrows()
        ));
    }
    Ok(CVec::from_fn(d.nrows(), |n, _| (0..d.ncols()).map(|k| d[(n, k)] * z[(k, n)]).sum()))
}

struct PrimalProblem<'a> {
    dims: Dims,
    codebooks: Vec<&'a Codebook>,
    y: CVec,
    eta: f64,
    row_norms: Vec<f64>,
}

impl PrimalProblem<'_> {
    fn l(&self) -> usize {
        self.dims.len()
    }

    /// Euclidean projection of the stacked `G_i` onto the data-fidelity set.
    /// The constraint acts on each sample index separately, so the
    /// correction is a per-sample shrinkage of the residual with a common
    /// multiplier found by bisection.
    fn project_data(&self, g: &mut [CMat]) -> Result<()> {
        let l = self.l();
        let mut r0 = self.y.clone();
        for (cb, gi) in self.codebooks.iter().zip(g.iter()) {
            for n in 0..l {
                for k in 0..gi.ncols() {
                    r0[n] -= cb.matrix[(n, k)] * gi[(n, k)];
                }
            }
        }
        if r0.norm() <= self.eta {
            return Ok(());
        }

        let w = &self.row_norms;
        let shrink = |mu: f64| -> f64 {
            (0..l).map(|n| r0[n].norm_sqr() / (1.0 + mu * w[n]).powi(2)).sum()
        };
        let target = self.eta * self.eta;
        let unreachable: f64 = (0..l).filter(|&n| w[n] == 0.0).map(|n| r0[n].norm_sqr()).sum();
        if unreachable > target {
            return domain("data constraint is infeasible: some samples are not reachable by any codebook");
        }

        let r: Vec<C64> = if self.eta == 0.0 {
            (0..l).map(|n| if w[n] > 0.0 { C64::new(0.0, 0.0) } else { r0[n] }).collect()
        } else {
            let mut hi = 1.0;
            while shrink(hi) > target {
                hi *= 2.0;
                if hi > 1e300 {
                    return domain("data projection multiplier diverged");
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if shrink(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            (0..l).map(|n| r0[n] / (1.0 + hi * w[n])).collect()
        };

        for (cb, gi) in self.codebooks.iter().zip(g.iter_mut()) {
            for n in 0..l {
                if w[n] == 0.0 {
                    continue;
                }
                let step = (r0[n] - r[n]) / w[n];
                for k in 0..gi.ncols() {
                    gi[(n, k)] += cb.matrix[(n, k)].conj() * step;
                }
            }
        }
        Ok(())
    }
}

impl SplittingProblem for PrimalProblem<'_> {
    fn block_sizes(&self) -> Vec<usize> {
        self.codebooks.iter().map(|cb| self.l() + cb.k()).collect()
    }

    fn prox(&self, targets: &[CMat], rho: f64) -> Result<Vec<CMat>> {
        let l = self.l();
        let mut tops = Vec::with_capacity(targets.len());
        let mut ws = Vec::with_capacity(targets.len());
        let mut gs = Vec::with_capacity(targets.len());
        for t in targets {
            let k = t.nrows() - l;
            let mut tl = hermitian_part(&t.view((0, 0), (l, l)).into_owned());
            for n in 0..l {
                tl[(n, n)] -= 1.0 / (2.0 * l as f64 * rho);
            }
            tops.push(toeplitz_project(&tl, self.dims)?);

            let mut w = hermitian_part(&t.view((l, l), (k, k)).into_owned());
            for j in 0..k {
                w[(j, j)] -= 1.0 / (2.0 * rho);
            }
            ws.push(w);

            let upper = t.view((0, l), (l, k));
            let lower = t.view((l, 0), (k, l));
            gs.push((upper + lower.adjoint()).scale(0.5));
        }
        self.project_data(&mut gs)?;

        Ok(tops
            .into_iter()
            .zip(ws)
            .zip(gs)
            .map(|((top, w), g)| assemble(&top, &g, &w))
            .collect())
    }

    fn objective(&self, x: &[CMat]) -> f64 {
        let l = self.l();
        x.iter()
            .map(|b| {
                let tr_t: f64 = (0..l).map(|n| b[(n, n)].re).sum();
                let tr_w: f64 = (l..b.nrows()).map(|n| b[(n, n)].re).sum();
                tr_t / (2.0 * l as f64) + 0.5 * tr_w
            })
            .sum()
    }
}

fn assemble(top: &CMat, g: &CMat, w: &CMat) -> CMat {
    let (l, k) = (top.nrows(), w.nrows());
    let mut b = CMat::zeros(l + k, l + k);
    b.view_mut((0, 0), (l, l)).copy_from(top);
    b.view_mut((0, l), (l, k)).copy_from(g);
    b.view_mut((l, 0), (k, l)).copy_from(&g.adjoint());
    b.view_mut((l, l), (k, k)).copy_from(w);
    b
}

pub(crate) fn check_inputs(dims: Dims, y: &CVec, eta: f64, codebooks: &[&Codebook]) -> Result<()> {
    let l = dims.len();
    if y.len() != l {
        return domain(format!("y has {} samples, dimensions imply L = {l}", y.len()));
    }
    if codebooks.is_empty() {
        return domain("at least one codebook is required");
    }
    for (i, cb) in codebooks.iter().enumerate() {
        if cb.matrix.nrows() != l || cb.k() == 0 {
            return domain(format!("codebook {} is {}x{}, expected L = {l} rows", i + 1, cb.matrix.nrows(), cb.k()));
        }
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return domain(format!("noise bound must be finite and non-negative, got {eta}"));
    }
    if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return domain("measurements contain non-finite values");
    }
    Ok(())
}

/// Solves the primal SDP for raw inputs.
pub fn solve_primal_raw(
    dims: Dims,
    y: &CVec,
    eta: f64,
    codebooks: &[&Codebook],
    opts: &SolverOpts,
) -> Result<PrimalSolution> {
    check_inputs(dims, y, eta, codebooks)?;
    let l = dims.len();
    let scale = y.norm();
    if scale == 0.0 {
        return domain("measurement vector is identically zero");
    }

    let problem = PrimalProblem {
        dims,
        codebooks: codebooks.to_vec(),
        y: y.unscale(scale),
        eta: eta / scale,
        row_norms: stacked_row_norms(codebooks, l),
    };
    let out = run(&problem, opts)?;

    let mut users = Vec::with_capacity(codebooks.len());
    let mut fitted = CVec::zeros(l);
    for (cb, block) in codebooks.iter().zip(&out.x) {
        let k = cb.k();
        let block = block.scale(scale);
        let top = block.view((0, 0), (l, l)).into_owned();
        let z = block.view((0, l), (l, k)).transpose();
        let w = block.view((l, l), (k, k)).into_owned();
        fitted += measure(cb, &z)?;
        let tr_t: f64 = top.diagonal().iter().map(|c| c.re).sum();
        let tr_w: f64 = w.diagonal().iter().map(|c| c.re).sum();
        users.push(UserBlock {
            generator: toeplitz_generator(&top, dims)?,
            min_eigenvalue: min_eigenvalue(&block),
            atomic_norm: tr_t / (2.0 * l as f64) + 0.5 * tr_w,
            toeplitz: top,
            z,
            w,
        });
    }

    Ok(PrimalSolution {
        objective: users.iter().map(|u| u.atomic_norm).sum(),
        residual_norm: (y - fitted).norm(),
        eta,
        users,
        diagnostics: out.diagnostics,
    })
}

/// Solves the primal SDP for a measurement set.
pub fn solve_primal(meas: &MeasurementSet, opts: &SolverOpts) -> Result<PrimalSolution> {
    solve_primal_raw(meas.dims, &meas.y, meas.eta, &meas.codebooks(), opts)
}
