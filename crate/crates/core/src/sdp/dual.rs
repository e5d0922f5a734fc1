//! Dual atomic-norm SDP.
//!
//! Maximizes `Re⟨q, y⟩ − η‖q‖` over `q ∈ C^L` such that for every user
//!
//! ```text
//! [ Q_i   Λ_iᴴ ]  ⪰ 0,   Λ_i = Σ_n q_n conj(d_n^i) e_nᵀ,
//! [ Λ_i   I    ]
//! ```
//!
//! with `Q_i` Hermitian and its three-level lag sums equal to one at lag
//! zero and zero elsewhere. Each block certifies
//! `sup_ζ ‖Σ_n q_n conj(d_n^i) conj(a_n(ζ))‖ ≤ 1`.

use super::primal::check_inputs;
use super::splitting::{run, SolverDiagnostics, SolverOpts, SplittingProblem};
use crate::atoms::{toeplitz_adjoint, toeplitz_apply, Dims, ToeplitzTensor};
use crate::error::{domain, Result};
use crate::linalg::{hermitian_part, CMat, CVec, C64};
use crate::model::{stacked_row_norms, Codebook, MeasurementSet};

#[derive(Debug, Clone)]
pub struct DualSolution {
    /// Dual vector `q`.
    pub q: CVec,
    /// Per-user `Q_i` blocks.
    pub gram: Vec<CMat>,
    /// `Re⟨q, y⟩ − η‖q‖`.
    pub objective: f64,
    pub diagnostics: SolverDiagnostics,
}

/// `Λ_i` as a `k_i×L` matrix: column `n` is `q_n·conj(d_n^i)`.
pub fn lambda_matrix(q: &CVec, codebook: &Codebook) -> CMat {
    let d = &codebook.matrix;
    CMat::from_fn(d.ncols(), d.nrows(), |k, n| q[n] * d[(n, k)].conj())
}

struct DualProblem<'a> {
    dims: Dims,
    codebooks: Vec<&'a Codebook>,
    y: CVec,
    eta: f64,
    row_norms: Vec<f64>,
}

impl DualProblem<'_> {
    fn l(&self) -> usize {
        self.dims.len()
    }

    /// Projection of a Hermitian matrix onto `{Q : lag sums = δ}`.
    fn project_lags(&self, h: &CMat) -> Result<CMat> {
        let sums = toeplitz_adjoint(h, self.dims)?;
        let fix = ToeplitzTensor::from_fn(self.dims, |k1, k2, k3| {
            let target = if (k1, k2, k3) == (0, 0, 0) { 1.0 } else { 0.0 };
            (sums.get(k1, k2, k3) - target) / ToeplitzTensor::lag_count(self.dims, k1, k2, k3) as f64
        });
        Ok(h - toeplitz_apply(&fix, self.dims)?)
    }

    /// Minimizer of `Σ_n ρ a_n |q_n|² − Re(conj(q_n) c_n) + η‖q‖`.
    fn solve_q(&self, c: &CVec, rho: f64) -> CVec {
        let a = &self.row_norms;
        let l = self.l();
        let direct = |t: f64| -> CVec {
            CVec::from_fn(l, |n, _| {
                let den = 2.0 * rho * a[n] * t + self.eta;
                if den > 0.0 {
                    c[n] * (t / den)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        };
        if self.eta == 0.0 {
            return direct(1.0);
        }
        if c.norm() <= self.eta {
            return CVec::zeros(l);
        }
        // Σ |c_n|² / (2ρ a_n t + η)² = 1 is decreasing in t = ‖q‖.
        let phi = |t: f64| -> f64 {
            (0..l).map(|n| c[n].norm_sqr() / (2.0 * rho * a[n] * t + self.eta).powi(2)).sum()
        };
        let mut hi = 1.0;
        while phi(hi) > 1.0 && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        direct(0.5 * (lo + hi))
    }
}

impl SplittingProblem for DualProblem<'_> {
    fn block_sizes(&self) -> Vec<usize> {
        self.codebooks.iter().map(|cb| self.l() + cb.k()).collect()
    }

    fn prox(&self, targets: &[CMat], rho: f64) -> Result<Vec<CMat>> {
        let l = self.l();
        let mut grams = Vec::with_capacity(targets.len());
        let mut beta = CVec::zeros(l);
        for (t, cb) in targets.iter().zip(&self.codebooks) {
            let k = cb.k();
            let h = hermitian_part(&t.view((0, 0), (l, l)).into_owned());
            grams.push(self.project_lags(&h)?);
            let lower = t.view((l, 0), (k, l));
            let upper = t.view((0, l), (l, k));
            let m = (lower + upper.adjoint()).scale(0.5);
            for n in 0..l {
                for j in 0..k {
                    beta[n] += cb.matrix[(n, j)] * m[(j, n)];
                }
            }
        }
        let c = beta.scale(2.0 * rho) + &self.y;
        let q = self.solve_q(&c, rho);

        Ok(grams
            .into_iter()
            .zip(&self.codebooks)
            .map(|(gram, cb)| {
                let k = cb.k();
                let lam = lambda_matrix(&q, cb);
                let mut b = CMat::zeros(l + k, l + k);
                b.view_mut((0, 0), (l, l)).copy_from(&gram);
                b.view_mut((0, l), (l, k)).copy_from(&lam.adjoint());
                b.view_mut((l, 0), (k, l)).copy_from(&lam);
                b.view_mut((l, l), (k, k)).fill_with_identity();
                b
            })
            .collect())
    }

    fn objective(&self, x: &[CMat]) -> f64 {
        let q = extract_q(&x[0], self.codebooks[0], self.l());
        -(q.dotc(&self.y).re) + self.eta * q.norm()
    }
}

/// Recovers `q` from the lower-left block `Λ` of one user.
fn extract_q(block: &CMat, cb: &Codebook, l: usize) -> CVec {
    let k = cb.k();
    CVec::from_fn(l, |n, _| {
        let d = cb.matrix.row(n);
        let norm = d.norm_squared();
        if norm == 0.0 {
            return C64::new(0.0, 0.0);
        }
        (0..k).map(|j| block[(l + j, n)] * d[j]).sum::<C64>() / norm
    })
}

/// Solves the dual SDP for raw inputs.
pub fn solve_dual_raw(
    dims: Dims,
    y: &CVec,
    eta: f64,
    codebooks: &[&Codebook],
    opts: &SolverOpts,
) -> Result<DualSolution> {
    check_inputs(dims, y, eta, codebooks)?;
    let l = dims.len();
    let scale = y.norm();
    if scale == 0.0 {
        return domain("measurement vector is identically zero");
    }
    let problem = DualProblem {
        dims,
        codebooks: codebooks.to_vec(),
        y: y.unscale(scale),
        eta: eta / scale,
        row_norms: stacked_row_norms(codebooks, l),
    };
    let out = run(&problem, opts)?;
    let q = extract_q(&out.x[0], codebooks[0], l);
    let gram = out.x.iter().map(|b| b.view((0, 0), (l, l)).into_owned()).collect();
    Ok(DualSolution {
        objective: q.dotc(y).re - eta * q.norm(),
        q,
        gram,
        diagnostics: out.diagnostics,
    })
}

/// Solves the dual SDP for a measurement set.
pub fn solve_dual(meas: &MeasurementSet, opts: &SolverOpts) -> Result<DualSolution> {
    solve_dual_raw(meas.dims, &meas.y, meas.eta, &meas.codebooks(), opts)
}
