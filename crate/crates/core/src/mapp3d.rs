//! Vandermonde decomposition of a three-level Toeplitz matrix,
//! `T = Σ_ℓ p_ℓ a(ζ_ℓ) a(ζ_ℓ)ᴴ`, in four steps: signal subspace, one matrix
//! pencil per active axis, joint pairing of the per-axis estimates, and
//! non-negative power estimation.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::atoms::{steering_vector, wrap_unit, Axis, Dims, Zeta};
use crate::error::{domain, Error, Result};
use crate::linalg::{eigenvalues, hermitian_eig_desc, pinv, CMat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Mapp3dOpts {
    /// Eigenvalues with `λ_k/λ_1` above this count toward the model order.
    pub ratio: f64,
    /// Upper bound on the model order; defaults to the pencil capacity.
    pub s_max: Option<usize>,
    /// Largest order searched exhaustively during pairing.
    pub pairing_cap: usize,
    /// Pair greedily instead of failing when the order exceeds the cap.
    pub greedy_pairing: bool,
    /// Atoms below this fraction of the largest power are dropped.
    pub prune_frac: f64,
    /// Relative cutoff of the pencil pseudo-inverse.
    pub pinv_rcond: f64,
}

impl Default for Mapp3dOpts {
    fn default() -> Self {
        Self {
            ratio: 1e-2,
            s_max: None,
            pairing_cap: 6,
            greedy_pairing: false,
            prune_frac: 1e-3,
            pinv_rcond: 1e-10,
        }
    }
}

/// Recovered atoms with their powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicEstimate {
    pub zetas: Vec<Zeta>,
    pub powers: Vec<f64>,
    pub s_hat: usize,
    /// The eigenvalue test did not find a sparse spectrum.
    pub non_sparse: bool,
    /// The power Gram matrix needed ridge regularization.
    pub ridge: bool,
    /// `‖T − Σ p a aᴴ‖_F / ‖T‖_F`.
    pub relative_residual: f64,
}

impl AtomicEstimate {
    fn empty() -> Self {
        Self {
            zetas: Vec::new(),
            powers: Vec::new(),
            s_hat: 0,
            non_sparse: false,
            ridge: false,
            relative_residual: 0.0,
        }
    }

    /// Index of the largest-power atom (first on ties).
    pub fn dominant(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &p) in self.powers.iter().enumerate() {
            if best.is_none_or(|b| p > self.powers[b]) {
                best = Some(i);
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct Subspace {
    /// `L×ŝ` orthonormal basis, descending eigenvalue order.
    pub u: CMat,
    pub s_hat: usize,
    pub eigenvalues: Vec<f64>,
    pub non_sparse: bool,
}

/// Largest order every active-axis pencil can resolve.
pub fn pencil_capacity(dims: Dims) -> usize {
    let l = dims.len();
    dims.active_axes()
        .into_iter()
        .map(|a| (dims.extent(a) - 1) * (l / dims.extent(a)))
        .min()
        .unwrap_or(1)
}

/// Step 1: dominant eigenvectors of `(T + Tᴴ)/2`.
pub fn signal_subspace(t: &CMat, s_max: usize, ratio: f64) -> Result<Subspace> {
    if t.nrows() != t.ncols() {
        return domain(format!("T must be square, got {}x{}", t.nrows(), t.ncols()));
    }
    let l = t.nrows();
    let (values, vectors) = hermitian_eig_desc(t)?;
    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Ok(Subspace { u: CMat::zeros(l, 0), s_hat: 0, eigenvalues: values, non_sparse: false });
    }
    let count = values.iter().take_while(|&&v| v / top > ratio).count();
    let s_hat = count.min(s_max);
    Ok(Subspace {
        u: vectors.columns(0, s_hat).into_owned(),
        s_hat,
        non_sparse: count > s_max || count == l,
        eigenvalues: values,
    })
}

/// Step 2: shift-invariance pencil along one axis. Returns one frequency in
/// `[0,1)` per subspace column, in eigenvalue order of the pencil.
pub fn pencil_1d(u: &CMat, dims: Dims, axis: Axis, rcond: f64) -> Result<Vec<f64>> {
    let extent = dims.extent(axis);
    if extent < 2 {
        return domain(format!("the {axis} axis has a single sample and cannot be estimated"));
    }
    if u.nrows() != dims.len() {
        return domain(format!("subspace has {} rows, expected {}", u.nrows(), dims.len()));
    }
    let s = u.ncols();
    if s == 0 {
        return Ok(Vec::new());
    }
    let stride = match axis {
        Axis::Doppler => 1,
        Axis::Delay => dims.p,
        Axis::Angle => dims.p * dims.q,
    };
    let up_rows: Vec<usize> =
        (0..dims.len()).filter(|&n| dims.coordinate(n, axis) + 1 < extent).collect();
    if up_rows.len() < s {
        return Err(Error::Unresolvable {
            axis,
            reason: format!("{} shifted rows cannot resolve {s} components", up_rows.len()),
        });
    }
    let u_up = CMat::from_fn(up_rows.len(), s, |i, j| u[(up_rows[i], j)]);
    let u_low = CMat::from_fn(up_rows.len(), s, |i, j| u[(up_rows[i] + stride, j)]);
    let gram = u_up.adjoint() * &u_up;
    let (inv, rank) = pinv(&gram, rcond)?;
    if rank < s {
        return Err(Error::Unresolvable {
            axis,
            reason: format!("pencil has rank {rank} below the model order {s}"),
        });
    }
    let phi = inv * (u_up.adjoint() * u_low);
    Ok(eigenvalues(&phi)?.into_iter().map(|z| wrap_unit(z.arg() / TAU)).collect())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    while next_permutation(&mut p) {
        out.push(p.clone());
    }
    out
}

/// `‖Uᴴ a(ζ)‖ / ‖a(ζ)‖`.
pub fn subspace_score(u: &CMat, zeta: Zeta, dims: Dims) -> f64 {
    let a = steering_vector(zeta, dims);
    (u.adjoint() * &a).norm() / a.norm()
}

/// Step 3: associates the per-axis estimates into triples.
///
/// `lists` holds one estimate list per active axis, the first of which
/// fixes the order. All permutations of the remaining lists are searched
/// and the assignment maximizing the summed subspace score is returned.
/// Equal scores keep the lexicographically first permutation pair.
pub fn pair_triples(
    lists: &[(Axis, Vec<f64>)],
    u: &CMat,
    dims: Dims,
    cap: usize,
    greedy: bool,
) -> Result<Vec<Zeta>> {
    let Some((_, first)) = lists.first() else {
        return domain("pairing needs at least one active axis");
    };
    let s = first.len();
    if lists.iter().any(|(_, v)| v.len() != s) {
        return domain("per-axis estimate lists differ in length");
    }
    let build = |idx: &[usize]| -> Zeta {
        let mut z = Zeta::default();
        for ((axis, vals), &i) in lists.iter().zip(idx) {
            z.set(*axis, vals[i]);
        }
        z
    };
    if lists.len() == 1 || s <= 1 {
        return Ok((0..s).map(|l| build(&vec![l; lists.len()])).collect());
    }
    if s > cap && !greedy {
        return Err(Error::PairingCap { s_hat: s, cap });
    }

    // score[ℓ][j][m]: first-axis estimate ℓ with entries j, m of the others.
    let m_axes = lists.len();
    let width = s.pow((m_axes - 1) as u32);
    let mut score = vec![0.0; s * width];
    for l in 0..s {
        for rest in 0..width {
            let mut idx = vec![l];
            let mut r = rest;
            for _ in 1..m_axes {
                idx.push(r % s);
                r /= s;
            }
            score[l * width + rest] = subspace_score(u, build(&idx), dims);
        }
    }
    let flat = |l: usize, rest: &[usize]| -> usize {
        let mut off = 0;
        let mut mul = 1;
        for &j in rest {
            off += j * mul;
            mul *= s;
        }
        l * width + off
    };

    if s > cap {
        let mut used = vec![vec![false; s]; m_axes - 1];
        let mut out = Vec::with_capacity(s);
        for l in 0..s {
            let mut best: Option<(f64, Vec<usize>)> = None;
            for rest in 0..width {
                let mut r = rest;
                let mut idx = Vec::with_capacity(m_axes - 1);
                for _ in 1..m_axes {
                    idx.push(r % s);
                    r /= s;
                }
                if idx.iter().enumerate().any(|(a, &j)| used[a][j]) {
                    continue;
                }
                let v = score[flat(l, &idx)];
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, idx));
                }
            }
            let (_, idx) = best.expect("an unused combination always remains");
            for (a, &j) in idx.iter().enumerate() {
                used[a][j] = true;
            }
            let mut full = vec![l];
            full.extend(idx);
            out.push(build(&full));
        }
        return Ok(out);
    }

    let perms = all_permutations(s);
    let mut best_val: Option<f64> = None;
    let mut best_choice: Vec<usize> = vec![0; m_axes - 1];
    let mut choice = vec![0usize; m_axes - 1];
    loop {
        let total: f64 = (0..s)
            .map(|l| {
                let rest: Vec<usize> = choice.iter().map(|&c| perms[c][l]).collect();
                score[flat(l, &rest)]
            })
            .sum();
        if best_val.is_none_or(|b| total > b + 1e-12 * b.abs()) {
            best_val = Some(total);
            best_choice.clone_from(&choice);
        }
        // Advance the permutation tuple in lexicographic order.
        let mut a = m_axes - 2;
        loop {
            choice[a] += 1;
            if choice[a] < perms.len() {
                break;
            }
            choice[a] = 0;
            if a == 0 {
                return Ok((0..s)
                    .map(|l| {
                        let mut idx = vec![l];
                        idx.extend(best_choice.iter().map(|&c| perms[c][l]));
                        build(&idx)
                    })
                    .collect());
            }
            a -= 1;
        }
    }
}

/// Non-negative least squares `min ½ pᵀGp − bᵀp, p ≥ 0` by the
/// Lawson–Hanson active-set method on the normal equations.
fn nnls_normal(g: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut p = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-14 * (1.0 + b.amax()) * (1.0 + g.amax());
    for _ in 0..(3 * n + 10) {
        let w = b - g * &p;
        let cand = (0..n).filter(|&i| !passive[i] && w[i] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let gp = DMatrix::from_fn(idx.len(), idx.len(), |r, c| g[(idx[r], idx[c])]);
            let bp = DVector::from_fn(idx.len(), |r, _| b[idx[r]]);
            let z = gp.clone().lu().solve(&bp).unwrap_or_else(|| gp.pseudo_inverse(1e-14).unwrap() * &bp);
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    p[i] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(p[i] / (p[i] - z[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                p[i] += alpha * (z[k] - p[i]);
                if p[i] <= 1e-15 * (1.0 + p.amax()) {
                    p[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    p
}

/// Powers and the fitting diagnostics for fixed atoms.
#[derive(Debug, Clone)]
pub struct PowerFit {
    /// Unpruned powers, aligned with the input atoms.
    pub powers: Vec<f64>,
    pub ridge: bool,
    /// Atoms kept after pruning, with their powers.
    pub estimate: AtomicEstimate,
}

/// Step 4: non-negative powers of fixed atoms, then pruning.
pub fn estimate_powers(t: &CMat, zetas: &[Zeta], dims: Dims, prune_frac: f64) -> Result<PowerFit> {
    if zetas.is_empty() {
        return domain("power estimation needs at least one atom");
    }
    let l = dims.len();
    if t.nrows() != l || t.ncols() != l {
        return domain(format!("T is {}x{}, expected {l}x{l}", t.nrows(), t.ncols()));
    }
    let atoms: Vec<_> = zetas.iter().map(|&z| steering_vector(z, dims)).collect();
    let n = atoms.len();
    let mut g = DMatrix::from_fn(n, n, |i, j| atoms[i].dotc(&atoms[j]).norm_sqr());
    let b = DVector::from_fn(n, |i, _| atoms[i].dotc(&(t * &atoms[i])).re);

    let sv = g.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let ridge = smin <= 1e-12 * smax;
    if ridge {
        let lambda = 1e-8 * g.trace();
        for i in 0..n {
            g[(i, i)] += lambda;
        }
    }
    let powers: Vec<f64> = nnls_normal(&g, &b).iter().copied().collect();

    let top = powers.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..n).filter(|&i| top > 0.0 && powers[i] >= prune_frac * top).collect();
    let mut recon = t.clone();
    for &i in &keep {
        recon -= (&atoms[i] * atoms[i].adjoint()).scale(powers[i]);
    }
    let tn = t.norm();
    let estimate = AtomicEstimate {
        zetas: keep.iter().map(|&i| zetas[i]).collect(),
        powers: keep.iter().map(|&i| powers[i]).collect(),
        s_hat: keep.len(),
        non_sparse: false,
        ridge,
        relative_residual: if tn > 0.0 { recon.norm() / tn } else { 0.0 },
    };
    Ok(PowerFit { powers, ridge, estimate })
}

/// Full decomposition of a three-level Toeplitz matrix. Axes with a single
/// sample are fixed to 0 and skipped by the pencil and pairing steps.
/// Atoms are returned sorted by their coordinates (delay, Doppler, angle).
pub fn decompose(t: &CMat, dims: Dims, opts: &Mapp3dOpts) -> Result<AtomicEstimate> {
    let l = dims.len();
    if t.nrows() != l || t.ncols() != l {
        return domain(format!("T is {}x{}, expected {l}x{l}", t.nrows(), t.ncols()));
    }
    let s_max = opts.s_max.unwrap_or_else(|| pencil_capacity(dims)).max(1);
    let sub = signal_subspace(t, s_max, opts.ratio)?;
    if sub.s_hat == 0 {
        return Ok(AtomicEstimate::empty());
    }

    let axes = dims.active_axes();
    let mut lists = Vec::with_capacity(axes.len());
    for &axis in &axes {
        lists.push((axis, pencil_1d(&sub.u, dims, axis, opts.pinv_rcond)?));
    }
    let zetas = if axes.is_empty() {
        vec![Zeta::default()]
    } else {
        pair_triples(&lists, &sub.u, dims, opts.pairing_cap, opts.greedy_pairing)?
    };

    let mut est = estimate_powers(t, &zetas, dims, opts.prune_frac)?.estimate;
    est.non_sparse = sub.non_sparse;
    let mut order: Vec<usize> = (0..est.s_hat).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (est.zetas[a], est.zetas[b]);
        za.tau.total_cmp(&zb.tau).then(za.nu.total_cmp(&zb.nu)).then(za.theta.total_cmp(&zb.theta))
    });
    est.zetas = order.iter().map(|&i| est.zetas[i]).collect();
    est.powers = order.iter().map(|&i| est.powers[i]).collect();
    Ok(est)
}
