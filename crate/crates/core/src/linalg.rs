//! Dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;


#[inline]
pub(crate) fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// `(M + Mᴴ)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues in
/// descending order with matching eigenvector columns.
pub fn hermitian_eig_desc(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Domain(format!("eigendecomposition of a {}x{} matrix", n, m.ncols())));
    }
    let h = hermitian_part(m);
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite entries in Hermitian eigenproblem".into()));
    }
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Projection onto the PSD cone: negative eigenvalues of the Hermitian part
/// are clipped to zero. Also returns the smallest eigenvalue seen.
pub fn project_psd(m: &CMat) -> Result<(CMat, f64)> {
    let n = m.nrows();
    let h = hermitian_part(m);
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite entries in PSD projection".into()));
    }
    let eig = h.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig >= 0.0 {
        return Ok((m.clone(), min_eig));
    }
    let mut out = CMat::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out.ger(C64::new(lam, 0.0), &v, &v.conjugate(), C64::new(1.0, 0.0));
    }
    Ok((hermitian_part(&out), min_eig))
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Moore–Penrose pseudo-inverse with a relative singular-value cutoff.
/// Returns the inverse and the numerical rank.
pub fn pinv(m: &CMat, rcond: f64) -> Result<(CMat, usize)> {
    let svd = m.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rcond * smax;
    let mut rank = 0;
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let v = vt.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (v * uk).scale(1.0 / s);
        }
    }
    Ok((out, rank))
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Eigenvalues of a general (non-Hermitian) complex square matrix.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let n = m.nrows();
    match n {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![m[(0, 0)]]),
        _ => {}
    }
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("complex Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Least squares `min ‖A x − b‖` through the pseudo-inverse.
pub fn lstsq(a: &CMat, b: &CVec, rcond: f64) -> Result<(CVec, usize)> {
    let (p, rank) = pinv(a, rcond)?;
    Ok((p * b, rank))
}

/// Frobenius inner product `Σ a_ij conj(b_ij)`.
pub fn inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, seed: u64) -> CMat {
        let mut rng = crate::rng::stream_rng(seed, "linalg-test", 0);
        CMat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn psd_projection_is_identity_on_psd_input() {
        let a = random(7, 1);
        let psd = &a * a.adjoint();
        let (p, _) = project_psd(&psd).unwrap();
        assert!((p - &psd).norm() <= 1e-10 * psd.norm());
    }

    #[test]
    fn psd_projection_clips_negative_part() {
        let a = random(6, 2);
        let h = hermitian_part(&a);
        let (p, min_eig) = project_psd(&h).unwrap();
        assert!(min_eig < 0.0);
        assert!(min_eigenvalue(&p) >= -1e-12);
        // the residual is negative semidefinite
        assert!(min_eigenvalue(&(&p - &h)) >= -1e-12);
    }

    #[test]
    fn eig_descending_reconstructs() {
        let a = random(5, 3);
        let h = hermitian_part(&a);
        let (vals, vecs) = hermitian_eig_desc(&h).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let d = CMat::from_diagonal(&CVec::from_iterator(5, vals.iter().map(|&v| C64::new(v, 0.0))));
        assert!((&vecs * d * vecs.adjoint() - h).norm() < 1e-12);
    }

    #[test]
    fn general_eigenvalues_of_similar_diagonal() {
        let t = random(4, 4);
        let d = [cis(0.3), cis(1.1), cis(-2.0), C64::new(0.5, 0.2)];
        let dm = CMat::from_diagonal(&CVec::from_row_slice(&d));
        let (ti, _) = pinv(&t, 1e-14).unwrap();
        let m = &t * dm * ti;
        let ev = eigenvalues(&m).unwrap();
        for want in d {
            assert!(ev.iter().any(|z| (z - want).norm() < 1e-10), "missing {want}");
        }
    }

    #[test]
    fn pinv_reports_rank() {
        let a = random(4, 5);
        let v = a.columns(0, 2).into_owned();
        let low = &v * v.adjoint();
        let (_, r) = pinv(&low, 1e-10).unwrap();
        assert_eq!(r, 2);
    }

    #[test]
    fn pinv_satisfies_penrose_identities() {
        for (m, n, r) in [(3, 2, 1), (6, 4, 2), (5, 7, 3), (8, 8, 8)] {
            let mut rng = crate::rng::stream_rng(m as u64, "pinv-test", n as u64);
            let mut draw = |rows, cols| CMat::from_fn(rows, cols, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let a = draw(m, r) * draw(r, n);
            let (p, rank) = pinv(&a, 1e-10).unwrap();
            assert_eq!(rank, r);
            assert!((&a * &p * &a - &a).norm() < 1e-10 * a.norm());
            assert!((&p * &a * &p - &p).norm() < 1e-10 * p.norm());
            let ap = &a * &p;
            assert!((&ap - ap.adjoint()).norm() < 1e-10);
        }
    }
}
