//! Steering vectors, the unified time–frequency–space index and the
//! three-level Toeplitz operator.
//!
//! Samples are laid out with a single index `n = p + P·q + P·Q·r`, where `p`
//! is the OFDM block, `q` the subcarrier and `r` the receive antenna. Every
//! module uses this one bijection.
//!
//! The normalized parameter triple `ζ = (τ, ν, θ)` maps onto the index axes
//! as delay ↔ subcarrier `q`, Doppler ↔ block `p`, angle ↔ antenna `r`, so
//! that `[a(ζ)]ₙ = exp(j2π(qτ + pν + rθ))`.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::{cis, CMat, CVec, C64};
use crate::model::Codebook;

/// One of the three harmonic axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Delay,
    Doppler,
    Angle,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Delay, Axis::Doppler, Axis::Angle];
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Delay => "delay",
            Axis::Doppler => "doppler",
            Axis::Angle => "angle",
        })
    }
}

/// Sample-grid extents: `p` OFDM blocks, `q` subcarriers, `nr` antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub p: usize,
    pub q: usize,
    pub nr: usize,
}

/// A decoded unified index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnifiedIndex {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl Dims {
    pub fn new(p: usize, q: usize, nr: usize) -> Result<Self> {
        if p == 0 || q == 0 || nr == 0 {
            return domain(format!("dimensions must be positive, got P={p} Q={q} N_r={nr}"));
        }
        Ok(Self { p, q, nr })
    }

    /// Total number of samples `L = P·Q·N_r`.
    pub fn len(&self) -> usize {
        self.p * self.q * self.nr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, p: usize, q: usize, r: usize) -> usize {
        p + self.p * q + self.p * self.q * r
    }

    pub fn decode(&self, n: usize) -> UnifiedIndex {
        let p = n % self.p;
        let q = (n / self.p) % self.q;
        let r = n / (self.p * self.q);
        UnifiedIndex { n, p, q, r }
    }

    /// Number of samples along an axis.
    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::Delay => self.q,
            Axis::Doppler => self.p,
            Axis::Angle => self.nr,
        }
    }

    /// Axes with more than one sample (the only ones carrying information).
    pub fn active_axes(&self) -> Vec<Axis> {
        Axis::ALL.into_iter().filter(|&a| self.extent(a) > 1).collect()
    }

    /// Index of sample `n` along `axis`.
    pub fn coordinate(&self, n: usize, axis: Axis) -> usize {
        let u = self.decode(n);
        match axis {
            Axis::Delay => u.q,
            Axis::Doppler => u.p,
            Axis::Angle => u.r,
        }
    }
}

/// Normalized delay–Doppler–angle triple on the torus `[0,1)³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Zeta {
    pub tau: f64,
    pub nu: f64,
    pub theta: f64,
}

impl Zeta {
    pub fn new(tau: f64, nu: f64, theta: f64) -> Self {
        Self { tau, nu, theta }
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Delay => self.tau,
            Axis::Doppler => self.nu,
            Axis::Angle => self.theta,
        }
    }

    pub fn set(&mut self, axis: Axis, value: f64) {
        match axis {
            Axis::Delay => self.tau = value,
            Axis::Doppler => self.nu = value,
            Axis::Angle => self.theta = value,
        }
    }

    /// Each coordinate reduced into `[0,1)`.
    pub fn wrapped(&self) -> Self {
        Self::new(wrap_unit(self.tau), wrap_unit(self.nu), wrap_unit(self.theta))
    }

    /// Largest per-coordinate wrap-around distance to `other`.
    pub fn max_torus_distance(&self, other: &Zeta) -> f64 {
        Axis::ALL
            .iter()
            .map(|&a| torus_distance(self.get(a), other.get(a)))
            .fold(0.0, f64::max)
    }
}

/// Reduces `x` into `[0,1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Wrap-around distance between two points of the unit circle `[0,1)`.
pub fn torus_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// `a(ζ)` with entries `exp(j2π(qτ + pν + rθ))` in unified-index order.
pub fn steering_vector(zeta: Zeta, dims: Dims) -> CVec {
    CVec::from_iterator(
        dims.len(),
        (0..dims.len()).map(|n| {
            let u = dims.decode(n);
            cis(TAU * (u.q as f64 * zeta.tau + u.p as f64 * zeta.nu + u.r as f64 * zeta.theta))
        }),
    )
}

/// The rank-one measurement matrix `Bₙ = conj(dₙ) eₙᵀ` (`k × L`).
///
/// With the trace inner product `⟨Z, B⟩ = tr(Bᴴ Z)` this gives
/// `⟨Z, Bₙ⟩ = dₙᵀ Z eₙ`, i.e. the same bilinear pairing `x_n = dₙᵀ f` that
/// generates the measurements.
pub fn measurement_matrix(codebook: &Codebook, n: usize) -> Result<CMat> {
    let l = codebook.matrix.nrows();
    if n >= l {
        return domain(format!("sample index {n} out of range for L={l}"));
    }
    let k = codebook.matrix.ncols();
    let mut b = CMat::zeros(k, l);
    for j in 0..k {
        b[(j, n)] = codebook.matrix[(n, j)].conj();
    }
    Ok(b)
}

/// Generator of a three-level Toeplitz matrix: one complex value per lag
/// `(k₁, k₂, k₃)` with `|k₁| < P`, `|k₂| < Q`, `|k₃| < N_r`.
///
/// Lags are ordered along (block, subcarrier, antenna), matching the
/// multi-index `(p, q, r)` of the unified layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzTensor {
    dims: Dims,
    entries: Vec<C64>,
}

impl ToeplitzTensor {
    pub fn zeros(dims: Dims) -> Self {
        let len = (2 * dims.p - 1) * (2 * dims.q - 1) * (2 * dims.nr - 1);
        Self { dims, entries: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(isize, isize, isize) -> C64) -> Self {
        let mut t = Self::zeros(dims);
        for k3 in t.range(2) {
            for k2 in t.range(1) {
                for k1 in t.range(0) {
                    let idx = t.offset(k1, k2, k3);
                    t.entries[idx] = f(k1, k2, k3);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn range(&self, level: usize) -> std::ops::RangeInclusive<isize> {
        let e = [self.dims.p, self.dims.q, self.dims.nr][level] as isize;
        -(e - 1)..=(e - 1)
    }

    fn offset(&self, k1: isize, k2: isize, k3: isize) -> usize {
        let (p, q, nr) = (self.dims.p as isize, self.dims.q as isize, self.dims.nr as isize);
        debug_assert!(k1.abs() < p && k2.abs() < q && k3.abs() < nr);
        ((k1 + p - 1) + (2 * p - 1) * ((k2 + q - 1) + (2 * q - 1) * (k3 + nr - 1))) as usize
    }

    pub fn get(&self, k1: isize, k2: isize, k3: isize) -> C64 {
        self.entries[self.offset(k1, k2, k3)]
    }

    pub fn set(&mut self, k1: isize, k2: isize, k3: isize, value: C64) {
        let idx = self.offset(k1, k2, k3);
        self.entries[idx] = value;
    }

    /// Entrywise inner product `Σ_k A(k)·conj(B(k))`.
    pub fn inner(&self, other: &ToeplitzTensor) -> C64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a * b.conj()).sum()
    }

    /// Number of `(m, n)` pairs of the `L×L` matrix that fall on lag `k`.
    pub fn lag_count(dims: Dims, k1: isize, k2: isize, k3: isize) -> usize {
        (dims.p - k1.unsigned_abs()) * (dims.q - k2.unsigned_abs()) * (dims.nr - k3.unsigned_abs())
    }

    pub fn iter(&self) -> impl Iterator<Item = ((isize, isize, isize), C64)> + '_ {
        let (r1, r2, r3) = (self.range(0), self.range(1), self.range(2));
        r3.flat_map(move |k3| {
            let r1 = r1.clone();
            r2.clone().flat_map(move |k2| r1.clone().map(move |k1| (k1, k2, k3)))
        })
        .map(move |(k1, k2, k3)| ((k1, k2, k3), self.get(k1, k2, k3)))
    }
}

/// Lag between two unified indices along (block, subcarrier, antenna).
#[inline]
fn lag(dims: &Dims, m: usize, n: usize) -> (isize, isize, isize) {
    let (a, b) = (dims.decode(m), dims.decode(n));
    (a.p as isize - b.p as isize, a.q as isize - b.q as isize, a.r as isize - b.r as isize)
}

fn check_square(m: &CMat, dims: Dims) -> Result<()> {
    let l = dims.len();
    if m.nrows() != l || m.ncols() != l {
        return domain(format!("expected a {l}x{l} matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(())
}

/// `[T(V)]_{m,n} = V(m₁−n₁, m₂−n₂, m₃−n₃)`.
pub fn toeplitz_apply(v: &ToeplitzTensor, dims: Dims) -> Result<CMat> {
    if v.dims != dims {
        return domain(format!("Toeplitz generator built for {:?}, applied with {:?}", v.dims, dims));
    }
    let l = dims.len();
    Ok(CMat::from_fn(l, l, |m, n| {
        let (k1, k2, k3) = lag(&dims, m, n);
        v.get(k1, k2, k3)
    }))
}

/// Adjoint of [`toeplitz_apply`]: sums the entries of `m` on each lag class.
pub fn toeplitz_adjoint(m: &CMat, dims: Dims) -> Result<ToeplitzTensor> {
    check_square(m, dims)?;
    let mut v = ToeplitzTensor::zeros(dims);
    let l = dims.len();
    for col in 0..l {
        for row in 0..l {
            let (k1, k2, k3) = lag(&dims, row, col);
            let idx = v.offset(k1, k2, k3);
            v.entries[idx] += m[(row, col)];
        }
    }
    Ok(v)
}

/// Lag-class averages of `m`, Hermitian-symmetrized.
pub fn toeplitz_generator(m: &CMat, dims: Dims) -> Result<ToeplitzTensor> {
    let sums = toeplitz_adjoint(m, dims)?;
    Ok(ToeplitzTensor::from_fn(dims, |k1, k2, k3| {
        let count = ToeplitzTensor::lag_count(dims, k1, k2, k3) as f64;
        let here = sums.get(k1, k2, k3) / count;
        let mirror = sums.get(-k1, -k2, -k3).conj() / count;
        (here + mirror) * 0.5
    }))
}

/// Orthogonal projection onto Hermitian three-level Toeplitz matrices.
pub fn toeplitz_project(m: &CMat, dims: Dims) -> Result<CMat> {
    toeplitz_apply(&toeplitz_generator(m, dims)?, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_mat(l: usize, seed: u64) -> CMat {
        let mut rng = crate::rng::stream_rng(seed, "atoms-test", 0);
        CMat::from_fn(l, l, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn index_round_trip() {
        let d = Dims::new(3, 4, 2).unwrap();
        for n in 0..d.len() {
            let u = d.decode(n);
            assert_eq!(d.encode(u.p, u.q, u.r), n);
        }
        assert_eq!(d.encode(1, 2, 1), 1 + 3 * 2 + 12);
    }

    #[test]
    fn steering_vector_examples() {
        let d = Dims::new(2, 2, 1).unwrap();
        let a = steering_vector(Zeta::new(0.5, 0.0, 0.0), d);
        let want = [1.0, 1.0, -1.0, -1.0];
        for (z, w) in a.iter().zip(want) {
            assert!((z - C64::new(w, 0.0)).norm() < 1e-15);
        }
        let d = Dims::new(3, 2, 2).unwrap();
        let ones = steering_vector(Zeta::default(), d);
        assert!(ones.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() == 0.0));
        let a = steering_vector(Zeta::new(0.37, 0.11, 0.93), d);
        assert!((a.norm_squared() - d.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn toeplitz_identity_and_trivial_cases() {
        let d = Dims::new(1, 1, 1).unwrap();
        let mut v = ToeplitzTensor::zeros(d);
        v.set(0, 0, 0, C64::new(2.5, -1.0));
        assert_eq!(toeplitz_apply(&v, d).unwrap()[(0, 0)], C64::new(2.5, -1.0));

        let d = Dims::new(2, 3, 2).unwrap();
        let mut v = ToeplitzTensor::zeros(d);
        v.set(0, 0, 0, C64::new(1.0, 0.0));
        let t = toeplitz_apply(&v, d).unwrap();
        assert!((t - CMat::identity(12, 12)).norm() == 0.0);

        let adj = toeplitz_adjoint(&CMat::identity(12, 12), d).unwrap();
        for ((k1, k2, k3), z) in adj.iter() {
            let want = if (k1, k2, k3) == (0, 0, 0) { 12.0 } else { 0.0 };
            assert_eq!(z, C64::new(want, 0.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = Dims::new(2, 2, 1).unwrap();
        let v = ToeplitzTensor::zeros(Dims::new(2, 1, 2).unwrap());
        assert!(toeplitz_apply(&v, d).is_err());
        assert!(toeplitz_adjoint(&CMat::zeros(3, 3), d).is_err());
    }

    #[test]
    fn adjoint_of_single_atom_outer_product() {
        // lag-k sum of a aᴴ is count(k)·exp(j2π(k₁ν + k₂τ + k₃θ))
        let d = Dims::new(3, 2, 2).unwrap();
        let z = Zeta::new(0.21, 0.64, 0.35);
        let a = steering_vector(z, d);
        let v = toeplitz_adjoint(&(&a * a.adjoint()), d).unwrap();
        for (k1, k2, k3) in [(0, 0, 0), (1, 0, 0), (-2, 1, 0), (2, -1, 1), (0, 1, -1)] {
            let count = ToeplitzTensor::lag_count(d, k1, k2, k3) as f64;
            let want = cis(TAU * (k1 as f64 * z.nu + k2 as f64 * z.tau + k3 as f64 * z.theta)) * count;
            assert!((v.get(k1, k2, k3) - want).norm() < 1e-12);
            assert!((v.get(-k1, -k2, -k3) - want.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn single_atom_toeplitz_is_rank_one_psd() {
        let d = Dims::new(3, 2, 2).unwrap();
        let z = Zeta::new(0.3, 0.8, 0.45);
        let a = steering_vector(z, d);
        let p1 = 1.7;
        let gen = toeplitz_generator(&(&a * a.adjoint()).scale(p1), d).unwrap();
        let t = toeplitz_apply(&gen, d).unwrap();
        let (vals, _) = crate::linalg::hermitian_eig_desc(&t).unwrap();
        assert!((t.trace().re - d.len() as f64 * p1).abs() < 1e-10);
        assert!((vals[0] - d.len() as f64 * p1).abs() < 1e-10);
        assert!(vals[1..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn projection_hand_computed_case() {
        let d = Dims::new(4, 1, 1).unwrap();
        let mut m = CMat::zeros(4, 4);
        m[(0, 1)] = C64::new(1.0, 0.0);
        let t = toeplitz_project(&m, d).unwrap();
        for i in 0..3 {
            assert!((t[(i, i + 1)] - C64::new(1.0 / 6.0, 0.0)).norm() < 1e-15);
            assert!((t[(i + 1, i)] - C64::new(1.0 / 6.0, 0.0)).norm() < 1e-15);
        }
        assert!(t.diagonal().iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn projection_is_idempotent_and_fixes_toeplitz() {
        let d = Dims::new(2, 3, 2).unwrap();
        let m = rand_mat(12, 9);
        let p = toeplitz_project(&m, d).unwrap();
        let pp = toeplitz_project(&p, d).unwrap();
        assert!((&pp - &p).norm() < 1e-12);
        assert!((&p - p.adjoint()).norm() < 1e-14);
        // residual is orthogonal to the subspace
        let r = &m - &p;
        let other = toeplitz_project(&rand_mat(12, 10), d).unwrap();
        assert!(crate::linalg::inner(&r, &other).re.abs() < 1e-12);
    }

    #[test]
    fn measurement_matrix_rejects_out_of_range() {
        let cfg = crate::model::SceneConfig::builder(2, 2, 1).users(1, 1, 1).build().unwrap();
        let cb = crate::model::make_codebook(&cfg, 1, 3).unwrap();
        assert!(measurement_matrix(&cb, 4).is_err());
        let b = measurement_matrix(&cb, 2).unwrap();
        assert_eq!(b.nrows(), 1);
        assert_eq!(b[(0, 2)], cb.matrix[(2, 0)].conj());
        assert!(b.column(0).iter().all(|z| z.norm() == 0.0));
    }
}
