//! Dual polynomials `g_i(ζ) = Σ_n q_n conj(d_n^i) conj([a(ζ)]_n)` and their
//! magnitudes `f_i(ζ) = ‖g_i(ζ)‖`, evaluated on uniform grids, plus peak
//! search with quadratic refinement.
//!
//! For a dual-optimal `q`, `f_i ≤ 1` everywhere and `f_i = 1` at the
//! parameters of user `i`'s paths.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::atoms::{steering_vector, wrap_unit, Axis, Dims, Zeta};
use crate::error::{domain, Result};
use crate::linalg::{CMat, CVec};
use crate::model::Codebook;

/// Default points per active axis.
pub const DEFAULT_RESOLUTION: usize = 64;

/// Weights `w_n = q_n conj(d_n)` stored as a `k×L` matrix.
fn weights(q: &CVec, codebook: &Codebook) -> Result<CMat> {
    let d = &codebook.matrix;
    if q.len() != d.nrows() {
        return domain(format!("q has {} entries, codebook has {} rows", q.len(), d.nrows()));
    }
    Ok(CMat::from_fn(d.ncols(), d.nrows(), |k, n| q[n] * d[(n, k)].conj()))
}

fn eval_weights(w: &CMat, zeta: Zeta, dims: Dims) -> (CVec, f64) {
    let a = steering_vector(zeta, dims);
    let g = w * a.map(|z| z.conj());
    let f = g.norm();
    (g, f)
}

/// Evaluates `g_i(ζ)` and `f_i(ζ)`.
pub fn eval_poly(q: &CVec, codebook: &Codebook, zeta: Zeta, dims: Dims) -> Result<(CVec, f64)> {
    if q.len() != dims.len() {
        return domain(format!("q has {} entries, L = {}", q.len(), dims.len()));
    }
    Ok(eval_weights(&weights(q, codebook)?, zeta, dims))
}

/// Per-axis grid sizes in (delay, Doppler, angle) order: `requested` on
/// active axes, 1 on axes of extent one.
pub fn grid_resolutions(dims: Dims, requested: usize) -> Result<[usize; 3]> {
    let mut out = [1; 3];
    for (slot, axis) in out.iter_mut().zip(Axis::ALL) {
        let e = dims.extent(axis);
        if e > 1 {
            if requested < 4 * e {
                return domain(format!(
                    "{axis} grid of {requested} points is below the floor 4×{e} = {}",
                    4 * e
                ));
            }
            *slot = requested;
        }
    }
    Ok(out)
}

/// Default grid: 64 points per active axis, raised to 4× the extent.
pub fn default_resolutions(dims: Dims) -> [usize; 3] {
    let mut out = [1; 3];
    for (slot, axis) in out.iter_mut().zip(Axis::ALL) {
        let e = dims.extent(axis);
        if e > 1 {
            *slot = DEFAULT_RESOLUTION.max(4 * e);
        }
    }
    out
}

/// Samples of a dual polynomial (or of a fused combination) on a uniform
/// grid. Flat index is `(iτ·Gν + iν)·Gθ + iθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyGrid {
    pub dims: Dims,
    /// Points per axis in (delay, Doppler, angle) order.
    pub resolutions: [usize; 3],
    pub values: Vec<f64>,
    /// `g_i` at each point, when kept.
    pub complex_values: Option<Vec<CVec>>,
}

#[derive(Debug, Serialize)]
struct GridRow {
    tau: f64,
    nu: f64,
    theta: f64,
    f: f64,
}

impl PolyGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, i: [usize; 3]) -> usize {
        let [_, gn, gt] = self.resolutions;
        (i[0] * gn + i[1]) * gt + i[2]
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let [_, gn, gt] = self.resolutions;
        [flat / (gn * gt), (flat / gt) % gn, flat % gt]
    }

    pub fn zeta_at(&self, flat: usize) -> Zeta {
        let i = self.multi_index(flat);
        let r = self.resolutions;
        Zeta::new(i[0] as f64 / r[0] as f64, i[1] as f64 / r[1] as f64, i[2] as f64 / r[2] as f64)
    }

    /// Whether every sample carries the same value (no peak information).
    pub fn is_flat(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Same dims and resolutions.
    pub fn same_geometry(&self, other: &PolyGrid) -> bool {
        self.dims == other.dims && self.resolutions == other.resolutions
    }

    /// New grid on the same geometry with different values.
    pub fn with_values(&self, values: Vec<f64>) -> PolyGrid {
        PolyGrid { dims: self.dims, resolutions: self.resolutions, values, complex_values: None }
    }

    /// Writes `tau,nu,theta,f` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (i, &f) in self.values.iter().enumerate() {
            let z = self.zeta_at(i);
            w.serialize(GridRow { tau: z.tau, nu: z.nu, theta: z.theta, f })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dense evaluation of `f_i` (and optionally `g_i`) on a grid.
pub fn scan_grid(
    q: &CVec,
    codebook: &Codebook,
    dims: Dims,
    resolutions: [usize; 3],
    keep_complex: bool,
) -> Result<PolyGrid> {
    if q.len() != dims.len() {
        return domain(format!("q has {} entries, L = {}", q.len(), dims.len()));
    }
    for (r, axis) in resolutions.iter().zip(Axis::ALL) {
        let e = dims.extent(axis);
        if (e > 1 && *r < 4 * e) || (e == 1 && *r != 1) {
            return domain(format!("invalid {axis} resolution {r} for extent {e}"));
        }
    }
    let w = weights(q, codebook)?;
    let mut grid = PolyGrid { dims, resolutions, values: Vec::new(), complex_values: None };
    let total: usize = resolutions.iter().product();
    let samples: Vec<(CVec, f64)> =
        (0..total).into_par_iter().map(|i| eval_weights(&w, grid.zeta_at(i), dims)).collect();
    grid.values = samples.iter().map(|s| s.1).collect();
    if keep_complex {
        grid.complex_values = Some(samples.into_iter().map(|s| s.0).collect());
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub zeta: Zeta,
    pub height: f64,
    /// Flat grid index of the underlying local maximum.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    pub refined: bool,
    /// Fewer local maxima existed than requested.
    pub shortfall: bool,
    /// The grid was constant.
    pub flat: bool,
}

impl PeakSet {
    pub fn best(&self) -> Option<&Peak> {
        self.peaks.first()
    }
}

fn neighbor_offsets(grid: &PolyGrid) -> Vec<[isize; 3]> {
    let ranges: Vec<Vec<isize>> =
        grid.resolutions.iter().map(|&r| if r > 1 { vec![-1, 0, 1] } else { vec![0] }).collect();
    let mut out = Vec::new();
    for &a in &ranges[0] {
        for &b in &ranges[1] {
            for &c in &ranges[2] {
                if (a, b, c) != (0, 0, 0) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn shifted(grid: &PolyGrid, i: [usize; 3], off: [isize; 3]) -> usize {
    let mut j = [0; 3];
    for d in 0..3 {
        let r = grid.resolutions[d] as isize;
        j[d] = (i[d] as isize + off[d]).rem_euclid(r) as usize;
    }
    grid.index(j)
}

/// Local maxima by height (ties: lower flat index first). A point is a
/// local maximum when it beats every wrap-around neighbor on the active
/// axes, equal neighbors with a lower index winning.
pub fn local_maxima(grid: &PolyGrid) -> Vec<usize> {
    let offs = neighbor_offsets(grid);
    let mut out: Vec<usize> = (0..grid.len())
        .filter(|&n| {
            let v = grid.values[n];
            let i = grid.multi_index(n);
            offs.iter().all(|&o| {
                let m = shifted(grid, i, o);
                m == n || v > grid.values[m] || (v == grid.values[m] && n < m)
            })
        })
        .collect();
    out.sort_by(|&a, &b| grid.values[b].total_cmp(&grid.values[a]).then(a.cmp(&b)));
    out
}

/// Quadratic interpolation along each active axis through the two grid
/// neighbors; the offset is clamped to half a cell.
pub fn refine_peak(grid: &PolyGrid, index: usize) -> Zeta {
    let i = grid.multi_index(index);
    let mut z = grid.zeta_at(index);
    let f0 = grid.values[index];
    for (d, axis) in Axis::ALL.into_iter().enumerate() {
        let r = grid.resolutions[d];
        if r < 3 {
            continue;
        }
        let mut minus = [0isize; 3];
        minus[d] = -1;
        let mut plus = [0isize; 3];
        plus[d] = 1;
        let fm = grid.values[shifted(grid, i, minus)];
        let fp = grid.values[shifted(grid, i, plus)];
        let den = fm - 2.0 * f0 + fp;
        let delta = if den < 0.0 { (0.5 * (fm - fp) / den).clamp(-0.5, 0.5) } else { 0.0 };
        z.set(axis, wrap_unit((i[d] as f64 + delta) / r as f64));
    }
    z
}

/// The `count` highest local maxima.
pub fn find_peaks(grid: &PolyGrid, count: usize, refine: bool) -> Result<PeakSet> {
    if count == 0 {
        return domain("peak count must be at least 1");
    }
    if grid.is_empty() {
        return domain("empty grid");
    }
    let maxima = local_maxima(grid);
    let shortfall = maxima.len() < count;
    let peaks = maxima
        .into_iter()
        .take(count)
        .map(|n| Peak {
            zeta: if refine { refine_peak(grid, n) } else { grid.zeta_at(n) },
            height: grid.values[n],
            index: n,
        })
        .collect();
    Ok(PeakSet { peaks, refined: refine, shortfall, flat: grid.is_flat() })
}

/// All local maxima at or above `frac` times the global maximum.
pub fn find_peaks_above(grid: &PolyGrid, frac: f64, refine: bool) -> Result<PeakSet> {
    let top = grid.max();
    let count = local_maxima(grid).iter().take_while(|&&n| grid.values[n] >= frac * top).count();
    find_peaks(grid, count.max(1), refine)
}

/// Normalized Dirichlet kernel `|Σ_k exp(j2πkx)| / n`.
#[cfg(test)]
fn dirichlet(n: usize, x: f64) -> f64 {
    let s: crate::linalg::C64 = (0..n).map(|k| crate::linalg::cis(std::f64::consts::TAU * k as f64 * x)).sum();
    s.norm() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::model::{make_codebook, SceneConfig};

    fn ones_codebook(l: usize) -> Codebook {
        let m = CMat::from_element(l, 1, C64::new(1.0, 0.0));
        Codebook { matrix: m.clone(), user_code: C64::new(1.0, 0.0), base: m }
    }

    #[test]
    fn zero_q_gives_zero() {
        let dims = Dims::new(2, 2, 2).unwrap();
        let cfg = SceneConfig::builder(2, 2, 2).users(1, 2, 1).build().unwrap();
        let cb = make_codebook(&cfg, 1, 3).unwrap();
        let (g, f) = eval_poly(&CVec::zeros(8), &cb, Zeta::new(0.2, 0.3, 0.4), dims).unwrap();
        assert_eq!(f, 0.0);
        assert!(g.iter().all(|z| z.norm() == 0.0));
        let grid = scan_grid(&CVec::zeros(8), &cb, dims, [8, 8, 8], false).unwrap();
        assert!(grid.is_flat());
        let peaks = find_peaks(&grid, 3, true).unwrap();
        assert!(peaks.flat && peaks.shortfall);
        assert_eq!(peaks.peaks.len(), 1);
    }

    #[test]
    fn dirichlet_certificate() {
        let dims = Dims::new(3, 4, 2).unwrap();
        let z0 = Zeta::new(0.31, 0.62, 0.17);
        let q = steering_vector(z0, dims).unscale(dims.len() as f64);
        let cb = ones_codebook(dims.len());
        let (_, f0) = eval_poly(&q, &cb, z0, dims).unwrap();
        assert!((f0 - 1.0).abs() < 1e-14);
        for (dt, dn, dr) in [(0.25, 0.0, 0.0), (0.0, 1.0 / 3.0, 0.0), (0.1, 0.2, 0.5)] {
            let z = Zeta::new(z0.tau + dt, z0.nu + dn, z0.theta + dr);
            let (_, f) = eval_poly(&q, &cb, z, dims).unwrap();
            let expect = dirichlet(4, dt) * dirichlet(3, dn) * dirichlet(2, dr);
            assert!((f - expect).abs() < 1e-12);
            assert!(f < 1.0);
        }
    }

    #[test]
    fn grid_matches_pointwise_evaluation() {
        let dims = Dims::new(3, 3, 1).unwrap();
        let cfg = SceneConfig::builder(3, 3, 1).users(1, 2, 1).build().unwrap();
        let cb = make_codebook(&cfg, 1, 9).unwrap();
        let q = CVec::from_fn(9, |n, _| C64::new(n as f64 * 0.1, 1.0 - n as f64 * 0.05));
        let grid = scan_grid(&q, &cb, dims, [12, 16, 1], true).unwrap();
        assert_eq!(grid.len(), 192);
        for idx in [0, 17, 101, 191] {
            let (g, f) = eval_poly(&q, &cb, grid.zeta_at(idx), dims).unwrap();
            assert_eq!(f.to_bits(), grid.values[idx].to_bits());
            assert_eq!(g, grid.complex_values.as_ref().unwrap()[idx]);
        }
        assert!(scan_grid(&q, &cb, dims, [8, 16, 1], false).is_err());
        assert!(scan_grid(&q, &cb, dims, [12, 16, 2], false).is_err());
    }

    #[test]
    fn one_dimensional_grid_and_refinement() {
        let dims = Dims::new(1, 1, 30).unwrap();
        let res = default_resolutions(dims);
        assert_eq!(res, [1, 1, 120]);
        assert!(grid_resolutions(dims, 64).is_err());
        let z0 = Zeta::new(0.0, 0.0, 0.4137);
        let q = steering_vector(z0, dims).unscale(30.0);
        let grid = scan_grid(&q, &ones_codebook(30), dims, res, false).unwrap();
        let peaks = find_peaks(&grid, 1, true).unwrap();
        let best = peaks.best().unwrap();
        assert!((best.zeta.theta - 0.4137).abs() <= 1.0 / (4.0 * 120.0));
        assert_eq!(best.zeta.tau, 0.0);
        for k in 0..120 {
            let expect = dirichlet(30, k as f64 / 120.0 - 0.4137);
            assert!((grid.values[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn finer_grid_never_lowers_the_maximum() {
        let dims = Dims::new(4, 4, 1).unwrap();
        let q = steering_vector(Zeta::new(0.123, 0.789, 0.0), dims).unscale(16.0);
        let cb = ones_codebook(16);
        let coarse = scan_grid(&q, &cb, dims, [16, 16, 1], false).unwrap();
        let fine = scan_grid(&q, &cb, dims, [32, 32, 1], false).unwrap();
        assert!(fine.max() >= coarse.max());
    }

    #[test]
    fn equal_peaks_in_index_order() {
        let dims = Dims::new(1, 1, 4).unwrap();
        let mut grid = PolyGrid { dims, resolutions: [1, 1, 16], values: vec![0.0; 16], complex_values: None };
        grid.values[3] = 1.0;
        grid.values[11] = 1.0;
        grid.values[7] = 0.5;
        let p = find_peaks(&grid, 2, false).unwrap();
        assert_eq!(p.peaks.iter().map(|p| p.index).collect::<Vec<_>>(), vec![3, 11]);
        assert!(!p.shortfall);
        // The zero plateau contributes its lowest-index point (wrap-around).
        let p = find_peaks(&grid, 5, false).unwrap();
        assert!(p.shortfall);
        assert_eq!(p.peaks.iter().map(|p| p.index).collect::<Vec<_>>(), vec![3, 11, 7, 0]);
        assert_eq!(find_peaks_above(&grid, 0.6, false).unwrap().peaks.len(), 2);
        assert!(find_peaks(&grid, 0, false).is_err());
    }

    #[test]
    fn wrap_around_neighbors() {
        let dims = Dims::new(1, 1, 4).unwrap();
        let mut grid = PolyGrid { dims, resolutions: [1, 1, 16], values: vec![0.0; 16], complex_values: None };
        grid.values[0] = 0.9;
        grid.values[15] = 1.0;
        let maxima = local_maxima(&grid);
        assert_eq!(maxima[0], 15);
        assert!(!maxima.contains(&0));
    }

    #[test]
    fn magnitude_is_phase_invariant() {
        let dims = Dims::new(2, 3, 2).unwrap();
        let cfg = SceneConfig::builder(2, 3, 2).users(1, 3, 1).build().unwrap();
        let cb = make_codebook(&cfg, 1, 4).unwrap();
        let q = CVec::from_fn(12, |n, _| C64::new((n as f64).sin(), (n as f64).cos()));
        let rot = crate::linalg::cis(0.7);
        let z = Zeta::new(0.3, 0.1, 0.9);
        let (g1, f1) = eval_poly(&q, &cb, z, dims).unwrap();
        let (g2, f2) = eval_poly(&q.map(|v| v * rot), &cb, z, dims).unwrap();
        assert!((f1 - f2).abs() < 1e-12);
        assert!((g1.map(|v| v * rot) - g2).norm() < 1e-12);
    }
}
