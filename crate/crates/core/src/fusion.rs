//! Combining per-user dual polynomials into one estimate of the common
//! target's parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atoms::{wrap_unit, Axis, Zeta};
use crate::dualpoly::{find_peaks, PeakSet, PolyGrid};
use crate::error::{domain, Error, Result};
use crate::linalg::{CVec, C64};

/// Estimation strategies for the common target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMethod {
    #[serde(rename = "non-collab")]
    NonCollaborative,
    #[serde(rename = "average")]
    Average,
    #[serde(rename = "weighted")]
    Weighted,
    #[serde(rename = "max")]
    Max,
    #[serde(rename = "aligned")]
    Aligned,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 5] = [
        FusionMethod::NonCollaborative,
        FusionMethod::Average,
        FusionMethod::Weighted,
        FusionMethod::Max,
        FusionMethod::Aligned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::NonCollaborative => "non-collab",
            FusionMethod::Average => "average",
            FusionMethod::Weighted => "weighted",
            FusionMethod::Max => "max",
            FusionMethod::Aligned => "aligned",
        }
    }

    pub fn is_collaborative(self) -> bool {
        self != FusionMethod::NonCollaborative
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown fusion method '{s}'")))
    }
}

fn check_geometry(grids: &[PolyGrid]) -> Result<&PolyGrid> {
    let Some(first) = grids.first() else {
        return domain("fusion needs at least one grid");
    };
    if grids.iter().any(|g| !g.same_geometry(first) || g.len() != first.len()) {
        return domain("grids differ in geometry");
    }
    Ok(first)
}

/// `(1/R) Σ_i f_i`.
pub fn fuse_average(grids: &[PolyGrid]) -> Result<PolyGrid> {
    let first = check_geometry(grids)?;
    let r = grids.len() as f64;
    let values = (0..first.len()).map(|n| grids.iter().map(|g| g.values[n]).sum::<f64>() / r).collect();
    Ok(first.with_values(values))
}

/// `max_i f_i`.
pub fn fuse_max(grids: &[PolyGrid]) -> Result<PolyGrid> {
    let first = check_geometry(grids)?;
    let values = (0..first.len()).map(|n| grids.iter().map(|g| g.values[n]).fold(0.0, f64::max)).collect();
    Ok(first.with_values(values))
}

/// `Σ_i w_i f_i / Σ_i w_i` with `w_i = max f_i`.
pub fn fuse_weighted(grids: &[PolyGrid]) -> Result<PolyGrid> {
    let first = check_geometry(grids)?;
    let w: Vec<f64> = grids.iter().map(PolyGrid::max).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return domain("all fusion weights are zero");
    }
    let values = (0..first.len())
        .map(|n| grids.iter().zip(&w).map(|(g, wi)| wi * g.values[n]).sum::<f64>() / total)
        .collect();
    Ok(first.with_values(values))
}

/// `‖(1/R) Σ_i c_user(i)·g_i‖²`.
///
/// User `i`'s codebook carries the factor `c_user(i)`, which enters `g_i`
/// conjugated; multiplying by `c_user(i)` removes it.
pub fn fuse_aligned(grids: &[PolyGrid], user_codes: &[C64]) -> Result<PolyGrid> {
    let first = check_geometry(grids)?;
    if user_codes.len() != grids.len() {
        return domain(format!("{} user codes for {} grids", user_codes.len(), grids.len()));
    }
    let complex: Vec<&Vec<CVec>> = grids
        .iter()
        .map(|g| g.complex_values.as_ref().ok_or_else(|| Error::Domain("grid lacks complex values".into())))
        .collect::<Result<_>>()?;
    let k = complex[0].first().map_or(0, |v| v.len());
    if complex.iter().any(|c| c.iter().any(|v| v.len() != k)) {
        return domain("aligned fusion requires equal message lengths");
    }
    let r = grids.len() as f64;
    let values = (0..first.len())
        .map(|n| {
            let mut acc = CVec::zeros(k);
            for (c, code) in complex.iter().zip(user_codes) {
                acc += &c[n] * *code;
            }
            (acc.norm() / r).powi(2)
        })
        .collect();
    Ok(first.with_values(values))
}

/// Circular mean on `[0,1)`. Returns 0 when the resultant vanishes.
pub fn circular_mean(values: &[f64]) -> f64 {
    let s: C64 = values.iter().map(|&x| crate::linalg::cis(std::f64::consts::TAU * x)).sum();
    if s.norm() <= 1e-15 * values.len() as f64 {
        return 0.0;
    }
    wrap_unit(s.arg() / std::f64::consts::TAU)
}

/// Per-coordinate circular mean of every user's strongest peak.
pub fn estimate_non_collaborative(peaks: &[PeakSet]) -> Result<Zeta> {
    let best: Vec<Zeta> = peaks
        .iter()
        .map(|p| p.best().map(|b| b.zeta).ok_or_else(|| Error::Domain("a user has no peaks".into())))
        .collect::<Result<_>>()?;
    if best.is_empty() {
        return domain("no users to average");
    }
    let mut z = Zeta::default();
    for axis in Axis::ALL {
        let vals: Vec<f64> = best.iter().map(|b| b.get(axis)).collect();
        z.set(axis, circular_mean(&vals));
    }
    Ok(z)
}

/// Refined argmax of a fused grid.
pub fn estimate_collaborative(grid: &PolyGrid) -> Result<Zeta> {
    Ok(find_peaks(grid, 1, true)?.peaks[0].zeta)
}

/// Fused grid for a collaborative method.
pub fn fuse(method: FusionMethod, grids: &[PolyGrid], user_codes: &[C64]) -> Result<PolyGrid> {
    match method {
        FusionMethod::Average => fuse_average(grids),
        FusionMethod::Weighted => fuse_weighted(grids),
        FusionMethod::Max => fuse_max(grids),
        FusionMethod::Aligned => fuse_aligned(grids, user_codes),
        FusionMethod::NonCollaborative => domain("the non-collaborative baseline does not fuse grids"),
    }
}

/// Common-target estimate by any method.
pub fn estimate(method: FusionMethod, grids: &[PolyGrid], user_codes: &[C64]) -> Result<Zeta> {
    if method == FusionMethod::NonCollaborative {
        let peaks: Vec<PeakSet> = grids.iter().map(|g| find_peaks(g, 1, true)).collect::<Result<_>>()?;
        return estimate_non_collaborative(&peaks);
    }
    estimate_collaborative(&fuse(method, grids, user_codes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::Dims;
    use crate::dualpoly::Peak;

    fn grid(values: Vec<f64>) -> PolyGrid {
        let n = values.len();
        PolyGrid { dims: Dims::new(1, 1, 4).unwrap(), resolutions: [1, 1, n], values, complex_values: None }
    }

    fn peakset(theta: f64) -> PeakSet {
        PeakSet {
            peaks: vec![Peak { zeta: Zeta::new(0.0, 0.0, theta), height: 1.0, index: 0 }],
            refined: true,
            shortfall: false,
            flat: false,
        }
    }

    #[test]
    fn trivial_fusions() {
        let a = grid((0..16).map(|i| (i as f64 * 0.3).sin().abs()).collect());
        let b = grid((0..16).map(|i| (i as f64 * 0.7).cos().abs()).collect());
        let same = [a.clone(), a.clone()];
        assert_eq!(fuse_average(&same).unwrap().values, a.values);
        assert_eq!(fuse_max(&same).unwrap().values, a.values);
        for (x, y) in fuse_weighted(&same).unwrap().values.iter().zip(&a.values) {
            assert!((x - y).abs() < 1e-12);
        }

        let zero = grid(vec![0.0; 16]);
        let avg = fuse_average(&[zero.clone(), b.clone()]).unwrap();
        for (x, y) in avg.values.iter().zip(&b.values) {
            assert!((x - y / 2.0).abs() < 1e-15);
        }
        assert_eq!(fuse_weighted(&[b.clone()]).unwrap().values, b.values);
        assert!(fuse_weighted(&[zero.clone(), zero]).is_err());

        let mx = fuse_max(&[a.clone(), b.clone()]).unwrap();
        let av = fuse_average(&[a.clone(), b.clone()]).unwrap();
        let top = a.max().max(b.max());
        for (m, v) in mx.values.iter().zip(&av.values) {
            assert!(m >= v && *m <= top);
        }
        let swapped = fuse_average(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(swapped.values, av.values);

        let mismatched = grid(vec![0.0; 8]);
        assert!(fuse_average(&[a, mismatched]).is_err());
    }

    #[test]
    fn weights_follow_peak_heights() {
        let base: Vec<f64> = (0..16).map(|i| if i == 5 { 1.0 } else { 0.1 }).collect();
        let clean = grid(base.clone());
        let mut shares = Vec::new();
        for corruption in [0.0, 0.5, 1.0, 2.0] {
            let noisy = grid(base.iter().enumerate().map(|(i, v)| v * 0.5 + corruption * ((i * 7) % 5) as f64 / 4.0).collect());
            let w_clean = clean.max();
            let w_noisy = noisy.max();
            shares.push(w_clean / (w_clean + w_noisy));
            fuse_weighted(&[clean.clone(), noisy]).unwrap();
        }
        assert!(shares.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn aligned_single_user_is_square() {
        let mut g = grid(vec![0.0; 4]);
        let cv: Vec<CVec> = (0..4).map(|i| CVec::from_vec(vec![C64::new(i as f64, 1.0), C64::new(0.5, -(i as f64))])).collect();
        g.values = cv.iter().map(|v| v.norm()).collect();
        g.complex_values = Some(cv.clone());
        let out = fuse_aligned(&[g.clone()], &[C64::new(1.0, 0.0)]).unwrap();
        for (o, v) in out.values.iter().zip(&g.values) {
            assert!((o - v * v).abs() < 1e-12);
        }

        // Identical channels seen through conjugated user codes cancel exactly.
        let code = crate::linalg::cis(std::f64::consts::PI);
        let mut h = g.clone();
        h.complex_values = Some(cv.iter().map(|v| v * code.conj()).collect());
        let out = fuse_aligned(&[g.clone(), h.clone()], &[C64::new(1.0, 0.0), code]).unwrap();
        for (o, v) in out.values.iter().zip(&g.values) {
            assert!((o - v * v).abs() < 1e-12);
        }
        let naive = fuse_aligned(&[g.clone(), h], &[C64::new(1.0, 0.0); 2]).unwrap();
        assert!(naive.values.iter().zip(&out.values).all(|(n, o)| *n < *o || *o == 0.0));

        let common = crate::linalg::cis(0.4);
        let mut rotated = g.clone();
        rotated.complex_values = Some(cv.iter().map(|v| v * common).collect());
        let out2 = fuse_aligned(&[rotated], &[C64::new(1.0, 0.0)]).unwrap();
        let out1 = fuse_aligned(&[g.clone()], &[C64::new(1.0, 0.0)]).unwrap();
        for (a, b) in out1.values.iter().zip(&out2.values) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut bare = g.clone();
        bare.complex_values = None;
        assert!(fuse_aligned(&[bare], &[C64::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn circular_means() {
        let z = estimate_non_collaborative(&[peakset(0.4), peakset(0.4)]).unwrap();
        assert!((z.theta - 0.4).abs() < 1e-12);
        let z = estimate_non_collaborative(&[peakset(0.1), peakset(0.3)]).unwrap();
        assert!((z.theta - 0.2).abs() < 1e-12);
        let z = estimate_non_collaborative(&[peakset(0.95), peakset(0.05)]).unwrap();
        assert!(crate::atoms::torus_distance(z.theta, 0.0) < 1e-12);
        assert!(estimate_non_collaborative(&[]).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in FusionMethod::ALL {
            assert_eq!(m.name().parse::<FusionMethod>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.name());
        }
        assert!("median".parse::<FusionMethod>().is_err());
    }
}
