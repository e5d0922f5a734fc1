//! Target localization from bistatic delay estimates.
//!
//! Each user `i` observes the target through the path
//! user → target → base station, so its delay is
//! `τ̄_i = (‖x_i − x_T‖ + ‖x_T − x_BS‖)/c`. Delays are affinely normalized
//! onto the unit interval for estimation and mapped back afterwards; the
//! target is then found by nonlinear least squares on the distance sums.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mapp3d::{decompose, Mapp3dOpts};
use crate::model::{generate_scene, synthesize_measurements, Constellation, SceneConfig, SceneLayout};
use crate::rng::{derive_seed, stream_rng};
use crate::sdp::{solve_primal, SolverOpts};

pub const C_LIGHT: f64 = 3e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_position: [f64; 2],
    pub user_positions: Vec<[f64; 2]>,
    pub target_position: [f64; 2],
    pub c_light: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Geometry {
    pub fn new(bs: [f64; 2], users: Vec<[f64; 2]>, target: [f64; 2]) -> Result<Self> {
        if target == bs {
            return domain("target coincides with the base station");
        }
        for i in 0..users.len() {
            for j in 0..i {
                if users[i] == users[j] {
                    return domain(format!("users {} and {} share a position", j + 1, i + 1));
                }
            }
        }
        Ok(Self { bs_position: bs, user_positions: users, target_position: target, c_light: C_LIGHT })
    }

    /// `‖x_i − x_T‖ + ‖x_T − x_BS‖`.
    pub fn distance_sum(&self, i: usize) -> f64 {
        dist(self.user_positions[i], self.target_position) + dist(self.target_position, self.bs_position)
    }

    pub fn target_range(&self) -> f64 {
        dist(self.target_position, self.bs_position)
    }
}

/// Bistatic delay of user `i` in seconds.
pub fn physical_delay(geom: &Geometry, i: usize) -> Result<f64> {
    if i >= geom.user_positions.len() {
        return domain(format!("user {i} out of range"));
    }
    Ok(geom.distance_sum(i) / geom.c_light)
}

/// Affine map `τ ↦ scale·(τ − lo)/(hi − lo)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayNormalization {
    pub lo: f64,
    pub hi: f64,
    /// Image of `hi`; 1 maps onto `[0, 1]`.
    pub scale: f64,
}

impl DelayNormalization {
    pub fn normalize(&self, tau: f64) -> f64 {
        self.scale * (tau - self.lo) / (self.hi - self.lo)
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        self.lo + x * (self.hi - self.lo) / self.scale
    }

    /// Leaves the top `gap` of the unit torus unused so that both ends of
    /// the range stay apart after wrapping.
    pub fn with_headroom(mut self, gap: f64) -> Self {
        self.scale = 1.0 - gap;
        self
    }
}

/// Maps delays onto `[0, 1]` with the smallest at 0 and the largest at 1.
pub fn normalize_delays(delays: &[f64]) -> Result<(Vec<f64>, DelayNormalization)> {
    if delays.len() < 2 {
        return domain("normalization needs at least two delays");
    }
    let lo = delays.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return domain("all delays are equal; normalization is degenerate");
    }
    let norm = DelayNormalization { lo, hi, scale: 1.0 };
    Ok((delays.iter().map(|&t| norm.normalize(t)).collect(), norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeOpts {
    pub starts: usize,
    pub max_iters: usize,
    /// Stop when a Gauss–Newton step is shorter than this (meters).
    pub step_tol: f64,
    pub seed: u64,
}

impl Default for LocalizeOpts {
    fn default() -> Self {
        Self { starts: 10, max_iters: 200, step_tol: 1e-9, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeResult {
    pub position: [f64; 2],
    /// `Σ_i r_i²` at the returned point.
    pub residual: f64,
    /// Ratio of the Jacobian's singular values there (∞ if rank deficient).
    pub condition: f64,
}

fn residuals(x: Vector2<f64>, bs: [f64; 2], users: &[[f64; 2]], sums: &[f64]) -> DVector<f64> {
    let p = [x[0], x[1]];
    DVector::from_fn(users.len(), |i, _| dist(users[i], p) + dist(p, bs) - sums[i])
}

fn jacobian(x: Vector2<f64>, bs: [f64; 2], users: &[[f64; 2]], sums: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(users.len(), 2);
    for d in 0..2 {
        let h = 1e-6 * x[d].abs().max(1.0);
        let mut xp = x;
        let mut xm = x;
        xp[d] += h;
        xm[d] -= h;
        let col = (residuals(xp, bs, users, sums) - residuals(xm, bs, users, sums)) / (2.0 * h);
        j.set_column(d, &col);
    }
    j
}

fn condition(j: &DMatrix<f64>) -> f64 {
    let sv = j.clone().singular_values();
    let (hi, lo) = (sv.max(), if sv.len() < 2 { 0.0 } else { sv.min() });
    if lo <= 1e-12 * hi || j.nrows() < 2 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn gauss_newton(start: Vector2<f64>, bs: [f64; 2], users: &[[f64; 2]], sums: &[f64], opts: &LocalizeOpts) -> (Vector2<f64>, f64) {
    let mut x = start;
    let mut cost = residuals(x, bs, users, sums).norm_squared();
    for _ in 0..opts.max_iters {
        let r = residuals(x, bs, users, sums);
        let j = jacobian(x, bs, users, sums);
        let Ok(step) = j.svd(true, true).solve(&(-r), 1e-12) else { break };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let cand = x + Vector2::new(step[0], step[1]) * t;
            let c = residuals(cand, bs, users, sums).norm_squared();
            if c <= cost {
                x = cand;
                cost = c;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step.norm() * t < opts.step_tol {
            break;
        }
    }
    (x, cost)
}

/// Multi-start Gauss–Newton fit of the target position to distance sums.
/// Starts are drawn uniformly in the bounding box of users and base station,
/// inflated twofold about its center; the lowest-residual end point wins.
pub fn localize(bs: [f64; 2], users: &[[f64; 2]], sums: &[f64], opts: &LocalizeOpts) -> Result<LocalizeResult> {
    if users.is_empty() || users.len() != sums.len() {
        return domain(format!("{} users with {} measurements", users.len(), sums.len()));
    }
    if opts.starts == 0 {
        return domain("at least one start is required");
    }
    if sums.iter().any(|s| !s.is_finite()) {
        return domain("non-finite distance measurement");
    }
    let pts: Vec<[f64; 2]> = users.iter().copied().chain(std::iter::once(bs)).collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &pts {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
    let mut rng = stream_rng(opts.seed, "localize-starts", 0);
    let mut best: Option<(Vector2<f64>, f64)> = None;
    for _ in 0..opts.starts {
        let mut s = Vector2::zeros();
        for d in 0..2 {
            let c = 0.5 * (lo[d] + hi[d]);
            let half = (hi[d] - lo[d]).max(0.5 * span);
            s[d] = rng.random_range(c - half..=c + half);
        }
        let (x, cost) = gauss_newton(s, bs, users, sums, opts);
        if best.is_none_or(|(_, b)| cost < b) {
            best = Some((x, cost));
        }
    }
    let (x, cost) = best.expect("at least one start");
    Ok(LocalizeResult {
        position: [x[0], x[1]],
        residual: cost,
        condition: condition(&jacobian(x, bs, users, sums)),
    })
}

/// Settings of the delay-based localization study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationSetup {
    /// Subcarriers; the only active axis.
    pub q: usize,
    pub k: usize,
    pub snr_db: Option<f64>,
    /// Size of the user pool; scenes use its first `R` members.
    pub pool: usize,
    pub target: [f64; 2],
    pub bs: [f64; 2],
    /// Users are placed uniformly in `[−half, half]²`.
    pub half_width: f64,
    /// Unused fraction of the delay torus above the normalized range.
    pub headroom: f64,
    /// Feed exact normalized delays instead of estimating them.
    pub oracle_delays: bool,
    pub solver: SolverOpts,
    pub mapp: Mapp3dOpts,
    pub localize: LocalizeOpts,
}

impl Default for LocalizationSetup {
    fn default() -> Self {
        Self {
            q: 32,
            k: 2,
            snr_db: Some(5.0),
            pool: 5,
            target: [50.0, 30.0],
            bs: [0.0, 0.0],
            half_width: 100.0,
            headroom: 0.25,
            oracle_delays: false,
            solver: SolverOpts::default(),
            mapp: Mapp3dOpts::default(),
            localize: LocalizeOpts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub trial: usize,
    pub r: usize,
    /// `|d̂_{T,BS} − d_{T,BS}|` in meters.
    pub abs_error_m: f64,
    pub position_x: f64,
    pub position_y: f64,
    pub residual: f64,
    pub condition: f64,
    /// Largest normalized delay error across users.
    pub max_delay_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeRow {
    #[serde(rename = "R")]
    pub r: usize,
    pub trials: usize,
    pub snr_db: Option<f64>,
    pub mae_m: f64,
}

/// The trial's user pool and the normalization it induces.
pub fn trial_geometry(setup: &LocalizationSetup, trial_seed: u64) -> Result<(Geometry, DelayNormalization)> {
    let mut rng = stream_rng(trial_seed, "user-positions", 0);
    let h = setup.half_width;
    let users: Vec<[f64; 2]> =
        (0..setup.pool).map(|_| [rng.random_range(-h..h), rng.random_range(-h..h)]).collect();
    let geom = Geometry::new(setup.bs, users, setup.target)?;
    let delays: Vec<f64> = (0..setup.pool).map(|i| physical_delay(&geom, i)).collect::<Result<_>>()?;
    let (_, norm) = normalize_delays(&delays)?;
    Ok((geom, norm.with_headroom(setup.headroom)))
}

/// One localization trial with the first `r` users of the pool.
pub fn localization_trial(setup: &LocalizationSetup, r: usize, trial: usize, seed: u64) -> Result<LocalizationRecord> {
    if r == 0 || r > setup.pool {
        return domain(format!("R = {r} outside 1..={}", setup.pool));
    }
    let trial_seed = derive_seed(seed, "localization-trial", trial as u64);
    let (geom, norm) = trial_geometry(setup, trial_seed)?;
    let truth: Vec<f64> =
        (0..r).map(|i| physical_delay(&geom, i).map(|t| norm.normalize(t))).collect::<Result<_>>()?;

    let (estimates, converged) = if setup.oracle_delays {
        (truth.clone(), true)
    } else {
        let cfg = SceneConfig {
            p: 1,
            q: setup.q,
            nr: 1,
            r,
            k: vec![setup.k; r],
            s: vec![1; r],
            snr_db: setup.snr_db,
            seed: derive_seed(trial_seed, "scene", r as u64),
            constellation: Constellation::Ask8,
            layout: SceneLayout { min_separation: Some(0.0), ..SceneLayout::default() },
        };
        let mut scene = generate_scene(&cfg)?;
        for (i, user) in scene.users.iter_mut().enumerate() {
            user.position = geom.user_positions[i];
            user.velocity = [0.0, 0.0];
            user.paths[0].tau = truth[i];
        }
        let meas = synthesize_measurements(&scene, &cfg)?;
        let sol = solve_primal(&meas, &setup.solver)?;
        let est = sol
            .users
            .iter()
            .map(|u| {
                let atoms = decompose(&u.toeplitz, meas.dims, &setup.mapp)?;
                Ok(atoms.dominant().map_or(0.0, |d| atoms.zetas[d].tau))
            })
            .collect::<Result<Vec<f64>>>()?;
        (est, sol.diagnostics.converged())
    };

    // Estimates live on the torus; values in the unused gap above the
    // normalized range are closer to 0 than to its top.
    let estimates: Vec<f64> =
        estimates.into_iter().map(|t| if t > 0.5 * (1.0 + norm.scale) { t - 1.0 } else { t }).collect();
    let sums: Vec<f64> = estimates.iter().map(|&t| norm.denormalize(t) * geom.c_light).collect();
    let mut lopts = setup.localize.clone();
    lopts.seed = derive_seed(trial_seed, "localize", r as u64);
    let fit = localize(geom.bs_position, &geom.user_positions[..r], &sums, &lopts)?;
    let range = dist(fit.position, geom.bs_position);
    let max_delay_error = estimates
        .iter()
        .zip(&truth)
        .map(|(e, t)| (e - t).abs())
        .fold(0.0, f64::max);
    Ok(LocalizationRecord {
        trial,
        r,
        abs_error_m: (range - geom.target_range()).abs(),
        position_x: fit.position[0],
        position_y: fit.position[1],
        residual: fit.residual,
        condition: fit.condition,
        max_delay_error,
        converged,
    })
}

/// MAE of the target range for every `R` in `r_values` over `trials`
/// seeded trials. Records are ordered by `R`, then trial index.
pub fn localization_mae(
    setup: &LocalizationSetup,
    r_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<(Vec<MaeRow>, Vec<LocalizationRecord>)> {
    if trials == 0 {
        return domain("at least one trial is required");
    }
    let jobs: Vec<(usize, usize)> = r_values.iter().flat_map(|&r| (0..trials).map(move |t| (r, t))).collect();
    let records: Vec<LocalizationRecord> = jobs
        .par_iter()
        .map(|&(r, t)| localization_trial(setup, r, t, seed))
        .collect::<Result<_>>()?;
    let rows = r_values
        .iter()
        .map(|&r| {
            let errs: Vec<f64> = records.iter().filter(|x| x.r == r).map(|x| x.abs_error_m).collect();
            MaeRow { r, trials, snr_db: setup.snr_db, mae_m: errs.iter().sum::<f64>() / errs.len() as f64 }
        })
        .collect();
    Ok((rows, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_examples() {
        let g = Geometry::new([0.0, 0.0], vec![[0.0, 0.0], [50.0, 30.0]], [50.0, 30.0]).unwrap();
        let d = 3400f64.sqrt();
        assert!((physical_delay(&g, 0).unwrap() - 2.0 * d / C_LIGHT).abs() < 1e-20);
        assert!((physical_delay(&g, 1).unwrap() - d / C_LIGHT).abs() < 1e-20);
        assert!((physical_delay(&g, 1).unwrap() - 1.9437e-7).abs() < 1e-11);
        let g2 = Geometry::new([0.0, 0.0], vec![[0.0, 0.0], [100.0, 60.0]], [100.0, 60.0]).unwrap();
        assert!((physical_delay(&g2, 1).unwrap() - 2.0 * physical_delay(&g, 1).unwrap()).abs() < 1e-20);
        assert!(physical_delay(&g, 2).is_err());
        assert!(Geometry::new([0.0, 0.0], vec![[1.0, 1.0]], [0.0, 0.0]).is_err());
        assert!(Geometry::new([0.0, 0.0], vec![[1.0, 1.0], [1.0, 1.0]], [5.0, 0.0]).is_err());
    }

    #[test]
    fn normalization_examples() {
        let (n, _) = normalize_delays(&[1e-6, 3e-6]).unwrap();
        assert_eq!(n, vec![0.0, 1.0]);
        let (n, map) = normalize_delays(&[1e-6, 2e-6, 3e-6]).unwrap();
        assert!((n[1] - 0.5).abs() < 1e-12);
        for &t in &[1e-6, 1.7e-6, 3e-6] {
            assert!((map.denormalize(map.normalize(t)) - t).abs() < 1e-12 * t);
        }
        let h = map.with_headroom(0.25);
        assert!((h.normalize(3e-6) - 0.75).abs() < 1e-15);
        assert!((h.denormalize(h.normalize(2.2e-6)) - 2.2e-6).abs() < 1e-18);
        assert!(normalize_delays(&[2e-6, 2e-6]).is_err());
        assert!(normalize_delays(&[2e-6]).is_err());
    }

    #[test]
    fn exact_sums_recover_target() {
        let bs = [0.0, 0.0];
        let target = [50.0, 30.0];
        let users = vec![[-80.0, 10.0], [20.0, -90.0], [70.0, 85.0]];
        let g = Geometry::new(bs, users.clone(), target).unwrap();
        let sums: Vec<f64> = (0..3).map(|i| g.distance_sum(i)).collect();
        let fit = localize(bs, &users, &sums, &LocalizeOpts::default()).unwrap();
        assert!(dist(fit.position, target) <= 1e-6, "{:?}", fit);
        assert!(fit.condition.is_finite());

        let shift = [13.0, -7.0];
        let moved: Vec<[f64; 2]> = users.iter().map(|u| [u[0] + shift[0], u[1] + shift[1]]).collect();
        let fit2 = localize([shift[0], shift[1]], &moved, &sums, &LocalizeOpts::default()).unwrap();
        assert!(dist(fit2.position, [target[0] + shift[0], target[1] + shift[1]]) <= 1e-6);
    }

    #[test]
    fn single_measurement_is_ambiguous() {
        let bs = [0.0, 0.0];
        let users = vec![[-60.0, 40.0]];
        let g = Geometry::new(bs, users.clone(), [50.0, 30.0]).unwrap();
        let fit = localize(bs, &users, &[g.distance_sum(0)], &LocalizeOpts::default()).unwrap();
        assert!(fit.residual < 1e-9);
        assert!(fit.condition.is_infinite());
    }

    #[test]
    fn degenerate_users_at_bs_are_flagged() {
        let bs = [0.0, 0.0];
        let users = vec![[0.0, 0.0]];
        let fit = localize(bs, &users, &[2.0 * 3400f64.sqrt()], &LocalizeOpts::default()).unwrap();
        assert!(fit.condition.is_infinite());
        assert!((dist(fit.position, bs) - 3400f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn oracle_delays_give_exact_ranges() {
        let setup = LocalizationSetup { oracle_delays: true, ..Default::default() };
        let (rows, _) = localization_mae(&setup, &[3, 4, 5], 5, 17).unwrap();
        for row in rows {
            assert!(row.mae_m <= 1e-6, "{row:?}");
        }
    }
}
