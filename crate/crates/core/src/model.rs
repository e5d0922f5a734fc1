//! Scene generation, user codebooks and frequency-domain measurement
//! synthesis.
//!
//! Simulation starts directly at the sampled frequency–time–space level:
//!
//! ```text
//! y_n = Σ_i Σ_ℓ c_{ℓ,i} [a(ζ_{ℓ,i})]_n (d_n^i)ᵀ f_i + ε_n,   n = 0..L-1
//! ```
//!
//! where `d_n^i` is row `n` of user `i`'s codebook `D_i` and `f_i` the
//! unit-norm message.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::atoms::{steering_vector, torus_distance, Axis, Dims, Zeta};
use crate::error::{domain, Error, Result};
use crate::linalg::{cis, CMat, CVec, C64};
use crate::rng::{derive_seed, stream_rng};
use crate::serde_mat;

/// Symbol alphabet used for user messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Constellation {
    #[default]
    #[serde(rename = "8-ASK")]
    Ask8,
    #[serde(rename = "unit-norm-gaussian")]
    UnitNormGaussian,
}

/// 8-ASK amplitude levels before normalization.
pub const ASK8_LEVELS: [i8; 8] = [-7, -5, -3, -1, 1, 3, 5, 7];

/// Knobs of the random scene generator that are not part of the core
/// experiment dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneLayout {
    /// Normalized Doppler separating stationary scatterers from targets.
    pub doppler_floor: f64,
    /// Minimum wrap-around separation between paths of one user, required in
    /// at least one active coordinate. Defaults to `1/max(P, Q, N_r)`.
    pub min_separation: Option<f64>,
    /// Leading paths of every user that are moving targets.
    pub targets_per_user: usize,
    /// Whether the first target is shared by all users (same angle).
    pub common_target: bool,
    /// Range of path-gain magnitudes.
    pub gain_range: (f64, f64),
    /// Relative Frobenius size of the per-user codebook perturbation.
    pub perturbation: f64,
}

impl Default for SceneLayout {
    fn default() -> Self {
        Self {
            doppler_floor: 0.02,
            min_separation: None,
            targets_per_user: 1,
            common_target: true,
            gain_range: (0.8, 1.2),
            perturbation: 0.05,
        }
    }
}

/// Dimensions, sparsity, noise level and seed of one simulated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "N_r")]
    pub nr: usize,
    #[serde(rename = "R")]
    pub r: usize,
    /// Message length per user.
    pub k: Vec<usize>,
    /// Path count per user.
    pub s: Vec<usize>,
    /// `None` (JSON `null`) or `+∞` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub constellation: Constellation,
    #[serde(default)]
    pub layout: SceneLayout,
}

/// Builder for [`SceneConfig`].
#[derive(Debug, Clone)]
pub struct SceneConfigBuilder {
    cfg: SceneConfig,
}

impl SceneConfigBuilder {
    /// `r` users, each with message length `k` and `s` paths.
    pub fn users(mut self, r: usize, k: usize, s: usize) -> Self {
        self.cfg.r = r;
        self.cfg.k = vec![k; r];
        self.cfg.s = vec![s; r];
        self
    }

    pub fn message_lengths(mut self, k: Vec<usize>) -> Self {
        self.cfg.k = k;
        self
    }

    pub fn path_counts(mut self, s: Vec<usize>) -> Self {
        self.cfg.s = s;
        self
    }

    pub fn snr_db(mut self, snr: f64) -> Self {
        self.cfg.snr_db = Some(snr);
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.cfg.snr_db = None;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.cfg.seed = seed;
        self
    }

    pub fn constellation(mut self, c: Constellation) -> Self {
        self.cfg.constellation = c;
        self
    }

    pub fn layout(mut self, layout: SceneLayout) -> Self {
        self.cfg.layout = layout;
        self
    }

    pub fn build(self) -> Result<SceneConfig> {
        self.cfg.validate()?;
        Ok(self.cfg)
    }
}

impl SceneConfig {
    pub fn builder(p: usize, q: usize, nr: usize) -> SceneConfigBuilder {
        SceneConfigBuilder {
            cfg: SceneConfig {
                p,
                q,
                nr,
                r: 1,
                k: vec![1],
                s: vec![1],
                snr_db: None,
                seed: 0,
                constellation: Constellation::Ask8,
                layout: SceneLayout::default(),
            },
        }
    }

    pub fn dims(&self) -> Dims {
        Dims { p: self.p, q: self.q, nr: self.nr }
    }

    pub fn len(&self) -> usize {
        self.p * self.q * self.nr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db.is_none_or(|s| s == f64::INFINITY)
    }

    /// Checks every structural invariant; deserialized configs should be
    /// passed through this before use.
    pub fn validate(&self) -> Result<()> {
        Dims::new(self.p, self.q, self.nr)?;
        if self.r == 0 {
            return domain("at least one user is required");
        }
        if self.k.len() != self.r || self.s.len() != self.r {
            return domain(format!(
                "k and s must list one entry per user (R={}, |k|={}, |s|={})",
                self.r,
                self.k.len(),
                self.s.len()
            ));
        }
        if self.k.iter().chain(&self.s).any(|&v| v == 0) {
            return domain("message lengths and path counts must be positive");
        }
        let unknowns: usize = self.k.iter().zip(&self.s).map(|(k, s)| k * s).sum();
        if unknowns > self.len() {
            return domain(format!(
                "L = {} samples cannot determine Σ s_i·k_i = {unknowns} unknowns",
                self.len()
            ));
        }
        if let Some(snr) = self.snr_db {
            if snr.is_nan() {
                return domain("snr_db is NaN");
            }
        }
        let l = &self.layout;
        if !(l.doppler_floor > 0.0 && l.doppler_floor < 0.25) {
            return domain("doppler_floor must lie in (0, 0.25)");
        }
        if l.gain_range.0 <= 0.0 || l.gain_range.1 < l.gain_range.0 {
            return domain("gain_range must be positive and ordered");
        }
        if l.perturbation < 0.0 {
            return domain("perturbation must be non-negative");
        }
        Ok(())
    }

    pub fn min_separation(&self) -> f64 {
        self.layout
            .min_separation
            .unwrap_or(1.0 / self.p.max(self.q).max(self.nr) as f64)
    }
}

/// One propagation path: complex gain and normalized `(τ, ν, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: C64,
    pub tau: f64,
    pub nu: f64,
    pub theta: f64,
}

impl PathParams {
    pub fn zeta(&self) -> Zeta {
        Zeta::new(self.tau, self.nu, self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Scatterer,
    Target,
}

/// Known per-user codebook `D_i = c_user(i)·A_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    #[serde(with = "serde_mat::matrix")]
    pub matrix: CMat,
    pub user_code: C64,
    #[serde(with = "serde_mat::matrix")]
    pub base: CMat,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }

    /// Row `n` of `D_i` as a vector (`d_n`).
    pub fn row(&self, n: usize) -> CVec {
        self.matrix.row(n).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub paths: Vec<PathParams>,
    pub path_kinds: Vec<PathKind>,
    #[serde(with = "serde_mat::vector")]
    pub message: CVec,
    /// ASK amplitude levels of the message, when the constellation has them.
    pub symbols: Option<Vec<i8>>,
    pub codebook: Codebook,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub users: Vec<UserSpec>,
    pub common_target_index: Vec<Option<usize>>,
    pub bs_position: [f64; 2],
}

impl Scene {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn codebooks(&self) -> Vec<&Codebook> {
        self.users.iter().map(|u| &u.codebook).collect()
    }

    pub fn true_zetas(&self) -> Vec<Vec<Zeta>> {
        self.users.iter().map(|u| u.paths.iter().map(|p| p.zeta()).collect()).collect()
    }
}

/// Noisy samples together with the scene that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    #[serde(with = "serde_mat::vector")]
    pub y: CVec,
    pub sigma: f64,
    pub eta: f64,
    pub dims: Dims,
    pub scene: Scene,
}

impl MeasurementSet {
    pub fn codebooks(&self) -> Vec<&Codebook> {
        self.scene.codebooks()
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }
}

/// Noise bound `σ·sqrt(L + sqrt(2 L ln L))`.
pub fn noise_bound(sigma: f64, l: usize) -> f64 {
    let l = l as f64;
    sigma * (l + (2.0 * l * l.ln()).sqrt()).sqrt()
}

/// Per-sample noise standard deviation that realizes `snr_db` relative to
/// the noiseless power.
pub fn snr_to_sigma(noiseless_power: f64, l: usize, snr_db: f64) -> Result<f64> {
    if !(noiseless_power > 0.0) {
        return domain(format!("noiseless power must be positive, got {noiseless_power}"));
    }
    if l == 0 {
        return domain("L must be at least 1");
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok((noiseless_power / (l as f64 * 10f64.powf(snr_db / 10.0))).sqrt())
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn normalize_columns(m: &mut CMat) {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= C64::new(n, 0.0);
        }
    }
}

/// Codebook of user `user_index` (1-based): an orthonormalized seeded common
/// basis, circularly row-shifted by the user index, slightly perturbed,
/// column-normalized and multiplied by the code `exp(j2π(i−1)/R)`.
pub fn make_codebook(config: &SceneConfig, user_index: usize, seed: u64) -> Result<Codebook> {
    if user_index == 0 || user_index > config.r {
        return domain(format!("user index {user_index} outside 1..={}", config.r));
    }
    let l = config.len();
    let k = config.k[user_index - 1];
    if k > l {
        return domain(format!("message length {k} exceeds L = {l}"));
    }

    let mut rng = stream_rng(seed, "codebook-common", k as u64);
    let gauss = CMat::from_fn(l, k, |_, _| complex_gaussian(&mut rng));
    let common = gauss.qr().q();

    let shifted = CMat::from_fn(l, k, |n, j| common[((n + l - user_index % l) % l, j)]);

    let mut rng = stream_rng(seed, "codebook-perturb", user_index as u64);
    let noise = CMat::from_fn(l, k, |_, _| complex_gaussian(&mut rng));
    let scale = config.layout.perturbation * shifted.norm() / noise.norm();
    let mut base = shifted + noise.scale(scale);
    normalize_columns(&mut base);

    let user_code = cis(TAU * (user_index - 1) as f64 / config.r as f64);
    Ok(Codebook { matrix: base.map(|z| z * user_code), user_code, base })
}

/// Draws a unit-norm message in canonical form.
///
/// Messages are only identifiable up to a common sign (or phase) shared with
/// the path gains and, for ASK, up to a common scale of the amplitude levels.
/// The canonical representative has its first largest-magnitude entry
/// real-positive and, when all ASK amplitudes have equal magnitude, uses
/// magnitude 1.
pub fn draw_message<R: Rng>(
    constellation: Constellation,
    k: usize,
    rng: &mut R,
) -> (CVec, Option<Vec<i8>>) {
    match constellation {
        Constellation::Ask8 => {
            let mut levels: Vec<i8> =
                (0..k).map(|_| ASK8_LEVELS[rng.random_range(0..ASK8_LEVELS.len())]).collect();
            canonicalize_levels(&mut levels);
            let v = CVec::from_iterator(k, levels.iter().map(|&s| C64::new(f64::from(s), 0.0)));
            let n = v.norm();
            (v.unscale(n), Some(levels))
        }
        Constellation::UnitNormGaussian => {
            let mut v = CVec::from_fn(k, |_, _| complex_gaussian(rng));
            let n = v.norm();
            v.unscale_mut(n);
            (anchor_phase(&v), None)
        }
    }
}

/// Canonical sign/scale representative of an ASK level vector.
pub fn canonicalize_levels(levels: &mut [i8]) {
    if levels.is_empty() {
        return;
    }
    let m0 = levels[0].unsigned_abs();
    if levels.iter().all(|s| s.unsigned_abs() == m0) {
        for s in levels.iter_mut() {
            *s = s.signum();
        }
    }
    let max = levels.iter().map(|s| s.unsigned_abs()).max().unwrap_or(0);
    let first = levels.iter().position(|s| s.unsigned_abs() == max).unwrap_or(0);
    if levels[first] < 0 {
        for s in levels.iter_mut() {
            *s = -*s;
        }
    }
}

/// Rotates `v` so that its first largest-magnitude entry is real-positive.
/// Entries within a relative `1e-6` of the maximum count as ties.
pub fn anchor_phase(v: &CVec) -> CVec {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return v.clone();
    }
    let idx = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-6)).unwrap_or(0);
    let rot = v[idx].conj() / v[idx].norm();
    v.map(|z| z * rot)
}

fn draw_axis<R: Rng>(dims: &Dims, axis: Axis, lo: f64, hi: f64, rng: &mut R) -> f64 {
    if dims.extent(axis) > 1 {
        rng.random_range(lo..hi)
    } else {
        0.0
    }
}

fn separated(dims: &Dims, sep: f64, a: &Zeta, b: &Zeta) -> bool {
    dims.active_axes()
        .into_iter()
        .any(|ax| torus_distance(a.get(ax), b.get(ax)) >= sep)
}

/// Random scene per `config`: target paths first (the first of them shared
/// by all users through a common angle when enabled), then stationary
/// scatterers with Doppler below the floor.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let dims = config.dims();
    let layout = &config.layout;
    let sep = config.min_separation();
    let floor = layout.doppler_floor;
    let codebook_seed = derive_seed(config.seed, "codebook", 0);

    let mut rng = stream_rng(config.seed, "common-target", 0);
    let common_theta = draw_axis(&dims, Axis::Angle, 0.0, 1.0, &mut rng);

    let mut users = Vec::with_capacity(config.r);
    let mut common_idx = Vec::with_capacity(config.r);
    for i in 0..config.r {
        let mut rng = stream_rng(config.seed, "paths", i as u64);
        let s = config.s[i];
        let n_targets = layout.targets_per_user.min(s);
        let shared = layout.common_target && n_targets > 0;
        common_idx.push(shared.then_some(0));

        let mut paths: Vec<PathParams> = Vec::with_capacity(s);
        let mut kinds = Vec::with_capacity(s);
        for l in 0..s {
            let kind = if l < n_targets { PathKind::Target } else { PathKind::Scatterer };
            let mut accepted = None;
            for _ in 0..10_000 {
                let tau = draw_axis(&dims, Axis::Delay, 0.0, 1.0, &mut rng);
                let nu = match kind {
                    PathKind::Target => draw_axis(&dims, Axis::Doppler, 2.0 * floor, 1.0 - 2.0 * floor, &mut rng),
                    PathKind::Scatterer => draw_axis(&dims, Axis::Doppler, 0.0, floor, &mut rng),
                };
                let mut theta = draw_axis(&dims, Axis::Angle, 0.0, 1.0, &mut rng);
                if shared && l == 0 {
                    theta = common_theta;
                }
                let z = Zeta::new(tau, nu, theta);
                if paths.iter().all(|p| separated(&dims, sep, &p.zeta(), &z)) {
                    accepted = Some(z);
                    break;
                }
            }
            let z = accepted.ok_or_else(|| {
                Error::Domain(format!(
                    "could not place {s} paths for user {} with separation {sep}",
                    i + 1
                ))
            })?;
            let mag = rng.random_range(layout.gain_range.0..=layout.gain_range.1);
            let gain = C64::from_polar(mag, rng.random_range(0.0..TAU));
            paths.push(PathParams { gain, tau: z.tau, nu: z.nu, theta: z.theta });
            kinds.push(kind);
        }

        let (message, symbols) = draw_message(config.constellation, config.k[i], &mut rng);
        let position = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
        let velocity = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
        let codebook = make_codebook(config, i + 1, codebook_seed)?;
        users.push(UserSpec { position, velocity, paths, path_kinds: kinds, message, symbols, codebook });
    }

    Ok(Scene { users, common_target_index: common_idx, bs_position: [0.0, 0.0] })
}

/// Noiseless samples `Σ_i Σ_ℓ c_{ℓ,i} [a(ζ)]_n (d_n^i)ᵀ f_i`.
pub fn noiseless_samples(scene: &Scene, dims: Dims) -> Result<CVec> {
    let l = dims.len();
    let mut y = CVec::zeros(l);
    for (i, user) in scene.users.iter().enumerate() {
        let d = &user.codebook.matrix;
        if d.nrows() != l || d.ncols() != user.message.len() {
            return domain(format!(
                "user {} codebook is {}x{}, expected {l}x{}",
                i + 1,
                d.nrows(),
                d.ncols(),
                user.message.len()
            ));
        }
        let symbols = d * &user.message;
        for path in &user.paths {
            let a = steering_vector(path.zeta(), dims);
            y += a.component_mul(&symbols) * path.gain;
        }
    }
    Ok(y)
}

/// Adds circularly-symmetric Gaussian noise at the configured SNR.
pub fn synthesize_measurements(scene: &Scene, config: &SceneConfig) -> Result<MeasurementSet> {
    config.validate()?;
    if scene.users.len() != config.r {
        return domain(format!("scene has {} users, config expects {}", scene.users.len(), config.r));
    }
    let dims = config.dims();
    let l = dims.len();
    let clean = noiseless_samples(scene, dims)?;
    let sigma = match config.snr_db {
        Some(snr) if snr != f64::INFINITY => snr_to_sigma(clean.norm_squared(), l, snr)?,
        _ => 0.0,
    };
    let mut y = clean;
    if sigma > 0.0 {
        let mut rng = stream_rng(config.seed, "noise", 0);
        for v in y.iter_mut() {
            *v += complex_gaussian(&mut rng) * sigma;
        }
    }
    Ok(MeasurementSet { y, sigma, eta: noise_bound(sigma, l), dims, scene: scene.clone() })
}

/// [`generate_scene`] followed by [`synthesize_measurements`].
pub fn simulate(config: &SceneConfig) -> Result<MeasurementSet> {
    let scene = generate_scene(config)?;
    synthesize_measurements(&scene, config)
}

/// `Σ_i ‖d_n^i‖²` for every sample index `n`.
pub(crate) fn stacked_row_norms(codebooks: &[&Codebook], l: usize) -> Vec<f64> {
    (0..l)
        .map(|n| {
            codebooks
                .iter()
                .map(|cb| cb.matrix.row(n).iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum()
        })
        .collect()
}
