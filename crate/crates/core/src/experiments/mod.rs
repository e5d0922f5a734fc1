//! Seeded Monte Carlo studies. Each run resolves an [`ExperimentConfig`]
//! from per-study defaults plus JSON overrides, writes CSV tables into the
//! output directory and records a `manifest.json` that pins everything
//! needed to reproduce them.

mod dualpoly2d;
mod fusion;
mod localization;
mod recovery3d;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::locate::LocalizationSetup;
use crate::mapp3d::Mapp3dOpts;
use crate::model::{SceneConfig, SceneLayout};
use crate::rng::derive_seed;
use crate::sdp::SolverOpts;

pub use dualpoly2d::{dualpoly2d_trial, run_dualpoly2d, DualpolyTrial, PeakRow};
pub use fusion::{fusion_study, fusion_trial, run_fusion_aoa_ser, FusionStudy, FusionTrial, MethodOutcome, MethodSummary};
pub use localization::{run_localization, setup_for};
pub use recovery3d::{recovery3d_trial, run_recovery3d, RecoveryTrial, TripleRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Recovery3d,
    Dualpoly2d,
    Localization,
    FusionAoaSer,
}

impl Experiment {
    pub const ALL: [Experiment; 4] =
        [Experiment::Recovery3d, Experiment::Dualpoly2d, Experiment::Localization, Experiment::FusionAoaSer];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Recovery3d => "recovery3d",
            Experiment::Dualpoly2d => "dualpoly2d",
            Experiment::Localization => "localization",
            Experiment::FusionAoaSer => "fusion_aoa_ser",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown experiment '{s}'")))
    }
}

/// Fully resolved description of one run.
///
/// `scene.seed` is ignored: trial `t` simulates with the seed derived from
/// `(seed, experiment, t)`. For the localization study `scene` supplies
/// `Q`, `k[0]`, `R` (pool size) and `snr_db`, while `localization` holds the
/// geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub scene: SceneConfig,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub solver: SolverOpts,
    pub mapp: Mapp3dOpts,
    /// Dual-polynomial grid points per active axis; `None` uses
    /// [`default_resolutions`](crate::dualpoly::default_resolutions).
    pub resolution: Option<usize>,
    /// User counts swept by the localization study.
    pub r_values: Vec<usize>,
    pub localization: LocalizationSetup,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = ExperimentConfig {
            experiment,
            scene: SceneConfig::builder(1, 1, 1).build().expect("trivial scene is valid"),
            trials: 1,
            output_dir: PathBuf::from("out").join(experiment.name()),
            seed: 0,
            solver: SolverOpts::default(),
            mapp: Mapp3dOpts::default(),
            resolution: None,
            r_values: vec![1, 2, 3, 4, 5],
            localization: LocalizationSetup::default(),
        };
        let noisy = SolverOpts { tol: 1e-4, ..SolverOpts::default() };
        match experiment {
            Experiment::Recovery3d => ExperimentConfig {
                scene: SceneConfig {
                    layout: SceneLayout { targets_per_user: 2, ..SceneLayout::default() },
                    ..scene(6, 6, 6, 1, 2, 4, Some(30.0))
                },
                ..base
            },
            Experiment::Dualpoly2d => ExperimentConfig { scene: scene(8, 8, 1, 2, 2, 2, Some(0.0)), ..base },
            Experiment::Localization => ExperimentConfig {
                scene: scene(1, 64, 1, 5, 1, 1, Some(5.0)),
                trials: 50,
                solver: noisy,
                ..base
            },
            Experiment::FusionAoaSer => ExperimentConfig {
                scene: scene(1, 1, 30, 4, 3, 1, Some(0.0)),
                trials: 100,
                solver: noisy,
                ..base
            },
        }
    }

    /// Defaults of `experiment` overlaid with a JSON object. Objects merge
    /// recursively; any other value, `null` included, replaces.
    pub fn from_json(experiment: Option<Experiment>, text: &str) -> Result<Self> {
        let patch: Value = serde_json::from_str(text)?;
        if !patch.is_object() {
            return domain("configuration must be a JSON object");
        }
        let named = match patch.get("experiment") {
            Some(v) => Some(serde_json::from_value::<Experiment>(v.clone())?),
            None => None,
        };
        let experiment = match (experiment, named) {
            (Some(a), Some(b)) if a != b => {
                return domain(format!("configuration is for '{b}' but '{a}' was requested"));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return domain("no experiment named"),
        };
        let mut merged = serde_json::to_value(Self::defaults(experiment))?;
        merge(&mut merged, &patch);
        let cfg: ExperimentConfig = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(experiment: Option<Experiment>, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(experiment, &fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return domain("trials must be at least 1");
        }
        self.scene.validate()?;
        self.solver.validate()?;
        match self.experiment {
            Experiment::Localization => {
                if self.r_values.is_empty() || self.r_values.iter().any(|&r| r == 0 || r > self.scene.r) {
                    return domain(format!("r_values must lie in 1..={}", self.scene.r));
                }
                if self.scene.p != 1 || self.scene.nr != 1 {
                    return domain("the localization study is delay-only (P = N_r = 1)");
                }
            }
            Experiment::FusionAoaSer => {
                if self.scene.k.iter().any(|&k| k != self.scene.k[0]) {
                    return domain("aligned fusion needs equal message lengths");
                }
                if self.scene.s.iter().any(|&s| s != 1) || !self.scene.layout.common_target {
                    return domain("the fusion study uses one shared target path per user");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn resolutions(&self, dims: crate::Dims) -> Result<[usize; 3]> {
        match self.resolution {
            Some(r) => crate::dualpoly::grid_resolutions(dims, r),
            None => Ok(crate::dualpoly::default_resolutions(dims)),
        }
    }

    /// Scene configuration of trial `t`.
    pub fn trial_scene(&self, trial: usize) -> SceneConfig {
        SceneConfig { seed: self.trial_seed(trial), ..self.scene.clone() }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, self.experiment.name(), trial as u64)
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        let digest = Sha256::digest(serde_json::to_string(&v)?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn scene(p: usize, q: usize, nr: usize, r: usize, k: usize, s: usize, snr_db: Option<f64>) -> SceneConfig {
    SceneConfig { snr_db, ..SceneConfig::builder(p, q, nr).users(r, k, s).build().expect("default scene is valid") }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub trials: usize,
    /// Trials whose solver stopped at the iteration limit.
    pub non_converged: usize,
    /// Output files relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: Experiment,
    crate_version: &'static str,
    seed: u64,
    trials: usize,
    config_sha256: String,
    non_converged: usize,
    files: &'a [String],
    tolerances: Tolerances<'a>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Tolerances<'a> {
    solver: &'a SolverOpts,
    mapp: &'a Mapp3dOpts,
}

/// Runs the configured study, writing its tables and the manifest into
/// `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let mut summary = match config.experiment {
        Experiment::Recovery3d => run_recovery3d(config)?,
        Experiment::Dualpoly2d => run_dualpoly2d(config)?,
        Experiment::Localization => run_localization(config)?,
        Experiment::FusionAoaSer => run_fusion_aoa_ser(config)?,
    };
    summary.files.sort();
    let manifest = Manifest {
        experiment: config.experiment,
        crate_version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        trials: config.trials,
        config_sha256: config.hash()?,
        non_converged: summary.non_converged,
        files: &summary.files,
        tolerances: Tolerances { solver: &config.solver, mapp: &config.mapp },
        config,
    };
    fs::write(config.output_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(summary)
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T], files: &mut Vec<String>) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    files.push(name.to_string());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRow {
    pub trial: usize,
    pub status: crate::sdp::SolverStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub penalty: f64,
    pub objective: f64,
}

impl SolverRow {
    fn new(trial: usize, d: &crate::sdp::SolverDiagnostics, objective: f64) -> Self {
        SolverRow {
            trial,
            status: d.status,
            iterations: d.iterations,
            primal_residual: d.primal_residual,
            dual_residual: d.dual_residual,
            penalty: d.penalty,
            objective,
        }
    }
}

/// Greedy one-to-one matching by smallest wrap-around distance. Returns, for
/// every estimate, the matched truth index and the distance.
pub fn match_atoms(
    truth: &[crate::Zeta],
    estimates: &[crate::Zeta],
) -> Vec<Option<(usize, f64)>> {
    let mut pairs: Vec<(f64, usize, usize)> = estimates
        .iter()
        .enumerate()
        .flat_map(|(e, ze)| truth.iter().enumerate().map(move |(t, zt)| (ze.max_torus_distance(zt), e, t)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; estimates.len()];
    let mut used = vec![false; truth.len()];
    for (d, e, t) in pairs {
        if out[e].is_none() && !used[t] {
            out[e] = Some((t, d));
            used[t] = true;
        }
    }
    out
}
