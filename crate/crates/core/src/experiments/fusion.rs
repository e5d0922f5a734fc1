//! Angle of the common target and message recovery under every fusion rule.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_rows, ExperimentConfig, RunSummary, SolverRow};
use crate::atoms::torus_distance;
use crate::decode::decode;
use crate::dualpoly::{scan_grid, PolyGrid};
use crate::error::{domain, Result};
use crate::fusion::{estimate, FusionMethod};
use crate::model::simulate;
use crate::sdp::solve_dual;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub trial: usize,
    pub method: FusionMethod,
    pub theta_true: f64,
    pub theta_hat: f64,
    /// Wrap-around angle error in normalized units.
    pub abs_error: f64,
    pub ser_aggregate: f64,
    pub ser_per_user: Vec<f64>,
    /// Every user's dual polynomial vanished (`‖y‖ ≤ η`).
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrial {
    /// One entry per method, in [`FusionMethod::ALL`] order.
    pub outcomes: Vec<MethodOutcome>,
    pub solver: SolverRow,
    pub converged: bool,
}

/// Aggregates of one method over all trials, with paired comparisons
/// against the non-collaborative baseline (positive gains favour the
/// method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: FusionMethod,
    pub trials: usize,
    pub aoa_mae: f64,
    pub ser_mean: f64,
    pub aoa_gain: f64,
    /// Mean paired difference over its standard deviation.
    pub aoa_effect_size: f64,
    /// Fraction of trials with a strictly smaller angle error.
    pub aoa_win_rate: f64,
    pub ser_gain: f64,
    pub ser_effect_size: f64,
    pub ser_win_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionStudy {
    pub trials: Vec<FusionTrial>,
    pub summary: Vec<MethodSummary>,
}

impl FusionStudy {
    pub fn method(&self, m: FusionMethod) -> &MethodSummary {
        self.summary.iter().find(|s| s.method == m).expect("every method is summarized")
    }
}

pub fn fusion_trial(cfg: &ExperimentConfig, trial: usize) -> Result<FusionTrial> {
    let meas = simulate(&cfg.trial_scene(trial))?;
    let Some(Some(t0)) = meas.scene.common_target_index.first().copied() else {
        return domain("the scene has no common target");
    };
    let theta_true = meas.scene.users[0].paths[t0].theta;
    let sol = solve_dual(&meas, &cfg.solver)?;
    let res = cfg.resolutions(meas.dims)?;
    let grids: Vec<PolyGrid> = meas
        .scene
        .users
        .iter()
        .map(|u| scan_grid(&sol.q, &u.codebook, meas.dims, res, true))
        .collect::<Result<_>>()?;
    let codes: Vec<_> = meas.scene.users.iter().map(|u| u.codebook.user_code).collect();
    let degenerate = grids.iter().all(|g| g.max() <= 0.0);
    let mut outcomes = Vec::new();
    for method in FusionMethod::ALL {
        // Peak-height weights are all zero on vanished polynomials; equal
        // weights are their only consistent limit.
        let rule = if degenerate && method == FusionMethod::Weighted { FusionMethod::Average } else { method };
        let z = estimate(rule, &grids, &codes)?;
        let zetas = vec![vec![z]; meas.scene.users.len()];
        let dec = decode(&meas, &zetas)?;
        outcomes.push(MethodOutcome {
            trial,
            method,
            theta_true,
            theta_hat: z.theta,
            abs_error: torus_distance(z.theta, theta_true),
            ser_aggregate: dec.ser_aggregate,
            ser_per_user: dec.ser_per_user,
            degenerate,
        });
    }
    Ok(FusionTrial {
        outcomes,
        solver: SolverRow::new(trial, &sol.diagnostics, sol.objective),
        converged: sol.diagnostics.converged(),
    })
}

fn paired(diff: &[f64]) -> (f64, f64, f64) {
    let n = diff.len() as f64;
    let mean = diff.iter().sum::<f64>() / n;
    let var = if diff.len() > 1 { diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let effect = if var > 0.0 {
        mean / var.sqrt()
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    let wins = diff.iter().filter(|&&d| d > 0.0).count() as f64 / n;
    (mean, effect, wins)
}

fn summarize(trials: &[FusionTrial]) -> Vec<MethodSummary> {
    let column = |m: usize, f: fn(&MethodOutcome) -> f64| -> Vec<f64> {
        trials.iter().map(|t| f(&t.outcomes[m])).collect()
    };
    let base_err = column(0, |o| o.abs_error);
    let base_ser = column(0, |o| o.ser_aggregate);
    FusionMethod::ALL
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let err = column(m, |o| o.abs_error);
            let ser = column(m, |o| o.ser_aggregate);
            let d_err: Vec<f64> = base_err.iter().zip(&err).map(|(b, e)| b - e).collect();
            let d_ser: Vec<f64> = base_ser.iter().zip(&ser).map(|(b, e)| b - e).collect();
            let (aoa_gain, aoa_effect_size, aoa_win_rate) = paired(&d_err);
            let (ser_gain, ser_effect_size, ser_win_rate) = paired(&d_ser);
            let n = trials.len() as f64;
            MethodSummary {
                method,
                trials: trials.len(),
                aoa_mae: err.iter().sum::<f64>() / n,
                ser_mean: ser.iter().sum::<f64>() / n,
                aoa_gain,
                aoa_effect_size,
                aoa_win_rate,
                ser_gain,
                ser_effect_size,
                ser_win_rate,
            }
        })
        .collect()
}

/// All trials of the study, in trial order, and their summary.
pub fn fusion_study(cfg: &ExperimentConfig) -> Result<FusionStudy> {
    debug_assert_eq!(FusionMethod::ALL[0], FusionMethod::NonCollaborative);
    let trials: Vec<FusionTrial> =
        (0..cfg.trials).into_par_iter().map(|t| fusion_trial(cfg, t)).collect::<Result<_>>()?;
    let summary = summarize(&trials);
    Ok(FusionStudy { trials, summary })
}

fn write_ser(dir: &Path, study: &FusionStudy, users: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("ser.csv"))?;
    let mut header = vec!["trial".to_string(), "method".into(), "ser_aggregate".into()];
    header.extend((1..=users).map(|i| format!("ser_user{i}")));
    w.write_record(&header)?;
    for o in study.trials.iter().flat_map(|t| &t.outcomes) {
        let mut rec = vec![o.trial.to_string(), o.method.name().to_string(), o.ser_aggregate.to_string()];
        rec.extend(o.ser_per_user.iter().map(|s| s.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct AoaRow<'a> {
    trial: usize,
    method: &'a str,
    theta_true: f64,
    theta_hat: f64,
    abs_error: f64,
    degenerate: bool,
}

pub fn run_fusion_aoa_ser(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let study = fusion_study(cfg)?;
    let mut files = Vec::new();
    let aoa: Vec<AoaRow> = study
        .trials
        .iter()
        .flat_map(|t| &t.outcomes)
        .map(|o| AoaRow {
            trial: o.trial,
            method: o.method.name(),
            theta_true: o.theta_true,
            theta_hat: o.theta_hat,
            abs_error: o.abs_error,
            degenerate: o.degenerate,
        })
        .collect();
    write_rows(&cfg.output_dir, "aoa_error.csv", &aoa, &mut files)?;
    write_ser(&cfg.output_dir, &study, cfg.scene.r)?;
    files.push("ser.csv".into());
    write_rows(&cfg.output_dir, "summary.csv", &study.summary, &mut files)?;
    let solver: Vec<SolverRow> = study.trials.iter().map(|t| t.solver.clone()).collect();
    write_rows(&cfg.output_dir, "solver.csv", &solver, &mut files)?;
    Ok(RunSummary {
        experiment: cfg.experiment,
        trials: cfg.trials,
        non_converged: study.trials.iter().filter(|t| !t.converged).count(),
        files,
    })
}
