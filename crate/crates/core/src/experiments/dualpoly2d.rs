//! Per-user dual polynomials over the delay–Doppler plane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{match_atoms, write_rows, ExperimentConfig, RunSummary, SolverRow};
use crate::dualpoly::{find_peaks, scan_grid, PolyGrid};
use crate::error::Result;
use crate::model::simulate;
use crate::sdp::solve_dual;

/// One detected peak and the true path it was matched to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub trial: usize,
    pub user: usize,
    pub rank: usize,
    pub tau: f64,
    pub nu: f64,
    pub theta: f64,
    pub height: f64,
    pub flat: bool,
    pub shortfall: bool,
    pub truth_index: Option<usize>,
    pub truth_tau: Option<f64>,
    pub truth_nu: Option<f64>,
    pub truth_theta: Option<f64>,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualpolyTrial {
    pub grids: Vec<PolyGrid>,
    pub peaks: Vec<PeakRow>,
    pub solver: SolverRow,
    pub converged: bool,
}

pub fn dualpoly2d_trial(cfg: &ExperimentConfig, trial: usize) -> Result<DualpolyTrial> {
    let meas = simulate(&cfg.trial_scene(trial))?;
    let sol = solve_dual(&meas, &cfg.solver)?;
    let res = cfg.resolutions(meas.dims)?;
    let mut grids = Vec::new();
    let mut peaks = Vec::new();
    for (i, user) in meas.scene.users.iter().enumerate() {
        let grid = scan_grid(&sol.q, &user.codebook, meas.dims, res, false)?;
        let found = find_peaks(&grid, user.paths.len(), true)?;
        let truth: Vec<_> = user.paths.iter().map(|p| p.zeta()).collect();
        let est: Vec<_> = found.peaks.iter().map(|p| p.zeta).collect();
        for (rank, (p, m)) in found.peaks.iter().zip(match_atoms(&truth, &est)).enumerate() {
            let t = m.map(|(t, _)| truth[t]);
            peaks.push(PeakRow {
                trial,
                user: i + 1,
                rank,
                tau: p.zeta.tau,
                nu: p.zeta.nu,
                theta: p.zeta.theta,
                height: p.height,
                flat: found.flat,
                shortfall: found.shortfall,
                truth_index: m.map(|m| m.0),
                truth_tau: t.map(|z| z.tau),
                truth_nu: t.map(|z| z.nu),
                truth_theta: t.map(|z| z.theta),
                error: m.map(|m| m.1),
            });
        }
        grids.push(grid);
    }
    Ok(DualpolyTrial {
        grids,
        peaks,
        solver: SolverRow::new(trial, &sol.diagnostics, sol.objective),
        converged: sol.diagnostics.converged(),
    })
}

pub fn run_dualpoly2d(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let trials: Vec<DualpolyTrial> =
        (0..cfg.trials).into_par_iter().map(|t| dualpoly2d_trial(cfg, t)).collect::<Result<_>>()?;
    let mut files = Vec::new();
    for (t, tr) in trials.iter().enumerate() {
        for (i, g) in tr.grids.iter().enumerate() {
            let name = if cfg.trials == 1 {
                format!("grid_user{}.csv", i + 1)
            } else {
                format!("grid_trial{t}_user{}.csv", i + 1)
            };
            g.write_csv(cfg.output_dir.join(&name))?;
            files.push(name);
        }
    }
    let peaks: Vec<PeakRow> = trials.iter().flat_map(|t| t.peaks.iter().cloned()).collect();
    let solver: Vec<SolverRow> = trials.iter().map(|t| t.solver.clone()).collect();
    write_rows(&cfg.output_dir, "peaks.csv", &peaks, &mut files)?;
    write_rows(&cfg.output_dir, "solver.csv", &solver, &mut files)?;
    Ok(RunSummary {
        experiment: cfg.experiment,
        trials: cfg.trials,
        non_converged: trials.iter().filter(|t| !t.converged).count(),
        files,
    })
}
