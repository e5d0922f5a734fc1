//! Target range from multi-user delay estimates, swept over the number of
//! collaborating users.

use super::{write_rows, ExperimentConfig, RunSummary};
use crate::error::Result;
use crate::locate::{localization_mae, LocalizationSetup};

/// The localization setup with the scene, solver and decomposition settings
/// of `cfg` applied.
pub fn setup_for(cfg: &ExperimentConfig) -> LocalizationSetup {
    LocalizationSetup {
        q: cfg.scene.q,
        k: cfg.scene.k[0],
        snr_db: cfg.scene.snr_db,
        pool: cfg.scene.r,
        solver: cfg.solver.clone(),
        mapp: cfg.mapp.clone(),
        ..cfg.localization.clone()
    }
}

pub fn run_localization(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let setup = setup_for(cfg);
    let (rows, records) = localization_mae(&setup, &cfg.r_values, cfg.trials, cfg.seed)?;
    let mut files = Vec::new();
    write_rows(&cfg.output_dir, "mae.csv", &rows, &mut files)?;
    write_rows(&cfg.output_dir, "trials.csv", &records, &mut files)?;
    Ok(RunSummary {
        experiment: cfg.experiment,
        trials: cfg.trials,
        non_converged: records.iter().filter(|r| !r.converged).count(),
        files,
    })
}
