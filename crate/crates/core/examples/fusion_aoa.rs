//! One angle-only trial: every fusion rule's estimate of the common
//! target's angle and the resulting symbol error rates.

use isac::experiments::{fusion_trial, Experiment, ExperimentConfig};

fn main() -> isac::Result<()> {
    let mut cfg = ExperimentConfig::defaults(Experiment::FusionAoaSer);
    cfg.scene.snr_db = Some(5.0);
    for trial in 0..3 {
        let t = fusion_trial(&cfg, trial)?;
        println!("trial {trial}: true angle {:.4}", t.outcomes[0].theta_true);
        for o in &t.outcomes {
            println!("  {:<10} angle {:.4}  error {:.4}  SER {:.3}", o.method.name(), o.theta_hat, o.abs_error, o.ser_aggregate);
        }
    }
    Ok(())
}
