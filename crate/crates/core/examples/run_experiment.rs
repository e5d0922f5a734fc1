//! Runs a reduced localization study programmatically and prints its table.
//! The full studies are available through the `isac` binary.

use isac::experiments::{run, Experiment, ExperimentConfig};

fn main() -> isac::Result<()> {
    let out = std::env::temp_dir().join("isac-localization-demo");
    let cfg = ExperimentConfig::from_json(
        Some(Experiment::Localization),
        &format!(
            r#"{{"trials": 4, "r_values": [1, 3], "scene": {{"Q": 16}}, "output_dir": {:?}}}"#,
            out.display().to_string()
        ),
    )?;
    let summary = run(&cfg)?;
    println!("{} non-converged; files {:?}", summary.non_converged, summary.files);
    print!("{}", std::fs::read_to_string(out.join("mae.csv"))?);
    Ok(())
}
