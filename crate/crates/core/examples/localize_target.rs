//! Target range from bistatic distance sums, first with exact delays and
//! then with delays estimated from noisy samples.

use isac::locate::{localization_trial, localize, Geometry, LocalizationSetup, LocalizeOpts};

fn main() -> isac::Result<()> {
    let users = vec![[-40.0, 70.0], [80.0, -20.0], [10.0, -90.0]];
    let geom = Geometry::new([0.0, 0.0], users.clone(), [50.0, 30.0])?;
    let sums: Vec<f64> = (0..users.len()).map(|i| geom.distance_sum(i)).collect();
    let fit = localize(geom.bs_position, &users, &sums, &LocalizeOpts::default())?;
    println!("exact sums: position {:?}, residual {:.2e}", fit.position, fit.residual);

    let setup = LocalizationSetup { q: 32, ..LocalizationSetup::default() };
    for r in [1, 3, 5] {
        let rec = localization_trial(&setup, r, 0, 42)?;
        println!("R = {r}: range error {:.3} m (largest delay error {:.2e})", rec.abs_error_m, rec.max_delay_error);
    }
    Ok(())
}
