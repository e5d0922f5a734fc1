//! Message recovery by least squares on the atom dictionary, once with the
//! true parameters and once with a perturbed angle.

use isac::decode::decode;
use isac::{simulate, SceneConfig};

fn main() -> isac::Result<()> {
    let cfg = SceneConfig::builder(1, 1, 30).users(4, 3, 1).snr_db(10.0).seed(5).build()?;
    let meas = simulate(&cfg)?;
    let truth = meas.scene.true_zetas();
    let res = decode(&meas, &truth)?;
    println!("true angles: SER {:?}, aggregate {:.3}", res.ser_per_user, res.ser_aggregate);
    for (i, user) in meas.scene.users.iter().enumerate() {
        println!("  user {} sent {:?} decoded {:?}", i + 1, user.symbols.as_deref().unwrap_or(&[]), res.symbols[i]);
    }

    let shifted: Vec<_> = truth
        .iter()
        .map(|z| z.iter().map(|z| isac::Zeta::new(z.tau, z.nu, z.theta + 0.02)).collect())
        .collect();
    let off = decode(&meas, &shifted)?;
    println!("angle off by 0.02: aggregate SER {:.3}", off.ser_aggregate);
    Ok(())
}
