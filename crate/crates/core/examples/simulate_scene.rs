//! Draws a seeded multi-user scene and its noisy samples.

use isac::{simulate, SceneConfig};

fn main() -> isac::Result<()> {
    let cfg = SceneConfig::builder(4, 4, 4).users(2, 3, 2).snr_db(20.0).seed(7).build()?;
    let meas = simulate(&cfg)?;
    println!("L = {}, sigma = {:.4}, eta = {:.4}", meas.y.len(), meas.sigma, meas.eta);
    for (i, user) in meas.scene.users.iter().enumerate() {
        println!("user {} symbols {:?}", i + 1, user.symbols.as_deref().unwrap_or(&[]));
        for (p, kind) in user.paths.iter().zip(&user.path_kinds) {
            println!(
                "  {kind:?}: tau {:.3} nu {:.3} theta {:.3} |c| {:.3}",
                p.tau,
                p.nu,
                p.theta,
                p.gain.norm()
            );
        }
    }
    Ok(())
}
