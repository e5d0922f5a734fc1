//! Noiseless primal atomic-norm recovery followed by the Vandermonde
//! decomposition of each user's Toeplitz block.

use isac::mapp3d::{decompose, Mapp3dOpts};
use isac::sdp::{solve_primal, SolverOpts};
use isac::{simulate, SceneConfig};

fn main() -> isac::Result<()> {
    let cfg = SceneConfig::builder(4, 4, 4).users(1, 2, 2).noiseless().seed(3).build()?;
    let meas = simulate(&cfg)?;
    let sol = solve_primal(&meas, &SolverOpts::default())?.into_converged()?;
    sol.diagnostics.summary(std::io::stdout())?;
    for (user, block) in meas.scene.users.iter().zip(&sol.users) {
        let est = decompose(&block.toeplitz, meas.dims, &Mapp3dOpts::default())?;
        for p in &user.paths {
            println!("truth     {:.5} {:.5} {:.5}", p.tau, p.nu, p.theta);
        }
        for (z, pw) in est.zetas.iter().zip(&est.powers) {
            println!("estimate  {:.5} {:.5} {:.5}  power {pw:.4}", z.tau, z.nu, z.theta);
        }
    }
    Ok(())
}
