//! Dual SDP, per-user dual polynomials on a delay–Doppler grid and their
//! peaks. Grids are written next to the working directory as CSV.

use isac::dualpoly::{default_resolutions, eval_poly, find_peaks, scan_grid};
use isac::sdp::{solve_dual, SolverOpts};
use isac::{simulate, SceneConfig};

fn main() -> isac::Result<()> {
    let cfg = SceneConfig::builder(8, 8, 1).users(2, 2, 2).snr_db(15.0).seed(11).build()?;
    let meas = simulate(&cfg)?;
    let dual = solve_dual(&meas, &SolverOpts::default())?;
    println!("dual objective {:.5}", dual.objective);
    let res = default_resolutions(meas.dims);
    for (i, user) in meas.scene.users.iter().enumerate() {
        for p in &user.paths {
            let (_, f) = eval_poly(&dual.q, &user.codebook, p.zeta(), meas.dims)?;
            println!("user {} truth ({:.3}, {:.3}) f = {f:.4}", i + 1, p.tau, p.nu);
        }
        let grid = scan_grid(&dual.q, &user.codebook, meas.dims, res, false)?;
        for peak in find_peaks(&grid, user.paths.len(), true)?.peaks {
            println!("user {} peak  ({:.3}, {:.3}) f = {:.4}", i + 1, peak.zeta.tau, peak.zeta.nu, peak.height);
        }
        let path = std::env::temp_dir().join(format!("dual_user{}.csv", i + 1));
        grid.write_csv(&path)?;
        println!("grid written to {}", path.display());
    }
    Ok(())
}
