use std::fs;
use std::process::Command;

use isac::dualpoly::{default_resolutions, find_peaks, scan_grid};
use isac::experiments::{run, Experiment, ExperimentConfig};
use isac::fusion::fuse_aligned;
use isac::linalg::{CMat, CVec, C64};

fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}
use isac::model::Codebook;
use isac::sdp::{solve_dual_raw, solve_primal, solve_primal_raw, SolverOpts};
use isac::{simulate, SceneConfig};

fn small_config(experiment: Experiment, dir: &std::path::Path, overrides: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(Some(experiment), overrides).unwrap();
    cfg.output_dir = dir.to_path_buf();
    cfg
}

#[test]
fn loose_noise_bound_gives_the_zero_solution() {
    let cfg = SceneConfig::builder(2, 2, 2).users(2, 2, 1).snr_db(10.0).seed(1).build().unwrap();
    let meas = simulate(&cfg).unwrap();
    let eta = 1.5 * meas.y.norm();
    let sol = solve_primal_raw(meas.dims, &meas.y, eta, &meas.codebooks(), &SolverOpts::default()).unwrap();
    assert!(sol.objective <= 1e-6, "objective {}", sol.objective);
    for u in &sol.users {
        assert!(u.z.norm() <= 1e-6);
    }
}

#[test]
fn noisy_primal_solution_is_feasible() {
    let cfg = SceneConfig::builder(3, 3, 2).users(2, 2, 2).snr_db(10.0).seed(4).build().unwrap();
    let meas = simulate(&cfg).unwrap();
    let sol = solve_primal(&meas, &SolverOpts::default()).unwrap().into_converged().unwrap();
    let checks = sol.checks(meas.y.norm());
    assert!(checks.feasibility_excess <= 1e-6, "{checks:?}");
    assert!(checks.min_block_eigenvalue >= -1e-6 * (1.0 + sol.objective), "{checks:?}");
    assert!(checks.objective_non_negative);
}

#[test]
fn dual_peaks_are_scale_covariant() {
    let cfg = SceneConfig::builder(4, 4, 1).users(1, 2, 2).snr_db(20.0).seed(2).build().unwrap();
    let meas = simulate(&cfg).unwrap();
    let cbs = meas.codebooks();
    let res = default_resolutions(meas.dims);
    let peaks = |kappa: f64| {
        let sol = solve_dual_raw(meas.dims, &meas.y.scale(kappa), meas.eta * kappa, &cbs, &SolverOpts::default()).unwrap();
        let g = scan_grid(&sol.q, cbs[0], meas.dims, res, false).unwrap();
        let mut idx: Vec<usize> = find_peaks(&g, 2, false).unwrap().peaks.iter().map(|p| p.index).collect();
        idx.sort();
        (idx, sol.objective)
    };
    let (base, obj) = peaks(1.0);
    for kappa in [0.5, 2.0] {
        let (idx, o) = peaks(kappa);
        assert_eq!(idx, base);
        assert!((o - kappa * obj).abs() <= 1e-4 * kappa * obj);
    }
}

#[test]
fn aligned_fusion_cancels_code_phases_exactly() {
    let dims = isac::Dims::new(1, 1, 12).unwrap();
    let l = dims.len();
    let base = CMat::from_fn(l, 2, |n, j| cis(0.37 * (n * (j + 1)) as f64) * (1.0 + 0.1 * j as f64));
    let codes = [C64::new(1.0, 0.0), cis(std::f64::consts::PI), cis(0.5 * std::f64::consts::PI)];
    let cbs: Vec<Codebook> = codes
        .iter()
        .map(|&c| Codebook { matrix: base.map(|z| z * c), user_code: c, base: base.clone() })
        .collect();
    let q = CVec::from_fn(l, |n, _| cis(0.21 * n as f64) * (0.5 + 0.04 * n as f64));
    let res = default_resolutions(dims);
    let grids: Vec<_> = cbs.iter().map(|cb| scan_grid(&q, cb, dims, res, true).unwrap()).collect();
    let fused = fuse_aligned(&grids, &codes).unwrap();
    for (f, g) in fused.values.iter().zip(&grids[0].values) {
        assert!((f - g * g).abs() <= 1e-12 * (1.0 + g * g));
    }
    let naive = fuse_aligned(&grids, &[C64::new(1.0, 0.0); 3]).unwrap();
    let top = grids[0].values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(naive.values[top] < fused.values[top]);
}

#[test]
fn noiseless_decode_with_unequal_lengths() {
    let cfg = SceneConfig::builder(2, 3, 3)
        .users(3, 2, 1)
        .message_lengths(vec![1, 2, 4])
        .path_counts(vec![1, 2, 1])
        .noiseless()
        .seed(9)
        .build()
        .unwrap();
    let meas = simulate(&cfg).unwrap();
    let res = isac::decode::decode(&meas, &meas.scene.true_zetas()).unwrap();
    assert_eq!(res.ser_per_user, vec![0.0; 3]);
    assert_eq!(res.ser_aggregate, 0.0);
    for m in &res.messages {
        let n: f64 = m.iter().map(|z| z.norm_sqr()).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn recovery3d_noiseless_override_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        Experiment::Recovery3d,
        dir.path(),
        r#"{"scene": {"P": 4, "Q": 4, "N_r": 4, "k": [2], "s": [2], "snr_db": null, "layout": {"targets_per_user": 1}}}"#,
    );
    let summary = run(&cfg).unwrap();
    assert_eq!(summary.non_converged, 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("triples.csv")).unwrap();
    let rows: Vec<isac::experiments::TripleRow> = rdr.deserialize().collect::<Result<_, _>>().unwrap();
    let estimates: Vec<_> = rows.iter().filter(|r| r.power.is_some()).collect();
    assert_eq!(estimates.len(), 2);
    for r in &rows {
        assert!(r.error.unwrap() <= 1e-3, "{r:?}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "recovery3d");
    assert_eq!(manifest["config_sha256"], cfg.hash().unwrap());
    assert_eq!(manifest["files"], serde_json::json!(["solver.csv", "triples.csv"]));
}

#[test]
fn dualpoly2d_writes_grids_and_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(Experiment::Dualpoly2d, dir.path(), r#"{"scene": {"P": 4, "Q": 4, "snr_db": 20.0}}"#);
    run(&cfg).unwrap();
    for i in 1..=2 {
        let text = fs::read_to_string(dir.path().join(format!("grid_user{i}.csv"))).unwrap();
        assert_eq!(text.lines().next(), Some("tau,nu,theta,f"));
        assert_eq!(text.lines().count(), 1 + 64 * 64);
    }
    let mut rdr = csv::Reader::from_path(dir.path().join("peaks.csv")).unwrap();
    let peaks: Vec<isac::experiments::PeakRow> = rdr.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(peaks.len(), 4);
    assert!(peaks.iter().all(|p| !p.flat && p.height <= 1.0 + 1e-3));
}

#[test]
fn localization_oracle_mode_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        Experiment::Localization,
        dir.path(),
        r#"{"trials": 5, "r_values": [3, 5], "localization": {"oracle_delays": true}}"#,
    );
    run(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("mae.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("R,trials,snr_db,mae_m"));
    for line in text.lines().skip(1) {
        let mae: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(mae <= 1e-6, "{line}");
    }
}

#[test]
fn fusion_tables_cover_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(Experiment::FusionAoaSer, dir.path(), r#"{"trials": 3}"#);
    run(&cfg).unwrap();
    let ser = fs::read_to_string(dir.path().join("ser.csv")).unwrap();
    assert_eq!(
        ser.lines().next(),
        Some("trial,method,ser_aggregate,ser_user1,ser_user2,ser_user3,ser_user4")
    );
    assert_eq!(ser.lines().count(), 1 + 3 * 5);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let methods: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["non-collab", "average", "weighted", "max", "aligned"]);
    assert!(dir.path().join("aoa_error.csv").exists());
}

fn isac_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isac"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(&config, r#"{"scene": {"P": 4, "Q": 4, "snr_db": 10.0}}"#).unwrap();
    let out = dir.path().join("ok");
    let status = isac_bin()
        .args(["run", "dualpoly2d", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3", "--workers", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);

    fs::write(&config, r#"{"scene": {"P": 4, "Q": 4, "snr_db": 10.0}, "solver": {"max_iters": 5}}"#).unwrap();
    let capped = dir.path().join("capped");
    let status = isac_bin()
        .args(["run", "dualpoly2d", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&capped)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(capped.join("peaks.csv").exists() && capped.join("manifest.json").exists());

    fs::write(&config, r#"{"trails": 2}"#).unwrap();
    let status = isac_bin().args(["run", "dualpoly2d", "--config"]).arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = isac_bin().args(["run", "nonsense"]).status().unwrap();
    assert!(!status.success());
}
