use isac::atoms::{
    steering_vector, toeplitz_adjoint, toeplitz_apply, toeplitz_project, torus_distance, wrap_unit, ToeplitzTensor,
};
use isac::decode::{aggregate_ser, demap_ask8};
use isac::dualpoly::PolyGrid;
use isac::fusion::{circular_mean, fuse_average, fuse_max, fuse_weighted};
use isac::linalg::{CMat, C64};
use isac::locate::{localize, normalize_delays, LocalizeOpts};
use isac::model::{canonicalize_levels, ASK8_LEVELS};
use isac::{Dims, Zeta};
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b))
}

fn dims() -> impl Strategy<Value = Dims> {
    (1usize..4, 1usize..4, 1usize..4).prop_map(|(p, q, r)| Dims::new(p, q, r).unwrap())
}

fn matrix(n: usize) -> impl Strategy<Value = CMat> {
    proptest::collection::vec(c64(), n * n).prop_map(move |v| CMat::from_vec(n, n, v))
}

fn grid(values: Vec<f64>) -> PolyGrid {
    let n = values.len();
    let dims = Dims::new(1, 1, n.div_ceil(4).max(2)).unwrap();
    PolyGrid { dims, resolutions: [1, 1, n], values, complex_values: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_entries_have_unit_modulus(d in dims(), t in 0.0f64..1.0, v in 0.0f64..1.0, a in 0.0f64..1.0) {
        let s = steering_vector(Zeta::new(t, v, a), d);
        prop_assert_eq!(s.len(), d.len());
        for z in s.iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        // Integer shifts of any coordinate leave the atom unchanged.
        let shifted = steering_vector(Zeta::new(t + 1.0, v - 2.0, a + 3.0), d);
        prop_assert!((shifted - s).norm() < 1e-9);
    }

    #[test]
    fn unified_index_round_trips(d in dims(), n in 0usize..27) {
        prop_assume!(n < d.len());
        let u = d.decode(n);
        prop_assert_eq!(d.encode(u.p, u.q, u.r), n);
    }

    #[test]
    fn toeplitz_adjoint_and_projection(d in dims(), seed in any::<u64>()) {
        let l = d.len();
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let v = ToeplitzTensor::from_fn(d, |_, _, _| C64::new(next(), next()));
        let m = CMat::from_fn(l, l, |_, _| C64::new(next(), next()));
        let lhs = m.dotc(&toeplitz_apply(&v, d).unwrap());
        let rhs = v.inner(&toeplitz_adjoint(&m, d).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
        let p = toeplitz_project(&m, d).unwrap();
        prop_assert!((toeplitz_project(&p, d).unwrap() - &p).norm() <= 1e-10 * (1.0 + p.norm()));
        // The residual is orthogonal, in the real inner product, to every
        // Hermitian Toeplitz matrix.
        let herm = toeplitz_project(&toeplitz_apply(&v, d).unwrap(), d).unwrap();
        prop_assert!((&m - &p).dotc(&herm).re.abs() <= 1e-10 * (1.0 + m.norm() * herm.norm()));
    }

    #[test]
    fn projection_is_hermitian_on_hermitian_input(m in matrix(4)) {
        let d = Dims::new(2, 2, 1).unwrap();
        let h = (&m + m.adjoint()).scale(0.5);
        let p = toeplitz_project(&h, d).unwrap();
        prop_assert!((&p - p.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn torus_distance_is_a_metric(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let w = wrap_unit(a);
        prop_assert!((0.0..1.0).contains(&w));
        prop_assert!(torus_distance(a, b) <= 0.5 + 1e-15);
        prop_assert!((torus_distance(a, b) - torus_distance(b, a)).abs() < 1e-15);
        prop_assert!(torus_distance(a, c) <= torus_distance(a, b) + torus_distance(b, c) + 1e-12);
    }

    #[test]
    fn circular_mean_is_shift_equivariant(vals in proptest::collection::vec(0.0f64..0.2, 1..6), shift in 0.0f64..1.0) {
        let m = circular_mean(&vals);
        let moved: Vec<f64> = vals.iter().map(|v| wrap_unit(v + shift)).collect();
        prop_assert!(torus_distance(circular_mean(&moved), m + shift) < 1e-9);
    }

    #[test]
    fn aggregate_ser_weights_by_message_length(
        pairs in proptest::collection::vec((0usize..=4, 1usize..5), 1..6)
    ) {
        let ks: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let ser: Vec<f64> = pairs.iter().map(|&(e, k)| e.min(k) as f64 / k as f64).collect();
        let errors: usize = pairs.iter().map(|&(e, k)| e.min(k)).sum();
        let total: usize = ks.iter().sum();
        prop_assert!((aggregate_ser(&ser, &ks) - errors as f64 / total as f64).abs() < 1e-12);
    }

    #[test]
    fn ask8_demapping_is_invariant_to_phase_and_scale(
        idx in proptest::collection::vec(0usize..8, 1..6), phase in 0.0f64..std::f64::consts::TAU, scale in 0.1f64..10.0
    ) {
        let mut levels: Vec<i8> = idx.iter().map(|&i| ASK8_LEVELS[i]).collect();
        canonicalize_levels(&mut levels);
        let rot = C64::from_polar(scale, phase);
        let f: Vec<C64> = levels.iter().map(|&l| rot * l as f64).collect();
        prop_assert_eq!(demap_ask8(&f), levels);
    }

    #[test]
    fn fusion_rules_are_ordered_and_symmetric(
        a in proptest::collection::vec(0.0f64..1.0, 8), b in proptest::collection::vec(0.0f64..1.0, 8)
    ) {
        let (ga, gb) = (grid(a), grid(b));
        let avg = fuse_average(&[ga.clone(), gb.clone()]).unwrap();
        let max = fuse_max(&[ga.clone(), gb.clone()]).unwrap();
        let swapped = fuse_average(&[gb.clone(), ga.clone()]).unwrap();
        prop_assert_eq!(&avg.values, &swapped.values);
        let peak = ga.max().max(gb.max());
        for (m, v) in max.values.iter().zip(&avg.values) {
            prop_assert!(m >= v && *m <= peak);
        }
        let wavg = fuse_weighted(&[ga.clone(), gb.clone()]).unwrap();
        prop_assert!(wavg.values.iter().all(|v| *v <= peak + 1e-12));
    }

    #[test]
    fn delay_normalization_round_trips(d in proptest::collection::vec(1e-7f64..2e-6, 2..6)) {
        prop_assume!(d.iter().any(|x| (x - d[0]).abs() > 1e-9));
        let (n, map) = normalize_delays(&d).unwrap();
        for (x, t) in n.iter().zip(&d) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(x));
            prop_assert!((map.denormalize(*x) - t).abs() <= 1e-12 * t);
        }
    }

    #[test]
    fn localization_is_translation_equivariant(dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let users = [[-40.0, 70.0], [80.0, -20.0], [10.0, -90.0]];
        let (bs, target) = ([0.0, 0.0], [50.0, 30.0]);
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let sums: Vec<f64> = users.iter().map(|u| dist(*u, target) + dist(target, bs)).collect();
        let opts = LocalizeOpts::default();
        let base = localize(bs, &users, &sums, &opts).unwrap();
        let moved: Vec<[f64; 2]> = users.iter().map(|u| [u[0] + dx, u[1] + dy]).collect();
        let fit = localize([dx, dy], &moved, &sums, &opts).unwrap();
        prop_assert!((fit.position[0] - base.position[0] - dx).abs() < 1e-6);
        prop_assert!((fit.position[1] - base.position[1] - dy).abs() < 1e-6);
    }
}
