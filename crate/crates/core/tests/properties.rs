use hsl_core::dynamics::{admissible_pair, splitstep_evolve, EquationParams, Potential};
use hsl_core::grid::io::{decode, write_field, Snapshot};
use hsl_core::grid::box_index;
use hsl_core::hartree::make_kernel;
use hsl_core::propagators::{free_evolve, DispersionParams};
use hsl_core::spaces::{amalgam_norm, fourier_lebesgue_norm, lebesgue_norm, BoxNorms};
use hsl_core::{Field, Grid, C64};
use proptest::prelude::*;

fn field(grid: &Grid, coeffs: &[(f64, f64)]) -> Field {
    Field::new(grid, coeffs.iter().map(|&(re, im)| C64::new(re, im)).collect()).unwrap()
}

fn samples(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), len)
}

fn smooth(grid: &Grid, amp: f64, width: f64, carrier: f64) -> Field {
    Field::from_fn(grid, |x| C64::from_polar(amp * (-x[0] * x[0] / (2.0 * width * width)).exp(), carrier * x[0]))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn integer_box_index_matches_float_formula(k in -4096i64..4096, half in 1u32..6) {
        let g = Grid::new(1, 8192, half as f64).unwrap();
        let xi = k as f64 * g.dxi();
        prop_assert_eq!(g.box_of_label(k), box_index(&[xi])[0]);
    }

    #[test]
    fn diagonal_amalgam_is_fourier_lebesgue(v in samples(64), p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY])) {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let f = field(&g, &v);
        let a = amalgam_norm(&f, p, p, 0.0).unwrap();
        let b = fourier_lebesgue_norm(&f, p).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
    }

    #[test]
    fn box_norms_nest_in_q(v in samples(64), p in 1.0..8.0f64) {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let boxes = BoxNorms::compute(&field(&g, &v).forward(), p).unwrap();
        let (q1, q2, q3) = (boxes.combine(1.0, 0.0), boxes.combine(2.0, 0.0), boxes.combine(f64::INFINITY, 0.0));
        prop_assert!(q3 <= q2 * (1.0 + 1e-12) && q2 <= q1 * (1.0 + 1e-12));
    }

    #[test]
    fn free_flow_preserves_l2_and_reverses(v in samples(64), t in -20.0..20.0f64, s1 in 0.55..1.0f64) {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let f = field(&g, &v);
        let params = DispersionParams::new(s1, 1.0);
        let u = free_evolve(&f, &params, t);
        let (a, b) = (lebesgue_norm(&u, 2.0).unwrap(), lebesgue_norm(&f, 2.0).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * b);
        let back = free_evolve(&u, &params, -t);
        prop_assert!(lebesgue_norm(&back.sub(&f).unwrap(), 2.0).unwrap() <= 1e-12 * b);
    }

    #[test]
    fn snapshot_round_trip(v in samples(64)) {
        let g = Grid::new(2, 8, 1.5).unwrap();
        let f = field(&g, &v);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        match decode(&buf).unwrap() {
            Snapshot::Physical(h) => {
                prop_assert_eq!(h.grid(), f.grid());
                prop_assert_eq!(h.values(), f.values());
            }
            Snapshot::Spectral(_) => prop_assert!(false, "flag lost"),
        }
    }

    #[test]
    fn admissible_pairs_satisfy_scaling(s in 0.5..1.0f64, d in 1usize..4, q in 2.0..50.0f64) {
        if let Ok(pair) = admissible_pair(s, d, q) {
            prop_assert!(pair.defect() < 1e-12);
            prop_assert!(pair.r >= 2.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn splitstep_conserves_mass(lambda in -2.0..2.0f64, amp in 0.1..1.0f64, width in 0.5..1.5f64, carrier in -3.0..3.0f64) {
        let g = Grid::new(1, 128, 8.0).unwrap();
        let kernel = make_kernel(&g, lambda, 0.5).unwrap();
        let params = EquationParams::new(DispersionParams::new(0.75, 1.0), kernel, Potential::None, 0.2, 1e-3)
            .unwrap()
            .with_record_every(50);
        let traj = splitstep_evolve(&smooth(&g, amp, width, carrier), &params).unwrap();
        prop_assert!(traj.mass_drift < 1e-11);
    }
}
