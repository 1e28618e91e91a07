//! Property tests for the structural invariants the solvers lean on.

use proptest::prelude::*;
use weakkam_core::grid::{GridFunction, PeriodicGrid, Scheme};
use weakkam_core::model::DiscountedModel;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Interpolation is exact on grid nodes for every scheme.
    #[test]
    fn interpolation_is_nodal(values in prop::collection::vec(-10.0f64..10.0, 32), k in 0usize..32) {
        let grid = PeriodicGrid::<1>::new(32);
        let f = GridFunction::new(grid, values);
        let x = [k as f64 / 32.0];
        for scheme in [Scheme::Linear, Scheme::Cubic, Scheme::CubicLimited] {
            prop_assert!((f.interpolate(&x, scheme) - f.value(k)).abs() < 1e-12);
        }
    }

    /// Linear and limited-cubic interpolants stay inside the global value
    /// range (no overshoot); plain cubic may ring, but never on monotone
    /// two-cell neighborhoods checked by the limiter property below.
    #[test]
    fn monotone_schemes_do_not_overshoot(
        values in prop::collection::vec(-5.0f64..5.0, 32),
        t in 0.0f64..1.0,
        cell in 0usize..32,
    ) {
        let grid = PeriodicGrid::<1>::new(32);
        let f = GridFunction::new(grid, values);
        let lo = f.min() - 1e-12;
        let hi = f.max() + 1e-12;
        let x = [(cell as f64 + t) / 32.0];
        for scheme in [Scheme::Linear, Scheme::CubicLimited] {
            let v = f.interpolate(&x, scheme);
            prop_assert!(v >= lo && v <= hi, "{scheme:?} overshoots: {v} not in [{lo}, {hi}]");
        }
    }

    /// sup_distance agrees with a brute-force scan.
    #[test]
    fn sup_distance_matches_brute_force(
        a in prop::collection::vec(-10.0f64..10.0, 16),
        b in prop::collection::vec(-10.0f64..10.0, 16),
    ) {
        let grid = PeriodicGrid::<1>::new(16);
        let fa = GridFunction::new(grid, a.clone());
        let fb = GridFunction::new(grid, b.clone());
        let brute = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
        prop_assert!((fa.sup_distance(&fb).unwrap() - brute).abs() < 1e-15);
    }

    /// CSV serialization round-trips field values exactly.
    #[test]
    fn csv_round_trip_exact(values in prop::collection::vec(-1e3f64..1e3, 16)) {
        let grid = PeriodicGrid::<1>::new(16);
        let f = GridFunction::new(grid, values);
        let back = GridFunction::from_csv(&f.to_csv(), grid).unwrap();
        prop_assert_eq!(f.sup_distance(&back).unwrap(), 0.0);
    }

    /// Fenchel-Young inequality with equality at the Legendre maximizer.
    #[test]
    fn fenchel_young_holds(x in 0.0f64..1.0, v in -2.0f64..2.0, p in -3.0f64..3.0) {
        let model = DiscountedModel::<1>::cosine(1.0, 0.5);
        let (l, p_star) = model.legendre_transform(&[x], &[v]).unwrap();
        prop_assert!(l + model.h(&[x], &[p]) >= p * v - 1e-8);
        prop_assert!((l + model.h(&[x], &p_star) - p_star[0] * v).abs() < 1e-8);
    }

    /// The subsolution ordering survives constant shifts: residual moves by
    /// exactly lambda * shift.
    #[test]
    fn residual_is_affine_in_constant_shifts(shift in -2.0f64..2.0) {
        let lambda = 0.5;
        let model = DiscountedModel::<1>::cosine(1.0, lambda);
        let grid = PeriodicGrid::<1>::new(32);
        let tau = std::f64::consts::TAU;
        let u = GridFunction::from_fn(grid, |x| 0.3 * (tau * x[0]).cos());
        let r0 = weakkam_core::semigroup::residual_field(&u, &model);
        let r1 = weakkam_core::semigroup::residual_field(&u.map(|v| v + shift), &model);
        for k in 0..grid.num_nodes() {
            prop_assert!((r1.value(k) - r0.value(k) - lambda * shift).abs() < 1e-12);
        }
    }
}
