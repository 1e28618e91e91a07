//! T^2 smoke coverage: the machinery is dimension-generic; the quantitative
//! gates are calibrated in 1D, so these only pin structural behavior.

use weakkam_core::flow::{equilibria_find, Classification};
use weakkam_core::grid::{GridFunction, PeriodicGrid, Scheme};
use weakkam_core::model::DiscountedModel;
use weakkam_core::semigroup::{solve_stationary, SemigroupConfig};

#[test]
fn constant_potential_solve_on_t2() {
    let c = 0.8;
    let lambda = 1.0;
    let model = DiscountedModel::<2>::constant_potential(c, lambda);
    let grid = PeriodicGrid::<2>::new(16);
    let zero = GridFunction::constant(grid, 0.0);
    let cfg = SemigroupConfig {
        dt: 5e-3,
        v_grid: 9,
        scheme: Scheme::Cubic,
        ..SemigroupConfig::default()
    };
    let (u, report) = solve_stationary(&zero, &cfg, &model, 1e-4, 10_000).unwrap();
    assert!(report.converged);
    let err = (0..grid.num_nodes())
        .map(|k| (u.value(k) + c / lambda).abs())
        .fold(0.0f64, f64::max);
    assert!(err < 1e-4 + cfg.dt, "2D constant fixed point error {err:.2e}");
}

#[test]
fn cosine_equilibria_on_t2() {
    // V = cos(2 pi x) + cos(2 pi y): critical points on {0, 1/2}^2 give four
    // phase equilibria; the maximum is fully unstable-in-position (saddle of
    // the flow), the minimum is the spiral sink.
    let model = DiscountedModel::<2>::cosine(1.0, 0.5);
    let scan = equilibria_find(&model, 8);
    let eqs = scan.isolated().expect("isolated equilibria");
    assert_eq!(eqs.len(), 4);
    let saddles = eqs
        .iter()
        .filter(|e| e.classification == Classification::Saddle)
        .count();
    let sinks = eqs
        .iter()
        .filter(|e| e.classification == Classification::Sink)
        .count();
    assert_eq!(saddles + sinks, 4);
    assert_eq!(sinks, 1, "unique spiral sink at the potential minimum");
    // Every equilibrium sits on the zero section.
    for eq in eqs {
        assert!(eq.location.1[0].abs() < 1e-8);
        assert!(eq.location.1[1].abs() < 1e-8);
        assert_eq!(eq.eigenvalues.len(), 4);
    }
}
