//! Semigroup convergence-rate study: evolve from zero, subtract the
//! stationary limit and the discounted overshoot `e^(-lambda t) alpha`, and
//! fit the exponential rate of what remains. Under a unique hyperbolic
//! Aubry equilibrium the fitted slope reaches `-(mu + lambda)` instead of
//! the crude `-lambda`.

use crate::config::ExperimentConfig;
use serde::Serialize;
use thiserror::Error;
use weakkam_core::aubry::{aubry_candidates, cluster_candidates, AubryParams};
use weakkam_core::flow::{equilibria_find, Classification, EquilibriumInfo, EquilibriumScan};
use weakkam_core::grid::{GridFunction, PeriodicGrid, Scheme};
use weakkam_core::model::DiscountedModel;
use weakkam_core::semigroup::{backward_step, solve_stationary};
use weakkam_core::SemigroupError;
use weakkam_core::torus::torus_dist;

#[derive(Debug, Error)]
pub enum RateError {
    /// The Aubry set is not a single hyperbolic equilibrium.
    #[error("rate hypothesis violated: {reason}")]
    HypothesisViolation { reason: String },
    /// Fewer than 3 samples before the discretization floor.
    #[error("discretization floor {floor:.3e} dominates after {usable} samples")]
    FloorDominates { floor: f64, usable: usize },
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error("aubry detection failed: {0}")]
    Aubry(String),
}

/// Outcome of the rate experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub times: Vec<f64>,
    /// e_t = sup |T_t 0 - u^- + e^(-lambda t) alpha|.
    pub errors: Vec<f64>,
    /// Crude distance e'_t = sup |T_t 0 - u^-|.
    pub crude_errors: Vec<f64>,
    /// alpha = u^-(x_0) at the Aubry equilibrium.
    pub alpha: f64,
    /// Minimal positive eigenvalue of the equilibrium.
    pub mu: f64,
    pub fitted_slope: f64,
    pub fit_window: (f64, f64),
    /// Discretization error estimate: sup distance between u^- at (n, dt)
    /// and at (n/2, 2 dt).
    pub floor: f64,
}

/// Locate the unique hyperbolic Aubry equilibrium or explain why there is
/// none. Returns the matching equilibrium info.
pub fn unique_hyperbolic_aubry_equilibrium<const D: usize>(
    u_minus: &GridFunction<D>,
    model: &DiscountedModel<D>,
    cfg: &ExperimentConfig,
) -> Result<EquilibriumInfo<D>, RateError> {
    let scan = equilibria_find(model, cfg.rate.seeds_per_axis);
    let equilibria = match &scan {
        EquilibriumScan::Continuum { found, .. } => {
            return Err(RateError::HypothesisViolation {
                reason: format!("continuum of equilibria ({found} found)"),
            })
        }
        EquilibriumScan::Isolated(list) => list,
    };

    let params = AubryParams {
        eps_res: cfg.aubry.eps_res,
        t_recur: cfg.aubry.t_recur,
        dt_curve: cfg.aubry.dt_curve,
    };
    let candidates = aubry_candidates(u_minus, model, &params)
        .map_err(|e| RateError::Aubry(e.to_string()))?;
    let h = u_minus.grid().h();
    let clusters = cluster_candidates(&candidates.points, 4.0 * h);
    if clusters.len() != 1 {
        return Err(RateError::HypothesisViolation {
            reason: format!("{} Aubry clusters (need exactly 1)", clusters.len()),
        });
    }
    let center = clusters[0].center;

    let matched = equilibria.iter().find(|eq| {
        torus_dist(&eq.location.0, &center) <= (4.0 * h).max(1e-2)
    });
    let Some(eq) = matched else {
        return Err(RateError::HypothesisViolation {
            reason: "no equilibrium matches the Aubry cluster".into(),
        });
    };
    if eq.classification == Classification::CenterLike {
        return Err(RateError::HypothesisViolation {
            reason: "Aubry equilibrium is not hyperbolic".into(),
        });
    }
    let Some(_) = eq.mu_min_positive else {
        return Err(RateError::HypothesisViolation {
            reason: "Aubry equilibrium has no positive eigenvalue".into(),
        });
    };
    Ok(eq.clone())
}

/// Run the full rate experiment for a 1D/2D configuration: solve for u^-,
/// estimate the discretization floor on the halved grid, evolve psi = 0
/// recording errors at stride intervals, and fit the slope over the window
/// `[2/(mu+lambda), first sample below 10 * floor]`.
pub fn run_rate_experiment<const D: usize>(
    cfg: &ExperimentConfig,
    model: &DiscountedModel<D>,
    u_minus: &GridFunction<D>,
) -> Result<RateReport, RateError> {
    let equilibrium = unique_hyperbolic_aubry_equilibrium(u_minus, model, cfg)?;
    let mu = equilibrium.mu_min_positive.expect("checked above");
    let lambda = model.lambda();
    let scfg = cfg.semigroup.to_core();
    let grid = u_minus.grid();

    // alpha = u^-(x_0), the theorem's own identity; interpolate at the
    // equilibrium base point.
    let alpha = u_minus.interpolate(&equilibrium.location.0, Scheme::Cubic);

    // Discretization floor from the halved resolution.
    let floor = {
        let coarse_grid = PeriodicGrid::<D>::new(grid.n() / 2);
        let coarse_cfg = weakkam_core::semigroup::SemigroupConfig {
            dt: 2.0 * scfg.dt,
            ..scfg
        };
        let zero = GridFunction::constant(coarse_grid, 0.0);
        let (u_coarse, _) = solve_stationary(
            &zero,
            &coarse_cfg,
            model,
            cfg.semigroup.solve_tol,
            cfg.semigroup.max_iters,
        )?;
        let mut worst = 0.0f64;
        for node in 0..coarse_grid.num_nodes() {
            let x = coarse_grid.node_point(node);
            let fine = u_minus.interpolate(&x, Scheme::Cubic);
            worst = worst.max((u_coarse.value(node) - fine).abs());
        }
        worst
    };

    // Evolve psi = 0, recording at stride intervals.
    let steps = (cfg.rate.t_rate / scfg.dt).round() as usize;
    let mut psi = GridFunction::constant(grid, 0.0);
    let mut times = Vec::new();
    let mut errors = Vec::new();
    let mut crude_errors = Vec::new();
    let record = |t: f64,
                  psi: &GridFunction<D>,
                  times: &mut Vec<f64>,
                  errors: &mut Vec<f64>,
                  crude: &mut Vec<f64>| {
        let shift = (-lambda * t).exp() * alpha;
        let mut worst = 0.0f64;
        let mut worst_crude = 0.0f64;
        for node in 0..grid.num_nodes() {
            let diff = psi.value(node) - u_minus.value(node);
            worst = worst.max((diff + shift).abs());
            worst_crude = worst_crude.max(diff.abs());
        }
        times.push(t);
        errors.push(worst);
        crude.push(worst_crude);
    };
    record(0.0, &psi, &mut times, &mut errors, &mut crude_errors);
    for k in 1..=steps {
        psi = backward_step(&psi, &scfg, model)?;
        if k % cfg.rate.stride == 0 {
            record(
                k as f64 * scfg.dt,
                &psi,
                &mut times,
                &mut errors,
                &mut crude_errors,
            );
        }
    }

    // Fit window: skip the transient, stop where the floor dominates.
    let t_lo = 2.0 / (mu + lambda);
    let t_hi = times
        .iter()
        .zip(&errors)
        .find(|(_, e)| **e < 10.0 * floor)
        .map(|(t, _)| *t)
        .unwrap_or_else(|| *times.last().expect("recorded samples"));
    let window: Vec<(f64, f64)> = times
        .iter()
        .zip(&errors)
        .filter(|(t, e)| **t >= t_lo && **t < t_hi && **e > 0.0)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    if window.len() < 3 {
        return Err(RateError::FloorDominates {
            floor,
            usable: window.len(),
        });
    }
    let n = window.len() as f64;
    let mt = window.iter().map(|(t, _)| t).sum::<f64>() / n;
    let my = window.iter().map(|(_, y)| y).sum::<f64>() / n;
    let cov: f64 = window.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let var: f64 = window.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    let fitted_slope = cov / var;

    Ok(RateReport {
        times,
        errors,
        crude_errors,
        alpha,
        mu,
        fitted_slope,
        fit_window: (t_lo, t_hi),
        floor,
    })
}
