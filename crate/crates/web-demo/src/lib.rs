//! Browser demo: interactive value iteration, Lasry-Lions regularization
//! and attractor flow for discounted Hamilton-Jacobi equations on the
//! circle. Compiled to WebAssembly; the static page in `www/` drives it.

use wasm_bindgen::prelude::*;
use weakkam_core::aubry::{aubry_candidates, AubryParams};
use weakkam_core::flow::{
    attractor_approximate, equilibria_find, sublevel_region, unstable_manifold_trace,
    Classification, EquilibriumScan, PhaseCloud,
};
use weakkam_core::grid::{GridFunction, PeriodicGrid};
use weakkam_core::model::DiscountedModel;
use weakkam_core::semigroup::{backward_step, regularize, residual_field, SemigroupConfig};

fn build_model(preset: &str, lambda: f64, amplitude: f64) -> Result<DiscountedModel<1>, String> {
    if !(lambda > 0.0) {
        return Err("lambda must be positive".into());
    }
    Ok(match preset {
        "free" => DiscountedModel::free(lambda),
        "constant" => DiscountedModel::constant_potential(amplitude, lambda),
        "cosine" => DiscountedModel::cosine(amplitude, lambda),
        "two-well" => DiscountedModel::two_well(amplitude, lambda),
        other => return Err(format!("unknown preset '{other}'")),
    })
}

/// Progressive semi-Lagrangian value iteration for `lambda u + H(x, du) = 0`.
#[wasm_bindgen]
pub struct Solver {
    model: DiscountedModel<1>,
    cfg: SemigroupConfig,
    u: GridFunction<1>,
    iterations: u32,
    residual: f64,
}

#[wasm_bindgen]
impl Solver {
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, lambda: f64, amplitude: f64, n: usize, dt: f64) -> Result<Solver, JsValue> {
        let model = build_model(preset, lambda, amplitude).map_err(|e| JsValue::from_str(&e))?;
        if !(8..=2048).contains(&n) {
            return Err(JsValue::from_str("n must be in 8..=2048"));
        }
        if !(dt > 0.0 && dt <= 0.05) {
            return Err(JsValue::from_str("dt must be in (0, 0.05]"));
        }
        let grid = PeriodicGrid::<1>::new(n);
        Ok(Solver {
            model,
            cfg: SemigroupConfig {
                dt,
                ..SemigroupConfig::default()
            },
            u: GridFunction::constant(grid, 0.0),
            iterations: 0,
            residual: f64::INFINITY,
        })
    }

    /// Apply `count` backward steps; returns the latest sup-norm update.
    pub fn step(&mut self, count: u32) -> Result<f64, JsValue> {
        for _ in 0..count {
            let next = backward_step(&self.u, &self.cfg, &self.model)
                .map_err(|e| JsValue::from_str(&e.to_string()))?;
            self.residual = next.sup_distance(&self.u).expect("same grid");
            self.u = next;
            self.iterations += 1;
        }
        Ok(self.residual)
    }

    /// Fixed-point distance estimate from the last update.
    pub fn error_estimate(&self) -> f64 {
        self.residual / (1.0 - (-self.model.lambda() * self.cfg.dt).exp())
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn n(&self) -> usize {
        self.u.grid().n()
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda()
    }

    /// Current iterate, one value per node.
    pub fn values(&self) -> Vec<f64> {
        self.u.values().to_vec()
    }

    /// Discounted HJ residual of the current iterate.
    pub fn residual_values(&self) -> Vec<f64> {
        residual_field(&self.u, &self.model).values().to_vec()
    }

    /// Lasry-Lions double regularization of the current iterate.
    pub fn regularized(&self, t: f64, s: f64) -> Result<Vec<f64>, JsValue> {
        let reg = regularize(&self.u, t, s, &self.cfg, &self.model)
            .map_err(|e| JsValue::from_str(&e.to_string()))?;
        Ok(reg.field.values().to_vec())
    }

    /// Node coordinates passing the Aubry residual + recurrence filter.
    pub fn aubry_points(&self, eps_res: f64, t_recur: f64) -> Vec<f64> {
        let params = AubryParams {
            eps_res,
            t_recur,
            dt_curve: 2e-3,
        };
        match aubry_candidates(&self.u, &self.model, &params) {
            Ok(c) => c.points.iter().map(|p| p[0]).collect(),
            Err(_) => Vec::new(),
        }
    }
}

/// Attractor explorer: flows the sublevel cloud of a subsolution forward
/// and exposes equilibria and the saddle's unstable manifold for drawing.
#[wasm_bindgen]
pub struct PhaseFlow {
    model: DiscountedModel<1>,
    cloud: PhaseCloud<1>,
    dt: f64,
}

#[wasm_bindgen]
impl PhaseFlow {
    /// Build the sublevel cloud of the solver's current iterate.
    #[wasm_bindgen(constructor)]
    pub fn new(solver: &Solver, p_samples: usize, dt: f64) -> Result<PhaseFlow, JsValue> {
        if p_samples < 3 || p_samples % 2 == 0 {
            return Err(JsValue::from_str("p_samples must be odd >= 3"));
        }
        if !(dt > 0.0 && dt <= 1e-2) {
            return Err(JsValue::from_str("dt must be in (0, 1e-2]"));
        }
        let cloud = sublevel_region(&solver.u, &solver.model, p_samples, 1e-4)
            .map_err(|e| JsValue::from_str(&e.to_string()))?;
        Ok(PhaseFlow {
            model: solver.model.clone(),
            cloud,
            dt,
        })
    }

    /// Flow every point forward by `t`.
    pub fn advance(&mut self, t: f64) -> Result<(), JsValue> {
        self.cloud = attractor_approximate(&self.cloud, &self.model, t, self.dt)
            .map_err(|e| JsValue::from_str(&e.to_string()))?;
        Ok(())
    }

    /// Interleaved `[x0, p0, x1, p1, ...]` for scatter drawing.
    pub fn points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.cloud.points.len());
        for (x, p) in &self.cloud.points {
            out.push(x[0]);
            out.push(p[0]);
        }
        out
    }

    pub fn timestamp(&self) -> f64 {
        self.cloud.timestamp
    }

    /// Equilibria as interleaved `[x, p, class, mu]` quadruples where class
    /// is 0 = saddle, 1 = sink, 2 = source, 3 = center-like.
    pub fn equilibria(&self) -> Vec<f64> {
        let scan = equilibria_find(&self.model, 8);
        let mut out = Vec::new();
        if let EquilibriumScan::Isolated(list) = scan {
            for eq in list {
                out.push(eq.location.0[0]);
                out.push(eq.location.1[0]);
                out.push(match eq.classification {
                    Classification::Saddle => 0.0,
                    Classification::Sink => 1.0,
                    Classification::Source => 2.0,
                    Classification::CenterLike => 3.0,
                });
                out.push(eq.mu_min_positive.unwrap_or(f64::NAN));
            }
        }
        out
    }

    /// Unstable manifold polyline of the first saddle, interleaved.
    pub fn manifold(&self, t_trace: f64) -> Vec<f64> {
        let scan = equilibria_find(&self.model, 8);
        let EquilibriumScan::Isolated(list) = scan else {
            return Vec::new();
        };
        let Some(saddle) = list
            .iter()
            .find(|e| e.classification == Classification::Saddle)
        else {
            return Vec::new();
        };
        match unstable_manifold_trace(&self.model, saddle, 1e-6, t_trace, self.dt) {
            Ok(points) => {
                let mut out = Vec::with_capacity(2 * points.len());
                for (x, p) in points {
                    out.push(x[0]);
                    out.push(p[0]);
                }
                out
            }
            Err(_) => Vec::new(),
        }
    }
}

/// Potential values for plotting the landscape under the value function.
#[wasm_bindgen]
pub fn potential_profile(preset: &str, amplitude: f64, n: usize) -> Result<Vec<f64>, JsValue> {
    let model = build_model(preset, 1.0, amplitude).map_err(|e| JsValue::from_str(&e))?;
    Ok((0..n)
        .map(|k| model.h(&[k as f64 / n as f64], &[0.0]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_steps_and_reports() {
        let mut s = Solver::new("cosine", 0.5, 1.0, 64, 5e-3).unwrap();
        let r = s.step(50).unwrap();
        assert!(r.is_finite() && r > 0.0);
        assert_eq!(s.iterations(), 50);
        assert_eq!(s.values().len(), 64);
    }

    #[test]
    fn phase_flow_advances() {
        let mut s = Solver::new("cosine", 0.5, 1.0, 32, 5e-3).unwrap();
        s.step(400).unwrap();
        let mut flow = PhaseFlow::new(&s, 17, 5e-3).unwrap();
        let before = flow.points().len();
        flow.advance(1.0).unwrap();
        assert_eq!(flow.points().len(), before);
        assert!(flow.timestamp() > 0.9);
        assert!(!flow.equilibria().is_empty());
    }

    #[test]
    fn unknown_preset_is_rejected() {
        // JsValue cannot be materialized off-wasm, so check the inner builder.
        assert!(build_model("nope", 0.5, 1.0).is_err());
        assert!(build_model("cosine", -1.0, 1.0).is_err());
    }
}
