//! Experiment configuration: a flat TOML file (tables, strings, numbers,
//! booleans) mapped onto typed sections with defaults, plus command-line
//! overrides. A fixed config and seed give byte-identical artifacts.

use serde::{Deserialize, Serialize};
use weakkam_core::grid::Scheme;
use weakkam_core::model::{ModelSpec, PresetKind};
use weakkam_core::semigroup::SemigroupConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub semigroup: SemigroupSection,
    #[serde(default)]
    pub regularize: RegularizeSection,
    #[serde(default)]
    pub aubry: AubrySection,
    #[serde(default)]
    pub attractor: AttractorSection,
    #[serde(default)]
    pub rate: RateSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemigroupSection {
    pub dt: f64,
    pub v_grid: usize,
    pub refine_tol: f64,
    pub scheme: Scheme,
    pub solve_tol: f64,
    pub max_iters: usize,
}

impl Default for SemigroupSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            v_grid: 33,
            refine_tol: 1e-8,
            scheme: Scheme::Cubic,
            solve_tol: 1e-6,
            max_iters: 400_000,
        }
    }
}

impl SemigroupSection {
    pub fn to_core(&self) -> SemigroupConfig {
        SemigroupConfig {
            dt: self.dt,
            v_grid: self.v_grid,
            refine_tol: Some(self.refine_tol),
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizeSection {
    /// Forward time of the Lasry-Lions pair.
    pub t: f64,
    /// Backward time; 0 < s <= t <= 0.5.
    pub s: f64,
}

impl Default for RegularizeSection {
    fn default() -> Self {
        // Inside the backward-caustic window: the forward cap must stay
        // gentler than the unstable-graph curvature (t >= 1/mu) and the
        // backward time well short of the refocusing time of the smoothed
        // crease, or the composition is not C^{1,1}.
        Self { t: 0.2, s: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AubrySection {
    pub eps_res: f64,
    pub t_recur: f64,
    pub dt_curve: f64,
    pub bump_height: f64,
    pub bump_radius: f64,
    pub flat_radius: f64,
}

impl Default for AubrySection {
    fn default() -> Self {
        Self {
            eps_res: 5e-3,
            t_recur: 5.0,
            dt_curve: 1e-3,
            bump_height: 1e-2,
            bump_radius: 0.15,
            flat_radius: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractorSection {
    /// p-lattice points per axis for the sublevel sampling (odd).
    pub p_samples: usize,
    /// Forward flow time for the attractor image.
    pub t_flow: f64,
    pub flow_dt: f64,
    /// Time step for the variational volume-law check; stiffer potentials
    /// need a finer step to hold the 1e-6 determinant tolerance.
    pub volume_dt: f64,
    /// Unstable-manifold trace: offset and duration.
    pub manifold_eps: f64,
    pub manifold_t: f64,
    /// Lyapunov check controls.
    /// Outer-approximation slack for the sublevel inequality.
    pub sublevel_slack: f64,
    pub n_lyapunov: usize,
    pub t_lyapunov: f64,
    pub lyapunov_p_box: f64,
}

impl Default for AttractorSection {
    fn default() -> Self {
        Self {
            p_samples: 65,
            t_flow: 10.0,
            flow_dt: 1e-3,
            volume_dt: 1e-3,
            manifold_eps: 1e-6,
            manifold_t: 30.0,
            sublevel_slack: 1e-4,
            n_lyapunov: 100,
            t_lyapunov: 5.0,
            lyapunov_p_box: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    /// Evolution horizon for the convergence-rate study.
    pub t_rate: f64,
    /// Record the error every `stride` steps.
    pub stride: usize,
    /// Seeds per axis for the equilibrium scan backing the hypothesis check.
    pub seeds_per_axis: usize,
}

impl Default for RateSection {
    fn default() -> Self {
        Self {
            t_rate: 2.5,
            stride: 10,
            seeds_per_axis: 8,
        }
    }
}

/// Declared tolerances at the reference resolution (n = 512, dt = 1e-3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_semigroup: f64,
    pub tol_sub: f64,
    pub tol_dom: f64,
    pub tol_aubry: f64,
    pub tol_lyap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_semigroup: 5e-3,
            tol_sub: 5e-3,
            tol_dom: 1e-3,
            tol_aubry: 1e-3,
            tol_lyap: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            seed: 42,
        }
    }
}

impl ExperimentConfig {
    /// Reference experiment: cosine potential, lambda = 1/2, n = 512.
    pub fn reference() -> Self {
        Self {
            model: ModelSpec {
                preset: PresetKind::Cosine,
                lambda: 0.5,
                dim: 1,
                amplitude: Some(1.0),
                constant: None,
                shift: None,
                terms: None,
                p_bound: None,
            },
            grid: GridSection::default(),
            semigroup: SemigroupSection::default(),
            regularize: RegularizeSection::default(),
            aubry: AubrySection::default(),
            attractor: AttractorSection::default(),
            rate: RateSection::default(),
            tolerances: Tolerances::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate()?;
        if self.grid.n < 8 {
            return Err("grid.n must be at least 8".into());
        }
        self.semigroup.to_core().validate()?;
        if !(self.semigroup.solve_tol > 0.0) {
            return Err("semigroup.solve_tol must be positive".into());
        }
        if !(0.0 < self.regularize.s
            && self.regularize.s <= self.regularize.t
            && self.regularize.t <= 0.5)
        {
            return Err("regularize needs 0 < s <= t <= 0.5".into());
        }
        for (name, v) in [
            ("tol_semigroup", self.tolerances.tol_semigroup),
            ("tol_sub", self.tolerances.tol_sub),
            ("tol_dom", self.tolerances.tol_dom),
            ("tol_aubry", self.tolerances.tol_aubry),
            ("tol_lyap", self.tolerances.tol_lyap),
            ("aubry.eps_res", self.aubry.eps_res),
            ("aubry.dt_curve", self.aubry.dt_curve),
            ("attractor.flow_dt", self.attractor.flow_dt),
            ("attractor.volume_dt", self.attractor.volume_dt),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.aubry.flat_radius <= 0.0 || self.aubry.flat_radius >= self.aubry.bump_radius {
            return Err("aubry needs 0 < flat_radius < bump_radius".into());
        }
        if self.attractor.p_samples < 3 || self.attractor.p_samples % 2 == 0 {
            return Err("attractor.p_samples must be odd and >= 3".into());
        }
        if self.attractor.flow_dt > 1e-2 || self.attractor.volume_dt > 1e-2 {
            return Err("attractor flow steps must be at most 1e-2".into());
        }
        if self.rate.t_rate < 1.0 {
            return Err("rate.t_rate must be at least 1".into());
        }
        if self.rate.stride == 0 {
            return Err("rate.stride must be positive".into());
        }
        Ok(())
    }

    /// Apply command-line overrides.
    pub fn with_overrides(
        mut self,
        n: Option<usize>,
        dt: Option<f64>,
        lambda: Option<f64>,
        out: Option<String>,
    ) -> Result<Self, String> {
        if let Some(n) = n {
            self.grid.n = n;
        }
        if let Some(dt) = dt {
            self.semigroup.dt = dt;
        }
        if let Some(lambda) = lambda {
            self.model.lambda = lambda;
        }
        if let Some(out) = out {
            self.output.dir = out;
        }
        self.validate()?;
        Ok(self)
    }
}
