//! Discounted Tonelli Hamiltonians and their Lagrangian duals.
//!
//! A model couples a Hamiltonian `H(x, p)` on the cotangent bundle of the
//! flat torus with a discount rate `lambda > 0`. The Lagrangian is obtained
//! either analytically (mechanical presets) or by a numerical Legendre
//! transform over a compact fiber box, and the dissipative phase field
//! `x' = H_p, p' = -H_x - lambda p` is derived from analytic or
//! finite-difference fiber derivatives.

use crate::error::ModelError;
use crate::util::{dot, golden_max, wrap_point};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const TAU: f64 = std::f64::consts::TAU;

/// Hamiltonian on `T^* T^D`. Analytic derivative hints are optional; every
/// consumer falls back to central differences when a hook returns `None`.
pub trait Hamiltonian<const D: usize>: Send + Sync {
    fn eval(&self, x: &[f64; D], p: &[f64; D]) -> f64;

    fn grad_x(&self, _x: &[f64; D], _p: &[f64; D]) -> Option<[f64; D]> {
        None
    }

    fn grad_p(&self, _x: &[f64; D], _p: &[f64; D]) -> Option<[f64; D]> {
        None
    }

    /// Closed-form Legendre dual, when the family admits one.
    fn lagrangian(&self, _x: &[f64; D], _v: &[f64; D]) -> Option<f64> {
        None
    }

    /// Analytic second derivatives `(H_xx, H_xp, H_pp)` for linearization.
    fn second_derivatives(&self, _x: &[f64; D], _p: &[f64; D]) -> Option<SecondDerivatives<D>> {
        None
    }
}

/// Hessian blocks of `H` at a phase point.
#[derive(Debug, Clone, Copy)]
pub struct SecondDerivatives<const D: usize> {
    pub h_xx: [[f64; D]; D],
    pub h_xp: [[f64; D]; D],
    pub h_pp: [[f64; D]; D],
}

/// Smooth potential on the torus.
pub trait Potential<const D: usize>: Send + Sync {
    fn eval(&self, x: &[f64; D]) -> f64;
    fn grad(&self, x: &[f64; D]) -> [f64; D];
    fn hess(&self, _x: &[f64; D]) -> Option<[[f64; D]; D]> {
        None
    }
    /// Upper bound for sup |V'|; drives the default fiber search radius.
    fn grad_sup_bound(&self) -> f64;
}

/// One cosine mode `a * cos(2 pi k.x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wave: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

/// Finite trigonometric polynomial potential; the expression-free parameter
/// family every preset reduces to.
#[derive(Debug, Clone)]
pub struct TrigPotential<const D: usize> {
    terms: Vec<([f64; D], f64, f64)>, // (2 pi k, amplitude, phase)
}

impl<const D: usize> TrigPotential<D> {
    pub fn new(terms: &[TrigTerm]) -> Result<Self, String> {
        let mut compiled = Vec::with_capacity(terms.len());
        for t in terms {
            if t.wave.len() != D {
                return Err(format!(
                    "wave vector {:?} has wrong dimension (expected {D})",
                    t.wave
                ));
            }
            let mut k = [0.0; D];
            for a in 0..D {
                k[a] = TAU * t.wave[a] as f64;
            }
            compiled.push((k, t.amplitude, t.phase));
        }
        Ok(Self { terms: compiled })
    }

    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// `c` as the degenerate mode with zero wave vector.
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![([0.0; D], c, 0.0)],
        }
    }

    /// `a * sum_i cos(2 pi m x_i)`.
    pub fn cosine_modes(amplitude: f64, m: i32) -> Self {
        let mut terms = Vec::new();
        for axis in 0..D {
            let mut k = [0.0; D];
            k[axis] = TAU * m as f64;
            terms.push((k, amplitude, 0.0));
        }
        Self { terms }
    }
}

impl<const D: usize> Potential<D> for TrigPotential<D> {
    fn eval(&self, x: &[f64; D]) -> f64 {
        self.terms
            .iter()
            .map(|(k, a, phi)| a * (dot(k, x) + phi).cos())
            .sum()
    }

    fn grad(&self, x: &[f64; D]) -> [f64; D] {
        let mut g = [0.0; D];
        for (k, a, phi) in &self.terms {
            let s = -a * (dot(k, x) + phi).sin();
            for axis in 0..D {
                g[axis] += s * k[axis];
            }
        }
        g
    }

    fn hess(&self, x: &[f64; D]) -> Option<[[f64; D]; D]> {
        let mut h = [[0.0; D]; D];
        for (k, a, phi) in &self.terms {
            let c = -a * (dot(k, x) + phi).cos();
            for i in 0..D {
                for j in 0..D {
                    h[i][j] += c * k[i] * k[j];
                }
            }
        }
        Some(h)
    }

    fn grad_sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|(k, a, _)| a.abs() * dot(k, k).sqrt())
            .sum()
    }
}

/// Sum of two potentials (base + perturbation bump).
pub struct SumPotential<const D: usize> {
    pub first: Arc<dyn Potential<D>>,
    pub second: Arc<dyn Potential<D>>,
}

impl<const D: usize> Potential<D> for SumPotential<D> {
    fn eval(&self, x: &[f64; D]) -> f64 {
        self.first.eval(x) + self.second.eval(x)
    }

    fn grad(&self, x: &[f64; D]) -> [f64; D] {
        let a = self.first.grad(x);
        let b = self.second.grad(x);
        let mut g = [0.0; D];
        for i in 0..D {
            g[i] = a[i] + b[i];
        }
        g
    }

    fn hess(&self, x: &[f64; D]) -> Option<[[f64; D]; D]> {
        let a = self.first.hess(x)?;
        let b = self.second.hess(x)?;
        let mut h = [[0.0; D]; D];
        for i in 0..D {
            for j in 0..D {
                h[i][j] = a[i][j] + b[i][j];
            }
        }
        Some(h)
    }

    fn grad_sup_bound(&self) -> f64 {
        self.first.grad_sup_bound() + self.second.grad_sup_bound()
    }
}

/// Mechanical family `H(x, p) = |p - shift|^2 / 2 + V(x)`; exact Legendre
/// dual `L(x, v) = |v|^2 / 2 + <shift, v> - V(x)`.
pub struct MechanicalPreset<const D: usize> {
    pub potential: Arc<dyn Potential<D>>,
    pub shift: [f64; D],
}

impl<const D: usize> MechanicalPreset<D> {
    pub fn new(potential: Arc<dyn Potential<D>>) -> Self {
        Self {
            potential,
            shift: [0.0; D],
        }
    }

    pub fn shifted(potential: Arc<dyn Potential<D>>, shift: [f64; D]) -> Self {
        Self { potential, shift }
    }
}

impl<const D: usize> Hamiltonian<D> for MechanicalPreset<D> {
    fn eval(&self, x: &[f64; D], p: &[f64; D]) -> f64 {
        let mut kin = 0.0;
        for i in 0..D {
            let q = p[i] - self.shift[i];
            kin += q * q;
        }
        0.5 * kin + self.potential.eval(x)
    }

    fn grad_x(&self, x: &[f64; D], _p: &[f64; D]) -> Option<[f64; D]> {
        Some(self.potential.grad(x))
    }

    fn grad_p(&self, _x: &[f64; D], p: &[f64; D]) -> Option<[f64; D]> {
        let mut g = [0.0; D];
        for i in 0..D {
            g[i] = p[i] - self.shift[i];
        }
        Some(g)
    }

    fn lagrangian(&self, x: &[f64; D], v: &[f64; D]) -> Option<f64> {
        Some(0.5 * dot(v, v) + dot(&self.shift, v) - self.potential.eval(x))
    }

    fn second_derivatives(&self, x: &[f64; D], _p: &[f64; D]) -> Option<SecondDerivatives<D>> {
        let h_xx = self.potential.hess(x)?;
        let mut h_pp = [[0.0; D]; D];
        for i in 0..D {
            h_pp[i][i] = 1.0;
        }
        Some(SecondDerivatives {
            h_xx,
            h_xp: [[0.0; D]; D],
            h_pp,
        })
    }
}

/// Hamiltonian plus a configuration-space potential `H + W(x)`; the
/// Lagrangian shifts by `-W` exactly, so analytic duals survive.
pub struct AddedPotential<const D: usize> {
    pub inner: Arc<dyn Hamiltonian<D>>,
    pub extra: Arc<dyn Potential<D>>,
}

impl<const D: usize> Hamiltonian<D> for AddedPotential<D> {
    fn eval(&self, x: &[f64; D], p: &[f64; D]) -> f64 {
        self.inner.eval(x, p) + self.extra.eval(x)
    }

    fn grad_x(&self, x: &[f64; D], p: &[f64; D]) -> Option<[f64; D]> {
        let mut g = self.inner.grad_x(x, p)?;
        let e = self.extra.grad(x);
        for i in 0..D {
            g[i] += e[i];
        }
        Some(g)
    }

    fn grad_p(&self, x: &[f64; D], p: &[f64; D]) -> Option<[f64; D]> {
        self.inner.grad_p(x, p)
    }

    fn lagrangian(&self, x: &[f64; D], v: &[f64; D]) -> Option<f64> {
        Some(self.inner.lagrangian(x, v)? - self.extra.eval(x))
    }
}

/// Closure-backed Hamiltonian for tests and custom fibers; everything is
/// finite-difference and numeric-Legendre.
pub struct ClosureHamiltonian<const D: usize> {
    f: Box<dyn Fn(&[f64; D], &[f64; D]) -> f64 + Send + Sync>,
}

impl<const D: usize> ClosureHamiltonian<D> {
    pub fn new(f: impl Fn(&[f64; D], &[f64; D]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl<const D: usize> Hamiltonian<D> for ClosureHamiltonian<D> {
    fn eval(&self, x: &[f64; D], p: &[f64; D]) -> f64 {
        (self.f)(x, p)
    }
}

/// How the Lagrangian is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagrangianMode {
    Analytic,
    NumericLegendre,
}

/// Lagrangian access parameters: velocity search radius plus the numeric
/// Legendre controls (coarse points per axis and refinement tolerance).
#[derive(Debug, Clone, Copy)]
pub struct LagrangianView {
    pub mode: LagrangianMode,
    pub v_bound: f64,
    pub coarse_pts: usize,
    pub tol_p: f64,
}

/// A Hamiltonian with its discount rate and numeric controls; the model
/// object every solver, flow and diagnostic operates on.
#[derive(Clone)]
pub struct DiscountedModel<const D: usize> {
    hamiltonian: Arc<dyn Hamiltonian<D>>,
    lambda: f64,
    p_bound: f64,
    h_fd: f64,
    lagrangian_view: LagrangianView,
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_LEGENDRE_COARSE: usize = 64;
pub const DEFAULT_LEGENDRE_TOL: f64 = 1e-8;

impl<const D: usize> DiscountedModel<D> {
    /// Wrap a Hamiltonian with explicit fiber bounds.
    pub fn from_hamiltonian(
        hamiltonian: Arc<dyn Hamiltonian<D>>,
        lambda: f64,
        p_bound: f64,
        mode: LagrangianMode,
    ) -> Self {
        assert!(lambda > 0.0, "discount rate must be positive");
        assert!(p_bound > 0.0);
        Self {
            hamiltonian,
            lambda,
            p_bound,
            h_fd: DEFAULT_FD_STEP,
            lagrangian_view: LagrangianView {
                mode,
                v_bound: p_bound,
                coarse_pts: DEFAULT_LEGENDRE_COARSE,
                tol_p: DEFAULT_LEGENDRE_TOL,
            },
        }
    }

    fn mechanical_with(potential: Arc<dyn Potential<D>>, shift: [f64; D], lambda: f64) -> Self {
        // Fiber search radius 4 + 2 sup|V'|: Tonelli a-priori compactness
        // keeps minimizers well inside for every preset shipped.
        let bound = 4.0 + 2.0 * potential.grad_sup_bound() + crate::util::norm(&shift);
        Self::from_hamiltonian(
            Arc::new(MechanicalPreset::shifted(potential, shift)),
            lambda,
            bound,
            LagrangianMode::Analytic,
        )
    }

    pub fn mechanical(potential: TrigPotential<D>, lambda: f64) -> Self {
        Self::mechanical_with(Arc::new(potential), [0.0; D], lambda)
    }

    /// `H = |p|^2 / 2`.
    pub fn free(lambda: f64) -> Self {
        Self::mechanical(TrigPotential::zero(), lambda)
    }

    /// `H = |p|^2 / 2 + c`.
    pub fn constant_potential(c: f64, lambda: f64) -> Self {
        Self::mechanical(TrigPotential::constant(c), lambda)
    }

    /// `H = |p|^2 / 2 + a sum_i cos(2 pi x_i)`.
    pub fn cosine(amplitude: f64, lambda: f64) -> Self {
        Self::mechanical(TrigPotential::cosine_modes(amplitude, 1), lambda)
    }

    /// `H = |p|^2 / 2 + a sum_i cos(4 pi x_i)`: two equal-height potential
    /// maxima per axis, hence a two-point Aubry set in 1D.
    pub fn two_well(amplitude: f64, lambda: f64) -> Self {
        Self::mechanical(TrigPotential::cosine_modes(amplitude, 2), lambda)
    }

    /// `H = |p - shift|^2 / 2 + a sum_i cos(2 pi x_i)`.
    pub fn shifted(shift: [f64; D], amplitude: f64, lambda: f64) -> Self {
        let potential: Arc<dyn Potential<D>> = if amplitude == 0.0 {
            Arc::new(TrigPotential::zero())
        } else {
            Arc::new(TrigPotential::cosine_modes(amplitude, 1))
        };
        Self::mechanical_with(potential, shift, lambda)
    }

    /// Same dynamics with `W(x)` added to the Hamiltonian (Lagrangian drops
    /// by `W` exactly); used by the strict-subsolution perturbation.
    pub fn with_added_potential(&self, extra: Arc<dyn Potential<D>>) -> Self {
        let mut out = self.clone();
        out.hamiltonian = Arc::new(AddedPotential {
            inner: Arc::clone(&self.hamiltonian),
            extra,
        });
        out
    }

    pub fn with_p_bound(mut self, p_bound: f64) -> Self {
        assert!(p_bound > 0.0);
        self.p_bound = p_bound;
        self.lagrangian_view.v_bound = p_bound;
        self
    }

    pub fn with_fd_step(mut self, h_fd: f64) -> Self {
        assert!(h_fd > 0.0);
        self.h_fd = h_fd;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p_bound(&self) -> f64 {
        self.p_bound
    }

    pub fn v_bound(&self) -> f64 {
        self.lagrangian_view.v_bound
    }

    pub fn lagrangian_view(&self) -> LagrangianView {
        self.lagrangian_view
    }

    pub fn h(&self, x: &[f64; D], p: &[f64; D]) -> f64 {
        self.hamiltonian.eval(x, p)
    }

    /// `H_x`, analytic when available, otherwise central differences.
    pub fn grad_x(&self, x: &[f64; D], p: &[f64; D]) -> [f64; D] {
        if let Some(g) = self.hamiltonian.grad_x(x, p) {
            return g;
        }
        let mut g = [0.0; D];
        for a in 0..D {
            let mut xp = *x;
            let mut xm = *x;
            xp[a] += self.h_fd;
            xm[a] -= self.h_fd;
            g[a] = (self.hamiltonian.eval(&xp, p) - self.hamiltonian.eval(&xm, p))
                / (2.0 * self.h_fd);
        }
        g
    }

    /// `H_p`, analytic when available, otherwise central differences.
    pub fn grad_p(&self, x: &[f64; D], p: &[f64; D]) -> [f64; D] {
        if let Some(g) = self.hamiltonian.grad_p(x, p) {
            return g;
        }
        let mut g = [0.0; D];
        for a in 0..D {
            let mut pp = *p;
            let mut pm = *p;
            pp[a] += self.h_fd;
            pm[a] -= self.h_fd;
            g[a] = (self.hamiltonian.eval(x, &pp) - self.hamiltonian.eval(x, &pm))
                / (2.0 * self.h_fd);
        }
        g
    }

    /// The dissipative phase field `(H_p, -H_x - lambda p)`.
    pub fn hamiltonian_vector_field(&self, x: &[f64; D], p: &[f64; D]) -> ([f64; D], [f64; D]) {
        let dx = self.grad_p(x, p);
        let hx = self.grad_x(x, p);
        let mut dp = [0.0; D];
        for i in 0..D {
            dp[i] = -hx[i] - self.lambda * p[i];
        }
        (dx, dp)
    }

    /// Jacobian of the phase field at `(x, p)` as a `2D x 2D` matrix, from
    /// analytic Hessian blocks when the model provides them, otherwise by
    /// central differences of the field itself.
    pub fn vector_field_jacobian(&self, x: &[f64; D], p: &[f64; D]) -> DMatrix<f64> {
        let n = 2 * D;
        if let Some(sd) = self.hamiltonian.second_derivatives(x, p) {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..D {
                for j in 0..D {
                    // d(x_i')/dx_j = H_px = (H_xp)^T, d(x_i')/dp_j = H_pp
                    m[(i, j)] = sd.h_xp[j][i];
                    m[(i, D + j)] = sd.h_pp[i][j];
                    // d(p_i')/dx_j = -H_xx, d(p_i')/dp_j = -H_xp - lambda I
                    m[(D + i, j)] = -sd.h_xx[i][j];
                    m[(D + i, D + j)] = -sd.h_xp[i][j] - if i == j { self.lambda } else { 0.0 };
                }
            }
            return m;
        }
        let mut m = DMatrix::zeros(n, n);
        let eval = |x: &[f64; D], p: &[f64; D]| -> Vec<f64> {
            let (dx, dp) = self.hamiltonian_vector_field(x, p);
            dx.iter().chain(dp.iter()).copied().collect()
        };
        for j in 0..n {
            let (mut xp, mut pp) = (*x, *p);
            let (mut xm, mut pm) = (*x, *p);
            if j < D {
                xp[j] += self.h_fd;
                xm[j] -= self.h_fd;
            } else {
                pp[j - D] += self.h_fd;
                pm[j - D] -= self.h_fd;
            }
            let fp = eval(&xp, &pp);
            let fm = eval(&xm, &pm);
            for i in 0..n {
                m[(i, j)] = (fp[i] - fm[i]) / (2.0 * self.h_fd);
            }
        }
        m
    }

    /// Lagrangian evaluation: analytic dual when the preset has one, the
    /// boxed numeric Legendre maximum otherwise (total function; boundary
    /// diagnostics live in [`Self::legendre_transform`]).
    pub fn lagrangian(&self, x: &[f64; D], v: &[f64; D]) -> f64 {
        if self.lagrangian_view.mode == LagrangianMode::Analytic {
            if let Some(l) = self.hamiltonian.lagrangian(x, v) {
                return l;
            }
        }
        self.legendre_search(x, v).0
    }

    fn legendre_search(&self, x: &[f64; D], v: &[f64; D]) -> (f64, [f64; D], bool) {
        let pts = self.lagrangian_view.coarse_pts;
        let pb = self.p_bound;
        let spacing = 2.0 * pb / (pts - 1) as f64;
        let coord = |i: usize| -pb + spacing * i as f64;
        let g = |p: &[f64; D]| dot(p, v) - self.hamiltonian.eval(x, p);

        // Coarse scan over the fiber box.
        let total = pts.pow(D as u32);
        let mut best_idx = [0usize; D];
        let mut best_val = f64::NEG_INFINITY;
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = [0usize; D];
            let mut p = [0.0; D];
            for a in 0..D {
                idx[a] = rem % pts;
                rem /= pts;
                p[a] = coord(idx[a]);
            }
            let val = g(&p);
            if val > best_val {
                best_val = val;
                best_idx = idx;
            }
        }

        let mut on_boundary = false;
        for a in 0..D {
            if best_idx[a] == 0 || best_idx[a] == pts - 1 {
                on_boundary = true;
            }
        }

        // Per-axis golden-section refinement around the best coarse sample;
        // D sweeps with a deterministic probe count.
        let mut p_star = [0.0; D];
        for a in 0..D {
            p_star[a] = coord(best_idx[a]);
        }
        let mut val_star = best_val;
        for _sweep in 0..D {
            for a in 0..D {
                let lo = (p_star[a] - spacing).max(-pb);
                let hi = (p_star[a] + spacing).min(pb);
                let (pa, val) = golden_max(
                    |t| {
                        let mut p = p_star;
                        p[a] = t;
                        g(&p)
                    },
                    lo,
                    hi,
                    self.lagrangian_view.tol_p,
                );
                if val >= val_star {
                    p_star[a] = pa;
                    val_star = val;
                }
            }
        }
        for a in 0..D {
            if p_star[a].abs() >= pb * (1.0 - 1e-9) {
                on_boundary = true;
            }
        }
        (val_star, p_star, on_boundary)
    }

    /// Numeric Legendre transform `L(x, v) = max_p { <p, v> - H(x, p) }`
    /// with the maximizing covector. Errors when the maximizer hits the
    /// fiber search box (p_bound too small for this velocity).
    pub fn legendre_transform(
        &self,
        x: &[f64; D],
        v: &[f64; D],
    ) -> Result<(f64, [f64; D]), ModelError> {
        let (l, p_star, on_boundary) = self.legendre_search(x, v);
        if on_boundary {
            return Err(ModelError::MaximizerOnBoundary {
                x: x.to_vec(),
                v: v.to_vec(),
                p_bound: self.p_bound,
            });
        }
        Ok((l, p_star))
    }

    /// Sampled fiber convexity (H1) and superlinearity (H2) check.
    pub fn convexity_report(
        &self,
        n_samples: usize,
        seed: u64,
    ) -> Result<ConvexityReport, ModelError> {
        assert!(n_samples >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pb = self.p_bound;
        let delta = pb / 64.0;
        let mut min_second = f64::INFINITY;
        let mut violations = Vec::new();
        let mut superlinearity = Vec::new();

        for _ in 0..n_samples {
            let mut x = [0.0; D];
            let mut p = [0.0; D];
            let mut dir = [0.0; D];
            for a in 0..D {
                x[a] = rng.gen_range(0.0..1.0);
                p[a] = rng.gen_range(-0.9 * pb..0.9 * pb);
                dir[a] = rng.gen_range(-1.0..1.0);
            }
            let nrm = crate::util::norm(&dir).max(1e-12);
            for a in 0..D {
                dir[a] /= nrm;
            }
            let mut pp = p;
            let mut pm = p;
            for a in 0..D {
                pp[a] += delta * dir[a];
                pm[a] -= delta * dir[a];
            }
            let q = (self.h(&x, &pp) + self.h(&x, &pm) - 2.0 * self.h(&x, &p)) / (delta * delta);
            min_second = min_second.min(q);
            if q <= 0.0 {
                violations.push((x.to_vec(), p.to_vec()));
            }

            // Superlinearity proxy: H(x, r e)/r increasing over a radius ladder.
            let radii = [0.25 * pb, 0.5 * pb, pb];
            let mut ratios = [0.0; 3];
            for (i, r) in radii.iter().enumerate() {
                let mut pr = [0.0; D];
                for a in 0..D {
                    pr[a] = r * dir[a];
                }
                ratios[i] = self.h(&x, &pr) / r;
            }
            if ratios[1] < ratios[0] - 1e-9 || ratios[2] < ratios[1] - 1e-9 {
                violations.push((x.to_vec(), p.to_vec()));
            }
            superlinearity.push(SuperlinearitySample {
                radii,
                ratios,
            });
        }

        if !violations.is_empty() {
            return Err(ModelError::ConvexityViolation {
                samples: violations,
                worst: min_second,
            });
        }
        Ok(ConvexityReport {
            min_second_difference: min_second,
            superlinearity,
        })
    }
}

/// `H(x, r e)/r` along one sampled direction over a radius ladder.
#[derive(Debug, Clone)]
pub struct SuperlinearitySample {
    pub radii: [f64; 3],
    pub ratios: [f64; 3],
}

/// Outcome of the sampled Tonelli check.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub min_second_difference: f64,
    pub superlinearity: Vec<SuperlinearitySample>,
}

/// Declarative model description read from configuration; builds the
/// dimension-fixed model objects.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    pub preset: PresetKind,
    pub lambda: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TrigTerm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bound: Option<f64>,
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetKind {
    Free,
    Constant,
    Cosine,
    TwoWell,
    Shifted,
    Trig,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda <= 0.0 {
            return Err("lambda must be positive".into());
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(format!("dim must be 1 or 2, got {}", self.dim));
        }
        if self.preset == PresetKind::Trig && self.terms.is_none() {
            return Err("trig preset needs [[model.terms]]".into());
        }
        Ok(())
    }

    pub fn build<const D: usize>(&self) -> Result<DiscountedModel<D>, String> {
        self.validate()?;
        if self.dim != D {
            return Err(format!("spec is {}-dimensional, requested {D}", self.dim));
        }
        let amplitude = self.amplitude.unwrap_or(1.0);
        let model = match self.preset {
            PresetKind::Free => DiscountedModel::free(self.lambda),
            PresetKind::Constant => {
                DiscountedModel::constant_potential(self.constant.unwrap_or(1.0), self.lambda)
            }
            PresetKind::Cosine => DiscountedModel::cosine(amplitude, self.lambda),
            PresetKind::TwoWell => DiscountedModel::two_well(amplitude, self.lambda),
            PresetKind::Shifted => {
                let mut shift = [0.0; D];
                shift[0] = self.shift.unwrap_or(0.3);
                DiscountedModel::shifted(shift, self.amplitude.unwrap_or(0.0), self.lambda)
            }
            PresetKind::Trig => {
                let terms = self.terms.as_ref().unwrap();
                DiscountedModel::mechanical(TrigPotential::new(terms)?, self.lambda)
            }
        };
        Ok(match self.p_bound {
            Some(pb) => model.with_p_bound(pb),
            None => model,
        })
    }
}

/// Reference point evaluation of the preset potential (handy for oracles).
pub fn potential_of<const D: usize>(spec: &ModelSpec, x: &[f64; D]) -> f64 {
    let amplitude = spec.amplitude.unwrap_or(1.0);
    match spec.preset {
        PresetKind::Free => 0.0,
        PresetKind::Constant => spec.constant.unwrap_or(1.0),
        PresetKind::Cosine => TrigPotential::<D>::cosine_modes(amplitude, 1).eval(x),
        PresetKind::TwoWell => TrigPotential::<D>::cosine_modes(amplitude, 2).eval(x),
        PresetKind::Shifted => TrigPotential::<D>::cosine_modes(spec.amplitude.unwrap_or(0.0), 1).eval(x),
        PresetKind::Trig => TrigPotential::<D>::new(spec.terms.as_ref().unwrap())
            .expect("validated spec")
            .eval(x),
    }
}

/// Wrap a point into the torus (re-export for call sites that build curves).
pub fn wrap<const D: usize>(x: &[f64; D]) -> [f64; D] {
    wrap_point(x)
}
