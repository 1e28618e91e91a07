//! Periodic grids and grid-sampled scalar fields on the flat torus.
//!
//! Fields are immutable after construction; every query is pure, so bulk
//! evaluation is free to run in parallel.

use crate::error::GridError;
use crate::util::{map_indexed, wrap01};
use serde::{Deserialize, Serialize};

/// Uniform periodic grid on `[0,1)^D` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicGrid<const D: usize> {
    n: usize,
}

/// Interpolation scheme for off-node queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Multilinear; monotone (order-preserving) but first-order diffusive.
    Linear,
    /// Periodic Catmull-Rom; third-order, the default for semigroup work.
    Cubic,
    /// Hermite with monotonized-central limited slopes: third-order in
    /// smooth monotone regions, bracket-bounded with no dispersive ringing
    /// at slope kinks.
    CubicLimited,
}

impl<const D: usize> PeriodicGrid<D> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 8, "periodic grid needs at least 8 points per axis");
        assert!(D == 1 || D == 2, "only T^1 and T^2 are supported");
        Self { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.n.pow(D as u32)
    }

    /// Flat index of a (wrapping) multi-index.
    pub fn flat(&self, idx: &[i64; D]) -> usize {
        let n = self.n as i64;
        let mut out = 0usize;
        for a in (0..D).rev() {
            out = out * self.n + idx[a].rem_euclid(n) as usize;
        }
        out
    }

    /// Multi-index of a flat node index.
    pub fn unflat(&self, mut flat: usize) -> [usize; D] {
        let mut idx = [0usize; D];
        for a in 0..D {
            idx[a] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    /// Coordinates of a node.
    pub fn node_point(&self, flat: usize) -> [f64; D] {
        let idx = self.unflat(flat);
        let mut x = [0.0; D];
        for a in 0..D {
            x[a] = idx[a] as f64 * self.h();
        }
        x
    }
}

/// Scalar field sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<const D: usize> {
    grid: PeriodicGrid<D>,
    values: Vec<f64>,
}

impl<const D: usize> GridFunction<D> {
    pub fn new(grid: PeriodicGrid<D>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.num_nodes());
        debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite field value");
        Self { grid, values }
    }

    pub fn constant(grid: PeriodicGrid<D>, c: f64) -> Self {
        Self::new(grid, vec![c; grid.num_nodes()])
    }

    /// Sample `f` at every node (parallel fill, bit-identical to sequential).
    pub fn from_fn(grid: PeriodicGrid<D>, f: impl Fn(&[f64; D]) -> f64 + Sync) -> Self {
        let values = map_indexed(grid.num_nodes(), |k| f(&grid.node_point(k)));
        Self::new(grid, values)
    }

    pub fn grid(&self) -> PeriodicGrid<D> {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// Node-wise combination with another field on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Self::new(self.grid, values)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = self.values.iter().map(|v| f(*v)).collect();
        Self::new(self.grid, values)
    }

    /// Periodic interpolation at an arbitrary point (wrapped into the torus).
    pub fn interpolate(&self, x: &[f64; D], scheme: Scheme) -> f64 {
        match scheme {
            Scheme::Linear => self.interp_linear(x),
            Scheme::Cubic => self.interp_cubic(x),
            Scheme::CubicLimited => self.interp_cubic_limited(x),
        }
    }

    fn base_and_frac(&self, x: &[f64; D]) -> ([i64; D], [f64; D]) {
        let n = self.grid.n() as f64;
        let mut base = [0i64; D];
        let mut frac = [0.0; D];
        for a in 0..D {
            let u = wrap01(x[a]) * n;
            let i = u.floor();
            base[a] = i as i64;
            frac[a] = u - i;
        }
        (base, frac)
    }

    fn interp_linear(&self, x: &[f64; D]) -> f64 {
        let (base, t) = self.base_and_frac(x);
        let mut acc = 0.0;
        for corner in 0..(1usize << D) {
            let mut idx = base;
            let mut w = 1.0;
            for a in 0..D {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    w *= t[a];
                } else {
                    w *= 1.0 - t[a];
                }
            }
            acc += w * self.values[self.grid.flat(&idx)];
        }
        acc
    }

    fn interp_cubic(&self, x: &[f64; D]) -> f64 {
        let (base, frac) = self.base_and_frac(x);
        // Catmull-Rom weights per axis over the stencil {-1, 0, 1, 2}.
        let mut w = [[0.0; 4]; D];
        for a in 0..D {
            let t = frac[a];
            let t2 = t * t;
            let t3 = t2 * t;
            w[a][0] = 0.5 * (-t3 + 2.0 * t2 - t);
            w[a][1] = 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0);
            w[a][2] = 0.5 * (-3.0 * t3 + 4.0 * t2 + t);
            w[a][3] = 0.5 * (t3 - t2);
        }
        let mut acc = 0.0;
        for tap in 0..4usize.pow(D as u32) {
            let mut rem = tap;
            let mut idx = base;
            let mut weight = 1.0;
            for a in 0..D {
                let o = rem % 4;
                rem /= 4;
                idx[a] += o as i64 - 1;
                weight *= w[a][o];
            }
            if weight != 0.0 {
                acc += weight * self.values[self.grid.flat(&idx)];
            }
        }
        acc
    }

    fn interp_cubic_limited(&self, x: &[f64; D]) -> f64 {
        let (base, frac) = self.base_and_frac(x);
        // Tensor product by nested 1D sweeps over the 4^D stencil: the
        // limiter is nonlinear, so each axis interpolates the values
        // produced by the previous one.
        let mut vals = [0.0; 16]; // 4^D <= 16 for D <= 2
        let taps = 4usize.pow(D as u32);
        for tap in 0..taps {
            let mut rem = tap;
            let mut idx = base;
            for a in 0..D {
                idx[a] += (rem % 4) as i64 - 1;
                rem /= 4;
            }
            vals[tap] = self.values[self.grid.flat(&idx)];
        }
        let mut len = taps;
        for a in 0..D {
            len /= 4;
            for j in 0..len {
                let s = &vals[4 * j..4 * j + 4];
                vals[j] = hermite_limited(s[0], s[1], s[2], s[3], frac[a]);
            }
        }
        vals[0]
    }

    /// Central-difference gradient at a node, with periodic wrap.
    pub fn gradient(&self, flat: usize) -> [f64; D] {
        let idx = self.grid.unflat(flat);
        let two_h = 2.0 * self.grid.h();
        let mut g = [0.0; D];
        for a in 0..D {
            let mut up = [0i64; D];
            let mut dn = [0i64; D];
            for b in 0..D {
                up[b] = idx[b] as i64;
                dn[b] = idx[b] as i64;
            }
            up[a] += 1;
            dn[a] -= 1;
            g[a] = (self.values[self.grid.flat(&up)] - self.values[self.grid.flat(&dn)]) / two_h;
        }
        g
    }

    /// Nodal gradient as one field per axis (for interpolated gradient
    /// queries along characteristics).
    pub fn gradient_field(&self) -> Vec<GridFunction<D>> {
        (0..D)
            .map(|a| {
                let values = map_indexed(self.grid.num_nodes(), |k| self.gradient(k)[a]);
                GridFunction::new(self.grid, values)
            })
            .collect()
    }

    /// Max over nodes of |self - other|.
    pub fn sup_distance(&self, other: &Self) -> Result<f64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch {
                left: self.grid.n(),
                right: other.grid.n(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Two-sided second-difference constants across the given scales.
    pub fn second_difference_constants(&self, scales: &[usize]) -> SecondDiffReport {
        assert!(!scales.is_empty());
        let h = self.grid.h();
        for &m in scales {
            assert!(
                m as f64 * h < 0.25,
                "second-difference scale {m}h exceeds a quarter period"
            );
        }
        let per_scale = scales
            .iter()
            .map(|&m| {
                let step = (m as f64 * h).powi(2);
                let mut c_concave = f64::NEG_INFINITY;
                let mut c_convex = f64::NEG_INFINITY;
                for flat in 0..self.grid.num_nodes() {
                    let idx = self.grid.unflat(flat);
                    for a in 0..D {
                        let mut up = [0i64; D];
                        let mut dn = [0i64; D];
                        for b in 0..D {
                            up[b] = idx[b] as i64;
                            dn[b] = idx[b] as i64;
                        }
                        up[a] += m as i64;
                        dn[a] -= m as i64;
                        let q = (self.values[self.grid.flat(&up)]
                            + self.values[self.grid.flat(&dn)]
                            - 2.0 * self.values[flat])
                            / step;
                        c_concave = c_concave.max(q);
                        c_convex = c_convex.max(-q);
                    }
                }
                ScaleConstants {
                    scale: m,
                    c_concave,
                    c_convex,
                }
            })
            .collect();
        SecondDiffReport { per_scale }
    }

    /// CSV serialization: one row per node, `index..., value`, 17 significant
    /// digits (round-trips f64 exactly).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match D {
            1 => out.push_str("i,value\n"),
            _ => out.push_str("i,j,value\n"),
        }
        for flat in 0..self.grid.num_nodes() {
            let idx = self.grid.unflat(flat);
            for a in 0..D {
                out.push_str(&idx[a].to_string());
                out.push(',');
            }
            out.push_str(&format!("{:.16e}\n", self.values[flat]));
        }
        out
    }

    /// JSON header describing the serialized field.
    pub fn meta_json(&self, field: &str) -> String {
        format!(
            "{{\"dim\":{},\"n\":{},\"field\":\"{}\"}}\n",
            D,
            self.grid.n(),
            field
        )
    }

    /// Parse the CSV produced by [`Self::to_csv`].
    pub fn from_csv(text: &str, grid: PeriodicGrid<D>) -> Result<Self, String> {
        let mut values = vec![f64::NAN; grid.num_nodes()];
        for (ln, line) in text.lines().enumerate() {
            if ln == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != D + 1 {
                return Err(format!("line {}: expected {} columns", ln + 1, D + 1));
            }
            let mut idx = [0i64; D];
            for a in 0..D {
                idx[a] = cols[a]
                    .trim()
                    .parse::<i64>()
                    .map_err(|e| format!("line {}: {e}", ln + 1))?;
            }
            let v = cols[D]
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", ln + 1))?;
            values[grid.flat(&idx)] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err("missing node rows".into());
        }
        Ok(Self::new(grid, values))
    }
}

/// Monotonized-central limited Hermite on the unit cell `[f0, f1]` with
/// stencil `(fm1, f0, f1, f2)`; reduces to Catmull-Rom wherever the limiter
/// is inactive, bounded by the bracketing nodes everywhere.
fn hermite_limited(fm1: f64, f0: f64, f1: f64, f2: f64, t: f64) -> f64 {
    let d = f1 - f0;
    let m0 = limited_slope(f0 - fm1, d);
    let m1 = limited_slope(d, f2 - f1);
    f0 + t * (m0 + t * ((3.0 * d - 2.0 * m0 - m1) + t * (m0 + m1 - 2.0 * d)))
}

fn limited_slope(left: f64, right: f64) -> f64 {
    if left * right <= 0.0 {
        return 0.0;
    }
    let central = 0.5 * (left + right);
    let cap = 2.0 * left.abs().min(right.abs());
    central.signum() * central.abs().min(cap)
}

/// Second-difference quotient extrema at one scale.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleConstants {
    /// Scale as a multiple of the grid spacing.
    pub scale: usize,
    /// max over nodes/axes of (f(x+h) + f(x-h) - 2 f(x)) / |h|^2.
    pub c_concave: f64,
    /// max of the negated quotient.
    pub c_convex: f64,
}

/// Semiconcavity/semiconvexity constants measured across several scales.
/// A finite semiconcavity constant shows up as `c_concave` bounded and
/// stable across scales (and symmetrically for `c_convex`).
#[derive(Debug, Clone, Serialize)]
pub struct SecondDiffReport {
    pub per_scale: Vec<ScaleConstants>,
}

impl SecondDiffReport {
    pub fn c_concave(&self) -> f64 {
        self.per_scale
            .iter()
            .fold(f64::NEG_INFINITY, |m, s| m.max(s.c_concave))
    }

    pub fn c_convex(&self) -> f64 {
        self.per_scale
            .iter()
            .fold(f64::NEG_INFINITY, |m, s| m.max(s.c_convex))
    }

    /// Relative spread max/min - 1 of the positive parts of a column across
    /// scales; small spread means the constant is scale-stable. Constants
    /// below an absolute floor (flat fields) count as perfectly stable.
    pub fn variation(&self, convex_side: bool) -> f64 {
        const FLOOR: f64 = 1e-6;
        let vals: Vec<f64> = self
            .per_scale
            .iter()
            .map(|s| if convex_side { s.c_convex } else { s.c_concave })
            .map(|c| c.max(0.0))
            .collect();
        let hi = vals.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let lo = vals.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if hi <= FLOOR {
            return 0.0; // flat field; nothing to vary
        }
        hi / lo.max(FLOOR) - 1.0
    }
}

/// Default scale ladder for C^{1,1} checks.
pub const SEMICONCAVITY_SCALES: [usize; 4] = [1, 2, 4, 8];
