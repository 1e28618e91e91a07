//! Conformally symplectic phase flow: RK4 integration with variational
//! (Jacobian) propagation, equilibrium search with eigenvalue analysis,
//! sublevel regions of constrained subsolutions, forward-image attractor
//! approximation, and the Lyapunov decay diagnostic.
//!
//! The implemented volume law is the divergence-derived one: the phase field
//! `(H_p, -H_x - lambda p)` has constant divergence `-lambda` per momentum
//! axis, so `det DPhi^t = e^(-lambda D t)` on `T^D` (in 1D, `e^(-lambda t)`).

use crate::aubry::{FiberKind, Trajectory};
use crate::error::FlowError;
use crate::grid::{GridFunction, Scheme};
use crate::model::DiscountedModel;
use crate::util::{circ_diff, map_indexed, norm, wrap_point};
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Phase point `(x, p)`.
pub type Phase<const D: usize> = ([f64; D], [f64; D]);

/// Finite sample of a phase-space region.
#[derive(Debug, Clone)]
pub struct PhaseCloud<const D: usize> {
    pub points: Vec<Phase<D>>,
    /// Flow time already applied to the sample.
    pub timestamp: f64,
}

/// Linearization type at an equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Saddle,
    Sink,
    Source,
    CenterLike,
}

/// Equilibrium of the phase field with its linearization data.
#[derive(Debug, Clone)]
pub struct EquilibriumInfo<const D: usize> {
    pub location: Phase<D>,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Smallest strictly positive real part, when one exists.
    pub mu_min_positive: Option<f64>,
    pub classification: Classification,
}

/// Result of the equilibrium scan. Degenerate presets (free motion) have a
/// continuum of equilibria and are flagged instead of enumerated.
#[derive(Debug, Clone)]
pub enum EquilibriumScan<const D: usize> {
    Isolated(Vec<EquilibriumInfo<D>>),
    Continuum { found: usize, seeds: usize },
}

impl<const D: usize> EquilibriumScan<D> {
    pub fn isolated(&self) -> Option<&[EquilibriumInfo<D>]> {
        match self {
            EquilibriumScan::Isolated(list) => Some(list),
            EquilibriumScan::Continuum { .. } => None,
        }
    }
}

/// Escape guard multiple of `p_bound`.
const ESCAPE_FACTOR: f64 = 10.0;

fn axpy<const D: usize>(x: &[f64; D], k: &[f64; D], s: f64) -> [f64; D] {
    let mut out = *x;
    for i in 0..D {
        out[i] += s * k[i];
    }
    out
}

/// One RK4 step of the phase flow, optionally with the variational equation
/// `J' = A(z) J` co-integrated at the same stages.
fn rk4_step<const D: usize>(
    model: &DiscountedModel<D>,
    z: Phase<D>,
    jac: Option<&DMatrix<f64>>,
    dt: f64,
) -> (Phase<D>, Option<DMatrix<f64>>) {
    let (x, p) = z;
    let (kx1, kp1) = model.hamiltonian_vector_field(&x, &p);
    let z2 = (axpy(&x, &kx1, dt / 2.0), axpy(&p, &kp1, dt / 2.0));
    let (kx2, kp2) = model.hamiltonian_vector_field(&z2.0, &z2.1);
    let z3 = (axpy(&x, &kx2, dt / 2.0), axpy(&p, &kp2, dt / 2.0));
    let (kx3, kp3) = model.hamiltonian_vector_field(&z3.0, &z3.1);
    let z4 = (axpy(&x, &kx3, dt), axpy(&p, &kp3, dt));
    let (kx4, kp4) = model.hamiltonian_vector_field(&z4.0, &z4.1);

    let mut xo = x;
    let mut po = p;
    for i in 0..D {
        xo[i] += dt / 6.0 * (kx1[i] + 2.0 * kx2[i] + 2.0 * kx3[i] + kx4[i]);
        po[i] += dt / 6.0 * (kp1[i] + 2.0 * kp2[i] + 2.0 * kp3[i] + kp4[i]);
    }

    let jac_out = jac.map(|j| {
        let m1 = model.vector_field_jacobian(&x, &p) * j;
        let m2 = model.vector_field_jacobian(&z2.0, &z2.1) * (j + dt / 2.0 * &m1);
        let m3 = model.vector_field_jacobian(&z3.0, &z3.1) * (j + dt / 2.0 * &m2);
        let m4 = model.vector_field_jacobian(&z4.0, &z4.1) * (j + dt * &m3);
        j + dt / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
    });

    ((xo, po), jac_out)
}

fn check_guard<const D: usize>(
    model: &DiscountedModel<D>,
    p: &[f64; D],
    t: f64,
) -> Result<(), FlowError> {
    let guard = ESCAPE_FACTOR * model.p_bound();
    let mag = norm(p);
    if mag > guard || !mag.is_finite() {
        return Err(FlowError::Escape {
            t,
            magnitude: mag,
            guard,
        });
    }
    Ok(())
}

/// RK4 trajectory of the dissipative flow over `[0, T]`, positions stored
/// unwrapped. With `with_jacobian` the variational equation is co-integrated
/// from the identity.
pub fn integrate<const D: usize>(
    model: &DiscountedModel<D>,
    state: Phase<D>,
    t_total: f64,
    dt: f64,
    with_jacobian: bool,
) -> Result<Trajectory<D>, FlowError> {
    assert!(dt > 0.0 && dt <= 1e-2, "flow dt must be in (0, 1e-2]");
    let steps = (t_total / dt).round() as usize;
    let mut z = state;
    let mut jac = with_jacobian.then(|| DMatrix::identity(2 * D, 2 * D));

    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut fibers = Vec::with_capacity(steps + 1);
    let mut jacobians = with_jacobian.then(|| Vec::with_capacity(steps + 1));

    times.push(0.0);
    positions.push(z.0);
    fibers.push(z.1);
    if let (Some(j), Some(list)) = (jac.as_ref(), jacobians.as_mut()) {
        list.push(j.clone());
    }
    for k in 0..steps {
        let (zn, jn) = rk4_step(model, z, jac.as_ref(), dt);
        z = zn;
        jac = jn;
        let t = (k + 1) as f64 * dt;
        check_guard(model, &z.1, t)?;
        times.push(t);
        positions.push(z.0);
        fibers.push(z.1);
        if let (Some(j), Some(list)) = (jac.as_ref(), jacobians.as_mut()) {
            list.push(j.clone());
        }
    }

    Ok(Trajectory::new(
        times,
        positions,
        fibers,
        FiberKind::Momentum,
        jacobians,
    ))
}

/// Flow a single phase point without recording the path.
pub fn flow_point<const D: usize>(
    model: &DiscountedModel<D>,
    state: Phase<D>,
    t_total: f64,
    dt: f64,
) -> Result<Phase<D>, FlowError> {
    assert!(dt > 0.0 && dt <= 1e-2);
    let steps = (t_total / dt).round() as usize;
    let mut z = state;
    for k in 0..steps {
        let (zn, _) = rk4_step(model, z, None, dt);
        z = zn;
        check_guard(model, &z.1, (k + 1) as f64 * dt)?;
    }
    Ok(z)
}

/// Damped Gauss-Newton search for zeros of the phase field from a lattice of
/// seeds; deduplicates within `1e-8` and attaches linearization data.
/// Degenerate fields where almost every position seeds its own equilibrium
/// (with a vanishing eigenvalue) report a continuum instead of a list.
pub fn equilibria_find<const D: usize>(
    model: &DiscountedModel<D>,
    seeds_per_axis: usize,
) -> EquilibriumScan<D> {
    assert!(seeds_per_axis >= 8, "need at least 8 seeds per axis");
    let pb = model.p_bound();
    let s = seeds_per_axis;
    let total = s.pow(2 * D as u32);
    let mut found: Vec<Phase<D>> = Vec::new();

    for seed in 0..total {
        let mut rem = seed;
        let mut x = [0.0; D];
        let mut p = [0.0; D];
        for a in 0..D {
            x[a] = (rem % s) as f64 / s as f64;
            rem /= s;
        }
        for a in 0..D {
            let i = rem % s;
            rem /= s;
            p[a] = -0.5 * pb + pb * i as f64 / (s - 1) as f64;
        }

        let mut converged = false;
        for _ in 0..80 {
            let (fx, fp) = model.hamiltonian_vector_field(&x, &p);
            let fnorm = (norm(&fx).powi(2) + norm(&fp).powi(2)).sqrt();
            if fnorm <= 1e-12 {
                converged = true;
                break;
            }
            let a = model.vector_field_jacobian(&x, &p);
            let mut fvec = DVector::zeros(2 * D);
            for i in 0..D {
                fvec[i] = fx[i];
                fvec[D + i] = fp[i];
            }
            let ata = a.transpose() * &a;
            let mu = 1e-12 * (1.0 + ata.trace());
            let lhs = ata + DMatrix::identity(2 * D, 2 * D) * mu;
            let rhs = -(a.transpose() * fvec);
            let Some(delta) = lhs.lu().solve(&rhs) else {
                break;
            };
            if !delta.iter().all(|d| d.is_finite()) {
                break;
            }
            // Step cap keeps far-off seeds from overshooting.
            let dn = delta.norm();
            let scale = if dn > 0.25 { 0.25 / dn } else { 1.0 };
            for i in 0..D {
                x[i] += scale * delta[i];
                p[i] += scale * delta[D + i];
            }
            if norm(&p) > ESCAPE_FACTOR * pb {
                break;
            }
        }
        if !converged {
            continue;
        }
        let xw = wrap_point(&x);
        let dup = found
            .iter()
            .any(|(fx, fp)| crate::util::torus_dist(fx, &xw) + norm(&sub(fp, &p)) < 1e-8);
        if !dup {
            found.push((xw, p));
        }
    }

    // Continuum heuristic: at least as many distinct equilibria as position
    // seeds, most of them with a near-zero eigenvalue.
    let position_seeds = s.pow(D as u32);
    if found.len() >= position_seeds {
        let degenerate = found
            .iter()
            .filter(|(x, p)| {
                let a = model.vector_field_jacobian(x, p);
                a.complex_eigenvalues().iter().any(|e| e.norm() < 1e-6)
            })
            .count();
        if 2 * degenerate >= found.len() {
            return EquilibriumScan::Continuum {
                found: found.len(),
                seeds: total,
            };
        }
    }

    let mut infos: Vec<EquilibriumInfo<D>> = found
        .into_iter()
        .map(|(x, p)| {
            let a = model.vector_field_jacobian(&x, &p);
            let eigenvalues: Vec<Complex<f64>> =
                a.complex_eigenvalues().iter().copied().collect();
            classify(x, p, eigenvalues)
        })
        .collect();
    infos.sort_by(|a, b| {
        a.location
            .0
            .partial_cmp(&b.location.0)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    EquilibriumScan::Isolated(infos)
}

fn sub<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = a[i] - b[i];
    }
    out
}

const HYPERBOLICITY_TOL: f64 = 1e-7;

fn classify<const D: usize>(
    x: [f64; D],
    p: [f64; D],
    eigenvalues: Vec<Complex<f64>>,
) -> EquilibriumInfo<D> {
    let mut pos = 0;
    let mut neg = 0;
    let mut center = 0;
    for e in &eigenvalues {
        if e.re > HYPERBOLICITY_TOL {
            pos += 1;
        } else if e.re < -HYPERBOLICITY_TOL {
            neg += 1;
        } else {
            center += 1;
        }
    }
    let classification = if center > 0 {
        Classification::CenterLike
    } else if pos == 0 {
        Classification::Sink
    } else if neg == 0 {
        Classification::Source
    } else {
        Classification::Saddle
    };
    let mu_min_positive = eigenvalues
        .iter()
        .filter(|e| e.re > HYPERBOLICITY_TOL)
        .map(|e| e.re)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    EquilibriumInfo {
        location: (x, p),
        eigenvalues,
        mu_min_positive,
        classification,
    }
}

/// Real eigenvector for a real eigenvalue by inverse iteration.
pub fn real_eigenvector(a: &DMatrix<f64>, eigenvalue: f64) -> Option<DVector<f64>> {
    let n = a.nrows();
    let shifted = a - DMatrix::identity(n, n) * (eigenvalue + 1e-9);
    let lu = shifted.lu();
    let mut v = DVector::from_element(n, 1.0);
    v /= v.norm();
    for _ in 0..50 {
        let mut w = lu.solve(&v)?;
        let nw = w.norm();
        if !nw.is_finite() || nw == 0.0 {
            return None;
        }
        w /= nw;
        v = w;
    }
    let res = (a * &v - &v * eigenvalue).norm();
    (res < 1e-6 * (1.0 + eigenvalue.abs())).then_some(v)
}

/// Sample of the sublevel set `Sigma = {(x, p) : lambda u(x) + H(x, p) <= 0}`
/// over grid nodes times a p-lattice of `p_samples` points per axis on
/// `[-p_bound, p_bound]`.
///
/// `slack` relaxes the inequality to `<= slack`: the attractor's calibrated
/// equilibria sit exactly on the boundary of the exact sublevel set, so a
/// slack of the certified residual accuracy keeps the sampled region an
/// outer approximation (pass 0 for the literal set).
pub fn sublevel_region<const D: usize>(
    u: &GridFunction<D>,
    model: &DiscountedModel<D>,
    p_samples: usize,
    slack: f64,
) -> Result<PhaseCloud<D>, FlowError> {
    assert!(
        p_samples >= 3 && p_samples % 2 == 1,
        "p_samples must be odd >= 3"
    );
    assert!(slack >= 0.0);
    let pb = model.p_bound();
    let lambda = model.lambda();
    let grid = u.grid();
    let mut points = Vec::new();
    for node in 0..grid.num_nodes() {
        let x = grid.node_point(node);
        let ux = u.value(node);
        for flat in 0..p_samples.pow(D as u32) {
            let mut rem = flat;
            let mut p = [0.0; D];
            for a in 0..D {
                let i = rem % p_samples;
                rem /= p_samples;
                p[a] = -pb + 2.0 * pb * i as f64 / (p_samples - 1) as f64;
            }
            if lambda * ux + model.h(&x, &p) <= slack {
                points.push((x, p));
            }
        }
    }
    if points.is_empty() {
        return Err(FlowError::EmptyRegion);
    }
    Ok(PhaseCloud {
        points,
        timestamp: 0.0,
    })
}

/// Forward image of the cloud under the phase flow: an outer approximation
/// of the maximal attractor, since the images of the sublevel set are nested
/// in forward time.
pub fn attractor_approximate<const D: usize>(
    cloud: &PhaseCloud<D>,
    model: &DiscountedModel<D>,
    t_total: f64,
    dt: f64,
) -> Result<PhaseCloud<D>, FlowError> {
    let results = map_indexed(cloud.points.len(), |i| {
        flow_point(model, cloud.points[i], t_total, dt).map(|(x, p)| (wrap_point(&x), p))
    });
    let mut points = Vec::with_capacity(results.len());
    for r in results {
        points.push(r?);
    }
    Ok(PhaseCloud {
        points,
        timestamp: cloud.timestamp + t_total,
    })
}

/// Polyline samples of a saddle's unstable manifold, both branches, traced
/// by flowing from `eps`-offsets along the unstable eigenvector.
pub fn unstable_manifold_trace<const D: usize>(
    model: &DiscountedModel<D>,
    equilibrium: &EquilibriumInfo<D>,
    eps: f64,
    t_total: f64,
    dt: f64,
) -> Result<Vec<Phase<D>>, FlowError> {
    let (x0, p0) = equilibrium.location;
    let a = model.vector_field_jacobian(&x0, &p0);
    let mu = equilibrium
        .mu_min_positive
        .expect("unstable manifold of a non-hyperbolic equilibrium");
    let dir = real_eigenvector(&a, mu).expect("unstable eigenvector");
    let mut out = vec![(x0, p0)];
    for sign in [1.0, -1.0] {
        let mut x = x0;
        let mut p = p0;
        for i in 0..D {
            x[i] += sign * eps * dir[i];
            p[i] += sign * eps * dir[D + i];
        }
        let traj = integrate(model, (x, p), t_total, dt, false)?;
        for k in 0..traj.len() {
            out.push((wrap_point(&traj.position(k)), traj.fiber(k)));
        }
    }
    Ok(out)
}

/// Worst Gronwall margin of `F_u = lambda u + H` along random trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub trajectories: usize,
    pub violations: usize,
    /// max over samples of F(z(t)) - e^(-lambda t) F(z(0)).
    pub worst_margin: f64,
}

/// Verify `F_u(Phi^t(z)) <= e^(-lambda t) F_u(z) + tol` along `n` random
/// trajectories started in the grid box with `|p_i| <= p_box`. Wants a
/// C^1-quality (regularized) subsolution so the pointwise derivative
/// argument behind the decay actually applies.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_decay_check<const D: usize>(
    u: &GridFunction<D>,
    model: &DiscountedModel<D>,
    n_trajectories: usize,
    t_total: f64,
    dt: f64,
    p_box: f64,
    tol_lyap: f64,
    seed: u64,
) -> Result<LyapunovReport, FlowError> {
    let lambda = model.lambda();
    let f_u = |x: &[f64; D], p: &[f64; D]| -> f64 {
        lambda * u.interpolate(&wrap_point(x), Scheme::Cubic) + model.h(x, p)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Phase<D>> = (0..n_trajectories)
        .map(|_| {
            let mut x = [0.0; D];
            let mut p = [0.0; D];
            for a in 0..D {
                x[a] = rng.gen_range(0.0..1.0);
                p[a] = rng.gen_range(-p_box..p_box);
            }
            (x, p)
        })
        .collect();

    let margins = map_indexed(starts.len(), |i| -> Result<f64, FlowError> {
        let (x0, p0) = starts[i];
        let f0 = f_u(&x0, &p0);
        let steps = (t_total / dt).round() as usize;
        let mut z = (x0, p0);
        let mut worst = f64::NEG_INFINITY;
        for k in 0..steps {
            let (zn, _) = rk4_step(model, z, None, dt);
            z = zn;
            let t = (k + 1) as f64 * dt;
            check_guard(model, &z.1, t)?;
            worst = worst.max(f_u(&z.0, &z.1) - (-lambda * t).exp() * f0);
        }
        Ok(worst)
    });

    let mut report = LyapunovReport {
        trajectories: n_trajectories,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
    };
    for m in margins {
        let m = m?;
        report.worst_margin = report.worst_margin.max(m);
        if m > tol_lyap {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Scaled Chebyshev phase distance in grid-cell units: position differences
/// are measured on the torus in multiples of `hx`, momentum differences in
/// multiples of `hp` (the p-sampling cell), and the worst axis counts.
pub fn phase_cell_distance<const D: usize>(
    a: &Phase<D>,
    b: &Phase<D>,
    hx: f64,
    hp: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..D {
        worst = worst.max(circ_diff(a.0[i], b.0[i]).abs() / hx);
        worst = worst.max((a.1[i] - b.1[i]).abs() / hp);
    }
    worst
}

/// One-directional Hausdorff distance (cloud -> target) in cell units.
pub fn directed_hausdorff_cells<const D: usize>(
    cloud: &[Phase<D>],
    target: &[Phase<D>],
    hx: f64,
    hp: f64,
) -> f64 {
    assert!(!target.is_empty());
    let worst_per_point = map_indexed(cloud.len(), |i| {
        target
            .iter()
            .map(|t| phase_cell_distance(&cloud[i], t, hx, hp))
            .fold(f64::INFINITY, f64::min)
    });
    worst_per_point.into_iter().fold(0.0f64, f64::max)
}
