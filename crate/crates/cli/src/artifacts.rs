//! Deterministic artifact emission: CSV fields, phase clouds, trajectories
//! and JSON reports, all floating-point text at 17 significant digits.

use anyhow::{Context, Result};
use serde::Serialize;
use std::io;
use std::path::Path;
use weakkam_core::aubry::Cluster;
use weakkam_core::flow::{EquilibriumInfo, EquilibriumScan, PhaseCloud};
use weakkam_core::grid::GridFunction;

/// serde_json formatter printing every float with 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to JSON with 17-significant-digit floats (compact layout).
pub fn to_json_17<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser).expect("JSON serialization");
    let mut s = String::from_utf8(out).expect("UTF-8 JSON");
    s.push('\n');
    s
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Field CSV plus its JSON header (`<name>.csv`, `<name>.meta.json`).
pub fn write_field<const D: usize>(dir: &Path, name: &str, field: &GridFunction<D>) -> Result<()> {
    write_text(dir, &format!("{name}.csv"), &field.to_csv())?;
    write_text(dir, &format!("{name}.meta.json"), &field.meta_json(name))
}

/// Phase cloud as `x..., p...` rows.
pub fn cloud_csv<const D: usize>(cloud: &PhaseCloud<D>) -> String {
    let mut out = String::new();
    for a in 0..D {
        out.push_str(&format!("x{a},"));
    }
    for a in 0..D {
        out.push_str(&format!("p{a}"));
        out.push(if a + 1 == D { '\n' } else { ',' });
    }
    for (x, p) in &cloud.points {
        for a in 0..D {
            out.push_str(&format!("{:.16e},", x[a]));
        }
        for a in 0..D {
            out.push_str(&format!("{:.16e}", p[a]));
            out.push(if a + 1 == D { '\n' } else { ',' });
        }
    }
    out
}

#[derive(Serialize)]
struct EquilibriumJson {
    x: Vec<f64>,
    p: Vec<f64>,
    eigenvalues: Vec<[f64; 2]>,
    mu_min_positive: Option<f64>,
    classification: weakkam_core::flow::Classification,
}

#[derive(Serialize)]
struct EquilibriaJson {
    continuum: bool,
    found: usize,
    equilibria: Vec<EquilibriumJson>,
}

/// Equilibrium scan as JSON (eigenvalues as [re, im] pairs).
pub fn equilibria_json<const D: usize>(scan: &EquilibriumScan<D>) -> String {
    let doc = match scan {
        EquilibriumScan::Continuum { found, .. } => EquilibriaJson {
            continuum: true,
            found: *found,
            equilibria: Vec::new(),
        },
        EquilibriumScan::Isolated(list) => EquilibriaJson {
            continuum: false,
            found: list.len(),
            equilibria: list.iter().map(equilibrium_json).collect(),
        },
    };
    to_json_17(&doc)
}

fn equilibrium_json<const D: usize>(eq: &EquilibriumInfo<D>) -> EquilibriumJson {
    EquilibriumJson {
        x: eq.location.0.to_vec(),
        p: eq.location.1.to_vec(),
        eigenvalues: eq.eigenvalues.iter().map(|e| [e.re, e.im]).collect(),
        mu_min_positive: eq.mu_min_positive,
        classification: eq.classification,
    }
}

#[derive(Serialize)]
struct AubryJson {
    points: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    clusters: Vec<ClusterJson>,
}

#[derive(Serialize)]
struct ClusterJson {
    center: Vec<f64>,
    members: usize,
}

/// Aubry candidate list with residuals and clusters as JSON.
pub fn aubry_json<const D: usize>(
    points: &[[f64; D]],
    residuals: &[f64],
    clusters: &[Cluster<D>],
) -> String {
    let doc = AubryJson {
        points: points.iter().map(|p| p.to_vec()).collect(),
        residuals: residuals.to_vec(),
        clusters: clusters
            .iter()
            .map(|c| ClusterJson {
                center: c.center.to_vec(),
                members: c.members,
            })
            .collect(),
    };
    to_json_17(&doc)
}

/// Two-column rate table `t, e_t`.
pub fn rate_csv(times: &[f64], errors: &[f64]) -> String {
    let mut out = String::from("t,e_t\n");
    for (t, e) in times.iter().zip(errors) {
        out.push_str(&format!("{t:.16e},{e:.16e}\n"));
    }
    out
}
