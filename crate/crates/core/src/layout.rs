//! Kamada-Kawai layout of the dataset graph: each dataset is a node and the
//! pairwise distances are the target edge lengths.
//!
//! The stress minimized is `Σ_{i<j} k_ij (‖p_i − p_j‖ − d_ij)²` with
//! `k_ij = 1 / d_ij²`. Nodes are moved one at a time with a 2×2 Newton step
//! (gradient step when the local Hessian is not positive definite), and a
//! move is only accepted if the total stress does not increase.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::DistanceMatrix;
use crate::error::{Error, Result};
use crate::svg::{self, SvgDoc};

/// Convergence threshold on the largest per-node gradient norm, measured on
/// distances scaled so the largest target is 1.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_PASSES: usize = 1000;
/// Zero targets are raised to this fraction of the largest target.
pub const DISTANCE_FLOOR: f64 = 1e-6;
const JITTER: f64 = 1e-3;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutCoordinates {
    pub labels: Vec<String>,
    pub positions: Vec<[f64; 2]>,
    pub final_stress: f64,
    /// Stress at initialization followed by the stress after each pass.
    pub stress_history: Vec<f64>,
    pub passes: usize,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct LayoutJson {
    labels: Vec<String>,
    positions: Vec<[f64; 2]>,
    stress: f64,
}

impl LayoutCoordinates {
    /// `{"labels": [...], "positions": [[x, y], ...], "stress": s}`.
    pub fn to_json(&self) -> Result<String> {
        let doc = LayoutJson {
            labels: self.labels.clone(),
            positions: self.positions.clone(),
            stress: self.final_stress,
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LayoutJson = serde_json::from_str(text)?;
        if doc.labels.len() != doc.positions.len() {
            return Err(Error::LabelMismatch(format!(
                "{} labels, {} positions",
                doc.labels.len(),
                doc.positions.len()
            )));
        }
        Ok(LayoutCoordinates {
            labels: doc.labels,
            positions: doc.positions,
            final_stress: doc.stress,
            stress_history: vec![doc.stress],
            passes: 0,
            converged: true,
        })
    }

    /// Realized Euclidean distance between nodes `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Copy with every coordinate passed through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> LayoutCoordinates {
        LayoutCoordinates {
            positions: self.positions.iter().map(|p| [f(p[0]), f(p[1])]).collect(),
            final_stress: f(self.final_stress),
            ..self.clone()
        }
    }
}

/// Targets and spring constants in label-sorted order.
struct Problem {
    n: usize,
    target: Vec<f64>,
    spring: Vec<f64>,
}

impl Problem {
    fn stress(&self, pos: &[[f64; 2]]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let r = dist(pos[i], pos[j]);
                let e = r - self.target[i * self.n + j];
                s += self.spring[i * self.n + j] * e * e;
            }
        }
        s
    }

    /// Gradient and Hessian of the stress with respect to node `m`.
    fn local_derivatives(&self, pos: &[[f64; 2]], m: usize) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for j in 0..self.n {
            if j == m {
                continue;
            }
            let dx = pos[m][0] - pos[j][0];
            let dy = pos[m][1] - pos[j][1];
            let r = dx.hypot(dy);
            if r < 1e-300 {
                continue;
            }
            let k = 2.0 * self.spring[m * self.n + j];
            let d = self.target[m * self.n + j];
            let ratio = d / r;
            g[0] += k * (1.0 - ratio) * dx;
            g[1] += k * (1.0 - ratio) * dy;
            let c = d / (r * r * r);
            h[0][0] += k * (1.0 - ratio + c * dx * dx);
            h[1][1] += k * (1.0 - ratio + c * dy * dy);
            h[0][1] += k * c * dx * dy;
        }
        h[1][0] = h[0][1];
        (g, h)
    }

    fn spring_sum(&self, m: usize) -> f64 {
        (0..self.n)
            .filter(|&j| j != m)
            .map(|j| 2.0 * self.spring[m * self.n + j])
            .sum()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Lays out the matrix's datasets in the plane.
///
/// Off-diagonal entries are the targets; the diagonal is ignored. Targets
/// below `DISTANCE_FLOOR × max` are raised to that floor. Nodes start on a
/// circle in label order with a seeded jitter, and are processed in label
/// order, so permuting the matrix does not change the realized distances.
/// The result is centered, rotated to put node 0 on the positive x axis, and
/// reflected so node 1 has `y ≥ 0`.
pub fn kamada_kawai_layout(m: &DistanceMatrix, seed: u64) -> Result<LayoutCoordinates> {
    let n = m.len();
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m.labels()[a].cmp(&m.labels()[b]));

    let mut max_target = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_target = max_target.max(m.get(i, j));
        }
    }
    if max_target <= 0.0 || !max_target.is_finite() {
        return Err(Error::NonPositiveDistance {
            left: m.labels()[0].clone(),
            right: m.labels()[1].clone(),
        });
    }

    // work in label order on targets scaled to max 1
    let floor = DISTANCE_FLOOR;
    let mut target = vec![0.0; n * n];
    let mut spring = vec![0.0; n * n];
    for (a, &i) in order.iter().enumerate() {
        for (b, &j) in order.iter().enumerate() {
            if a != b {
                let d = (m.get(i, j) / max_target).max(floor);
                target[a * n + b] = d;
                spring[a * n + b] = 1.0 / (d * d);
            }
        }
    }
    let problem = Problem { n, target, spring };

    let radius = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / n as f64;
            let jx: f64 = rng.gen_range(-1.0..1.0);
            let jy: f64 = rng.gen_range(-1.0..1.0);
            [
                radius * angle.cos() + JITTER * radius * jx,
                radius * angle.sin() + JITTER * radius * jy,
            ]
        })
        .collect();

    let mut stress = problem.stress(&pos);
    let mut history = vec![stress];
    let mut converged = false;
    let mut passes = 0;
    while passes < MAX_PASSES {
        let max_grad = (0..n)
            .map(|k| norm(problem.local_derivatives(&pos, k).0))
            .fold(0.0, f64::max);
        if max_grad <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        passes += 1;
        for node in 0..n {
            stress = relax_node(&problem, &mut pos, node, stress);
        }
        history.push(stress);
    }
    if !converged {
        let max_grad = (0..n)
            .map(|k| norm(problem.local_derivatives(&pos, k).0))
            .fold(0.0, f64::max);
        converged = max_grad <= GRADIENT_TOLERANCE;
        if !converged {
            log::warn!("layout stopped after {MAX_PASSES} passes, max gradient {max_grad:e}");
        }
    }

    // back to input order and original scale
    let mut out = vec![[0.0; 2]; n];
    for (a, &i) in order.iter().enumerate() {
        out[i] = [pos[a][0] * max_target, pos[a][1] * max_target];
    }
    canonicalize(&mut out);
    Ok(LayoutCoordinates {
        labels: m.labels().to_vec(),
        positions: out,
        final_stress: stress,
        stress_history: history,
        passes,
        converged,
    })
}

/// One Newton (or gradient) move of `node` with step halving; returns the
/// new total stress, never larger than `stress`.
fn relax_node(problem: &Problem, pos: &mut [[f64; 2]], node: usize, stress: f64) -> f64 {
    let (g, h) = problem.local_derivatives(pos, node);
    if norm(g) <= GRADIENT_TOLERANCE * 1e-3 {
        return stress;
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let step = if det > 0.0 && h[0][0] > 0.0 {
        [
            -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
            -(h[0][0] * g[1] - h[1][0] * g[0]) / det,
        ]
    } else {
        let scale = problem.spring_sum(node);
        [-g[0] / scale, -g[1] / scale]
    };
    let origin = pos[node];
    let mut t = 1.0;
    for _ in 0..MAX_HALVINGS {
        pos[node] = [origin[0] + t * step[0], origin[1] + t * step[1]];
        let candidate = problem.stress(pos);
        if candidate <= stress {
            return candidate;
        }
        t *= 0.5;
    }
    pos[node] = origin;
    stress
}

fn canonicalize(pos: &mut [[f64; 2]]) {
    let n = pos.len() as f64;
    let cx = pos.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pos.iter().map(|p| p[1]).sum::<f64>() / n;
    for p in pos.iter_mut() {
        p[0] -= cx;
        p[1] -= cy;
    }
    let r0 = norm(pos[0]);
    if r0 > 0.0 {
        let (cos, sin) = (pos[0][0] / r0, pos[0][1] / r0);
        for p in pos.iter_mut() {
            let (x, y) = (p[0], p[1]);
            p[0] = cos * x + sin * y;
            p[1] = -sin * x + cos * y;
        }
        pos[0][1] = 0.0;
    }
    if pos.len() > 1 && pos[1][1] < 0.0 {
        for p in pos.iter_mut() {
            p[1] = -p[1];
        }
    }
}

/// Reads a `label,css_color` CSV. A leading `label,css_color` header is
/// optional.
pub fn load_color_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", rec.len())));
        }
        if line == 1 && &rec[0] == "label" && &rec[1] == "css_color" {
            continue;
        }
        let color = &rec[1];
        let valid = !color.is_empty()
            && color
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "#(),.% ".contains(c));
        if !valid {
            return Err(parse_err(format!("invalid css color '{color}'")));
        }
        out.insert(rec[0].to_string(), color.to_string());
    }
    Ok(out)
}

const DEFAULT_NODE_COLOR: &str = "#4c72b0";

/// Node scatter with labels. `colors` maps labels to CSS colors; unmapped
/// nodes use a default color.
pub fn layout_svg(
    lc: &LayoutCoordinates,
    m: &DistanceMatrix,
    colors: Option<&BTreeMap<String, String>>,
) -> Result<String> {
    if lc.labels != m.labels() {
        return Err(Error::LabelMismatch(
            "layout labels differ from matrix labels".into(),
        ));
    }
    let (size, margin) = (600.0, 60.0);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in &lc.positions {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let scale = (size - 2.0 * margin) / span;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let sx = |x: f64| size / 2.0 + (x - cx) * scale;
    let sy = |y: f64| size / 2.0 - (y - cy) * scale;

    let mut doc = SvgDoc::new(size, size);
    let title = match m.metric() {
        Some(metric) => format!("{metric} layout, stress {:.3e}", lc.final_stress),
        None => format!("layout, stress {:.3e}", lc.final_stress),
    };
    doc.text(10.0, 18.0, 12.0, "", &title);
    for (label, p) in lc.labels.iter().zip(&lc.positions) {
        let fill = colors
            .and_then(|c| c.get(label))
            .map_or(DEFAULT_NODE_COLOR, String::as_str);
        let (x, y) = (sx(p[0]), sy(p[1]));
        doc.circle(x, y, 6.0, fill, r##" stroke="#222" stroke-width="0.5""##);
        doc.text(x + 8.0, y - 8.0, 10.0, "", label);
    }
    Ok(doc.finish())
}

pub fn export_layout(
    lc: &LayoutCoordinates,
    m: &DistanceMatrix,
    path: impl AsRef<Path>,
    colors: Option<&BTreeMap<String, String>>,
) -> Result<()> {
    let text = layout_svg(lc, m, colors)?;
    svg::write_atomic(path.as_ref(), text.as_bytes())
}
