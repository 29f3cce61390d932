//! Discrete differential geometry of closed plane curves.
//!
//! Nodes are taken at a uniform parameter `θ` with step `dθ = 2π/N`.
//! Coordinate quantities (`g`, `h_θθ`) use periodic three-point stencils in
//! the node index; arclength quantities use the non-uniform three-point
//! stencils built from the adjacent edge lengths.
//!
//! The metric is sampled as `g = |X_{i+1} − X_i|·|X_i − X_{i−1}| / dθ²`,
//! a second-order approximation of `|∂_θF|²` that makes `H = h_θθ / g`
//! exact on uniformly sampled circles.

use std::f64::consts::TAU;

use crate::curve::{DiscreteCurve, Point};
use crate::error::{Error, Result};
use crate::weights::Weight;

/// Per-node geometric data of a curve under a given weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryStack {
    pub d_theta: f64,
    pub tangent: Vec<Point>,
    /// Unit outward normal.
    pub normal: Vec<Point>,
    pub metric_g: Vec<f64>,
    /// `h_θθ = −⟨N, ∂²_θF⟩`.
    pub sff_h: Vec<f64>,
    /// Mean curvature `g⁻¹h_θθ`; positive on convex curves.
    pub curvature: Vec<f64>,
    /// `H_f = H − ⟨∇̄f, N⟩`.
    pub hf: Vec<f64>,
    pub dhf_ds: Vec<f64>,
    pub lap_hf: Vec<f64>,
    /// `L H_f = Δ H_f − ⟨∇̄f, ∇H_f⟩`.
    pub l_hf: Vec<f64>,
    /// `∇̄²f(N, N)`.
    pub hess_nn: Vec<f64>,
    /// `L H_f + (|h|² + ∇̄²f(N,N)) H_f`.
    pub dt_hf_rhs: Vec<f64>,
}

impl GeometryStack {
    pub fn len(&self) -> usize {
        self.hf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hf.is_empty()
    }

    /// `|h|² / H_f²` at node `i` (for curves `|h|² = H²`).
    pub fn pinch_ratio(&self, i: usize) -> f64 {
        let h = self.curvature[i];
        h * h / (self.hf[i] * self.hf[i])
    }
}

/// `+1` for counter-clockwise node order, `−1` otherwise.
pub fn orientation(curve: &DiscreteCurve) -> f64 {
    if curve.signed_area() >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Normalized central-difference tangents.
pub fn unit_tangents(curve: &DiscreteCurve) -> Vec<Point> {
    let n = curve.len() as isize;
    (0..n)
        .map(|i| {
            let d = curve.node(i + 1) - curve.node(i - 1);
            d / d.norm()
        })
        .collect()
}

/// Tangent rotated by −90°, flipped for clockwise curves so it points
/// outward either way.
fn outward_normal(tangent: &Point, sign: f64) -> Point {
    sign * Point::new(tangent.y, -tangent.x)
}

/// Outward normals and `H_f` only; the part of the geometry needed to move
/// the nodes.
pub fn normal_speed(curve: &DiscreteCurve, w: &dyn Weight<2>) -> (Vec<Point>, Vec<f64>) {
    let n = curve.len();
    let sign = orientation(curve);
    let mut normals = Vec::with_capacity(n);
    let mut hf = Vec::with_capacity(n);
    for i in 0..n as isize {
        let (prev, x, next) = (curve.node(i - 1), curve.node(i), curve.node(i + 1));
        let t = (next - prev).normalize();
        let nrm = outward_normal(&t, sign);
        let h = curvature_at(prev, x, next, &nrm);
        hf.push(h - w.grad(&x).dot(&nrm));
        normals.push(nrm);
    }
    (normals, hf)
}

/// `H = h_θθ / g`; the `dθ²` factors cancel.
fn curvature_at(prev: Point, x: Point, next: Point, normal: &Point) -> f64 {
    let second = next - 2.0 * x + prev;
    let g = (next - x).norm() * (x - prev).norm();
    -normal.dot(&second) / g
}

/// Assembles the full geometry stack.
pub fn build_geometry(curve: &DiscreteCurve, w: &dyn Weight<2>) -> Result<GeometryStack> {
    curve.validate()?;
    let n = curve.len();
    let d_theta = TAU / n as f64;
    let sign = orientation(curve);

    let mut tangent = Vec::with_capacity(n);
    let mut normal = Vec::with_capacity(n);
    let mut metric_g = Vec::with_capacity(n);
    let mut sff_h = Vec::with_capacity(n);
    let mut curvature = Vec::with_capacity(n);
    let mut hf = Vec::with_capacity(n);
    let mut hess_nn = Vec::with_capacity(n);
    for i in 0..n as isize {
        let (prev, x, next) = (curve.node(i - 1), curve.node(i), curve.node(i + 1));
        let t = (next - prev).normalize();
        let nrm = outward_normal(&t, sign);
        let g = (next - x).norm() * (x - prev).norm() / (d_theta * d_theta);
        let h = -nrm.dot(&(next - 2.0 * x + prev)) / (d_theta * d_theta);
        let k = h / g;
        tangent.push(t);
        normal.push(nrm);
        metric_g.push(g);
        sff_h.push(h);
        curvature.push(k);
        hf.push(k - w.grad(&x).dot(&nrm));
        hess_nn.push(nrm.dot(&(w.hessian(&x) * nrm)));
    }

    let dhf_ds = arclength_derivative(curve, &hf);
    let lap_hf = arclength_laplacian(curve, &hf);
    let l_hf = weighted_operator(curve, w, &tangent, &dhf_ds, &lap_hf);
    let dt_hf_rhs = (0..n)
        .map(|i| l_hf[i] + (curvature[i] * curvature[i] + hess_nn[i]) * hf[i])
        .collect();

    Ok(GeometryStack {
        d_theta,
        tangent,
        normal,
        metric_g,
        sff_h,
        curvature,
        hf,
        dhf_ds,
        lap_hf,
        l_hf,
        hess_nn,
        dt_hf_rhs,
    })
}

/// Edge lengths `(s₋, s₊)` on either side of node `i`.
fn adjacent_spacings(curve: &DiscreteCurve, i: usize) -> (f64, f64) {
    let n = curve.len();
    (curve.spacing((i + n - 1) % n), curve.spacing(i))
}

/// `∂_s φ` by the three-point stencil on the non-uniform arclength grid.
pub fn arclength_derivative(curve: &DiscreteCurve, field: &[f64]) -> Vec<f64> {
    let n = curve.len();
    assert_eq!(field.len(), n, "field length must match node count");
    (0..n)
        .map(|i| {
            let (h1, h2) = adjacent_spacings(curve, i);
            let (prev, mid, next) = (field[(i + n - 1) % n], field[i], field[(i + 1) % n]);
            (h1 * h1 * (next - mid) + h2 * h2 * (mid - prev)) / (h1 * h2 * (h1 + h2))
        })
        .collect()
}

/// `∂²_s φ` by the three-point stencil on the non-uniform arclength grid.
pub fn arclength_laplacian(curve: &DiscreteCurve, field: &[f64]) -> Vec<f64> {
    let n = curve.len();
    assert_eq!(field.len(), n, "field length must match node count");
    (0..n)
        .map(|i| {
            let (h1, h2) = adjacent_spacings(curve, i);
            let (prev, mid, next) = (field[(i + n - 1) % n], field[i], field[(i + 1) % n]);
            2.0 * (h1 * (next - mid) - h2 * (mid - prev)) / (h1 * h2 * (h1 + h2))
        })
        .collect()
}

fn weighted_operator(curve: &DiscreteCurve, w: &dyn Weight<2>, tangent: &[Point], d_s: &[f64], lap: &[f64]) -> Vec<f64> {
    curve
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, x)| lap[i] - w.grad(x).dot(&tangent[i]) * d_s[i])
        .collect()
}

/// `L φ = Δ_s φ − ⟨∇̄f, T⟩ ∂_s φ` for a scalar field sampled at the nodes.
pub fn weighted_laplacian(curve: &DiscreteCurve, w: &dyn Weight<2>, field: &[f64]) -> Result<Vec<f64>> {
    curve.validate()?;
    if field.len() != curve.len() {
        return Err(Error::Input(format!(
            "field has {} values for {} nodes",
            field.len(),
            curve.len()
        )));
    }
    let tangent = unit_tangents(curve);
    let d_s = arclength_derivative(curve, field);
    let lap = arclength_laplacian(curve, field);
    Ok(weighted_operator(curve, w, &tangent, &d_s, &lap))
}

/// Length of the shorter polygonal arc between nodes `i` and `j`.
///
/// # Panics
/// If either index is out of range.
pub fn intrinsic_distance(curve: &DiscreteCurve, i: usize, j: usize) -> f64 {
    let n = curve.len();
    assert!(i < n && j < n, "node index out of range");
    if i == j {
        return 0.0;
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let forward: f64 = (lo..hi).map(|k| curve.spacing(k)).sum();
    let total = curve.length();
    forward.min(total - forward)
}

/// Centered first derivative in the node parameter.
pub fn theta_derivative(field: &[f64], d_theta: f64) -> Vec<f64> {
    let n = field.len();
    (0..n)
        .map(|i| (field[(i + 1) % n] - field[(i + n - 1) % n]) / (2.0 * d_theta))
        .collect()
}

/// Centered second derivative in the node parameter.
pub fn theta_second_derivative(field: &[f64], d_theta: f64) -> Vec<f64> {
    let n = field.len();
    (0..n)
        .map(|i| (field[(i + 1) % n] - 2.0 * field[i] + field[(i + n - 1) % n]) / (d_theta * d_theta))
        .collect()
}
