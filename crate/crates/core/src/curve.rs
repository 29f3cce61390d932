//! Closed plane curves sampled at periodic, Lagrangian nodes.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

pub const MIN_NODES: usize = 16;
/// Smallest admissible ratio of shortest to longest edge.
pub const MIN_SPACING_RATIO: f64 = 0.05;

/// Closed polygon `X_0, …, X_{N-1}` (node `N` ≡ node `0`) at flow time `time`.
///
/// `node_ids` label material points; they travel with the nodes and are never
/// renumbered by the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    nodes: Vec<Point>,
    node_ids: Vec<usize>,
    time: f64,
}

impl DiscreteCurve {
    /// Builds and validates a curve with ids `0..N`.
    pub fn new(nodes: Vec<Point>, time: f64) -> Result<Self> {
        let ids = (0..nodes.len()).collect();
        Self::with_ids(nodes, ids, time)
    }

    pub fn with_ids(nodes: Vec<Point>, node_ids: Vec<usize>, time: f64) -> Result<Self> {
        if node_ids.len() != nodes.len() {
            return Err(Error::Input(format!(
                "{} node ids for {} nodes",
                node_ids.len(),
                nodes.len()
            )));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::Input(format!("curve time must be finite and nonnegative, got {time}")));
        }
        let curve = DiscreteCurve { nodes, node_ids, time };
        curve.validate()?;
        Ok(curve)
    }

    /// Replaces node positions keeping ids, then validates.
    pub fn moved(&self, nodes: Vec<Point>, time: f64) -> Result<Self> {
        Self::with_ids(nodes, self.node_ids.clone(), time)
    }

    pub fn circle(radius: f64, n: usize) -> Result<Self> {
        Self::circle_at(radius, Point::zeros(), n)
    }

    pub fn circle_at(radius: f64, center: Point, n: usize) -> Result<Self> {
        Self::parametric(n, |th| center + radius * Point::new(th.cos(), th.sin()))
    }

    /// `(a cos θ, b sin θ)` at uniform θ.
    pub fn ellipse(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::parametric(n, |th| Point::new(a * th.cos(), b * th.sin()))
    }

    /// Polar curve `r(φ) = radius·(1 + Σ amp_k cos(kφ))` at uniform φ.
    pub fn polar(radius: f64, harmonics: &[(u32, f64)], n: usize) -> Result<Self> {
        Self::parametric(n, |th| polar_point(radius, harmonics, th))
    }

    /// Samples `param(2πi/N)` for `i = 0..N`.
    pub fn parametric(n: usize, param: impl Fn(f64) -> Point) -> Result<Self> {
        let nodes = (0..n).map(|i| param(TAU * i as f64 / n as f64)).collect();
        Self::new(nodes, 0.0)
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node with periodic indexing.
    pub fn node(&self, i: isize) -> Point {
        let n = self.nodes.len() as isize;
        self.nodes[i.rem_euclid(n) as usize]
    }

    /// Position of the node carrying `id`.
    pub fn index_of(&self, id: usize) -> Option<usize> {
        // ids equal indices unless the caller supplied custom labels
        if self.node_ids.get(id) == Some(&id) {
            return Some(id);
        }
        self.node_ids.iter().position(|&x| x == id)
    }

    /// Length of edge `X_i → X_{i+1}`.
    pub fn spacing(&self, i: usize) -> f64 {
        let n = self.nodes.len();
        (self.nodes[(i + 1) % n] - self.nodes[i]).norm()
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.nodes.len()).map(|i| self.spacing(i)).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(0.0, f64::max)
    }

    pub fn length(&self) -> f64 {
        self.spacings().iter().sum()
    }

    /// Shoelace area; positive for counter-clockwise node order.
    pub fn signed_area(&self) -> f64 {
        let n = self.nodes.len();
        0.5 * (0..n)
            .map(|i| {
                let (p, q) = (self.nodes[i], self.nodes[(i + 1) % n]);
                p.x * q.y - q.x * p.y
            })
            .sum::<f64>()
    }

    pub fn centroid(&self) -> Point {
        self.nodes.iter().sum::<Point>() / self.nodes.len() as f64
    }

    /// Mean distance of the nodes to their centroid.
    pub fn mean_radius(&self) -> f64 {
        let c = self.centroid();
        self.nodes.iter().map(|p| (p - c).norm()).sum::<f64>() / self.nodes.len() as f64
    }

    /// Mesh guards: `N ≥ 16`, finite nodes, positive edges, and
    /// `min spacing / max spacing ≥ 0.05`.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n < MIN_NODES {
            return Err(Error::DegenerateMesh {
                index: 0,
                reason: format!("{n} nodes, at least {MIN_NODES} required"),
            });
        }
        if let Some(i) = self.nodes.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::DegenerateMesh {
                index: i,
                reason: "non-finite node".into(),
            });
        }
        let spacings = self.spacings();
        let (mut imin, mut imax) = (0, 0);
        for (i, &s) in spacings.iter().enumerate() {
            if s < spacings[imin] {
                imin = i;
            }
            if s > spacings[imax] {
                imax = i;
            }
        }
        if spacings[imin] <= 0.0 {
            return Err(Error::DegenerateMesh {
                index: imin,
                reason: "coincident adjacent nodes".into(),
            });
        }
        let ratio = spacings[imin] / spacings[imax];
        if ratio < MIN_SPACING_RATIO {
            return Err(Error::DegenerateMesh {
                index: imin,
                reason: format!("spacing ratio {ratio:.4} below {MIN_SPACING_RATIO}"),
            });
        }
        if self.signed_area() == 0.0 {
            return Err(Error::DegenerateMesh {
                index: 0,
                reason: "zero enclosed area".into(),
            });
        }
        Ok(())
    }
}

fn polar_point(radius: f64, harmonics: &[(u32, f64)], th: f64) -> Point {
    let r = radius * (1.0 + harmonics.iter().map(|&(k, amp)| amp * (k as f64 * th).cos()).sum::<f64>());
    r * Point::new(th.cos(), th.sin())
}

/// Initial-curve description as stored in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Circle {
        radius: f64,
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    Ellipse {
        a: f64,
        b: f64,
        n: usize,
    },
    /// `r(φ) = radius·(1 + Σ amp·cos(kφ))`, harmonics given as `[k, amp]`.
    Polar {
        radius: f64,
        harmonics: Vec<(u32, f64)>,
        n: usize,
    },
    Nodes {
        points: Vec<[f64; 2]>,
    },
}

impl CurveSpec {
    pub fn node_count(&self) -> usize {
        match self {
            CurveSpec::Circle { n, .. } | CurveSpec::Ellipse { n, .. } | CurveSpec::Polar { n, .. } => *n,
            CurveSpec::Nodes { points } => points.len(),
        }
    }

    /// Same shape at a different resolution; `None` for explicit node lists.
    pub fn with_nodes(&self, n_new: usize) -> Option<CurveSpec> {
        let mut spec = self.clone();
        match &mut spec {
            CurveSpec::Circle { n, .. } | CurveSpec::Ellipse { n, .. } | CurveSpec::Polar { n, .. } => *n = n_new,
            CurveSpec::Nodes { .. } => return None,
        }
        Some(spec)
    }

    /// Field-level sanity checks; the error names the offending field.
    pub fn check(&self, prefix: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{prefix}.{name}"), format!("must be positive, got {v}")))
            }
        };
        let count = |n: usize| {
            if n >= MIN_NODES {
                Ok(())
            } else {
                Err(Error::config(format!("{prefix}.n"), format!("need at least {MIN_NODES} nodes, got {n}")))
            }
        };
        match self {
            CurveSpec::Circle { radius, n, .. } => {
                positive("radius", *radius)?;
                count(*n)
            }
            CurveSpec::Ellipse { a, b, n } => {
                positive("a", *a)?;
                positive("b", *b)?;
                count(*n)
            }
            CurveSpec::Polar { radius, n, .. } => {
                positive("radius", *radius)?;
                count(*n)
            }
            CurveSpec::Nodes { points } => {
                if points.len() < MIN_NODES {
                    return Err(Error::config(
                        format!("{prefix}.points"),
                        format!("need at least {MIN_NODES} points, got {}", points.len()),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Builds the curve at `t = 0`.
    pub fn build(&self) -> Result<DiscreteCurve> {
        self.build_jittered(0.0, 0)
    }

    /// Builds the curve with the parameter of every node displaced by a
    /// uniform random fraction in `[-jitter/2, jitter/2]` of the parameter
    /// step. Nodes stay on the exact shape. Explicit node lists are not
    /// jittered.
    pub fn build_jittered(&self, jitter: f64, seed: u64) -> Result<DiscreteCurve> {
        let n = self.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets: Vec<f64> = (0..n)
            .map(|_| if jitter > 0.0 { jitter * (rng.random::<f64>() - 0.5) } else { 0.0 })
            .collect();
        let theta = |i: usize| TAU * (i as f64 + offsets[i]) / n as f64;
        let nodes: Vec<Point> = match self {
            CurveSpec::Circle { radius, center, .. } => {
                let c = center.map(Point::from).unwrap_or_else(Point::zeros);
                (0..n).map(|i| c + *radius * Point::new(theta(i).cos(), theta(i).sin())).collect()
            }
            CurveSpec::Ellipse { a, b, .. } => (0..n).map(|i| Point::new(a * theta(i).cos(), b * theta(i).sin())).collect(),
            CurveSpec::Polar { radius, harmonics, .. } => (0..n).map(|i| polar_point(*radius, harmonics, theta(i))).collect(),
            CurveSpec::Nodes { points } => points.iter().map(|&p| Point::from(p)).collect(),
        };
        DiscreteCurve::new(nodes, 0.0)
    }
}
