//! Ambient weight functions `f` on ℝ^d.
//!
//! Verification runs use [`WeightField`], the quadratic class
//! `f(x) = c₀ + b·x + ½ xᵀAx`, whose derivatives are exact and whose third
//! derivative vanishes identically. [`ExploratoryWeight`] accepts an arbitrary
//! closure and differentiates it numerically; anything computed with it is
//! flagged as violating the vanishing-third-derivative hypothesis.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::curve::DiscreteCurve;
use crate::error::{Error, Result};
use crate::geometry;

/// Orthonormality tolerance for tangent frames.
pub const FRAME_TOL: f64 = 1e-12;

/// Common interface of ambient weights.
pub trait Weight<const D: usize>: Send + Sync {
    fn value(&self, x: &SVector<f64, D>) -> f64;
    fn grad(&self, x: &SVector<f64, D>) -> SVector<f64, D>;
    fn hessian(&self, x: &SVector<f64, D>) -> SMatrix<f64, D, D>;
    /// True when ∇̄³f ≡ 0 holds by construction.
    fn third_derivative_vanishes(&self) -> bool;
    /// Upper bound on the spectral norm of the Hessian, used for step-size
    /// selection. `None` when the bound is not known globally.
    fn hessian_norm_bound(&self) -> Option<f64>;
}

/// Quadratic weight `f(x) = c₀ + b·x + ½ xᵀAx` with `A` exactly symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightField<const D: usize> {
    c0: f64,
    b: SVector<f64, D>,
    a: SMatrix<f64, D, D>,
}

pub type PlaneWeight = WeightField<2>;

impl<const D: usize> WeightField<D> {
    /// Builds a weight, rejecting any `A` that is not entrywise symmetric.
    pub fn new(c0: f64, b: SVector<f64, D>, a: SMatrix<f64, D, D>) -> Result<Self> {
        for i in 0..D {
            for j in (i + 1)..D {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::Weight(format!(
                        "A is not symmetric: A[{i}][{j}] = {} but A[{j}][{i}] = {}",
                        a[(i, j)],
                        a[(j, i)]
                    )));
                }
            }
        }
        let finite = c0.is_finite() && b.iter().all(|v| v.is_finite()) && a.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Weight("coefficients must be finite".into()));
        }
        Ok(WeightField { c0, b, a })
    }

    /// `f ≡ 0`; the flow reduces to plain mean curvature flow.
    pub fn zero() -> Self {
        WeightField {
            c0: 0.0,
            b: SVector::zeros(),
            a: SMatrix::zeros(),
        }
    }

    pub fn constant(c0: f64) -> Self {
        WeightField { c0, ..Self::zero() }
    }

    pub fn linear(b: SVector<f64, D>) -> Self {
        WeightField { b, ..Self::zero() }
    }

    /// `f = c|x|²/2`.
    pub fn isotropic(c: f64) -> Self {
        WeightField {
            a: SMatrix::identity() * c,
            ..Self::zero()
        }
    }

    pub fn diagonal(diag: SVector<f64, D>) -> Self {
        WeightField {
            a: SMatrix::from_diagonal(&diag),
            ..Self::zero()
        }
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn b(&self) -> &SVector<f64, D> {
        &self.b
    }

    pub fn a(&self) -> &SMatrix<f64, D, D> {
        &self.a
    }

    pub fn eval(&self, x: &SVector<f64, D>) -> f64 {
        self.c0 + self.b.dot(x) + 0.5 * x.dot(&(self.a * x))
    }

    pub fn grad_at(&self, x: &SVector<f64, D>) -> SVector<f64, D> {
        self.b + self.a * x
    }

    /// True when `b = 0` and `A = 0`, i.e. `f` is constant.
    pub fn is_constant(&self) -> bool {
        self.b.iter().all(|&v| v == 0.0) && self.a.iter().all(|&v| v == 0.0)
    }

    /// Returns `c` when `A = cI` and `b = 0`.
    pub fn isotropic_coefficient(&self) -> Option<f64> {
        if self.b.iter().any(|&v| v != 0.0) {
            return None;
        }
        let c = self.a[(0, 0)];
        (self.a == SMatrix::<f64, D, D>::identity() * c).then_some(c)
    }

    /// Restriction of `A` to the span of an orthonormal tangent frame:
    /// entry `(a, b)` is `t_aᵀ A t_b`.
    pub fn tangential_hessian(&self, frame: &[SVector<f64, D>]) -> Result<DMatrix<f64>> {
        check_orthonormal(frame)?;
        let k = frame.len();
        Ok(DMatrix::from_fn(k, k, |i, j| frame[i].dot(&(self.a * frame[j]))))
    }

    /// Eigenvalues of `A`, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let dynamic = DMatrix::from_column_slice(D, D, self.a.as_slice());
        let mut ev: Vec<f64> = dynamic.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Rigid rotation of the weight: `(b, A) ↦ (Qb, QAQᵀ)`.
    pub fn rotated(&self, q: &SMatrix<f64, D, D>) -> Self {
        let mut a = q * self.a * q.transpose();
        // restore exact symmetry lost to rounding
        for i in 0..D {
            for j in (i + 1)..D {
                let m = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = m;
                a[(j, i)] = m;
            }
        }
        WeightField {
            c0: self.c0,
            b: q * self.b,
            a,
        }
    }
}

impl<const D: usize> Default for WeightField<D> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<const D: usize> Weight<D> for WeightField<D> {
    fn value(&self, x: &SVector<f64, D>) -> f64 {
        self.eval(x)
    }

    fn grad(&self, x: &SVector<f64, D>) -> SVector<f64, D> {
        self.grad_at(x)
    }

    fn hessian(&self, _x: &SVector<f64, D>) -> SMatrix<f64, D, D> {
        self.a
    }

    fn third_derivative_vanishes(&self) -> bool {
        true
    }

    fn hessian_norm_bound(&self) -> Option<f64> {
        Some(self.eigenvalues().iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }
}

fn check_orthonormal<const D: usize>(frame: &[SVector<f64, D>]) -> Result<()> {
    if frame.is_empty() || frame.len() >= D {
        return Err(Error::Frame(format!(
            "expected between 1 and {} tangent vectors, got {}",
            D - 1,
            frame.len()
        )));
    }
    for (i, u) in frame.iter().enumerate() {
        if (u.norm() - 1.0).abs() > FRAME_TOL {
            return Err(Error::Frame(format!("vector {i} has norm {}", u.norm())));
        }
        for (j, v) in frame.iter().enumerate().skip(i + 1) {
            if u.dot(v).abs() > FRAME_TOL {
                return Err(Error::Frame(format!("vectors {i} and {j} have inner product {}", u.dot(v))));
            }
        }
    }
    Ok(())
}

/// Extremes of the tangential Hessian eigenvalues over a sampled surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianBounds {
    pub lambda: f64,
    pub mu: f64,
}

/// λ = max and μ = min over nodes of the tangential Hessian `tᵀ∇̄²f t`.
///
/// For plane curves the tangential Hessian is 1×1, so its only eigenvalue is
/// the Rayleigh quotient along the unit tangent.
pub fn hessian_bounds(w: &dyn Weight<2>, curve: &DiscreteCurve) -> HessianBounds {
    let tangents = geometry::unit_tangents(curve);
    let mut lambda = f64::NEG_INFINITY;
    let mut mu = f64::INFINITY;
    for (x, t) in curve.nodes().iter().zip(&tangents) {
        let q = t.dot(&(w.hessian(x) * t));
        lambda = lambda.max(q);
        mu = mu.min(q);
    }
    HessianBounds { lambda, mu }
}

/// Weight backed by an arbitrary closure, differentiated by central
/// differences. Never satisfies the vanishing-third-derivative hypothesis.
#[derive(Clone)]
pub struct ExploratoryWeight<const D: usize> {
    f: Arc<dyn Fn(&SVector<f64, D>) -> f64 + Send + Sync>,
    step: f64,
}

impl<const D: usize> ExploratoryWeight<D> {
    pub fn new(f: impl Fn(&SVector<f64, D>) -> f64 + Send + Sync + 'static) -> Self {
        ExploratoryWeight { f: Arc::new(f), step: 1e-4 }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }
}

impl<const D: usize> fmt::Debug for ExploratoryWeight<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExploratoryWeight").field("step", &self.step).finish_non_exhaustive()
    }
}

impl<const D: usize> Weight<D> for ExploratoryWeight<D> {
    fn value(&self, x: &SVector<f64, D>) -> f64 {
        (self.f)(x)
    }

    fn grad(&self, x: &SVector<f64, D>) -> SVector<f64, D> {
        let h = self.step;
        SVector::from_fn(|i, _| {
            let mut e = SVector::<f64, D>::zeros();
            e[i] = h;
            ((self.f)(&(x + e)) - (self.f)(&(x - e))) / (2.0 * h)
        })
    }

    fn hessian(&self, x: &SVector<f64, D>) -> SMatrix<f64, D, D> {
        let h = self.step;
        let unit = |i: usize| {
            let mut e = SVector::<f64, D>::zeros();
            e[i] = h;
            e
        };
        let f = &self.f;
        let m = SMatrix::<f64, D, D>::from_fn(|i, j| {
            let (ei, ej) = (unit(i), unit(j));
            (f(&(x + ei + ej)) - f(&(x + ei - ej)) - f(&(x - ei + ej)) + f(&(x - ei - ej))) / (4.0 * h * h)
        });
        0.5 * (m + m.transpose())
    }

    fn third_derivative_vanishes(&self) -> bool {
        false
    }

    fn hessian_norm_bound(&self) -> Option<f64> {
        None
    }
}

/// On-disk form: `{"c0": .., "b": [..], "A": [..]}` with `A` row-major,
/// either flat (`d*d` numbers) or nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightRepr {
    #[serde(default)]
    c0: f64,
    #[serde(default)]
    b: Option<Vec<f64>>,
    #[serde(rename = "A", default)]
    a: Option<MatrixRepr>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl<const D: usize> TryFrom<WeightRepr> for WeightField<D> {
    type Error = Error;

    fn try_from(r: WeightRepr) -> Result<Self> {
        let b = match r.b {
            None => SVector::zeros(),
            Some(v) if v.len() == D => SVector::from_column_slice(&v),
            Some(v) => return Err(Error::Weight(format!("b has {} entries, expected {D}", v.len()))),
        };
        let flat = match r.a {
            None => vec![0.0; D * D],
            Some(MatrixRepr::Flat(v)) => v,
            Some(MatrixRepr::Rows(rows)) => {
                if rows.len() != D || rows.iter().any(|row| row.len() != D) {
                    return Err(Error::Weight(format!("A must be {D}x{D}")));
                }
                rows.concat()
            }
        };
        if flat.len() != D * D {
            return Err(Error::Weight(format!("A has {} entries, expected {}", flat.len(), D * D)));
        }
        WeightField::new(r.c0, b, SMatrix::from_row_slice(&flat))
    }
}

impl<const D: usize> From<&WeightField<D>> for WeightRepr {
    fn from(w: &WeightField<D>) -> Self {
        let mut flat = Vec::with_capacity(D * D);
        for i in 0..D {
            for j in 0..D {
                flat.push(w.a[(i, j)]);
            }
        }
        WeightRepr {
            c0: w.c0,
            b: Some(w.b.iter().copied().collect()),
            a: Some(MatrixRepr::Flat(flat)),
        }
    }
}

impl<const D: usize> Serialize for WeightField<D> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WeightRepr::from(self).serialize(s)
    }
}

impl<'de, const D: usize> Deserialize<'de> for WeightField<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> std::result::Result<Self, De::Error> {
        let repr = WeightRepr::deserialize(d)?;
        WeightField::try_from(repr).map_err(serde::de::Error::custom)
    }
}
