//! Closed-form reference solutions and estimators used to anchor the
//! numerical checks.
//!
//! Under `f = c|x|²/2` a round sphere of dimension `n` centred at the origin
//! stays round, with `H_f = n/R − cR`, so the flow reduces to
//! `d(R²)/dt = −2(n − cR²)`. Its solution is
//! `R² = n/c + (R₀² − n/c)e^{2ct}` for `c ≠ 0` and `R² = R₀² − 2nt` for
//! `c = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialBehaviour {
    /// Radius reaches zero at the given time.
    Shrinking { extinction: f64 },
    /// `R₀² = n/c` with `c > 0`.
    Stationary,
    /// `R₀² > n/c` with `c > 0`; grows without bound.
    Expanding,
}

/// Exact radial solution for a sphere of dimension `n` under `A = cI, b = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub n: u32,
    pub r0: f64,
    pub c: f64,
}

impl RadialSolution {
    pub fn new(n: u32, r0: f64, c: f64) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        assert!(r0 > 0.0, "initial radius must be positive");
        RadialSolution { n, r0, c }
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn behaviour(&self) -> RadialBehaviour {
        let (n, c, r2) = (self.nf(), self.c, self.r0 * self.r0);
        if c == 0.0 {
            return RadialBehaviour::Shrinking { extinction: r2 / (2.0 * n) };
        }
        let gap = n - c * r2;
        if gap > 0.0 {
            RadialBehaviour::Shrinking {
                extinction: (n / gap).ln() / (2.0 * c),
            }
        } else if gap == 0.0 {
            RadialBehaviour::Stationary
        } else {
            RadialBehaviour::Expanding
        }
    }

    pub fn extinction_time(&self) -> Option<f64> {
        match self.behaviour() {
            RadialBehaviour::Shrinking { extinction } => Some(extinction),
            _ => None,
        }
    }

    /// `R(t)²`, possibly nonpositive past extinction.
    pub fn radius_squared_unchecked(&self, t: f64) -> f64 {
        let (n, c, r2) = (self.nf(), self.c, self.r0 * self.r0);
        if c == 0.0 {
            r2 - 2.0 * n * t
        } else {
            n / c + (r2 - n / c) * (2.0 * c * t).exp()
        }
    }

    pub fn radius(&self, t: f64) -> Result<f64> {
        if let Some(extinction) = self.extinction_time() {
            if t >= extinction {
                return Err(Error::PastExtinction { t, extinction });
            }
        }
        Ok(self.radius_squared_unchecked(t).sqrt())
    }

    /// `H_f = n/R − cR`.
    pub fn hf(&self, t: f64) -> Result<f64> {
        let r = self.radius(t)?;
        Ok(self.nf() / r - self.c * r)
    }

    /// `∂ₜH_f = (n/R² + c)(n/R − cR)`; the gradient of `H_f` vanishes on the
    /// sphere, so this is also the minimized Harnack quantity.
    pub fn harnack(&self, t: f64) -> Result<f64> {
        let r = self.radius(t)?;
        Ok(radial_harnack_at_radius(self.n, self.c, r))
    }
}

/// `R(t)` for the sphere problem `(n, R₀, c)`.
pub fn radial_solution(n: u32, r0: f64, c: f64, t: f64) -> Result<f64> {
    RadialSolution::new(n, r0, c).radius(t)
}

/// `∂ₜH_f` on the sphere problem `(n, R₀, c)` at time `t`.
pub fn radial_harnack(n: u32, r0: f64, c: f64, t: f64) -> Result<f64> {
    RadialSolution::new(n, r0, c).harnack(t)
}

/// `(n/R² + c)(n/R − cR)` at a given radius.
pub fn radial_harnack_at_radius(n: u32, c: f64, r: f64) -> f64 {
    let n = n as f64;
    (n / (r * r) + c) * (n / r - c * r)
}

/// Least-squares slope of `log(error)` against `log(resolution)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Absolute slope: the observed order of convergence.
    pub order: f64,
    /// False when consecutive refinements do not reduce the error.
    pub monotone: bool,
}

/// Estimates the convergence order from `(resolution, max error)` pairs.
///
/// The resolution may be a node count (errors fall as it grows) or a step
/// size (errors fall as it shrinks); the sign of the slope tells them
/// apart and the returned order is its modulus.
pub fn convergence_order(points: &[(f64, f64)]) -> Result<OrderEstimate> {
    if points.len() < 3 {
        return Err(Error::Input(format!(
            "convergence order needs at least 3 refinement levels, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(Error::Input("resolutions and errors must be positive and finite".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("resolutions must not all coincide".into()));
    }
    let slope = sxy / sxx;
    let monotone = pts.windows(2).all(|w| if slope < 0.0 { w[1].1 < w[0].1 } else { w[1].1 > w[0].1 });
    Ok(OrderEstimate {
        order: slope.abs(),
        monotone,
    })
}

/// One row of an oracle comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub t: f64,
    #[serde(rename = "R_exact")]
    pub r_exact: f64,
    #[serde(rename = "R_sim")]
    pub r_sim: f64,
    pub abs_err: f64,
}

impl OracleRow {
    pub fn new(t: f64, r_exact: f64, r_sim: f64) -> Self {
        OracleRow {
            t,
            r_exact,
            r_sim,
            abs_err: (r_sim - r_exact).abs(),
        }
    }

    pub fn rel_err(&self) -> f64 {
        self.abs_err / self.r_exact
    }
}

/// Compares the mean radius of every snapshot with the exact solution.
pub fn compare_radial(trace: &FlowTrace, sol: &RadialSolution) -> Result<Vec<OracleRow>> {
    trace
        .snapshots
        .iter()
        .map(|s| Ok(OracleRow::new(s.time(), sol.radius(s.time())?, s.curve.mean_radius())))
        .collect()
}
