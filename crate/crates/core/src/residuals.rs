//! Residuals of the evolution equations for `g`, `N`, `H_f` and `h`
//! measured on a recorded trace.
//!
//! Time derivatives are second-order differences across stored snapshots,
//! so the check never sees the integrator's right-hand side. Spatial
//! derivatives in the `h` equation are taken in the node parameter `θ`,
//! including the Christoffel term `Γ = g_θ / 2g` of the induced metric:
//!
//! ```text
//! ∂ₜ g      = −2 H_f h_θθ
//! ∂ₜ N      = ∂_s H_f · T
//! ∂ₜ H_f    = L H_f + (|h|² + ∇̄²f(N,N)) H_f
//! ∂ₜ h_θθ   = ∂²_θ H_f − Γ ∂_θ H_f − H_f h_θθ² / g
//! ```

use serde::{Deserialize, Serialize};

use crate::curve::{CurveSpec, Point};
use crate::error::{Error, Result};
use crate::flow::{run, FlowConfig, FlowTrace, Redistribution, TimeStep};
use crate::geometry::{theta_derivative, theta_second_derivative, GeometryStack};
use crate::weights::Weight;

/// Weights `[w₋, w₀, w₊]` of the three-point derivative at the middle of
/// three (possibly unevenly spaced) times.
pub fn centered_weights(t_prev: f64, t: f64, t_next: f64) -> [f64; 3] {
    let (a, b) = (t - t_prev, t_next - t);
    [-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))]
}

/// Weights of the one-sided second-order derivative at `t0` from
/// `t0 < t1 < t2`.
pub fn forward_weights(t0: f64, t1: f64, t2: f64) -> [f64; 3] {
    let (a, b) = (t1 - t0, t2 - t0);
    [-(a + b) / (a * b), b / (a * (b - a)), -a / (b * (b - a))]
}

/// Maximum residual of each evolution equation at one interior snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub t: f64,
    pub metric: f64,
    pub normal: f64,
    pub hf: f64,
    pub sff: f64,
}

impl ResidualRow {
    pub fn as_array(&self) -> [f64; 4] {
        [self.metric, self.normal, self.hf, self.sff]
    }
}

pub const RESIDUAL_NAMES: [&str; 4] = ["metric", "normal", "hf", "sff"];

fn combine(w: [f64; 3], a: f64, b: f64, c: f64) -> f64 {
    w[0] * a + w[1] * b + w[2] * c
}

fn combine_vec(w: [f64; 3], a: &Point, b: &Point, c: &Point) -> Point {
    w[0] * a + w[1] * b + w[2] * c
}

fn sff_rhs(geom: &GeometryStack) -> Vec<f64> {
    let dth = geom.d_theta;
    let phi_t = theta_derivative(&geom.hf, dth);
    let phi_tt = theta_second_derivative(&geom.hf, dth);
    let g_t = theta_derivative(&geom.metric_g, dth);
    (0..geom.len())
        .map(|i| {
            let g = geom.metric_g[i];
            let h = geom.sff_h[i];
            phi_tt[i] - g_t[i] / (2.0 * g) * phi_t[i] - geom.hf[i] * h * h / g
        })
        .collect()
}

/// Residual maxima at every interior snapshot of a trace recorded without
/// redistribution.
pub fn evolution_residuals(trace: &FlowTrace) -> Result<Vec<ResidualRow>> {
    if trace.redistributed {
        return Err(Error::Input(
            "evolution residuals need material nodes; rerun with redistribution = none".into(),
        ));
    }
    let snaps = &trace.snapshots;
    if snaps.len() < 3 {
        return Err(Error::Input(format!(
            "need at least 3 snapshots for centered time differences, got {}",
            snaps.len()
        )));
    }
    let mut rows = Vec::with_capacity(snaps.len() - 2);
    for j in 1..snaps.len() - 1 {
        let (p, c, q) = (&snaps[j - 1], &snaps[j], &snaps[j + 1]);
        let w = centered_weights(p.time(), c.time(), q.time());
        let (gp, gc, gq) = (&p.geometry, &c.geometry, &q.geometry);
        let sff = sff_rhs(gc);
        let mut row = ResidualRow {
            t: c.time(),
            metric: 0.0,
            normal: 0.0,
            hf: 0.0,
            sff: 0.0,
        };
        for i in 0..gc.len() {
            let dg = combine(w, gp.metric_g[i], gc.metric_g[i], gq.metric_g[i]);
            row.metric = row.metric.max((dg + 2.0 * gc.hf[i] * gc.sff_h[i]).abs());

            let dn = combine_vec(w, &gp.normal[i], &gc.normal[i], &gq.normal[i]);
            row.normal = row.normal.max((dn - gc.dhf_ds[i] * gc.tangent[i]).norm());

            let dhf = combine(w, gp.hf[i], gc.hf[i], gq.hf[i]);
            row.hf = row.hf.max((dhf - gc.dt_hf_rhs[i]).abs());

            let dh = combine(w, gp.sff_h[i], gc.sff_h[i], gq.sff_h[i]);
            row.sff = row.sff.max((dh - sff[i]).abs());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Componentwise maximum over all rows.
pub fn residual_maxima(rows: &[ResidualRow]) -> [f64; 4] {
    rows.iter().fold([0.0; 4], |acc, r| {
        let a = r.as_array();
        [acc[0].max(a[0]), acc[1].max(a[1]), acc[2].max(a[2]), acc[3].max(a[3])]
    })
}

/// Coarse/fine residual comparison with `(N, 1/dt)` doubled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub coarse_nodes: usize,
    pub coarse_dt: f64,
    pub coarse: [f64; 4],
    pub fine: [f64; 4],
    /// `coarse / fine` per equation.
    pub ratios: [f64; 4],
}

impl RefinementStudy {
    /// Every ratio in `[lo, hi]`, or both levels already below `floor`.
    pub fn converged(&self, lo: f64, hi: f64, floor: f64) -> bool {
        (0..4).all(|k| (self.coarse[k] < floor && self.fine[k] < floor) || (lo..=hi).contains(&self.ratios[k]))
    }
}

/// Runs the flow at `(N, dt)` and `(2N, dt/2)` with the same snapshot
/// cadence in steps, so the snapshot spacing halves too.
pub fn refinement_study(spec: &CurveSpec, w: &dyn Weight<2>, cfg: &FlowConfig) -> Result<RefinementStudy> {
    let TimeStep::Fixed(dt) = cfg.dt else {
        return Err(Error::config("flow.dt", "refinement study needs a fixed step"));
    };
    if cfg.redistribution != Redistribution::None {
        return Err(Error::config("flow.redistribution", "refinement study needs material nodes"));
    }
    let n = spec.node_count();
    let fine_spec = spec
        .with_nodes(2 * n)
        .ok_or_else(|| Error::Input("explicit node lists cannot be refined".into()))?;
    let level = |spec: &CurveSpec, dt: f64| -> Result<[f64; 4]> {
        let curve = spec.build()?;
        let cfg = FlowConfig {
            dt: TimeStep::Fixed(dt),
            ..cfg.clone()
        };
        let trace = run(&curve, w, &cfg).map_err(|f| f.error)?;
        Ok(residual_maxima(&evolution_residuals(&trace)?))
    };
    let coarse = level(spec, dt)?;
    let fine = level(&fine_spec, dt / 2.0)?;
    let ratios = [0, 1, 2, 3].map(|k| coarse[k] / fine[k]);
    Ok(RefinementStudy {
        coarse_nodes: n,
        coarse_dt: dt,
        coarse,
        fine,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::DiscreteCurve;
    use crate::flow::Scheme;
    use crate::weights::PlaneWeight;

    #[test]
    fn difference_weights_are_exact_on_quadratics() {
        let f = |t: f64| 3.0 * t * t - 2.0 * t + 0.5;
        let df = |t: f64| 6.0 * t - 2.0;
        let (a, b, c) = (0.1, 0.13, 0.2);
        let w = centered_weights(a, b, c);
        assert!((combine(w, f(a), f(b), f(c)) - df(b)).abs() < 1e-12);
        let w = forward_weights(a, b, c);
        assert!((combine(w, f(a), f(b), f(c)) - df(a)).abs() < 1e-12);
    }

    #[test]
    fn residuals_small_on_shrinking_circle() {
        let c = DiscreteCurve::circle(1.0, 64).unwrap();
        let cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Fixed(1e-4), 0.05).record_every(20);
        let trace = run(&c, &PlaneWeight::zero(), &cfg).unwrap();
        let max = residual_maxima(&evolution_residuals(&trace).unwrap());
        assert!(max.iter().all(|&r| r < 1e-3), "{max:?}");
    }

    #[test]
    fn residuals_need_three_snapshots_and_material_nodes() {
        let c = DiscreteCurve::circle(1.0, 32).unwrap();
        let cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Fixed(1e-3), 0.002).record_every(5);
        let trace = run(&c, &PlaneWeight::zero(), &cfg).unwrap();
        assert!(matches!(evolution_residuals(&trace), Err(Error::Input(_))));
        let mut cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Fixed(1e-3), 0.02);
        cfg.redistribution = Redistribution::TangentialUniform;
        cfg.redistribute_every = 2;
        let trace = run(&c, &PlaneWeight::zero(), &cfg).unwrap();
        assert!(matches!(evolution_residuals(&trace), Err(Error::Input(_))));
    }
}
