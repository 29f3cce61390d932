//! Time integration of `∂ₜX = −H_f N` and the monitors recorded along a run.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::curve::{DiscreteCurve, Point};
use crate::error::{Error, Result};
use crate::geometry::{self, build_geometry, GeometryStack};
use crate::weights::{hessian_bounds, HessianBounds, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitEuler,
    Rk4,
}

/// Fixed step or CFL-limited automatic step (`"auto"` in JSON).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    Auto,
}

impl Serialize for TimeStep {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TimeStep::Fixed(v) => s.serialize_f64(*v),
            TimeStep::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for TimeStep {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Value(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Value(v) => Ok(TimeStep::Fixed(v)),
            Repr::Word(w) if w == "auto" => Ok(TimeStep::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got \"{w}\""))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Redistribution {
    #[default]
    None,
    /// Uniform-arclength resampling every `redistribute_every` steps.
    TangentialUniform,
}

/// Early-termination triggers, each with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopOn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hf_negative: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_negative: Option<f64>,
    /// Stop once `max |h|²/H_f² > C²(1 + tol)`, `C²` taken at the start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinch_exceeds: Option<f64>,
}

fn default_cfl() -> f64 {
    0.2
}

fn default_every() -> usize {
    10
}

fn default_record() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub scheme: Scheme,
    pub dt: TimeStep,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    #[serde(default)]
    pub redistribution: Redistribution,
    #[serde(default = "default_every")]
    pub redistribute_every: usize,
    /// Snapshot cadence in steps; the final state is always recorded.
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default)]
    pub stop_on: StopOn,
}

impl FlowConfig {
    pub fn new(scheme: Scheme, dt: TimeStep, t_end: f64) -> Self {
        FlowConfig {
            scheme,
            dt,
            cfl: default_cfl(),
            t_end,
            redistribution: Redistribution::None,
            redistribute_every: default_every(),
            record_every: default_record(),
            stop_on: StopOn::default(),
        }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    /// Checks every field; errors name the field as `{prefix}.{field}`.
    pub fn validate(&self, prefix: &str, t0: f64) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::config(field("dt"), format!("must be positive or \"auto\", got {dt}")));
            }
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::config(field("cfl"), format!("must lie in (0, 0.5], got {}", self.cfl)));
        }
        if !(self.t_end.is_finite() && self.t_end > t0) {
            return Err(Error::config(
                field("t_end"),
                format!("must exceed the initial time {t0}, got {}", self.t_end),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::config(field("record_every"), "must be at least 1"));
        }
        if self.redistribute_every == 0 {
            return Err(Error::config(field("redistribute_every"), "must be at least 1"));
        }
        let stops = [
            ("hf_negative", self.stop_on.hf_negative),
            ("h_negative", self.stop_on.h_negative),
            ("pinch_exceeds", self.stop_on.pinch_exceeds),
        ];
        for (name, tol) in stops {
            if let Some(tol) = tol {
                if !(tol.is_finite() && tol >= 0.0) {
                    return Err(Error::config(field(&format!("stop_on.{name}")), "tolerance must be nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Largest admissible step for `curve` under this configuration.
    pub fn step_size(&self, curve: &DiscreteCurve, hf: &[f64], w: &dyn Weight<2>) -> f64 {
        match self.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto => auto_step(self.cfl, curve, hf, w),
        }
    }
}

/// `cfl · min(Δs², Δs / max|H_f|, 1/‖∇̄²f‖)`: the diffusive limit of the
/// explicit stencil, a per-step displacement limit and a reaction limit.
pub fn auto_step(cfl: f64, curve: &DiscreteCurve, hf: &[f64], w: &dyn Weight<2>) -> f64 {
    let ds = curve.min_spacing();
    let mut dt = ds * ds;
    let max_hf = hf.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_hf > 0.0 {
        dt = dt.min(ds / max_hf);
    }
    let hess = w.hessian_norm_bound().unwrap_or_else(|| {
        curve
            .nodes()
            .iter()
            .map(|x| w.hessian(x).symmetric_eigenvalues().amax())
            .fold(0.0, f64::max)
    });
    if hess > 0.0 {
        dt = dt.min(1.0 / hess);
    }
    cfl * dt
}

fn velocity(curve: &DiscreteCurve, w: &dyn Weight<2>) -> Vec<Point> {
    let (normals, hf) = geometry::normal_speed(curve, w);
    normals.iter().zip(&hf).map(|(n, h)| -h * n).collect()
}

fn shifted(curve: &DiscreteCurve, k: &[Point], scale: f64, t: f64) -> Result<DiscreteCurve> {
    let nodes = curve.nodes().iter().zip(k).map(|(x, v)| x + scale * v).collect();
    curve.moved(nodes, t).map_err(|e| Error::StepRejected {
        t,
        reason: format!("intermediate stage degenerate: {e}"),
    })
}

/// One integrator step of size `dt` without redistribution.
pub fn advance(curve: &DiscreteCurve, w: &dyn Weight<2>, scheme: Scheme, dt: f64) -> Result<DiscreteCurve> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config("flow.dt", format!("step must be positive, got {dt}")));
    }
    let t = curve.time();
    let (_, hf) = geometry::normal_speed(curve, w);
    let max_hf = hf.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let ds = curve.min_spacing();
    if dt * max_hf >= ds {
        return Err(Error::StepRejected {
            t,
            reason: format!("dt·max|H_f| = {} exceeds min spacing {ds}", dt * max_hf),
        });
    }
    let t_new = t + dt;
    let nodes: Vec<Point> = match scheme {
        Scheme::ExplicitEuler => {
            let k1 = velocity(curve, w);
            curve.nodes().iter().zip(&k1).map(|(x, v)| x + dt * v).collect()
        }
        Scheme::Rk4 => {
            let k1 = velocity(curve, w);
            let k2 = velocity(&shifted(curve, &k1, 0.5 * dt, t + 0.5 * dt)?, w);
            let k3 = velocity(&shifted(curve, &k2, 0.5 * dt, t + 0.5 * dt)?, w);
            let k4 = velocity(&shifted(curve, &k3, dt, t_new)?, w);
            curve
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    };
    curve.moved(nodes, t_new).map_err(|e| Error::StepRejected {
        t,
        reason: format!("mesh degenerate after step: {e}"),
    })
}

/// One step with the configured (or automatic) step size, followed by
/// redistribution when enabled.
pub fn step(curve: &DiscreteCurve, w: &dyn Weight<2>, cfg: &FlowConfig) -> Result<DiscreteCurve> {
    let (_, hf) = geometry::normal_speed(curve, w);
    let dt = cfg.step_size(curve, &hf, w);
    let next = advance(curve, w, cfg.scheme, dt)?;
    match cfg.redistribution {
        Redistribution::None => Ok(next),
        Redistribution::TangentialUniform => redistribute(&next),
    }
}

/// Resamples the curve at uniform arclength with a cubic Hermite
/// interpolant; node 0 stays put and ids keep their order.
pub fn redistribute(curve: &DiscreteCurve) -> Result<DiscreteCurve> {
    let n = curve.len();
    let spacing = curve.spacings();
    let total: f64 = spacing.iter().sum();
    let tangents = geometry::unit_tangents(curve);
    // arclength derivative of the position, per component
    let deriv: Vec<Point> = {
        let xs: Vec<f64> = curve.nodes().iter().map(|p| p.x).collect();
        let ys: Vec<f64> = curve.nodes().iter().map(|p| p.y).collect();
        let dx = geometry::arclength_derivative(curve, &xs);
        let dy = geometry::arclength_derivative(curve, &ys);
        dx.into_iter().zip(dy).map(|(a, b)| Point::new(a, b)).collect()
    };
    debug_assert_eq!(tangents.len(), n);
    let mut nodes = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..n {
        let target = total * i as f64 / n as f64;
        while seg + 1 < n && seg_start + spacing[seg] <= target {
            seg_start += spacing[seg];
            seg += 1;
        }
        let len = spacing[seg];
        let u = ((target - seg_start) / len).clamp(0.0, 1.0);
        let (p0, p1) = (curve.nodes()[seg], curve.nodes()[(seg + 1) % n]);
        let (m0, m1) = (deriv[seg] * len, deriv[(seg + 1) % n] * len);
        let (u2, u3) = (u * u, u * u * u);
        let p = (2.0 * u3 - 3.0 * u2 + 1.0) * p0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * p1
            + (u3 - u2) * m1;
        nodes.push(p);
    }
    curve.moved(nodes, curve.time())
}

/// Per-step monitor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub t: f64,
    pub min_hf: f64,
    pub min_hf_node: usize,
    pub min_h: f64,
    pub min_h_node: usize,
    pub max_hf_abs: f64,
    pub max_h_abs: f64,
    /// `max |h|²/H_f²` over nodes.
    pub max_pinch: f64,
    pub lambda: f64,
    pub mu: f64,
    pub convex: bool,
    pub hf_nonnegative: bool,
}

impl MonitorRow {
    pub fn from_geometry(curve: &DiscreteCurve, geom: &GeometryStack, w: &dyn Weight<2>) -> Self {
        let ids = curve.node_ids();
        let argmin = |v: &[f64]| {
            v.iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, &x)| (i, x))
                .unwrap_or((0, f64::NAN))
        };
        let (ihf, min_hf) = argmin(&geom.hf);
        let (ih, min_h) = argmin(&geom.curvature);
        let amax = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let max_pinch = (0..geom.len()).map(|i| geom.pinch_ratio(i)).fold(0.0_f64, f64::max);
        let mut lambda = f64::NEG_INFINITY;
        let mut mu = f64::INFINITY;
        for (x, t) in curve.nodes().iter().zip(&geom.tangent) {
            let q = t.dot(&(w.hessian(x) * t));
            lambda = lambda.max(q);
            mu = mu.min(q);
        }
        MonitorRow {
            t: curve.time(),
            min_hf,
            min_hf_node: ids[ihf],
            min_h,
            min_h_node: ids[ih],
            max_hf_abs: amax(&geom.hf),
            max_h_abs: amax(&geom.curvature),
            max_pinch,
            lambda,
            mu,
            convex: min_h >= 0.0,
            hf_nonnegative: min_hf >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub curve: DiscreteCurve,
    pub geometry: GeometryStack,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.curve.time()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Stopped { reason: StopReason, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    HfNegative,
    HNegative,
    PinchExceeds,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StopReason::HfNegative => "hf_negative",
            StopReason::HNegative => "h_negative",
            StopReason::PinchExceeds => "pinch_exceeds",
        };
        f.write_str(s)
    }
}

/// Recorded trajectory of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub snapshots: Vec<Snapshot>,
    pub monitors: Vec<MonitorRow>,
    pub termination: Termination,
    /// True if any tangential redistribution was applied.
    pub redistributed: bool,
    pub third_derivative_zero: bool,
    pub steps: usize,
    /// Largest step size used.
    pub max_dt: f64,
}

impl FlowTrace {
    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trace has at least the initial snapshot")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::time).collect()
    }

    /// Snapshot whose time matches `t` to within `1e-9·max(1, |t|)`.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.snapshots.iter().find(|s| (s.time() - t).abs() <= tol)
    }

    pub fn node_count(&self) -> usize {
        self.initial().curve.len()
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<FlowTrace>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (partial trace: {} snapshots up to t = {})",
            self.error,
            self.partial.snapshots.len(),
            self.partial.last().time()
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Integrates from `initial` to `cfg.t_end`, recording monitors every step
/// and snapshots every `cfg.record_every` steps.
pub fn run(initial: &DiscreteCurve, w: &dyn Weight<2>, cfg: &FlowConfig) -> std::result::Result<FlowTrace, RunFailure> {
    let geom = build_geometry(initial, w);
    let mut trace = FlowTrace {
        snapshots: Vec::new(),
        monitors: Vec::new(),
        termination: Termination::Completed,
        redistributed: false,
        third_derivative_zero: w.third_derivative_vanishes(),
        steps: 0,
        max_dt: 0.0,
    };
    let fail = |error: Error, trace: FlowTrace| RunFailure {
        error,
        partial: Box::new(trace),
    };
    if let Err(e) = cfg.validate("flow", initial.time()) {
        // an empty partial trace is not useful; keep the initial state if it is valid
        let geom = geom.unwrap_or_else(|_| empty_geometry());
        trace.snapshots.push(Snapshot {
            step: 0,
            curve: initial.clone(),
            geometry: geom,
        });
        return Err(fail(e, trace));
    }
    let mut geom = match geom {
        Ok(g) => g,
        Err(e) => {
            trace.snapshots.push(Snapshot {
                step: 0,
                curve: initial.clone(),
                geometry: empty_geometry(),
            });
            return Err(fail(e, trace));
        }
    };
    let first = MonitorRow::from_geometry(initial, &geom, w);
    let initial_pinch = (first.min_hf > 0.0).then(|| first.max_h_abs.powi(2) / first.min_hf.powi(2));
    let hf_armed = cfg.stop_on.hf_negative.filter(|tol| first.min_hf >= -tol);
    let h_armed = cfg.stop_on.h_negative.filter(|tol| first.min_h >= -tol);
    let pinch_armed = cfg.stop_on.pinch_exceeds.zip(initial_pinch);
    trace.monitors.push(first);
    trace.snapshots.push(Snapshot {
        step: 0,
        curve: initial.clone(),
        geometry: geom.clone(),
    });

    let mut curve = initial.clone();
    let scale = cfg.t_end.abs().max(1.0);
    let mut steps = 0usize;
    while cfg.t_end - curve.time() > 1e-12 * scale {
        let dt_max = cfg.step_size(&curve, &geom.hf, w);
        let remaining = cfg.t_end - curve.time();
        let count = (remaining / dt_max - 1e-9).ceil().max(1.0);
        let dt = remaining / count;
        let mut next = match advance(&curve, w, cfg.scheme, dt) {
            Ok(c) => c,
            Err(e) => return Err(fail(e, trace)),
        };
        steps += 1;
        if count <= 1.0 {
            // land exactly on t_end
            next = match next.moved(next.nodes().to_vec(), cfg.t_end) {
                Ok(c) => c,
                Err(e) => return Err(fail(e, trace)),
            };
        }
        if cfg.redistribution == Redistribution::TangentialUniform && steps.is_multiple_of(cfg.redistribute_every) {
            next = match redistribute(&next) {
                Ok(c) => c,
                Err(e) => return Err(fail(e, trace)),
            };
            trace.redistributed = true;
        }
        geom = match build_geometry(&next, w) {
            Ok(g) => g,
            Err(e) => return Err(fail(e, trace)),
        };
        curve = next;
        trace.steps = steps;
        trace.max_dt = trace.max_dt.max(dt);
        let row = MonitorRow::from_geometry(&curve, &geom, w);
        let stop = if hf_armed.is_some_and(|tol| row.min_hf < -tol) {
            Some(StopReason::HfNegative)
        } else if h_armed.is_some_and(|tol| row.min_h < -tol) {
            Some(StopReason::HNegative)
        } else if pinch_armed.is_some_and(|(tol, c2)| row.max_pinch > c2 * (1.0 + tol)) {
            Some(StopReason::PinchExceeds)
        } else {
            None
        };
        trace.monitors.push(row);
        let done = cfg.t_end - curve.time() <= 1e-12 * scale;
        if steps.is_multiple_of(cfg.record_every) || done || stop.is_some() {
            trace.snapshots.push(Snapshot {
                step: steps,
                curve: curve.clone(),
                geometry: geom.clone(),
            });
        }
        if let Some(reason) = stop {
            trace.termination = Termination::Stopped { reason, t: curve.time() };
            break;
        }
    }
    Ok(trace)
}

fn empty_geometry() -> GeometryStack {
    GeometryStack {
        d_theta: 0.0,
        tangent: Vec::new(),
        normal: Vec::new(),
        metric_g: Vec::new(),
        sff_h: Vec::new(),
        curvature: Vec::new(),
        hf: Vec::new(),
        dhf_ds: Vec::new(),
        lap_hf: Vec::new(),
        l_hf: Vec::new(),
        hess_nn: Vec::new(),
        dt_hf_rhs: Vec::new(),
    }
}

/// Outcome of the sign-preservation checks for `H_f` and `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub hf_preserved: bool,
    pub h_preserved: bool,
    /// The initial sign condition on `H_f` fails; nothing is asserted.
    pub hf_vacuous: bool,
    pub h_vacuous: bool,
    pub min_hf: f64,
    pub min_h: f64,
    pub tol_hf: f64,
    pub tol_h: f64,
    /// First `(t, node_id)` where a non-vacuous check fails, or where the
    /// initial condition already fails.
    pub first_violation: Option<(f64, usize)>,
}

/// Checks that `H_f ≥ 0` and `h ≥ 0` persist along the trace whenever they
/// hold initially. Tolerances are `tol_scale · 1e-6 ·` the initial maximum
/// modulus of each quantity.
pub fn sign_monitors(trace: &FlowTrace, tol_scale: f64) -> SignReport {
    let first = &trace.monitors[0];
    let tol_hf = tol_scale * 1e-6 * first.max_hf_abs;
    let tol_h = tol_scale * 1e-6 * first.max_h_abs;
    let hf_vacuous = first.min_hf < -tol_hf;
    let h_vacuous = first.min_h < -tol_h;
    let min_hf = trace.monitors.iter().map(|m| m.min_hf).fold(f64::INFINITY, f64::min);
    let min_h = trace.monitors.iter().map(|m| m.min_h).fold(f64::INFINITY, f64::min);
    let hf_preserved = !hf_vacuous && min_hf >= -tol_hf;
    let h_preserved = !h_vacuous && min_h >= -tol_h;
    let first_violation = trace.monitors.iter().find_map(|m| {
        if m.min_hf < -tol_hf && (hf_vacuous || !hf_preserved) {
            Some((m.t, m.min_hf_node))
        } else if m.min_h < -tol_h && (h_vacuous || !h_preserved) {
            Some((m.t, m.min_h_node))
        } else {
            None
        }
    });
    SignReport {
        hf_preserved,
        h_preserved,
        hf_vacuous,
        h_vacuous,
        min_hf,
        min_h,
        tol_hf,
        tol_h,
        first_violation,
    }
}

/// Pinching-constant report: `C² = sup_{M₀}|h|² / inf_{M₀}H_f²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchReport {
    /// `None` when `inf H_f(0) ≤ 0`.
    pub c_squared: Option<f64>,
    pub sup_ratio: f64,
    pub inf_hf0: f64,
    pub bounds: HessianBounds,
    /// `inf H_f + λ − 2μ` on the initial curve.
    pub hypothesis_value: f64,
    pub third_derivative_zero: bool,
    pub hypotheses_met: bool,
}

impl PinchReport {
    pub fn c(&self) -> Option<f64> {
        self.c_squared.map(f64::sqrt)
    }

    /// `sup_ratio ≤ C²(1 + slack)`; vacuously true when hypotheses fail.
    pub fn holds(&self, slack: f64) -> bool {
        match (self.hypotheses_met, self.c_squared) {
            (true, Some(c2)) => self.sup_ratio <= c2 * (1.0 + slack),
            _ => true,
        }
    }
}

/// λ, μ are global extrema of the tangential Hessian over the initial curve.
pub fn pinch_monitor(trace: &FlowTrace, w: &dyn Weight<2>) -> PinchReport {
    let first = &trace.monitors[0];
    let initial = &trace.initial().curve;
    let bounds = hessian_bounds(w, initial);
    let inf_hf0 = first.min_hf;
    let c_squared = (inf_hf0 > 0.0).then(|| first.max_h_abs.powi(2) / (inf_hf0 * inf_hf0));
    let sup_ratio = trace.monitors.iter().map(|m| m.max_pinch).fold(0.0_f64, f64::max);
    let hypothesis_value = inf_hf0 + bounds.lambda - 2.0 * bounds.mu;
    let third = w.third_derivative_vanishes();
    PinchReport {
        c_squared,
        sup_ratio,
        inf_hf0,
        bounds,
        hypothesis_value,
        third_derivative_zero: third,
        hypotheses_met: third && inf_hf0 > 0.0 && hypothesis_value <= 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::RadialSolution;
    use crate::weights::PlaneWeight;

    fn rk4(t_end: f64) -> FlowConfig {
        FlowConfig::new(Scheme::Rk4, TimeStep::Auto, t_end)
    }

    #[test]
    fn shrinking_circle_hits_closed_form() {
        let c = DiscreteCurve::circle(2.0, 256).unwrap();
        let trace = run(&c, &PlaneWeight::zero(), &rk4(1.5).record_every(1000)).unwrap();
        let last = &trace.last().curve;
        assert_eq!(last.time(), 1.5);
        assert!(last.nodes().iter().all(|p| (p.norm() - 1.0).abs() < 1e-4));
    }

    #[test]
    fn f_minimal_circle_is_stationary() {
        let c = DiscreteCurve::circle(1.0, 128).unwrap();
        let w = PlaneWeight::isotropic(1.0);
        let cfg = FlowConfig::new(Scheme::ExplicitEuler, TimeStep::Fixed(1e-4), 1.0);
        let next = step(&c, &w, &cfg).unwrap();
        let disp = c.nodes().iter().zip(next.nodes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(disp <= 1e-10 * 1e-4, "{disp}");
    }

    #[test]
    fn single_euler_step_on_unit_circle() {
        let c = DiscreteCurve::circle(1.0, 256).unwrap();
        let next = advance(&c, &PlaneWeight::zero(), Scheme::ExplicitEuler, 1e-3).unwrap();
        assert!(next.nodes().iter().all(|p| (p.norm() - (1.0 - 1e-3)).abs() < 1e-8));
        assert_eq!(next.node_ids(), c.node_ids());
        assert!((next.time() - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn nonpositive_dt_is_config_error() {
        let c = DiscreteCurve::circle(1.0, 32).unwrap();
        let cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Fixed(-1e-3), 1.0);
        assert!(matches!(step(&c, &PlaneWeight::zero(), &cfg), Err(Error::Config { .. })));
        match cfg.validate("flow", 0.0) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "flow.dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let c = DiscreteCurve::circle(1.0, 64).unwrap();
        assert!(matches!(
            advance(&c, &PlaneWeight::zero(), Scheme::ExplicitEuler, 0.5),
            Err(Error::StepRejected { .. })
        ));
    }

    #[test]
    fn run_sqrt2_circle_monitors_increase() {
        let c = DiscreteCurve::circle(2f64.sqrt(), 128).unwrap();
        let trace = run(&c, &PlaneWeight::zero(), &rk4(0.9).record_every(50)).unwrap();
        assert_eq!(trace.termination, Termination::Completed);
        let m = &trace.monitors;
        assert!((m[0].min_hf - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(m.windows(2).all(|p| p[1].min_hf > p[0].min_hf));
        let times = trace.times();
        assert!(times.windows(2).all(|p| p[1] > p[0]));
        assert!(trace.snapshots.iter().all(|s| s.curve.node_ids() == c.node_ids()));
    }

    #[test]
    fn ellipse_stays_convex() {
        let c = DiscreteCurve::ellipse(2.0, 1.0, 128).unwrap();
        let mut cfg = rk4(0.3);
        cfg.stop_on.h_negative = Some(1e-6);
        cfg.record_every = 100;
        let trace = run(&c, &PlaneWeight::zero(), &cfg).unwrap();
        assert_eq!(trace.termination, Termination::Completed);
    }

    #[test]
    fn negative_isotropic_weight_follows_radial_ode() {
        let c = DiscreteCurve::circle(1.0, 256).unwrap();
        let trace = run(&c, &PlaneWeight::isotropic(-1.0), &rk4(0.3).record_every(100000)).unwrap();
        let exact = RadialSolution::new(1, 1.0, -1.0).radius(0.3).unwrap();
        let r = trace.last().curve.mean_radius();
        assert!((r - exact).abs() / exact < 1e-4, "{r} vs {exact}");
    }

    #[test]
    fn stop_trigger_is_not_armed_when_initially_violated() {
        // expanding circle under A = I: H_f = 1/R − R < 0 from the start
        let c = DiscreteCurve::circle(1.2, 64).unwrap();
        let mut cfg = rk4(0.1).record_every(100);
        cfg.stop_on.hf_negative = Some(0.0);
        let trace = run(&c, &PlaneWeight::isotropic(1.0), &cfg).unwrap();
        assert_eq!(trace.termination, Termination::Completed);
        assert!(trace.last().curve.mean_radius() > 1.2);
    }

    #[test]
    fn stop_on_pinch_records_reason() {
        // f ≡ 0 on an ellipse: the pinch ratio is 1 everywhere (H_f = H)
        // so use a weight where the ratio grows: shrinking circle with c < 0
        let c = DiscreteCurve::circle(1.0, 64).unwrap();
        let mut cfg = rk4(0.4);
        cfg.stop_on.pinch_exceeds = Some(0.01);
        let trace = run(&c, &PlaneWeight::isotropic(0.5), &cfg).unwrap();
        // ratio 1/(1 − cR²)² decreases as R shrinks: never triggers
        assert_eq!(trace.termination, Termination::Completed);

        let trace = run(&c, &PlaneWeight::isotropic(-0.5), &cfg).unwrap();
        // ratio 1/(1 + |c|R²)² increases as R shrinks
        assert!(matches!(
            trace.termination,
            Termination::Stopped {
                reason: StopReason::PinchExceeds,
                ..
            }
        ));
        assert_eq!(trace.last().step, trace.steps);
    }

    #[test]
    fn redistribution_equalizes_spacing() {
        let spec = crate::curve::CurveSpec::Ellipse { a: 2.0, b: 1.0, n: 128 };
        let c = spec.build().unwrap();
        let r = redistribute(&c).unwrap();
        let s = r.spacings();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!(s.iter().all(|v| (v - mean).abs() / mean < 1e-3));
        // resampled nodes stay on the ellipse
        assert!(r.nodes().iter().all(|p| ((p.x / 2.0).powi(2) + p.y * p.y - 1.0).abs() < 1e-5));
        assert_eq!(r.nodes()[0], c.nodes()[0]);
    }

    #[test]
    fn redistributed_run_flags_trace() {
        let c = DiscreteCurve::ellipse(2.0, 1.0, 64).unwrap();
        let mut cfg = rk4(0.05);
        cfg.redistribution = Redistribution::TangentialUniform;
        cfg.redistribute_every = 5;
        let trace = run(&c, &PlaneWeight::zero(), &cfg).unwrap();
        assert!(trace.redistributed);
    }

    #[test]
    fn sign_report_examples() {
        let c = DiscreteCurve::circle(1.0, 64).unwrap();
        let trace = run(&c, &PlaneWeight::zero(), &rk4(0.3).record_every(10)).unwrap();
        let s = sign_monitors(&trace, 1.0);
        assert!(s.hf_preserved && s.h_preserved && s.first_violation.is_none());

        let bean = DiscreteCurve::polar(1.0, &[(2, 0.45)], 128).unwrap();
        let trace = run(&bean, &PlaneWeight::zero(), &rk4(0.01).record_every(10)).unwrap();
        let s = sign_monitors(&trace, 1.0);
        assert!(!s.h_preserved && s.h_vacuous);
        assert_eq!(s.first_violation.map(|v| v.0), Some(0.0));
    }

    #[test]
    fn pinch_report_on_circles() {
        let c = DiscreteCurve::circle(1.0, 64).unwrap();
        let trace = run(&c, &PlaneWeight::zero(), &rk4(0.1).record_every(10)).unwrap();
        let p = pinch_monitor(&trace, &PlaneWeight::zero());
        assert!(!p.hypotheses_met);
        assert!((p.hypothesis_value - 1.0).abs() < 1e-12);

        // R = 1.2, c = 0.5: H_f = 1/R − cR > 0 and H_f − c ≤ 0
        let (r, cc) = (1.2, 0.5);
        let c = DiscreteCurve::circle(r, 128).unwrap();
        let w = PlaneWeight::isotropic(cc);
        let trace = run(&c, &w, &rk4(0.2).record_every(10)).unwrap();
        let p = pinch_monitor(&trace, &w);
        assert!(p.hypotheses_met);
        let expected = 1.0 / (1.0 - cc * r * r).powi(2);
        assert!((p.c_squared.unwrap() - expected).abs() < 1e-9 * expected);
        assert!((p.sup_ratio - expected).abs() < 1e-9 * expected);
        assert!(p.holds(0.0));
    }
}
