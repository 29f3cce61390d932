//! Differential and integral Harnack checks on recorded traces.
//!
//! For a plane curve the tangent space is one-dimensional, so a tangent
//! vector is a scalar `V` along the unit tangent and the Harnack quantity is
//! the quadratic
//!
//! ```text
//! Z(V) = ∂ₜH_f + 2 ∂_sH_f V + h V²
//! ```
//!
//! with `h` the curvature (the second fundamental form in an orthonormal
//! frame). For `h > 0` it is minimized at `V* = −∂_sH_f / h` with value
//! `∂ₜH_f − (∂_sH_f)² / h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTrace;
use crate::geometry::{intrinsic_distance, GeometryStack};
use crate::residuals::{centered_weights, forward_weights};

/// Below this curvature a node counts as not strictly convex.
pub const STRICT_CONVEXITY_EPS: f64 = 1e-12;
/// Grid size of the fallback scan over `V`.
pub const SCAN_POINTS: usize = 2001;

/// `∂ₜH_f + 2 ∂_sH_f V + h V²` at one node.
pub fn harnack_quantity(stack: &GeometryStack, dt_hf: &[f64], node: usize, v: f64) -> f64 {
    z_value(dt_hf[node], stack.dhf_ds[node], stack.curvature[node], v)
}

fn z_value(dt_hf: f64, grad: f64, h: f64, v: f64) -> f64 {
    dt_hf + 2.0 * grad * v + h * v * v
}

/// Minimum of `Z` over tangent vectors at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackMin {
    pub z_min: f64,
    /// Minimizer; for non-strictly-convex nodes, the best scanned point.
    pub v_star: f64,
    pub strictly_convex: bool,
}

/// Analytic minimum when `h > 1e-12`; otherwise the minimum over a
/// 2001-point scan of `[−V_max, V_max]` with
/// `V_max = 10(1 + |∂_sH_f| / max(|h|, 1e-12))`.
pub fn minimize(dt_hf: f64, grad: f64, h: f64) -> HarnackMin {
    if h > STRICT_CONVEXITY_EPS {
        let v_star = -grad / h;
        return HarnackMin {
            z_min: dt_hf - grad * grad / h,
            v_star,
            strictly_convex: true,
        };
    }
    let v_max = 10.0 * (1.0 + grad.abs() / h.abs().max(STRICT_CONVEXITY_EPS));
    let (v_star, z_min) = scan(dt_hf, grad, h, -v_max, v_max, SCAN_POINTS);
    HarnackMin {
        z_min,
        v_star,
        strictly_convex: false,
    }
}

/// Brute-force minimum of `Z` over an evenly spaced grid on `[lo, hi]`.
pub fn scan(dt_hf: f64, grad: f64, h: f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    (0..points)
        .map(|k| {
            let v = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            (v, z_value(dt_hf, grad, h, v))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("scan grid is nonempty")
}

pub fn harnack_min(stack: &GeometryStack, dt_hf: &[f64], node: usize) -> HarnackMin {
    minimize(dt_hf[node], stack.dhf_ds[node], stack.curvature[node])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackSample {
    pub node_id: usize,
    pub t: f64,
    pub hf: f64,
    pub dt_hf: f64,
    pub grad_hf: f64,
    pub h: f64,
    pub z_min: f64,
    /// Present only at strictly convex nodes.
    pub v_star: Option<f64>,
    /// `0`, `H_f/(2t)` or `H_f/c(t)` depending on the variant.
    pub variant_offset: f64,
    pub not_strictly_convex: bool,
}

impl HarnackSample {
    pub fn value(&self) -> f64 {
        self.z_min + self.variant_offset
    }
}

/// Positive function `c(t)` given as a table, linearly interpolated and held
/// constant outside its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CTable(pub Vec<(f64, f64)>);

impl CTable {
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::config("c_of_t", "table is empty"));
        }
        if let Some(&(t, c)) = self.0.iter().find(|&&(_, c)| !(c > 0.0 && c.is_finite())) {
            return Err(Error::config("c_of_t", format!("c({t}) = {c} is not positive")));
        }
        if self.0.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::config("c_of_t", "times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.0;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((t0, c0), (t1, c1)) = (w[0], w[1]);
            if t <= t1 {
                return c0 + (c1 - c0) * (t - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    Plain,
    /// Adds `H_f / (2t)`.
    #[serde(rename = "hamilton_2t")]
    Hamilton2t,
    /// Adds `H_f / c(t)`.
    GeneralC { c_of_t: CTable },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Hamilton2t => "hamilton_2t",
            Variant::GeneralC { .. } => "general_c",
        }
    }

    fn offset(&self, hf: f64, t: f64) -> f64 {
        match self {
            Variant::Plain => 0.0,
            Variant::Hamilton2t => hf / (2.0 * t),
            Variant::GeneralC { c_of_t } => hf / c_of_t.eval(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackFlags {
    pub weakly_convex_initial: bool,
    pub initial_z_nonneg: bool,
    pub third_derivative_zero: bool,
    /// Only required by the time-weighted variants.
    pub hf_nonneg_initial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub variant: String,
    pub samples: Vec<HarnackSample>,
    /// Minimum of `z_min + variant_offset` over interior samples.
    pub global_min: f64,
    /// Minimum of the plain `z_min` at the initial time.
    pub initial_min: f64,
    pub tol: f64,
    pub max_abs_dt_hf: f64,
    pub violations: Vec<HarnackSample>,
    pub hypothesis_flags: HarnackFlags,
    pub vacuous: bool,
}

impl HarnackReport {
    /// True unless a non-vacuous violation exists.
    pub fn passed(&self) -> bool {
        self.vacuous || self.violations.is_empty()
    }

    /// `(t, min value at t, violations at t)` per interior snapshot time.
    pub fn per_time(&self) -> Vec<(f64, f64, usize)> {
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        for s in &self.samples {
            let bad = usize::from(s.value() < -self.tol);
            match out.last_mut() {
                Some(last) if last.0 == s.t => {
                    last.1 = last.1.min(s.value());
                    last.2 += bad;
                }
                _ => out.push((s.t, s.value(), bad)),
            }
        }
        out
    }
}

/// `∂ₜH_f` per node at every snapshot: centered differences inside, a
/// one-sided second-order difference at either end.
pub fn time_derivative_hf(trace: &FlowTrace) -> Result<Vec<Vec<f64>>> {
    let snaps = &trace.snapshots;
    if snaps.len() < 3 {
        return Err(Error::Input(format!(
            "need at least 3 snapshots for time differences, got {}",
            snaps.len()
        )));
    }
    if trace.redistributed {
        return Err(Error::Input(
            "time derivatives along material nodes need redistribution = none".into(),
        ));
    }
    let m = snaps.len();
    let n = trace.node_count();
    let t: Vec<f64> = trace.times();
    let hf = |j: usize| &snaps[j].geometry.hf;
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let (idx, w) = if j == 0 {
            ([0, 1, 2], forward_weights(t[0], t[1], t[2]))
        } else if j == m - 1 {
            // backward difference is the forward one with time reversed
            let w = forward_weights(-t[m - 1], -t[m - 2], -t[m - 3]);
            ([m - 1, m - 2, m - 3], [-w[0], -w[1], -w[2]])
        } else {
            ([j - 1, j, j + 1], centered_weights(t[j - 1], t[j], t[j + 1]))
        };
        let row = (0..n)
            .map(|i| w[0] * hf(idx[0])[i] + w[1] * hf(idx[1])[i] + w[2] * hf(idx[2])[i])
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Default tolerance `0.05·max(1, max|∂ₜH_f|)·(N⁻² + dt)`.
pub fn default_tolerance(max_abs_dt_hf: f64, nodes: usize, dt: f64) -> f64 {
    0.05 * max_abs_dt_hf.max(1.0) * ((nodes as f64).powi(-2) + dt)
}

/// Evaluates the minimized Harnack quantity at every node of every interior
/// snapshot. `tol_scale` multiplies the default tolerance.
pub fn verify_differential_harnack(trace: &FlowTrace, variant: &Variant, tol_scale: f64) -> Result<HarnackReport> {
    if let Variant::GeneralC { c_of_t } = variant {
        c_of_t.validate()?;
    }
    let dt_hf = time_derivative_hf(trace)?;
    let snaps = &trace.snapshots;
    let m = snaps.len();
    let max_abs_dt_hf = dt_hf[1..m - 1]
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tol = tol_scale * default_tolerance(max_abs_dt_hf, trace.node_count(), trace.max_dt);

    let g0 = &snaps[0].geometry;
    let initial_min = (0..g0.len())
        .map(|i| harnack_min(g0, &dt_hf[0], i).z_min)
        .fold(f64::INFINITY, f64::min);
    let max_h0 = g0.curvature.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let max_hf0 = g0.hf.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min_h0 = g0.curvature.iter().copied().fold(f64::INFINITY, f64::min);
    let min_hf0 = g0.hf.iter().copied().fold(f64::INFINITY, f64::min);
    let flags = HarnackFlags {
        weakly_convex_initial: min_h0 >= -1e-6 * tol_scale * max_h0,
        initial_z_nonneg: initial_min >= -tol,
        third_derivative_zero: trace.third_derivative_zero,
        hf_nonneg_initial: min_hf0 >= -1e-6 * tol_scale * max_hf0,
    };
    let vacuous = !(flags.weakly_convex_initial
        && flags.initial_z_nonneg
        && flags.third_derivative_zero
        && (matches!(variant, Variant::Plain) || flags.hf_nonneg_initial));

    let mut samples = Vec::with_capacity((m - 2) * trace.node_count());
    for (j, snap) in snaps.iter().enumerate().take(m - 1).skip(1) {
        let g = &snap.geometry;
        let t = snap.time();
        for i in 0..g.len() {
            let hm = harnack_min(g, &dt_hf[j], i);
            samples.push(HarnackSample {
                node_id: snap.curve.node_ids()[i],
                t,
                hf: g.hf[i],
                dt_hf: dt_hf[j][i],
                grad_hf: g.dhf_ds[i],
                h: g.curvature[i],
                z_min: hm.z_min,
                v_star: hm.strictly_convex.then_some(hm.v_star),
                variant_offset: variant.offset(g.hf[i], t),
                not_strictly_convex: !hm.strictly_convex,
            });
        }
    }
    let global_min = samples.iter().map(HarnackSample::value).fold(f64::INFINITY, f64::min);
    let violations = samples.iter().filter(|s| s.value() < -tol).cloned().collect();
    Ok(HarnackReport {
        variant: variant.name().to_string(),
        samples,
        global_min,
        initial_min,
        tol,
        max_abs_dt_hf,
        violations,
        hypothesis_flags: flags,
        vacuous,
    })
}

/// Endpoints of one integral Harnack comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairQuery {
    pub node_id_1: usize,
    pub t1: f64,
    pub node_id_2: usize,
    pub t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralHarnackCheck {
    pub node_id_1: usize,
    pub t1: f64,
    pub node_id_2: usize,
    pub t2: f64,
    pub distance: f64,
    /// `d² / (t₂ − t₁)`, an upper bound for the path energy.
    pub delta_bound: f64,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub margin: Option<f64>,
    pub tol: Option<f64>,
    pub passed: bool,
    pub vacuous: bool,
    pub reason: Option<String>,
}

/// Compares `log H_f(x₂,t₂) − log H_f(x₁,t₁)` with `−(C/4)·d²/(t₂−t₁)`,
/// where `d` is the distance at time `t₁` between node `node_id_1` and the
/// material point `node_id_2` that sits at `x₂` at time `t₂`.
///
/// `c` is the pinching constant (`None` when it does not exist). When
/// `hypotheses_met` is false every check is marked vacuous, but margins are
/// still reported where they can be computed.
pub fn verify_integral_harnack(
    trace: &FlowTrace,
    pairs: &[PairQuery],
    c: Option<f64>,
    hypotheses_met: bool,
    tol_scale: f64,
) -> Result<Vec<IntegralHarnackCheck>> {
    if trace.redistributed {
        return Err(Error::Input(
            "integral Harnack checks follow material points; rerun with redistribution = none".into(),
        ));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for q in pairs {
        if !(q.t2 > q.t1) {
            return Err(Error::Input(format!("pair needs t2 > t1, got t1 = {}, t2 = {}", q.t1, q.t2)));
        }
        if !(q.t1 > 0.0) {
            return Err(Error::Input(format!("pair needs t1 > 0, got {}", q.t1)));
        }
        let s1 = trace
            .snapshot_at(q.t1)
            .ok_or_else(|| Error::Input(format!("no snapshot recorded at t = {}", q.t1)))?;
        let s2 = trace
            .snapshot_at(q.t2)
            .ok_or_else(|| Error::Input(format!("no snapshot recorded at t = {}", q.t2)))?;
        let locate = |s: &crate::flow::Snapshot, id: usize| {
            s.curve
                .index_of(id)
                .ok_or_else(|| Error::Input(format!("node id {id} not present at t = {}", s.time())))
        };
        let i1 = locate(s1, q.node_id_1)?;
        let i2_at_t1 = locate(s1, q.node_id_2)?;
        let i2 = locate(s2, q.node_id_2)?;
        let distance = intrinsic_distance(&s1.curve, i1, i2_at_t1);
        let delta_bound = distance * distance / (s2.time() - s1.time());
        let (h1, h2) = (s1.geometry.hf[i1], s2.geometry.hf[i2]);

        let mut check = IntegralHarnackCheck {
            node_id_1: q.node_id_1,
            t1: s1.time(),
            node_id_2: q.node_id_2,
            t2: s2.time(),
            distance,
            delta_bound,
            lhs: None,
            rhs: None,
            margin: None,
            tol: None,
            passed: true,
            vacuous: !hypotheses_met,
            reason: (!hypotheses_met).then(|| "pinching hypotheses not met".to_string()),
        };
        if !(h1 > 0.0 && h2 > 0.0) {
            check.vacuous = true;
            check.reason = Some(format!("H_f not positive at both endpoints ({h1}, {h2})"));
            out.push(check);
            continue;
        }
        let lhs = h2.ln() - h1.ln();
        check.lhs = Some(lhs);
        if let Some(c) = c {
            let rhs = -(c / 4.0) * delta_bound;
            let tol = tol_scale * (0.05 * rhs.abs() + 1e-6);
            let margin = lhs - rhs;
            check.rhs = Some(rhs);
            check.margin = Some(margin);
            check.tol = Some(tol);
            check.passed = check.vacuous || margin >= -tol;
        } else {
            check.vacuous = true;
            check.reason = Some("pinching constant undefined (inf H_f(0) ≤ 0)".into());
        }
        out.push(check);
    }
    Ok(out)
}

/// Deterministic sample of pairs: `count` queries over interior snapshot
/// times (excluding `t = 0`), alternating same-node and distinct-node pairs.
pub fn sample_pairs(trace: &FlowTrace, count: usize, seed: u64) -> Vec<PairQuery> {
    use rand::{Rng, SeedableRng};
    let times: Vec<f64> = trace.times().into_iter().filter(|&t| t > 0.0).collect();
    if times.len() < 2 {
        return Vec::new();
    }
    let ids = trace.initial().curve.node_ids().to_vec();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let a = rng.random_range(0..times.len() - 1);
            let b = rng.random_range(a + 1..times.len());
            let id1 = ids[rng.random_range(0..ids.len())];
            let id2 = if k % 2 == 0 { id1 } else { ids[rng.random_range(0..ids.len())] };
            PairQuery {
                node_id_1: id1,
                t1: times[a],
                node_id_2: id2,
                t2: times[b],
            }
        })
        .collect()
}
