//! Scenario files: one initial curve, one weight, one flow configuration and
//! a list of checks, run end to end with artifacts written to disk.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::curve::CurveSpec;
use crate::error::{Error, Result};
use crate::flow::{pinch_monitor, run, sign_monitors, FlowConfig, FlowTrace, PinchReport, Redistribution, TimeStep};
use crate::harnack::{
    sample_pairs, time_derivative_hf, verify_differential_harnack, verify_integral_harnack, CTable, PairQuery,
    Variant,
};
use crate::oracles::{compare_radial, RadialSolution};
use crate::residuals::{evolution_residuals, refinement_study};
use crate::weights::PlaneWeight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    #[default]
    Plain,
    #[serde(rename = "hamilton_2t")]
    Hamilton2t,
    GeneralC,
}

fn default_slack() -> f64 {
    0.05
}

fn default_min_ratio() -> f64 {
    3.0
}

fn default_max_ratio() -> f64 {
    5.0
}

fn default_floor() -> f64 {
    1e-10
}

fn default_rel_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    Signs,
    Pinch {
        #[serde(default = "default_slack")]
        slack: f64,
    },
    DifferentialHarnack {
        #[serde(default)]
        variant: VariantKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_of_t: Option<CTable>,
    },
    IntegralHarnack {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pairs: Vec<PairQuery>,
        /// Number of additional pairs drawn from the recorded snapshots.
        #[serde(default)]
        samples: usize,
    },
    EvolutionResiduals {
        #[serde(default = "default_min_ratio")]
        min_ratio: f64,
        #[serde(default = "default_max_ratio")]
        max_ratio: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    RadialOracle {
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
    },
}

pub const CHECK_NAMES: [&str; 6] = [
    "signs",
    "pinch",
    "differential_harnack",
    "integral_harnack",
    "evolution_residuals",
    "radial_oracle",
];

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::Signs => "signs",
            Check::Pinch { .. } => "pinch",
            Check::DifferentialHarnack { .. } => "differential_harnack",
            Check::IntegralHarnack { .. } => "integral_harnack",
            Check::EvolutionResiduals { .. } => "evolution_residuals",
            Check::RadialOracle { .. } => "radial_oracle",
        }
    }

    /// Key of this check in `summary.json`.
    pub fn key(&self) -> String {
        match self {
            Check::DifferentialHarnack {
                variant: VariantKind::Plain,
                ..
            } => "harnack".into(),
            Check::DifferentialHarnack {
                variant: VariantKind::Hamilton2t,
                ..
            } => "harnack_hamilton_2t".into(),
            Check::DifferentialHarnack {
                variant: VariantKind::GeneralC,
                ..
            } => "harnack_general_c".into(),
            other => other.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub curve: CurveSpec,
    #[serde(default)]
    pub weight: PlaneWeight,
    pub flow: FlowConfig,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub seed: u64,
    /// Random displacement of node parameters, as a fraction of the
    /// parameter step.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn filesystem_safe(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".to_string() } else { path };
            Error::config(field, e.into_inner().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if !filesystem_safe(&self.name) {
            return Err(Error::config(
                "name",
                format!("{:?} must be nonempty and use only [A-Za-z0-9_.-]", self.name),
            ));
        }
        self.curve.check("curve")?;
        self.flow.validate("flow", 0.0)?;
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::config("jitter", format!("must lie in [0, 0.5), got {}", self.jitter)));
        }
        for (k, check) in self.checks.iter().enumerate() {
            self.validate_check(k, check)?;
        }
        Ok(())
    }

    fn validate_check(&self, k: usize, check: &Check) -> Result<()> {
        let field = |s: &str| format!("checks[{k}].{s}");
        let needs_material = matches!(
            check,
            Check::DifferentialHarnack { .. } | Check::IntegralHarnack { .. } | Check::EvolutionResiduals { .. }
        );
        if needs_material && self.flow.redistribution != Redistribution::None {
            return Err(Error::config(
                "flow.redistribution",
                format!("check `{}` follows material nodes and needs \"none\"", check.name()),
            ));
        }
        match check {
            Check::Signs => {}
            Check::Pinch { slack } => {
                if !(*slack >= 0.0) {
                    return Err(Error::config(field("slack"), "must be nonnegative"));
                }
            }
            Check::DifferentialHarnack { variant, c_of_t } => match (variant, c_of_t) {
                (VariantKind::GeneralC, None) => {
                    return Err(Error::config(field("c_of_t"), "general_c needs a table of (t, c) pairs"));
                }
                (VariantKind::GeneralC, Some(table)) => table.validate().map_err(|e| match e {
                    Error::Config { message, .. } => Error::config(field("c_of_t"), message),
                    other => other,
                })?,
                (_, Some(_)) => return Err(Error::config(field("c_of_t"), "only used by the general_c variant")),
                _ => {}
            },
            Check::IntegralHarnack { pairs, samples } => {
                if pairs.is_empty() && *samples == 0 {
                    return Err(Error::config(field("pairs"), "give explicit pairs or a sample count"));
                }
                for (j, p) in pairs.iter().enumerate() {
                    if !(p.t1 > 0.0 && p.t2 > p.t1) {
                        return Err(Error::config(
                            field(&format!("pairs[{j}]")),
                            format!("need 0 < t1 < t2, got t1 = {}, t2 = {}", p.t1, p.t2),
                        ));
                    }
                    let n = self.curve.node_count();
                    if p.node_id_1 >= n || p.node_id_2 >= n {
                        return Err(Error::config(field(&format!("pairs[{j}]")), format!("node ids must be below {n}")));
                    }
                }
            }
            Check::EvolutionResiduals {
                min_ratio,
                max_ratio,
                floor,
            } => {
                if !matches!(self.flow.dt, TimeStep::Fixed(_)) {
                    return Err(Error::config("flow.dt", "evolution_residuals needs a fixed step"));
                }
                if matches!(self.curve, CurveSpec::Nodes { .. }) {
                    return Err(Error::config("curve", "evolution_residuals cannot refine an explicit node list"));
                }
                if !(0.0 < *min_ratio && min_ratio <= max_ratio && *floor >= 0.0) {
                    return Err(Error::config(field("min_ratio"), "need 0 < min_ratio ≤ max_ratio and floor ≥ 0"));
                }
            }
            Check::RadialOracle { rel_tol } => {
                if !(*rel_tol > 0.0) {
                    return Err(Error::config(field("rel_tol"), "must be positive"));
                }
                self.radial_solution()
                    .ok_or_else(|| Error::config(field("check"), "radial_oracle needs a circle centred at the origin, b = 0 and A = cI"))?;
            }
        }
        Ok(())
    }

    /// Exact solution matching this scenario, if it is a centred circle
    /// under an isotropic weight.
    pub fn radial_solution(&self) -> Option<RadialSolution> {
        let CurveSpec::Circle { radius, center, .. } = &self.curve else {
            return None;
        };
        if center.is_some_and(|c| c != [0.0, 0.0]) || self.weight.b().norm() != 0.0 || self.jitter != 0.0 {
            return None;
        }
        let c = self.weight.isotropic_coefficient()?;
        Some(RadialSolution::new(1, *radius, c))
    }
}

/// Bundled scenarios as `(name, json)`.
pub const BUNDLED: [(&str, &str); 9] = [
    ("shrinking_circle", include_str!("../scenarios/shrinking_circle.json")),
    ("expanding_sphere_vacuous", include_str!("../scenarios/expanding_sphere_vacuous.json")),
    ("f_minimal_circle", include_str!("../scenarios/f_minimal_circle.json")),
    ("ellipse_weighted", include_str!("../scenarios/ellipse_weighted.json")),
    ("anisotropic_circle", include_str!("../scenarios/anisotropic_circle.json")),
    ("rounded_square", include_str!("../scenarios/rounded_square.json")),
    ("gauss_circle_integral", include_str!("../scenarios/gauss_circle_integral.json")),
    ("pinched_ellipse_integral", include_str!("../scenarios/pinched_ellipse_integral.json")),
    ("bean_nonconvex", include_str!("../scenarios/bean_nonconvex.json")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_json(text).expect("bundled scenario is valid"))
}

/// Loads a scenario from a file path, falling back to a bundled name when no
/// such file exists.
pub fn load(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read {arg}: {e}")))?;
        return Scenario::from_json(&text);
    }
    bundled(arg).ok_or_else(|| Error::Input(format!("{arg} is neither a readable file nor a bundled scenario")))
}

/// Statement and hypotheses of each check, for `describe`.
pub fn describe(check: &str) -> Option<&'static str> {
    let text = match check {
        "signs" => {
            "Sign preservation along the f-mean curvature flow ∂ₜX = −H_f N.

  If H_f ≥ 0 on the initial curve, then H_f ≥ 0 for all later times.
  If the initial curve is weakly convex (h ≥ 0), it stays weakly convex.

Hypotheses (each statement separately): the sign condition holds at t = 0.
Checked: min H_f and min h over every recorded step against
−1e-6 · (initial max of the same quantity). A quantity whose initial sign
condition fails is reported vacuous."
        }
        "pinch" => {
            "Curvature pinching.

  sup |h|²/H_f² over M_t ≤ C² := sup_{M₀}|h|² / inf_{M₀}H_f²  for all t ≥ 0.

Hypotheses:
  - ∇̄³f ≡ 0 (quadratic weight)
  - inf H_f > 0 on M₀
  - inf H_f + λ − 2μ ≤ 0, with λ, μ the largest and smallest eigenvalues of
    the tangential Hessian of f over M₀
Checked: the largest pinching ratio over the run against C²·(1 + slack),
slack 0.05 by default."
        }
        "differential_harnack" => {
            "Differential Harnack inequality.

  ∂ₜH_f + 2⟨∇H_f,V⟩ + h(V,V) ≥ 0  for all tangent V and all t > 0,
  equivalently ∂ₜH_f − h⁻¹(∇H_f,∇H_f) ≥ 0 where h > 0.

Hypotheses:
  - ∇̄³f ≡ 0 (quadratic weight)
  - the initial curve is weakly convex
  - the inequality holds at t = 0
Variants: hamilton_2t adds H_f/(2t), general_c adds H_f/c(t) for a positive
c(t). Both additionally need H_f ≥ 0 at t = 0.
Checked: ∂ₜH_f from centred differences of the trace, minimised over V
(analytically where h > 1e-12, by a grid scan elsewhere) at every node of
every interior snapshot, against −0.05·max(1, max|∂ₜH_f|)·(N⁻² + dt)."
        }
        "integral_harnack" => {
            "Integral Harnack inequality.

  H_f(x₂,t₂) / H_f(x₁,t₁) ≥ exp(−C·Δ/4),   0 < t₁ < t₂,
  Δ ≤ d(x₁, x̂₂, t₁)² / (t₂ − t₁),

where x̂₂ is the material point that reaches x₂ at t₂ and d is the distance
along the curve at time t₁.
Hypotheses: those of `pinch` (which define C) and of
`differential_harnack`, whose estimate the integration uses.
Checked: log H_f(x₂,t₂) − log H_f(x₁,t₁) ≥ −(C/4)·d²/(t₂ − t₁) up to
0.05·|rhs| + 1e-6, for explicit and sampled node/time pairs."
        }
        "evolution_residuals" => {
            "Evolution equations under ∂ₜX = −H_f N.

  ∂ₜg   = −2 H_f h
  ∂ₜN   = ∇H_f
  ∂ₜH_f = L H_f + (|h|² + ∇̄²f(N,N)) H_f,   L = Δ − ⟨∇̄f, ∇·⟩
  ∂ₜh   = ∇²H_f − H_f h²

Hypotheses: none beyond smoothness of f.
Checked: residual max-norms at (N, dt) and (2N, dt/2); each must shrink by
a factor in [3, 5] or already sit below a floor."
        }
        "radial_oracle" => {
            "Round circles under f = c|x|²/2 stay round with

  R(t)² = 1/c + (R₀² − 1/c)·e^{2ct}   (c ≠ 0),   R(t)² = R₀² − 2t   (c = 0).

Hypotheses: circle centred at the origin, b = 0, A = cI.
Checked: mean node distance to the centroid at every snapshot against the
closed form, relative tolerance 1e-4 by default."
        }
        _ => return None,
    };
    Some(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Integrate and write the trace only.
    Simulate,
    /// Integrate and evaluate every check.
    Verify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Artifacts go to `out_root/<scenario name>/`.
    pub out_root: PathBuf,
    /// Multiplies every default tolerance.
    pub tol_scale: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// The run completed and no non-vacuous check failed.
    pub passed: bool,
    pub summary: Value,
    pub out_dir: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Serialize)]
struct TraceRow {
    node_id: usize,
    x: f64,
    y: f64,
    g: f64,
    h: f64,
    #[serde(rename = "H")]
    curvature: f64,
    #[serde(rename = "Hf")]
    hf: f64,
    #[serde(rename = "dHf_ds")]
    dhf_ds: f64,
    #[serde(rename = "dtHf")]
    dt_hf: Option<f64>,
}

#[derive(Serialize)]
struct MonitorCsvRow {
    t: f64,
    #[serde(rename = "min_Hf")]
    min_hf: f64,
    min_h: f64,
    max_pinch: f64,
}

#[derive(Serialize)]
struct SnapshotIndexRow {
    file: String,
    step: usize,
    t: f64,
}

fn write_trace(dir: &Path, trace: &FlowTrace) -> Result<()> {
    let trace_dir = dir.join("trace");
    if trace_dir.exists() {
        fs::remove_dir_all(&trace_dir).map_err(io_err(&trace_dir))?;
    }
    fs::create_dir_all(&trace_dir).map_err(io_err(&trace_dir))?;
    let dt_hf = time_derivative_hf(trace).ok();
    let mut index = Vec::with_capacity(trace.snapshots.len());
    for (j, snap) in trace.snapshots.iter().enumerate() {
        let file = format!("{j:05}.csv");
        let g = &snap.geometry;
        let rows = (0..g.len()).map(|i| TraceRow {
            node_id: snap.curve.node_ids()[i],
            x: snap.curve.nodes()[i].x,
            y: snap.curve.nodes()[i].y,
            g: g.metric_g[i],
            h: g.sff_h[i],
            curvature: g.curvature[i],
            hf: g.hf[i],
            dhf_ds: g.dhf_ds[i],
            dt_hf: dt_hf.as_ref().map(|d| d[j][i]),
        });
        write_csv(&trace_dir.join(&file), rows)?;
        index.push(SnapshotIndexRow {
            file,
            step: snap.step,
            t: snap.time(),
        });
    }
    write_csv(&trace_dir.join("index.csv"), index)?;
    let monitors = trace.monitors.iter().map(|m| MonitorCsvRow {
        t: m.t,
        min_hf: m.min_hf,
        min_h: m.min_h,
        max_pinch: m.max_pinch,
    });
    write_csv(&dir.join("monitors.csv"), monitors)
}

fn entry(passed: bool, vacuous: bool, flags: Value, details: Value) -> Value {
    let mut map = Map::new();
    map.insert("passed".into(), json!(passed));
    map.insert("vacuous".into(), json!(vacuous));
    map.insert("hypothesis_flags".into(), flags);
    if let Value::Object(d) = details {
        map.extend(d);
    }
    Value::Object(map)
}

fn pinch_flags(p: &PinchReport) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("third_derivative_zero".into(), json!(p.third_derivative_zero));
    m.insert("inf_hf_positive".into(), json!(p.inf_hf0 > 0.0));
    m.insert("pinch_condition".into(), json!(p.hypothesis_value <= 0.0));
    m
}

struct Context<'a> {
    scenario: &'a Scenario,
    trace: &'a FlowTrace,
    dir: &'a Path,
    tol_scale: f64,
    harnack_reports: Map<String, Value>,
    integral: Vec<Value>,
}

impl Context<'_> {
    fn evaluate(&mut self, check: &Check) -> Result<Value> {
        let (sc, trace, tol_scale) = (self.scenario, self.trace, self.tol_scale);
        match check {
            Check::Signs => {
                let r = sign_monitors(trace, tol_scale);
                let passed = (r.hf_vacuous || r.hf_preserved) && (r.h_vacuous || r.h_preserved);
                Ok(entry(
                    passed,
                    r.hf_vacuous && r.h_vacuous,
                    json!({ "hf_nonneg_initial": !r.hf_vacuous, "h_nonneg_initial": !r.h_vacuous }),
                    json!({
                        "min_hf": r.min_hf, "min_h": r.min_h, "tol_hf": r.tol_hf, "tol_h": r.tol_h,
                        "hf_preserved": r.hf_preserved, "h_preserved": r.h_preserved,
                        "first_violation": r.first_violation,
                    }),
                ))
            }
            Check::Pinch { slack } => {
                let p = pinch_monitor(trace, &sc.weight);
                Ok(entry(
                    p.holds(slack * tol_scale),
                    !p.hypotheses_met,
                    Value::Object(pinch_flags(&p)),
                    json!({
                        "c_squared": p.c_squared, "sup_ratio": p.sup_ratio, "inf_hf0": p.inf_hf0,
                        "lambda": p.bounds.lambda, "mu": p.bounds.mu,
                        "hypothesis_value": p.hypothesis_value, "slack": slack * tol_scale,
                    }),
                ))
            }
            Check::DifferentialHarnack { variant, c_of_t } => {
                let variant = match variant {
                    VariantKind::Plain => Variant::Plain,
                    VariantKind::Hamilton2t => Variant::Hamilton2t,
                    VariantKind::GeneralC => Variant::GeneralC {
                        c_of_t: c_of_t.clone().expect("validated"),
                    },
                };
                let rep = verify_differential_harnack(trace, &variant, tol_scale)?;
                let csv_name = format!("harnack_summary_{}.csv", variant.name());
                write_csv(
                    &self.dir.join(&csv_name),
                    rep.per_time().into_iter().map(|(t, m, v)| HarnackCsvRow {
                        t,
                        global_min_at_t: m,
                        violations_at_t: v,
                    }),
                )?;
                let value = entry(
                    rep.passed(),
                    rep.vacuous,
                    serde_json::to_value(rep.hypothesis_flags).expect("flags serialize"),
                    json!({
                        "variant": rep.variant, "global_min": rep.global_min, "initial_min": rep.initial_min,
                        "tol": rep.tol, "violations": rep.violations.len(), "samples": rep.samples.len(),
                    }),
                );
                self.harnack_reports
                    .insert(check.key(), serde_json::to_value(&rep).expect("report serializes"));
                Ok(value)
            }
            Check::IntegralHarnack { pairs, samples } => {
                let p = pinch_monitor(trace, &sc.weight);
                let plain = verify_differential_harnack(trace, &Variant::Plain, tol_scale)?;
                let f = plain.hypothesis_flags;
                let met = p.hypotheses_met && f.weakly_convex_initial && f.initial_z_nonneg;
                let mut all = pairs.clone();
                all.extend(sample_pairs(trace, *samples, sc.seed));
                let checks = verify_integral_harnack(trace, &all, p.c(), met, tol_scale)?;
                let mut flags = pinch_flags(&p);
                flags.insert("weakly_convex_initial".into(), json!(f.weakly_convex_initial));
                flags.insert("initial_z_nonneg".into(), json!(f.initial_z_nonneg));
                let slack = checks
                    .iter()
                    .filter_map(|c| Some(c.margin? + c.tol?))
                    .fold(f64::INFINITY, f64::min);
                let failures = checks.iter().filter(|c| !c.passed).count();
                self.integral.extend(checks.iter().map(|c| serde_json::to_value(c).expect("check serializes")));
                Ok(entry(
                    failures == 0,
                    !met,
                    Value::Object(flags),
                    json!({
                        "pairs": checks.len(), "failures": failures, "c": p.c(),
                        "min_margin_slack": slack.is_finite().then_some(slack),
                    }),
                ))
            }
            Check::EvolutionResiduals {
                min_ratio,
                max_ratio,
                floor,
            } => {
                let rows = evolution_residuals(trace)?;
                write_csv(&self.dir.join("residuals.csv"), &rows)?;
                let study = refinement_study(&sc.curve, &sc.weight, &sc.flow)?;
                Ok(entry(
                    study.converged(*min_ratio, *max_ratio, *floor),
                    false,
                    json!({}),
                    json!({
                        "coarse_nodes": study.coarse_nodes, "coarse_dt": study.coarse_dt,
                        "coarse": study.coarse, "fine": study.fine, "ratios": study.ratios,
                        "band": [min_ratio, max_ratio],
                    }),
                ))
            }
            Check::RadialOracle { rel_tol } => {
                let sol = sc.radial_solution().expect("validated");
                let rows = compare_radial(trace, &sol)?;
                write_csv(&self.dir.join("oracle.csv"), &rows)?;
                let max_rel = rows.iter().map(|r| r.rel_err()).fold(0.0, f64::max);
                let tol = rel_tol * tol_scale;
                Ok(entry(
                    max_rel <= tol,
                    false,
                    json!({}),
                    json!({
                        "max_rel_err": max_rel, "rel_tol": tol,
                        "behaviour": serde_json::to_value(sol.behaviour()).expect("behaviour serializes"),
                    }),
                ))
            }
        }
    }
}

#[derive(Serialize)]
struct HarnackCsvRow {
    t: f64,
    global_min_at_t: f64,
    violations_at_t: usize,
}

/// Runs a validated scenario and writes its artifacts. Configuration and
/// input errors are returned as `Err`; a flow that breaks down or a failed
/// check yields `passed = false`.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Outcome> {
    scenario.validate()?;
    let dir = opts.out_root.join(&scenario.name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let curve = scenario.curve.build_jittered(scenario.jitter, scenario.seed)?;
    let (trace, run_error) = match run(&curve, &scenario.weight, &scenario.flow) {
        Ok(trace) => (trace, None),
        Err(failure) => (*failure.partial, Some(failure.error.to_string())),
    };
    write_trace(&dir, &trace)?;

    let mut run_info = json!({
        "termination": trace.termination,
        "steps": trace.steps,
        "t_final": trace.last().time(),
        "snapshots": trace.snapshots.len(),
        "nodes": trace.node_count(),
        "max_dt": trace.max_dt,
        "redistributed": trace.redistributed,
    });
    if let Some(e) = &run_error {
        run_info["error"] = json!(e);
    }

    let mut checks = Map::new();
    let mut all_passed = run_error.is_none();
    if opts.mode == Mode::Verify {
        let mut ctx = Context {
            scenario,
            trace: &trace,
            dir: &dir,
            tol_scale: opts.tol_scale,
            harnack_reports: Map::new(),
            integral: Vec::new(),
        };
        for check in &scenario.checks {
            let value = match ctx.evaluate(check) {
                Ok(v) => v,
                Err(e) if run_error.is_some() => entry(false, false, json!({}), json!({ "error": e.to_string() })),
                Err(e) => return Err(e),
            };
            all_passed &= value["passed"].as_bool().unwrap_or(false);
            checks.insert(check.key(), value);
        }
        if !ctx.harnack_reports.is_empty() {
            write_json(&dir.join("harnack_report.json"), &ctx.harnack_reports)?;
        }
        if scenario.checks.iter().any(|c| matches!(c, Check::IntegralHarnack { .. })) {
            write_json(&dir.join("integral_harnack.json"), &ctx.integral)?;
        }
    }

    let summary = json!({
        "scenario": scenario.name,
        "seed": scenario.seed,
        "mode": match opts.mode { Mode::Simulate => "simulate", Mode::Verify => "verify" },
        "tol_scale": opts.tol_scale,
        "passed": all_passed,
        "run": run_info,
        "checks": checks,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(Outcome {
        passed: all_passed,
        summary,
        out_dir: dir,
    })
}
