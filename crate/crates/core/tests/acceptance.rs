//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fmcf::curve::CurveSpec;
use fmcf::flow::{pinch_monitor, run, sign_monitors, FlowConfig, FlowTrace, PinchReport, Scheme, SignReport, TimeStep};
use fmcf::harnack::{minimize, sample_pairs, verify_differential_harnack, verify_integral_harnack, HarnackReport, PairQuery, Variant};
use fmcf::residuals::refinement_study;
use fmcf::scenario::{bundled, run_scenario, Mode, RunOptions, BUNDLED};
use fmcf::{DiscreteCurve, PlaneWeight};

type Verdict = (bool, String);

fn diag(a: f64, b: f64) -> PlaneWeight {
    PlaneWeight::new(0.0, Vector2::zeros(), Matrix2::new(a, 0.0, 0.0, b)).unwrap()
}

fn rk4(t_end: f64) -> FlowConfig {
    FlowConfig::new(Scheme::Rk4, TimeStep::Auto, t_end)
}

fn max_relative_radius_error(trace: &FlowTrace, exact: impl Fn(f64) -> f64) -> f64 {
    trace
        .snapshots
        .iter()
        .map(|s| (s.curve.mean_radius() - exact(s.time())).abs() / exact(s.time()))
        .fold(0.0, f64::max)
}

fn c1_shrinking_circle() -> Verdict {
    let curve = DiscreteCurve::circle(2.0, 256).unwrap();
    let trace = run(&curve, &PlaneWeight::zero(), &rk4(1.5).record_every(50)).unwrap();
    let err = max_relative_radius_error(&trace, |t| (4.0 - 2.0 * t).sqrt());
    (
        err <= 1e-4 && trace.last().time() == 1.5,
        format!("max rel err {err:.3e} over {} snapshots", trace.snapshots.len()),
    )
}

fn c2_f_minimal_circle() -> Verdict {
    let curve = DiscreteCurve::circle(1.0, 128).unwrap();
    let cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Fixed(1e-3), 1.0).record_every(100);
    let trace = run(&curve, &PlaneWeight::isotropic(1.0), &cfg).unwrap();
    let start = curve.nodes();
    let disp = trace
        .snapshots
        .iter()
        .flat_map(|s| s.curve.nodes().iter().zip(start).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max);
    (
        disp <= 1e-8 && trace.steps == 1000,
        format!("max displacement {disp:.3e} over {} steps", trace.steps),
    )
}

fn c3_residual_refinement() -> Verdict {
    let spec = CurveSpec::Ellipse { a: 2.0, b: 1.0, n: 128 };
    let cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Fixed(2e-4), 0.03).record_every(2);
    let study = refinement_study(&spec, &PlaneWeight::isotropic(0.1), &cfg).unwrap();
    let ok = study.ratios.iter().all(|r| (3.0..=5.0).contains(r));
    (
        ok,
        format!(
            "ratios g/N/H_f/h = {:.3}/{:.3}/{:.3}/{:.3}",
            study.ratios[0], study.ratios[1], study.ratios[2], study.ratios[3]
        ),
    )
}

/// One run of the convex suite, with every report the criteria need.
struct SuiteRun {
    label: String,
    harnack: HarnackReport,
    signs: SignReport,
    pinch: PinchReport,
}

fn convex_suite() -> &'static [SuiteRun] {
    static SUITE: OnceLock<Vec<SuiteRun>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let curves = [
            ("circle", CurveSpec::Circle { radius: 1.0, n: 128, center: None }),
            ("ellipse 2:1", CurveSpec::Ellipse { a: 1.0, b: 0.5, n: 128 }),
            ("rounded square", CurveSpec::Polar { radius: 1.0, harmonics: vec![(4, 0.04)], n: 128 }),
            ("ellipse 10:9", CurveSpec::Ellipse { a: 1.0, b: 0.9, n: 128 }),
            ("near square", CurveSpec::Polar { radius: 1.0, harmonics: vec![(4, 0.002)], n: 128 }),
        ];
        let weights = [
            ("A=0", PlaneWeight::zero()),
            ("A=0.3I", PlaneWeight::isotropic(0.3)),
            ("A=-0.3I", PlaneWeight::isotropic(-0.3)),
            ("A=diag(0.2,0)", diag(0.2, 0.0)),
        ];
        let mut cases: Vec<(String, CurveSpec, PlaneWeight, f64)> = Vec::new();
        for (cn, c) in &curves {
            for (wn, w) in &weights {
                cases.push((format!("{cn}, {wn}"), c.clone(), *w, 0.15));
            }
        }
        let a = (21f64.sqrt() - 1.0) / 2.0;
        cases.push((
            "pinched ellipse, A=0.2I".into(),
            CurveSpec::Ellipse { a, b: a / 2.0, n: 128 },
            PlaneWeight::isotropic(0.2),
            0.5,
        ));
        cases.push((
            "circle R=0.9, A=I".into(),
            CurveSpec::Circle { radius: 0.9, n: 128, center: None },
            PlaneWeight::isotropic(1.0),
            0.5,
        ));
        cases
            .into_iter()
            .map(|(label, spec, w, t_end)| {
                let trace = run(&spec.build().unwrap(), &w, &rk4(t_end).record_every(20)).unwrap();
                SuiteRun {
                    harnack: verify_differential_harnack(&trace, &Variant::Plain, 1.0).unwrap(),
                    signs: sign_monitors(&trace, 1.0),
                    pinch: pinch_monitor(&trace, &w),
                    label,
                }
            })
            .collect()
    })
}

fn c4_differential_harnack() -> Verdict {
    let suite = convex_suite();
    let applicable: Vec<&SuiteRun> = suite.iter().filter(|r| !r.harnack.vacuous).collect();
    let bad: Vec<String> = applicable
        .iter()
        .filter(|r| !r.harnack.violations.is_empty() || r.harnack.global_min < -r.harnack.tol)
        .map(|r| format!("{} (min {:.3e}, tol {:.1e})", r.label, r.harnack.global_min, r.harnack.tol))
        .collect();
    let circles = applicable.iter().filter(|r| r.label.starts_with("circle,")).count();
    (
        bad.is_empty() && circles == 4,
        format!(
            "{} of {} runs meet the t0 hypotheses, {} fail{}",
            applicable.len(),
            suite.len(),
            bad.len(),
            if bad.is_empty() { String::new() } else { format!(": {}", bad.join("; ")) }
        ),
    )
}

fn c5_hamilton_variant() -> Verdict {
    let curve = DiscreteCurve::circle(2f64.sqrt(), 128).unwrap();
    let cfg = FlowConfig::new(Scheme::Rk4, TimeStep::Fixed(1e-4), 0.6).record_every(100);
    let trace = run(&curve, &PlaneWeight::zero(), &cfg).unwrap();
    let rep = verify_differential_harnack(&trace, &Variant::Hamilton2t, 1.0).unwrap();
    let at_half: Vec<f64> = rep
        .samples
        .iter()
        .filter(|s| (s.t - 0.5).abs() < 1e-9)
        .map(|s| s.value())
        .collect();
    // R(t)² = 2 − 2t, so R(0.5) = 1, ∂ₜH = R⁻³ = 1 and H/(2t) = 1
    let worst = at_half.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
    (
        at_half.len() == 128 && worst <= 2e-3,
        format!("|value − 2| ≤ {worst:.3e} at {} nodes", at_half.len()),
    )
}

fn c6_sign_preservation() -> Verdict {
    let suite = convex_suite();
    let mut checked = 0;
    let mut bad = Vec::new();
    for r in suite {
        let s = &r.signs;
        if !s.hf_vacuous {
            checked += 1;
            if s.min_hf < -s.tol_hf {
                bad.push(format!("{}: min H_f {:.3e}", r.label, s.min_hf));
            }
        }
        if !s.h_vacuous {
            checked += 1;
            if s.min_h < -s.tol_h {
                bad.push(format!("{}: min h {:.3e}", r.label, s.min_h));
            }
        }
    }
    (
        bad.is_empty() && checked > 0,
        format!("{checked} sign conditions checked, {} violated {}", bad.len(), bad.join("; ")),
    )
}

fn c7_pinch_bound() -> Verdict {
    let suite = convex_suite();
    let met: Vec<&SuiteRun> = suite.iter().filter(|r| r.pinch.hypotheses_met).collect();
    let worst = met
        .iter()
        .map(|r| r.pinch.sup_ratio / r.pinch.c_squared.unwrap())
        .fold(0.0, f64::max);
    (
        !met.is_empty() && met.iter().all(|r| r.pinch.sup_ratio <= r.pinch.c_squared.unwrap() * 1.05),
        format!("{} runs meet the hypotheses; max sup ratio / C² = {worst:.4}", met.len()),
    )
}

fn c8_integral_harnack() -> Verdict {
    let w = PlaneWeight::isotropic(1.0);
    let curve = DiscreteCurve::circle(0.9, 128).unwrap();
    let trace = run(&curve, &w, &rk4(0.5).record_every(10)).unwrap();
    let pinch = pinch_monitor(&trace, &w);
    let plain = verify_differential_harnack(&trace, &Variant::Plain, 1.0).unwrap();
    let met = pinch.hypotheses_met && !plain.vacuous;
    let mut pairs = sample_pairs(&trace, 24, 11);
    let times = trace.times();
    let t1 = times[5];
    let t2 = times
        .iter()
        .copied()
        .find(|&t| t >= t1 + 0.25)
        .expect("trace covers t1 + 0.25");
    pairs.push(PairQuery {
        node_id_1: 0,
        t1,
        node_id_2: 64,
        t2,
    });
    let checks = verify_integral_harnack(&trace, &pairs, pinch.c(), met, 1.0).unwrap();
    let gauss_ok = met
        && checks.len() >= 20
        && checks
            .iter()
            .all(|c| !c.vacuous && c.margin.unwrap() >= -(0.05 * c.rhs.unwrap().abs() + 1e-6));
    let min_margin = checks.iter().filter_map(|c| c.margin).fold(f64::INFINITY, f64::min);

    let shrinking = run(
        &DiscreteCurve::circle(1.0, 128).unwrap(),
        &PlaneWeight::zero(),
        &rk4(0.4).record_every(20),
    )
    .unwrap();
    let st = shrinking.times();
    let same: Vec<PairQuery> = (1..st.len() - 1)
        .step_by(3)
        .map(|k| PairQuery {
            node_id_1: 7 * k % 128,
            t1: st[k],
            node_id_2: 7 * k % 128,
            t2: st[k + 1],
        })
        .collect();
    let same_checks = verify_integral_harnack(&shrinking, &same, Some(1.0), true, 1.0).unwrap();
    let same_ok = same_checks.iter().all(|c| c.margin.unwrap() > 0.0);
    let min_same = same_checks.iter().filter_map(|c| c.margin).fold(f64::INFINITY, f64::min);
    (
        gauss_ok && same_ok,
        format!(
            "{} pairs on circle R=0.9, A=I (min margin {min_margin:.3e}); {} same-node pairs on a shrinking circle (min margin {min_same:.3e})",
            checks.len(),
            same_checks.len()
        ),
    )
}

fn c9_minimizer() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let dt = rng.random_range(-10.0..10.0);
        let grad = rng.random_range(-10.0..10.0);
        let h = rng.random_range(1e-3..3.0);
        let m = minimize(dt, grad, h);
        // grid of 2001 points covering [v* − 1, v* + 1], shifted off-centre
        let shift = rng.random_range(-0.5e-3..0.5e-3);
        let scan = (0..2001)
            .map(|k| m.v_star + shift - 1.0 + k as f64 * 1e-3)
            .map(|v| dt + 2.0 * grad * v + h * v * v)
            .fold(f64::INFINITY, f64::min);
        let gap = (scan - m.z_min) / (1.0 + m.z_min.abs());
        worst = worst.max(gap.abs());
        if scan < m.z_min - 1e-12 * (1.0 + m.z_min.abs()) {
            return (false, format!("scan beat analytic minimum at ({dt}, {grad}, {h})"));
        }
    }
    (worst <= 1e-6, format!("worst normalised gap {worst:.3e} over 10^4 triples"))
}

fn c10_determinism_and_vacuity() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut diffs = Vec::new();
    for (name, _) in BUNDLED {
        let s = bundled(name).unwrap();
        for dir in [a.path(), b.path()] {
            let opts = RunOptions {
                out_root: dir.to_path_buf(),
                tol_scale: 1.0,
                mode: Mode::Verify,
            };
            run_scenario(&s, &opts).unwrap();
        }
        let sa = fs::read(a.path().join(name).join("summary.json")).unwrap();
        let sb = fs::read(b.path().join(name).join("summary.json")).unwrap();
        if sa != sb {
            diffs.push(name);
        }
    }
    let text = fs::read_to_string(a.path().join("expanding_sphere_vacuous/summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    let harnack = &summary["checks"]["harnack"];
    let vacuous_ok = summary["passed"] == true
        && harnack["vacuous"] == true
        && harnack["passed"] == true
        && harnack["hypothesis_flags"]["initial_z_nonneg"] == false
        && harnack["violations"].as_u64().unwrap_or(0) > 0;
    let entries_ok = summary["checks"]
        .as_object()
        .unwrap()
        .values()
        .all(|v| v.get("vacuous").is_some() && v.get("hypothesis_flags").is_some());
    (
        diffs.is_empty() && vacuous_ok && entries_ok,
        format!(
            "{} bundled summaries reproduced ({} differ); expanding sphere vacuous = {}",
            BUNDLED.len(),
            diffs.len(),
            harnack["vacuous"]
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("shrinking-circle oracle", c1_shrinking_circle),
        ("f-minimal circle is stationary", c2_f_minimal_circle),
        ("evolution residuals refine by 3-5x", c3_residual_refinement),
        ("differential Harnack on convex suite", c4_differential_harnack),
        ("Hamilton 2t variant on shrinking circle", c5_hamilton_variant),
        ("sign preservation", c6_sign_preservation),
        ("pinch bound", c7_pinch_bound),
        ("integral Harnack", c8_integral_harnack),
        ("minimizer equivalence", c9_minimizer),
        ("determinism and vacuity", c10_determinism_and_vacuity),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.2}s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
