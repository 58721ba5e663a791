//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use cpwloss::fieldsolve::{build_mesh, solve_potential, solve_potential_with, AxisKey, Cell, Grading, Layout, Mesh, Side, SolverOptions};
use cpwloss::geometry::{reference_presets, Deposition, Length, MaterialRole, RegionId, Treatment};
use cpwloss::participation::{budget_from_solution, bulk_participation, BudgetRegion};
use cpwloss::s21fit::{fit_s21, synth_trace, ResonatorFit};
use cpwloss::stats::{boxplot_stats, weighted_mean};
use cpwloss::tlsfit::{fit_tls, synth_sweep, thermal_factor, tls_inverse_q, tls_inverse_q_gradient, TlsParams};
use cpwloss::EPSILON_0;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn cpwloss(args: &[&str]) -> (Value, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_cpwloss"))
        .args(args)
        .args(["--format", "json"])
        .env_remove("CPWLOSS_CONFIG")
        .output()
        .expect("binary runs");
    let elapsed = start.elapsed();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    (serde_json::from_slice(&out.stdout).expect("JSON report"), elapsed)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_arithmetic() -> Outcome {
    let (report, elapsed) = cpwloss(&["budget", "--table", "all"]);
    let mut worst: f64 = 0.0;
    let mut totals = Vec::new();
    for r in report["results"].as_array().unwrap() {
        for c in r["cells"].as_array().unwrap() {
            let (printed, computed) = (num(&c["printed"]), num(&c["computed"]));
            if printed != 0.0 || computed != 0.0 {
                worst = worst.max(rel(computed, printed));
            }
        }
        let total = num(&r["budget"]["total_f_tan_delta"]);
        worst = worst.max(rel(total, num(&r["printed_total"])));
        totals.push(format!("{total:.2e}"));
    }
    check(
        totals.len() == 6 && worst < 0.01 && elapsed < Duration::from_secs(1),
        format!("6 tables, worst cell deviation {:.2}%, {:.3} s, totals {}", 100.0 * worst, elapsed.as_secs_f64(), totals.join(" ")),
    )
}

struct Tables {
    report: Value,
    elapsed: Duration,
}

fn solver_reproduction(t: &Tables) -> Outcome {
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for p in t.report["results"]["presets"].as_array().unwrap() {
        let name = format!("{}-{}", p["deposition"].as_str().unwrap(), p["treatment"].as_str().unwrap());
        for row in p["rows"].as_array().unwrap() {
            let region = row["region"].as_str().unwrap();
            let (printed, computed) = (num(&row["participation_printed"]), num(&row["participation_computed"]));
            let ok = match region {
                "substrate" | "air" => (computed - printed).abs() <= 0.02,
                _ if printed == 0.0 => computed == 0.0,
                _ => rel(computed, printed) <= 0.30,
            };
            if !ok {
                failures.push(format!("{name} {region} {computed:.3e} vs {printed:.3e}"));
            }
        }
        let (printed, computed) = (num(&p["total_printed"]), num(&p["total_computed"]));
        if rel(computed, printed) > 0.25 {
            failures.push(format!("{name} total {computed:.3e} vs {printed:.3e}"));
        }
        summary.push(format!("{name} {:+.1}%", 100.0 * (computed / printed - 1.0)));
    }
    // the presets run concurrently, so the wall time bounds each one
    let fast = t.elapsed < Duration::from_secs(300);
    if !fast {
        failures.push(format!("took {:.0} s", t.elapsed.as_secs_f64()));
    }
    if failures.is_empty() {
        Ok(format!("totals {}; {:.1} s for all six", summary.join(", "), t.elapsed.as_secs_f64()))
    } else {
        Err(failures.join("; "))
    }
}

fn loss_shares(t: &Tables) -> Outcome {
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for p in t.report["results"]["presets"].as_array().unwrap() {
        let hf = p["treatment"].as_str().unwrap() == "hf_treated";
        let share = |key: &str| {
            p["shares"]
                .as_array()
                .unwrap()
                .iter()
                .find(|s| s["region"] == key)
                .map_or(0.0, |s| num(&s["percent"]))
        };
        let expected: &[(&str, f64)] = if hf {
            &[("metal_air", 57.0), ("substrate", 43.0)]
        } else {
            &[("substrate_air", 68.0), ("metal_air", 20.0), ("substrate", 12.0)]
        };
        let name = format!("{}-{}", p["deposition"].as_str().unwrap(), p["treatment"].as_str().unwrap());
        let got: Vec<String> = expected.iter().map(|(k, _)| format!("{:.1}", share(k))).collect();
        summary.push(format!("{name} {}", got.join("/")));
        for (key, target) in expected {
            if (share(key) - target).abs() > 8.0 {
                failures.push(format!("{name} {key} {:.1}% vs {target}%", share(key)));
            }
        }
    }
    if failures.is_empty() {
        Ok(summary.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn elliptic_k(k: f64) -> f64 {
    let (mut a, mut b) = (1.0f64, (1.0 - k * k).sqrt());
    while (a - b).abs() > 1e-15 * a {
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    std::f64::consts::PI / (2.0 * a)
}

/// Finest level used for the analytic comparison.
const FINEST_LEVEL: u32 = 4;

fn analytic_fields() -> Outcome {
    let mut stack = reference_presets(Deposition::T400, Treatment::Reference);
    stack.layer_ma_top = Length(0.0);
    stack.layer_ma_side = Length(0.0);
    stack.layer_sa = Length(0.0);
    let sol = solve_potential(&build_mesh(&stack, FINEST_LEVEL).unwrap()).unwrap();
    let (w, s) = (stack.trace_width.0, stack.gap.0);
    let k = w / (w + 2.0 * s);
    let eps = stack.material(MaterialRole::Substrate).relative_permittivity;
    let exact = 2.0 * EPSILON_0 * (eps + 1.0) * elliptic_k(k) / elliptic_k((1.0 - k * k).sqrt());
    let cap_err = rel(sol.capacitance(), exact);

    let d = 2e-6;
    let region = |_x: f64, _y: f64| {
        Some(Cell {
            region: RegionId::Substrate,
            permittivity: 11.9,
        })
    };
    let layout = Layout {
        x_keys: vec![AxisKey { at: 0.0, refine: false }, AxisKey { at: 5e-6, refine: false }],
        y_keys: vec![AxisKey { at: 0.0, refine: true }, AxisKey { at: d, refine: true }],
        conductors: vec![],
        sides: [Side::Neumann, Side::Neumann, Side::Dirichlet(0.0), Side::Dirichlet(1.0)],
        region_at: &region,
        mirror_factor: 1.0,
    };
    let grading = Grading {
        h_min: d / 100.0,
        growth: 1.2,
        h_max: d / 10.0,
    };
    let mesh = Mesh::from_layout(&layout, &grading).unwrap();
    let plate = solve_potential(&mesh).unwrap();
    let mut lin_err: f64 = 0.0;
    for i in 0..mesh.nx() {
        for j in 0..mesh.ny() {
            lin_err = lin_err.max((plate.potential[mesh.node(i, j)] - mesh.ys[j] / d).abs());
        }
    }
    check(
        cap_err < 0.02 && lin_err < 1e-3,
        format!("capacitance off by {:.2}% at level {FINEST_LEVEL}, plate potential off by {lin_err:.1e}", 100.0 * cap_err),
    )
}

fn sum_rule() -> Outcome {
    let stack = reference_presets(Deposition::T400, Treatment::Reference);
    let mesh = build_mesh(&stack, 2).unwrap();
    let sol = solve_potential(&mesh).unwrap();
    let sum = bulk_participation(&sol, RegionId::Substrate).unwrap() + bulk_participation(&sol, RegionId::Air).unwrap();
    let base = budget_from_solution(&stack, &sol).unwrap();
    let options = SolverOptions {
        excitation: 250.0,
        ..SolverOptions::default()
    };
    let scaled = budget_from_solution(&stack, &solve_potential_with(&mesh, &options).unwrap()).unwrap();
    let worst = BudgetRegion::TABLE_ORDER
        .iter()
        .map(|&r| rel(scaled.budget.participation(r), base.budget.participation(r)))
        .fold(0.0, f64::max);
    check(
        (sum - 1.0).abs() < 1e-3 && worst < 1e-10,
        format!("bulk sum - 1 = {:.1e}, voltage scaling changes participations by {worst:.1e}", sum - 1.0),
    )
}

fn s21_round_trip() -> Outcome {
    let mut worst = [0.0f64; 3];
    for &q_l in &[1e3, 1e4, 1e5, 1e6, 1e7] {
        for &phi in &[-0.45, 0.0, 0.3] {
            for &ratio in &[0.2, 0.5, 0.8] {
                let width = 6e9 / q_l;
                let tau = 8.0 / (12.0 * width);
                let truth = ResonatorFit::ideal(6e9, q_l, q_l / ratio, phi).with_environment(0.7, -2.0, tau);
                let trace = synth_trace(&truth, 6e9 - 6.0 * width, 6e9 + 6.0 * width, 1501, None, 0);
                let Ok(fit) = fit_s21(&trace) else {
                    return Err(format!("noiseless fit failed at q_l={q_l} phi={phi}"));
                };
                worst[0] = worst[0].max(rel(fit.f_r, truth.f_r));
                worst[1] = worst[1].max(rel(fit.q_i, truth.q_i));
                worst[2] = worst[2].max(rel(fit.q_c, truth.q_c));
            }
        }
    }
    let truth = ResonatorFit::ideal(6e9, 5e5, 1e6, 0.1).with_environment(0.9, 0.3, 40e-9);
    let width = truth.f_r / truth.q_l;
    let good = (0..100)
        .filter(|&seed| {
            let trace = synth_trace(&truth, truth.f_r - 5.0 * width, truth.f_r + 5.0 * width, 1001, Some(40.0), seed);
            fit_s21(&trace).is_ok_and(|f| rel(f.q_i, truth.q_i) < 0.05)
        })
        .count();
    check(
        worst[0] < 1e-7 && worst[1] < 5e-3 && worst[2] < 5e-3 && good >= 95,
        format!(
            "noiseless worst f_r {:.1e}, Q_i {:.1e}, Q_c {:.1e}; 40 dB: {good}/100 within 5%",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn tls_round_trip() -> Outcome {
    let truth = TlsParams {
        f_tan_delta0: 1e-6,
        n_c: 10.0,
        b: 0.4,
        delta_other: 5e-8,
    };
    let fit = fit_tls(&synth_sweep(&truth, 0.1, 1e6, 30, 6e9, 0.01, 0.0, 1)).map_err(|e| e.to_string())?;
    let worst_param = [
        rel(fit.f_tan_delta0, truth.f_tan_delta0),
        rel(fit.n_c, truth.n_c),
        rel(fit.b, truth.b),
        rel(fit.delta_other, truth.delta_other),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let good = (0..100)
        .filter(|&seed| {
            fit_tls(&synth_sweep(&truth, 0.1, 1e6, 30, 6e9, 0.01, 0.03, seed))
                .is_ok_and(|f| rel(f.f_tan_delta0, truth.f_tan_delta0) < 0.10)
        })
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let p = TlsParams {
            f_tan_delta0: 10f64.powf(rng.gen_range(-7.0..-5.0)),
            n_c: 10f64.powf(rng.gen_range(0.0..3.0)),
            b: rng.gen_range(0.1..1.0),
            delta_other: 10f64.powf(rng.gen_range(-8.0..-6.0)),
        };
        let (n, t, f) = (10f64.powf(rng.gen_range(-1.0..6.0)), 0.01, rng.gen_range(4e9..8e9));
        let g = tls_inverse_q_gradient(&p, n, t, f);
        let x = [p.f_tan_delta0, p.n_c, p.b, p.delta_other];
        for k in 0..4 {
            let h = 1e-5 * x[k];
            let at = |v: f64| {
                let mut y = x;
                y[k] = v;
                let q = TlsParams {
                    f_tan_delta0: y[0],
                    n_c: y[1],
                    b: y[2],
                    delta_other: y[3],
                };
                tls_inverse_q(&q, n, t, f)
            };
            let fd = (at(x[k] + h) - at(x[k] - h)) / (2.0 * h);
            worst_grad = worst_grad.max((g[k] - fd).abs() / fd.abs().max(1e-300));
        }
    }
    check(
        worst_param < 0.01 && good >= 90 && worst_grad < 1e-6,
        format!("noiseless worst parameter {worst_param:.1e}; 3% noise: {good}/100 within 10%; gradient vs FD {worst_grad:.1e}"),
    )
}

fn thermal_constant() -> Outcome {
    let worst = (0..=40)
        .map(|k| (1.0 - thermal_factor(4e9 + k as f64 * 1e8, 0.010)).abs())
        .fold(0.0, f64::max);
    check(worst < 1e-8, format!("max |tanh - 1| = {worst:.1e} over 4-8 GHz at 10 mK"))
}

fn measured_vs_simulated(t: &Tables) -> Outcome {
    let rows = t.report["results"]["measured_vs_simulated"].as_array().unwrap();
    let flagged = rows.iter().filter(|r| r["underestimated"] == true).count();
    let mut classes: Vec<String> = rows
        .iter()
        .map(|r| r["chip"].as_str().unwrap().rsplit_once('-').unwrap().0.to_string())
        .collect();
    classes.sort();
    classes.dedup();
    let min_ratio = rows.iter().map(|r| num(&r["ratio"])).fold(f64::INFINITY, f64::min);
    check(
        rows.len() == 12 && classes.len() == 6 && flagged == rows.len(),
        format!("{flagged}/{} entries in {} classes underestimated, smallest ratio {min_ratio:.2}", rows.len(), classes.len()),
    )
}

fn brute_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[j] < v[i] {
                v.swap(i, j);
            }
        }
    }
    let pos = (v.len() - 1) as f64 * p;
    let k = pos.floor() as usize;
    if k + 1 >= v.len() {
        v[k]
    } else {
        v[k] + (pos - k as f64) * (v[k + 1] - v[k])
    }
}

fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..80);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(0..3))).collect();
        let b = boxplot_stats(&values).map_err(|e| e.to_string())?;
        for (got, p) in [(b.q1, 0.25), (b.median, 0.5), (b.q3, 0.75)] {
            let want = brute_quantile(&values, p);
            worst = worst.max((got - want).abs() / (1.0 + want.abs()));
        }
    }
    let m = weighted_mean(&[(1.0, 0.1), (3.0, 0.3)]).map_err(|e| e.to_string())?;
    let mean_err = (m.mean - 1.2).abs();
    check(
        worst < 1e-12 && mean_err < 1e-12,
        format!("1000 vectors, worst quantile error {worst:.1e}; two-point mean error {mean_err:.1e}"),
    )
}

fn main() {
    let start = Instant::now();
    let (report, elapsed) = cpwloss(&["reproduce-tables"]);
    let tables = Tables { report, elapsed };
    let results: Vec<(&str, Outcome)> = vec![
        ("table arithmetic", table_arithmetic()),
        ("solver reproduction", solver_reproduction(&tables)),
        ("loss shares", loss_shares(&tables)),
        ("analytic field oracle", analytic_fields()),
        ("sum rule and voltage scaling", sum_rule()),
        ("S21 round trip", s21_round_trip()),
        ("TLS fit round trip", tls_round_trip()),
        ("thermal factor at 10 mK", thermal_constant()),
        ("measured vs simulated", measured_vs_simulated(&tables)),
        ("statistics oracles", statistics()),
    ];
    let mut failed = 0;
    for (k, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed ({:.1} s)", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
