//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines reach the terminal. Pass
//! criterion numbers as arguments to run a subset. The process fails only
//! when a criterion outside `KNOWN_FAILING` fails.

mod common;

use std::time::Instant;

use common::invariants::{run_deterministic, SUITE};
use common::loss::check_loss;
use common::pi_vs_full;
use tribody::couplings::ModelSpec;
use tribody::dicke::DickeLadder;
use tribody::dissipative::echo_scan;
use tribody::metrology::{echo_equivalence_check, optimal_unitary_gain, EchoKit, EchoStyle};
use tribody::semiclassical::{analytic_moments, fitted_echo_coefficients, twa_evolve};
use tribody::sweep::{gain_vs_collective_cooperativity, qfi_ratio_map, scaling_fit, BetaScheme, FitLaw, FixedEtaC};
use tribody::unitary::{echo_coefficients, find_tau_opt, ghz_metrics, qfi_curve};

/// Criteria that fail with the faithful implementation; each has a note in
/// the README.
const KNOWN_FAILING: &[usize] = &[1, 3, 4, 6, 9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

const TAU_OPT_N: [usize; 7] = [45, 301, 302, 303, 304, 305, 306];

fn criterion_1() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in TAU_OPT_N {
        let p = find_tau_opt(n, &ModelSpec::unitary_three_body()).unwrap();
        ok &= (0.60..=0.72).contains(&p.tau_opt);
        parts.push(format!("N={n}: {:.4}", p.tau_opt));
    }
    outcome(ok, format!("first QFI peak tau in [0.60, 0.72]; {}", parts.join(", ")))
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in TAU_OPT_N {
        let p = find_tau_opt(n, &ModelSpec::unitary_three_body()).unwrap();
        let r = p.qfi_peak / (n * n) as f64;
        ok &= r >= 0.7;
        parts.push(format!("N={n}: {r:.4}"));
    }
    outcome(ok, format!("F_Q/N^2 >= 0.7 at the first peak; {}", parts.join(", ")))
}

fn criterion_3() -> Outcome {
    let g = ghz_metrics(33).unwrap();
    let n2 = 33.0 * 33.0;
    let larger = g.top_population.max(g.bottom_population);
    let checks = [
        ("tau_ghz in [1.3, 1.5]", (1.3..=1.5).contains(&g.tau_ghz)),
        ("poles >= 0.98", g.pole_population >= 0.98),
        ("others < 1e-2", g.max_other < 1e-2),
        ("larger pole 0.62 +- 0.02", (larger - 0.62).abs() <= 0.02),
        ("F_Q/N^2 in [0.90, 1.00]", (0.90..=1.00).contains(&(g.qfi / n2))),
    ];
    let taus: Vec<f64> = [33, 63, 123].iter().map(|&n| ghz_metrics(n).unwrap().tau_ghz).collect();
    let monotone = taus.windows(2).all(|w| w[1] > w[0]);
    // Aitken extrapolation of the doubling sequence
    let (a, b, c) = (taus[0], taus[1], taus[2]);
    let limit = c - (c - b).powi(2) / ((c - b) - (b - a));
    let approach = monotone && (limit - 1.42).abs() <= 0.03;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty() && approach,
        format!(
            "N=33 tau={:.4} poles={:.4} max_other={:.2e} larger={:.4} F_Q/N^2={:.4}; tau(33,63,123)=({a:.4}, {b:.4}, {c:.4}) limit {limit:.4}; failed: [{}{}]",
            g.tau_ghz,
            g.pole_population,
            g.max_other,
            larger,
            g.qfi / n2,
            failed.join(", "),
            if approach { "" } else { " approach to 1.42" }
        ),
    )
}

fn criterion_4() -> Outcome {
    let n = 500;
    let model = ModelSpec::unitary_three_body();
    let short: Vec<f64> = (1..=10).map(|i| 0.05 * i as f64).collect();
    let exact: Vec<f64> = qfi_curve(n, &model, &short).unwrap().iter().map(|q| q / 4.0).collect();
    let twa = twa_evolve(n, 2000, 7, &short).unwrap();
    let twa_dev = twa
        .moments
        .iter()
        .zip(&exact)
        .map(|(m, e)| rel(m.sz_var, *e))
        .fold(0.0, f64::max);

    let mid: Vec<f64> = (0..=10).map(|i| 0.3 + 0.05 * i as f64).collect();
    let exact_mid = qfi_curve(n, &model, &mid).unwrap();
    let analytic_dev = mid
        .iter()
        .zip(&exact_mid)
        .map(|(&tau, q)| rel(analytic_moments(tau, n).1, q / 4.0))
        .fold(0.0, f64::max);

    let window: Vec<f64> = (0..=16).map(|i| 0.2 + 0.05 * i as f64).collect();
    let curves: Vec<(usize, Vec<(f64, f64)>)> = [128, 256, 512]
        .iter()
        .map(|&n| {
            let n2 = (n * n) as f64;
            let e = echo_coefficients(n, &window).unwrap();
            (n, e.iter().map(|x| (x.c_t / n2, x.v_t / n2)).collect())
        })
        .collect();
    let mut collapse: f64 = 0.0;
    let mut ansatz: f64 = 0.0;
    // the same deviations scaled by the curve maximum instead of pointwise
    let (mut collapse_peak, mut ansatz_peak): (f64, f64) = (0.0, 0.0);
    let peak = |c: &[(f64, f64)]| c.iter().fold((0.0f64, 0.0f64), |a, v| (a.0.max(v.0), a.1.max(v.1)));
    let (pc, pv) = peak(&curves[0].1);
    for (k, &tau) in window.iter().enumerate() {
        for (n, c) in &curves {
            let (c0, v0) = curves[0].1[k];
            collapse = collapse.max(rel(c[k].0, c0)).max(rel(c[k].1, v0));
            collapse_peak = collapse_peak
                .max((c[k].0 - c0).abs() / pc)
                .max((c[k].1 - v0).abs() / pv);
            let f = fitted_echo_coefficients(tau, *n);
            let n2 = (n * n) as f64;
            ansatz = ansatz.max(rel(f.c_t / n2, c[k].0)).max(rel(f.v_t / n2, c[k].1));
            let (qc, qv) = peak(c);
            ansatz_peak = ansatz_peak
                .max((f.c_t / n2 - c[k].0).abs() / qc)
                .max((f.v_t / n2 - c[k].1).abs() / qv);
        }
    }
    outcome(
        twa_dev <= 0.05 && analytic_dev <= 0.10 && collapse <= 0.03 && ansatz <= 0.10,
        format!(
            "TWA Var vs exact (tau<=0.5) {:.1}% [5%]; analytic Var (0.3..0.8) {:.1}% [10%]; C_t,V_t collapse {:.1}% [3%] ({:.1}% of peak); ansatz {:.1}% [10%] ({:.1}% of peak)",
            100.0 * twa_dev,
            100.0 * analytic_dev,
            100.0 * collapse,
            100.0 * collapse_peak,
            100.0 * ansatz,
            100.0 * ansatz_peak
        ),
    )
}

fn sz_mean(ladder: &DickeLadder, x: &[num_complex::Complex64]) -> f64 {
    x.iter().enumerate().map(|(m, v)| ladder.m_z(m) * v.norm_sqr()).sum()
}

/// Central difference with one Richardson step, error `O(h^4)`.
fn richardson(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    let coarse = f(h);
    (4.0 * f(h / 2.0) - coarse) / 3.0
}

fn criterion_5() -> Outcome {
    let mut equiv: f64 = 0.0;
    for n in [12, 33, 64] {
        for tau in [0.3, 0.66, 1.2] {
            equiv = equiv.max(echo_equivalence_check(n, tau).unwrap());
        }
    }
    let (phi, h) = (0.05, 1e-4);
    let mut closed: f64 = 0.0;
    for n in [10, 25, 40] {
        let mut kit = EchoKit::new(&ModelSpec::unitary_three_body(), n).unwrap();
        let l = *kit.ladder();
        for tau in [0.3, 0.7] {
            let t = kit.time(tau);
            let slope = kit.sz_gain(EchoStyle::SignFlip, t, phi).signal_slope;
            let fd = richardson(
                |step| {
                    let up = sz_mean(&l, &kit.final_state(EchoStyle::SignFlip, t, phi + step));
                    let dn = sz_mean(&l, &kit.final_state(EchoStyle::SignFlip, t, phi - step));
                    (up - dn) / (2.0 * step)
                },
                h,
            );
            closed = closed.max(rel(fd, slope));
        }
    }
    let mut open: f64 = 0.0;
    for (n, single) in [(8, 0.6), (20, 0.3), (40, 0.0)] {
        let model = ModelSpec::three_body(1.0, 0.5, single);
        let ts: Vec<f64> = [0.3, 0.7].iter().map(|tau| model.time_of_tau(n, *tau)).collect();
        let mid = echo_scan(&model, n, phi, &ts, 1e-12).unwrap();
        let diff = |step: f64| {
            let up = echo_scan(&model, n, phi + step, &ts, 1e-12).unwrap();
            let dn = echo_scan(&model, n, phi - step, &ts, 1e-12).unwrap();
            up.iter()
                .zip(&dn)
                .map(|(u, d)| (u.signal - d.signal) / (2.0 * step))
                .collect::<Vec<_>>()
        };
        let (coarse, fine) = (diff(h), diff(h / 2.0));
        for k in 0..ts.len() {
            open = open.max(rel((4.0 * fine[k] - coarse[k]) / 3.0, mid[k].derivative));
        }
    }
    outcome(
        equiv < 1e-9 && closed < 1e-6 && open < 1e-6,
        format!(
            "echo styles {equiv:.1e} [1e-9]; slope vs finite difference closed {closed:.1e}, open {open:.1e} [1e-6]"
        ),
    )
}

fn criterion_6() -> Outcome {
    let ns = [32usize, 64, 128, 256, 512];
    let model = ModelSpec::unitary_three_body();
    let opts: Vec<_> = ns
        .iter()
        .map(|&n| optimal_unitary_gain(&model, n, 1e-4, 1.2).unwrap())
        .collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = opts.iter().map(|o| o.gain).collect();
    let fit = scaling_fit(&xs, &ys, FitLaw::Proportional).unwrap();
    let mut kit = EchoKit::new(&model, 128).unwrap();
    let t = kit.time(opts[2].tau_opt);
    let g1 = kit.sz_gain(EchoStyle::SignFlip, t, 1e-4).gain_linear;
    let g2 = kit.sz_gain(EchoStyle::SignFlip, t, 1e-3).gain_linear;
    let plateau = rel(g2, g1);
    let gains: Vec<String> = ns.iter().zip(&ys).map(|(n, g)| format!("N={n}: {g:.2}")).collect();
    outcome(
        fit.residual < 0.10 && (0.3..=1.0).contains(&fit.a) && plateau < 0.05,
        format!(
            "G = a N with a = {:.4}, residual {:.1}%; {}; N=128 gain change 1e-4 -> 1e-3: {:.2}%",
            fit.a,
            100.0 * fit.residual,
            gains.join(", "),
            100.0 * plateau
        ),
    )
}

fn criterion_7() -> Outcome {
    let worst = (1..=6)
        .map(|n| pi_vs_full(&ModelSpec::three_body(1.0, 0.4, 0.9), n, 0.0))
        .fold(0.0, f64::max);
    let loss: Vec<String> = (2..=5)
        .filter_map(|n| check_loss(n, ModelSpec::three_body(0.7, 0.25, 0.0), 0.3, &[0.2, 0.6, 1.2], 10_000).err())
        .collect();
    outcome(
        worst < 1e-8 && loss.is_empty(),
        format!(
            "PI vs full Hilbert max moment deviation {worst:.1e} [1e-8]; loss trajectories within 3 SE: {}",
            if loss.is_empty() {
                "all".to_string()
            } else {
                loss.join("; ")
            }
        ),
    )
}

fn criterion_8() -> Outcome {
    let ns = [24usize, 36, 48, 60, 72, 90];
    let c = 10.0;
    let pts = gain_vs_collective_cooperativity(&ns, &[c], &FixedEtaC::default(), 4.0, 8).unwrap();
    let shaped = pts
        .iter()
        .all(|p| p.three_body.single_peaked && !p.three_body.d_boundary);
    let nc: Vec<f64> = pts.iter().map(|p| p.nc).collect();
    let d: Vec<f64> = pts.iter().map(|p| p.three_body.d_opt).collect();
    let g: Vec<f64> = pts.iter().map(|p| p.three_body.g_opt).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let dfit = scaling_fit(&nc, &d, FitLaw::PowerLaw).unwrap();
    let gfit = scaling_fit(&xs, &g, FitLaw::Linear).unwrap();
    let beats_oat = pts.iter().all(|p| p.three_body.g_opt > p.oat.g_opt);
    let rows: Vec<String> = pts
        .iter()
        .map(|p| {
            format!(
                "N={}: G3={:.3} d={:.2} Goat={:.3}",
                p.n_atoms, p.three_body.g_opt, p.three_body.d_opt, p.oat.g_opt
            )
        })
        .collect();
    outcome(
        shaped && (0.4..=0.6).contains(&dfit.b) && gfit.residual <= 0.10 && beats_oat,
        format!(
            "single-peaked interior optimum: {shaped}; d_opt ~ (NC)^{:.3}; G linear residual {:.1}%; 3BI > OAT: {beats_oat}; {}",
            dfit.b,
            100.0 * gfit.residual,
            rows.join(", ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let map = qfi_ratio_map(&[100, 200, 300], &[10.0, 1.0], &BetaScheme::default()).unwrap();
    let mut ok = true;
    let mut rows = Vec::new();
    for p in &map {
        if p.c == 10.0 {
            ok &= p.ratio_oat >= 3.0 && p.ratio_tat >= 2.5;
        } else {
            ok &= p.ratio_oat <= 1.2 && p.ratio_tat <= 1.2;
        }
        rows.push(format!(
            "N={} C={}{}: OAT x{:.2} TAT x{:.2}",
            p.n_atoms,
            p.c,
            if p.above_line { " (above)" } else { "" },
            p.ratio_oat,
            p.ratio_tat
        ));
    }
    outcome(
        ok,
        format!("C=10 needs >= 3 / 2.5, C=1 needs <= 1.2; {}", rows.join(", ")),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let failed: Vec<String> = SUITE
        .iter()
        .filter_map(|(name, _, _)| run_deterministic(name).err().map(|e| format!("{name}: {e}")))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failed.is_empty() && secs < 300.0,
        format!(
            "{} invariants in {secs:.1} s [300 s]; failures: {}",
            SUITE.len(),
            failed.len()
        ),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [fn() -> Outcome; 10] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let mut regressions = Vec::new();
    for (i, f) in criteria.iter().enumerate() {
        let k = i + 1;
        if !wanted.is_empty() && !wanted.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let known = KNOWN_FAILING.contains(&k);
        println!(
            "criterion {k}: {} ({:.0} s) {}{}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail,
            if !o.pass && known { " [known]" } else { "" }
        );
        if !o.pass && !known {
            regressions.push(k);
        }
        if o.pass && known {
            println!("criterion {k}: now passes; drop it from KNOWN_FAILING");
        }
    }
    if !regressions.is_empty() {
        eprintln!("unexpected failures: {regressions:?}");
        std::process::exit(1);
    }
}
