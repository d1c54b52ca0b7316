//! Randomized invariants shared by the property tests and the acceptance run.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use tribody::couplings::{derive, physical_from_fixed_etac, rate_ratios_fixed_etac, ModelSpec, PhysicalParams};
use tribody::dicke::{build_splus_power, coherent_state, rotate, Axis, DickeLadder, PureState, Rotator};
use tribody::dissipative::{lindblad_evolve, DensityState, LindbladTask, Representation};
use tribody::metrology::{run_protocol, EchoKit, EchoStyle, ProtocolSpec, Readout};
use tribody::semiclassical::{flow_map, mf_evolve, BlochPoint};
use tribody::trajectory::{LossConvention, LossModel, TrajectoryState, Unraveling};
use tribody::unitary::{energy, evolve_pure, wigner};
use tribody::Error;

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.norm()))
}

fn i() -> C64 {
    C64::new(0.0, 1.0)
}

/// `exp(-i pi S_y)|S, M> = (-1)^(S-M) |S, -M>`, as a dense matrix.
fn y_flip(dim: usize) -> DMatrix<C64> {
    let mut u = DMatrix::zeros(dim, dim);
    for m in 0..dim {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        u[(dim - 1 - m, m)] = C64::new(sign, 0.0);
    }
    u
}

fn z_phase(l: &DickeLadder, angle: f64) -> DMatrix<C64> {
    DMatrix::from_fn(l.dim(), l.dim(), |r, c| {
        if r == c {
            C64::from_polar(1.0, -angle * l.m_z(r))
        } else {
            C64::default()
        }
    })
}

fn closed(which: usize) -> ModelSpec {
    [
        ModelSpec::unitary_three_body(),
        ModelSpec::oat(1.0, 0.0, 0.0),
        ModelSpec::tat(1.0, 0.0, 0.0),
    ][which]
        .clone()
}

type Check = fn(&mut TestRunner) -> Result<(), String>;

macro_rules! invariant {
    ($name:ident, $strat:expr, |$pat:pat_param| $body:block) => {
        fn $name(runner: &mut TestRunner) -> Result<(), String> {
            runner
                .run(&$strat, |$pat| {
                    $body
                    Ok(())
                })
                .map_err(|e| e.to_string())
        }
    };
}

invariant!(spin_commutators, 1usize..=12, |n| {
    let l = DickeLadder::new(n).unwrap();
    let (x, y, z) = (l.sx().to_dense(), l.sy().to_dense(), l.sz().to_dense());
    prop_assert!(max_abs(&(&x * &y - &y * &x - &z * i())) < 1e-12);
    prop_assert!(max_abs(&(&y * &z - &z * &y - &x * i())) < 1e-12);
    prop_assert!(max_abs(&(&z * &x - &x * &z - &y * i())) < 1e-12);
});

invariant!(casimir_is_scalar, 1usize..=40, |n| {
    let l = DickeLadder::new(n).unwrap();
    let (x, y, z) = (l.sx().to_dense(), l.sy().to_dense(), l.sz().to_dense());
    let s = n as f64 / 2.0;
    let id = DMatrix::<C64>::identity(l.dim(), l.dim());
    let c = &x * &x + &y * &y + &z * &z - id * C64::new(s * (s + 1.0), 0.0);
    prop_assert!(max_abs(&c) < 1e-9 * (s * s).max(1.0));
});

invariant!(raising_powers_are_products, (1usize..=30, 1usize..=5), |(n, k)| {
    prop_assume!(k <= n);
    let l = DickeLadder::new(n).unwrap();
    let sp = l.splus().to_dense();
    let mut want = DMatrix::<C64>::identity(l.dim(), l.dim());
    for _ in 0..k {
        want = &sp * want;
    }
    let got = build_splus_power(&l, k).unwrap();
    prop_assert_eq!(got.offsets().count(), 1);
    let scale = max_abs(&want).max(1.0);
    prop_assert!(max_abs(&(got.to_dense() - want)) < 1e-12 * scale);
});

invariant!(
    rotations_preserve_norm,
    (1usize..=60, 0.0..PI, 0.0..(2.0 * PI), -7.0..7.0f64, 0usize..3),
    |(n, theta, phi, angle, ax)| {
        let l = DickeLadder::new(n).unwrap();
        let psi = coherent_state(&l, theta, phi).unwrap();
        let out = rotate(&psi, [Axis::X, Axis::Y, Axis::Z][ax], angle);
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }
);

invariant!(y_rotation_by_pi_matches_wigner_d, 1usize..=24, |n| {
    let l = DickeLadder::new(n).unwrap();
    let got = Rotator::new(&l).matrix(Axis::Y, PI);
    prop_assert!(max_abs(&(got - y_flip(l.dim()))) < 1e-10);
});

invariant!(three_body_flips_under_y_pi_and_z_third, 3usize..=20, |n| {
    let l = DickeLadder::new(n).unwrap();
    let h = ModelSpec::unitary_three_body().hamiltonian(&l).to_dense();
    let u = y_flip(l.dim());
    // e^{i pi Sy} H e^{-i pi Sy} = U^dag H U with U = e^{-i pi Sy}
    prop_assert!(max_abs(&(u.adjoint() * &h * &u + &h)) < 1e-10);
    let r = z_phase(&l, PI / 3.0);
    prop_assert!(max_abs(&(r.adjoint() * &h * &r + &h)) < 1e-10);
});

invariant!(hermitian_band_symmetry, (2usize..=30, 0usize..3), |(n, which)| {
    let l = DickeLadder::new(n).unwrap();
    let h = closed(which).hamiltonian(&l);
    let dense = h.to_dense();
    prop_assert!(max_abs(&(&dense - dense.adjoint())) < 1e-12);
    prop_assert!(h.is_hermitian(1e-12));
});

invariant!(three_body_keeps_every_third_level, (3usize..=90, 0.0..2.0f64), |(
    n,
    tau,
)| {
    let l = DickeLadder::new(n).unwrap();
    let ev = evolve_pure(&PureState::north(l), &ModelSpec::unitary_three_body(), &[tau], 1e-10).unwrap();
    for (m, a) in ev.states[0].amplitudes().iter().enumerate() {
        if m % 3 != 0 {
            prop_assert!(a.norm() < 1e-14, "m = {}, |c| = {}", m, a.norm());
        }
    }
    prop_assert!((ev.states[0].norm_sqr() - 1.0).abs() < 1e-8);
});

invariant!(z3_phase_is_global_on_pole_dynamics, (3usize..=60, 0.0..1.5f64), |(
    n,
    tau,
)| {
    let l = DickeLadder::new(n).unwrap();
    let psi = evolve_pure(&PureState::north(l), &ModelSpec::unitary_three_body(), &[tau], 1e-10)
        .unwrap()
        .states
        .remove(0);
    let rot = rotate(&psi, Axis::Z, -2.0 * PI / 3.0);
    // unit overlap modulus means the rotation only changes a global phase
    prop_assert!((psi.inner(&rot).norm() - 1.0).abs() < 1e-10);
});

invariant!(energy_is_conserved, (3usize..=50, 0.0..PI, 0.0..(2.0 * PI)), |(
    n,
    theta,
    phi,
)| {
    let l = DickeLadder::new(n).unwrap();
    let psi = coherent_state(&l, theta, phi).unwrap();
    let model = ModelSpec::unitary_three_body();
    let e0 = energy(&model, &psi);
    let ev = evolve_pure(&psi, &model, &[0.3, 0.9, 1.4], 1e-11).unwrap();
    let scale = e0.abs().max((n as f64).powi(3) * 1e-3);
    for s in &ev.states {
        prop_assert!((energy(&model, s) - e0).abs() < 1e-8 * scale);
    }
});

invariant!(wigner_has_z3_symmetry, (3usize..=15, 0.05..0.8f64), |(n, tau)| {
    let l = DickeLadder::new(n).unwrap();
    let psi = evolve_pure(&PureState::north(l), &ModelSpec::unitary_three_body(), &[tau], 1e-10)
        .unwrap()
        .states
        .remove(0);
    let w = wigner(&psi, 13, 24, None);
    prop_assert!(w.imag_residue < 1e-9);
    for row in &w.values {
        for j in 0..24 {
            prop_assert!((row[j] - row[(j + 8) % 24]).abs() < 1e-9);
        }
    }
});

invariant!(
    mean_field_conserves_radius_and_energy,
    (-0.3..0.3f64, -0.3..0.3f64, 10usize..=1000),
    |(x0, y0, n)| {
        let p0 = BlochPoint::new(x0, y0, 1.0);
        let traj = mf_evolve(&p0, n, &[0.2, 0.7, 1.5], 1e-12).unwrap();
        for p in &traj {
            prop_assert!((p.radius_sq() - p0.radius_sq()).abs() < 1e-9);
            prop_assert!((p.energy() - p0.energy()).abs() < 1e-8);
        }
    }
);

invariant!(flow_map_is_z3_covariant, (0.02..0.5f64, 0.0..(2.0 * PI)), |(
    tilt,
    phi,
)| {
    let a = BlochPoint::from_angles(tilt, phi);
    let b = BlochPoint::from_angles(tilt, phi + 2.0 * PI / 3.0);
    let f = flow_map(&[a, b], 0.05, 1.0).unwrap();
    let (c, s) = ((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin());
    let d = f[0].delta;
    prop_assert!((c * d.x - s * d.y - f[1].delta.x).abs() < 1e-10);
    prop_assert!((s * d.x + c * d.y - f[1].delta.y).abs() < 1e-10);
    prop_assert!((d.z - f[1].delta.z).abs() < 1e-10);
});

invariant!(
    branching_is_complete,
    (
        1usize..=40,
        0.0..PI,
        0.0..(2.0 * PI),
        proptest::collection::vec(0.0..1.0f64, 0..6),
        any::<bool>()
    ),
    |(n, theta, phi, draws, total)| {
        let l = DickeLadder::new(n).unwrap();
        let convention = if total {
            LossConvention::Total
        } else {
            LossConvention::PerChannel
        };
        let spec = LossModel::new(ModelSpec::three_body(1.0, 0.0, 0.0), 0.8, convention).unwrap();
        let u = Unraveling::new(spec, n, 1e-10);
        let mut st = TrajectoryState::from_pure(&coherent_state(&l, theta, phi).unwrap());
        for d in draws {
            if st.n_current == 0 {
                break;
            }
            let br = u.loss_branches(&st);
            let sum: f64 = br.iter().map(|b| b.2).sum();
            let want = convention.channel_rate(0.8) * st.n_current as f64;
            prop_assert!((sum / want - 1.0).abs() < 1e-12, "sum {} want {}", sum, want);
            for b in &br {
                prop_assert!(b.3.two_s <= b.3.n_current);
                prop_assert!(b.2 >= 0.0);
            }
            st = u.apply_loss_jump(&st, d).unwrap().0;
        }
    }
);

invariant!(
    lindblad_preserves_trace_hermiticity_positivity,
    (2usize..=8, 0.0..2.0f64, 0.0..2.0f64, 0usize..3),
    |(n, gamma, single, which)| {
        let model = match which {
            0 => ModelSpec::three_body(1.0, gamma, single),
            1 => ModelSpec::oat(0.8, gamma, single),
            _ => ModelSpec::tat(0.8, gamma, single),
        };
        let rho0 = DensityState::initial_for(&model, n, Representation::for_model(&model)).unwrap();
        let out = lindblad_evolve(&rho0, &LindbladTask::new(model, vec![0.1, 0.5, 1.0])).unwrap();
        for r in &out {
            prop_assert!((r.trace() - C64::new(1.0, 0.0)).norm() < 1e-8);
            prop_assert!(r.hermiticity_error() < 1e-10);
            prop_assert!(r.min_eigenvalue() > -1e-9);
            prop_assert!(r.sector_populations().iter().all(|&p| p > -1e-9));
        }
    }
);

invariant!(collective_jumps_keep_maximal_spin, (2usize..=8, 0.01..2.0f64), |(
    n,
    gamma,
)| {
    let model = ModelSpec::three_body(1.0, gamma, 0.0);
    let rho0 = DensityState::north(n, Representation::PiBlocks).unwrap();
    let out = lindblad_evolve(&rho0, &LindbladTask::new(model, vec![0.7])).unwrap();
    let pops = out[0].sector_populations();
    prop_assert!((pops[0] - 1.0).abs() < 1e-9);
    prop_assert!(pops[1..].iter().all(|p| p.abs() < 1e-12));
});

fn physical() -> impl Strategy<Value = PhysicalParams> {
    (
        0.1..10.0f64,
        0.1..10.0f64,
        0.1..10.0f64,
        1.0..500.0f64,
        0.5..50.0f64,
        0.01..100.0f64,
        1usize..2000,
    )
        .prop_map(
            |(g, kappa, gamma, delta_a, delta_c, alpha_sq, n_atoms)| PhysicalParams {
                g,
                kappa,
                gamma,
                delta_a,
                delta_c,
                alpha_sq,
                n_atoms,
            },
        )
}

invariant!(chi_forms_agree, physical(), |p| {
    let d = derive(&p).unwrap();
    prop_assert!((d.chi2_from_etas(p.g, p.alpha_sq, p.n_atoms) / d.chi2 - 1.0).abs() < 1e-12);
    prop_assert!((d.chi3_from_etas(p.g, p.alpha_sq, p.n_atoms) / d.chi3 - 1.0).abs() < 1e-12);
});

invariant!(
    couplings_scale_with_frequency_units,
    (physical(), 0.01..100.0f64),
    |(p, s)| {
        let (a, b) = (derive(&p).unwrap(), derive(&p.rescaled(s)).unwrap());
        let rel = |x: f64, y: f64| (x / y - 1.0).abs() < 1e-12;
        prop_assert!(rel(b.g_eff, s * a.g_eff) && rel(b.chi2, s * a.chi2) && rel(b.chi3, s * a.chi3));
        prop_assert!(rel(b.gamma_collective, s * a.gamma_collective) && rel(b.gamma_single, s * a.gamma_single));
        prop_assert!(rel(b.eta_a, a.eta_a) && rel(b.eta_c, a.eta_c) && rel(b.cooperativity, a.cooperativity));
        prop_assert!(rel(b.beta_kappa, a.beta_kappa) && rel(b.beta_gamma, a.beta_gamma));
    }
);

invariant!(
    fixed_etac_ratios_match_physical_rates,
    (1usize..500, 0.1..100.0f64, 0.05..50.0f64, 0.05..2.0f64),
    |(n, c, d, eta_c)| {
        let r = rate_ratios_fixed_etac(n, c, d, eta_c).unwrap();
        let phys = derive(&physical_from_fixed_etac(n, c, d, eta_c, 3.0)).unwrap();
        prop_assert!((phys.eta_c / eta_c - 1.0).abs() < 1e-12);
        prop_assert!((phys.cooperativity / c - 1.0).abs() < 1e-12);
        prop_assert!((phys.gamma_collective / phys.chi3 / r.gamma_collective - 1.0).abs() < 1e-10);
        prop_assert!((phys.gamma_single / phys.chi3 / r.gamma_single - 1.0).abs() < 1e-10);
        prop_assert!((phys.chi2 / phys.chi3 / r.chi2 - 1.0).abs() < 1e-10);
        // (2/d)(8d/2C) leaves 8N / (eta_c^2 C)
        let product = r.gamma_collective * r.gamma_single;
        prop_assert!((product / (8.0 * n as f64 / (eta_c * eta_c * c)) - 1.0).abs() < 1e-12);
    }
);

invariant!(
    gain_never_exceeds_qfi_bound,
    (
        3usize..=40,
        0.05..1.5f64,
        0.0..0.3f64,
        0usize..3,
        any::<bool>(),
        0usize..3
    ),
    |(n, tau, phi0, style, proj, which)| {
        // OAT and TAT lack the pi/3 symmetry
        let echo_style = if which == 0 {
            [EchoStyle::SignFlip, EchoStyle::PiY, EchoStyle::PiOver3][style]
        } else {
            EchoStyle::SignFlip
        };
        let readout = if proj { Readout::Projection } else { Readout::Sz };
        let spec = ProtocolSpec {
            model: closed(which),
            tau,
            phi0,
            readout,
            echo_style,
        };
        match run_protocol(&spec, n) {
            Ok(r) => prop_assert!(r.gain_linear <= r.qfi / n as f64 * (1.0 + 1e-8) + 1e-12),
            Err(Error::Degenerate(_)) => {}
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
);

invariant!(
    gain_ignores_clock_units,
    (3usize..=30, 0.05..1.5f64, 0.001..0.2f64, 0.05..20.0f64, 0usize..3),
    |(n, tau, phi0, s, which)| {
        let scaled = match which {
            0 => ModelSpec::three_body(s, 0.0, 0.0),
            1 => ModelSpec::oat(s, 0.0, 0.0),
            _ => ModelSpec::tat(s, 0.0, 0.0),
        };
        let run = |model: ModelSpec| {
            let spec = ProtocolSpec {
                model,
                tau,
                phi0,
                readout: Readout::Sz,
                echo_style: EchoStyle::SignFlip,
            };
            run_protocol(&spec, n)
        };
        if let (Ok(x), Ok(y)) = (run(closed(which)), run(scaled)) {
            prop_assert!(
                (x.gain_linear / y.gain_linear - 1.0).abs() < 1e-7,
                "{} vs {}",
                x.gain_linear,
                y.gain_linear
            );
        }
    }
);

invariant!(
    echo_styles_agree_for_three_body,
    (3usize..=40, 0.05..1.5f64, 0.0..0.5f64),
    |(n, tau, phi)| {
        let mut kit = EchoKit::new(&ModelSpec::unitary_three_body(), n).unwrap();
        let t = kit.time(tau);
        let base = kit.final_state(EchoStyle::SignFlip, t, phi);
        for style in [EchoStyle::PiY, EchoStyle::PiOver3] {
            let other = kit.final_state(style, t, phi);
            // equal up to a global phase
            let ov: C64 = base.iter().zip(&other).map(|(a, b)| a.conj() * b).sum();
            prop_assert!((ov.norm() - 1.0).abs() < 1e-9, "{:?}: |overlap| = {}", style, ov.norm());
        }
    }
);

invariant!(
    open_gain_ignores_clock_units,
    (3usize..=8, 0.1..1.2f64, 0.01..1.0f64, 0.2..5.0f64),
    |(n, tau, gamma, s)| {
        let run = |chi3: f64| {
            let spec = ProtocolSpec {
                model: ModelSpec::three_body(chi3, chi3 * gamma, 0.0),
                tau,
                phi0: 0.05,
                readout: Readout::Sz,
                echo_style: EchoStyle::SignFlip,
            };
            run_protocol(&spec, n).unwrap().gain_linear
        };
        let (x, y) = (run(1.0), run(s));
        prop_assert!((x / y - 1.0).abs() < 1e-6, "{} vs {}", x, y);
    }
);

/// `(name, cases, check)` for every invariant.
pub const SUITE: &[(&str, u32, Check)] = &[
    ("spin_commutators", 48, spin_commutators),
    ("casimir_is_scalar", 48, casimir_is_scalar),
    ("raising_powers_are_products", 48, raising_powers_are_products),
    ("rotations_preserve_norm", 48, rotations_preserve_norm),
    (
        "y_rotation_by_pi_matches_wigner_d",
        24,
        y_rotation_by_pi_matches_wigner_d,
    ),
    (
        "three_body_flips_under_y_pi_and_z_third",
        24,
        three_body_flips_under_y_pi_and_z_third,
    ),
    ("hermitian_band_symmetry", 48, hermitian_band_symmetry),
    (
        "three_body_keeps_every_third_level",
        48,
        three_body_keeps_every_third_level,
    ),
    (
        "z3_phase_is_global_on_pole_dynamics",
        48,
        z3_phase_is_global_on_pole_dynamics,
    ),
    ("energy_is_conserved", 48, energy_is_conserved),
    ("wigner_has_z3_symmetry", 32, wigner_has_z3_symmetry),
    (
        "mean_field_conserves_radius_and_energy",
        48,
        mean_field_conserves_radius_and_energy,
    ),
    ("flow_map_is_z3_covariant", 48, flow_map_is_z3_covariant),
    ("branching_is_complete", 64, branching_is_complete),
    (
        "lindblad_preserves_trace_hermiticity_positivity",
        32,
        lindblad_preserves_trace_hermiticity_positivity,
    ),
    (
        "collective_jumps_keep_maximal_spin",
        32,
        collective_jumps_keep_maximal_spin,
    ),
    ("chi_forms_agree", 64, chi_forms_agree),
    (
        "couplings_scale_with_frequency_units",
        64,
        couplings_scale_with_frequency_units,
    ),
    (
        "fixed_etac_ratios_match_physical_rates",
        64,
        fixed_etac_ratios_match_physical_rates,
    ),
    ("gain_never_exceeds_qfi_bound", 32, gain_never_exceeds_qfi_bound),
    ("gain_ignores_clock_units", 32, gain_ignores_clock_units),
    ("echo_styles_agree_for_three_body", 32, echo_styles_agree_for_three_body),
    ("open_gain_ignores_clock_units", 24, open_gain_ignores_clock_units),
];

fn config(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    }
}

/// Runs one invariant with fresh random inputs.
pub fn run(name: &str) -> Result<(), String> {
    let (_, cases, check) = SUITE.iter().find(|e| e.0 == name).expect("known invariant");
    check(&mut TestRunner::new(config(*cases)))
}

/// Runs one invariant with a fixed input stream.
pub fn run_deterministic(name: &str) -> Result<(), String> {
    let (_, cases, check) = SUITE.iter().find(|e| e.0 == name).expect("known invariant");
    check(&mut TestRunner::new_with_rng(
        config(*cases),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    ))
}
