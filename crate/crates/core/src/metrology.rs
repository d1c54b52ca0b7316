//! Time-reversal protocols, gains and readout benchmarks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::ModelSpec;
use crate::dicke::{c, phase_z, Axis, DickeLadder, PureState, Rotator, C64};
use crate::dissipative::echo_scan;
use crate::error::{Error, Result};
use crate::unitary::{echo_coefficients, golden_max, SpectralPropagator};

/// How the second half of the echo undoes the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoStyle {
    /// Evolve with the sign of the Hamiltonian reversed.
    SignFlip,
    /// Conjugate the forward evolution by a pi rotation about y.
    PiY,
    /// Shift the encoded phase by pi/3 and keep evolving forward.
    PiOver3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Sz,
    /// Overlap with the initial state.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeMethod {
    Correlator,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSpec {
    pub model: ModelSpec,
    pub tau: f64,
    pub phi0: f64,
    pub readout: Readout,
    pub echo_style: EchoStyle,
}

impl ProtocolSpec {
    pub fn unitary(tau: f64, phi0: f64) -> Self {
        ProtocolSpec {
            model: ModelSpec::unitary_three_body(),
            tau,
            phi0,
            readout: Readout::Sz,
            echo_style: EchoStyle::SignFlip,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GainResult {
    pub gain_linear: f64,
    pub gain_db: f64,
    pub signal: f64,
    pub signal_slope: f64,
    pub variance: f64,
    pub sql_reference: f64,
    /// QFI of the probe state for rotations about z.
    pub qfi: f64,
    pub slope_method: SlopeMethod,
}

impl GainResult {
    fn new(n_atoms: usize, signal: f64, slope: f64, variance: f64, qfi: f64, method: SlopeMethod) -> Self {
        let g = crate::dissipative::gain_of(n_atoms, slope, variance);
        GainResult {
            gain_linear: g,
            gain_db: 10.0 * g.log10(),
            signal,
            signal_slope: slope,
            variance,
            sql_reference: 1.0 / n_atoms as f64,
            qfi,
            slope_method: method,
        }
    }
}

fn sz_stats(ladder: &DickeLadder, x: &[C64]) -> (f64, f64) {
    let p: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let mean = x
        .iter()
        .enumerate()
        .map(|(m, v)| ladder.m_z(m) * v.norm_sqr())
        .sum::<f64>()
        / p;
    let var = x
        .iter()
        .enumerate()
        .map(|(m, v)| (ladder.m_z(m) - mean).powi(2) * v.norm_sqr())
        .sum::<f64>()
        / p;
    (mean, var)
}

fn mul_sz(ladder: &DickeLadder, x: &[C64]) -> Vec<C64> {
    x.iter().enumerate().map(|(m, v)| v * ladder.m_z(m)).collect()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Unitary echo machinery for one `(model, N)`.
pub struct EchoKit {
    ladder: DickeLadder,
    model: ModelSpec,
    prop: SpectralPropagator,
    rot: Option<Rotator>,
    psi0: PureState,
}

impl EchoKit {
    pub fn new(model: &ModelSpec, n_atoms: usize) -> Result<Self> {
        if !model.is_unitary() {
            return Err(Error::invalid("model", "the pure-state echo needs a closed model"));
        }
        let ladder = DickeLadder::new(n_atoms)?;
        let psi0 = crate::trajectory::initial_state(model, n_atoms)?;
        Ok(EchoKit {
            prop: SpectralPropagator::for_model(model, &ladder),
            model: model.clone(),
            rot: None,
            ladder,
            psi0,
        })
    }

    pub fn ladder(&self) -> &DickeLadder {
        &self.ladder
    }

    pub fn time(&self, tau: f64) -> f64 {
        self.model.time_of_tau(self.ladder.n_atoms(), tau)
    }

    fn rotator(&mut self) -> &Rotator {
        let l = self.ladder;
        self.rot.get_or_insert_with(|| Rotator::new(&l))
    }

    /// Probe state `U(t)|psi0>`.
    pub fn probe(&self, t: f64) -> Vec<C64> {
        self.prop.apply(self.psi0.amplitudes(), t)
    }

    /// Second half `B` of the echo (or `B'` when `adjoint`), so that the
    /// final state is `B exp(-i phi Sz) U(t) |psi0>`.
    fn second_half(&mut self, style: EchoStyle, x: &[C64], t: f64, adjoint: bool) -> Vec<C64> {
        let pi = std::f64::consts::PI;
        let l = self.ladder;
        match style {
            EchoStyle::SignFlip => self.prop.apply(x, if adjoint { t } else { -t }),
            EchoStyle::PiY => {
                // exp(i pi Sy) U(+-t) exp(-i pi Sy)
                let mut y = x.to_vec();
                self.rotator().apply(&mut y, Axis::Y, pi);
                let mut y = self.prop.apply(&y, if adjoint { -t } else { t });
                self.rotator().apply(&mut y, Axis::Y, -pi);
                y
            }
            EchoStyle::PiOver3 => {
                // exp(i pi/3 Sz) U(+-t) exp(-i pi/3 Sz)
                let mut y = x.to_vec();
                phase_z(&l, &mut y, pi / 3.0);
                let mut y = self.prop.apply(&y, if adjoint { -t } else { t });
                phase_z(&l, &mut y, -pi / 3.0);
                y
            }
        }
    }

    /// State after the full echo.
    pub fn final_state(&mut self, style: EchoStyle, t: f64, phi: f64) -> Vec<C64> {
        let mut x = self.probe(t);
        phase_z(&self.ladder, &mut x, phi);
        self.second_half(style, &x, t, false)
    }

    /// Gain of the `Sz` readout with the exact correlator slope.
    pub fn sz_gain(&mut self, style: EchoStyle, t: f64, phi: f64) -> GainResult {
        let l = self.ladder;
        let probe = self.probe(t);
        let (_, probe_var) = sz_stats(&l, &probe);
        let mut chi = probe;
        phase_z(&l, &mut chi, phi);
        let fin = self.second_half(style, &chi, t, false);
        let (signal, variance) = sz_stats(&l, &fin);
        // d<Sz>/dphi = -2 Im <Sz chi| B' Sz B |chi>
        let back = self.second_half(style, &mul_sz(&l, &fin), t, true);
        let z = dot(&mul_sz(&l, &chi), &back);
        let slope = -2.0 * z.im;
        GainResult::new(
            l.n_atoms(),
            signal,
            slope,
            variance,
            4.0 * probe_var,
            SlopeMethod::Correlator,
        )
    }

    /// Projection onto the initial state: `(<P>, Var P, d<P>/dphi)`. The
    /// second half is unitary and undoes `U`, so `<P> = |<psi_t|e^{-i phi Sz}|psi_t>|^2`.
    pub fn projection(&self, t: f64, phi: f64) -> (f64, f64, f64) {
        let probe = self.probe(t);
        let l = self.ladder;
        let mut f = C64::default();
        let mut df = C64::default();
        for (m, v) in probe.iter().enumerate() {
            let mz = l.m_z(m);
            let w = v.norm_sqr() * C64::from_polar(1.0, -phi * mz);
            f += w;
            df += w * c(0.0, -mz);
        }
        let p = f.norm_sqr();
        (p, p * (1.0 - p), 2.0 * (f.conj() * df).re)
    }
}

/// Runs one protocol. Closed models use the pure-state echo; open
/// three-body, OAT and TAT models delegate to the density-matrix engine
/// (sign-flip echo with `Sz` readout only).
pub fn run_protocol(spec: &ProtocolSpec, n_atoms: usize) -> Result<GainResult> {
    if !(spec.phi0 >= 0.0) {
        return Err(Error::invalid("phi0", "must be non-negative"));
    }
    if !spec.model.is_unitary() {
        if spec.echo_style != EchoStyle::SignFlip || spec.readout != Readout::Sz {
            return Err(Error::invalid(
                "echo_style",
                "open-system echoes use the sign flip with Sz readout",
            ));
        }
        let t = spec.model.time_of_tau(n_atoms, spec.tau);
        let p = echo_scan(&spec.model, n_atoms, spec.phi0, &[t], 1e-9)?[0];
        return Ok(GainResult::new(
            n_atoms,
            p.signal,
            p.derivative,
            p.variance,
            f64::NAN,
            SlopeMethod::Correlator,
        ));
    }
    let mut kit = EchoKit::new(&spec.model, n_atoms)?;
    let t = kit.time(spec.tau);
    let r = match spec.readout {
        Readout::Sz => kit.sz_gain(spec.echo_style, t, spec.phi0),
        Readout::Projection => {
            let (p, var, dp) = kit.projection(t, spec.phi0);
            let (_, pv) = sz_stats(kit.ladder(), &kit.probe(t));
            GainResult::new(n_atoms, p, dp, var, 4.0 * pv, SlopeMethod::Analytic)
        }
    };
    if r.variance < 1e-14 {
        return Err(Error::Degenerate(format!(
            "readout variance {:.1e} at phi0 = {}; use phi0 > 0",
            r.variance, spec.phi0
        )));
    }
    // Cramer-Rao ordering between this readout and the optimal one.
    if r.gain_linear > r.qfi / n_atoms as f64 * (1.0 + 1e-8) + 1e-12 {
        return Err(Error::Logic(format!(
            "gain {} exceeds F_Q/N = {}",
            r.gain_linear,
            r.qfi / n_atoms as f64
        )));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectionBenchmark {
    pub p_mean: f64,
    pub dphi2: f64,
    pub qfi: f64,
}

/// Projection readout after the unitary three-body echo.
pub fn projection_benchmark(n_atoms: usize, tau: f64, phi: f64) -> Result<ProjectionBenchmark> {
    let kit = EchoKit::new(&ModelSpec::unitary_three_body(), n_atoms)?;
    let t = kit.time(tau);
    let (p, var, dp) = kit.projection(t, phi);
    let (_, pv) = sz_stats(kit.ladder(), &kit.probe(t));
    Ok(ProjectionBenchmark {
        p_mean: p,
        dphi2: if dp != 0.0 { var / (dp * dp) } else { f64::INFINITY },
        qfi: 4.0 * pv,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptimalGain {
    pub tau_opt: f64,
    pub gain: f64,
}

/// Largest unitary sign-flip gain over `tau` in `[0.02, tau_max]`.
pub fn optimal_unitary_gain(model: &ModelSpec, n_atoms: usize, phi0: f64, tau_max: f64) -> Result<OptimalGain> {
    let mut kit = EchoKit::new(model, n_atoms)?;
    let taus: Vec<f64> = (0..)
        .map(|i| 0.02 + 0.01 * i as f64)
        .take_while(|&t| t <= tau_max + 1e-12)
        .collect();
    let mut g = |tau: f64| {
        let t = kit.time(tau);
        kit.sz_gain(EchoStyle::SignFlip, t, phi0).gain_linear
    };
    let vals: Vec<f64> = taus.iter().map(|&t| g(t)).collect();
    let (ib, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let lo = taus[ib.saturating_sub(1)];
    let hi = taus[(ib + 1).min(taus.len() - 1)];
    let cell = std::cell::RefCell::new(g);
    let (tau_opt, gain) = golden_max(|t| (cell.borrow_mut())(t), lo, hi, 1e-6);
    Ok(OptimalGain { tau_opt, gain })
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicRange {
    pub tau: f64,
    pub phi0: Vec<f64>,
    pub gain: Vec<f64>,
    /// Largest `phi0` whose gain stays within 5% of the smallest-`phi0` value.
    pub plateau_edge: f64,
    /// Small-phase limit from the exact echo coefficients.
    pub small_angle_gain: f64,
}

pub fn dynamic_range_scan(n_atoms: usize, tau: f64, phi0_grid: &[f64]) -> Result<DynamicRange> {
    if phi0_grid.is_empty() || phi0_grid.windows(2).any(|w| w[1] <= w[0]) || phi0_grid[0] <= 0.0 {
        return Err(Error::invalid("phi0_grid", "need a positive increasing grid"));
    }
    let model = ModelSpec::unitary_three_body();
    let gains: Vec<f64> = phi0_grid
        .par_iter()
        .map(|&phi| {
            let mut kit = EchoKit::new(&model, n_atoms)?;
            let t = kit.time(tau);
            Ok(kit.sz_gain(EchoStyle::SignFlip, t, phi).gain_linear)
        })
        .collect::<Result<_>>()?;
    let g0 = gains[0];
    let mut edge = phi0_grid[0];
    for (p, g) in phi0_grid.iter().zip(&gains) {
        if (g - g0).abs() > 0.05 * g0 {
            break;
        }
        edge = *p;
    }
    let small = echo_coefficients(n_atoms, &[tau])?[0].gain(n_atoms);
    Ok(DynamicRange {
        tau,
        phi0: phi0_grid.to_vec(),
        gain: gains,
        plateau_edge: edge,
        small_angle_gain: small,
    })
}

/// Largest deviation in `<Sz>` and `Var Sz` between the three echo styles
/// over a few phases.
pub fn echo_equivalence_check(n_atoms: usize, tau: f64) -> Result<f64> {
    let mut kit = EchoKit::new(&ModelSpec::unitary_three_body(), n_atoms)?;
    let t = kit.time(tau);
    let l = *kit.ladder();
    let mut worst: f64 = 0.0;
    for phi in [0.0, 1e-3, 0.05, 0.4] {
        let base = sz_stats(&l, &kit.final_state(EchoStyle::SignFlip, t, phi));
        for style in [EchoStyle::PiY, EchoStyle::PiOver3] {
            let s = sz_stats(&l, &kit.final_state(style, t, phi));
            worst = worst.max((s.0 - base.0).abs()).max((s.1 - base.1).abs());
        }
    }
    if worst > 1e-6 {
        return Err(Error::Logic(format!("echo styles disagree by {worst:e}")));
    }
    Ok(worst)
}
