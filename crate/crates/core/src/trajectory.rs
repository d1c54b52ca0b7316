//! Quantum-jump unraveling with single-atom loss.
//!
//! A trajectory carries one pure state in a sector `(n, S)`: `n` atoms
//! remaining, total spin `S`. Between jumps it follows the collective
//! non-Hermitian generator; the loss part `sum_i l_i' l_i` is a scalar on
//! every sector and is folded in analytically. A loss jump removes one atom
//! and moves to `(n - 1, S +- 1/2)` with the amplitudes of decoupling a
//! spin 1/2, weighted by the sector multiplicities so that the ensemble
//! reproduces the permutation-invariant master equation.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{cg_add_half, ln_factorials, ln_multiplicity};
use crate::couplings::{Model, ModelSpec};
use crate::dicke::{c, coherent_state, BandedOperator, DickeLadder, PureState, C64};
use crate::error::{Error, Result};
use crate::ode::Dop853;

/// How the loss rate is shared between the two loss channels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossConvention {
    /// Loss of an up atom and loss of a down atom each at the full rate, so
    /// every atom leaves at `gamma_loss` whatever its state.
    #[default]
    PerChannel,
    /// `gamma_loss` is the sum over both channels; each runs at half of it.
    Total,
}

impl LossConvention {
    pub fn channel_rate(&self, gamma_loss: f64) -> f64 {
        match self {
            LossConvention::PerChannel => gamma_loss,
            LossConvention::Total => gamma_loss / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossModel {
    /// Hamiltonian and collective jumps; single-atom flips are not unravelled.
    pub model: ModelSpec,
    pub gamma_loss: f64,
    pub convention: LossConvention,
}

impl LossModel {
    pub fn new(model: ModelSpec, gamma_loss: f64, convention: LossConvention) -> Result<Self> {
        if model.gamma_single != 0.0 {
            return Err(Error::invalid(
                "gamma_single",
                "single-atom flips are handled by the density-matrix engine",
            ));
        }
        if !(gamma_loss >= 0.0) {
            return Err(Error::invalid("gamma_loss", "must be non-negative"));
        }
        Ok(LossModel {
            model,
            gamma_loss,
            convention,
        })
    }

    fn rate(&self) -> f64 {
        self.convention.channel_rate(self.gamma_loss)
    }

    fn reversed(&self) -> Self {
        LossModel {
            model: self.model.reversed(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub n_current: usize,
    pub two_s: usize,
    pub amplitudes: Vec<C64>,
    /// Survival weight since the last jump.
    pub norm: f64,
}

impl TrajectoryState {
    pub fn from_pure(state: &PureState) -> Self {
        let l = state.ladder();
        TrajectoryState {
            n_current: l.n_atoms(),
            two_s: l.two_s(),
            amplitudes: state.amplitudes().to_vec(),
            norm: 1.0,
        }
    }

    fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|a| *a /= n);
        }
    }

    /// `(<Sz>, <Sz^2>)` of the normalised state; zero once every atom is gone.
    pub fn sz_moments(&self) -> (f64, f64) {
        let p = self.norm_sqr();
        if self.n_current == 0 || p == 0.0 {
            return (0.0, 0.0);
        }
        let j = self.two_s as f64 / 2.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (r, a) in self.amplitudes.iter().enumerate() {
            let m = j - r as f64;
            m1 += m * a.norm_sqr();
            m2 += m * m * a.norm_sqr();
        }
        (m1 / p, m2 / p)
    }

    pub fn phase_z(&mut self, phi: f64) {
        let j = self.two_s as f64 / 2.0;
        for (r, a) in self.amplitudes.iter_mut().enumerate() {
            *a *= C64::from_polar(1.0, -phi * (j - r as f64));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpChannel {
    LossUp,
    LossDown,
    /// Index into the model's collective jump list.
    Collective(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpinBranch {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: JumpChannel,
    pub branch: Option<SpinBranch>,
}

/// Collective generator of one sector: `K = H - (i/2) sum J'J`.
#[derive(Debug, Clone)]
struct SectorGen {
    k: BandedOperator,
    jumps: Vec<BandedOperator>,
    loss: BandedOperator,
}

/// Per-run cache of sector generators and `ln k!`.
#[derive(Debug)]
pub struct Unraveling {
    spec: LossModel,
    lf: Vec<f64>,
    gens: HashMap<(usize, usize), SectorGen>,
    tol: f64,
}

impl Unraveling {
    pub fn new(spec: LossModel, n_max: usize, tol: f64) -> Self {
        Unraveling {
            spec,
            lf: ln_factorials(n_max.max(1)),
            gens: HashMap::new(),
            tol,
        }
    }

    fn gen(&mut self, n: usize, two_s: usize) -> &SectorGen {
        let spec = &self.spec;
        self.gens.entry((n, two_s)).or_insert_with(|| {
            let l = DickeLadder::with_spin(n, two_s).expect("valid sector");
            let h = spec.model.hamiltonian(&l);
            let jumps = spec.model.jumps(&l);
            let loss = jumps
                .iter()
                .fold(BandedOperator::zero(l), |acc, j| acc.add(&j.adjoint().mul(j)));
            SectorGen {
                k: h.add(&loss.scale(c(0.0, -0.5))),
                jumps,
                loss,
            }
        })
    }

    /// Total scalar loss rate on `n` atoms.
    fn loss_rate(&self, n: usize) -> f64 {
        self.spec.rate() * n as f64
    }

    /// Drift under the non-Hermitian generator for `dt`; the scalar loss
    /// decay is applied to `norm`.
    pub fn nonhermitian_step(&mut self, state: &mut TrajectoryState, dt: f64) -> Result<()> {
        if state.n_current > 0 {
            let tol = self.tol;
            let g = self.gen(state.n_current, state.two_s);
            let f = |_t: f64, x: &[C64], dx: &mut [C64]| {
                g.k.apply_into(x, dx);
                dx.iter_mut().for_each(|v| *v *= c(0.0, -1.0));
            };
            let mut h = 0.0;
            Dop853::with_tolerance(tol).integrate(&f, 0.0, &mut state.amplitudes, dt, &mut h)?;
        }
        let decay = (-self.loss_rate(state.n_current) * dt).exp();
        state.norm *= decay;
        if state.norm < 1e-12 {
            log::debug!("trajectory norm underflow ({:e}); renormalising", state.norm);
            state.norm = 1.0;
        }
        Ok(())
    }

    /// Unnormalised survival probability of the state.
    fn survival(&self, state: &TrajectoryState) -> f64 {
        state.norm * state.norm_sqr()
    }

    /// Instantaneous total jump rate of a normalised state.
    fn jump_rate(&mut self, state: &TrajectoryState) -> f64 {
        if state.n_current == 0 {
            return 0.0;
        }
        let lr = self.loss_rate(state.n_current);
        let g = self.gen(state.n_current, state.two_s);
        let lx = g.loss.apply(&state.amplitudes);
        let coll: f64 = state.amplitudes.iter().zip(&lx).map(|(a, b)| (a.conj() * b).re).sum();
        coll / state.norm_sqr() + lr
    }

    /// Branch weights for removing one atom: `(channel, branch, weight)`,
    /// with the weights summing to the scalar loss rate.
    pub fn loss_branches(&self, state: &TrajectoryState) -> Vec<(JumpChannel, SpinBranch, f64, TrajectoryState)> {
        let n = state.n_current;
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        let rate = self.spec.rate();
        let two_j = state.two_s;
        let p = state.norm_sqr();
        let ln_dj = ln_multiplicity(n, two_j, &self.lf);
        for (two_k, branch) in [(two_j + 1, SpinBranch::Up), (two_j.wrapping_sub(1), SpinBranch::Down)] {
            if two_k > n - 1 {
                continue;
            }
            let w = n as f64 * (ln_multiplicity(n - 1, two_k, &self.lf) - ln_dj).exp();
            let upper = two_j > two_k;
            for (channel, spin_up) in [(JumpChannel::LossUp, true), (JumpChannel::LossDown, false)] {
                let mut amps = vec![C64::default(); two_k + 1];
                for (r, a) in state.amplitudes.iter().enumerate() {
                    let two_m = two_j as i64 - 2 * r as i64;
                    let two_m_new = if spin_up { two_m - 1 } else { two_m + 1 };
                    if two_m_new.abs() > two_k as i64 {
                        continue;
                    }
                    let cg = cg_add_half(two_k, upper, spin_up, two_m);
                    amps[((two_k as i64 - two_m_new) / 2) as usize] += a * cg;
                }
                let q: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                if q == 0.0 {
                    continue;
                }
                let mut next = TrajectoryState {
                    n_current: n - 1,
                    two_s: two_k,
                    amplitudes: amps,
                    norm: 1.0,
                };
                next.normalize();
                out.push((channel, branch, rate * w * q / p, next));
            }
        }
        out
    }

    /// Applies one loss jump selected by `draw` in `[0, 1)`.
    pub fn apply_loss_jump(
        &self,
        state: &TrajectoryState,
        draw: f64,
    ) -> Result<(TrajectoryState, JumpChannel, SpinBranch)> {
        if state.n_current == 0 {
            return Err(Error::Logic("loss jump with no atoms left".into()));
        }
        let branches = self.loss_branches(state);
        let total: f64 = branches.iter().map(|b| b.2).sum();
        let mut acc = 0.0;
        let target = draw * total;
        let last = branches.len() - 1;
        for (i, (ch, br, w, next)) in branches.into_iter().enumerate() {
            acc += w;
            if target < acc || i == last {
                return Ok((next, ch, br));
            }
        }
        unreachable!("non-empty branch list")
    }

    /// Performs whichever jump fires at the current state.
    fn jump(&mut self, state: &mut TrajectoryState, rng: &mut ChaCha8Rng, time: f64) -> Result<JumpEvent> {
        let n = state.n_current;
        let loss = self.loss_rate(n);
        let g = self.gen(n, state.two_s).clone();
        let p = state.norm_sqr();
        let coll: Vec<f64> = g
            .jumps
            .iter()
            .map(|j| j.apply(&state.amplitudes).iter().map(|a| a.norm_sqr()).sum::<f64>() / p)
            .collect();
        let total = loss + coll.iter().sum::<f64>();
        let mut x = rng.random::<f64>() * total;
        for (i, r) in coll.iter().enumerate() {
            if x < *r {
                state.amplitudes = g.jumps[i].apply(&state.amplitudes);
                state.normalize();
                state.norm = 1.0;
                return Ok(JumpEvent {
                    time,
                    channel: JumpChannel::Collective(i),
                    branch: None,
                });
            }
            x -= r;
        }
        let (next, channel, branch) = self.apply_loss_jump(state, rng.random::<f64>())?;
        *state = next;
        Ok(JumpEvent {
            time,
            channel,
            branch: Some(branch),
        })
    }

    /// Evolves to each time in `times` (relative to now), calling `observe`
    /// with the normalised state. Jump times are located by bracketed root
    /// finding on the survival probability against a uniform threshold.
    pub fn run<F>(
        &mut self,
        state: &mut TrajectoryState,
        times: &[f64],
        rng: &mut ChaCha8Rng,
        mut observe: F,
    ) -> Result<Vec<JumpEvent>>
    where
        F: FnMut(usize, &TrajectoryState),
    {
        let mut events = Vec::new();
        let mut t = 0.0;
        state.normalize();
        state.norm = 1.0;
        let mut threshold: f64 = rng.random::<f64>();
        for (i, &target) in times.iter().enumerate() {
            while t < target {
                let rate = self.jump_rate(state);
                if rate <= 0.0 {
                    self.nonhermitian_step(state, target - t)?;
                    t = target;
                    break;
                }
                let dt = (0.05 / rate).min(target - t);
                let saved = state.clone();
                self.nonhermitian_step(state, dt)?;
                let p_end = self.survival(state);
                if p_end > threshold {
                    t += dt;
                    // Renormalise so the threshold stays well scaled.
                    threshold /= p_end;
                    state.normalize();
                    state.norm = 1.0;
                    if target - t < 1e-14 * target.abs().max(1e-300) {
                        t = target;
                    }
                    continue;
                }
                let (tj, at_jump) = self.locate(&saved, dt, threshold)?;
                *state = at_jump;
                t += tj;
                events.push(self.jump(state, rng, t)?);
                threshold = rng.random::<f64>();
            }
            let mut shown = state.clone();
            shown.normalize();
            shown.norm = 1.0;
            observe(i, &shown);
        }
        Ok(events)
    }

    /// Time inside `(0, dt]` where the survival of `start` falls to `threshold`.
    fn locate(&mut self, start: &TrajectoryState, dt: f64, threshold: f64) -> Result<(f64, TrajectoryState)> {
        // Illinois regula falsi on ln(survival) - ln(threshold), which is
        // close to linear in time; bracketed like bisection.
        let lt = threshold.ln();
        let f = |s: &TrajectoryState, me: &Self| me.survival(s).ln() - lt;
        let (mut a, mut fa) = (0.0, f(start, self));
        let mut end = start.clone();
        self.nonhermitian_step(&mut end, dt)?;
        let (mut b, mut fb) = (dt, f(&end, self));
        let mut best = end;
        let mut side = 0i8;
        for _ in 0..100 {
            if (b - a) <= 1e-12 * dt || fb.abs() < 1e-13 {
                break;
            }
            let mut m = (a * fb - b * fa) / (fb - fa);
            if !(m > a && m < b) {
                m = 0.5 * (a + b);
            }
            let mut s = start.clone();
            self.nonhermitian_step(&mut s, m)?;
            let fm = f(&s, self);
            if fm > 0.0 {
                a = m;
                fa = fm;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            } else {
                b = m;
                fb = fm;
                best = s;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            }
        }
        Ok((b, best))
    }
}

fn stream_rng(seed: u64, trajectory: u64, branch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trajectory << 20) | branch);
    rng
}

/// Default initial state: the pole, or `+y` for TAT.
pub fn initial_state(model: &ModelSpec, n_atoms: usize) -> Result<PureState> {
    let ladder = DickeLadder::new(n_atoms)?;
    match model.model {
        Model::Tat => coherent_state(&ladder, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
        _ => Ok(PureState::north(ladder)),
    }
}

/// Mean and standard error of `<Sz>` and `<Sz^2>` along `t_grid`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentPoint {
    pub t: f64,
    pub sz_mean: f64,
    pub sz_se: f64,
    pub sz2_mean: f64,
    pub sz2_se: f64,
    pub atoms_mean: f64,
}

/// Trajectory estimate of the collective moments (no echo).
pub fn trajectory_moments(
    spec: &LossModel,
    initial: &PureState,
    t_grid: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<Vec<MomentPoint>> {
    if n_traj < 2 {
        return Err(Error::invalid("n_traj", "need at least two trajectories"));
    }
    let n0 = initial.ladder().n_atoms();
    let rows: Vec<Vec<[f64; 3]>> = (0..n_traj as u64)
        .into_par_iter()
        .map_init(
            || Unraveling::new(spec.clone(), n0, 1e-10),
            |u, i| {
                let mut rng = stream_rng(seed, i, 0);
                let mut st = TrajectoryState::from_pure(initial);
                let mut row = vec![[0.0; 3]; t_grid.len()];
                u.run(&mut st, t_grid, &mut rng, |k, s| {
                    let (m1, m2) = s.sz_moments();
                    row[k] = [m1, m2, s.n_current as f64];
                })?;
                Ok(row)
            },
        )
        .collect::<Result<_>>()?;
    let nt = n_traj as f64;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let stat = |f: usize| {
                let mean = rows.iter().map(|r| r[k][f]).sum::<f64>() / nt;
                let var = rows.iter().map(|r| (r[k][f] - mean).powi(2)).sum::<f64>() / (nt - 1.0);
                (mean, (var / nt).sqrt())
            };
            let (sz_mean, sz_se) = stat(0);
            let (sz2_mean, sz2_se) = stat(1);
            MomentPoint {
                t,
                sz_mean,
                sz_se,
                sz2_mean,
                sz2_se,
                atoms_mean: stat(2).0,
            }
        })
        .collect())
}

/// First jump time of each trajectory (infinite if none before `t_max`).
pub fn first_jump_times(
    spec: &LossModel,
    initial: &PureState,
    t_max: f64,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n0 = initial.ladder().n_atoms();
    (0..n_traj as u64)
        .into_par_iter()
        .map_init(
            || Unraveling::new(spec.clone(), n0, 1e-10),
            |u, i| {
                let mut rng = stream_rng(seed, i, 0);
                let mut st = TrajectoryState::from_pure(initial);
                // Stop at the first event by running with a fresh unraveling step by step.
                let ev = u.run_until_first(&mut st, t_max, &mut rng)?;
                Ok(ev.map(|e| e.time).unwrap_or(f64::INFINITY))
            },
        )
        .collect()
}

impl Unraveling {
    fn run_until_first(
        &mut self,
        state: &mut TrajectoryState,
        t_max: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<JumpEvent>> {
        let mut t = 0.0;
        state.normalize();
        state.norm = 1.0;
        let threshold: f64 = rng.random::<f64>();
        let mut p_acc = 1.0;
        while t < t_max {
            let rate = self.jump_rate(state);
            if rate <= 0.0 {
                return Ok(None);
            }
            let dt = (0.05 / rate).min(t_max - t);
            let saved = state.clone();
            self.nonhermitian_step(state, dt)?;
            let p = self.survival(state);
            if p_acc * p > threshold {
                p_acc *= p;
                t += dt;
                state.normalize();
                state.norm = 1.0;
                continue;
            }
            let (tj, mut at) = self.locate(&saved, dt, threshold / p_acc)?;
            return Ok(Some(self.jump(&mut at, rng, t + tj)?));
        }
        Ok(None)
    }
}

/// Echo statistics with jackknife errors at one forward time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryEchoPoint {
    pub t: f64,
    pub signal_mean: f64,
    pub signal_se: f64,
    pub var_mean: f64,
    pub var_se: f64,
    pub derivative: f64,
    pub derivative_se: f64,
    pub gain: f64,
    pub gain_se: f64,
    pub n_jumps_mean: f64,
}

/// Per-trajectory echo record at one time: `<Sz>`, `<Sz^2>` at `phi0`,
/// `<Sz>` at `phi0 +- delta`, and the number of jumps.
type EchoRow = [f64; 5];

/// Echo protocol per trajectory: forward drift with jumps, phase encoding,
/// reversed drift with jumps. The slope uses `phi0 +- phi0/10` with common
/// random numbers: the forward half is shared and the reversed halves draw
/// from the same stream.
pub fn run_trajectories(
    spec: &LossModel,
    n_atoms: usize,
    n_traj: usize,
    seed: u64,
    phi0: f64,
    t_grid: &[f64],
) -> Result<Vec<TrajectoryEchoPoint>> {
    if n_traj < 4 {
        return Err(Error::invalid(
            "n_traj",
            "need at least four trajectories for the jackknife",
        ));
    }
    if phi0 <= 0.0 {
        return Err(Error::invalid("phi0", "the slope estimate needs phi0 > 0"));
    }
    let delta = phi0 / 10.0;
    let initial = initial_state(&spec.model, n_atoms)?;
    let rev = spec.reversed();
    let rows: Vec<Vec<EchoRow>> = (0..n_traj as u64)
        .into_par_iter()
        .map_init(
            || {
                (
                    Unraveling::new(spec.clone(), n_atoms, 1e-10),
                    Unraveling::new(rev.clone(), n_atoms, 1e-10),
                )
            },
            |(fwd, bwd), i| {
                let mut rng = stream_rng(seed, i, 0);
                let mut st = TrajectoryState::from_pure(&initial);
                let mut saved: Vec<(TrajectoryState, usize)> = Vec::with_capacity(t_grid.len());
                let mut count = 0usize;
                let events = fwd.run(&mut st, t_grid, &mut rng, |_, s| saved.push((s.clone(), 0)))?;
                // Jumps before each grid time.
                for (k, (_, n)) in saved.iter_mut().enumerate() {
                    while count < events.len() && events[count].time <= t_grid[k] {
                        count += 1;
                    }
                    *n = count;
                }
                let mut row = Vec::with_capacity(t_grid.len());
                for (k, (s, nj)) in saved.into_iter().enumerate() {
                    let mut out = [0.0; 5];
                    let mut jumps = nj;
                    for (slot, phi) in [(0usize, phi0), (2, phi0 + delta), (3, phi0 - delta)] {
                        let mut r = stream_rng(seed, i, 1 + k as u64);
                        let mut x = s.clone();
                        x.phase_z(phi);
                        let ev = bwd.run(&mut x, &[t_grid[k]], &mut r, |_, _| {})?;
                        let (m1, m2) = x.sz_moments();
                        out[slot] = m1;
                        if slot == 0 {
                            out[1] = m2;
                            jumps += ev.len();
                        }
                    }
                    out[4] = jumps as f64;
                    row.push(out);
                }
                Ok(row)
            },
        )
        .collect::<Result<_>>()?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let data: Vec<EchoRow> = rows.iter().map(|r| r[k]).collect();
            echo_point(t, n_atoms, delta, &data)
        })
        .collect())
}

fn echo_stats(n_atoms: usize, delta: f64, mean: &EchoRow) -> [f64; 4] {
    let signal = mean[0];
    let var = mean[1] - signal * signal;
    let d = (mean[2] - mean[3]) / (2.0 * delta);
    [signal, var, d, crate::dissipative::gain_of(n_atoms, d, var)]
}

fn echo_point(t: f64, n_atoms: usize, delta: f64, data: &[EchoRow]) -> TrajectoryEchoPoint {
    let mean_of = |rows: &[&EchoRow]| {
        let mut m = [0.0; 5];
        for r in rows {
            for (a, b) in m.iter_mut().zip(r.iter()) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= rows.len() as f64);
        m
    };
    let all: Vec<&EchoRow> = data.iter().collect();
    let full_mean = mean_of(&all);
    let full = echo_stats(n_atoms, delta, &full_mean);
    // Blocked delete-one jackknife.
    let g = data.len().min(50);
    let leave_out: Vec<[f64; 4]> = (0..g)
        .map(|b| {
            let rest: Vec<&EchoRow> = data
                .iter()
                .enumerate()
                .filter(|(i, _)| i % g != b)
                .map(|(_, r)| r)
                .collect();
            echo_stats(n_atoms, delta, &mean_of(&rest))
        })
        .collect();
    let se = |q: usize| {
        let m = leave_out.iter().map(|v| v[q]).sum::<f64>() / g as f64;
        ((g as f64 - 1.0) / g as f64 * leave_out.iter().map(|v| (v[q] - m).powi(2)).sum::<f64>()).sqrt()
    };
    TrajectoryEchoPoint {
        t,
        signal_mean: full[0],
        signal_se: se(0),
        var_mean: full[1],
        var_se: se(1),
        derivative: full[2],
        derivative_se: se(2),
        gain: full[3],
        gain_se: se(3),
        n_jumps_mean: full_mean[4],
    }
}
