//! Closed-system evolution on the symmetric ladder and the diagnostics
//! built on it: QFI curves, peak and GHZ searches, echo coefficients and
//! spin Wigner functions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::angular::{clebsch_gordan_with, legendre_table, Factorials};
use crate::couplings::{Model, ModelSpec};
use crate::dicke::{c, phase_z, Axis, BandedOperator, DickeLadder, PureState, Rotator, C64};
use crate::error::{Error, Result};
use crate::ode::Dop853;

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<PureState>,
    pub qfi: Vec<f64>,
}

/// Banded operator restricted to one residue class of basis indices.
#[derive(Debug, Clone)]
struct Sublattice {
    idx: Vec<usize>,
    bands: Vec<(i64, Vec<C64>)>,
}

impl Sublattice {
    fn new(op: &BandedOperator, stride: usize, residue: usize) -> Self {
        let n = op.ladder().dim();
        let idx: Vec<usize> = (residue..n).step_by(stride).collect();
        let bands = op
            .bands()
            .map(|(k, b)| {
                debug_assert_eq!(k.rem_euclid(stride as i64), 0);
                (k / stride as i64, idx.iter().map(|&m| b[m]).collect())
            })
            .collect();
        Sublattice { idx, bands }
    }

    fn apply_minus_i(&self, x: &[C64], y: &mut [C64]) {
        let n = x.len();
        y.iter_mut().for_each(|v| *v = C64::default());
        for (k, b) in &self.bands {
            let k = *k;
            let (lo, hi) = if k >= 0 {
                (k as usize, n)
            } else {
                (0, (n as i64 + k) as usize)
            };
            for m in lo..hi {
                let t = (m as i64 - k) as usize;
                y[t] += b[m] * x[m];
            }
        }
        y.iter_mut().for_each(|v| *v = C64::new(v.im, -v.re));
    }
}

/// Greatest common divisor of the nonzero band offsets (`dim` if diagonal).
fn band_stride(op: &BandedOperator) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let g = op
        .offsets()
        .filter(|&k| k != 0)
        .fold(0usize, |g, k| gcd(g, k.unsigned_abs() as usize));
    if g == 0 {
        op.ladder().dim()
    } else {
        g
    }
}

/// Pure-state QFI for `Sz` encoding, `4 Var(Sz)`.
pub fn qfi_sz(state: &PureState) -> f64 {
    4.0 * state.sz_variance()
}

/// Integrates the Schrodinger equation with adaptive Runge-Kutta steps on
/// banded matvecs. `tau_grid` is in the model's rescaled clock.
pub fn evolve_pure(initial: &PureState, model: &ModelSpec, tau_grid: &[f64], tol: f64) -> Result<EvolutionResult> {
    let ladder = *initial.ladder();
    if tau_grid.windows(2).any(|w| w[1] < w[0]) || tau_grid.iter().any(|&t| t < 0.0) {
        return Err(Error::invalid("tau_grid", "must be non-negative and increasing"));
    }
    let h = model.hamiltonian(&ladder);
    if !h.is_hermitian(1e-12) {
        return Err(Error::Logic("Hamiltonian is not Hermitian".into()));
    }
    let n_atoms = ladder.n_atoms();
    let times: Vec<f64> = tau_grid.iter().map(|&tau| model.time_of_tau(n_atoms, tau)).collect();
    let stride = band_stride(&h).min(ladder.dim());
    let amps = initial.amplitudes();
    let n0 = initial.norm_sqr();
    let mut out: Vec<Vec<C64>> = vec![vec![C64::default(); ladder.dim()]; times.len()];
    let solver = Dop853::with_tolerance(tol);
    // Residue classes never mix, so each populated one is integrated alone.
    for r in 0..stride {
        let sub = Sublattice::new(&h, stride, r);
        let mut y: Vec<C64> = sub.idx.iter().map(|&m| amps[m]).collect();
        if y.iter().all(|v| v.norm_sqr() == 0.0) {
            continue;
        }
        let rhs = |_t: f64, x: &[C64], dx: &mut [C64]| sub.apply_minus_i(x, dx);
        solver.integrate_grid(&rhs, 0.0, &mut y, &times, |i, _t, y| {
            for (j, &m) in sub.idx.iter().enumerate() {
                out[i][m] = y[j];
            }
            Ok(())
        })?;
    }
    let mut states = Vec::with_capacity(times.len());
    let mut qfi = Vec::with_capacity(times.len());
    for a in out {
        let s = PureState::new(ladder, a)?;
        if (s.norm_sqr() - n0).abs() > 1e-6 {
            return Err(Error::Accuracy(format!(
                "norm drifted to {:.3e}; tighten the tolerance",
                s.norm_sqr()
            )));
        }
        qfi.push(qfi_sz(&s));
        states.push(s);
    }
    Ok(EvolutionResult {
        times: tau_grid.to_vec(),
        states,
        qfi,
    })
}

/// Exact propagator `exp(-i H t)` from eigendecompositions of the
/// residue-class blocks of a Hermitian banded `H`.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    dim: usize,
    blocks: Vec<SpectralBlock>,
}

#[derive(Debug, Clone)]
struct SpectralBlock {
    idx: Vec<usize>,
    vecs: DMatrix<C64>,
    vals: DVector<f64>,
}

impl SpectralPropagator {
    pub fn new(h: &BandedOperator) -> Self {
        let stride = band_stride(h).min(h.ladder().dim());
        let n = h.ladder().dim();
        let blocks = (0..stride)
            .map(|r| {
                let idx: Vec<usize> = (r..n).step_by(stride).collect();
                let d = idx.len();
                let mut a = DMatrix::<C64>::zeros(d, d);
                for (i, &mi) in idx.iter().enumerate() {
                    for (j, &mj) in idx.iter().enumerate() {
                        a[(i, j)] = h.get(mi, mj);
                    }
                }
                let eig = SymmetricEigen::new(a);
                SpectralBlock {
                    idx,
                    vecs: eig.eigenvectors,
                    vals: eig.eigenvalues,
                }
            })
            .collect();
        SpectralPropagator { dim: n, blocks }
    }

    pub fn for_model(model: &ModelSpec, ladder: &DickeLadder) -> Self {
        Self::new(&model.hamiltonian(ladder))
    }

    /// `exp(-i H t) x`.
    pub fn apply(&self, x: &[C64], t: f64) -> Vec<C64> {
        let mut y = vec![C64::default(); self.dim];
        for b in &self.blocks {
            let sub: Vec<C64> = b.idx.iter().map(|&m| x[m]).collect();
            if sub.iter().all(|v| v.norm_sqr() == 0.0) {
                continue;
            }
            let d = sub.len();
            let mut coef = vec![C64::default(); d];
            for (j, cj) in coef.iter_mut().enumerate() {
                let mut acc = C64::default();
                for i in 0..d {
                    acc += b.vecs[(i, j)].conj() * sub[i];
                }
                *cj = acc * C64::from_polar(1.0, -b.vals[j] * t);
            }
            for (i, &m) in b.idx.iter().enumerate() {
                let mut acc = C64::default();
                for (j, cj) in coef.iter().enumerate() {
                    acc += b.vecs[(i, j)] * *cj;
                }
                y[m] = acc;
            }
        }
        y
    }

    pub fn evolve(&self, state: &PureState, t: f64) -> PureState {
        let a = self.apply(state.amplitudes(), t);
        PureState::new(*state.ladder(), a)
            .expect("dimension preserved")
            .with_step(state.step())
    }
}

/// QFI curve `4 Var(Sz)(tau)` from the north pole.
pub fn qfi_curve(n_atoms: usize, model: &ModelSpec, taus: &[f64]) -> Result<Vec<f64>> {
    let ladder = DickeLadder::new(n_atoms)?;
    let prop = SpectralPropagator::for_model(model, &ladder);
    let psi0 = PureState::north(ladder);
    Ok(taus
        .iter()
        .map(|&tau| qfi_sz(&prop.evolve(&psi0, model.time_of_tau(n_atoms, tau))))
        .collect())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PeakResult {
    pub tau_opt: f64,
    pub qfi_peak: f64,
}

/// Golden-section maximization of `f` on `[a, b]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Index of the first interior local maximum of a sampled curve.
pub fn first_peak_index(values: &[f64]) -> Option<usize> {
    (1..values.len().saturating_sub(1)).find(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
}

/// First QFI peak from the north pole: coarse scan in steps of 0.01 over
/// `[0, 2]`, then golden-section refinement.
pub fn find_tau_opt(n_atoms: usize, model: &ModelSpec) -> Result<PeakResult> {
    if n_atoms < 3 {
        return Err(Error::invalid("n_atoms", "need N >= 3"));
    }
    let ladder = DickeLadder::new(n_atoms)?;
    let prop = SpectralPropagator::for_model(model, &ladder);
    let psi0 = PureState::north(ladder);
    let q = |tau: f64| qfi_sz(&prop.evolve(&psi0, model.time_of_tau(n_atoms, tau)));
    let taus: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
    let vals: Vec<f64> = taus.iter().map(|&t| q(t)).collect();
    let i = first_peak_index(&vals).ok_or_else(|| Error::Search("no QFI peak in [0, 2]".into()))?;
    let (tau_opt, qfi_peak) = golden_max(q, taus[i - 1], taus[i + 1], 1e-7);
    Ok(PeakResult { tau_opt, qfi_peak })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GhzMetrics {
    pub tau_ghz: f64,
    pub pole_population: f64,
    pub top_population: f64,
    pub bottom_population: f64,
    /// Largest population away from the poles.
    pub max_other: f64,
    pub qfi: f64,
    /// `N = 3 (mod 6)`, where the two poles are connected.
    pub ghz_family: bool,
}

fn pole_population(s: &PureState) -> f64 {
    let a = s.amplitudes();
    a[0].norm_sqr() + a[a.len() - 1].norm_sqr()
}

/// Maximizes the pole population for `tau` in `[1.0, 1.8]`.
pub fn ghz_metrics(n_atoms: usize) -> Result<GhzMetrics> {
    let ladder = DickeLadder::new(n_atoms)?;
    let model = ModelSpec::unitary_three_body();
    let prop = SpectralPropagator::for_model(&model, &ladder);
    let psi0 = PureState::north(ladder);
    let at = |tau: f64| prop.evolve(&psi0, model.time_of_tau(n_atoms, tau));
    let taus: Vec<f64> = (0..=800).map(|i| 1.0 + i as f64 * 0.001).collect();
    let (ib, _) = taus
        .iter()
        .map(|&t| pole_population(&at(t)))
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = taus[ib.saturating_sub(1)];
    let hi = taus[(ib + 1).min(taus.len() - 1)];
    let (tau, _) = golden_max(|t| pole_population(&at(t)), lo, hi, 1e-8);
    let s = at(tau);
    let p = s.probabilities();
    let max_other = p[1..p.len() - 1].iter().copied().fold(0.0, f64::max);
    Ok(GhzMetrics {
        tau_ghz: tau,
        pole_population: p[0] + p[p.len() - 1],
        top_population: p[0],
        bottom_population: p[p.len() - 1],
        max_other,
        qfi: qfi_sz(&s),
        ghz_family: n_atoms % 6 == 3,
    })
}

/// `(M, |c_M|^2)` pairs.
pub fn spin_distribution(state: &PureState) -> Vec<(f64, f64)> {
    let l = state.ladder();
    state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(m, v)| (l.m_z(m), v.norm_sqr()))
        .collect()
}

/// Exact echo coefficients at one time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EchoCoefficients {
    pub tau: f64,
    pub c_t: f64,
    pub v_t: f64,
}

impl EchoCoefficients {
    /// Small-phase gain `4 C_t^2 / (N V_t)`.
    pub fn gain(&self, n_atoms: usize) -> f64 {
        4.0 * self.c_t * self.c_t / (n_atoms as f64 * self.v_t)
    }
}

/// With `A = U^dag Sz U` and the pole `|S,S>`:
/// `C_t = <A^2> - (2/N) <A Sz A>` and
/// `V_t = 2 C_t - <A^2> + (2/N)^2 <A Sz^2 A>`, so that the echo signal is
/// `N/2 - phi^2 N C_t / 2` and its variance `phi^2 N^2 V_t / 4`.
pub fn echo_coefficients(n_atoms: usize, taus: &[f64]) -> Result<Vec<EchoCoefficients>> {
    let ladder = DickeLadder::new(n_atoms)?;
    let model = ModelSpec::unitary_three_body();
    let prop = SpectralPropagator::for_model(&model, &ladder);
    let psi0 = PureState::north(ladder);
    let sz = ladder.sz_diag();
    let n = n_atoms as f64;
    Ok(taus
        .iter()
        .map(|&tau| {
            let t = model.time_of_tau(n_atoms, tau);
            let psi_t = prop.apply(psi0.amplitudes(), t);
            let a2: f64 = psi_t.iter().zip(&sz).map(|(v, m)| v.norm_sqr() * m * m).sum();
            let szpsi: Vec<C64> = psi_t.iter().zip(&sz).map(|(v, m)| v * m).collect();
            let w = prop.apply(&szpsi, -t);
            let asza: f64 = w.iter().zip(&sz).map(|(v, m)| v.norm_sqr() * m).sum();
            let asz2a: f64 = w.iter().zip(&sz).map(|(v, m)| v.norm_sqr() * m * m).sum();
            let c_t = a2 - 2.0 / n * asza;
            let v_t = 2.0 * c_t - a2 + (2.0 / n).powi(2) * asz2a;
            EchoCoefficients { tau, c_t, v_t }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct WignerGrid {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// `values[i][j]` at `(thetas[i], phis[j])`.
    pub values: Vec<Vec<f64>>,
    /// Largest imaginary part encountered.
    pub imag_residue: f64,
}

/// Multipole moments `rho_kq = Tr(rho T_kq^dag)` of a density matrix on one
/// ladder, with `<S m|T_kq|S m'> = sqrt((2k+1)/(2S+1)) <S m'; k q|S m>`.
pub fn multipoles(rho: &DMatrix<C64>, two_s: usize) -> Vec<Vec<C64>> {
    let f = Factorials::new(3 * two_s + 2);
    let s2 = two_s as i64;
    let dim = two_s + 1;
    (0..=two_s)
        .map(|k| {
            let pref = ((2 * k + 1) as f64 / dim as f64).sqrt();
            let tk = 2 * k as i64;
            (-(k as i64)..=(k as i64))
                .map(|q| {
                    let mut acc = C64::default();
                    // rows a (M_a), cols b with M_a = M_b + q
                    for b in 0..dim {
                        let ia = b as i64 - q;
                        if ia < 0 || ia >= dim as i64 {
                            continue;
                        }
                        let a = ia as usize;
                        let two_mb = s2 - 2 * b as i64;
                        let two_ma = s2 - 2 * a as i64;
                        let cg = clebsch_gordan_with(&f, s2, two_mb, tk, 2 * q, s2, two_ma);
                        acc += rho[(a, b)] * pref * cg;
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Spin Wigner function `W = sum_kq rho_kq Y_kq` on a regular grid.
pub fn wigner_density(rho: &DMatrix<C64>, two_s: usize, n_theta: usize, n_phi: usize) -> WignerGrid {
    let mp = multipoles(rho, two_s);
    let thetas: Vec<f64> = (0..n_theta)
        .map(|i| std::f64::consts::PI * i as f64 / (n_theta - 1).max(1) as f64)
        .collect();
    let phis: Vec<f64> = (0..n_phi)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64)
        .collect();
    let mut imag = 0.0f64;
    let values = thetas
        .iter()
        .map(|&th| {
            let p = legendre_table(two_s, th);
            phis.iter()
                .map(|&ph| {
                    let mut w = C64::default();
                    for (k, row) in mp.iter().enumerate() {
                        for (iq, r) in row.iter().enumerate() {
                            let q = iq as i64 - k as i64;
                            let aq = q.unsigned_abs() as usize;
                            let y = C64::from_polar(p[k][aq], aq as f64 * ph);
                            let y = if q >= 0 {
                                y
                            } else if aq % 2 == 0 {
                                y.conj()
                            } else {
                                -y.conj()
                            };
                            w += r * y;
                        }
                    }
                    imag = imag.max(w.im.abs());
                    w.re
                })
                .collect()
        })
        .collect();
    WignerGrid {
        thetas,
        phis,
        values,
        imag_residue: imag,
    }
}

/// Wigner function of a pure state, optionally rotated first.
pub fn wigner(state: &PureState, n_theta: usize, n_phi: usize, pre_rotation: Option<(Axis, f64)>) -> WignerGrid {
    let ladder = *state.ladder();
    let mut a = state.amplitudes().to_vec();
    if let Some((axis, angle)) = pre_rotation {
        match axis {
            Axis::Z => phase_z(&ladder, &mut a, angle),
            _ => Rotator::new(&ladder).apply(&mut a, axis, angle),
        }
    }
    let v = DVector::from_vec(a);
    let rho = &v * v.adjoint();
    wigner_density(&rho, ladder.two_s(), n_theta, n_phi)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QfiRatioPoint {
    pub tau: f64,
    pub qfi_three_body: f64,
    pub qfi_oat: f64,
    pub ratio_db: f64,
}

/// `F_Q` of the three-body model against OAT `H = chi2 Sx^2` with
/// `chi2 = coupling_ratio * chi3`, both from the north pole on a shared
/// physical clock (`tau` is the three-body rescaled time).
pub fn unitary_qfi_ratio_oat(n_atoms: usize, coupling_ratio: f64, taus: &[f64]) -> Result<Vec<QfiRatioPoint>> {
    let ladder = DickeLadder::new(n_atoms)?;
    let three = ModelSpec::unitary_three_body();
    let p3 = SpectralPropagator::for_model(&three, &ladder);
    let sx = ladder.sx();
    let h_oat = sx.mul(&sx).scale_re(coupling_ratio);
    let poat = SpectralPropagator::new(&h_oat);
    let psi0 = PureState::north(ladder);
    Ok(taus
        .iter()
        .map(|&tau| {
            let t = three.time_of_tau(n_atoms, tau);
            let f3 = qfi_sz(&p3.evolve(&psi0, t));
            let fo = qfi_sz(&poat.evolve(&psi0, t));
            QfiRatioPoint {
                tau,
                qfi_three_body: f3,
                qfi_oat: fo,
                ratio_db: 10.0 * (f3 / fo).log10(),
            }
        })
        .collect())
}

/// Dense `exp(-i H t)` for small ladders (test oracle scale).
pub fn dense_propagator(model: &ModelSpec, ladder: &DickeLadder, t: f64) -> DMatrix<C64> {
    let h = model.hamiltonian(ladder).to_dense();
    (h * c(0.0, -t)).exp()
}

/// Energy `<H>` of a state.
pub fn energy(model: &ModelSpec, state: &PureState) -> f64 {
    let h = model.hamiltonian(state.ladder());
    let hp = h.apply(state.amplitudes());
    state.amplitudes().iter().zip(&hp).map(|(a, b)| (a.conj() * b).re).sum()
}

/// True when `model` is the closed three-body model.
pub fn is_closed_three_body(model: &ModelSpec) -> bool {
    model.model == Model::ThreeBody && model.is_unitary()
}
