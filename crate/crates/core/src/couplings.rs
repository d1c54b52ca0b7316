//! Cavity-QED parameters, the effective couplings they induce, and the
//! per-model Hamiltonians and jump operators used by every engine.
//!
//! Simulations run in units of `chi3` (`chi3 = 1`), with the rescaled clock
//! `tau = chi3 N^{3/2} t`.

use serde::{Deserialize, Serialize};

use crate::dicke::{build_splus_power, BandedOperator, DickeLadder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub delta_a: f64,
    pub delta_c: f64,
    pub alpha_sq: f64,
    pub n_atoms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCouplings {
    pub g_eff: f64,
    pub chi2: f64,
    pub chi3: f64,
    pub gamma_collective: f64,
    pub gamma_single: f64,
    pub eta_a: f64,
    pub eta_c: f64,
    pub cooperativity: f64,
    pub beta_kappa: f64,
    pub beta_gamma: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("alpha_sq", self.alpha_sq),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.delta_a == 0.0 {
            return Err(Error::ZeroDetuning("delta_a"));
        }
        if self.delta_c == 0.0 {
            return Err(Error::ZeroDetuning("delta_c"));
        }
        if self.n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "must be positive"));
        }
        Ok(())
    }

    /// Every frequency multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        PhysicalParams {
            g: self.g * s,
            kappa: self.kappa * s,
            gamma: self.gamma * s,
            delta_a: self.delta_a * s,
            delta_c: self.delta_c * s,
            ..*self
        }
    }
}

pub fn derive(p: &PhysicalParams) -> Result<DerivedCouplings> {
    p.validate()?;
    let n = p.n_atoms as f64;
    let g_eff = p.g * p.g / p.delta_a;
    Ok(DerivedCouplings {
        g_eff,
        chi2: p.alpha_sq * g_eff * g_eff / p.delta_c,
        chi3: p.alpha_sq * g_eff.powi(3) / (p.delta_c * p.delta_c),
        gamma_collective: p.alpha_sq * g_eff * g_eff * p.kappa / (p.delta_c * p.delta_c),
        gamma_single: 2.0 * p.gamma * p.alpha_sq * p.g * p.g / (p.delta_a * p.delta_a),
        eta_a: n.sqrt() * p.g / p.delta_a,
        eta_c: n.sqrt() * g_eff / p.delta_c,
        cooperativity: 4.0 * p.g * p.g / (p.kappa * p.gamma),
        beta_kappa: p.delta_a / p.kappa,
        beta_gamma: p.delta_a / p.gamma,
    })
}

impl DerivedCouplings {
    /// `chi2` rebuilt from the adiabaticity parameters.
    pub fn chi2_from_etas(&self, g: f64, alpha_sq: f64, n_atoms: usize) -> f64 {
        g * alpha_sq * self.eta_c * self.eta_a / n_atoms as f64
    }

    pub fn chi3_from_etas(&self, g: f64, alpha_sq: f64, n_atoms: usize) -> f64 {
        g * alpha_sq * self.eta_c * self.eta_c * self.eta_a / (n_atoms as f64).powf(1.5)
    }
}

/// Dissipation rates in units of `chi3` for the fixed-`eta_c` scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedEtaCRatios {
    pub gamma_collective: f64,
    pub gamma_single: f64,
    /// `chi2 / chi3 = sqrt(N) / eta_c`.
    pub chi2: f64,
}

/// `d = 2 Delta_c / kappa`.
pub fn rate_ratios_fixed_etac(n_atoms: usize, c: f64, d: f64, eta_c: f64) -> Result<FixedEtaCRatios> {
    if !(d > 0.0) {
        return Err(Error::invalid("d", "must be positive"));
    }
    if !(eta_c > 0.0) {
        return Err(Error::invalid("eta_c", "must be positive"));
    }
    if !(c > 0.0) {
        return Err(Error::invalid("C", "must be positive"));
    }
    let sn = (n_atoms as f64).sqrt();
    Ok(FixedEtaCRatios {
        gamma_collective: sn / eta_c * 2.0 / d,
        gamma_single: 8.0 * sn / eta_c * d / (2.0 * c),
        chi2: sn / eta_c,
    })
}

/// Parameters consistent with the fixed-`eta_c` ratios (`kappa = 1`, `g = 1`).
pub fn physical_from_fixed_etac(n_atoms: usize, c: f64, d: f64, eta_c: f64, alpha_sq: f64) -> PhysicalParams {
    let kappa = 1.0;
    let g = 1.0;
    let gamma = 4.0 * g * g / (kappa * c);
    let delta_c = d * kappa / 2.0;
    // eta_c = sqrt(N) g^2 / (Delta_a Delta_c)
    let delta_a = (n_atoms as f64).sqrt() * g * g / (eta_c * delta_c);
    PhysicalParams {
        g,
        kappa,
        gamma,
        delta_a,
        delta_c,
        alpha_sq,
        n_atoms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaRatios {
    pub gamma_collective: f64,
    pub gamma_single: f64,
    pub chi2: f64,
    /// `eta_a` at the unscaled `Delta_a`.
    pub eta_a: f64,
    /// Factor applied to `Delta_a` (1 below the `eta_a = 1/2` line).
    pub rescale_r: f64,
    pub above_line: bool,
}

/// Rate ratios for the `Delta_c = g` scheme with fixed `beta_kappa`, `beta_gamma`.
pub fn rate_ratios_beta(n_atoms: usize, c: f64, beta_kappa: f64, beta_gamma: f64) -> Result<BetaRatios> {
    if !(c > 0.0 && beta_kappa > 0.0 && beta_gamma > 0.0) {
        return Err(Error::invalid("beta", "C, beta_kappa and beta_gamma must be positive"));
    }
    let n = n_atoms as f64;
    let bb = beta_kappa * beta_gamma;
    let eta_a = (n * c).sqrt() / (2.0 * bb.sqrt());
    if eta_a <= 0.5 {
        Ok(BetaRatios {
            gamma_collective: 4.0 * beta_gamma / c,
            gamma_single: 8.0 * beta_kappa / c,
            chi2: 2.0 * (bb / c).sqrt(),
            eta_a,
            rescale_r: 1.0,
            above_line: false,
        })
    } else {
        let r = (n * c / bb).sqrt();
        Ok(BetaRatios {
            gamma_collective: 4.0 * r * beta_gamma / c,
            gamma_single: 8.0 * r * beta_kappa / c,
            chi2: 2.0 * n.sqrt(),
            eta_a,
            rescale_r: r,
            above_line: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimescaleRatios {
    pub r_ghz_oat: f64,
    pub r_plat_oat: f64,
    pub r_opt_tat: f64,
    pub chi2_t_plat_oat: f64,
    pub chi2_t_ghz_oat: f64,
    pub chi2_t_opt_tat: f64,
}

pub fn timescale_ratios(n_atoms: usize, eta_c: f64) -> Result<TimescaleRatios> {
    if n_atoms < 2 {
        return Err(Error::invalid("n_atoms", "need at least two atoms"));
    }
    let n = n_atoms as f64;
    Ok(TimescaleRatios {
        r_ghz_oat: 0.3 * n * eta_c,
        r_plat_oat: 0.375 * n.sqrt() * eta_c,
        r_opt_tat: 9.0 * (4.0 * n).ln() / 16.0 * eta_c,
        chi2_t_plat_oat: 1.0 / n.sqrt(),
        chi2_t_ghz_oat: std::f64::consts::FRAC_PI_2,
        chi2_t_opt_tat: (4.0 * n).ln() / (2.0 * n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    ThreeBody,
    Oat,
    Tat,
    Exchange,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::ThreeBody => "three_body",
            Model::Oat => "oat",
            Model::Tat => "tat",
            Model::Exchange => "exchange",
        }
    }
}

/// Collective operator expressions appearing in the model definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum OpExpr {
    /// `S+^3 + S-^3`
    CubicPair,
    /// `Sx^2`
    SxSq,
    /// `Sx^2 - Sz^2`
    SxSqMinusSzSq,
    /// `S+ S-`
    SplusSminus,
    Splus,
    Sminus,
    Sx,
    Sz,
    /// `a S+ + b S-`
    Combo {
        a: f64,
        b: f64,
    },
}

impl OpExpr {
    pub fn build(&self, ladder: &DickeLadder) -> BandedOperator {
        match *self {
            OpExpr::CubicPair => match build_splus_power(ladder, 3) {
                Ok(p) => p.add(&p.adjoint()),
                Err(_) => BandedOperator::zero(*ladder),
            },
            OpExpr::SxSq => {
                let sx = ladder.sx();
                sx.mul(&sx)
            }
            OpExpr::SxSqMinusSzSq => {
                let sx = ladder.sx();
                let sz = ladder.sz();
                sx.mul(&sx).add(&sz.mul(&sz).scale_re(-1.0))
            }
            OpExpr::SplusSminus => ladder.splus().mul(&ladder.sminus()),
            OpExpr::Splus => ladder.splus(),
            OpExpr::Sminus => ladder.sminus(),
            OpExpr::Sx => ladder.sx(),
            OpExpr::Sz => ladder.sz(),
            OpExpr::Combo { a, b } => ladder.splus().scale_re(a).add(&ladder.sminus().scale_re(b)),
        }
    }
}

/// A model Hamiltonian with its collective jumps and single-particle rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub model: Model,
    /// Bare interaction strength: `chi3` for the three-body model, `chi2` otherwise.
    pub strength: f64,
    /// Bare collective rate `Gamma`.
    pub gamma_collective: f64,
    pub gamma_single: f64,
    pub hamiltonian_terms: Vec<(f64, OpExpr)>,
    /// `(amplitude, operator)`; the jump is `amplitude * operator`.
    pub jump_terms: Vec<(f64, OpExpr)>,
}

pub const TAT_JUMP_RATIO: f64 = (std::f64::consts::SQRT_2 + 1.0) / (std::f64::consts::SQRT_2 - 1.0);

impl ModelSpec {
    pub fn three_body(chi3: f64, gamma: f64, gamma_single: f64) -> Self {
        let mut jumps = Vec::new();
        if gamma > 0.0 {
            jumps.push((gamma.sqrt(), OpExpr::Splus));
            jumps.push((gamma.sqrt(), OpExpr::Sminus));
        }
        ModelSpec {
            model: Model::ThreeBody,
            strength: chi3,
            gamma_collective: gamma,
            gamma_single,
            hamiltonian_terms: vec![(chi3, OpExpr::CubicPair)],
            jump_terms: jumps,
        }
    }

    /// Closed three-body dynamics with `chi3 = 1`.
    pub fn unitary_three_body() -> Self {
        Self::three_body(1.0, 0.0, 0.0)
    }

    /// `H = 4 chi2 Sx^2`, jump `sqrt(4 Gamma) Sx`.
    pub fn oat(chi2: f64, gamma: f64, gamma_single: f64) -> Self {
        let mut jumps = Vec::new();
        if gamma > 0.0 {
            jumps.push(((4.0 * gamma).sqrt(), OpExpr::Sx));
        }
        ModelSpec {
            model: Model::Oat,
            strength: chi2,
            gamma_collective: gamma,
            gamma_single,
            hamiltonian_terms: vec![(4.0 * chi2, OpExpr::SxSq)],
            jump_terms: jumps,
        }
    }

    /// `H = (4/3) chi2 (Sx^2 - Sz^2)` with the unbalanced collective jump.
    pub fn tat(chi2: f64, gamma: f64, gamma_single: f64) -> Self {
        let mut jumps = Vec::new();
        if gamma > 0.0 {
            let g_tat = ((std::f64::consts::SQRT_2 - 1.0) / 3f64.sqrt()).powi(2) * gamma;
            jumps.push((
                g_tat.sqrt(),
                OpExpr::Combo {
                    a: TAT_JUMP_RATIO,
                    b: 1.0,
                },
            ));
        }
        ModelSpec {
            model: Model::Tat,
            strength: chi2,
            gamma_collective: gamma,
            gamma_single,
            hamiltonian_terms: vec![(4.0 / 3.0 * chi2, OpExpr::SxSqMinusSzSq)],
            jump_terms: jumps,
        }
    }

    pub fn exchange(chi2: f64) -> Self {
        ModelSpec {
            model: Model::Exchange,
            strength: chi2,
            gamma_collective: 0.0,
            gamma_single: 0.0,
            hamiltonian_terms: vec![(chi2, OpExpr::SplusSminus)],
            jump_terms: Vec::new(),
        }
    }

    /// Dissipative variant of `model`; the exchange model has none.
    pub fn dissipative(model: Model, strength: f64, gamma: f64, gamma_single: f64) -> Result<Self> {
        match model {
            Model::ThreeBody => Ok(Self::three_body(strength, gamma, gamma_single)),
            Model::Oat => Ok(Self::oat(strength, gamma, gamma_single)),
            Model::Tat => Ok(Self::tat(strength, gamma, gamma_single)),
            Model::Exchange => Err(Error::NoDissipation("exchange")),
        }
    }

    pub fn is_unitary(&self) -> bool {
        self.jump_terms.is_empty() && self.gamma_single == 0.0
    }

    pub fn hamiltonian(&self, ladder: &DickeLadder) -> BandedOperator {
        self.hamiltonian_terms
            .iter()
            .fold(BandedOperator::zero(*ladder), |acc, (a, op)| {
                acc.add(&op.build(ladder).scale_re(*a))
            })
    }

    pub fn jumps(&self, ladder: &DickeLadder) -> Vec<BandedOperator> {
        self.jump_terms
            .iter()
            .map(|(a, op)| op.build(ladder).scale_re(*a))
            .collect()
    }

    /// Model with the Hamiltonian sign reversed (dissipators untouched).
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.hamiltonian_terms.iter_mut().for_each(|(a, _)| *a = -*a);
        out
    }

    /// Physical time for a rescaled time: `tau / (chi3 N^{3/2})` for the
    /// three-body model, `tau / chi2` otherwise.
    pub fn time_of_tau(&self, n_atoms: usize, tau: f64) -> f64 {
        match self.model {
            Model::ThreeBody => tau / (self.strength * (n_atoms as f64).powf(1.5)),
            _ => tau / self.strength,
        }
    }

    /// Stride of the dynamics from a pole state (3 for the three-body model).
    pub fn pole_stride(&self) -> usize {
        match self.model {
            _ if !self.is_unitary() => 1,
            Model::ThreeBody => 3,
            Model::Oat | Model::Tat => 2,
            _ => 1,
        }
    }
}

/// Conversions between the `chi3 = 1` simulation clock and the rescaled clock.
pub fn tau_to_t(n_atoms: usize, tau: f64) -> f64 {
    tau / (n_atoms as f64).powf(1.5)
}

pub fn t_to_tau(n_atoms: usize, t: f64) -> f64 {
    t * (n_atoms as f64).powf(1.5)
}
