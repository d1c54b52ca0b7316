//! Strict TOML run configurations, one per subcommand.
//!
//! Every struct rejects unknown keys. Defaults are filled in on load and the
//! resolved value is written back next to the outputs, so a run can be
//! repeated from its own snapshot.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::couplings::{Model, ModelSpec};
use crate::dicke::Axis;
use crate::error::{Error, Result};
use crate::metrology::{EchoStyle, Readout};
use crate::trajectory::LossConvention;

/// Parses `text`, reporting the offending key on failure.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<document>".into());
        Error::Config {
            key,
            reason: msg.trim().to_string(),
        }
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        key: "--config".into(),
        reason: format!("{}: {e}", path.display()),
    })?;
    parse(&text)
}

pub fn resolved<T: Serialize>(cfg: &T) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Logic(format!("cannot serialize config: {e}")))
}

/// Keys shared by every run.
pub trait RunConfig: Serialize + DeserializeOwned {
    fn output_dir(&self) -> &Path;
    fn set_output_dir(&mut self, dir: PathBuf);
    fn seed(&self) -> u64;
    fn threads(&self) -> Option<usize>;
}

macro_rules! run_config {
    ($t:ty) => {
        impl RunConfig for $t {
            fn output_dir(&self) -> &Path {
                &self.output_dir
            }
            fn set_output_dir(&mut self, dir: PathBuf) {
                self.output_dir = dir;
            }
            fn seed(&self) -> u64 {
                self.seed
            }
            fn threads(&self) -> Option<usize> {
                self.threads
            }
        }
    };
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: Model,
    /// `chi2 / chi3` for the quadratic models; ignored for the three-body model.
    pub coupling_ratio: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: Model::ThreeBody,
            coupling_ratio: 1.0,
        }
    }
}

impl ModelConfig {
    fn strength(&self) -> Result<f64> {
        match self.kind {
            Model::ThreeBody => Ok(1.0),
            _ if self.coupling_ratio > 0.0 => Ok(self.coupling_ratio),
            _ => Err(Error::Config {
                key: "model.coupling_ratio".into(),
                reason: "must be positive".into(),
            }),
        }
    }

    pub fn unitary(&self) -> Result<ModelSpec> {
        let s = self.strength()?;
        Ok(match self.kind {
            Model::ThreeBody => ModelSpec::unitary_three_body(),
            Model::Oat => ModelSpec::oat(s, 0.0, 0.0),
            Model::Tat => ModelSpec::tat(s, 0.0, 0.0),
            Model::Exchange => ModelSpec::exchange(s),
        })
    }

    pub fn open(&self, d: &Dissipation) -> Result<ModelSpec> {
        if d.collective_rate_ratio < 0.0 {
            return Err(Error::Config {
                key: "dissipation.collective_rate_ratio".into(),
                reason: "must be non-negative".into(),
            });
        }
        if d.single_rate_ratio < 0.0 {
            return Err(Error::Config {
                key: "dissipation.single_rate_ratio".into(),
                reason: "must be non-negative".into(),
            });
        }
        ModelSpec::dissipative(
            self.kind,
            self.strength()?,
            d.collective_rate_ratio,
            d.single_rate_ratio,
        )
    }
}

/// Rates in units of `chi3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dissipation {
    pub collective_rate_ratio: f64,
    #[serde(default)]
    pub single_rate_ratio: f64,
    /// Encoded phase; `1/N` when absent.
    pub phi0: Option<f64>,
}

/// Uniform grid `tau_max * k / n_tau`, `k = 1..=n_tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauGrid {
    pub tau_max: f64,
    pub n_tau: usize,
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid {
            tau_max: 1.5,
            n_tau: 60,
        }
    }
}

impl TauGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.tau_max > 0.0) || self.n_tau == 0 {
            return Err(Error::Config {
                key: "grid".into(),
                reason: "tau_max must be positive and n_tau at least 1".into(),
            });
        }
        Ok((1..=self.n_tau)
            .map(|k| self.tau_max * k as f64 / self.n_tau as f64)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerResolution {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for WignerResolution {
    fn default() -> Self {
        WignerResolution {
            n_theta: 61,
            n_phi: 121,
        }
    }
}

fn default_wigner_taus() -> Vec<f64> {
    vec![0.1, 0.66, 1.3]
}

/// Closed evolution of the model's default initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub n_atoms: usize,
    #[serde(default = "default_evolve_tol")]
    pub tol: f64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: TauGrid,
    #[serde(default = "default_wigner_taus")]
    pub wigner_taus: Vec<f64>,
    #[serde(default)]
    pub wigner: WignerResolution,
}
run_config!(EvolveConfig);

fn default_evolve_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowmapConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    #[serde(default = "one")]
    pub chi3_n2: f64,
    #[serde(default = "default_flow_dt")]
    pub dt: f64,
    #[serde(default = "default_rings")]
    pub n_rings: usize,
    #[serde(default = "default_azimuth")]
    pub n_azimuth: usize,
    #[serde(default = "default_max_tilt")]
    pub max_tilt: f64,
    #[serde(default = "default_separatrix_tilt")]
    pub separatrix_tilt: f64,
}
run_config!(FlowmapConfig);

fn one() -> f64 {
    1.0
}
fn default_flow_dt() -> f64 {
    0.05
}
fn default_rings() -> usize {
    6
}
fn default_azimuth() -> usize {
    36
}
fn default_max_tilt() -> f64 {
    0.6
}
fn default_separatrix_tilt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwaConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub n_atoms: usize,
    #[serde(default = "default_twa_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub grid: TauGrid,
}
run_config!(TwaConfig);

fn default_twa_traj() -> usize {
    2000
}

/// Master-equation echo. Times are in each model's own rescaled clock:
/// `chi3 N^{3/2} t` for the three-body model, `chi2 t` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub n_atoms: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Also write the Fisher information of the forward state.
    #[serde(default)]
    pub qfi: bool,
    #[serde(default)]
    pub model: ModelConfig,
    pub dissipation: Dissipation,
    #[serde(default)]
    pub grid: TauGrid,
}
run_config!(LindbladConfig);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Collective rate `Gamma / chi3`.
    #[serde(default)]
    pub collective_rate_ratio: f64,
    /// Atom-loss rate in units of `chi3`.
    pub loss_rate_ratio: f64,
    #[serde(default)]
    pub convention: LossConvention,
    pub phi0: Option<f64>,
}

/// Quantum trajectories of the three-body echo with atom loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub n_atoms: usize,
    pub n_traj: usize,
    pub loss: LossConfig,
    #[serde(default)]
    pub grid: TauGrid,
}
run_config!(TrajectoriesConfig);

/// Single echo runs at a list of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub n_atoms: usize,
    pub taus: Vec<f64>,
    /// `1/N` when absent.
    pub phi0: Option<f64>,
    #[serde(default = "default_readout")]
    pub readout: Readout,
    #[serde(default = "default_echo_style")]
    pub echo_style: EchoStyle,
    #[serde(default)]
    pub model: ModelConfig,
    /// Open-system run when present.
    pub dissipation: Option<Dissipation>,
}
run_config!(ProtocolConfig);

fn default_readout() -> Readout {
    Readout::Sz
}
fn default_echo_style() -> EchoStyle {
    EchoStyle::SignFlip
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreRotation {
    pub axis: Axis,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub n_atoms: usize,
    pub taus: Vec<f64>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub resolution: WignerResolution,
    pub pre_rotation: Option<PreRotation>,
}
run_config!(WignerConfig);

/// Fixed-`eta_c` campaign: gain optimization over `(d, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEtaCSweep {
    #[serde(default = "half")]
    pub eta_c: f64,
    #[serde(default = "yes")]
    pub single_particle: bool,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default = "default_t_span")]
    pub t_span: f64,
    pub phi0: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Cooperativity of the `N` scan.
    #[serde(rename = "C", default = "ten")]
    pub c: f64,
    /// Atom numbers of the `N` scan; the first one also gets the full
    /// gain-vs-time curves.
    pub n_atoms: Vec<usize>,
    /// `d` grid spans this factor either way of `sqrt(NC/2)`.
    #[serde(default = "four")]
    pub d_factor: f64,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
    /// `(N, C)` grid of the cooperativity scan; empty skips it.
    #[serde(default)]
    pub coop_n: Vec<usize>,
    #[serde(default, rename = "coop_C")]
    pub coop_c: Vec<f64>,
}

fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn ten() -> f64 {
    10.0
}
fn four() -> f64 {
    4.0
}
fn default_n_t() -> usize {
    60
}
fn default_t_span() -> f64 {
    1.5
}
fn default_per_decade() -> usize {
    8
}

impl FixedEtaCSweep {
    pub fn scenario(&self) -> crate::sweep::FixedEtaC {
        crate::sweep::FixedEtaC {
            eta_c: self.eta_c,
            single_particle: self.single_particle,
            n_t: self.n_t,
            t_span: self.t_span,
            phi0: self.phi0,
            tol: self.tol,
        }
    }
}

/// Beta-scheme QFI ratio map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSweep {
    #[serde(default = "default_beta_kappa")]
    pub beta_kappa: f64,
    #[serde(default = "default_beta_gamma")]
    pub beta_gamma: f64,
    #[serde(default = "default_n_t")]
    pub n_tau: usize,
    #[serde(default = "default_t_span")]
    pub tau_max: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub n_atoms: Vec<usize>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
}

fn default_beta_kappa() -> f64 {
    500.0
}
fn default_beta_gamma() -> f64 {
    5.0
}

impl BetaSweep {
    pub fn scheme(&self) -> crate::sweep::BetaScheme {
        crate::sweep::BetaScheme {
            beta_kappa: self.beta_kappa,
            beta_gamma: self.beta_gamma,
            n_tau: self.n_tau,
            tau_max: self.tau_max,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub fixed_eta_c: Option<FixedEtaCSweep>,
    pub beta: Option<BetaSweep>,
}
run_config!(SweepConfig);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEtaCPoint {
    pub n_atoms: usize,
    pub eta_c: f64,
    pub d: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaPoint {
    pub n_atoms: usize,
    pub beta_kappa: f64,
    pub beta_gamma: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenarios {
    pub fixed_etac: Option<FixedEtaCPoint>,
    pub beta: Option<BetaPoint>,
}

/// Coupling calculator input: physical parameters or one of the scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingsConfig {
    pub physics: Option<crate::couplings::PhysicalParams>,
    pub scenario: Option<Scenarios>,
}
