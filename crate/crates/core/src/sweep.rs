//! Parameter sweeps: gain optimization over `(d, t)`, cooperativity scans,
//! QFI ratio maps and scaling fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::couplings::{rate_ratios_beta, rate_ratios_fixed_etac, Model, ModelSpec};
use crate::dissipative::{echo_scan, qfi_scan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitLaw {
    /// `y = a x + b`
    Linear,
    /// `y = a x`
    Proportional,
    /// `y = a x^b`
    PowerLaw,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Fit {
    pub law: FitLaw,
    /// Slope, proportionality constant or prefactor.
    pub a: f64,
    /// Intercept or exponent; zero for `Proportional`.
    pub b: f64,
    /// Largest relative deviation of the data from the fit.
    pub residual: f64,
}

impl Fit {
    pub fn eval(&self, x: f64) -> f64 {
        match self.law {
            FitLaw::Linear => self.a * x + self.b,
            FitLaw::Proportional => self.a * x,
            FitLaw::PowerLaw => self.a * x.powf(self.b),
        }
    }
}

/// Least squares in linear space, or in log-log space for power laws.
pub fn scaling_fit(xs: &[f64], ys: &[f64], law: FitLaw) -> Result<Fit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::Fit("need at least four points".into()));
    }
    let (u, v): (Vec<f64>, Vec<f64>) = match law {
        FitLaw::PowerLaw => {
            if xs.iter().chain(ys).any(|&z| z <= 0.0) {
                return Err(Error::Fit("power law needs positive data".into()));
            }
            (xs.iter().map(|x| x.ln()).collect(), ys.iter().map(|y| y.ln()).collect())
        }
        _ => (xs.to_vec(), ys.to_vec()),
    };
    let n = u.len() as f64;
    let (a, b) = if law == FitLaw::Proportional {
        let sxx: f64 = u.iter().map(|x| x * x).sum();
        if sxx == 0.0 {
            return Err(Error::Fit("degenerate abscissae".into()));
        }
        (u.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() / sxx, 0.0)
    } else {
        let mu = u.iter().sum::<f64>() / n;
        let mv = v.iter().sum::<f64>() / n;
        let sxx: f64 = u.iter().map(|x| (x - mu).powi(2)).sum();
        if sxx <= 1e-300 * n {
            return Err(Error::Fit("degenerate abscissae".into()));
        }
        let slope = u.iter().zip(&v).map(|(x, y)| (x - mu) * (y - mv)).sum::<f64>() / sxx;
        (slope, mv - slope * mu)
    };
    let fit = match law {
        FitLaw::PowerLaw => Fit {
            law,
            a: b.exp(),
            b: a,
            residual: 0.0,
        },
        _ => Fit {
            law,
            a,
            b,
            residual: 0.0,
        },
    };
    let residual = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let f = fit.eval(x);
            if y != 0.0 {
                ((f - y) / y).abs()
            } else {
                (f - y).abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(Fit { residual, ..fit })
}

/// `count` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Log grid spanning `factor` either side of `centre` at `per_decade` points per decade.
pub fn centred_log_grid(centre: f64, factor: f64, per_decade: usize) -> Vec<f64> {
    let decades = 2.0 * factor.log10();
    let count = (decades * per_decade as f64).ceil() as usize + 1;
    log_grid(centre / factor, centre * factor, count)
}

/// Fixed-`eta_c` scenario with both dissipation channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEtaC {
    pub eta_c: f64,
    /// Include single-particle spin flips.
    pub single_particle: bool,
    /// Number of time points per scan (excluding `t = 0`).
    pub n_t: usize,
    /// Scan length in each model's natural units: `tau` for the
    /// three-body model, `4 chi2 t sqrt(N)` for OAT.
    pub t_span: f64,
    /// Center phase; `None` means `1/N`.
    pub phi0: Option<f64>,
    pub tol: f64,
}

impl Default for FixedEtaC {
    fn default() -> Self {
        FixedEtaC {
            eta_c: 0.5,
            single_particle: true,
            n_t: 60,
            t_span: 1.5,
            phi0: None,
            tol: 1e-8,
        }
    }
}

impl FixedEtaC {
    /// Model in `chi3 = 1` units and its physical time grid.
    pub fn model(&self, model: Model, n_atoms: usize, c: f64, d: f64) -> Result<(ModelSpec, Vec<f64>)> {
        let r = rate_ratios_fixed_etac(n_atoms, c, d, self.eta_c)?;
        let gs = if self.single_particle { r.gamma_single } else { 0.0 };
        let n = n_atoms as f64;
        let (spec, t_max) = match model {
            Model::ThreeBody => (
                ModelSpec::three_body(1.0, r.gamma_collective, gs),
                self.t_span / n.powf(1.5),
            ),
            Model::Oat => (
                ModelSpec::oat(r.chi2, r.gamma_collective, gs),
                self.t_span / (4.0 * r.chi2 * n.sqrt()),
            ),
            _ => return Err(Error::invalid("model", "gain optimization covers three_body and oat")),
        };
        let grid = (1..=self.n_t).map(|i| t_max * i as f64 / self.n_t as f64).collect();
        Ok((spec, grid))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DSlice {
    pub d: f64,
    pub gain: f64,
    pub t_opt: f64,
    /// Time maximum on the last grid point.
    pub t_boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GainOptimum {
    pub model: Model,
    pub n_atoms: usize,
    pub c: f64,
    pub slices: Vec<DSlice>,
    pub g_opt: f64,
    pub d_opt: f64,
    pub t_opt: f64,
    /// `d` maximum on the edge of the grid.
    pub d_boundary: bool,
    pub single_peaked: bool,
    /// `eta_c d_opt / 2`, the atomic adiabaticity at the optimum with `g = kappa`.
    pub eta_a: f64,
}

/// Gain-vs-time curve for one `d`.
pub fn gain_curve(model: Model, n_atoms: usize, c: f64, d: f64, scen: &FixedEtaC) -> Result<Vec<(f64, f64)>> {
    let (spec, grid) = scen.model(model, n_atoms, c, d)?;
    let phi0 = scen.phi0.unwrap_or(1.0 / n_atoms as f64);
    Ok(echo_scan(&spec, n_atoms, phi0, &grid, scen.tol)?
        .into_iter()
        .map(|p| (p.t, p.gain))
        .collect())
}

/// Number of strict interior local maxima, ignoring wiggles below `rel` of the peak.
pub fn count_peaks(values: &[f64], rel: f64) -> usize {
    let top = values.iter().cloned().fold(0.0, f64::max);
    let tol = rel * top;
    // Collapse plateaus, then look for up-down turns.
    let mut trend = 0i8;
    let mut peaks = 0;
    for w in values.windows(2) {
        let s = if w[1] > w[0] + tol {
            1
        } else if w[1] < w[0] - tol {
            -1
        } else {
            0
        };
        if s == 0 {
            continue;
        }
        if trend == 1 && s == -1 {
            peaks += 1;
        }
        trend = s;
    }
    peaks
}

/// Maximizes the echo gain over time for each `d`, then over `d`.
pub fn optimize_gain(model: Model, n_atoms: usize, c: f64, d_grid: &[f64], scen: &FixedEtaC) -> Result<GainOptimum> {
    if d_grid.len() < 3 {
        return Err(Error::invalid("d_grid", "need at least three detunings"));
    }
    let slices: Vec<DSlice> = d_grid
        .par_iter()
        .map(|&d| {
            let curve = gain_curve(model, n_atoms, c, d, scen)?;
            let (i, &(t, g)) = curve
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .expect("non-empty grid");
            Ok(DSlice {
                d,
                gain: g,
                t_opt: t,
                t_boundary: i + 1 == curve.len(),
            })
        })
        .collect::<Result<_>>()?;
    let (ib, best) = slices
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.gain.total_cmp(&b.1.gain))
        .expect("non-empty grid");
    let gains: Vec<f64> = slices.iter().map(|s| s.gain).collect();
    Ok(GainOptimum {
        model,
        n_atoms,
        c,
        g_opt: best.gain,
        d_opt: best.d,
        t_opt: best.t_opt,
        d_boundary: ib == 0 || ib + 1 == slices.len(),
        single_peaked: count_peaks(&gains, 1e-6) == 1,
        eta_a: scen.eta_c * best.d / 2.0,
        slices,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CooperativityPoint {
    pub n_atoms: usize,
    pub c: f64,
    pub nc: f64,
    pub three_body: GainOptimum,
    pub oat: GainOptimum,
}

/// Optimal gains of the three-body model and OAT on an `(N, C)` grid. The
/// `d` grid is centred on `sqrt(NC/2)` and spans `d_factor` either way.
pub fn gain_vs_collective_cooperativity(
    n_list: &[usize],
    c_list: &[f64],
    scen: &FixedEtaC,
    d_factor: f64,
    per_decade: usize,
) -> Result<Vec<CooperativityPoint>> {
    let mut out = Vec::new();
    for &n in n_list {
        for &c in c_list {
            let grid = centred_log_grid((n as f64 * c / 2.0).sqrt(), d_factor, per_decade);
            out.push(CooperativityPoint {
                n_atoms: n,
                c,
                nc: n as f64 * c,
                three_body: optimize_gain(Model::ThreeBody, n, c, &grid, scen)?,
                oat: optimize_gain(Model::Oat, n, c, &grid, scen)?,
            });
        }
    }
    Ok(out)
}

/// Beta scheme with collective dissipation only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaScheme {
    pub beta_kappa: f64,
    pub beta_gamma: f64,
    pub n_tau: usize,
    pub tau_max: f64,
    pub tol: f64,
}

impl Default for BetaScheme {
    fn default() -> Self {
        BetaScheme {
            beta_kappa: 500.0,
            beta_gamma: 5.0,
            n_tau: 60,
            tau_max: 1.5,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QfiRatioPoint {
    pub n_atoms: usize,
    pub c: f64,
    pub above_line: bool,
    pub eta_a: f64,
    pub tau_opt: f64,
    pub qfi_three_body: f64,
    pub qfi_oat: f64,
    pub qfi_tat: f64,
    pub ratio_oat: f64,
    pub ratio_tat: f64,
}

/// QFI of the three models at the three-body optimal time. Points below
/// the `eta_a = 1/2` line keep `Delta_a` fixed; points above rescale it.
pub fn qfi_ratio_point(n_atoms: usize, c: f64, scheme: &BetaScheme) -> Result<QfiRatioPoint> {
    let r = rate_ratios_beta(n_atoms, c, scheme.beta_kappa, scheme.beta_gamma)?;
    let n = n_atoms as f64;
    let three = ModelSpec::three_body(1.0, r.gamma_collective, 0.0);
    let taus: Vec<f64> = (1..=scheme.n_tau)
        .map(|i| scheme.tau_max * i as f64 / scheme.n_tau as f64)
        .collect();
    let ts: Vec<f64> = taus.iter().map(|tau| tau / n.powf(1.5)).collect();
    let curve = qfi_scan(&three, n_atoms, &ts, scheme.tol)?;
    let best = curve
        .iter()
        .max_by(|a, b| a.qfi.total_cmp(&b.qfi))
        .expect("non-empty grid");
    let t = best.t;
    let q_oat = qfi_scan(
        &ModelSpec::oat(r.chi2, r.gamma_collective, 0.0),
        n_atoms,
        &[t],
        scheme.tol,
    )?[0]
        .qfi;
    let q_tat = qfi_scan(
        &ModelSpec::tat(r.chi2, r.gamma_collective, 0.0),
        n_atoms,
        &[t],
        scheme.tol,
    )?[0]
        .qfi;
    Ok(QfiRatioPoint {
        n_atoms,
        c,
        above_line: r.above_line,
        eta_a: r.eta_a,
        tau_opt: t * n.powf(1.5),
        qfi_three_body: best.qfi,
        qfi_oat: q_oat,
        qfi_tat: q_tat,
        ratio_oat: best.qfi / q_oat,
        ratio_tat: best.qfi / q_tat,
    })
}

/// Ratio map over an `(N, C)` grid, rows ordered by `(N, C)`.
pub fn qfi_ratio_map(n_grid: &[usize], c_grid: &[f64], scheme: &BetaScheme) -> Result<Vec<QfiRatioPoint>> {
    let jobs: Vec<(usize, f64)> = n_grid
        .iter()
        .flat_map(|&n| c_grid.iter().map(move |&c| (n, c)))
        .collect();
    jobs.par_iter().map(|&(n, c)| qfi_ratio_point(n, c, scheme)).collect()
}
