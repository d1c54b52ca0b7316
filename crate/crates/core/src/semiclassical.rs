//! Mean-field flow of the three-body model, truncated Wigner sampling, and
//! closed-form approximations for moments and echo coefficients.
//!
//! Times are rescaled, `tau = chi3 N^{3/2} t`, so the mean-field equations
//! carry the prefactor `(3/2) sqrt(N)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::Dop853;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BlochPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochPoint { x, y, z }
    }

    /// Unit vector at polar angle `theta` and azimuth `phi`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        BlochPoint::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
    }

    pub fn radius_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    /// `(x + iy)^3 + (x - iy)^3 = 2 (x^3 - 3 x y^2)`.
    pub fn energy(&self) -> f64 {
        2.0 * (self.x.powi(3) - 3.0 * self.x * self.y * self.y)
    }

    pub fn transverse(&self) -> f64 {
        self.x.hypot(self.y)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Mean-field velocity for coupling `chi3 N^2`.
pub fn mf_rhs(p: &BlochPoint, chi3_n2: f64) -> BlochPoint {
    let k = 1.5 * chi3_n2;
    BlochPoint {
        x: k * (-2.0 * p.x * p.y * p.z),
        y: k * p.z * (p.y * p.y - p.x * p.x),
        z: k * (3.0 * p.x * p.x * p.y - p.y.powi(3)),
    }
}

fn rhs_slice(k: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_t, y, dy| {
        let d = mf_rhs(&BlochPoint::new(y[0], y[1], y[2]), k);
        dy[0] = d.x;
        dy[1] = d.y;
        dy[2] = d.z;
    }
}

/// Mean-field trajectory sampled on a rescaled time grid.
pub fn mf_evolve(p0: &BlochPoint, n_atoms: usize, tau_grid: &[f64], tol: f64) -> Result<Vec<BlochPoint>> {
    let k = (n_atoms as f64).sqrt();
    let mut y = p0.as_array();
    let mut out = Vec::with_capacity(tau_grid.len());
    Dop853::with_tolerance(tol).integrate_grid(&rhs_slice(k), 0.0, &mut y, tau_grid, |_, _, y| {
        out.push(BlochPoint::new(y[0], y[1], y[2]));
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowVector {
    pub start: BlochPoint,
    pub delta: BlochPoint,
}

/// Displacements `S(dt) - S(0)` for each start point under coupling `chi3 N^2`.
pub fn flow_map(points: &[BlochPoint], dt: f64, chi3_n2: f64) -> Result<Vec<FlowVector>> {
    let f = rhs_slice(chi3_n2);
    let solver = Dop853::with_tolerance(1e-12);
    points
        .iter()
        .map(|p| {
            let mut y = p.as_array();
            let mut h = 0.0;
            solver.integrate(&f, 0.0, &mut y, dt, &mut h)?;
            Ok(FlowVector {
                start: *p,
                delta: BlochPoint::new(y[0] - p.x, y[1] - p.y, y[2] - p.z),
            })
        })
        .collect()
}

/// Start points on rings around the north pole.
pub fn pole_grid(n_rings: usize, n_azimuth: usize, max_tilt: f64) -> Vec<BlochPoint> {
    let mut out = Vec::with_capacity(n_rings * n_azimuth);
    for r in 1..=n_rings {
        let th = max_tilt * r as f64 / n_rings as f64;
        for a in 0..n_azimuth {
            let ph = 2.0 * std::f64::consts::PI * a as f64 / n_azimuth as f64;
            out.push(BlochPoint::from_angles(th, ph));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowDirection {
    Inward,
    Outward,
    Tangential,
}

/// Sign of the transverse-radius change of a flow vector.
pub fn classify(v: &FlowVector) -> FlowDirection {
    let s0 = v.start.transverse();
    let s1 = BlochPoint::new(v.start.x + v.delta.x, v.start.y + v.delta.y, 0.0).transverse();
    let ds = s1 - s0;
    let scale = (v.delta.x.abs() + v.delta.y.abs() + v.delta.z.abs()).max(1e-300);
    if ds.abs() < 1e-6 * scale {
        FlowDirection::Tangential
    } else if ds < 0.0 {
        FlowDirection::Inward
    } else {
        FlowDirection::Outward
    }
}

/// Separatrix azimuths near the pole and their measured flow directions.
pub fn separatrix_directions(tilt: f64, dt: f64, chi3_n2: f64) -> Result<Vec<(f64, FlowDirection)>> {
    use std::f64::consts::PI;
    let phis: Vec<f64> = (0..6).map(|k| PI / 6.0 + k as f64 * PI / 3.0).collect();
    let pts: Vec<BlochPoint> = phis.iter().map(|&p| BlochPoint::from_angles(tilt, p)).collect();
    let flow = flow_map(&pts, dt, chi3_n2)?;
    Ok(phis.into_iter().zip(flow.iter().map(classify)).collect())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SemiclassicalTau {
    /// Large-`N` limit, `2/3`.
    pub asymptotic: f64,
    /// Closed form `(2/3) sqrt((N-1)/N)`.
    pub closed_form: f64,
    /// Same value from numerical quadrature of the transit integral.
    pub quadrature: f64,
}

/// Transit time from the edge of the initial uncertainty patch to the equator.
pub fn semiclassical_tau_opt(n_atoms: usize) -> Result<SemiclassicalTau> {
    if n_atoms < 2 {
        return Err(Error::invalid("n_atoms", "need N >= 2"));
    }
    let n = n_atoms as f64;
    let z0 = (1.0 - 1.0 / n).sqrt();
    // z = sin u turns the integrand (1 - z^2)^{-3/2} dz into sec^2 u du.
    let umax = z0.asin();
    let m = 4000;
    let h = umax / m as f64;
    let f = |u: f64| 1.0 / u.cos().powi(2);
    let mut s = f(0.0) + f(umax);
    for i in 1..m {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = s * h / 3.0;
    Ok(SemiclassicalTau {
        asymptotic: 2.0 / 3.0,
        closed_form: 2.0 / 3.0 * ((n - 1.0) / n).sqrt(),
        quadrature: 2.0 / 3.0 * integral / n.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwaMoments {
    pub tau: f64,
    pub sz_mean: f64,
    pub sz_mean_se: f64,
    pub sz_var: f64,
    pub sz_var_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwaEnsemble {
    pub n_traj: usize,
    pub seed: u64,
    pub moments: Vec<TwaMoments>,
    /// Worst violation of the radius and energy invariants over all trajectories.
    pub max_radius_drift: f64,
    pub max_energy_drift: f64,
    /// Trajectories that needed a tighter re-integration.
    pub retried: usize,
}

/// Initial transverse components for trajectory `index`.
pub fn twa_initial(n_atoms: usize, seed: u64, index: u64) -> BlochPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let sd = 1.0 / (n_atoms as f64).sqrt();
    let x: f64 = StandardNormal.sample(&mut rng);
    let y: f64 = StandardNormal.sample(&mut rng);
    BlochPoint::new(x * sd, y * sd, 1.0)
}

struct TrajOut {
    z: Vec<f64>,
    radius_drift: f64,
    energy_drift: f64,
    retried: bool,
}

fn twa_trajectory(n_atoms: usize, p0: BlochPoint, taus: &[f64]) -> Result<TrajOut> {
    let r0 = p0.radius_sq();
    let e0 = p0.energy();
    let mut tol = 1e-11;
    let mut retried = false;
    loop {
        let pts = mf_evolve(&p0, n_atoms, taus, tol)?;
        let rd = pts.iter().map(|p| (p.radius_sq() - r0).abs()).fold(0.0, f64::max);
        let ed = pts.iter().map(|p| (p.energy() - e0).abs()).fold(0.0, f64::max);
        if rd <= 1e-6 || tol < 1e-14 {
            return Ok(TrajOut {
                z: pts.iter().map(|p| p.z).collect(),
                radius_drift: rd,
                energy_drift: ed,
                retried,
            });
        }
        tol /= 100.0;
        retried = true;
    }
}

/// Truncated Wigner estimate of `<Sz>` and `Var(Sz)`.
pub fn twa_evolve(n_atoms: usize, n_traj: usize, seed: u64, tau_grid: &[f64]) -> Result<TwaEnsemble> {
    if n_traj < 2 {
        return Err(Error::invalid("n_traj", "need at least two trajectories"));
    }
    let trajs: Vec<TrajOut> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| twa_trajectory(n_atoms, twa_initial(n_atoms, seed, i), tau_grid))
        .collect::<Result<_>>()?;
    let half = n_atoms as f64 / 2.0;
    let nt = n_traj as f64;
    let moments = tau_grid
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let zs: Vec<f64> = trajs.iter().map(|t| t.z[k] * half).collect();
            let mean = zs.iter().sum::<f64>() / nt;
            let m2 = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / nt;
            let m4 = zs.iter().map(|z| (z - mean).powi(4)).sum::<f64>() / nt;
            let var = m2 * nt / (nt - 1.0);
            TwaMoments {
                tau,
                sz_mean: mean,
                sz_mean_se: (var / nt).sqrt(),
                sz_var: var,
                sz_var_se: ((m4 - m2 * m2).max(0.0) / nt).sqrt(),
            }
        })
        .collect();
    Ok(TwaEnsemble {
        n_traj,
        seed,
        moments,
        max_radius_drift: trajs.iter().map(|t| t.radius_drift).fold(0.0, f64::max),
        max_energy_drift: trajs.iter().map(|t| t.energy_drift).fold(0.0, f64::max),
        retried: trajs.iter().filter(|t| t.retried).count(),
    })
}

/// Step-function approximation for `<Sz>` and `Var(Sz)`.
pub fn analytic_moments(tau: f64, n_atoms: usize) -> (f64, f64) {
    let half = n_atoms as f64 / 2.0;
    if tau <= 0.0 {
        return (half, 0.0);
    }
    let e = (-2.0 / (9.0 * tau * tau)).exp();
    (half * (1.0 - e), half * half * (2.0 * e - e * e))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FittedEcho {
    pub c_t: f64,
    pub v_t: f64,
    pub gain: f64,
}

/// Fitted echo coefficients and the resulting small-phase gain.
pub fn fitted_echo_coefficients(tau: f64, n_atoms: usize) -> FittedEcho {
    let n = n_atoms as f64;
    if tau <= 0.0 {
        return FittedEcho {
            c_t: 0.0,
            v_t: 0.0,
            gain: 0.0,
        };
    }
    let s = 9.0 * tau * tau;
    let c_t = n * n * ((-7.0 / s).exp() - (-23.0 / s).exp());
    let v_t = 4.0 * n * n * ((-10.0 / s).exp() - (-16.0 / s).exp());
    let gain = if v_t > 0.0 { 4.0 * c_t * c_t / (n * v_t) } else { 0.0 };
    FittedEcho { c_t, v_t, gain }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn fixed_points() {
        let d = mf_rhs(&BlochPoint::new(0.0, 0.0, 1.0), 1.0);
        assert_eq!(d, BlochPoint::default());
        let d = mf_rhs(&BlochPoint::new(1.0, 0.0, 0.0), 1.0);
        assert!(d.x.abs() + d.y.abs() + d.z.abs() < 1e-15);
    }

    #[test]
    fn great_circle_velocity() {
        let z: f64 = 0.3;
        let y = (1.0 - z * z).sqrt();
        let d = mf_rhs(&BlochPoint::new(0.0, y, z), 2.0);
        assert_eq!(d.x, 0.0);
        assert_relative_eq!(d.z, -1.5 * 2.0 * (1.0 - z * z).powf(1.5), epsilon = 1e-14);
    }

    #[test]
    fn separatrix_classification() {
        let dirs = separatrix_directions(0.05, 1e-3, 1.0).unwrap();
        for (phi, d) in dirs {
            let expect = if (3.0 * phi).sin() > 0.0 {
                FlowDirection::Inward
            } else {
                FlowDirection::Outward
            };
            assert_eq!(d, expect, "phi = {}", phi / PI);
        }
    }

    #[test]
    fn tau_opt_closed_form_and_quadrature() {
        let s = semiclassical_tau_opt(45).unwrap();
        assert_relative_eq!(s.quadrature, s.closed_form, max_relative = 1e-8);
        assert!((s.closed_form / (2.0 / 3.0) - 1.0).abs() < 0.012);
        let big = semiclassical_tau_opt(1_000_000).unwrap();
        assert!((big.closed_form - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn analytic_values_at_two_thirds() {
        let (sz, var) = analytic_moments(2.0 / 3.0, 100);
        assert_relative_eq!(sz / 50.0, 1.0 - (-0.5f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(var / 2500.0, 0.8452, epsilon = 1e-4);
        let f = fitted_echo_coefficients(2.0 / 3.0, 100);
        assert_relative_eq!(f.c_t / 1e4, 0.17059, epsilon = 1e-5);
        assert_relative_eq!(f.v_t / 1e4, 0.25508, epsilon = 1e-5);
        assert_relative_eq!(f.gain / 100.0, 0.456, epsilon = 1e-3);
    }
}
