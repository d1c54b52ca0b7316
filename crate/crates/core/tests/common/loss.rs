//! Brute-force master equation for atom loss on the 3^N space (each atom
//! up, down or gone).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use tribody::couplings::ModelSpec;
use tribody::dicke::{DickeLadder, PureState};
use tribody::ode::Dop853;
use tribody::trajectory::{trajectory_moments, LossConvention, LossModel};

type Sparse = Vec<(usize, usize, C64)>;

pub struct LossOracle {
    dim: usize,
    k: Sparse,
    jumps: Vec<Sparse>,
    sz: Vec<f64>,
}

fn digit(b: usize, i: usize) -> usize {
    b / 3usize.pow(i as u32) % 3
}

fn sparsify(m: &DMatrix<C64>) -> Sparse {
    let mut out = Vec::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if m[(r, c)].norm() > 1e-14 {
                out.push((r, c, m[(r, c)]));
            }
        }
    }
    out
}

impl LossOracle {
    pub fn new(n: usize, model: &ModelSpec, gamma_loss: f64) -> Self {
        let dim = 3usize.pow(n as u32);
        let mut sp = DMatrix::<C64>::zeros(dim, dim);
        let mut jumps = Vec::new();
        let mut sz = vec![0.0; dim];
        for i in 0..n {
            let p = 3usize.pow(i as u32);
            let mut up_loss = Vec::new();
            let mut down_loss = Vec::new();
            for b in 0..dim {
                match digit(b, i) {
                    0 => {
                        sz[b] += 0.5;
                        up_loss.push((b + 2 * p, b, C64::new(gamma_loss.sqrt(), 0.0)));
                    }
                    1 => {
                        sz[b] -= 0.5;
                        sp[(b - p, b)] += C64::new(1.0, 0.0);
                        down_loss.push((b + p, b, C64::new(gamma_loss.sqrt(), 0.0)));
                    }
                    _ => {}
                }
            }
            jumps.push(up_loss);
            jumps.push(down_loss);
        }
        let sm = sp.adjoint();
        let sp3 = &sp * &sp * &sp;
        let h = (&sp3 + sp3.adjoint()) * C64::new(model.strength, 0.0);
        let g = model.gamma_collective;
        let mut kd = h;
        if g > 0.0 {
            let s = C64::new(g.sqrt(), 0.0);
            let (jp, jm) = (&sp * s, &sm * s);
            kd -= (jp.adjoint() * &jp + jm.adjoint() * &jm) * C64::new(0.0, 0.5);
            jumps.push(sparsify(&jp));
            jumps.push(sparsify(&jm));
        }
        for j in jumps.iter().take(2 * n) {
            for &(_, c, v) in j {
                kd[(c, c)] -= C64::new(0.0, 0.5) * v.norm_sqr();
            }
        }
        LossOracle {
            dim,
            k: sparsify(&kd),
            jumps,
            sz,
        }
    }

    fn rhs(&self, x: &[C64], dx: &mut [C64]) {
        let d = self.dim;
        dx.fill(C64::default());
        let mi = C64::new(0.0, -1.0);
        for &(r, c, v) in &self.k {
            let a = mi * v;
            let b = -mi * v.conj();
            for q in 0..d {
                dx[r * d + q] += a * x[c * d + q];
                // -i(-rho K') column r gets conj(K[r][c]) rho[:, c]
                dx[q * d + r] += b * x[q * d + c];
            }
        }
        for j in &self.jumps {
            for &(r1, c1, v1) in j {
                for &(r2, c2, v2) in j {
                    dx[r1 * d + r2] += v1 * v2.conj() * x[c1 * d + c2];
                }
            }
        }
    }

    pub fn moments(&self, x: &[C64]) -> (f64, f64) {
        let d = self.dim;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for b in 0..d {
            m1 += self.sz[b] * x[b * d + b].re;
            m2 += self.sz[b] * self.sz[b] * x[b * d + b].re;
        }
        (m1, m2)
    }
}

/// Compares trajectory averages of `Sz` and `Sz^2` from the north pole with
/// the master equation, allowing three standard errors.
pub fn check_loss(n: usize, model: ModelSpec, gamma_loss: f64, times: &[f64], n_traj: usize) -> Result<(), String> {
    let oracle = LossOracle::new(n, &model, gamma_loss);
    let mut rho = vec![C64::default(); oracle.dim * oracle.dim];
    rho[0] = C64::new(1.0, 0.0);
    let f = |_t: f64, x: &[C64], dx: &mut [C64]| oracle.rhs(x, dx);
    let mut exact = Vec::new();
    Dop853::with_tolerance(1e-10)
        .integrate_grid(&f, 0.0, &mut rho, times, |_, _, y| {
            exact.push(oracle.moments(y));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let spec = LossModel::new(model, gamma_loss, LossConvention::PerChannel).map_err(|e| e.to_string())?;
    let psi = PureState::north(DickeLadder::new(n).unwrap());
    let est = trajectory_moments(&spec, &psi, times, n_traj, 2024 + n as u64).map_err(|e| e.to_string())?;
    for (e, (m1, m2)) in est.iter().zip(&exact) {
        if (e.sz_mean - m1).abs() > 3.0 * e.sz_se {
            return Err(format!(
                "N = {n}, t = {}: <Sz> {} +- {} vs {m1}",
                e.t, e.sz_mean, e.sz_se
            ));
        }
        if (e.sz2_mean - m2).abs() > 3.0 * e.sz2_se {
            return Err(format!(
                "N = {n}, t = {}: <Sz^2> {} +- {} vs {m2}",
                e.t, e.sz2_mean, e.sz2_se
            ));
        }
    }
    Ok(())
}
