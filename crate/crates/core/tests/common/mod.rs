//! Brute-force oracles on the full tensor-product Hilbert space.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use tribody::couplings::{ModelSpec, OpExpr};
use tribody::dicke::{coherent_state, DickeLadder, PureState};
use tribody::dissipative::{lindblad_evolve, CollectiveMoments, DensityState, LindbladTask, Representation};
use tribody::ode::Dop853;

pub mod invariants;
pub mod loss;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-spin and collective operators for `n` spins-1/2. Bit `i` of a
/// basis index set means atom `i` is down.
pub struct FullOps {
    pub n: usize,
    pub lower: Vec<DMatrix<C64>>,
    pub sx: DMatrix<C64>,
    pub sy: DMatrix<C64>,
    pub sz: DMatrix<C64>,
    pub sp: DMatrix<C64>,
    pub sm: DMatrix<C64>,
}

impl FullOps {
    pub fn new(n: usize) -> Self {
        let dim = 1 << n;
        let mut lower = Vec::new();
        let mut sz = DMatrix::zeros(dim, dim);
        for i in 0..n {
            let mut l = DMatrix::zeros(dim, dim);
            for b in 0..dim {
                if b & (1 << i) == 0 {
                    l[(b | (1 << i), b)] = c(1.0, 0.0);
                    sz[(b, b)] += c(0.5, 0.0);
                } else {
                    sz[(b, b)] -= c(0.5, 0.0);
                }
            }
            lower.push(l);
        }
        let sm: DMatrix<C64> = lower.iter().fold(DMatrix::zeros(dim, dim), |a, l| a + l);
        let sp = sm.adjoint();
        let sx = (&sp + &sm) * c(0.5, 0.0);
        let sy = (&sp - &sm) * c(0.0, -0.5);
        FullOps {
            n,
            lower,
            sx,
            sy,
            sz,
            sp,
            sm,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn expr(&self, e: &OpExpr) -> DMatrix<C64> {
        match *e {
            OpExpr::CubicPair => &self.sp * &self.sp * &self.sp + &self.sm * &self.sm * &self.sm,
            OpExpr::SxSq => &self.sx * &self.sx,
            OpExpr::SxSqMinusSzSq => &self.sx * &self.sx - &self.sz * &self.sz,
            OpExpr::SplusSminus => &self.sp * &self.sm,
            OpExpr::Splus => self.sp.clone(),
            OpExpr::Sminus => self.sm.clone(),
            OpExpr::Sx => self.sx.clone(),
            OpExpr::Sz => self.sz.clone(),
            OpExpr::Combo { a, b } => &self.sp * c(a, 0.0) + &self.sm * c(b, 0.0),
        }
    }

    pub fn hamiltonian(&self, m: &ModelSpec) -> DMatrix<C64> {
        m.hamiltonian_terms
            .iter()
            .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, (a, e)| {
                acc + self.expr(e) * c(*a, 0.0)
            })
    }

    /// Collective jumps followed by single-atom lowering operators.
    pub fn jumps(&self, m: &ModelSpec) -> Vec<DMatrix<C64>> {
        let mut out: Vec<DMatrix<C64>> = m.jump_terms.iter().map(|(a, e)| self.expr(e) * c(*a, 0.0)).collect();
        if m.gamma_single > 0.0 {
            let s = m.gamma_single.sqrt();
            out.extend(self.lower.iter().map(|l| l * c(s, 0.0)));
        }
        out
    }

    /// Symmetric embedding of a maximal-spin Dicke state.
    pub fn embed(&self, psi: &PureState) -> DVector<C64> {
        let a = psi.amplitudes();
        let mut v = DVector::zeros(self.dim());
        for b in 0..self.dim() {
            let k = (b as u32).count_ones() as usize;
            v[b] = a[k] / binomial(self.n, k).sqrt();
        }
        v
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Dense Lindblad evolution sampled on `times`.
pub fn lindblad_dense(
    h: &DMatrix<C64>,
    jumps: &[DMatrix<C64>],
    rho0: &DMatrix<C64>,
    times: &[f64],
    tol: f64,
) -> Vec<DMatrix<C64>> {
    let d = h.nrows();
    let loss = jumps
        .iter()
        .fold(DMatrix::<C64>::zeros(d, d), |a, l| a + l.adjoint() * l);
    let k = h - loss * c(0.0, 0.5);
    let kd = k.adjoint();
    let ld: Vec<DMatrix<C64>> = jumps.iter().map(|l| l.adjoint()).collect();
    let f = |_t: f64, x: &[C64], dx: &mut [C64]| {
        let r = DMatrix::from_column_slice(d, d, x);
        let mut out = (&k * &r) * c(0.0, -1.0) + (&r * &kd) * c(0.0, 1.0);
        for (l, la) in jumps.iter().zip(&ld) {
            out += l * &r * la;
        }
        dx.copy_from_slice(out.as_slice());
    };
    let mut y = rho0.as_slice().to_vec();
    let mut out = Vec::new();
    Dop853::with_tolerance(tol)
        .tolerances(tol, tol * 1e-2)
        .integrate_grid(&f, 0.0, &mut y, times, |_, _, y| {
            out.push(DMatrix::from_column_slice(d, d, y));
            Ok(())
        })
        .unwrap();
    out
}

pub fn expect(op: &DMatrix<C64>, rho: &DMatrix<C64>) -> C64 {
    (op * rho).trace()
}

pub fn full_moments(ops: &FullOps, rho: &DMatrix<num_complex::Complex64>) -> CollectiveMoments {
    let e = |a: &DMatrix<num_complex::Complex64>| expect(a, rho).re;
    let sym = |a: &DMatrix<_>, b: &DMatrix<_>| 0.5 * e(&(a * b + b * a));
    CollectiveMoments {
        sx: e(&ops.sx),
        sy: e(&ops.sy),
        sz: e(&ops.sz),
        sx2: e(&(&ops.sx * &ops.sx)),
        sy2: e(&(&ops.sy * &ops.sy)),
        sz2: e(&(&ops.sz * &ops.sz)),
        sxy: sym(&ops.sx, &ops.sy),
        syz: sym(&ops.sy, &ops.sz),
        szx: sym(&ops.sz, &ops.sx),
    }
}

pub fn as_array(m: &CollectiveMoments) -> [f64; 9] {
    [m.sx, m.sy, m.sz, m.sx2, m.sy2, m.sz2, m.sxy, m.syz, m.szx]
}

/// Largest deviation of the nine collective moments between the
/// permutation-invariant solver and the full Hilbert space, from a tilted
/// coherent state.
pub fn pi_vs_full(model: &ModelSpec, n: usize, tilt: f64) -> f64 {
    let ladder = DickeLadder::new(n).unwrap();
    let psi = coherent_state(&ladder, tilt, 0.3).unwrap();
    let ops = FullOps::new(n);
    let v = ops.embed(&psi);
    let rho_full = &v * v.adjoint();
    let times = [0.05, 0.2, 0.45];
    let full = lindblad_dense(&ops.hamiltonian(model), &ops.jumps(model), &rho_full, &times, 1e-12);
    let rho0 = DensityState::from_pure(&psi, Representation::PiBlocks, 1).unwrap();
    let mut task = LindbladTask::new(model.clone(), times.to_vec());
    task.tol = 1e-12;
    let pi = lindblad_evolve(&rho0, &task).unwrap();
    let mut worst: f64 = 0.0;
    for (f, p) in full.iter().zip(&pi) {
        let a = as_array(&full_moments(&ops, f));
        let b = as_array(&p.collective_moments());
        for (x, y) in a.iter().zip(b.iter()) {
            worst = worst.max((x - y).abs());
        }
        assert!((p.trace().re - 1.0).abs() < 1e-9);
        assert!(p.hermiticity_error() < 1e-10);
        assert!(p.sector_populations().iter().all(|&q| q > -1e-9));
    }
    worst
}
