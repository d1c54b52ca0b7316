//! Collective spin ladders, banded operators and pure states.
//!
//! Basis index `m` runs over `0..=2S` with `M = S - m`, so `m = 0` is the
//! north pole `|S, S>`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const DENSE_LIMIT: usize = 512;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A spin-`S` multiplet. The symmetric sector of `N` atoms has `2S = N`;
/// smaller `two_s` describe the other permutation sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DickeLadder {
    n_atoms: usize,
    two_s: usize,
}

impl DickeLadder {
    pub fn new(n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "must be positive"));
        }
        Ok(DickeLadder {
            n_atoms,
            two_s: n_atoms,
        })
    }

    /// Sector of total spin `two_s / 2` inside an `n_atoms` ensemble.
    pub fn with_spin(n_atoms: usize, two_s: usize) -> Result<Self> {
        if two_s > n_atoms || (n_atoms - two_s) % 2 != 0 {
            return Err(Error::invalid(
                "two_s",
                format!("2S = {two_s} is not a sector of N = {n_atoms}"),
            ));
        }
        Ok(DickeLadder { n_atoms, two_s })
    }

    /// Bare spin multiplet, not attached to an atom count.
    pub fn spin(two_s: usize) -> Self {
        DickeLadder { n_atoms: two_s, two_s }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn two_s(&self) -> usize {
        self.two_s
    }

    pub fn total_spin(&self) -> f64 {
        self.two_s as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_s + 1
    }

    /// `M` for basis index `m`.
    pub fn m_z(&self, m: usize) -> f64 {
        self.total_spin() - m as f64
    }

    pub fn index_of(&self, m_z: f64) -> Option<usize> {
        let m = self.total_spin() - m_z;
        if m < -1e-9 || (m - m.round()).abs() > 1e-9 {
            return None;
        }
        let m = m.round() as usize;
        (m < self.dim()).then_some(m)
    }

    fn check(&self, other: &DickeLadder) -> Result<()> {
        if self.two_s != other.two_s {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    pub fn sz(&self) -> BandedOperator {
        let d: Vec<C64> = (0..self.dim()).map(|m| c(self.m_z(m), 0.0)).collect();
        BandedOperator::from_bands(*self, [(0, d)])
    }

    pub fn splus(&self) -> BandedOperator {
        // Vanishes on the spin-0 sector.
        build_splus_power(self, 1).unwrap_or_else(|_| BandedOperator::zero(*self))
    }

    pub fn sminus(&self) -> BandedOperator {
        self.splus().adjoint()
    }

    pub fn sx(&self) -> BandedOperator {
        self.splus().add(&self.sminus()).scale(c(0.5, 0.0))
    }

    pub fn sy(&self) -> BandedOperator {
        self.splus().add(&self.sminus().scale(c(-1.0, 0.0))).scale(c(0.0, -0.5))
    }

    pub fn identity(&self) -> BandedOperator {
        BandedOperator::from_bands(*self, [(0, vec![c(1.0, 0.0); self.dim()])])
    }

    pub fn sz_diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|m| self.m_z(m)).collect()
    }
}

/// Operator stored band by band. `bands[k][m]` is `<S, M+k| O |S, M>` with
/// `M = S - m`; entries whose target leaves the ladder are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedOperator {
    ladder: DickeLadder,
    bands: BTreeMap<i64, Vec<C64>>,
}

impl BandedOperator {
    pub fn zero(ladder: DickeLadder) -> Self {
        BandedOperator {
            ladder,
            bands: BTreeMap::new(),
        }
    }

    pub fn from_bands(ladder: DickeLadder, bands: impl IntoIterator<Item = (i64, Vec<C64>)>) -> Self {
        let mut op = Self::zero(ladder);
        for (k, v) in bands {
            assert_eq!(v.len(), ladder.dim(), "band length must equal ladder dimension");
            op.bands.insert(k, v);
        }
        op
    }

    pub fn ladder(&self) -> &DickeLadder {
        &self.ladder
    }

    pub fn band(&self, k: i64) -> Option<&[C64]> {
        self.bands.get(&k).map(|v| v.as_slice())
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        self.bands.keys().copied()
    }

    pub fn bands(&self) -> impl Iterator<Item = (i64, &[C64])> {
        self.bands.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Target index of the source `m` under offset `k`, if inside the ladder.
    #[inline]
    fn target(&self, m: usize, k: i64) -> Option<usize> {
        let t = m as i64 - k;
        (t >= 0 && (t as usize) < self.ladder.dim()).then_some(t as usize)
    }

    /// Matrix element `<row| O |col>` in basis indices.
    pub fn get(&self, row: usize, col: usize) -> C64 {
        let k = col as i64 - row as i64;
        self.bands.get(&k).map(|b| b[col]).unwrap_or_default()
    }

    /// `y = O x`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = C64::default());
        self.apply_add(C64::new(1.0, 0.0), x, y);
    }

    /// `y += a O x`.
    pub fn apply_add(&self, a: C64, x: &[C64], y: &mut [C64]) {
        let n = self.ladder.dim();
        for (&k, b) in &self.bands {
            let (lo, hi) = if k >= 0 {
                (k as usize, n)
            } else {
                (0, (n as i64 + k) as usize)
            };
            for m in lo..hi {
                let t = (m as i64 - k) as usize;
                y[t] += a * b[m] * x[m];
            }
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::default(); x.len()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.ladder);
        for (&k, b) in &self.bands {
            let mut nb = vec![C64::default(); self.ladder.dim()];
            for (m, v) in b.iter().enumerate() {
                if let Some(t) = self.target(m, k) {
                    nb[t] = v.conj();
                }
            }
            out.bands.insert(-k, nb);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.ladder.two_s, other.ladder.two_s);
        let mut out = self.clone();
        for (&k, b) in &other.bands {
            let e = out.bands.entry(k).or_insert_with(|| vec![C64::default(); b.len()]);
            for (x, y) in e.iter_mut().zip(b) {
                *x += *y;
            }
        }
        out
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut out = self.clone();
        for b in out.bands.values_mut() {
            b.iter_mut().for_each(|v| *v *= a);
        }
        out
    }

    pub fn scale_re(&self, a: f64) -> Self {
        self.scale(c(a, 0.0))
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.ladder.two_s, other.ladder.two_s);
        let n = self.ladder.dim();
        let mut out = Self::zero(self.ladder);
        for (&kb, bb) in &other.bands {
            for (&ka, ba) in &self.bands {
                let k = ka + kb;
                let entry = out.bands.entry(k).or_insert_with(|| vec![C64::default(); n]);
                for m in 0..n {
                    if let Some(mid) = other.target(m, kb) {
                        if self.target(mid, ka).is_some() {
                            entry[m] += ba[mid] * bb[m];
                        }
                    }
                }
            }
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        self.bands.retain(|_, b| b.iter().any(|v| v.norm() > 0.0));
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let adj = self.adjoint();
        let keys: std::collections::BTreeSet<i64> = self.bands.keys().chain(adj.bands.keys()).copied().collect();
        let n = self.ladder.dim();
        keys.into_iter().all(|k| {
            (0..n).all(|m| {
                let a = self.bands.get(&k).map(|b| b[m]).unwrap_or_default();
                let b = adj.bands.get(&k).map(|b| b[m]).unwrap_or_default();
                (a - b).norm() <= tol
            })
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.ladder.dim();
        let mut a = DMatrix::zeros(n, n);
        for (&k, b) in &self.bands {
            for (m, v) in b.iter().enumerate() {
                if let Some(t) = self.target(m, k) {
                    a[(t, m)] += *v;
                }
            }
        }
        a
    }

    /// Dense real matrix; fails if any entry has an imaginary part.
    pub fn to_dense_real(&self) -> Result<DMatrix<f64>> {
        let a = self.to_dense();
        if a.iter().any(|v| v.im.abs() > 1e-14 * (1.0 + v.re.abs())) {
            return Err(Error::Logic("operator is not real in the Dicke basis".into()));
        }
        Ok(a.map(|v| v.re))
    }

    /// Largest |offset| present.
    pub fn bandwidth(&self) -> usize {
        self.bands.keys().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0)
    }
}

/// `S_+^k` with entries `prod_{j<k} sqrt((S-M-j)(S+M+j+1))`.
///
/// The integer products are accumulated in `u128` and square-rooted once.
pub fn build_splus_power(ladder: &DickeLadder, k: usize) -> Result<BandedOperator> {
    if k == 0 {
        return Ok(ladder.identity());
    }
    let two_s = ladder.two_s();
    if k > two_s {
        return Err(Error::EmptyOperator {
            power: k,
            n_atoms: ladder.n_atoms(),
        });
    }
    let n = ladder.dim();
    let mut band = vec![C64::default(); n];
    for (m, slot) in band.iter_mut().enumerate().skip(k) {
        *slot = c(raising_product(two_s, m, k), 0.0);
    }
    Ok(BandedOperator::from_bands(*ladder, [(k as i64, band)]))
}

/// `sqrt(prod_{j<k} (m-j)(2S-m+j+1))`, the `S_+^k` element leaving index `m`.
pub fn raising_product(two_s: usize, m: usize, k: usize) -> f64 {
    let mut acc: u128 = 1;
    let mut scale = 1.0f64;
    for j in 0..k {
        let f = ((m - j) as u128) * ((two_s - m + j + 1) as u128);
        match acc.checked_mul(f) {
            Some(v) => acc = v,
            None => {
                scale *= (acc as f64).sqrt();
                acc = f;
            }
        }
    }
    scale * (acc as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    ladder: DickeLadder,
    amplitudes: Vec<C64>,
    step: usize,
}

impl PureState {
    pub fn new(ladder: DickeLadder, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != ladder.dim() {
            return Err(Error::Dimension {
                expected: ladder.dim(),
                found: amplitudes.len(),
            });
        }
        let mut s = PureState {
            ladder,
            amplitudes,
            step: 1,
        };
        s.step = s.detect_step();
        Ok(s)
    }

    pub fn basis(ladder: DickeLadder, m: usize) -> Result<Self> {
        if m >= ladder.dim() {
            return Err(Error::invalid("m", "basis index outside the ladder"));
        }
        let mut a = vec![C64::default(); ladder.dim()];
        a[m] = c(1.0, 0.0);
        Self::new(ladder, a)
    }

    pub fn north(ladder: DickeLadder) -> Self {
        Self::basis(ladder, 0).expect("index 0 exists")
    }

    pub fn ladder(&self) -> &DickeLadder {
        &self.ladder
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    /// Stride between populated indices (1 when the support is generic).
    pub fn step(&self) -> usize {
        self.step
    }

    pub(crate) fn with_step(mut self, step: usize) -> Self {
        self.step = step.max(1);
        self
    }

    fn detect_step(&self) -> usize {
        let support: Vec<usize> = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(i, _)| i)
            .collect();
        if support.len() <= 1 {
            return 3;
        }
        let g = support.windows(2).fold(0usize, |g, w| gcd(g, w[1] - w[0]));
        if g % 3 == 0 {
            3
        } else {
            1
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|v| *v /= n);
        }
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Copy with the first significant amplitude made real and positive.
    pub fn phase_fixed(&self) -> PureState {
        let mut out = self.clone();
        if let Some(v) = self.amplitudes.iter().find(|v| v.norm() > 1e-12) {
            let ph = v.conj() / v.norm();
            out.amplitudes.iter_mut().for_each(|a| *a *= ph);
        }
        out
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `<Sz>` and `<Sz^2>` from populations.
    pub fn sz_moments(&self) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (m, v) in self.amplitudes.iter().enumerate() {
            let p = v.norm_sqr();
            let mz = self.ladder.m_z(m);
            m1 += p * mz;
            m2 += p * mz * mz;
        }
        (m1, m2)
    }

    pub fn sz_variance(&self) -> f64 {
        let (m1, m2) = self.sz_moments();
        (m2 - m1 * m1).max(0.0)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Spin-coherent state pointing along `(theta, phi)`.
pub fn coherent_state(ladder: &DickeLadder, theta: f64, phi: f64) -> Result<PureState> {
    if !(0.0..=std::f64::consts::PI + 1e-12).contains(&theta) {
        return Err(Error::invalid("theta", "polar angle must lie in [0, pi]"));
    }
    let n = ladder.two_s();
    let (ch, sh) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let ln_binom = crate::angular::ln_binomial_row(n);
    let amps = (0..=n)
        .map(|m| {
            // Magnitudes assembled in log space to survive large N.
            let mag = if (m < n && ch == 0.0) || (m > 0 && sh == 0.0) {
                0.0
            } else {
                let l = 0.5 * ln_binom[m]
                    + if n - m > 0 { (n - m) as f64 * ch.abs().ln() } else { 0.0 }
                    + if m > 0 { m as f64 * sh.abs().ln() } else { 0.0 };
                l.exp() * ch.signum().powi((n - m) as i32) * sh.signum().powi(m as i32)
            };
            C64::from_polar(1.0, -(m as f64) * phi) * mag
        })
        .collect();
    let mut s = PureState::new(*ladder, amps)?;
    s.normalize();
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Precomputed `exp(-i angle S_axis)` factors for one ladder.
#[derive(Debug, Clone)]
pub struct Rotator {
    ladder: DickeLadder,
    /// Eigenvectors (columns) and eigenvalues of `S_x`.
    vecs: DMatrix<f64>,
    vals: DVector<f64>,
}

impl Rotator {
    pub fn new(ladder: &DickeLadder) -> Self {
        let sx = ladder.sx().to_dense_real().expect("Sx is real");
        let eig = SymmetricEigen::new(sx);
        Rotator {
            ladder: *ladder,
            vecs: eig.eigenvectors,
            vals: eig.eigenvalues,
        }
    }

    fn phase_z(&self, x: &mut [C64], angle: f64) {
        phase_z(&self.ladder, x, angle);
    }

    fn rot_x(&self, x: &mut [C64], angle: f64) {
        let n = x.len();
        let mut coef = vec![C64::default(); n];
        for (j, cj) in coef.iter_mut().enumerate() {
            let mut acc = C64::default();
            for i in 0..n {
                acc += x[i] * self.vecs[(i, j)];
            }
            *cj = acc * C64::from_polar(1.0, -angle * self.vals[j]);
        }
        for (i, xi) in x.iter_mut().enumerate() {
            let mut acc = C64::default();
            for (j, cj) in coef.iter().enumerate() {
                acc += *cj * self.vecs[(i, j)];
            }
            *xi = acc;
        }
    }

    /// Applies `exp(-i angle S_axis)` to a raw amplitude vector.
    pub fn apply(&self, x: &mut [C64], axis: Axis, angle: f64) {
        match axis {
            Axis::Z => self.phase_z(x, angle),
            Axis::X => self.rot_x(x, angle),
            // S_y = Rz(pi/2) S_x Rz(-pi/2)
            Axis::Y => {
                self.phase_z(x, -std::f64::consts::FRAC_PI_2);
                self.rot_x(x, angle);
                self.phase_z(x, std::f64::consts::FRAC_PI_2);
            }
        }
    }

    /// Dense unitary `exp(-i angle S_axis)`.
    pub fn matrix(&self, axis: Axis, angle: f64) -> DMatrix<C64> {
        let n = self.ladder.dim();
        let mut u = DMatrix::zeros(n, n);
        let mut col = vec![C64::default(); n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = C64::default());
            col[j] = c(1.0, 0.0);
            self.apply(&mut col, axis, angle);
            for i in 0..n {
                u[(i, j)] = col[i];
            }
        }
        u
    }
}

/// Applies `exp(-i angle S_axis)` to a state.
pub fn rotate(state: &PureState, axis: Axis, angle: f64) -> PureState {
    let mut amps = state.amplitudes.clone();
    match axis {
        Axis::Z => phase_z(state.ladder(), &mut amps, angle),
        _ => Rotator::new(state.ladder()).apply(&mut amps, axis, angle),
    }
    let step = if axis == Axis::Z { state.step } else { 1 };
    PureState {
        ladder: state.ladder,
        amplitudes: amps,
        step,
    }
}

/// `x <- exp(-i angle Sz) x`.
pub fn phase_z(ladder: &DickeLadder, x: &mut [C64], angle: f64) {
    for (m, v) in x.iter_mut().enumerate() {
        *v *= C64::from_polar(1.0, -angle * ladder.m_z(m));
    }
}

/// `<O>` and `<O^2> - <O>^2` (the latter as `|O psi|^2 - |<O>|^2`, exact for
/// Hermitian `O`).
pub fn expectation_and_variance(state: &PureState, op: &BandedOperator) -> Result<(C64, f64)> {
    state.ladder.check(op.ladder())?;
    let opsi = op.apply(&state.amplitudes);
    let mean: C64 = state.amplitudes.iter().zip(&opsi).map(|(a, b)| a.conj() * b).sum();
    let sq: f64 = opsi.iter().map(|v| v.norm_sqr()).sum();
    Ok((mean, (sq - mean.norm_sqr()).max(0.0)))
}

/// Dense real symmetric `exp(-i t H)` via eigendecomposition.
pub fn dense_unitary(h: &DMatrix<f64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let v = eig.eigenvectors.map(|x| c(x, 0.0));
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -t * e)),
    ));
    &v * d * v.transpose()
}
