//! Lindblad evolution on total-spin sectors.
//!
//! A permutation-invariant density operator is stored as one block per
//! total spin `j`, normalised so that the block trace is the population of
//! the sector (the operator itself is `rho_j / d_j` on each of the `d_j`
//! degenerate copies). Collective operators act block-wise. Single-atom
//! lowering at rate `gamma_single` couples neighbouring sectors through the
//! recycling term `sum_i s-_i rho s+_i`, whose block coefficients follow
//! from coupling the last atom to the remaining `N - 1` by Clebsch-Gordan
//! coefficients and tracing the degeneracy space.
//!
//! Blocks are packed by coherence order: only entries with
//! `M - M' = 0 (mod stride)` are stored. The three-body model started at a
//! pole keeps stride 3 under every channel here, the two-body models stride 2.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::angular::{cg_add_half, ln_factorials, ln_multiplicity};
use crate::couplings::{Model, ModelSpec};
use crate::dicke::{c, coherent_state, BandedOperator, DickeLadder, PureState, C64};
use crate::error::{Error, Result};
use crate::ode::Dop853;

const TRACE_TOL: f64 = 1e-6;
const POSITIVITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Representation {
    /// Only the maximal-spin sector; valid for collective jumps.
    MaxS,
    /// Every sector `j = N/2, N/2 - 1, ...`.
    PiBlocks,
}

impl Representation {
    /// The cheapest representation able to carry `model`.
    pub fn for_model(model: &ModelSpec) -> Self {
        if model.gamma_single > 0.0 {
            Representation::PiBlocks
        } else {
            Representation::MaxS
        }
    }
}

/// One packed total-spin block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sector {
    pub two_j: usize,
    pub dim: usize,
    pub offset: usize,
    pub len: usize,
    #[serde(skip)]
    rows: Vec<(usize, usize)>,
}

impl Sector {
    fn new(two_j: usize, stride: usize, offset: usize) -> Self {
        let dim = two_j + 1;
        let mut rows = Vec::with_capacity(dim);
        let mut at = 0;
        for r in 0..dim {
            let first = r % stride;
            let n = if first < dim { (dim - first).div_ceil(stride) } else { 0 };
            rows.push((at, n));
            at += n;
        }
        Sector {
            two_j,
            dim,
            offset,
            len: at,
            rows,
        }
    }

    /// Position of `(r, col)` inside the block, if stored.
    #[inline]
    fn pos(&self, stride: usize, r: usize, col: usize) -> Option<usize> {
        if r >= self.dim || col >= self.dim || (col + stride - r % stride) % stride != 0 {
            return None;
        }
        Some(self.rows[r].0 + (col - r % stride) / stride)
    }

    #[inline]
    fn row(&self, r: usize) -> (usize, usize) {
        self.rows[r]
    }
}

fn layout(n_atoms: usize, repr: Representation, stride: usize) -> Vec<Sector> {
    let last = match repr {
        Representation::MaxS => n_atoms,
        Representation::PiBlocks => n_atoms % 2,
    };
    let mut out = Vec::new();
    let mut offset = 0;
    let mut two_j = n_atoms;
    loop {
        let s = Sector::new(two_j, stride, offset);
        offset += s.len;
        out.push(s);
        if two_j < last + 2 {
            break;
        }
        two_j -= 2;
    }
    out
}

fn split_blocks<'a>(data: &'a mut [C64], sectors: &[Sector]) -> Vec<&'a mut [C64]> {
    let mut out = Vec::with_capacity(sectors.len());
    let mut rest = data;
    for s in sectors {
        let (head, tail) = rest.split_at_mut(s.len);
        out.push(head);
        rest = tail;
    }
    out
}

/// Largest coherence stride the model's generator preserves.
pub fn admissible_stride(model: &ModelSpec, n_atoms: usize) -> usize {
    let Ok(ladder) = DickeLadder::new(n_atoms) else {
        return 1;
    };
    let h = model.hamiltonian(&ladder);
    let jumps = model.jumps(&ladder);
    [3, 2]
        .into_iter()
        .find(|&p| {
            let h_ok = h.offsets().all(|k| k.rem_euclid(p as i64) == 0);
            let j_ok = jumps.iter().all(|j| {
                let ks: Vec<i64> = j.offsets().collect();
                ks.iter().all(|k| (k - ks[0]).rem_euclid(p as i64) == 0)
            });
            h_ok && j_ok
        })
        .unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    n_atoms: usize,
    repr: Representation,
    stride: usize,
    sectors: Vec<Sector>,
    data: Vec<C64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CollectiveMoments {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub sx2: f64,
    pub sy2: f64,
    pub sz2: f64,
    /// Symmetrised cross moments `<{Sa, Sb}>/2`.
    pub sxy: f64,
    pub syz: f64,
    pub szx: f64,
}

impl DensityState {
    pub fn zero(n_atoms: usize, repr: Representation, stride: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::invalid("n_atoms", "need at least one atom"));
        }
        if !(1..=3).contains(&stride) {
            return Err(Error::invalid("stride", "must be 1, 2 or 3"));
        }
        let sectors = layout(n_atoms, repr, stride);
        let len = sectors.iter().map(|s| s.len).sum();
        Ok(DensityState {
            n_atoms,
            repr,
            stride,
            sectors,
            data: vec![C64::default(); len],
        })
    }

    /// `|psi><psi|` in the maximal-spin sector. Fails if the state has
    /// coherences the stride would drop.
    pub fn from_pure(state: &PureState, repr: Representation, stride: usize) -> Result<Self> {
        let ladder = state.ladder();
        if ladder.two_s() != ladder.n_atoms() {
            return Err(Error::invalid(
                "state",
                "pure state must lie in the maximal-spin sector",
            ));
        }
        let mut out = Self::zero(ladder.n_atoms(), repr, stride)?;
        let a = state.amplitudes();
        let top = out.sectors[0].clone();
        for r in 0..a.len() {
            for col in 0..a.len() {
                let v = a[r] * a[col].conj();
                match top.pos(stride, r, col) {
                    Some(p) => out.data[p] = v,
                    None if v.norm() > 1e-14 => {
                        return Err(Error::invalid("stride", "state carries coherences outside the stride"))
                    }
                    None => {}
                }
            }
        }
        Ok(out)
    }

    /// All atoms up.
    pub fn north(n_atoms: usize, repr: Representation) -> Result<Self> {
        let ladder = DickeLadder::new(n_atoms)?;
        Self::from_pure(&PureState::north(ladder), repr, 1)
    }

    /// Default initial state of each model (the pole, or `+y` for TAT) with
    /// the largest stride the dynamics preserve.
    pub fn initial_for(model: &ModelSpec, n_atoms: usize, repr: Representation) -> Result<Self> {
        let ladder = DickeLadder::new(n_atoms)?;
        match model.model {
            Model::Tat => {
                let psi = coherent_state(&ladder, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)?;
                Self::from_pure(&psi, repr, 1)
            }
            _ => Self::from_pure(&PureState::north(ladder), repr, admissible_stride(model, n_atoms)),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// Entry `(r, col)` of block `i`; zero if not stored.
    pub fn get(&self, i: usize, r: usize, col: usize) -> C64 {
        let s = &self.sectors[i];
        s.pos(self.stride, r, col)
            .map(|p| self.data[s.offset + p])
            .unwrap_or_default()
    }

    pub fn block_matrix(&self, i: usize) -> DMatrix<C64> {
        let d = self.sectors[i].dim;
        DMatrix::from_fn(d, d, |r, col| self.get(i, r, col))
    }

    pub fn ladder(&self, i: usize) -> DickeLadder {
        DickeLadder::with_spin(self.n_atoms, self.sectors[i].two_j).expect("sector spin fits N")
    }

    fn diag(&self, i: usize) -> impl Iterator<Item = (f64, C64)> + '_ {
        let s = &self.sectors[i];
        let j = s.two_j as f64 / 2.0;
        (0..s.dim).map(move |r| (j - r as f64, self.data[s.offset + s.row(r).0 + r / self.stride]))
    }

    pub fn trace(&self) -> C64 {
        (0..self.sectors.len()).flat_map(|i| self.diag(i).map(|(_, v)| v)).sum()
    }

    /// Population of each sector, in the order of [`Self::sectors`].
    pub fn sector_populations(&self) -> Vec<f64> {
        (0..self.sectors.len())
            .map(|i| self.diag(i).map(|(_, v)| v.re).sum())
            .collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (0..self.sectors.len())
            .map(|i| {
                let m = self.block_matrix(i);
                (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.sectors.len())
            .map(|i| {
                let m = self.block_matrix(i);
                let h = (&m + m.adjoint()) * c(0.5, 0.0);
                SymmetricEigen::new(h)
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `Tr(A rho)` for a collective operator built per sector.
    pub fn expect(&self, op: impl Fn(&DickeLadder) -> BandedOperator) -> C64 {
        let mut total = C64::default();
        for i in 0..self.sectors.len() {
            let a = op(&self.ladder(i));
            let d = self.sectors[i].dim as i64;
            for (k, vals) in a.bands() {
                for col in 0..d {
                    let r = col - k;
                    if (0..d).contains(&r) {
                        total += vals[col as usize] * self.get(i, col as usize, r as usize);
                    }
                }
            }
        }
        total
    }

    pub fn collective_moments(&self) -> CollectiveMoments {
        let e = |f: &dyn Fn(&DickeLadder) -> BandedOperator| self.expect(f).re;
        let sym = |a: fn(&DickeLadder) -> BandedOperator, b: fn(&DickeLadder) -> BandedOperator| {
            0.5 * e(&|l: &DickeLadder| {
                let (x, y) = (a(l), b(l));
                x.mul(&y).add(&y.mul(&x))
            })
        };
        CollectiveMoments {
            sx: e(&|l| l.sx()),
            sy: e(&|l| l.sy()),
            sz: e(&|l| l.sz()),
            sx2: e(&|l| l.sx().mul(&l.sx())),
            sy2: e(&|l| l.sy().mul(&l.sy())),
            sz2: e(&|l| l.sz().mul(&l.sz())),
            sxy: sym(DickeLadder::sx, DickeLadder::sy),
            syz: sym(DickeLadder::sy, DickeLadder::sz),
            szx: sym(DickeLadder::sz, DickeLadder::sx),
        }
    }

    pub fn sz_moments(&self) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..self.sectors.len() {
            for (mz, v) in self.diag(i) {
                m1 += mz * v.re;
                m2 += mz * mz * v.re;
            }
        }
        (m1, m2)
    }

    /// Symmetric-logarithmic-derivative Fisher matrix for the generators
    /// `(Sx, Sy, Sz)`.
    pub fn qfi_matrix(&self) -> Matrix3<f64> {
        let mut f = Matrix3::zeros();
        for i in 0..self.sectors.len() {
            let l = self.ladder(i);
            let m = self.block_matrix(i);
            let h = (&m + m.adjoint()) * c(0.5, 0.0);
            let eig = SymmetricEigen::new(h);
            let v = &eig.eigenvectors;
            let lam = &eig.eigenvalues;
            let gens: Vec<DMatrix<C64>> = [l.sx(), l.sy(), l.sz()]
                .iter()
                .map(|g| v.adjoint() * g.to_dense() * v)
                .collect();
            let d = lam.len();
            let scale = lam.iter().cloned().fold(0.0f64, |a, x| a.max(x.abs()));
            for p in 0..d {
                for q in 0..d {
                    let s = lam[p] + lam[q];
                    if s <= 1e-13 * scale.max(1e-300) {
                        continue;
                    }
                    let w = 2.0 * (lam[p] - lam[q]).powi(2) / s;
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..3 {
                        for b in a..3 {
                            let v = w * (gens[a][(p, q)] * gens[b][(q, p)]).re;
                            f[(a, b)] += v;
                            if a != b {
                                f[(b, a)] += v;
                            }
                        }
                    }
                }
            }
        }
        f
    }

    /// Largest QFI over collective rotation axes.
    pub fn qfi_max(&self) -> f64 {
        SymmetricEigen::new(self.qfi_matrix()).eigenvalues.max()
    }

    fn check(&self) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Accuracy(format!("trace drifted to {:.3e}", tr.re - 1.0)));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -POSITIVITY_TOL {
            return Err(Error::Positivity(lmin));
        }
        Ok(())
    }

    fn with_data(&self, data: Vec<C64>) -> Self {
        DensityState {
            n_atoms: self.n_atoms,
            repr: self.repr,
            stride: self.stride,
            sectors: self.sectors.clone(),
            data,
        }
    }
}

/// Packed-block kernels. `p` is the stride; every band offset passed to
/// `left_mul`/`right_mul` is a multiple of it.
struct Kernels<'a> {
    s: &'a Sector,
    p: usize,
}

impl Kernels<'_> {
    /// Column of position `q` in row `r`.
    #[inline]
    fn col(&self, r: usize, q: usize) -> usize {
        r % self.p + q * self.p
    }

    /// `out += alpha * A X`.
    fn left_mul(&self, a: &BandedOperator, x: &[C64], alpha: C64, out: &mut [C64]) {
        let d = self.s.dim as i64;
        for (k, vals) in a.bands() {
            for r in 0..self.s.dim {
                let src = r as i64 + k;
                if src < 0 || src >= d {
                    continue;
                }
                let coef = alpha * vals[src as usize];
                if coef == C64::default() {
                    continue;
                }
                let (ro, n) = self.s.row(r);
                let (so, _) = self.s.row(src as usize);
                for (o, xv) in out[ro..ro + n].iter_mut().zip(&x[so..so + n]) {
                    *o += coef * xv;
                }
            }
        }
    }

    /// `out += alpha * X A`.
    fn right_mul(&self, x: &[C64], a: &BandedOperator, alpha: C64, out: &mut [C64]) {
        let d = self.s.dim as i64;
        let p = self.p as i64;
        for (k, vals) in a.bands() {
            let kq = k / p;
            for r in 0..self.s.dim {
                let (ro, n) = self.s.row(r);
                for q in 0..n {
                    let col = self.col(r, q) as i64;
                    let sc = col - k;
                    if sc < 0 || sc >= d {
                        continue;
                    }
                    let v = vals[col as usize];
                    if v == C64::default() {
                        continue;
                    }
                    out[ro + q] += alpha * v * x[ro + (q as i64 - kq) as usize];
                }
            }
        }
    }

    /// `out += L X L'` (`adjoint = false`) or `out += L' X L`.
    fn sandwich(&self, l: &BandedOperator, x: &[C64], adjoint: bool, out: &mut [C64]) {
        let d = self.s.dim as i64;
        let p = self.p as i64;
        let bands: Vec<(i64, &[C64])> = l.bands().collect();
        for &(k, vk) in &bands {
            for &(m, vm) in &bands {
                if (m - k).rem_euclid(p) != 0 {
                    continue;
                }
                for r in 0..self.s.dim {
                    // Forward: L[r][r+k] X[r+k][c+m] conj(L[c][c+m]).
                    // Adjoint: conj(L[r-k][r]) X[r-k][c-m] L[c-m][c].
                    let (sr, a) = if adjoint {
                        let sr = r as i64 - k;
                        if sr < 0 || sr >= d {
                            continue;
                        }
                        (sr as usize, vk[r].conj())
                    } else {
                        let sr = r as i64 + k;
                        if sr < 0 || sr >= d {
                            continue;
                        }
                        (sr as usize, vk[sr as usize])
                    };
                    if a == C64::default() {
                        continue;
                    }
                    let (ro, n) = self.s.row(r);
                    let (so, _) = self.s.row(sr);
                    let sfirst = (sr % self.p) as i64;
                    for q in 0..n {
                        let col = self.col(r, q) as i64;
                        let (sc, b) = if adjoint {
                            let sc = col - m;
                            if sc < 0 || sc >= d {
                                continue;
                            }
                            (sc, vm[col as usize])
                        } else {
                            let sc = col + m;
                            if sc < 0 || sc >= d {
                                continue;
                            }
                            (sc, vm[sc as usize].conj())
                        };
                        let sq = ((sc - sfirst) / p) as usize;
                        out[ro + q] += a * b * x[so + sq];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct SectorOps {
    /// Effective non-Hermitian generator `H - (i/2)(sum L'L + gs (Sz + N/2))`.
    k: BandedOperator,
    k_adj: BandedOperator,
    jumps: Vec<BandedOperator>,
}

/// One source-to-target contribution of the recycling term.
#[derive(Debug, Clone)]
struct RecycleTerm {
    src: usize,
    dst: usize,
    shift: usize,
    /// Amplitudes indexed by source row, weights folded in.
    g: Vec<f64>,
}

/// Forward and adjoint Lindblad generator on a fixed packed layout.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    n_atoms: usize,
    stride: usize,
    sectors: Vec<Sector>,
    ops: Vec<SectorOps>,
    terms: Vec<RecycleTerm>,
    into: Vec<Vec<usize>>,
    from: Vec<Vec<usize>>,
}

impl Liouvillian {
    pub fn new(model: &ModelSpec, n_atoms: usize, repr: Representation, stride: usize) -> Result<Self> {
        if model.gamma_collective < 0.0 || model.gamma_single < 0.0 {
            return Err(Error::invalid("rates", "dissipation rates must be non-negative"));
        }
        if model.gamma_single > 0.0 && repr == Representation::MaxS {
            return Err(Error::invalid(
                "representation",
                "single-atom flips leave the maximal-spin sector; use PiBlocks",
            ));
        }
        if stride > 1 && admissible_stride(model, n_atoms) % stride != 0 {
            return Err(Error::invalid(
                "stride",
                format!("the generator does not preserve stride {stride}"),
            ));
        }
        let sectors = layout(n_atoms, repr, stride);
        let gs = model.gamma_single;
        let ops = sectors
            .iter()
            .map(|s| {
                let l = DickeLadder::with_spin(n_atoms, s.two_j)?;
                let h = model.hamiltonian(&l);
                let jumps = model.jumps(&l);
                let mut loss = jumps
                    .iter()
                    .fold(BandedOperator::zero(l), |acc, j| acc.add(&j.adjoint().mul(j)));
                if gs > 0.0 {
                    let half_n = n_atoms as f64 / 2.0;
                    let diag: Vec<C64> = (0..s.dim).map(|m| c(gs * (l.m_z(m) + half_n), 0.0)).collect();
                    loss = loss.add(&BandedOperator::from_bands(l, [(0, diag)]));
                }
                let k = h.add(&loss.scale(c(0.0, -0.5)));
                let k_adj = k.adjoint();
                Ok(SectorOps { k, k_adj, jumps })
            })
            .collect::<Result<Vec<_>>>()?;
        let terms = if gs > 0.0 {
            recycle_terms(n_atoms, &sectors, gs)
        } else {
            Vec::new()
        };
        let mut into = vec![Vec::new(); sectors.len()];
        let mut from = vec![Vec::new(); sectors.len()];
        for (i, t) in terms.iter().enumerate() {
            into[t.dst].push(i);
            from[t.src].push(i);
        }
        Ok(Liouvillian {
            n_atoms,
            stride,
            sectors,
            ops,
            terms,
            into,
            from,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn len(&self) -> usize {
        self.sectors.iter().map(|s| s.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    /// `out = L(x)`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        self.apply_impl(x, out, false)
    }

    /// `out = L^dagger(x)`, the Heisenberg-picture generator.
    pub fn apply_adjoint(&self, x: &[C64], out: &mut [C64]) {
        self.apply_impl(x, out, true)
    }

    fn apply_impl(&self, x: &[C64], out: &mut [C64], adjoint: bool) {
        let p = self.stride;
        let blocks = split_blocks(out, &self.sectors);
        blocks.into_par_iter().enumerate().for_each(|(i, o)| {
            o.fill(C64::default());
            let s = &self.sectors[i];
            let kern = Kernels { s, p };
            let op = &self.ops[i];
            let xi = &x[s.offset..s.offset + s.len];
            if adjoint {
                kern.left_mul(&op.k_adj, xi, c(0.0, 1.0), o);
                kern.right_mul(xi, &op.k, c(0.0, -1.0), o);
            } else {
                kern.left_mul(&op.k, xi, c(0.0, -1.0), o);
                kern.right_mul(xi, &op.k_adj, c(0.0, 1.0), o);
            }
            for j in &op.jumps {
                kern.sandwich(j, xi, adjoint, o);
            }
            let list = if adjoint { &self.from[i] } else { &self.into[i] };
            for &ti in list {
                let t = &self.terms[ti];
                if adjoint {
                    // O_src[r][c] += g[r] g[c] O_dst[r+s][c+s]
                    let d = &self.sectors[t.dst];
                    let xd = &x[d.offset..d.offset + d.len];
                    recycle_rows(s, d, t, p, |o_pos, x_pos, w| o[o_pos] += xd[x_pos] * w);
                } else {
                    let src = &self.sectors[t.src];
                    let xs = &x[src.offset..src.offset + src.len];
                    recycle_rows(src, s, t, p, |x_pos, o_pos, w| o[o_pos] += xs[x_pos] * w);
                }
            }
        });
    }
}

/// Visits `(source position, target position, weight)` of a recycling term.
#[inline]
fn recycle_rows(src: &Sector, dst: &Sector, t: &RecycleTerm, p: usize, mut f: impl FnMut(usize, usize, f64)) {
    for (r, gr) in t.g.iter().enumerate() {
        if *gr == 0.0 {
            continue;
        }
        let (so, n) = src.row(r);
        let (dof, _) = dst.row(r + t.shift);
        let dfirst = (r + t.shift) % p;
        for q in 0..n {
            let col = r % p + q * p;
            let gc = t.g[col];
            if gc == 0.0 {
                continue;
            }
            let dq = (col + t.shift - dfirst) / p;
            f(so + q, dof + dq, gr * gc);
        }
    }
}

fn recycle_terms(n_atoms: usize, sectors: &[Sector], gamma: f64) -> Vec<RecycleTerm> {
    let lf = ln_factorials(n_atoms);
    let index = |two_j: usize| sectors.iter().position(|s| s.two_j == two_j);
    let mut out = Vec::new();
    for (si, s) in sectors.iter().enumerate() {
        let ln_dj = ln_multiplicity(n_atoms, s.two_j, &lf);
        for two_k in [s.two_j + 1, s.two_j.wrapping_sub(1)] {
            if two_k > n_atoms - 1 {
                continue;
            }
            let w = gamma * n_atoms as f64 * (ln_multiplicity(n_atoms - 1, two_k, &lf) - ln_dj).exp();
            let upper_src = s.two_j > two_k;
            for two_jp in [two_k + 1, two_k.wrapping_sub(1)] {
                let Some(di) = (two_jp <= n_atoms).then(|| index(two_jp)).flatten() else {
                    continue;
                };
                let upper_dst = two_jp > two_k;
                let shift = (two_jp + 2 - s.two_j) / 2;
                let dst_dim = two_jp + 1;
                let g: Vec<f64> = (0..s.dim)
                    .map(|r| {
                        let two_m = s.two_j as i64 - 2 * r as i64;
                        if r + shift >= dst_dim {
                            return 0.0;
                        }
                        let a = cg_add_half(two_k, upper_src, true, two_m);
                        let b = cg_add_half(two_k, upper_dst, false, two_m - 2);
                        w.sqrt() * a * b
                    })
                    .collect();
                if g.iter().any(|v| *v != 0.0) {
                    out.push(RecycleTerm {
                        src: si,
                        dst: di,
                        shift,
                        g,
                    });
                }
            }
        }
    }
    out
}

/// Direction of the Hamiltonian part of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Reversed,
}

#[derive(Debug, Clone)]
pub struct LindbladTask {
    pub model: ModelSpec,
    /// Physical times in units of the inverse model strengths.
    pub t_grid: Vec<f64>,
    pub direction: Direction,
    pub tol: f64,
}

impl LindbladTask {
    pub fn new(model: ModelSpec, t_grid: Vec<f64>) -> Self {
        LindbladTask {
            model,
            t_grid,
            direction: Direction::Forward,
            tol: 1e-10,
        }
    }

    fn effective_model(&self) -> ModelSpec {
        match self.direction {
            Direction::Forward => self.model.clone(),
            Direction::Reversed => self.model.reversed(),
        }
    }
}

fn solver(tol: f64) -> Dop853 {
    Dop853::with_tolerance(tol).tolerances(tol, tol * 1e-2)
}

fn generator_for(x: &DensityState, model: &ModelSpec) -> Result<Liouvillian> {
    Liouvillian::new(model, x.n_atoms, x.repr, x.stride)
}

/// Density states at each time of the task grid.
pub fn lindblad_evolve(rho0: &DensityState, task: &LindbladTask) -> Result<Vec<DensityState>> {
    let gen = generator_for(rho0, &task.effective_model())?;
    let mut y = rho0.data.clone();
    let mut out = Vec::with_capacity(task.t_grid.len());
    let f = |_t: f64, x: &[C64], dx: &mut [C64]| gen.apply(x, dx);
    solver(task.tol).integrate_grid(&f, 0.0, &mut y, &task.t_grid, |_, _, y| {
        let st = rho0.with_data(y.to_vec());
        st.check()?;
        out.push(st);
        Ok(())
    })?;
    Ok(out)
}

/// Evolves an arbitrary (not necessarily Hermitian) operator; only linearity is assumed.
pub fn propagate_operator(x: &DensityState, model: &ModelSpec, t: f64, tol: f64) -> Result<DensityState> {
    let gen = generator_for(x, model)?;
    let mut y = x.data.clone();
    let f = |_t: f64, a: &[C64], da: &mut [C64]| gen.apply(a, da);
    let mut h = 0.0;
    solver(tol).integrate(&f, 0.0, &mut y, t, &mut h)?;
    Ok(x.with_data(y))
}

/// Applies `f(j, r, col, value)` to every stored entry.
fn map_entries(x: &mut DensityState, f: impl Fn(f64, usize, usize, C64) -> C64) {
    let p = x.stride;
    for s in &x.sectors {
        let j = s.two_j as f64 / 2.0;
        for r in 0..s.dim {
            let (ro, n) = s.row(r);
            for q in 0..n {
                let col = r % p + q * p;
                let v = &mut x.data[s.offset + ro + q];
                *v = f(j, r, col, *v);
            }
        }
    }
}

/// `rho -> exp(-i phi Sz) rho exp(i phi Sz)`.
pub fn encode_phase(rho: &mut DensityState, phi: f64) {
    // M_r - M_c = c - r
    map_entries(rho, |_, r, col, v| {
        v * C64::from_polar(1.0, -phi * (col as f64 - r as f64))
    });
}

/// Left (`left = true`) or right multiplication by `Sz`.
pub fn mul_sz(rho: &DensityState, left: bool) -> DensityState {
    let mut out = rho.clone();
    map_entries(&mut out, |j, r, col, v| {
        v * if left { j - r as f64 } else { j - col as f64 }
    });
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EchoPoint {
    pub t: f64,
    pub signal: f64,
    pub derivative: f64,
    pub variance: f64,
    pub gain: f64,
}

pub(crate) fn gain_of(n_atoms: usize, derivative: f64, variance: f64) -> f64 {
    if variance > 0.0 {
        derivative * derivative / (n_atoms as f64 * variance)
    } else {
        0.0
    }
}

/// Echo signal and variance by direct forward / encode / reversed propagation.
pub fn echo_signal(model: &ModelSpec, n_atoms: usize, t: f64, phi0: f64, tol: f64) -> Result<(f64, f64)> {
    let repr = Representation::for_model(model);
    let rho0 = DensityState::initial_for(model, n_atoms, repr)?;
    let mut rho = propagate_operator(&rho0, model, t, tol)?;
    encode_phase(&mut rho, phi0);
    let rho = propagate_operator(&rho, &model.reversed(), t, tol)?;
    rho.check()?;
    let (m1, m2) = rho.sz_moments();
    Ok((m1, m2 - m1 * m1))
}

/// `d<Sz>/dphi` at `phi0` from the two-point correlator: the operator-weighted
/// states `Sz rho` and `rho Sz` are propagated through the reversed half.
pub fn echo_derivative(model: &ModelSpec, n_atoms: usize, t: f64, phi0: f64, tol: f64) -> Result<f64> {
    let repr = Representation::for_model(model);
    let rho0 = DensityState::initial_for(model, n_atoms, repr)?;
    let mut rho = propagate_operator(&rho0, model, t, tol)?;
    encode_phase(&mut rho, phi0);
    let rev = model.reversed();
    let left = propagate_operator(&mul_sz(&rho, true), &rev, t, tol)?;
    let right = propagate_operator(&mul_sz(&rho, false), &rev, t, tol)?;
    let sz_of = |x: &DensityState| x.expect(|l| l.sz());
    // -i Tr(Sz E[Sz rho - rho Sz])
    let d = (sz_of(&left) - sz_of(&right)) * c(0.0, -1.0);
    Ok(d.re)
}

/// Signal, correlator slope, variance and gain on a whole time grid from a
/// single integration: the state runs forward while `Sz` and `Sz^2` run
/// backward in the Heisenberg picture of the reversed generator.
pub fn echo_scan(model: &ModelSpec, n_atoms: usize, phi0: f64, t_grid: &[f64], tol: f64) -> Result<Vec<EchoPoint>> {
    let repr = Representation::for_model(model);
    let rho0 = DensityState::initial_for(model, n_atoms, repr)?;
    let fwd = generator_for(&rho0, model)?;
    let bwd = generator_for(&rho0, &model.reversed())?;
    let len = fwd.len();
    let mut o1 = rho0.with_data(vec![C64::default(); len]);
    let mut o2 = o1.clone();
    map_entries(
        &mut o1,
        |j, r, col, _| if r == col { c(j - r as f64, 0.0) } else { C64::default() },
    );
    map_entries(&mut o2, |j, r, col, _| {
        if r == col {
            c((j - r as f64).powi(2), 0.0)
        } else {
            C64::default()
        }
    });
    let mut y = Vec::with_capacity(3 * len);
    y.extend_from_slice(&rho0.data);
    y.extend_from_slice(&o1.data);
    y.extend_from_slice(&o2.data);
    let f = |_t: f64, x: &[C64], dx: &mut [C64]| {
        let (d0, rest) = dx.split_at_mut(len);
        let (d1, d2) = rest.split_at_mut(len);
        fwd.apply(&x[..len], d0);
        bwd.apply_adjoint(&x[len..2 * len], d1);
        bwd.apply_adjoint(&x[2 * len..], d2);
    };
    let p = rho0.stride;
    let mut out = Vec::with_capacity(t_grid.len());
    solver(tol).integrate_grid(&f, 0.0, &mut y, t_grid, |_, t, x| {
        let mut rho = rho0.with_data(x[..len].to_vec());
        rho.check()?;
        encode_phase(&mut rho, phi0);
        let (a1, a2) = (&x[len..2 * len], &x[2 * len..]);
        let mut s1 = C64::default();
        let mut s2 = C64::default();
        let mut corr = C64::default();
        for (i, s) in rho.sectors.iter().enumerate() {
            let j = s.two_j as f64 / 2.0;
            for r in 0..s.dim {
                let (ro, n) = s.row(r);
                for q in 0..n {
                    let col = r % p + q * p;
                    // Tr(A sigma) = sum A[r][c] sigma[c][r]; the Sz of Tr(A Sz sigma) carries M of row `col`.
                    let sig = rho.get(i, col, r);
                    let v1 = a1[s.offset + ro + q];
                    s1 += v1 * sig;
                    s2 += a2[s.offset + ro + q] * sig;
                    corr += v1 * (j - col as f64) * sig;
                }
            }
        }
        let signal = s1.re;
        let variance = s2.re - signal * signal;
        let derivative = 2.0 * corr.im;
        out.push(EchoPoint {
            t,
            signal,
            derivative,
            variance,
            gain: gain_of(n_atoms, derivative, variance),
        });
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QfiPoint {
    pub t: f64,
    /// Largest eigenvalue of the Fisher matrix over `(Sx, Sy, Sz)`.
    pub qfi: f64,
    /// Fisher information for rotations about `z`.
    pub qfi_z: f64,
}

/// Fisher information of the model's default initial state along `t_grid`.
pub fn qfi_scan(model: &ModelSpec, n_atoms: usize, t_grid: &[f64], tol: f64) -> Result<Vec<QfiPoint>> {
    let repr = Representation::for_model(model);
    let rho0 = DensityState::initial_for(model, n_atoms, repr)?;
    let mut task = LindbladTask::new(model.clone(), t_grid.to_vec());
    task.tol = tol;
    Ok(lindblad_evolve(&rho0, &task)?
        .iter()
        .zip(t_grid)
        .map(|(r, &t)| {
            let f = r.qfi_matrix();
            QfiPoint {
                t,
                qfi: SymmetricEigen::new(f).eigenvalues.max(),
                qfi_z: f[(2, 2)],
            }
        })
        .collect())
}
