//! Angular-momentum helpers: Clebsch-Gordan coefficients, spherical
//! harmonics, and the multiplicities of permutation sectors.
//!
//! Half-integer quantum numbers are passed doubled (`two_j`, `two_m`).

use std::f64::consts::PI;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use num_complex::Complex64;

/// `ln k!` for `k = 0..=n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `ln binom(n, k)` for `k = 0..=n`.
pub fn ln_binomial_row(n: usize) -> Vec<f64> {
    let lf = ln_factorials(n);
    (0..=n).map(|k| lf[n] - lf[k] - lf[n - k]).collect()
}

/// `ln` of the number of spin-`j` multiplets in `N` spin-1/2 particles,
/// `binom(N, N/2 - j) (2j + 1) / (N/2 + j + 1)`.
pub fn ln_multiplicity(n_atoms: usize, two_j: usize, lf: &[f64]) -> f64 {
    debug_assert!(two_j <= n_atoms && (n_atoms - two_j) % 2 == 0);
    let k = (n_atoms - two_j) / 2;
    let up = (n_atoms + two_j) / 2 + 1;
    lf[n_atoms] - lf[k] - lf[n_atoms - k] + ((two_j + 1) as f64).ln() - (up as f64).ln()
}

pub fn multiplicity(n_atoms: usize, two_j: usize) -> f64 {
    ln_multiplicity(n_atoms, two_j, &ln_factorials(n_atoms)).exp()
}

/// Total spins `2j` present in `N` spin-1/2 particles, largest first.
pub fn sector_spins(n_atoms: usize) -> Vec<usize> {
    (0..=n_atoms / 2).map(|k| n_atoms - 2 * k).collect()
}

/// Exact factorials `0!..=n!`.
#[derive(Debug, Clone)]
pub struct Factorials(Vec<BigInt>);

impl Factorials {
    pub fn new(n: usize) -> Self {
        let mut v = Vec::with_capacity(n + 1);
        v.push(BigInt::one());
        for k in 1..=n {
            let next = &v[k - 1] * BigInt::from(k);
            v.push(next);
        }
        Factorials(v)
    }

    fn get(&self, k: i64) -> &BigInt {
        &self.0[k as usize]
    }

    pub fn max(&self) -> usize {
        self.0.len() - 1
    }
}

/// Exact `<j1 m1; j2 m2 | J M>` (Racah formula), rounded to `f64` at the end.
/// All arguments are doubled.
pub fn clebsch_gordan(two_j1: i64, two_m1: i64, two_j2: i64, two_m2: i64, two_j: i64, two_mm: i64) -> f64 {
    let n = ((two_j1 + two_j2 + two_j) / 2 + 1).max(0) as usize;
    clebsch_gordan_with(&Factorials::new(n), two_j1, two_m1, two_j2, two_m2, two_j, two_mm)
}

/// As [`clebsch_gordan`] with a caller-owned factorial table, which must
/// reach `(j1 + j2 + J + 1)!`.
pub fn clebsch_gordan_with(
    f: &Factorials,
    two_j1: i64,
    two_m1: i64,
    two_j2: i64,
    two_m2: i64,
    two_j: i64,
    two_mm: i64,
) -> f64 {
    if two_m1 + two_m2 != two_mm
        || two_m1.abs() > two_j1
        || two_m2.abs() > two_j2
        || two_mm.abs() > two_j
        || two_j > two_j1 + two_j2
        || two_j < (two_j1 - two_j2).abs()
        || (two_j1 + two_j2 + two_j) % 2 != 0
        || (two_j1 + two_m1) % 2 != 0
        || (two_j2 + two_m2) % 2 != 0
        || (two_j + two_mm) % 2 != 0
    {
        return 0.0;
    }
    let h = |x: i64| x / 2;
    let (a, b, cc) = (
        h(two_j + two_j1 - two_j2),
        h(two_j - two_j1 + two_j2),
        h(two_j1 + two_j2 - two_j),
    );
    let d = h(two_j1 + two_j2 + two_j) + 1;
    assert!(d as usize <= f.max(), "factorial table too short");
    let mut num = BigInt::from(two_j + 1) * f.get(a) * f.get(b) * f.get(cc);
    num *= f.get(h(two_j + two_mm)) * f.get(h(two_j - two_mm));
    num *= f.get(h(two_j1 - two_m1)) * f.get(h(two_j1 + two_m1));
    num *= f.get(h(two_j2 - two_m2)) * f.get(h(two_j2 + two_m2));

    let t1 = cc;
    let t2 = h(two_j1 - two_m1);
    let t3 = h(two_j2 + two_m2);
    let t4 = h(two_j - two_j2 + two_m1);
    let t5 = h(two_j - two_j1 - two_m2);
    let kmin = 0.max(-t4).max(-t5);
    let kmax = t1.min(t2).min(t3);
    if kmin > kmax {
        return 0.0;
    }
    // Every term times L = t1! t2! t3! (t4+kmax)! (t5+kmax)! is an integer.
    let mut sum = BigInt::zero();
    for k in kmin..=kmax {
        let mut term = f.get(t1) / (f.get(k) * f.get(t1 - k));
        term *= f.get(t2) / f.get(t2 - k);
        term *= f.get(t3) / f.get(t3 - k);
        term *= f.get(t4 + kmax) / f.get(t4 + k);
        term *= f.get(t5 + kmax) / f.get(t5 + k);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return 0.0;
    }
    let l = f.get(t1) * f.get(t2) * f.get(t3) * f.get(t4 + kmax) * f.get(t5 + kmax);
    let sign = if sum.is_negative() { -1.0 } else { 1.0 };
    let sq = BigRational::new(num * &sum * &sum, f.get(d) * &l * &l);
    sign * sq.to_f64().unwrap_or(f64::NAN).sqrt()
}

/// Coupling a spin `k` with a spin 1/2 into `j`, closed forms.
///
/// Returns `<k, m - s; 1/2, s | j, m>` where `s = +1/2` if `spin_up` and
/// `-1/2` otherwise, and `j = k + 1/2` (`upper`) or `k - 1/2`.
pub fn cg_add_half(two_k: usize, upper: bool, spin_up: bool, two_m: i64) -> f64 {
    let k = two_k as f64 / 2.0;
    let m = two_m as f64 / 2.0;
    let den = two_k as f64 + 1.0;
    let two_j = if upper { two_k as i64 + 1 } else { two_k as i64 - 1 };
    // |m| must fit in j and m - s in k.
    let two_s: i64 = if spin_up { 1 } else { -1 };
    if two_j < 0 || two_m.abs() > two_j || (two_m - two_s).abs() > two_k as i64 {
        return 0.0;
    }
    let v = match (upper, spin_up) {
        (true, true) => (k + m + 0.5) / den,
        (true, false) => (k - m + 0.5) / den,
        (false, true) => (k - m + 0.5) / den,
        (false, false) => (k + m + 0.5) / den,
    };
    let r = v.max(0.0).sqrt();
    if !upper && spin_up {
        -r
    } else {
        r
    }
}

/// Orthonormal `Y_l^m(theta, phi)` with the Condon-Shortley phase.
pub fn spherical_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> Complex64 {
    let am = m.unsigned_abs() as usize;
    if am > l {
        return Complex64::default();
    }
    let p = normalized_legendre(l, am, theta.cos());
    let y = Complex64::from_polar(p, am as f64 * phi);
    if m >= 0 {
        y
    } else {
        let s = if am % 2 == 0 { 1.0 } else { -1.0 };
        y.conj() * s
    }
}

/// All normalized associated Legendre values `table[l][m]`, `0 <= m <= l <= lmax`,
/// such that `Y_l^m(theta, phi) = table[l][m] e^{i m phi}` for `m >= 0`.
pub fn legendre_table(lmax: usize, theta: f64) -> Vec<Vec<f64>> {
    let x = theta.cos();
    let s = theta.sin().abs();
    let mut t: Vec<Vec<f64>> = (0..=lmax).map(|l| vec![0.0; l + 1]).collect();
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            pmm *= -s * ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        }
        t[m][m] = pmm;
        if m + 1 <= lmax {
            t[m + 1][m] = x * ((2 * m + 3) as f64).sqrt() * pmm;
        }
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            t[l][m] = a * (x * t[l - 1][m] - b * t[l - 2][m]);
        }
    }
    t
}

/// `sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(x)` including `(-1)^m`.
fn normalized_legendre(l: usize, m: usize, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    // Seed at l = m.
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for k in 1..=m {
        pmm *= -s * ((2 * k + 1) as f64 / (2 * k) as f64).sqrt();
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * ((2 * m + 3) as f64).sqrt() * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for ll in (m + 2)..=l {
        let llf = ll as f64;
        let mf = m as f64;
        let a = ((4.0 * llf * llf - 1.0) / (llf * llf - mf * mf)).sqrt();
        let b = (((llf - 1.0).powi(2) - mf * mf) / (4.0 * (llf - 1.0).powi(2) - 1.0)).sqrt();
        let p = a * (x * pm1 - b * pm2);
        pm2 = pm1;
        pm1 = p;
    }
    pm1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn known_cg_values() {
        // <1/2 1/2; 1/2 -1/2 | 1 0> = 1/sqrt2, <.. | 0 0> = 1/sqrt2
        assert_relative_eq!(clebsch_gordan(1, 1, 1, -1, 2, 0), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(clebsch_gordan(1, 1, 1, -1, 0, 0), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(clebsch_gordan(1, -1, 1, 1, 0, 0), -(0.5f64.sqrt()), epsilon = 1e-15);
        // <1 1; 1 -1 | 1 0> = 1/sqrt2
        assert_relative_eq!(clebsch_gordan(2, 2, 2, -2, 2, 0), 0.5f64.sqrt(), epsilon = 1e-15);
        // <1 0; 1 0 | 1 0> = 0
        assert_eq!(clebsch_gordan(2, 0, 2, 0, 2, 0), 0.0);
        // <1 0; 1 0 | 2 0> = sqrt(2/3)
        assert_relative_eq!(clebsch_gordan(2, 0, 2, 0, 4, 0), (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn closed_forms_match_racah() {
        for two_k in 0..9usize {
            for &upper in &[true, false] {
                if !upper && two_k == 0 {
                    continue;
                }
                let two_j = if upper { two_k + 1 } else { two_k - 1 } as i64;
                for &up in &[true, false] {
                    let two_s = if up { 1 } else { -1 };
                    let mut two_m = -two_j;
                    while two_m <= two_j {
                        let exact = clebsch_gordan(two_k as i64, two_m - two_s, 1, two_s, two_j, two_m);
                        let closed = cg_add_half(two_k, upper, up, two_m);
                        assert!((exact - closed).abs() < 1e-14, "k={two_k} up={upper} s={up} m={two_m}");
                        two_m += 2;
                    }
                }
            }
        }
    }

    #[test]
    fn multiplicities_sum_to_hilbert_dimension() {
        for n in 1..20usize {
            let total: f64 = sector_spins(n)
                .into_iter()
                .map(|tj| multiplicity(n, tj) * (tj + 1) as f64)
                .sum();
            assert_relative_eq!(total, 2f64.powi(n as i32), max_relative = 1e-12);
        }
        assert_relative_eq!(multiplicity(4, 0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(multiplicity(4, 2), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn harmonics_are_orthonormal() {
        let nt = 64;
        let np = 64;
        let mut gram = [[Complex64::default(); 4]; 4];
        let lm = [(0usize, 0i64), (1, 1), (2, -1), (3, 2)];
        // Gauss-Legendre would be exact; a fine midpoint grid is enough here.
        for it in 0..nt {
            let th = PI * (it as f64 + 0.5) / nt as f64;
            let w = th.sin() * PI / nt as f64 * 2.0 * PI / np as f64;
            for ip in 0..np {
                let ph = 2.0 * PI * ip as f64 / np as f64;
                for (a, &(la, ma)) in lm.iter().enumerate() {
                    for (b, &(lb, mb)) in lm.iter().enumerate() {
                        gram[a][b] +=
                            spherical_harmonic(la, ma, th, ph).conj() * spherical_harmonic(lb, mb, th, ph) * w;
                    }
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] - e).norm() < 2e-3, "{a}{b} {}", gram[a][b]);
            }
        }
    }

    #[test]
    fn legendre_table_matches_pointwise() {
        let th = 1.1;
        let t = legendre_table(12, th);
        for l in 0..=12 {
            for m in 0..=l {
                let y = spherical_harmonic(l, m as i64, th, 0.0).re;
                assert!((t[l][m] - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn large_spin_cg_is_normalized() {
        // Sum over m1 of |<j1 m1; j2 m-m1 | J m>|^2 = 1.
        let f = Factorials::new(200);
        let (tj1, tj2, tj) = (45i64, 30i64, 45i64);
        let tm = 3i64;
        let mut acc = 0.0;
        let mut tm1 = -tj1;
        while tm1 <= tj1 {
            let v = clebsch_gordan_with(&f, tj1, tm1, tj2, tm - tm1, tj, tm);
            acc += v * v;
            tm1 += 2;
        }
        assert_relative_eq!(acc, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn y10_closed_form() {
        let th = 0.7;
        let y = spherical_harmonic(1, 0, th, 0.3);
        assert_relative_eq!(y.re, (3.0 / (4.0 * PI)).sqrt() * th.cos(), epsilon = 1e-14);
        let y11 = spherical_harmonic(1, 1, th, 0.0);
        assert_relative_eq!(y11.re, -(3.0 / (8.0 * PI)).sqrt() * th.sin(), epsilon = 1e-14);
    }
}
