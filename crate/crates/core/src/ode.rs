//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 8(5,3)).
//!
//! The integrator works on flat slices of any [`OdeScalar`] so the same code
//! drives pure-state amplitudes, density blocks and mean-field Bloch vectors.
//! Steps are clamped so that every requested output time is hit exactly; no
//! dense output is used.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait OdeScalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn modulus(self) -> f64;
}

impl OdeScalar for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Right-hand side `dy/dt = f(t, y)`.
pub trait OdeSystem<T> {
    fn rhs(&self, t: f64, y: &[T], dy: &mut [T]);
}

impl<T, F> OdeSystem<T> for F
where
    F: Fn(f64, &[T], &mut [T]),
{
    fn rhs(&self, t: f64, y: &[T], dy: &mut [T]) {
        self(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dop853 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    safe: f64,
    fac_min: f64,
    fac_max: f64,
}

impl Default for Dop853 {
    fn default() -> Self {
        Self::with_tolerance(1e-10)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

struct Work<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    k5: Vec<T>,
    k6: Vec<T>,
    k7: Vec<T>,
    k8: Vec<T>,
    k9: Vec<T>,
    k10: Vec<T>,
    tmp: Vec<T>,
    y_new: Vec<T>,
}

impl<T: OdeScalar> Work<T> {
    fn new(n: usize) -> Self {
        let z = || vec![T::default(); n];
        Work {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            k5: z(),
            k6: z(),
            k7: z(),
            k8: z(),
            k9: z(),
            k10: z(),
            tmp: z(),
            y_new: z(),
        }
    }
}

/// `out = y + h * sum(coef_i * k_i)`
#[inline]
fn combine<T: OdeScalar>(out: &mut [T], y: &[T], h: f64, terms: &[(f64, &[T])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = T::default();
        for (c, k) in terms {
            acc = acc + k[i] * *c;
        }
        *o = y[i] + acc * h;
    }
}

impl Dop853 {
    pub fn with_tolerance(tol: f64) -> Self {
        Dop853 {
            rtol: tol,
            atol: tol,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
            safe: 0.9,
            fac_min: 0.333,
            fac_max: 6.0,
        }
    }

    pub fn tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    fn initial_step<T: OdeScalar, S: OdeSystem<T>>(
        &self,
        sys: &S,
        t: f64,
        y: &[T],
        f0: &[T],
        span: f64,
        w: &mut Work<T>,
    ) -> f64 {
        let n = y.len().max(1) as f64;
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..y.len() {
            let sk = self.atol + self.rtol * y[i].modulus();
            dnf += (f0[i].modulus() / sk).powi(2);
            dny += (y[i].modulus() / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.h_max).min(span);
        combine(&mut w.tmp, y, h, &[(1.0, f0)]);
        sys.rhs(t + h, &w.tmp, &mut w.k2);
        let mut der2 = 0.0;
        for i in 0..y.len() {
            let sk = self.atol + self.rtol * y[i].modulus();
            der2 += ((w.k2[i] - f0[i]).modulus() / sk).powi(2);
        }
        let der2 = (der2 / n).sqrt() / h;
        let der12 = der2.max((dnf / n).sqrt());
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        (100.0 * h).min(h1).min(self.h_max).min(span)
    }

    /// One DOP853 stage sweep from `(t, y)` with derivative `k1 = f(t, y)` already in `w.k1`.
    /// Leaves the 8th order solution in `w.y_new` and returns the scaled error norm.
    fn attempt<T: OdeScalar, S: OdeSystem<T>>(&self, sys: &S, t: f64, y: &[T], h: f64, w: &mut Work<T>) -> f64 {
        use tableau::*;
        let Work {
            k1,
            k2,
            k3,
            k4,
            k5,
            k6,
            k7,
            k8,
            k9,
            k10,
            tmp,
            y_new,
        } = w;
        combine(tmp, y, h, &[(A21, k1)]);
        sys.rhs(t + C2 * h, tmp, k2);
        combine(tmp, y, h, &[(A31, k1), (A32, k2)]);
        sys.rhs(t + C3 * h, tmp, k3);
        combine(tmp, y, h, &[(A41, k1), (A43, k3)]);
        sys.rhs(t + C4 * h, tmp, k4);
        combine(tmp, y, h, &[(A51, k1), (A53, k3), (A54, k4)]);
        sys.rhs(t + C5 * h, tmp, k5);
        combine(tmp, y, h, &[(A61, k1), (A64, k4), (A65, k5)]);
        sys.rhs(t + C6 * h, tmp, k6);
        combine(tmp, y, h, &[(A71, k1), (A74, k4), (A75, k5), (A76, k6)]);
        sys.rhs(t + C7 * h, tmp, k7);
        combine(tmp, y, h, &[(A81, k1), (A84, k4), (A85, k5), (A86, k6), (A87, k7)]);
        sys.rhs(t + C8 * h, tmp, k8);
        combine(
            tmp,
            y,
            h,
            &[(A91, k1), (A94, k4), (A95, k5), (A96, k6), (A97, k7), (A98, k8)],
        );
        sys.rhs(t + C9 * h, tmp, k9);
        combine(
            tmp,
            y,
            h,
            &[
                (A101, k1),
                (A104, k4),
                (A105, k5),
                (A106, k6),
                (A107, k7),
                (A108, k8),
                (A109, k9),
            ],
        );
        sys.rhs(t + C10 * h, tmp, k10);
        combine(
            tmp,
            y,
            h,
            &[
                (A111, k1),
                (A114, k4),
                (A115, k5),
                (A116, k6),
                (A117, k7),
                (A118, k8),
                (A119, k9),
                (A1110, k10),
            ],
        );
        // k2 is free after stage 3; reuse it for stage 11.
        sys.rhs(t + C11 * h, tmp, k2);
        combine(
            tmp,
            y,
            h,
            &[
                (A121, k1),
                (A124, k4),
                (A125, k5),
                (A126, k6),
                (A127, k7),
                (A128, k8),
                (A129, k9),
                (A1210, k10),
                (A1211, k2),
            ],
        );
        // k3 becomes stage 12.
        sys.rhs(t + h, tmp, k3);

        let n = y.len();
        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..n {
            let incr = k1[i] * B1
                + k6[i] * B6
                + k7[i] * B7
                + k8[i] * B8
                + k9[i] * B9
                + k10[i] * B10
                + k2[i] * B11
                + k3[i] * B12;
            let yn = y[i] + incr * h;
            y_new[i] = yn;
            let sk = self.atol + self.rtol * y[i].modulus().max(yn.modulus());
            let e2 = incr - k1[i] * BHH1 - k9[i] * BHH2 - k3[i] * BHH3;
            err2 += (e2.modulus() / sk).powi(2);
            let e = k1[i] * ER1
                + k6[i] * ER6
                + k7[i] * ER7
                + k8[i] * ER8
                + k9[i] * ER9
                + k10[i] * ER10
                + k2[i] * ER11
                + k3[i] * ER12;
            err += (e.modulus() / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        h.abs() * err * (1.0 / (deno * n.max(1) as f64)).sqrt()
    }

    /// Integrates `y` in place from `t0` to `t1`. `h` carries the step size
    /// between successive calls (pass 0.0 to let the integrator choose).
    pub fn integrate<T: OdeScalar, S: OdeSystem<T>>(
        &self,
        sys: &S,
        t0: f64,
        y: &mut [T],
        t1: f64,
        h: &mut f64,
    ) -> Result<OdeStats> {
        let mut stats = OdeStats::default();
        if t1 == t0 {
            return Ok(stats);
        }
        if t1 < t0 {
            return Err(Error::invalid("t1", "backward integration is not supported"));
        }
        let n = y.len();
        let mut w = Work::new(n);
        let mut t = t0;
        sys.rhs(t, y, &mut w.k1);
        stats.evals += 1;
        if *h <= 0.0 || !h.is_finite() {
            let f0 = w.k1.clone();
            *h = self.initial_step(sys, t, y, &f0, t1 - t0, &mut w);
            stats.evals += 1;
        }
        let mut last_rejected = false;
        let mut steps = 0usize;
        loop {
            let remaining = t1 - t;
            if remaining <= 1e-14 * t1.abs().max(1.0) {
                break;
            }
            steps += 1;
            if steps > self.max_steps {
                return Err(Error::Accuracy(format!(
                    "step budget exhausted at t = {t:e} (target {t1:e})"
                )));
            }
            let hmin = 1e-15 * t.abs().max(1e-300);
            if *h < hmin {
                return Err(Error::Accuracy(format!("step size underflow at t = {t:e}")));
            }
            let hh = h.min(self.h_max);
            let last = hh >= remaining;
            let step = if last { remaining } else { hh };
            let err = self.attempt(sys, t, y, step, &mut w);
            stats.evals += 11;
            if !err.is_finite() {
                *h = step * 0.25;
                stats.rejected += 1;
                last_rejected = true;
                continue;
            }
            let fac = (err.powf(1.0 / 8.0) / self.safe).clamp(1.0 / self.fac_max, 1.0 / self.fac_min);
            let mut h_new = step / fac;
            if err <= 1.0 {
                stats.accepted += 1;
                y.copy_from_slice(&w.y_new);
                t = if last { t1 } else { t + step };
                sys.rhs(t, y, &mut w.k1);
                stats.evals += 1;
                if last_rejected {
                    h_new = h_new.min(step);
                }
                last_rejected = false;
                // A clamped final step says nothing about the natural size.
                *h = if last { h_new.max(*h) } else { h_new };
                if last {
                    break;
                }
            } else {
                stats.rejected += 1;
                last_rejected = true;
                *h = step / (1.0 / self.fac_min).min(err.powf(1.0 / 8.0) / self.safe);
            }
        }
        Ok(stats)
    }

    /// Integrates through an increasing list of output times, calling
    /// `observe(index, t, y)` at each (including `times[0]` if it equals `t0`).
    pub fn integrate_grid<T, S, F>(
        &self,
        sys: &S,
        t0: f64,
        y: &mut [T],
        times: &[f64],
        mut observe: F,
    ) -> Result<OdeStats>
    where
        T: OdeScalar,
        S: OdeSystem<T>,
        F: FnMut(usize, f64, &[T]) -> Result<()>,
    {
        let mut total = OdeStats::default();
        let mut t = t0;
        let mut h = 0.0;
        for (i, &target) in times.iter().enumerate() {
            if target < t {
                return Err(Error::invalid("times", "output grid must be non-decreasing"));
            }
            let s = self.integrate(sys, t, y, target, &mut h)?;
            total.accepted += s.accepted;
            total.rejected += s.rejected;
            total.evals += s.evals;
            t = target;
            observe(i, t, y)?;
        }
        Ok(total)
    }
}

mod tableau {
    #![allow(clippy::excessive_precision)]
    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.84549479328286085344864962717E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.7037037037037037037037037037E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.53194377486244017527936158236E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.36089262944694129406857109825E0;
    pub const A95: f64 = -8.68219346841726006818189891453E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.34898841810699588477366255144E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.48811461997166764192642586468E0;
    pub const A105: f64 = -5.90290826836842996371446475743E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.32882109689848629194453265587E1;
    pub const A109: f64 = -2.03312017085086261358222928593E-2;
    pub const A111: f64 = -9.3714243008598732571704021658E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.14978701074692612513997267357E0;
    pub const A117: f64 = -1.85200656599969598641566180701E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.0467644718982195003823669022E0;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.05344954667372501984066689879E1;
    pub const A125: f64 = -2.00087205822486249909675718444E0;
    pub const A126: f64 = -1.79589318631187989172765950534E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.85899827713502369474065508674E0;
    pub const A129: f64 = -8.87285693353062954433549289258E0;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;

    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.8012039600105847814672114227E0;
    pub const B9: f64 = 3.1116436695781989440891606237E-1;
    pub const B10: f64 = -1.52160949662516078556178806805E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;

    pub const C2: f64 = 0.526001519587677318785587544488E-01;
    pub const C3: f64 = 0.789002279381515978178381316732E-01;
    pub const C4: f64 = 0.118350341907227396726757197510E+00;
    pub const C5: f64 = 0.281649658092772603273242802490E+00;
    pub const C6: f64 = 0.333333333333333333333333333333E+00;
    pub const C7: f64 = 0.25E+00;
    pub const C8: f64 = 0.307692307692307692307692307692E+00;
    pub const C9: f64 = 0.651282051282051282051282051282E+00;
    pub const C10: f64 = 0.6E+00;
    pub const C11: f64 = 0.857142857142857142857142857142E+00;

    pub const ER1: f64 = 0.1312004499419488073250102996E-01;
    pub const ER6: f64 = -0.1225156446376204440720569753E+01;
    pub const ER7: f64 = -0.4957589496572501915214079952E+00;
    pub const ER8: f64 = 0.1664377182454986536961530415E+01;
    pub const ER9: f64 = -0.3503288487499736816886487290E+00;
    pub const ER10: f64 = 0.3341791187130174790297318841E+00;
    pub const ER11: f64 = 0.8192320648511571246570742613E-01;
    pub const ER12: f64 = -0.2235530786388629525884427845E-01;
}
