//! Independent reference implementations used as test oracles. Nothing here
//! calls into the closed forms under test.

#![allow(dead_code)]

use etas_core::{EtasParams, Event, TimeDomain};
use rand::Rng;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 7/15 panel: (Kronrod estimate, |Kronrod - Gauss|).
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod integration with bisection to relative tolerance
/// `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
        let (est, err) = whole;
        if err <= tol * est.abs().max(f64::MIN_POSITIVE) || depth == 0 || b - a < 1e-14 * a.abs().max(1.0) {
            return est;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, left, tol, depth - 1) + rec(f, m, b, right, tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    rec(&f, a, b, gk15(&f, a, b), tol, 60)
}

/// `K e^{alpha (m - M0)} (1 + lag/c)^(-p)` straight from the formula.
pub fn naive_kernel(lag: f64, m: f64, p: &EtasParams, m0: f64) -> f64 {
    if lag <= 0.0 {
        return 0.0;
    }
    p.k * (p.alpha * (m - m0)).exp() * (1.0 + lag / p.c).powf(-p.p)
}

pub fn naive_intensity(t: f64, events: &[Event], p: &EtasParams, m0: f64) -> f64 {
    p.mu + events.iter().filter(|e| e.time < t).map(|e| naive_kernel(t - e.time, e.magnitude, p, m0)).sum::<f64>()
}

/// Integral of the conditional intensity over `[T1, T2]`, split at every
/// event time so each panel is smooth. Each kernel is integrated on its own
/// in the log-lag variable, which resolves the Omori peak.
pub fn quadrature_integral(dom: &TimeDomain, events: &[Event], p: &EtasParams) -> f64 {
    let mut total = p.mu * (dom.t2 - dom.t1);
    for e in events.iter().filter(|e| e.time < dom.t2) {
        let lo = (dom.t1 - e.time).max(0.0);
        let hi = dom.t2 - e.time;
        total += kernel_integral(lo, hi, e.magnitude, p, dom.m0);
    }
    total
}

/// Quadrature of one kernel over lags `[lo, hi]` using `s = ln(1 + lag/c)`.
pub fn kernel_integral(lo: f64, hi: f64, m: f64, p: &EtasParams, m0: f64) -> f64 {
    let s_lo = (lo / p.c).ln_1p();
    let s_hi = (hi / p.c).ln_1p();
    let f = |s: f64| {
        let lag = p.c * s.exp_m1();
        naive_kernel(lag.max(f64::MIN_POSITIVE), m, p, m0) * p.c * s.exp()
    };
    integrate(f, s_lo, s_hi, 1e-13)
}

/// `-Lambda + sum log lambda` by direct double loop and quadrature.
pub fn naive_log_likelihood(dom: &TimeDomain, modeled: &[Event], history: &[Event], p: &EtasParams) -> f64 {
    let all: Vec<Event> = history.iter().chain(modeled).copied().collect();
    let mut ll = -quadrature_integral(dom, &all, p);
    for e in modeled {
        ll += naive_intensity(e.time, &all, p, dom.m0).ln();
    }
    ll
}

/// Central difference of `f` at `x` in coordinate `k`.
pub fn central_diff(f: impl Fn(&[f64; 5]) -> f64, x: &[f64; 5], k: usize, h: f64) -> f64 {
    let mut up = *x;
    let mut dn = *x;
    up[k] += h;
    dn[k] -= h;
    (f(&up) - f(&dn)) / (2.0 * h)
}

/// Kolmogorov-Smirnov distance between a sample and a CDF.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Parameters drawn inside the default prior supports, away from the edges.
pub fn random_params<R: Rng>(rng: &mut R) -> EtasParams {
    EtasParams {
        mu: rng.random_range(0.01..1.0),
        k: rng.random_range(0.005..0.5),
        alpha: rng.random_range(0.1..3.0),
        c: rng.random_range(0.005..0.9),
        p: rng.random_range(1.02..1.9),
    }
}

/// Up to `max_n` events on `[t0, t1]` with GR(b=1) magnitudes above `m0`.
pub fn random_events<R: Rng>(rng: &mut R, max_n: usize, t0: f64, t1: f64, m0: f64) -> Vec<Event> {
    let n = rng.random_range(1..=max_n);
    let mut ev: Vec<Event> = (0..n)
        .map(|i| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            Event::new(rng.random_range(t0..t1), m0 - u.log10(), i as u64)
        })
        .collect();
    ev.sort_by(|a, b| a.time.total_cmp(&b.time));
    ev
}
