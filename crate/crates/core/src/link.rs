//! Copula links between the internal Gaussian scale and the ETAS scale.
//!
//! Every parameter carries a standard normal prior internally and is mapped
//! to its target prior by `eta(theta) = F^-1(Phi(theta))`. Uniform and
//! log-normal targets have closed forms; the gamma quantile is found by
//! Newton iteration on the regularized incomplete gamma function.
//!
//! Internal values are clamped to `|theta| <= 38` before transformation; past
//! that point `Phi` saturates in double precision.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::model::EtasParams;

pub const THETA_CLAMP: f64 = 38.0;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn normal_pdf(x: f64) -> f64 {
    normal_log_pdf(x).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Acklam's rational approximation (relative error ~1e-9) on (0, 1).
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Standard normal quantile for `p` in the lower half, refined by Halley
/// steps against the erfc-based CDF.
fn normal_quantile_lower(p: f64) -> f64 {
    let mut x = acklam(p);
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// Standard normal quantile `Phi^-1(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.5 {
        normal_quantile_lower(p)
    } else {
        -normal_quantile_lower(1.0 - p)
    }
}

/// `Phi^-1` evaluated from a (lower, upper) tail-probability pair; whichever
/// tail is smaller is used so that neither end loses precision.
fn normal_quantile_pair(lower: f64, upper: f64) -> f64 {
    if lower <= upper {
        normal_quantile(lower)
    } else {
        -normal_quantile(upper)
    }
}

/// Target prior family on the ETAS scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Target {
    Gamma { shape: f64, rate: f64 },
    LogNormal { meanlog: f64, sdlog: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Gamma { shape, rate } => write!(f, "Gamma(shape={shape}, rate={rate})"),
            Target::LogNormal { meanlog, sdlog } => {
                write!(f, "LogNormal(meanlog={meanlog}, sdlog={sdlog})")
            }
            Target::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
        }
    }
}

impl Target {
    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            Target::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            Target::LogNormal { meanlog, sdlog } => meanlog.is_finite() && sdlog > 0.0 && sdlog.is_finite(),
            Target::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid prior {self}")))
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Target::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(shape, rate * x)
                }
            }
            Target::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal_cdf((x.ln() - meanlog) / sdlog)
                }
            }
            Target::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Target::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
            }
            Target::LogNormal { meanlog, sdlog } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (x.ln() - meanlog) / sdlog;
                normal_log_pdf(z) - sdlog.ln() - x.ln()
            }
            Target::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
        }
    }

    pub fn median(&self) -> f64 {
        forward(0.0, self)
    }

    fn in_support(&self, x: f64) -> bool {
        match *self {
            Target::Gamma { .. } | Target::LogNormal { .. } => x > 0.0 && x.is_finite(),
            Target::Uniform { lo, hi } => x > lo && x < hi,
        }
    }
}

/// Solves `P(a, y) = p` (or `Q(a, y) = q` when `upper`) for `y` by safeguarded
/// Newton iteration on `ln y`, starting from Wilson-Hilferty.
fn gamma_standard_quantile(shape: f64, prob: f64, upper: bool) -> f64 {
    if prob <= 0.0 {
        return if upper { f64::INFINITY } else { 0.0 };
    }
    let ln_prob = prob.ln();
    let ln_gamma_a = ln_gamma(shape);

    // Start values.
    let z = if upper { -normal_quantile(prob) } else { normal_quantile(prob) };
    let wh = {
        let k = 1.0 / (9.0 * shape);
        shape * (1.0 - k + z * k.sqrt()).powi(3)
    };
    // Leading term of the lower-tail series P(a, y) ~ y^a / Gamma(a + 1).
    let small = ((ln_prob + ln_gamma(shape + 1.0)) / shape).exp();
    let mut y = if !upper && (wh <= 0.0 || small < 0.1 * shape) {
        small
    } else if wh > 0.0 {
        wh
    } else {
        shape
    };
    if !upper && y < 1e-280 {
        // Beyond the range the incomplete gamma can resolve; the leading
        // series term is exact to double precision here.
        return y;
    }

    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut ly = y.ln();
    for _ in 0..200 {
        y = ly.exp();
        let tail = if upper { gamma_ur(shape, y) } else { gamma_lr(shape, y) };
        if tail <= 0.0 {
            // Overshot into the far tail.
            if upper {
                hi = ly;
            } else {
                lo = ly;
            }
            ly = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if upper {
                ly - 1.0
            } else {
                ly + 1.0
            };
            continue;
        }
        let resid = tail.ln() - ln_prob;
        // P is increasing in y, Q decreasing.
        let increasing_resid = if upper { -resid } else { resid };
        if increasing_resid > 0.0 {
            hi = hi.min(ly);
        } else {
            lo = lo.max(ly);
        }
        let ln_dens = shape * ly - y - ln_gamma_a; // ln(y f(y))
        let slope = (ln_dens - tail.ln()).exp() * if upper { -1.0 } else { 1.0 };
        let mut next = ly - resid / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if next.is_finite() {
                next.clamp(ly - 5.0, ly + 5.0)
            } else {
                ly
            };
        }
        if (next - ly).abs() <= 1e-15 * ly.abs().max(1.0) {
            ly = next;
            break;
        }
        ly = next;
    }
    ly.exp()
}

/// Maps an internal value to the ETAS scale: `F^-1(Phi(theta))`.
pub fn forward(theta: f64, target: &Target) -> f64 {
    let theta = theta.clamp(-THETA_CLAMP, THETA_CLAMP);
    match *target {
        Target::LogNormal { meanlog, sdlog } => (meanlog + sdlog * theta).exp(),
        Target::Uniform { lo, hi } => {
            if theta <= 0.0 {
                lo + (hi - lo) * normal_cdf(theta)
            } else {
                hi - (hi - lo) * normal_sf(theta)
            }
        }
        Target::Gamma { shape, rate } => {
            let y = if theta <= 0.0 {
                gamma_standard_quantile(shape, normal_cdf(theta), false)
            } else {
                gamma_standard_quantile(shape, normal_sf(theta), true)
            };
            y / rate
        }
    }
}

/// Inverse link `Phi^-1(F(x))`; `x` must lie in the interior of the support.
pub fn inverse(x: f64, target: &Target) -> Result<f64> {
    if !target.in_support(x) {
        return Err(Error::OutOfSupport {
            value: x,
            target: target.to_string(),
        });
    }
    let theta = match *target {
        Target::LogNormal { meanlog, sdlog } => (x.ln() - meanlog) / sdlog,
        Target::Uniform { lo, hi } => {
            normal_quantile_pair((x - lo) / (hi - lo), (hi - x) / (hi - lo))
        }
        Target::Gamma { shape, rate } => {
            let y = rate * x;
            normal_quantile_pair(gamma_lr(shape, y), gamma_ur(shape, y))
        }
    };
    Ok(theta)
}

/// `d eta / d theta = phi(theta) / f_Y(eta(theta))`, floored at the
/// smallest positive normal double when the tails underflow.
pub fn forward_derivative(theta: f64, target: &Target) -> f64 {
    let clamped = theta.clamp(-THETA_CLAMP, THETA_CLAMP);
    let d = match *target {
        Target::LogNormal { sdlog, .. } => forward(clamped, target) * sdlog,
        Target::Uniform { lo, hi } => (hi - lo) * normal_pdf(clamped),
        Target::Gamma { .. } => {
            let eta = forward(clamped, target);
            (normal_log_pdf(clamped) - target.ln_pdf(eta)).exp()
        }
    };
    if d.is_finite() && d > 0.0 {
        d
    } else if d.is_infinite() {
        f64::MAX
    } else {
        f64::MIN_POSITIVE
    }
}

/// Internal-scale parameter vector `(th_mu, th_K, th_alpha, th_c, th_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalParams(pub [f64; 5]);

impl InternalParams {
    pub fn zeros() -> Self {
        Self([0.0; 5])
    }

    pub fn as_array(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Convex combination `(1 - w) self + w other`.
    pub fn lerp(&self, other: &Self, w: f64) -> Self {
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = (1.0 - w) * self.0[k] + w * other.0[k];
        }
        Self(out)
    }

    /// Standard Gaussian log-density summed over the five coordinates.
    pub fn log_prior(&self) -> f64 {
        self.0.iter().map(|&t| normal_log_pdf(t)).sum()
    }
}

/// Prior specification, one target family per ETAS parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu: Target,
    #[serde(rename = "K")]
    pub k: Target,
    pub alpha: Target,
    pub c: Target,
    pub p: Target,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::from_table(0.5, 0.5, -1.0, 0.5, 0.0, 10.0, 0.0, 1.0, 1.0, 2.0)
    }
}

impl PriorSpec {
    /// Builds the standard families from the ten hyperparameters
    /// `a_mu, b_mu, a_K, b_K, a_alpha, b_alpha, a_c, b_c, a_p, b_p`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_table(
        a_mu: f64,
        b_mu: f64,
        a_k: f64,
        b_k: f64,
        a_alpha: f64,
        b_alpha: f64,
        a_c: f64,
        b_c: f64,
        a_p: f64,
        b_p: f64,
    ) -> Self {
        Self {
            mu: Target::Gamma { shape: a_mu, rate: b_mu },
            k: Target::LogNormal { meanlog: a_k, sdlog: b_k },
            alpha: Target::Uniform { lo: a_alpha, hi: b_alpha },
            c: Target::Uniform { lo: a_c, hi: b_c },
            p: Target::Uniform { lo: a_p, hi: b_p },
        }
    }

    pub fn targets(&self) -> [Target; 5] {
        [self.mu, self.k, self.alpha, self.c, self.p]
    }

    pub fn check(&self) -> Result<()> {
        for t in self.targets() {
            t.check()?;
        }
        let p_lower = match self.p {
            Target::Uniform { lo, .. } => lo,
            Target::Gamma { .. } | Target::LogNormal { .. } => 0.0,
        };
        if p_lower < 1.0 {
            return Err(Error::InvalidParams(format!(
                "prior support for p must lie above 1, got {}",
                self.p
            )));
        }
        Ok(())
    }

    pub fn to_etas(&self, theta: &InternalParams) -> EtasParams {
        let t = self.targets();
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = forward(theta.0[k], &t[k]);
        }
        EtasParams::from_array(out)
    }

    pub fn to_internal(&self, params: &EtasParams) -> Result<InternalParams> {
        let t = self.targets();
        let v = params.to_array();
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = inverse(v[k], &t[k])?;
        }
        Ok(InternalParams(out))
    }

    /// Diagonal Jacobian `d eta_k / d theta_k`.
    pub fn jacobian(&self, theta: &InternalParams) -> [f64; 5] {
        let t = self.targets();
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = forward_derivative(theta.0[k], &t[k]);
        }
        out
    }
}

/// Pushes standard normal draws through the links.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, n: usize, rng: &mut R) -> Vec<EtasParams> {
    (0..n)
        .map(|_| {
            let mut theta = [0.0; 5];
            for t in theta.iter_mut() {
                *t = rng.sample(StandardNormal);
            }
            spec.to_etas(&InternalParams(theta))
        })
        .collect()
}

/// Rule-of-thumb background-rate guide for setting the gamma prior on `mu`:
/// the catalogue rate bounds `mu` from above (it mixes background and
/// triggered events), and half of it is a reasonable prior mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackgroundRateGuide {
    pub upper_rate: f64,
    pub suggested_mean: f64,
}

pub fn background_rate_guide(n_events: usize, duration_days: f64) -> BackgroundRateGuide {
    let upper_rate = n_events as f64 / duration_days;
    BackgroundRateGuide {
        upper_rate,
        suggested_mean: 0.5 * upper_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        // Values from high-precision evaluation.
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(-1.959_963_984_540_054) - 0.025).abs() < 1e-15);
        assert!(((normal_cdf(-10.0) - 7.619_853_024_160_527e-24) / 7.619_853_024_160_527e-24).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-20, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-12] {
            let x = normal_quantile(p);
            let back = if p < 0.5 { normal_cdf(x) } else { 1.0 - normal_sf(x) };
            assert!(((back - p) / p).abs() < 1e-12, "p={p} x={x} back={back}");
        }
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
    }

    #[test]
    fn uniform_medians() {
        assert!((forward(0.0, &Target::Uniform { lo: 1.0, hi: 2.0 }) - 1.5).abs() < 1e-15);
        assert!((forward(0.0, &Target::Uniform { lo: 0.0, hi: 10.0 }) - 5.0).abs() < 1e-15);
        assert!(inverse(1.5, &Target::Uniform { lo: 1.0, hi: 2.0 }).unwrap().abs() < 1e-15);
    }

    #[test]
    fn gamma_median() {
        // Median of Gamma(0.5, rate 0.5) = chi-square(1) median, from bisection
        // of the regularized incomplete gamma at 40 digits.
        let m = forward(0.0, &Target::Gamma { shape: 0.5, rate: 0.5 });
        assert!((m - 0.454_936_423_119_572_7).abs() < 1e-12, "{m}");
    }

    #[test]
    fn out_of_support() {
        assert!(matches!(
            inverse(2.5, &Target::Uniform { lo: 1.0, hi: 2.0 }),
            Err(Error::OutOfSupport { .. })
        ));
        assert!(inverse(0.0, &Target::Gamma { shape: 0.5, rate: 0.5 }).is_err());
        assert!(inverse(-1.0, &Target::LogNormal { meanlog: -1.0, sdlog: 0.5 }).is_err());
    }

    #[test]
    fn uniform_derivative_at_zero() {
        let d = forward_derivative(0.0, &Target::Uniform { lo: 0.0, hi: 10.0 });
        assert!((d - 3.989_422_804_014_327).abs() < 1e-12);
    }

    #[test]
    fn lognormal_derivative_identity() {
        let t = Target::LogNormal { meanlog: -1.0, sdlog: 0.5 };
        for &th in &[-3.0, -0.2, 0.0, 1.7] {
            let d = forward_derivative(th, &t);
            assert!((d - forward(th, &t) * 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let spec = PriorSpec::default();
        for t in spec.targets() {
            for &th in &[-4.0, -1.3, 0.0, 0.4, 2.2, 4.5] {
                let h = 1e-5;
                let fd = (forward(th + h, &t) - forward(th - h, &t)) / (2.0 * h);
                let d = forward_derivative(th, &t);
                assert!(d > 0.0);
                assert!(((d - fd) / d).abs() < 1e-6, "{t} th={th} d={d} fd={fd}");
            }
        }
    }

    #[test]
    fn default_prior_support() {
        let spec = PriorSpec::default();
        spec.check().unwrap();
        let mut bad = spec;
        bad.p = Target::Uniform { lo: 0.5, hi: 2.0 };
        assert!(bad.check().is_err());
    }

    #[test]
    fn rate_guide() {
        let g = background_rate_guide(2530, 1000.0);
        assert!((g.upper_rate - 2.53).abs() < 1e-12);
        assert!((g.suggested_mean - 1.265).abs() < 1e-12);
    }
}
