//! Temporal ETAS intensity, its closed-form integral and the exact Hawkes
//! log-likelihood, plus the fixed Gutenberg-Richter magnitude law.
//!
//! ```text
//! g(t | t_i, m_i) = K exp(alpha (m_i - M0)) ((t - t_i)/c + 1)^(-p)     t > t_i
//! lambda(t | H_t) = mu + sum_{t_h < t} g(t | t_h, m_h)
//! ```
//!
//! Products are assembled in log space: `alpha (m - M0)` routinely exceeds 9
//! for large parents.

use rand::Rng;
use rand::distr::Open01;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Event, TimeDomain};
use crate::error::{Error, Result};

/// ETAS parameters on their natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtasParams {
    /// Background rate (events/day).
    pub mu: f64,
    /// Magnitude-independent productivity.
    #[serde(rename = "K")]
    pub k: f64,
    /// Magnitude scaling of productivity.
    pub alpha: f64,
    /// Omori offset (days).
    pub c: f64,
    /// Omori exponent.
    pub p: f64,
}

impl EtasParams {
    pub const NAMES: [&'static str; 5] = ["mu", "K", "alpha", "c", "p"];

    pub fn new(mu: f64, k: f64, alpha: f64, c: f64, p: f64) -> Result<Self> {
        let params = Self { mu, k, alpha, c, p };
        params.check()?;
        Ok(params)
    }

    /// Data-generating values of the synthetic studies.
    pub fn reference() -> Self {
        Self {
            mu: 0.1,
            k: 0.089,
            alpha: 2.29,
            c: 0.11,
            p: 1.08,
        }
    }

    pub fn check(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite value in {a:?}")));
        }
        if self.mu < 0.0 || self.k < 0.0 || self.alpha < 0.0 || self.c < 0.0 {
            return Err(Error::InvalidParams(
                "mu, K, alpha and c must be non-negative".into(),
            ));
        }
        if self.p <= 1.0 {
            return Err(Error::InvalidParams(format!("p={} must exceed 1", self.p)));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.mu, self.k, self.alpha, self.c, self.p]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            mu: a[0],
            k: a[1],
            alpha: a[2],
            c: a[3],
            p: a[4],
        }
    }

    /// `ln(K) + alpha (m - M0)`.
    pub fn log_productivity(&self, magnitude: f64, m0: f64) -> f64 {
        self.k.ln() + self.alpha * (magnitude - m0)
    }

    /// Omori decay `((t - t_i)/c + 1)^(-p)` without the productivity factor.
    pub fn omori(&self, lag: f64) -> f64 {
        if lag <= 0.0 {
            return 0.0;
        }
        (-self.p * (lag / self.c).ln_1p()).exp()
    }
}

/// `ln` of `c/(p-1) [A^(1-p) - B^(1-p)]` with `A = lo/c + 1`, `B = hi/c + 1`,
/// the Omori decay integrated over lags `[lo, hi]`. Returns `-inf` when the
/// interval is empty.
pub fn log_omori_integral(lo: f64, hi: f64, c: f64, p: f64) -> f64 {
    let q = p - 1.0;
    let log_a = (lo / c).ln_1p();
    let width = ((hi - lo) / (lo + c)).ln_1p();
    if width <= 0.0 {
        return f64::NEG_INFINITY;
    }
    c.ln() - q.ln() - q * log_a + (-(-q * width).exp_m1()).ln()
}

/// Triggering rate at `t` from `parent`; zero unless `t > parent.time`.
pub fn triggering_kernel(t: f64, parent: &Event, params: &EtasParams, m0: f64) -> f64 {
    let lag = t - parent.time;
    if lag <= 0.0 {
        return 0.0;
    }
    (params.log_productivity(parent.magnitude, m0) - params.p * (lag / params.c).ln_1p()).exp()
}

/// `mu` plus the triggering contribution of every event in `history`, all
/// of which must strictly precede `t`.
pub fn conditional_intensity<'a>(
    t: f64,
    history: impl IntoIterator<Item = &'a Event>,
    params: &EtasParams,
    m0: f64,
) -> Result<f64> {
    let mut rate = params.mu;
    for parent in history {
        if parent.time >= t {
            return Err(Error::HistoryViolation {
                event_time: parent.time,
                t,
            });
        }
        rate += triggering_kernel(t, parent, params, m0);
    }
    Ok(rate)
}

/// Expected number of events triggered by `parent` inside `[T1, T2]`.
pub fn triggered_count(parent: &Event, dom: &TimeDomain, params: &EtasParams) -> f64 {
    if parent.time >= dom.t2 {
        return 0.0;
    }
    let lo = (dom.t1 - parent.time).max(0.0);
    let hi = dom.t2 - parent.time;
    (params.log_productivity(parent.magnitude, dom.m0) + log_omori_integral(lo, hi, params.c, params.p))
        .exp()
}

/// Closed-form `Lambda(T1, T2)`: background plus the triggered contribution
/// of every history and modelled event.
pub fn integrated_intensity(
    dom: &TimeDomain,
    modeled: &Catalog,
    history: &Catalog,
    params: &EtasParams,
) -> Result<f64> {
    if params.p <= 1.0 {
        return Err(Error::InvalidParams(format!(
            "closed-form integral needs p > 1, got {}",
            params.p
        )));
    }
    let triggered: f64 = history
        .iter()
        .chain(modeled.iter())
        .map(|e| triggered_count(e, dom, params))
        .sum();
    Ok(dom.length() * params.mu + triggered)
}

/// Exact Hawkes log-likelihood `-Lambda(T1,T2) + sum log lambda(t_i | H_ti)`.
///
/// History events condition the intensity but carry no log-intensity term
/// of their own. Direct double loop; cost is quadratic in the event count.
pub fn exact_log_likelihood(
    dom: &TimeDomain,
    modeled: &Catalog,
    history: &Catalog,
    params: &EtasParams,
) -> Result<f64> {
    let mut ll = -integrated_intensity(dom, modeled, history, params)?;
    let events = modeled.events();
    for (i, e) in events.iter().enumerate() {
        let earlier = events[..i].iter().filter(|h| h.time < e.time);
        let rate = conditional_intensity(e.time, history.iter().chain(earlier), params, dom.m0)?;
        if rate <= 0.0 {
            return Err(Error::ZeroIntensity { time: e.time });
        }
        ll += rate.ln();
    }
    Ok(ll)
}

/// Gutenberg-Richter magnitude law truncated below at `m0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeModel {
    pub b_value: f64,
    pub m0: f64,
}

impl MagnitudeModel {
    pub fn new(b_value: f64, m0: f64) -> Result<Self> {
        if !(b_value > 0.0 && b_value.is_finite()) || !m0.is_finite() {
            return Err(Error::InvalidParams(format!(
                "b-value must be positive and M0 finite (b={b_value}, M0={m0})"
            )));
        }
        Ok(Self { b_value, m0 })
    }

    /// b = 1.
    pub fn standard(m0: f64) -> Self {
        Self { b_value: 1.0, m0 }
    }

    fn beta(&self) -> f64 {
        self.b_value * std::f64::consts::LN_10
    }

    /// Inverse CDF: `M0 - log10(u) / b`.
    pub fn quantile_upper(&self, u: f64) -> f64 {
        self.m0 - u.log10() / self.b_value
    }

    pub fn cdf(&self, m: f64) -> f64 {
        if m <= self.m0 {
            0.0
        } else {
            -(-self.beta() * (m - self.m0)).exp_m1()
        }
    }
}

pub fn gr_log_density(m: f64, mm: &MagnitudeModel) -> Result<f64> {
    if m <= mm.m0 {
        return Err(Error::BelowThreshold { m, m0: mm.m0 });
    }
    let beta = mm.beta();
    Ok(beta.ln() - beta * (m - mm.m0))
}

pub fn gr_sample<R: Rng + ?Sized>(n: usize, mm: &MagnitudeModel, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            mm.quantile_upper(u)
        })
        .collect()
}
