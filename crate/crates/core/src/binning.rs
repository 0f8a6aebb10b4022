//! Geometric time bins for the triggered-count integrals and the three
//! log-components of the Hawkes likelihood, with analytic gradients on the
//! internal scale.
//!
//! For a parent at `t_i` the bin boundaries are
//!
//! ```text
//! t_i, t_i + D, t_i + D(1+d), ..., t_i + D(1+d)^n_i, T2
//! ```
//!
//! where `n_i <= n_max` is the largest exponent keeping the ladder below `T2`.
//! Parents before `T1` keep their ladder anchored at `t_i`; boundaries below
//! `T1` are clipped to `T1`.

use serde::{Deserialize, Serialize};

use crate::catalog::{Event, TimeDomain};
use crate::error::{Error, Result};
use crate::link::{InternalParams, PriorSpec};
use crate::model::{log_omori_integral, EtasParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    /// Length of the first bin (days).
    pub delta: f64,
    /// Growth ratio between consecutive bins.
    pub coef: f64,
    /// Largest ladder exponent.
    pub n_max: u32,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            coef: 1.0,
            n_max: 8,
        }
    }
}

impl BinningConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite() && self.coef > 0.0 && self.coef.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "binning needs delta > 0 and coef > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Lag of ladder point `n` from its parent: `delta (1 + coef)^n`.
    pub fn ladder_lag(&self, n: u32) -> f64 {
        self.delta * (1.0 + self.coef).powi(n as i32)
    }
}

/// One integration bin `[lo, hi]` for a parent event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBin {
    pub lo: f64,
    pub hi: f64,
    /// `lo - t_parent`, computed from the ladder where possible.
    pub lag_lo: f64,
    /// `hi - t_parent`.
    pub lag_hi: f64,
    pub parent_id: u64,
    /// Position in the geometric ladder for unclipped ladder bins; `None` for
    /// the bin capped at `T2` and for bins clipped at `T1`.
    pub ladder_index: Option<u32>,
}

impl TimeBin {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Boundary with its lag from the parent and ladder position.
#[derive(Clone, Copy)]
struct Boundary {
    time: f64,
    lag: f64,
    ladder: Option<u32>,
}

fn degenerate(lo: f64, hi: f64) -> bool {
    hi - lo <= 8.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0)
}

/// Bins covering `[max(T1, t_i), T2]` for one parent.
pub fn make_bins(parent: &Event, dom: &TimeDomain, cfg: &BinningConfig) -> Result<Vec<TimeBin>> {
    if parent.time >= dom.t2 {
        return Err(Error::ParentAfterDomain {
            time: parent.time,
            t2: dom.t2,
        });
    }
    let ti = parent.time;
    let mut bounds = vec![Boundary {
        time: ti,
        lag: 0.0,
        ladder: Some(0),
    }];
    for n in 0..=cfg.n_max {
        let lag = cfg.ladder_lag(n);
        let time = ti + lag;
        if time >= dom.t2 {
            break;
        }
        bounds.push(Boundary {
            time,
            lag,
            ladder: Some(n + 1),
        });
    }

    // Clip to T1 for history parents.
    if ti < dom.t1 {
        let first_inside = bounds.partition_point(|b| b.time <= dom.t1);
        let mut clipped = vec![Boundary {
            time: dom.t1,
            lag: dom.t1 - ti,
            ladder: None,
        }];
        clipped.extend_from_slice(&bounds[first_inside..]);
        bounds = clipped;
    }
    bounds.push(Boundary {
        time: dom.t2,
        lag: dom.t2 - ti,
        ladder: None,
    });

    // A bin too narrow to resolve is merged into its successor (or, for the
    // last bin, its predecessor).
    let mut k = 0;
    while k + 1 < bounds.len() {
        if bounds.len() > 2 && degenerate(bounds[k].time, bounds[k + 1].time) {
            if k + 2 < bounds.len() {
                bounds.remove(k + 1);
            } else {
                bounds.remove(k);
            }
            continue;
        }
        k += 1;
    }

    Ok(bounds
        .windows(2)
        .map(|w| {
            // The lower boundary's ladder position identifies the bin; the
            // T2-capped bin, clipped and merged bins carry no index.
            let full = matches!((w[0].ladder, w[1].ladder), (Some(a), Some(b)) if b == a + 1);
            TimeBin {
                lo: w[0].time,
                hi: w[1].time,
                lag_lo: w[0].lag,
                lag_hi: w[1].lag,
                parent_id: parent.id,
                ladder_index: if full { w[0].ladder } else { None },
            }
        })
        .collect())
}

/// The three log-components of the likelihood decomposition.
#[derive(Debug, Clone, Copy)]
pub enum Component<'a> {
    /// `log Lambda_0(T1, T2)`.
    Background { dom: &'a TimeDomain },
    /// `log Lambda_i` over one bin of `parent`.
    Bin {
        bin: &'a TimeBin,
        parent: &'a Event,
        m0: f64,
    },
    /// `log lambda(t | H_t)` at an observed event.
    Point {
        event: &'a Event,
        history: &'a [Event],
        m0: f64,
    },
}

/// Value and gradient with respect to the ETAS-scale parameters.
pub type ValueGrad = (f64, [f64; 5]);

pub fn background_value_grad(dom: &TimeDomain, eta: &EtasParams) -> ValueGrad {
    (
        dom.length().ln() + eta.mu.ln(),
        [1.0 / eta.mu, 0.0, 0.0, 0.0, 0.0],
    )
}

/// `x / expm1(x) - 1`, accurate for small `x`.
fn x_over_expm1_minus_one(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        -0.5 * x + x2 / 12.0 - x2 * x2 / 720.0
    } else {
        x / x.exp_m1() - 1.0
    }
}

/// `ln` of the Omori integral over lags `[lo, hi]` together with its partial
/// derivatives in `c` and `p`.
pub fn log_omori_integral_grad(lo: f64, hi: f64, c: f64, p: f64) -> (f64, f64, f64) {
    let q = p - 1.0;
    let value = log_omori_integral(lo, hi, c, p);
    let log_a = (lo / c).ln_1p();
    let width = ((hi - lo) / (lo + c)).ln_1p();
    let x = q * width;
    let r = (-x).exp();
    let d = -(-x).exp_m1();
    let a_frac = lo / (lo + c);
    let b_frac = hi / (hi + c);
    let d_c = 1.0 / c + (q / c) * (a_frac - b_frac * r) / d;
    let d_p = -log_a + x_over_expm1_minus_one(x) / q;
    (value, d_c, d_p)
}

pub fn bin_value_grad(lag_lo: f64, lag_hi: f64, magnitude: f64, m0: f64, eta: &EtasParams) -> ValueGrad {
    let (omori, d_c, d_p) = log_omori_integral_grad(lag_lo, lag_hi, eta.c, eta.p);
    (
        eta.log_productivity(magnitude, m0) + omori,
        [0.0, 1.0 / eta.k, magnitude - m0, d_c, d_p],
    )
}

/// `log lambda` at `t` by log-sum-exp over `{ln mu} U {ln g_h}` with its
/// ETAS-scale gradient. `history` must strictly precede `t`.
pub fn point_value_grad<'a>(
    t: f64,
    history: impl IntoIterator<Item = &'a Event> + Clone,
    m0: f64,
    eta: &EtasParams,
) -> Result<ValueGrad> {
    let ln_mu = eta.mu.ln();
    let ln_k = eta.k.ln();
    let mut max_log = ln_mu;
    for h in history.clone() {
        if h.time >= t {
            return Err(Error::HistoryViolation {
                event_time: h.time,
                t,
            });
        }
        let ln_x = ((t - h.time) / eta.c).ln_1p();
        max_log = max_log.max(ln_k + eta.alpha * (h.magnitude - m0) - eta.p * ln_x);
    }
    if !max_log.is_finite() {
        return Ok((f64::NEG_INFINITY, [0.0; 5]));
    }
    // Scaled sums: everything relative to exp(max_log).
    let mut total = (ln_mu - max_log).exp();
    let mut trig = 0.0;
    let mut d_alpha = 0.0;
    let mut d_c = 0.0;
    let mut d_p = 0.0;
    for h in history {
        let lag = t - h.time;
        let ln_x = (lag / eta.c).ln_1p();
        let dm = h.magnitude - m0;
        let term = (ln_k + eta.alpha * dm - eta.p * ln_x - max_log).exp();
        trig += term;
        d_alpha += term * dm;
        // d/dc x^-p = (p/c) x^-p (1 - 1/x), with 1 - 1/x = lag / (lag + c).
        d_c += term * (eta.p / eta.c) * (lag / (lag + eta.c));
        d_p -= term * ln_x;
    }
    total += trig;
    let value = max_log + total.ln();
    let scale = 1.0 / total;
    let d_mu = (-max_log).exp() * scale;
    let d_k = if eta.k > 0.0 { trig * scale / eta.k } else { 0.0 };
    Ok((value, [d_mu, d_k, d_alpha * scale, d_c * scale, d_p * scale]))
}

fn to_internal_grad(grad_eta: [f64; 5], jac: &[f64; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for k in 0..5 {
        out[k] = grad_eta[k] * jac[k];
    }
    out
}

impl Component<'_> {
    fn value_grad_eta(&self, eta: &EtasParams) -> Result<ValueGrad> {
        match *self {
            Component::Background { dom } => Ok(background_value_grad(dom, eta)),
            Component::Bin { bin, parent, m0 } => {
                let (v, g) = bin_value_grad(bin.lag_lo, bin.lag_hi, parent.magnitude, m0, eta);
                if !v.is_finite() {
                    return Err(Error::BinUnderflow {
                        lo: bin.lo,
                        hi: bin.hi,
                    });
                }
                Ok((v, g))
            }
            Component::Point { event, history, m0 } => {
                point_value_grad(event.time, history.iter(), m0, eta)
            }
        }
    }

    pub fn value(&self, theta: &InternalParams, priors: &PriorSpec) -> Result<f64> {
        Ok(self.value_grad_eta(&priors.to_etas(theta))?.0)
    }

    /// Internal-scale gradient (chain rule through the link Jacobian).
    pub fn gradient(&self, theta: &InternalParams, priors: &PriorSpec) -> Result<[f64; 5]> {
        let (_, g) = self.value_grad_eta(&priors.to_etas(theta))?;
        Ok(to_internal_grad(g, &priors.jacobian(theta)))
    }

    pub fn value_and_gradient(&self, theta: &InternalParams, priors: &PriorSpec) -> Result<(f64, [f64; 5])> {
        let (v, g) = self.value_grad_eta(&priors.to_etas(theta))?;
        Ok((v, to_internal_grad(g, &priors.jacobian(theta))))
    }
}

/// `log(T2 - T1) + log(mu)`.
pub fn log_lambda0(dom: &TimeDomain, theta: &InternalParams, priors: &PriorSpec) -> f64 {
    Component::Background { dom }
        .value(theta, priors)
        .expect("background component is infallible")
}

/// Log of the triggered count of `parent` inside `bin`.
pub fn log_lambda_i(
    bin: &TimeBin,
    parent: &Event,
    theta: &InternalParams,
    priors: &PriorSpec,
    m0: f64,
) -> Result<f64> {
    if bin.lo < parent.time {
        return Err(Error::InvalidDomain(format!(
            "bin starts at {} before its parent at {}",
            bin.lo, parent.time
        )));
    }
    Component::Bin { bin, parent, m0 }.value(theta, priors)
}

/// Log conditional intensity at `event` given the events that precede it.
pub fn log_lambda_point(
    event: &Event,
    history_before: &[Event],
    theta: &InternalParams,
    priors: &PriorSpec,
    m0: f64,
) -> Result<f64> {
    Component::Point {
        event,
        history: history_before,
        m0,
    }
    .value(theta, priors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(t1: f64, t2: f64) -> TimeDomain {
        TimeDomain::new(t1, t2, 2.5).unwrap()
    }

    fn bounds(bins: &[TimeBin]) -> Vec<f64> {
        let mut b: Vec<f64> = bins.iter().map(|b| b.lo).collect();
        b.push(bins.last().unwrap().hi);
        b
    }

    #[test]
    fn default_ladder() {
        let bins = make_bins(&Event::new(0.0, 3.0, 0), &dom(0.0, 1000.0), &BinningConfig::default()).unwrap();
        let expected = [0.0, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4, 12.8, 25.6, 1000.0];
        let got = bounds(&bins);
        assert_eq!(bins.len(), 10);
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(bins[0].ladder_index, Some(0));
        assert_eq!(bins[8].ladder_index, Some(8));
        assert_eq!(bins[9].ladder_index, None);
    }

    #[test]
    fn parent_near_end_gets_one_bin() {
        let ti = 1000.0 - 0.05;
        let bins = make_bins(&Event::new(ti, 3.0, 0), &dom(0.0, 1000.0), &BinningConfig::default()).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!((bins[0].lo, bins[0].hi), (ti, 1000.0));
    }

    #[test]
    fn history_parent_clipped() {
        let bins = make_bins(&Event::new(-10.0, 3.0, 0), &dom(0.0, 1000.0), &BinningConfig::default()).unwrap();
        assert_eq!(bins[0].lo, 0.0);
        assert!((bins[0].lag_lo - 10.0).abs() < 1e-12);
        // Ladder points at -10 + 12.8 and -10 + 25.6 survive.
        let b = bounds(&bins);
        assert_eq!(b.len(), 4);
        assert!((b[1] - 2.8).abs() < 1e-12 && (b[2] - 15.6).abs() < 1e-12);
        assert!(bins.iter().all(|b| b.ladder_index.is_none() || b.lo >= 0.0));
    }

    #[test]
    fn parent_after_domain_rejected() {
        assert!(make_bins(&Event::new(1000.0, 3.0, 0), &dom(0.0, 1000.0), &BinningConfig::default()).is_err());
    }

    #[test]
    fn tiny_tail_bin_is_merged() {
        let cfg = BinningConfig::default();
        // The last ladder point lands within rounding distance of T2.
        let t2 = 0.1 * 2f64.powi(8);
        let end = f64::from_bits(t2.to_bits() + 1);
        let bins = make_bins(&Event::new(0.0, 3.0, 0), &dom(0.0, end), &cfg).unwrap();
        assert_eq!(bins.len(), 9);
        assert!(bins.iter().all(|b| b.length() > 1e-12));
        assert_eq!(bins.last().unwrap().hi, end);
    }

    #[test]
    fn background_component() {
        let priors = PriorSpec::default();
        let theta = priors
            .to_internal(&EtasParams::new(0.1, 0.089, 2.29, 0.11, 1.08).unwrap())
            .unwrap();
        let v = log_lambda0(&dom(0.0, 1000.0), &theta, &priors);
        assert!((v - 100f64.ln()).abs() < 1e-10);

        let theta1 = priors
            .to_internal(&EtasParams::new(1.0, 0.089, 2.29, 0.11, 1.08).unwrap())
            .unwrap();
        assert!(log_lambda0(&dom(0.0, 1.0), &theta1, &priors).abs() < 1e-10);
        let g = Component::Background { dom: &dom(0.0, 1.0) }
            .gradient(&theta1, &priors)
            .unwrap();
        assert_eq!(&g[1..], &[0.0; 4]);
    }

    #[test]
    fn alpha_gradient_is_linear_term() {
        let priors = PriorSpec::default();
        let theta = InternalParams([0.1, -0.3, 0.2, -0.5, 0.4]);
        let parent = Event::new(3.0, 4.1, 0);
        let d = dom(0.0, 100.0);
        let bins = make_bins(&parent, &d, &BinningConfig::default()).unwrap();
        let g = Component::Bin { bin: &bins[2], parent: &parent, m0: 2.5 }
            .gradient(&theta, &priors)
            .unwrap();
        let dalpha = priors.jacobian(&theta)[2];
        assert!((g[2] - (4.1 - 2.5) * dalpha).abs() < 1e-12);
    }

    #[test]
    fn point_without_history() {
        let priors = PriorSpec::default();
        let theta = InternalParams([0.3, 0.0, 0.0, 0.0, 0.0]);
        let v = log_lambda_point(&Event::new(1.0, 3.0, 0), &[], &theta, &priors, 2.5).unwrap();
        assert!((v - priors.to_etas(&theta).mu.ln()).abs() < 1e-15);
    }

    #[test]
    fn point_with_huge_productivity_is_finite() {
        let priors = PriorSpec::default();
        let eta = EtasParams::new(0.1, 0.089, 2.29, 0.11, 1.08).unwrap();
        let theta = priors.to_internal(&eta).unwrap();
        // alpha (m - M0) = 9.6
        let m = 2.5 + 9.6 / 2.29;
        let parent = [Event::new(0.0, m, 0)];
        let v = log_lambda_point(&Event::new(1e-9, 3.0, 1), &parent, &theta, &priors, 2.5).unwrap();
        assert!(v.is_finite());
        assert!((v - (0.1 + 0.089 * 9.6f64.exp() * (1e-9 / 0.11 + 1.0f64).powf(-1.08)).ln()).abs() < 1e-9);
    }
}
