//! The Poisson-count surrogate dataset and its linearisation.
//!
//! Every log-component `f` of the Hawkes likelihood becomes one row with a
//! count and an exposure, contributing `-e exp(f) + c f`:
//!
//! | row          | count | exposure | `f`                    |
//! |--------------|-------|----------|------------------------|
//! | background   | 0     | 1        | `log Lambda_0`         |
//! | bin integral | 0     | 1        | `log Lambda_i(bin)`    |
//! | event point  | 1     | 0        | `log lambda(t_i | H)`  |
//!
//! Summed with unlinearised `f` the rows reproduce the exact log-likelihood;
//! replacing each `f` by its first-order expansion about a point gives the
//! concave objective maximised at every outer iteration.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use etas_core::binning::{background_value_grad, log_omori_integral_grad, make_bins};
use etas_core::intensity::{event_log_intensities, Method};
use etas_core::{BinningConfig, Catalog, Error, Event, InternalParams, PriorSpec, Result, TimeBin, TimeDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    BackgroundIntegral,
    BinIntegral,
    EventPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowContext {
    Background,
    /// `parent` indexes [`Surrogate::parents`]; `lag_pair` the shared
    /// Omori-integral memo.
    Bin {
        parent: usize,
        bin: TimeBin,
        lag_pair: usize,
    },
    /// Index into the modelled events; the history prefix is every parent
    /// strictly earlier in time.
    Event { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePoint {
    pub kind: RowKind,
    pub count: u32,
    pub exposure: f64,
    pub context: RowContext,
}

/// Surrogate rows plus the iteration-invariant context needed to evaluate
/// them. Built once per fit.
#[derive(Debug, Clone)]
pub struct Surrogate {
    dom: TimeDomain,
    /// History events followed by modelled events.
    parents: Vec<Event>,
    n_history: usize,
    rows: Vec<SurrogatePoint>,
    lag_pairs: Vec<(f64, f64)>,
    method: Method,
}

/// Per-row values and internal-scale gradients, in row order.
#[derive(Debug, Clone)]
pub struct RowValues {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 5]>,
}

pub fn assemble_surrogate(
    modeled: &Catalog,
    history: &Catalog,
    dom: &TimeDomain,
    cfg: &BinningConfig,
) -> Result<Surrogate> {
    dom.check()?;
    cfg.check()?;
    if let Some(e) = history.iter().find(|e| e.time >= dom.t1) {
        return Err(Error::InvalidDomain(format!(
            "history event at {} is not before T1 = {}",
            e.time, dom.t1
        )));
    }
    if let Some(e) = modeled.iter().find(|e| !dom.contains(e.time)) {
        return Err(Error::InvalidDomain(format!(
            "modelled event at {} lies outside [{}, {}]",
            e.time, dom.t1, dom.t2
        )));
    }

    let parents: Vec<Event> = history.iter().chain(modeled.iter()).copied().collect();
    let n_history = history.len();
    let mut rows = vec![SurrogatePoint {
        kind: RowKind::BackgroundIntegral,
        count: 0,
        exposure: 1.0,
        context: RowContext::Background,
    }];
    let mut lag_pairs = Vec::new();
    let mut memo: HashMap<(u64, u64), usize> = HashMap::new();
    for (pi, parent) in parents.iter().enumerate() {
        if parent.time >= dom.t2 {
            continue;
        }
        for bin in make_bins(parent, dom, cfg)? {
            let key = (bin.lag_lo.to_bits(), bin.lag_hi.to_bits());
            let lag_pair = *memo.entry(key).or_insert_with(|| {
                lag_pairs.push((bin.lag_lo, bin.lag_hi));
                lag_pairs.len() - 1
            });
            rows.push(SurrogatePoint {
                kind: RowKind::BinIntegral,
                count: 0,
                exposure: 1.0,
                context: RowContext::Bin {
                    parent: pi,
                    bin,
                    lag_pair,
                },
            });
        }
    }
    for index in 0..modeled.len() {
        rows.push(SurrogatePoint {
            kind: RowKind::EventPoint,
            count: 1,
            exposure: 0.0,
            context: RowContext::Event { index },
        });
    }
    Ok(Surrogate {
        dom: *dom,
        parents,
        n_history,
        rows,
        lag_pairs,
        method: Method::Auto,
    })
}

impl Surrogate {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn rows(&self) -> &[SurrogatePoint] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn domain(&self) -> &TimeDomain {
        &self.dom
    }

    pub fn parents(&self) -> &[Event] {
        &self.parents
    }

    pub fn history(&self) -> &[Event] {
        &self.parents[..self.n_history]
    }

    pub fn modeled(&self) -> &[Event] {
        &self.parents[self.n_history..]
    }

    /// Number of distinct `(lag_lo, lag_hi)` integrals per evaluation.
    pub fn distinct_lag_pairs(&self) -> usize {
        self.lag_pairs.len()
    }

    /// Unlinearised log-components and their internal-scale gradients.
    pub fn evaluate(&self, theta: &InternalParams, priors: &PriorSpec) -> Result<RowValues> {
        let eta = priors.to_etas(theta);
        let jac = priors.jacobian(theta);
        let m0 = self.dom.m0;
        let n = self.rows.len();
        let mut values = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        let scale = |g: [f64; 5]| {
            let mut out = [0.0; 5];
            for k in 0..5 {
                out[k] = g[k] * jac[k];
            }
            out
        };

        let pairs: Vec<(f64, f64, f64)> = self
            .lag_pairs
            .iter()
            .map(|&(lo, hi)| log_omori_integral_grad(lo, hi, eta.c, eta.p))
            .collect();
        let ln_k = eta.k.ln();
        let events = event_log_intensities(self.history(), self.modeled(), m0, &eta, self.method)?;
        let mut events = events.into_iter();

        for row in &self.rows {
            let (v, g) = match row.context {
                RowContext::Background => background_value_grad(&self.dom, &eta),
                RowContext::Bin { parent, lag_pair, .. } => {
                    let dm = self.parents[parent].magnitude - m0;
                    let (omori, d_c, d_p) = pairs[lag_pair];
                    (ln_k + eta.alpha * dm + omori, [0.0, 1.0 / eta.k, dm, d_c, d_p])
                }
                RowContext::Event { .. } => events.next().expect("one intensity per modelled event"),
            };
            values.push(v);
            grads.push(scale(g));
        }
        Ok(RowValues { values, grads })
    }

    /// Exact log-likelihood plus the standard Gaussian log-prior, from the
    /// unlinearised rows.
    pub fn exact_log_posterior(&self, theta: &InternalParams, priors: &PriorSpec) -> Result<f64> {
        let rv = self.evaluate(theta, priors)?;
        Ok(self.row_sum(&rv.values) + theta.log_prior())
    }

    /// `sum_rows [-e exp(f) + c f]`.
    pub fn row_sum(&self, values: &[f64]) -> f64 {
        let mut exposure = Neumaier::default();
        let mut counts = Neumaier::default();
        for (row, &f) in self.rows.iter().zip(values) {
            if row.exposure > 0.0 {
                exposure.add(row.exposure * f.exp());
            }
            if row.count > 0 {
                counts.add(row.count as f64 * f);
            }
        }
        counts.sum() - exposure.sum()
    }
}

/// First-order expansion of every row about a fixed internal point. The
/// linearised objective and its derivatives are
///
/// ```text
/// L(th)   = sum_e -e exp(f + g.d) + sum_c c (f + g.d) - |th|^2 / 2 + const
/// dL      = -sum_e e exp(.) g + G - th
/// d2L     = -sum_e e exp(.) g g^T - I
/// ```
///
/// with `d = th - th*`, so it is strictly concave.
#[derive(Debug, Clone)]
pub struct Linearization {
    point: InternalParams,
    exposure: Vec<f64>,
    f: Vec<f64>,
    g: Vec<[f64; 5]>,
    count_f: f64,
    count_g: [f64; 5],
}

impl Linearization {
    pub fn new(data: &Surrogate, point: &InternalParams, priors: &PriorSpec) -> Result<Self> {
        let rv = data.evaluate(point, priors)?;
        Ok(Self::from_values(data, point, &rv))
    }

    pub fn from_values(data: &Surrogate, point: &InternalParams, rv: &RowValues) -> Self {
        let mut lin = Self {
            point: *point,
            exposure: Vec::new(),
            f: Vec::new(),
            g: Vec::new(),
            count_f: 0.0,
            count_g: [0.0; 5],
        };
        let mut count_f = Neumaier::default();
        let mut count_g: [Neumaier; 5] = Default::default();
        for ((row, &f), g) in data.rows.iter().zip(&rv.values).zip(&rv.grads) {
            if row.exposure > 0.0 && f > f64::NEG_INFINITY {
                lin.exposure.push(row.exposure);
                lin.f.push(f);
                lin.g.push(*g);
            }
            if row.count > 0 {
                let c = row.count as f64;
                count_f.add(c * f);
                for k in 0..5 {
                    count_g[k].add(c * g[k]);
                }
            }
        }
        lin.count_f = count_f.sum();
        for k in 0..5 {
            lin.count_g[k] = count_g[k].sum();
        }
        lin
    }

    pub fn point(&self) -> &InternalParams {
        &self.point
    }

    fn offset(&self, theta: &InternalParams) -> [f64; 5] {
        let mut d = [0.0; 5];
        for k in 0..5 {
            d[k] = theta.0[k] - self.point.0[k];
        }
        d
    }

    pub fn value(&self, theta: &InternalParams) -> f64 {
        let d = self.offset(theta);
        let mut exposure = Neumaier::default();
        for ((&e, &f), g) in self.exposure.iter().zip(&self.f).zip(&self.g) {
            exposure.add(e * (f + dot(g, &d)).exp());
        }
        (self.count_f + dot(&self.count_g, &d)) - exposure.sum() + theta.log_prior()
    }

    /// Value, gradient and Hessian of the linearised objective.
    pub fn value_grad_hess(&self, theta: &InternalParams) -> (f64, [f64; 5], [[f64; 5]; 5]) {
        let d = self.offset(theta);
        let mut exposure = Neumaier::default();
        let mut grad_acc: [Neumaier; 5] = Default::default();
        let mut hess = [[0.0; 5]; 5];
        for ((&e, &f), g) in self.exposure.iter().zip(&self.f).zip(&self.g) {
            let w = e * (f + dot(g, &d)).exp();
            exposure.add(w);
            for a in 0..5 {
                grad_acc[a].add(w * g[a]);
                for b in 0..=a {
                    hess[a][b] -= w * g[a] * g[b];
                }
            }
        }
        let exposure = exposure.sum();
        let mut grad = [0.0; 5];
        for a in 0..5 {
            grad[a] = self.count_g[a] - grad_acc[a].sum() - theta.0[a];
            hess[a][a] -= 1.0;
            for b in 0..a {
                hess[b][a] = hess[a][b];
            }
        }
        let value = (self.count_f + dot(&self.count_g, &d)) - exposure + theta.log_prior();
        (value, grad, hess)
    }
}

/// Compensated summation; the gradient near the mode is a small difference
/// of large sums.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linearised log-posterior at `theta` about `lin_point`.
pub fn linearized_log_posterior(
    theta: &InternalParams,
    lin_point: &InternalParams,
    data: &Surrogate,
    priors: &PriorSpec,
) -> Result<f64> {
    Ok(Linearization::new(data, lin_point, priors)?.value(theta))
}
