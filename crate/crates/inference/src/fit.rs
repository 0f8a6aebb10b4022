//! The outer fitting loop: linearise at the current point, take the Laplace
//! mode of the linearised posterior, move towards it by line search on the
//! exact objective, and repeat until the moves are small relative to the
//! posterior spread.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use etas_core::intensity::Method;
use etas_core::link::{forward, forward_derivative, normal_pdf};
use etas_core::{BinningConfig, Catalog, Error, EtasParams, InternalParams, PriorSpec, Result, TimeDomain};

use crate::laplace::{laplace_fit, GaussianApprox};
use crate::surrogate::{assemble_surrogate, Linearization, Surrogate};

/// Step fractions tried by the line search, largest first.
pub const STEP_FRACTIONS: [f64; 7] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625];
pub const MARGINAL_POINTS: usize = 401;
pub const MARGINAL_HALF_WIDTH: f64 = 6.0;
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub initial: EtasParams,
    pub max_iter: usize,
    /// Convergence when every coordinate moves less than this fraction of
    /// its posterior standard deviation.
    pub convergence_fraction: f64,
    /// Caps the internal-scale step length; disables convergence checking.
    pub max_step: Option<f64>,
    pub binning: BinningConfig,
    pub priors: PriorSpec,
    #[serde(skip)]
    pub method: Method,
    /// Draws for the importance-reweighting diagnostic; 0 disables it.
    pub importance_samples: usize,
    pub importance_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            initial: EtasParams {
                mu: 0.3,
                k: 0.1,
                alpha: 1.0,
                c: 0.2,
                p: 1.1,
            },
            max_iter: 100,
            convergence_fraction: 0.01,
            max_step: None,
            binning: BinningConfig::default(),
            priors: PriorSpec::default(),
            method: Method::Auto,
            importance_samples: 0,
            importance_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn check(&self) -> Result<InternalParams> {
        self.priors.check()?;
        self.binning.check()?;
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.convergence_fraction > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "convergence fraction must be positive, got {}",
                self.convergence_fraction
            )));
        }
        if let Some(s) = self.max_step {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig(format!("max_step must be positive, got {s}")));
            }
        }
        let theta = self.priors.to_internal(&self.initial)?;
        if !theta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "initial parameters {:?} map outside the prior support",
                self.initial
            )));
        }
        Ok(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub theta: InternalParams,
    /// Fraction of the way from `theta0` to the target; 0 when stalled.
    pub fraction: f64,
    pub value: f64,
    pub stalled: bool,
}

/// Picks `theta0 + w (target - theta0)` maximising `objective` over
/// [`STEP_FRACTIONS`]. With `max_step` the full move is first shortened to
/// that Euclidean length. If no candidate improves on `value0` the result is
/// `theta0`, flagged as stalled.
pub fn line_search(
    theta0: &InternalParams,
    value0: f64,
    target: &InternalParams,
    max_step: Option<f64>,
    mut objective: impl FnMut(&InternalParams) -> f64,
) -> LineSearch {
    let mut target = *target;
    if let Some(cap) = max_step {
        let len = distance(theta0, &target);
        if len > cap {
            target = theta0.lerp(&target, cap / len);
        }
    }
    let mut best = LineSearch {
        theta: *theta0,
        fraction: 0.0,
        value: value0,
        stalled: true,
    };
    for &w in &STEP_FRACTIONS {
        let cand = theta0.lerp(&target, w);
        let v = objective(&cand);
        if v.is_finite() && (v > best.value || !best.value.is_finite()) {
            best = LineSearch {
                theta: cand,
                fraction: w,
                value: v,
                stalled: false,
            };
        }
    }
    best
}

fn distance(a: &InternalParams, b: &InternalParams) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest `|new_k - old_k| / sd_k`.
pub fn scaled_change(theta_new: &InternalParams, theta_old: &InternalParams, approx: &GaussianApprox) -> f64 {
    let sd = approx.sd();
    (0..5)
        .map(|k| (theta_new.0[k] - theta_old.0[k]).abs() / sd[k])
        .fold(0.0, f64::max)
}

pub fn check_convergence(
    theta_new: &InternalParams,
    theta_old: &InternalParams,
    approx: &GaussianApprox,
    fraction: f64,
) -> bool {
    let sd = approx.sd();
    (0..5).all(|k| (theta_new.0[k] - theta_old.0[k]).abs() < fraction * sd[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// No step fraction improved the exact objective.
    Stalled,
    /// `max_step` was set, so convergence was not checked.
    StepLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Expansion point of this iteration.
    pub lin_point: InternalParams,
    pub lin_point_etas: EtasParams,
    /// Mode of the linearised posterior.
    pub laplace_mode: InternalParams,
    /// Line-search fraction towards the Laplace mode.
    pub step_fraction: f64,
    /// Exact log-posterior at the accepted point.
    pub objective: f64,
    pub newton_steps: usize,
    pub scaled_change: f64,
}

/// Density of one ETAS-scale parameter on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub name: String,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub mode: f64,
    pub lower95: f64,
    pub upper95: f64,
}

impl Marginal {
    pub fn contains(&self, x: f64) -> bool {
        self.lower95 <= x && x <= self.upper95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub draws: usize,
    pub effective_sample_size: f64,
    /// Reweighted (2.5%, 50%, 97.5%) quantiles per parameter.
    pub quantiles: [[f64; 3]; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub approx: GaussianApprox,
    pub priors: PriorSpec,
    pub mode_internal: InternalParams,
    /// The internal mode pushed through the links.
    pub mode_etas: EtasParams,
    pub covariance: [[f64; 5]; 5],
    pub marginals: Vec<Marginal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<EtasParams>>,
    pub iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
    pub history: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<ImportanceSummary>,
    pub n_events: usize,
    pub n_history: usize,
    pub n_rows: usize,
    pub elapsed_seconds: f64,
}

impl PosteriorResult {
    pub fn marginal(&self, name: &str) -> Option<&Marginal> {
        self.marginals.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Gaussian-in-internal-scale marginals pushed through the links, on grids
/// spanning mode +- 6 sd and renormalised by the trapezoidal rule.
pub fn marginals(approx: &GaussianApprox, priors: &PriorSpec) -> Vec<Marginal> {
    let sd = approx.sd();
    let targets = priors.targets();
    (0..5)
        .map(|k| {
            let m = approx.mode.0[k];
            let s = sd[k];
            let mut grid = Vec::with_capacity(MARGINAL_POINTS);
            let mut density = Vec::with_capacity(MARGINAL_POINTS);
            for j in 0..MARGINAL_POINTS {
                let z = -MARGINAL_HALF_WIDTH + 2.0 * MARGINAL_HALF_WIDTH * j as f64 / (MARGINAL_POINTS - 1) as f64;
                let theta = m + s * z;
                grid.push(forward(theta, &targets[k]));
                density.push(normal_pdf(z) / (s * forward_derivative(theta, &targets[k])));
            }
            let area: f64 = grid
                .windows(2)
                .zip(density.windows(2))
                .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
                .sum();
            if area > 0.0 && area.is_finite() {
                for d in density.iter_mut() {
                    *d /= area;
                }
            }
            Marginal {
                name: EtasParams::NAMES[k].to_string(),
                grid,
                density,
                mode: forward(m, &targets[k]),
                lower95: forward(m - Z_975 * s, &targets[k]),
                upper95: forward(m + Z_975 * s, &targets[k]),
            }
        })
        .collect()
}

fn weighted_quantile(pairs: &mut [(f64, f64)], q: f64) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for &(x, w) in pairs.iter() {
        acc += w;
        if acc >= q * total {
            return x;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

/// Reweights draws from the Gaussian approximation by the exact posterior.
pub fn importance_reweight(
    data: &Surrogate,
    approx: &GaussianApprox,
    priors: &PriorSpec,
    draws: usize,
    seed: u64,
) -> Result<ImportanceSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut thetas = Vec::with_capacity(draws);
    let mut logw = Vec::with_capacity(draws);
    for _ in 0..draws {
        let th = approx.sample(&mut rng);
        let lp = data.exact_log_posterior(&th, priors)?;
        logw.push(lp - approx.log_density(&th));
        thetas.push(th);
    }
    let max = logw.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| if l.is_finite() { (l - max).exp() } else { 0.0 }).collect();
    let sum: f64 = w.iter().sum();
    let sum2: f64 = w.iter().map(|x| x * x).sum();
    let targets = priors.targets();
    let mut quantiles = [[f64::NAN; 3]; 5];
    for k in 0..5 {
        let mut pairs: Vec<(f64, f64)> = thetas.iter().zip(&w).map(|(t, &wi)| (forward(t.0[k], &targets[k]), wi)).collect();
        for (i, q) in [0.025, 0.5, 0.975].into_iter().enumerate() {
            quantiles[k][i] = weighted_quantile(&mut pairs, q);
        }
    }
    Ok(ImportanceSummary {
        draws,
        effective_sample_size: if sum2 > 0.0 { sum * sum / sum2 } else { 0.0 },
        quantiles,
    })
}

/// Runs the iterated linearisation to convergence or `max_iter`.
pub fn fit(modeled: &Catalog, history: &Catalog, dom: &TimeDomain, cfg: &FitConfig) -> Result<PosteriorResult> {
    let start = Instant::now();
    let mut theta = cfg.check()?;
    let priors = &cfg.priors;
    let data = assemble_surrogate(modeled, history, dom, &cfg.binning)?.with_method(cfg.method);

    let mut values = data.evaluate(&theta, priors)?;
    let mut objective = data.row_sum(&values.values) + theta.log_prior();
    if !objective.is_finite() {
        return Err(Error::Numerical(format!(
            "log-posterior is not finite at the initial parameters {:?}",
            cfg.initial
        )));
    }

    let mut history_log = Vec::new();
    let mut last_approx = None;
    let mut status = FitStatus::MaxIterations;
    for iteration in 1..=cfg.max_iter {
        let lin = Linearization::from_values(&data, &theta, &values);
        let (approx, report) = laplace_fit(&lin)?;
        let ls = line_search(&theta, objective, &approx.mode, cfg.max_step, |th| {
            data.exact_log_posterior(th, priors).unwrap_or(f64::NAN)
        });
        let change = scaled_change(&ls.theta, &theta, &approx);
        history_log.push(IterationRecord {
            iteration,
            lin_point: theta,
            lin_point_etas: priors.to_etas(&theta),
            laplace_mode: approx.mode,
            step_fraction: ls.fraction,
            objective: ls.value,
            newton_steps: report.steps,
            scaled_change: change,
        });

        if ls.stalled {
            // At a fixed point the proposed move is below rounding of the
            // objective; that is convergence, not a stall.
            let converged = cfg.max_step.is_none()
                && check_convergence(&approx.mode, &theta, &approx, cfg.convergence_fraction);
            status = if converged { FitStatus::Converged } else { FitStatus::Stalled };
            last_approx = Some(approx);
            break;
        }
        let converged =
            cfg.max_step.is_none() && check_convergence(&ls.theta, &theta, &approx, cfg.convergence_fraction);
        theta = ls.theta;
        objective = ls.value;
        last_approx = Some(approx);
        if converged {
            status = FitStatus::Converged;
            break;
        }
        if cfg.max_step.is_some() {
            status = FitStatus::StepLimited;
        }
        values = data.evaluate(&theta, priors)?;
    }

    let approx = last_approx.expect("at least one iteration runs");
    let importance = if cfg.importance_samples > 0 {
        Some(importance_reweight(&data, &approx, priors, cfg.importance_samples, cfg.importance_seed)?)
    } else {
        None
    };
    Ok(PosteriorResult {
        mode_internal: approx.mode,
        mode_etas: priors.to_etas(&approx.mode),
        covariance: approx.covariance(),
        marginals: marginals(&approx, priors),
        approx,
        priors: *priors,
        samples: None,
        iterations: history_log.len(),
        converged: status == FitStatus::Converged,
        status,
        history: history_log,
        importance,
        n_events: data.modeled().len(),
        n_history: data.history().len(),
        n_rows: data.len(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Draws from the Gaussian approximation, mapped to the ETAS scale.
pub fn sample_posterior<R: Rng + ?Sized>(res: &PosteriorResult, n: usize, rng: &mut R) -> Vec<EtasParams> {
    (0..n).map(|_| res.priors.to_etas(&res.approx.sample(rng))).collect()
}
