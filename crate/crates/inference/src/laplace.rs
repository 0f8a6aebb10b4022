//! Gaussian (Laplace) approximation of the linearised posterior: Newton
//! ascent to the mode and the analytic negative Hessian as precision.

use nalgebra::{Cholesky, Matrix5, Vector5};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use etas_core::link::normal_log_pdf;
use etas_core::{Error, InternalParams, Result};

use crate::surrogate::Linearization;

/// Newton stops once the gradient norm falls below this, or once a full
/// step no longer reduces it (the rounding floor of the gradient).
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_NEWTON_STEPS: usize = 100;
/// Newton decrement below which steps are taken in full.
const LOCAL_DECREMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianApprox {
    pub mode: InternalParams,
    pub precision: [[f64; 5]; 5],
    pub log_det_precision: f64,
}

fn to_matrix(a: &[[f64; 5]; 5]) -> Matrix5<f64> {
    Matrix5::from_fn(|i, j| a[i][j])
}

fn from_matrix(m: &Matrix5<f64>) -> [[f64; 5]; 5] {
    let mut out = [[0.0; 5]; 5];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

impl GaussianApprox {
    pub fn new(mode: InternalParams, precision: [[f64; 5]; 5]) -> Result<Self> {
        let m = to_matrix(&precision);
        if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) {
            return Err(Error::Numerical("precision matrix is not symmetric".into()));
        }
        let chol = Cholesky::new(m).ok_or_else(|| Error::Numerical("precision matrix is not positive definite".into()))?;
        let log_det_precision = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            mode,
            precision,
            log_det_precision,
        })
    }

    fn cholesky(&self) -> Cholesky<f64, nalgebra::U5> {
        Cholesky::new(to_matrix(&self.precision)).expect("checked on construction")
    }

    pub fn covariance(&self) -> [[f64; 5]; 5] {
        from_matrix(&self.cholesky().inverse())
    }

    /// Marginal standard deviations.
    pub fn sd(&self) -> [f64; 5] {
        let cov = self.covariance();
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = cov[k][k].sqrt();
        }
        out
    }

    pub fn log_density(&self, theta: &InternalParams) -> f64 {
        let d = Vector5::from_fn(|k, _| theta.0[k] - self.mode.0[k]);
        let q = (to_matrix(&self.precision) * d).dot(&d);
        5.0 * normal_log_pdf(0.0) + 0.5 * self.log_det_precision - 0.5 * q
    }

    /// `mode + L^-T z` with `precision = L L^T`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> InternalParams {
        let z = Vector5::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let lt = self.cholesky().l().transpose();
        let x = lt.solve_upper_triangular(&z).expect("triangular factor is non-singular");
        let mut out = self.mode.0;
        for k in 0..5 {
            out[k] += x[k];
        }
        InternalParams(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub steps: usize,
    pub gradient_norm: f64,
    /// Largest diagonal inflation used, if any.
    pub damping: Option<f64>,
}

/// Solves `(A + lambda I) s = g` with the first of `lambda = 0, 10^0..10^8`
/// that leaves the matrix positive definite.
fn damped_solve(a: &Matrix5<f64>, g: &Vector5<f64>) -> Option<(Vector5<f64>, Option<f64>)> {
    if let Some(ch) = Cholesky::new(*a) {
        return Some((ch.solve(g), None));
    }
    (0..=8).find_map(|k| {
        let lambda = 10f64.powi(k);
        Cholesky::new(a + Matrix5::identity() * lambda).map(|ch| (ch.solve(g), Some(lambda)))
    })
}

/// Newton maximisation of the linearised log-posterior, started at its
/// expansion point.
pub fn laplace_fit(lin: &Linearization) -> Result<(GaussianApprox, NewtonReport)> {
    let mut theta = *lin.point();
    let mut damping: Option<f64> = None;
    let mut steps = 0;
    let (mut value, mut grad, mut hess) = lin.value_grad_hess(&theta);
    if !value.is_finite() {
        return Err(Error::Numerical("linearised objective is not finite at its expansion point".into()));
    }
    loop {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < GRADIENT_TOLERANCE {
            break;
        }
        if steps == MAX_NEWTON_STEPS {
            return Err(Error::Numerical(format!(
                "Newton did not converge in {MAX_NEWTON_STEPS} steps (|grad| = {gnorm:e})"
            )));
        }
        steps += 1;
        let neg_h = -to_matrix(&hess);
        let g = Vector5::from_column_slice(&grad);
        let (step, used) = damped_solve(&neg_h, &g)
            .ok_or_else(|| Error::Numerical("Hessian not positive definite after damping".into()))?;
        if let Some(l) = used {
            damping = Some(damping.map_or(l, |d: f64| d.max(l)));
        }
        let decrement = g.dot(&step);
        let mut cand = theta.0;
        for k in 0..5 {
            cand[k] += step[k];
        }
        let cand = InternalParams(cand);

        if decrement < LOCAL_DECREMENT {
            // Inside the quadratic region the objective no longer resolves
            // the remaining gain; judge the full step by the gradient norm.
            let (v, g2, h2) = lin.value_grad_hess(&cand);
            let g2norm = g2.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !(g2norm < gnorm) || !v.is_finite() {
                break;
            }
            theta = cand;
            (value, grad, hess) = (v, g2, h2);
            continue;
        }

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let mut c = theta.0;
            for k in 0..5 {
                c[k] += t * step[k];
            }
            let c = InternalParams(c);
            if lin.value(&c) > value {
                accepted = Some(c);
                break;
            }
            t *= 0.5;
        }
        let Some(cand) = accepted else {
            return Err(Error::Numerical(format!(
                "Newton line search failed (decrement {decrement:e})"
            )));
        };
        theta = cand;
        (value, grad, hess) = lin.value_grad_hess(&theta);
    }
    let mut precision = [[0.0; 5]; 5];
    for a in 0..5 {
        for b in 0..5 {
            precision[a][b] = -hess[a][b];
        }
    }
    let gradient_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok((
        GaussianApprox::new(theta, precision)?,
        NewtonReport {
            steps,
            gradient_norm,
            damping,
        },
    ))
}
