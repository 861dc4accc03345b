//! Levenberg–Marquardt on accumulated normal equations, with Nielsen
//! damping updates and column scaling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Cost, `JᵀJ` and `Jᵀr` at one parameter point. Cost is `Σ rᵢ²`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub cost: f64,
    pub jtj: DMatrix<f64>,
    pub jtr: DVector<f64>,
}

pub trait LeastSquaresProblem {
    fn dim(&self) -> usize;
    fn cost(&self, x: &DVector<f64>) -> Result<f64>;
    fn linearize(&self, x: &DVector<f64>) -> Result<Linearization>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative cost decrease below which an accepted step ends the run.
    pub ftol: f64,
    /// Threshold on the ∞-norm of the column-scaled gradient `|Jᵀr|ₖ / sₖ`.
    pub gtol: f64,
    /// `μ₀ = factor · max diag(JᵀJ)` on the column-scaled system.
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iter: 200, ftol: 1e-12, gtol: 1e-10, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CostConverged,
    GradientConverged,
    MaxIterations,
    /// Damping grew without finding a decrease; the iterate is a minimum to
    /// machine precision.
    StepRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub termination: Termination,
}

const MAX_DAMPING: f64 = 1e32;

pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    x0: DVector<f64>,
    options: &LmOptions,
) -> Result<(DVector<f64>, LmReport)> {
    let n = problem.dim();
    let mut x = x0;
    let mut lin = problem.linearize(&x)?;
    let initial_cost = lin.cost;

    let mut scale = DVector::from_fn(n, |k, _| lin.jtj[(k, k)].sqrt());
    for d in scale.iter_mut() {
        if !(*d > 0.0) {
            *d = 1.0;
        }
    }
    let max_diag = (0..n).map(|k| lin.jtj[(k, k)] / (scale[k] * scale[k])).fold(0.0, f64::max);
    let mut mu = options.initial_damping * max_diag.max(f64::MIN_POSITIVE);
    let mut nu = 2.0;
    let mut accepted = 0;
    let mut iterations = 0;

    let termination = loop {
        let scaled_grad = lin.jtr.iter().zip(scale.iter()).map(|(g, s)| (g / s).abs()).fold(0.0, f64::max);
        if lin.cost == 0.0 || scaled_grad < options.gtol {
            break Termination::GradientConverged;
        }
        if iterations >= options.max_iter {
            break Termination::MaxIterations;
        }
        if mu > MAX_DAMPING {
            break Termination::StepRejected;
        }
        iterations += 1;

        let mut a = lin.jtj.clone();
        for k in 0..n {
            a[(k, k)] += mu * scale[k] * scale[k];
        }
        let step = a.cholesky().map(|c| c.solve(&(-&lin.jtr)));
        let Some(delta) = step.filter(|d| d.iter().all(|v| v.is_finite())) else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };

        let candidate = &x + &delta;
        let new_cost = problem.cost(&candidate).unwrap_or(f64::INFINITY);
        let predicted = (delta.transpose() * &lin.jtj * &delta)[(0, 0)]
            + 2.0 * mu * delta.iter().zip(scale.iter()).map(|(d, s)| d * d * s * s).sum::<f64>();
        let actual = lin.cost - new_cost;
        let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };

        if new_cost.is_finite() && actual > 0.0 && rho > 0.0 {
            x = candidate;
            let old_cost = lin.cost;
            lin = problem.linearize(&x)?;
            accepted += 1;
            for k in 0..n {
                scale[k] = scale[k].max(lin.jtj[(k, k)].sqrt());
            }
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            log::debug!("lm iter {iterations}: cost {:.6e} mu {:.3e}", lin.cost, mu);
            if (old_cost - lin.cost) / old_cost < options.ftol {
                break Termination::CostConverged;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
        }
    };

    let report = LmReport { initial_cost, final_cost: lin.cost, iterations, accepted_steps: accepted, termination };
    Ok((x, report))
}
