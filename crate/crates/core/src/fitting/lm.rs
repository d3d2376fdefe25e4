//! Levenberg–Marquardt for small, box-constrained least-squares problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    GradientTolerance,
    StepTolerance,
    CostTolerance,
    /// Damping grew without finding a decrease; the point is a local optimum
    /// to machine precision.
    DampingLimit,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmSolution {
    pub x: Vec<f64>,
    /// ½ Σ r²
    pub cost: f64,
    pub iterations: usize,
    pub status: LmStatus,
}

impl LmSolution {
    pub fn converged(&self) -> bool {
        self.status != LmStatus::MaxIterations
    }
}

/// Marquardt-scaled damped Gauss–Newton with a Nielsen damping update.
/// Parameters are projected onto `[lower, upper]` after every step.
#[derive(Debug, Clone)]
pub struct LevenbergMarquardt {
    pub max_iterations: usize,
    /// Stop when ‖Jᵀr‖∞ falls below this fraction of its initial value.
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        LevenbergMarquardt {
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-14,
            cost_tolerance: 1e-16,
        }
    }
}

impl LevenbergMarquardt {
    /// `model(x)` returns residuals and their Jacobian (rows = residuals).
    pub fn minimize<F>(&self, mut model: F, x0: &[f64], lower: &[f64], upper: &[f64]) -> LmSolution
    where
        F: FnMut(&[f64]) -> (DVector<f64>, DMatrix<f64>),
    {
        let n = x0.len();
        let project = |x: &mut [f64]| {
            for i in 0..n {
                x[i] = x[i].clamp(lower[i], upper[i]);
            }
        };
        let mut x = x0.to_vec();
        project(&mut x);
        let (mut r, mut j) = model(&x);
        let mut cost = 0.5 * r.norm_squared();
        let mut g = j.transpose() * &r;
        let g0 = g.amax().max(f64::MIN_POSITIVE);
        let mut lambda = 1e-3;
        let mut nu = 2.0;

        for iteration in 0..self.max_iterations {
            if g.amax() <= self.gradient_tolerance * g0 || cost == 0.0 {
                return LmSolution { x, cost, iterations: iteration, status: LmStatus::GradientTolerance };
            }
            let jtj = j.transpose() * &j;
            let dmax = jtj.diagonal().max().max(f64::MIN_POSITIVE);

            loop {
                let mut a = jtj.clone();
                for i in 0..n {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * dmax);
                }
                let delta = match a.clone().cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => match a.lu().solve(&(-&g)) {
                        Some(d) => d,
                        None => {
                            lambda *= nu;
                            nu *= 2.0;
                            if lambda > 1e20 {
                                return LmSolution { x, cost, iterations: iteration, status: LmStatus::DampingLimit };
                            }
                            continue;
                        }
                    },
                };
                let mut trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                project(&mut trial);
                let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                let x_norm = x.iter().map(|s| s * s).sum::<f64>().sqrt();
                if step_norm <= self.step_tolerance * (x_norm + self.step_tolerance) {
                    return LmSolution { x, cost, iterations: iteration, status: LmStatus::StepTolerance };
                }

                let (r_new, j_new) = model(&trial);
                let cost_new = 0.5 * r_new.norm_squared();
                let step_v = DVector::from_vec(step);
                let predicted = -(g.dot(&step_v) + 0.5 * step_v.dot(&(&jtj * &step_v)));
                let rho = if predicted > 0.0 { (cost - cost_new) / predicted } else { -1.0 };

                if cost_new.is_finite() && cost_new < cost {
                    let relative = (cost - cost_new) / cost;
                    x = trial;
                    r = r_new;
                    j = j_new;
                    cost = cost_new;
                    g = j.transpose() * &r;
                    lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                    nu = 2.0;
                    if relative <= self.cost_tolerance {
                        return LmSolution { x, cost, iterations: iteration + 1, status: LmStatus::CostTolerance };
                    }
                    break;
                } else {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > 1e20 {
                        return LmSolution { x, cost, iterations: iteration + 1, status: LmStatus::DampingLimit };
                    }
                }
            }
        }
        LmSolution { x, cost, iterations: self.max_iterations, status: LmStatus::MaxIterations }
    }
}

/// (JᵀJ)⁻¹, falling back to a pseudo-inverse when singular.
pub fn normal_inverse(j: &DMatrix<f64>) -> DMatrix<f64> {
    let jtj = j.transpose() * j;
    if let Some(inv) = jtj.clone().try_inverse() {
        if inv.iter().all(|v| v.is_finite()) {
            return inv;
        }
    }
    jtj.pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::from_element(j.ncols(), j.ncols(), f64::NAN))
}
