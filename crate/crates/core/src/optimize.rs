//! Derivative-free minimisation (Nelder–Mead simplex with restarts).

/// Result of a simplex minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// The simplex collapsed below `xtol` before the iteration budget ran out.
    pub converged: bool,
}

/// Nelder–Mead with the standard coefficients (reflection 1, expansion 2,
/// contraction ½, shrink ½).
///
/// Convergence is declared when every vertex lies within `xtol` (max-norm)
/// of the best vertex. After convergence the search is restarted from the
/// best point with a fresh simplex, up to `restarts` times, until a restart
/// no longer moves the minimiser; this guards against premature collapse on
/// elongated valleys.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub initial_step: Vec<f64>,
    pub xtol: f64,
    pub max_iterations: usize,
    pub restarts: usize,
}

impl NelderMead {
    pub fn new(initial_step: Vec<f64>, xtol: f64) -> Self {
        NelderMead {
            initial_step,
            xtol,
            max_iterations: 5000,
            restarts: 8,
        }
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_restarts(mut self, n: usize) -> Self {
        self.restarts = n;
        self
    }

    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut best = self.run(&mut f, x0, self.max_iterations);
        let mut iterations = best.iterations;
        let mut evaluations = best.evaluations;
        for _ in 0..self.restarts {
            if !best.converged || iterations >= self.max_iterations {
                break;
            }
            let budget = self.max_iterations - iterations;
            let next = self.run(&mut f, &best.x, budget);
            iterations += next.iterations;
            evaluations += next.evaluations;
            let moved = next
                .x
                .iter()
                .zip(&best.x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let improved = next.value < best.value;
            if improved {
                best = Minimum {
                    converged: next.converged,
                    ..next
                };
            }
            if moved <= self.xtol || !improved {
                break;
            }
        }
        best.iterations = iterations;
        best.evaluations = evaluations;
        best
    }

    fn run<F>(&self, f: &mut F, x0: &[f64], budget: usize) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let mut evaluations = 0;
        let mut eval = |x: &[f64], evaluations: &mut usize| {
            *evaluations += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            let step = self.initial_step.get(i).copied().unwrap_or(1.0);
            v[i] += if step == 0.0 { 1e-3 } else { step };
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evaluations)).collect();

        let mut iterations = 0;
        let mut converged = false;
        while iterations < budget {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread <= self.xtol {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
                .collect();
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let reflected = along(1.0);
            let fr = eval(&reflected, &mut evaluations);
            if fr < values[0] {
                let expanded = along(2.0);
                let fe = eval(&expanded, &mut evaluations);
                if fe < fr {
                    simplex[n] = expanded;
                    values[n] = fe;
                } else {
                    simplex[n] = reflected;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = reflected;
                values[n] = fr;
                continue;
            }
            let (contracted, fc) = if fr < values[n] {
                let c = along(0.5);
                let fc = eval(&c, &mut evaluations);
                (c, fc)
            } else {
                let c = along(-0.5);
                let fc = eval(&c, &mut evaluations);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
                continue;
            }
            // shrink towards the best vertex
            for i in 1..=n {
                let shrunk: Vec<f64> = simplex[i]
                    .iter()
                    .zip(&simplex[0])
                    .map(|(v, b)| b + 0.5 * (v - b))
                    .collect();
                values[i] = eval(&shrunk, &mut evaluations);
                simplex[i] = shrunk;
            }
        }

        let best = (0..=n)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap_or(0);
        Minimum {
            x: simplex[best].clone(),
            value: values[best],
            iterations,
            evaluations,
            converged,
        }
    }
}
