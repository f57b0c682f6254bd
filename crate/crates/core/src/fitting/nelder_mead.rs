//! Box-constrained Nelder-Mead with bound clipping and in-budget restarts.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex spread in `f` is below this fraction of the best value.
    pub ftol: f64,
    /// Absolute spread below which the simplex is treated as collapsed.
    pub fabs: f64,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
    /// Restarts from the incumbent after convergence, while budget remains.
    pub max_restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 2000, ftol: 1e-10, fabs: 1e-20, initial_step: 0.05, max_restarts: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

struct Bounded<'a, F> {
    f: F,
    lower: &'a [f64],
    upper: &'a [f64],
    evals: usize,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> f64> Bounded<'_, F> {
    fn clip(&self, x: &mut [f64]) {
        for (v, (&lo, &hi)) in x.iter_mut().zip(self.lower.iter().zip(self.upper)) {
            *v = v.clamp(lo, hi);
        }
    }

    fn eval(&mut self, x: &mut [f64]) -> f64 {
        self.clip(x);
        if self.evals >= self.budget {
            return f64::INFINITY;
        }
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// Uses the dimension-adaptive coefficients of Gao and Han. Once the simplex
/// collapses it is rebuilt around the best point; the search ends when a
/// restart fails to improve by `ftol` or the evaluation budget is spent.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let dim = x0.len();
    assert!(dim > 0 && lower.len() == dim && upper.len() == dim);
    let d = dim as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / d, 0.75 - 1.0 / (2.0 * d), 1.0 - 1.0 / d);
    let mut obj = Bounded { f, lower, upper, evals: 0, budget: opts.max_evals.max(1) };

    let mut best_x = x0.to_vec();
    let mut best_f = obj.eval(&mut best_x);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut restarts = 0;

    'outer: loop {
        let mut simplex = vec![best_x.clone()];
        let mut values = vec![best_f];
        for i in 0..dim {
            let width = upper[i] - lower[i];
            let step = opts.initial_step * if width.is_finite() { width } else { 1.0 + best_x[i].abs() };
            let mut v = best_x.clone();
            v[i] = if v[i] + step <= upper[i] { v[i] + step } else { v[i] - step };
            if obj.evals >= opts.max_evals {
                break 'outer;
            }
            values.push(obj.eval(&mut v));
            simplex.push(v);
        }
        let start_f = best_f;

        loop {
            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();
            if values[0] < best_f {
                best_f = values[0];
                best_x = simplex[0].clone();
            }
            trace.push(best_f);

            let spread = values[dim] - values[0];
            if spread.is_finite() && (spread <= opts.ftol * values[0].abs() || spread <= opts.fabs) {
                break;
            }
            if obj.evals >= opts.max_evals {
                break 'outer;
            }
            iterations += 1;

            let mut centroid = vec![0.0; dim];
            for v in &simplex[..dim] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / d;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[dim]).map(|(c, w)| c + t * (c - w)).collect()
            };

            let mut xr = along(alpha);
            let fr = obj.eval(&mut xr);
            if fr < values[0] {
                let mut xe = along(alpha * gamma);
                let fe = obj.eval(&mut xe);
                if fe < fr {
                    simplex[dim] = xe;
                    values[dim] = fe;
                } else {
                    simplex[dim] = xr;
                    values[dim] = fr;
                }
                continue;
            }
            if fr < values[dim - 1] {
                simplex[dim] = xr;
                values[dim] = fr;
                continue;
            }
            let (mut xc, outside) = if fr < values[dim] { (along(alpha * rho), true) } else { (along(-rho), false) };
            let fc = obj.eval(&mut xc);
            if (outside && fc <= fr) || (!outside && fc < values[dim]) {
                simplex[dim] = xc;
                values[dim] = fc;
                continue;
            }
            for i in 1..=dim {
                if obj.evals >= opts.max_evals {
                    break 'outer;
                }
                let mut v: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
                values[i] = obj.eval(&mut v);
                simplex[i] = v;
            }
        }

        let improved = start_f - best_f > opts.ftol * best_f.abs() && start_f - best_f > opts.fabs;
        if (restarts > 0 && !improved) || restarts >= opts.max_restarts {
            converged = true;
            break;
        }
        restarts += 1;
    }

    NelderMeadResult { x: best_x, f: best_f, evaluations: obj.evals, iterations, converged, trace }
}
