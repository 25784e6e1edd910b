//! Box-constrained Nelder–Mead minimization.
//!
//! Trial points are projected onto the box before evaluation. Non-finite
//! objective values are treated as `+inf`, so the search simply walks away
//! from regions where the objective cannot be evaluated.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below
    /// `f_tol * (1 + |f_best|)`.
    pub f_tol: f64,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_evals: 400,
            f_tol: 1e-8,
            initial_step: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

impl NelderMead {
    /// Minimizes `f` from `start` inside `[lower, upper]`. The returned value
    /// is never worse than `f(start)`.
    pub fn minimize<F>(&self, mut f: F, start: &[f64], lower: &[f64], upper: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = start.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut x0 = start.to_vec();
        project(&mut x0, lower, upper);
        if n == 0 {
            let v = eval(&x0, &mut evals);
            return Minimum { x: x0, f: v, evals };
        }

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let f0 = eval(&x0, &mut evals);
        simplex.push((x0.clone(), f0));
        for i in 0..n {
            let mut xi = x0.clone();
            let step = self.initial_step * (upper[i] - lower[i]);
            // step towards the side with more room
            if x0[i] + step <= upper[i] {
                xi[i] += step;
            } else {
                xi[i] -= step;
            }
            project(&mut xi, lower, upper);
            let fi = eval(&xi, &mut evals);
            simplex.push((xi, fi));
        }

        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            if worst.is_finite() && (worst - best).abs() <= self.f_tol * (1.0 + best.abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |coef: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + coef * (c - w))
                    .collect();
                project(&mut p, lower, upper);
                p
            };

            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
                continue;
            }
            // shrink towards the best vertex
            let xb = simplex[0].0.clone();
            for v in simplex.iter_mut().skip(1) {
                for (xj, bj) in v.0.iter_mut().zip(&xb) {
                    *xj = bj + 0.5 * (*xj - bj);
                }
                v.1 = eval(&v.0, &mut evals);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        Minimum { x, f, evals }
    }
}
