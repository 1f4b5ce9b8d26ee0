//! Smoothed maxima and a spectral projected gradient solver.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

/// `max + log(Σ exp(β(a_i − max)))/β`, writing the softmax weights into `weights`.
///
/// The result lies in `[max a, max a + log(n)/β]`; the weights are its gradient.
pub fn log_sum_exp(values: &[f64], beta: f64, weights: &mut [f64]) -> f64 {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, &v) in weights.iter_mut().zip(values) {
        *w = (beta * (v - top)).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    top + total.ln() / beta
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgOptions {
    pub max_iter: usize,
    /// Nonmonotone window length.
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub gamma: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Stop once the projected-gradient sup-norm falls below this.
    pub pg_tol: f64,
    pub stall_window: usize,
    pub stall_tol: f64,
}

impl Default for SpgOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            memory: 10,
            gamma: 1e-4,
            step_min: 1e-12,
            step_max: 1e12,
            pg_tol: 1e-10,
            stall_window: 50,
            stall_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// The last `stall_window` iterations improved by less than `stall_tol`.
    pub stalled: bool,
    /// Projected-gradient sup-norm at the last iterate.
    pub pg_norm: f64,
}

/// Minimizes `objective` over the convex set described by `project`.
///
/// `objective(x, grad)` returns the value and fills the gradient; a
/// non-finite value marks `x` as infeasible and makes the line search
/// backtrack. `project` maps a point onto the feasible set in place.
pub fn spg<F, P>(mut objective: F, project: P, x0: &[f64], opts: &SpgOptions) -> SpgOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    if !f.is_finite() {
        return SpgOutcome {
            x,
            value: f,
            iterations: 0,
            stalled: true,
            pg_norm: f64::INFINITY,
        };
    }
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut history = vec![f; opts.memory.max(1)];
    let mut best_trace: Vec<f64> = Vec::with_capacity(opts.max_iter + 1);
    best_trace.push(f);

    let pg = |x: &[f64], g: &[f64], buf: &mut [f64]| {
        for i in 0..x.len() {
            buf[i] = x[i] - g[i];
        }
        project(buf);
        buf.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };

    let mut pg_norm = pg(&x, &g, &mut dir);
    let mut step = if pg_norm > 0.0 {
        (1.0 / pg_norm).clamp(opts.step_min, opts.step_max)
    } else {
        1.0
    };
    let mut stalled = false;
    let mut iterations = 0;
    let mut best_x = x.clone();
    let mut best_f = f;

    while iterations < opts.max_iter && pg_norm > opts.pg_tol {
        iterations += 1;
        for i in 0..n {
            dir[i] = x[i] - step * g[i];
        }
        project(&mut dir);
        for i in 0..n {
            dir[i] -= x[i];
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let mut accepted = false;
        let mut f_trial = f64::INFINITY;
        while lambda > 1e-16 {
            for i in 0..n {
                trial[i] = x[i] + lambda * dir[i];
            }
            f_trial = objective(&trial, &mut g_trial);
            if f_trial.is_finite() && f_trial <= reference + opts.gamma * lambda * slope {
                accepted = true;
                break;
            }
            let quad = if f_trial.is_finite() {
                -0.5 * lambda * lambda * slope / (f_trial - f - lambda * slope)
            } else {
                f64::NAN
            };
            lambda = if quad >= 0.1 * lambda && quad <= 0.9 * lambda {
                quad
            } else {
                0.5 * lambda
            };
        }
        if !accepted {
            stalled = true;
            break;
        }
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = trial[i] - x[i];
            let y = g_trial[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(opts.step_min, opts.step_max)
        } else {
            opts.step_max
        };
        core::mem::swap(&mut x, &mut trial);
        core::mem::swap(&mut g, &mut g_trial);
        f = f_trial;
        let slot = iterations % history.len();
        history[slot] = f;
        if f < best_f {
            best_f = f;
            best_x.copy_from_slice(&x);
        }
        let best = best_f;
        best_trace.push(best);
        pg_norm = pg(&x, &g, &mut dir);
        if iterations >= opts.stall_window {
            let earlier = best_trace[iterations - opts.stall_window];
            if earlier - best < opts.stall_tol * (1.0 + best.abs()) {
                stalled = true;
                break;
            }
        }
    }
    // nonmonotone steps may end above the best iterate
    SpgOutcome {
        x: best_x,
        value: best_f,
        iterations,
        stalled,
        pg_norm,
    }
}

/// Radial projection onto the Euclidean ball of the given radius.
pub fn project_ball(x: &mut [f64], radius: f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let s = radius / norm;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn lse_bounds_and_weights() {
        let v = [0.3, 1.2, -0.5, 1.1];
        let mut w = [0.0; 4];
        for beta in [1.0, 10.0, 1e3] {
            let s = log_sum_exp(&v, beta, &mut w);
            assert!(s >= 1.2 && s <= 1.2 + 4f64.ln() / beta + 1e-15);
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
        assert!(w[1] > 0.99);
    }

    #[test]
    fn lse_gradient_matches_differences() {
        let v = [0.3, 0.35, -0.5];
        let mut w = [0.0; 3];
        let mut scratch = [0.0; 3];
        log_sum_exp(&v, 20.0, &mut w);
        for i in 0..3 {
            let (mut p, mut m) = (v, v);
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (log_sum_exp(&p, 20.0, &mut scratch) - log_sum_exp(&m, 20.0, &mut scratch)) / 2e-6;
            assert_relative_eq!(fd, w[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn spg_solves_ill_conditioned_quadratic() {
        let scales = [1.0, 10.0, 100.0, 1e3];
        let target = [1.0, -2.0, 0.5, 3.0];
        let out = spg(
            |x, g| {
                let mut f = 0.0;
                for i in 0..4 {
                    let e = x[i] - target[i];
                    f += 0.5 * scales[i] * e * e;
                    g[i] = scales[i] * e;
                }
                f
            },
            |_| {},
            &[0.0; 4],
            &SpgOptions {
                max_iter: 5000,
                ..SpgOptions::default()
            },
        );
        for i in 0..4 {
            assert_relative_eq!(out.x[i], target[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn spg_respects_ball_constraint() {
        // nearest point of the unit ball to (3, 4) is (0.6, 0.8)
        let out = spg(
            |x, g| {
                g[0] = x[0] - 3.0;
                g[1] = x[1] - 4.0;
                0.5 * (g[0] * g[0] + g[1] * g[1])
            },
            |x| project_ball(x, 1.0),
            &[0.0, 0.0],
            &SpgOptions::default(),
        );
        assert_relative_eq!(out.x[0], 0.6, epsilon = 1e-8);
        assert_relative_eq!(out.x[1], 0.8, epsilon = 1e-8);
    }

    #[test]
    fn infinite_start_is_reported() {
        let out = spg(|_, _| f64::INFINITY, |_| {}, &[1.0], &SpgOptions::default());
        assert!(out.stalled);
        assert_eq!(out.iterations, 0);
    }

    proptest! {
        #[test]
        fn ball_projection_is_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 1..20), r in 0.1f64..5.0) {
            let mut a = v.clone();
            project_ball(&mut a, r);
            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(norm <= r * (1.0 + 1e-12));
            let mut b = a.clone();
            project_ball(&mut b, r);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
