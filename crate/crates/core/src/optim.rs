//! Projected limited-memory BFGS for smooth objectives over a box.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub max_iter: usize,
    /// Stop when the projected gradient's largest component falls below this.
    pub gtol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub ftol: f64,
    pub memory: usize,
    /// Cap on any single coordinate's move per iteration.
    pub max_step: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: 1e-5,
            ftol: 2.2e-9,
            memory: 10,
            max_step: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Components of `g` that can still move `x` inside the box (zero otherwise).
fn free_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

/// Minimizes `f` over `[lo, hi]`. The objective returns `None` where it is
/// undefined; such points are rejected by the line search.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &Options) -> Option<Outcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut evaluations = 1;
    let (mut fx, mut gx) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let pg = free_gradient(&x, &gx, lo, hi);
        if pg.iter().all(|v| v.abs() <= opts.gtol) {
            converged = true;
            break;
        }
        let free: Vec<bool> = pg.iter().map(|&v| v != 0.0).collect();

        // Two-loop recursion restricted to the free coordinates.
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..q.len() {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..q.len() {
                q[i] += s[i] * (a - b);
            }
        }
        let mut d: Vec<f64> = q.iter().zip(&free).map(|(v, &fr)| if fr { -v } else { 0.0 }).collect();
        if dot(&d, &pg) >= 0.0 {
            hist.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let mut t = if hist.is_empty() {
            let gmax = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / gmax).min(1.0)
        } else {
            1.0
        };
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if t * dmax > opts.max_step {
            t = opts.max_step / dmax;
        }

        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xn, lo, hi);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            evaluations += 1;
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * dot(&gx, &step) {
                    accepted = Some((xn, fn_, gn, step));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            if hist.is_empty() {
                // Steepest descent made no progress; treat as stationary.
                converged = true;
                break;
            }
            hist.clear();
            continue;
        };
        let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(1e-300) {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - fn_;
        x = xn;
        fx = fn_;
        gx = gn;
        if decrease <= opts.ftol * fx.abs().max(1.0) {
            let pg = free_gradient(&x, &gx, lo, hi);
            if pg.iter().all(|v| v.abs() <= opts.gtol.max(1e-3)) {
                converged = true;
                break;
            }
        }
    }
    Some(Outcome {
        x,
        f: fx,
        iterations,
        evaluations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize_box(
            rosenbrock,
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &Options {
                max_iter: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5,
            "{out:?}"
        );
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained minimum at (3, -2); box clips both coordinates.
        let f = |x: &[f64]| {
            Some((
                (x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2),
                vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 2.0)],
            ))
        };
        let out = minimize_box(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &Options::default()).unwrap();
        assert_eq!(out.x, vec![1.0, -1.0]);
        assert!(out.converged);
    }
}
