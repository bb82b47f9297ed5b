//! Box-constrained smooth minimization: projected L-BFGS.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSolverConfig {
    /// Stop once `‖P(x − ∇f) − x‖∞ ≤ tol·(1 + |f|)`.
    pub tol: f64,
    /// Also stop once a step lowers `f` by at most `ftol·max(1, |f|)`.
    pub ftol: f64,
    pub max_iters: usize,
    pub memory: usize,
}

impl Default for BoxSolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            ftol: 1e-13,
            max_iters: 2000,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxSolution<F> {
    pub x: Vec<F>,
    pub value: F,
    pub iterations: usize,
    /// Projected-gradient infinity norm at `x`.
    pub residual: F,
}

fn project<F: Scalar>(x: &mut [F], lower: &[F], upper: &[F]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.max(l).min(u);
    }
}

/// `‖P(x − g) − x‖∞`
pub fn projected_gradient_norm<F: Scalar>(x: &[F], g: &[F], lower: &[F], upper: &[F]) -> F {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).max(l).min(u) - xi).abs())
        .fold(F::zero(), F::max)
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Minimizes `f` over `lower ≤ x ≤ upper` (bounds may be infinite).
///
/// `f` returns the value and gradient. On hitting the iteration cap or a
/// stalled line search above tolerance the error carries the best iterate.
pub fn minimize_box<F, Fun>(
    mut f: Fun,
    x0: &[F],
    lower: &[F],
    upper: &[F],
    cfg: &BoxSolverConfig,
) -> Result<BoxSolution<F>>
where
    F: Scalar,
    Fun: FnMut(&[F]) -> Result<(F, Vec<F>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Shape(
            "bound vectors differ in length from x0".into(),
        ));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::Config("lower bound exceeds upper bound".into()));
    }
    let tol = F::c(cfg.tol);
    let ftol = F::c(cfg.ftol);
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::Numeric(
            "objective is not finite at the start point".into(),
        ));
    }
    let mut memory: VecDeque<(Vec<F>, Vec<F>, F)> = VecDeque::new();
    let armijo = F::c(1e-4);

    for iter in 0..cfg.max_iters {
        let residual = projected_gradient_norm(&x, &g, lower, upper);
        if residual <= tol * (F::one() + fx.abs()) {
            return Ok(BoxSolution {
                x,
                value: fx,
                iterations: iter,
                residual,
            });
        }
        // variables held at a bound by the gradient stay fixed this iteration
        let free: Vec<bool> = (0..n)
            .map(|i| {
                !((x[i] <= lower[i] && g[i] > F::zero()) || (x[i] >= upper[i] && g[i] < F::zero()))
            })
            .collect();
        let gf: Vec<F> = g
            .iter()
            .zip(&free)
            .map(|(&v, &fr)| if fr { v } else { F::zero() })
            .collect();

        let mut d = two_loop(&gf, &free, &memory);
        let mut quasi_newton = true;
        if !(dot(&d, &g) < F::zero()) {
            d = gf.iter().map(|&v| -v).collect();
            quasi_newton = false;
            memory.clear();
        }

        let mut step = if quasi_newton && !memory.is_empty() {
            F::one()
        } else {
            let norm = dot(&gf, &gf).sqrt();
            F::one() / norm.max(F::one())
        };
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<F> = x.iter().zip(&d).map(|(&xi, &di)| xi + step * di).collect();
            project(&mut trial, lower, upper);
            let decrease: F = g
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(&gi, (&t, &xi))| gi * (t - xi))
                .sum();
            if decrease < F::zero() {
                let (ft, gt) = f(&trial)?;
                if ft.is_finite() && ft <= fx + armijo * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step /= F::c(2.0);
        }
        let Some((xn, fxn, gn)) = accepted else {
            if quasi_newton && !memory.is_empty() {
                memory.clear();
                continue;
            }
            return Err(Error::NotConverged {
                iterations: iter,
                residual: residual.to_f64_lossy(),
                best: x.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        };

        let stalled = fx - fxn <= ftol * fx.abs().max(F::one());
        let s: Vec<F> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<F> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > F::c(1e-12) * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > F::zero() {
            memory.push_back((s, y, F::one() / sy));
            if memory.len() > cfg.memory {
                memory.pop_front();
            }
        }
        x = xn;
        fx = fxn;
        g = gn;
        if stalled {
            return Ok(BoxSolution {
                residual: projected_gradient_norm(&x, &g, lower, upper),
                x,
                value: fx,
                iterations: iter + 1,
            });
        }
    }
    let residual = projected_gradient_norm(&x, &g, lower, upper);
    if residual <= tol * (F::one() + fx.abs()) {
        return Ok(BoxSolution {
            x,
            value: fx,
            iterations: cfg.max_iters,
            residual,
        });
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iters,
        residual: residual.to_f64_lossy(),
        best: x.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

/// L-BFGS two-loop recursion restricted to the free coordinates.
fn two_loop<F: Scalar>(g: &[F], free: &[bool], memory: &VecDeque<(Vec<F>, Vec<F>, F)>) -> Vec<F> {
    let mask = |v: &[F]| -> Vec<F> {
        v.iter()
            .zip(free)
            .map(|(&a, &fr)| if fr { a } else { F::zero() })
            .collect()
    };
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    let masked: Vec<(Vec<F>, Vec<F>)> = memory.iter().map(|(s, y, _)| (mask(s), mask(y))).collect();
    for (s, y) in masked.iter().rev() {
        let sy = dot(s, y);
        if !(sy > F::zero()) {
            alphas.push(F::zero());
            continue;
        }
        let a = dot(s, &q) / sy;
        for (qi, &yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = masked
        .last()
        .and_then(|(s, y)| {
            let yy = dot(y, y);
            let sy = dot(s, y);
            (yy > F::zero() && sy > F::zero()).then(|| sy / yy)
        })
        .unwrap_or_else(F::one);
    let mut r: Vec<F> = q.iter().map(|&v| gamma * v).collect();
    for ((s, y), &a) in masked.iter().zip(alphas.iter().rev()) {
        let sy = dot(s, y);
        if !(sy > F::zero()) {
            continue;
        }
        let b = dot(y, &r) / sy;
        for (ri, &si) in r.iter_mut().zip(s) {
            *ri += (a - b) * si;
        }
    }
    r.iter().map(|&v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_with_active_bound() {
        // (x0 − 1)² + (x1 + 2)² + x0·x1 on x ≥ 0 → x1 pinned at 0, x0 = 1
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v = (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2) + x[0] * x[1];
            Ok((
                v,
                vec![2.0 * (x[0] - 1.0) + x[1], 2.0 * (x[1] + 2.0) + x[0]],
            ))
        };
        let inf = f64::INFINITY;
        let sol = minimize_box(
            f,
            &[3.0, 3.0],
            &[0.0, 0.0],
            &[inf, inf],
            &BoxSolverConfig::default(),
        )
        .unwrap();
        assert!(
            (sol.x[0] - 1.0).abs() < 1e-6 && sol.x[1] == 0.0,
            "{:?}",
            sol.x
        );
    }

    #[test]
    fn rosenbrock_in_box() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Ok((
                v,
                vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ],
            ))
        };
        let sol = minimize_box(
            f,
            &[-1.0, 0.5],
            &[-2.0, -2.0],
            &[2.0, 2.0],
            &BoxSolverConfig::default(),
        )
        .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-5 && (sol.x[1] - 1.0).abs() < 1e-5);

        // upper bound 0.5 on the first coordinate is active
        let sol = minimize_box(
            f,
            &[0.0, 0.0],
            &[-2.0, -2.0],
            &[0.5, 2.0],
            &BoxSolverConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.x[0], 0.5);
        assert!((sol.x[1] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_reports_best() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((
                x[0] * x[0] + 10.0 * x[1] * x[1],
                vec![2.0 * x[0], 20.0 * x[1]],
            ))
        };
        let cfg = BoxSolverConfig {
            max_iters: 1,
            ..Default::default()
        };
        let inf = f64::INFINITY;
        match minimize_box(f, &[5.0, 5.0], &[-inf, -inf], &[inf, inf], &cfg) {
            Err(Error::NotConverged { best, .. }) => assert_eq!(best.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
