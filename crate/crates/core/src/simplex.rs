//! Dense tableau simplex for `max cᵀx s.t. Ax ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! The slack basis is feasible, so no phase 1 is needed. Bland's rule keeps
//! degenerate pivots from cycling. Shadow prices of the constraints (the
//! solution of the dual LP) are read off the slack columns.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<F> {
    pub x: Vec<F>,
    /// One non-negative price per constraint row.
    pub duals: Vec<F>,
    pub value: F,
    pub pivots: usize,
}

/// Solves the LP; `a` is row-major with one row per constraint.
pub fn maximize<F: Scalar>(c: &[F], a: &[Vec<F>], b: &[F]) -> Result<LpSolution<F>> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(
            "constraint matrix does not match c and b".into(),
        ));
    }
    if b.iter().any(|&v| !(v >= F::zero())) {
        return Err(Error::Solver("right-hand side must be non-negative".into()));
    }
    if c.iter()
        .chain(a.iter().flatten())
        .chain(b)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric("non-finite LP data".into()));
    }
    let width = n + m;
    let mut t: Vec<Vec<F>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.resize(width, F::zero());
            r[n + i] = F::one();
            r
        })
        .collect();
    let mut rhs = b.to_vec();
    let mut obj: Vec<F> = c
        .iter()
        .copied()
        .chain(std::iter::repeat_n(F::zero(), m))
        .collect();
    let mut value = F::zero();
    let mut basis: Vec<usize> = (n..width).collect();

    let scale = c
        .iter()
        .chain(a.iter().flatten())
        .fold(F::one(), |acc, v| acc.max(v.abs()));
    let eps = F::epsilon() * F::c(64.0) * scale;
    let cap = 50 * (width + 1) * (m + 1);

    for pivots in 0.. {
        if pivots > cap {
            return Err(Error::Solver(format!("simplex exceeded {cap} pivots")));
        }
        let Some(col) = (0..width).find(|&j| obj[j] > eps) else {
            let mut x = vec![F::zero(); n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = rhs[i];
                }
            }
            let duals = (0..m).map(|i| (-obj[n + i]).max(F::zero())).collect();
            return Ok(LpSolution {
                x,
                duals,
                value,
                pivots,
            });
        };
        let mut row: Option<usize> = None;
        for i in 0..m {
            if t[i][col] > eps {
                let better = match row {
                    None => true,
                    Some(r) => {
                        let lhs = rhs[i] * t[r][col];
                        let rhs_r = rhs[r] * t[i][col];
                        lhs < rhs_r || (lhs == rhs_r && basis[i] < basis[r])
                    }
                };
                if better {
                    row = Some(i);
                }
            }
        }
        let Some(r) = row else {
            return Err(Error::Solver("LP is unbounded".into()));
        };

        let piv = t[r][col];
        t[r].iter_mut().for_each(|v| *v /= piv);
        rhs[r] /= piv;
        let pivot_row = t[r].clone();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = t[i][col];
            if f.is_zero() {
                continue;
            }
            for (v, &p) in t[i].iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            t[i][col] = F::zero();
            rhs[i] = (rhs[i] - f * rhs[r]).max(F::zero());
        }
        let f = obj[col];
        value += f * rhs[r];
        for (v, &p) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * p;
        }
        obj[col] = F::zero();
        basis[r] = col;
    }
    unreachable!()
}
