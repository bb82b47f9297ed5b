//! Small dense symmetric eigensolver (cyclic Jacobi).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigen-decomposition of a symmetric row-major `n × n` matrix.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors.
pub fn symmetric_eigen<F: Scalar>(a: &[F], n: usize) -> Result<(Vec<F>, Vec<Vec<F>>)> {
    if a.len() != n * n {
        return Err(Error::Shape(format!(
            "{} entries for a {n}x{n} matrix",
            a.len()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    let mut m = a.to_vec();
    let mut v = vec![F::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = F::one();
    }
    let scale = m.iter().fold(F::zero(), |acc, x| acc.max(x.abs()));
    let tol = F::epsilon() * scale * F::from_count(n.max(1));

    for _sweep in 0..100 {
        let off = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .fold(F::zero(), |acc, (p, q)| acc.max(m[p * n + q].abs()));
        if off <= tol {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| {
                crate::scalar::cmp_scalar(m[y * n + y], m[x * n + x]).then(x.cmp(&y))
            });
            let values = order.iter().map(|&i| m[i * n + i]).collect();
            let vectors = order
                .iter()
                .map(|&i| (0..n).map(|r| v[r * n + i]).collect())
                .collect();
            return Ok((values, vectors));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (F::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::Numeric("Jacobi sweeps did not converge".into()))
}
