//! Damped Newton minimisation of smooth convex functions of a few variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const TOL_NEWTON: f64 = 1e-10;
pub const MAX_ITER: usize = 100;

/// Value, gradient and row-major Hessian at a point; `None` marks an
/// infeasible point.
pub(crate) type Eval = Option<(f64, Vec<f64>, Vec<f64>)>;

/// Minimise from `x0`. Stops when the gradient norm is below `tol`.
pub(crate) fn minimize(
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
    mut f: impl FnMut(&[f64]) -> Result<Eval>,
) -> Result<(Vec<f64>, f64)> {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g, mut h) = f(&x)?.ok_or_else(|| Error::InvalidArgument("Newton start is infeasible".into()))?;
    for iter in 0..max_iter {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn <= tol {
            return Ok((x, fx));
        }
        let step = newton_step(n, &g, &h);
        let slope: f64 = step.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Some((ft, gt, ht)) = f(&trial)? {
                if ft.is_finite() && ft <= fx + 1e-4 * t * slope.min(0.0) + 1e-15 * fx.abs().max(1.0) {
                    x = trial;
                    fx = ft;
                    g = gt;
                    h = ht;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // No decrease possible at float resolution; accept if already tiny.
            if gn <= tol * 1e3 {
                return Ok((x, fx));
            }
            return Err(Error::NoConvergence { iterations: iter, residual: gn });
        }
    }
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gn <= tol {
        Ok((x, fx))
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: gn })
    }
}

fn newton_step(n: usize, g: &[f64], h: &[f64]) -> Vec<f64> {
    let gv = DVector::from_column_slice(g);
    let mut ridge = 0.0;
    let scale = (0..n).map(|i| h[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    for _ in 0..30 {
        let mut hm = DMatrix::from_row_slice(n, n, h);
        for i in 0..n {
            hm[(i, i)] += ridge;
        }
        if let Some(ch) = hm.cholesky() {
            let s = ch.solve(&gv);
            if s.iter().all(|v| v.is_finite()) {
                return s.iter().map(|v| -v).collect();
            }
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 10.0 };
    }
    g.iter().map(|v| -v / scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_a_convex_quartic() {
        let (x, fx) = minimize(vec![3.0, -2.0], 1e-12, 100, |x| {
            let (a, b) = (x[0] - 1.0, x[1] + 0.5);
            Ok(Some((
                a.powi(4) + a * a + b * b,
                vec![4.0 * a.powi(3) + 2.0 * a, 2.0 * b],
                vec![12.0 * a * a + 2.0, 0.0, 0.0, 2.0],
            )))
        })
        .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] + 0.5).abs() < 1e-10 && fx.abs() < 1e-18);
    }
}
