//! Single-cycle GMRES with modified Gram–Schmidt Arnoldi.

use nalgebra::DMatrix;

use crate::error::{KseError, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Arnoldi factorization `A V_k = V_{k+1} H` together with the GMRES
/// least-squares solution of `A x = b` in `span(V_k)`.
#[derive(Debug, Clone)]
pub struct GmresOutput {
    /// `(k+1) × k` upper Hessenberg matrix.
    pub hessenberg: DMatrix<f64>,
    /// Orthonormal vectors; `basis[0] = b/‖b‖`. Holds `k+1` vectors, or `k`
    /// after a happy breakdown.
    pub basis: Vec<Vec<f64>>,
    /// `‖b‖`.
    pub beta: f64,
    /// Krylov coordinates of the least-squares solution.
    pub y: Vec<f64>,
    /// `V_k y`.
    pub solution: Vec<f64>,
    /// `‖b − A x‖/‖b‖` according to the Givens recurrence.
    pub relative_residual: f64,
    pub iterations: usize,
}

impl GmresOutput {
    /// Lifts Krylov coordinates to the full space.
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.basis[0].len()];
        for (v, &c) in self.basis.iter().zip(y) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
        out
    }
}

/// Runs up to `max_iter` Arnoldi steps, stopping once the relative residual
/// falls to `tol`.
pub fn gmres_arnoldi<F>(
    mut matvec: F,
    rhs: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<GmresOutput>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let beta = norm(rhs);
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(KseError::InvalidArgument(
            "GMRES right-hand side must be finite and nonzero".into(),
        ));
    }
    if max_iter == 0 {
        return Err(KseError::InvalidArgument(
            "GMRES needs at least one iteration".into(),
        ));
    }
    let mut basis = vec![rhs.iter().map(|x| x / beta).collect::<Vec<_>>()];
    let mut h = DMatrix::<f64>::zeros(max_iter + 1, max_iter);
    // Givens rotations applied to a copy of H, and the rotated β e₁
    let mut r = DMatrix::<f64>::zeros(max_iter + 1, max_iter);
    let (mut cs, mut sn) = (vec![0.0; max_iter], vec![0.0; max_iter]);
    let mut g = vec![0.0; max_iter + 1];
    g[0] = beta;
    let mut k = 0;
    let mut breakdown = false;

    while k < max_iter {
        let mut w = matvec(&basis[k])?;
        if w.len() != rhs.len() {
            return Err(KseError::Shape {
                expected: rhs.len(),
                got: w.len(),
            });
        }
        let w_norm0 = norm(&w);
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(&w, v);
            h[(i, k)] = hij;
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= hij * b);
        }
        // one reorthogonalization pass keeps long Krylov bases orthonormal
        for (i, v) in basis.iter().enumerate() {
            let c = dot(&w, v);
            h[(i, k)] += c;
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
        }
        let wn = norm(&w);
        h[(k + 1, k)] = wn;

        for i in 0..=k + 1 {
            r[(i, k)] = h[(i, k)];
        }
        for i in 0..k {
            let (a, b) = (r[(i, k)], r[(i + 1, k)]);
            r[(i, k)] = cs[i] * a + sn[i] * b;
            r[(i + 1, k)] = -sn[i] * a + cs[i] * b;
        }
        let (a, b) = (r[(k, k)], r[(k + 1, k)]);
        let rho = a.hypot(b);
        (cs[k], sn[k]) = if rho == 0.0 {
            (1.0, 0.0)
        } else {
            (a / rho, b / rho)
        };
        r[(k, k)] = rho;
        r[(k + 1, k)] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] *= cs[k];
        k += 1;

        if !wn.is_finite() {
            return Err(KseError::InvalidArgument(
                "non-finite vector in Arnoldi process".into(),
            ));
        }
        if wn <= 1e-14 * w_norm0.max(f64::MIN_POSITIVE) {
            breakdown = true;
            break;
        }
        basis.push(w.iter().map(|x| x / wn).collect());
        if g[k].abs() <= tol * beta {
            break;
        }
    }

    // back substitution on the rotated triangle
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= r[(i, j)] * y[j];
        }
        y[i] = if r[(i, i)] != 0.0 { s / r[(i, i)] } else { 0.0 };
    }
    let hessenberg = h.view((0, 0), (k + 1, k)).into_owned();
    let relative_residual = if breakdown { 0.0 } else { g[k].abs() / beta };
    let mut out = GmresOutput {
        hessenberg,
        basis,
        beta,
        y,
        solution: Vec::new(),
        relative_residual,
        iterations: k,
    };
    out.solution = out.lift(&out.y);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solves_in_one_step() {
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let out = gmres_arnoldi(|v| Ok(v.to_vec()), &b, 10, 1e-12).unwrap();
        assert_eq!(out.iterations, 1);
        for (x, y) in out.solution.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_zero_rhs() {
        assert!(gmres_arnoldi(|v| Ok(v.to_vec()), &[0.0; 3], 3, 1e-8).is_err());
    }
}
