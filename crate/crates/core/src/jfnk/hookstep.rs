//! Trust-region ("hookstep") minimization of the Gauss–Newton model inside
//! the Krylov space built by GMRES.

use nalgebra::{DMatrix, DVector};

use super::gmres::GmresOutput;

#[derive(Debug, Clone)]
pub struct HookStep {
    /// Krylov coordinates.
    pub y: Vec<f64>,
    /// `V_k y`.
    pub step: Vec<f64>,
    /// Predicted `‖β e₁ − H y‖`, i.e. the linear model of the new residual norm.
    pub model_residual: f64,
    /// Whether the trust-region constraint is active.
    pub constrained: bool,
}

/// Minimizes `‖β e₁ − H y‖` subject to `‖y‖ ≤ delta`.
///
/// With `H = U Σ Wᵀ` and `p = β Uᵀe₁`, the constrained minimizer is
/// `y(μ) = W diag(σ/(σ² + μ)) p` for the `μ ≥ 0` solving `‖y(μ)‖ = delta`.
pub fn hookstep_coords(h: &DMatrix<f64>, beta: f64, delta: f64) -> (Vec<f64>, bool) {
    let k = h.ncols();
    if k == 0 {
        return (Vec::new(), false);
    }
    let svd = h.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let wt = svd.v_t.as_ref().expect("requested V");
    let sigma = &svd.singular_values;
    let p: Vec<f64> = (0..sigma.len()).map(|i| beta * u[(0, i)]).collect();
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let rank_tol = smax * 1e-14 * k as f64;

    let coords = |mu: f64| -> DVector<f64> {
        let mut z = DVector::zeros(sigma.len());
        for i in 0..sigma.len() {
            let s = sigma[i];
            if s > rank_tol || mu > 0.0 {
                z[i] = s * p[i] / (s * s + mu);
            }
        }
        wt.transpose() * z
    };

    let unconstrained = coords(0.0);
    if unconstrained.norm() <= delta {
        return (unconstrained.iter().cloned().collect(), false);
    }
    // ‖y(μ)‖ ≤ ‖σ∘p‖/μ, so this μ lands inside the trust region
    let sp = sigma
        .iter()
        .zip(&p)
        .map(|(s, q)| (s * q).powi(2))
        .sum::<f64>()
        .sqrt();
    let (mut lo, mut hi) = (0.0_f64, sp / delta);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if coords(mid).norm() > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = coords(hi);
    // rescale the last ulp-level mismatch so ‖y‖ = delta holds to roundoff
    let scale = delta / y.norm();
    (y.iter().map(|v| v * scale).collect(), true)
}

/// Hookstep for a GMRES factorization. An inactive constraint returns the
/// GMRES least-squares step itself.
pub fn hookstep(gm: &GmresOutput, delta: f64) -> HookStep {
    let unconstrained_norm = super::gmres::norm(&gm.y);
    let (y, constrained) = if unconstrained_norm <= delta {
        (gm.y.clone(), false)
    } else {
        hookstep_coords(&gm.hessenberg, gm.beta, delta)
    };
    let hy = &gm.hessenberg * DVector::from_column_slice(&y);
    let mut res = -hy;
    res[0] += gm.beta;
    HookStep {
        step: gm.lift(&y),
        model_residual: res.norm(),
        y,
        constrained,
    }
}
