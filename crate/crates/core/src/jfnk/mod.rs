//! Jacobian-free Newton–Krylov search for fixed points of the flow map,
//! `G(u) = Φ^T(u) − u = 0`, globalized by a hookstep trust region.
//!
//! States are handled as real vectors of interleaved `(re, im)` spectral
//! coefficients; the real inner product on that vector space is what keeps
//! Krylov vectors Hermitian.

mod gmres;
mod hookstep;

pub use gmres::{gmres_arnoldi, GmresOutput};
pub use hookstep::{hookstep, hookstep_coords, HookStep};

use crate::dynamics::{Integrator, SimState};
use crate::error::{KseError, Result};
use crate::spectral::{GridSpec, SpectralField};
use gmres::norm;

/// Floor on `‖u‖` in the relative residual, so that the zero equilibrium
/// still has a well-defined (and attainable) convergence criterion.
pub const NORM_FLOOR: f64 = 1e-30;

const SHRINK: f64 = 0.5;
const GROW: f64 = 2.0;
const RATIO_ACCEPT: f64 = 0.1;
const RATIO_GROW: f64 = 0.75;
/// Newton iterations with under 1% improvement before giving up.
const PLATEAU_PATIENCE: usize = 8;
const PLATEAU_IMPROVEMENT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct JfnkConfig {
    pub m_gmres: usize,
    pub n_its: usize,
    pub eps_err: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Model-gradient threshold for stagnation, `‖Jᵀ G‖/‖G‖` in the Krylov space.
    pub g_tol: f64,
    /// Relative tolerance at which the inner GMRES solve stops.
    pub gmres_tol: f64,
    pub eps_j: f64,
    pub n_dts: usize,
    pub dt: f64,
}

impl Default for JfnkConfig {
    fn default() -> Self {
        Self {
            m_gmres: 100,
            n_its: 100,
            eps_err: 1e-12,
            delta_min: 1e-20,
            delta_max: 1e20,
            g_tol: 1e-3,
            gmres_tol: 1e-3,
            eps_j: 1e-6,
            n_dts: 20,
            dt: 0.05,
        }
    }
}

impl JfnkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(KseError::Config(m.to_string()));
        if self.m_gmres == 0 || self.n_dts == 0 {
            return bad("m_gmres and n_dts must be positive");
        }
        if !(self.delta_min > 0.0 && self.delta_min < self.delta_max) {
            return bad("need 0 < delta_min < delta_max");
        }
        if !(self.eps_err > 0.0
            && self.eps_j > 0.0
            && self.dt > 0.0
            && self.gmres_tol > 0.0
            && self.g_tol > 0.0)
        {
            return bad("tolerances and dt must be positive");
        }
        Ok(())
    }

    /// Residual horizon `T = n_dts · dt`.
    pub fn horizon(&self) -> f64 {
        self.n_dts as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    None,
    Stagnation,
    MaxIterations,
    TrustRegionCollapse,
    BlowUp,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::None => "none",
            FailureReason::Stagnation => "stagnation",
            FailureReason::MaxIterations => "max_iterations",
            FailureReason::TrustRegionCollapse => "trust_region_collapse",
            FailureReason::BlowUp => "blow_up",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub converged: bool,
    /// Newton iterations performed (accepted steps).
    pub iterations: usize,
    /// Relative residual of the guess, then after every accepted step.
    pub residual_history: Vec<f64>,
    pub final_state: SpectralField,
    pub failure_reason: FailureReason,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        *self
            .residual_history
            .last()
            .expect("history is never empty")
    }

    /// Text log: one `key = value` summary block, then per-iteration residuals.
    pub fn write_log(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "converged = {}", self.converged)?;
        writeln!(w, "iterations = {}", self.iterations)?;
        writeln!(w, "failure_reason = {}", self.failure_reason.as_str())?;
        writeln!(w, "final_relative_residual = {:.6e}", self.final_residual())?;
        for (i, r) in self.residual_history.iter().enumerate() {
            writeln!(w, "iteration {i}: relative_residual = {r:.6e}")?;
        }
        Ok(())
    }

    /// CSV `iteration,log10_relative_residual`.
    pub fn write_residual_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "iteration,log10_relative_residual")?;
        for (i, r) in self.residual_history.iter().enumerate() {
            writeln!(w, "{i},{}", r.log10())?;
        }
        Ok(())
    }
}

pub fn relative_residual(g: &[f64], u: &[f64]) -> f64 {
    norm(g) / norm(u).max(NORM_FLOOR)
}

/// Evaluates fixed-point residuals for one grid and horizon.
#[derive(Debug, Clone)]
pub struct FlowResidual {
    integ: Integrator,
    steps: usize,
    grid: GridSpec,
}

impl FlowResidual {
    pub fn new(grid: GridSpec, cfg: &JfnkConfig) -> Result<Self> {
        cfg.validate()?;
        let integ = Integrator::new(grid, cfg.dt)?;
        Self::with_integrator(integ, cfg)
    }

    pub fn with_integrator(integ: Integrator, cfg: &JfnkConfig) -> Result<Self> {
        cfg.validate()?;
        if (integ.dt() - cfg.dt).abs() > 1e-15 {
            return Err(KseError::Config(format!(
                "integrator dt {} differs from config dt {}",
                integ.dt(),
                cfg.dt
            )));
        }
        let grid = integ.grid();
        Ok(Self {
            integ,
            steps: cfg.n_dts,
            grid,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integ
    }

    /// `G(u) = Φ^T(u) − u` on interleaved vectors.
    pub fn eval_vec(&self, u: &[f64]) -> Result<Vec<f64>> {
        let spec = SpectralField::from_real_vec(self.grid, u)?;
        let out = self.integ.advance(&SimState::new(spec), self.steps)?;
        let mut g = out.spec.to_real_vec();
        g.iter_mut().zip(u).for_each(|(a, b)| *a -= b);
        Ok(g)
    }

    pub fn eval(&self, u: &SpectralField) -> Result<SpectralField> {
        SpectralField::from_real_vec(self.grid, &self.eval_vec(&u.to_real_vec())?)
    }

    /// Forward-difference `J(u) v` given `g_u = G(u)`.
    pub fn jvp_vec(&self, u: &[f64], v: &[f64], g_u: &[f64], eps_j: f64) -> Result<Vec<f64>> {
        let vn = norm(v);
        if !(vn > 0.0) {
            return Err(KseError::InvalidArgument(
                "jvp direction must be nonzero".into(),
            ));
        }
        let un = norm(u);
        let h = if un > 0.0 { eps_j * un } else { eps_j };
        let shifted: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + h * b / vn).collect();
        let mut g = self.eval_vec(&shifted)?;
        let scale = vn / h;
        g.iter_mut()
            .zip(g_u)
            .for_each(|(a, b)| *a = (*a - b) * scale);
        Ok(g)
    }
}

/// `Φ^T(u) − u` with the horizon of `cfg`.
pub fn residual(u: &SpectralField, cfg: &JfnkConfig) -> Result<SpectralField> {
    FlowResidual::new(u.grid(), cfg)?.eval(u)
}

pub fn jvp(
    u: &SpectralField,
    v: &SpectralField,
    g_u: &SpectralField,
    cfg: &JfnkConfig,
) -> Result<SpectralField> {
    let f = FlowResidual::new(u.grid(), cfg)?;
    let out = f.jvp_vec(
        &u.to_real_vec(),
        &v.to_real_vec(),
        &g_u.to_real_vec(),
        cfg.eps_j,
    )?;
    SpectralField::from_real_vec(u.grid(), &out)
}

pub fn newton_solve(guess: &SpectralField, cfg: &JfnkConfig) -> Result<NewtonReport> {
    newton_solve_with(&FlowResidual::new(guess.grid(), cfg)?, guess, cfg)
}

/// Hookstep Newton iteration. Numerical trouble is reported through
/// [`FailureReason`]; errors are reserved for invalid input.
pub fn newton_solve_with(
    res: &FlowResidual,
    guess: &SpectralField,
    cfg: &JfnkConfig,
) -> Result<NewtonReport> {
    cfg.validate()?;
    if guess.grid() != res.grid() {
        return Err(KseError::GridMismatch(
            "guess grid differs from residual grid".into(),
        ));
    }
    if !guess.is_finite() {
        return Err(KseError::InvalidArgument(
            "guess contains non-finite coefficients".into(),
        ));
    }
    let mut u = guess.to_real_vec();
    let finish = |u: &[f64],
                  history: Vec<f64>,
                  iterations: usize,
                  reason: FailureReason|
     -> Result<NewtonReport> {
        Ok(NewtonReport {
            converged: reason == FailureReason::None,
            iterations,
            residual_history: history,
            final_state: SpectralField::from_real_vec(res.grid(), u)?,
            failure_reason: reason,
        })
    };
    let mut g = match res.eval_vec(&u) {
        Ok(g) => g,
        Err(KseError::BlowUp { .. }) => {
            return finish(&u, vec![f64::INFINITY], 0, FailureReason::BlowUp)
        }
        Err(e) => return Err(e),
    };
    let mut r = relative_residual(&g, &u);
    let mut history = vec![r];
    if r <= cfg.eps_err {
        return finish(&u, history, 0, FailureReason::None);
    }
    let mut delta: Option<f64> = None;
    let mut slow = 0;

    for it in 1..=cfg.n_its {
        let g_norm = norm(&g);
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let gm = {
            let (u_ref, g_ref) = (&u, &g);
            gmres_arnoldi(
                |v| res.jvp_vec(u_ref, v, g_ref, cfg.eps_j),
                &rhs,
                cfg.m_gmres,
                cfg.gmres_tol,
            )
        };
        let gm = match gm {
            Ok(gm) => gm,
            Err(KseError::BlowUp { .. }) => {
                return finish(&u, history, it - 1, FailureReason::BlowUp)
            }
            Err(e) => return Err(e),
        };
        // model gradient Hᵀ(β e₁)/β = first row of H
        let model_gradient = gm.hessenberg.row(0).norm();
        let mut radius = delta
            .unwrap_or_else(|| norm(&gm.y).clamp(cfg.delta_min, cfg.delta_max))
            .clamp(cfg.delta_min, cfg.delta_max);

        let accepted = loop {
            let hs = hookstep(&gm, radius);
            let trial: Vec<f64> = u.iter().zip(&hs.step).map(|(a, b)| a + b).collect();
            let outcome = res.eval_vec(&trial);
            let good = match outcome {
                Ok(g_try) => {
                    let r_try = relative_residual(&g_try, &trial);
                    let predicted = g_norm - hs.model_residual;
                    let actual = g_norm - norm(&g_try);
                    let ratio = if predicted > 0.0 {
                        actual / predicted
                    } else {
                        -1.0
                    };
                    if ratio >= RATIO_ACCEPT && r_try.is_finite() {
                        if ratio > RATIO_GROW && hs.constrained {
                            radius = (radius * GROW).min(cfg.delta_max);
                        }
                        Some((trial, g_try, r_try))
                    } else {
                        None
                    }
                }
                Err(KseError::BlowUp { .. }) => None,
                Err(e) => return Err(e),
            };
            if good.is_some() {
                break good;
            }
            radius *= SHRINK;
            if radius < cfg.delta_min {
                break None;
            }
        };
        let Some((u_new, g_new, r_new)) = accepted else {
            return finish(&u, history, it - 1, FailureReason::TrustRegionCollapse);
        };
        delta = Some(radius);
        let improvement = (g_norm - norm(&g_new)) / g_norm;
        u = u_new;
        g = g_new;
        r = r_new;
        history.push(r);
        if r <= cfg.eps_err {
            return finish(&u, history, it, FailureReason::None);
        }
        if improvement < PLATEAU_IMPROVEMENT {
            slow += 1;
            if model_gradient < cfg.g_tol || slow >= PLATEAU_PATIENCE {
                return finish(&u, history, it, FailureReason::Stagnation);
            }
        } else {
            slow = 0;
        }
    }
    let n = history.len() - 1;
    finish(&u, history, n, FailureReason::MaxIterations)
}
