use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{derive_seed, episode_initial_states, run_episode, EnvContext, TaskKind, TaskSpec};
use crate::ddpg::Agent;
use crate::error::{KseError, Result};
use crate::jfnk::{newton_solve_with, relative_residual, FlowResidual, JfnkConfig};
use crate::store::{Admission, FixedPointStore, Method, Provenance};

pub const TRAINING_LOG_HEADER: &str =
    "episode,best_reward,terminal_distance,alpha,handoffs,jfnk_converged";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchSummary {
    pub episodes: usize,
    pub handoffs: usize,
    pub converged: usize,
    pub admitted: Vec<String>,
    pub duplicates: usize,
    pub best_reward: f64,
}

/// Trains the identification agent for `task.episodes` episodes and hands
/// every environment's best state with `r_max > θ_th` to Newton–Krylov.
/// Converged, verified, new solutions are appended to `store`.
pub fn search_fixed_points(
    ctx: &EnvContext,
    agent: &mut Agent,
    task: &TaskSpec,
    jfnk: &JfnkConfig,
    seed: u64,
    store: &mut FixedPointStore,
    mut log: impl Write,
    parallel: bool,
) -> Result<SearchSummary> {
    task.validate()?;
    if task.kind != TaskKind::Identification || ctx.kind != TaskKind::Identification {
        return Err(KseError::InvalidArgument(
            "search_fixed_points needs the identification task".into(),
        ));
    }
    let residual = FlowResidual::with_integrator(ctx.integ.clone(), jfnk)?;
    let mut summary = SearchSummary {
        best_reward: f64::NEG_INFINITY,
        ..Default::default()
    };
    writeln!(log, "{TRAINING_LOG_HEADER}")?;
    for _ in 0..task.episodes {
        let episode = agent.episode;
        let initial = episode_initial_states(ctx, seed, episode, task.n_parallel)?;
        let results = run_episode(
            ctx,
            agent,
            initial,
            task.episode_steps,
            true,
            true,
            parallel,
        )?;
        let (mut handoffs, mut converged) = (0, 0);
        let mut best = f64::NEG_INFINITY;
        for r in &results {
            best = best.max(r.best_reward);
            if !(r.best_reward > task.reward_threshold) {
                continue;
            }
            handoffs += 1;
            let report = newton_solve_with(&residual, &r.best_state.spec, jfnk)?;
            if !report.converged {
                continue;
            }
            converged += 1;
            let provenance = Provenance {
                method: Method::DrlJfnk,
                seed,
                episode,
                newton_iterations: report.iterations,
            };
            match store.admit(report.final_state, &ctx.integ, provenance) {
                Ok(Admission::New(id)) => summary.admitted.push(id),
                Ok(Admission::Duplicate(_)) => summary.duplicates += 1,
                // converged at 1e-12 but not re-verifiable at 1e-10: not admitted
                Err(KseError::Verification { .. }) | Err(KseError::BlowUp { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        writeln!(
            log,
            "{episode},{best},,{},{handoffs},{converged}",
            agent.noise.alpha
        )?;
        log.flush()?;
        summary.episodes += 1;
        summary.handoffs += handoffs;
        summary.converged += converged;
        summary.best_reward = summary.best_reward.max(best);
        agent.end_episode();
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub raw_initial_residual: f64,
    pub raw_converged: bool,
    pub raw_iterations: usize,
    pub drl_best_reward: f64,
    pub drl_initial_residual: f64,
    pub drl_converged: bool,
    pub drl_iterations: usize,
    /// Relative residual per Newton iteration, from each guess.
    pub raw_history: Vec<f64>,
    pub drl_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub trials: Vec<TrialOutcome>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl ComparisonReport {
    pub fn raw_converged_iterations(&self) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.raw_converged)
            .map(|t| t.raw_iterations as f64)
            .collect()
    }

    pub fn drl_converged_iterations(&self) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.drl_converged)
            .map(|t| t.drl_iterations as f64)
            .collect()
    }

    /// Mean Newton iterations over converged raw-guess runs.
    pub fn raw_mean_iterations(&self) -> f64 {
        mean(&self.raw_converged_iterations())
    }

    pub fn drl_mean_iterations(&self) -> f64 {
        mean(&self.drl_converged_iterations())
    }

    pub fn raw_mean_initial_residual(&self) -> f64 {
        mean(
            &self
                .trials
                .iter()
                .map(|t| t.raw_initial_residual)
                .collect::<Vec<_>>(),
        )
    }

    pub fn drl_mean_initial_residual(&self) -> f64 {
        mean(
            &self
                .trials
                .iter()
                .map(|t| t.drl_initial_residual)
                .collect::<Vec<_>>(),
        )
    }

    /// Two-sided Welch test on the converged iteration counts.
    pub fn iteration_p_value(&self) -> f64 {
        welch_t_test(
            &self.raw_converged_iterations(),
            &self.drl_converged_iterations(),
        )
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "trial,raw_initial_residual,raw_converged,raw_iterations,drl_best_reward,drl_initial_residual,drl_converged,drl_iterations"
        )?;
        for (i, t) in self.trials.iter().enumerate() {
            writeln!(
                w,
                "{i},{:e},{},{},{},{:e},{},{}",
                t.raw_initial_residual,
                t.raw_converged,
                t.raw_iterations,
                t.drl_best_reward,
                t.drl_initial_residual,
                t.drl_converged,
                t.drl_iterations
            )?;
        }
        Ok(())
    }
}

/// Two-sided p-value of Welch's unequal-variance t-test; NaN when either
/// sample has fewer than two values.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 || b.len() < 2 {
        return f64::NAN;
    }
    let var =
        |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (var(a, ma) / a.len() as f64, var(b, mb) / b.len() as f64);
    if sa + sb == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let dof = (sa + sb).powi(2) / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// For each trial, solves from a relaxed random state and from the best
/// state of a policy rollout started at that same state.
pub fn compare_iterations(
    ctx: &EnvContext,
    agent: &mut Agent,
    n_pairs: usize,
    episode_steps: usize,
    jfnk: &JfnkConfig,
    seed: u64,
) -> Result<ComparisonReport> {
    let residual = FlowResidual::with_integrator(ctx.integ.clone(), jfnk)?;
    let mut trials = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX - i as u64, 7));
        let start = ctx.initial_state(&mut rng)?;
        let rel = |s: &crate::spectral::SpectralField| -> Result<f64> {
            let u = s.to_real_vec();
            Ok(relative_residual(&residual.eval_vec(&u)?, &u))
        };
        let raw = newton_solve_with(&residual, &start.spec, jfnk)?;
        let rollout = run_episode(
            ctx,
            agent,
            vec![start.clone()],
            episode_steps,
            true,
            false,
            false,
        )?;
        let best = &rollout[0];
        let drl = newton_solve_with(&residual, &best.best_state.spec, jfnk)?;
        trials.push(TrialOutcome {
            raw_initial_residual: rel(&start.spec)?,
            raw_converged: raw.converged,
            raw_iterations: raw.iterations,
            drl_best_reward: best.best_reward,
            drl_initial_residual: rel(&best.best_state.spec)?,
            drl_converged: drl.converged,
            drl_iterations: drl.iterations,
            raw_history: raw.residual_history,
            drl_history: drl.residual_history,
        });
    }
    Ok(ComparisonReport { trials })
}
