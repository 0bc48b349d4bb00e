use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, episode_initial_states, run_episode, EnvContext, TaskKind, TaskSpec};
use crate::actuation::{ActuatorLayout, Actuators, SensorLayout};
use crate::ddpg::{Agent, DdpgHyper, NoiseSchedule};
use crate::dynamics::{Integrator, SimState};
use crate::error::{KseError, Result};
use crate::spectral::SpectralField;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NavigationSummary {
    /// Mean end-of-episode distance to the goal, one entry per episode.
    pub end_distances: Vec<f64>,
    pub blow_ups: usize,
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

impl NavigationSummary {
    /// Medians of the first and last `window` end distances.
    pub fn head_tail_medians(&self, window: usize) -> (f64, f64) {
        let d = &self.end_distances;
        let w = window.min(d.len());
        (median(&d[..w]), median(&d[d.len() - w..]))
    }
}

/// Trains the navigation agent; each episode starts every environment from
/// a fresh relaxed random state.
pub fn navigate(
    ctx: &EnvContext,
    agent: &mut Agent,
    task: &TaskSpec,
    seed: u64,
    mut log: impl Write,
    parallel: bool,
) -> Result<NavigationSummary> {
    task.validate()?;
    if task.kind != TaskKind::Navigation || ctx.kind != TaskKind::Navigation {
        return Err(KseError::InvalidArgument(
            "navigate needs the navigation task".into(),
        ));
    }
    let mut summary = NavigationSummary::default();
    writeln!(log, "{}", super::identification::TRAINING_LOG_HEADER)?;
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
        let best = results
            .iter()
            .map(|r| r.best_reward)
            .fold(f64::NEG_INFINITY, f64::max);
        let end = results.iter().map(|r| r.terminal_distance()).sum::<f64>() / results.len() as f64;
        summary.blow_ups += results.iter().filter(|r| r.blew_up).count();
        summary.end_distances.push(end);
        writeln!(log, "{episode},{best},{end},{},0,0", agent.noise.alpha)?;
        log.flush()?;
        agent.end_episode();
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStep {
    pub time: f64,
    pub distance: f64,
    /// Largest |a_i| of the action applied on the step that ended here.
    pub action_max_norm: f64,
}

pub const EVAL_TRACE_HEADER: &str = "time,distance,action_max_norm";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace {
    pub initial_distance: f64,
    /// One row per step, starting at `t = dt`; the CSV adds a `t = 0` row.
    pub steps: Vec<EvalStep>,
}

impl EvalTrace {
    /// First time the distance drops below `fraction` of the initial one
    /// and stays there to the end of the trace.
    pub fn settling_time(&self, fraction: f64) -> Option<f64> {
        let bound = fraction * self.initial_distance;
        let tail = self
            .steps
            .iter()
            .rev()
            .take_while(|s| s.distance < bound)
            .count();
        (tail > 0).then(|| self.steps[self.steps.len() - tail].time)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{EVAL_TRACE_HEADER}")?;
        writeln!(w, "0,{},0", self.initial_distance)?;
        for s in &self.steps {
            writeln!(w, "{},{},{}", s.time, s.distance, s.action_max_norm)?;
        }
        Ok(())
    }
}

/// Deterministic rollout (no exploration noise, no learning).
pub fn evaluate_policy(
    ctx: &EnvContext,
    agent: &Agent,
    start: &SimState,
    steps: usize,
) -> Result<EvalTrace> {
    let goal = ctx
        .goal_physical()
        .ok_or_else(|| KseError::InvalidArgument("evaluation needs a goal".into()))?;
    let distance = |s: &SimState| -super::navigation_reward(&ctx.integ.to_physical(&s.spec), goal);
    let mut state = start.clone();
    state.time = 0.0;
    let initial_distance = distance(&state);
    let mut trace = Vec::with_capacity(steps);
    let dt = ctx.integ.dt();
    for k in 1..=steps {
        let action = agent.policy(&ctx.observe(&state))?;
        let out = ctx.step(&state, &action)?;
        if out.blew_up {
            return Err(KseError::BlowUp {
                time: k as f64 * dt,
                max_abs: f64::INFINITY,
            });
        }
        state = out.next;
        trace.push(EvalStep {
            time: k as f64 * dt,
            distance: -out.reward,
            action_max_norm: action.iter().fold(0.0, |m, a| m.max(a.abs())),
        });
    }
    Ok(EvalTrace {
        initial_distance,
        steps: trace,
    })
}

/// Shared settings of every sweep cell.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub m_values: Vec<usize>,
    pub sigma_values: Vec<f64>,
    pub a_max: f64,
    pub episodes: usize,
    pub episode_steps: usize,
    pub hyper: DdpgHyper,
    pub noise: NoiseSchedule,
    pub relax_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub m: usize,
    pub sigma: f64,
    /// Mean over episodes of the per-episode sum of rewards.
    pub objective: f64,
    pub diverged: bool,
}

pub const SWEEP_HEADER: &str = "m,sigma,objective,diverged";

/// Trains a fresh navigation agent in every `(m, σ)` cell from the same
/// initial state, agent seed and goal; the table comes out in row-major
/// `m`-then-`σ` order.
pub fn hyperparameter_sweep(
    integ: &Integrator,
    sensors: &SensorLayout,
    goal: &SpectralField,
    spec: &SweepSpec,
) -> Result<Vec<SweepCell>> {
    if spec.episodes == 0 || spec.episode_steps == 0 {
        return Err(KseError::InvalidArgument(
            "sweep needs episodes and steps".into(),
        ));
    }
    let start = super::random_initial_state(
        integ,
        spec.relax_steps,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x5eed, 0)),
    )?;
    let mut cells = Vec::new();
    for &m in &spec.m_values {
        for &sigma in &spec.sigma_values {
            let layout = ActuatorLayout::new(m, sigma, spec.a_max, integ.grid())?;
            let actuators = Actuators::new(layout, integ.grid());
            let ctx = EnvContext::new(
                integ.clone(),
                actuators,
                sensors.clone(),
                TaskKind::Navigation,
                Some(goal),
                spec.relax_steps,
            )?;
            let mut agent = Agent::new(
                ctx.obs_dim(),
                ctx.act_dim(),
                spec.hyper.clone(),
                spec.noise.clone(),
                spec.seed,
            )?;
            let mut total = 0.0;
            let mut diverged = false;
            for _ in 0..spec.episodes {
                let r = run_episode(
                    &ctx,
                    &mut agent,
                    vec![start.clone()],
                    spec.episode_steps,
                    true,
                    true,
                    false,
                )?;
                total += r[0].rewards.iter().sum::<f64>();
                diverged |= r[0].blew_up;
                agent.end_episode();
            }
            diverged |= !(agent.actor.is_finite() && agent.critic.is_finite());
            cells.push(SweepCell {
                m,
                sigma,
                objective: total / spec.episodes as f64,
                diverged,
            });
        }
    }
    Ok(cells)
}

pub fn write_sweep(cells: &[SweepCell], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for c in cells {
        writeln!(w, "{},{},{},{}", c.m, c.sigma, c.objective, c.diverged)?;
    }
    Ok(())
}
