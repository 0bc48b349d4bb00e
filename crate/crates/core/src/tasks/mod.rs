//! The two control tasks: searching for states with small one-step drift
//! (handed to Newton–Krylov) and steering the flow to a known equilibrium.

mod identification;
mod navigation;

pub use identification::{
    compare_iterations, search_fixed_points, welch_t_test, ComparisonReport, SearchSummary,
    TrialOutcome, TRAINING_LOG_HEADER,
};
pub use navigation::{
    evaluate_policy, hyperparameter_sweep, navigate, write_sweep, EvalStep, EvalTrace,
    NavigationSummary, SweepCell, SweepSpec, EVAL_TRACE_HEADER, SWEEP_HEADER,
};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actuation::{observe, Action, Actuators, Observation, SensorLayout};
use crate::ddpg::{Agent, Transition};
use crate::dynamics::{Integrator, SimState};
use crate::error::{KseError, Result};
use crate::spectral::{spectral_distance, PhysicalField, SpectralField};

/// Reward assigned to the step on which a forced run blows up.
pub const BLOW_UP_PENALTY: f64 = -1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Identification,
    Navigation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub goal: Option<SpectralField>,
    pub episode_steps: usize,
    pub reward_threshold: f64,
    pub n_parallel: usize,
    pub episodes: usize,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.goal) {
            (TaskKind::Navigation, None) => {
                return Err(KseError::InvalidArgument("navigation needs a goal".into()))
            }
            (TaskKind::Identification, Some(_)) => {
                return Err(KseError::InvalidArgument(
                    "identification takes no goal".into(),
                ))
            }
            _ => {}
        }
        if self.episode_steps == 0 || self.n_parallel == 0 {
            return Err(KseError::InvalidArgument(
                "episode_steps and n_parallel must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Seed for a sub-stream labelled by `(a, b)`.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z =
        base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform `[0, 1)` noise, mean removed, evolved `relax_steps` unforced steps.
/// The returned state's clock is reset to zero.
pub fn random_initial_state(
    integ: &Integrator,
    relax_steps: usize,
    rng: &mut impl Rng,
) -> Result<SimState> {
    let grid = integ.grid();
    let values = (0..grid.len()).map(|_| rng.random::<f64>()).collect();
    let mut spec = integ
        .fft()
        .dft2(&PhysicalField::from_values(grid, values)?)?;
    spec.zero_mean();
    let mut state = integ.advance(&SimState::new(spec), relax_steps)?;
    state.time = 0.0;
    Ok(state)
}

/// `−‖Φ^dt(u) − u‖` in coefficient space; does not touch `u`.
pub fn fixedpoint_reward(integ: &Integrator, state: &SimState) -> Result<f64> {
    let probe = integ.step(state, None)?;
    Ok(-spectral_distance(&probe.spec, &state.spec)?)
}

/// `−‖u − u_g‖` over physical grid values.
pub fn navigation_reward(u: &PhysicalField, goal: &PhysicalField) -> f64 {
    -u.values()
        .iter()
        .zip(goal.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Everything the environments share: dynamics, actuators, sensors, task.
#[derive(Debug, Clone)]
pub struct EnvContext {
    pub integ: Integrator,
    pub actuators: Arc<Actuators>,
    pub sensors: SensorLayout,
    pub kind: TaskKind,
    goal: Option<PhysicalField>,
    pub relax_steps: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: SimState,
    pub obs: Observation,
    pub reward: f64,
    pub blew_up: bool,
}

impl EnvContext {
    pub fn new(
        integ: Integrator,
        actuators: Actuators,
        sensors: SensorLayout,
        kind: TaskKind,
        goal: Option<&SpectralField>,
        relax_steps: usize,
    ) -> Result<Self> {
        let goal = match (kind, goal) {
            (TaskKind::Navigation, Some(g)) => {
                if g.grid() != integ.grid() {
                    return Err(KseError::GridMismatch(
                        "goal grid differs from the environment grid".into(),
                    ));
                }
                Some(integ.to_physical(g))
            }
            (TaskKind::Navigation, None) => {
                return Err(KseError::InvalidArgument("navigation needs a goal".into()))
            }
            (TaskKind::Identification, _) => None,
        };
        Ok(Self {
            integ,
            actuators: Arc::new(actuators),
            sensors,
            kind,
            goal,
            relax_steps,
        })
    }

    pub fn goal_physical(&self) -> Option<&PhysicalField> {
        self.goal.as_ref()
    }

    pub fn obs_dim(&self) -> usize {
        self.sensors.count()
    }

    pub fn act_dim(&self) -> usize {
        self.actuators.layout().count()
    }

    pub fn observe(&self, state: &SimState) -> Observation {
        observe(&self.integ.to_physical(&state.spec), &self.sensors)
    }

    pub fn reward(&self, state: &SimState) -> Result<f64> {
        match &self.goal {
            Some(g) => Ok(navigation_reward(&self.integ.to_physical(&state.spec), g)),
            None => fixedpoint_reward(&self.integ, state),
        }
    }

    pub fn initial_state(&self, rng: &mut impl Rng) -> Result<SimState> {
        random_initial_state(&self.integ, self.relax_steps, rng)
    }

    /// One forced `dt` step. A blow-up keeps the old state and reports the
    /// penalty instead of an error.
    pub fn step(&self, state: &SimState, action: &[f64]) -> Result<StepOutcome> {
        let forcing = self.actuators.forcing_field(action)?;
        let next = match self.integ.step(state, Some(&forcing)) {
            Ok(s) => s,
            Err(KseError::BlowUp { .. }) => return Ok(self.blown(state)),
            Err(e) => return Err(e),
        };
        let reward = match self.reward(&next) {
            Ok(r) => r,
            Err(KseError::BlowUp { .. }) => return Ok(self.blown(&next)),
            Err(e) => return Err(e),
        };
        Ok(StepOutcome {
            obs: self.observe(&next),
            next,
            reward,
            blew_up: false,
        })
    }

    fn blown(&self, state: &SimState) -> StepOutcome {
        StepOutcome {
            next: state.clone(),
            obs: self.observe(state),
            reward: BLOW_UP_PENALTY,
            blew_up: true,
        }
    }
}

/// Per-environment summary of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub rewards: Vec<f64>,
    pub best_reward: f64,
    /// State reached on the best step.
    pub best_state: SimState,
    pub final_state: SimState,
    pub blew_up: bool,
}

impl EpisodeResult {
    /// Distance to the goal at the end (navigation rewards are −distance).
    pub fn terminal_distance(&self) -> f64 {
        -self.rewards.last().copied().unwrap_or(f64::NAN)
    }
}

struct EnvSlot {
    state: SimState,
    obs: Observation,
    result: EpisodeResult,
    done: bool,
}

fn step_all(
    ctx: &EnvContext,
    jobs: Vec<(SimState, Action)>,
    parallel: bool,
) -> Vec<Result<StepOutcome>> {
    #[cfg(feature = "parallel")]
    if parallel && jobs.len() > 1 {
        use rayon::prelude::*;
        return jobs
            .into_par_iter()
            .map(|(s, a)| ctx.step(&s, &a))
            .collect();
    }
    let _ = parallel;
    jobs.into_iter().map(|(s, a)| ctx.step(&s, &a)).collect()
}

/// Runs `initial.len()` environments in lockstep for `steps` steps. Actions
/// are drawn in environment order from the agent's RNG, so results do not
/// depend on how the steps are scheduled across threads. With `learn`, every
/// transition enters the replay buffer and the agent performs one update per
/// global step.
pub fn run_episode(
    ctx: &EnvContext,
    agent: &mut Agent,
    initial: Vec<SimState>,
    steps: usize,
    explore: bool,
    learn: bool,
    parallel: bool,
) -> Result<Vec<EpisodeResult>> {
    let mut slots: Vec<EnvSlot> = initial
        .into_iter()
        .map(|state| EnvSlot {
            obs: ctx.observe(&state),
            result: EpisodeResult {
                rewards: Vec::with_capacity(steps),
                best_reward: f64::NEG_INFINITY,
                best_state: state.clone(),
                final_state: state.clone(),
                blew_up: false,
            },
            state,
            done: false,
        })
        .collect();
    for _ in 0..steps {
        let mut jobs = Vec::new();
        let mut who = Vec::new();
        for (k, slot) in slots.iter().enumerate() {
            if slot.done {
                continue;
            }
            let action = if explore {
                agent.act(&slot.obs)?
            } else {
                agent.policy(&slot.obs)?
            };
            jobs.push((slot.state.clone(), action));
            who.push(k);
        }
        if jobs.is_empty() {
            break;
        }
        let actions: Vec<Action> = jobs.iter().map(|(_, a)| a.clone()).collect();
        let outcomes = step_all(ctx, jobs, parallel);
        for ((k, outcome), action) in who.into_iter().zip(outcomes).zip(actions) {
            let out = outcome?;
            let slot = &mut slots[k];
            if learn {
                agent.remember(Transition {
                    obs: std::mem::take(&mut slot.obs),
                    action,
                    reward: out.reward,
                    next_obs: out.obs.clone(),
                    terminal: out.blew_up,
                });
            }
            let r = &mut slot.result;
            r.rewards.push(out.reward);
            if out.reward > r.best_reward {
                r.best_reward = out.reward;
                r.best_state = out.next.clone();
            }
            slot.obs = out.obs;
            slot.state = out.next;
            if out.blew_up {
                slot.done = true;
                r.blew_up = true;
            }
        }
        if learn {
            agent.update()?;
        }
    }
    Ok(slots
        .into_iter()
        .map(|s| {
            let mut r = s.result;
            r.final_state = s.state;
            r
        })
        .collect())
}

/// Fresh relaxed initial states for `count` environments of one episode.
pub fn episode_initial_states(
    ctx: &EnvContext,
    seed: u64,
    episode: u64,
    count: usize,
) -> Result<Vec<SimState>> {
    (0..count)
        .map(|k| {
            ctx.initial_state(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                seed, episode, k as u64,
            )))
        })
        .collect()
}
