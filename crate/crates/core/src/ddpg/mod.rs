//! Deep deterministic policy gradient: actor/critic networks, losses,
//! replay, exploration noise and checkpointing.

mod adam;
mod agent;
mod mlp;
mod noise;
mod replay;

pub use adam::Adam;
pub use agent::{Agent, DdpgHyper, UpdateStats};
pub use mlp::{Activation, Cache, Grads, Layer, Mlp};
pub use noise::NoiseSchedule;
pub use replay::{ReplayBuffer, Transition};

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;

use crate::error::{KseError, Result};

pub const ACTOR_HIDDEN: [usize; 2] = [128, 64];
pub const CRITIC_HIDDEN: [usize; 2] = [256, 128];

/// `obs → hidden… → act`, swish hidden layers, `a_max·tanh` output.
pub fn actor_net(
    obs_dim: usize,
    hidden: &[usize],
    act_dim: usize,
    a_max: f64,
    rng: &mut impl Rng,
) -> Result<Mlp> {
    let sizes: Vec<usize> = std::iter::once(obs_dim)
        .chain(hidden.iter().copied())
        .chain([act_dim])
        .collect();
    let mut acts = vec![Activation::Swish; hidden.len()];
    acts.push(Activation::TanhScaled(a_max));
    Mlp::new(&sizes, &acts, rng)
}

/// `[obs, act] → hidden… → 1`, swish hidden layers, linear output.
pub fn critic_net(
    obs_dim: usize,
    act_dim: usize,
    hidden: &[usize],
    rng: &mut impl Rng,
) -> Result<Mlp> {
    let sizes: Vec<usize> = std::iter::once(obs_dim + act_dim)
        .chain(hidden.iter().copied())
        .chain([1])
        .collect();
    let mut acts = vec![Activation::Swish; hidden.len()];
    acts.push(Activation::Linear);
    Mlp::new(&sizes, &acts, rng)
}

/// Transitions stacked row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub action: Array2<f64>,
    pub reward: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let first = ts
            .first()
            .ok_or_else(|| KseError::InvalidArgument("empty batch".into()))?;
        let (od, ad) = (first.obs.len(), first.action.len());
        let rows = ts.len();
        let mut obs = Array2::zeros((rows, od));
        let mut action = Array2::zeros((rows, ad));
        let mut next_obs = Array2::zeros((rows, od));
        for (i, t) in ts.iter().enumerate() {
            if t.obs.len() != od || t.next_obs.len() != od || t.action.len() != ad {
                return Err(KseError::Shape {
                    expected: od,
                    got: t.obs.len(),
                });
            }
            obs.row_mut(i).assign(&ndarray::aview1(&t.obs));
            action.row_mut(i).assign(&ndarray::aview1(&t.action));
            next_obs.row_mut(i).assign(&ndarray::aview1(&t.next_obs));
        }
        Ok(Self {
            obs,
            action,
            reward: ts.iter().map(|t| t.reward).collect(),
            next_obs,
            terminal: ts.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

fn critic_input(obs: &Array2<f64>, action: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs.view(), action.view()]).expect("row counts match")
}

/// Bellman targets `r + γ·Q′(s′, μ′(s′))`, without bootstrapping on terminal rows.
pub fn bellman_targets(
    target_actor: &Mlp,
    target_critic: &Mlp,
    batch: &Batch,
    gamma: f64,
) -> Result<Array1<f64>> {
    let next_a = target_actor.predict_batch(batch.next_obs.view())?;
    let q_next = target_critic.predict_batch(critic_input(&batch.next_obs, &next_a).view())?;
    Ok(Array1::from_shape_fn(batch.len(), |i| {
        batch.reward[i]
            + if batch.terminal[i] {
                0.0
            } else {
                gamma * q_next[(i, 0)]
            }
    }))
}

/// Mean squared Bellman error and its gradient with respect to the critic.
pub fn critic_loss_and_grads(
    critic: &Mlp,
    target_actor: &Mlp,
    target_critic: &Mlp,
    batch: &Batch,
    gamma: f64,
) -> Result<(f64, Grads)> {
    let y = bellman_targets(target_actor, target_critic, batch, gamma)?;
    let (q, cache) = critic.forward_batch(critic_input(&batch.obs, &batch.action).view())?;
    let n = batch.len() as f64;
    let diff = &q.column(0) - &y;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let grad_out = diff.mapv(|d| 2.0 * d / n).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, grad_out.view());
    Ok((loss, grads))
}

/// `−mean Q(s, μ(s))` and its gradient with respect to the actor.
pub fn actor_objective_and_grads(actor: &Mlp, critic: &Mlp, batch: &Batch) -> Result<(f64, Grads)> {
    let (a, actor_cache) = actor.forward_batch(batch.obs.view())?;
    let (q, critic_cache) = critic.forward_batch(critic_input(&batch.obs, &a).view())?;
    let n = batch.len() as f64;
    let objective = -q.sum() / n;
    let grad_q = Array2::from_elem((batch.len(), 1), -1.0 / n);
    let (_, grad_in) = critic.backward(&critic_cache, grad_q.view());
    let obs_dim = batch.obs.ncols();
    let grad_a = grad_in.slice(s![.., obs_dim..]).to_owned();
    let (grads, _) = actor.backward(&actor_cache, grad_a.view());
    Ok((objective, grads))
}
