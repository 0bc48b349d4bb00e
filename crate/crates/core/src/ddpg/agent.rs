use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::mlp::{Activation, Layer, Mlp};
use super::noise::NoiseSchedule;
use super::replay::{ReplayBuffer, Transition};
use super::{
    actor_net, actor_objective_and_grads, critic_loss_and_grads, critic_net, Batch, ACTOR_HIDDEN,
    CRITIC_HIDDEN,
};
use crate::actuation::{Action, Observation};
use crate::error::{KseError, Result};

const MAGIC: &[u8; 4] = b"KDPG";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgHyper {
    pub batch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Soft-update the targets every this many gradient updates.
    pub target_every: u64,
    pub replay_capacity: usize,
}

impl Default for DdpgHyper {
    fn default() -> Self {
        Self {
            batch: 200,
            lr: 1e-3,
            gamma: 0.99,
            tau: 1e-3,
            target_every: 1,
            replay_capacity: 1_000_000,
        }
    }
}

impl DdpgHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) || !(0.0..1.0).contains(&self.gamma) {
            return Err(KseError::Config(
                "need 0 < tau <= 1 and 0 <= gamma < 1".into(),
            ));
        }
        if self.batch == 0
            || self.target_every == 0
            || !(self.lr > 0.0)
            || self.replay_capacity < self.batch
        {
            return Err(KseError::Config(
                "batch, lr, target_every must be positive; capacity >= batch".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub noise: NoiseSchedule,
    pub hyper: DdpgHyper,
    pub buffer: ReplayBuffer,
    pub episode: u64,
    pub updates: u64,
    rng: ChaCha8Rng,
}

impl Agent {
    /// Default architecture: actor `obs→128→64→act`, critic `obs+act→256→128→1`.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hyper: DdpgHyper,
        noise: NoiseSchedule,
        seed: u64,
    ) -> Result<Self> {
        Self::with_hidden(
            obs_dim,
            act_dim,
            &ACTOR_HIDDEN,
            &CRITIC_HIDDEN,
            hyper,
            noise,
            seed,
        )
    }

    pub fn with_hidden(
        obs_dim: usize,
        act_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        hyper: DdpgHyper,
        noise: NoiseSchedule,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = actor_net(obs_dim, actor_hidden, act_dim, noise.a_lim, &mut rng)?;
        let critic = critic_net(obs_dim, act_dim, critic_hidden, &mut rng)?;
        Ok(Self {
            target_actor: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: Adam::new(&actor),
            critic_opt: Adam::new(&critic),
            buffer: ReplayBuffer::new(hyper.replay_capacity)?,
            actor,
            critic,
            noise,
            hyper,
            episode: 0,
            updates: 0,
            rng,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Deterministic policy output `μ(s)`.
    pub fn policy(&self, obs: &Observation) -> Result<Action> {
        self.actor.forward(obs)
    }

    /// Exploratory action with the current noise level.
    pub fn act(&mut self, obs: &Observation) -> Result<Action> {
        let mu = self.actor.forward(obs)?;
        Ok(self.noise.perturb(&mu, &mut self.rng))
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One critic step, one actor step and (every `target_every` updates) a
    /// soft target update. `None` until the buffer holds a full batch.
    pub fn update(&mut self) -> Result<Option<UpdateStats>> {
        if self.buffer.len() < self.hyper.batch {
            return Ok(None);
        }
        let idx = self
            .buffer
            .sample_indices(self.hyper.batch, &mut self.rng)?;
        let (items, _) = self.buffer.raw_parts();
        let picked: Vec<&Transition> = idx.iter().map(|&i| &items[i]).collect();
        let batch = Batch::from_transitions(&picked)?;

        let (critic_loss, cg) = critic_loss_and_grads(
            &self.critic,
            &self.target_actor,
            &self.critic_target,
            &batch,
            self.hyper.gamma,
        )?;
        self.critic_opt.step(&mut self.critic, &cg, self.hyper.lr);
        let (actor_objective, ag) = actor_objective_and_grads(&self.actor, &self.critic, &batch)?;
        self.actor_opt.step(&mut self.actor, &ag, self.hyper.lr);

        self.updates += 1;
        if self.updates % self.hyper.target_every == 0 {
            self.target_actor.soft_update(&self.actor, self.hyper.tau)?;
            self.critic_target
                .soft_update(&self.critic, self.hyper.tau)?;
        }
        if !(self.actor.is_finite() && self.critic.is_finite()) {
            return Err(KseError::InvalidArgument(
                "network parameters became non-finite".into(),
            ));
        }
        Ok(Some(UpdateStats {
            critic_loss,
            actor_objective,
        }))
    }

    pub fn end_episode(&mut self) {
        self.episode += 1;
        self.noise.end_episode();
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Binary checkpoint: networks, optimizer moments, noise schedule, RNG
    /// position, counters and the replay buffer, all little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let h = &self.hyper;
        put_u64(&mut w, h.batch as u64)?;
        put_f64s(&mut w, &[h.lr, h.gamma, h.tau])?;
        put_u64(&mut w, h.target_every)?;
        put_u64(&mut w, h.replay_capacity as u64)?;
        let n = &self.noise;
        put_f64s(&mut w, &[n.alpha, n.alpha_min, n.decay, n.a_lim])?;
        put_u64(&mut w, self.episode)?;
        put_u64(&mut w, self.updates)?;
        w.write_all(&self.rng.get_seed())?;
        put_u64(&mut w, self.rng.get_stream())?;
        w.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        for net in [
            &self.actor,
            &self.critic,
            &self.target_actor,
            &self.critic_target,
        ] {
            write_net(&mut w, net)?;
        }
        for opt in [&self.actor_opt, &self.critic_opt] {
            put_u64(&mut w, opt.t)?;
            for g in [&opt.m, &opt.v] {
                put_f64s(&mut w, &g.flat())?;
            }
        }
        let (items, next) = self.buffer.raw_parts();
        put_u64(&mut w, items.len() as u64)?;
        put_u64(&mut w, next as u64)?;
        let (od, ad) = items
            .first()
            .map(|t| (t.obs.len(), t.action.len()))
            .unwrap_or((0, 0));
        put_u64(&mut w, od as u64)?;
        put_u64(&mut w, ad as u64)?;
        for t in items {
            put_f64s(&mut w, &t.obs)?;
            put_f64s(&mut w, &t.action)?;
            put_f64s(&mut w, &[t.reward])?;
            put_f64s(&mut w, &t.next_obs)?;
            w.write_all(&[t.terminal as u8])?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(KseError::Format("not a DDPG checkpoint".into()));
        }
        let mut ver = [0u8; 2];
        r.read_exact(&mut ver)?;
        if u16::from_le_bytes(ver) != VERSION {
            return Err(KseError::Format(format!(
                "unsupported checkpoint version {}",
                u16::from_le_bytes(ver)
            )));
        }
        let batch = get_u64(&mut r)? as usize;
        let [lr, gamma, tau] = get_f64_array::<3>(&mut r)?;
        let target_every = get_u64(&mut r)?;
        let replay_capacity = get_u64(&mut r)? as usize;
        let hyper = DdpgHyper {
            batch,
            lr,
            gamma,
            tau,
            target_every,
            replay_capacity,
        };
        hyper.validate()?;
        let [alpha, alpha_min, decay, a_lim] = get_f64_array::<4>(&mut r)?;
        let noise = NoiseSchedule {
            alpha,
            alpha_min,
            decay,
            a_lim,
        };
        let episode = get_u64(&mut r)?;
        let updates = get_u64(&mut r)?;
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        let stream = get_u64(&mut r)?;
        let mut pos = [0u8; 16];
        r.read_exact(&mut pos)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from_le_bytes(pos));

        let actor = read_net(&mut r)?;
        let critic = read_net(&mut r)?;
        let target_actor = read_net(&mut r)?;
        let critic_target = read_net(&mut r)?;
        if !actor.same_shape(&target_actor) || !critic.same_shape(&critic_target) {
            return Err(KseError::Format(
                "target networks do not match online networks".into(),
            ));
        }
        let mut opts = Vec::with_capacity(2);
        for net in [&actor, &critic] {
            let mut opt = Adam::new(net);
            opt.t = get_u64(&mut r)?;
            for g in [&mut opt.m, &mut opt.v] {
                for (w, b) in g.w.iter_mut().zip(g.b.iter_mut()) {
                    for v in w.iter_mut().chain(b.iter_mut()) {
                        *v = get_f64(&mut r)?;
                    }
                }
            }
            opts.push(opt);
        }
        let critic_opt = opts.pop().expect("two optimizers");
        let actor_opt = opts.pop().expect("two optimizers");

        let len = get_u64(&mut r)? as usize;
        let next = get_u64(&mut r)? as usize;
        let od = get_u64(&mut r)? as usize;
        let ad = get_u64(&mut r)? as usize;
        if len > replay_capacity {
            return Err(KseError::Format(
                "replay buffer larger than its capacity".into(),
            ));
        }
        let mut items = Vec::with_capacity(len);
        for _ in 0..len {
            let obs = get_f64_vec(&mut r, od)?;
            let action = get_f64_vec(&mut r, ad)?;
            let reward = get_f64(&mut r)?;
            let next_obs = get_f64_vec(&mut r, od)?;
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            items.push(Transition {
                obs,
                action,
                reward,
                next_obs,
                terminal: flag[0] != 0,
            });
        }
        let buffer = ReplayBuffer::from_raw_parts(replay_capacity, items, next)?;
        Ok(Self {
            actor,
            critic,
            target_actor,
            critic_target,
            actor_opt,
            critic_opt,
            noise,
            hyper,
            buffer,
            episode,
            updates,
            rng,
        })
    }
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f64_array<const N: usize>(r: &mut impl Read) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for v in &mut out {
        *v = get_f64(r)?;
    }
    Ok(out)
}

fn get_f64_vec(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| get_f64(r)).collect()
}

fn write_net(w: &mut impl Write, net: &Mlp) -> Result<()> {
    put_u64(w, net.layers.len() as u64)?;
    for l in &net.layers {
        put_u64(w, l.w.ncols() as u64)?;
        put_u64(w, l.w.nrows() as u64)?;
        let (tag, c) = l.act.tag();
        w.write_all(&[tag])?;
        put_f64s(w, &[c])?;
        put_f64s(w, l.w.as_slice().expect("standard layout"))?;
        put_f64s(w, l.b.as_slice().expect("standard layout"))?;
    }
    Ok(())
}

fn read_net(r: &mut impl Read) -> Result<Mlp> {
    let n_layers = get_u64(r)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(KseError::Format(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let fan_in = get_u64(r)? as usize;
        let fan_out = get_u64(r)? as usize;
        if fan_in == 0 || fan_out == 0 || fan_in.saturating_mul(fan_out) > 1 << 26 {
            return Err(KseError::Format("implausible layer shape".into()));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let act = Activation::from_tag(tag[0], get_f64(r)?)?;
        let w = Array2::from_shape_vec((fan_out, fan_in), get_f64_vec(r, fan_in * fan_out)?)
            .expect("shape");
        let b = Array1::from_vec(get_f64_vec(r, fan_out)?);
        layers.push(Layer { w, b, act });
    }
    Ok(Mlp { layers })
}
