//! Flat `key = value` run configuration. `#` starts a comment; unknown keys
//! are errors so typos do not silently fall back to defaults.

use std::path::Path;

use crate::actuation::{ActuatorLayout, SensorLayout};
use crate::ddpg::{DdpgHyper, NoiseSchedule};
use crate::error::{KseError, Result};
use crate::jfnk::JfnkConfig;
use crate::spectral::GridSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub half_length: f64,
    pub dt: f64,
    pub relax_steps: usize,

    pub actuators_per_axis: usize,
    pub actuator_sigma: f64,
    pub a_max: f64,
    pub sensor_stride: usize,

    pub batch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub target_every: u64,
    pub replay_capacity: usize,
    pub alpha0: f64,
    /// Noise floor; `None` picks the task default.
    pub alpha_min: Option<f64>,
    pub alpha_decay: f64,

    pub episodes: usize,
    pub episode_steps: usize,
    pub reward_threshold: f64,
    pub n_parallel: usize,
    pub eval_steps: usize,
    pub compare_pairs: usize,
    pub sweep_m: Vec<usize>,
    pub sweep_sigma: Vec<f64>,
    pub sweep_episodes: usize,

    pub m_gmres: usize,
    pub n_its: usize,
    pub eps_err: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub g_tol: f64,
    pub gmres_tol: f64,
    pub eps_j: f64,
    pub n_dts: usize,

    pub seed: u64,
    pub threads: usize,
    pub snapshot_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = DdpgHyper::default();
        let j = JfnkConfig::default();
        Self {
            n: 64,
            half_length: 10.0,
            dt: 0.05,
            relax_steps: 1000,
            actuators_per_axis: 6,
            actuator_sigma: 2.4,
            a_max: 3.0,
            sensor_stride: 4,
            batch: h.batch,
            lr: h.lr,
            gamma: h.gamma,
            tau: h.tau,
            target_every: h.target_every,
            replay_capacity: h.replay_capacity,
            alpha0: 2.0,
            alpha_min: None,
            alpha_decay: 0.995,
            episodes: 100,
            episode_steps: 500,
            reward_threshold: -45.0,
            n_parallel: 10,
            eval_steps: 500,
            compare_pairs: 10,
            sweep_m: vec![4, 6, 8],
            sweep_sigma: vec![1.2, 2.4, 3.6],
            sweep_episodes: 5,
            m_gmres: j.m_gmres,
            n_its: j.n_its,
            eps_err: j.eps_err,
            delta_min: j.delta_min,
            delta_max: j.delta_max,
            g_tol: j.g_tol,
            gmres_tol: j.gmres_tol,
            eps_j: j.eps_j,
            n_dts: j.n_dts,
            seed: 0,
            threads: 1,
            snapshot_stride: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| KseError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "n" => self.n = parse(key, v)?,
            "half_length" => self.half_length = parse(key, v)?,
            "dt" => self.dt = parse(key, v)?,
            "relax_steps" => self.relax_steps = parse(key, v)?,
            "actuators_per_axis" => self.actuators_per_axis = parse(key, v)?,
            "actuator_sigma" => self.actuator_sigma = parse(key, v)?,
            "a_max" => self.a_max = parse(key, v)?,
            "sensor_stride" => self.sensor_stride = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "target_every" => self.target_every = parse(key, v)?,
            "replay_capacity" => self.replay_capacity = parse(key, v)?,
            "alpha0" => self.alpha0 = parse(key, v)?,
            "alpha_min" => {
                self.alpha_min = if v == "auto" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "alpha_decay" => self.alpha_decay = parse(key, v)?,
            "episodes" => self.episodes = parse(key, v)?,
            "episode_steps" => self.episode_steps = parse(key, v)?,
            "reward_threshold" => self.reward_threshold = parse(key, v)?,
            "n_parallel" => self.n_parallel = parse(key, v)?,
            "eval_steps" => self.eval_steps = parse(key, v)?,
            "compare_pairs" => self.compare_pairs = parse(key, v)?,
            "sweep_m" => self.sweep_m = parse_list(key, v)?,
            "sweep_sigma" => self.sweep_sigma = parse_list(key, v)?,
            "sweep_episodes" => self.sweep_episodes = parse(key, v)?,
            "m_gmres" => self.m_gmres = parse(key, v)?,
            "n_its" => self.n_its = parse(key, v)?,
            "eps_err" => self.eps_err = parse(key, v)?,
            "delta_min" => self.delta_min = parse(key, v)?,
            "delta_max" => self.delta_max = parse(key, v)?,
            "g_tol" => self.g_tol = parse(key, v)?,
            "gmres_tol" => self.gmres_tol = parse(key, v)?,
            "eps_j" => self.eps_j = parse(key, v)?,
            "n_dts" => self.n_dts = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "snapshot_stride" => self.snapshot_stride = parse(key, v)?,
            other => return Err(KseError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by the lines of `text`.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                KseError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Every key with its resolved value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let alpha_min = self.alpha_min.map_or("auto".to_string(), |a| a.to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("half_length", self.half_length.to_string()),
            ("dt", self.dt.to_string()),
            ("relax_steps", self.relax_steps.to_string()),
            ("actuators_per_axis", self.actuators_per_axis.to_string()),
            ("actuator_sigma", self.actuator_sigma.to_string()),
            ("a_max", self.a_max.to_string()),
            ("sensor_stride", self.sensor_stride.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", self.lr.to_string()),
            ("gamma", self.gamma.to_string()),
            ("tau", self.tau.to_string()),
            ("target_every", self.target_every.to_string()),
            ("replay_capacity", self.replay_capacity.to_string()),
            ("alpha0", self.alpha0.to_string()),
            ("alpha_min", alpha_min),
            ("alpha_decay", self.alpha_decay.to_string()),
            ("episodes", self.episodes.to_string()),
            ("episode_steps", self.episode_steps.to_string()),
            ("reward_threshold", self.reward_threshold.to_string()),
            ("n_parallel", self.n_parallel.to_string()),
            ("eval_steps", self.eval_steps.to_string()),
            ("compare_pairs", self.compare_pairs.to_string()),
            ("sweep_m", join(&self.sweep_m)),
            ("sweep_sigma", join(&self.sweep_sigma)),
            ("sweep_episodes", self.sweep_episodes.to_string()),
            ("m_gmres", self.m_gmres.to_string()),
            ("n_its", self.n_its.to_string()),
            ("eps_err", self.eps_err.to_string()),
            ("delta_min", self.delta_min.to_string()),
            ("delta_max", self.delta_max.to_string()),
            ("g_tol", self.g_tol.to_string()),
            ("gmres_tol", self.gmres_tol.to_string()),
            ("eps_j", self.eps_j.to_string()),
            ("n_dts", self.n_dts.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("snapshot_stride", self.snapshot_stride.to_string()),
        ];
        pairs
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.jfnk().validate()?;
        self.hyper().validate()?;
        if self.episode_steps == 0
            || self.n_parallel == 0
            || self.sensor_stride == 0
            || self.actuators_per_axis == 0
        {
            return Err(KseError::Config(
                "episode_steps, n_parallel, sensor_stride, actuators_per_axis must be positive"
                    .into(),
            ));
        }
        if self.n % self.sensor_stride != 0 {
            return Err(KseError::Config("sensor_stride must divide n".into()));
        }
        if !(self.a_max > 0.0
            && self.actuator_sigma > 0.0
            && self.alpha_decay > 0.0
            && self.alpha0 >= 0.0)
        {
            return Err(KseError::Config(
                "a_max, actuator_sigma, alpha_decay must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.half_length)
    }

    pub fn jfnk(&self) -> JfnkConfig {
        JfnkConfig {
            m_gmres: self.m_gmres,
            n_its: self.n_its,
            eps_err: self.eps_err,
            delta_min: self.delta_min,
            delta_max: self.delta_max,
            g_tol: self.g_tol,
            gmres_tol: self.gmres_tol,
            eps_j: self.eps_j,
            n_dts: self.n_dts,
            dt: self.dt,
        }
    }

    pub fn hyper(&self) -> DdpgHyper {
        DdpgHyper {
            batch: self.batch,
            lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            target_every: self.target_every,
            replay_capacity: self.replay_capacity,
        }
    }

    pub fn noise(&self, task_alpha_min: f64) -> NoiseSchedule {
        NoiseSchedule::new(
            self.alpha0,
            self.alpha_min.unwrap_or(task_alpha_min),
            self.alpha_decay,
            self.a_max,
        )
    }

    pub fn actuator_layout(&self) -> Result<ActuatorLayout> {
        ActuatorLayout::new(
            self.actuators_per_axis,
            self.actuator_sigma,
            self.a_max,
            self.grid()?,
        )
    }

    pub fn sensor_layout(&self) -> Result<SensorLayout> {
        SensorLayout::with_stride(self.grid()?, self.sensor_stride)
    }
}
