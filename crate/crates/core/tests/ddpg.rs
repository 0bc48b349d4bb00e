use kse_core::ddpg::{
    actor_net, actor_objective_and_grads, bellman_targets, critic_loss_and_grads, critic_net, Adam, Agent, Batch,
    DdpgHyper, Grads, Mlp, NoiseSchedule, ReplayBuffer, Transition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBS: usize = 5;
const ACT: usize = 3;

fn transition(rng: &mut impl Rng, terminal: bool) -> Transition {
    let mut v = |n: usize| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    Transition { obs: v(OBS), action: v(ACT), reward: v(1)[0], next_obs: v(OBS), terminal }
}

fn batch(seed: u64, rows: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts: Vec<Transition> = (0..rows).map(|i| transition(&mut rng, i % 4 == 3)).collect();
    Batch::from_transitions(&ts.iter().collect::<Vec<_>>()).unwrap()
}

/// Central differences of `f` with respect to every parameter of `net`.
fn numeric_gradient(net: &Mlp, h: f64, mut f: impl FnMut(&Mlp) -> f64) -> Vec<f64> {
    let base = net.params_flat();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_params_flat(&p).unwrap();
            let up = f(&probe);
            p[i] = base[i] - h;
            probe.set_params_flat(&p).unwrap();
            let down = f(&probe);
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn assert_gradients_agree(analytic: &Grads, numeric: &[f64]) {
    let a = analytic.flat();
    assert_eq!(a.len(), numeric.len());
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for (i, (x, y)) in a.iter().zip(numeric).enumerate() {
        let err = (x - y).abs() / x.abs().max(y.abs()).max(1e-3 * scale);
        assert!(err < 1e-5, "parameter {i}: analytic {x}, numeric {y}");
    }
}

#[test]
fn critic_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let actor_t = actor_net(OBS, &[6, 4], ACT, 3.0, &mut rng).unwrap();
    let critic_t = critic_net(OBS, ACT, &[7, 5], &mut rng).unwrap();
    let critic = critic_net(OBS, ACT, &[7, 5], &mut rng).unwrap();
    let b = batch(2, 16);
    let (_, grads) = critic_loss_and_grads(&critic, &actor_t, &critic_t, &b, 0.99).unwrap();
    let numeric = numeric_gradient(&critic, 1e-5, |c| critic_loss_and_grads(c, &actor_t, &critic_t, &b, 0.99).unwrap().0);
    assert_gradients_agree(&grads, &numeric);
}

#[test]
fn actor_objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let actor = actor_net(OBS, &[6, 4], ACT, 3.0, &mut rng).unwrap();
    let critic = critic_net(OBS, ACT, &[7, 5], &mut rng).unwrap();
    let b = batch(4, 16);
    let (_, grads) = actor_objective_and_grads(&actor, &critic, &b).unwrap();
    let numeric = numeric_gradient(&actor, 1e-5, |a| actor_objective_and_grads(a, &critic, &b).unwrap().0);
    assert_gradients_agree(&grads, &numeric);
}

#[test]
fn terminal_rows_do_not_bootstrap() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let actor = actor_net(OBS, &[4], ACT, 3.0, &mut rng).unwrap();
    let critic = critic_net(OBS, ACT, &[4], &mut rng).unwrap();
    let b = batch(6, 8);
    let y = bellman_targets(&actor, &critic, &b, 0.99).unwrap();
    for i in 0..b.len() {
        if b.terminal[i] {
            assert_eq!(y[i], b.reward[i]);
        } else {
            let mut input = b.next_obs.row(i).to_vec();
            input.extend(actor.forward(&b.next_obs.row(i).to_vec()).unwrap());
            let q = critic.forward(&input).unwrap()[0];
            assert!((y[i] - (b.reward[i] + 0.99 * q)).abs() < 1e-12);
        }
    }
}

#[test]
fn adam_matches_hand_computed_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut net = critic_net(1, 1, &[2], &mut rng).unwrap();
    let start = net.params_flat();
    let mut opt = Adam::new(&net);
    let lr = 1e-3;
    let g1: Vec<f64> = (0..start.len()).map(|i| 0.5 - i as f64 * 0.1).collect();
    let g2: Vec<f64> = (0..start.len()).map(|i| 0.01 * (i as f64 + 1.0)).collect();
    let as_grads = |g: &[f64]| {
        let mut z = net.clone();
        z.set_params_flat(g).unwrap();
        Grads { w: z.layers.iter().map(|l| l.w.clone()).collect(), b: z.layers.iter().map(|l| l.b.clone()).collect() }
    };
    let (gr1, gr2) = (as_grads(&g1), as_grads(&g2));
    opt.step(&mut net, &gr1, lr);
    opt.step(&mut net, &gr2, lr);
    let end = net.params_flat();
    for i in 0..start.len() {
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8);
        let (m1, v1) = ((1.0 - b1) * g1[i], (1.0 - b2) * g1[i] * g1[i]);
        let p1 = start[i] - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let (m2, v2) = (b1 * m1 + (1.0 - b1) * g2[i], b2 * v1 + (1.0 - b2) * g2[i] * g2[i]);
        let p2 = p1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((end[i] - p2).abs() < 1e-15, "{i}: {} vs {p2}", end[i]);
    }
}

#[test]
fn noise_has_the_scheduled_spread_and_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let quiet = NoiseSchedule::new(0.1, 0.1, 1.0, 3.0);
    let samples: Vec<f64> = (0..20_000).flat_map(|_| quiet.perturb(&[0.0], &mut rng)).collect();
    let sd = (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt();
    assert!((sd - 0.3).abs() < 0.01, "{sd}");

    let loud = NoiseSchedule::new(2.0, 1.5, 0.995, 3.0);
    let samples: Vec<f64> = (0..5_000).flat_map(|_| loud.perturb(&[3.0, -3.0, 0.0], &mut rng)).collect();
    let bound = loud.clip_bound();
    assert!((bound - 3.6).abs() < 1e-12);
    assert!(samples.iter().all(|x| x.abs() <= bound));
    assert!(samples.iter().filter(|x| x.abs() == bound).count() > 1000);

    let mut s = loud;
    for _ in 0..1000 {
        s.end_episode();
    }
    assert_eq!(s.alpha, 1.5);
}

#[test]
fn actions_stay_inside_their_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = NoiseSchedule::new(2.0, 1.5, 0.995, 3.0);
    let mut agent = Agent::new(256, 36, DdpgHyper::default(), noise, 10).unwrap();
    for _ in 0..10_000 {
        let obs: Vec<f64> = (0..256).map(|_| rng.random_range(-50.0..50.0)).collect();
        assert!(agent.policy(&obs).unwrap().iter().all(|a| a.abs() <= 3.0));
        assert!(agent.act(&obs).unwrap().iter().all(|a| a.abs() <= 3.6 + 1e-12));
    }
}

#[test]
fn replay_sampling_is_uniform_and_ring_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut buf = ReplayBuffer::new(50).unwrap();
    for i in 0..80 {
        let mut t = transition(&mut rng, false);
        t.reward = i as f64;
        buf.push(t);
    }
    assert_eq!(buf.len(), 50);
    let kept: Vec<f64> = buf.iter_ordered().map(|t| t.reward).collect();
    assert_eq!(kept, (30..80).map(|i| i as f64).collect::<Vec<_>>());

    let mut counts = vec![0usize; 50];
    let draws = 20_000;
    for _ in 0..draws {
        let idx = buf.sample_indices(10, &mut rng).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 10, "no repeats within a batch");
        for i in idx {
            counts[i] += 1;
        }
    }
    let expected = (draws * 10 / 50) as f64;
    for c in counts {
        assert!((c as f64 - expected).abs() < 0.05 * expected, "{c} vs {expected}");
    }
    assert!(buf.sample_indices(51, &mut rng).is_err());
}

#[test]
fn soft_update_contracts_toward_the_online_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let online = critic_net(OBS, ACT, &[8], &mut rng).unwrap();
    let mut target = critic_net(OBS, ACT, &[8], &mut rng).unwrap();
    let dist = |a: &Mlp, b: &Mlp| {
        a.params_flat().iter().zip(b.params_flat()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let before = dist(&online, &target);
    target.soft_update(&online, 0.25).unwrap();
    assert!((dist(&online, &target) - 0.75 * before).abs() < 1e-12 * before);
    target.soft_update(&online, 1.0).unwrap();
    assert_eq!(target.params_flat(), online.params_flat());
}

fn small_agent(seed: u64) -> Agent {
    let hyper = DdpgHyper { batch: 8, replay_capacity: 64, ..DdpgHyper::default() };
    Agent::with_hidden(OBS, ACT, &[6], &[7], hyper, NoiseSchedule::new(2.0, 1.5, 0.99, 3.0), seed).unwrap()
}

fn train(agent: &mut Agent, rng: &mut ChaCha8Rng, steps: usize) {
    for _ in 0..steps {
        let t = transition(rng, false);
        let action = agent.act(&t.obs).unwrap();
        agent.remember(Transition { action, ..t });
        agent.update().unwrap();
    }
    agent.end_episode();
}

#[test]
fn checkpoint_resume_is_bit_exact() {
    let mut a = small_agent(13);
    let mut env = ChaCha8Rng::seed_from_u64(14);
    train(&mut a, &mut env, 40);
    let mut bytes = Vec::new();
    a.write_to(&mut bytes).unwrap();
    let env_snapshot = env.clone();
    train(&mut a, &mut env, 30);

    let mut b = Agent::read_from(bytes.as_slice()).unwrap();
    let mut env_b = env_snapshot;
    train(&mut b, &mut env_b, 30);
    assert_eq!(a.actor.params_flat(), b.actor.params_flat());
    assert_eq!(a.critic.params_flat(), b.critic.params_flat());
    assert_eq!(a.target_actor.params_flat(), b.target_actor.params_flat());
    assert_eq!(a.updates, b.updates);
    assert_eq!(a.noise, b.noise);
}

#[test]
fn same_seed_same_agent() {
    let (mut a, mut b) = (small_agent(21), small_agent(21));
    let (mut ea, mut eb) = (ChaCha8Rng::seed_from_u64(1), ChaCha8Rng::seed_from_u64(1));
    train(&mut a, &mut ea, 25);
    train(&mut b, &mut eb, 25);
    assert_eq!(a.actor.params_flat(), b.actor.params_flat());
    assert_ne!(small_agent(22).actor.params_flat(), small_agent(21).actor.params_flat());
}
