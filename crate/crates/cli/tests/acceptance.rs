//! Prints one PASS/FAIL line per acceptance criterion.
//!
//! Criteria 10–12 need desk-scale training runs that take hours. They are
//! judged from the run directories under `acceptance/` (or
//! `$KSE_ACCEPTANCE_RUNS`); set `KSE_ACCEPTANCE_FULL=1` to regenerate them
//! first. Set `KSE_ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use kse_core::ddpg::{
    actor_net, actor_objective_and_grads, critic_loss_and_grads, critic_net, Agent, Batch, DdpgHyper, Grads, Mlp,
    NoiseSchedule, Transition,
};
use kse_core::dynamics::{Integrator, SimState};
use kse_core::jfnk::{newton_solve, newton_solve_with, FlowResidual, JfnkConfig};
use kse_core::spectral::{dft2, spectral_distance, GridSpec, PhysicalField, SpectralField};
use kse_core::store::{verify, Admission, FixedPointStore, Method, Provenance};
use kse_core::tasks::random_initial_state;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn kse(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kse")).args(args).output().expect("kse runs")
}

fn csv_rows(path: &Path) -> Result<Vec<Vec<String>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect())
}

fn resolution_check(which: &str) -> Result<(f64, f64), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join(which);
    let o = kse(&["--out", out.to_str().unwrap(), "simulate", "--check", which]);
    if o.status.code() == Some(1) {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    let rows = csv_rows(&out.join("check.csv"))?;
    let row = rows.first().ok_or("empty check.csv")?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| e.to_string());
    Ok((num(&row[1])?, num(&row[2])?))
}

fn c1() -> Verdict {
    match resolution_check("grid") {
        Ok((max, _)) => verdict(max < 1e-6, format!("64² vs 128², 500 steps: max error {max:.2e} (< 1e-6)")),
        Err(e) => verdict(false, e),
    }
}

fn c2() -> Verdict {
    match resolution_check("dt") {
        Ok((max, median)) => verdict(
            max < 1e-2 && median < 1e-3,
            format!("dt 0.05 vs 0.025 over 25 time units: max {max:.2e} (< 1e-2), median {median:.2e} (< 1e-3)"),
        ),
        Err(e) => verdict(false, e),
    }
}

fn c3() -> Verdict {
    let grid = GridSpec::default();
    let integ = Integrator::new(grid, 0.05).unwrap();
    let k = std::f64::consts::PI / grid.half_length;
    let mut worst = 0.0_f64;
    for (p, q) in [(1i64, 0i64), (0, 1), (1, 1), (2, 1), (3, 2)] {
        let field = PhysicalField::from_fn(grid, |x, y| 1e-6 * (k * (p as f64 * x + q as f64 * y)).cos());
        let start = SimState::new(dft2(&field).unwrap());
        let end = integ.flow_map(&start, 1.0).unwrap();
        let (ip, iq) = (p.rem_euclid(64) as usize, q.rem_euclid(64) as usize);
        let ratio = end.spec.get(ip, iq) / start.spec.get(ip, iq);
        // ℓ = |k|² − |k|⁴ for the operator −Δ − Δ²
        let k2 = k * k * (p * p + q * q) as f64;
        let expected = (k2 - k2 * k2).exp();
        worst = worst.max((ratio - Complex64::new(expected, 0.0)).norm() / expected);
    }
    verdict(worst < 1e-8, format!("five modes, amplitude 1e-6, T = 1: worst relative error {worst:.2e} (< 1e-8)"))
}

fn c4() -> Verdict {
    let grid = GridSpec::default();
    let k = std::f64::consts::PI / grid.half_length;
    let field = PhysicalField::from_fn(grid, |x, y| {
        (k * x).sin() * (k * y).cos() + 0.5 * (2.0 * k * x + k * y).cos() + 0.3 * (3.0 * k * y).sin()
    });
    let start = SimState::new(dft2(&field).unwrap());
    let dts = [0.1, 0.05, 0.025, 0.0125];
    let reference = Integrator::new(grid, 0.0125 / 8.0).unwrap().flow_map(&start, 2.0).unwrap();
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .map(|&dt| {
            let end = Integrator::new(grid, dt).unwrap().flow_map(&start, 2.0).unwrap();
            (dt.ln(), spectral_distance(&end.spec, &reference.spec).unwrap().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    verdict((3.7..=4.3).contains(&slope), format!("least-squares slope over dt 0.1..0.0125: {slope:.3} (in [3.7, 4.3])"))
}

fn c5() -> Verdict {
    let grid = GridSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut guess = SpectralField::zeros(grid);
    // 1e-3 in physical amplitude, spread over the lowest modes
    for p in 1..4usize {
        for q in 0..4usize {
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 1e-3 * 4096.0 / 16.0;
            guess.set(p, q, c);
            guess.set(grid.n - p, (grid.n - q) % grid.n, c.conj());
        }
    }
    match newton_solve(&guess, &JfnkConfig::default()) {
        Ok(r) => verdict(
            r.converged && r.final_residual() < 1e-12,
            format!("converged {} in {} iterations, final relative residual {:.2e} (< 1e-12)", r.converged, r.iterations, r.final_residual()),
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

/// Converged states from criterion 6, reused by criterion 7.
fn c6(solutions: &mut Vec<SpectralField>) -> Verdict {
    let cfg = JfnkConfig::default();
    let res = FlowResidual::new(GridSpec::default(), &cfg).unwrap();
    let trials = 30;
    let mut plateaus = Vec::new();
    for seed in 0..trials {
        let guess = random_initial_state(res.integrator(), 1000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let report = newton_solve_with(&res, &guess.spec, &cfg).unwrap();
        if report.converged {
            solutions.push(report.final_state);
        } else {
            plateaus.push(report.final_residual().log10());
        }
    }
    let fraction = plateaus.len() as f64 / trials as f64;
    let (lo, hi) = plateaus.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let in_band = plateaus.iter().filter(|v| (-1.0..=0.0).contains(*v)).count();
    verdict(
        (0.40..=0.90).contains(&fraction) && in_band == plateaus.len() && !plateaus.is_empty(),
        format!(
            "{} of {trials} relaxed guesses fail (fraction {fraction:.2}, in [0.40, 0.90]); failed plateaus log10 r in [{lo:.2}, {hi:.2}], {in_band} of {} inside [-1, 0]",
            plateaus.len(),
            plateaus.len()
        ),
    )
}

fn c7(solutions: &[SpectralField]) -> Verdict {
    let integ = Integrator::new(GridSpec::default(), 0.05).unwrap();
    let mut store = FixedPointStore::new();
    let mut refused = 0;
    for (i, s) in solutions.iter().enumerate() {
        let prov = Provenance { method: Method::Jfnk, seed: i as u64, episode: 0, newton_iterations: 0 };
        match store.admit(s.clone(), &integ, prov) {
            Ok(Admission::New(_)) | Ok(Admission::Duplicate(_)) => {}
            Err(_) => refused += 1,
        }
    }
    if store.is_empty() {
        return verdict(false, "no admitted records to verify");
    }
    let dir = tempfile::tempdir().unwrap();
    store.persist(dir.path()).unwrap();
    let back = match FixedPointStore::load(dir.path(), &integ) {
        Ok(b) => b,
        Err(e) => return verdict(false, format!("reload failed: {e}")),
    };
    let worst = back
        .records()
        .iter()
        .map(|r| verify(&r.spec, &integ, f64::INFINITY).unwrap())
        .fold(0.0_f64, f64::max);
    verdict(
        back.len() == store.len() && worst < 1e-10,
        format!(
            "{} distinct records ({refused} refused) re-verified after save/load; worst ‖Φ¹(u) − u‖/‖u‖ {worst:.2e} (< 1e-10)",
            back.len()
        ),
    )
}

fn numeric_gradient(net: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let base = net.params_flat();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] += h;
            probe.set_params_flat(&p).unwrap();
            let up = f(&probe);
            p[i] = base[i] - h;
            probe.set_params_flat(&p).unwrap();
            (up - f(&probe)) / (2.0 * h)
        })
        .collect()
}

fn worst_relative(analytic: &Grads, numeric: &[f64]) -> f64 {
    let a = analytic.flat();
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    a.iter()
        .zip(numeric)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3 * scale))
        .fold(0.0, f64::max)
}

fn c8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (obs, act) = (6, 3);
    let actor = actor_net(obs, &[8, 5], act, 3.0, &mut rng).unwrap();
    let critic = critic_net(obs, act, &[9, 6], &mut rng).unwrap();
    let target_actor = actor_net(obs, &[8, 5], act, 3.0, &mut rng).unwrap();
    let target_critic = critic_net(obs, act, &[9, 6], &mut rng).unwrap();
    let ts: Vec<Transition> = (0..20)
        .map(|i| {
            let mut v = |n: usize| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
            Transition { obs: v(obs), action: v(act), reward: v(1)[0], next_obs: v(obs), terminal: i % 5 == 4 }
        })
        .collect();
    let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>()).unwrap();
    let (_, gc) = critic_loss_and_grads(&critic, &target_actor, &target_critic, &batch, 0.99).unwrap();
    let ec = worst_relative(
        &gc,
        &numeric_gradient(&critic, |c| critic_loss_and_grads(c, &target_actor, &target_critic, &batch, 0.99).unwrap().0),
    );
    let (_, ga) = actor_objective_and_grads(&actor, &critic, &batch).unwrap();
    let ea = worst_relative(&ga, &numeric_gradient(&actor, |a| actor_objective_and_grads(a, &critic, &batch).unwrap().0));
    verdict(
        ec < 1e-5 && ea < 1e-5,
        format!("central differences h = 1e-5: critic loss worst {ec:.1e}, actor objective worst {ea:.1e} (< 1e-5)"),
    )
}

fn c9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = NoiseSchedule::new(2.0, 1.5, 0.995, 3.0);
    let mut agent = Agent::new(256, 36, DdpgHyper::default(), noise, 9).unwrap();
    let (mut det, mut noisy) = (0.0_f64, 0.0_f64);
    for _ in 0..10_000 {
        let obs: Vec<f64> = (0..256).map(|_| rng.random_range(-20.0..20.0)).collect();
        det = agent.policy(&obs).unwrap().iter().fold(det, |m, a| m.max(a.abs()));
        noisy = agent.act(&obs).unwrap().iter().fold(noisy, |m, a| m.max(a.abs()));
    }
    verdict(
        det <= 3.0 && noisy <= 3.6 + 1e-12,
        format!("10^4 evaluations: max |μ(s)| {det:.4} (≤ 3), max |clipped action| {noisy:.4} (≤ 3.6)"),
    )
}

fn runs_dir() -> PathBuf {
    std::env::var_os("KSE_ACCEPTANCE_RUNS")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../acceptance"))
}

fn run_or_report(args: &[&str]) {
    let started = Instant::now();
    let o = kse(args);
    eprintln!("kse {} -> {:?} in {:.0?}", args.join(" "), o.status.code(), started.elapsed());
}

/// Desk-scale runs behind criteria 10–12.
fn regenerate(dir: &Path) {
    let p = |s: &str| dir.join(s).to_str().unwrap().to_string();
    std::fs::create_dir_all(dir).unwrap();
    run_or_report(&["--out", &p("find"), "find", "--episodes", "100", "--set", "n_parallel=4"]);
    run_or_report(&[
        "--out", &p("compare"), "compare", "--agent", &p("find/agent.kdpg"), "--pairs", "60", "--set", "n_parallel=4",
    ]);
    let cfg = JfnkConfig::default();
    let res = FlowResidual::new(GridSpec::default(), &cfg).unwrap();
    let guess = random_initial_state(res.integrator(), 1000, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let goal = newton_solve_with(&res, &guess.spec, &cfg).unwrap().final_state;
    goal.save(dir.join("goal.kse")).unwrap();
    run_or_report(&["--out", &p("goal"), "jfnk", "--guess", &p("goal.kse"), "--store", &p("goalstore")]);
    run_or_report(&[
        "--out", &p("navigate"), "navigate", "--goal", "E1", "--store", &p("goalstore"), "--episodes", "200", "--set",
        "n_parallel=4",
    ]);
}

fn config_value(run: &Path, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(run.join("config.txt")).ok()?;
    text.lines().find_map(|l| {
        let (k, v) = l.split_once('=')?;
        (k.trim() == key).then(|| v.trim().to_string())
    })
}

fn desk_scale(run: &Path, min_episodes: usize) -> Result<(), String> {
    let episodes: usize = config_value(run, "episodes").ok_or("no config.txt")?.parse().map_err(|_| "bad episodes")?;
    let n_p: usize = config_value(run, "n_parallel").ok_or("no n_parallel")?.parse().map_err(|_| "bad n_parallel")?;
    let n: usize = config_value(run, "n").ok_or("no n")?.parse().map_err(|_| "bad n")?;
    if episodes < min_episodes || !(4..=10).contains(&n_p) || n != 64 {
        return Err(format!("run is not desk scale (episodes {episodes}, n_p {n_p}, n {n})"));
    }
    Ok(())
}

fn c10(dir: &Path) -> Verdict {
    let find = dir.join("find");
    if let Err(e) = desk_scale(&find, 100) {
        return verdict(false, format!("{}: {e}", find.display()));
    }
    let rows = match csv_rows(&dir.join("compare/compare.csv")) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let both: Vec<&Vec<String>> = rows.iter().filter(|r| r[2] == "true" && r[6] == "true").collect();
    let raw_its: Vec<f64> = both.iter().map(|r| r[3].parse().unwrap()).collect();
    let drl_its: Vec<f64> = both.iter().map(|r| r[7].parse().unwrap()).collect();
    let raw_r0 = mean(&rows.iter().map(|r| r[1].parse().unwrap()).collect::<Vec<f64>>());
    let drl_r0 = mean(&rows.iter().map(|r| r[5].parse().unwrap()).collect::<Vec<f64>>());
    let (mr, md) = (mean(&raw_its), mean(&drl_its));
    verdict(
        both.len() >= 10 && md <= 0.9 * mr && drl_r0 < raw_r0,
        format!(
            "{} pairs, {} with both converged (≥ 10); mean iterations DRL {md:.1} vs raw {mr:.1} (need ≤ 0.9×); mean initial residual DRL {drl_r0:.3} vs raw {raw_r0:.3}",
            rows.len(),
            both.len()
        ),
    )
}

fn c11(dir: &Path) -> Verdict {
    let run = dir.join("find");
    if let Err(e) = desk_scale(&run, 100) {
        return verdict(false, format!("{}: {e}", run.display()));
    }
    let log = csv_rows(&run.join("training.csv")).unwrap_or_default();
    let handoffs: usize = log.iter().filter_map(|r| r.get(4)?.parse::<usize>().ok()).sum();
    let best = log.iter().filter_map(|r| r.get(1)?.parse::<f64>().ok()).fold(f64::NEG_INFINITY, f64::max);
    let integ = Integrator::new(GridSpec::default(), 0.05).unwrap();
    match FixedPointStore::load(run.join("store"), &integ) {
        Ok(store) => {
            let worst = store.records().iter().map(|r| r.relative_residual).fold(0.0, f64::max);
            verdict(
                !store.is_empty() && worst < 1e-10,
                format!(
                    "{} episodes, best episode reward {best:.1} (handoff above -45), {handoffs} handoffs; {} verified records, worst residual {worst:.2e}",
                    log.len(),
                    store.len()
                ),
            )
        }
        Err(e) => verdict(false, format!("store: {e}")),
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn c12(dir: &Path) -> Verdict {
    let run = dir.join("navigate");
    if let Err(e) = desk_scale(&run, 100) {
        return verdict(false, format!("{}: {e}", run.display()));
    }
    let (log, eval) = match (csv_rows(&run.join("training.csv")), csv_rows(&run.join("eval.csv"))) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return verdict(false, e),
    };
    let ends: Vec<f64> = log.iter().map(|r| r[2].parse().unwrap()).collect();
    if ends.len() < 100 {
        return verdict(false, format!("only {} training episodes", ends.len()));
    }
    let (head, tail) = (median(&ends[..50]), median(&ends[ends.len() - 50..]));
    let trace: Vec<(f64, f64)> = eval.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    let d0 = trace[0].1;
    let bound = 0.1 * d0;
    let settled = trace.iter().position(|&(t, _)| t <= 25.0 && trace.iter().filter(|p| p.0 >= t).all(|p| p.1 < bound));
    let closest = trace.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    verdict(
        settled.is_some() && tail < head,
        format!(
            "evaluation from distance {d0:.1}: {}, closest {closest:.1} (bound {bound:.1}); training end-distance median first 50 {head:.1}, last 50 {tail:.1}",
            match settled {
                Some(i) => format!("below 10% from t = {:.2}", trace[i].0),
                None => "never settles below 10% by t = 25".into(),
            }
        ),
    )
}

fn c13() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--steps", "200", "--seed", "3"], vec!["trajectory.csv"]),
        (
            "find",
            vec!["find", "--episodes", "2", "--seed", "3", "--set", "episode_steps=20", "--set", "n_parallel=2", "--set", "batch=16", "--set", "n_its=3"],
            vec!["training.csv", "table.csv"],
        ),
    ];
    let mut compared = 0;
    for (name, args, files) in &runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{name}{rep}"));
            let mut full = vec!["--out", out.to_str().unwrap(), "--threads", "1"];
            full.extend(args.iter().copied());
            let o = kse(&full);
            if !o.status.success() {
                return verdict(false, format!("{name} failed: {}", String::from_utf8_lossy(&o.stderr)));
            }
            outputs.push(files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect::<Vec<_>>());
        }
        if outputs[0] != outputs[1] {
            return verdict(false, format!("{name} outputs differ between runs"));
        }
        compared += files.len();
    }
    verdict(true, format!("simulate and find with --threads 1, run twice: {compared} CSV files byte-identical"))
}

fn main() {
    let dir = runs_dir();
    if std::env::var_os("KSE_ACCEPTANCE_FULL").is_some() {
        regenerate(&dir);
    }
    let mut solutions = Vec::new();
    let criteria: Vec<(u32, Box<dyn FnOnce() -> Verdict + '_>)> = vec![
        (1, Box::new(c1)),
        (2, Box::new(c2)),
        (3, Box::new(c3)),
        (4, Box::new(c4)),
        (5, Box::new(c5)),
        (6, Box::new(|| c6(&mut solutions))),
    ];
    let mut failed = 0;
    let mut report = |n: u32, v: Verdict, secs: f64| {
        if !v.pass {
            failed += 1;
        }
        println!("criterion {n:2}: {} ({secs:.1} s) {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    for (n, f) in criteria {
        let t = Instant::now();
        let v = f();
        report(n, v, t.elapsed().as_secs_f64());
    }
    let later: Vec<(u32, Box<dyn FnOnce() -> Verdict + '_>)> = vec![
        (7, Box::new(|| c7(&solutions))),
        (8, Box::new(c8)),
        (9, Box::new(c9)),
        (10, Box::new(|| c10(&dir))),
        (11, Box::new(|| c11(&dir))),
        (12, Box::new(|| c12(&dir))),
        (13, Box::new(c13)),
    ];
    for (n, f) in later {
        let t = Instant::now();
        let v = f();
        report(n, v, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 13 criteria pass", 13 - failed);
    if failed > 0 && std::env::var_os("KSE_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
