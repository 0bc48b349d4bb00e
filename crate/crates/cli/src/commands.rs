use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use kse_core::actuation::Actuators;
use kse_core::config::RunConfig;
use kse_core::ddpg::{Agent, NoiseSchedule};
use kse_core::dynamics::{write_trajectory, Integrator, SimState};
use kse_core::jfnk::{newton_solve_with, FlowResidual};
use kse_core::spectral::SpectralField;
use kse_core::store::{self, Admission, FixedPointStore, Method, Provenance, MANIFEST};
use kse_core::tasks::{
    compare_iterations, derive_seed, evaluate_policy, hyperparameter_sweep, navigate, search_fixed_points,
    write_sweep, EnvContext, SweepSpec, TaskKind, TaskSpec,
};
use kse_core::validation::{
    check_initial_state, dt_independence, grid_independence, DT_MAX_TOLERANCE, DT_MEDIAN_TOLERANCE, GRID_TOLERANCE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Check, Cli, Command, Failure, OUTPUT_ROOT_VAR};

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(e) = cli.episodes {
        cfg.episodes = e;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cfg.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate { .. } => "simulate",
        Command::Jfnk { .. } => "jfnk",
        Command::Find { .. } => "find",
        Command::Navigate { .. } => "navigate",
        Command::Compare { .. } => "compare",
        Command::Sweep { .. } => "sweep",
        Command::Verify { .. } => "verify",
        Command::Export { .. } => "export",
    }
}

/// Creates the run directory and records the resolved configuration in it.
fn open_run(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}

fn create(path: impl AsRef<Path>) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_state(path: &Path, integ: &Integrator) -> Result<SpectralField, Failure> {
    let spec = SpectralField::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if spec.grid() != integ.grid() {
        return Err(usage(format!("{}: grid differs from the configured grid", path.display())));
    }
    Ok(spec)
}

fn load_store(dir: &Path, integ: &Integrator) -> Result<FixedPointStore, Failure> {
    if !dir.join(MANIFEST).is_file() {
        return Err(usage(format!("{} holds no store", dir.display())));
    }
    Ok(FixedPointStore::load(dir, integ)?)
}

fn context(cfg: &RunConfig, integ: &Integrator, kind: TaskKind, goal: Option<&SpectralField>) -> Result<EnvContext, Failure> {
    let actuators = Actuators::new(cfg.actuator_layout()?, integ.grid());
    Ok(EnvContext::new(integ.clone(), actuators, cfg.sensor_layout()?, kind, goal, cfg.relax_steps)?)
}

fn relaxed_state(cfg: &RunConfig, integ: &Integrator, stream: u64) -> Result<SimState, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream, 0));
    Ok(kse_core::tasks::random_initial_state(integ, cfg.relax_steps, &mut rng)?)
}

pub fn run(cli: Cli) -> Outcome {
    let cfg = resolve_config(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| usage(e.to_string()))?;
    let out = cli.out.clone().unwrap_or_else(|| {
        std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")).join(command_name(&cli.command))
    });
    let integ = Integrator::new(cfg.grid()?, cfg.dt)?;
    match cli.command {
        Command::Simulate { check, steps, init, zero, action } => {
            simulate(&cfg, &integ, &out, check, steps, init.as_deref(), zero, action)
        }
        Command::Jfnk { guess, store } => jfnk(&cfg, &integ, &out, guess.as_deref(), store.as_deref()),
        Command::Find { store } => find(&cfg, &integ, &out, store),
        Command::Navigate { goal, store } => navigate_cmd(&cfg, &integ, &out, &goal, &store),
        Command::Compare { agent, pairs } => compare(&cfg, &integ, &out, &agent, pairs.unwrap_or(cfg.compare_pairs)),
        Command::Sweep { goal, store } => sweep(&cfg, &integ, &out, &goal, &store),
        Command::Verify { store, file } => verify(&integ, store.as_deref(), file.as_deref()),
        Command::Export { store, pgm } => export(&cfg, &integ, &out, &store, pgm),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    cfg: &RunConfig,
    integ: &Integrator,
    out: &Path,
    check: Option<Check>,
    steps: usize,
    init: Option<&Path>,
    zero: bool,
    action: Option<Vec<f64>>,
) -> Outcome {
    if let Some(check) = check {
        let start = match init {
            Some(p) => SimState::new(read_state(p, integ)?),
            None => check_initial_state(integ.grid(), cfg.dt, cfg.relax_steps, cfg.seed)?,
        };
        open_run(out, cfg)?;
        let (name, stats, pass) = match check {
            Check::Grid => {
                let s = grid_independence(&start, cfg.dt, steps)?;
                ("grid", s, s.max < GRID_TOLERANCE)
            }
            Check::Dt => {
                let s = dt_independence(&start, cfg.dt, steps as f64 * cfg.dt)?;
                ("dt", s, s.max < DT_MAX_TOLERANCE && s.median < DT_MEDIAN_TOLERANCE)
            }
        };
        let mut w = create(out.join("check.csv"))?;
        writeln!(w, "check,max_error,median_error,pass")?;
        writeln!(w, "{name},{:e},{:e},{pass}", stats.max, stats.median)?;
        w.flush()?;
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{name} check: max error {:.3e}, median {:.3e}: {verdict}", stats.max, stats.median);
        return if pass { Ok(()) } else { Err(Failure::Numerical(format!("{name} check failed"))) };
    }
    let start = if zero {
        SimState::zeros(integ.grid())
    } else if let Some(p) = init {
        SimState::new(read_state(p, integ)?)
    } else {
        relaxed_state(cfg, integ, 0)?
    };
    let forcing = match action {
        Some(a) => Some(Actuators::new(cfg.actuator_layout()?, integ.grid()).forcing_field(&a)?),
        None => None,
    };
    open_run(out, cfg)?;
    let snapshots = if cfg.snapshot_stride > 0 {
        fs::create_dir_all(out.join("snapshots"))?;
        Some((out.join("snapshots"), cfg.snapshot_stride))
    } else {
        None
    };
    let mut w = create(out.join("trajectory.csv"))?;
    let end = write_trajectory(
        integ,
        &start,
        steps,
        |_| forcing.clone(),
        &mut w,
        snapshots.as_ref().map(|(d, s)| (d.as_path(), *s)),
    );
    w.flush()?;
    let end = end?;
    end.spec.save(out.join("final.kse"))?;
    println!("simulated {steps} steps to t = {:.2}", end.time);
    Ok(())
}

fn jfnk(cfg: &RunConfig, integ: &Integrator, out: &Path, guess: Option<&Path>, store_dir: Option<&Path>) -> Outcome {
    let guess = match guess {
        Some(p) => read_state(p, integ)?,
        None => relaxed_state(cfg, integ, 0)?.spec,
    };
    let mut store = match store_dir {
        Some(d) if d.join(MANIFEST).is_file() => FixedPointStore::load(d, integ)?,
        _ => FixedPointStore::new(),
    };
    open_run(out, cfg)?;
    let jcfg = cfg.jfnk();
    let residual = FlowResidual::with_integrator(integ.clone(), &jcfg)?;
    let report = newton_solve_with(&residual, &guess, &jcfg)?;
    report.write_log(create(out.join("report.txt"))?)?;
    report.write_residual_csv(create(out.join("residual.csv"))?)?;
    report.final_state.save(out.join("solution.kse"))?;
    println!(
        "{} after {} iterations, relative residual {:.3e}",
        if report.converged { "converged" } else { "failed" },
        report.iterations,
        report.final_residual()
    );
    if !report.converged {
        return Err(Failure::NotConverged(format!("stopped: {}", report.failure_reason.as_str())));
    }
    if let Some(dir) = store_dir {
        let provenance =
            Provenance { method: Method::Jfnk, seed: cfg.seed, episode: 0, newton_iterations: report.iterations };
        match store.admit(report.final_state.clone(), integ, provenance)? {
            Admission::New(id) => println!("admitted as {id}"),
            Admission::Duplicate(id) => println!("duplicate of {id}"),
        }
        store.persist(dir)?;
    }
    Ok(())
}

fn find(cfg: &RunConfig, integ: &Integrator, out: &Path, store_dir: Option<PathBuf>) -> Outcome {
    let store_dir = store_dir.unwrap_or_else(|| out.join("store"));
    let mut store = if store_dir.join(MANIFEST).is_file() {
        FixedPointStore::load(&store_dir, integ)?
    } else {
        FixedPointStore::new()
    };
    open_run(out, cfg)?;
    let ctx = context(cfg, integ, TaskKind::Identification, None)?;
    let noise = cfg.noise(NoiseSchedule::IDENTIFICATION_ALPHA_MIN);
    let mut agent = Agent::new(ctx.obs_dim(), ctx.act_dim(), cfg.hyper(), noise, cfg.seed)?;
    let task = TaskSpec {
        kind: TaskKind::Identification,
        goal: None,
        episode_steps: cfg.episode_steps,
        reward_threshold: cfg.reward_threshold,
        n_parallel: cfg.n_parallel,
        episodes: cfg.episodes,
    };
    let mut log = create(out.join("training.csv"))?;
    let summary =
        search_fixed_points(&ctx, &mut agent, &task, &cfg.jfnk(), cfg.seed, &mut store, &mut log, cfg.threads > 1);
    log.flush()?;
    let summary = summary?;
    store.persist(&store_dir)?;
    store.export_table(create(out.join("table.csv"))?)?;
    agent.save(out.join("agent.kdpg"))?;
    println!(
        "{} episodes, {} handoffs, {} converged, {} new, store holds {}",
        summary.episodes,
        summary.handoffs,
        summary.converged,
        summary.admitted.len(),
        store.len()
    );
    Ok(())
}

fn goal_state(integ: &Integrator, store_dir: &Path, goal: &str) -> Result<SpectralField, Failure> {
    let store = load_store(store_dir, integ)?;
    store.get(goal).map(|r| r.spec.clone()).ok_or_else(|| usage(format!("no record {goal:?} in {}", store_dir.display())))
}

fn navigate_cmd(cfg: &RunConfig, integ: &Integrator, out: &Path, goal: &str, store_dir: &Path) -> Outcome {
    let goal = goal_state(integ, store_dir, goal)?;
    open_run(out, cfg)?;
    let ctx = context(cfg, integ, TaskKind::Navigation, Some(&goal))?;
    let noise = cfg.noise(NoiseSchedule::NAVIGATION_ALPHA_MIN);
    let mut agent = Agent::new(ctx.obs_dim(), ctx.act_dim(), cfg.hyper(), noise, cfg.seed)?;
    let task = TaskSpec {
        kind: TaskKind::Navigation,
        goal: Some(goal),
        episode_steps: cfg.episode_steps,
        reward_threshold: cfg.reward_threshold,
        n_parallel: cfg.n_parallel,
        episodes: cfg.episodes,
    };
    let mut log = create(out.join("training.csv"))?;
    let summary = navigate(&ctx, &mut agent, &task, cfg.seed, &mut log, cfg.threads > 1);
    log.flush()?;
    let summary = summary?;
    agent.save(out.join("agent.kdpg"))?;
    let start = relaxed_state(cfg, integ, u64::MAX)?;
    let trace = evaluate_policy(&ctx, &agent, &start, cfg.eval_steps)?;
    trace.write_csv(create(out.join("eval.csv"))?)?;
    let (head, tail) = summary.head_tail_medians(50);
    println!("training end distance median: first {head:.3}, last {tail:.3}");
    match trace.settling_time(0.1) {
        Some(t) => println!("evaluation: within 10% of the initial distance from t = {t:.2}"),
        None => println!("evaluation: did not settle within 10% of the initial distance"),
    }
    Ok(())
}

fn compare(cfg: &RunConfig, integ: &Integrator, out: &Path, agent_path: &Path, pairs: usize) -> Outcome {
    if !agent_path.is_file() {
        return Err(usage(format!("missing checkpoint {}", agent_path.display())));
    }
    let mut agent = Agent::load(agent_path)?;
    open_run(out, cfg)?;
    let ctx = context(cfg, integ, TaskKind::Identification, None)?;
    let report = compare_iterations(&ctx, &mut agent, pairs, cfg.episode_steps, &cfg.jfnk(), cfg.seed)?;
    report.write_csv(create(out.join("compare.csv"))?)?;
    let curves = out.join("residuals");
    fs::create_dir_all(&curves)?;
    for (i, t) in report.trials.iter().enumerate() {
        for (tag, h) in [("raw", &t.raw_history), ("drl", &t.drl_history)] {
            let mut w = create(curves.join(format!("{tag}_{i:03}.csv")))?;
            writeln!(w, "iteration,log10_relative_residual")?;
            for (k, r) in h.iter().enumerate() {
                writeln!(w, "{k},{}", r.log10())?;
            }
            w.flush()?;
        }
    }
    println!(
        "mean iterations raw {:.2} / drl {:.2}; mean initial residual raw {:.3e} / drl {:.3e}; p = {:.3}",
        report.raw_mean_iterations(),
        report.drl_mean_iterations(),
        report.raw_mean_initial_residual(),
        report.drl_mean_initial_residual(),
        report.iteration_p_value()
    );
    Ok(())
}

fn sweep(cfg: &RunConfig, integ: &Integrator, out: &Path, goal: &str, store_dir: &Path) -> Outcome {
    let goal = goal_state(integ, store_dir, goal)?;
    open_run(out, cfg)?;
    let spec = SweepSpec {
        m_values: cfg.sweep_m.clone(),
        sigma_values: cfg.sweep_sigma.clone(),
        a_max: cfg.a_max,
        episodes: cfg.sweep_episodes,
        episode_steps: cfg.episode_steps,
        hyper: cfg.hyper(),
        noise: cfg.noise(NoiseSchedule::NAVIGATION_ALPHA_MIN),
        relax_steps: cfg.relax_steps,
        seed: cfg.seed,
    };
    let cells = hyperparameter_sweep(integ, &cfg.sensor_layout()?, &goal, &spec)?;
    write_sweep(&cells, create(out.join("sweep.csv"))?)?;
    if let Some(best) = cells.iter().max_by(|a, b| a.objective.total_cmp(&b.objective)) {
        println!("best cell m = {}, sigma = {}: objective {:.3e}", best.m, best.sigma, best.objective);
    }
    Ok(())
}

fn verify(integ: &Integrator, store_dir: Option<&Path>, file: Option<&Path>) -> Outcome {
    if let Some(p) = file {
        let spec = read_state(p, integ)?;
        let r = store::verify(&spec, integ, store::VERIFY_TOLERANCE)?;
        println!("{}: relative residual {r:.3e}", p.display());
    }
    if let Some(dir) = store_dir {
        let store = load_store(dir, integ)?;
        for r in store.records() {
            println!("{}: relative residual {:.3e}", r.id, r.relative_residual);
        }
        println!("{} records verified", store.len());
    }
    Ok(())
}

fn export(cfg: &RunConfig, integ: &Integrator, out: &Path, store_dir: &Path, pgm: bool) -> Outcome {
    let store = load_store(store_dir, integ)?;
    open_run(out, cfg)?;
    let mut table = Vec::new();
    store.export_table(&mut table)?;
    fs::write(out.join("table.csv"), &table)?;
    std::io::stdout().write_all(&table)?;
    if pgm {
        for r in store.records() {
            store::write_pgm(&integ.to_physical(&r.spec), false, create(out.join(format!("{}.pgm", r.id)))?)?;
        }
    }
    Ok(())
}
