use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use multiac6_core::checkpoint::{Checkpoint, TrainingMetadata};
use multiac6_core::dataset::{self, DatasetFile, GenerationConfig, WorkspaceBox};
use multiac6_core::ddpg::Greedy;
use multiac6_core::rewards::{render_csv, render_table, ReportRow, RewardKind};
use multiac6_core::task::{self, Actuation, DeformationGoal};
use multiac6_core::trainer::{
    self, AgentRole, EpisodeLog, EvalAgents, EvalMode, TaskSetup, TrainHooks, TrainingLog,
};
use multiac6_core::{DVec3, DdpgAgent, Error, MlpNetwork, RunConfig};

#[derive(Parser)]
#[command(name = "multiac6", version, about = "Two-agent shape control of a deformable linear object")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a goal dataset in a workspace box.
    GenDataset {
        #[arg(long = "box")]
        workspace: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one agent and write its checkpoint.
    Train {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        dataset: PathBuf,
        /// Position-task reward: max, mean or dtw.
        #[arg(long, default_value = "max")]
        reward: String,
        #[arg(long)]
        out: PathBuf,
        /// Per-episode training log as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate trained agents on a dataset.
    Eval {
        #[command(flatten)]
        agents: AgentArgs,
        #[arg(long, required = true, num_args = 1..)]
        dataset: Vec<PathBuf>,
        #[arg(long, default_value = "multiac6")]
        mode: String,
        /// Position thresholds in centimeters.
        #[arg(long, value_delimiter = ',', default_value = "5,3")]
        delta_p: Vec<f64>,
        /// Uniform per-axis noise on the goal orientation, degrees.
        #[arg(long, default_value_t = 0.0)]
        zeta_noise: f64,
        /// Also report success rate at each of these noise levels (degrees).
        #[arg(long, value_delimiter = ',')]
        noise_sweep: Vec<f64>,
        /// Evaluate at most this many goals from each dataset.
        #[arg(long)]
        limit: Option<usize>,
        /// Text report path; a CSV is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one greedy episode and write its trace.
    Rollout {
        #[command(flatten)]
        agents: AgentArgs,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, conflicts_with = "inline_goal")]
        goal: Option<usize>,
        /// Goal as `3m` feature coordinates followed by 3 orientation angles.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        inline_goal: Option<Vec<f64>>,
        #[arg(long, default_value = "multiac6")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the trace as JSON to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print a checkpoint's role, shapes and training metadata.
    InspectCheckpoint { path: PathBuf },
}

#[derive(Args)]
struct AgentArgs {
    /// Position agent, or the AC3/AC6 baseline agent.
    #[arg(long)]
    position: PathBuf,
    /// Orientation agent; required by multiac6 mode.
    #[arg(long)]
    orientation: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::Dimension { .. } | Error::Incompatible(_) | Error::Parse { .. } => 2,
        Error::Io { .. } | Error::Divergence { .. } | Error::NotReady { .. } => 3,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env_overrides();
            c
        }
    };
    match cli.command {
        Command::GenDataset { workspace, n, seed, out } => gen_dataset(&config, &workspace, n, seed, &out),
        Command::Train { agent, dataset, reward, out, log, quiet } => {
            train(&config, &agent, &dataset, &reward, &out, log.as_deref(), quiet)
        }
        Command::Eval { agents, dataset, mode, delta_p, zeta_noise, noise_sweep, limit, out } => eval(
            &config,
            &agents,
            &dataset,
            &mode,
            &delta_p,
            zeta_noise,
            &noise_sweep,
            limit,
            out.as_deref(),
        ),
        Command::Rollout { agents, dataset, goal, inline_goal, mode, out, json } => rollout(
            &config,
            &agents,
            dataset.as_deref(),
            goal,
            inline_goal.as_deref(),
            &mode,
            &out,
            json.as_deref(),
        ),
        Command::InspectCheckpoint { path } => inspect(&path),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn gen_dataset(config: &RunConfig, workspace: &str, n: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let workspace: WorkspaceBox = workspace.parse()?;
    let sim = config.simulator()?;
    let gen = GenerationConfig {
        m: config.feature_points,
        home: DVec3::from_array(config.home),
        move_speed: config.max_lin_vel,
        ..GenerationConfig::default()
    };
    let data = dataset::generate(&sim, workspace, n, seed, &gen)?;
    data.save(out)?;
    let straight = dataset::straight_features(&sim, config.feature_points)?;
    let mags = data
        .goals()
        .map(|g| dataset::deformation_magnitude(g, &straight))
        .collect::<Result<Vec<f64>, _>>()?;
    if mags.is_empty() {
        println!("0 records in the {workspace} box -> {}", out.display());
        return Ok(());
    }
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let max = mags.iter().copied().fold(0.0, f64::max);
    let large = mags.iter().filter(|&&m| m > 0.15).count();
    println!(
        "{} records in the {workspace} box -> {}\ndeformation vs straight: mean {:.3} m, max {:.3} m, {large} above 0.15 m",
        data.len(),
        out.display(),
        mean,
        max
    );
    Ok(())
}

fn load_dataset(config: &RunConfig, path: &Path) -> Result<DatasetFile, Error> {
    let path = if path.is_relative() && !path.exists() {
        config.dataset_dir.join(path)
    } else {
        path.to_path_buf()
    };
    let sim = config.simulator()?;
    let data = DatasetFile::load(&path, Some(&sim.parameter_hash()))?;
    if let Some(w) = data.warning() {
        eprintln!("warning: {}: {w}", path.display());
    }
    if data.header.m != config.feature_points {
        return Err(Error::Incompatible(format!(
            "{} has m = {}, configuration uses {}",
            path.display(),
            data.header.m,
            config.feature_points
        )));
    }
    Ok(data)
}

fn print_episode(e: &EpisodeLog) {
    println!(
        "episode {:>5} worker {:>2} steps {:>3} return {:>10.3} error {:.4} {}",
        e.episode,
        e.worker,
        e.steps,
        e.episode_return,
        e.final_error,
        if e.success { "success" } else { "" }
    );
}

fn train(
    config: &RunConfig,
    role: &str,
    dataset_path: &Path,
    reward: &str,
    out: &Path,
    log_path: Option<&Path>,
    quiet: bool,
) -> Result<(), Error> {
    let role: AgentRole = role.parse()?;
    let reward: RewardKind = reward.parse()?;
    let data = load_dataset(config, dataset_path)?;
    let (train_split, _) = dataset::split_seen(&data, config.train_fraction, config.seed)?;
    let goals: Vec<DeformationGoal> = train_split.goals().cloned().collect();
    let setup = config.task_setup()?;
    let tc = config.trainer_config();
    let make_meta = |episodes: usize| TrainingMetadata {
        episodes_completed: episodes,
        seed: config.seed,
        hyperparams: config.hyperparams(),
        dataset_hash: data.content_hash(),
        reward: (role != AgentRole::Orientation).then_some(reward),
        m: config.feature_points,
    };
    let mut on_episode = |e: &EpisodeLog| {
        if !quiet {
            print_episode(e)
        }
    };
    let mut on_checkpoint = |agent: &DdpgAgent, log: &TrainingLog| {
        Checkpoint::from_agent(agent, role, make_meta(log.episodes.len())).save(out)
    };
    let mut hooks = TrainHooks {
        on_episode: Some(&mut on_episode),
        on_checkpoint: Some(&mut on_checkpoint),
    };
    let (_, log) = match role {
        AgentRole::Orientation => trainer::train_agent_o(&tc, &setup, &goals, &mut hooks)?,
        AgentRole::Position => trainer::train_agent_p(&tc, &setup, &goals, reward, &mut hooks)?,
        AgentRole::Ac3 => trainer::train_single_agent(&tc, &setup, &goals, reward, Actuation::Translation, &mut hooks)?,
        AgentRole::Ac6 => trainer::train_single_agent(&tc, &setup, &goals, reward, Actuation::Full, &mut hooks)?,
    };
    if let Some(p) = log_path {
        write(p, &log.to_csv())?;
    }
    let successes = log.episodes.iter().filter(|e| e.success).count();
    println!(
        "trained {role}: {} episodes, {} transitions, {} updates, {successes} successful episodes -> {}",
        log.episodes.len(),
        log.transitions,
        log.updates,
        out.display()
    );
    Ok(())
}

struct LoadedAgents {
    orientation: Option<MlpNetwork>,
    main: MlpNetwork,
}

fn load_agents(args: &AgentArgs, mode: EvalMode) -> Result<LoadedAgents, Error> {
    let main_ckpt = Checkpoint::load(&args.position)?;
    let expected = match mode {
        EvalMode::Multiac6 | EvalMode::Multiac6Star => AgentRole::Position,
        EvalMode::Ac3 => AgentRole::Ac3,
        EvalMode::Ac6 => AgentRole::Ac6,
    };
    if main_ckpt.role != expected {
        return Err(Error::Incompatible(format!(
            "{mode} needs a {expected} checkpoint, {} holds {}",
            args.position.display(),
            main_ckpt.role
        )));
    }
    let orientation = match (mode, &args.orientation) {
        (EvalMode::Multiac6, Some(p)) => {
            let c = Checkpoint::load(p)?;
            if c.role != AgentRole::Orientation {
                return Err(Error::Incompatible(format!("{} is not an orientation checkpoint", p.display())));
            }
            Some(c.actor()?)
        }
        (EvalMode::Multiac6, None) => {
            return Err(Error::Usage("multiac6 mode needs --orientation".into()));
        }
        _ => None,
    };
    Ok(LoadedAgents {
        orientation,
        main: main_ckpt.actor()?,
    })
}

#[allow(clippy::too_many_arguments)]
fn eval(
    config: &RunConfig,
    agent_args: &AgentArgs,
    datasets: &[PathBuf],
    mode: &str,
    delta_cm: &[f64],
    zeta_noise: f64,
    sweep: &[f64],
    limit: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Error> {
    let mode: EvalMode = mode.parse()?;
    if delta_cm.is_empty() || delta_cm.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Usage("--delta-p needs positive thresholds in centimeters".into()));
    }
    let loaded = load_agents(agent_args, mode)?;
    let agents = EvalAgents {
        orientation: loaded.orientation.as_ref(),
        main: &loaded.main,
    };
    let setup = config.task_setup()?;
    let deltas: Vec<f64> = delta_cm.iter().map(|d| d / 100.0).collect();
    let mut results = Vec::new();
    let mut sweeps = Vec::new();
    for path in datasets {
        let data = load_dataset(config, path)?;
        let mut goals: Vec<DeformationGoal> = data.goals().cloned().collect();
        if let Some(n) = limit {
            goals.truncate(n);
        }
        if goals.is_empty() {
            return Err(Error::Usage(format!("{} holds no goals", path.display())));
        }
        let label = data.header.box_name.to_string();
        for (d, report) in trainer::evaluate_thresholds(agents, &goals, &setup, mode, zeta_noise, config.seed, &deltas)? {
            results.push((label.clone(), d, report));
        }
        for &noise in sweep {
            let r = trainer::evaluate(agents, &goals, &setup, mode, noise, config.seed)?;
            sweeps.push((label.clone(), noise, r.sr));
        }
    }
    let rows: Vec<ReportRow<'_>> = results
        .iter()
        .map(|(label, d, r)| ReportRow { label: label.clone(), delta_p: *d, report: r })
        .collect();
    let table = render_table(&rows);
    print!("{mode}\n{table}");
    let mut sweep_text = String::new();
    if !sweeps.is_empty() {
        sweep_text.push_str("dataset,zeta_noise_deg,sr\n");
        for (label, noise, sr) in &sweeps {
            sweep_text.push_str(&format!("{label},{noise},{sr}\n"));
        }
        print!("{sweep_text}");
    }
    if let Some(out) = out {
        write(out, &format!("{mode}\n{table}"))?;
        write(&out.with_extension("csv"), &render_csv(&rows))?;
        if !sweeps.is_empty() {
            let mut name = out.file_stem().unwrap_or_default().to_os_string();
            name.push("_sweep.csv");
            write(&out.with_file_name(name), &sweep_text)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn rollout(
    config: &RunConfig,
    agent_args: &AgentArgs,
    dataset_path: Option<&Path>,
    goal_index: Option<usize>,
    inline: Option<&[f64]>,
    mode: &str,
    out: &Path,
    json: Option<&Path>,
) -> Result<(), Error> {
    let mode: EvalMode = mode.parse()?;
    let m = config.feature_points;
    let goal = match (inline, dataset_path, goal_index) {
        (Some(v), _, _) => {
            if v.len() != 3 * m + 3 {
                return Err(Error::Usage(format!("--inline-goal needs {} numbers, got {}", 3 * m + 3, v.len())));
            }
            let pts = v[..3 * m].chunks_exact(3).map(DVec3::from_slice).collect();
            DeformationGoal::new(pts, DVec3::from_slice(&v[3 * m..]))
        }
        (None, Some(path), Some(i)) => {
            let data = load_dataset(config, path)?;
            data.records
                .get(i)
                .map(|r| r.goal.clone())
                .ok_or_else(|| Error::Usage(format!("goal {i} out of range: dataset holds {}", data.len())))?
        }
        _ => return Err(Error::Usage("rollout needs --dataset with --goal, or --inline-goal".into())),
    };
    let loaded = load_agents(agent_args, mode)?;
    let setup: TaskSetup = config.task_setup()?;
    let ep = &setup.episode;
    let actuation = if mode == EvalMode::Ac6 { Actuation::Full } else { Actuation::Translation };
    let mut penv = setup.position_env(RewardKind::Max, actuation, ep.max_steps_p)?;
    let mut oenv = setup.orientation_env(ep.max_steps_o)?;
    let mut main = Greedy(&loaded.main);
    let trace = match mode {
        EvalMode::Multiac6 => {
            let mut o = Greedy(loaded.orientation.as_ref().expect("checked by load_agents"));
            task::run_episode_multiac6(&mut oenv, &mut penv, &mut o, &mut main, &goal, false, true)?
        }
        EvalMode::Multiac6Star => task::run_episode_multiac6_star(&mut penv, &mut main, &goal, false, true)?,
        EvalMode::Ac3 | EvalMode::Ac6 => task::run_episode_single_agent(&mut penv, &mut main, &goal, false, true)?,
    };
    write(out, &trace.to_csv(m, setup.sim.params().num_particles))?;
    if let Some(j) = json {
        write(j, &trace.to_json())?;
    }
    for o in &trace.outcomes {
        println!(
            "{:<12} steps {:>3} final error {:.4} {}",
            o.phase.as_str(),
            o.steps,
            o.final_error,
            if o.success { "success" } else { "failure" }
        );
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<(), Error> {
    let c = Checkpoint::load(path)?;
    let m = &c.metadata;
    println!("format version {}", c.format_version);
    println!("role           {}", c.role);
    println!(
        "actor          {:?} {} ({} parameters)",
        c.actor_architecture.layer_sizes,
        c.actor_architecture.output_activation,
        c.actor_architecture.parameter_count()
    );
    println!(
        "critic         {:?} {} ({} parameters)",
        c.critic_architecture.layer_sizes,
        c.critic_architecture.output_activation,
        c.critic_architecture.parameter_count()
    );
    println!("optimizer step {}", c.actor_optimizer.step_count);
    println!("episodes       {}", m.episodes_completed);
    println!("seed           {}", m.seed);
    println!("dataset hash   {}", m.dataset_hash);
    if let Some(r) = m.reward {
        println!("reward         {r}");
    }
    println!("feature points {}", m.m);
    println!(
        "learner        gamma {} tau {} actor_lr {} critic_lr {} batch {} buffer {}",
        m.hyperparams.gamma,
        m.hyperparams.tau,
        m.hyperparams.actor_lr,
        m.hyperparams.critic_lr,
        m.hyperparams.batch_size,
        m.hyperparams.buffer_capacity
    );
    Ok(())
}
