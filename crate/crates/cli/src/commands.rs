use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use forcerl_core::config::{load_config, LoadedConfig};
use forcerl_core::controller::PolicyController;
use forcerl_core::experiments::{
    self, force_tracking_experiment, line_chart, stick_slip_demo, DemoConfig, RampSchedule, Series,
};
use forcerl_core::trainer::{self, EpochMetrics, TrainError};
use forcerl_core::{Checkpoint, Config, EnvConfig, ForceController, Mlp, OracleController};
use serde::Serialize;

use crate::manifest::{self, RunManifest};
use crate::{io_err, output_root, CliError};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML configuration; every section is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy variant name, overriding `experiment.variant`.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Rollouts per epoch.
    #[arg(long)]
    rollouts: Option<usize>,
    /// Run directory; defaults to `$FORCERL_OUT/<variant>-seed<seed>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where a controller comes from for the evaluation commands.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Checkpoint JSON written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use the full-information reference controller instead.
    #[arg(long)]
    oracle: bool,
}

#[derive(Debug, Args)]
pub struct SourceConfig {
    /// Configuration for `--oracle` runs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the checkpoint's directory or
    /// `$FORCERL_OUT/oracle`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    extra: SourceConfig,
    #[arg(long, default_value_t = 50)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    extra: SourceConfig,
    /// Sensor contact angle in degrees; repeatable. Defaults to the
    /// configured tracking angles.
    #[arg(long, allow_hyphen_values = true)]
    angle: Vec<f64>,
    /// Goal staircase `start:step:end` in newtons.
    #[arg(long)]
    ramp: Option<RampSchedule>,
    /// Steps per goal level.
    #[arg(long)]
    hold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StickSlipArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    extra: SourceConfig,
    /// Goal normal force, N.
    #[arg(long)]
    goal: f64,
}

fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(LoadedConfig {
            config: Config::default(),
            defaulted: forcerl_core::config::SECTIONS.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let LoadedConfig { mut config, defaulted } = load(args.config.as_deref())?;
    if let Some(v) = args.variant {
        config.experiment.variant = v;
    }
    if let Some(s) = args.seed {
        config.train.seed = s;
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(r) = args.rollouts {
        config.train.rollouts_per_epoch = r;
    }
    config.validate()?;
    let (env, train_cfg) = config.resolved()?;
    let dir = args.out.unwrap_or_else(|| {
        output_root().join(format!("{}-seed{}", config.experiment.variant, config.train.seed))
    });
    let ck_dir = dir.join(manifest::CHECKPOINT_DIR);
    create_dir(&ck_dir)?;

    let mut run = RunManifest::new(&config, defaulted);
    run.write(&dir)?;
    write(&dir.join(manifest::CONFIG_FILE), config.to_toml())?;
    let metrics_path = dir.join(manifest::METRICS_FILE);
    write(&metrics_path, EpochMetrics::csv_header() + "\n")?;

    let mut io_failure: Option<CliError> = None;
    let every = train_cfg.checkpoint_every;
    let mut on_epoch = |m: &EpochMetrics, agent: &forcerl_core::Agent| {
        if io_failure.is_some() {
            return;
        }
        let append = || -> Result<(), CliError> {
            let mut f = OpenOptions::new()
                .append(true)
                .open(&metrics_path)
                .map_err(|e| io_err(&metrics_path, e))?;
            writeln!(f, "{}", m.csv_row()).map_err(|e| io_err(&metrics_path, e))?;
            if every > 0 && m.epoch % every == 0 {
                let path = ck_dir.join(format!("epoch_{:04}.json", m.epoch));
                Checkpoint::capture(agent, &config, m.epoch)
                    .save(&path)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            Ok(())
        };
        if let Err(e) = append() {
            io_failure = Some(e);
        }
        println!(
            "epoch {:>4}  score {:.4}  left {:.4}  right {:.4}",
            m.epoch, m.score, m.score_left, m.score_right
        );
    };

    let outcome = trainer::train(&train_cfg, &env, &mut on_epoch);
    if let Some(e) = io_failure {
        return Err(e);
    }
    match outcome {
        Ok(out) => {
            Checkpoint::capture(&out.agent, &config, out.metrics.len())
                .save(&dir.join(manifest::FINAL_CHECKPOINT))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write(&dir.join(manifest::FINAL_REPORT), to_json(&out.final_report))?;
            run.epochs_completed = out.metrics.len();
            run.status = "complete".into();
            run.finished_at = Some(manifest::now());
            run.write(&dir)?;
            println!("run written to {}", dir.display());
            Ok(())
        }
        Err(TrainError::Config(e)) => Err(e.into()),
        Err(TrainError::Env(e)) => Err(CliError::Runtime(e.to_string())),
        Err(TrainError::NonFinite {
            epoch,
            update,
            snapshot,
            metrics,
        }) => {
            let path = dir.join(manifest::SNAPSHOT_FILE);
            Checkpoint::capture(&snapshot, &config, metrics.len())
                .save(&path)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            run.epochs_completed = metrics.len();
            run.status = format!("aborted: non-finite loss at epoch {epoch}, update {update}");
            run.finished_at = Some(manifest::now());
            run.write(&dir)?;
            Err(CliError::Runtime(format!(
                "non-finite loss at epoch {epoch}, update {update}; snapshot in {}",
                path.display()
            )))
        }
    }
}

/// A loaded controller plus the environment it should run in.
struct Resolved {
    actor: Option<Mlp>,
    env: EnvConfig,
    config: Config,
    out: PathBuf,
}

impl Resolved {
    fn controller(&self) -> Box<dyn ForceController + '_> {
        match &self.actor {
            Some(actor) => Box::new(PolicyController(actor)),
            None => Box::new(OracleController::default()),
        }
    }

    fn label(&self) -> &'static str {
        if self.actor.is_some() {
            "policy"
        } else {
            "oracle"
        }
    }
}

fn resolve(source: &Source, extra: &SourceConfig) -> Result<Resolved, CliError> {
    let resolved = match &source.checkpoint {
        Some(path) => {
            if extra.config.is_some() {
                return Err(CliError::Config(
                    "--config applies to --oracle; a checkpoint carries its own configuration".into(),
                ));
            }
            let ck = Checkpoint::load(path).map_err(|e| CliError::Runtime(e.to_string()))?;
            let out = extra.out.clone().unwrap_or_else(|| {
                path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
            });
            Resolved {
                actor: Some(ck.actor().map_err(|e| CliError::Runtime(e.to_string()))?),
                env: ck.env_config().map_err(|e| CliError::Runtime(e.to_string()))?,
                config: ck.config,
                out,
            }
        }
        None => {
            let config = load(extra.config.as_deref())?.config;
            config.validate()?;
            Resolved {
                actor: None,
                env: config.resolved()?.0,
                config,
                out: extra.out.clone().unwrap_or_else(|| output_root().join("oracle")),
            }
        }
    };
    create_dir(&resolved.out)?;
    Ok(resolved)
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    if args.rollouts == 0 {
        return Err(CliError::Config("--rollouts must be positive".into()));
    }
    let r = resolve(&args.source, &args.extra)?;
    let mut controller = r.controller();
    let report = experiments::evaluate_controller(controller.as_mut(), &r.env, args.rollouts, args.seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let stem = format!("eval_{}_seed{}", r.label(), args.seed);
    write(&r.out.join(format!("{stem}.json")), to_json(&report))?;
    write(&r.out.join(format!("{stem}_rollouts.csv")), report.rollouts_csv())?;
    println!(
        "score {:.4}  left {}  right {}",
        report.score,
        fmt_opt(report.score_left),
        fmt_opt(report.score_right)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

#[derive(Debug, Serialize)]
struct TrackingSummary {
    controller: &'static str,
    angle_deg: f64,
    broke_contact: bool,
    worst_error_from_step_3: f64,
    steady_state_error: f64,
    settling_steps_within_0_4: Vec<Option<usize>>,
}

pub fn track(args: TrackArgs) -> Result<(), CliError> {
    let r = resolve(&args.source, &args.extra)?;
    let mut schedule = args.ramp.unwrap_or(r.config.experiment.ramp);
    if let Some(h) = args.hold {
        schedule.hold_steps = h;
    }
    if schedule.hold_steps == 0 {
        return Err(CliError::Config("--hold must be positive".into()));
    }
    let angles = if args.angle.is_empty() {
        r.config.experiment.tracking_angles_deg.clone()
    } else {
        args.angle.clone()
    };
    let mut controller = r.controller();
    for deg in angles {
        let run = force_tracking_experiment(controller.as_mut(), &r.env, deg.to_radians(), schedule)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let stem = format!("track_{}_angle{deg}", r.label());
        write(&r.out.join(format!("{stem}.csv")), run.to_csv())?;
        let t: Vec<f64> = run.steps.iter().map(|s| s.step as f64).collect();
        let svg = line_chart(
            &format!("Force tracking at {deg} deg"),
            "step",
            "normal force (N)",
            &[
                Series {
                    label: "goal".into(),
                    x: t.clone(),
                    y: run.steps.iter().map(|s| s.goal).collect(),
                    band: None,
                },
                Series {
                    label: "measured".into(),
                    x: t,
                    y: run.steps.iter().map(|s| s.f_n).collect(),
                    band: None,
                },
            ],
        );
        write(&r.out.join(format!("{stem}.svg")), svg)?;
        let summary = TrackingSummary {
            controller: r.label(),
            angle_deg: deg,
            broke_contact: run.broke_contact(),
            worst_error_from_step_3: run.worst_error_after(3),
            steady_state_error: run.steady_state_error(),
            settling_steps_within_0_4: run.settling_steps(0.4),
        };
        write(&r.out.join(format!("{stem}.json")), to_json(&summary))?;
        println!(
            "angle {deg:>6}  worst error after 3 steps {:.4} N  broke contact {}",
            summary.worst_error_from_step_3, summary.broke_contact
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DemoSummary {
    controller: &'static str,
    goal: f64,
    box_displacement: f64,
    labels_consistent: bool,
    mode_counts: Vec<(String, usize)>,
}

pub fn stick_slip(args: StickSlipArgs) -> Result<(), CliError> {
    if !(args.goal > 0.0 && args.goal.is_finite()) {
        return Err(CliError::Config("--goal must be a positive force".into()));
    }
    let r = resolve(&args.source, &args.extra)?;
    let cfg = DemoConfig {
        goal: args.goal,
        ..r.config.experiment.demo
    };
    let mut controller = r.controller();
    let result =
        stick_slip_demo(controller.as_mut(), &r.env, cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    let stem = format!("stick_slip_{}_goal{}", r.label(), args.goal);
    write(&r.out.join(format!("{stem}.csv")), result.to_csv())?;
    let mut counts: Vec<(String, usize)> = Vec::new();
    for s in &result.steps {
        match counts.iter_mut().find(|(l, _)| l == s.mode.label()) {
            Some((_, c)) => *c += 1,
            None => counts.push((s.mode.label().into(), 1)),
        }
    }
    let summary = DemoSummary {
        controller: r.label(),
        goal: args.goal,
        box_displacement: result.box_displacement(),
        labels_consistent: result.labels_consistent(),
        mode_counts: counts,
    };
    write(&r.out.join(format!("{stem}.json")), to_json(&summary))?;
    println!(
        "goal {} N  box displacement {:.4} m  modes {:?}",
        args.goal, summary.box_displacement, summary.mode_counts
    );
    Ok(())
}
