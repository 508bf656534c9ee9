use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcca::error::McError;
use mcca::kinematics::forward_kinematics;
use mcca::scenario::ScenarioSpec;
use mcca::trace::emit_svg;

#[derive(Parser)]
#[command(
    name = "mcca",
    about = "Multi-robot collision- and deadlock-free navigation simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write trajectory, metrics and trace artifacts.
    Run {
        /// Built-in scenario name (see `list`).
        #[arg(long, conflicts_with = "file")]
        scenario: Option<String>,
        /// Scenario JSON file.
        #[arg(long)]
        file: Option<PathBuf>,
        /// RNG seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Tick limit override.
        #[arg(long)]
        max_ticks: Option<u64>,
        /// Output directory for artifacts.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Config override as dotted.path=json_value, e.g.
        /// `weights.alpha5=0` or `noise_pos_amp_m=0.02`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Re-run the scenario and cross-check determinism and the logged
        /// kinematic consistency (slow; intended for small runs).
        #[arg(long)]
        oracle_mode: bool,
    },
    /// Print (or write) a built-in scenario as JSON.
    Dump {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in scenarios.
    List,
}

fn load_spec(scenario: &Option<String>, file: &Option<PathBuf>) -> Result<ScenarioSpec, McError> {
    match (scenario, file) {
        (Some(name), None) => ScenarioSpec::builtin(name)
            .ok_or_else(|| McError::InvalidScenario(format!("unknown built-in scenario {name}"))),
        (None, Some(path)) => ScenarioSpec::from_json(&std::fs::read_to_string(path)?),
        _ => Err(McError::InvalidScenario(
            "exactly one of --scenario or --file is required".into(),
        )),
    }
}

/// Applies `dotted.path=value` overrides to the embedded config by editing
/// its JSON representation, so field names match the scenario file format.
fn apply_overrides(spec: &mut ScenarioSpec, sets: &[String]) -> Result<(), McError> {
    if sets.is_empty() {
        return Ok(());
    }
    let mut value = serde_json::to_value(spec.config)?;
    for item in sets {
        let (key, raw) = item.split_once('=').ok_or_else(|| {
            McError::InvalidScenario(format!("override `{item}` is not KEY=VALUE"))
        })?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| McError::InvalidScenario(format!("unknown config field `{key}`")))?;
        }
        *slot = parsed;
    }
    spec.config = serde_json::from_value(value)?;
    Ok(())
}

/// Consistency checks over the emitted log: every record's effective
/// velocity must match the direct kinematics of its wheel speeds, and a
/// second run must reproduce the log byte for byte.
fn oracle_checks(spec: &ScenarioSpec, log: &str) -> Result<(), McError> {
    for line in log.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 9 {
            continue;
        }
        let id: usize = f[1].parse().unwrap_or(usize::MAX);
        let params = spec
            .robots
            .get(id)
            .and_then(|r| r.params)
            .unwrap_or_default();
        let theta: f64 = f[4].parse().unwrap_or(f64::NAN);
        let vl: f64 = f[5].parse().unwrap_or(f64::NAN);
        let vr: f64 = f[6].parse().unwrap_or(f64::NAN);
        let vx: f64 = f[7].parse().unwrap_or(f64::NAN);
        let vy: f64 = f[8].parse().unwrap_or(f64::NAN);
        let (ex, ey, _) = forward_kinematics(vl, vr, theta, &params);
        if (ex - vx).abs() > 1e-6 || (ey - vy).abs() > 1e-6 {
            return Err(McError::InvalidScenario(format!(
                "kinematic inconsistency in log line: {line}"
            )));
        }
    }
    let rerun = spec.build()?.run()?;
    if rerun.log != log {
        return Err(McError::InvalidScenario(
            "re-run produced a different trajectory log".into(),
        ));
    }
    Ok(())
}

fn cmd_run(
    scenario: Option<String>,
    file: Option<PathBuf>,
    seed: Option<u64>,
    max_ticks: Option<u64>,
    out_dir: &Path,
    sets: &[String],
    oracle_mode: bool,
) -> Result<u8, McError> {
    let mut spec = load_spec(&scenario, &file)?;
    apply_overrides(&mut spec, sets)?;
    if let Some(seed) = seed {
        spec.config.rng_seed = seed;
    }
    if let Some(ticks) = max_ticks {
        spec.config.max_ticks = ticks;
    }

    let mut world = spec.build()?;
    let out = world.run()?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("scenario.json"), spec.to_json()?)?;
    std::fs::write(out_dir.join("trajectory.tsv"), &out.log)?;
    std::fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&out.metrics)?,
    )?;
    std::fs::write(
        out_dir.join("trace.svg"),
        emit_svg(&out.log, &spec.obstacle_segments_m),
    )?;

    let m = &out.metrics;
    println!(
        "{}: {} ticks, {} collision(s), {} deadlock flag(s), min clearance {:.3} m",
        spec.name,
        m.ticks,
        m.collision_events.len(),
        m.deadlock_flags.len(),
        m.min_pairwise_clearance_m
    );
    if oracle_mode {
        oracle_checks(&spec, &out.log)?;
        println!("oracle checks passed");
    }

    if !m.collision_events.is_empty() {
        return Ok(2);
    }
    if !m.deadlock_flags.is_empty() {
        return Ok(3);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            scenario,
            file,
            seed,
            max_ticks,
            out_dir,
            set,
            oracle_mode,
        } => cmd_run(scenario, file, seed, max_ticks, &out_dir, &set, oracle_mode),
        Cmd::Dump { scenario, out } => (|| {
            let spec = ScenarioSpec::builtin(&scenario).ok_or_else(|| {
                McError::InvalidScenario(format!("unknown built-in scenario {scenario}"))
            })?;
            let text = spec.to_json()?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(0)
        })(),
        Cmd::List => {
            for name in ScenarioSpec::builtin_names() {
                println!("{name}");
            }
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e @ McError::TickAborted { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
