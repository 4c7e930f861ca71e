//! `qreset`: batch scenario runner.
//!
//! Settings are resolved as command-line flag, then `QRESET_*` environment
//! variable, then scenario file, then built-in default. Exit status is 0 on
//! success, 2 for configuration errors and 3 when a computation or fit
//! fails.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qreset::io::{write_file, Format};
use qreset::Exec;

use crate::commands::Ctx;
use crate::scenario::{Scenario, ENV_PREFIX};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(qreset::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
        }
    }
}

impl From<qreset::Error> for CliError {
    fn from(e: qreset::Error) -> Self {
        CliError::Compute(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
        }
    }
}

const RECIPES: [(&str, &str); 6] = [
    ("fig2", include_str!("../recipes/fig2.toml")),
    ("fig3", include_str!("../recipes/fig3.toml")),
    ("fig4", include_str!("../recipes/fig4.toml")),
    ("table3", include_str!("../recipes/table3.toml")),
    ("limits", include_str!("../recipes/limits.toml")),
    ("projection", include_str!("../recipes/projection.toml")),
];

#[derive(Parser, Debug)]
#[command(name = "qreset", version, about = "Unconditional qutrit reset: simulation, calibration and readout analysis")]
struct Cli {
    /// Scenario file (TOML). Env: QRESET_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Bundled scenario: fig2, fig3, fig4, table3, limits, projection.
    #[arg(long, global = true, value_name = "NAME", conflicts_with = "config")]
    recipe: Option<String>,
    /// Master seed for all random draws. Env: QRESET_SEED.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory. Env: QRESET_OUT.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Table format. Env: QRESET_FORMAT.
    #[arg(long, global = true, value_name = "csv|json")]
    format: Option<String>,
    /// Run every parallel kernel on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// May be omitted when the scenario names a `target`.
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Reset rate over a (g̃, Ω_ef) grid, plus the ridge of optimal Ω_ef.
    Landscape,
    /// Population trajectories and saturation values for drive configurations.
    ResetDynamics,
    /// Four-step drive calibration on the virtual lab or on recorded data.
    Calibrate,
    /// Assignment matrix, population correction and heralding threshold.
    Readout,
    /// Steady-state excitation limits.
    Limits,
    /// Dump synthetic calibration data, reference shots and herald samples.
    Lab,
    /// Print the bundled scenario files.
    Recipes,
}

impl Command {
    const RUNNABLE: [Command; 6] = [
        Command::Landscape,
        Command::ResetDynamics,
        Command::Calibrate,
        Command::Readout,
        Command::Limits,
        Command::Lab,
    ];

    fn name(self) -> &'static str {
        match self {
            Command::Landscape => "landscape",
            Command::ResetDynamics => "reset-dynamics",
            Command::Calibrate => "calibrate",
            Command::Readout => "readout",
            Command::Limits => "limits",
            Command::Lab => "lab",
            Command::Recipes => "recipes",
        }
    }
}

fn env_value(env: &[(String, String)], key: &str) -> Option<String> {
    env.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    if cli.command == Some(Command::Recipes) {
        let mut lines = Vec::new();
        for (name, text) in RECIPES {
            lines.push(format!("# --recipe {name}"));
            lines.push(text.trim_end().to_string());
            lines.push(String::new());
        }
        return Ok(lines);
    }
    let env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    let config = cli.config.clone().or_else(|| env_value(&env, "QRESET_CONFIG").map(PathBuf::from));
    let text = match (&cli.recipe, &config) {
        (Some(r), _) => RECIPES
            .iter()
            .find(|(n, _)| n == r)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| CliError::config(format!("unknown recipe `{r}`")))?,
        (None, Some(p)) => std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
        (None, None) => String::new(),
    };
    let sc = Scenario::parse(&text)?;
    let command = match (cli.command, &sc.target) {
        (Some(c), Some(t)) if t != c.name() => {
            return Err(CliError::config(format!("scenario is written for `{t}`, not `{}`", c.name())));
        }
        (Some(c), _) => c,
        (None, Some(t)) => *Command::RUNNABLE
            .iter()
            .find(|c| c.name() == t)
            .ok_or_else(|| CliError::config(format!("unknown scenario target `{t}`")))?,
        (None, None) => return Err(CliError::config("no subcommand given and the scenario has no `target`")),
    };
    let seed = match (cli.seed, env_value(&env, "QRESET_SEED")) {
        (Some(s), _) => s,
        (None, Some(v)) => v.parse().map_err(|_| CliError::config(format!("QRESET_SEED: `{v}` is not an integer")))?,
        (None, None) => sc.seed.unwrap_or(1),
    };
    let format_str = cli
        .format
        .clone()
        .or_else(|| env_value(&env, "QRESET_FORMAT"))
        .or_else(|| sc.format.clone())
        .unwrap_or_else(|| "csv".into());
    let format: Format = format_str.parse().map_err(|e: qreset::Error| CliError::config(e.to_string()))?;
    let out = cli
        .out
        .clone()
        .or_else(|| env_value(&env, "QRESET_OUT").map(PathBuf::from))
        .or_else(|| sc.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx {
        seed,
        format,
        params: sc.system_params(&env)?,
        exec: if cli.sequential { Exec::Sequential } else { Exec::Parallel },
    };
    let result = match command {
        Command::Landscape => commands::landscape_cmd(&ctx, &sc),
        Command::ResetDynamics => commands::dynamics_cmd(&ctx, &sc),
        Command::Calibrate => commands::calibrate_cmd(&ctx, &sc),
        Command::Readout => commands::readout_cmd(&ctx, &sc),
        Command::Limits => commands::limits_cmd(&ctx, &sc),
        Command::Lab => commands::lab_cmd(&ctx, &sc),
        Command::Recipes => unreachable!(),
    }?;
    let mut lines: Vec<String> = sc.name.iter().map(|n| format!("scenario {n}")).collect();
    lines.extend(result.summary);
    for (name, contents) in &result.files {
        let path = write_file(&out, name, contents).map_err(CliError::Compute)?;
        lines.push(format!("wrote {}", path.display()));
    }
    Ok(lines)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qreset: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
