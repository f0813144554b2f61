use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

/// Frame-rate up-conversion forging and detection.
#[derive(Parser, Debug)]
#[command(name = "frucforge", version)]
struct Cli {
    /// `key = value` file supplying values for flags not given on the command line.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic test video.
    Synth(commands::SynthArgs),
    /// Up-convert a video and write the forged-frame mask.
    Forge(commands::ForgeArgs),
    /// Build a paired original/forged residual-stack cache.
    Dataset(commands::DatasetArgs),
    /// Train FCDNet on stack caches.
    Train(commands::TrainArgs),
    /// Classify videos by majority vote over sampled stacks.
    Detect(commands::DetectArgs),
    /// Score every six-frame window of a video.
    Localize(commands::LocalizeArgs),
    /// Metrics over a labeled manifest.
    Report(commands::ReportArgs),
    /// Solve the Block 3 channel widths for a parameter budget.
    Plan(commands::PlanArgs),
}

/// Bad invocation: exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Long flag names accepted by any subcommand, for config validation.
fn known_keys(cmd: &clap::Command) -> Vec<String> {
    let mut keys = Vec::new();
    for sub in cmd.get_subcommands() {
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                if !matches!(long, "config" | "help" | "version") {
                    keys.push(long.to_string());
                }
            }
        }
    }
    keys
}

/// Appends config values for flags of the chosen subcommand that the
/// command line left unset.
fn merge_config(args: &[OsString], cfg: &RunConfig) -> anyhow::Result<Vec<OsString>> {
    let cmd = Cli::command();
    let words: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(sub) = words.iter().find_map(|w| cmd.find_subcommand(w)) else {
        return Ok(args.to_vec());
    };
    let given = |arg: &clap::Arg| {
        let mut names: Vec<&str> = arg.get_long().into_iter().collect();
        names.extend(arg.get_all_aliases().unwrap_or_default());
        words.iter().any(|w| {
            names.iter().any(|n| {
                w.strip_prefix("--")
                    .is_some_and(|rest| rest == *n || rest.strip_prefix(n).is_some_and(|r| r.starts_with('=')))
            })
        })
    };
    let mut out = args.to_vec();
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        let Some((value, line)) = cfg.entries.get(long) else {
            continue;
        };
        if given(arg) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => out.push(format!("--{long}").into()),
                "false" => {}
                _ => {
                    return Err(usage(format!(
                        "{}:{line}: `{long}` must be true or false, got `{value}`",
                        cfg.path.display()
                    )))
                }
            },
            _ => out.push(format!("--{long}={value}").into()),
        }
    }
    Ok(out)
}

fn config_hint(err: &clap::Error, cfg: Option<&RunConfig>) -> String {
    let mut msg = err.render().to_string();
    if let (Some(cfg), Some(ContextValue::String(arg))) = (cfg, err.get(ContextKind::InvalidArg)) {
        let long = arg
            .trim_start_matches("--")
            .split([' ', '=', '<'])
            .next()
            .unwrap_or_default();
        if let Some(line) = cfg.line_of(long) {
            msg.push_str(&format!("(value for `{long}` from {}:{line})\n", cfg.path.display()));
        }
    }
    msg
}

fn parse(args: Vec<OsString>) -> anyhow::Result<Cli> {
    let early = Cli::command().ignore_errors(true).try_get_matches_from(&args).ok();
    let cfg_path = early.as_ref().and_then(|m| m.get_one::<PathBuf>("config").cloned());
    let (argv, cfg) = match cfg_path {
        Some(path) => {
            let cfg = RunConfig::load(&path).map_err(|e| usage(format!("{e:#}")))?;
            cfg.check_keys(&known_keys(&Cli::command()))
                .map_err(|e| usage(e.to_string()))?;
            (merge_config(&args, &cfg)?, Some(cfg))
        }
        None => (args, None),
    };
    let matches = Cli::command().try_get_matches_from(&argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => anyhow::Error::new(e),
        _ => usage(config_hint(&e, cfg.as_ref())),
    })?;
    Cli::from_arg_matches(&matches).map_err(|e| usage(e.render().to_string()))
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FRUCFORGE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("FRUCFORGE_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(args: Vec<OsString>) -> anyhow::Result<()> {
    let cli = parse(args)?;
    init_threads()?;
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Forge(a) => commands::forge(a),
        Command::Dataset(a) => commands::dataset(a),
        Command::Train(a) => commands::train(a),
        Command::Detect(a) => commands::detect(a),
        Command::Localize(a) => commands::localize(a),
        Command::Report(a) => commands::report(a),
        Command::Plan(a) => commands::plan(a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(e) = err.downcast_ref::<clap::Error>() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if let Some(u) = err.downcast_ref::<UsageError>() {
                eprint!("{}", u.0);
                if !u.0.ends_with('\n') {
                    eprintln!();
                }
                return ExitCode::from(1);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
