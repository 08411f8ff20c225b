use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, ArgMatches};

use mfgan_cli::{run_experiment, CliError, Command, ExperimentConfig, Kind, OUT_DIR_ENV};

fn flag(name: &str) -> String {
    name.replace('_', "-")
}

fn value_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Int | Kind::AutoInt => "N",
        Kind::Float | Kind::OptFloat => "X",
        Kind::Bool => "BOOL",
        Kind::Text => "PATH",
        Kind::Choice(_) => "NAME",
        Kind::ChoiceList(_) => "NAMES",
        Kind::IntList => "N,..",
        Kind::FloatList => "X,..",
    }
}

fn common_args(cmd: clap::Command) -> clap::Command {
    cmd.arg(Arg::new("config").long("config").short('c').value_name("FILE").value_parser(clap::value_parser!(PathBuf)).help("config file"))
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("override any key (bare name or section.key)"),
        )
}

fn cli() -> clap::Command {
    let mut app = clap::Command::new("mfgan")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Adversarial mean-field-game solver and GAN training dynamics experiments")
        .after_help(format!("Output goes to ${OUT_DIR_ENV}/<subcommand> unless --out-dir is given.\nExit codes: 0 success, 1 config error, 2 numerical abort, 3 I/O failure."))
        .subcommand_required(true)
        .subcommand(common_args(clap::Command::new("run").about("Run the experiment described by a config or manifest file")));
    for c in Command::ALL {
        let mut sub = common_args(clap::Command::new(c.name()).about(c.about()));
        for k in c.keys() {
            let default = if k.default.is_empty() { String::new() } else { format!(" [default: {}]", k.default) };
            sub = sub.arg(
                Arg::new(k.name)
                    .long(flag(k.name))
                    .value_name(value_name(k.kind))
                    .help(format!("{}{default}", k.help)),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn resolve(name: &str, m: &ArgMatches) -> Result<ExperimentConfig, CliError> {
    let command = if name == "run" { None } else { Some(name.parse::<Command>()?) };
    let file = match m.get_one::<PathBuf>("config") {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?),
        None if command.is_none() => return Err(CliError::config("--config", "`run` needs a config file")),
        None => None,
    };
    let mut overrides = Vec::new();
    if let Some(c) = command {
        for k in c.keys() {
            if let Some(v) = m.get_one::<String>(k.name) {
                overrides.push((k.name.to_string(), v.clone()));
            }
        }
    }
    for s in m.get_many::<String>("set").into_iter().flatten() {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::config(s, "expected KEY=VALUE"))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    ExperimentConfig::resolve(command, file.as_deref(), &overrides)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let outcome = resolve(name, sub).and_then(|cfg| run_experiment(&cfg));
    match outcome {
        Ok(report) => {
            print!("{}", report.summary);
            println!("metrics: {}", report.metrics_path().display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
