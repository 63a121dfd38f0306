use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stempo::config::{self, ConfigErrors, Preset};
use stempo::{run_experiment, CliError, OUT_DIR_ENV};
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "stempo", version, about = "Structured-environment spin-boson experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Output directory (overrides `output_dir` and $STEMPO_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Treat truncation warnings and invariant violations as errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment.
    Run {
        /// Config file; may be omitted when `--preset` is given.
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a config and print its resolved form.
    Validate { config: PathBuf },
    /// Rerun TEMPO over a list of values of one parameter.
    Sweep {
        config: PathBuf,
        /// Dotted parameter path, e.g. `tempo.dt`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        opts: RunOpts,
    },
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    config::parse_raw(&raw).map_err(CliError::Config)
}

fn execute(table: Table, opts: RunOpts) -> Result<(), CliError> {
    let mut cfg = config::resolve(table).map_err(CliError::Config)?;
    cfg.strict |= opts.strict;
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(CliError::Config(ConfigErrors(vec!["--threads: must be ≥ 1".into()])));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global pool is configured once");
    }
    let out = opts
        .out
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("stempo-out"));
    let manifest = run_experiment(&cfg, &out)?;
    for p in &manifest.panels {
        let mut line = format!("{}: {:.1} s", p.name, p.wall_seconds);
        if let Some(t) = &p.tempo {
            line += &format!(", max bond {}", t.max_bond);
        }
        if let Some(d) = p.sup_diff {
            line += &format!(", sup |Δσz| = {d:.3e}");
        }
        if let Some(s) = &p.sweep {
            line += &format!(", sweep diffs {:?} (monotone: {})", s.diffs, s.monotone);
        }
        println!("{line}");
    }
    println!("manifest: {}", out.join(stempo::run::MANIFEST).display());
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, preset, opts } => {
            let mut table = match (&config, preset) {
                (Some(path), _) => read_table(path)?,
                (None, Some(_)) => Table::new(),
                (None, None) => {
                    return Err(CliError::Config(ConfigErrors(vec![
                        "run: give a config file or --preset".into(),
                    ])))
                }
            };
            if let Some(p) = preset {
                let name = match p {
                    Preset::Fig2 => "fig2",
                    Preset::Fig4 => "fig4",
                };
                table.insert("preset".into(), Value::String(name.into()));
            }
            execute(table, opts)
        }
        Command::Validate { config } => {
            let cfg = config::resolve(read_table(&config)?).map_err(CliError::Config)?;
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            opts,
        } => {
            let mut table = read_table(&config)?;
            table.insert("mode".into(), Value::String("sweep".into()));
            let mut s = Table::new();
            s.insert("param".into(), Value::String(param));
            s.insert("values".into(), Value::Array(values.into_iter().map(Value::Float).collect()));
            table.insert("sweep".into(), Value::Table(s));
            execute(table, opts)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
