use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use sqzkey_cli::commands::run;
use sqzkey_cli::config::{Config, Mode};
use sqzkey_cli::CliError;

/// Key rates, parameter sweeps, Monte Carlo runs and source calibration for squeezed-
/// and coherent-state CV-QKD.
#[derive(Debug, Parser)]
#[command(name = "sqzkey", version)]
#[command(
    after_help = "Exit status: 0 success, 1 configuration or I/O error, 2 numerical failure \
(or, with --strict, no key or a clipped estimate)."
)]
struct Args {
    /// Run mode; overrides `mode` in the config.
    #[arg(value_enum)]
    mode: Option<ModeArg>,
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output CSV file; defaults to `output` in the config, then stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 2 when a protocol yields no key or an estimate is clipped.
    #[arg(long)]
    strict: bool,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Keyrate,
    Sweep,
    Simulate,
    Calibrate,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Keyrate => Mode::Keyrate,
            ModeArg::Sweep => Mode::Sweep,
            ModeArg::Simulate => Mode::Simulate,
            ModeArg::Calibrate => Mode::Calibrate,
        }
    }
}

/// `run.csv` with suffix `_truth` gives `run_truth.csv`.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn load(args: &Args) -> Result<(Config, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg: Config = toml::from_str(&text).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.check()?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok((cfg, base))
}

fn execute(args: &Args) -> Result<(), CliError> {
    let (cfg, base) = load(args)?;
    if args.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let out = run(&cfg, &base)?;
    let target = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| base.join(o)));
    for (i, (suffix, table)) in out.tables.iter().enumerate() {
        let text = table.render();
        match &target {
            Some(path) => {
                let path = with_suffix(path, suffix);
                std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            }
            None => {
                if i > 0 {
                    println!();
                }
                print!("{text}");
            }
        }
    }
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    if args.strict && !out.warnings.is_empty() {
        return Err(CliError::Strict(format!(
            "{} warning(s)",
            out.warnings.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; help and version requests are not.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqzkey: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
