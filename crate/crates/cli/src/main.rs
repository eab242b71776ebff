use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rgne::solver::Mode;
use rgne::Topology;
use rgne_cli::config::SweepSpec;
use rgne_cli::{export_results, load_config, run_experiment, ExperimentConfig};

const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "rgne", version, about = "Robust generalized Nash equilibrium experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the game described by a JSON config and write the results.
    Solve {
        config: PathBuf,
        /// Topology sweep, e.g. `topologies=complete,star,ring`.
        #[arg(long, value_name = "topologies=LIST")]
        sweep: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Also run the centralized reference solver.
        #[arg(long)]
        centralized: bool,
        /// Output directory; falls back to the config, then `results`.
        #[arg(long, env = "RGNE_OUT_DIR")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ripfbf,
    Tseng,
    Both,
}

fn parse_sweep(arg: &str) -> Result<Vec<Topology>, String> {
    let list = arg
        .strip_prefix("topologies=")
        .ok_or_else(|| format!("--sweep expects `topologies=a,b,...`, got `{arg}`"))?;
    list.split(',')
        .map(|name| {
            Topology::from_name(name.trim()).ok_or_else(|| format!("unknown topology `{name}`"))
        })
        .collect()
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    sweep: Option<&str>,
    mode: Option<ModeArg>,
    centralized: bool,
) -> Result<(), String> {
    if let Some(arg) = sweep {
        cfg.sweep.get_or_insert_with(SweepSpec::default).topologies = parse_sweep(arg)?;
    }
    if let Some(m) = mode {
        let modes = match m {
            ModeArg::Ripfbf => vec![Mode::Ripfbf],
            ModeArg::Tseng => vec![Mode::Tseng],
            ModeArg::Both => vec![Mode::Ripfbf, Mode::Tseng],
        };
        cfg.sweep.get_or_insert_with(SweepSpec::default).modes = modes;
    }
    cfg.centralized.enabled |= centralized;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Command::Solve {
        config,
        sweep,
        mode,
        centralized,
        out,
    } = cli.command;

    let mut cfg = match load_config(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = apply_overrides(&mut cfg, sweep.as_deref(), mode, centralized) {
        eprintln!("config error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Err(e) = cfg.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    cfg.output.dir = Some(dir.clone());

    let report = run_experiment(&cfg);
    for run in &report.runs {
        println!(
            "{:<8} {:<8} converged={} iterations={} residual={:.3e} consensus={:.3e} max_gap={} verified={}",
            run.topology,
            run.mode.name(),
            run.converged,
            run.iterations,
            run.final_residual,
            run.consensus.max(),
            run.verification
                .as_ref()
                .map_or("n/a".to_owned(), |v| format!("{:.3e}", v.max_gap)),
            run.verified(),
        );
        if let Some(d) = run.centralized_deviation {
            println!("{:<8} {:<8} |x - x_centralized|_inf = {d:.3e}", run.topology, run.mode.name());
        }
        if let Some(e) = &run.verification_error {
            println!("{:<8} {:<8} verification error: {e}", run.topology, run.mode.name());
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for e in &report.errors {
        eprintln!("error [{} {}]: {}", e.topology, e.stage, e.message);
    }
    match export_results(&report, &dir) {
        Ok(files) => println!("wrote {}", files.residuals.parent().unwrap_or(&dir).display()),
        Err(e) => {
            eprintln!("export failed: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
