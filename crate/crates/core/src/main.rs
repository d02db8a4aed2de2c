use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use dpflow::harness::{exit_code, run, write_outcome, Command, RunConfig, Status, PRESETS};

#[derive(Parser)]
#[command(name = "dpflow", version, about = "Double-porosity viscoelastic flow: cell problems, micro/macro runs, convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run configuration; defaults to the selected preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when no --config is given.
    #[arg(long, global = true, default_value = "cracks_only")]
    preset: String,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Solve the cell problems and write the effective model.
    Cell,
    /// Run the ε-scale system at study.epsilon.
    Micro,
    /// Run the homogenized system.
    Macro,
    /// Micro per ε against one macro run.
    Compare,
    /// 1-D multiscale convergence tables.
    Msconv,
    /// Quick invariant suite.
    Check,
    /// Print a preset as TOML.
    Preset,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global().expect("thread pool");
    }
    let cfg = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(dpflow::Error::from)
            .and_then(|t| RunConfig::from_toml(&t)),
        None => RunConfig::preset(&cli.preset),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let cmd = match cli.command {
        Cmd::Preset => {
            if cli.config.is_none() && !PRESETS.contains(&cli.preset.as_str()) {
                return ExitCode::from(2);
            }
            print!("{}", cfg.to_toml());
            return ExitCode::SUCCESS;
        }
        Cmd::Cell => Command::Cell,
        Cmd::Micro => Command::Micro,
        Cmd::Macro => Command::Macro,
        Cmd::Compare => Command::Compare,
        Cmd::Msconv => Command::Msconv,
        Cmd::Check => Command::Check,
    };
    let outcome = run(cmd, &cfg, cli.seed).and_then(|o| write_outcome(&cli.out, &o).map(|_| o));
    match outcome {
        Ok(o) => {
            for v in &o.report.verdicts {
                println!("{} {} ({:.3e} vs {:.3e})", if v.passed { "ok  " } else { "FAIL" }, v.name, v.value, v.tolerance);
            }
            for i in &o.report.inconclusive {
                println!("inconclusive {i}");
            }
            if o.report.status != Status::Ok {
                eprintln!("status: {:?}", o.report.status);
            }
            println!("report: {}", cli.out.join("report.json").display());
            ExitCode::from(o.report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
