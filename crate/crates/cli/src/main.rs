use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kuramoto_ocp::config::RunConfig;
use kuramoto_ocp::runner::{cmd_check, cmd_optimize, cmd_simulate, Outcome};

/// Optimal control of the mean-field Kuramoto equation.
#[derive(Parser)]
#[command(name = "kuramoto-ocp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve with the starting controls.
    Simulate(Common),
    /// Optimize the controls of the configured mode.
    Optimize(Common),
    /// Run the invariant and gradient checks.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file. Omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set discretization.n_t=4000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> kuramoto_ocp::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.sets)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> kuramoto_ocp::Result<Outcome> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let s = cmd_simulate(&cfg)?;
            let m = &s.metrics;
            println!(
                "simulate: R(T) = {:.6}, psi(T) = {:.6}, terminal error = {:.6e}, max mass error = {:.3e}",
                m.final_r, m.final_psi, m.terminal_error, m.max_mass_error
            );
            println!("outputs in {}", cfg.output_dir.display());
            Ok(Outcome::Success)
        }
        Command::Optimize(c) => {
            let cfg = c.load()?;
            let (s, outcome) = cmd_optimize(&cfg)?;
            println!(
                "optimize [{}]: status {}, {} iterations, J {:.6e} -> {:.6e}",
                s.mode.name(),
                s.status,
                s.iterations,
                s.initial_cost.total,
                s.controlled.cost.total
            );
            println!(
                "terminal error {:.6e} (uncontrolled {:.6e}, ratio {:.4})",
                s.controlled.terminal_error, s.uncontrolled.terminal_error, s.terminal_error_ratio
            );
            println!(
                "R crosses {:.4} at {} (uncontrolled {})",
                s.crossing_level,
                fmt_time(s.controlled.crossing_time),
                fmt_time(s.uncontrolled.crossing_time)
            );
            println!("outputs in {}", cfg.output_dir.display());
            Ok(outcome)
        }
        Command::Check(c) => {
            let cfg = c.load()?;
            let (report, outcome) = cmd_check(&cfg)?;
            for item in &report.checks {
                println!(
                    "{} {:<28} {:.3e} (tolerance {:.1e})",
                    if item.passed { "PASS" } else { "FAIL" },
                    item.name,
                    item.value,
                    item.tolerance
                );
            }
            println!("report in {}", cfg.output_dir.join("report.json").display());
            Ok(outcome)
        }
    }
}

fn fmt_time(t: Option<f64>) -> String {
    t.map(|t| format!("t = {t}")).unwrap_or_else(|| "never".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
