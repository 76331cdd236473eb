use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhrf_cli::plot::emit_plot_data;
use nhrf_cli::presets;
use nhrf_cli::run::{default_stages, run, write_outputs, RunReport, Stage};
use nhrf_cli::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "nhrf", version, about = "Batch runner for N-adapted geometry, Ricci flow, entropy functionals and spectral traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or preset and write report.json plus CSV tables.
    Run {
        /// Scenario file or preset name.
        scenario: String,
        /// Comma-separated stages: geometry, flow, functionals, spectral, all.
        #[arg(long)]
        stages: Option<String>,
        /// Output directory (default: output.dir of the scenario, else out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tolerance override key=value (positivity, asymmetry, resolution). Repeatable.
        #[arg(long = "tol", value_name = "KEY=VALUE")]
        tol: Vec<String>,
    },
    /// Parse and validate a scenario without computing anything.
    Validate {
        scenario: String,
        #[arg(long = "tol", value_name = "KEY=VALUE")]
        tol: Vec<String>,
    },
    /// List the shipped presets, or print one.
    Presets {
        #[command(subcommand)]
        action: Option<PresetAction>,
    },
    /// Extract a two-column CSV from a report.json.
    PlotData {
        report: PathBuf,
        quantity: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// Print the TOML source of a preset.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run { scenario, stages, out, tol } => {
            let overrides = Overrides::parse(&tol)?;
            let s = presets::resolve(&scenario, &overrides)?;
            let stages = match stages {
                Some(list) => Stage::parse_list(&list)?,
                None => default_stages(&s),
            };
            if stages.contains(&Stage::Spectral) && s.spectral.is_none() {
                return Err(CliError::Validation("spectral stage requested but the scenario has no [spectral] section".into()));
            }
            let dir = out
                .or_else(|| s.file.output.dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(s.name()));
            let report = run(&s, &stages);
            let files = write_outputs(&report, &s, &dir)?;
            for st in &report.stages {
                if let Some(t) = report.timing.get(st.name()) {
                    eprintln!("{:<12} {:>9.3} s", st.name(), t);
                }
            }
            println!("{} -> {} ({})", s.name(), dir.display(), files.join(", "));
            match &report.failure {
                Some(f) => {
                    eprintln!("error: {}", f.message);
                    Ok(f.exit_code)
                }
                None => Ok(0),
            }
        }
        Command::Validate { scenario, tol } => {
            let overrides = Overrides::parse(&tol)?;
            let s = presets::resolve(&scenario, &overrides)?;
            let c = &s.chart;
            println!(
                "{}: ok (n = {}, m = {}, {} connection, kappa = {}, hash {})",
                s.name(),
                c.n,
                c.m,
                s.connection().name(),
                s.kappa(),
                &s.hash[..16]
            );
            Ok(0)
        }
        Command::Presets { action: None } => {
            for name in presets::names() {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Presets { action: Some(PresetAction::Show { name }) } => {
            let src = presets::source(&name).ok_or_else(|| CliError::Validation(format!("no preset named '{name}'")))?;
            print!("{src}");
            Ok(0)
        }
        Command::PlotData { report, quantity, out } => {
            let text = std::fs::read_to_string(&report).map_err(|e| CliError::Io(format!("{}: {e}", report.display())))?;
            let r: RunReport = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", report.display())))?;
            let csv = emit_plot_data(&r, &quantity)?;
            match out {
                Some(p) => std::fs::write(&p, csv).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
    }
}
