use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use subradiance::scenario::{
    bundled_scenarios, compare_engines, load_source, parse_config, run_scenario, Format, Outcome,
    Overrides, RunError, ACCEPTANCE_EXIT,
};

#[derive(Parser)]
#[command(
    name = "subradiance",
    version,
    about = "Single-photon super- and subradiance scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for output files (overrides the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Replaces the geometry seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    /// Table format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a config file or a bundled name.
    Run { config: String },
    /// Run every engine on the scenario's states and cross-check them.
    Compare { config: String },
    /// List bundled scenarios.
    ListScenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn finish(outcome: &Outcome, extra: Option<(&str, String)>) -> Result<bool, RunError> {
    let mut paths = outcome.write()?;
    if let Some((name, text)) = extra {
        let path = outcome.out_dir.join(name);
        std::fs::write(&path, text).map_err(RunError::Io)?;
        paths.push(path);
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    for v in &outcome.summary.violations {
        eprintln!("violation: {v}");
    }
    Ok(outcome.summary.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed_override,
        out_dir: cli.out_dir.clone(),
        format: cli.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        engines: None,
    };

    let result = match &cli.command {
        Command::ListScenarios => {
            for (name, text) in bundled_scenarios() {
                let desc = parse_config(text)
                    .ok()
                    .and_then(|c| c.description)
                    .unwrap_or_default();
                println!("{name:<20} {desc}");
            }
            Ok(true)
        }
        Command::Run { config } => load_source(config).and_then(|(stem, text)| {
            let outcome = run_scenario(&stem, &text, &overrides)?;
            finish(&outcome, None)
        }),
        Command::Compare { config } => load_source(config).and_then(|(stem, text)| {
            let (outcome, report) = compare_engines(&stem, &text, &overrides)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            for e in &report.states {
                println!(
                    "{:<28} kernel={:<24} ww={:<24} dicke-oracle={}",
                    e.state,
                    fmt(e.kernel),
                    fmt(e.ww),
                    fmt(e.dicke_oracle)
                );
            }
            finish(&outcome, Some(("compare.json", json)))
        }),
    };

    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(ACCEPTANCE_EXIT as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn fmt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.10}"))
        .unwrap_or_else(|| "skipped".into())
}
