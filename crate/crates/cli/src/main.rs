use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use soc_kit_core::cell_sim::{self, ProfileSpec};
use soc_kit_core::{report, run_scenario, OcvMap, Scenario, ScenarioName, SocError};

#[derive(Parser)]
#[command(name = "soc-kit", version, about = "LFP state-of-charge estimation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (or `all`) and write traces and metrics.
    Run {
        #[arg(long)]
        scenario: String,
        /// JSON object merged over the scenario preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize the metrics of previous runs.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write the synthetic OCV map.
    GenMap {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a current profile CSV.
    GenProfile {
        /// drive, bounded, segment or csv:<path>
        #[arg(long)]
        kind: String,
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
    },
}

fn load_overrides(path: Option<&Path>) -> Result<serde_json::Value, SocError> {
    let Some(path) = path else {
        return Ok(serde_json::Value::Object(Default::default()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| SocError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| SocError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(scenario: &str, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<bool, SocError> {
    let overrides = load_overrides(config)?;
    let origin = config.unwrap_or(Path::new("<defaults>"));
    let (names, nested) = if scenario == "all" {
        (ScenarioName::ALL.to_vec(), true)
    } else {
        (vec![scenario.parse::<ScenarioName>()?], false)
    };
    let mut all_passed = true;
    for name in names {
        let mut s = Scenario::from_json_overrides(name, &overrides, origin)?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        let result = run_scenario(&s)?;
        let dir = if nested {
            out.join(name.as_str())
        } else {
            out.to_path_buf()
        };
        result.write(&dir)?;
        print!("{}", result.summary());
        all_passed &= result.report.passed;
    }
    Ok(all_passed)
}

fn report_dir(input: &Path) -> Result<(), SocError> {
    let reports = report::collect(input)?;
    print!("{}", report::table(&reports));
    let path = input.join("summary.csv");
    std::fs::write(&path, report::csv(&reports)).map_err(|e| SocError::Io { path, source: e })
}

fn gen_map(out: &Path) -> Result<(), SocError> {
    OcvMap::synthetic().write_csv(out)
}

fn gen_profile(kind: &str, duration: f64, seed: u64, out: &Path, dt: f64) -> Result<(), SocError> {
    let spec = ProfileSpec::named(kind)?;
    let profile = cell_sim::gen_profile(&spec, duration, dt, seed)?;
    cell_sim::write_profile(out, &profile, dt)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result =
        match &cli.command {
            Command::Run {
                scenario,
                config,
                out,
                seed,
            } => run(scenario, config.as_deref(), out, *seed).map(|passed| {
                if passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }),
            Command::Report { input } => report_dir(input).map(|_| ExitCode::SUCCESS),
            Command::GenMap { out } => gen_map(out).map(|_| ExitCode::SUCCESS),
            Command::GenProfile {
                kind,
                duration,
                seed,
                out,
                dt,
            } => gen_profile(kind, *duration, *seed, out, *dt).map(|_| ExitCode::SUCCESS),
        };
    result.unwrap_or_else(|e| {
        eprintln!("soc-kit: {e}");
        ExitCode::from(2)
    })
}
