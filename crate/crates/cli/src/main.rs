use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resmem_core::harness::{preset, preset_experiments, run_sweep, SweepSpec};
use resmem_core::netstats::{calibrate_spectral_radius, linear_delay_coefficients, path_lengths};
use resmem_core::reservoir::spectral_radius;
use resmem_core::AdjacencyMatrix;

#[derive(Parser)]
#[command(name = "resmem", version, about = "Memory statistics of tanh reservoir computers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset or a TOML sweep file and write CSV and JSON results.
    Run {
        /// Preset name (see `resmem presets`) or path to a TOML sweep file.
        target: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Comma-separated seeds overriding the sweep's own.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Shrink the sweep to a smoke-test size.
        #[arg(long)]
        quick: bool,
    },
    /// Evaluate a TOML sweep file and print the CSV to stdout.
    Metrics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Path statistics of an adjacency matrix stored as headerless CSV.
    Netstats {
        #[arg(long)]
        matrix: PathBuf,
        /// Also report the spectral radius giving this mean weighted path length.
        #[arg(long)]
        calibrate: Option<f64>,
    },
    /// List the preset experiments.
    Presets,
}

fn load_target(target: &str) -> Result<SweepSpec, String> {
    if let Some(spec) = preset(target) {
        return Ok(spec);
    }
    let path = Path::new(target);
    if path.exists() {
        return SweepSpec::from_toml_file(path).map_err(|e| e.to_string());
    }
    Err(format!("`{target}` is neither a preset nor a readable file; try `resmem presets`"))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { target, out, seeds, workers, quick } => {
            let mut spec = load_target(&target)?;
            if let Some(seeds) = seeds {
                spec.seeds = seeds;
            }
            if quick {
                spec = spec.quick();
            }
            let out = spec.output.clone().filter(|_| out == Path::new("results")).unwrap_or(out);
            let report = run_sweep(&spec, workers).map_err(|e| e.to_string())?;
            let (csv, json) = report.write_to_dir(&out).map_err(|e| e.to_string())?;
            let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!(
                "{}: {} rows ({} not ok) in {:.1}s -> {}, {}",
                spec.experiment,
                report.rows.len(),
                failed,
                report.wall_time_s,
                csv.display(),
                json.display()
            );
        }
        Command::Metrics { config, workers } => {
            let spec = SweepSpec::from_toml_file(&config).map_err(|e| e.to_string())?;
            let report = run_sweep(&spec, workers).map_err(|e| e.to_string())?;
            report.write_csv(std::io::stdout().lock()).map_err(|e| e.to_string())?;
        }
        Command::Netstats { matrix, calibrate } => {
            let a = AdjacencyMatrix::read_csv(&matrix).map_err(|e| e.to_string())?;
            let paths = path_lengths(&a).map_err(|e| e.to_string())?;
            let rho = spectral_radius(a.entries()).map_err(|e| e.to_string())?;
            let mut out = serde_json::json!({
                "nodes": a.size(),
                "nonzeros": a.nnz(),
                "spectral_radius": rho,
                "mean_unweighted_path_length": paths.mean_unweighted,
                "mean_weighted_path_length": paths.mean_weighted,
                "unreachable_pairs": paths.unreachable_pairs,
            });
            if let Some(target) = calibrate {
                let unit = a.scaled(1.0 / rho).map_err(|e| e.to_string())?;
                let calibrated = calibrate_spectral_radius(&unit, target).map_err(|e| e.to_string())?;
                let b = linear_delay_coefficients(&unit, calibrated).map_err(|e| e.to_string())?;
                out["calibration_target"] = target.into();
                out["calibrated_spectral_radius"] = calibrated.into();
                out["delay_coefficients"] = b.mean_abs.to_vec().into();
            }
            println!("{}", serde_json::to_string_pretty(&out).map_err(|e| e.to_string())?);
        }
        Command::Presets => {
            for s in preset_experiments() {
                let metrics: Vec<String> =
                    s.metrics.iter().map(|m| serde_json::to_string(m).unwrap_or_default().replace('"', "")).collect();
                println!("{:<24} {:<8} {:>5} points  {}", s.experiment, s.driver.name(), s.grid.len(), metrics.join(","));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
