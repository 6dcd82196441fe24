//! `nonloc`: scenario runs, kernel certification, and geometry probes over
//! the nonlocal energy library.
//!
//! Exit codes: 0 success (and a passing verdict), 1 a completed run whose
//! verdict failed, 2 bad input or any evaluation/filesystem error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nonloc_cli::config::ScenarioConfig;
use nonloc_cli::error::{CliError, Result};
use nonloc_cli::registry;
use nonloc_cli::{report, scenario};
use nonloc_core::energy::{density_estimate, ks};
use nonloc_core::mollifiers::{
    check_admissibility, AdmissibilityConfig, KernelKind, MollifierFamily,
};
use nonloc_core::space::Point;

#[derive(Parser)]
#[command(
    name = "nonloc",
    version,
    about = "Nonlocal energy scenarios on metric measure spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write report files.
    Run {
        /// TOML scenario file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Base seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Certify a kernel family on a space.
    Check {
        #[arg(long)]
        family: String,
        #[arg(long)]
        space: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Comparison quotients of a map around a point, one radius at a time,
    /// with the zero-radius extrapolation.
    Ks {
        #[arg(long)]
        space: String,
        #[arg(long)]
        map: String,
        /// Point coordinates, comma separated.
        #[arg(long)]
        x: String,
        /// Radii, comma separated, in decreasing order.
        #[arg(long)]
        radii: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Estimate the measure-doubling constant of a space.
    Doubling {
        #[arg(long)]
        space: String,
        #[arg(long, default_value = "0.2,0.1,0.05,0.025")]
        radii: String,
        #[arg(long, default_value_t = 64)]
        centers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the local volume dimension at a point.
    Dimension {
        #[arg(long)]
        space: String,
        /// Point coordinates, comma separated.
        #[arg(long)]
        x: String,
        #[arg(long, default_value = "0.1,0.05,0.025,0.0125")]
        radii: String,
        #[arg(long, default_value_t = 2.0)]
        h: f64,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    };
    std::process::exit(code);
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad {what} entry '{part}'")))
        })
        .collect()
}

fn parse_point(text: &str) -> Result<Point> {
    let coords = parse_floats(text, "coordinate")?;
    Ok(Point::from_slice(&coords)?)
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run {
            config,
            out_dir,
            seed,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut scenario_config = ScenarioConfig::from_toml(&text)?;
            if let Some(seed) = seed {
                scenario_config.seed = seed;
            }
            let dir = out_dir
                .or_else(|| scenario_config.out_dir.clone())
                .ok_or_else(|| {
                    CliError::Config(
                        "no output directory: set out_dir in the config or pass --out-dir".into(),
                    )
                })?;
            let report = scenario::run_scenario(&scenario_config)?;
            report::emit(&report, &dir)?;
            println!(
                "predicted {:.6e}  extrapolated {:.6e} ± {:.1e}  rel_dev {:.3e}  verdict {}",
                report.predicted,
                report.extrapolated,
                report.uncertainty,
                report.rel_dev,
                if report.pass { "pass" } else { "fail" },
            );
            println!("reports written to {}", dir.display());
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Check { family, space, p } => {
            let space = registry::space_by_name(&space)?;
            let family = MollifierFamily::new(KernelKind::from_name(&family)?, p)?;
            let report = check_admissibility(&family, &space, &AdmissibilityConfig::default())?;
            for condition in &report.conditions {
                println!(
                    "condition {:>3}: {}  margin {:.3e}  ({})",
                    condition.id,
                    if condition.pass { "pass" } else { "fail" },
                    condition.margin,
                    condition.note,
                );
            }
            if let Some(theta) = report.theta_formula {
                println!(
                    "limit constant {:.6} vs extrapolated [{:.6}, {:.6}]",
                    theta, report.theta_extrapolated_lower, report.theta_extrapolated_upper,
                );
            }
            println!(
                "{}: {}",
                report.family,
                if report.pass {
                    "admissible"
                } else {
                    "rejected"
                }
            );
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Ks {
            space,
            map,
            x,
            radii,
            p,
        } => {
            let space = registry::space_by_name(&space)?;
            let map = registry::map_by_name(&map)?;
            let target = registry::target_for(&map, &space, None)?;
            let x = parse_point(&x)?;
            let radii = parse_floats(&radii, "radius")?;
            let mask = space.full_region();
            for &r in &radii {
                let value = ks(&space, &map, &target, p, &mask, &x, r)?;
                println!("r {:<10} ks {:.10}", r, value);
            }
            let profile = density_estimate(&space, &map, &target, p, &x, &radii)?;
            println!(
                "extrapolated {:.10}  residual {:.2e}",
                profile.extrapolated, profile.residual
            );
            if let Some(warning) = profile.warning {
                println!("note: {warning}");
            }
            Ok(0)
        }
        Command::Doubling {
            space,
            radii,
            centers,
            seed,
        } => {
            let space = registry::space_by_name(&space)?;
            let radii = parse_floats(&radii, "radius")?;
            let report = space.estimate_doubling(&space.full_region(), &radii, centers, seed)?;
            println!(
                "doubling constant {:.6} (worst center {:?}, radius {})",
                report.constant, report.worst_center, report.worst_radius,
            );
            Ok(0)
        }
        Command::Dimension { space, x, radii, h } => {
            let space = registry::space_by_name(&space)?;
            let x = parse_point(&x)?;
            let radii = parse_floats(&radii, "radius")?;
            let report = space.dimension_at(&x, &radii, h)?;
            for (r, estimate) in &report.samples {
                println!("r {:<10} dimension {:.6}", r, estimate);
            }
            println!(
                "estimate {:.6}{}",
                report.estimate,
                if report.converged {
                    ""
                } else {
                    "  (trend not settled)"
                },
            );
            Ok(0)
        }
    }
}
