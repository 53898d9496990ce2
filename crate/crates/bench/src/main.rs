use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use tolcone_bench::plot::{plot, PlotKind};
use tolcone_bench::runner::{load_grid_dir, read_trace};
use tolcone_bench::summary::{render_table, summarize, write_summary_csv};
use tolcone_bench::verify::{run_criterion, VerifyContext, CRITERIA};
use tolcone_bench::{execute, load_config, run_grid, RunStatus};
use tolcone_core::analysis::{
    dual_gap_check, norm_bound_check, stationarity_rate_check, utility_bound_check, DualGapWindow, TheoremReport,
};

#[derive(Parser)]
#[command(
    name = "tolcone",
    version,
    about = "Tolerance-cone gradient surgery: runs, grids, reports, plots"
)]
struct Cli {
    /// Output root for run directories and plots.
    #[arg(long, global = true, env = "TOLCONE_OUT", default_value = "tolcone-out")]
    out: PathBuf,

    /// Replaces the seed of every loaded config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single config.
    Run { config: PathBuf },
    /// Run every *.toml in a directory.
    Grid {
        dir: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Apply the trace-level checks to saved traces.
    Analyze {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Smoothness constant for the utility and norm bounds.
        #[arg(long)]
        smoothness: Option<f64>,
        /// Slack multiplier in the utility bound.
        #[arg(long, default_value_t = 2.0)]
        slack: f64,
        #[arg(long)]
        json: bool,
    },
    /// Tabulate final losses and concept accuracies.
    Summarize {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write SVG plots into the output root.
    Plot {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        kind: PlotKind,
    },
    /// Run the verification suite.
    Verify {
        /// Criteria to run (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Print every check, not just the verdict line.
        #[arg(long)]
        details: bool,
    },
}

fn analyze(traces: &[PathBuf], smoothness: Option<f64>, slack: f64) -> anyhow::Result<TheoremReport> {
    let mut report = TheoremReport::default();
    for path in traces {
        let t = read_trace(path)?;
        let tag = path.display().to_string();
        let mut checks = Vec::new();
        if let Some(g) = smoothness {
            checks.push(utility_bound_check(&t, slack, g));
            // the per-step norm bound is a property of the exact surgered step
            if t.solver == "explicit" {
                checks.push(norm_bound_check(&t, g));
            }
        }
        if t.is_instrumented() {
            if t.solver == "implicit" {
                checks.push(dual_gap_check(&t, DualGapWindow::default())?);
            }
            checks.push(stationarity_rate_check(&t, 10, 100)?);
        }
        if checks.is_empty() {
            log::warn!("{tag}: nothing to check without --smoothness or full instrumentation");
        }
        for mut c in checks {
            c.name = format!("{tag}: {}", c.name);
            report.push(c);
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    let reseed = |mut c: tolcone_bench::RunConfig| {
        if let Some(s) = cli.seed {
            c.seed = s;
        }
        c
    };
    match cli.command {
        Command::Run { config } => {
            let cfg = reseed(load_config(&config)?);
            let m = execute(&cfg, &cli.out)?;
            println!(
                "{}: {:?}, {} steps -> {}",
                m.name,
                m.status,
                m.steps_completed,
                cli.out.join(&m.name).display()
            );
            Ok(m.status == RunStatus::Complete)
        }
        Command::Grid { dir, workers } => {
            let configs: Vec<_> = load_grid_dir(&dir)?.into_iter().map(reseed).collect();
            let mut ok = true;
            for entry in run_grid(&configs, &cli.out, workers)? {
                match entry.result {
                    Ok(m) => {
                        ok &= m.status == RunStatus::Complete;
                        println!("{}: {:?}, {} steps", m.name, m.status, m.steps_completed);
                    }
                    Err(e) => {
                        ok = false;
                        println!("{}: failed: {e}", entry.name);
                    }
                }
            }
            Ok(ok)
        }
        Command::Analyze {
            traces,
            smoothness,
            slack,
            json,
        } => {
            let report = analyze(&traces, smoothness, slack)?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            Ok(report.ok())
        }
        Command::Summarize { traces, csv } => {
            let rows = summarize(&traces);
            print!("{}", render_table(&rows));
            if let Some(p) = csv {
                write_summary_csv(&p, &rows)?;
            }
            Ok(rows.iter().all(|r| r.complete))
        }
        Command::Plot { traces, kind } => {
            let loaded = traces
                .iter()
                .map(|p| {
                    let name = p
                        .parent()
                        .and_then(|d| d.file_name())
                        .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                    read_trace(p).map(|t| (name, t))
                })
                .collect::<Result<Vec<_>, _>>()?;
            for f in plot(&loaded, kind, &cli.out).with_context(|| format!("plotting {}", kind.as_str()))? {
                println!("{}", f.display());
            }
            Ok(true)
        }
        Command::Verify {
            criteria,
            workers,
            details,
        } => {
            let ids = if criteria.is_empty() {
                CRITERIA.to_vec()
            } else {
                criteria
            };
            if let Some(bad) = ids.iter().find(|i| !CRITERIA.contains(i)) {
                bail!("no criterion {bad}; expected 1..=13");
            }
            let ctx = VerifyContext {
                out_dir: cli.out.join("verify"),
                workers,
            };
            let mut ok = true;
            for id in ids {
                let o = run_criterion(id, &ctx)?;
                println!("{}", o.line());
                if details {
                    print!("{}", o.report.to_text());
                }
                ok &= o.passed();
            }
            Ok(ok)
        }
    }
}
