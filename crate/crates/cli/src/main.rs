mod config;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pseudotex::analysis::{analyze, lambda_label, write_report, Report};
use pseudotex::experiment::Study;
use pseudotex::logs::{read_summary_file, write_session_jsonl, write_summary_file};
use pseudotex::simulate::simulate;

use config::{AnalyzeRun, CliError, FileConfig, ServeRun, SimulateRun};

#[derive(Debug, Parser)]
#[command(name = "pseudotex", version, about = "Pseudo-haptic roughness experiments")]
struct Cli {
    /// TOML file whose keys mirror the flags. Flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a study with synthetic observers.
    Simulate {
        /// 1 (comparison) or 2 (adjustment).
        #[arg(long)]
        study: Option<String>,
        /// Number of simulated participants [default: 10].
        #[arg(long)]
        participants: Option<usize>,
        /// Base seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Observer model TOML (keys k, sigma, jnd, strategy).
        #[arg(long)]
        observer: Option<PathBuf>,
        /// Output directory [default: out].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the statistics on a trial summary CSV.
    Analyze {
        /// summary.csv, or a directory containing one [default: the output directory].
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output directory [default: out].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accept live sessions over WebSocket at /ws.
    Serve {
        /// Listen port; 0 picks a free one.
        #[arg(long)]
        port: Option<u16>,
        /// Listen address [default: 127.0.0.1].
        #[arg(long)]
        host: Option<String>,
        /// Base seed for sessions that do not bring their own [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Where session logs are written [default: sessions].
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?.rebase(path),
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Simulate {
            study,
            participants,
            seed,
            observer,
            out,
        } => run_simulate(SimulateRun::resolve(study, participants, seed, observer, out, file)?),
        Command::Analyze { input, out } => run_analyze(AnalyzeRun::resolve(input, out, file)?),
        Command::Serve {
            port,
            host,
            seed,
            data_dir,
        } => serve::run(ServeRun::resolve(host, port, seed, data_dir, file)?),
    }
}

fn run_simulate(run: SimulateRun) -> Result<(), CliError> {
    let runs = simulate(&run.sim)?;
    let logs = run.out.join("logs");
    let mut rows = Vec::new();
    for p in &runs {
        write_session_jsonl(logs.join(format!("{}.jsonl", p.participant)), &p.log(&run.sim.session))?;
        rows.extend(p.summary());
        if p.capped_trials > 0 {
            eprintln!(
                "warning: {} had {} adjustment trials stopped at the step cap",
                p.participant, p.capped_trials
            );
        }
    }
    let summary = run.out.join("summary.csv");
    write_summary_file(&summary, &rows)?;
    println!(
        "{} study: {} participants, {} trials -> {}",
        run.sim.study,
        runs.len(),
        rows.len(),
        summary.display()
    );
    Ok(())
}

fn run_analyze(run: AnalyzeRun) -> Result<(), CliError> {
    let rows = read_summary_file(&run.input)?;
    let report = analyze(&rows).map_err(|e| CliError::Data(format!("{}: {e}", run.input.display())))?;
    print_report(&report);
    for path in write_report(&run.out, &report)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_report(report: &Report) {
    if let Some(c) = &report.comparison {
        println!("comparison: oscillatory area chosen, goodness of fit against 50/50");
        println!("  {:>6} {:>5} {:>9} {:>8} {:>10}", "lambda", "alpha", "chosen", "chi2", "p");
        for r in &c.conditions {
            println!(
                "  {:>6} {:>5} {:>4}/{:<4} {:>8.2} {:>10.3e}",
                lambda_label(r.lambda),
                r.alpha,
                r.oscillatory,
                r.total,
                r.test.statistic,
                r.test.p_value
            );
        }
        println!(
            "  independence: chi2({}) = {:.3}, p = {:.3}",
            c.independence.df, c.independence.statistic, c.independence.p_value
        );
    }
    for a in &report.adjustment {
        println!(
            "{} matching: ANOVA F({}, {}) = {:.3}, p = {:.3e}",
            match a.study {
                Study::AdjustWavelength => "wavelength",
                _ => "amplitude",
            }, a.anova.df_between, a.anova.df_within, a.anova.f, a.anova.p_value
        );
        for p in a.tukey.iter().filter(|p| p.p_adj < 0.05) {
            println!(
                "  tukey alpha {} vs {}: diff {:+.4}, p = {:.3e}",
                a.alphas[p.i], a.alphas[p.j], p.diff, p.p_adj
            );
        }
    }
}
