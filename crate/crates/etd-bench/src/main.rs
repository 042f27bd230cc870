//! Experiment harness CLI.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use etd_lab::baird::baird_modified;
use etd_lab::bench::{self, Algorithm, EmphasisSource, Experiment, SweepSummary};
use etd_lab::config::{load_config, LabConfig};
use etd_lab::csv::{emit_csv, format_f64};
use etd_lab::error::{Error, Result};
use etd_lab::oracle::GroundTruth;

#[derive(Parser)]
#[command(
    name = "etd-bench",
    about = "Off-policy emphatic TD policy-evaluation benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write its evaluation CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a hyperparameter sweep and write per-config CSVs plus a summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the stability report for the configured algorithm.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Also serialize the reports as JSON.
        #[arg(long)]
        json_out: Option<PathBuf>,
        /// Also dump the oracle ground truth as CSV.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Run one algorithm on the builtin counterexample MDP.
    Baird(BairdArgs),
}

#[derive(Args)]
struct BairdArgs {
    /// td_n, etd_n, vtrace, xetd_n, or xetd_n_mc.
    #[arg(long)]
    algo: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Value step size.
    #[arg(long, default_value_t = 2f64.powi(-8))]
    alpha: f64,
    /// Emphasis ratio: alpha_theta = alpha * beta (and the MC loss weight
    /// for xetd_n_mc).
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// Segment length.
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 200_000)]
    steps: u64,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    eval_every: u64,
    /// IS-ratio clip: the emphasis learner's clip for xetd_n, and both
    /// vtrace clips (rho_bar = c_bar). inf = unclipped.
    #[arg(long, default_value_t = f64::INFINITY)]
    rho_bar: f64,
    /// Use the oracle expected emphasis instead of learning it.
    #[arg(long, default_value_t = false)]
    oracle_emphasis: bool,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => run(&config, &out),
        Command::Sweep { config, out } => sweep(&config, &out),
        Command::Analyze {
            config,
            json_out,
            truth_out,
        } => analyze(&config, json_out.as_deref(), truth_out.as_deref()),
        Command::Baird(args) => baird(&args),
    }
}

fn run(config: &Path, out: &Path) -> Result<()> {
    let LabConfig { experiment, .. } = load_config(config)?;
    let records = bench::run_experiment(&experiment)?;
    emit_csv(&records, out)?;
    println!(
        "{}: {} runs x {} steps -> {}",
        experiment.algorithm.as_str(),
        experiment.num_runs,
        experiment.total_steps,
        out.display()
    );
    Ok(())
}

fn sweep(config: &Path, out: &Path) -> Result<()> {
    let LabConfig { experiment, sweep } = load_config(config)?;
    let spec = sweep.ok_or_else(|| {
        Error::Config("sweep requires a [sweep] section in the config file".into())
    })?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let summary = bench::sweep(&experiment, &spec)?;
    write_summary(&summary, out)?;
    for (algorithm, records) in &summary.best_records {
        let path = out.join(format!("best_{}.csv", algorithm.as_str()));
        emit_csv(records, &path)?;
    }
    for row in summary.rows.iter().filter(|r| r.selected) {
        println!(
            "{}: best alpha_w = {}, beta = {} (mean final rmse_v = {})",
            row.algorithm.as_str(),
            row.alpha_w,
            row.beta,
            format_f64(row.mean_final_rmse_v)
        );
    }
    Ok(())
}

fn write_summary(summary: &SweepSummary, out: &Path) -> Result<()> {
    let mut text = String::from(
        "algo,alpha_w,beta,alpha_theta,mean_final_rmse_v,std_final_rmse_v,diverged_runs,selected\n",
    );
    for row in &summary.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.algorithm.as_str(),
            format_f64(row.alpha_w),
            format_f64(row.beta),
            format_f64(row.alpha_theta),
            format_f64(row.mean_final_rmse_v),
            format_f64(row.std_final_rmse_v),
            row.diverged_runs,
            row.selected as u8,
        ));
    }
    let path = out.join("summary.csv");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn analyze(config: &Path, json_out: Option<&Path>, truth_out: Option<&Path>) -> Result<()> {
    let LabConfig { experiment, .. } = load_config(config)?;
    let reports = bench::analyze(&experiment)?;
    for report in &reports {
        println!("{report}");
    }
    if let Some(path) = json_out {
        let json = serde_json::to_string_pretty(&reports)
            .expect("stability reports serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = truth_out {
        let truth = GroundTruth::compute(&experiment.mdp, &experiment.pair, experiment.learner.n)?;
        truth.write_csv(path)?;
    }
    Ok(())
}

fn baird(args: &BairdArgs) -> Result<()> {
    let algorithm = Algorithm::parse(&args.algo)?;
    let (mdp, pair, features) = baird_modified();
    let mut exp = Experiment::new(mdp, pair, features);
    exp.algorithm = algorithm;
    exp.total_steps = args.steps;
    exp.num_runs = args.runs;
    exp.seed_base = args.seed;
    exp.eval_every = args.eval_every;
    exp.learner.n = args.n;
    exp.learner.alpha_w = args.alpha;
    exp.learner.alpha_theta = args.alpha * args.beta;
    exp.learner.rho_bar = args.rho_bar;
    if algorithm == Algorithm::Vtrace {
        exp.learner.c_bar = args.rho_bar;
    }
    exp.learner.beta = if algorithm == Algorithm::XetdNMc {
        args.beta
    } else {
        0.0
    };
    exp.emphasis_source = match algorithm {
        Algorithm::XetdN | Algorithm::XetdNMc => {
            if args.oracle_emphasis {
                EmphasisSource::Oracle
            } else {
                EmphasisSource::Learned
            }
        }
        _ => EmphasisSource::MonteCarlo,
    };
    exp.setting = Experiment::default_setting(algorithm, exp.emphasis_source);
    let records = bench::run_experiment(&exp)?;
    emit_csv(&records, &args.out)?;
    let last = records
        .iter()
        .filter_map(|r| r.rows.last())
        .map(|row| row.rmse_v)
        .collect::<Vec<_>>();
    let mean = last.iter().sum::<f64>() / last.len().max(1) as f64;
    println!(
        "{}: {} runs, mean final rmse_v = {} -> {}",
        algorithm.as_str(),
        args.runs,
        format_f64(mean),
        args.out.display()
    );
    Ok(())
}
