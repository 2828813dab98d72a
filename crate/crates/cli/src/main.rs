//! `jmnpde` command-line interface.
//!
//! Exit status: 0 on success (including a rejected model), 1 on usage or
//! input errors, 2 when the numerical machinery fails.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jmnpde::diagnostics::{
    detrended_pd_wormplot, npd_percentile_bands, render_svg, write_bands_csv, write_km_vpc_csv, write_wormplot_csv,
    PlotData, DEFAULT_BINS,
};
use jmnpde::model::JointModelSpec;
use jmnpde::report::evaluate;
use jmnpde::residuals::{read_residual_table, write_residual_table};
use jmnpde::simulator::{read_dataset, simulate_dataset, write_dataset, SeedSpec, StudyDesign};
use jmnpde::study::{
    run_scenarios, scenario_grid, write_results_csv, Family, Scenario, ScenarioConfig, DEFAULT_K, DEFAULT_STUDIES,
    SAMPLE_SIZES,
};
use jmnpde::{Error, Result};

const LONGITUDINAL_FILE: &str = "longitudinal.csv";
const EVENTS_FILE: &str = "events.csv";

#[derive(Parser)]
#[command(name = "jmnpde", version, about = "npd/npde evaluation of joint longitudinal and time-to-event models")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a model spec.
    Simulate(SimulateArgs),
    /// Evaluate a model against a dataset.
    Evaluate(EvaluateArgs),
    /// Run a type-I-error / power study.
    Study(StudyArgs),
    /// Draw the wormplot and npd band plot from a residual table.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model spec JSON (defaults to the base model).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of subjects.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Planned measurements per subject, equally spaced on [0, study_end].
    #[arg(long, default_value_t = 9)]
    measurements: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for longitudinal.csv and events.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory holding longitudinal.csv and events.csv.
    #[arg(long)]
    data: PathBuf,
    /// Tested model spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = DEFAULT_K)]
    k_sim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    /// Built-in scenario family (shape_k, epsilon, omega_epsilon, association).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    family: Option<String>,
    /// Scenario config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Simulated studies per scenario.
    #[arg(long)]
    studies: Option<usize>,
    /// Monte Carlo replicates per study.
    #[arg(long)]
    k_sim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Residual table CSV written by `evaluate`.
    #[arg(long)]
    residuals: PathBuf,
    /// Output directory for the SVGs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| with_path(e, path))
}

fn with_path(e: io::Error, path: &Path) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn load_spec(path: Option<&Path>) -> Result<JointModelSpec> {
    match path {
        Some(p) => JointModelSpec::load(p).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display()))),
        None => Ok(JointModelSpec::base()),
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = load_spec(args.spec.as_deref())?;
    spec.validate()?;
    let design = StudyDesign::equally_spaced(args.n, args.measurements, spec.study_end);
    let data = simulate_dataset(&spec, &design, &SeedSpec::new(args.seed))?;
    fs::create_dir_all(&args.out)?;
    let mut long = create(&args.out.join(LONGITUDINAL_FILE))?;
    let mut events = create(&args.out.join(EVENTS_FILE))?;
    write_dataset(&data, &mut long, &mut events)?;
    long.flush()?;
    events.flush()?;
    Ok(())
}

fn write_svg(path: &Path, plot: &PlotData) -> Result<()> {
    fs::write(path, render_svg(plot)).map_err(|e| with_path(e, path))
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let spec = load_spec(Some(&args.spec))?;
    let data = read_dataset(
        open(&args.data.join(LONGITUDINAL_FILE))?,
        open(&args.data.join(EVENTS_FILE))?,
    )?;
    let design = StudyDesign::from_dataset(&data, spec.study_end)?;
    let eval = evaluate(&data, &spec, &design, args.k_sim, &SeedSpec::new(args.seed))?;
    let out = &args.out;
    fs::create_dir_all(out)?;
    let mut w = create(&out.join("residuals.csv"))?;
    write_residual_table(&eval.residuals, &mut w)?;
    w.flush()?;
    fs::write(out.join("report.json"), eval.report.to_json())?;
    let diag = &eval.report.diagnostics;
    let mut w = create(&out.join("wormplot.csv"))?;
    write_wormplot_csv(&diag.wormplot, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("npd_bands.csv"))?;
    write_bands_csv(&diag.percentile_bands, &mut w)?;
    w.flush()?;
    write_svg(&out.join("wormplot.svg"), &PlotData::Wormplot(&diag.wormplot))?;
    write_svg(&out.join("npd_bands.svg"), &PlotData::Bands(&diag.percentile_bands))?;
    if let Some(vpc) = &diag.km_vpc {
        let mut w = create(&out.join("km_vpc.csv"))?;
        write_km_vpc_csv(vpc, &mut w)?;
        w.flush()?;
        write_svg(&out.join("km_vpc.svg"), &PlotData::KmVpc(vpc))?;
    }
    if let Some(note) = &diag.note {
        eprintln!("{note}");
    }
    let verdict = |reject: bool| if reject { "rejected" } else { "not rejected" };
    println!(
        "global test: {} (min p = {:.4}, {}); KS test: {} (min p = {:.4}, {})",
        verdict(eval.report.global_test.reject),
        eval.report.global_test.min_p_value(),
        eval.report.global_test.driving_component,
        verdict(eval.report.ks_test.reject),
        eval.report.ks_test.min_p_value(),
        eval.report.ks_test.driving_component,
    );
    Ok(())
}

fn study(args: &StudyArgs) -> Result<()> {
    let mut scenarios = match (&args.family, &args.config) {
        (Some(family), _) => {
            let sizes = if args.n.is_empty() { SAMPLE_SIZES.to_vec() } else { args.n.clone() };
            scenario_grid(
                family.parse::<Family>()?,
                &sizes,
                args.studies.unwrap_or(DEFAULT_STUDIES),
                args.k_sim.unwrap_or(DEFAULT_K),
                args.seed.unwrap_or(1),
            )
        }
        (None, Some(config)) => ScenarioConfig::load(config)?,
        (None, None) => unreachable!("clap requires --family or --config"),
    };
    if args.config.is_some() {
        for s in &mut scenarios {
            s.studies = args.studies.unwrap_or(s.studies);
            s.k = args.k_sim.unwrap_or(s.k);
            s.master_seed = args.seed.unwrap_or(s.master_seed);
        }
        if !args.n.is_empty() {
            let mut seen = Vec::new();
            scenarios = scenarios
                .into_iter()
                .filter(|s| {
                    let key = (s.truth_label.clone(), s.tested_label.clone());
                    let first = !seen.contains(&key);
                    seen.push(key);
                    first
                })
                .flat_map(|s| args.n.iter().map(move |&n| Scenario { n_subjects: n, ..s.clone() }))
                .collect();
        }
    }
    let results = run_scenarios(&scenarios)?;
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            write_results_csv(&results, &mut w)?;
            w.flush()?;
        }
        None => write_results_csv(&results, io::stdout().lock())?,
    }
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<()> {
    let table = read_residual_table(open(&args.residuals)?)?;
    fs::create_dir_all(&args.out)?;
    write_svg(&args.out.join("wormplot.svg"), &PlotData::Wormplot(&detrended_pd_wormplot(&table.tte)))?;
    if table.longitudinal.iter().any(|r| r.npd.is_some()) {
        let bands = npd_percentile_bands(&table.longitudinal, args.bins)?;
        write_svg(&args.out.join("npd_bands.svg"), &PlotData::Bands(&bands))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot start {threads} threads: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Study(a) => study(a),
        Command::Plot(a) => plot(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
