//! Command-line front end. `run` executes the whole experiment; the other
//! subcommands run one stage each and exchange artifacts through `--out`.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oa_reorder::digital_twin::{Dataset, FeatureBounds, MlpModel, ValidationReport};
use oa_reorder::error::{Error, Result, StageContext};
use oa_reorder::ga::GaResult;
use oa_reorder::harness::{
    export_report, files, load_scenario, run_experiment, write_json, BaselineStats, ConfigPair, Pipeline, Scenario,
};
use oa_reorder::link_model::OAConfig;

#[derive(Parser)]
#[command(
    name = "oa-reorder",
    version,
    about = "Search amplifier reconfiguration orders that keep live traffic healthy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file, or a bundled name (case1, case2).
    #[arg(long, default_value = "case2")]
    scenario: String,
    /// Derive all stage seeds from this value instead of the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the oracle once and print per-batch Q.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// JSON file with `gains_db` and `tilts_db`; defaults to mid-range settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the initial loading instead of the current one.
        #[arg(long)]
        initial_loading: bool,
    },
    /// Pick the initial and target configurations and label the training set.
    Sample(Common),
    /// Train the twin on the sampled dataset.
    Train(Common),
    /// Search an order with the trained twin.
    Optimize(Common),
    /// Replay random orders on the oracle.
    Baseline(Common),
    /// Replay the searched order and write the full report.
    Report(Common),
    /// All of the above.
    Run(Common),
}

fn scenario(c: &Common) -> Result<Scenario> {
    let s = load_scenario(&c.scenario).stage("scenario")?;
    Ok(match c.seed {
        Some(seed) => s.with_master_seed(seed),
        None => s,
    })
}

fn open(dir: &Path, name: &str, stage: &'static str) -> Result<BufReader<File>> {
    let path = dir.join(name);
    File::open(&path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
        .stage(stage)
}

fn read_json<T: serde::de::DeserializeOwned>(dir: &Path, name: &str, stage: &'static str) -> Result<T> {
    serde_json::from_reader(open(dir, name, stage)?)
        .map_err(Error::from)
        .stage(stage)
}

fn load_dataset(p: &Pipeline, dir: &Path) -> Result<Dataset<f64>> {
    let s = p.scenario();
    Dataset::read_csv(
        open(dir, files::DATASET, "training")?,
        FeatureBounds::from_link(&s.link),
        s.current_plan().n_batches,
        s.counts().train_size,
    )
    .stage("training")
}

fn load_model(dir: &Path, stage: &'static str) -> Result<MlpModel<f64>> {
    MlpModel::load(open(dir, files::TWIN, stage)?).stage(stage)
}

fn simulate(c: &Common, config: Option<&Path>, initial_loading: bool) -> Result<()> {
    let s = scenario(c)?;
    let p = Pipeline::new(s.clone())?;
    let oracle = if initial_loading {
        p.oracle().with_plan(s.initial_plan()).stage("simulate")?
    } else {
        p.oracle().clone()
    };
    let cfg = match config {
        Some(path) => {
            let f = File::open(path).map_err(Error::from).stage("simulate")?;
            serde_json::from_reader::<_, OAConfig>(BufReader::new(f))
                .map_err(Error::from)
                .stage("simulate")?
        }
        None => {
            let g = (s.link.gain_bounds_db[0][0] + s.link.gain_bounds_db[0][1]) / 2.0;
            let t = (s.link.tilt_bounds_db[0] + s.link.tilt_bounds_db[1]) / 2.0;
            OAConfig::uniform(s.link.n_oa(), (g * 10.0).round() / 10.0, (t * 10.0).round() / 10.0).stage("simulate")?
        }
    };
    let q = oracle.q::<f64>(&cfg).stage("simulate")?;
    let mut out = std::io::stdout().lock();
    for (b, v) in q.loaded() {
        writeln!(out, "batch {b}: q = {v:.4} dB")?;
    }
    Ok(())
}

fn sample(c: &Common) -> Result<()> {
    let p = Pipeline::new(scenario(c)?)?;
    std::fs::create_dir_all(&c.out)?;
    let pair = p.select_configs()?;
    let ds = p.dataset()?;
    write_json(&c.out, files::CONFIGS, &pair)?;
    ds.write_csv(File::create(c.out.join(files::DATASET))?)?;
    eprintln!("sample: {} rows written to {}", ds.len(), c.out.display());
    Ok(())
}

fn train_cmd(c: &Common) -> Result<()> {
    let p = Pipeline::new(scenario(c)?)?;
    let ds = load_dataset(&p, &c.out)?;
    let (model, report) = p.train_twin(&ds)?;
    let mut w = File::create(c.out.join(files::TWIN))?;
    model.save(&mut w)?;
    write_json(&c.out, files::VALIDATION, &report)?;
    eprintln!(
        "train: val RMSE {:.4} dB, Spearman {:?}, {} epochs",
        report.val_rmse_db, report.val_spearman, report.epochs_run
    );
    Ok(())
}

fn optimize_cmd(c: &Common) -> Result<()> {
    let p = Pipeline::new(scenario(c)?)?;
    let pair: ConfigPair = read_json(&c.out, files::CONFIGS, "search")?;
    let model = load_model(&c.out, "search")?;
    let t = p.transition(&pair.initial, &pair.target).stage("search")?;
    let ga = p.search(&model, &t, p.scenario().seeds().ga)?;
    write_json(&c.out, files::GA_RESULT, &ga)?;
    ga.write_progress_csv(File::create(c.out.join(files::GA_PROGRESS))?)?;
    eprintln!(
        "optimize: order {} after {} generations",
        ga.best.order, ga.generations_run
    );
    Ok(())
}

fn baseline_cmd(c: &Common) -> Result<()> {
    let p = Pipeline::new(scenario(c)?)?;
    let pair: ConfigPair = read_json(&c.out, files::CONFIGS, "baseline")?;
    let t = p.transition(&pair.initial, &pair.target).stage("baseline")?;
    let stats = p.baseline(&t)?;
    stats.write_orders_csv(File::create(c.out.join(files::BASELINE_ORDERS))?)?;
    stats.write_cdf_csv(File::create(c.out.join(files::BASELINE_CDF))?)?;
    eprintln!(
        "baseline: {} orders, worst dip {:.3} dB",
        stats.len(),
        stats.worst_dip_db()
    );
    Ok(())
}

fn report_cmd(c: &Common) -> Result<()> {
    let p = Pipeline::new(scenario(c)?)?;
    let pair: ConfigPair = read_json(&c.out, files::CONFIGS, "report")?;
    let model = load_model(&c.out, "report")?;
    let twin: ValidationReport = read_json(&c.out, files::VALIDATION, "report")?;
    let ga: GaResult<f64> = read_json(&c.out, files::GA_RESULT, "report")?;
    let baseline = BaselineStats::read_orders_csv(open(&c.out, files::BASELINE_ORDERS, "report")?).stage("report")?;
    let report = p.finish(pair, model, twin, ga, baseline)?;
    export_report(&report, &c.out).stage("export")?;
    print_summary(&report);
    Ok(())
}

fn run_cmd(c: &Common) -> Result<()> {
    let report = run_experiment(scenario(c)?)?;
    export_report(&report, &c.out).stage("export")?;
    print_summary(&report);
    Ok(())
}

fn print_summary(r: &oa_reorder::harness::ExperimentReport) {
    println!("order            {}", r.ga.order);
    println!("step-0 Q         {:.3} dB", r.replay.step0_q_db);
    println!(
        "replay min/mean  {:.3} / {:.3} dB",
        r.replay.min_q_db, r.replay.mean_q_db
    );
    println!(
        "percentile       min {:.2}, mean {:.2}",
        r.min_q_percentile, r.mean_q_percentile
    );
    println!("worst random dip {:.3} dB", r.baseline.worst_dip_db);
    println!("no degradation   {}", r.degradation_prevented);
    for v in &r.variants {
        println!(
            "variant {}        dip {:.3} dB, no degradation {}",
            v.index, v.replay.dip_db, v.degradation_prevented
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            common,
            config,
            initial_loading,
        } => simulate(common, config.as_deref(), *initial_loading),
        Command::Sample(c) => sample(c),
        Command::Train(c) => train_cmd(c),
        Command::Optimize(c) => optimize_cmd(c),
        Command::Baseline(c) => baseline_cmd(c),
        Command::Report(c) => report_cmd(c),
        Command::Run(c) => run_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
