//! Experiment orchestration: pick initial and target configurations, train
//! the twin, search an order, replay it on the oracle and rank it against
//! random orders.

mod baseline;
mod scenario;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{empirical_cdf, percentile_rank, run_baseline, BaselineRecord, BaselineStats, CdfPoint};
pub use scenario::{
    bundled_source, load_scenario, ChannelSection, Counts, LinkSection, LoadingSection, Scenario, ScenarioFile, Seeds,
    BUNDLED,
};

use crate::digital_twin::{sample_configs, train, Dataset, MlpModel, ValidationReport};
use crate::error::{Error, Result, StageContext};
use crate::ga::{optimize, order_fitness, GaParams, GaResult};
use crate::link_model::{LinkOracle, LinkSpec, OAConfig, QAM16_OFFSET_DB};
use crate::reconfig::{
    fitness, select_best_config, trajectory, FitnessValue, ReconfigOrder, Trajectory, TransitionScenario,
};

/// Replay may sit this far below step 0 and still count as no degradation.
pub const DEGRADATION_TOLERANCE_DB: f64 = 0.1;

// ChaCha stream ids within the sampling seed.
const STREAM_INITIAL: u64 = 0;
const STREAM_TARGET: u64 = 1;
const STREAM_DATASET: u64 = 2;
const STREAM_EXTRA_BASE: u64 = 3;

/// Redraws allowed when an extra initial configuration repeats an earlier one.
const MAX_REDRAWS: usize = 16;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigPair {
    pub initial: OAConfig,
    pub target: OAConfig,
}

/// Stages of one experiment over a validated scenario.
#[derive(Clone, Debug)]
pub struct Pipeline {
    scenario: Scenario,
    initial_oracle: LinkOracle,
    current_oracle: LinkOracle,
}

impl Pipeline {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let initial_oracle = LinkOracle::new(scenario.link.clone(), scenario.initial_plan()).stage("scenario")?;
        let current_oracle = LinkOracle::new(scenario.link.clone(), scenario.current_plan()).stage("scenario")?;
        Ok(Self {
            scenario,
            initial_oracle,
            current_oracle,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Oracle under the post-change loading.
    pub fn oracle(&self) -> &LinkOracle {
        &self.current_oracle
    }

    fn link(&self) -> &LinkSpec {
        &self.scenario.link
    }

    /// Best of `candidate_count` under the initial loading, then under the
    /// current loading, from independent candidate pools.
    pub fn select_configs(&self) -> Result<ConfigPair> {
        let seed = self.scenario.seeds().sampling;
        let n = self.scenario.counts().candidate_count;
        let initial = select_best_config(&self.initial_oracle, self.link(), n, &mut stream(seed, STREAM_INITIAL))
            .stage("config-selection")?;
        let target = select_best_config(&self.current_oracle, self.link(), n, &mut stream(seed, STREAM_TARGET))
            .stage("config-selection")?;
        Ok(ConfigPair { initial, target })
    }

    pub fn transition(&self, initial: &OAConfig, target: &OAConfig) -> Result<TransitionScenario> {
        TransitionScenario::new(
            initial.clone(),
            target.clone(),
            self.scenario.monitored().clone(),
            self.scenario.current_plan(),
        )
    }

    /// Random configurations labelled by the oracle under the current loading.
    pub fn dataset(&self) -> Result<Dataset<f64>> {
        let c = self.scenario.counts();
        let mut rng = stream(self.scenario.seeds().sampling, STREAM_DATASET);
        let configs = sample_configs(self.link(), c.dataset_size, &mut rng);
        Dataset::build(&self.current_oracle, &configs, c.train_size, &mut rng).stage("dataset")
    }

    pub fn train_twin(&self, dataset: &Dataset<f64>) -> Result<(MlpModel<f64>, ValidationReport)> {
        train(dataset, &self.scenario.file.train).stage("training")
    }

    pub fn search(&self, model: &MlpModel<f64>, transition: &TransitionScenario, seed: u64) -> Result<GaResult<f64>> {
        let params = GaParams {
            seed,
            ..self.scenario.file.ga.clone()
        };
        let f = order_fitness(model, transition);
        optimize(&f, &params, transition.n_steps()).stage("search")
    }

    pub fn replay(&self, transition: &TransitionScenario, order: &ReconfigOrder) -> Result<Trajectory<f64>> {
        trajectory(&self.current_oracle, transition, order).stage("replay")
    }

    pub fn baseline(&self, transition: &TransitionScenario) -> Result<BaselineStats> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seeds().baseline);
        run_baseline(
            transition,
            &self.current_oracle,
            self.scenario.counts().baseline_count,
            &mut rng,
        )
        .stage("baseline")
    }

    /// Searches and replays from `extra_initials` further initial
    /// configurations towards the same target with the same twin.
    pub fn variants(&self, pair: &ConfigPair, model: &MlpModel<f64>) -> Result<Vec<VariantReport>> {
        let seeds = self.scenario.seeds();
        let n = self.scenario.counts().candidate_count;
        let mut seen = vec![pair.initial.clone()];
        let mut out = Vec::new();
        for i in 0..self.scenario.counts().extra_initials {
            let mut rng = stream(seeds.sampling, STREAM_EXTRA_BASE + i as u64);
            let initial = (0..MAX_REDRAWS)
                .map(|_| select_best_config(&self.initial_oracle, self.link(), n, &mut rng))
                .find(|c| c.as_ref().map_or(true, |c| !seen.contains(c)))
                .unwrap_or_else(|| {
                    Err(Error::InvalidConfig(format!(
                        "no distinct initial configuration for variant {i}"
                    )))
                })
                .stage("variants")?;
            seen.push(initial.clone());
            let transition = self.transition(&initial, &pair.target).stage("variants")?;
            let ga = self.search(model, &transition, seeds.ga.wrapping_add(1 + i as u64))?;
            let replay = self.replay(&transition, &ga.best.order)?;
            let summary = ReplaySummary::from_trajectory(&replay);
            out.push(VariantReport {
                index: i,
                initial,
                order: ga.best.order.clone(),
                dt_fitness: ga.best.fitness,
                degradation_prevented: summary.degradation_prevented(),
                replay: summary,
                trajectory: replay,
            });
        }
        Ok(out)
    }

    /// Everything after training and search: replays, variants, ranks.
    pub fn finish(
        &self,
        configs: ConfigPair,
        model: MlpModel<f64>,
        twin: ValidationReport,
        ga: GaResult<f64>,
        baseline: BaselineStats,
    ) -> Result<ExperimentReport> {
        let transition = self.transition(&configs.initial, &configs.target).stage("report")?;
        let dt_trajectory = trajectory(&model, &transition, &ga.best.order).stage("report")?;
        let replay_trajectory = self.replay(&transition, &ga.best.order)?;
        let variants = self.variants(&configs, &model)?;
        let replay = ReplaySummary::from_trajectory(&replay_trajectory);
        if baseline.is_empty() {
            return Err(Error::Dataset("baseline has no records".into())).stage("report");
        }
        let min_q_percentile = percentile_rank(replay.min_q_db, &baseline.mins());
        let mean_q_percentile = percentile_rank(replay.mean_q_db, &baseline.means());
        let baseline_summary = BaselineSummary::new(&baseline, &replay);
        Ok(ExperimentReport {
            scenario: self.scenario.file.clone(),
            link: self.scenario.link.clone(),
            decisions: Decisions::default(),
            monitored_batches: self.scenario.monitored().iter().copied().collect(),
            configs,
            twin,
            ga: GaSummary {
                order: ga.best.order.clone(),
                dt_fitness: fitness(&dt_trajectory),
                generations_run: ga.generations_run,
                evaluations: ga.evaluations,
            },
            degradation_prevented: replay.degradation_prevented(),
            replay,
            baseline: baseline_summary,
            min_q_percentile,
            mean_q_percentile,
            variants,
            model,
            ga_result: ga,
            dt_trajectory,
            replay_trajectory,
            baseline_stats: baseline,
        })
    }
}

/// Conventions the numbers in a report depend on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decisions {
    pub config_selection: &'static str,
    pub fitness: &'static str,
    pub percentile: &'static str,
    pub degradation_tolerance_db: f64,
    pub q_offset_db: f64,
}

impl Default for Decisions {
    fn default() -> Self {
        Self {
            config_selection: "maximize the minimum Q over loaded batches",
            fitness: "mean + min of the per-state minimum Q over monitored batches, all 2N+1 states",
            percentile: "fraction of random orders strictly below",
            degradation_tolerance_db: DEGRADATION_TOLERANCE_DB,
            q_offset_db: QAM16_OFFSET_DB,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub fitness: FitnessValue<f64>,
    pub step0_q_db: f64,
    pub final_q_db: f64,
    pub min_q_db: f64,
    pub mean_q_db: f64,
    /// `step0_q_db - min_q_db`.
    pub dip_db: f64,
}

impl ReplaySummary {
    pub fn from_trajectory(t: &Trajectory<f64>) -> Self {
        let f = fitness(t);
        let step0 = t.scalar_per_state[0];
        Self {
            fitness: f,
            step0_q_db: step0,
            final_q_db: *t.scalar_per_state.last().expect("non-empty trajectory"),
            min_q_db: f.min_q,
            mean_q_db: f.mean_q,
            dip_db: step0 - f.min_q,
        }
    }

    pub fn degradation_prevented(&self) -> bool {
        self.min_q_db >= self.step0_q_db - DEGRADATION_TOLERANCE_DB
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub count: usize,
    pub worst_dip_db: f64,
    pub min_q_median_db: f64,
    pub mean_q_median_db: f64,
    /// Every random order starts and ends where the searched order does.
    pub endpoints_match: bool,
}

impl BaselineSummary {
    fn new(stats: &BaselineStats, replay: &ReplaySummary) -> Self {
        Self {
            count: stats.len(),
            worst_dip_db: stats.worst_dip_db(),
            min_q_median_db: median(&stats.mins()),
            mean_q_median_db: median(&stats.means()),
            endpoints_match: stats
                .records
                .iter()
                .all(|r| r.step0_q_db == replay.step0_q_db && r.final_q_db == replay.final_q_db),
        }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaSummary {
    pub order: ReconfigOrder,
    /// Fitness of the order under the twin.
    pub dt_fitness: FitnessValue<f64>,
    pub generations_run: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantReport {
    pub index: usize,
    pub initial: OAConfig,
    pub order: ReconfigOrder,
    pub dt_fitness: f64,
    pub replay: ReplaySummary,
    pub degradation_prevented: bool,
    #[serde(skip)]
    pub trajectory: Trajectory<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub scenario: ScenarioFile,
    pub link: LinkSpec,
    pub decisions: Decisions,
    pub monitored_batches: Vec<usize>,
    pub configs: ConfigPair,
    pub twin: ValidationReport,
    pub ga: GaSummary,
    pub replay: ReplaySummary,
    pub baseline: BaselineSummary,
    pub min_q_percentile: f64,
    pub mean_q_percentile: f64,
    pub degradation_prevented: bool,
    pub variants: Vec<VariantReport>,
    #[serde(skip)]
    pub model: MlpModel<f64>,
    #[serde(skip)]
    pub ga_result: GaResult<f64>,
    #[serde(skip)]
    pub dt_trajectory: Trajectory<f64>,
    #[serde(skip)]
    pub replay_trajectory: Trajectory<f64>,
    #[serde(skip)]
    pub baseline_stats: BaselineStats,
}

/// Runs every stage in order; errors carry the failing stage's name.
pub fn run_experiment(scenario: Scenario) -> Result<ExperimentReport> {
    let p = Pipeline::new(scenario)?;
    let configs = p.select_configs()?;
    let dataset = p.dataset()?;
    let (model, twin) = p.train_twin(&dataset)?;
    let transition = p.transition(&configs.initial, &configs.target).stage("search")?;
    let ga = p.search(&model, &transition, p.scenario().seeds().ga)?;
    let baseline = p.baseline(&transition)?;
    p.finish(configs, model, twin, ga, baseline)
}

/// File names written by [`export_report`] and read by the staged CLI.
pub mod files {
    pub const SUMMARY: &str = "summary.json";
    pub const CONFIGS: &str = "configs.json";
    pub const DATASET: &str = "dataset.csv";
    pub const TWIN: &str = "twin.ckpt";
    pub const VALIDATION: &str = "validation.json";
    pub const GA_RESULT: &str = "ga_result.json";
    pub const GA_PROGRESS: &str = "ga_progress.csv";
    pub const TRAJ_DT: &str = "trajectory_ga_dt.csv";
    pub const TRAJ_REPLAY: &str = "trajectory_ga_replay.csv";
    pub const BASELINE_ORDERS: &str = "baseline_orders.csv";
    pub const BASELINE_CDF: &str = "baseline_cdf.csv";
}

pub(crate) fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes the summary, trajectories, baseline tables, GA progress and the
/// artifacts the staged commands consume. Output depends only on the report.
pub fn export_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(dir, files::SUMMARY, report)?;
    write_json(dir, files::CONFIGS, &report.configs)?;
    write_json(dir, files::VALIDATION, &report.twin)?;
    write_json(dir, files::GA_RESULT, &report.ga_result)?;
    let mut w = create(dir, files::TWIN)?;
    report.model.save(&mut w)?;
    w.flush()?;
    report.ga_result.write_progress_csv(create(dir, files::GA_PROGRESS)?)?;
    report.dt_trajectory.write_csv(create(dir, files::TRAJ_DT)?)?;
    report.replay_trajectory.write_csv(create(dir, files::TRAJ_REPLAY)?)?;
    report
        .baseline_stats
        .write_orders_csv(create(dir, files::BASELINE_ORDERS)?)?;
    report.baseline_stats.write_cdf_csv(create(dir, files::BASELINE_CDF)?)?;
    for v in &report.variants {
        v.trajectory
            .write_csv(create(dir, &format!("trajectory_variant_{}_replay.csv", v.index))?)?;
    }
    Ok(())
}
