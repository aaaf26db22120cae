//! Scenario files: human-editable TOML describing the link, the loading
//! change, sample counts and per-stage seeds.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digital_twin::{TrainConfig, DATASET_SIZE, TRAIN_SIZE};
use crate::error::{Error, Result};
use crate::ga::GaParams;
use crate::link_model::{AmpRole, ChannelPlan, FiberSpan, LinkSpec};

const CASE1: &str = include_str!("../../scenarios/case1.toml");
const CASE2: &str = include_str!("../../scenarios/case2.toml");

/// Names accepted by [`load_scenario`] in place of a path.
pub const BUNDLED: [&str; 2] = ["case1", "case2"];

pub fn bundled_source(name: &str) -> Option<&'static str> {
    match name {
        "case1" => Some(CASE1),
        "case2" => Some(CASE2),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    /// Required; one entry per amplified span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<FiberSpan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oa_roles: Option<Vec<AmpRole>>,
    #[serde(default = "LinkSection::default_nf")]
    pub nf_db: f64,
    #[serde(default = "LinkSection::default_center")]
    pub center_freq_thz: f64,
    #[serde(default = "LinkSection::default_input_loss")]
    pub input_loss_db: f64,
    /// Shared by every amplifier.
    #[serde(default = "LinkSection::default_gain_bounds")]
    pub gain_bounds_db: [f64; 2],
    #[serde(default = "LinkSection::default_tilt_bounds")]
    pub tilt_bounds_db: [f64; 2],
}

impl LinkSection {
    fn default_nf() -> f64 {
        5.0
    }
    fn default_center() -> f64 {
        193.4
    }
    fn default_input_loss() -> f64 {
        16.0
    }
    fn default_gain_bounds() -> [f64; 2] {
        [14.5, 17.5]
    }
    fn default_tilt_bounds() -> [f64; 2] {
        [-0.5, 0.5]
    }

    pub fn to_link_spec(&self) -> Result<LinkSpec> {
        let spans = self.spans.clone().ok_or_else(|| Error::Scenario {
            field: "link.spans".into(),
            msg: "missing required field `spans`".into(),
        })?;
        let n_oa = spans.len() + 1;
        let link = LinkSpec {
            spans,
            oa_roles: self.oa_roles.clone().unwrap_or_else(|| LinkSpec::default_roles(n_oa)),
            nf_db: self.nf_db,
            center_freq_thz: self.center_freq_thz,
            input_loss_db: self.input_loss_db,
            gain_bounds_db: vec![self.gain_bounds_db; n_oa],
            tilt_bounds_db: self.tilt_bounds_db,
        };
        link.validate().map_err(|e| Error::Scenario {
            field: "link".into(),
            msg: e.to_string(),
        })?;
        Ok(link)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub n_batches: usize,
    pub channels_per_batch: usize,
    pub spacing_ghz: f64,
    pub symbol_rate_gbaud: f64,
    pub launch_power_dbm: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let p = ChannelPlan::full_load();
        Self {
            n_batches: p.n_batches,
            channels_per_batch: p.channels_per_batch,
            spacing_ghz: p.spacing_ghz,
            symbol_rate_gbaud: p.symbol_rate_gbaud,
            launch_power_dbm: p.launch_power_dbm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingSection {
    /// Batches carrying traffic before the change (0-based ids).
    pub initial: BTreeSet<usize>,
    /// Batches carrying traffic after the change.
    pub current: BTreeSet<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Counts {
    /// Random configurations drawn when picking the initial and target.
    pub candidate_count: usize,
    pub baseline_count: usize,
    pub dataset_size: usize,
    pub train_size: usize,
    /// Additional initial configurations searched against the same target.
    pub extra_initials: usize,
}

impl Default for Counts {
    fn default() -> Self {
        Self {
            candidate_count: 500,
            baseline_count: 100,
            dataset_size: DATASET_SIZE,
            train_size: TRAIN_SIZE,
            extra_initials: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub sampling: u64,
    pub training: u64,
    pub ga: u64,
    pub baseline: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_master(0)
    }
}

impl Seeds {
    /// Four stage seeds drawn from one master seed.
    pub fn from_master(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            sampling: rng.next_u64(),
            training: rng.next_u64(),
            ga: rng.next_u64(),
            baseline: rng.next_u64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub case_id: u32,
    pub link: LinkSection,
    #[serde(default)]
    pub channels: ChannelSection,
    pub loading: LoadingSection,
    #[serde(default)]
    pub counts: Counts,
    #[serde(default)]
    pub seeds: Seeds,
    /// `seed` is ignored; `seeds.ga` wins.
    #[serde(default)]
    pub ga: GaParams,
    /// `seed` is ignored; `seeds.training` wins.
    #[serde(default)]
    pub train: TrainConfig,
}

/// A validated scenario with its derived link and channel plans.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub link: LinkSpec,
}

impl Scenario {
    pub fn from_toml(src: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(src).map_err(|e| Error::Scenario {
            field: toml_field(&e),
            msg: e.message().trim().to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn from_file(mut file: ScenarioFile) -> Result<Self> {
        let link = file.link.to_link_spec()?;
        let bad = |field: &str, msg: String| Error::Scenario {
            field: field.into(),
            msg,
        };
        let c = &file.counts;
        for (name, v) in [
            ("counts.candidate_count", c.candidate_count),
            ("counts.baseline_count", c.baseline_count),
            ("counts.train_size", c.train_size),
        ] {
            if v == 0 {
                return Err(bad(name, "must be >= 1".into()));
            }
        }
        if c.dataset_size <= c.train_size {
            return Err(bad("counts.dataset_size", "must exceed counts.train_size".into()));
        }
        if file.loading.initial.is_empty() {
            return Err(bad("loading.initial", "must name at least one batch".into()));
        }
        if !file.loading.initial.is_subset(&file.loading.current) {
            return Err(bad("loading.initial", "must be a subset of loading.current".into()));
        }
        file.ga.seed = file.seeds.ga;
        file.train.seed = file.seeds.training;
        file.ga.validate().map_err(|e| bad("ga", e.to_string()))?;
        file.train.validate().map_err(|e| bad("train", e.to_string()))?;
        let scenario = Self { file, link };
        scenario
            .current_plan()
            .validate()
            .map_err(|e| bad("channels", e.to_string()))?;
        Ok(scenario)
    }

    /// Replaces all stage seeds with ones derived from `seed`.
    pub fn with_master_seed(mut self, seed: u64) -> Self {
        self.file.seeds = Seeds::from_master(seed);
        self.file.ga.seed = self.file.seeds.ga;
        self.file.train.seed = self.file.seeds.training;
        self
    }

    pub fn seeds(&self) -> Seeds {
        self.file.seeds
    }

    pub fn counts(&self) -> &Counts {
        &self.file.counts
    }

    fn plan(&self, loaded: &BTreeSet<usize>) -> ChannelPlan {
        let ch = &self.file.channels;
        ChannelPlan {
            n_batches: ch.n_batches,
            channels_per_batch: ch.channels_per_batch,
            spacing_ghz: ch.spacing_ghz,
            symbol_rate_gbaud: ch.symbol_rate_gbaud,
            launch_power_dbm: ch.launch_power_dbm,
            loaded_batches: loaded.clone(),
            existing_batches: self.file.loading.initial.clone(),
        }
    }

    /// Only the existing batches are lit.
    pub fn initial_plan(&self) -> ChannelPlan {
        self.plan(&self.file.loading.initial)
    }

    /// After the loading change; existing batches are marked.
    pub fn current_plan(&self) -> ChannelPlan {
        self.plan(&self.file.loading.current)
    }

    pub fn monitored(&self) -> &BTreeSet<usize> {
        &self.file.loading.initial
    }
}

fn toml_field(e: &toml::de::Error) -> String {
    // "missing field `x`" and "unknown field `x`" carry the key in backticks
    let msg = e.message();
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "toml".into())
}

/// Loads a scenario from `arg`, which is a file path or a bundled name.
pub fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(src) = bundled_source(arg) {
            return Scenario::from_toml(src);
        }
    }
    let src = std::fs::read_to_string(path).map_err(|e| Error::Scenario {
        field: "path".into(),
        msg: format!("{arg}: {e}"),
    })?;
    Scenario::from_toml(&src)
}
