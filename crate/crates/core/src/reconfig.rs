//! The 2N-step reconfiguration process: step catalog, intermediate
//! configurations, trajectories and order fitness.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::digital_twin::{sample_configs, MlpModel};
use crate::error::{Error, Result};
use crate::link_model::{ChannelPlan, LinkOracle, LinkSpec, OAConfig, QVector};
use crate::scalar::Scalar;

/// Anything that maps an amplifier configuration to per-batch Q-factors.
pub trait QualityModel<T: Scalar>: Sync {
    fn q_vector(&self, config: &OAConfig) -> Result<QVector<T>>;

    fn q_vectors(&self, configs: &[OAConfig]) -> Result<Vec<QVector<T>>> {
        configs.iter().map(|c| self.q_vector(c)).collect()
    }
}

impl<T: Scalar> QualityModel<T> for LinkOracle {
    fn q_vector(&self, config: &OAConfig) -> Result<QVector<T>> {
        self.q(config)
    }
}

impl<T: Scalar> QualityModel<T> for MlpModel<T> {
    fn q_vector(&self, config: &OAConfig) -> Result<QVector<T>> {
        self.predict(config)
    }

    fn q_vectors(&self, configs: &[OAConfig]) -> Result<Vec<QVector<T>>> {
        self.predict_many(configs)
    }
}

impl<T: Scalar, M: QualityModel<T> + ?Sized> QualityModel<T> for &M {
    fn q_vector(&self, config: &OAConfig) -> Result<QVector<T>> {
        (**self).q_vector(config)
    }

    fn q_vectors(&self, configs: &[OAConfig]) -> Result<Vec<QVector<T>>> {
        (**self).q_vectors(configs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    Gain,
    Tilt,
}

/// One atomic update: set `param` of amplifier `oa_index` to its target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReconfigStep {
    pub oa_index: usize,
    pub param: Param,
    /// Gains are `1..=N`, tilts `N+1..=2N`.
    pub step_id: usize,
}

impl ReconfigStep {
    pub fn from_id(step_id: usize, n_oa: usize) -> Result<Self> {
        match step_id {
            id if (1..=n_oa).contains(&id) => Ok(Self {
                oa_index: id - 1,
                param: Param::Gain,
                step_id: id,
            }),
            id if (n_oa + 1..=2 * n_oa).contains(&id) => Ok(Self {
                oa_index: id - n_oa - 1,
                param: Param::Tilt,
                step_id: id,
            }),
            id => Err(Error::InvalidOrder(format!("step id {id} outside 1..={}", 2 * n_oa))),
        }
    }
}

pub fn step_catalog(n_oa: usize) -> Vec<ReconfigStep> {
    (1..=2 * n_oa)
        .map(|id| ReconfigStep::from_id(id, n_oa).expect("id in range"))
        .collect()
}

/// A permutation of step ids `1..=2N`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ReconfigOrder(Vec<usize>);

impl ReconfigOrder {
    pub fn new(steps: Vec<usize>) -> Result<Self> {
        validate_permutation(&steps)?;
        Ok(Self(steps))
    }

    /// `1, 2, …, n_steps`.
    pub fn identity(n_steps: usize) -> Self {
        Self((1..=n_steps).collect())
    }

    pub fn random<R: Rng + ?Sized>(n_steps: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut v: Vec<usize> = (1..=n_steps).collect();
        v.shuffle(rng);
        Self(v)
    }

    pub fn steps(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Swaps two positions; the result is still a permutation.
    pub fn swap(&mut self, i: usize, j: usize) {
        self.0.swap(i, j);
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl TryFrom<Vec<usize>> for ReconfigOrder {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ReconfigOrder> for Vec<usize> {
    fn from(o: ReconfigOrder) -> Self {
        o.0
    }
}

impl std::fmt::Display for ReconfigOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

/// True iff `steps` is a permutation of `1..=steps.len()`.
pub fn is_permutation(steps: &[usize]) -> bool {
    let mut seen = vec![false; steps.len()];
    steps.iter().all(|&s| {
        if s == 0 || s > steps.len() || seen[s - 1] {
            return false;
        }
        seen[s - 1] = true;
        true
    })
}

fn validate_permutation(steps: &[usize]) -> Result<()> {
    if steps.is_empty() {
        return Err(Error::InvalidOrder("empty order".into()));
    }
    if !is_permutation(steps) {
        return Err(Error::InvalidOrder(format!(
            "{steps:?} is not a permutation of 1..={}",
            steps.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionScenario {
    pub initial: OAConfig,
    pub target: OAConfig,
    pub monitored: BTreeSet<usize>,
    pub plan: ChannelPlan,
}

impl TransitionScenario {
    pub fn new(initial: OAConfig, target: OAConfig, monitored: BTreeSet<usize>, plan: ChannelPlan) -> Result<Self> {
        if initial.n_oa() != target.n_oa() {
            return Err(Error::InvalidConfig(
                "initial and target differ in amplifier count".into(),
            ));
        }
        if monitored.is_empty() {
            return Err(Error::InvalidConfig("monitored batch set is empty".into()));
        }
        if !monitored.is_subset(&plan.loaded_batches) {
            return Err(Error::InvalidConfig("monitored batches must be loaded".into()));
        }
        Ok(Self {
            initial,
            target,
            monitored,
            plan,
        })
    }

    pub fn n_oa(&self) -> usize {
        self.initial.n_oa()
    }

    pub fn n_steps(&self) -> usize {
        2 * self.n_oa()
    }

    fn check_order(&self, order: &ReconfigOrder) -> Result<()> {
        if order.len() != self.n_steps() {
            return Err(Error::InvalidOrder(format!(
                "order has {} steps, scenario needs {}",
                order.len(),
                self.n_steps()
            )));
        }
        Ok(())
    }
}

/// Configuration after the first `k` steps of `order`.
pub fn intermediate_config(scenario: &TransitionScenario, order: &ReconfigOrder, k: usize) -> Result<OAConfig> {
    scenario.check_order(order)?;
    if k > order.len() {
        return Err(Error::InvalidStepIndex { k, max: order.len() });
    }
    let n_oa = scenario.n_oa();
    let mut cfg = scenario.initial.clone();
    for &id in &order.steps()[..k] {
        let step = ReconfigStep::from_id(id, n_oa)?;
        apply_step(&mut cfg, &scenario.target, step);
    }
    Ok(cfg)
}

fn apply_step(cfg: &mut OAConfig, target: &OAConfig, step: ReconfigStep) {
    let i = step.oa_index;
    match step.param {
        Param::Gain => cfg.gains_tenths_mut()[i] = target.gains_tenths()[i],
        Param::Tilt => cfg.tilts_tenths_mut()[i] = target.tilts_tenths()[i],
    }
}

/// All `2N + 1` states of an order, starting at the initial configuration.
pub fn states(scenario: &TransitionScenario, order: &ReconfigOrder) -> Result<Vec<OAConfig>> {
    scenario.check_order(order)?;
    let n_oa = scenario.n_oa();
    let mut cur = scenario.initial.clone();
    let mut out = Vec::with_capacity(order.len() + 1);
    out.push(cur.clone());
    for &id in order.steps() {
        apply_step(&mut cur, &scenario.target, ReconfigStep::from_id(id, n_oa)?);
        out.push(cur.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub states: Vec<OAConfig>,
    pub q_per_state: Vec<QVector<T>>,
    /// Minimum over monitored batches at each state.
    pub scalar_per_state: Vec<T>,
    pub monitored: Vec<usize>,
}

impl<T: Scalar> Trajectory<T> {
    /// `step, scalar_q_db, q_db_batch_<b>...` with one row per state.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string(), "scalar_q_db".to_string()];
        header.extend(self.monitored.iter().map(|b| format!("q_db_batch_{b}")));
        wtr.write_record(&header)?;
        for (k, (q, s)) in self.q_per_state.iter().zip(&self.scalar_per_state).enumerate() {
            let mut rec = vec![k.to_string(), format!("{:?}", s.as_f64())];
            rec.extend(
                self.monitored
                    .iter()
                    .map(|&b| q.get(b).map(|v| format!("{:?}", v.as_f64())).unwrap_or_default()),
            );
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn trajectory<T: Scalar, M: QualityModel<T> + ?Sized>(
    model: &M,
    scenario: &TransitionScenario,
    order: &ReconfigOrder,
) -> Result<Trajectory<T>> {
    let states = states(scenario, order)?;
    let q_per_state = model.q_vectors(&states)?;
    let scalar_per_state = q_per_state
        .iter()
        .enumerate()
        .map(|(k, q)| {
            q.min_over(&scenario.monitored)
                .ok_or_else(|| Error::Fitness(format!("state {k}: a monitored batch has no Q value")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        states,
        q_per_state,
        scalar_per_state,
        monitored: scenario.monitored.iter().copied().collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue<T> {
    /// `mean_q + min_q`, dB.
    pub value: T,
    pub mean_q: T,
    pub min_q: T,
}

impl<T: Scalar> FitnessValue<T> {
    pub fn from_scalars(scalars: &[T]) -> Self {
        assert!(!scalars.is_empty(), "fitness of an empty trajectory");
        let n = T::lit(scalars.len() as f64);
        let min_q = scalars.iter().copied().fold(T::infinity(), T::min);
        // offset by the minimum so a flat curve averages to exactly its value
        let mean_q = min_q + scalars.iter().map(|&s| s - min_q).sum::<T>() / n;
        Self {
            value: mean_q + min_q,
            mean_q,
            min_q,
        }
    }
}

pub fn fitness<T: Scalar>(traj: &Trajectory<T>) -> FitnessValue<T> {
    FitnessValue::from_scalars(&traj.scalar_per_state)
}

/// Draws `n_candidates` configurations and keeps the one with the highest
/// minimum Q over the oracle's loaded batches (first occurrence on ties).
pub fn select_best_config<R: Rng + ?Sized>(
    oracle: &LinkOracle,
    link: &LinkSpec,
    n_candidates: usize,
    rng: &mut R,
) -> Result<OAConfig> {
    if n_candidates == 0 {
        return Err(Error::param("candidate_count", "must be >= 1"));
    }
    let mut best: Option<(f64, OAConfig)> = None;
    for cfg in sample_configs(link, n_candidates, rng) {
        let score = oracle
            .q::<f64>(&cfg)?
            .min_loaded()
            .ok_or_else(|| Error::InvalidPlan("no loaded batches".into()))?;
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, cfg));
        }
    }
    Ok(best.expect("n_candidates >= 1").1)
}
