//! Random-order baseline replayed on the oracle, with empirical CDFs.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_model::LinkOracle;
use crate::reconfig::{trajectory, FitnessValue, ReconfigOrder, TransitionScenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub order: ReconfigOrder,
    pub min_q_db: f64,
    pub mean_q_db: f64,
    pub step0_q_db: f64,
    pub final_q_db: f64,
}

impl BaselineRecord {
    /// How far the trajectory falls below its starting value, dB.
    pub fn dip_db(&self) -> f64 {
        self.step0_q_db - self.min_q_db
    }
}

/// One point of an empirical CDF: fraction of samples `<= value_db`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value_db: f64,
    pub cumulative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub records: Vec<BaselineRecord>,
}

impl BaselineStats {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mins(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.min_q_db).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_q_db).collect()
    }

    pub fn min_cdf(&self) -> Vec<CdfPoint> {
        empirical_cdf(&self.mins())
    }

    pub fn mean_cdf(&self) -> Vec<CdfPoint> {
        empirical_cdf(&self.means())
    }

    /// Largest drop below step 0 among all random orders, dB.
    pub fn worst_dip_db(&self) -> f64 {
        self.records
            .iter()
            .map(BaselineRecord::dip_db)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `index, order, min_q_db, mean_q_db, step0_q_db, final_q_db`.
    pub fn write_orders_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "order", "min_q_db", "mean_q_db", "step0_q_db", "final_q_db"])?;
        for (i, r) in self.records.iter().enumerate() {
            wtr.write_record([
                i.to_string(),
                r.order.to_string(),
                format!("{:?}", r.min_q_db),
                format!("{:?}", r.mean_q_db),
                format!("{:?}", r.step0_q_db),
                format!("{:?}", r.final_q_db),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_orders_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| {
                row.get(i)
                    .ok_or_else(|| Error::Dataset(format!("baseline row missing column {i}")))
            };
            let num = |i: usize| -> Result<f64> {
                field(i)?
                    .parse()
                    .map_err(|e| Error::Dataset(format!("baseline column {i}: {e}")))
            };
            let steps = field(1)?
                .split('-')
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|e| Error::InvalidOrder(format!("`{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(BaselineRecord {
                order: ReconfigOrder::new(steps)?,
                min_q_db: num(2)?,
                mean_q_db: num(3)?,
                step0_q_db: num(4)?,
                final_q_db: num(5)?,
            });
        }
        Ok(Self { records })
    }

    /// `metric, value_db, cumulative` for both the min and mean CDFs.
    pub fn write_cdf_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["metric", "value_db", "cumulative"])?;
        for (name, cdf) in [("min_q", self.min_cdf()), ("mean_q", self.mean_cdf())] {
            for p in cdf {
                wtr.write_record([
                    name.to_string(),
                    format!("{:?}", p.value_db),
                    format!("{:?}", p.cumulative),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Sorted distinct values with the fraction of samples at or below each.
pub fn empirical_cdf(samples: &[f64]) -> Vec<CdfPoint> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let cumulative = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.value_db == x => last.cumulative = cumulative,
            _ => out.push(CdfPoint {
                value_db: x,
                cumulative,
            }),
        }
    }
    out
}

/// Fraction of `samples` strictly below `value`.
pub fn percentile_rank(value: f64, samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "percentile of an empty sample");
    samples.iter().filter(|&&s| s < value).count() as f64 / samples.len() as f64
}

/// Replays `count` uniformly random orders on the oracle. Orders are drawn
/// sequentially from `rng`; replays run in parallel.
pub fn run_baseline<R: Rng + ?Sized>(
    transition: &TransitionScenario,
    oracle: &LinkOracle,
    count: usize,
    rng: &mut R,
) -> Result<BaselineStats> {
    let orders: Vec<ReconfigOrder> = (0..count)
        .map(|_| ReconfigOrder::random(transition.n_steps(), rng))
        .collect();
    let records = orders
        .into_par_iter()
        .map(|order| {
            let t = trajectory::<f64, _>(oracle, transition, &order)?;
            let f = FitnessValue::from_scalars(&t.scalar_per_state);
            Ok(BaselineRecord {
                min_q_db: f.min_q,
                mean_q_db: f.mean_q,
                step0_q_db: t.scalar_per_state[0],
                final_q_db: *t.scalar_per_state.last().expect("non-empty"),
                order,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineStats { records })
}
