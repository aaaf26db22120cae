//! Surrogate ("digital twin") of the link: sampled amplifier settings labelled
//! by the oracle, min-max normalized, and fitted by a one-hidden-layer MLP.

mod adam;
mod mlp;
mod train;

use std::io::{Read, Write};

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_model::{LinkOracle, LinkSpec, OAConfig};
use crate::scalar::Scalar;

pub use adam::{AdamParams, AdamState};
pub use mlp::{Activation, Gradients, MlpModel};
pub use train::{grad_check, spearman, train, TrainConfig, ValidationReport};

/// Default dataset size and train share.
pub const DATASET_SIZE: usize = 1000;
pub const TRAIN_SIZE: usize = 700;

/// Per-feature `[min, max]` in dB, laid out `[g_0..g_N, t_0..t_N]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureBounds {
    pub fn from_link(link: &LinkSpec) -> Self {
        let n = link.n_oa();
        let mut min = Vec::with_capacity(2 * n);
        let mut max = Vec::with_capacity(2 * n);
        for b in &link.gain_bounds_db {
            min.push(b[0]);
            max.push(b[1]);
        }
        for _ in 0..n {
            min.push(link.tilt_bounds_db[0]);
            max.push(link.tilt_bounds_db[1]);
        }
        Self { min, max }
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn normalize<T: Scalar>(&self, config: &OAConfig) -> Result<Vec<T>> {
        normalize(config, self)
    }
}

/// Min-max scaling of `[gains…, tilts…]`; a zero-width bound maps to 0.5.
pub fn normalize<T: Scalar>(config: &OAConfig, bounds: &FeatureBounds) -> Result<Vec<T>> {
    let n = config.n_oa();
    if bounds.len() != 2 * n {
        return Err(Error::InvalidConfig(format!(
            "config has {} parameters, bounds describe {}",
            2 * n,
            bounds.len()
        )));
    }
    let values = config.gains_db().into_iter().chain(config.tilts_db());
    Ok(values
        .zip(bounds.min.iter().zip(&bounds.max))
        .map(|(v, (&lo, &hi))| {
            if hi > lo {
                T::lit((v - lo) / (hi - lo))
            } else {
                T::lit(0.5)
            }
        })
        .collect())
}

/// Inverse of [`normalize`], in dB (not re-quantized).
pub fn denormalize(features: &[f64], bounds: &FeatureBounds) -> Vec<f64> {
    features
        .iter()
        .zip(bounds.min.iter().zip(&bounds.max))
        .map(|(&f, (&lo, &hi))| if hi > lo { lo + f * (hi - lo) } else { lo })
        .collect()
}

fn draw_tenths<R: Rng + ?Sized>(lo: i32, hi: i32, rng: &mut R) -> i32 {
    if lo == hi {
        return lo;
    }
    let lo_db = lo as f64 / 10.0;
    let hi_db = hi as f64 / 10.0;
    let v: f64 = rng.random_range(lo_db..=hi_db);
    ((v * 10.0).round() as i32).clamp(lo, hi)
}

/// `n` configurations drawn uniformly within the link bounds, quantized to 0.1 dB.
pub fn sample_configs<R: Rng + ?Sized>(link: &LinkSpec, n: usize, rng: &mut R) -> Vec<OAConfig> {
    let n_oa = link.n_oa();
    let (tlo, thi) = link.tilt_bounds_tenths();
    (0..n)
        .map(|_| {
            let gains = (0..n_oa)
                .map(|oa| {
                    let (lo, hi) = link.gain_bounds_tenths(oa);
                    draw_tenths(lo, hi, rng)
                })
                .collect();
            let tilts = (0..n_oa).map(|_| draw_tenths(tlo, thi, rng)).collect();
            OAConfig::from_tenths(gains, tilts).expect("n_oa >= 1")
        })
        .collect()
}

/// Normalized features and Q targets; the first `n_train` rows train, the rest
/// validate.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub features: Array2<T>,
    pub targets: Array2<T>,
    /// Batch id of each target column.
    pub batches: Vec<usize>,
    pub n_batches: usize,
    pub n_train: usize,
    pub bounds: FeatureBounds,
}

impl<T: Scalar> Dataset<T> {
    /// Labels `configs` with the oracle (all loaded batches), shuffles rows and
    /// splits off the first `n_train` for training.
    pub fn build<R: Rng + ?Sized>(
        oracle: &LinkOracle,
        configs: &[OAConfig],
        n_train: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if configs.is_empty() || n_train == 0 || n_train >= configs.len() {
            return Err(Error::Dataset(format!(
                "need 0 < n_train ({n_train}) < rows ({})",
                configs.len()
            )));
        }
        let bounds = FeatureBounds::from_link(&oracle.link);
        let batches: Vec<usize> = oracle.plan.loaded_batches.iter().copied().collect();
        let mut order: Vec<usize> = (0..configs.len()).collect();
        order.shuffle(rng);

        let d = bounds.len();
        let mut features = Array2::zeros((configs.len(), d));
        let mut targets = Array2::zeros((configs.len(), batches.len()));
        for (row, &src) in order.iter().enumerate() {
            let cfg = &configs[src];
            for (j, v) in normalize::<T>(cfg, &bounds)?.into_iter().enumerate() {
                features[[row, j]] = v;
            }
            let q = oracle.q::<T>(cfg)?;
            for (j, &b) in batches.iter().enumerate() {
                targets[[row, j]] = q
                    .get(b)
                    .ok_or_else(|| Error::Dataset(format!("batch {b} not loaded")))?;
            }
        }
        Ok(Self {
            features,
            targets,
            batches,
            n_batches: oracle.plan.n_batches,
            n_train,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn train_x(&self) -> ArrayView2<'_, T> {
        self.features.slice(s![..self.n_train, ..])
    }

    pub fn train_y(&self) -> ArrayView2<'_, T> {
        self.targets.slice(s![..self.n_train, ..])
    }

    pub fn val_x(&self) -> ArrayView2<'_, T> {
        self.features.slice(s![self.n_train.., ..])
    }

    pub fn val_y(&self) -> ArrayView2<'_, T> {
        self.targets.slice(s![self.n_train.., ..])
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.nrows() != self.features.nrows() {
            return Err(Error::Dataset("feature and target rows differ".into()));
        }
        if self.features.ncols() != self.bounds.len() || self.targets.ncols() != self.batches.len() {
            return Err(Error::Dataset("column counts inconsistent with bounds/batches".into()));
        }
        if self.n_train == 0 || self.n_train >= self.len() {
            return Err(Error::Dataset(format!(
                "invalid split {} of {}",
                self.n_train,
                self.len()
            )));
        }
        let (zero, one) = (T::zero(), T::one());
        if self.features.iter().any(|&v| !(v >= zero && v <= one)) {
            return Err(Error::Dataset("features must lie in [0, 1]".into()));
        }
        if self.targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("targets must be finite".into()));
        }
        Ok(())
    }

    /// CSV with `gain_<i>`, `tilt_<i>` (normalized) then `q_db_batch_<b>` columns,
    /// rows in split order (training rows first).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n_oa = self.bounds.len() / 2;
        let mut wtr = csv::Writer::from_writer(w);
        let header: Vec<String> = (0..n_oa)
            .map(|i| format!("gain_{i}"))
            .chain((0..n_oa).map(|i| format!("tilt_{i}")))
            .chain(self.batches.iter().map(|b| format!("q_db_batch_{b}")))
            .collect();
        wtr.write_record(&header)?;
        for (x, y) in self.features.outer_iter().zip(self.targets.outer_iter()) {
            let rec: Vec<String> = x.iter().chain(y.iter()).map(|v| format!("{:?}", v.as_f64())).collect();
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Dataset::write_csv`]; bounds and split come from
    /// the caller.
    pub fn read_csv<R: Read>(r: R, bounds: FeatureBounds, n_batches: usize, n_train: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let d = bounds.len();
        if headers.len() <= d {
            return Err(Error::Dataset(format!(
                "expected more than {d} columns, found {}",
                headers.len()
            )));
        }
        let batches = headers
            .iter()
            .skip(d)
            .map(|h| {
                h.strip_prefix("q_db_batch_")
                    .and_then(|b| b.parse::<usize>().ok())
                    .ok_or_else(|| Error::Dataset(format!("bad target column `{h}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut flat_x = Vec::new();
        let mut flat_y = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|e| Error::Dataset(format!("row {rows} col {j}: {e}")))?;
                if j < d {
                    flat_x.push(T::lit(v));
                } else {
                    flat_y.push(T::lit(v));
                }
            }
            rows += 1;
        }
        let shape_err = |e: ndarray::ShapeError| Error::Dataset(e.to_string());
        let ds = Self {
            features: Array2::from_shape_vec((rows, d), flat_x).map_err(shape_err)?,
            targets: Array2::from_shape_vec((rows, batches.len()), flat_y).map_err(shape_err)?,
            batches,
            n_batches,
            n_train,
            bounds,
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link_model::{ChannelPlan, FiberSpan};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_quantized_and_in_bounds() {
        let link = LinkSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfgs = sample_configs(&link, 1000, &mut rng);
        assert_eq!(cfgs.len(), 1000);
        for c in &cfgs {
            c.check_bounds(&link).unwrap();
            for v in c.gains_db().iter().chain(&c.tilts_db()) {
                assert!(((v * 10.0).round() - v * 10.0).abs() < 1e-9);
            }
        }
        // Both bound values are reachable.
        assert!(cfgs.iter().any(|c| c.gains_tenths().contains(&145)));
        assert!(cfgs.iter().any(|c| c.tilts_tenths().contains(&5)));
    }

    #[test]
    fn degenerate_bounds_pin_the_sample() {
        let link = LinkSpec::uniform(2, FiberSpan::default(), [16.2, 16.2], [0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in sample_configs(&link, 50, &mut rng) {
            assert_eq!(c, OAConfig::uniform(3, 16.2, 0.0).unwrap());
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let link = LinkSpec::default();
        let a = sample_configs(&link, 20, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_configs(&link, 20, &mut ChaCha8Rng::seed_from_u64(3));
        let c = sample_configs(&link, 20, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normalize_examples() {
        let link = LinkSpec::uniform(1, FiberSpan::default(), [13.0, 19.0], [-1.0, 1.0]);
        let b = FeatureBounds::from_link(&link);
        let f: Vec<f64> = normalize(&OAConfig::from_db(&[16.0, 13.0], &[-1.0, 1.0]).unwrap(), &b).unwrap();
        assert_eq!(f, vec![0.5, 0.0, 0.0, 1.0]);
        let f: Vec<f64> = normalize(&OAConfig::from_db(&[19.0, 14.2], &[0.3, 0.0]).unwrap(), &b).unwrap();
        let back = denormalize(&f, &b);
        for (x, y) in back.iter().zip([19.0, 14.2, 0.3, 0.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_width_bound_maps_to_half() {
        let link = LinkSpec::uniform(1, FiberSpan::default(), [16.0, 16.0], [0.0, 0.0]);
        let b = FeatureBounds::from_link(&link);
        let f: Vec<f64> = normalize(&OAConfig::uniform(2, 16.0, 0.0).unwrap(), &b).unwrap();
        assert_eq!(f, vec![0.5; 4]);
    }

    #[test]
    fn dataset_split_and_csv_round_trip() {
        let oracle = LinkOracle::new(LinkSpec::default(), ChannelPlan::full_load()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfgs = sample_configs(&oracle.link, 40, &mut rng);
        let ds = Dataset::<f64>::build(&oracle, &cfgs, 28, &mut rng).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.train_x().nrows(), 28);
        assert_eq!(ds.val_y().nrows(), 12);
        assert_eq!(ds.features.ncols(), 14);
        assert_eq!(ds.targets.ncols(), 6);

        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::<f64>::read_csv(&buf[..], ds.bounds.clone(), 6, 28).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn dataset_rejects_bad_split() {
        let oracle = LinkOracle::new(LinkSpec::default(), ChannelPlan::full_load()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfgs = sample_configs(&oracle.link, 10, &mut rng);
        assert!(Dataset::<f64>::build(&oracle, &cfgs, 10, &mut rng).is_err());
        assert!(Dataset::<f64>::build(&oracle, &cfgs, 0, &mut rng).is_err());
    }
}
