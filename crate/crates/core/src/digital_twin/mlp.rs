//! Single-hidden-layer regressor `y = W2ᵀ·act(W1ᵀ·x + b1) + b2` with manual
//! backprop and a flat text checkpoint format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::FeatureBounds;
use crate::error::{Error, Result};
use crate::link_model::{OAConfig, QVector};
use crate::scalar::Scalar;

const CHECKPOINT_MAGIC: &str = "oa-reorder-mlp v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// Identity; used for gradient self-tests.
    Linear,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Checkpoint(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel<T> {
    /// inputs × hidden
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    /// hidden × outputs
    pub w2: Array2<T>,
    pub b2: Array1<T>,
    pub activation: Activation,
    pub bounds: FeatureBounds,
    /// Batch id of each output column.
    pub batches: Vec<usize>,
    /// Length of the `QVector`s produced by `predict`.
    pub n_batches: usize,
}

/// Gradients with the same layout as the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

impl<T: Copy> Gradients<T> {
    pub fn flat(&self) -> Vec<T> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
            .collect()
    }
}

impl<T: Scalar> MlpModel<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(
        hidden: usize,
        activation: Activation,
        bounds: FeatureBounds,
        batches: Vec<usize>,
        n_batches: usize,
        rng: &mut R,
    ) -> Self {
        let inputs = bounds.len();
        let outputs = batches.len();
        let mut glorot = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-a..=a)))
        };
        let w1 = glorot(inputs, hidden);
        let w2 = glorot(hidden, outputs);
        Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(outputs),
            activation,
            bounds,
            batches,
            n_batches,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.w1.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.w2.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn activate(&self, z: &mut Array2<T>) {
        if self.activation == Activation::Tanh {
            z.mapv_inplace(|v| v.tanh());
        }
    }

    /// Rows of `x` are normalized feature vectors.
    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut h = x.dot(&self.w1) + &self.b1;
        self.activate(&mut h);
        h.dot(&self.w2) + &self.b2
    }

    /// Squared error summed over outputs, averaged over rows.
    pub fn loss(&self, x: ArrayView2<T>, y: ArrayView2<T>) -> T {
        let r = self.forward(x) - y;
        r.mapv(|v| v * v).sum() / T::lit(x.nrows() as f64)
    }

    pub fn loss_and_grad(&self, x: ArrayView2<T>, y: ArrayView2<T>) -> (T, Gradients<T>) {
        let n = T::lit(x.nrows() as f64);
        let mut a = x.dot(&self.w1) + &self.b1;
        self.activate(&mut a);
        let out = a.dot(&self.w2) + &self.b2;
        let r = out - y;
        let loss = r.mapv(|v| v * v).sum() / n;

        let d_out = r * (T::lit(2.0) / n);
        let w2 = a.t().dot(&d_out);
        let b2 = d_out.sum_axis(Axis(0));
        let mut d_hidden = d_out.dot(&self.w2.t());
        if self.activation == Activation::Tanh {
            d_hidden.zip_mut_with(&a, |d, &act| *d = *d * (T::one() - act * act));
        }
        let w1 = x.t().dot(&d_hidden);
        let b1 = d_hidden.sum_axis(Axis(0));
        (loss, Gradients { w1, b1, w2, b2 })
    }

    pub fn features(&self, config: &OAConfig) -> Result<Vec<T>> {
        self.bounds.normalize(config)
    }

    pub fn predict(&self, config: &OAConfig) -> Result<QVector<T>> {
        Ok(self.predict_many(std::slice::from_ref(config))?.pop().expect("one row"))
    }

    /// One forward pass over all configs; identical to repeated `predict`.
    pub fn predict_many(&self, configs: &[OAConfig]) -> Result<Vec<QVector<T>>> {
        let d = self.n_inputs();
        let mut x = Array2::zeros((configs.len(), d));
        for (mut row, cfg) in x.axis_iter_mut(Axis(0)).zip(configs) {
            let f = self.features(cfg)?;
            row.iter_mut().zip(f).for_each(|(dst, v)| *dst = v);
        }
        let y = self.forward(x.view());
        Ok(y.axis_iter(Axis(0))
            .map(|row| {
                let mut q_db = vec![None; self.n_batches];
                for (&b, &v) in self.batches.iter().zip(row.iter()) {
                    q_db[b] = Some(v);
                }
                QVector { q_db }
            })
            .collect())
    }

    /// Parameters flattened in checkpoint order `w1, b1, w2, b2` (row-major).
    pub fn params_flat(&self) -> Vec<T> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
            .collect()
    }

    pub(crate) fn param_mut(&mut self, idx: usize) -> &mut T {
        let mut i = idx;
        if i < self.w1.len() {
            return &mut self.w1.as_slice_mut().expect("standard layout")[i];
        }
        i -= self.w1.len();
        if i < self.b1.len() {
            return &mut self.b1[i];
        }
        i -= self.b1.len();
        if i < self.w2.len() {
            return &mut self.w2.as_slice_mut().expect("standard layout")[i];
        }
        i -= self.w2.len();
        &mut self.b2[i]
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        let row = |s: &mut String, key: &str, vals: &mut dyn Iterator<Item = f64>| {
            s.push_str(key);
            for v in vals {
                // `{:?}` prints the shortest representation that round-trips.
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        };
        let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(s, "scalar {}", std::any::type_name::<T>());
        let _ = writeln!(s, "activation {}", self.activation.name());
        let _ = writeln!(s, "inputs {}", self.n_inputs());
        let _ = writeln!(s, "hidden {}", self.n_hidden());
        let _ = writeln!(s, "outputs {}", self.n_outputs());
        let _ = writeln!(s, "n_batches {}", self.n_batches);
        let _ = writeln!(
            s,
            "batches {}",
            self.batches.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")
        );
        row(&mut s, "bounds_min", &mut self.bounds.min.iter().copied());
        row(&mut s, "bounds_max", &mut self.bounds.max.iter().copied());
        row(&mut s, "w1", &mut self.w1.iter().map(|v| v.as_f64()));
        row(&mut s, "b1", &mut self.b1.iter().map(|v| v.as_f64()));
        row(&mut s, "w2", &mut self.w2.iter().map(|v| v.as_f64()));
        row(&mut s, "b2", &mut self.b2.iter().map(|v| v.as_f64()));
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        let mut lines = r.lines();
        let magic = lines.next().transpose()?.unwrap_or_default();
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!("bad header `{magic}`")));
        }
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| Error::Checkpoint(format!("missing `{k}`")));
        let usize_of = |k: &str| -> Result<usize> {
            get(k)?
                .trim()
                .parse()
                .map_err(|e| Error::Checkpoint(format!("`{k}`: {e}")))
        };
        let floats = |k: &str, len: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = get(k)?
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Checkpoint(format!("`{k}`: {e}")))?;
            if v.len() != len {
                return Err(Error::Checkpoint(format!(
                    "`{k}` has {} values, expected {len}",
                    v.len()
                )));
            }
            Ok(v)
        };
        let inputs = usize_of("inputs")?;
        let hidden = usize_of("hidden")?;
        let outputs = usize_of("outputs")?;
        let n_batches = usize_of("n_batches")?;
        let batches: Vec<usize> = get("batches")?
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Checkpoint(format!("`batches`: {e}")))?;
        if batches.len() != outputs || batches.iter().any(|&b| b >= n_batches) {
            return Err(Error::Checkpoint(
                "`batches` inconsistent with outputs/n_batches".into(),
            ));
        }
        let conv = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        let shape_err = |e: ndarray::ShapeError| Error::Checkpoint(e.to_string());
        Ok(Self {
            w1: Array2::from_shape_vec((inputs, hidden), conv(floats("w1", inputs * hidden)?)).map_err(shape_err)?,
            b1: Array1::from(conv(floats("b1", hidden)?)),
            w2: Array2::from_shape_vec((hidden, outputs), conv(floats("w2", hidden * outputs)?)).map_err(shape_err)?,
            b2: Array1::from(conv(floats("b2", outputs)?)),
            activation: Activation::parse(get("activation")?.trim())?,
            bounds: FeatureBounds {
                min: floats("bounds_min", inputs)?,
                max: floats("bounds_max", inputs)?,
            },
            batches,
            n_batches,
        })
    }
}
