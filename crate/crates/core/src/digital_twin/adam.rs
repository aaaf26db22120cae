use ndarray::{ArrayBase, DataMut, Dimension, Zip};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T, D: Dimension> {
    m: ndarray::Array<T, D>,
    v: ndarray::Array<T, D>,
}

impl<T: Scalar, D: Dimension> AdamState<T, D> {
    pub fn zeros(shape: D) -> Self {
        Self {
            m: ndarray::Array::zeros(shape.clone()),
            v: ndarray::Array::zeros(shape),
        }
    }

    /// One bias-corrected Adam update; `step` counts from 1.
    pub fn update<S>(&mut self, param: &mut ArrayBase<S, D>, grad: &ndarray::Array<T, D>, p: &AdamParams<T>, step: i32)
    where
        S: DataMut<Elem = T>,
    {
        let one = T::one();
        let c1 = one - p.beta1.powi(step);
        let c2 = one - p.beta2.powi(step);
        Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|w, m, v, &g| {
                *m = p.beta1 * *m + (one - p.beta1) * g;
                *v = p.beta2 * *v + (one - p.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w = *w - p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
            });
    }
}
