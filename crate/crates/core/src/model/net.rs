use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::data::DataSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Multinomial logistic regression (softmax + cross-entropy).
    Logistic,
    /// One tanh hidden layer followed by softmax.
    Mlp,
    /// Scalar least-squares regression onto the label value.
    Linear,
}

/// Shape of a model plus its L2 coefficient `mu` (loss gets `mu/2 * |w|^2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub arch: Architecture,
    pub input_dim: usize,
    pub class_count: usize,
    pub hidden: usize,
    pub l2: f64,
}

impl ModelLayout {
    pub fn logistic(input_dim: usize, class_count: usize, l2: f64) -> Self {
        ModelLayout {
            arch: Architecture::Logistic,
            input_dim,
            class_count,
            hidden: 0,
            l2,
        }
    }

    pub fn linear(input_dim: usize, l2: f64) -> Self {
        ModelLayout {
            arch: Architecture::Linear,
            input_dim,
            class_count: 1,
            hidden: 0,
            l2,
        }
    }

    pub fn mlp(input_dim: usize, hidden: usize, class_count: usize, l2: f64) -> Self {
        ModelLayout {
            arch: Architecture::Mlp,
            input_dim,
            class_count,
            hidden,
            l2,
        }
    }

    pub fn param_count(&self) -> usize {
        let (d, c, h) = (self.input_dim, self.class_count, self.hidden);
        match self.arch {
            Architecture::Logistic => c * d + c,
            Architecture::Linear => d + 1,
            Architecture::Mlp => h * d + h + c * h + c,
        }
    }

    /// Strongly convex for `l2 > 0`; the MLP never is.
    pub fn is_convex(&self) -> bool {
        self.arch != Architecture::Mlp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
    layout: ModelLayout,
}

impl ModelParams {
    pub fn new(layout: ModelLayout, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != layout.param_count() {
            return Err(ModelError::DimensionMismatch {
                expected: layout.param_count(),
                found: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(ModelParams { values, layout })
    }

    pub fn zeros(layout: ModelLayout) -> Self {
        ModelParams {
            values: vec![0.0; layout.param_count()],
            layout,
        }
    }

    /// Zeros for convex models; scaled Gaussian weights for the MLP, whose
    /// hidden units would otherwise stay symmetric.
    pub fn init(layout: ModelLayout, seed: u64) -> Self {
        let mut p = Self::zeros(layout);
        if layout.arch == Architecture::Mlp {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (d, h, c) = (layout.input_dim, layout.hidden, layout.class_count);
            let w1 = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
            let w2 = Normal::new(0.0, 1.0 / (h as f64).sqrt()).unwrap();
            for v in &mut p.values[..h * d] {
                *v = w1.sample(&mut rng);
            }
            let off = h * d + h;
            for v in &mut p.values[off..off + c * h] {
                *v = w2.sample(&mut rng);
            }
        }
        p
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Adds `delta` in place.
    pub fn apply(&mut self, delta: &[f64]) -> Result<(), ModelError> {
        if delta.len() != self.values.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.values.len(),
                found: delta.len(),
            });
        }
        for (w, d) in self.values.iter_mut().zip(delta) {
            *w += d;
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Class prediction. Softmax ties go to the lowest class index; the
    /// linear model rounds its output onto the label grid.
    pub fn predict(&self, x: &[f64]) -> usize {
        match self.layout.arch {
            Architecture::Linear => {
                let out = self.linear_out(x);
                out.round().max(0.0) as usize
            }
            _ => {
                let logits = self.logits(x);
                let mut best = 0;
                for (k, &z) in logits.iter().enumerate() {
                    if z > logits[best] {
                        best = k;
                    }
                }
                best
            }
        }
    }

    fn linear_out(&self, x: &[f64]) -> f64 {
        let d = self.layout.input_dim;
        super::dot(&self.values[..d], x) + self.values[d]
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.layout.input_dim, self.layout.hidden);
        let w1 = &self.values[..h * d];
        let b1 = &self.values[h * d..h * d + h];
        (0..h)
            .map(|j| (super::dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh())
            .collect()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let c = self.layout.class_count;
        match self.layout.arch {
            Architecture::Logistic => {
                let d = self.layout.input_dim;
                let (w, b) = self.values.split_at(c * d);
                (0..c).map(|k| super::dot(&w[k * d..(k + 1) * d], x) + b[k]).collect()
            }
            Architecture::Mlp => {
                let hid = self.hidden(x);
                let (d, h) = (self.layout.input_dim, self.layout.hidden);
                let off = h * d + h;
                let w2 = &self.values[off..off + c * h];
                let b2 = &self.values[off + c * h..];
                (0..c)
                    .map(|k| super::dot(&w2[k * h..(k + 1) * h], &hid) + b2[k])
                    .collect()
            }
            Architecture::Linear => vec![self.linear_out(x)],
        }
    }

    fn l2_penalty(&self) -> f64 {
        0.5 * self.layout.l2 * super::dot(&self.values, &self.values)
    }

    /// Regularised mean loss over the rows `idx`.
    pub fn loss(&self, ds: &DataSet, idx: &[usize]) -> f64 {
        let data: f64 = idx
            .iter()
            .map(|&i| self.sample_loss(ds.features(i), ds.label(i)))
            .sum::<f64>()
            / idx.len() as f64;
        data + self.l2_penalty()
    }

    fn sample_loss(&self, x: &[f64], y: usize) -> f64 {
        match self.layout.arch {
            Architecture::Linear => {
                let r = self.linear_out(x) - y as f64;
                0.5 * r * r
            }
            _ => {
                let z = self.logits(x);
                log_sum_exp(&z) - z[y]
            }
        }
    }

    /// Regularised mean loss over `idx`; writes its gradient into `grad`.
    pub fn loss_and_grad(&self, ds: &DataSet, idx: &[usize], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        let (d, c, h) = (self.layout.input_dim, self.layout.class_count, self.layout.hidden);
        for &i in idx {
            let x = ds.features(i);
            let y = ds.label(i);
            match self.layout.arch {
                Architecture::Linear => {
                    let r = self.linear_out(x) - y as f64;
                    total += 0.5 * r * r;
                    for (g, xv) in grad[..d].iter_mut().zip(x) {
                        *g += r * xv;
                    }
                    grad[d] += r;
                }
                Architecture::Logistic => {
                    let z = self.logits(x);
                    let lse = log_sum_exp(&z);
                    total += lse - z[y];
                    let (gw, gb) = grad.split_at_mut(c * d);
                    for k in 0..c {
                        let coef = (z[k] - lse).exp() - if k == y { 1.0 } else { 0.0 };
                        for (g, xv) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *g += coef * xv;
                        }
                        gb[k] += coef;
                    }
                }
                Architecture::Mlp => {
                    let hid = self.hidden(x);
                    let z = self.logits(x);
                    let lse = log_sum_exp(&z);
                    total += lse - z[y];
                    let off = h * d + h;
                    let w2 = &self.values[off..off + c * h];
                    let mut dh = vec![0.0; h];
                    for k in 0..c {
                        let coef = (z[k] - lse).exp() - if k == y { 1.0 } else { 0.0 };
                        for j in 0..h {
                            grad[off + k * h + j] += coef * hid[j];
                            dh[j] += coef * w2[k * h + j];
                        }
                        grad[off + c * h + k] += coef;
                    }
                    for j in 0..h {
                        let dz = dh[j] * (1.0 - hid[j] * hid[j]);
                        for (g, xv) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *g += dz * xv;
                        }
                        grad[h * d + j] += dz;
                    }
                }
            }
        }
        let n = idx.len() as f64;
        let mu = self.layout.l2;
        for (g, w) in grad.iter_mut().zip(&self.values) {
            *g = *g / n + mu * w;
        }
        total / n + self.l2_penalty()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
