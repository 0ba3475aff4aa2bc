//! Classical comparison points: linear and sigmoid kernels on the raw
//! features, and a fully connected network with one hidden layer trained on
//! cross-entropy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::TrainConfig;
use crate::optim::Adam;
use crate::qkernel::KernelMatrix;
use crate::{Error, Result};

fn check_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { what: "feature vector", expected: x.len(), found: y.len() });
    }
    Ok(())
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `x · y`.
pub fn linear_kernel(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    Ok(dot(x, y))
}

/// `tanh(x · y + 1)`.
pub fn sigmoid_kernel(x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x, y)?;
    Ok((dot(x, y) + 1.0).tanh())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassicalKernel {
    Linear,
    Sigmoid,
}

impl ClassicalKernel {
    pub fn eval(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Self::Linear => linear_kernel(x, y),
            Self::Sigmoid => sigmoid_kernel(x, y),
        }
    }

    fn eval_unchecked(self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::Linear => dot(x, y),
            Self::Sigmoid => (dot(x, y) + 1.0).tanh(),
        }
    }

    fn check_rows(xs: &[Vec<f64>], d: usize) -> Result<()> {
        match xs.iter().find(|r| r.len() != d) {
            Some(r) => Err(Error::DimensionMismatch { what: "feature vector", expected: d, found: r.len() }),
            None => Ok(()),
        }
    }

    pub fn gram(self, xs: &[Vec<f64>]) -> Result<KernelMatrix> {
        Self::check_rows(xs, xs.first().map_or(0, Vec::len))?;
        Ok(KernelMatrix::from_pair_fn(xs.len(), |i, j| self.eval_unchecked(&xs[i], &xs[j])))
    }

    /// Rows indexed by `rows`, one value per element of `cols`.
    pub fn cross(self, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = cols.first().map_or(0, Vec::len);
        Self::check_rows(rows, d)?;
        Self::check_rows(cols, d)?;
        Ok(rows.par_iter().map(|r| cols.iter().map(|c| self.eval_unchecked(r, c)).collect()).collect())
    }
}

/// `d_raw → hidden` sigmoid layer followed by a `hidden → classes` linear
/// layer; weights row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalNN {
    pub classes: Vec<i64>,
    pub d_raw: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl ClassicalNN {
    fn init(classes: Vec<i64>, d_raw: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = classes.len();
        let b1 = 1.0 / (d_raw.max(1) as f64).sqrt();
        let b2 = 1.0 / (hidden.max(1) as f64).sqrt();
        let w1 = (0..hidden * d_raw).map(|_| rng.random_range(-b1..=b1)).collect();
        let w2 = (0..k * hidden).map(|_| rng.random_range(-b2..=b2)).collect();
        Self { classes, d_raw, hidden, w1, b1: vec![0.0; hidden], w2, b2: vec![0.0; k] }
    }

    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        self.w1.chunks_exact(self.d_raw).zip(&self.b1).map(|(row, b)| sigmoid(dot(row, x) + b)).collect()
    }

    fn output(&self, h: &[f64]) -> Vec<f64> {
        self.w2.chunks_exact(self.hidden).zip(&self.b2).map(|(row, b)| dot(row, h) + b).collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_raw {
            return Err(Error::DimensionMismatch { what: "feature vector", expected: self.d_raw, found: x.len() });
        }
        Ok(self.output(&self.hidden_layer(x)))
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn flat(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).copied().collect()
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let params = self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).chain(self.b2.iter_mut());
        for (p, v) in params.zip(flat) {
            *p = *v;
        }
    }

    /// Mean cross-entropy over `(x, class index)` pairs and its gradient in
    /// [`Self::flat`] order.
    fn loss_and_gradient(&self, batch: &[(&[f64], usize)]) -> (f64, Vec<f64>) {
        let (h_n, k_n, d) = (self.hidden, self.classes.len(), self.d_raw);
        let mut g_w1 = vec![0.0; self.w1.len()];
        let mut g_b1 = vec![0.0; h_n];
        let mut g_w2 = vec![0.0; self.w2.len()];
        let mut g_b2 = vec![0.0; k_n];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for &(x, target) in batch {
            let h = self.hidden_layer(x);
            let p = softmax(&self.output(&h));
            loss -= p[target].max(f64::MIN_POSITIVE).ln();
            let dz2: Vec<f64> = (0..k_n).map(|c| (p[c] - if c == target { 1.0 } else { 0.0 }) * scale).collect();
            for c in 0..k_n {
                g_b2[c] += dz2[c];
                for j in 0..h_n {
                    g_w2[c * h_n + j] += dz2[c] * h[j];
                }
            }
            for j in 0..h_n {
                let back: f64 = (0..k_n).map(|c| dz2[c] * self.w2[c * h_n + j]).sum();
                let dz1 = back * h[j] * (1.0 - h[j]);
                g_b1[j] += dz1;
                for (g, xv) in g_w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += dz1 * xv;
                }
            }
        }
        let grad = g_w1.into_iter().chain(g_b1).chain(g_w2).chain(g_b2).collect();
        (loss * scale, grad)
    }

    /// Mean cross-entropy over a labelled set.
    pub fn cross_entropy(&self, features: &[Vec<f64>], labels: &[i64]) -> Result<f64> {
        let batch = self.indexed(features, labels)?;
        Ok(self.loss_and_gradient(&batch).0)
    }

    fn indexed<'a>(&self, features: &'a [Vec<f64>], labels: &[i64]) -> Result<Vec<(&'a [f64], usize)>> {
        features
            .iter()
            .zip(labels)
            .map(|(x, l)| {
                if x.len() != self.d_raw {
                    return Err(Error::DimensionMismatch { what: "feature vector", expected: self.d_raw, found: x.len() });
                }
                let c = self
                    .classes
                    .binary_search(l)
                    .map_err(|_| Error::InvalidArgument(format!("label {l} not in class set")))?;
                Ok((x.as_slice(), c))
            })
            .collect()
    }
}

/// Trains with the encoder's optimizer settings and batch order. Zero epochs
/// returns the seeded initialization.
pub fn nn_train(features: &[Vec<f64>], labels: &[i64], hidden: usize, config: &TrainConfig) -> Result<ClassicalNN> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { what: "labels", expected: features.len(), found: labels.len() });
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut model = ClassicalNN::init(classes, features[0].len(), hidden, config.seed);
    let data = model.indexed(features, labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt = Adam::new(config.adam(), model.param_count());
    for _ in 0..config.epochs {
        for idx in config.epoch_batches(labels, &mut rng) {
            let batch: Vec<_> = idx.iter().map(|&i| data[i]).collect();
            let (_, grad) = model.loss_and_gradient(&batch);
            let mut flat = model.flat();
            opt.step(&mut flat, &grad);
            model.set_flat(&flat);
        }
    }
    Ok(model)
}

/// Argmax logit, ties to the lowest class.
pub fn nn_predict(model: &ClassicalNN, x: &[f64]) -> Result<i64> {
    let logits = model.logits(x)?;
    let mut best = 0;
    for (c, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = c;
        }
    }
    Ok(model.classes[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        assert_eq!(linear_kernel(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(linear_kernel(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(linear_kernel(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 13.0);
        assert!(linear_kernel(&[1.0], &[1.0, 2.0]).is_err());
        assert!((sigmoid_kernel(&[0.0; 3], &[0.0; 3]).unwrap() - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert_eq!(sigmoid_kernel(&[1.0], &[-1.0]).unwrap(), 0.0);
        assert!((sigmoid_kernel(&[10.0], &[10.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(sigmoid_kernel(&[1.0], &[]).is_err());
    }

    #[test]
    fn gram_and_cross_agree() {
        let xs = vec![vec![0.1, 0.2], vec![0.3, 0.9], vec![1.0, 0.0]];
        for kind in [ClassicalKernel::Linear, ClassicalKernel::Sigmoid] {
            let g = kind.gram(&xs).unwrap();
            let c = kind.cross(&xs, &xs).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(g.get(i, j), kind.eval(&xs[i], &xs[j]).unwrap());
                    assert_eq!(c[i][j], g.get(i, j));
                }
            }
        }
        assert!(ClassicalKernel::Linear.gram(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn softmax_normalized() {
        for logits in [vec![0.0, 0.0], vec![1000.0, -1000.0, 3.0], vec![-5.0, 2.5, 0.1, 7.0]] {
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = ClassicalNN::init(vec![0, 1, 2], 3, 4, 7);
        let xs = [[0.1, 0.5, 0.9], [0.7, 0.2, 0.3], [0.0, 1.0, 0.4]];
        let batch: Vec<(&[f64], usize)> = xs.iter().zip([0, 2, 1]).map(|(x, c)| (x.as_slice(), c)).collect();
        let (_, grad) = model.loss_and_gradient(&batch);
        let flat = model.flat();
        let h = 1e-6;
        for k in 0..flat.len() {
            let mut p = model.clone();
            let mut f = flat.clone();
            f[k] += h;
            p.set_flat(&f);
            let up = p.loss_and_gradient(&batch).0;
            f[k] -= 2.0 * h;
            p.set_flat(&f);
            let down = p.loss_and_gradient(&batch).0;
            assert!(((up - down) / (2.0 * h) - grad[k]).abs() < 1e-7, "param {k}");
        }
    }

    fn separable() -> (Vec<Vec<f64>>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while xs.len() < 60 {
            let p: Vec<f64> = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let s = p[0] + p[1] - 1.0;
            if s.abs() > 0.1 {
                ys.push(if s > 0.0 { 1 } else { -1 });
                xs.push(p);
            }
        }
        (xs, ys)
    }

    #[test]
    fn learns_separable_toy_set() {
        let (xs, ys) = separable();
        let cfg = TrainConfig { epochs: 300, batch_size: 8, learning_rate: 0.05, seed: 3, ..Default::default() };
        let before = ClassicalNN::init(vec![-1, 1], 2, 4, 3).cross_entropy(&xs, &ys).unwrap();
        let model = nn_train(&xs, &ys, 4, &cfg).unwrap();
        assert!(model.cross_entropy(&xs, &ys).unwrap() < before);
        let hits = xs.iter().zip(&ys).filter(|(x, y)| nn_predict(&model, x).unwrap() == **y).count();
        assert_eq!(hits, xs.len());
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..400).map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let ys: Vec<i64> = (0..400).map(|i| (i % 2) as i64).collect();
        let cfg = TrainConfig { epochs: 0, seed: 9, ..Default::default() };
        let model = nn_train(&xs, &ys, 6, &cfg).unwrap();
        assert_eq!(model, ClassicalNN::init(vec![0, 1], 4, 6, 9));
        let acc = xs.iter().zip(&ys).filter(|(x, y)| nn_predict(&model, x).unwrap() == **y).count() as f64 / 400.0;
        assert!((acc - 0.5).abs() <= 0.1, "{acc}");
    }

    #[test]
    fn predict_ties_to_lowest_class() {
        let model = ClassicalNN {
            classes: vec![2, 5],
            d_raw: 1,
            hidden: 1,
            w1: vec![0.0],
            b1: vec![0.0],
            w2: vec![0.0, 0.0],
            b2: vec![0.0, 0.0],
        };
        assert_eq!(nn_predict(&model, &[0.3]).unwrap(), 2);
        assert!(nn_predict(&model, &[0.3, 0.1]).is_err());
    }
}
