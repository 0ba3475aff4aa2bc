//! Single-layer sigmoid compressor from raw features to mesh phases, trained
//! so that the quantum kernel approaches the label-match indicator:
//!
//! ```text
//! C = 1/B² Σ_{i,j ∈ batch} (K(x̃_i, x̃_j) - δ(y_i, y_j))²
//! ```

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fock::OccupationPattern;
use crate::mesh::MeshLayout;
use crate::optim::{Adam, AdamConfig};
use crate::qkernel::{KernelEvaluator, PhaseVector, DEFAULT_FD_STEP};
use crate::{Error, Result};

/// `latent = sigmoid(weight · x + bias)`, `weight` stored row-major `d × d_raw`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    pub d_raw: usize,
    pub d: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderWeights {
    pub fn zeros(d_raw: usize, d: usize) -> Self {
        Self { d_raw, d, weight: vec![0.0; d * d_raw], bias: vec![0.0; d] }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    fn flat(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }

    fn set_flat(&mut self, flat: &[f64]) {
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(s)?;
        if w.weight.len() != w.d * w.d_raw || w.bias.len() != w.d {
            return Err(Error::Format("encoder weight shapes disagree with header".into()));
        }
        Ok(w)
    }

    /// Binary form, little-endian:
    /// `"BKEW" | version u32 | d_raw u64 | d u64 | weight (row-major f64) | bias f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
        w.write_all(&(self.d_raw as u64).to_le_bytes())?;
        w.write_all(&(self.d as u64).to_le_bytes())?;
        for v in self.weight.iter().chain(&self.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format(format!("weights magic {magic:?} != \"BKEW\"")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != WEIGHTS_VERSION {
            return Err(Error::Format(format!("unsupported weights version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut b8)?;
            usize::try_from(u64::from_le_bytes(b8)).map_err(|_| Error::Format("dimension".into()))
        };
        let d_raw = next_u64(&mut r)?;
        let d = next_u64(&mut r)?;
        let mut out = Self::zeros(d_raw, d);
        for p in out.params_mut() {
            r.read_exact(&mut b8)?;
            *p = f64::from_le_bytes(b8);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const WEIGHTS_MAGIC: &[u8; 4] = b"BKEW";
const WEIGHTS_VERSION: u32 = 1;

/// Minibatch training settings. Only `epochs` has a value fixed by the
/// method itself; the rest are conventional defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub fd_step: f64,
    pub seed: u64,
    /// Interleave classes inside each batch instead of uniform shuffling.
    pub class_balanced: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            fd_step: DEFAULT_FD_STEP,
            seed: 0,
            class_balanced: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidArgument("fd_step must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Seeded index order for one epoch, chunked into batches.
    pub(crate) fn epoch_batches(&self, labels: &[i64], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(rng);
        if self.class_balanced {
            let mut classes: Vec<i64> = labels.to_vec();
            classes.sort_unstable();
            classes.dedup();
            let mut queues: Vec<Vec<usize>> = classes
                .iter()
                .map(|c| order.iter().copied().filter(|&i| labels[i] == *c).collect())
                .collect();
            for q in &mut queues {
                q.reverse();
            }
            order.clear();
            while queues.iter().any(|q| !q.is_empty()) {
                for q in &mut queues {
                    if let Some(i) = q.pop() {
                        order.push(i);
                    }
                }
            }
        }
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Uniform in `[-1/√d_raw, 1/√d_raw]`, zero bias.
pub fn init_weights(d_raw: usize, d: usize, seed: u64) -> EncoderWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (d_raw.max(1) as f64).sqrt();
    let weight = (0..d * d_raw).map(|_| rng.random_range(-bound..=bound)).collect();
    EncoderWeights { d_raw, d, weight, bias: vec![0.0; d] }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `sigmoid(W x + b)`.
pub fn encode(weights: &EncoderWeights, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != weights.d_raw {
        return Err(Error::DimensionMismatch { what: "feature vector", expected: weights.d_raw, found: x.len() });
    }
    Ok(weights
        .weight
        .chunks_exact(weights.d_raw)
        .zip(&weights.bias)
        .map(|(row, b)| sigmoid(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b))
        .collect())
}

/// Scale applied to latent entry `k`: `π/2` on θ slots, `2π` on φ slots.
#[inline]
fn angle_scale(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        FRAC_PI_2
    } else {
        TAU
    }
}

/// Maps `[0,1]` latents onto interleaved `(θ, φ)` phases.
pub fn latent_to_phases(latent: &[f64], layout: &MeshLayout) -> Result<PhaseVector> {
    if let Some(&bad) = latent.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange { param: "latent", value: bad, lo: 0.0, hi: 1.0 });
    }
    PhaseVector::new(latent.iter().enumerate().map(|(k, v)| v * angle_scale(k)).collect(), layout)
}

/// Encodes every row of `xs` into phases.
pub fn encode_all(weights: &EncoderWeights, xs: &[Vec<f64>], layout: &MeshLayout) -> Result<Vec<PhaseVector>> {
    check_width(weights, layout)?;
    xs.par_iter()
        .map(|x| latent_to_phases(&encode(weights, x)?, layout))
        .collect()
}

fn check_width(weights: &EncoderWeights, layout: &MeshLayout) -> Result<()> {
    if weights.d != layout.param_count() {
        return Err(Error::DimensionMismatch {
            what: "encoder output width",
            expected: layout.param_count(),
            found: weights.d,
        });
    }
    Ok(())
}

/// A labelled feature vector borrowed from a dataset.
pub type Example<'a> = (&'a [f64], i64);

struct BatchState {
    latents: Vec<Vec<f64>>,
    phases: Vec<Vec<f64>>,
}

fn forward(weights: &EncoderWeights, batch: &[Example<'_>]) -> Result<BatchState> {
    let latents = batch.iter().map(|(x, _)| encode(weights, x)).collect::<Result<Vec<_>>>()?;
    let phases = latents
        .iter()
        .map(|l| l.iter().enumerate().map(|(k, v)| v * angle_scale(k)).collect())
        .collect();
    Ok(BatchState { latents, phases })
}

fn batch_loss(eval: &KernelEvaluator, batch: &[Example<'_>], phases: &[Vec<f64>]) -> f64 {
    let states: Vec<_> = phases.iter().map(|p| eval.state(p)).collect();
    let b = batch.len();
    let mut total = 0.0;
    for i in 0..b {
        for j in 0..b {
            let target = if batch[i].1 == batch[j].1 { 1.0 } else { 0.0 };
            total += (eval.overlap(&states[i], &states[j]) - target).powi(2);
        }
    }
    total / (b * b) as f64
}

/// Pairwise kernel-target loss over every ordered pair of the batch,
/// diagonal included.
pub fn pair_loss(
    weights: &EncoderWeights,
    batch: &[Example<'_>],
    layout: &MeshLayout,
    input: &OccupationPattern,
) -> Result<f64> {
    check_width(weights, layout)?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let eval = KernelEvaluator::new(layout, input)?;
    let state = forward(weights, batch)?;
    Ok(batch_loss(&eval, batch, &state.phases))
}

/// Loss and gradient for one batch. Kernel derivatives are central
/// differences in phase space; the rest of the chain rule is exact.
fn loss_and_gradient(
    eval: &KernelEvaluator,
    weights: &EncoderWeights,
    batch: &[Example<'_>],
    h: f64,
) -> Result<(f64, EncoderWeights)> {
    let b = batch.len();
    let BatchState { latents, phases } = forward(weights, batch)?;
    let states: Vec<_> = phases.iter().map(|p| eval.state(p)).collect();

    let mut kern = vec![0.0; b * b];
    let mut loss = 0.0;
    for i in 0..b {
        for j in 0..b {
            let k = eval.overlap(&states[i], &states[j]);
            kern[i * b + j] = k;
            let target = if batch[i].1 == batch[j].1 { 1.0 } else { 0.0 };
            loss += (k - target).powi(2);
        }
    }
    let norm = (b * b) as f64;
    loss /= norm;

    // dC/dK_ij for an unordered off-diagonal pair: both orderings, 2(K - δ)/B² each.
    let coef = |i: usize, j: usize| {
        let target = if batch[i].1 == batch[j].1 { 1.0 } else { 0.0 };
        4.0 * (kern[i * b + j] - target) / norm
    };

    // One task per point: perturb each of its phases and re-evaluate the
    // kernel against every other point of the batch.
    let grad_z: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut probe = phases[i].clone();
            (0..probe.len())
                .map(|k| {
                    let orig = probe[k];
                    probe[k] = orig + h;
                    let plus = eval.state(&probe);
                    probe[k] = orig - h;
                    let minus = eval.state(&probe);
                    probe[k] = orig;
                    let dphase: f64 = (0..b)
                        .filter(|&j| j != i)
                        .map(|j| {
                            let dk = (eval.overlap(&plus, &states[j]) - eval.overlap(&minus, &states[j])) / (2.0 * h);
                            coef(i, j) * dk
                        })
                        .sum();
                    let s = latents[i][k];
                    dphase * angle_scale(k) * s * (1.0 - s)
                })
                .collect()
        })
        .collect();

    let mut grad = EncoderWeights::zeros(weights.d_raw, weights.d);
    for ((x, _), gz) in batch.iter().zip(&grad_z) {
        for (k, g) in gz.iter().enumerate() {
            let row = &mut grad.weight[k * weights.d_raw..(k + 1) * weights.d_raw];
            for (w, xv) in row.iter_mut().zip(x.iter()) {
                *w += g * xv;
            }
            grad.bias[k] += g;
        }
    }
    Ok((loss, grad))
}

/// Gradient of [`pair_loss`] with respect to every weight and bias.
pub fn loss_gradient(
    weights: &EncoderWeights,
    batch: &[Example<'_>],
    layout: &MeshLayout,
    input: &OccupationPattern,
    fd_step: f64,
) -> Result<EncoderWeights> {
    check_width(weights, layout)?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument("fd_step must be positive".into()));
    }
    let eval = KernelEvaluator::new(layout, input)?;
    Ok(loss_and_gradient(&eval, weights, batch, fd_step)?.1)
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch, measured before each update.
    pub loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: EncoderWeights,
    pub trace: Vec<EpochRecord>,
}

/// Trains from [`init_weights`] with `config.seed`. `on_epoch` receives the
/// 1-based epoch number and the current weights and may return a test
/// accuracy for the trace.
pub fn train<F>(
    features: &[Vec<f64>],
    labels: &[i64],
    layout: &MeshLayout,
    input: &OccupationPattern,
    config: &TrainConfig,
    on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &EncoderWeights) -> Option<f64>,
{
    let d_raw = features.first().map_or(0, Vec::len);
    let init = init_weights(d_raw, layout.param_count(), config.seed);
    train_from(init, features, labels, layout, input, config, on_epoch)
}

/// As [`train`], starting from the given weights.
pub fn train_from<F>(
    mut weights: EncoderWeights,
    features: &[Vec<f64>],
    labels: &[i64],
    layout: &MeshLayout,
    input: &OccupationPattern,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &EncoderWeights) -> Option<f64>,
{
    config.validate()?;
    check_width(&weights, layout)?;
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { what: "labels", expected: features.len(), found: labels.len() });
    }
    let eval = KernelEvaluator::new(layout, input)?;
    // Shuffling draws from a stream separate from initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut opt = Adam::new(config.adam(), weights.weight.len() + weights.bias.len());
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in config.epoch_batches(labels, &mut rng) {
            if idx.len() < 2 {
                continue;
            }
            let batch: Vec<Example<'_>> = idx.iter().map(|&i| (features[i].as_slice(), labels[i])).collect();
            let (loss, grad) = loss_and_gradient(&eval, &weights, &batch, config.fd_step)?;
            let mut flat = weights.flat();
            opt.step(&mut flat, &grad.flat());
            weights.set_flat(&flat);
            loss_sum += loss;
            batches += 1;
        }
        if !weights.is_finite() {
            return Err(Error::Numerical(format!("encoder weights diverged in epoch {epoch}")));
        }
        let loss = if batches > 0 { loss_sum / batches as f64 } else { 0.0 };
        let test_accuracy = on_epoch(epoch, &weights);
        trace.push(EpochRecord { epoch, loss, test_accuracy });
    }
    Ok(TrainOutcome { weights, trace })
}

/// Trace as `epoch,loss,test_accuracy` CSV (empty accuracy when not measured).
pub fn write_trace_csv<W: Write>(trace: &[EpochRecord], mut w: W) -> Result<()> {
    writeln!(w, "epoch,loss,test_accuracy")?;
    for r in trace {
        match r.test_accuracy {
            Some(a) => writeln!(w, "{},{},{}", r.epoch, r.loss, a)?,
            None => writeln!(w, "{},{},", r.epoch, r.loss)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::initial_state;
    use crate::mesh::layout;

    #[test]
    fn encode_examples() {
        let w = EncoderWeights::zeros(3, 4);
        assert_eq!(encode(&w, &[0.2, 0.5, 0.9]).unwrap(), vec![0.5; 4]);

        let mut w = EncoderWeights::zeros(3, 2);
        w.bias = vec![20.0, 20.0];
        assert!(encode(&w, &[1.0, 0.0, 0.3]).unwrap().iter().all(|v| (1.0 - v).abs() < 1e-8));

        let w = init_weights(5, 6, 3);
        let out = encode(&w, &[0.1, 0.9, 0.4, 0.0, 1.0]).unwrap();
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(encode(&w, &[0.1]).is_err());
    }

    #[test]
    fn latent_scaling() {
        let lay = layout(3, 2).unwrap();
        let p = latent_to_phases(&[0.5; 4], &lay).unwrap();
        assert_eq!(p.values(), &[FRAC_PI_2 / 2.0, std::f64::consts::PI, FRAC_PI_2 / 2.0, std::f64::consts::PI]);
        let p = latent_to_phases(&[1.0; 4], &lay).unwrap();
        assert_eq!(p.values(), &[FRAC_PI_2, TAU, FRAC_PI_2, TAU]);
        assert!(latent_to_phases(&[1.2, 0.0, 0.0, 0.0], &lay).is_err());
        assert!(latent_to_phases(&[0.5; 3], &lay).is_err());

        let zero = latent_to_phases(&[0.0; 4], &lay).unwrap();
        let k = crate::qkernel::kernel(&zero, &zero.clone(), &lay, &initial_state(3, 2).unwrap()).unwrap();
        assert!((k - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_weights(16, 10, 42);
        assert_eq!(a, init_weights(16, 10, 42));
        assert_ne!(a, init_weights(16, 10, 43));
        assert!(a.bias.iter().all(|&b| b == 0.0));
        assert!(a.weight.iter().all(|w| w.abs() <= 0.25));
    }

    /// With zero weights every point maps to the same phases, so K = 1 for
    /// all pairs.
    fn constant_encoder(d_raw: usize, lay: &MeshLayout) -> EncoderWeights {
        EncoderWeights::zeros(d_raw, lay.param_count())
    }

    #[test]
    fn pair_loss_examples() {
        let lay = layout(2, 1).unwrap();
        let input = initial_state(2, 1).unwrap();
        let w = constant_encoder(2, &lay);
        let x = [0.3, 0.7];
        assert!(pair_loss(&w, &[(&x, 1), (&x, 1)], &lay, &input).unwrap().abs() < 1e-15);
        // both points share phases so K = 1 for the different-class pair
        let y = [0.9, 0.1];
        let loss = pair_loss(&w, &[(&x, 1), (&y, -1)], &lay, &input).unwrap();
        assert!((loss - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pair_loss_quarter_kernel() {
        // one TBU, one photon: K = cos²(θ_i - θ_j); points land at θ ≈ 0 and θ = π/3
        let lay = layout(2, 1).unwrap();
        let input = initial_state(2, 1).unwrap();
        let target_latent = (std::f64::consts::FRAC_PI_3 / FRAC_PI_2).clamp(0.0, 1.0);
        let logit = (target_latent / (1.0 - target_latent)).ln();
        let mut w = EncoderWeights::zeros(1, 2);
        w.bias = vec![-60.0, -60.0];
        w.weight = vec![60.0 + logit, 0.0];
        let a = [0.0];
        let b = [1.0];
        let loss = pair_loss(&w, &[(&a, 1), (&b, 1)], &lay, &input).unwrap();
        assert!((loss - 0.28125).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn gradient_zero_at_fit() {
        let lay = layout(3, 3).unwrap();
        let input = initial_state(3, 1).unwrap();
        let w = constant_encoder(2, &lay);
        let x = [0.3, 0.7];
        let y = [0.1, 0.2];
        let g = loss_gradient(&w, &[(&x, 4), (&y, 4), (&x, 4)], &lay, &input, 1e-5).unwrap();
        assert!(g.weight.iter().chain(&g.bias).all(|v| v.abs() < 1e-6));

        let w = init_weights(2, lay.param_count(), 1);
        let g = loss_gradient(&w, &[(&x, 0), (&x, 0)], &lay, &input, 1e-5).unwrap();
        assert!(g.weight.iter().chain(&g.bias).all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn gradient_matches_weight_finite_differences() {
        let lay = layout(3, 3).unwrap();
        let input = initial_state(3, 1).unwrap();
        let w = init_weights(3, lay.param_count(), 9);
        let xs = [[0.1, 0.8, 0.3], [0.9, 0.2, 0.5], [0.4, 0.4, 1.0], [0.0, 0.6, 0.7]];
        let batch: Vec<Example<'_>> = xs.iter().zip([1, 1, -1, -1]).map(|(x, y)| (x.as_slice(), y)).collect();
        let g = loss_gradient(&w, &batch, &lay, &input, 1e-5).unwrap();
        let h = 1e-4;
        let flat = w.flat();
        let gflat = g.flat();
        let scale = gflat.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for k in 0..flat.len() {
            let mut p = w.clone();
            let mut q = w.clone();
            let mut f = flat.clone();
            f[k] += h;
            p.set_flat(&f);
            f[k] -= 2.0 * h;
            q.set_flat(&f);
            let fd = (pair_loss(&p, &batch, &lay, &input).unwrap() - pair_loss(&q, &batch, &lay, &input).unwrap()) / (2.0 * h);
            assert!((fd - gflat[k]).abs() <= 1e-3 * scale, "param {k}: fd {fd} vs {}", gflat[k]);
        }
    }

    #[test]
    fn weights_binary_and_json_round_trip() {
        let w = init_weights(4, 6, 2);
        let mut buf = Vec::new();
        w.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"BKEW");
        assert_eq!(EncoderWeights::read_binary(buf.as_slice()).unwrap(), w);
        assert_eq!(EncoderWeights::from_json(&w.to_json().unwrap()).unwrap(), w);
        buf[1] = b'X';
        assert!(EncoderWeights::read_binary(buf.as_slice()).is_err());
    }

    fn toy_data() -> (Vec<Vec<f64>>, Vec<i64>) {
        let xs = vec![
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![0.05, 0.2],
            vec![0.2, 0.1],
            vec![0.9, 1.0],
            vec![1.0, 0.8],
            vec![0.8, 0.9],
            vec![0.95, 0.95],
        ];
        let ys = vec![0, 0, 0, 0, 1, 1, 1, 1];
        (xs, ys)
    }

    fn full_loss(w: &EncoderWeights, xs: &[Vec<f64>], ys: &[i64], lay: &MeshLayout, input: &OccupationPattern) -> f64 {
        let batch: Vec<Example<'_>> = xs.iter().zip(ys).map(|(x, &y)| (x.as_slice(), y)).collect();
        pair_loss(w, &batch, lay, input).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let (xs, ys) = toy_data();
        let lay = layout(2, 1).unwrap();
        let input = initial_state(2, 1).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, learning_rate: 0.0, seed: 5, ..Default::default() };
        let out = train(&xs, &ys, &lay, &input, &cfg, |_, _| None).unwrap();
        assert_eq!(out.weights, init_weights(2, 2, 5));
        assert_eq!(out.trace.len(), 3);
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let (xs, ys) = toy_data();
        let lay = layout(2, 1).unwrap();
        let input = initial_state(2, 1).unwrap();
        let cfg = TrainConfig { epochs: 40, batch_size: 4, learning_rate: 0.05, seed: 1, ..Default::default() };
        let before = full_loss(&init_weights(2, 2, 1), &xs, &ys, &lay, &input);
        let out = train(&xs, &ys, &lay, &input, &cfg, |_, _| None).unwrap();
        let after = full_loss(&out.weights, &xs, &ys, &lay, &input);
        assert!(after < before, "{after} !< {before}");

        let again = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| train(&xs, &ys, &lay, &input, &cfg, |_, _| None).unwrap());
        let bits = |w: &EncoderWeights| w.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out.weights), bits(&again.weights));
    }

    #[test]
    fn class_balanced_batches_interleave() {
        let cfg = TrainConfig { batch_size: 4, class_balanced: true, ..Default::default() };
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for batch in cfg.epoch_batches(&labels, &mut rng) {
            let ones = batch.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(ones, 2);
        }
    }

    #[test]
    fn trace_csv() {
        let trace = vec![
            EpochRecord { epoch: 1, loss: 0.5, test_accuracy: Some(0.75) },
            EpochRecord { epoch: 2, loss: 0.25, test_accuracy: None },
        ];
        let mut out = Vec::new();
        write_trace_csv(&trace, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,loss,test_accuracy\n1,0.5,0.75\n2,0.25,\n");
    }
}
