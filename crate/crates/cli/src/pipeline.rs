//! load → normalize → split → train encoder → kernels → SVM → metrics, for
//! one seed at a time.

use std::path::Path;

use bosonkernel::baselines::{nn_predict, nn_train, ClassicalKernel};
use bosonkernel::data::{self, Dataset};
use bosonkernel::encoder::{self, EncoderWeights, EpochRecord};
use bosonkernel::fock::{initial_state, OccupationPattern};
use bosonkernel::metrics::{
    accuracy, chernoff_information, jsd, kernel_histograms, readout_bound, Histogram, SplitTag,
};
use bosonkernel::mesh::MeshLayout;
use bosonkernel::qkernel::{cross_kernel, kernel_matrix, sample_probability, CacheShape, KernelMatrix, PhaseVector};
use bosonkernel::svm::{ReadoutPredictor, SvmClassifier};
use bosonkernel::Error;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cache::{cache_key, KernelCache};
use crate::config::{CircuitConfig, DatasetKind, ExperimentConfig, QUANTUM_PSD_SLACK, SIGMOID_PSD_SLACK};
use crate::error::{CliError, CliResult, ErrorKind, StageExt};

pub fn load_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    let d = &cfg.dataset;
    let missing = || CliError::config("dataset path missing");
    let ds = match d.name {
        DatasetKind::Ionosphere => data::load_ionosphere(d.path.as_deref().ok_or_else(missing)?),
        DatasetKind::Spambase => data::load_spambase(d.path.as_deref().ok_or_else(missing)?),
        DatasetKind::Mnist | DatasetKind::FashionMnist => load_images(&d.images, &d.labels, d.name.name()),
    };
    ds.stage("load", ErrorKind::Data)
}

fn load_images(images: &[std::path::PathBuf], labels: &[std::path::PathBuf], name: &str) -> bosonkernel::Result<Dataset> {
    let mut out = Dataset::new(name, Vec::new(), Vec::new())?;
    for (i, l) in images.iter().zip(labels) {
        out = out.concat(data::load_idx_images(i, l)?)?;
    }
    out.name = name.to_string();
    Ok(out)
}

/// Normalized train/test partition for one seed.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare_split(ds: &Dataset, cfg: &ExperimentConfig, seed: u64) -> CliResult<Split> {
    let pool = match cfg.dataset.subsample {
        Some(n) => data::subsample(ds, n, seed).stage("subsample", ErrorKind::Data)?,
        None => ds.clone(),
    };
    let (train, test) = data::split(&pool, cfg.dataset.test_fraction(), seed).stage("split", ErrorKind::Data)?;
    let stats = data::minmax_fit(&train.features);
    Ok(Split {
        train: train.normalized(&stats).stage("normalize", ErrorKind::Data)?,
        test: test.normalized(&stats).stage("normalize", ErrorKind::Data)?,
    })
}

/// Everything produced by the quantum branch for one seed.
#[derive(Clone, Debug)]
pub struct QuantumModel {
    pub layout: MeshLayout,
    pub input: OccupationPattern,
    pub weights: EncoderWeights,
    pub trace: Vec<EpochRecord>,
    pub train_phases: Vec<PhaseVector>,
    pub test_phases: Vec<PhaseVector>,
    pub k_train: KernelMatrix,
    pub k_test: Vec<Vec<f64>>,
    pub classifier: SvmClassifier,
    pub accuracy: f64,
}

fn circuit_parts(circuit: &CircuitConfig) -> CliResult<(MeshLayout, OccupationPattern)> {
    let layout = MeshLayout::new(circuit.modes, circuit.layers()).stage("circuit", ErrorKind::Config)?;
    let input = initial_state(circuit.modes, circuit.photons).stage("circuit", ErrorKind::Config)?;
    Ok((layout, input))
}

fn svm_slack(cfg: &ExperimentConfig) -> Option<f64> {
    (cfg.shots == 0).then_some(QUANTUM_PSD_SLACK)
}

/// Deterministic RNG for a named purpose within a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const SHOTS_STREAM: u64 = 2;
const READOUT_STREAM: u64 = 3;

fn sample_matrix(k: &KernelMatrix, shots: u64, rng: &mut ChaCha8Rng) -> bosonkernel::Result<KernelMatrix> {
    let n = k.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = sample_probability(k.get(i, j), shots, rng)?;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    KernelMatrix::from_row_major(n, values)
}

fn sample_rows(rows: &[Vec<f64>], shots: u64, rng: &mut ChaCha8Rng) -> bosonkernel::Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| r.iter().map(|&p| sample_probability(p, shots, rng)).collect()).collect()
}

fn quantum_kernels(
    weights: &EncoderWeights,
    split: &Split,
    layout: &MeshLayout,
    input: &OccupationPattern,
    cache: Option<&KernelCache>,
) -> bosonkernel::Result<(Vec<PhaseVector>, Vec<PhaseVector>, KernelMatrix, Vec<Vec<f64>>)> {
    let train_phases = encoder::encode_all(weights, &split.train.features, layout)?;
    let test_phases = encoder::encode_all(weights, &split.test.features, layout)?;
    let shape = CacheShape { modes: layout.modes() as u32, photons: input.photons() as u32, layers: layout.layers() as u32 };
    let key = cache.map(|_| cache_key(weights, layout, input.photons(), &split.train.features));
    let cached = cache.zip(key.as_deref()).and_then(|(c, k)| c.get(k, shape, train_phases.len()));
    let k_train = match cached {
        Some(k) => k,
        None => {
            let k = kernel_matrix(&train_phases, layout, input)?;
            if let (Some(c), Some(key)) = (cache, key.as_deref()) {
                let _ = c.put(key, shape, &k);
            }
            k
        }
    };
    let k_test = cross_kernel(&test_phases, &train_phases, layout, input)?;
    Ok((train_phases, test_phases, k_train, k_test))
}

pub fn run_quantum(
    split: &Split,
    circuit: &CircuitConfig,
    cfg: &ExperimentConfig,
    seed: u64,
    cache: Option<&KernelCache>,
) -> CliResult<QuantumModel> {
    let (layout, input) = circuit_parts(circuit)?;
    let train_cfg = cfg.train.train_config(seed);
    let params = cfg.svm.params(svm_slack(cfg));
    let trace_acc = |_: usize, w: &EncoderWeights| -> Option<f64> {
        if !cfg.train.trace_test_accuracy {
            return None;
        }
        let (_, _, k, rows) = quantum_kernels(w, split, &layout, &input, None).ok()?;
        let clf = SvmClassifier::fit(&k, &split.train.labels, &params).ok()?;
        accuracy(&clf.predict_all(&rows).ok()?, &split.test.labels).ok()
    };
    let outcome = encoder::train(&split.train.features, &split.train.labels, &layout, &input, &train_cfg, trace_acc)
        .stage("train", ErrorKind::Numerical)?;
    let (train_phases, test_phases, mut k_train, mut k_test) =
        quantum_kernels(&outcome.weights, split, &layout, &input, cache).stage("kernel", ErrorKind::Numerical)?;
    if cfg.shots > 0 {
        let mut rng = stream_rng(seed, SHOTS_STREAM);
        k_train = sample_matrix(&k_train, cfg.shots, &mut rng).stage("sampling", ErrorKind::Numerical)?;
        k_test = sample_rows(&k_test, cfg.shots, &mut rng).stage("sampling", ErrorKind::Numerical)?;
    }
    let classifier = SvmClassifier::fit(&k_train, &split.train.labels, &params).stage("svm", ErrorKind::Numerical)?;
    let predictions = classifier.predict_all(&k_test).stage("predict", ErrorKind::Numerical)?;
    let acc = accuracy(&predictions, &split.test.labels).stage("accuracy", ErrorKind::Numerical)?;
    Ok(QuantumModel {
        layout,
        input,
        weights: outcome.weights,
        trace: outcome.trace,
        train_phases,
        test_phases,
        k_train,
        k_test,
        classifier,
        accuracy: acc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReadoutRow {
    pub size: usize,
    pub mean_accuracy: f64,
    pub accuracies: Vec<f64>,
}

/// Accuracy of readout-restricted prediction for each subset size, over
/// `draws` seeded random subsets. Sizes above the training-set size are
/// dropped; the full training-set size is always included.
pub fn readout_curve(model: &QuantumModel, split: &Split, cfg: &ExperimentConfig, seed: u64) -> CliResult<Vec<ReadoutRow>> {
    let n_train = split.train.len();
    let mut sizes: Vec<usize> = cfg.readout.sizes.iter().copied().filter(|&s| s >= 1 && s <= n_train).collect();
    sizes.push(n_train);
    sizes.sort_unstable();
    sizes.dedup();
    let params = cfg.svm.params(None);
    sizes
        .into_iter()
        .map(|size| {
            let accuracies = (0..cfg.readout.draws as u64)
                .map(|draw| {
                    let mut rng = stream_rng(seed, READOUT_STREAM + ((size as u64) << 16) + draw);
                    let mut subset = sample(&mut rng, n_train, size).into_vec();
                    subset.sort_unstable();
                    let r = ReadoutPredictor::new(
                        &model.classifier,
                        &model.k_train,
                        &split.train.labels,
                        &subset,
                        cfg.svm.readout_mode,
                        &params,
                    )?;
                    let pred = model.k_test.iter().map(|row| r.predict(row)).collect::<bosonkernel::Result<Vec<_>>>()?;
                    accuracy(&pred, &split.test.labels)
                })
                .collect::<bosonkernel::Result<Vec<_>>>()
                .stage("readout", ErrorKind::Numerical)?;
            Ok(ReadoutRow { size, mean_accuracy: mean(&accuracies), accuracies })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub epsilon: f64,
    /// `None` when the Chernoff information is zero.
    pub readout_bound: Option<u64>,
}

/// Separability of same-class versus different-class kernel values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairSeparation {
    pub split: SplitTag,
    pub same_class: Histogram,
    pub different_class: Histogram,
    /// `None` when either histogram is empty.
    pub jsd: Option<f64>,
    /// `None` when either histogram is empty or the supports are disjoint.
    pub chernoff: Option<f64>,
    pub disjoint_supports: bool,
    pub readout_bounds: Vec<BoundRow>,
}

pub fn separation(k: &KernelMatrix, labels: &[i64], split: SplitTag, epsilons: &[f64]) -> CliResult<PairSeparation> {
    let (same, diff) = kernel_histograms(k, labels, split).stage("histograms", ErrorKind::Numerical)?;
    let usable = !same.is_empty() && !diff.is_empty();
    let (jsd_v, c) = if usable {
        (
            Some(jsd(same.freq(), diff.freq()).stage("histograms", ErrorKind::Numerical)?),
            Some(chernoff_information(same.freq(), diff.freq()).stage("histograms", ErrorKind::Numerical)?),
        )
    } else {
        (None, None)
    };
    let disjoint = c == Some(f64::INFINITY);
    let readout_bounds = match c {
        Some(c) => epsilons
            .iter()
            .map(|&epsilon| {
                Ok(BoundRow { epsilon, readout_bound: readout_bound(c, epsilon).map_err(to_num)?.finite() })
            })
            .collect::<CliResult<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(PairSeparation {
        split,
        same_class: same,
        different_class: diff,
        jsd: jsd_v,
        chernoff: c.filter(|v| v.is_finite()),
        disjoint_supports: disjoint,
        readout_bounds,
    })
}

fn to_num(e: Error) -> CliError {
    CliError::new(ErrorKind::Numerical, "histograms", e.to_string())
}

/// Train-train and test-test separation for a trained model.
pub fn histograms(model: &QuantumModel, split: &Split, cfg: &ExperimentConfig, seed: u64) -> CliResult<[PairSeparation; 2]> {
    let mut k_test = kernel_matrix(&model.test_phases, &model.layout, &model.input).stage("histograms", ErrorKind::Numerical)?;
    if cfg.shots > 0 {
        let mut rng = stream_rng(seed, SHOTS_STREAM + 100);
        k_test = sample_matrix(&k_test, cfg.shots, &mut rng).stage("sampling", ErrorKind::Numerical)?;
    }
    Ok([
        separation(&model.k_train, &split.train.labels, SplitTag::Train, &cfg.analysis.epsilons)?,
        separation(&k_test, &split.test.labels, SplitTag::Test, &cfg.analysis.epsilons)?,
    ])
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BaselineResult {
    pub linear: Option<f64>,
    pub sigmoid: Option<f64>,
    pub neural_network: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn kernel_svm_accuracy(kind: ClassicalKernel, split: &Split, cfg: &ExperimentConfig, slack: f64) -> bosonkernel::Result<f64> {
    let gram = kind.gram(&split.train.features)?;
    let clf = SvmClassifier::fit(&gram, &split.train.labels, &cfg.svm.params(Some(slack)))?;
    let rows = kind.cross(&split.test.features, &split.train.features)?;
    accuracy(&clf.predict_all(&rows)?, &split.test.labels)
}

/// Classical baselines on the raw normalized features of the same split.
pub fn run_baselines(split: &Split, circuit: &CircuitConfig, cfg: &ExperimentConfig, seed: u64) -> CliResult<BaselineResult> {
    let mut out = BaselineResult::default();
    if cfg.baselines.linear {
        let slack = QUANTUM_PSD_SLACK * scale_of(&split.train.features);
        out.linear = Some(kernel_svm_accuracy(ClassicalKernel::Linear, split, cfg, slack).stage("linear baseline", ErrorKind::Numerical)?);
    }
    if cfg.baselines.sigmoid {
        match kernel_svm_accuracy(ClassicalKernel::Sigmoid, split, cfg, SIGMOID_PSD_SLACK) {
            Ok(a) => out.sigmoid = Some(a),
            Err(e @ Error::NotPsd { .. }) => out.notes.push(format!("sigmoid baseline skipped: {e}")),
            Err(e) => return Err(e).stage("sigmoid baseline", ErrorKind::Numerical),
        }
    }
    if cfg.baselines.neural_network {
        let nn = nn_train(&split.train.features, &split.train.labels, circuit.param_count(), &cfg.train.train_config(seed))
            .stage("neural-network baseline", ErrorKind::Numerical)?;
        let pred = split
            .test
            .features
            .iter()
            .map(|x| nn_predict(&nn, x))
            .collect::<bosonkernel::Result<Vec<_>>>()
            .stage("neural-network baseline", ErrorKind::Numerical)?;
        out.neural_network = Some(accuracy(&pred, &split.test.labels).stage("neural-network baseline", ErrorKind::Numerical)?);
    }
    Ok(out)
}

/// Upper bound on the Gram trace, at least 1.
fn scale_of(xs: &[Vec<f64>]) -> f64 {
    xs.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).fold(1.0, f64::max) * xs.len() as f64
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), std: std_dev(xs) }
    }

    pub fn of_options(xs: impl IntoIterator<Item = Option<f64>>) -> Option<Self> {
        let v: Option<Vec<f64>> = xs.into_iter().collect();
        v.filter(|v| !v.is_empty()).map(|v| Self::of(&v))
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> std::path::PathBuf {
    out.join(format!("seed-{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(std_dev(&[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(std_dev(&[5.0]), 0.0);
        assert_eq!(Stat::of_options([Some(1.0), None]), None);
        assert_eq!(Stat::of_options([Some(1.0), Some(3.0)]).unwrap().mean, 2.0);
    }

    #[test]
    fn separation_of_block_kernel() {
        let labels = [0i64, 0, 1, 1];
        let k = KernelMatrix::from_pair_fn(4, |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 });
        let s = separation(&k, &labels, SplitTag::Train, &[0.1]).unwrap();
        assert!((s.jsd.unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(s.disjoint_supports);
        assert_eq!(s.chernoff, None);
        assert_eq!(s.readout_bounds, vec![BoundRow { epsilon: 0.1, readout_bound: Some(1) }]);

        let one_class = separation(&k, &[0, 0, 0, 0], SplitTag::Test, &[0.1]).unwrap();
        assert_eq!(one_class.jsd, None);
        assert!(one_class.readout_bounds.is_empty());
    }
}
