//! Soft-margin SVM on a precomputed kernel, solved in the dual by SMO:
//!
//! ```text
//! max_α Σ α_i - ½ Σ_ij α_i α_j y_i y_j K_ij   s.t. 0 ≤ α_i ≤ C, Σ α_i y_i = 0
//! ```
//!
//! Multiclass problems use one-vs-rest with argmax over decision scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::qkernel::KernelMatrix;
use crate::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c_box: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Most negative eigenvalue tolerated before the kernel is rejected;
    /// `None` skips the check.
    pub psd_slack: Option<f64>,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c_box: 1.0, tol: 1e-3, max_iter: 100_000, psd_slack: Some(1e-8) }
    }
}

impl SvmParams {
    fn validate(&self) -> Result<()> {
        if !(self.c_box > 0.0) || !self.c_box.is_finite() {
            return Err(Error::InvalidArgument(format!("box parameter {} must be positive", self.c_box)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("SMO tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub labels: Vec<i8>,
    pub c_box: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvmModel {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.alphas.len()).filter(|&i| self.alphas[i] > 0.0).collect()
    }

    /// `Σ α_i y_i`.
    pub fn dual_residual(&self) -> f64 {
        self.alphas.iter().zip(&self.labels).map(|(a, &y)| a * f64::from(y)).sum()
    }

    /// Dual objective `Σ α - ½ αᵀQα` against the training kernel.
    pub fn dual_objective(&self, k: &KernelMatrix) -> f64 {
        dual_objective(&self.alphas, &self.labels, k)
    }
}

pub(crate) fn dual_objective(alphas: &[f64], labels: &[i8], k: &KernelMatrix) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        let row = k.row(i);
        for j in 0..n {
            quad += alphas[i] * alphas[j] * f64::from(labels[i] * labels[j]) * row[j];
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

fn check_psd(k: &KernelMatrix, slack: Option<f64>) -> Result<()> {
    if let Some(slack) = slack {
        let min = k.min_eigenvalue();
        if min < -slack {
            return Err(Error::NotPsd { min_eigenvalue: min, slack });
        }
    }
    Ok(())
}

/// Fits a binary model on `±1` labels.
pub fn fit_binary(k: &KernelMatrix, labels: &[i8], params: &SvmParams) -> Result<BinarySvmModel> {
    params.validate()?;
    let n = k.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { what: "labels", expected: n, found: labels.len() });
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::InvalidArgument(format!("binary labels must be ±1, found {bad}")));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::InvalidArgument("all training labels belong to one class".into()));
    }
    if !k.is_symmetric() {
        return Err(Error::InvalidArgument("kernel matrix is not symmetric".into()));
    }
    check_psd(k, params.psd_slack)?;
    Ok(smo(k, labels, params))
}

fn smo(k: &KernelMatrix, labels: &[i8], params: &SvmParams) -> BinarySvmModel {
    let n = k.len();
    let c = params.c_box;
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα - Σα
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ki, kj) = (k.row(i), k.row(j));
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let quad = (ki[i] + kj[j] - 2.0 * ki[j]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * dai + y[j] * kj[t] * daj);
        }
    }

    // decision values without bias, recomputed from the final multipliers
    let f: Vec<f64> = (0..n)
        .map(|t| {
            let row = k.row(t);
            (0..n).filter(|&s| alpha[s] > 0.0).map(|s| alpha[s] * y[s] * row[s]).sum()
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).collect();
    let bias = if free.is_empty() {
        // No free vectors: midpoint of the feasible bias interval.
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for t in 0..n {
            let r = y[t] - f[t];
            let at_upper = alpha[t] >= c;
            if (y[t] > 0.0) != at_upper {
                lo = lo.max(r);
            } else {
                hi = hi.min(r);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    } else {
        free.iter().map(|&t| y[t] - f[t]).sum::<f64>() / free.len() as f64
    };

    BinarySvmModel { alphas: alpha, bias, labels: labels.to_vec(), c_box: c, iterations, converged }
}

/// Pre-sign score `Σ α_i y_i K(x_i, x) + b`.
pub fn decision(model: &BinarySvmModel, k_row: &[f64]) -> Result<f64> {
    if k_row.len() != model.len() {
        return Err(Error::DimensionMismatch { what: "kernel row", expected: model.len(), found: k_row.len() });
    }
    Ok(decision_unchecked(model, k_row))
}

fn decision_unchecked(model: &BinarySvmModel, k_row: &[f64]) -> f64 {
    model
        .alphas
        .iter()
        .zip(&model.labels)
        .zip(k_row)
        .filter(|((a, _), _)| **a > 0.0)
        .map(|((a, &y), k)| a * f64::from(y) * k)
        .sum::<f64>()
        + model.bias
}

/// `sign(score)` with `sign(0) = +1`.
pub fn sign(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn predict_binary(model: &BinarySvmModel, k_row: &[f64]) -> Result<i8> {
    Ok(sign(decision(model, k_row)?))
}

/// One binary model per class, that class against the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvrModel {
    pub classes: Vec<i64>,
    pub models: Vec<BinarySvmModel>,
}

fn sorted_classes(labels: &[i64]) -> Vec<i64> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

pub fn fit_ovr(k: &KernelMatrix, labels: &[i64], params: &SvmParams) -> Result<OvrModel> {
    params.validate()?;
    if labels.len() != k.len() {
        return Err(Error::DimensionMismatch { what: "labels", expected: k.len(), found: labels.len() });
    }
    let classes = sorted_classes(labels);
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("all training labels belong to one class".into()));
    }
    if !k.is_symmetric() {
        return Err(Error::InvalidArgument("kernel matrix is not symmetric".into()));
    }
    check_psd(k, params.psd_slack)?;
    let unchecked = SvmParams { psd_slack: None, ..params.clone() };
    let models = classes
        .par_iter()
        .map(|c| {
            let y: Vec<i8> = labels.iter().map(|l| if l == c { 1 } else { -1 }).collect();
            fit_binary(k, &y, &unchecked)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrModel { classes, models })
}

pub fn ovr_scores(ovr: &OvrModel, k_row: &[f64]) -> Result<Vec<f64>> {
    ovr.models.iter().map(|m| decision(m, k_row)).collect()
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict_ovr(ovr: &OvrModel, k_row: &[f64]) -> Result<i64> {
    Ok(ovr.classes[argmax(&ovr_scores(ovr, k_row)?)])
}

/// Binary or one-vs-rest model over arbitrary integer class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SvmClassifier {
    /// `negative` maps to `-1`, `positive` to `+1`.
    Binary { negative: i64, positive: i64, model: BinarySvmModel },
    Ovr(OvrModel),
}

impl SvmClassifier {
    /// Binary fit for two classes (the larger label is `+1`), one-vs-rest otherwise.
    pub fn fit(k: &KernelMatrix, labels: &[i64], params: &SvmParams) -> Result<Self> {
        let classes = sorted_classes(labels);
        match classes.as_slice() {
            [negative, positive] => {
                let y: Vec<i8> = labels.iter().map(|l| if l == positive { 1 } else { -1 }).collect();
                Ok(Self::Binary { negative: *negative, positive: *positive, model: fit_binary(k, &y, params)? })
            }
            _ => Ok(Self::Ovr(fit_ovr(k, labels, params)?)),
        }
    }

    pub fn classes(&self) -> Vec<i64> {
        match self {
            Self::Binary { negative, positive, .. } => vec![*negative, *positive],
            Self::Ovr(o) => o.classes.clone(),
        }
    }

    pub fn train_len(&self) -> usize {
        match self {
            Self::Binary { model, .. } => model.len(),
            Self::Ovr(o) => o.models[0].len(),
        }
    }

    pub fn predict(&self, k_row: &[f64]) -> Result<i64> {
        match self {
            Self::Binary { negative, positive, model } => {
                Ok(if predict_binary(model, k_row)? > 0 { *positive } else { *negative })
            }
            Self::Ovr(o) => predict_ovr(o, k_row),
        }
    }

    pub fn predict_all(&self, k_rows: &[Vec<f64>]) -> Result<Vec<i64>> {
        k_rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutMode {
    /// Decision sum over the subset only, with multipliers from the full fit.
    #[default]
    RestrictedSum,
    /// Fresh fit on the subset's kernel block.
    Refit,
}

/// Predictor that only consults kernel values against a subset of the
/// training points.
#[derive(Clone, Debug)]
pub struct ReadoutPredictor {
    subset: Vec<usize>,
    inner: ReadoutInner,
}

#[derive(Clone, Debug)]
enum ReadoutInner {
    Restricted(SvmClassifier),
    Constant(i64),
}

fn restrict_model(model: &BinarySvmModel, subset: &[usize]) -> BinarySvmModel {
    BinarySvmModel {
        alphas: subset.iter().map(|&i| model.alphas[i]).collect(),
        labels: subset.iter().map(|&i| model.labels[i]).collect(),
        ..model.clone()
    }
}

impl ReadoutPredictor {
    pub fn new(
        clf: &SvmClassifier,
        train_kernel: &KernelMatrix,
        train_labels: &[i64],
        subset: &[usize],
        mode: ReadoutMode,
        params: &SvmParams,
    ) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::InvalidArgument("readout subset is empty".into()));
        }
        let n = clf.train_len();
        if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!("readout index {bad} outside {n} training points")));
        }
        let inner = match mode {
            ReadoutMode::RestrictedSum => ReadoutInner::Restricted(match clf {
                SvmClassifier::Binary { negative, positive, model } => SvmClassifier::Binary {
                    negative: *negative,
                    positive: *positive,
                    model: restrict_model(model, subset),
                },
                SvmClassifier::Ovr(o) => SvmClassifier::Ovr(OvrModel {
                    classes: o.classes.clone(),
                    models: o.models.iter().map(|m| restrict_model(m, subset)).collect(),
                }),
            }),
            ReadoutMode::Refit => {
                if train_labels.len() != n || train_kernel.len() != n {
                    return Err(Error::DimensionMismatch { what: "training set", expected: n, found: train_labels.len() });
                }
                let block = train_kernel.submatrix(subset);
                let labels: Vec<i64> = subset.iter().map(|&i| train_labels[i]).collect();
                if labels.iter().all(|&l| l == labels[0]) {
                    ReadoutInner::Constant(labels[0])
                } else {
                    ReadoutInner::Restricted(SvmClassifier::fit(&block, &labels, params)?)
                }
            }
        };
        Ok(Self { subset: subset.to_vec(), inner })
    }

    /// Prediction from a test point's kernel row against all training points.
    pub fn predict(&self, full_k_row: &[f64]) -> Result<i64> {
        let row: Vec<f64> = self
            .subset
            .iter()
            .map(|&i| full_k_row.get(i).copied())
            .collect::<Option<_>>()
            .ok_or(Error::DimensionMismatch { what: "kernel row", expected: self.subset.len(), found: full_k_row.len() })?;
        match &self.inner {
            ReadoutInner::Restricted(clf) => clf.predict(&row),
            ReadoutInner::Constant(c) => Ok(*c),
        }
    }
}

/// Single-point convenience over [`ReadoutPredictor`].
pub fn predict_readout(
    clf: &SvmClassifier,
    train_kernel: &KernelMatrix,
    train_labels: &[i64],
    full_k_row: &[f64],
    subset: &[usize],
    mode: ReadoutMode,
    params: &SvmParams,
) -> Result<i64> {
    ReadoutPredictor::new(clf, train_kernel, train_labels, subset, mode, params)?.predict(full_k_row)
}
