//! Accuracy, kernel-value histograms and the divergences used to judge how
//! well a kernel separates same-class from different-class pairs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::qkernel::KernelMatrix;
use crate::{Error, Result};

pub const BIN_COUNT: usize = 20;
pub const BIN_WIDTH: f64 = 1.0 / BIN_COUNT as f64;

/// Fraction of positions where `predicted` and `actual` agree.
pub fn accuracy<T: PartialEq>(predicted: &[T], actual: &[T]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch { what: "predictions", expected: actual.len(), found: predicted.len() });
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / actual.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairClass {
    SameClass,
    DifferentClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    Train,
    Test,
}

/// Normalized occurrence counts of kernel values over 20 bins of `[0, 1]`.
/// Bins are `[lo, hi)` except the last, which is closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    freq: Vec<f64>,
    count: u64,
    pub pairs: PairClass,
    pub split: SplitTag,
}

/// Bin index for a value in `[0, 1]`; values a rounding error outside land
/// in the end bins.
pub fn bin_index(v: f64) -> usize {
    ((v * BIN_COUNT as f64).floor().max(0.0) as usize).min(BIN_COUNT - 1)
}

impl Histogram {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I, pairs: PairClass, split: SplitTag) -> Self {
        let mut counts = [0u64; BIN_COUNT];
        for v in values {
            counts[bin_index(v)] += 1;
        }
        Self::from_counts(&counts, pairs, split)
    }

    fn from_counts(counts: &[u64; BIN_COUNT], pairs: PairClass, split: SplitTag) -> Self {
        let count: u64 = counts.iter().sum();
        let freq = if count == 0 {
            vec![0.0; BIN_COUNT]
        } else {
            counts.iter().map(|&c| c as f64 / count as f64).collect()
        };
        Self { freq, count, pairs, split }
    }

    pub fn freq(&self) -> &[f64] {
        &self.freq
    }

    /// Number of pairs that went into the histogram.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// `(lo, hi)` for bin `k`.
    pub fn bin_edges(k: usize) -> (f64, f64) {
        (k as f64 * BIN_WIDTH, (k + 1) as f64 * BIN_WIDTH)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,freq")?;
        for (k, f) in self.freq.iter().enumerate() {
            let (lo, hi) = Self::bin_edges(k);
            writeln!(w, "{lo:.2},{hi:.2},{f}")?;
        }
        Ok(())
    }
}

/// Same-class and different-class histograms over the off-diagonal pairs
/// of `k`, each unordered pair counted once.
pub fn kernel_histograms<L: PartialEq>(
    k: &KernelMatrix,
    labels: &[L],
    split: SplitTag,
) -> Result<(Histogram, Histogram)> {
    if labels.len() != k.len() {
        return Err(Error::DimensionMismatch { what: "labels", expected: k.len(), found: labels.len() });
    }
    let mut same = [0u64; BIN_COUNT];
    let mut diff = [0u64; BIN_COUNT];
    for i in 0..k.len() {
        for j in i + 1..k.len() {
            let bin = bin_index(k.get(i, j));
            if labels[i] == labels[j] {
                same[bin] += 1;
            } else {
                diff[bin] += 1;
            }
        }
    }
    Ok((
        Histogram::from_counts(&same, PairClass::SameClass, split),
        Histogram::from_counts(&diff, PairClass::DifferentClass, split),
    ))
}

fn check_same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { what: "distribution bins", expected: p.len(), found: q.len() });
    }
    Ok(())
}

/// Jensen-Shannon divergence in nats; zero-probability bins contribute 0.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (2.0 * x / (x + y)).ln())
            .sum()
    };
    let d = 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p);
    Ok(d.clamp(0.0, std::f64::consts::LN_2))
}

fn bhattacharyya_sum(p: &[f64], q: &[f64], s: f64) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| a.powf(s) * b.powf(1.0 - s))
        .sum()
}

const CHERNOFF_GRID: usize = 10_000;

/// `-ln min_s Σ_k p_k^s q_k^(1-s)`, minimized on a 1e-4 grid then refined by
/// golden-section search around the best grid point. Disjoint supports give
/// `f64::INFINITY`.
pub fn chernoff_information(p: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    if p == q {
        return Ok(0.0);
    }
    let f = |s: f64| bhattacharyya_sum(p, q, s);
    let (mut best_s, mut best) = (0.0, f(0.0));
    for i in 1..=CHERNOFF_GRID {
        let s = i as f64 / CHERNOFF_GRID as f64;
        let v = f(s);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    if best <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let step = 1.0 / CHERNOFF_GRID as f64;
    let (mut a, mut b) = ((best_s - step).max(0.0), (best_s + step).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best = best.min(fc).min(fd);
    Ok((-best.ln()).max(0.0))
}

/// Number of readout samples for a target error, `ceil(ln(1/ε)/C)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutBound {
    Finite(u64),
    Unbounded,
}

impl ReadoutBound {
    pub fn finite(self) -> Option<u64> {
        match self {
            Self::Finite(n) => Some(n),
            Self::Unbounded => None,
        }
    }
}

/// Ratios within a relative 1e-9 of an integer are treated as that integer
/// so that `ceil` is not thrown off by rounding.
pub fn readout_bound(chernoff: f64, epsilon: f64) -> Result<ReadoutBound> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::OutOfRange { param: "epsilon", value: epsilon, lo: 0.0, hi: 1.0 });
    }
    if chernoff.is_nan() || chernoff < 0.0 {
        return Err(Error::InvalidArgument(format!("Chernoff information {chernoff} must be non-negative")));
    }
    if chernoff == 0.0 {
        return Ok(ReadoutBound::Unbounded);
    }
    let ratio = (1.0 / epsilon).ln() / chernoff;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { ratio.ceil() };
    Ok(ReadoutBound::Finite((n as u64).max(1)))
}
