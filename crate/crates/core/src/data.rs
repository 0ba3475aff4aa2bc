//! Dataset loading, min-max normalization, stratified subsampling and
//! train/test splitting.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
    /// Statistics this dataset was normalized with, if any.
    pub normalization: Option<MinMaxStats>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels: Vec<i64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch { what: "labels", expected: features.len(), found: labels.len() });
        }
        let d = features.first().map_or(0, Vec::len);
        if let Some(row) = features.iter().position(|r| r.len() != d) {
            return Err(Error::Data(format!("row {row} has {} features, expected {d}", features[row].len())));
        }
        Ok(Self { name: name.into(), features, labels, normalization: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d_raw(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<i64> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn class_counts(&self) -> BTreeMap<i64, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            normalization: self.normalization.clone(),
        }
    }

    /// Appends the rows of `other`.
    pub fn concat(mut self, other: Self) -> Result<Self> {
        if !self.is_empty() && !other.is_empty() && self.d_raw() != other.d_raw() {
            return Err(Error::DimensionMismatch { what: "feature width", expected: self.d_raw(), found: other.d_raw() });
        }
        self.features.extend(other.features);
        self.labels.extend(other.labels);
        Ok(self)
    }

    pub fn normalized(&self, stats: &MinMaxStats) -> Result<Self> {
        Ok(Self {
            name: self.name.clone(),
            features: minmax_apply(stats, &self.features)?,
            labels: self.labels.clone(),
            normalization: Some(stats.clone()),
        })
    }

    /// Writes a JSON header line followed by the row-major little-endian
    /// `f64` feature block.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let header = DumpHeader {
            format: DUMP_FORMAT.into(),
            name: self.name.clone(),
            rows: self.len(),
            d_raw: self.d_raw(),
            labels: self.labels.clone(),
            normalization: self.normalization.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in self.features.iter().flatten() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: DumpHeader = serde_json::from_str(line.trim_end())?;
        if header.format != DUMP_FORMAT {
            return Err(Error::Format(format!("unknown dataset dump format {:?}", header.format)));
        }
        if header.labels.len() != header.rows {
            return Err(Error::Format("label count disagrees with header".into()));
        }
        let mut buf = [0u8; 8];
        let mut features = Vec::with_capacity(header.rows);
        for _ in 0..header.rows {
            let mut row = Vec::with_capacity(header.d_raw);
            for _ in 0..header.d_raw {
                r.read_exact(&mut buf)?;
                row.push(f64::from_le_bytes(buf));
            }
            features.push(row);
        }
        Ok(Self { name: header.name, features, labels: header.labels, normalization: header.normalization })
    }
}

const DUMP_FORMAT: &str = "bosonkernel-dataset-v1";

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    name: String,
    rows: usize,
    d_raw: usize,
    labels: Vec<i64>,
    normalization: Option<MinMaxStats>,
}

/// Shape and label mapping of a headerless UCI CSV file.
pub struct CsvFormat<'a> {
    pub name: &'a str,
    pub features: usize,
    /// Exact row count required, if known.
    pub rows: Option<usize>,
    pub label: fn(&str) -> Option<i64>,
}

pub const IONOSPHERE_ROWS: usize = 351;
pub const IONOSPHERE_FEATURES: usize = 34;
pub const SPAMBASE_ROWS: usize = 4601;
pub const SPAMBASE_FEATURES: usize = 57;
pub const IMAGE_SIDE: usize = 28;

fn ionosphere_label(s: &str) -> Option<i64> {
    match s {
        "g" => Some(1),
        "b" => Some(-1),
        _ => None,
    }
}

fn spambase_label(s: &str) -> Option<i64> {
    match s {
        "1" => Some(1),
        "0" => Some(-1),
        _ => None,
    }
}

pub const IONOSPHERE: CsvFormat<'static> = CsvFormat {
    name: "ionosphere",
    features: IONOSPHERE_FEATURES,
    rows: Some(IONOSPHERE_ROWS),
    label: ionosphere_label,
};

pub const SPAMBASE: CsvFormat<'static> = CsvFormat {
    name: "spambase",
    features: SPAMBASE_FEATURES,
    rows: Some(SPAMBASE_ROWS),
    label: spambase_label,
};

/// Parses comma-separated rows of `features` numbers plus a trailing label
/// token. Blank lines are skipped.
pub fn parse_csv<R: BufRead>(reader: R, format: &CsvFormat<'_>, path: &Path) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno + 1, msg };
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if tokens.len() != format.features + 1 {
            return Err(parse_err(format!("{} fields, expected {}", tokens.len(), format.features + 1)));
        }
        let (label_tok, value_toks) = tokens.split_last().expect("non-empty row");
        let row = value_toks
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(format!("non-finite value {bad}")));
        }
        let label = (format.label)(label_tok).ok_or_else(|| parse_err(format!("unknown label {label_tok:?}")))?;
        features.push(row);
        labels.push(label);
    }
    if let Some(rows) = format.rows {
        if labels.len() != rows {
            return Err(Error::Data(format!(
                "{}: {} rows in {}, expected {rows}",
                format.name,
                labels.len(),
                path.display()
            )));
        }
    }
    Dataset::new(format.name, features, labels)
}

pub fn load_csv(path: &Path, format: &CsvFormat<'_>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    parse_csv(BufReader::new(file), format, path)
}

pub fn load_ionosphere(path: &Path) -> Result<Dataset> {
    load_csv(path, &IONOSPHERE)
}

pub fn load_spambase(path: &Path) -> Result<Dataset> {
    load_csv(path, &SPAMBASE)
}

/// Whole file, transparently gunzipped when it starts with the gzip magic.
fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("IDX header truncated".into()))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Decodes IDX image/label byte streams into 784-feature rows with raw
/// pixel values in `[0, 255]`.
pub fn parse_idx(name: &str, images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let magic = be_u32(images, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let magic = be_u32(labels, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("label file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(images, 4)? as usize;
    let (rows, cols) = (be_u32(images, 8)? as usize, be_u32(images, 12)? as usize);
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(Error::Format(format!("image dims {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")));
    }
    let label_count = be_u32(labels, 4)? as usize;
    if label_count != count {
        return Err(Error::Format(format!("{count} images but {label_count} labels")));
    }
    let px = rows * cols;
    let body = &images[16..];
    if body.len() != count * px {
        return Err(Error::Format(format!("image payload {} bytes, expected {}", body.len(), count * px)));
    }
    let lbody = &labels[8..];
    if lbody.len() != count {
        return Err(Error::Format(format!("label payload {} bytes, expected {count}", lbody.len())));
    }
    let features = body.chunks_exact(px).map(|img| img.iter().map(|&b| f64::from(b)).collect()).collect();
    Dataset::new(name, features, lbody.iter().map(|&l| i64::from(l)).collect())
}

pub fn load_idx_images(images: &Path, labels: &Path) -> Result<Dataset> {
    let name = images.file_stem().map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    parse_idx(&name, &read_maybe_gzip(images)?, &read_maybe_gzip(labels)?)
}

pub fn minmax_fit(features: &[Vec<f64>]) -> MinMaxStats {
    let d = features.first().map_or(0, Vec::len);
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in features {
        for (k, &v) in row.iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    MinMaxStats { min, max }
}

/// `(x - min) / (max - min)` clamped into `[0, 1]`; constant features map to 0.
pub fn minmax_apply(stats: &MinMaxStats, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = stats.min.len();
    features
        .iter()
        .map(|row| {
            if row.len() != d {
                return Err(Error::DimensionMismatch { what: "feature width", expected: d, found: row.len() });
            }
            Ok(row
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let span = stats.max[k] - stats.min[k];
                    if span > 0.0 {
                        ((v - stats.min[k]) / span).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect())
        })
        .collect()
}

fn indices_by_class(labels: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    by_class
}

/// Stratified split with `floor(n_c · test_fraction)` test points per class.
/// Both parts keep the original row order.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::OutOfRange { param: "test_fraction", value: test_fraction, lo: 0.0, hi: 1.0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in indices_by_class(&dataset.labels) {
        let n_test = (idx.len() as f64 * test_fraction).floor() as usize;
        if n_test == 0 || n_test == idx.len() {
            return Err(Error::Data(format!(
                "class {class} has {} samples, too few for a {test_fraction} test fraction",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.select(&train), dataset.select(&test)))
}

/// Stratified subsample of `n_keep` rows. Per-class quotas follow the class
/// proportions, rounded by largest remainder (ties to the lower class).
pub fn subsample(dataset: &Dataset, n_keep: usize, seed: u64) -> Result<Dataset> {
    let n = dataset.len();
    if n_keep == 0 || n_keep > n {
        return Err(Error::Data(format!("cannot keep {n_keep} of {n} samples")));
    }
    let by_class = indices_by_class(&dataset.labels);
    let exact: Vec<f64> = by_class.values().map(|v| (n_keep * v.len()) as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n_keep - quota.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        quota[c] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(n_keep);
    for ((_, mut idx), q) in by_class.into_iter().zip(quota) {
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..q]);
    }
    keep.sort_unstable();
    Ok(dataset.select(&keep))
}
