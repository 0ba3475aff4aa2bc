//! On-disk cache of training kernel matrices, keyed by a SHA-256 digest of
//! the encoder weights, the circuit and the normalized training features.

use std::path::{Path, PathBuf};

use bosonkernel::encoder::EncoderWeights;
use bosonkernel::mesh::MeshLayout;
use bosonkernel::qkernel::{load_kernel_cache, save_kernel_cache, CacheShape, KernelMatrix};
use sha2::{Digest, Sha256};

pub const CACHE_ENV: &str = "BOSONKERNEL_CACHE_DIR";

#[derive(Clone, Debug)]
pub struct KernelCache {
    dir: PathBuf,
}

fn feed_f64s<'a>(h: &mut Sha256, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        h.update(v.to_le_bytes());
    }
}

pub fn cache_key(weights: &EncoderWeights, layout: &MeshLayout, photons: usize, train: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    h.update(b"bosonkernel-train-kernel-v1");
    for v in [weights.d_raw, weights.d, layout.modes(), layout.layers(), photons, train.len()] {
        h.update((v as u64).to_le_bytes());
    }
    feed_f64s(&mut h, weights.weight.iter().chain(&weights.bias));
    feed_f64s(&mut h, train.iter().flatten());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bkrn"))
    }

    /// Cached matrix for `key`, if present and of the expected shape.
    /// Unreadable entries are treated as misses.
    pub fn get(&self, key: &str, shape: CacheShape, n: usize) -> Option<KernelMatrix> {
        let (k, found) = load_kernel_cache(&self.path(key)).ok()?;
        (found == shape && k.len() == n).then_some(k)
    }

    /// Writes through a temporary file so readers never see a partial entry.
    pub fn put(&self, key: &str, shape: CacheShape, k: &KernelMatrix) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!("{key}.tmp{}", std::process::id()));
        save_kernel_cache(k, shape, &tmp).map_err(std::io::Error::other)?;
        std::fs::rename(&tmp, self.path(key))
    }
}
