//! Boson-sampling fidelity kernel.
//!
//! `K(x_i, x_j) = |⟨φ| U†(x_i) U(x_j) |φ⟩|²` where `|φ⟩` puts one photon in
//! each of the first `n` modes. With `C = V[:, input modes]` the `m × n`
//! block of a mesh unitary, the amplitude is `Per(C_i† C_j)`, so only the
//! input columns of each mesh are ever propagated.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fock::OccupationPattern;
use crate::mesh::{self, check_range, tbu_derivative, tbu_entries, Angle, MeshLayout, TbuSetting};
use crate::permanent::{permanent_minor_table, permanent_ryser};
use crate::{Error, Result};

/// Default central-difference step in radians.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Interleaved mesh parameters `(θ_1, φ_1, θ_2, φ_2, …)` in slot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    /// Validates length against the layout and every angle against its range.
    pub fn new(values: Vec<f64>, layout: &MeshLayout) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::DimensionMismatch {
                what: "phase vector",
                expected: layout.param_count(),
                found: values.len(),
            });
        }
        for pair in values.chunks_exact(2) {
            check_range("theta", pair[0], 0.0, FRAC_PI_2)?;
            check_range("phi", pair[1], 0.0, TAU)?;
        }
        Ok(Self(values))
    }

    pub fn zeros(layout: &MeshLayout) -> Self {
        Self(vec![0.0; layout.param_count()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn settings(&self) -> Vec<TbuSetting> {
        self.0
            .chunks_exact(2)
            .map(|p| TbuSetting::new(p[0], p[1]).expect("validated on construction"))
            .collect()
    }
}

/// Evaluates kernels for one mesh layout and input pattern.
#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    layout: MeshLayout,
    input_modes: Vec<usize>,
}

impl KernelEvaluator {
    /// The input must place at most one photon per mode.
    pub fn new(layout: &MeshLayout, input: &OccupationPattern) -> Result<Self> {
        if input.modes() != layout.modes() {
            return Err(Error::DimensionMismatch {
                what: "input pattern",
                expected: layout.modes(),
                found: input.modes(),
            });
        }
        if !input.is_single_occupancy() {
            return Err(Error::InvalidArgument(format!(
                "kernel input {input} must carry at most one photon per mode"
            )));
        }
        Ok(Self { layout: layout.clone(), input_modes: input.mode_list() })
    }

    pub fn layout(&self) -> &MeshLayout {
        &self.layout
    }

    pub fn photons(&self) -> usize {
        self.input_modes.len()
    }

    fn check_len(&self, phases: &[f64]) -> Result<()> {
        if phases.len() != self.layout.param_count() {
            return Err(Error::DimensionMismatch {
                what: "phase vector",
                expected: self.layout.param_count(),
                found: phases.len(),
            });
        }
        Ok(())
    }

    fn input_columns(&self) -> DMatrix<Complex64> {
        let mut e = DMatrix::zeros(self.layout.modes(), self.input_modes.len());
        for (c, &mode) in self.input_modes.iter().enumerate() {
            e[(mode, c)] = Complex64::new(1.0, 0.0);
        }
        e
    }

    /// The input columns of the mesh unitary, `V[:, input modes]`. Angles are
    /// not range-checked here.
    pub fn state(&self, phases: &[f64]) -> DMatrix<Complex64> {
        let mut c = self.input_columns();
        mesh::propagate(&self.layout, phases, &mut c);
        c
    }

    /// Coincidence probability between two propagated states.
    pub fn overlap(&self, ci: &DMatrix<Complex64>, cj: &DMatrix<Complex64>) -> f64 {
        permanent_ryser(&ci.ad_mul(cj)).norm_sqr()
    }

    pub fn kernel_raw(&self, phases_i: &[f64], phases_j: &[f64]) -> f64 {
        self.overlap(&self.state(phases_i), &self.state(phases_j))
    }

    /// Central differences of the kernel with respect to every entry of both
    /// phase vectors.
    pub fn gradient_fd(&self, phases_i: &[f64], phases_j: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(phases_i)?;
        self.check_len(phases_j)?;
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
        }
        let ci = self.state(phases_i);
        let cj = self.state(phases_j);
        let partials = |moving: &[f64], fixed: &DMatrix<Complex64>, moving_is_i: bool| -> Vec<f64> {
            let mut probe = moving.to_vec();
            (0..moving.len())
                .map(|k| {
                    let orig = probe[k];
                    probe[k] = orig + h;
                    let plus = self.state(&probe);
                    probe[k] = orig - h;
                    let minus = self.state(&probe);
                    probe[k] = orig;
                    let (kp, km) = if moving_is_i {
                        (self.overlap(&plus, fixed), self.overlap(&minus, fixed))
                    } else {
                        (self.overlap(fixed, &plus), self.overlap(fixed, &minus))
                    };
                    (kp - km) / (2.0 * h)
                })
                .collect()
        };
        Ok((partials(phases_i, &cj, true), partials(phases_j, &ci, false)))
    }

    /// `∂C/∂p` for every parameter of one mesh, by the product rule over the
    /// individual unit matrices.
    fn state_derivatives(&self, phases: &[f64]) -> Vec<DMatrix<Complex64>> {
        let slots = self.layout.slots();
        let mut prefix = Vec::with_capacity(slots.len() + 1);
        let mut cur = self.input_columns();
        prefix.push(cur.clone());
        for (slot, p) in slots.iter().zip(phases.chunks_exact(2)) {
            mesh::apply_rows(&mut cur, slot.mode, &tbu_entries(p[0], p[1]));
            prefix.push(cur.clone());
        }
        let mut out = Vec::with_capacity(phases.len());
        for (s, slot) in slots.iter().enumerate() {
            for wrt in [Angle::Theta, Angle::Phi] {
                let d = tbu_derivative(phases[2 * s], phases[2 * s + 1], wrt);
                let before = &prefix[s];
                let mut dc = DMatrix::zeros(before.nrows(), before.ncols());
                let p = slot.mode;
                for c in 0..before.ncols() {
                    let (a, b) = (before[(p, c)], before[(p + 1, c)]);
                    dc[(p, c)] = d[0][0] * a + d[0][1] * b;
                    dc[(p + 1, c)] = d[1][0] * a + d[1][1] * b;
                }
                for (later, q) in slots.iter().zip(phases.chunks_exact(2)).skip(s + 1) {
                    mesh::apply_rows(&mut dc, later.mode, &tbu_entries(q[0], q[1]));
                }
                out.push(dc);
            }
        }
        out
    }

    /// Exact kernel gradient via permanent minors:
    /// `dK = 2 Re(conj(Per A) Σ_{rc} minor_{rc} dA_{rc})`, `A = C_i† C_j`.
    pub fn gradient_analytic(&self, phases_i: &[f64], phases_j: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(phases_i)?;
        self.check_len(phases_j)?;
        let ci = self.state(phases_i);
        let cj = self.state(phases_j);
        let a = ci.ad_mul(&cj);
        let per_conj = permanent_ryser(&a).conj();
        let minors = permanent_minor_table(&a);
        let contract = |da: &DMatrix<Complex64>| -> f64 {
            let dper: Complex64 = minors.iter().zip(da.iter()).map(|(m, d)| m * d).sum();
            2.0 * (per_conj * dper).re
        };
        let grad_i = self
            .state_derivatives(phases_i)
            .iter()
            .map(|dci| contract(&dci.ad_mul(&cj)))
            .collect();
        let grad_j = self
            .state_derivatives(phases_j)
            .iter()
            .map(|dcj| contract(&ci.ad_mul(dcj)))
            .collect();
        Ok((grad_i, grad_j))
    }
}

fn canonical_evaluator(layout: &MeshLayout, input: &OccupationPattern) -> Result<KernelEvaluator> {
    let n = input.photons();
    if input.counts().iter().enumerate().any(|(k, &c)| c != u32::from(k < n)) {
        return Err(Error::InvalidArgument(format!(
            "kernel input {input} is not the first-{n}-modes pattern"
        )));
    }
    KernelEvaluator::new(layout, input)
}

fn check_phase_len(layout: &MeshLayout, p: &PhaseVector) -> Result<()> {
    if p.len() != layout.param_count() {
        return Err(Error::DimensionMismatch {
            what: "phase vector",
            expected: layout.param_count(),
            found: p.len(),
        });
    }
    Ok(())
}

/// Kernel between two encoded points.
pub fn kernel(
    phases_i: &PhaseVector,
    phases_j: &PhaseVector,
    layout: &MeshLayout,
    input: &OccupationPattern,
) -> Result<f64> {
    check_phase_len(layout, phases_i)?;
    check_phase_len(layout, phases_j)?;
    Ok(canonical_evaluator(layout, input)?.kernel_raw(phases_i.values(), phases_j.values()))
}

/// See [`KernelEvaluator::gradient_fd`].
pub fn kernel_gradient_fd(
    phases_i: &PhaseVector,
    phases_j: &PhaseVector,
    layout: &MeshLayout,
    input: &OccupationPattern,
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    canonical_evaluator(layout, input)?.gradient_fd(phases_i.values(), phases_j.values(), h)
}

/// See [`KernelEvaluator::gradient_analytic`].
pub fn kernel_gradient_analytic(
    phases_i: &PhaseVector,
    phases_j: &PhaseVector,
    layout: &MeshLayout,
    input: &OccupationPattern,
) -> Result<(Vec<f64>, Vec<f64>)> {
    canonical_evaluator(layout, input)?.gradient_analytic(phases_i.values(), phases_j.values())
}

/// Finite-shot estimate: successes of `shots` Bernoulli trials with the exact
/// kernel as success probability, divided by `shots`.
pub fn kernel_sampled<R: Rng + ?Sized>(
    phases_i: &PhaseVector,
    phases_j: &PhaseVector,
    layout: &MeshLayout,
    input: &OccupationPattern,
    shots: u64,
    rng: &mut R,
) -> Result<f64> {
    let p = kernel(phases_i, phases_j, layout, input)?;
    sample_probability(p, shots, rng)
}

/// Binomial draw `Bin(shots, p) / shots` with `p` clamped into `[0, 1]`.
pub fn sample_probability<R: Rng + ?Sized>(p: f64, shots: u64, rng: &mut R) -> Result<f64> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let dist = Binomial::new(shots, p.clamp(0.0, 1.0))
        .map_err(|e| Error::InvalidArgument(format!("binomial: {e}")))?;
    Ok(dist.sample(rng) as f64 / shots as f64)
}

/// Dense symmetric Gram matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    /// Fills the upper triangle with `f(i, j)` for `i <= j` and mirrors it.
    /// Rows are evaluated in parallel; every entry is computed exactly once,
    /// so the result does not depend on the number of workers.
    pub fn from_pair_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| f(i, j)).collect())
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, values }
    }

    /// Takes a row-major square matrix; symmetry is checked exactly.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch { what: "kernel matrix", expected: n * n, found: values.len() });
        }
        let k = Self { n, values };
        if !k.is_symmetric() {
            return Err(Error::InvalidArgument("kernel matrix is not symmetric".into()));
        }
        Ok(k)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Principal submatrix on `indices` (in the given order).
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let n = indices.len();
        let values = indices
            .iter()
            .flat_map(|&i| indices.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self { n, values }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let m = DMatrix::from_row_slice(self.n, self.n, &self.values);
        m.symmetric_eigenvalues().min()
    }

    /// `(i, j, value)` lines for the upper triangle, preceded by a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,value")?;
        for i in 0..self.n {
            for j in i..self.n {
                writeln!(w, "{i},{j},{:e}", self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Circuit shape stored alongside a cached kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheShape {
    pub modes: u32,
    pub photons: u32,
    pub layers: u32,
}

const KERNEL_MAGIC: &[u8; 4] = b"BKRN";
const KERNEL_VERSION: u32 = 1;

/// Binary kernel cache. Little-endian layout:
///
/// ```text
/// "BKRN" | version u32 | N u64 | m u32 | n u32 | ℓ u32 | upper triangle (i <= j) row-major f64
/// ```
pub fn write_kernel_cache<W: Write>(k: &KernelMatrix, shape: CacheShape, mut w: W) -> Result<()> {
    w.write_all(KERNEL_MAGIC)?;
    w.write_all(&KERNEL_VERSION.to_le_bytes())?;
    w.write_all(&(k.n as u64).to_le_bytes())?;
    for v in [shape.modes, shape.photons, shape.layers] {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..k.n {
        for j in i..k.n {
            w.write_all(&k.get(i, j).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_kernel_cache<R: Read>(mut r: R) -> Result<(KernelMatrix, CacheShape)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != KERNEL_MAGIC {
        return Err(Error::Format(format!("kernel cache magic {magic:?} != \"BKRN\"")));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    let mut u32_le = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut b4)?;
        Ok(u32::from_le_bytes(b4))
    };
    let version = u32_le(&mut r)?;
    if version != KERNEL_VERSION {
        return Err(Error::Format(format!("unsupported kernel cache version {version}")));
    }
    r.read_exact(&mut b8)?;
    let n = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| Error::Format("kernel size".into()))?;
    let shape = CacheShape { modes: u32_le(&mut r)?, photons: u32_le(&mut r)?, layers: u32_le(&mut r)? };
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            r.read_exact(&mut b8)?;
            let v = f64::from_le_bytes(b8);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok((KernelMatrix { n, values }, shape))
}

pub fn save_kernel_cache(k: &KernelMatrix, shape: CacheShape, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_kernel_cache(k, shape, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_kernel_cache(path: &Path) -> Result<(KernelMatrix, CacheShape)> {
    read_kernel_cache(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Gram matrix of the quantum kernel over `phase_list`.
pub fn kernel_matrix(
    phase_list: &[PhaseVector],
    layout: &MeshLayout,
    input: &OccupationPattern,
) -> Result<KernelMatrix> {
    if phase_list.is_empty() {
        return Err(Error::InvalidArgument("kernel matrix needs at least one point".into()));
    }
    for p in phase_list {
        check_phase_len(layout, p)?;
    }
    let eval = canonical_evaluator(layout, input)?;
    let states: Vec<_> = phase_list.par_iter().map(|p| eval.state(p.values())).collect();
    Ok(KernelMatrix::from_pair_fn(states.len(), |i, j| eval.overlap(&states[i], &states[j])))
}

/// Rectangular kernel block: one row per `rows` entry against every `cols` entry.
pub fn cross_kernel(
    rows: &[PhaseVector],
    cols: &[PhaseVector],
    layout: &MeshLayout,
    input: &OccupationPattern,
) -> Result<Vec<Vec<f64>>> {
    for p in rows.iter().chain(cols) {
        check_phase_len(layout, p)?;
    }
    let eval = canonical_evaluator(layout, input)?;
    let col_states: Vec<_> = cols.par_iter().map(|p| eval.state(p.values())).collect();
    Ok(rows
        .par_iter()
        .map(|p| {
            let s = eval.state(p.values());
            col_states.iter().map(|c| eval.overlap(&s, c)).collect()
        })
        .collect())
}
