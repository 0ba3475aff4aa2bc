//! Programmable interferometer built from tunable basic units (TBUs).
//!
//! A TBU couples two adjacent modes with
//!
//! ```text
//! T(θ, φ) = | e^{iφ} cos θ   -sin θ |
//!           | e^{iφ} sin θ    cos θ |
//! ```
//!
//! Layers alternate between odd couplings `(1,2), (3,4), …` and even
//! couplings `(2,3), (4,5), …`. The mode unitary is `V = L_ℓ ⋯ L_1`, so
//! layer 1 acts first on the input operators.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Tbu = [[Complex64; 2]; 2];

/// Angles of a single TBU; `theta ∈ [0, π/2]`, `phi ∈ [0, 2π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TbuSetting {
    theta: f64,
    phi: f64,
}

impl TbuSetting {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        check_range("theta", theta, 0.0, FRAC_PI_2)?;
        check_range("phi", phi, 0.0, TAU)?;
        Ok(Self { theta, phi })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

impl Default for TbuSetting {
    fn default() -> Self {
        Self { theta: 0.0, phi: 0.0 }
    }
}

pub(crate) fn check_range(param: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange { param, value, lo, hi })
    }
}

/// The 2×2 TBU matrix for a validated setting.
pub fn tbu_matrix(setting: &TbuSetting) -> Tbu {
    tbu_entries(setting.theta, setting.phi)
}

/// TBU matrix without range checks; finite-difference probes step slightly
/// outside the nominal angle box.
#[inline]
pub fn tbu_entries(theta: f64, phi: f64) -> Tbu {
    let (s, c) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    [
        [e * c, Complex64::new(-s, 0.0)],
        [e * s, Complex64::new(c, 0.0)],
    ]
}

/// Which TBU angle a derivative is taken against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Angle {
    Theta,
    Phi,
}

/// Entrywise derivative of [`tbu_entries`] with respect to one angle.
pub fn tbu_derivative(theta: f64, phi: f64, wrt: Angle) -> Tbu {
    let (s, c) = theta.sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    let zero = Complex64::new(0.0, 0.0);
    match wrt {
        Angle::Theta => [
            [-e * s, Complex64::new(-c, 0.0)],
            [e * c, Complex64::new(-s, 0.0)],
        ],
        Angle::Phi => {
            let ie = Complex64::i() * e;
            [[ie * c, zero], [ie * s, zero]]
        }
    }
}

fn adjoint2(t: &Tbu) -> Tbu {
    [
        [t[0][0].conj(), t[1][0].conj()],
        [t[0][1].conj(), t[1][1].conj()],
    ]
}

/// Number of TBUs in an `m`-mode, `layers`-deep alternating mesh.
pub fn tbu_count(m: usize, layers: usize) -> usize {
    if m.is_multiple_of(2) && !layers.is_multiple_of(2) {
        (layers * (m - 1)).div_ceil(2)
    } else {
        layers * (m - 1) / 2
    }
}

/// Position of one TBU: 0-based layer and 0-based lower mode of the coupled pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub layer: usize,
    pub mode: usize,
}

/// Mesh topology. Slots are ordered layer-major, then by ascending mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeshLayout {
    modes: usize,
    layers: usize,
    slots: Vec<Slot>,
}

impl MeshLayout {
    pub fn new(m: usize, layers: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("a mesh needs at least 2 modes, got {m}")));
        }
        if layers < 1 {
            return Err(Error::InvalidArgument("a mesh needs at least one layer".into()));
        }
        let slots = (0..layers)
            .flat_map(|layer| {
                // layer 0 is the first (odd-coupling) layer
                (layer % 2..m - 1).step_by(2).map(move |mode| Slot { layer, mode })
            })
            .collect();
        Ok(Self { modes: m, layers, slots })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn tbu_count(&self) -> usize {
        self.slots.len()
    }

    /// Number of real parameters, two per TBU.
    pub fn param_count(&self) -> usize {
        2 * self.slots.len()
    }
}

/// Alias for [`MeshLayout::new`].
pub fn layout(m: usize, layers: usize) -> Result<MeshLayout> {
    MeshLayout::new(m, layers)
}

/// `m × m` unitary acting on mode creation operators.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeUnitary(DMatrix<Complex64>);

impl ModeUnitary {
    pub fn identity(m: usize) -> Self {
        Self(DMatrix::identity(m, m))
    }

    /// Wraps a matrix without checking unitarity.
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Self {
        Self(matrix)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `max |(V†V - I)_{ij}|`.
    pub fn unitarity_error(&self) -> f64 {
        let prod = self.0.adjoint() * &self.0;
        let m = self.dim();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).norm());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for ModeUnitary {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.0[idx]
    }
}

/// Left-multiplies rows `p, p+1` of `target` by `t`.
#[inline]
pub(crate) fn apply_rows(target: &mut DMatrix<Complex64>, p: usize, t: &Tbu) {
    for c in 0..target.ncols() {
        let a = target[(p, c)];
        let b = target[(p + 1, c)];
        target[(p, c)] = t[0][0] * a + t[0][1] * b;
        target[(p + 1, c)] = t[1][0] * a + t[1][1] * b;
    }
}

/// Applies the mesh described by interleaved `(θ, φ)` phases to `target`
/// (`target ← V · target`). No range checks.
pub(crate) fn propagate(layout: &MeshLayout, phases: &[f64], target: &mut DMatrix<Complex64>) {
    debug_assert_eq!(phases.len(), layout.param_count());
    for (slot, pair) in layout.slots.iter().zip(phases.chunks_exact(2)) {
        apply_rows(target, slot.mode, &tbu_entries(pair[0], pair[1]));
    }
}

fn check_settings(layout: &MeshLayout, settings: &[TbuSetting]) -> Result<()> {
    if settings.len() != layout.tbu_count() {
        return Err(Error::DimensionMismatch {
            what: "TBU settings",
            expected: layout.tbu_count(),
            found: settings.len(),
        });
    }
    Ok(())
}

/// `V = L_ℓ ⋯ L_1` for the given per-slot settings.
pub fn assemble_unitary(layout: &MeshLayout, settings: &[TbuSetting]) -> Result<ModeUnitary> {
    check_settings(layout, settings)?;
    let mut v = DMatrix::identity(layout.modes, layout.modes);
    for (slot, s) in layout.slots.iter().zip(settings) {
        apply_rows(&mut v, slot.mode, &tbu_matrix(s));
    }
    Ok(ModeUnitary(v))
}

/// `W = V(settings_i)† · V(settings_j)`, the circuit whose coincidence
/// probability is the kernel.
pub fn composite_unitary(
    layout: &MeshLayout,
    settings_i: &[TbuSetting],
    settings_j: &[TbuSetting],
) -> Result<ModeUnitary> {
    let vi = assemble_unitary(layout, settings_i)?;
    let vj = assemble_unitary(layout, settings_j)?;
    Ok(ModeUnitary(vi.0.adjoint() * vj.0))
}

/// Reference construction of [`composite_unitary`] as one doubled-depth
/// mesh: the `j` mesh followed by the `i` mesh with its units reversed and
/// individually conjugate-transposed.
pub fn composite_unitary_doubled(
    layout: &MeshLayout,
    settings_i: &[TbuSetting],
    settings_j: &[TbuSetting],
) -> Result<ModeUnitary> {
    check_settings(layout, settings_i)?;
    check_settings(layout, settings_j)?;
    let mut w = DMatrix::identity(layout.modes, layout.modes);
    for (slot, s) in layout.slots.iter().zip(settings_j) {
        apply_rows(&mut w, slot.mode, &tbu_matrix(s));
    }
    for (slot, s) in layout.slots.iter().zip(settings_i).rev() {
        apply_rows(&mut w, slot.mode, &adjoint2(&tbu_matrix(s)));
    }
    Ok(ModeUnitary(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-15
    }

    pub(crate) fn random_settings(rng: &mut impl Rng, n: usize) -> Vec<TbuSetting> {
        (0..n)
            .map(|_| TbuSetting::new(rng.random_range(0.0..=FRAC_PI_2), rng.random_range(0.0..=TAU)).unwrap())
            .collect()
    }

    fn max_diff(a: &ModeUnitary, b: &ModeUnitary) -> f64 {
        (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn tbu_matrix_examples() {
        let id = tbu_matrix(&TbuSetting::new(0.0, 0.0).unwrap());
        assert!(close(id[0][0], c(1.0)) && close(id[0][1], c(0.0)));
        assert!(close(id[1][0], c(0.0)) && close(id[1][1], c(1.0)));

        let swap = tbu_matrix(&TbuSetting::new(FRAC_PI_2, 0.0).unwrap());
        assert!(close(swap[0][0], c(0.0)) && close(swap[0][1], c(-1.0)));
        assert!(close(swap[1][0], c(1.0)) && close(swap[1][1], c(0.0)));

        let bal = tbu_matrix(&TbuSetting::new(FRAC_PI_4, 0.0).unwrap());
        assert!(close(bal[0][0], c(FRAC_1_SQRT_2)) && close(bal[0][1], c(-FRAC_1_SQRT_2)));
        assert!(close(bal[1][0], c(FRAC_1_SQRT_2)) && close(bal[1][1], c(FRAC_1_SQRT_2)));
    }

    #[test]
    fn out_of_range_angles_rejected() {
        assert!(TbuSetting::new(-0.1, 0.0).is_err());
        assert!(TbuSetting::new(FRAC_PI_2 + 1e-9, 0.0).is_err());
        assert!(TbuSetting::new(0.0, TAU + 1e-9).is_err());
        assert!(TbuSetting::new(f64::NAN, 0.0).is_err());
        assert!(TbuSetting::new(FRAC_PI_2, TAU).is_ok());
    }

    #[test]
    fn tbu_counts() {
        assert_eq!(tbu_count(5, 5), 10);
        assert_eq!(tbu_count(4, 3), 5);
        assert_eq!(tbu_count(10, 10), 45);
        assert_eq!(layout(10, 10).unwrap().slots().len(), 45);
        for m in 2..=8 {
            for l in 1..=8 {
                assert_eq!(layout(m, l).unwrap().tbu_count(), tbu_count(m, l), "m={m} l={l}");
            }
        }
    }

    #[test]
    fn layout_examples() {
        let one_based = |l: &MeshLayout| -> Vec<(usize, usize)> {
            l.slots().iter().map(|s| (s.layer + 1, s.mode + 1)).collect()
        };
        assert_eq!(one_based(&layout(3, 2).unwrap()), vec![(1, 1), (2, 2)]);
        assert_eq!(one_based(&layout(2, 1).unwrap()), vec![(1, 1)]);
        assert_eq!(layout(5, 5).unwrap().tbu_count(), 10);
        assert_eq!(
            one_based(&layout(4, 3).unwrap()),
            vec![(1, 1), (1, 3), (2, 2), (3, 1), (3, 3)]
        );
        assert!(layout(1, 3).is_err());
        assert!(layout(3, 0).is_err());
    }

    #[test]
    fn alternating_rule_holds() {
        for m in 2..=8 {
            for l in 1..=8 {
                for s in layout(m, l).unwrap().slots() {
                    // 1-based: odd layers start at odd modes
                    assert_eq!(s.layer % 2, s.mode % 2);
                    assert!(s.mode + 1 < m);
                }
            }
        }
    }

    #[test]
    fn assemble_examples() {
        let lay = layout(4, 4).unwrap();
        let v = assemble_unitary(&lay, &vec![TbuSetting::default(); lay.tbu_count()]).unwrap();
        assert!(max_diff(&v, &ModeUnitary::identity(4)) < 1e-15);

        let lay = layout(2, 1).unwrap();
        let v = assemble_unitary(&lay, &[TbuSetting::new(FRAC_PI_4, 0.0).unwrap()]).unwrap();
        assert!((v[(0, 0)] - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((v[(0, 1)] - c(-FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((v[(1, 0)] - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((v[(1, 1)] - c(FRAC_1_SQRT_2)).norm() < 1e-15);

        assert!(matches!(
            assemble_unitary(&lay, &[]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn layer_one_acts_first() {
        // m = 3, l = 2: swap (1,2) then swap (2,3). A photon entering mode 1
        // ends in mode 3, so V maps column 0 onto row 2.
        let lay = layout(3, 2).unwrap();
        let s = TbuSetting::new(FRAC_PI_2, 0.0).unwrap();
        let v = assemble_unitary(&lay, &[s, s]).unwrap();
        assert!((v[(2, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_meshes_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lay = layout(6, 6).unwrap();
        for _ in 0..100 {
            let v = assemble_unitary(&lay, &random_settings(&mut rng, lay.tbu_count())).unwrap();
            assert!(v.unitarity_error() <= 1e-12);
        }
    }

    #[test]
    fn composite_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lay = layout(5, 5).unwrap();
        let zero = vec![TbuSetting::default(); lay.tbu_count()];
        for _ in 0..20 {
            let si = random_settings(&mut rng, lay.tbu_count());
            let sj = random_settings(&mut rng, lay.tbu_count());
            let w = composite_unitary(&lay, &si, &si).unwrap();
            assert!(max_diff(&w, &ModeUnitary::identity(5)) <= 1e-12);

            let w = composite_unitary(&lay, &zero, &sj).unwrap();
            assert!(max_diff(&w, &assemble_unitary(&lay, &sj).unwrap()) <= 1e-12);

            let w = composite_unitary(&lay, &si, &sj).unwrap();
            assert!(w.unitarity_error() <= 1e-12);
            let doubled = composite_unitary_doubled(&lay, &si, &sj).unwrap();
            assert!(max_diff(&w, &doubled) <= 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (t, p, h) = (0.7, 2.1, 1e-6);
        for wrt in [Angle::Theta, Angle::Phi] {
            let d = tbu_derivative(t, p, wrt);
            let (plus, minus) = match wrt {
                Angle::Theta => (tbu_entries(t + h, p), tbu_entries(t - h, p)),
                Angle::Phi => (tbu_entries(t, p + h), tbu_entries(t, p - h)),
            };
            for r in 0..2 {
                for k in 0..2 {
                    let fd = (plus[r][k] - minus[r][k]) / (2.0 * h);
                    assert!((fd - d[r][k]).norm() < 1e-8);
                }
            }
        }
    }
}
