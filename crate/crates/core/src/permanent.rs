//! Matrix permanents and Fock transition probabilities.
//!
//! For input pattern `S` and output pattern `T` with the same photon number,
//!
//! ```text
//! P(S → T) = |Per(V_{S,T})|² / (s_1! ⋯ s_m! t_1! ⋯ t_m!)
//! ```
//!
//! where `V_{S,T}` repeats row `i` of `V` `t_i` times and column `j` `s_j`
//! times (ascending mode order).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fock::OccupationPattern;
use crate::mesh::ModeUnitary;
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest order the brute-force permutation sum accepts.
pub const NAIVE_MAX_ORDER: usize = 8;

fn square_order(a: &DMatrix<Complex64>) -> usize {
    assert_eq!(a.nrows(), a.ncols(), "permanent of a non-square matrix");
    a.nrows()
}

/// Permanent by direct summation over all permutations. Reference only;
/// panics above [`NAIVE_MAX_ORDER`].
pub fn permanent_naive(a: &DMatrix<Complex64>) -> Complex64 {
    fn go(a: &DMatrix<Complex64>, row: usize, used: u32, acc: Complex64) -> Complex64 {
        let k = a.nrows();
        if row == k {
            return acc;
        }
        (0..k)
            .filter(|&c| used & (1 << c) == 0)
            .map(|c| go(a, row + 1, used | (1 << c), acc * a[(row, c)]))
            .sum()
    }
    let k = square_order(a);
    assert!(k <= NAIVE_MAX_ORDER, "naive permanent limited to order {NAIVE_MAX_ORDER}");
    go(a, 0, 0, ONE)
}

/// Ryser's inclusion–exclusion formula, visiting column subsets in Gray-code
/// order so each step updates the row sums with a single column.
/// `O(2^k · k)`; the empty matrix has permanent 1.
pub fn permanent_ryser(a: &DMatrix<Complex64>) -> Complex64 {
    let k = square_order(a);
    if k == 0 {
        return ONE;
    }
    assert!(k < 64, "permanent order {k} is out of reach");
    let mut row_sums = [ZERO; 64];
    let row_sums = &mut row_sums[..k];
    let mut total = ZERO;
    let mut gray: u64 = 0;
    for step in 1u64..(1u64 << k) {
        let col = step.trailing_zeros() as usize;
        gray ^= 1 << col;
        if gray & (1 << col) != 0 {
            for (r, s) in row_sums.iter_mut().enumerate() {
                *s += a[(r, col)];
            }
        } else {
            for (r, s) in row_sums.iter_mut().enumerate() {
                *s -= a[(r, col)];
            }
        }
        let prod = row_sums.iter().fold(ONE, |p, &s| p * s);
        if gray.count_ones().is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if k % 2 == 1 {
        -total
    } else {
        total
    }
}

/// `∂Per(A)/∂A_{rc}`: the permanent of `A` with row `r` and column `c` removed.
pub fn permanent_minor_table(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let k = square_order(a);
    DMatrix::from_fn(k, k, |r, c| permanent_ryser(&a.clone().remove_row(r).remove_column(c)))
}

/// `n × n` block of a mode unitary selected by input and output patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeSubmatrix {
    pub entries: DMatrix<Complex64>,
    pub input: OccupationPattern,
    pub output: OccupationPattern,
}

fn check_patterns(v: &ModeUnitary, s: &OccupationPattern, t: &OccupationPattern) -> Result<()> {
    let m = v.dim();
    for (what, p) in [("input pattern", s), ("output pattern", t)] {
        if p.modes() != m {
            return Err(Error::DimensionMismatch { what, expected: m, found: p.modes() });
        }
    }
    if s.photons() != t.photons() {
        return Err(Error::InvalidArgument(format!(
            "photon number mismatch: input has {}, output has {}",
            s.photons(),
            t.photons()
        )));
    }
    Ok(())
}

/// Builds `V_{S,T}`: `t_i` copies of row `i` (step one), then `s_j` copies of
/// column `j` of that intermediate (step two).
pub fn extract_submatrix(
    v: &ModeUnitary,
    s: &OccupationPattern,
    t: &OccupationPattern,
) -> Result<AmplitudeSubmatrix> {
    check_patterns(v, s, t)?;
    let rows = t.mode_list();
    let cols = s.mode_list();
    let intermediate = v.matrix().select_rows(rows.iter());
    let entries = intermediate.select_columns(cols.iter());
    Ok(AmplitudeSubmatrix { entries, input: s.clone(), output: t.clone() })
}

/// Probability of detecting `t` at the output when `s` is injected.
pub fn transition_probability(
    v: &ModeUnitary,
    s: &OccupationPattern,
    t: &OccupationPattern,
) -> Result<f64> {
    let sub = extract_submatrix(v, s, t)?;
    let amp = permanent_ryser(&sub.entries);
    Ok(amp.norm_sqr() / (s.factorial_product() * t.factorial_product()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_patterns, initial_state};
    use crate::mesh::{assemble_unitary, layout, tbu_matrix, TbuSetting};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut impl Rng, k: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(k, k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rel_err(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn naive_examples() {
        assert!((permanent_naive(&DMatrix::identity(4, 4)) - ONE).norm() < 1e-15);
        assert!((permanent_naive(&DMatrix::from_element(3, 3, ONE)) - c(6.0, 0.0)).norm() < 1e-15);
        let (a, b, cc, d) = (c(1.0, 2.0), c(-0.5, 1.0), c(3.0, -1.0), c(0.25, 0.0));
        let m = DMatrix::from_row_slice(2, 2, &[a, b, cc, d]);
        assert!((permanent_naive(&m) - (a * d + b * cc)).norm() < 1e-15);
    }

    #[test]
    fn ryser_examples() {
        assert!((permanent_ryser(&DMatrix::identity(5, 5)) - ONE).norm() < 1e-15);
        assert_eq!(permanent_ryser(&DMatrix::zeros(0, 0)), ONE);
        let d = [c(2.0, 0.0), c(0.0, 1.0), c(-1.5, 0.5), c(0.3, -0.2)];
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&d));
        let expect = d.iter().fold(ONE, |p, &x| p * x);
        assert!(rel_err(permanent_ryser(&diag), expect) < 1e-14);
    }

    #[test]
    fn ryser_matches_naive_on_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for _ in 0..100 {
            let a = random_matrix(&mut rng, 6);
            assert!(rel_err(permanent_ryser(&a), permanent_naive(&a)) <= 1e-10);
        }
    }

    #[test]
    fn permanent_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 1..=6 {
            let a = random_matrix(&mut rng, k);
            let p = permanent_ryser(&a);
            assert!(rel_err(permanent_ryser(&a.transpose()), p) < 1e-12);
            let mut swapped = a.clone();
            swapped.swap_rows(0, k - 1);
            swapped.swap_columns(0, k / 2);
            assert!(rel_err(permanent_ryser(&swapped), p) < 1e-12);
        }
    }

    #[test]
    fn minor_table_examples() {
        let a = c(0.3, -0.7);
        let t = permanent_minor_table(&DMatrix::from_element(1, 1, a));
        assert_eq!(t[(0, 0)], ONE);

        let (a, b, cc, d) = (c(1.0, 2.0), c(-0.5, 1.0), c(3.0, -1.0), c(0.25, 0.0));
        let t = permanent_minor_table(&DMatrix::from_row_slice(2, 2, &[a, b, cc, d]));
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[d, cc, b, a]));
    }

    #[test]
    fn minor_table_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let a = random_matrix(&mut rng, 4);
        let table = permanent_minor_table(&a);
        let h = 1e-7;
        for r in 0..4 {
            for col in 0..4 {
                // Per is linear in each entry, so the real-direction derivative
                // is the complex derivative.
                let mut plus = a.clone();
                let mut minus = a.clone();
                plus[(r, col)] += h;
                minus[(r, col)] -= h;
                let fd = (permanent_naive(&plus) - permanent_naive(&minus)) / (2.0 * h);
                assert!((fd - table[(r, col)]).norm() <= 1e-6 * table[(r, col)].norm().max(1.0));
            }
        }
    }

    #[test]
    fn submatrix_rules() {
        let lay = layout(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let settings: Vec<_> = (0..lay.tbu_count())
            .map(|_| TbuSetting::new(rng.random_range(0.0..FRAC_PI_2), rng.random_range(0.0..TAU)).unwrap())
            .collect();
        let v = assemble_unitary(&lay, &settings).unwrap();

        let s = initial_state(4, 2).unwrap();
        let sub = extract_submatrix(&v, &s, &s).unwrap();
        assert_eq!(sub.entries, v.matrix().view((0, 0), (2, 2)).into_owned());

        let s = OccupationPattern::new(vec![0, 1, 0, 1]);
        let t = OccupationPattern::new(vec![1, 0, 1, 0]);
        let sub = extract_submatrix(&v, &s, &t).unwrap();
        assert_eq!(sub.entries[(0, 0)], v[(0, 1)]);
        assert_eq!(sub.entries[(1, 1)], v[(2, 3)]);

        let bad = OccupationPattern::new(vec![1, 1, 1, 0]);
        assert!(extract_submatrix(&v, &s, &bad).is_err());
        assert!(extract_submatrix(&v, &OccupationPattern::new(vec![1, 1]), &t).is_err());
    }

    #[test]
    fn bunched_output_repeats_rows() {
        let v = ModeUnitary::from_matrix(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.8), c(0.6, 0.0)],
        ));
        let s = OccupationPattern::new(vec![1, 1]);
        let t = OccupationPattern::new(vec![2, 0]);
        let sub = extract_submatrix(&v, &s, &t).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[v[(0, 0)], v[(0, 1)], v[(0, 0)], v[(0, 1)]]);
        assert_eq!(sub.entries, expect);
    }

    #[test]
    fn single_photon_probability() {
        for theta in [0.0, 0.3, 1.1, FRAC_PI_2] {
            let t = tbu_matrix(&TbuSetting::new(theta, 0.0).unwrap());
            let v = ModeUnitary::from_matrix(DMatrix::from_row_slice(2, 2, &[t[0][0], t[0][1], t[1][0], t[1][1]]));
            let s = OccupationPattern::new(vec![1, 0]);
            let p = transition_probability(&v, &s, &s).unwrap();
            assert!((p - theta.cos().powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn hong_ou_mandel_dip() {
        let t = tbu_matrix(&TbuSetting::new(FRAC_PI_4, 0.0).unwrap());
        let v = ModeUnitary::from_matrix(DMatrix::from_row_slice(2, 2, &[t[0][0], t[0][1], t[1][0], t[1][1]]));
        let s = OccupationPattern::new(vec![1, 1]);
        assert!(transition_probability(&v, &s, &s).unwrap() <= 1e-12);
        // the photons bunch: |2,0> and |0,2> each with probability 1/2
        for t in [vec![2, 0], vec![0, 2]] {
            let p = transition_probability(&v, &s, &OccupationPattern::new(t)).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_preserves_every_pattern() {
        let v = ModeUnitary::identity(4);
        for s in enumerate_patterns(4, 3) {
            assert!((transition_probability(&v, &s, &s).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn probability_conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for m in 2..=6 {
            let lay = layout(m, m).unwrap();
            for n in 1..=3.min(m) {
                let settings: Vec<_> = (0..lay.tbu_count())
                    .map(|_| TbuSetting::new(rng.random_range(0.0..FRAC_PI_2), rng.random_range(0.0..TAU)).unwrap())
                    .collect();
                let v = assemble_unitary(&lay, &settings).unwrap();
                let s = initial_state(m, n).unwrap();
                let total: f64 = enumerate_patterns(m, n)
                    .iter()
                    .map(|t| {
                        let p = transition_probability(&v, &s, t).unwrap();
                        assert!((-1e-12..=1.0 + 1e-12).contains(&p));
                        p
                    })
                    .sum();
                assert!((total - 1.0).abs() <= 1e-10, "m={m} n={n} total={total}");
            }
        }
    }
}
