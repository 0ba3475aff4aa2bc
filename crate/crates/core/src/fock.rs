//! Fock-basis combinatorics.
//!
//! Modes are numbered `1..=m` in prose and stored at indices `0..m`; mode `k`
//! lives at `counts[k - 1]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Photon count per optical mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupationPattern(Vec<u32>);

impl OccupationPattern {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn photons(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    /// True when no mode carries more than one photon.
    pub fn is_single_occupancy(&self) -> bool {
        self.0.iter().all(|&c| c <= 1)
    }

    /// Mode indices (0-based) repeated once per photon, ascending.
    pub fn mode_list(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(mode, &c)| std::iter::repeat_n(mode, c as usize))
            .collect()
    }

    /// Product of `count!` over all modes.
    pub fn factorial_product(&self) -> f64 {
        self.0
            .iter()
            .map(|&c| (1..=c).map(f64::from).product::<f64>())
            .product()
    }
}

impl From<Vec<u32>> for OccupationPattern {
    fn from(counts: Vec<u32>) -> Self {
        Self(counts)
    }
}

impl fmt::Display for OccupationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("|")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("⟩")
    }
}

/// Exact binomial coefficient with overflow detection.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // acc * (n - k + i) / i == C(n - k + i, i), always integral
        acc = acc
            .checked_mul(n as u128 - k as u128 + i)
            .ok_or(Error::Overflow("binomial coefficient"))?
            / i;
    }
    u64::try_from(acc).map_err(|_| Error::Overflow("binomial coefficient"))
}

/// Number of ways to place `n` indistinguishable photons in `m` modes,
/// `C(m + n - 1, n)`.
pub fn hilbert_dim(m: usize, n: usize) -> Result<u64> {
    if m == 0 {
        return Err(Error::InvalidArgument("mode count must be at least 1".into()));
    }
    let top = (m as u64 - 1)
        .checked_add(n as u64)
        .ok_or(Error::Overflow("hilbert dimension"))?;
    binomial(top, n as u64)
}

/// Every `n`-photon pattern over `m` modes, reverse-lexicographic in the
/// count vector: `(n,0,…,0)` first, `(0,…,0,n)` last.
pub fn enumerate_patterns(m: usize, n: usize) -> Vec<OccupationPattern> {
    fn fill(out: &mut Vec<OccupationPattern>, prefix: &mut Vec<u32>, modes_left: usize, photons: u32) {
        if modes_left == 1 {
            prefix.push(photons);
            out.push(OccupationPattern(prefix.clone()));
            prefix.pop();
            return;
        }
        for c in (0..=photons).rev() {
            prefix.push(c);
            fill(out, prefix, modes_left - 1, photons - c);
            prefix.pop();
        }
    }

    if m == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    fill(&mut out, &mut Vec::with_capacity(m), m, n as u32);
    out
}

/// One photon in each of the first `n` modes, vacuum elsewhere.
pub fn initial_state(m: usize, n: usize) -> Result<OccupationPattern> {
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "{n} photons cannot occupy {m} modes singly"
        )));
    }
    Ok(OccupationPattern((0..m).map(|k| u32::from(k < n)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn hilbert_dim_examples() {
        assert_eq!(hilbert_dim(5, 2).unwrap(), 15);
        assert_eq!(hilbert_dim(7, 0).unwrap(), 1);
        assert_eq!(hilbert_dim(10, 5).unwrap(), 2002);
        assert_eq!(enumerate_patterns(10, 5).len(), 2002);
    }

    #[test]
    fn hilbert_dim_overflow_is_an_error() {
        assert!(matches!(hilbert_dim(200, 100), Err(Error::Overflow(_))));
        assert!(hilbert_dim(0, 3).is_err());
    }

    #[test]
    fn enumeration_order() {
        let p = |v: &[u32]| OccupationPattern(v.to_vec());
        assert_eq!(enumerate_patterns(2, 2), vec![p(&[2, 0]), p(&[1, 1]), p(&[0, 2])]);
        assert_eq!(
            enumerate_patterns(3, 1),
            vec![p(&[1, 0, 0]), p(&[0, 1, 0]), p(&[0, 0, 1])]
        );
        assert_eq!(enumerate_patterns(4, 2).len(), 10);
        assert_eq!(enumerate_patterns(3, 0), vec![p(&[0, 0, 0])]);
    }

    #[test]
    fn enumeration_matches_dimension() {
        for m in 1..=8 {
            for n in 0..=5 {
                let pats = enumerate_patterns(m, n);
                assert_eq!(pats.len() as u64, hilbert_dim(m, n).unwrap());
                let unique: HashSet<_> = pats.iter().collect();
                assert_eq!(unique.len(), pats.len());
                assert!(pats.iter().all(|p| p.photons() == n && p.modes() == m));
                // reverse-lexicographic
                assert!(pats.windows(2).all(|w| w[0] > w[1]));
                // C(m+n-1, n) == C(m+n-1, m-1)
                assert_eq!(
                    hilbert_dim(m, n).unwrap(),
                    binomial((m + n - 1) as u64, (m - 1) as u64).unwrap()
                );
            }
        }
    }

    #[test]
    fn initial_states() {
        assert_eq!(initial_state(5, 2).unwrap().counts(), &[1, 1, 0, 0, 0]);
        assert_eq!(initial_state(3, 0).unwrap().counts(), &[0, 0, 0]);
        assert_eq!(initial_state(4, 4).unwrap().counts(), &[1, 1, 1, 1]);
        assert!(initial_state(3, 4).is_err());
    }

    #[test]
    fn mode_list_and_factorials() {
        let p = OccupationPattern::new(vec![2, 0, 1]);
        assert_eq!(p.mode_list(), vec![0, 0, 2]);
        assert_eq!(p.factorial_product(), 2.0);
        assert_eq!(p.to_string(), "|2,0,1⟩");
    }
}
