//! Fragment catalog with Zipf popularity and cache-vector bookkeeping.
//!
//! The catalog is a set of equally sized file fragments. Request popularity
//! follows a Zipf law with exponent `phi`; a cache placement is a vector `q`
//! of per-fragment caching probabilities subject to a per-vehicle storage
//! budget (fractional placement, so the per-slot decision stays a linear
//! program).

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Zipf popularity vector: `p_j = 1 / (H * j^phi)` with `H = sum_k k^-phi`.
///
/// Strictly decreasing for `phi > 0`, uniform for `phi = 0`. The result is
/// normalized so it sums to one exactly (up to the final division).
pub fn zipf_popularity(n_fragments: usize, phi: f64) -> Result<Vec<f64>> {
    if n_fragments == 0 {
        return Err(ModelError::Domain("catalog needs at least one fragment".into()));
    }
    if !phi.is_finite() || phi < 0.0 {
        return Err(ModelError::Domain(format!("zipf exponent must be >= 0, got {phi}")));
    }
    let weights: Vec<f64> = (1..=n_fragments).map(|j| (j as f64).powf(-phi)).collect();
    let h: f64 = weights.iter().sum();
    let mut p: Vec<f64> = weights.iter().map(|w| w / h).collect();
    // Kill residual summation drift so downstream mass bookkeeping is exact.
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    Ok(p)
}

/// Immutable fragment catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    n_fragments: usize,
    fragment_size_bits: f64,
    zipf_exponent: f64,
    popularity: Vec<f64>,
}

impl Catalog {
    pub fn new(n_fragments: usize, fragment_size_bits: f64, zipf_exponent: f64) -> Result<Self> {
        if !fragment_size_bits.is_finite() || fragment_size_bits <= 0.0 {
            return Err(ModelError::Domain(format!(
                "fragment size must be positive, got {fragment_size_bits}"
            )));
        }
        let popularity = zipf_popularity(n_fragments, zipf_exponent)?;
        Ok(Self {
            n_fragments,
            fragment_size_bits,
            zipf_exponent,
            popularity,
        })
    }

    pub fn n_fragments(&self) -> usize {
        self.n_fragments
    }

    pub fn fragment_size_bits(&self) -> f64 {
        self.fragment_size_bits
    }

    pub fn zipf_exponent(&self) -> f64 {
        self.zipf_exponent
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    /// Total catalog size in bits.
    pub fn total_bits(&self) -> f64 {
        self.n_fragments as f64 * self.fragment_size_bits
    }
}

/// Per-fragment caching probabilities plus the per-vehicle storage budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheVector {
    pub q: Vec<f64>,
    pub capacity_bits: f64,
}

impl CacheVector {
    pub fn new(q: Vec<f64>, capacity_bits: f64) -> Self {
        Self { q, capacity_bits }
    }

    /// The all-zero placement (nothing cached).
    pub fn empty(n_fragments: usize, capacity_bits: f64) -> Self {
        Self::new(vec![0.0; n_fragments], capacity_bits)
    }

    /// Popularity-weighted cached mass `sum_j p_j * q_j`.
    pub fn cached_mass(&self, popularity: &[f64]) -> f64 {
        self.q.iter().zip(popularity).map(|(q, p)| q * p).sum()
    }

    /// Storage actually used, `sum_j q_j * B`.
    pub fn used_bits(&self, fragment_size_bits: f64) -> f64 {
        self.q.iter().sum::<f64>() * fragment_size_bits
    }
}

/// A violated placement constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintViolation {
    /// `q_j` outside `[0, 1]`.
    Range { index: usize, value: f64 },
    /// Total placed bits exceed the per-vehicle budget.
    Capacity { used_bits: f64, capacity_bits: f64 },
}

/// Outcome of [`validate_cache_vector`]; empty `violations` means valid.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheValidation {
    pub violations: Vec<ConstraintViolation>,
}

impl CacheValidation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&ConstraintViolation> {
        self.violations.first()
    }
}

/// Check a placement against the box constraint (each `q_j` in `[0,1]`) and
/// the capacity constraint (`sum_j q_j * B <= S_cv`).
///
/// Range violations are reported in index order, then the capacity violation.
pub fn validate_cache_vector(cache: &CacheVector, catalog: &Catalog) -> Result<CacheValidation> {
    if cache.q.len() != catalog.n_fragments() {
        return Err(ModelError::DimensionMismatch {
            left: cache.q.len(),
            right: catalog.n_fragments(),
        });
    }
    let mut violations = Vec::new();
    for (index, &value) in cache.q.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            violations.push(ConstraintViolation::Range { index, value });
        }
    }
    let used_bits = cache.used_bits(catalog.fragment_size_bits());
    // Tiny relative slack: the greedy solver fills the budget exactly and the
    // sum may land an ulp above it.
    let slack = 1e-9 * cache.capacity_bits.max(1.0);
    if used_bits > cache.capacity_bits + slack {
        violations.push(ConstraintViolation::Capacity {
            used_bits,
            capacity_bits: cache.capacity_bits,
        });
    }
    Ok(CacheValidation { violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zipf_four_fragments_unit_exponent() {
        let p = zipf_popularity(4, 1.0).unwrap();
        let expected = [0.48, 0.24, 0.16, 0.12];
        for (got, want) in p.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn zipf_zero_exponent_is_uniform() {
        let p = zipf_popularity(5, 0.0).unwrap();
        for v in &p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn zipf_single_fragment() {
        let p = zipf_popularity(1, 3.7).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn zipf_rejects_bad_domain() {
        assert!(matches!(zipf_popularity(0, 1.0), Err(ModelError::Domain(_))));
        assert!(matches!(zipf_popularity(4, -0.1), Err(ModelError::Domain(_))));
    }

    #[test]
    fn validate_accepts_exact_capacity() {
        let catalog = Catalog::new(2, 1e6, 0.7).unwrap();
        let cache = CacheVector::new(vec![1.0, 1.0], 2e6);
        assert!(validate_cache_vector(&cache, &catalog).unwrap().is_valid());
    }

    #[test]
    fn validate_flags_capacity_overrun() {
        let catalog = Catalog::new(3, 1e6, 0.7).unwrap();
        let cache = CacheVector::new(vec![1.0, 1.0, 0.5], 2e6);
        let check = validate_cache_vector(&cache, &catalog).unwrap();
        assert!(!check.is_valid());
        match check.first().unwrap() {
            ConstraintViolation::Capacity { used_bits, capacity_bits } => {
                assert!((used_bits - 2.5e6).abs() < 1.0);
                assert!((capacity_bits - 2e6).abs() < 1.0);
            }
            other => panic!("expected capacity violation, got {other:?}"),
        }
    }

    #[test]
    fn validate_flags_range_violation_with_index() {
        let catalog = Catalog::new(2, 1e6, 0.0).unwrap();
        let cache = CacheVector::new(vec![1.2, 0.0], 5e6);
        let check = validate_cache_vector(&cache, &catalog).unwrap();
        match check.first().unwrap() {
            ConstraintViolation::Range { index, value } => {
                assert_eq!(*index, 0);
                assert!((value - 1.2).abs() < 1e-12);
            }
            other => panic!("expected range violation, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_length_mismatch() {
        let catalog = Catalog::new(3, 1e6, 0.7).unwrap();
        let cache = CacheVector::new(vec![0.5; 2], 1e6);
        assert!(matches!(
            validate_cache_vector(&cache, &catalog),
            Err(ModelError::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    proptest! {
        #[test]
        fn zipf_normalized_and_monotone(n in 1usize..2000, phi in 0.0f64..3.0) {
            let p = zipf_popularity(n, phi).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            if phi > 0.0 {
                for w in p.windows(2) {
                    prop_assert!(w[0] > w[1]);
                }
            }
        }
    }
}
