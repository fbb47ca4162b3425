//! Coherence, restricted isometry, spectral, and frame quantities.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::support::{binomial, for_each_support};

/// Default cap on the number of supports enumerated in exact RIP mode.
pub const DEFAULT_RIP_BUDGET: u128 = 1_000_000;

/// How restricted isometry constants are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RipMode {
    /// Eigenvalue scan over every size-k support (within a budget).
    Exact,
    /// Both constants replaced by the cumulative-coherence bound `mu_{k-1}`.
    CoherenceBound,
}

/// Summary of the conditioning of a dictionary at sparsity `k`.
#[derive(Debug, Clone, Serialize)]
pub struct DictionaryProfile {
    pub k: usize,
    pub mu_1: f64,
    pub mu_k: f64,
    pub delta_lower_k: f64,
    pub delta_upper_k: f64,
    /// `true` when the RIP constants are exact rather than coherence bounds.
    pub rip_exact: bool,
    /// Spectral norm `|||D|||_2`.
    pub op_norm: f64,
    /// `||D^T D - I||_F`.
    pub gram_residual: f64,
    /// Lower frame bound: smallest eigenvalue of `D D^T`; positive iff the
    /// dictionary spans the signal space.
    pub frame_lower: f64,
}

impl DictionaryProfile {
    pub fn compute(d: &Dictionary, k: usize, mode: RipMode) -> Result<Self> {
        let (op_norm, gram_residual, frame_lower) = spectral_profile(d);
        let mu_1 = plain_coherence(d);
        let mu_k = if k < d.ncols() {
            cumulative_coherence(d, k)?
        } else {
            // mu_k is defined for k <= p-1; saturate at the largest order
            cumulative_coherence(d, d.ncols() - 1)?
        };
        let (delta_lower_k, delta_upper_k, exact) = rip_constants(d, k, mode)?;
        Ok(Self {
            k,
            mu_1,
            mu_k,
            delta_lower_k,
            delta_upper_k,
            rip_exact: exact,
            op_norm,
            gram_residual,
            frame_lower,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }
}

/// Plain coherence `mu_1 = max_{i != j} |<d_i, d_j>|`; zero when `p = 1`.
pub fn plain_coherence(d: &Dictionary) -> f64 {
    let p = d.ncols();
    if p == 1 {
        return 0.0;
    }
    let gram = d.gram();
    let mut best = 0.0f64;
    for i in 0..p {
        for j in (i + 1)..p {
            best = best.max(gram[(i, j)].abs());
        }
    }
    best
}

/// Cumulative coherence `mu_k = max_j (sum of the k largest |<d_i, d_j>|, i != j)`.
///
/// This equals the supremum over pairs `(J, j)` with `|J| <= k`, `j` outside
/// `J`, of `||D_J^T d_j||_1`, because all summands are nonnegative.
pub fn cumulative_coherence(d: &Dictionary, k: usize) -> Result<f64> {
    let p = d.ncols();
    if k == 0 || k >= p {
        return Err(Error::InvalidParameter(format!(
            "cumulative coherence needs 1 <= k <= p-1, got k={k}, p={p}"
        )));
    }
    let gram = d.gram();
    let mut best = 0.0f64;
    let mut col = vec![0.0f64; p - 1];
    for j in 0..p {
        let mut idx = 0;
        for i in 0..p {
            if i != j {
                col[idx] = gram[(i, j)].abs();
                idx += 1;
            }
        }
        col.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).unwrap());
        let sum: f64 = col[..k].iter().sum();
        best = best.max(sum);
    }
    Ok(best)
}

/// Reference implementation of `mu_k` by enumerating every `(J, j)` pair.
/// Kept for cross-validation of the sum-of-largest identity.
pub fn cumulative_coherence_enumerated(d: &Dictionary, k: usize) -> Result<f64> {
    let p = d.ncols();
    if k == 0 || k >= p {
        return Err(Error::InvalidParameter(format!(
            "cumulative coherence needs 1 <= k <= p-1, got k={k}, p={p}"
        )));
    }
    let gram = d.gram();
    let mut best = 0.0f64;
    for_each_support(p, k, |j_set| {
        for j in 0..p {
            if j_set.contains(&j) {
                continue;
            }
            let sum: f64 = j_set.iter().map(|&i| gram[(i, j)].abs()).sum();
            best = best.max(sum);
        }
    });
    Ok(best)
}

/// Restricted isometry constants of order `k`.
///
/// Exact mode scans the spectrum of every `D_J^T D_J` and returns
/// `(1 - min eig, max eig - 1, true)`; it errors when `C(p, k)` exceeds
/// `DEFAULT_RIP_BUDGET`. Bound mode returns `(mu_{k-1}, mu_{k-1}, false)`.
pub fn rip_constants(d: &Dictionary, k: usize, mode: RipMode) -> Result<(f64, f64, bool)> {
    rip_constants_with_budget(d, k, mode, DEFAULT_RIP_BUDGET)
}

pub fn rip_constants_with_budget(
    d: &Dictionary,
    k: usize,
    mode: RipMode,
    budget: u128,
) -> Result<(f64, f64, bool)> {
    let p = d.ncols();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!(
            "RIP order must satisfy 1 <= k <= p, got k={k}, p={p}"
        )));
    }
    match mode {
        RipMode::CoherenceBound => {
            let bound = if k == 1 {
                0.0
            } else {
                cumulative_coherence(d, k - 1)?
            };
            Ok((bound, bound, false))
        }
        RipMode::Exact => {
            let count = binomial(p, k);
            if count > budget {
                return Err(Error::BudgetExceeded {
                    supports: count,
                    budget,
                });
            }
            if k == 1 {
                // unit-norm atoms: every 1x1 Gram equals 1
                return Ok((0.0, 0.0, true));
            }
            let gram = d.gram();
            let mut min_eig = f64::INFINITY;
            let mut max_eig = f64::NEG_INFINITY;
            let mut sub = DMatrix::<f64>::zeros(k, k);
            for_each_support(p, k, |j_set| {
                for (a, &i) in j_set.iter().enumerate() {
                    for (b, &j) in j_set.iter().enumerate() {
                        sub[(a, b)] = gram[(i, j)];
                    }
                }
                let eigs = sub.clone().symmetric_eigenvalues();
                for e in eigs.iter() {
                    min_eig = min_eig.min(*e);
                    max_eig = max_eig.max(*e);
                }
            });
            Ok(((1.0 - min_eig).max(0.0), (max_eig - 1.0).max(0.0), true))
        }
    }
}

/// Spectral norm, Gram residual, and lower frame bound of `D`.
///
/// Both extremal values come from the symmetric eigendecomposition of
/// `D D^T`, the smaller Gram when `m <= p`.
pub fn spectral_profile(d: &Dictionary) -> (f64, f64, f64) {
    let entries = d.entries();
    let ddt = entries * entries.transpose();
    let eigs = ddt.symmetric_eigenvalues();
    let mut max_eig = f64::NEG_INFINITY;
    let mut min_eig = f64::INFINITY;
    for e in eigs.iter() {
        max_eig = max_eig.max(*e);
        min_eig = min_eig.min(*e);
    }
    let op_norm = max_eig.max(0.0).sqrt();
    let frame_lower = if min_eig < 1e-12 { 0.0 } else { min_eig };
    let p = d.ncols();
    let gram = d.gram();
    let gram_residual = (gram - DMatrix::identity(p, p)).norm();
    (op_norm, gram_residual, frame_lower)
}

/// Upper bound on `mu_k` of any unit-norm dictionary within Frobenius
/// distance `r` of a reference with coherences `mu_k_ref`, `mu_km1_ref`:
/// `mu_k_ref + sqrt(k) * r * (2 + mu_km1_ref)`.
pub fn coherence_transfer_bound(mu_k_ref: f64, mu_km1_ref: f64, k: usize, r: f64) -> f64 {
    mu_k_ref + (k as f64).sqrt() * r * (2.0 + mu_km1_ref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use nalgebra::DVector;

    #[test]
    fn orthonormal_profile_is_trivial() {
        let d = Dictionary::identity(6);
        assert_eq!(plain_coherence(&d), 0.0);
        assert_eq!(cumulative_coherence(&d, 3).unwrap(), 0.0);
        let (lo, hi, exact) = rip_constants(&d, 3, RipMode::Exact).unwrap();
        assert_eq!((lo, hi, exact), (0.0, 0.0, true));
        let (op, gram_res, frame) = spectral_profile(&d);
        assert!((op - 1.0).abs() < 1e-12);
        assert!(gram_res < 1e-12);
        assert!((frame - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plain_coherence_two_atoms() {
        let s = 1.0 / 2.0f64.sqrt();
        let entries = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, s, s]);
        let d = Dictionary::from_matrix(entries).unwrap();
        assert!((plain_coherence(&d) - s).abs() < 1e-15);
        // p = 1 returns zero
        let single = Dictionary::from_matrix(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert_eq!(plain_coherence(&single), 0.0);
    }

    #[test]
    fn plain_coherence_matches_pairwise_enumeration() {
        let mut rng = substream(42, 0);
        let d = Dictionary::spherical(20, 40, &mut rng);
        let mut brute = 0.0f64;
        for i in 0..40 {
            for j in 0..40 {
                if i != j {
                    brute = brute.max(d.atom(i).dot(&d.atom(j)).abs());
                }
            }
        }
        assert!((plain_coherence(&d) - brute).abs() < 1e-14);
    }

    #[test]
    fn cumulative_matches_enumeration_and_mu1_identity() {
        for seed in 0..6u64 {
            let mut rng = substream(100 + seed, 0);
            let d = Dictionary::spherical(4 + (seed as usize % 3), 5 + seed as usize, &mut rng);
            for k in 1..(d.ncols() - 1).min(4) {
                let fast = cumulative_coherence(&d, k).unwrap();
                let slow = cumulative_coherence_enumerated(&d, k).unwrap();
                assert!((fast - slow).abs() < 1e-12, "k={k} seed={seed}");
            }
            assert!((plain_coherence(&d) - cumulative_coherence(&d, 1).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn cumulative_coherence_is_monotone_and_bounded() {
        let mut rng = substream(7, 0);
        let d = Dictionary::spherical(6, 10, &mut rng);
        let mu1 = plain_coherence(&d);
        let mut prev = 0.0;
        for k in 1..9 {
            let mu = cumulative_coherence(&d, k).unwrap();
            assert!(mu + 1e-15 >= prev);
            assert!(mu <= k as f64 * mu1 + 1e-12);
            prev = mu;
        }
        assert!(cumulative_coherence(&d, 10).is_err());
        assert!(cumulative_coherence(&d, 0).is_err());
    }

    #[test]
    fn onb_pair_coherence_bound() {
        // pair of orthonormal bases with plain coherence mu: mu_k <= k mu
        let d = Dictionary::onb_pair(16);
        let mu1 = plain_coherence(&d);
        for k in 1..6 {
            let mu_k = cumulative_coherence(&d, k).unwrap();
            assert!(mu_k <= k as f64 * mu1 + 1e-12);
        }
    }

    #[test]
    fn exact_rip_matches_singular_value_oracle() {
        // independent route: extreme eigenvalues of D_J^T D_J via singular
        // values of D_J
        let mut rng = substream(8, 0);
        let d = Dictionary::spherical(8, 10, &mut rng);
        let (lo, hi, exact) = rip_constants(&d, 3, RipMode::Exact).unwrap();
        assert!(exact);
        let mut min_eig = f64::INFINITY;
        let mut max_eig = f64::NEG_INFINITY;
        for_each_support(10, 3, |j_set| {
            let sub = d.atoms(j_set);
            let svals = sub.svd(false, false).singular_values;
            for s in svals.iter() {
                min_eig = min_eig.min(s * s);
                max_eig = max_eig.max(s * s);
            }
        });
        assert!((lo - (1.0 - min_eig)).abs() < 1e-10);
        assert!((hi - (max_eig - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn exact_rip_below_coherence_bound_and_monotone() {
        for seed in 0..4u64 {
            let mut rng = substream(200 + seed, 0);
            let d = Dictionary::spherical(9, 12, &mut rng);
            let mut prev = (0.0, 0.0);
            for k in 2..5 {
                let (lo, hi, _) = rip_constants(&d, k, RipMode::Exact).unwrap();
                let mu = cumulative_coherence(&d, k - 1).unwrap();
                assert!(lo <= mu + 1e-12);
                assert!(hi <= mu + 1e-12);
                assert!(lo + 1e-12 >= prev.0 && hi + 1e-12 >= prev.1);
                prev = (lo, hi);
            }
        }
    }

    #[test]
    fn rip_budget_error_directs_to_bound_mode() {
        let mut rng = substream(9, 0);
        let d = Dictionary::spherical(16, 64, &mut rng);
        let err = rip_constants_with_budget(&d, 5, RipMode::Exact, 1000).unwrap_err();
        match err {
            Error::BudgetExceeded { supports, budget } => {
                assert_eq!(budget, 1000);
                assert!(supports > 1000);
            }
            other => panic!("unexpected error {other:?}"),
        }
        let (lo, hi, exact) = rip_constants(&d, 5, RipMode::CoherenceBound).unwrap();
        assert!(!exact);
        assert_eq!(lo, hi);
    }

    #[test]
    fn onb_pair_spectral_norm_and_welch_bound() {
        let d = Dictionary::onb_pair(12);
        let (op, gram_res, frame) = spectral_profile(&d);
        assert!((op - 2.0f64.sqrt()).abs() < 1e-10);
        assert!(frame > 0.0);
        // overcomplete spherical draw obeys the Welch lower bound
        let mut rng = substream(10, 0);
        let (m, p) = (10usize, 25usize);
        let rand_d = Dictionary::spherical(m, p, &mut rng);
        let (_, res, _) = spectral_profile(&rand_d);
        let welch = ((p * (p - m)) as f64 / m as f64).sqrt();
        assert!(res >= welch);
        let _ = gram_res;
    }

    #[test]
    fn rank_deficient_dictionary_has_zero_frame_bound() {
        let mut entries = DMatrix::zeros(3, 2);
        entries.column_mut(0).copy_from(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        entries.column_mut(1).copy_from(&DVector::from_vec(vec![0.0, 1.0, 0.0]));
        let d = Dictionary::from_matrix(entries).unwrap();
        let (_, _, frame) = spectral_profile(&d);
        assert_eq!(frame, 0.0);
    }

    #[test]
    fn transfer_bound_arithmetic() {
        assert_eq!(coherence_transfer_bound(0.2, 0.15, 4, 0.0), 0.2);
        let b = coherence_transfer_bound(0.2, 0.15, 4, 0.01);
        assert!((b - 0.243).abs() < 1e-15);
    }

    #[test]
    fn profile_serializes_with_stable_field_names() {
        let d = Dictionary::identity(4);
        let profile = DictionaryProfile::compute(&d, 2, RipMode::Exact).unwrap();
        let json = profile.to_json();
        for field in [
            "mu_1",
            "mu_k",
            "delta_lower_k",
            "delta_upper_k",
            "op_norm",
            "gram_residual",
            "frame_lower",
        ] {
            assert!(json.contains(field), "missing {field} in {json}");
        }
    }
}
