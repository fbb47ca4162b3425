//! Probabilistic k-sparse signal model and outlier injection.
//!
//! Inlier signals are built in three steps: draw a uniform k-subset of atoms,
//! draw signed coefficients on that support, then add bounded noise:
//! `x = D0 * a + e`. Outliers are arbitrary contaminating columns; the
//! built-in generator places them uniformly on a sphere of chosen radius.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use std::io::Write;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Law of the nonzero coefficients on a drawn support.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientLaw {
    /// i.i.d. `sign * magnitude` with Rademacher signs and
    /// `magnitude ~ Uniform[alpha_min, alpha_max]`.
    SignedUniform { alpha_min: f64, alpha_max: f64 },
    /// A fixed amplitude profile, randomly permuted over the support and
    /// sign-flipped i.i.d.; fully dependent magnitudes, `||a||_2` constant.
    FixedProfile { amplitudes: Vec<f64> },
}

/// Additive noise specification.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    /// Isotropic Gaussian with deviation `sigma`, resampled until
    /// `||e||_2 <= m_eps`. Rejection preserves whiteness by symmetry.
    TruncatedGaussian { sigma: f64, m_eps: f64 },
}

/// Distribution parameters and closed-form moments of the coefficient model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientModel {
    pub p: usize,
    pub k: usize,
    pub law: CoefficientLaw,
    pub noise: NoiseSpec,
}

impl CoefficientModel {
    pub fn new(p: usize, k: usize, law: CoefficientLaw, noise: NoiseSpec) -> Result<Self> {
        if k == 0 || k > p {
            return Err(Error::InvalidParameter(format!(
                "sparsity k={k} must satisfy 1 <= k <= p={p}"
            )));
        }
        match &law {
            CoefficientLaw::SignedUniform {
                alpha_min,
                alpha_max,
            } => {
                if !(*alpha_min > 0.0) || alpha_max < alpha_min {
                    return Err(Error::InvalidParameter(
                        "signed-uniform law needs 0 < alpha_min <= alpha_max".into(),
                    ));
                }
            }
            CoefficientLaw::FixedProfile { amplitudes } => {
                if amplitudes.len() != k {
                    return Err(Error::InvalidParameter(format!(
                        "profile length {} must equal k={k}",
                        amplitudes.len()
                    )));
                }
                if amplitudes.iter().any(|a| !(*a > 0.0)) {
                    return Err(Error::InvalidParameter(
                        "profile amplitudes must be positive".into(),
                    ));
                }
            }
        }
        if let NoiseSpec::TruncatedGaussian { sigma, m_eps } = &noise {
            if !(*sigma > 0.0) || !(*m_eps > 0.0) {
                return Err(Error::InvalidParameter(
                    "truncated Gaussian noise needs sigma > 0 and m_eps > 0".into(),
                ));
            }
        }
        let model = Self { p, k, law, noise };
        debug_assert!(model.alpha_min() * (k as f64).sqrt() <= model.m_alpha() + 1e-12);
        debug_assert!(model.e_abs_alpha() <= model.e_alpha_sq().sqrt() + 1e-12);
        Ok(model)
    }

    /// Smallest possible nonzero coefficient magnitude.
    pub fn alpha_min(&self) -> f64 {
        match &self.law {
            CoefficientLaw::SignedUniform { alpha_min, .. } => *alpha_min,
            CoefficientLaw::FixedProfile { amplitudes } => {
                amplitudes.iter().cloned().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Almost-sure bound on `||a||_2` (tight for both laws).
    pub fn m_alpha(&self) -> f64 {
        match &self.law {
            CoefficientLaw::SignedUniform { alpha_max, .. } => {
                alpha_max * (self.k as f64).sqrt()
            }
            CoefficientLaw::FixedProfile { amplitudes } => {
                amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
            }
        }
    }

    /// Almost-sure bound on `||e||_2`.
    pub fn m_eps(&self) -> f64 {
        match &self.noise {
            NoiseSpec::None => 0.0,
            NoiseSpec::TruncatedGaussian { m_eps, .. } => *m_eps,
        }
    }

    /// Second moment `E[alpha^2]` of a nonzero coefficient.
    pub fn e_alpha_sq(&self) -> f64 {
        match &self.law {
            CoefficientLaw::SignedUniform {
                alpha_min,
                alpha_max,
            } => {
                if alpha_max > alpha_min {
                    (alpha_max.powi(3) - alpha_min.powi(3)) / (3.0 * (alpha_max - alpha_min))
                } else {
                    alpha_min * alpha_min
                }
            }
            CoefficientLaw::FixedProfile { amplitudes } => {
                amplitudes.iter().map(|a| a * a).sum::<f64>() / self.k as f64
            }
        }
    }

    /// First absolute moment `E[|alpha|]` of a nonzero coefficient.
    pub fn e_abs_alpha(&self) -> f64 {
        match &self.law {
            CoefficientLaw::SignedUniform {
                alpha_min,
                alpha_max,
            } => 0.5 * (alpha_min + alpha_max),
            CoefficientLaw::FixedProfile { amplitudes } => {
                amplitudes.iter().sum::<f64>() / self.k as f64
            }
        }
    }

    /// Flatness `kappa = E|alpha| / sqrt(E[alpha^2])`; equals 1 for
    /// constant-magnitude coefficients and is < 1 otherwise.
    pub fn kappa_alpha(&self) -> f64 {
        self.e_abs_alpha() / self.e_alpha_sq().sqrt()
    }

    /// `E[||a||_2^2] = k * E[alpha^2]`.
    pub fn e_norm_sq(&self) -> f64 {
        self.k as f64 * self.e_alpha_sq()
    }
}

/// Draws a uniform size-`k` subset of `{0..p}`, sorted ascending.
pub fn draw_support<R: Rng + ?Sized>(p: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!(
            "support size k={k} must satisfy 1 <= k <= p={p}"
        )));
    }
    let mut idx = rand::seq::index::sample(rng, p, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Draws a sparse coefficient vector supported on `support`.
pub fn draw_coefficients<R: Rng + ?Sized>(
    model: &CoefficientModel,
    support: &[usize],
    rng: &mut R,
) -> Result<DVector<f64>> {
    if support.len() != model.k {
        return Err(Error::InvalidParameter(format!(
            "support size {} does not match model sparsity k={}",
            support.len(),
            model.k
        )));
    }
    let mut alpha = DVector::zeros(model.p);
    match &model.law {
        CoefficientLaw::SignedUniform {
            alpha_min,
            alpha_max,
        } => {
            let magnitude = Uniform::new_inclusive(*alpha_min, *alpha_max);
            for &j in support {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                alpha[j] = sign * magnitude.sample(rng);
            }
        }
        CoefficientLaw::FixedProfile { amplitudes } => {
            let mut perm = amplitudes.clone();
            perm.shuffle(rng);
            for (i, &j) in support.iter().enumerate() {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                alpha[j] = sign * perm[i];
            }
        }
    }
    Ok(alpha)
}

fn draw_noise<R: Rng + ?Sized>(noise: &NoiseSpec, m: usize, rng: &mut R) -> Result<DVector<f64>> {
    match noise {
        NoiseSpec::None => Ok(DVector::zeros(m)),
        NoiseSpec::TruncatedGaussian { sigma, m_eps } => {
            for _ in 0..10_000 {
                let e = DVector::from_fn(m, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
                if e.norm() <= *m_eps {
                    return Ok(e);
                }
            }
            Err(Error::InvalidParameter(format!(
                "noise rejection rate pathological: sigma={sigma}, m_eps={m_eps}, m={m}"
            )))
        }
    }
}

/// A generated training set: signals plus the ground truth that produced them.
#[derive(Debug, Clone)]
pub struct SignalBatch {
    /// `m x n` signal matrix (inliers first, then outliers).
    pub signals: DMatrix<f64>,
    /// `p x n` ground-truth coefficients (zero on outlier columns).
    pub coefficients: DMatrix<f64>,
    /// Per-column support (empty for outliers).
    pub supports: Vec<Vec<usize>>,
    /// Per-column sign vector in `{-1, 0, 1}^p`.
    pub signs: Vec<Vec<i8>>,
    /// `true` for generated inlier columns.
    pub inlier_mask: Vec<bool>,
    pub n_in: usize,
    pub n_out: usize,
    pub seed: u64,
}

impl SignalBatch {
    pub fn n(&self) -> usize {
        self.n_in + self.n_out
    }

    pub fn m(&self) -> usize {
        self.signals.nrows()
    }

    pub fn p(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Total squared Frobenius energy of the outlier columns.
    pub fn outlier_frobenius_sq(&self) -> f64 {
        (0..self.n())
            .filter(|&i| !self.inlier_mask[i])
            .map(|i| self.signals.column(i).norm_squared())
            .sum()
    }

    /// Sum of Euclidean norms of the outlier columns.
    pub fn outlier_l12(&self) -> f64 {
        (0..self.n())
            .filter(|&i| !self.inlier_mask[i])
            .map(|i| self.signals.column(i).norm())
            .sum()
    }

    /// Appends arbitrary columns flagged as outliers.
    pub fn append_outlier_columns(&self, columns: &DMatrix<f64>) -> Result<Self> {
        if columns.nrows() != self.m() {
            return Err(Error::InvalidInput(
                "outlier columns must match the signal dimension".into(),
            ));
        }
        let n_new = columns.ncols();
        let mut out = self.clone();
        let old_n = self.n();
        let mut signals = DMatrix::zeros(self.m(), old_n + n_new);
        signals.columns_mut(0, old_n).copy_from(&self.signals);
        signals.columns_mut(old_n, n_new).copy_from(columns);
        let mut coefficients = DMatrix::zeros(self.p(), old_n + n_new);
        coefficients
            .columns_mut(0, old_n)
            .copy_from(&self.coefficients);
        out.signals = signals;
        out.coefficients = coefficients;
        for _ in 0..n_new {
            out.supports.push(Vec::new());
            out.signs.push(vec![0i8; self.p()]);
            out.inlier_mask.push(false);
        }
        out.n_out += n_new;
        Ok(out)
    }

    /// Writes the batch as CSV: one signal per row, columns
    /// `index,inlier,x_0,...,x_{m-1}`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let header: Vec<String> = ["index".to_string(), "inlier".to_string()]
            .into_iter()
            .chain((0..self.m()).map(|i| format!("x_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n() {
            let mut row = vec![i.to_string(), (self.inlier_mask[i] as u8).to_string()];
            row.extend((0..self.m()).map(|r| format!("{:.17e}", self.signals[(r, i)])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Generates `n` inlier signals `x = D0 * a + e` from the model.
///
/// Column `i` is drawn from substream `(seed, i + 1)`, so the batch is
/// reproducible bit for bit regardless of thread count.
pub fn generate_batch(
    d0: &Dictionary,
    model: &CoefficientModel,
    n: usize,
    seed: u64,
) -> Result<SignalBatch> {
    if model.p != d0.ncols() {
        return Err(Error::InvalidParameter(format!(
            "model atom count p={} does not match dictionary p={}",
            model.p,
            d0.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let m = d0.nrows();
    let p = d0.ncols();
    type Column = (DVector<f64>, DVector<f64>, Vec<usize>);
    let columns: Result<Vec<Column>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64 + 1);
            let support = draw_support(p, model.k, &mut rng)?;
            let alpha = draw_coefficients(model, &support, &mut rng)?;
            let noise = draw_noise(&model.noise, m, &mut rng)?;
            let mut x = noise;
            // x += D_J * alpha_J
            for &j in &support {
                x.axpy(alpha[j], &d0.atom(j).clone_owned(), 1.0);
            }
            Ok((x, alpha, support))
        })
        .collect();
    let columns = columns?;

    let mut signals = DMatrix::zeros(m, n);
    let mut coefficients = DMatrix::zeros(p, n);
    let mut supports = Vec::with_capacity(n);
    let mut signs = Vec::with_capacity(n);
    for (i, (x, alpha, support)) in columns.into_iter().enumerate() {
        signals.column_mut(i).copy_from(&x);
        coefficients.column_mut(i).copy_from(&alpha);
        let mut s = vec![0i8; p];
        for &j in &support {
            s[j] = if alpha[j] > 0.0 { 1 } else { -1 };
        }
        supports.push(support);
        signs.push(s);
    }
    Ok(SignalBatch {
        signals,
        coefficients,
        supports,
        signs,
        inlier_mask: vec![true; n],
        n_in: n,
        n_out: 0,
        seed,
    })
}

/// Appends `n_out` outliers drawn uniformly on the sphere of radius `energy`.
///
/// Outlier `i` uses substream `(seed, OUTLIER_STREAM_BASE + i)`.
pub fn inject_outliers(
    batch: &SignalBatch,
    n_out: usize,
    energy: f64,
    seed: u64,
) -> Result<SignalBatch> {
    if n_out == 0 {
        return Ok(batch.clone());
    }
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter("outlier energy must be positive".into()));
    }
    let m = batch.m();
    let mut columns = DMatrix::zeros(m, n_out);
    for i in 0..n_out {
        let mut rng = substream(seed, OUTLIER_STREAM_BASE + i as u64);
        loop {
            let g = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = g.norm();
            if norm > 1e-12 {
                columns.column_mut(i).copy_from(&(g * (energy / norm)));
                break;
            }
        }
    }
    batch.append_outlier_columns(&columns)
}

/// Substream offset reserved for outlier draws so they never collide with
/// inlier columns.
pub const OUTLIER_STREAM_BASE: u64 = 1 << 40;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master;

    fn su_model(p: usize, k: usize, a: f64, b: f64) -> CoefficientModel {
        CoefficientModel::new(
            p,
            k,
            CoefficientLaw::SignedUniform {
                alpha_min: a,
                alpha_max: b,
            },
            NoiseSpec::None,
        )
        .unwrap()
    }

    #[test]
    fn support_trivial_and_errors() {
        let mut rng = master(1);
        assert_eq!(draw_support(3, 3, &mut rng).unwrap(), vec![0, 1, 2]);
        assert!(draw_support(3, 4, &mut rng).is_err());
        assert!(draw_support(3, 0, &mut rng).is_err());
    }

    #[test]
    fn support_frequencies_uniform_p3_k2() {
        // enumeration oracle: the 3 subsets of size 2 each have probability 1/3
        let n = 30_000usize;
        let mut counts = [0usize; 3];
        for i in 0..n {
            let mut rng = substream(11, i as u64);
            let s = draw_support(3, 2, &mut rng).unwrap();
            let idx = match (s[0], s[1]) {
                (0, 1) => 0,
                (0, 2) => 1,
                (1, 2) => 2,
                _ => unreachable!(),
            };
            counts[idx] += 1;
        }
        let q = 1.0 / 3.0;
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - q).abs() <= 3.0 * sigma, "counts {counts:?}");
        }
    }

    #[test]
    fn support_marginal_inclusion_p64_k4() {
        let n = 30_000usize;
        let mut counts = vec![0usize; 64];
        for i in 0..n {
            let mut rng = substream(12, i as u64);
            for j in draw_support(64, 4, &mut rng).unwrap() {
                counts[j] += 1;
            }
        }
        let q = 4.0 / 64.0;
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - q).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn signed_uniform_moments_closed_form() {
        // independent quadrature oracle for E[alpha^2] on [1,3]:
        // trapezoid integration of u^2/(b-a)
        let (a, b) = (1.0f64, 3.0f64);
        let steps = 1_000_000;
        let h = (b - a) / steps as f64;
        let mut quad = 0.0;
        for i in 0..=steps {
            let u = a + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            quad += w * u * u * h / (b - a);
        }
        let model = su_model(8, 2, a, b);
        assert!((model.e_alpha_sq() - 13.0 / 3.0).abs() < 1e-12);
        assert!((model.e_alpha_sq() - quad).abs() < 1e-9);
        assert!((model.e_abs_alpha() - 2.0).abs() < 1e-12);

        // Monte Carlo cross-check within 3 standard errors
        let n = 1_000_000usize;
        let mut rng = master(5);
        let support = vec![0, 1];
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let alpha = draw_coefficients(&model, &support, &mut rng).unwrap();
            s1 += alpha[0].abs();
            s2 += alpha[0] * alpha[0];
        }
        let n_f = n as f64;
        let mean_abs = s1 / n_f;
        let mean_sq = s2 / n_f;
        // std of |alpha| on [1,3] is sqrt(1/3); std of alpha^2 is bounded by 4
        assert!((mean_abs - 2.0).abs() < 3.0 * (1.0f64 / 3.0).sqrt() / n_f.sqrt());
        assert!((mean_sq - 13.0 / 3.0).abs() < 3.0 * 4.0 / n_f.sqrt());
    }

    #[test]
    fn degenerate_flat_law_has_unit_kappa() {
        let model = su_model(8, 2, 1.0, 1.0);
        assert!((model.kappa_alpha() - 1.0).abs() < 1e-14);
        assert!((model.e_alpha_sq() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_profile_magnitudes_and_decorrelation() {
        let model = CoefficientModel::new(
            4,
            2,
            CoefficientLaw::FixedProfile {
                amplitudes: vec![1.0, 1.0],
            },
            NoiseSpec::None,
        )
        .unwrap();
        assert!((model.m_alpha() - 2.0f64.sqrt()).abs() < 1e-15);
        let n = 20_000usize;
        let mut rng = master(6);
        let mut cross = 0.0;
        for _ in 0..n {
            let alpha = draw_coefficients(&model, &[1, 2], &mut rng).unwrap();
            assert!((alpha[1].abs() - 1.0).abs() < 1e-15);
            assert!((alpha[2].abs() - 1.0).abs() < 1e-15);
            cross += alpha[1] * alpha[2];
        }
        // E[alpha_1 alpha_2] = 0, entries are +-1 so SE = 1/sqrt(n)
        assert!((cross / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn coefficient_support_mismatch_is_error() {
        let model = su_model(8, 3, 1.0, 2.0);
        let mut rng = master(7);
        assert!(draw_coefficients(&model, &[0, 1], &mut rng).is_err());
    }

    #[test]
    fn noiseless_batch_is_exact_and_isometric() {
        let d0 = Dictionary::identity(12);
        let model = su_model(12, 3, 1.0, 2.0);
        let batch = generate_batch(&d0, &model, 64, 99).unwrap();
        for i in 0..batch.n() {
            let residual =
                &batch.signals.column(i) - d0.entries() * batch.coefficients.column(i);
            assert!(residual.norm() == 0.0);
            // orthonormal dictionary: ||x|| = ||alpha|| exactly
            assert!(
                (batch.signals.column(i).norm() - batch.coefficients.column(i).norm()).abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn batch_invariants_hold() {
        let mut rng = master(13);
        let d0 = Dictionary::spherical(10, 20, &mut rng);
        let model = CoefficientModel::new(
            20,
            4,
            CoefficientLaw::SignedUniform {
                alpha_min: 0.5,
                alpha_max: 1.5,
            },
            NoiseSpec::TruncatedGaussian {
                sigma: 0.02,
                m_eps: 0.15,
            },
        )
        .unwrap();
        let batch = generate_batch(&d0, &model, 200, 7).unwrap();
        for i in 0..batch.n() {
            let alpha = batch.coefficients.column(i);
            let support = &batch.supports[i];
            assert_eq!(support.len(), 4);
            let nz: Vec<usize> = (0..20).filter(|&j| alpha[j] != 0.0).collect();
            assert_eq!(&nz, support);
            for &j in support {
                assert!(alpha[j].abs() >= 0.5);
                assert_eq!(batch.signs[i][j] as f64, alpha[j].signum());
            }
            assert!(alpha.norm() <= model.m_alpha() + 1e-12);
            let residual = &batch.signals.column(i) - d0.entries() * alpha;
            assert!(residual.norm() <= model.m_eps() + 1e-12);
        }
    }

    #[test]
    fn truncated_noise_respects_bound() {
        let spec = NoiseSpec::TruncatedGaussian {
            sigma: 0.01,
            m_eps: 0.05,
        };
        let mut max_norm: f64 = 0.0;
        for i in 0..100_000u64 {
            let mut rng = substream(21, i);
            let e = draw_noise(&spec, 16, &mut rng).unwrap();
            max_norm = max_norm.max(e.norm());
        }
        assert!(max_norm <= 0.05);
    }

    #[test]
    fn batches_are_bit_reproducible() {
        let mut rng = master(1);
        let d0 = Dictionary::spherical(8, 16, &mut rng);
        let model = su_model(16, 2, 1.0, 2.0);
        let a = generate_batch(&d0, &model, 50, 1234).unwrap();
        let b = generate_batch(&d0, &model, 50, 1234).unwrap();
        assert_eq!(a.signals.as_slice(), b.signals.as_slice());
        assert_eq!(a.coefficients.as_slice(), b.coefficients.as_slice());
        assert_eq!(a.supports, b.supports);
    }

    #[test]
    fn outlier_arithmetic_and_flags() {
        let d0 = Dictionary::identity(8);
        let model = su_model(8, 2, 1.0, 2.0);
        let batch = generate_batch(&d0, &model, 10, 3).unwrap();
        let same = inject_outliers(&batch, 0, 1.0, 3).unwrap();
        assert_eq!(same.n(), 10);
        let out = inject_outliers(&batch, 5, 2.0, 3).unwrap();
        assert_eq!(out.n_in, 10);
        assert_eq!(out.n_out, 5);
        assert!((out.outlier_frobenius_sq() - 20.0).abs() < 1e-12);
        assert!((out.outlier_l12() - 10.0).abs() < 1e-12);
        for i in 10..15 {
            assert!(!out.inlier_mask[i]);
            assert_eq!(out.coefficients.column(i).norm(), 0.0);
            assert!(out.supports[i].is_empty());
        }
    }

    #[test]
    fn whiteness_of_conditional_moments() {
        // fixed support, 1e5 draws; empirical conditional moments must match
        // the model within 5 standard errors entrywise
        let model = su_model(8, 3, 1.0, 3.0);
        let support = vec![1, 4, 6];
        let n = 100_000usize;
        let k = 3;
        let mut sum_aa = DMatrix::<f64>::zeros(k, k);
        let mut sum_aa2 = DMatrix::<f64>::zeros(k, k);
        let mut sum_ss = DMatrix::<f64>::zeros(k, k);
        let mut sum_as = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let mut rng = substream(31, i as u64);
            let alpha = draw_coefficients(&model, &support, &mut rng).unwrap();
            let a: Vec<f64> = support.iter().map(|&j| alpha[j]).collect();
            let s: Vec<f64> = a.iter().map(|v| v.signum()).collect();
            for r in 0..k {
                for c in 0..k {
                    sum_aa[(r, c)] += a[r] * a[c];
                    sum_aa2[(r, c)] += (a[r] * a[c]).powi(2);
                    sum_ss[(r, c)] += s[r] * s[c];
                    sum_as[(r, c)] += a[r] * s[c];
                }
            }
        }
        let n_f = n as f64;
        let e2 = model.e_alpha_sq();
        let e1 = model.e_abs_alpha();
        for r in 0..k {
            for c in 0..k {
                let mean_aa = sum_aa[(r, c)] / n_f;
                let var_aa = sum_aa2[(r, c)] / n_f - mean_aa * mean_aa;
                let se_aa = (var_aa / n_f).sqrt().max(1e-12);
                let target_aa = if r == c { e2 } else { 0.0 };
                assert!((mean_aa - target_aa).abs() <= 5.0 * se_aa, "coeff whiteness ({r},{c})");

                let mean_ss = sum_ss[(r, c)] / n_f;
                let target_ss = if r == c { 1.0 } else { 0.0 };
                let se_ss = (1.0 / n_f).sqrt();
                assert!((mean_ss - target_ss).abs() <= 5.0 * se_ss, "sign whiteness ({r},{c})");

                let mean_as = sum_as[(r, c)] / n_f;
                let target_as = if r == c { e1 } else { 0.0 };
                let se_as = (e2 / n_f).sqrt();
                assert!((mean_as - target_as).abs() <= 5.0 * se_as, "sign/coeff ({r},{c})");
            }
        }
    }

    #[test]
    fn batch_csv_has_one_signal_per_row() {
        let d0 = Dictionary::identity(4);
        let model = su_model(4, 1, 1.0, 1.0);
        let batch = generate_batch(&d0, &model, 3, 0).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "index,inlier,x_0,x_1,x_2,x_3");
    }
}
