//! Per-atom angular parametrization of the oblique manifold and sampling on
//! Frobenius spheres around a reference dictionary.
//!
//! Any two unit-norm dictionaries `D1`, `D2` are related column-wise by
//! `d2_j = cos(theta_j) d1_j + sin(theta_j) w_j` with `w_j` a unit vector
//! orthogonal to `d1_j` and `theta_j` in `[0, pi]`. Per atom,
//! `||d2_j - d1_j|| = 2 sin(theta_j / 2)`, so the Frobenius distance is a
//! monotone scalar function of a scaled angle vector; sphere sampling reduces
//! to one-dimensional root finding.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dictionary::{canonical_orthogonal, Dictionary, UNIT_NORM_TOL};
use crate::error::{Error, Result};

/// Angular decomposition of a dictionary relative to a base dictionary.
#[derive(Debug, Clone)]
pub struct SphereDecomposition {
    /// Per-atom angles in `[0, pi]`.
    pub theta: DVector<f64>,
    /// Unit columns, column `j` orthogonal to base atom `j`.
    pub w: DMatrix<f64>,
}

impl SphereDecomposition {
    /// Validates the defining invariants against the base dictionary.
    pub fn new(base: &Dictionary, theta: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        let p = base.ncols();
        if theta.len() != p || w.ncols() != p || w.nrows() != base.nrows() {
            return Err(Error::InvalidInput(
                "decomposition dimensions do not match the base dictionary".into(),
            ));
        }
        for j in 0..p {
            if !(0.0..=std::f64::consts::PI + 1e-12).contains(&theta[j]) {
                return Err(Error::InvalidInput(format!("angle {j} outside [0, pi]")));
            }
            if (w.column(j).norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!("w column {j} not unit norm")));
            }
            if w.column(j).dot(&base.atom(j)).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "w column {j} not orthogonal to base atom"
                )));
            }
        }
        Ok(Self { theta, w })
    }

    /// Geodesic-coordinate norm `||theta||_2`.
    pub fn theta_norm(&self) -> f64 {
        self.theta.norm()
    }
}

/// Decomposes `d2` relative to `d1`: angles `theta_j = arccos <d1_j, d2_j>`
/// and unit directions `w_j` orthogonal to `d1_j` with `sin(theta_j) >= 0`.
///
/// When `theta_j` is 0 or pi the direction is undetermined; it is filled with
/// a deterministic unit vector orthogonal to `d1_j` so decompositions are
/// reproducible.
pub fn decompose(d1: &Dictionary, d2: &Dictionary) -> Result<SphereDecomposition> {
    if d1.nrows() != d2.nrows() || d1.ncols() != d2.ncols() {
        return Err(Error::InvalidInput("dictionaries must share a shape".into()));
    }
    let (m, p) = (d1.nrows(), d1.ncols());
    let mut theta = DVector::zeros(p);
    let mut w = DMatrix::zeros(m, p);
    for j in 0..p {
        let a = d1.atom(j);
        let b = d2.atom(j);
        let cos = a.dot(&b).clamp(-1.0, 1.0);
        // component of d2_j orthogonal to d1_j
        let mut v = b.clone_owned();
        v.axpy(-cos, &a.clone_owned(), 1.0);
        let norm = v.norm();
        // atan2 keeps the angle accurate near 0 and pi, where acos degrades
        theta[j] = norm.atan2(cos);
        if norm > 1e-9 {
            v.unscale_mut(norm);
            // a second orthogonalization pass: dividing by a tiny norm
            // amplifies the rounding of the first projection
            v.axpy(-v.dot(&a.clone_owned()), &a.clone_owned(), 1.0);
            let norm2 = v.norm();
            v.unscale_mut(norm2);
            w.column_mut(j).copy_from(&v);
        } else {
            w.column_mut(j).copy_from(&canonical_orthogonal(&a));
        }
    }
    SphereDecomposition::new(d1, theta, w)
}

/// Rebuilds `D2 = D1 Diag(cos theta) + W Diag(sin theta)`.
///
/// Columns are unit norm by construction (`cos^2 + sin^2 = 1` with
/// orthogonal parts), so no renormalization is applied.
pub fn reconstruct(d1: &Dictionary, dec: &SphereDecomposition) -> Result<Dictionary> {
    let (m, p) = (d1.nrows(), d1.ncols());
    if dec.theta.len() != p || dec.w.ncols() != p || dec.w.nrows() != m {
        return Err(Error::InvalidInput(
            "decomposition dimensions do not match the base dictionary".into(),
        ));
    }
    let mut entries = DMatrix::zeros(m, p);
    for j in 0..p {
        let (sin, cos) = dec.theta[j].sin_cos();
        let mut col = entries.column_mut(j);
        col.copy_from(&d1.atom(j));
        col.scale_mut(cos);
        col.axpy(sin, &dec.w.column(j).clone_owned(), 1.0);
    }
    Dictionary::from_matrix(entries)
}

/// Frobenius distance induced by clamped angles `t * u`.
fn radius_at(t: f64, u: &DVector<f64>) -> f64 {
    let mut sq = 0.0;
    for &uj in u.iter() {
        let angle = (t * uj).clamp(0.0, std::f64::consts::PI);
        let s = (0.5 * angle).sin();
        sq += 4.0 * s * s;
    }
    sq.sqrt()
}

/// Samples a unit-norm dictionary at exact Frobenius distance `r` from `d0`.
///
/// Draws random orthogonal unit directions `W`, a nonnegative direction `u`
/// on the unit sphere of angle space, and bisects the scale `t` so that
/// `||D(clamp(t u)) - d0||_F = r`. The construction stays on the manifold
/// exactly; only the radius is solved numerically (to 1e-12).
pub fn sample_sphere<R: Rng + ?Sized>(d0: &Dictionary, r: f64, rng: &mut R) -> Result<Dictionary> {
    let p = d0.ncols();
    let max_r = 2.0 * (p as f64).sqrt();
    if !(r > 0.0) {
        return Err(Error::InfeasibleRadius {
            radius: r,
            reason: "radius must be positive".into(),
        });
    }
    if r > max_r {
        return Err(Error::InfeasibleRadius {
            radius: r,
            reason: format!("sphere is empty beyond 2*sqrt(p) = {max_r}"),
        });
    }
    if r >= max_r * (1.0 - 1e-12) {
        // the sphere degenerates to the single point -d0
        return Dictionary::from_matrix(-d0.entries().clone());
    }
    let m = d0.nrows();

    // unit directions orthogonal to each base atom
    let mut w = DMatrix::zeros(m, p);
    for j in 0..p {
        loop {
            let mut g = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a = d0.atom(j).clone_owned();
            g.axpy(-g.dot(&a), &a, 1.0);
            let norm = g.norm();
            if norm > 1e-9 {
                g.unscale_mut(norm);
                w.column_mut(j).copy_from(&g);
                break;
            }
        }
    }

    // nonnegative direction on the angle sphere
    let mut u = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal).abs());
    let norm = u.norm();
    if norm < 1e-12 {
        u.fill(1.0 / (p as f64).sqrt());
    } else {
        u.unscale_mut(norm);
    }
    let u_min_pos = u
        .iter()
        .cloned()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);

    // bracket: radius_at is nondecreasing in t and saturates at 2 sqrt(p)
    let mut lo = 0.0f64;
    let mut hi = std::f64::consts::PI / u_min_pos.max(1e-300);
    if radius_at(hi, &u) < r {
        hi = hi.max(1.0);
        while radius_at(hi, &u) < r {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::InfeasibleRadius {
                    radius: r,
                    reason: "bisection failed to bracket the radius".into(),
                });
            }
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        t = 0.5 * (lo + hi);
        let rho = radius_at(t, &u);
        if (rho - r).abs() <= 1e-12 {
            break;
        }
        if rho < r {
            lo = t;
        } else {
            hi = t;
        }
    }

    let theta = DVector::from_fn(p, |j, _| (t * u[j]).clamp(0.0, std::f64::consts::PI));
    let dec = SphereDecomposition { theta, w };
    reconstruct(d0, &dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    #[test]
    fn identity_decomposition_is_zero() {
        let mut rng = substream(50, 0);
        let d = Dictionary::spherical(6, 4, &mut rng);
        let dec = decompose(&d, &d).unwrap();
        assert!(dec.theta.norm() < 1e-7);
        let back = reconstruct(&d, &dec).unwrap();
        assert!(d.frobenius_distance(&back) < 1e-12);
    }

    #[test]
    fn antipodal_atom_gets_angle_pi() {
        let mut rng = substream(51, 0);
        let d1 = Dictionary::spherical(5, 3, &mut rng);
        let mut entries = d1.entries().clone();
        entries.column_mut(1).neg_mut();
        let d2 = Dictionary::from_matrix(entries).unwrap();
        let dec = decompose(&d1, &d2).unwrap();
        assert!((dec.theta[1] - std::f64::consts::PI).abs() < 1e-12);
        let back = reconstruct(&d1, &dec).unwrap();
        assert!(d2.frobenius_distance(&back) < 1e-12);
    }

    #[test]
    fn geometry_inequalities_random_pairs() {
        for seed in 0..200u64 {
            let mut rng = substream(1000 + seed, 0);
            let d1 = Dictionary::spherical(8, 5, &mut rng);
            let d2 = Dictionary::spherical(8, 5, &mut rng);
            let dec = decompose(&d1, &d2).unwrap();
            let dist = d1.frobenius_distance(&d2);
            let tn = dec.theta_norm();
            assert!(2.0 / std::f64::consts::PI * tn <= dist + 1e-12);
            assert!(dist <= tn + 1e-12);
            for j in 0..5 {
                let per_atom = (d2.atom(j) - d1.atom(j)).norm();
                assert!((per_atom - 2.0 * (dec.theta[j] / 2.0).sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quarter_turn_column_equals_w() {
        let mut rng = substream(52, 0);
        let d1 = Dictionary::spherical(6, 3, &mut rng);
        let mut dec = decompose(&d1, &d1).unwrap();
        for j in 0..3 {
            dec.w.column_mut(j).copy_from(&canonical_orthogonal(&d1.atom(j)));
        }
        dec.theta[1] = std::f64::consts::FRAC_PI_2;
        let d2 = reconstruct(&d1, &dec).unwrap();
        assert!((d2.atom(1) - dec.w.column(1)).norm() < 1e-12);
    }

    #[test]
    fn sampler_hits_radius_and_manifold() {
        let mut rng = substream(53, 0);
        let d0 = Dictionary::spherical(16, 32, &mut rng);
        for i in 0..1000 {
            let mut srng = substream(54, i);
            let d = sample_sphere(&d0, 0.1, &mut srng).unwrap();
            assert!((d.frobenius_distance(&d0) - 0.1).abs() <= 1e-10);
        }
    }

    #[test]
    fn sampler_continuity_near_zero_and_full_flip() {
        let mut rng = substream(55, 0);
        let d0 = Dictionary::spherical(8, 6, &mut rng);
        let near = sample_sphere(&d0, 1e-8, &mut rng).unwrap();
        assert!(d0.frobenius_distance(&near) < 2e-8);

        // r = 2 sqrt(p): the sphere collapses to -d0
        let p = d0.ncols() as f64;
        let flip = sample_sphere(&d0, 2.0 * p.sqrt(), &mut rng).unwrap();
        let neg = Dictionary::from_matrix(-d0.entries().clone()).unwrap();
        assert!(flip.frobenius_distance(&neg) < 1e-6);

        assert!(sample_sphere(&d0, 2.0 * p.sqrt() + 0.1, &mut rng).is_err());
        assert!(sample_sphere(&d0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn sampled_columns_are_unit_without_renormalization() {
        let mut rng = substream(56, 0);
        let d0 = Dictionary::spherical(10, 20, &mut rng);
        let d = sample_sphere(&d0, 0.7, &mut rng).unwrap();
        for j in 0..20 {
            assert!((d.atom(j).norm() - 1.0).abs() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn roundtrip_decompose_reconstruct(seed in 0u64..5000) {
            let mut rng = substream(seed, 3);
            let d1 = Dictionary::spherical(7, 4, &mut rng);
            let d2 = Dictionary::spherical(7, 4, &mut rng);
            let dec = decompose(&d1, &d2).unwrap();
            let back = reconstruct(&d1, &dec).unwrap();
            prop_assert!(d2.frobenius_distance(&back) < 1e-12);
        }

        #[test]
        fn sampler_radius_exact_random(seed in 0u64..5000, r_scale in 0.01f64..1.9) {
            let mut rng = substream(seed, 4);
            let d0 = Dictionary::spherical(5, 6, &mut rng);
            let r = r_scale * (6f64).sqrt();
            let d = sample_sphere(&d0, r, &mut rng).unwrap();
            prop_assert!((d.frobenius_distance(&d0) - r).abs() <= 1e-10);
        }
    }
}
