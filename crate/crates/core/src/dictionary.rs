//! Dictionaries: matrices with unit-norm atoms (points of the oblique manifold).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Absolute tolerance on atom norms.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// An `m x p` real matrix whose columns (atoms) have unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    entries: DMatrix<f64>,
}

impl Dictionary {
    /// Wraps a matrix, checking dimensions and atom norms.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidInput(
                "dictionary must have at least one row and one column".into(),
            ));
        }
        for j in 0..entries.ncols() {
            let norm = entries.column(j).norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "atom {j} has norm {norm:.17}, not unit within {UNIT_NORM_TOL:e}"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Normalizes every column of `entries` and wraps the result.
    pub fn from_columns_normalized(mut entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidInput(
                "dictionary must have at least one row and one column".into(),
            ));
        }
        for j in 0..entries.ncols() {
            let norm = entries.column(j).norm();
            if norm < 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "atom {j} has numerically zero norm and cannot be normalized"
                )));
            }
            entries.column_mut(j).unscale_mut(norm);
        }
        Self::from_matrix(entries)
    }

    /// The identity dictionary (orthonormal, `p = m`).
    pub fn identity(m: usize) -> Self {
        Self {
            entries: DMatrix::identity(m, m),
        }
    }

    /// Union of the canonical basis and the orthonormal DCT-II basis
    /// (`p = 2m`), a maximally incoherent pair of orthonormal bases.
    pub fn onb_pair(m: usize) -> Self {
        let mut entries = DMatrix::zeros(m, 2 * m);
        for i in 0..m {
            entries[(i, i)] = 1.0;
        }
        let c0 = (1.0 / m as f64).sqrt();
        let cj = (2.0 / m as f64).sqrt();
        for j in 0..m {
            let scale = if j == 0 { c0 } else { cj };
            for i in 0..m {
                let angle =
                    std::f64::consts::PI * (2 * i + 1) as f64 * j as f64 / (2.0 * m as f64);
                entries[(i, m + j)] = scale * angle.cos();
            }
        }
        Self::from_columns_normalized(entries).expect("DCT columns are unit norm")
    }

    /// Draw from the spherical ensemble: i.i.d. Gaussian entries with
    /// normalized columns.
    pub fn spherical<R: Rng + ?Sized>(m: usize, p: usize, rng: &mut R) -> Self {
        loop {
            let entries = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Ok(d) = Self::from_columns_normalized(entries) {
                return d;
            }
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn atom(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.entries.column(j)
    }

    /// Concatenates the atoms indexed by `support` into an `m x |support|` matrix.
    pub fn atoms(&self, support: &[usize]) -> DMatrix<f64> {
        let m = self.nrows();
        let mut out = DMatrix::zeros(m, support.len());
        for (c, &j) in support.iter().enumerate() {
            out.column_mut(c).copy_from(&self.entries.column(j));
        }
        out
    }

    /// Gram matrix `D^T D`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.entries.tr_mul(&self.entries)
    }

    pub fn frobenius_distance(&self, other: &Dictionary) -> f64 {
        (&self.entries - &other.entries).norm()
    }

    /// Applies a signed permutation: column `j` of the result is
    /// `signs[j] * atom(perm[j])`. The result stays on the manifold.
    pub fn signed_permutation(&self, perm: &[usize], signs: &[f64]) -> Result<Self> {
        if perm.len() != self.ncols() || signs.len() != self.ncols() {
            return Err(Error::InvalidParameter(
                "permutation and sign lengths must equal the atom count".into(),
            ));
        }
        let mut entries = DMatrix::zeros(self.nrows(), self.ncols());
        for j in 0..self.ncols() {
            let src = self.entries.column(perm[j]);
            let mut dst = entries.column_mut(j);
            dst.copy_from(&src);
            dst.scale_mut(signs[j]);
        }
        Self::from_matrix(entries)
    }

    /// Reads a dictionary from plain CSV: `m` rows of `p` comma-separated
    /// entries, no header.
    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                trimmed.split(',').map(|v| v.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::InvalidInput(format!("bad CSV entry: {e}")))?);
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("empty dictionary file".into()));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged dictionary CSV".into()));
        }
        let m = rows.len();
        let entries = DMatrix::from_fn(m, p, |i, j| rows[i][j]);
        Self::from_matrix(entries)
    }

    /// Writes the dictionary as plain CSV (one signal-dimension row per line).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for i in 0..self.nrows() {
            let row: Vec<String> = (0..self.ncols())
                .map(|j| format!("{:.17e}", self.entries[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Builds a unit vector orthogonal to `d` from the first canonical basis
/// vector that is not parallel to `d`, Gram-Schmidt'ed against it.
pub(crate) fn canonical_orthogonal(d: &nalgebra::DVectorView<'_, f64>) -> DVector<f64> {
    let m = d.len();
    for i in 0..m {
        let dot = d[i]; // <e_i, d>
        if 1.0 - dot.abs() > 1e-8 {
            let mut w = DVector::zeros(m);
            w[i] = 1.0;
            w.axpy(-dot, &d.clone_owned(), 1.0);
            let norm = w.norm();
            w.unscale_mut(norm);
            return w;
        }
    }
    unreachable!("a unit vector cannot be parallel to every canonical basis vector");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn identity_and_pair_are_on_manifold() {
        let d = Dictionary::identity(6);
        assert_eq!((d.nrows(), d.ncols()), (6, 6));
        let pair = Dictionary::onb_pair(8);
        assert_eq!((pair.nrows(), pair.ncols()), (8, 16));
        for j in 0..16 {
            assert!((pair.atom(j).norm() - 1.0).abs() < UNIT_NORM_TOL);
        }
        // the DCT half is itself orthonormal
        let c = pair.atoms(&(8..16).collect::<Vec<_>>());
        let g = c.tr_mul(&c);
        assert!((g - DMatrix::identity(8, 8)).norm() < 1e-10);
    }

    #[test]
    fn from_matrix_rejects_non_unit_columns() {
        let bad = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(Dictionary::from_matrix(bad).is_err());
        let empty = DMatrix::<f64>::zeros(0, 0);
        assert!(Dictionary::from_matrix(empty).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = substream(3, 0);
        let d = Dictionary::spherical(5, 9, &mut rng);
        let dir = std::env::temp_dir().join("sparsid_dict_test.csv");
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        std::fs::write(&dir, &buf).unwrap();
        let back = Dictionary::read_csv(&dir).unwrap();
        assert!(d.frobenius_distance(&back) < 1e-14);
        std::fs::remove_file(&dir).ok();
    }

    #[test]
    fn canonical_orthogonal_is_orthogonal_unit() {
        let mut rng = substream(4, 0);
        let d = Dictionary::spherical(7, 3, &mut rng);
        for j in 0..3 {
            let w = canonical_orthogonal(&d.atom(j));
            assert!((w.norm() - 1.0).abs() < 1e-12);
            assert!(w.dot(&d.atom(j).clone_owned()).abs() < 1e-12);
        }
    }
}
