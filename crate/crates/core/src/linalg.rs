//! Dense symmetric linear algebra shared by every solver component.
//!
//! [`MatrixCollection`] is the container for the `L`-tuples of `p x p`
//! symmetric matrices that make up primal variables, dual variables,
//! covariances and Newton directions. Every constructor symmetrizes its input
//! so round-off asymmetry never reaches an eigensolver.

use std::ops::{Add, Deref, Index, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{FglError, Result};

/// An ordered list of `L` symmetric `p x p` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCollection {
    mats: Vec<DMatrix<f64>>,
    p: usize,
}

/// The cross-matrix fiber `(X^(1)_ij, ..., X^(L)_ij)` at one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryVector(pub Vec<f64>);

impl Deref for EntryVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for EntryVector {
    fn from(v: Vec<f64>) -> Self {
        EntryVector(v)
    }
}

/// `(A + A^T) / 2` in place.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

impl MatrixCollection {
    /// Builds a collection, checking shapes and symmetrizing every matrix.
    pub fn new(mut mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = match mats.first() {
            Some(m) => m.nrows(),
            None => return Err(FglError::InvalidInput("empty matrix collection".into())),
        };
        for (l, m) in mats.iter_mut().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(FglError::Shape(format!(
                    "matrix {l} is {}x{}, expected {p}x{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            symmetrize(m);
        }
        Ok(MatrixCollection { mats, p })
    }

    /// Internal constructor for matrices that are symmetric by construction.
    pub(crate) fn from_symmetric(mats: Vec<DMatrix<f64>>, p: usize) -> Self {
        debug_assert!(mats.iter().all(|m| m.nrows() == p && m.ncols() == p));
        MatrixCollection { mats, p }
    }

    pub fn zeros(p: usize, l: usize) -> Self {
        MatrixCollection { mats: vec![DMatrix::zeros(p, p); l], p }
    }

    pub fn identity(p: usize, l: usize) -> Self {
        MatrixCollection { mats: vec![DMatrix::identity(p, p); l], p }
    }

    /// `f(l, i, j)` is evaluated for the upper triangle and mirrored.
    pub fn from_fn(p: usize, l: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mats = (0..l)
            .map(|k| {
                let mut m = DMatrix::zeros(p, p);
                for j in 0..p {
                    for i in 0..=j {
                        let v = f(k, i, j);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                m
            })
            .collect();
        MatrixCollection { mats, p }
    }

    /// Matrix dimension `p`.
    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of matrices `L`.
    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn into_matrices(self) -> Vec<DMatrix<f64>> {
        self.mats
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DMatrix<f64>> {
        self.mats.iter()
    }

    pub(crate) fn matrices_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.mats
    }

    pub fn same_shape(&self, other: &MatrixCollection) -> bool {
        self.p == other.p && self.mats.len() == other.mats.len()
    }

    pub(crate) fn check_shape(&self, other: &MatrixCollection, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(FglError::Shape(format!(
                "{what}: collections of (p, L) = ({}, {}) and ({}, {})",
                self.p,
                self.len(),
                other.p,
                other.len()
            )))
        }
    }

    /// Frobenius norm over the whole collection.
    pub fn norm(&self) -> f64 {
        self.mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    /// Sum of Frobenius inner products; panics on shape mismatch.
    pub fn dot(&self, other: &MatrixCollection) -> f64 {
        assert!(self.same_shape(other), "collection shape mismatch");
        self.mats.iter().zip(&other.mats).map(|(a, b)| a.dot(b)).sum()
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &MatrixCollection) {
        assert!(self.same_shape(x), "collection shape mismatch");
        for (a, b) in self.mats.iter_mut().zip(&x.mats) {
            a.zip_apply(b, |x, y| *x += alpha * y);
        }
    }

    pub fn scale_mut(&mut self, alpha: f64) {
        for m in &mut self.mats {
            *m *= alpha;
        }
    }

    pub fn fiber(&self, i: usize, j: usize) -> Result<EntryVector> {
        if i >= self.p || j >= self.p {
            return Err(FglError::IndexOutOfRange { i, j, p: self.p });
        }
        Ok(EntryVector(self.mats.iter().map(|m| m[(i, j)]).collect()))
    }

    /// Writes `v` into entries `(i, j)` and `(j, i)` of every matrix.
    pub fn set_fiber(&mut self, i: usize, j: usize, v: &[f64]) -> Result<()> {
        if i >= self.p || j >= self.p {
            return Err(FglError::IndexOutOfRange { i, j, p: self.p });
        }
        if v.len() != self.len() {
            return Err(FglError::Shape(format!(
                "fiber of length {} for a collection of {} matrices",
                v.len(),
                self.len()
            )));
        }
        for (m, &x) in self.mats.iter_mut().zip(v) {
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
        Ok(())
    }

    /// Largest absolute entry over all matrices.
    pub fn max_abs(&self) -> f64 {
        self.mats.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Reverses the order of the matrices.
    pub fn reversed(&self) -> MatrixCollection {
        MatrixCollection { mats: self.mats.iter().rev().cloned().collect(), p: self.p }
    }
}

impl Index<usize> for MatrixCollection {
    type Output = DMatrix<f64>;

    fn index(&self, l: usize) -> &DMatrix<f64> {
        &self.mats[l]
    }
}

impl<'a> Add<&'a MatrixCollection> for &'a MatrixCollection {
    type Output = MatrixCollection;

    fn add(self, rhs: &MatrixCollection) -> MatrixCollection {
        assert!(self.same_shape(rhs), "collection shape mismatch");
        let mats = self.mats.iter().zip(&rhs.mats).map(|(a, b)| a + b).collect();
        MatrixCollection { mats, p: self.p }
    }
}

impl<'a> Sub<&'a MatrixCollection> for &'a MatrixCollection {
    type Output = MatrixCollection;

    fn sub(self, rhs: &MatrixCollection) -> MatrixCollection {
        assert!(self.same_shape(rhs), "collection shape mismatch");
        let mats = self.mats.iter().zip(&rhs.mats).map(|(a, b)| a - b).collect();
        MatrixCollection { mats, p: self.p }
    }
}

impl Mul<f64> for &MatrixCollection {
    type Output = MatrixCollection;

    fn mul(self, alpha: f64) -> MatrixCollection {
        MatrixCollection { mats: self.mats.iter().map(|m| m * alpha).collect(), p: self.p }
    }
}

/// `sum_l <X^(l), Y^(l)>`.
pub fn collection_inner(x: &MatrixCollection, y: &MatrixCollection) -> Result<f64> {
    x.check_shape(y, "collection_inner")?;
    Ok(x.dot(y))
}

/// Orthogonal eigenvectors and descending eigenvalues of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenFactorization {
    /// Eigenvectors stored column-wise, matching `values`.
    pub vectors: DMatrix<f64>,
    /// Non-increasing eigenvalues.
    pub values: DVector<f64>,
}

impl EigenFactorization {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `Q Diag(f(d_1), ..., f(d_p)) Q^T`, symmetrized.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, &d) in self.values.iter().enumerate() {
            let s = f(d);
            scaled.column_mut(k).scale_mut(s);
        }
        let mut out = scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }

    /// `Q^T B Q`
    pub fn to_eigenbasis(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.vectors.tr_mul(b) * &self.vectors
    }

    /// `Q C Q^T`, symmetrized.
    pub fn from_eigenbasis(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.vectors * c * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.spectral_map(|d| d)
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenFactorization> {
    if a.nrows() != a.ncols() {
        return Err(FglError::Shape(format!("sym_eig on a {}x{} matrix", a.nrows(), a.ncols())));
    }
    if !a.iter().all(|x| x.is_finite()) {
        return Err(FglError::NonFinite("sym_eig input"));
    }
    let p = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenFactorization { vectors, values })
}

/// Smallest eigenvalue test with a scale-aware threshold.
pub fn is_positive_definite(f: &EigenFactorization) -> bool {
    let n = f.dim();
    if n == 0 {
        return true;
    }
    let top = f.values[0];
    f.values[n - 1] > 1e-12 * top.max(1.0)
}
