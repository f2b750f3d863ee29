//! Generalized Jacobians for the semismooth Newton method.
//!
//! For one fiber, the chosen element of the surrogate Jacobian of the fused
//! Lasso prox is `M = Diag(u) Q`, where `Q` averages over the maximal runs on
//! which the chain TV prox `x` is constant and `u` is the 0/1 mask
//! `|x_i| > lambda1`. Applying `M` therefore costs `O(L)` and no dense matrix
//! is ever formed. The log-det part contributes the Daleckii-Krein derivative
//! of `phi_plus` through a cached eigendecomposition.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{FglError, Result};
use crate::linalg::{EigenFactorization, MatrixCollection};
use crate::prox::{check_penalty, for_each_fiber, phi_plus_scalar, tv_chain};

/// One element of the surrogate Jacobian of the fused Lasso prox.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedProxJacobian {
    /// Start index of each consecutive block; the first entry is always 0.
    starts: Vec<usize>,
    upsilon: Vec<bool>,
}

impl FusedProxJacobian {
    /// The identity element: singleton blocks, full mask.
    pub fn identity(len: usize) -> Self {
        FusedProxJacobian { starts: (0..len).collect(), upsilon: vec![true; len] }
    }

    /// Builds the element from the chain TV prox `x` of a fiber.
    ///
    /// Blocks split wherever `x_i != x_{i+1}`; the mask keeps `|x_i| > lambda1`
    /// (ties at the kink map to 0).
    pub fn from_tv_solution(x: &[f64], lambda1: f64) -> Self {
        let mut starts = Vec::with_capacity(x.len());
        if !x.is_empty() {
            starts.push(0);
        }
        for i in 1..x.len() {
            if x[i] != x[i - 1] {
                starts.push(i);
            }
        }
        let upsilon = x.iter().map(|t| t.abs() > lambda1).collect();
        FusedProxJacobian { starts, upsilon }
    }

    pub fn len(&self) -> usize {
        self.upsilon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upsilon.is_empty()
    }

    pub fn upsilon(&self) -> &[bool] {
        &self.upsilon
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let n = self.len();
        self.starts
            .iter()
            .enumerate()
            .map(move |(b, &s)| s..self.starts.get(b + 1).copied().unwrap_or(n))
    }

    pub fn is_zero(&self) -> bool {
        self.upsilon.iter().all(|u| !u)
    }

    /// `out = Diag(u) * blockmean(w)`.
    pub fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.len());
        for block in self.blocks() {
            if !self.upsilon[block.start] {
                out[block].fill(0.0);
                continue;
            }
            let mean = w[block.clone()].iter().sum::<f64>() / block.len() as f64;
            for i in block {
                out[i] = if self.upsilon[i] { mean } else { 0.0 };
            }
        }
    }

    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.len() {
            return Err(FglError::Shape(format!(
                "fused Jacobian of length {} applied to a vector of length {}",
                self.len(),
                w.len()
            )));
        }
        let mut out = vec![0.0; w.len()];
        self.apply_into(w, &mut out);
        Ok(out)
    }

    /// Dense `L x L` form; for inspection and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for block in self.blocks() {
            let w = 1.0 / block.len() as f64;
            for i in block.clone() {
                if self.upsilon[i] {
                    for j in block.clone() {
                        m[(i, j)] = w;
                    }
                }
            }
        }
        m
    }
}

/// Surrogate Jacobian element of the fused Lasso prox at `v`.
pub fn fused_jacobian(v: &[f64], lambda1: f64, lambda2: f64) -> Result<FusedProxJacobian> {
    check_penalty(lambda1)?;
    check_penalty(lambda2)?;
    let mut x = vec![0.0; v.len()];
    tv_chain(v, lambda2, &mut x);
    Ok(FusedProxJacobian::from_tv_solution(&x, lambda1))
}

/// Jacobian elements for every off-diagonal fiber `i < j` of a collection;
/// diagonal fibers act as the identity.
#[derive(Debug, Clone)]
pub struct FglJacobian {
    p: usize,
    classes: usize,
    // Column-major order of the strict upper triangle: (0,1), (0,2), (1,2), ...
    entries: Vec<FusedProxJacobian>,
}

impl FglJacobian {
    fn slot(i: usize, j: usize) -> usize {
        j * (j - 1) / 2 + i
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Element for the pair `{i, j}`, `i != j`.
    pub fn get(&self, i: usize, j: usize) -> Option<&FusedProxJacobian> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a == b || b >= self.p {
            return None;
        }
        self.entries.get(Self::slot(a, b))
    }

    pub fn entries(&self) -> &[FusedProxJacobian] {
        &self.entries
    }

    /// Number of off-diagonal fibers with a nonzero element.
    pub fn active_fibers(&self) -> usize {
        self.entries.iter().filter(|e| !e.is_zero()).count()
    }

    /// `W[Y]`: fiberwise `M^(ij) Y_[ij]`, diagonals copied.
    pub fn apply(&self, y: &MatrixCollection) -> Result<MatrixCollection> {
        if y.dim() != self.p || y.len() != self.classes {
            return Err(FglError::Shape("FGL Jacobian applied to a mismatched collection".into()));
        }
        Ok(self.apply_unchecked(y))
    }

    pub(crate) fn apply_unchecked(&self, y: &MatrixCollection) -> MatrixCollection {
        let mut out = y.clone();
        let mut res = vec![0.0; self.classes];
        let mut k = 0;
        let mats = out.matrices_mut();
        for_each_fiber(y, |i, j, w| {
            let jac = &self.entries[k];
            k += 1;
            if jac.is_zero() {
                for m in mats.iter_mut() {
                    m[(i, j)] = 0.0;
                    m[(j, i)] = 0.0;
                }
                return;
            }
            jac.apply_into(w, &mut res);
            for (m, &r) in mats.iter_mut().zip(res.iter()) {
                m[(i, j)] = r;
                m[(j, i)] = r;
            }
        });
        out
    }
}

/// Surrogate Jacobian of `Prox_{sigma P}` at `U`, i.e. fiberwise elements
/// computed with penalties `sigma * lambda1`, `sigma * lambda2`.
pub fn fgl_jacobian(
    u: &MatrixCollection,
    sigma: f64,
    lambda1: f64,
    lambda2: f64,
) -> Result<FglJacobian> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FglError::NonPositive { name: "sigma", value: sigma });
    }
    check_penalty(lambda1)?;
    check_penalty(lambda2)?;
    let (l1, l2) = (sigma * lambda1, sigma * lambda2);
    let p = u.dim();
    let mut entries = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    let mut x = vec![0.0; u.len()];
    for_each_fiber(u, |_, _, v| {
        tv_chain(v, l2, &mut x);
        entries.push(FusedProxJacobian::from_tv_solution(&x, l1));
    });
    Ok(FglJacobian { p, classes: u.len(), entries })
}

/// Eigendecomposition of `A` with the first divided-difference matrix of
/// `phi_plus_beta` on its spectrum.
#[derive(Debug, Clone)]
pub struct PhiDerivativeCache {
    pub eig: EigenFactorization,
    pub gamma: DMatrix<f64>,
}

impl PhiDerivativeCache {
    pub fn new(eig: EigenFactorization, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(FglError::NonPositive { name: "beta", value: beta });
        }
        let p = eig.dim();
        let two_root = 2.0 * beta.sqrt();
        let plus: Vec<f64> = eig.values.iter().map(|&d| phi_plus_scalar(d, beta)).collect();
        let root: Vec<f64> = eig.values.iter().map(|&d| d.hypot(two_root)).collect();
        let gamma = DMatrix::from_fn(p, p, |i, j| (plus[i] + plus[j]) / (root[i] + root[j]));
        Ok(PhiDerivativeCache { eig, gamma })
    }

    pub fn dim(&self) -> usize {
        self.eig.dim()
    }

    pub(crate) fn apply_unchecked(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let inner = self.eig.to_eigenbasis(b).component_mul(&self.gamma);
        self.eig.from_eigenbasis(&inner)
    }
}

/// Directional derivative `(phi_plus_beta)'(A)[B] = Q (Gamma o (Q^T B Q)) Q^T`.
pub fn phi_plus_dderiv(cache: &PhiDerivativeCache, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = cache.dim();
    if b.nrows() != p || b.ncols() != p {
        return Err(FglError::Shape(format!(
            "derivative direction is {}x{}, expected {p}x{p}",
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(cache.apply_unchecked(b))
}

/// Work done by one [`NewtonOperator`] application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    /// Fiber entries touched by the FGL Jacobian, `L * p (p - 1) / 2`.
    pub fiber_entries: usize,
    /// Dense `Q^T (.) Q` and `Q (.) Q^T` products, two per class.
    pub congruences: usize,
}

/// The Newton map `D -> (V - I / sigma)[D]` with
/// `V[D] = -sigma W[D] - sigma ((phi_plus_sigma)'(W^(l))[D^(l)])_l`.
#[derive(Debug, Clone)]
pub struct NewtonOperator {
    pub fgl_jac: FglJacobian,
    pub phi_caches: Vec<PhiDerivativeCache>,
    pub sigma: f64,
}

impl NewtonOperator {
    pub fn new(fgl_jac: FglJacobian, phi_caches: Vec<PhiDerivativeCache>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FglError::NonPositive { name: "sigma", value: sigma });
        }
        if phi_caches.len() != fgl_jac.classes() || phi_caches.iter().any(|c| c.dim() != fgl_jac.dim()) {
            return Err(FglError::Shape("Newton operator parts disagree on (p, L)".into()));
        }
        Ok(NewtonOperator { fgl_jac, phi_caches, sigma })
    }

    pub fn dim(&self) -> usize {
        self.fgl_jac.dim()
    }

    pub fn classes(&self) -> usize {
        self.fgl_jac.classes()
    }

    pub fn apply_with_stats(&self, d: &MatrixCollection) -> Result<(MatrixCollection, ApplyStats)> {
        if d.dim() != self.dim() || d.len() != self.classes() {
            return Err(FglError::Shape("Newton operator applied to a mismatched collection".into()));
        }
        let sigma = self.sigma;
        let mut out = self.fgl_jac.apply_unchecked(d);
        let mut stats = ApplyStats {
            fiber_entries: self.fgl_jac.entries().len() * self.classes(),
            congruences: 0,
        };
        for ((o, cache), dl) in out.matrices_mut().iter_mut().zip(&self.phi_caches).zip(d.iter()) {
            let deriv = cache.apply_unchecked(dl);
            stats.congruences += 2;
            // o = -sigma * W[D] - sigma * phi'(D) - D / sigma
            *o *= -sigma;
            o.zip_apply(&deriv, |x, y| *x -= sigma * y);
            o.zip_apply(dl, |x, y| *x -= y / sigma);
        }
        Ok((out, stats))
    }
}

/// `(V - I / sigma)[D]`.
pub fn newton_apply(op: &NewtonOperator, d: &MatrixCollection) -> Result<MatrixCollection> {
    op.apply_with_stats(d).map(|(out, _)| out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, symmetrize};
    use crate::prox::{phi_plus, prox_fgl};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Dense Diag(u) (I - B^T (S_K B B^T S_K)^+ B) by explicit pseudo-inverse.
    fn pinv_oracle(v: &[f64], l1: f64, l2: f64) -> DMatrix<f64> {
        let n = v.len();
        let mut x = vec![0.0; n];
        tv_chain(v, l2, &mut x);
        let b = DMatrix::from_fn(n - 1, n, |r, c| {
            if c == r {
                1.0
            } else if c == r + 1 {
                -1.0
            } else {
                0.0
            }
        });
        let sigma_k = DMatrix::from_fn(n - 1, n - 1, |r, c| {
            if r == c && x[r] == x[r + 1] { 1.0 } else { 0.0 }
        });
        let inner = &sigma_k * &b * b.transpose() * &sigma_k;
        let q_hat = inner.pseudo_inverse(1e-12).unwrap();
        let q = DMatrix::identity(n, n) - b.transpose() * q_hat * &b;
        let ups = DMatrix::from_fn(n, n, |r, c| {
            if r == c && x[r].abs() > l1 { 1.0 } else { 0.0 }
        });
        ups * q
    }

    #[test]
    fn no_fusion_no_kill_is_identity() {
        let j = fused_jacobian(&[1.0, -2.0, 3.0, 0.7], 0.5, 0.0).unwrap();
        assert_eq!(j, FusedProxJacobian::identity(4));
        assert_eq!(j.to_dense(), DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn full_shrinkage_is_zero() {
        let v = [0.4, -1.0, 0.9];
        let l2 = 0.3;
        let j = fused_jacobian(&v, 1.0 + 2.0 * l2, l2).unwrap();
        assert!(j.is_zero());
        assert_eq!(j.to_dense(), DMatrix::<f64>::zeros(3, 3));
    }

    #[test]
    fn single_block_averages() {
        let j = FusedProxJacobian::from_tv_solution(&[2.0; 4], 0.5);
        let w = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(j.apply(&w).unwrap(), vec![3.0; 4]);
        assert_eq!(FusedProxJacobian::identity(4).apply(&w).unwrap(), w.to_vec());
        assert!(j.apply(&[1.0]).is_err());
    }

    #[test]
    fn dense_form_matches_pinv_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..300 {
            let n = rng.random_range(2..=6);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (l1, l2) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let j = fused_jacobian(&v, l1, l2).unwrap();
            let err = (j.to_dense() - pinv_oracle(&v, l1, l2)).amax();
            assert!(err <= 1e-10, "err {err}");
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dense = j.to_dense() * nalgebra::DVector::from_vec(w.clone());
            let fast = j.apply(&w).unwrap();
            for (a, b) in dense.iter().zip(&fast) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dense_form_is_psd_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let j = fused_jacobian(&v, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)).unwrap();
            let m = j.to_dense();
            assert!((&m - m.transpose()).amax() < 1e-15);
            let eig = sym_eig(&m).unwrap();
            assert!(eig.values.iter().all(|&d| d > -1e-12 && d < 1.0 + 1e-12));
        }
    }

    #[test]
    fn fgl_jacobian_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let u = MatrixCollection::from_fn(5, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let y = MatrixCollection::from_fn(5, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let id = fgl_jacobian(&u, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(id.apply(&y).unwrap(), y);
        let kill = fgl_jacobian(&u, 1.0, 100.0, 0.0).unwrap();
        let out = kill.apply(&y).unwrap();
        for l in 0..3 {
            for i in 0..5 {
                for j in 0..5 {
                    let want = if i == j { y[l][(i, j)] } else { 0.0 };
                    assert_eq!(out[l][(i, j)], want);
                }
            }
        }
        assert_eq!(kill.active_fibers(), 0);
        assert!(fgl_jacobian(&u, 0.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn dderiv_trivial_cases() {
        let cache = PhiDerivativeCache::new(sym_eig(&DMatrix::zeros(3, 3)).unwrap(), 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let mut b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&mut b);
        assert!((phi_plus_dderiv(&cache, &b).unwrap() - &b * 0.5).amax() < 1e-15);
        assert_eq!(phi_plus_dderiv(&cache, &DMatrix::zeros(3, 3)).unwrap(), DMatrix::<f64>::zeros(3, 3));
        assert!(phi_plus_dderiv(&cache, &DMatrix::zeros(2, 2)).is_err());
        assert!(cache.gamma.iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn dderiv_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let p = 6;
        let mut a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-2.0..2.0));
        symmetrize(&mut a);
        let mut b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&mut b);
        let beta = 0.8;
        let cache = PhiDerivativeCache::new(sym_eig(&a).unwrap(), beta).unwrap();
        let deriv = phi_plus_dderiv(&cache, &b).unwrap();
        for &t in &[1e-4, 1e-5, 1e-6] {
            let fp = phi_plus(&sym_eig(&(&a + &b * t)).unwrap(), beta).unwrap();
            let fm = phi_plus(&sym_eig(&(&a - &b * t)).unwrap(), beta).unwrap();
            let fd = (fp - fm) / (2.0 * t);
            assert!((fd - &deriv).norm() <= t, "t={t}");
        }
    }

    #[test]
    fn linearization_is_exact_within_a_piece() {
        // Piecewise-affine prox: away from breakpoints the Jacobian predicts
        // the change exactly, up to rounding.
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let (sigma, l1, l2) = (1.3, 0.2, 0.15);
        let u = MatrixCollection::from_fn(4, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let jac = fgl_jacobian(&u, sigma, l1, l2).unwrap();
        let base = prox_fgl(&u, sigma * l1, sigma * l2).unwrap();
        let delta = MatrixCollection::from_fn(4, 3, |_, _, _| 1e-9 * rng.random_range(-1.0..1.0));
        let moved = prox_fgl(&(&u + &delta), sigma * l1, sigma * l2).unwrap();
        let resid = &(&moved - &base) - &jac.apply(&delta).unwrap();
        assert!(resid.norm() <= 1e-14);
    }
}
