//! Prox and Moreau envelope of `beta * (-log det)`.
//!
//! `phi_plus_beta(x) = (sqrt(x^2 + 4 beta) + x) / 2` and
//! `phi_minus_beta(x) = (sqrt(x^2 + 4 beta) - x) / 2`, lifted to symmetric
//! matrices through the eigenvalues.

use nalgebra::DMatrix;

use crate::error::{FglError, Result};
use crate::linalg::EigenFactorization;

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(FglError::NonPositive { name: "beta", value: beta })
    }
}

/// Scalar `phi_plus`, evaluated without cancellation for negative `x`.
#[inline]
pub fn phi_plus_scalar(x: f64, beta: f64) -> f64 {
    let r = x.hypot(2.0 * beta.sqrt());
    if x >= 0.0 {
        0.5 * (r + x)
    } else {
        2.0 * beta / (r - x)
    }
}

#[inline]
pub fn phi_minus_scalar(x: f64, beta: f64) -> f64 {
    phi_plus_scalar(-x, beta)
}

/// `phi_plus_beta(A)`: the prox of `-beta log det` at `A`.
pub fn phi_plus(f: &EigenFactorization, beta: f64) -> Result<DMatrix<f64>> {
    check_beta(beta)?;
    Ok(f.spectral_map(|d| phi_plus_scalar(d, beta)))
}

pub fn phi_minus(f: &EigenFactorization, beta: f64) -> Result<DMatrix<f64>> {
    check_beta(beta)?;
    Ok(f.spectral_map(|d| phi_minus_scalar(d, beta)))
}

/// `min_{X > 0} -beta log det X + 0.5 |X - A|^2`, from the eigenvalues of `A`.
pub fn moreau_env_logdet(f: &EigenFactorization, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(f.values
        .iter()
        .map(|&d| {
            let m = phi_minus_scalar(d, beta);
            -beta * phi_plus_scalar(d, beta).ln() + 0.5 * m * m
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, symmetrize};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> DMatrix<f64> {
        let mut a = DMatrix::from_fn(p, p, |_, _| scale * rng.random_range(-1.0..1.0));
        symmetrize(&mut a);
        a
    }

    #[test]
    fn zero_matrix_maps_to_identity() {
        let f = sym_eig(&DMatrix::zeros(3, 3)).unwrap();
        let x = phi_plus(&f, 1.0).unwrap();
        assert!((x - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn diagonal_closed_form() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -3.0]));
        let x = phi_plus(&sym_eig(&a).unwrap(), 1.0).unwrap();
        let s = 13f64.sqrt();
        assert!((x[(0, 0)] - (s + 3.0) / 2.0).abs() < 1e-14);
        assert!((x[(1, 1)] - (s - 3.0) / 2.0).abs() < 1e-14);
        assert_eq!(x[(0, 1)], 0.0);
    }

    #[test]
    fn stable_for_large_negative_eigenvalues() {
        let v = phi_plus_scalar(-1e9, 2.0);
        assert!(v > 0.0);
        assert!((v * 1e9 / 2.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_beta() {
        let f = sym_eig(&DMatrix::identity(2, 2)).unwrap();
        assert!(phi_plus(&f, 0.0).is_err());
        assert!(phi_minus(&f, -1.0).is_err());
        assert!(moreau_env_logdet(&f, 0.0).is_err());
    }

    #[test]
    fn identities_and_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let p = rng.random_range(1..=12);
            let a = random_sym(&mut rng, p, 3.0);
            let beta = rng.random_range(0.05..5.0);
            let f = sym_eig(&a).unwrap();
            let plus = phi_plus(&f, beta).unwrap();
            let minus = phi_minus(&f, beta).unwrap();
            let tol = 1e-8 * (1.0 + a.norm());
            assert!((&plus - &minus - &a).norm() <= tol);
            assert!((&plus * &minus - DMatrix::<f64>::identity(p, p) * beta).norm() <= tol);
            let inv = plus.clone().try_inverse().unwrap();
            assert!((-(inv * beta) + &plus - &a).norm() <= tol);
        }
    }

    #[test]
    fn envelope_at_identity() {
        let f = sym_eig(&DMatrix::identity(4, 4)).unwrap();
        let plus = (5f64.sqrt() + 1.0) / 2.0;
        let minus = plus - 1.0;
        let want = 4.0 * (-plus.ln() + 0.5 * minus * minus);
        assert!((moreau_env_logdet(&f, 1.0).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn envelope_matches_scalar_grid() {
        for &(a, beta) in &[(0.7, 1.0), (-2.0, 0.5), (3.0, 0.2)] {
            let m = DMatrix::from_element(1, 1, a);
            let env = moreau_env_logdet(&sym_eig(&m).unwrap(), beta).unwrap();
            let mut best = f64::INFINITY;
            let mut x = 1e-5;
            while x < 10.0 {
                best = best.min(-beta * f64::ln(x) + 0.5 * (x - a) * (x - a));
                x += 1e-5;
            }
            assert!((env - best).abs() < 1e-9, "a={a}: {env} vs {best}");
        }
    }

    #[test]
    fn envelope_equals_objective_at_prox() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_sym(&mut rng, 6, 2.0);
        let beta = 0.7;
        let f = sym_eig(&a).unwrap();
        let x = phi_plus(&f, beta).unwrap();
        let logdet = sym_eig(&x).unwrap().values.iter().map(|d| d.ln()).sum::<f64>();
        let plug_in = -beta * logdet + 0.5 * (&x - &a).norm_squared();
        assert!((moreau_env_logdet(&f, beta).unwrap() - plug_in).abs() < 1e-10);
    }
}
