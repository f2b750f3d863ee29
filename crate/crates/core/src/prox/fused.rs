//! Proximal map of the fused Lasso penalty `l1 * |x|_1 + l2 * |Bx|_1` on a
//! chain, and its entrywise lift to matrix collections.

use crate::error::{FglError, Result};
use crate::linalg::{EntryVector, MatrixCollection};

pub(crate) fn check_penalty(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(FglError::NegativePenalty(lambda))
    }
}

#[inline]
pub(crate) fn shrink(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// `sign(v) * max(|v| - lambda, 0)` componentwise.
pub fn soft_threshold(v: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_penalty(lambda)?;
    Ok(v.iter().map(|&x| shrink(x, lambda)).collect())
}

/// Exact solution of `min_x lambda * sum |x_i - x_{i+1}| + 0.5 |x - v|^2`.
///
/// Direct one-pass algorithm (Condat's taut-string variant). Values inside a
/// fused segment are written from a single accumulator, so entries of the same
/// segment compare equal bit for bit.
pub fn tv_chain(input: &[f64], lambda: f64, output: &mut [f64]) {
    let n = input.len();
    assert_eq!(n, output.len(), "tv_chain buffer length mismatch");
    if n == 0 {
        return;
    }
    if lambda <= 0.0 || n == 1 {
        output.copy_from_slice(input);
        return;
    }
    let twolambda = 2.0 * lambda;
    let minlambda = -lambda;
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = minlambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    output[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    output[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < minlambda {
            loop {
                output[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = minlambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            loop {
                output[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = minlambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= minlambda {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                umax = minlambda;
            }
        }
    }
}

/// Output of [`prox_fused`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusedProxResult {
    /// Chain total-variation prox `x_{l2}(v)`.
    pub x: EntryVector,
    /// Dual certificate with `x = v - B^T z`, `|z|_inf <= l2`.
    pub z: Vec<f64>,
    /// `soft_threshold(x, l1)`, the prox of the full fused penalty.
    pub prox: EntryVector,
}

/// Prox of `l1 * |x|_1 + l2 * |Bx|_1` at `v`.
pub fn prox_fused(v: &[f64], lambda1: f64, lambda2: f64) -> Result<FusedProxResult> {
    check_penalty(lambda1)?;
    check_penalty(lambda2)?;
    let mut x = vec![0.0; v.len()];
    tv_chain(v, lambda2, &mut x);
    let mut z = Vec::with_capacity(v.len().saturating_sub(1));
    let mut acc = 0.0;
    for i in 0..v.len().saturating_sub(1) {
        acc += v[i] - x[i];
        z.push(acc);
    }
    let prox = x.iter().map(|&t| shrink(t, lambda1)).collect();
    Ok(FusedProxResult { x: EntryVector(x), z, prox: EntryVector(prox) })
}

/// `l1 * |x|_1 + l2 * |Bx|_1` for one fiber.
pub fn fused_penalty(x: &[f64], lambda1: f64, lambda2: f64) -> f64 {
    let l1: f64 = x.iter().map(|t| t.abs()).sum();
    let tv: f64 = x.windows(2).map(|w| (w[0] - w[1]).abs()).sum();
    lambda1 * l1 + lambda2 * tv
}

/// Visits every off-diagonal fiber `(i, j)`, `i < j`, in row-major order of
/// the upper triangle, handing the callback a scratch copy of the fiber.
pub(crate) fn for_each_fiber(
    x: &MatrixCollection,
    mut f: impl FnMut(usize, usize, &mut [f64]),
) {
    let p = x.dim();
    let mut buf = vec![0.0; x.len()];
    for j in 0..p {
        for i in 0..j {
            for (b, m) in buf.iter_mut().zip(x.iter()) {
                *b = m[(i, j)];
            }
            f(i, j, &mut buf);
        }
    }
}

/// Prox of the FGL penalty: every off-diagonal fiber goes through
/// [`prox_fused`], diagonals pass through unchanged.
pub fn prox_fgl(x: &MatrixCollection, lambda1: f64, lambda2: f64) -> Result<MatrixCollection> {
    check_penalty(lambda1)?;
    check_penalty(lambda2)?;
    let mut out = x.clone();
    let mut tv = vec![0.0; x.len()];
    let mats = out.matrices_mut();
    for_each_fiber(x, |i, j, v| {
        tv_chain(v, lambda2, &mut tv);
        for (m, &t) in mats.iter_mut().zip(tv.iter()) {
            let s = shrink(t, lambda1);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tv_objective(x: &[f64], v: &[f64], lambda2: f64) -> f64 {
        let fit: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        lambda2 * x.windows(2).map(|w| (w[0] - w[1]).abs()).sum::<f64>() + 0.5 * fit
    }

    fn full_objective(y: &[f64], v: &[f64], l1: f64, l2: f64) -> f64 {
        let fit: f64 = y.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        fused_penalty(y, l1, l2) + 0.5 * fit
    }

    // Dual value <z, Bv> - 0.5 |B^T z|^2; equals the primal optimum.
    fn tv_dual(z: &[f64], v: &[f64]) -> f64 {
        let n = v.len();
        let mut btz = vec![0.0; n];
        for (i, &zi) in z.iter().enumerate() {
            btz[i] += zi;
            btz[i + 1] -= zi;
        }
        let bv: f64 = z.iter().enumerate().map(|(i, zi)| zi * (v[i] - v[i + 1])).sum();
        bv - 0.5 * btz.iter().map(|t| t * t).sum::<f64>()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[2.0, -0.5, 0.0], 1.0).unwrap(), vec![1.0, 0.0, 0.0]);
        let v = [0.3, -1.7, 2.5];
        assert_eq!(soft_threshold(&v, 0.0).unwrap(), v.to_vec());
        assert!(matches!(soft_threshold(&v, -1.0), Err(FglError::NegativePenalty(_))));
    }

    #[test]
    fn soft_threshold_matches_grid_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let lambda = rng.random_range(0.0..1.0);
            let v: f64 = rng.random_range(-2.0..2.0);
            let got = soft_threshold(&[v], lambda).unwrap()[0];
            let obj = |x: f64| lambda * x.abs() + 0.5 * (x - v) * (x - v);
            let mut best = (f64::INFINITY, 0.0);
            let mut x = -3.0;
            while x <= 3.0 {
                let o = obj(x);
                if o < best.0 {
                    best = (o, x);
                }
                x += 1e-4;
            }
            assert!(obj(got) <= best.0 + 1e-12);
            assert!((got - best.1).abs() <= 1e-4);
        }
    }

    #[test]
    fn tv_two_point_closed_form() {
        let mut out = [0.0; 2];
        tv_chain(&[1.0, 0.2], 0.3, &mut out);
        assert!((out[0] - 0.7).abs() < 1e-15 && (out[1] - 0.5).abs() < 1e-15);
        tv_chain(&[1.0, 0.2], 0.5, &mut out);
        assert_eq!(out[0], out[1]);
        assert!((out[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_penalties_are_identity() {
        let v = [0.3, -1.2, 4.0];
        let r = prox_fused(&v, 0.0, 0.0).unwrap();
        assert_eq!(r.x.0, v.to_vec());
        assert_eq!(r.prox.0, v.to_vec());
        assert!(r.z.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn constant_fiber_only_shrinks() {
        let v = [1.5; 5];
        let r = prox_fused(&v, 0.4, 0.7).unwrap();
        // the segment value is rebuilt as (v - l2) + l2, exact up to one ulp
        assert!(r.x.iter().all(|&t| (t - 1.5).abs() <= 1e-15 && t == r.x[0]));
        assert!(r.prox.iter().all(|&t| (t - 1.1).abs() <= 1e-15));
    }

    #[test]
    fn large_fusion_collapses_to_mean() {
        let v = [1.0, 2.0, 3.0, 6.0];
        let r = prox_fused(&v, 0.0, 100.0).unwrap();
        assert!(r.x.iter().all(|&t| (t - 3.0).abs() < 1e-14));
    }

    #[test]
    fn rejects_negative_penalties() {
        assert!(prox_fused(&[1.0, 2.0], -0.1, 0.0).is_err());
        assert!(prox_fused(&[1.0, 2.0], 0.1, -0.1).is_err());
        assert!(prox_fgl(&MatrixCollection::identity(2, 2), 0.0, -1.0).is_err());
    }

    #[test]
    fn zero_duality_gap_on_random_fibers() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let n = rng.random_range(2..=12);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let l2 = rng.random_range(0.0..2.0);
            let r = prox_fused(&v, 0.0, l2).unwrap();
            let gap = tv_objective(&r.x, &v, l2) - tv_dual(&r.z, &v);
            assert!(gap.abs() <= 1e-10, "gap {gap} for v={v:?}, l2={l2}");
            assert!(r.z.iter().all(|z| z.abs() <= l2 + 1e-12));
        }
    }

    #[test]
    fn beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.random_range(2..=8);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (l1, l2) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let best = full_objective(&prox_fused(&v, l1, l2).unwrap().prox, &v, l1, l2);
            for _ in 0..1000 {
                let y: Vec<f64> = v.iter().map(|t| t + rng.random_range(-1.0..1.0)).collect();
                assert!(best <= full_objective(&y, &v, l1, l2) + 1e-12);
            }
        }
    }

    #[test]
    fn fgl_leaves_diagonal_collections_alone() {
        let x = MatrixCollection::new(vec![
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -2.0, 3.0])),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.0, 7.0])),
        ])
        .unwrap();
        assert_eq!(prox_fgl(&x, 0.3, 0.2).unwrap(), x);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = MatrixCollection::from_fn(4, 3, |_, _, _| rng.random_range(-1.0..1.0));
        assert_eq!(prox_fgl(&y, 0.0, 0.0).unwrap(), y);
    }

    #[test]
    fn fgl_matches_fiberwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = MatrixCollection::from_fn(4, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let (l1, l2) = (0.2, 0.15);
        let got = prox_fgl(&x, l1, l2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j {
                    x.fiber(i, j).unwrap().0
                } else {
                    prox_fused(&x.fiber(i, j).unwrap(), l1, l2).unwrap().prox.0
                };
                assert_eq!(got.fiber(i, j).unwrap().0, want);
            }
        }
    }

    proptest! {
        #[test]
        fn fused_result_invariants(
            v in prop::collection::vec(-5.0f64..5.0, 2..=12),
            l1 in 0.0f64..2.0,
            l2 in 0.0f64..2.0,
        ) {
            let r = prox_fused(&v, l1, l2).unwrap();
            for i in 0..v.len() {
                let mut btz = 0.0;
                if i < r.z.len() { btz += r.z[i]; }
                if i > 0 { btz -= r.z[i - 1]; }
                prop_assert!((r.x[i] - (v[i] - btz)).abs() <= 1e-10);
                prop_assert_eq!(r.prox[i], shrink(r.x[i], l1));
            }
            prop_assert!(r.z.iter().all(|z| z.abs() <= l2 + 1e-12));
        }

        #[test]
        fn fgl_is_nonexpansive(
            a in prop::collection::vec(-2.0f64..2.0, 27),
            b in prop::collection::vec(-2.0f64..2.0, 27),
            l1 in 0.0f64..1.0,
            l2 in 0.0f64..1.0,
        ) {
            let x = MatrixCollection::from_fn(3, 3, |l, i, j| a[l * 9 + i * 3 + j]);
            let y = MatrixCollection::from_fn(3, 3, |l, i, j| b[l * 9 + i * 3 + j]);
            let px = prox_fgl(&x, l1, l2).unwrap();
            let py = prox_fgl(&y, l1, l2).unwrap();
            prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-12);
            for m in px.iter() {
                prop_assert_eq!(m, &m.transpose());
            }
        }
    }
}
