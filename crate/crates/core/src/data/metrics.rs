//! Edge-recovery metrics against a known truth.

use serde::{Deserialize, Serialize};

use crate::error::{FglError, Result};
use crate::linalg::MatrixCollection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    /// Selected edges (`|est| > zero_tol`, `i < j`, summed over classes) that are true edges.
    pub tp_edges: usize,
    pub fp_edges: usize,
    pub true_edges: usize,
    /// Squared error over `i < j` entries of all classes.
    pub sse: f64,
    /// Differential pairs between consecutive classes.
    pub tp_diff: usize,
    pub fp_diff: usize,
    pub true_diff: usize,
    /// Entries carrying 99.9% of the absolute mass of `est`.
    pub nnz: usize,
    pub density: f64,
}

/// Smallest `k` such that the `k` largest `|x|` carry `mass` of the total.
pub fn nnz_by_mass(x: &MatrixCollection, mass: f64) -> usize {
    let mut abs: Vec<f64> = x.iter().flat_map(|m| m.iter().map(|v| v.abs())).collect();
    abs.sort_unstable_by(|a, b| b.total_cmp(a));
    let total: f64 = abs.iter().sum();
    if total == 0.0 {
        return 0;
    }
    // slack absorbs summation rounding when the target is hit exactly
    let target = mass * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (k, v) in abs.iter().enumerate() {
        acc += v;
        if acc >= target {
            return k + 1;
        }
    }
    abs.len()
}

/// Recovery metrics of `est` against `truth`; `zero_tol` decides which
/// estimated entries and consecutive-class differences count as nonzero.
pub fn edge_metrics(est: &MatrixCollection, truth: &MatrixCollection, zero_tol: f64) -> Result<EdgeMetrics> {
    est.check_shape(truth, "edge_metrics")?;
    if !(zero_tol >= 0.0) {
        return Err(FglError::InvalidInput(format!("zero_tol must be non-negative, got {zero_tol}")));
    }
    let (p, l) = (est.dim(), est.len());
    let mut m = EdgeMetrics {
        tp_edges: 0,
        fp_edges: 0,
        true_edges: 0,
        sse: 0.0,
        tp_diff: 0,
        fp_diff: 0,
        true_diff: 0,
        nnz: nnz_by_mass(est, 0.999),
        density: 0.0,
    };
    for j in 0..p {
        for i in 0..j {
            for k in 0..l {
                let (e, t) = (est[k][(i, j)], truth[k][(i, j)]);
                let real = t != 0.0;
                m.true_edges += real as usize;
                if e.abs() > zero_tol {
                    if real {
                        m.tp_edges += 1;
                    } else {
                        m.fp_edges += 1;
                    }
                }
                m.sse += (e - t) * (e - t);
                if k + 1 < l {
                    let est_diff = (e - est[k + 1][(i, j)]).abs() > zero_tol;
                    let true_diff = (t - truth[k + 1][(i, j)]).abs() > zero_tol;
                    m.true_diff += true_diff as usize;
                    if est_diff {
                        if true_diff {
                            m.tp_diff += 1;
                        } else {
                            m.fp_diff += 1;
                        }
                    }
                }
            }
        }
    }
    m.density = m.nnz as f64 / (p * p * l) as f64;
    Ok(m)
}

/// `(obj_a - obj_b) / (1 + |obj_a| + |obj_b|)`.
pub fn objective_difference(obj_a: f64, obj_b: f64) -> f64 {
    (obj_a - obj_b) / (1.0 + obj_a.abs() + obj_b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = MatrixCollection::from_fn(6, 3, |_, _, _| {
            if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        let m = edge_metrics(&x, &x, 1e-6).unwrap();
        assert_eq!(m.fp_edges, 0);
        assert_eq!(m.fp_diff, 0);
        assert_eq!(m.sse, 0.0);
        assert_eq!(m.tp_edges, m.true_edges);
    }

    #[test]
    fn equal_mass_nnz() {
        for (p, l) in [(10, 10), (7, 3), (20, 5), (1, 2)] {
            let x = MatrixCollection::from_fn(p, l, |_, _, _| 0.3);
            let want = (0.999 * (p * p * l) as f64).ceil() as usize;
            assert_eq!(nnz_by_mass(&x, 0.999), want, "p={p} l={l}");
        }
        assert_eq!(nnz_by_mass(&MatrixCollection::zeros(3, 2), 0.999), 0);
    }

    #[test]
    fn differential_threshold() {
        // est: entry (0,1) moves by 2e-6 between classes 0 and 1, by 5e-7 between 1 and 2
        let est_vals = [0.5, 0.5 + 2e-6, 0.5 + 2.5e-6];
        let tru_vals = [0.5, 0.5, 0.7];
        let est = MatrixCollection::from_fn(2, 3, |k, i, j| if i == j { 1.0 } else { est_vals[k] });
        let truth = MatrixCollection::from_fn(2, 3, |k, i, j| if i == j { 1.0 } else { tru_vals[k] });
        let m = edge_metrics(&est, &truth, 1e-6).unwrap();
        assert_eq!(m.true_diff, 1);
        assert_eq!(m.fp_diff, 1);
        assert_eq!(m.tp_diff, 0);
        assert_eq!(m.tp_edges, 3);
    }

    #[test]
    fn selection_threshold() {
        let truth = MatrixCollection::from_fn(3, 2, |_, i, j| if (i, j) == (0, 1) || (i, j) == (1, 0) { 0.4 } else if i == j { 1.0 } else { 0.0 });
        let est = MatrixCollection::from_fn(3, 2, |_, i, j| match (i.min(j), i.max(j)) {
            (a, b) if a == b => 1.0,
            (0, 1) => 5e-7,
            (0, 2) => 0.2,
            _ => 0.0,
        });
        let m = edge_metrics(&est, &truth, 1e-6).unwrap();
        assert_eq!((m.tp_edges, m.fp_edges, m.true_edges), (0, 2, 2));
        let want_sse = 2.0 * ((5e-7f64 - 0.4).powi(2) + 0.04);
        assert!((m.sse - want_sse).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, l) = (8, 4);
        let sparse = |rng: &mut ChaCha8Rng| {
            MatrixCollection::from_fn(p, l, |_, _, _| if rng.random_bool(0.6) { 0.0 } else { rng.random_range(-1.0..1.0) })
        };
        let est = sparse(&mut rng);
        let truth = sparse(&mut rng);
        let m = edge_metrics(&est, &truth, 1e-6).unwrap();
        let (mut tp, mut fp, mut sse) = (0, 0, 0.0);
        for k in 0..l {
            for i in 0..p {
                for j in 0..p {
                    if i < j {
                        let sel = est[k][(i, j)].abs() > 1e-6;
                        tp += (sel && truth[k][(i, j)] != 0.0) as usize;
                        fp += (sel && truth[k][(i, j)] == 0.0) as usize;
                        sse += (est[k][(i, j)] - truth[k][(i, j)]).powi(2);
                    }
                }
            }
        }
        assert_eq!((m.tp_edges, m.fp_edges), (tp, fp));
        assert!((m.sse - sse).abs() < 1e-12);
        assert_eq!(m.density, m.nnz as f64 / (p * p * l) as f64);
    }

    #[test]
    fn relabeling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = 6;
        let est = MatrixCollection::from_fn(p, 3, |_, _, _| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-1.0..1.0) });
        let truth = MatrixCollection::from_fn(p, 3, |_, _, _| if rng.random_bool(0.5) { 0.0 } else { 0.5 });
        let perm = [3, 0, 5, 1, 4, 2];
        let permute = |x: &MatrixCollection| MatrixCollection::from_fn(p, 3, |k, i, j| x[k][(perm[i], perm[j])]);
        let a = edge_metrics(&est, &truth, 1e-6).unwrap();
        let b = edge_metrics(&permute(&est), &permute(&truth), 1e-6).unwrap();
        assert_eq!((a.tp_edges, a.fp_edges, a.tp_diff, a.fp_diff, a.nnz), (b.tp_edges, b.fp_edges, b.tp_diff, b.fp_diff, b.nnz));
        assert!((a.sse - b.sse).abs() < 1e-12);
    }

    #[test]
    fn objective_difference_formula() {
        assert_eq!(objective_difference(3.0, 3.0), 0.0);
        assert!((objective_difference(2.0, 1.0) - 0.25).abs() < 1e-16);
    }
}
