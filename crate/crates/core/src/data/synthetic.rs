//! Nearest-neighbour networks and Gaussian sampling.
//!
//! `p` uniform points on the unit square are linked when each is among the
//! other's `m` nearest neighbours. Every class shares these `M` base edges
//! and then receives `ceil(M / 4)` extra edges at pairs that are still zero
//! in that class. Edge values are uniform on `[-1, -0.5] U [0.5, 1]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FglError, Result};
use crate::linalg::{sym_eig, MatrixCollection};

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub true_precisions: MatrixCollection,
    /// Per-class `N x p` observations; empty until sampled.
    pub samples: Vec<DMatrix<f64>>,
    pub seed: u64,
    pub m: usize,
    pub points: Vec<[f64; 2]>,
    /// Shared base graph, pairs `(i, j)` with `i < j`.
    pub base_edges: Vec<(usize, usize)>,
    /// Edges summed over all classes.
    pub n_edges_true: usize,
}

impl SyntheticInstance {
    /// Draws `n` observations per class, seeding class `l` with `seed + 1 + l`.
    pub fn with_samples(mut self, n: usize) -> Result<Self> {
        self.samples = self
            .true_precisions
            .iter()
            .enumerate()
            .map(|(l, om)| sample_gaussian(om, n, self.seed.wrapping_add(1 + l as u64)))
            .collect::<Result<_>>()?;
        Ok(self)
    }
}

/// Pairs `(i, j)`, `i < j`, where each point is among the other's `m`
/// nearest neighbours. Distance ties break by index.
pub fn mutual_knn_graph(points: &[[f64; 2]], m: usize) -> Vec<(usize, usize)> {
    let p = points.len();
    let m = m.min(p.saturating_sub(1));
    let mut neighbours = vec![Vec::new(); p];
    for i in 0..p {
        let mut others: Vec<(f64, usize)> = (0..p)
            .filter(|&j| j != i)
            .map(|j| {
                let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
                (dx * dx + dy * dy, j)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        neighbours[i] = others[..m].iter().map(|&(_, j)| j).collect();
    }
    let mut edges = Vec::new();
    for i in 0..p {
        for &j in &neighbours[i] {
            if i < j && neighbours[j].contains(&i) {
                edges.push((i, j));
            }
        }
    }
    edges.sort_unstable();
    edges
}

fn edge_value(rng: &mut ChaCha8Rng) -> f64 {
    let mag = rng.random_range(0.5..=1.0);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Ground-truth precision matrices for `l` classes.
///
/// Positive definiteness: every diagonal entry is set to the largest absolute
/// off-diagonal row sum over all classes plus 0.1, then all classes are
/// rescaled by the same `D^{-1/2} (.) D^{-1/2}`. The result has unit diagonal,
/// is strictly diagonally dominant, and shared edges keep equal values.
pub fn gen_nearest_neighbour(p: usize, l: usize, m: usize, seed: u64) -> Result<SyntheticInstance> {
    if l < 2 {
        return Err(FglError::InvalidInput(format!("need at least two classes, got {l}")));
    }
    if p < m + 1 {
        return Err(FglError::InvalidInput(format!("p = {p} cannot have {m} neighbours per point")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<[f64; 2]> = (0..p).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let base_edges = mutual_knn_graph(&points, m);
    let n_base = base_edges.len();

    let mut base = DMatrix::zeros(p, p);
    for &(i, j) in &base_edges {
        let v = edge_value(&mut rng);
        base[(i, j)] = v;
        base[(j, i)] = v;
    }
    let extra = n_base.div_ceil(4);
    let free_pairs = p * (p - 1) / 2 - n_base;
    if extra > free_pairs {
        return Err(FglError::InvalidInput(format!(
            "no room for {extra} individual edges among {free_pairs} free pairs"
        )));
    }
    let mut mats = Vec::with_capacity(l);
    for _ in 0..l {
        let mut om = base.clone();
        let mut added = 0;
        while added < extra {
            let i = rng.random_range(0..p);
            let j = rng.random_range(0..p);
            if i == j || om[(i, j)] != 0.0 {
                continue;
            }
            let v = edge_value(&mut rng);
            om[(i, j)] = v;
            om[(j, i)] = v;
            added += 1;
        }
        mats.push(om);
    }

    let diag: Vec<f64> = (0..p)
        .map(|i| {
            mats.iter()
                .map(|om| om.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
                + 0.1
        })
        .collect();
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    for om in &mut mats {
        for i in 0..p {
            om[(i, i)] = diag[i];
        }
        for j in 0..p {
            for i in 0..p {
                om[(i, j)] *= scale[i] * scale[j];
            }
        }
        for i in 0..p {
            om[(i, i)] = 1.0;
        }
    }
    let n_edges_true = l * (n_base + extra);
    Ok(SyntheticInstance {
        true_precisions: MatrixCollection::new(mats)?,
        samples: Vec::new(),
        seed,
        m,
        points,
        base_edges,
        n_edges_true,
    })
}

/// `n` rows drawn i.i.d. from `N(0, precision^{-1})`.
///
/// With `precision = L L^T`, each row is `L^{-T} z` for standard normal `z`.
pub fn sample_gaussian(precision: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let p = precision.nrows();
    if precision.ncols() != p {
        return Err(FglError::Shape(format!("precision is {p}x{}", precision.ncols())));
    }
    let chol = precision.clone().cholesky().ok_or_else(|| FglError::NotPositiveDefinite {
        index: 0,
        min_eig: sym_eig(precision).map(|f| f.values[p - 1]).unwrap_or(f64::NAN),
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let lt = chol.l().transpose();
    let x = lt
        .solve_upper_triangular(&z)
        .ok_or(FglError::NotPositiveDefinite { index: 0, min_eig: 0.0 })?;
    Ok(x.transpose())
}
