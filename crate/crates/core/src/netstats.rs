//! Graph statistics of an adjacency matrix: path lengths, spectral radius
//! calibration, and linear delay coefficients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::reservoir::AdjacencyMatrix;

/// Radius search interval for calibration.
pub const RADIUS_BRACKET: (f64, f64) = (1e-4, 1e4);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLengthReport {
    pub mean_unweighted: f64,
    pub mean_weighted: f64,
    pub unreachable_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayCoefficients {
    /// Node-averaged `|b_j|` for `j = 1..=4`.
    pub mean_abs: [f64; 4],
}

/// Undirected neighbour lists: `j` is a neighbour of `i` if `A_ij` or `A_ji`
/// is nonzero. Lists are sorted ascending.
struct Neighbours {
    lists: Vec<Vec<usize>>,
}

impl Neighbours {
    fn new(a: &DMatrix<f64>) -> Self {
        let m = a.nrows();
        let lists = (0..m)
            .map(|i| (0..m).filter(|&j| j != i && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0)).collect())
            .collect();
        Self { lists }
    }
}

/// Hop count and accumulated weighted distance from one source.
struct Tree {
    hops: Vec<Option<usize>>,
    weighted: Vec<Option<f64>>,
}

fn bfs(a: &DMatrix<f64>, nb: &Neighbours, i0: usize) -> Tree {
    let m = a.nrows();
    let mut hops = vec![None; m];
    let mut weighted = vec![None; m];
    hops[i0] = Some(0);
    weighted[i0] = Some(0.0);
    let mut queue = VecDeque::from([i0]);
    while let Some(ik) = queue.pop_front() {
        let (h, w) = (hops[ik].unwrap(), weighted[ik].unwrap());
        for &im in &nb.lists[ik] {
            if hops[im].is_none() {
                hops[im] = Some(h + 1);
                weighted[im] = Some(w + delta(a, ik, im));
                queue.push_back(im);
            }
        }
    }
    Tree { hops, weighted }
}

fn delta(a: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    -(a[(i, j)].abs() + a[(j, i)].abs()).ln()
}

fn check_node(a: &AdjacencyMatrix, i: usize) -> Result<()> {
    if i >= a.size() {
        return Err(Error::InvalidParameter(format!("node {i} out of range for {} nodes", a.size())));
    }
    Ok(())
}

/// Hop distances from `i0` over the union of in- and out-links; `None` if unreachable.
pub fn bfs_distances(a: &AdjacencyMatrix, i0: usize) -> Result<Vec<Option<usize>>> {
    check_node(a, i0)?;
    let e = a.entries();
    Ok(bfs(e, &Neighbours::new(e), i0).hops)
}

/// `ln(1 / (|A_ij| + |A_ji|))` for adjacent `i`, `j`.
pub fn weighted_distance(a: &AdjacencyMatrix, i: usize, j: usize) -> Result<f64> {
    check_node(a, i)?;
    check_node(a, j)?;
    let e = a.entries();
    if e[(i, j)] == 0.0 && e[(j, i)] == 0.0 {
        return Err(Error::NotAdjacent { i, j });
    }
    Ok(delta(e, i, j))
}

struct PairSums {
    hops: f64,
    weighted: f64,
    pairs: usize,
    unreachable: usize,
}

fn pair_sums(a: &DMatrix<f64>) -> PairSums {
    let nb = Neighbours::new(a);
    let m = a.nrows();
    let per_source: Vec<(f64, f64, usize, usize)> = (0..m)
        .into_par_iter()
        .map(|i0| {
            let tree = bfs(a, &nb, i0);
            let mut acc = (0.0, 0.0, 0, 0);
            for (j, (h, w)) in tree.hops.iter().zip(&tree.weighted).enumerate() {
                if j == i0 {
                    continue;
                }
                match (h, w) {
                    (Some(h), Some(w)) => {
                        acc.0 += *h as f64;
                        acc.1 += w;
                        acc.2 += 1;
                    }
                    _ => acc.3 += 1,
                }
            }
            acc
        })
        .collect();
    per_source.iter().fold(PairSums { hops: 0.0, weighted: 0.0, pairs: 0, unreachable: 0 }, |s, p| PairSums {
        hops: s.hops + p.0,
        weighted: s.weighted + p.1,
        pairs: s.pairs + p.2,
        unreachable: s.unreachable + p.3,
    })
}

/// Means over all ordered pairs of distinct, connected nodes.
pub fn path_lengths(a: &AdjacencyMatrix) -> Result<PathLengthReport> {
    let sums = pair_sums(a.entries());
    if sums.pairs == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(PathLengthReport {
        mean_unweighted: sums.hops / sums.pairs as f64,
        mean_weighted: sums.weighted / sums.pairs as f64,
        unreachable_pairs: sums.unreachable,
    })
}

pub fn mean_unweighted_path_length(a: &AdjacencyMatrix) -> Result<f64> {
    path_lengths(a).map(|r| r.mean_unweighted)
}

/// Mean of the weighted distances accumulated along the breadth-first paths.
pub fn mean_weighted_path_length(a: &AdjacencyMatrix) -> Result<f64> {
    path_lengths(a).map(|r| r.mean_weighted)
}

/// Spectral radius at which the rescaled matrix has mean weighted path
/// length `target`, by bisection on `ln rho`.
pub fn calibrate_spectral_radius(a: &AdjacencyMatrix, target: f64) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::InvalidParameter(format!("target path length must be finite, got {target}")));
    }
    let current = a.spectral_radius();
    if !(current > 0.0) {
        return Err(Error::CalibrationFailed("matrix has zero spectral radius".into()));
    }
    let e = a.entries();
    let at = |ln_rho: f64| -> Result<f64> {
        let sums = pair_sums(&(e * (ln_rho.exp() / current)));
        if sums.pairs == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(sums.weighted / sums.pairs as f64 - target)
    };
    let (mut lo, mut hi) = (RADIUS_BRACKET.0.ln(), RADIUS_BRACKET.1.ln());
    let (f_lo, f_hi) = (at(lo)?, at(hi)?);
    if !(f_lo >= 0.0 && f_hi <= 0.0) {
        return Err(Error::CalibrationFailed(format!(
            "target {target} not bracketed by radii {:?}",
            RADIUS_BRACKET
        )));
    }
    // The residual falls linearly in ln rho, so bisect to machine precision.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = at(mid)?;
        if f == 0.0 {
            return Ok(mid.exp());
        }
        if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ln_rho = if at(lo)?.abs() <= at(hi)?.abs() { lo } else { hi };
    Ok(ln_rho.exp())
}

/// Delay coefficients `b_1 = rho A W`, `b_j = rho^{j-1} A^{j-1} b_1` of the
/// truncated linear reservoir with `W = 1`, averaged in magnitude over nodes.
/// `A` is used as given, so it should already have unit spectral radius.
pub fn linear_delay_coefficients(a: &AdjacencyMatrix, rho: f64) -> Result<DelayCoefficients> {
    if !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("rho must be finite, got {rho}")));
    }
    let m = a.size();
    let ra = a.entries() * rho;
    let mut b = DVector::from_element(m, 1.0);
    let mut mean_abs = [0.0; 4];
    for slot in mean_abs.iter_mut() {
        b = &ra * b;
        *slot = b.iter().map(|v| v.abs()).sum::<f64>() / m as f64;
    }
    Ok(DelayCoefficients { mean_abs })
}
