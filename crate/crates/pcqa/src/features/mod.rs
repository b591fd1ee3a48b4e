//! Multi-scale structural features.
//!
//! For every point, the covariance of its k-nearest neighborhood yields
//! eigenvalues l1 >= l2 >= l3 >= 0, from which the linearity and planarity
//! domains are formed:
//!
//! ```text
//! Lin = (l1 - l2) / l1        Pla = (l2 - l3) / l1
//! ```
//!
//! Each domain is summarized by its average, population standard deviation,
//! and Shannon entropy (256 uniform bins on [0, 1], base-2 log), at every
//! scale k in the configured set (default {10, 20}). The default output is
//! the 12-value vector ordered (avg, std, ent) x (lin, pla) x ascending k.

mod eigen;
mod kdtree;

pub use eigen::sym3_eigenvalues;
pub use kdtree::KdTree;

use rayon::prelude::*;
use thiserror::Error;

use crate::pointcloud::PointCloud;

/// Scale set used when none is given.
pub const DEFAULT_SCALES: [usize; 2] = [10, 20];

/// Histogram resolution of the entropy statistic.
pub const ENTROPY_BINS: usize = 256;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("neighborhood size k={k} exceeds point count n={n}")]
    KTooLarge { k: usize, n: usize },
    #[error("neighborhood size k must be at least 1")]
    KZero,
    #[error("scale set must not be empty")]
    EmptyScales,
}

/// A k-nearest neighborhood of one point, the query point included.
///
/// `member_indices` is sorted by (distance to the center, point index); the
/// center always participates even when more than k points coincide with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    pub center_index: usize,
    pub member_indices: Vec<usize>,
    pub k: usize,
}

/// Per-point linearity and planarity values at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainField {
    pub lin: Vec<f64>,
    pub pla: Vec<f64>,
    pub k: usize,
}

/// The structural feature vector: (avg, std, entropy) of the linearity and
/// planarity domains at each scale, ascending scale order. Twelve values for
/// the default two-scale set.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralFeatureVector {
    values: Vec<f64>,
    scales: Vec<usize>,
}

impl StructuralFeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    /// Stable column names matching [`Self::values`]: `lin_avg_k10`,
    /// `lin_std_k10`, `lin_ent_k10`, `pla_avg_k10`, ..., `pla_ent_k20`.
    pub fn names(&self) -> Vec<String> {
        feature_names(&self.scales)
    }

    /// Rebuilds a vector from cached values; lengths must agree.
    pub fn from_values(values: Vec<f64>, scales: Vec<usize>) -> Option<Self> {
        if values.len() == 6 * scales.len() && values.iter().all(|v| v.is_finite()) {
            Some(Self { values, scales })
        } else {
            None
        }
    }
}

/// Column names for a given scale set.
pub fn feature_names(scales: &[usize]) -> Vec<String> {
    let mut names = Vec::with_capacity(6 * scales.len());
    for k in scales {
        for domain in ["lin", "pla"] {
            for stat in ["avg", "std", "ent"] {
                names.push(format!("{domain}_{stat}_k{k}"));
            }
        }
    }
    names
}

fn validate_k(k: usize, n: usize) -> Result<(), FeatureError> {
    if k == 0 {
        return Err(FeatureError::KZero);
    }
    if k > n {
        return Err(FeatureError::KTooLarge { k, n });
    }
    Ok(())
}

fn neighborhood_members(tree: &KdTree, positions: &[[f64; 3]], center: usize, k: usize) -> Vec<usize> {
    let mut nb = tree.knn(&positions[center], k);
    // The center must belong to its own neighborhood. With >= k coincident
    // points the plain (distance, index) order can evict it, so swap it in
    // for the worst member.
    if !nb.iter().any(|&(_, j)| j as usize == center) {
        nb.pop();
        nb.push((0.0, center as u32));
        nb.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    nb.into_iter().map(|(_, j)| j as usize).collect()
}

/// The k-nearest neighborhood (Euclidean metric, self included) of every
/// point, ties broken by ascending point index.
pub fn knn_neighborhoods(pc: &PointCloud, k: usize) -> Result<Vec<Neighborhood>, FeatureError> {
    validate_k(k, pc.len())?;
    let positions = pc.positions();
    let tree = KdTree::build(positions);
    let out = (0..pc.len())
        .into_par_iter()
        .map(|i| Neighborhood {
            center_index: i,
            member_indices: neighborhood_members(&tree, positions, i, k),
            k,
        })
        .collect();
    Ok(out)
}

fn neighborhood_eigenvalues(positions: &[[f64; 3]], members: &[usize]) -> [f64; 3] {
    let kf = members.len() as f64;
    let mut centroid = [0.0f64; 3];
    for &j in members {
        let p = &positions[j];
        centroid[0] += p[0];
        centroid[1] += p[1];
        centroid[2] += p[2];
    }
    for c in &mut centroid {
        *c /= kf;
    }
    // 1/K-normalized covariance about the neighborhood centroid.
    let (mut c00, mut c01, mut c02, mut c11, mut c12, mut c22) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &j in members {
        let p = &positions[j];
        let dx = p[0] - centroid[0];
        let dy = p[1] - centroid[1];
        let dz = p[2] - centroid[2];
        c00 += dx * dx;
        c01 += dx * dy;
        c02 += dx * dz;
        c11 += dy * dy;
        c12 += dy * dz;
        c22 += dz * dz;
    }
    let cov = [
        [c00 / kf, c01 / kf, c02 / kf],
        [c01 / kf, c11 / kf, c12 / kf],
        [c02 / kf, c12 / kf, c22 / kf],
    ];
    let eig = sym3_eigenvalues(&cov);
    // Round-off can push tiny eigenvalues negative; clamping preserves order.
    eig.map(|l| l.max(0.0))
}

/// Eigenvalues (descending, clamped to >= 0) of the 1/K covariance of one
/// neighborhood.
pub fn covariance_eigenvalues(pc: &PointCloud, nb: &Neighborhood) -> (f64, f64, f64) {
    let [l1, l2, l3] = neighborhood_eigenvalues(pc.positions(), &nb.member_indices);
    (l1, l2, l3)
}

fn lin_pla(eig: [f64; 3]) -> (f64, f64) {
    let [l1, l2, l3] = eig;
    if l1 == 0.0 {
        return (0.0, 0.0);
    }
    ((l1 - l2) / l1, (l2 - l3) / l1)
}

fn domains_with_tree(
    tree: &KdTree,
    positions: &[[f64; 3]],
    k: usize,
) -> DomainField {
    let pairs: Vec<(f64, f64)> = (0..positions.len())
        .into_par_iter()
        .map(|i| {
            let members = neighborhood_members(tree, positions, i, k);
            lin_pla(neighborhood_eigenvalues(positions, &members))
        })
        .collect();
    let lin = pairs.iter().map(|p| p.0).collect();
    let pla = pairs.iter().map(|p| p.1).collect();
    DomainField { lin, pla, k }
}

/// Linearity and planarity values for every point at scale k.
pub fn structural_domains(pc: &PointCloud, k: usize) -> Result<DomainField, FeatureError> {
    validate_k(k, pc.len())?;
    let tree = KdTree::build(pc.positions());
    Ok(domains_with_tree(&tree, pc.positions(), k))
}

/// (average, population standard deviation, entropy in bits) of a field of
/// values in [0, 1]. Inputs are clamped to the unit interval; the sums run
/// over a sorted copy so the statistics are independent of point order.
pub fn domain_statistics(field: &[f64]) -> (f64, f64, f64) {
    assert!(!field.is_empty(), "domain_statistics needs a non-empty field");
    let mut sorted: Vec<f64> = field.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;

    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();

    let mut counts = [0usize; ENTROPY_BINS];
    for &v in &sorted {
        let bin = ((v * ENTROPY_BINS as f64) as usize).min(ENTROPY_BINS - 1);
        counts[bin] += 1;
    }
    let entropy = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();

    (mean, std, entropy)
}

/// The full structural feature vector over the given scale set (ascending
/// order enforced). Fails with [`FeatureError::KTooLarge`] when the cloud is
/// smaller than the largest scale.
pub fn extract_structural_features(
    pc: &PointCloud,
    scales: &[usize],
) -> Result<StructuralFeatureVector, FeatureError> {
    if scales.is_empty() {
        return Err(FeatureError::EmptyScales);
    }
    let mut scales: Vec<usize> = scales.to_vec();
    scales.sort_unstable();
    scales.dedup();
    for &k in &scales {
        validate_k(k, pc.len())?;
    }

    let tree = KdTree::build(pc.positions());
    let mut values = Vec::with_capacity(6 * scales.len());
    for &k in &scales {
        let field = domains_with_tree(&tree, pc.positions(), k);
        for domain in [&field.lin, &field.pla] {
            let (avg, std, ent) = domain_statistics(domain);
            values.push(avg);
            values.push(std);
            values.push(ent);
        }
    }
    Ok(StructuralFeatureVector { values, scales })
}
