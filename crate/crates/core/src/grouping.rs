//! Usage-correlation grouping of critical appliances.
//!
//! Each appliance is reduced to a binary usage vector (active when its load
//! exceeds 1/20 of its peak). Pairs are compared with a lagged Pearson
//! correlation over offsets within ±delta; the distance `1 - |C|` feeds
//! DBSCAN with MinPts = 1, which with every point core degenerates exactly
//! to connected components of the epsilon-threshold graph — implemented as
//! such with union-find.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math::FloatExt;
use crate::series::LoadSeries;
use crate::{Error, Result};

/// Binary on/off usage profile of one appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageVector {
    bits: Vec<u8>,
    /// Activation threshold = max valid load / 20, kW.
    pub threshold_kw: f64,
}

impl UsageVector {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Pairwise usage-correlation distances among the critical appliances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    /// Row-major n x n, symmetric, zero diagonal, entries in [0, 1].
    entries: Vec<f64>,
    /// Maximum lag used, in samples.
    pub delta: usize,
}

impl DistanceMatrix {
    /// Builds a matrix from explicit entries; used by tests and loaders.
    pub fn from_entries(n: usize, entries: Vec<f64>, delta: usize) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::LengthMismatch {
                left: n * n,
                right: entries.len(),
            });
        }
        Ok(DistanceMatrix { n, entries, delta })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

/// Partition of the critical appliances into usage groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingResult {
    /// Groups sorted by smallest member id; members sorted ascending.
    pub groups: Vec<Vec<u32>>,
    /// Neighborhood radius used.
    pub epsilon: f64,
}

impl GroupingResult {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// All member ids, flattened.
    pub fn member_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.groups.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }
}

/// Thresholds a load series into its usage vector.
///
/// Invalid samples map to inactive. Errors when no valid sample exceeds
/// zero, since no active state is definable then.
pub fn usage_vector(series: &LoadSeries, name: &str) -> Result<UsageVector> {
    let mut max = 0.0f64;
    let mut any_valid = false;
    for t in 0..series.len() {
        if let Some(v) = series.get(t) {
            any_valid = true;
            max = max.max(v);
        }
    }
    if !any_valid || max <= 0.0 {
        return Err(Error::NoActiveState {
            appliance: String::from(name),
        });
    }
    let threshold = max / 20.0;
    let bits = (0..series.len())
        .map(|t| match series.get(t) {
            Some(v) if v > threshold => 1u8,
            _ => 0u8,
        })
        .collect();
    Ok(UsageVector {
        bits,
        threshold_kw: threshold,
    })
}

/// Pearson correlation of the overlap `x[t]` vs `y[t + shift]`, means and
/// variances taken over the overlap. Zero variance on either side gives 0.
fn pearson_at_lag(x: &[u8], y: &[u8], shift: isize) -> f64 {
    let m = x.len() as isize;
    let lo = 0.max(-shift);
    let hi = m.min(m - shift);
    let n = (hi - lo) as f64;
    if hi <= lo {
        return 0.0;
    }
    let mut sx = 0.0;
    let mut sy = 0.0;
    for t in lo..hi {
        sx += x[t as usize] as f64;
        sy += y[(t + shift) as usize] as f64;
    }
    let mx = sx / n;
    let my = sy / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for t in lo..hi {
        let dx = x[t as usize] as f64 - mx;
        let dy = y[(t + shift) as usize] as f64 - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Lagged correlation: the signed Pearson value of largest magnitude over
/// offsets in `[-delta, delta]`.
///
/// Ties prefer the smaller |offset|, then the positive one, so the result
/// is deterministic.
pub fn lag_correlation(x: &UsageVector, y: &UsageVector, delta: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let m = x.len();
    if m == 0 {
        return Err(Error::EmptyInput("lag_correlation"));
    }
    if delta >= m.div_ceil(2) {
        return Err(Error::LagTooLarge { delta, len: m });
    }

    let mut best = pearson_at_lag(x.bits(), y.bits(), 0);
    for d in 1..=delta as isize {
        for shift in [d, -d] {
            let r = pearson_at_lag(x.bits(), y.bits(), shift);
            if r.abs() > best.abs() {
                best = r;
            }
        }
    }
    Ok(best)
}

/// Full pairwise distance matrix `1 - |C_delta|` with a forced zero diagonal.
pub fn correlation_distance_matrix(
    vectors: &[UsageVector],
    delta: usize,
) -> Result<DistanceMatrix> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("correlation_distance_matrix"));
    }
    let n = vectors.len();
    let mut entries = alloc::vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = lag_correlation(&vectors[i], &vectors[j], delta)?;
            // |c| can exceed 1 by a few ulps; keep the distance in [0, 1].
            let d = (1.0 - c.abs()).clamp(0.0, 1.0);
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    DistanceMatrix::from_entries(n, entries, delta)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, i: usize, j: usize) {
        let (ri, rj) = (self.find(i), self.find(j));
        if ri != rj {
            self.parent[ri.max(rj)] = ri.min(rj);
        }
    }
}

/// DBSCAN over a precomputed distance matrix with MinPts = 1.
///
/// Every point is core, so clusters are exactly the connected components of
/// the graph joining pairs with distance <= epsilon. `ids[i]` names point
/// `i` in the output.
pub fn cluster_appliances(
    dist: &DistanceMatrix,
    ids: &[u32],
    epsilon: f64,
) -> Result<GroupingResult> {
    if epsilon.is_nan() || epsilon <= 0.0 || epsilon > 1.0 {
        return Err(Error::InvalidConfig(String::from(
            "epsilon must be in (0, 1]",
        )));
    }
    if ids.len() != dist.len() {
        return Err(Error::LengthMismatch {
            left: dist.len(),
            right: ids.len(),
        });
    }
    let n = dist.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if dist.get(i, j) <= epsilon {
                uf.union(i, j);
            }
        }
    }

    let mut groups: Vec<Vec<u32>> = Vec::new();
    let mut root_of_group: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = uf.find(i);
        match root_of_group.iter().position(|&g| g == r) {
            Some(g) => groups[g].push(ids[i]),
            None => {
                root_of_group.push(r);
                groups.push(alloc::vec![ids[i]]);
            }
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    Ok(GroupingResult { groups, epsilon })
}
