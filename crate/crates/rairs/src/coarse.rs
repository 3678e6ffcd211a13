//! The coarse quantizer: one centroid per inverted list.

use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::kmeans::run_kmeans;
use crate::metric::{Metric, Neighbor, TopK};

/// List IDs are embedded into stored misc-area IDs as `id + 1` in a 16-bit
/// field, which caps the list count one below `u16::MAX`.
pub const MAX_NLIST: usize = u16::MAX as usize - 1;

/// Flat array of list centroids plus the metric used to rank them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseQuantizer {
    dim: usize,
    nlist: usize,
    metric: Metric,
    centroids: Vec<f32>,
}

impl CoarseQuantizer {
    /// Wraps pre-computed centroids (row-major, `nlist * dim`).
    pub fn from_centroids(
        dim: usize,
        nlist: usize,
        metric: Metric,
        centroids: Vec<f32>,
    ) -> Result<Self> {
        if nlist == 0 || nlist > MAX_NLIST {
            return Err(Error::InvalidConfig(format!(
                "nlist {nlist} out of range 1..={MAX_NLIST}"
            )));
        }
        if centroids.len() != nlist * dim {
            return Err(Error::InvalidConfig(format!(
                "centroid buffer length {} does not equal nlist {nlist} x dim {dim}",
                centroids.len()
            )));
        }
        Ok(CoarseQuantizer {
            dim,
            nlist,
            metric,
            centroids,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Centroid of list `list`.
    #[inline]
    pub fn centroid(&self, list: u32) -> &[f32] {
        let l = list as usize;
        &self.centroids[l * self.dim..(l + 1) * self.dim]
    }

    /// The `m` nearest lists for `v`, best first. Ranking is exhaustive over
    /// all centroids: ascending squared L2 (or descending inner product),
    /// ties toward the smaller list ID. Results have the prefix property:
    /// the first `j` entries equal `find_nearest_lists(v, j)`.
    pub fn find_nearest_lists(&self, v: &[f32], m: usize) -> Vec<u32> {
        debug_assert_eq!(v.len(), self.dim);
        let m = m.min(self.nlist);
        let mut top = TopK::new(m);
        for list in 0..self.nlist as u32 {
            top.push(Neighbor {
                score: self.metric.score(v, self.centroid(list)),
                id: list as u64,
            });
        }
        top.into_sorted().iter().map(|n| n.id as u32).collect()
    }
}

/// Trains `nlist` centroids on `data` with seeded k-means (k-means++ init,
/// at most `iters` Lloyd rounds). Training geometry is always L2; `metric`
/// only controls how lists are ranked at assignment and query time.
pub fn train_kmeans(
    data: &VectorSet,
    nlist: usize,
    metric: Metric,
    iters: usize,
    seed: u64,
) -> Result<CoarseQuantizer> {
    if nlist == 0 || nlist > MAX_NLIST {
        return Err(Error::InvalidConfig(format!(
            "nlist {nlist} out of range 1..={MAX_NLIST}"
        )));
    }
    if data.len() < nlist {
        return Err(Error::InvalidConfig(format!(
            "cannot train {nlist} lists on {} vectors",
            data.len()
        )));
    }
    if iters == 0 {
        return Err(Error::InvalidConfig("kmeans iters must be > 0".into()));
    }
    let centroids = run_kmeans(data.data(), data.dim(), nlist, iters, seed);
    CoarseQuantizer::from_centroids(data.dim(), nlist, metric, centroids)
}

/// The default list count for an `n`-vector set: `ceil(sqrt(n))` rounded up
/// to a power of two.
pub fn default_nlist(n: usize) -> usize {
    let root = (n as f64).sqrt().ceil() as usize;
    root.next_power_of_two().clamp(1, MAX_NLIST)
}
