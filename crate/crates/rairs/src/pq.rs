//! Product quantization: codebook training, encoding, per-query lookup
//! tables, and the packed-block scan.
//!
//! A vector is split into `m_pq` equal sub-vectors; each sub-vector is
//! replaced by the index of its nearest sub-centroid (out of `2^nbits`).
//! At query time a lookup table holds the partial score of every
//! (sub-group, sub-centroid) pair, so the approximate score of a stored
//! vector is `m_pq` table lookups and adds.
//!
//! Codes are scanned in blocks of `BLK_SZ` slots. A slot is either a live
//! entry, or [`INVALID_ID`] (padding in a partially filled tail block, or a
//! deletion tombstone); invalid slots produce no output pair and do not
//! count toward distance-computation totals.

use rayon::prelude::*;

use crate::dataset::VectorSet;
use crate::error::{Error, Result};
use crate::kmeans::run_kmeans;
use crate::metric::{dot, l2_sqr, Metric};

/// Marks an unused or tombstoned block slot.
pub const INVALID_ID: u64 = u64::MAX;

/// Default code-block size, in slots.
pub const DEFAULT_BLK_SZ: usize = 32;

/// Per-sub-group codebooks: `m_pq * 2^nbits` sub-centroids of `dim / m_pq`
/// components each, stored row-major by (group, code).
#[derive(Debug, Clone, PartialEq)]
pub struct PQCodebook {
    dim: usize,
    m_pq: usize,
    nbits: u32,
    centroids: Vec<f32>,
}

impl PQCodebook {
    /// Wraps a pre-computed table of sub-centroids.
    pub fn from_centroids(dim: usize, m_pq: usize, nbits: u32, centroids: Vec<f32>) -> Result<Self> {
        validate_pq_shape(dim, m_pq, nbits)?;
        let expect = m_pq * (1usize << nbits) * (dim / m_pq);
        if centroids.len() != expect {
            return Err(Error::InvalidConfig(format!(
                "sub-centroid buffer length {} does not match m_pq {m_pq} x 2^{nbits} x dsub {}",
                centroids.len(),
                dim / m_pq
            )));
        }
        Ok(PQCodebook {
            dim,
            m_pq,
            nbits,
            centroids,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m_pq(&self) -> usize {
        self.m_pq
    }

    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    /// Sub-centroids per group, `2^nbits`.
    pub fn ksub(&self) -> usize {
        1usize << self.nbits
    }

    /// Components per sub-vector.
    pub fn dsub(&self) -> usize {
        self.dim / self.m_pq
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Sub-centroid `j` of group `m`.
    #[inline]
    pub fn sub_centroid(&self, m: usize, j: usize) -> &[f32] {
        let dsub = self.dsub();
        let at = (m * self.ksub() + j) * dsub;
        &self.centroids[at..at + dsub]
    }

    /// Encodes one vector: per group, the nearest sub-centroid by squared
    /// L2, ties toward the smaller code.
    pub fn encode(&self, v: &[f32]) -> Vec<u8> {
        debug_assert_eq!(v.len(), self.dim);
        let dsub = self.dsub();
        let mut code = Vec::with_capacity(self.m_pq);
        for m in 0..self.m_pq {
            let sub = &v[m * dsub..(m + 1) * dsub];
            let mut best = 0u8;
            let mut best_d = f32::INFINITY;
            for j in 0..self.ksub() {
                let d = l2_sqr(sub, self.sub_centroid(m, j));
                if d < best_d {
                    best_d = d;
                    best = j as u8;
                }
            }
            code.push(best);
        }
        code
    }

    /// Reconstructs the vector a code stands for (concatenated
    /// sub-centroids).
    pub fn decode(&self, code: &[u8]) -> Vec<f32> {
        debug_assert_eq!(code.len(), self.m_pq);
        let mut v = Vec::with_capacity(self.dim);
        for (m, &j) in code.iter().enumerate() {
            v.extend_from_slice(self.sub_centroid(m, j as usize));
        }
        v
    }

    /// Builds the per-query lookup table. Entry `(m, j)` is the squared L2
    /// distance from the query's `m`-th sub-vector to sub-centroid `j`, or
    /// the *negated* inner product under [`Metric::Ip`] — either way the
    /// accumulated score ranks ascending.
    pub fn build_lut(&self, q: &[f32], metric: Metric) -> LUT {
        debug_assert_eq!(q.len(), self.dim);
        let dsub = self.dsub();
        let ksub = self.ksub();
        let mut table = Vec::with_capacity(self.m_pq * ksub);
        for m in 0..self.m_pq {
            let sub = &q[m * dsub..(m + 1) * dsub];
            for j in 0..ksub {
                let c = self.sub_centroid(m, j);
                table.push(match metric {
                    Metric::L2 => l2_sqr(sub, c),
                    Metric::Ip => -dot(sub, c),
                });
            }
        }
        LUT {
            m_pq: self.m_pq,
            ksub,
            table,
        }
    }
}

fn validate_pq_shape(dim: usize, m_pq: usize, nbits: u32) -> Result<()> {
    if m_pq == 0 || dim == 0 || dim % m_pq != 0 {
        return Err(Error::InvalidConfig(format!(
            "dim {dim} must be a positive multiple of m_pq {m_pq}"
        )));
    }
    if !(2..=8).contains(&nbits) {
        return Err(Error::InvalidConfig(format!(
            "nbits {nbits} out of range 2..=8"
        )));
    }
    Ok(())
}

/// The default sub-vector count for dimension `dim`: `dim / 2` (two
/// components per group), falling back to the largest divisor of `dim`
/// not exceeding half when `dim` is odd.
pub fn default_m_pq(dim: usize) -> usize {
    if dim % 2 == 0 {
        return (dim / 2).max(1);
    }
    (1..=dim / 2).rev().find(|m| dim % m == 0).unwrap_or(1)
}

/// Trains per-group codebooks with seeded k-means over the sub-vectors.
/// Requires at least `2^nbits` training vectors.
pub fn train_pq(
    data: &VectorSet,
    m_pq: usize,
    nbits: u32,
    iters: usize,
    seed: u64,
) -> Result<PQCodebook> {
    validate_pq_shape(data.dim(), m_pq, nbits)?;
    let ksub = 1usize << nbits;
    if data.len() < ksub {
        return Err(Error::InvalidConfig(format!(
            "training needs at least {ksub} vectors, got {}",
            data.len()
        )));
    }
    let dim = data.dim();
    let dsub = dim / m_pq;
    let groups: Vec<Vec<f32>> = (0..m_pq)
        .into_par_iter()
        .map(|m| {
            let mut sub = Vec::with_capacity(data.len() * dsub);
            for i in 0..data.len() {
                let row = data.get(i);
                sub.extend_from_slice(&row[m * dsub..(m + 1) * dsub]);
            }
            // Decorrelate the per-group seeds without making the result
            // depend on how many groups precede this one.
            let group_seed = seed ^ (m as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            run_kmeans(&sub, dsub, ksub, iters, group_seed)
        })
        .collect();
    let mut centroids = Vec::with_capacity(m_pq * ksub * dsub);
    for g in groups {
        centroids.extend_from_slice(&g);
    }
    PQCodebook::from_centroids(dim, m_pq, nbits, centroids)
}

/// A per-query table of partial scores, `m_pq` groups by `2^nbits` codes.
#[derive(Debug, Clone)]
pub struct LUT {
    m_pq: usize,
    ksub: usize,
    table: Vec<f32>,
}

impl LUT {
    pub fn m_pq(&self) -> usize {
        self.m_pq
    }

    #[inline]
    pub fn entry(&self, m: usize, j: usize) -> f32 {
        self.table[m * self.ksub + j]
    }
}

/// One block of packed codes: up to `BLK_SZ` slots, each a stored ID plus
/// `m_pq` code words (slot-major). `valid_count` tracks the live slots;
/// padding and tombstones carry [`INVALID_ID`].
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBlock {
    /// Stored IDs, one per slot. Kept verbatim by [`scan_block`]; any
    /// embedded list tag is the caller's business.
    pub ids: Vec<u64>,
    /// `ids.len() * m_pq` code words.
    pub codes: Vec<u8>,
    /// Number of slots holding a live entry.
    pub valid_count: u32,
}

impl PackedBlock {
    /// Builds a block of exactly `blk_sz` slots from up to `blk_sz` live
    /// entries; the rest is padding.
    pub fn from_entries(blk_sz: usize, m_pq: usize, ids: &[u64], codes: &[u8]) -> PackedBlock {
        assert!(ids.len() <= blk_sz);
        assert_eq!(codes.len(), ids.len() * m_pq);
        let mut block_ids = vec![INVALID_ID; blk_sz];
        block_ids[..ids.len()].copy_from_slice(ids);
        let mut block_codes = vec![0u8; blk_sz * m_pq];
        block_codes[..codes.len()].copy_from_slice(codes);
        PackedBlock {
            ids: block_ids,
            codes: block_codes,
            valid_count: ids.len() as u32,
        }
    }

    pub fn slots(&self) -> usize {
        self.ids.len()
    }
}

/// Scans one block against a lookup table: for every live slot, accumulates
/// the `m_pq` partial scores in group order (f32, group 0 first) and appends
/// `(stored_id, score)` to `out`. Returns the number of live slots scanned —
/// exactly `valid_count` — which is the block's contribution to the
/// distance-computation count.
pub fn scan_block(lut: &LUT, block: &PackedBlock, out: &mut Vec<(u64, f32)>) -> u64 {
    debug_assert_eq!(block.codes.len(), block.slots() * lut.m_pq);
    let scanned = scan_slots(lut, &block.ids, &block.codes, out);
    debug_assert_eq!(scanned, block.valid_count as u64);
    scanned
}

/// The raw scan loop behind [`scan_block`], usable on any slot-major run of
/// IDs and codes (the miscellaneous area scans flat arrays without building
/// block structs). Returns the number of live slots scanned.
pub fn scan_slots(lut: &LUT, ids: &[u64], codes: &[u8], out: &mut Vec<(u64, f32)>) -> u64 {
    let m_pq = lut.m_pq;
    debug_assert_eq!(codes.len(), ids.len() * m_pq);
    let mut scanned = 0u64;
    for (slot, &id) in ids.iter().enumerate() {
        if id == INVALID_ID {
            continue;
        }
        let code = &codes[slot * m_pq..(slot + 1) * m_pq];
        let mut acc = 0.0f32;
        for (m, &c) in code.iter().enumerate() {
            acc += lut.entry(m, c as usize);
        }
        out.push((id, acc));
        scanned += 1;
    }
    scanned
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lut_entries_match_direct_distances() {
        let data = generate_synthetic(300, 8, 6, 2, 0.2).unwrap();
        let book = train_pq(&data, 4, 4, 15, 7).unwrap();
        let q = data.get(17);
        let lut = book.build_lut(q, Metric::L2);
        for (m, j) in [(0usize, 0usize), (1, 5), (3, 15)] {
            let direct = l2_sqr(&q[m * 2..(m + 1) * 2], book.sub_centroid(m, j));
            assert_eq!(lut.entry(m, j), direct);
        }
        let lut_ip = book.build_lut(q, Metric::Ip);
        let direct = -dot(&q[2..4], book.sub_centroid(1, 3));
        assert_eq!(lut_ip.entry(1, 3), direct);
    }

    #[test]
    fn encode_breaks_ties_toward_smaller_code() {
        // Two identical sub-centroids: the smaller code must win.
        let book = PQCodebook::from_centroids(2, 1, 2, vec![3.0, 3.0, 3.0, 3.0, 0.0, 0.0, 9.0, 9.0])
            .unwrap();
        assert_eq!(book.encode(&[3.0, 3.0]), vec![0]);
        assert_eq!(book.encode(&[0.1, -0.1]), vec![2]);
    }

    #[test]
    fn reconstruction_error_shrinks_with_nbits() {
        let data = generate_synthetic(2000, 16, 12, 4, 0.3).unwrap();
        let mut errors = Vec::new();
        for nbits in [2u32, 4, 8] {
            let book = train_pq(&data, 8, nbits, 20, 11).unwrap();
            let mut err = 0.0f64;
            for (_, v) in data.iter() {
                let rec = book.decode(&book.encode(v));
                err += l2_sqr(v, &rec) as f64;
            }
            errors.push(err / data.len() as f64);
        }
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "errors not decreasing: {errors:?}"
        );
    }

    /// Independent scalar ADC oracle: per item, walk the groups and sum
    /// table entries. Written without `PackedBlock`/`scan_block` internals.
    fn adc_oracle(lut: &LUT, ids: &[u64], codes: &[u8], m_pq: usize) -> Vec<(u64, f32)> {
        let mut out = Vec::new();
        for i in 0..ids.len() {
            if ids[i] == u64::MAX {
                continue;
            }
            let mut acc = 0.0f32;
            for m in 0..m_pq {
                acc += lut.entry(m, codes[i * m_pq + m] as usize);
            }
            out.push((ids[i], acc));
        }
        out
    }

    #[test]
    fn scan_block_matches_scalar_adc_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m_pq = 8;
        let ksub = 16;
        let dsub = 2;
        for _ in 0..200 {
            let centroids: Vec<f32> = (0..m_pq * ksub * dsub)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let book = PQCodebook::from_centroids(m_pq * dsub, m_pq, 4, centroids).unwrap();
            let q: Vec<f32> = (0..m_pq * dsub).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lut = book.build_lut(&q, Metric::L2);

            let nvalid = rng.random_range(0..=32usize);
            let ids: Vec<u64> = (0..nvalid).map(|_| rng.random_range(0..1u64 << 48)).collect();
            let codes: Vec<u8> = (0..nvalid * m_pq)
                .map(|_| rng.random_range(0..ksub) as u8)
                .collect();
            let block = PackedBlock::from_entries(32, m_pq, &ids, &codes);

            let mut got = Vec::new();
            let scanned = scan_block(&lut, &block, &mut got);
            assert_eq!(scanned, nvalid as u64);
            assert_eq!(got, adc_oracle(&lut, &block.ids, &block.codes, m_pq));
        }
    }

    #[test]
    fn scan_skips_interior_tombstones() {
        let book = PQCodebook::from_centroids(2, 1, 2, vec![0.0; 8]).unwrap();
        let lut = book.build_lut(&[0.0, 0.0], Metric::L2);
        let mut block = PackedBlock::from_entries(4, 1, &[10, 11, 12], &[0, 1, 2]);
        block.ids[1] = INVALID_ID;
        block.valid_count -= 1;
        let mut out = Vec::new();
        assert_eq!(scan_block(&lut, &block, &mut out), 2);
        assert_eq!(out.iter().map(|p| p.0).collect::<Vec<_>>(), vec![10, 12]);
    }

    #[test]
    fn train_pq_validates_shapes() {
        let data = generate_synthetic(10, 8, 2, 1, 0.1).unwrap();
        assert!(train_pq(&data, 3, 4, 5, 0).is_err()); // 8 % 3 != 0
        assert!(train_pq(&data, 4, 9, 5, 0).is_err()); // nbits out of range
        assert!(train_pq(&data, 4, 4, 5, 0).is_err()); // needs 16 vectors
    }

    #[test]
    fn default_m_pq_halves_even_dims() {
        assert_eq!(default_m_pq(32), 16);
        assert_eq!(default_m_pq(2), 1);
        assert_eq!(default_m_pq(15), 5); // largest divisor <= 7
        assert_eq!(default_m_pq(7), 1); // prime
    }
}
