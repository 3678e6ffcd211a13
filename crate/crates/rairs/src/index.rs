//! The index facade: coarse quantizer, PQ codebook, shared-cell lists, the
//! raw-vector refine store, and exact refinement behind one type.
//!
//! A search runs in two stages. The scan stage builds the query's lookup
//! table, picks the `nprobe` nearest lists, and collects the
//! `bigK = K * k_factor` best candidates by accumulated PQ score. The
//! refine stage recomputes those candidates against the raw vectors and
//! returns the exact top `K`. Distance-computation work is reported per
//! stage: `scan_dco` varies with the assignment strategy and layout, while
//! `refine_dco` is pinned near `bigK` — which is why scan counts are the
//! comparative quantity between strategies.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::assign::{
    multi_assign, rair_assign, Aggregator, Assignment, StrategyConfig, StrategyKind,
};
use crate::coarse::{default_nlist, train_kmeans, CoarseQuantizer};
use crate::dataset::{VectorSet, MAX_VECTOR_ID};
use crate::error::{Error, Result};
use crate::metric::{Metric, Neighbor, TopK};
use crate::pq::{default_m_pq, train_pq, PQCodebook, PackedBlock, DEFAULT_BLK_SZ, LUT};
use crate::seil::{
    cell_stats, scan_list_into, seil_delete, seil_insert, seil_insert_multi, seil_search,
    validate_location_map, Area, CellStats, DeleteReport, LocationMap, RefEntry, SeilList,
};

/// Everything `build` needs beyond the data itself. `None` for `nlist` or
/// `m_pq` picks the size-derived defaults.
#[derive(Debug, Clone)]
pub struct BuildParams {
    pub metric: Metric,
    pub strategy: StrategyConfig,
    pub nlist: Option<usize>,
    pub m_pq: Option<usize>,
    pub nbits: u32,
    pub blk_sz: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            metric: Metric::L2,
            strategy: StrategyConfig::air(crate::assign::DEFAULT_LAMBDA, true),
            nlist: None,
            m_pq: None,
            nbits: 4,
            blk_sz: DEFAULT_BLK_SZ,
            kmeans_iters: 25,
            seed: 42,
        }
    }
}

/// Per-search knobs; `bigK = k * k_factor` candidates survive the scan.
#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    pub k: usize,
    pub nprobe: usize,
    pub k_factor: usize,
}

impl SearchParams {
    pub fn new(k: usize, nprobe: usize) -> SearchParams {
        SearchParams {
            k,
            nprobe,
            k_factor: default_k_factor(k),
        }
    }

    fn big_k(&self) -> usize {
        self.k.saturating_mul(self.k_factor)
    }
}

/// The default refinement multiplier: 10 except for large `K`, where 4
/// already leaves hundreds of candidates.
pub fn default_k_factor(k: usize) -> usize {
    if k >= 100 {
        4
    } else {
        10
    }
}

/// Distance computations one query performed, per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Live PQ slots accumulated during the list scan.
    pub scan_dco: u64,
    /// Candidates recomputed exactly during refinement.
    pub refine_dco: u64,
}

/// Per-query results: IDs best-first, natural metric values alongside, and
/// the stage counters.
#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub ids: Vec<Vec<u64>>,
    pub dists: Vec<Vec<f32>>,
    pub stats: Vec<QueryStats>,
}

/// Instrumentation from the grouped execution mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupedTrace {
    /// How many times execution moved to a different list — one per
    /// distinct probed list, however many queries selected it.
    pub list_switches: u64,
}

/// The in-memory index.
pub struct RairsIndex {
    quantizer: CoarseQuantizer,
    codebook: PQCodebook,
    strategy: StrategyConfig,
    blk_sz: usize,
    lists: Vec<SeilList>,
    loc_map: LocationMap,
    store_ids: Vec<u64>,
    store_data: Vec<f32>,
    row_of: HashMap<u64, usize>,
}

impl RairsIndex {
    /// Assembles an empty index from trained components.
    pub fn new(
        quantizer: CoarseQuantizer,
        codebook: PQCodebook,
        strategy: StrategyConfig,
        blk_sz: usize,
    ) -> Result<RairsIndex> {
        if quantizer.dim() != codebook.dim() {
            return Err(Error::DimMismatch {
                expected: quantizer.dim(),
                got: codebook.dim(),
            });
        }
        if blk_sz == 0 {
            return Err(Error::InvalidConfig("blk_sz must be > 0".into()));
        }
        strategy.validate(quantizer.nlist())?;
        let nlist = quantizer.nlist();
        Ok(RairsIndex {
            quantizer,
            codebook,
            strategy,
            blk_sz,
            lists: vec![SeilList::default(); nlist],
            loc_map: LocationMap::new(),
            store_ids: Vec::new(),
            store_data: Vec::new(),
            row_of: HashMap::new(),
        })
    }

    /// Trains quantizer and codebook on `data` and indexes all of it.
    pub fn build(data: &VectorSet, params: &BuildParams) -> Result<RairsIndex> {
        if data.is_empty() {
            return Err(Error::InvalidConfig(
                "cannot build an index from an empty vector set".into(),
            ));
        }
        let nlist = params.nlist.unwrap_or_else(|| default_nlist(data.len()));
        let m_pq = params.m_pq.unwrap_or_else(|| default_m_pq(data.dim()));
        let quantizer = train_kmeans(data, nlist, params.metric, params.kmeans_iters, params.seed)?;
        let codebook = train_pq(data, m_pq, params.nbits, params.kmeans_iters, params.seed)?;
        let mut index = RairsIndex::new(quantizer, codebook, params.strategy, params.blk_sz)?;
        index.add_vectors(data)?;
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.quantizer.dim()
    }

    pub fn nlist(&self) -> usize {
        self.quantizer.nlist()
    }

    pub fn metric(&self) -> Metric {
        self.quantizer.metric()
    }

    /// Live (non-deleted) vectors.
    pub fn ntotal(&self) -> usize {
        self.store_ids.len()
    }

    pub fn strategy(&self) -> &StrategyConfig {
        &self.strategy
    }

    pub fn blk_sz(&self) -> usize {
        self.blk_sz
    }

    pub fn quantizer(&self) -> &CoarseQuantizer {
        &self.quantizer
    }

    pub fn codebook(&self) -> &PQCodebook {
        &self.codebook
    }

    pub fn contains(&self, id: u64) -> bool {
        self.row_of.contains_key(&id)
    }

    /// The raw stored vector, if `id` is live.
    pub fn vector(&self, id: u64) -> Option<&[f32]> {
        let dim = self.dim();
        self.row_of.get(&id).map(|&row| &self.store_data[row * dim..(row + 1) * dim])
    }

    /// Stored item copies per list (shared slots plus misc slots).
    pub fn list_occupancy(&self) -> Vec<u64> {
        self.lists.iter().map(|l| l.stored_copies()).collect()
    }

    fn has_multi(&self) -> bool {
        self.strategy.m > 2
    }

    /// Recomputes each live vector's assignment. Deterministic, because the
    /// quantizer never changes after construction.
    pub fn assignments(&self) -> Result<Vec<Assignment>> {
        if self.has_multi() {
            return Err(Error::InvalidConfig(
                "cell statistics require pair assignment (m <= 2)".into(),
            ));
        }
        let dim = self.dim();
        Ok((0..self.store_ids.len())
            .into_par_iter()
            .map(|row| {
                let v = &self.store_data[row * dim..(row + 1) * dim];
                let (a, b) = rair_assign(&self.quantizer, v, &self.strategy);
                Assignment::new(a, b, self.store_ids[row])
            })
            .collect())
    }

    /// Cell-distribution statistics over the live vectors.
    pub fn cell_stats(&self) -> Result<CellStats> {
        Ok(cell_stats(&self.assignments()?, self.blk_sz))
    }

    /// Assigns, encodes, and inserts a batch. Either the whole batch lands
    /// or the index is left unchanged.
    pub fn add_vectors(&mut self, vecs: &VectorSet) -> Result<()> {
        if vecs.is_empty() {
            return Ok(());
        }
        if vecs.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: vecs.dim(),
            });
        }
        // The set itself guarantees within-batch uniqueness.
        for &id in vecs.ids() {
            if self.row_of.contains_key(&id) {
                return Err(Error::DuplicateId(id));
            }
        }

        let m_pq = self.codebook.m_pq();
        if self.has_multi() {
            let rows: Vec<(Vec<u32>, u64, Vec<u8>)> = (0..vecs.len())
                .into_par_iter()
                .map(|i| {
                    let v = vecs.get(i);
                    let chosen = multi_assign(&self.quantizer, v, &self.strategy);
                    (chosen, vecs.id(i), self.codebook.encode(v))
                })
                .collect();
            let assigns: Vec<(Vec<u32>, u64)> =
                rows.iter().map(|(c, id, _)| (c.clone(), *id)).collect();
            let codes: Vec<u8> = rows.iter().flat_map(|(_, _, c)| c.iter().copied()).collect();
            seil_insert_multi(&mut self.lists, &mut self.loc_map, m_pq, &assigns, &codes)?;
        } else {
            let rows: Vec<(Assignment, Vec<u8>)> = (0..vecs.len())
                .into_par_iter()
                .map(|i| {
                    let v = vecs.get(i);
                    let (a, b) = rair_assign(&self.quantizer, v, &self.strategy);
                    (Assignment::new(a, b, vecs.id(i)), self.codebook.encode(v))
                })
                .collect();
            let assigns: Vec<Assignment> = rows.iter().map(|(a, _)| *a).collect();
            let codes: Vec<u8> = rows.iter().flat_map(|(_, c)| c.iter().copied()).collect();
            seil_insert(
                &mut self.lists,
                &mut self.loc_map,
                self.blk_sz,
                m_pq,
                &assigns,
                &codes,
            )?;
        }
        for (id, v) in vecs.iter() {
            self.row_of.insert(id, self.store_ids.len());
            self.store_ids.push(id);
            self.store_data.extend_from_slice(v);
        }
        Ok(())
    }

    fn check_search(&self, queries: &VectorSet, params: &SearchParams) -> Result<()> {
        if queries.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: queries.dim(),
            });
        }
        if params.k == 0 || params.k > self.ntotal() {
            return Err(Error::InvalidConfig(format!(
                "k {} out of range 1..={} stored vectors",
                params.k,
                self.ntotal()
            )));
        }
        if params.nprobe == 0 || params.nprobe > self.nlist() {
            return Err(Error::InvalidConfig(format!(
                "nprobe {} out of range 1..={}",
                params.nprobe,
                self.nlist()
            )));
        }
        if params.k_factor == 0 {
            return Err(Error::InvalidConfig("k_factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Exact re-ranking of scan candidates against the raw store.
    fn refine(&self, q: &[f32], candidates: &[Neighbor], k: usize) -> (Vec<u64>, Vec<f32>, u64) {
        let metric = self.metric();
        let dim = self.dim();
        let mut top = TopK::new(k);
        let mut refine_dco = 0u64;
        // Multi-assignment stores duplicated copies, so candidates may
        // repeat; pair-assignment candidates are already unique.
        let mut seen: HashSet<u64> = HashSet::new();
        let dedup = self.has_multi();
        for n in candidates {
            if dedup && !seen.insert(n.id) {
                continue;
            }
            let row = self.row_of[&n.id];
            let v = &self.store_data[row * dim..(row + 1) * dim];
            top.push(Neighbor {
                score: metric.score(q, v),
                id: n.id,
            });
            refine_dco += 1;
        }
        let sorted = top.into_sorted();
        let ids = sorted.iter().map(|n| n.id).collect();
        let dists = sorted.iter().map(|n| metric.score_to_value(n.score)).collect();
        (ids, dists, refine_dco)
    }

    /// Query-at-a-time search: per query, scan the `nprobe` nearest lists
    /// for `bigK` candidates and refine to the exact top `k`. Queries run
    /// in parallel.
    pub fn search(&self, queries: &VectorSet, params: &SearchParams) -> Result<SearchOutput> {
        self.check_search(queries, params)?;
        let big_k = params.big_k();
        let per_query: Vec<(Vec<u64>, Vec<f32>, QueryStats)> = (0..queries.len())
            .into_par_iter()
            .map(|qi| {
                let q = queries.get(qi);
                let lut = self.codebook.build_lut(q, self.metric());
                let probes = self.quantizer.find_nearest_lists(q, params.nprobe);
                let scan = seil_search(&self.lists, &lut, &probes, big_k, self.blk_sz);
                let (ids, dists, refine_dco) = self.refine(q, &scan.candidates, params.k);
                (
                    ids,
                    dists,
                    QueryStats {
                        scan_dco: scan.scan_dco,
                        refine_dco,
                    },
                )
            })
            .collect();
        Ok(collect_output(per_query))
    }

    /// Cache-friendly batch mode: (query, list) tasks grouped by list and
    /// processed in ascending list order, so each list's blocks are
    /// consumed back to back by every query probing it. Results are
    /// identical to [`RairsIndex::search`].
    pub fn batch_search_grouped(
        &self,
        queries: &VectorSet,
        params: &SearchParams,
    ) -> Result<(SearchOutput, GroupedTrace)> {
        self.check_search(queries, params)?;
        let big_k = params.big_k();

        struct QState {
            lut: LUT,
            /// Ascending probed lists; doubles as the visited test, since
            /// lists are processed globally in ascending order.
            probes: Vec<u32>,
            top: TopK,
            scan_dco: u64,
            scratch: Vec<(u64, f32)>,
        }
        let states: Vec<Mutex<QState>> = (0..queries.len())
            .into_par_iter()
            .map(|qi| {
                let q = queries.get(qi);
                let lut = self.codebook.build_lut(q, self.metric());
                let mut probes = self.quantizer.find_nearest_lists(q, params.nprobe);
                probes.sort_unstable();
                Mutex::new(QState {
                    lut,
                    probes,
                    top: TopK::new(big_k),
                    scan_dco: 0,
                    scratch: Vec::with_capacity(self.blk_sz),
                })
            })
            .collect();

        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (qi, state) in states.iter().enumerate() {
            for &l in &state.lock().expect("fresh state").probes {
                groups.entry(l).or_default().push(qi);
            }
        }

        let mut trace = GroupedTrace::default();
        for (&list_id, group) in &groups {
            trace.list_switches += 1;
            // Each query index appears once per group, so the locks are
            // uncontended; they only satisfy the aliasing rules.
            group.par_iter().for_each(|&qi| {
                let mut st = states[qi].lock().expect("single task per query per group");
                let QState {
                    lut,
                    probes,
                    top,
                    scan_dco,
                    scratch,
                } = &mut *st;
                // A list counts as visited once passed in the ascending
                // order; list_id itself is still in progress.
                let is_visited =
                    |l: u32| l < list_id && probes.binary_search(&l).is_ok();
                *scan_dco += scan_list_into(&self.lists, lut, list_id, &is_visited, top, scratch);
            });
        }

        let per_query: Vec<(Vec<u64>, Vec<f32>, QueryStats)> = states
            .into_par_iter()
            .enumerate()
            .map(|(qi, state)| {
                let st = state.into_inner().expect("scan finished");
                let candidates = st.top.into_sorted();
                let (ids, dists, refine_dco) = self.refine(queries.get(qi), &candidates, params.k);
                (
                    ids,
                    dists,
                    QueryStats {
                        scan_dco: st.scan_dco,
                        refine_dco,
                    },
                )
            })
            .collect();
        Ok((collect_output(per_query), trace))
    }

    /// Deletes by ID: list occurrences via the shared-cell deletion
    /// protocol, refine-store rows by swap-removal. Unknown IDs land in the
    /// report's `missing` while the rest proceed.
    pub fn delete_vectors(&mut self, ids: &[u64]) -> DeleteReport {
        let report = seil_delete(
            &mut self.lists,
            &mut self.loc_map,
            self.blk_sz,
            self.codebook.m_pq(),
            ids,
        );
        let dim = self.dim();
        for &id in &report.deleted {
            let row = self.row_of.remove(&id).expect("deleted ids were stored");
            let last = self.store_ids.len() - 1;
            if row != last {
                let moved = self.store_ids[last];
                self.store_ids[row] = moved;
                self.store_data.copy_within(last * dim..(last + 1) * dim, row * dim);
                self.row_of.insert(moved, row);
            }
            self.store_ids.pop();
            self.store_data.truncate(self.store_ids.len() * dim);
        }
        report
    }

    /// Writes the whole index to one file (little-endian, versioned magic).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        w.write_u32::<LittleEndian>(self.nlist() as u32)?;
        w.write_u32::<LittleEndian>(self.blk_sz as u32)?;
        w.write_u32::<LittleEndian>(self.codebook.m_pq() as u32)?;
        w.write_u32::<LittleEndian>(self.codebook.nbits())?;
        w.write_u8(match self.metric() {
            Metric::L2 => 0,
            Metric::Ip => 1,
        })?;
        write_strategy(&mut w, &self.strategy)?;
        write_f32s(&mut w, self.quantizer.centroids())?;
        write_f32s(&mut w, self.codebook.centroids())?;

        for list in &self.lists {
            w.write_u64::<LittleEndian>(list.ref_entries.len() as u64)?;
            for re in &list.ref_entries {
                w.write_u32::<LittleEndian>(re.other_list)?;
                w.write_u32::<LittleEndian>(re.nblocks)?;
                w.write_u32::<LittleEndian>(re.block_offset)?;
            }
            w.write_u64::<LittleEndian>(list.shared_blocks.len() as u64)?;
            for block in &list.shared_blocks {
                w.write_u32::<LittleEndian>(block.valid_count)?;
                for &id in &block.ids {
                    w.write_u64::<LittleEndian>(id)?;
                }
                w.write_all(&block.codes)?;
            }
            w.write_u64::<LittleEndian>(list.misc_ids.len() as u64)?;
            for &id in &list.misc_ids {
                w.write_u64::<LittleEndian>(id)?;
            }
            w.write_all(&list.misc_codes)?;
        }

        w.write_u64::<LittleEndian>(self.store_ids.len() as u64)?;
        for &id in &self.store_ids {
            w.write_u64::<LittleEndian>(id)?;
        }
        write_f32s(&mut w, &self.store_data)?;

        let mut ids: Vec<u64> = self.loc_map.keys().copied().collect();
        ids.sort_unstable();
        w.write_u64::<LittleEndian>(ids.len() as u64)?;
        for id in ids {
            let locs = &self.loc_map[&id];
            w.write_u64::<LittleEndian>(id)?;
            w.write_u32::<LittleEndian>(locs.len() as u32)?;
            for loc in locs {
                w.write_u32::<LittleEndian>(loc.list)?;
                w.write_u8(match loc.area {
                    Area::Shared => 0,
                    Area::Misc => 1,
                })?;
                w.write_u64::<LittleEndian>(loc.pos)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an index written by [`RairsIndex::save`], validating magic,
    /// header ranges, and the location map against the list structures.
    pub fn load(path: &Path) -> Result<RairsIndex> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Persistence("file shorter than the magic number".into()))?;
        if &magic[..7] != &MAGIC[..7] {
            return Err(Error::Persistence(format!(
                "bad magic {magic:02x?}; not an index file"
            )));
        }
        if magic[7] != MAGIC[7] {
            return Err(Error::Persistence(format!(
                "unsupported index format version {}",
                magic[7]
            )));
        }
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let nlist = r.read_u32::<LittleEndian>()? as usize;
        let blk_sz = r.read_u32::<LittleEndian>()? as usize;
        let m_pq = r.read_u32::<LittleEndian>()? as usize;
        let nbits = r.read_u32::<LittleEndian>()?;
        let metric = match r.read_u8()? {
            0 => Metric::L2,
            1 => Metric::Ip,
            other => {
                return Err(Error::Persistence(format!("unknown metric code {other}")));
            }
        };
        let strategy = read_strategy(&mut r)?;
        if dim == 0 || nlist == 0 || blk_sz == 0 {
            return Err(Error::Persistence(format!(
                "degenerate header: dim {dim}, nlist {nlist}, blk_sz {blk_sz}"
            )));
        }
        let centroids = read_f32s(&mut r, nlist * dim)?;
        let quantizer = CoarseQuantizer::from_centroids(dim, nlist, metric, centroids)
            .map_err(|e| Error::Persistence(format!("coarse centroids: {e}")))?;
        if m_pq == 0 || dim % m_pq != 0 {
            return Err(Error::Persistence(format!(
                "m_pq {m_pq} does not divide dim {dim}"
            )));
        }
        let ksub = 1usize
            .checked_shl(nbits)
            .filter(|_| (2..=8).contains(&nbits))
            .ok_or_else(|| Error::Persistence(format!("nbits {nbits} out of range 2..=8")))?;
        let pq_centroids = read_f32s(&mut r, m_pq * ksub * (dim / m_pq))?;
        let codebook = PQCodebook::from_centroids(dim, m_pq, nbits, pq_centroids)
            .map_err(|e| Error::Persistence(format!("codebook: {e}")))?;

        let mut lists = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let n_refs = read_len(&mut r)?;
            let mut ref_entries = Vec::with_capacity(n_refs);
            for _ in 0..n_refs {
                ref_entries.push(RefEntry {
                    other_list: r.read_u32::<LittleEndian>()?,
                    nblocks: r.read_u32::<LittleEndian>()?,
                    block_offset: r.read_u32::<LittleEndian>()?,
                });
            }
            let n_blocks = read_len(&mut r)?;
            let mut shared_blocks = Vec::with_capacity(n_blocks);
            for _ in 0..n_blocks {
                let valid_count = r.read_u32::<LittleEndian>()?;
                let mut ids = vec![0u64; blk_sz];
                r.read_u64_into::<LittleEndian>(&mut ids)?;
                let mut codes = vec![0u8; blk_sz * m_pq];
                r.read_exact(&mut codes)?;
                if valid_count as usize > blk_sz {
                    return Err(Error::Persistence(format!(
                        "block valid_count {valid_count} exceeds blk_sz {blk_sz}"
                    )));
                }
                shared_blocks.push(PackedBlock {
                    ids,
                    codes,
                    valid_count,
                });
            }
            let n_misc = read_len(&mut r)?;
            let mut misc_ids = vec![0u64; n_misc];
            r.read_u64_into::<LittleEndian>(&mut misc_ids)?;
            let mut misc_codes = vec![0u8; n_misc * m_pq];
            r.read_exact(&mut misc_codes)?;
            lists.push(SeilList {
                ref_entries,
                shared_blocks,
                misc_ids,
                misc_codes,
            });
        }
        for list in &lists {
            for re in &list.ref_entries {
                let owner = re.other_list as usize;
                if owner >= nlist
                    || (re.block_offset as usize + re.nblocks as usize)
                        > lists[owner].shared_blocks.len()
                {
                    return Err(Error::Persistence(format!(
                        "reference entry {re:?} points outside its target list"
                    )));
                }
            }
        }

        let n_store = read_len(&mut r)?;
        let mut store_ids = vec![0u64; n_store];
        r.read_u64_into::<LittleEndian>(&mut store_ids)?;
        let store_data = read_f32s(&mut r, n_store * dim)?;
        let mut row_of = HashMap::with_capacity(n_store);
        for (row, &id) in store_ids.iter().enumerate() {
            if id > MAX_VECTOR_ID || row_of.insert(id, row).is_some() {
                return Err(Error::Persistence(format!(
                    "refine store holds an invalid or repeated id {id}"
                )));
            }
        }

        let n_ids = read_len(&mut r)?;
        let mut loc_map = LocationMap::with_capacity(n_ids);
        for _ in 0..n_ids {
            let id = r.read_u64::<LittleEndian>()?;
            let n_locs = r.read_u32::<LittleEndian>()? as usize;
            let mut locs = Vec::with_capacity(n_locs);
            for _ in 0..n_locs {
                let list = r.read_u32::<LittleEndian>()?;
                let area = match r.read_u8()? {
                    0 => Area::Shared,
                    1 => Area::Misc,
                    other => {
                        return Err(Error::Persistence(format!("unknown area code {other}")));
                    }
                };
                let pos = r.read_u64::<LittleEndian>()?;
                locs.push(crate::seil::Loc { list, area, pos });
            }
            if loc_map.insert(id, locs).is_some() {
                return Err(Error::Persistence(format!(
                    "location map repeats id {id}"
                )));
            }
        }

        validate_location_map(&lists, &loc_map, blk_sz)?;
        if loc_map.len() != row_of.len() || loc_map.keys().any(|id| !row_of.contains_key(id)) {
            return Err(Error::Persistence(
                "location map and refine store disagree on the stored id set".into(),
            ));
        }

        let index = RairsIndex {
            quantizer,
            codebook,
            strategy,
            blk_sz,
            lists,
            loc_map,
            store_ids,
            store_data,
            row_of,
        };
        index.strategy.validate(index.nlist()).map_err(|e| {
            Error::Persistence(format!("stored strategy invalid for this index: {e}"))
        })?;
        Ok(index)
    }
}

const MAGIC: &[u8; 8] = b"RAIRIDX\x01";

fn collect_output(per_query: Vec<(Vec<u64>, Vec<f32>, QueryStats)>) -> SearchOutput {
    let mut out = SearchOutput {
        ids: Vec::with_capacity(per_query.len()),
        dists: Vec::with_capacity(per_query.len()),
        stats: Vec::with_capacity(per_query.len()),
    };
    for (ids, dists, stats) in per_query {
        out.ids.push(ids);
        out.dists.push(dists);
        out.stats.push(stats);
    }
    out
}

fn write_strategy<W: Write>(w: &mut W, s: &StrategyConfig) -> Result<()> {
    w.write_u8(match s.kind {
        StrategyKind::Single => 0,
        StrategyKind::NaiveRa => 1,
        StrategyKind::Soar => 2,
        StrategyKind::Air => 3,
    })?;
    w.write_u8(s.is_strict as u8)?;
    w.write_u8(match s.aggr {
        Aggregator::Max => 0,
        Aggregator::Min => 1,
        Aggregator::Avg => 2,
    })?;
    w.write_u32::<LittleEndian>(s.m as u32)?;
    w.write_u32::<LittleEndian>(s.n_cands as u32)?;
    w.write_f32::<LittleEndian>(s.lambda)?;
    Ok(())
}

fn read_strategy<R: Read>(r: &mut R) -> Result<StrategyConfig> {
    let kind = match r.read_u8()? {
        0 => StrategyKind::Single,
        1 => StrategyKind::NaiveRa,
        2 => StrategyKind::Soar,
        3 => StrategyKind::Air,
        other => {
            return Err(Error::Persistence(format!("unknown strategy code {other}")));
        }
    };
    let is_strict = r.read_u8()? != 0;
    let aggr = match r.read_u8()? {
        0 => Aggregator::Max,
        1 => Aggregator::Min,
        2 => Aggregator::Avg,
        other => {
            return Err(Error::Persistence(format!("unknown aggregator code {other}")));
        }
    };
    let m = r.read_u32::<LittleEndian>()? as usize;
    let n_cands = r.read_u32::<LittleEndian>()? as usize;
    let lambda = r.read_f32::<LittleEndian>()?;
    Ok(StrategyConfig {
        kind,
        lambda,
        n_cands,
        is_strict,
        m,
        aggr,
    })
}

fn write_f32s<W: Write>(w: &mut W, xs: &[f32]) -> Result<()> {
    for &x in xs {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut xs = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut xs)?;
    Ok(xs)
}

/// Reads a u64 length field, bounding it so corrupt files cannot trigger
/// absurd allocations.
fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u64::<LittleEndian>()?;
    if n > (1 << 40) {
        return Err(Error::Persistence(format!("implausible length field {n}")));
    }
    Ok(n as usize)
}
