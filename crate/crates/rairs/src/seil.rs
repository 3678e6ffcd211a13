//! The shared-cell list layout.
//!
//! A *cell* `cell_{i,j}` (`i <= j`) is the set of vectors assigned to lists
//! `i` and `j`; singly assigned vectors live in `cell_{i,i}`. Storing every
//! doubly assigned vector in both of its lists would scan it twice whenever
//! a query probes both. Instead, each cell's full blocks are stored once —
//! in the smaller-ID list's shared-block array — and the larger-ID list
//! keeps a [`RefEntry`] pointing at them. Only the cell's remainder (fewer
//! than `BLK_SZ` items) is duplicated, into the *miscellaneous* area of both
//! lists, with the other list's ID embedded in the stored ID's high bits.
//!
//! Search processes selected lists in ascending ID order and keeps a
//! visited-list set. A reference entry is skipped when its target list was
//! already visited (its blocks were scanned there); locally stored shared
//! blocks never need a check, because the only other path to them is a
//! reference entry in a *larger*-ID list, which will see this list as
//! visited. Miscellaneous items cannot be skipped before their distance is
//! computed — the embedded ID is examined afterwards, so their duplicates
//! still cost distance computations, but never produce duplicate
//! candidates.

use std::collections::HashMap;

use crate::assign::Assignment;
use crate::error::{Error, Result};
use crate::metric::{Neighbor, TopK};
use crate::pq::{scan_block, scan_slots, PackedBlock, INVALID_ID, LUT};

/// A stored 64-bit ID: the vector ID in bits 0..48 and a list tag in bits
/// 48..64. The tag is 0 for shared-block slots and `other_list + 1` for
/// miscellaneous slots (singly assigned items embed their own list). The
/// all-ones word is the invalid/padding ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoredID(pub u64);

const TAG_SHIFT: u32 = 48;
const VEC_ID_MASK: u64 = (1 << TAG_SHIFT) - 1;

impl StoredID {
    pub const INVALID: StoredID = StoredID(INVALID_ID);

    /// Encodes a shared-block slot (no tag).
    #[inline]
    pub fn shared(vec_id: u64) -> StoredID {
        debug_assert!(vec_id <= VEC_ID_MASK);
        StoredID(vec_id)
    }

    /// Encodes a miscellaneous slot with the other assigned list.
    #[inline]
    pub fn misc(vec_id: u64, other_list: u32) -> StoredID {
        debug_assert!(vec_id <= VEC_ID_MASK);
        debug_assert!(other_list < u16::MAX as u32);
        StoredID(vec_id | ((other_list as u64 + 1) << TAG_SHIFT))
    }

    #[inline]
    pub fn is_invalid(self) -> bool {
        self.0 == INVALID_ID
    }

    #[inline]
    pub fn vec_id(self) -> u64 {
        self.0 & VEC_ID_MASK
    }

    /// The embedded other-list ID of a miscellaneous slot; `None` for a
    /// shared-block slot.
    #[inline]
    pub fn misc_other_list(self) -> Option<u32> {
        match self.0 >> TAG_SHIFT {
            0 => None,
            tag => Some(tag as u32 - 1),
        }
    }
}

/// Points one list at a run of shared blocks physically stored in another
/// (always smaller-ID) list: `nblocks` blocks starting at `block_offset`
/// within `other_list`'s shared-block array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefEntry {
    pub other_list: u32,
    pub nblocks: u32,
    pub block_offset: u32,
}

/// One inverted list in the shared-cell layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeilList {
    /// References to shared blocks stored in smaller-ID lists.
    pub ref_entries: Vec<RefEntry>,
    /// Full blocks of cells whose smaller list is this one (plus full
    /// blocks of this list's single-assignment cell).
    pub shared_blocks: Vec<PackedBlock>,
    /// Miscellaneous area: flat slot-major remainder items, scanned as
    /// blocks of `BLK_SZ`. Stored IDs carry the embedded other-list tag.
    pub misc_ids: Vec<u64>,
    /// `misc_ids.len() * m_pq` code words.
    pub misc_codes: Vec<u8>,
}

impl SeilList {
    /// Live item copies stored in this list (shared slots + misc slots).
    pub fn stored_copies(&self) -> u64 {
        let shared: u64 = self.shared_blocks.iter().map(|b| b.valid_count as u64).sum();
        shared + self.misc_ids.len() as u64
    }
}

/// Where one stored copy of a vector lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Area {
    Shared,
    Misc,
}

/// A location-map entry: list, area, and position. For a shared slot the
/// position is `block_index * BLK_SZ + slot`; for a miscellaneous slot it
/// is the flat index into the misc arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Loc {
    pub list: u32,
    pub area: Area,
    pub pos: u64,
}

/// Vector ID -> stored copies. Pair assignments produce at most two
/// entries; m-way multi-assignment produces up to m.
pub type LocationMap = HashMap<u64, Vec<Loc>>;

/// Inserts one batch of pair-assigned vectors.
///
/// The batch is sorted by `(list1, list2, vec_id)` and grouped into cells.
/// Per cell, `nitems / BLK_SZ` full blocks are appended to the smaller
/// list's shared-block array — covered by a single new [`RefEntry`] in the
/// larger list when the lists differ — and the remainder goes to the
/// miscellaneous area of both lists (once if singly assigned). Misc items
/// fill from the previous batch's partial tail block because the area is a
/// flat array. Reference entries from earlier batches are never merged.
///
/// Every vector ID must be absent from `loc_map`; a duplicate anywhere in
/// the batch rejects the whole batch before any mutation.
pub fn seil_insert(
    lists: &mut [SeilList],
    loc_map: &mut LocationMap,
    blk_sz: usize,
    m_pq: usize,
    assigns: &[Assignment],
    codes: &[u8],
) -> Result<()> {
    if codes.len() != assigns.len() * m_pq {
        return Err(Error::InvalidConfig(format!(
            "code buffer length {} does not equal {} assignments x m_pq {m_pq}",
            codes.len(),
            assigns.len()
        )));
    }
    let nlist = lists.len() as u32;
    for a in assigns {
        if a.list1 > a.list2 || a.list2 >= nlist {
            return Err(Error::InvalidConfig(format!(
                "assignment ({}, {}) out of range for {nlist} lists",
                a.list1, a.list2
            )));
        }
    }
    check_fresh_ids(loc_map, assigns.iter().map(|a| a.vec_id))?;

    let mut order: Vec<usize> = (0..assigns.len()).collect();
    order.sort_unstable_by_key(|&i| (assigns[i].list1, assigns[i].list2, assigns[i].vec_id));

    let mut at = 0;
    while at < order.len() {
        let key = (assigns[order[at]].list1, assigns[order[at]].list2);
        let mut end = at + 1;
        while end < order.len() && (assigns[order[end]].list1, assigns[order[end]].list2) == key {
            end += 1;
        }
        insert_cell(lists, loc_map, blk_sz, m_pq, key, &order[at..end], assigns, codes);
        at = end;
    }
    Ok(())
}

/// Inserts one batch of m-way assigned vectors in the duplicated layout:
/// every chosen list receives its own miscellaneous copy with a
/// self-embedded tag, so no copy is ever dropped during a scan and
/// deduplication is the caller's responsibility (cell sharing only exists
/// for pair assignments).
pub fn seil_insert_multi(
    lists: &mut [SeilList],
    loc_map: &mut LocationMap,
    m_pq: usize,
    assigns: &[(Vec<u32>, u64)],
    codes: &[u8],
) -> Result<()> {
    if codes.len() != assigns.len() * m_pq {
        return Err(Error::InvalidConfig(format!(
            "code buffer length {} does not equal {} assignments x m_pq {m_pq}",
            codes.len(),
            assigns.len()
        )));
    }
    let nlist = lists.len() as u32;
    for (chosen, _) in assigns {
        if chosen.is_empty()
            || chosen.iter().any(|&l| l >= nlist)
            || chosen.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(format!(
                "multi-assignment {chosen:?} must be distinct ascending lists below {nlist}"
            )));
        }
    }
    check_fresh_ids(loc_map, assigns.iter().map(|&(_, id)| id))?;

    for (i, (chosen, vec_id)) in assigns.iter().enumerate() {
        let code = &codes[i * m_pq..(i + 1) * m_pq];
        for &list in chosen {
            let l = &mut lists[list as usize];
            let pos = l.misc_ids.len() as u64;
            l.misc_ids.push(StoredID::misc(*vec_id, list).0);
            l.misc_codes.extend_from_slice(code);
            loc_map.entry(*vec_id).or_default().push(Loc {
                list,
                area: Area::Misc,
                pos,
            });
        }
    }
    Ok(())
}

fn check_fresh_ids(loc_map: &LocationMap, ids: impl Iterator<Item = u64>) -> Result<()> {
    let mut batch = std::collections::HashSet::new();
    for id in ids {
        if loc_map.contains_key(&id) || !batch.insert(id) {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(())
}

fn insert_cell(
    lists: &mut [SeilList],
    loc_map: &mut LocationMap,
    blk_sz: usize,
    m_pq: usize,
    (list1, list2): (u32, u32),
    members: &[usize],
    assigns: &[Assignment],
    codes: &[u8],
) {
    let nfull = members.len() / blk_sz;
    let code_of = |i: usize| &codes[i * m_pq..(i + 1) * m_pq];

    if nfull > 0 {
        let block_offset = lists[list1 as usize].shared_blocks.len() as u32;
        for b in 0..nfull {
            let slots = &members[b * blk_sz..(b + 1) * blk_sz];
            let mut ids = Vec::with_capacity(blk_sz);
            let mut block_codes = Vec::with_capacity(blk_sz * m_pq);
            for (slot, &i) in slots.iter().enumerate() {
                let vec_id = assigns[i].vec_id;
                ids.push(StoredID::shared(vec_id).0);
                block_codes.extend_from_slice(code_of(i));
                loc_map.entry(vec_id).or_default().push(Loc {
                    list: list1,
                    area: Area::Shared,
                    pos: (block_offset as u64 + b as u64) * blk_sz as u64 + slot as u64,
                });
            }
            lists[list1 as usize]
                .shared_blocks
                .push(PackedBlock::from_entries(blk_sz, m_pq, &ids, &block_codes));
        }
        if list1 != list2 {
            lists[list2 as usize].ref_entries.push(RefEntry {
                other_list: list1,
                nblocks: nfull as u32,
                block_offset,
            });
        }
    }

    for &i in &members[nfull * blk_sz..] {
        let vec_id = assigns[i].vec_id;
        let mut push_misc = |list: u32, other: u32| {
            let l = &mut lists[list as usize];
            let pos = l.misc_ids.len() as u64;
            l.misc_ids.push(StoredID::misc(vec_id, other).0);
            l.misc_codes.extend_from_slice(code_of(i));
            loc_map.entry(vec_id).or_default().push(Loc {
                list,
                area: Area::Misc,
                pos,
            });
        };
        // A singly assigned item embeds its own list, which is never in the
        // visited set during its own list's iteration, so it survives the
        // misc filter.
        push_misc(list1, list2);
        if list1 != list2 {
            push_misc(list2, list1);
        }
    }
}

/// The result of scanning the selected lists for one query.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    /// Best `bigK` candidates, ascending score, ties toward the smaller
    /// vector ID.
    pub candidates: Vec<Neighbor>,
    /// Live slots whose distance was accumulated (padding and tombstones
    /// excluded; misc items dropped *after* computation still count).
    pub scan_dco: u64,
}

/// Scans the selected lists and returns the `big_k` best candidates.
///
/// Lists are processed in ascending ID order regardless of the order given,
/// which makes the result independent of the caller's permutation. Per
/// list: reference entries are followed unless their target was already
/// visited; local shared blocks are scanned unconditionally; miscellaneous
/// items are scanned and then dropped if their embedded other list was
/// visited. Under pair assignment every live vector therefore contributes
/// exactly one candidate however many probed lists hold it.
pub fn seil_search(
    lists: &[SeilList],
    lut: &LUT,
    selected_lists: &[u32],
    big_k: usize,
    blk_sz: usize,
) -> ScanOutcome {
    let mut selected: Vec<u32> = selected_lists.to_vec();
    selected.sort_unstable();
    selected.dedup();

    let mut visited = vec![false; lists.len()];
    let mut top = TopK::new(big_k);
    let mut scan_dco = 0u64;
    let mut scratch: Vec<(u64, f32)> = Vec::with_capacity(blk_sz);

    for &list_id in &selected {
        scan_dco += scan_list_into(
            lists,
            lut,
            list_id,
            &|l| visited[l as usize],
            &mut top,
            &mut scratch,
        );
        visited[list_id as usize] = true;
    }

    ScanOutcome {
        candidates: top.into_sorted(),
        scan_dco,
    }
}

/// One iteration of the search loop: scans list `list_id` into `top`,
/// consulting `is_visited` for reference-entry skipping and miscellaneous
/// dropping. Returns the distance computations performed. The caller is
/// responsible for visiting lists in ascending ID order and for treating
/// `list_id` itself as not yet visited.
pub(crate) fn scan_list_into(
    lists: &[SeilList],
    lut: &LUT,
    list_id: u32,
    is_visited: &dyn Fn(u32) -> bool,
    top: &mut TopK,
    scratch: &mut Vec<(u64, f32)>,
) -> u64 {
    let list = &lists[list_id as usize];
    let mut scan_dco = 0u64;

    for re in &list.ref_entries {
        if is_visited(re.other_list) {
            continue;
        }
        let owner = &lists[re.other_list as usize];
        let from = re.block_offset as usize;
        for block in &owner.shared_blocks[from..from + re.nblocks as usize] {
            scratch.clear();
            scan_dco += scan_block(lut, block, scratch);
            for &(raw, score) in scratch.iter() {
                top.push(Neighbor {
                    score,
                    id: StoredID(raw).vec_id(),
                });
            }
        }
    }

    for block in &list.shared_blocks {
        scratch.clear();
        scan_dco += scan_block(lut, block, scratch);
        for &(raw, score) in scratch.iter() {
            top.push(Neighbor {
                score,
                id: StoredID(raw).vec_id(),
            });
        }
    }

    scratch.clear();
    scan_dco += scan_slots(lut, &list.misc_ids, &list.misc_codes, scratch);
    for &(raw, score) in scratch.iter() {
        let stored = StoredID(raw);
        let other = stored
            .misc_other_list()
            .expect("misc slots always carry a tag");
        if !is_visited(other) {
            top.push(Neighbor {
                score,
                id: stored.vec_id(),
            });
        }
    }

    scan_dco
}

/// Per-ID outcome of a deletion batch.
#[derive(Debug, Clone, Default)]
pub struct DeleteReport {
    pub deleted: Vec<u64>,
    /// IDs that were not in the index; the rest of the batch proceeds.
    pub missing: Vec<u64>,
}

/// Deletes vectors by ID.
///
/// Shared-block occurrences are tombstoned in place: the slot keeps its
/// position (scans still visit it) but its ID becomes invalid and the
/// block's `valid_count` drops, so the slot no longer produces candidates
/// or counts toward scan totals. Miscellaneous occurrences are replaced by
/// the last misc item of the same list, whose location-map entry is
/// updated. Tombstones are reclaimed only by rebuilding the index.
pub fn seil_delete(
    lists: &mut [SeilList],
    loc_map: &mut LocationMap,
    blk_sz: usize,
    m_pq: usize,
    ids: &[u64],
) -> DeleteReport {
    let mut report = DeleteReport::default();
    for &id in ids {
        let locs = match loc_map.remove(&id) {
            Some(locs) => locs,
            None => {
                report.missing.push(id);
                continue;
            }
        };
        for loc in locs {
            let list = &mut lists[loc.list as usize];
            match loc.area {
                Area::Shared => {
                    let block = &mut list.shared_blocks[loc.pos as usize / blk_sz];
                    let slot = loc.pos as usize % blk_sz;
                    debug_assert_eq!(StoredID(block.ids[slot]).vec_id(), id);
                    block.ids[slot] = INVALID_ID;
                    block.valid_count -= 1;
                }
                Area::Misc => {
                    let pos = loc.pos as usize;
                    let last = list.misc_ids.len() - 1;
                    debug_assert_eq!(StoredID(list.misc_ids[pos]).vec_id(), id);
                    if pos != last {
                        list.misc_ids[pos] = list.misc_ids[last];
                        let (dst, src) = (pos * m_pq, last * m_pq);
                        list.misc_codes.copy_within(src..src + m_pq, dst);
                        let moved = StoredID(list.misc_ids[pos]).vec_id();
                        let entry = loc_map
                            .get_mut(&moved)
                            .expect("moved misc item is live and mapped");
                        let slot = entry
                            .iter_mut()
                            .find(|l| l.list == loc.list && l.area == Area::Misc && l.pos == last as u64)
                            .expect("moved misc item location is mapped");
                        slot.pos = pos as u64;
                    }
                    list.misc_ids.pop();
                    list.misc_codes.truncate(list.misc_ids.len() * m_pq);
                }
            }
        }
        report.deleted.push(id);
    }
    report
}

/// Aggregate statistics over one batch of pair assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    /// Cell size -> number of cells of that size.
    pub size_histogram: std::collections::BTreeMap<usize, usize>,
    /// Fraction of vectors living in cells of at least `BLK_SZ` items.
    pub large_cell_vector_fraction: f64,
    /// Fraction of vectors assigned to two distinct lists.
    pub pair_cell_vector_fraction: f64,
    /// Item copies stored once in full shared blocks.
    pub shared_block_vectors: u64,
    /// Item copies stored in miscellaneous areas (two per remainder item of
    /// a two-list cell, one for singly assigned remainders).
    pub misc_vector_copies: u64,
}

impl CellStats {
    pub fn ncells(&self) -> usize {
        self.size_histogram.values().sum()
    }

    /// Total stored item copies implied by the assignments.
    pub fn stored_copies(&self) -> u64 {
        self.shared_block_vectors + self.misc_vector_copies
    }
}

/// Groups assignments into cells and reports the distribution described by
/// [`CellStats`]; pure aggregation, no list structures involved.
pub fn cell_stats(assigns: &[Assignment], blk_sz: usize) -> CellStats {
    let mut cells: HashMap<(u32, u32), usize> = HashMap::new();
    let mut pair_vectors = 0u64;
    for a in assigns {
        *cells.entry((a.list1, a.list2)).or_default() += 1;
        if !a.is_single() {
            pair_vectors += 1;
        }
    }
    let mut size_histogram = std::collections::BTreeMap::new();
    let mut large_vectors = 0u64;
    let mut shared = 0u64;
    let mut misc = 0u64;
    for (&(l1, l2), &n) in &cells {
        *size_histogram.entry(n).or_default() += 1;
        if n >= blk_sz {
            large_vectors += n as u64;
        }
        let full_items = (n / blk_sz * blk_sz) as u64;
        let rem = (n % blk_sz) as u64;
        shared += full_items;
        misc += if l1 == l2 { rem } else { 2 * rem };
    }
    let total = assigns.len() as f64;
    CellStats {
        size_histogram,
        large_cell_vector_fraction: if total > 0.0 {
            large_vectors as f64 / total
        } else {
            0.0
        },
        pair_cell_vector_fraction: if total > 0.0 {
            pair_vectors as f64 / total
        } else {
            0.0
        },
        shared_block_vectors: shared,
        misc_vector_copies: misc,
    }
}

/// Recomputes the location map by walking the list structures; used to
/// validate a deserialized index.
pub(crate) fn rebuild_location_map(lists: &[SeilList], blk_sz: usize) -> LocationMap {
    let mut map: LocationMap = HashMap::new();
    for (list_id, list) in lists.iter().enumerate() {
        for (b, block) in list.shared_blocks.iter().enumerate() {
            for (slot, &raw) in block.ids.iter().enumerate() {
                let stored = StoredID(raw);
                if stored.is_invalid() {
                    continue;
                }
                map.entry(stored.vec_id()).or_default().push(Loc {
                    list: list_id as u32,
                    area: Area::Shared,
                    pos: (b * blk_sz + slot) as u64,
                });
            }
        }
        for (pos, &raw) in list.misc_ids.iter().enumerate() {
            map.entry(StoredID(raw).vec_id()).or_default().push(Loc {
                list: list_id as u32,
                area: Area::Misc,
                pos: pos as u64,
            });
        }
    }
    map
}

/// Checks that a location map and the list structures describe each other
/// exactly; returns the offending detail on mismatch.
pub(crate) fn validate_location_map(
    lists: &[SeilList],
    loc_map: &LocationMap,
    blk_sz: usize,
) -> Result<()> {
    let rebuilt = rebuild_location_map(lists, blk_sz);
    if rebuilt.len() != loc_map.len() {
        return Err(Error::Persistence(format!(
            "location map covers {} ids but lists hold {}",
            loc_map.len(),
            rebuilt.len()
        )));
    }
    for (id, locs) in &rebuilt {
        let mut expect = locs.clone();
        let mut got = match loc_map.get(id) {
            Some(g) => g.clone(),
            None => {
                return Err(Error::Persistence(format!(
                    "vector {id} stored in lists but absent from the location map"
                )))
            }
        };
        let key = |l: &Loc| (l.list, l.area == Area::Misc, l.pos);
        expect.sort_unstable_by_key(key);
        got.sort_unstable_by_key(key);
        if expect != got {
            return Err(Error::Persistence(format!(
                "location map disagrees with lists for vector {id}"
            )));
        }
    }
    Ok(())
}
