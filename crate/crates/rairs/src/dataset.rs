//! In-memory vector sets, the fvecs/bvecs/ivecs file formats, and the
//! synthetic data generator.
//!
//! All three file formats share one record layout: a little-endian `u32`
//! element count `d` followed by `d` payload elements (`f32` for fvecs, `u8`
//! for bvecs, `i32` for ivecs). Every record in a file must carry the same
//! `d`; a short record is reported with the byte offset where it started.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Stored vector IDs live in the low 48 bits of a packed word; anything
/// larger is rejected at ingestion.
pub const MAX_VECTOR_ID: u64 = (1 << 48) - 1;

/// A dense, row-major set of `f32` vectors with explicit 64-bit IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<u64>,
}

impl VectorSet {
    /// An empty set of the given dimensionality.
    pub fn new(dim: usize) -> Self {
        VectorSet {
            dim,
            data: Vec::new(),
            ids: Vec::new(),
        }
    }

    /// Builds a set from row-major data and per-row IDs, validating every
    /// invariant: matching lengths, finite components, IDs unique and within
    /// the 48-bit range.
    pub fn from_rows(dim: usize, data: Vec<f32>, ids: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("vector dimension must be > 0".into()));
        }
        if data.len() != dim * ids.len() {
            return Err(Error::InvalidConfig(format!(
                "data length {} does not equal dim {} x count {}",
                data.len(),
                dim,
                ids.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite component {bad} in vector data"
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for &id in &ids {
            if id > MAX_VECTOR_ID {
                return Err(Error::InvalidConfig(format!(
                    "vector id {id} exceeds the 48-bit limit"
                )));
            }
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(VectorSet { dim, data, ids })
    }

    /// Builds a set with IDs `0..count` from row-major data.
    pub fn with_sequential_ids(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("vector dimension must be > 0".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidConfig(format!(
                "data length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        Self::from_rows(dim, data, (0..n as u64).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The `i`-th vector.
    #[inline]
    pub fn get(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The `i`-th vector's ID.
    #[inline]
    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Appends one vector. The ID must be fresh and within range.
    pub fn push(&mut self, id: u64, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if id > MAX_VECTOR_ID {
            return Err(Error::InvalidConfig(format!(
                "vector id {id} exceeds the 48-bit limit"
            )));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite component {bad} in vector data"
            )));
        }
        self.data.extend_from_slice(v);
        self.ids.push(id);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.ids
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Rows selected by index, in the given order, keeping IDs.
    pub fn select(&self, rows: &[usize]) -> VectorSet {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.get(r));
            ids.push(self.ids[r]);
        }
        VectorSet {
            dim: self.dim,
            data,
            ids,
        }
    }
}

/// On-disk vector formats, all little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// `u32` dim + `f32` components.
    Fvecs,
    /// `u32` dim + `u8` components (widened to `f32` on load).
    Bvecs,
    /// `u32` dim + `i32` components (converted to `f32` on load).
    Ivecs,
}

impl FileFormat {
    /// Infers a format from the file extension.
    pub fn from_path(path: &Path) -> Option<FileFormat> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(FileFormat::Fvecs),
            "bvecs" => Some(FileFormat::Bvecs),
            "ivecs" => Some(FileFormat::Ivecs),
            _ => None,
        }
    }

    fn element_size(&self) -> u64 {
        match self {
            FileFormat::Fvecs | FileFormat::Ivecs => 4,
            FileFormat::Bvecs => 1,
        }
    }
}

/// Loads a vector file into memory with IDs `0..count`.
///
/// Fails with a byte-offset diagnostic on a truncated record and rejects
/// files whose records disagree on the dimension.
pub fn load_vectors(path: &Path, format: FileFormat) -> Result<VectorSet> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut reader = BufReader::new(file);
    let mut data: Vec<f32> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut offset: u64 = 0;
    loop {
        let d = match reader.read_u32::<LittleEndian>() {
            Ok(d) => d as usize,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if d == 0 {
            return Err(Error::format(path, "record with zero dimension", offset));
        }
        match dim {
            None => dim = Some(d),
            Some(expect) if expect != d => {
                return Err(Error::format(
                    path,
                    format!("inconsistent dimension: expected {expect}, found {d}"),
                    offset,
                ));
            }
            Some(_) => {}
        }
        let read = match format {
            FileFormat::Fvecs => read_f32_payload(&mut reader, d, &mut data),
            FileFormat::Bvecs => read_u8_payload(&mut reader, d, &mut data),
            FileFormat::Ivecs => read_i32_payload(&mut reader, d, &mut data),
        };
        match read {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                return Err(Error::format(path, "truncated record", offset));
            }
            Err(e) => return Err(e.into()),
        }
        offset += 4 + d as u64 * format.element_size();
    }
    let dim = match dim {
        Some(d) => d,
        None => return Err(Error::format(path, "empty vector file", 0)),
    };
    if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::format(
            path,
            format!("non-finite component {bad}"),
            0,
        ));
    }
    VectorSet::with_sequential_ids(dim, data)
}

fn read_f32_payload(reader: &mut impl Read, d: usize, out: &mut Vec<f32>) -> std::io::Result<()> {
    for _ in 0..d {
        out.push(reader.read_f32::<LittleEndian>()?);
    }
    Ok(())
}

fn read_u8_payload(reader: &mut impl Read, d: usize, out: &mut Vec<f32>) -> std::io::Result<()> {
    let mut buf = vec![0u8; d];
    reader.read_exact(&mut buf)?;
    out.extend(buf.iter().map(|&b| b as f32));
    Ok(())
}

fn read_i32_payload(reader: &mut impl Read, d: usize, out: &mut Vec<f32>) -> std::io::Result<()> {
    for _ in 0..d {
        out.push(reader.read_i32::<LittleEndian>()? as f32);
    }
    Ok(())
}

/// Writes a set in fvecs layout. Round-trips exactly through
/// [`load_vectors`]; IDs are not stored (the format has none).
pub fn write_fvecs(path: &Path, set: &VectorSet) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for (_, row) in set.iter() {
        writer.write_u32::<LittleEndian>(set.dim() as u32)?;
        for &x in row {
            writer.write_f32::<LittleEndian>(x)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Loads an ivecs file as integer rows (the ground-truth interchange format).
pub fn load_ivecs(path: &Path) -> Result<Vec<Vec<i32>>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<i32>> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut offset: u64 = 0;
    loop {
        let d = match reader.read_u32::<LittleEndian>() {
            Ok(d) => d as usize,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        match dim {
            None => dim = Some(d),
            Some(expect) if expect != d => {
                return Err(Error::format(
                    path,
                    format!("inconsistent dimension: expected {expect}, found {d}"),
                    offset,
                ));
            }
            Some(_) => {}
        }
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            match reader.read_i32::<LittleEndian>() {
                Ok(x) => row.push(x),
                Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                    return Err(Error::format(path, "truncated record", offset));
                }
                Err(e) => return Err(e.into()),
            }
        }
        rows.push(row);
        offset += 4 + d as u64 * 4;
    }
    Ok(rows)
}

/// Writes integer rows in ivecs layout. All rows must have equal length.
pub fn write_ivecs(path: &Path, rows: &[Vec<i32>]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    for row in rows {
        writer.write_u32::<LittleEndian>(row.len() as u32)?;
        for &x in row {
            writer.write_i32::<LittleEndian>(x)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Generates `n` points of a deterministic Gaussian-mixture set.
///
/// Cluster centers are drawn uniformly from `[0, 1)^dim`; point `i` is
/// center `i % nclusters` plus independent `N(0, spread^2)` noise per
/// component, and gets ID `i`. The same arguments always produce the same
/// set, bit for bit.
pub fn generate_synthetic(
    n: usize,
    dim: usize,
    nclusters: usize,
    seed: u64,
    spread: f32,
) -> Result<VectorSet> {
    generate_synthetic_part(n, dim, nclusters, seed, spread, 0)
}

/// Like [`generate_synthetic`], but skips the first `skip` points of the
/// stream and returns the next `n` (with IDs `skip..skip + n`). Disjoint
/// slices of one stream share cluster centers, which is how query sets are
/// drawn from the same distribution as a base set.
pub fn generate_synthetic_part(
    n: usize,
    dim: usize,
    nclusters: usize,
    seed: u64,
    spread: f32,
    skip: usize,
) -> Result<VectorSet> {
    if dim == 0 {
        return Err(Error::InvalidConfig("vector dimension must be > 0".into()));
    }
    if nclusters == 0 {
        return Err(Error::InvalidConfig("nclusters must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![0.0f32; nclusters * dim];
    for c in centers.iter_mut() {
        *c = rng.random_range(0.0..1.0);
    }
    let normal = StandardNormal;
    for _ in 0..skip * dim {
        let _: f32 = normal.sample(&mut rng);
    }
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        let center = &centers[((skip + i) % nclusters) * dim..][..dim];
        for &c in center {
            let noise: f32 = normal.sample(&mut rng);
            data.push(c + spread * noise);
        }
    }
    let ids = (skip as u64..(skip + n) as u64).collect();
    VectorSet::from_rows(dim, data, ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().expect("tempdir").keep();
        dir.join(name)
    }

    #[test]
    fn fvecs_round_trip_and_byte_length() {
        let set = VectorSet::with_sequential_ids(4, vec![0.0, 1.5, -2.0, 3.25, 4.0, 5.0, 6.0, 7.0])
            .unwrap();
        let path = tmp("two.fvecs");
        write_fvecs(&path, &set).unwrap();
        // Two 4-d records: each 4 bytes of header + 16 bytes of payload.
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 2 * (4 + 16));
        let loaded = load_vectors(&path, FileFormat::Fvecs).unwrap();
        assert_eq!(loaded, set);
    }

    #[test]
    fn truncated_record_reports_its_byte_offset() {
        let path = tmp("cut.fvecs");
        let mut bytes = Vec::new();
        // One complete 2-d record (12 bytes), then a record that promises two
        // components but delivers one.
        for word in [2u32, 0x3f800000, 0x40000000, 2, 0x3f800000] {
            bytes.extend_from_slice(&word.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let err = load_vectors(&path, FileFormat::Fvecs).unwrap_err();
        match err {
            Error::Format { offset, detail, .. } => {
                assert_eq!(offset, 12);
                assert!(detail.contains("truncated"), "detail: {detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_dimension_is_rejected() {
        let path = tmp("mixed.fvecs");
        let mut bytes = Vec::new();
        for word in [1u32, 0x3f800000, 2, 0x3f800000, 0x40000000] {
            bytes.extend_from_slice(&word.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let err = load_vectors(&path, FileFormat::Fvecs).unwrap_err();
        match err {
            Error::Format { offset, detail, .. } => {
                assert_eq!(offset, 8);
                assert!(detail.contains("inconsistent dimension"), "detail: {detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bvecs_widens_bytes() {
        let path = tmp("b.bvecs");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8, 128, 255]);
        std::fs::write(&path, &bytes).unwrap();
        let set = load_vectors(&path, FileFormat::Bvecs).unwrap();
        assert_eq!(set.get(0), &[0.0, 128.0, 255.0]);
    }

    #[test]
    fn ivecs_round_trip() {
        let rows = vec![vec![5, 3, 9], vec![1, 2, 7]];
        let path = tmp("gt.ivecs");
        write_ivecs(&path, &rows).unwrap();
        assert_eq!(load_ivecs(&path).unwrap(), rows);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(1000, 16, 10, 42, 0.05).unwrap();
        let b = generate_synthetic(1000, 16, 10, 42, 0.05).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(1000, 16, 10, 43, 0.05).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_part_continues_the_stream() {
        // A skipped slice shares centers with the base slice: points i and
        // i + nclusters from the same stream sit in the same cluster, so
        // cross-slice points with equal (index mod nclusters) must be close.
        let base = generate_synthetic(100, 8, 10, 7, 0.01).unwrap();
        let part = generate_synthetic_part(10, 8, 10, 7, 0.01, 100).unwrap();
        assert_eq!(part.id(0), 100);
        // Point 100 belongs to cluster 100 % 10 = 0, as does base point 0.
        let d_same = crate::metric::l2_sqr(base.get(0), part.get(0));
        let d_other = crate::metric::l2_sqr(base.get(1), part.get(0));
        assert!(d_same < d_other, "{d_same} vs {d_other}");
    }

    #[test]
    fn ids_are_validated() {
        assert!(matches!(
            VectorSet::from_rows(2, vec![0.0; 4], vec![1, 1]),
            Err(Error::DuplicateId(1))
        ));
        assert!(VectorSet::from_rows(2, vec![0.0; 2], vec![1 << 48]).is_err());
        assert!(VectorSet::from_rows(2, vec![0.0, f32::NAN], vec![0]).is_err());
    }
}
