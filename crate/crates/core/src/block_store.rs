//! Row-range column blocks: value-sorted CSC columns with 16-bit local row
//! offsets, a self-checking binary encoding, and disk spilling across one or
//! more directories.
//!
//! Block file layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "GBTBLK\0\0"
//! version      u32      1
//! codec        u8       0 = identity, 1 = deflate
//! reserved     3 bytes
//! block_id     u64
//! row_begin    u64
//! row_end      u64
//! n_features   u32
//! nnz          u64
//! values_len   u64      raw value bytes (8 * nnz)
//! stored_len   u64      value bytes after the codec
//! checksum     u32      crc32 of the header above plus the body
//! body:
//!   counts     u32 * n_features
//!   offsets    u16 * nnz
//!   values     stored_len bytes: IEEE-754 f64 LE, byte-plane shuffled, then encoded
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;

use crate::columns::SortedColumn;
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::prefetch::BlockStream;

pub const MAX_BLOCK_SIZE: usize = 1 << 16;
pub const MIN_BLOCK_SIZE: usize = 256;

const MAGIC: &[u8; 8] = b"GBTBLK\0\0";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 * 3 + 4 + 8 * 3 + 4;

static SORT_COMPARISONS: AtomicU64 = AtomicU64::new(0);

/// Total value comparisons spent sorting or merging columns since process
/// start. Boosting rounds never sort, so this only moves while columns are
/// being built.
pub fn sort_comparisons() -> u64 {
    SORT_COMPARISONS.load(Ordering::Relaxed)
}

pub(crate) fn add_sort_comparisons(n: u64) {
    SORT_COMPARISONS.fetch_add(n, Ordering::Relaxed);
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStoreConfig {
    pub block_size: usize,
    pub compression: bool,
    /// Empty keeps every block in memory.
    pub spill_directories: Vec<PathBuf>,
    pub memory_budget_blocks: usize,
}

impl Default for BlockStoreConfig {
    fn default() -> Self {
        Self {
            block_size: MAX_BLOCK_SIZE,
            compression: false,
            spill_directories: Vec::new(),
            memory_budget_blocks: 4,
        }
    }
}

impl BlockStoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_BLOCK_SIZE..=MAX_BLOCK_SIZE).contains(&self.block_size) {
            return Err(Error::Config(format!(
                "block size {} not in [{MIN_BLOCK_SIZE}, {MAX_BLOCK_SIZE}]",
                self.block_size
            )));
        }
        if self.memory_budget_blocks == 0 {
            return Err(Error::Config("memory budget must be at least 1 block".into()));
        }
        Ok(())
    }

    pub fn codec(&self) -> &'static dyn ByteCodec {
        if self.compression {
            &DeflateCodec
        } else {
            &IdentityCodec
        }
    }
}

/// Columns for rows `[row_begin, row_end)`; each column holds only the
/// non-missing entries, sorted by value with ties in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBlock {
    block_id: u64,
    row_begin: u32,
    row_end: u32,
    col_ptr: Vec<u32>,
    offsets: Vec<u16>,
    values: Vec<f64>,
}

impl AsRef<ColumnBlock> for ColumnBlock {
    fn as_ref(&self) -> &ColumnBlock {
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlockColumn<'a> {
    base: u32,
    offsets: &'a [u16],
    values: &'a [f64],
}

impl BlockColumn<'_> {
    pub fn row_at(&self, i: usize) -> u32 {
        self.base + u32::from(self.offsets[i])
    }

    pub fn value_at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn offsets(&self) -> &[u16] {
        self.offsets
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }
}

impl SortedColumn for BlockColumn<'_> {
    fn len(&self) -> usize {
        self.offsets.len()
    }

    fn iter(&self) -> impl DoubleEndedIterator<Item = (u32, f64)> + '_ {
        let base = self.base;
        self.offsets
            .iter()
            .zip(self.values)
            .map(move |(&o, &v)| (base + u32::from(o), v))
    }
}

impl ColumnBlock {
    /// Builds the block for rows `[begin, end)` of `matrix`.
    pub fn from_rows(matrix: &DataMatrix, block_id: u64, begin: usize, end: usize) -> Result<Self> {
        if end < begin || end - begin > MAX_BLOCK_SIZE || end > matrix.n_rows() {
            return Err(Error::InvalidInput(format!(
                "bad block row range [{begin}, {end})"
            )));
        }
        let m = matrix.n_features();
        let mut col_ptr = vec![0u32; m + 1];
        for i in begin..end {
            for e in matrix.row(i) {
                col_ptr[e.index as usize + 1] += 1;
            }
        }
        for f in 0..m {
            col_ptr[f + 1] += col_ptr[f];
        }
        let nnz = col_ptr[m] as usize;
        let mut fill: Vec<u32> = col_ptr[..m].to_vec();
        let mut offsets = vec![0u16; nnz];
        let mut values = vec![0f64; nnz];
        for i in begin..end {
            let local = (i - begin) as u16;
            for e in matrix.row(i) {
                let slot = &mut fill[e.index as usize];
                offsets[*slot as usize] = local;
                values[*slot as usize] = e.value;
                *slot += 1;
            }
        }
        let mut comparisons = 0u64;
        let mut scratch: Vec<(f64, u16)> = Vec::new();
        for f in 0..m {
            let (a, b) = (col_ptr[f] as usize, col_ptr[f + 1] as usize);
            scratch.clear();
            scratch.extend(values[a..b].iter().copied().zip(offsets[a..b].iter().copied()));
            // stable: rows were pushed in ascending order
            scratch.sort_by(|x, y| {
                comparisons += 1;
                x.0.total_cmp(&y.0)
            });
            for (k, &(v, o)) in scratch.iter().enumerate() {
                values[a + k] = v;
                offsets[a + k] = o;
            }
        }
        add_sort_comparisons(comparisons);
        Ok(Self {
            block_id,
            row_begin: begin as u32,
            row_end: end as u32,
            col_ptr,
            offsets,
            values,
        })
    }

    pub fn block_id(&self) -> u64 {
        self.block_id
    }

    pub fn row_range(&self) -> std::ops::Range<usize> {
        self.row_begin as usize..self.row_end as usize
    }

    pub fn n_features(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.offsets.len()
    }

    pub fn column(&self, feature: usize) -> BlockColumn<'_> {
        let (a, b) = (
            self.col_ptr[feature] as usize,
            self.col_ptr[feature + 1] as usize,
        );
        BlockColumn {
            base: self.row_begin,
            offsets: &self.offsets[a..b],
            values: &self.values[a..b],
        }
    }

    /// Size of the identity encoding, the denominator of compression ratios.
    pub fn raw_size(&self) -> usize {
        HEADER_LEN + 4 * self.n_features() + 10 * self.nnz()
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let len = (self.row_end - self.row_begin) as usize;
        if len > MAX_BLOCK_SIZE {
            return Err(format!("block {} spans {len} rows", self.block_id));
        }
        for f in 0..self.n_features() {
            let c = self.column(f);
            if c.offsets.iter().any(|&o| usize::from(o) >= len) {
                return Err(format!("feature {f}: offset outside row range"));
            }
            for k in 1..c.len() {
                let (p, q) = (c.values[k - 1], c.values[k]);
                if p > q || (p == q && c.offsets[k - 1] >= c.offsets[k]) {
                    return Err(format!("feature {f}: column not sorted at {k}"));
                }
            }
        }
        Ok(())
    }
}

/// Partitions the matrix into `ceil(n / block_size)` row-range blocks.
pub fn build_blocks(matrix: &DataMatrix, block_size: usize) -> Result<Vec<ColumnBlock>> {
    if block_size == 0 || block_size > MAX_BLOCK_SIZE {
        return Err(Error::Config(format!("block size {block_size} out of range")));
    }
    let n = matrix.n_rows();
    (0..n.div_ceil(block_size))
        .map(|b| ColumnBlock::from_rows(matrix, b as u64, b * block_size, ((b + 1) * block_size).min(n)))
        .collect()
}

/// General-purpose byte compressor used for block values.
pub trait ByteCodec: Send + Sync {
    fn id(&self) -> u8;
    fn encode(&self, raw: &[u8]) -> Vec<u8>;
    fn decode(&self, stored: &[u8], raw_len: usize) -> Result<Vec<u8>>;
}

pub struct IdentityCodec;

impl ByteCodec for IdentityCodec {
    fn id(&self) -> u8 {
        0
    }

    fn encode(&self, raw: &[u8]) -> Vec<u8> {
        raw.to_vec()
    }

    fn decode(&self, stored: &[u8], raw_len: usize) -> Result<Vec<u8>> {
        if stored.len() != raw_len {
            return Err(Error::Corrupt(format!(
                "identity payload is {} bytes, expected {raw_len}",
                stored.len()
            )));
        }
        Ok(stored.to_vec())
    }
}

pub struct DeflateCodec;

impl ByteCodec for DeflateCodec {
    fn id(&self) -> u8 {
        1
    }

    fn encode(&self, raw: &[u8]) -> Vec<u8> {
        use std::io::Write;
        let mut enc = DeflateEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(raw).expect("in-memory write");
        enc.finish().expect("in-memory write")
    }

    fn decode(&self, stored: &[u8], raw_len: usize) -> Result<Vec<u8>> {
        use std::io::Read;
        let mut out = Vec::with_capacity(raw_len);
        DeflateDecoder::new(stored)
            .read_to_end(&mut out)
            .map_err(|e| Error::Corrupt(format!("deflate: {e}")))?;
        if out.len() != raw_len {
            return Err(Error::Corrupt(format!(
                "inflated {} bytes, expected {raw_len}",
                out.len()
            )));
        }
        Ok(out)
    }
}

pub fn codec_for_id(id: u8) -> Option<&'static dyn ByteCodec> {
    match id {
        0 => Some(&IdentityCodec),
        1 => Some(&DeflateCodec),
        _ => None,
    }
}

fn shuffle_values(values: &[f64]) -> Vec<u8> {
    let n = values.len();
    let mut out = vec![0u8; 8 * n];
    for (i, v) in values.iter().enumerate() {
        for (plane, byte) in v.to_le_bytes().into_iter().enumerate() {
            out[plane * n + i] = byte;
        }
    }
    out
}

fn unshuffle_values(bytes: &[u8], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut b = [0u8; 8];
            for (plane, slot) in b.iter_mut().enumerate() {
                *slot = bytes[plane * n + i];
            }
            f64::from_le_bytes(b)
        })
        .collect()
}

/// Serializes a block; values go through `codec`, offsets stay 16-bit.
pub fn compress_block(block: &ColumnBlock, codec: &dyn ByteCodec) -> Vec<u8> {
    let m = block.n_features();
    let nnz = block.nnz();
    let stored = codec.encode(&shuffle_values(&block.values));

    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m + 2 * nnz + stored.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&[codec.id(), 0, 0, 0]);
    out.extend_from_slice(&block.block_id.to_le_bytes());
    out.extend_from_slice(&u64::from(block.row_begin).to_le_bytes());
    out.extend_from_slice(&u64::from(block.row_end).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(nnz as u64).to_le_bytes());
    out.extend_from_slice(&(8 * nnz as u64).to_le_bytes());
    out.extend_from_slice(&(stored.len() as u64).to_le_bytes());
    let checksum_at = out.len();
    out.extend_from_slice(&[0; 4]);
    for f in 0..m {
        out.extend_from_slice(&(block.col_ptr[f + 1] - block.col_ptr[f]).to_le_bytes());
    }
    for o in &block.offsets {
        out.extend_from_slice(&o.to_le_bytes());
    }
    out.extend_from_slice(&stored);
    let crc = checksum(&out, checksum_at);
    out[checksum_at..checksum_at + 4].copy_from_slice(&crc.to_le_bytes());
    out
}

fn checksum(bytes: &[u8], checksum_at: usize) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&bytes[..checksum_at]);
    h.update(&bytes[checksum_at + 4..]);
    h.finalize()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt("truncated block".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decompress_block(bytes: &[u8]) -> Result<ColumnBlock> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Corrupt(format!("unsupported block version {version}")));
    }
    let codec_id = c.take(4)?[0];
    let block_id = c.u64()?;
    let row_begin = c.u64()?;
    let row_end = c.u64()?;
    let m = c.u32()? as usize;
    let nnz = c.u64()? as usize;
    let values_len = c.u64()? as usize;
    let stored_len = c.u64()? as usize;
    let checksum_at = c.pos;
    let stored_crc = c.u32()?;
    let computed = checksum(bytes, checksum_at);
    if stored_crc != computed {
        return Err(Error::Checksum {
            stored: stored_crc,
            computed,
        });
    }
    if row_end < row_begin
        || row_end - row_begin > MAX_BLOCK_SIZE as u64
        || row_end > u64::from(u32::MAX)
        || values_len != 8 * nnz
    {
        return Err(Error::Corrupt("inconsistent block header".into()));
    }
    let codec = codec_for_id(codec_id)
        .ok_or_else(|| Error::Corrupt(format!("unknown codec id {codec_id}")))?;

    let mut col_ptr = Vec::with_capacity(m + 1);
    col_ptr.push(0u32);
    for _ in 0..m {
        let count = c.u32()?;
        let next = col_ptr
            .last()
            .unwrap()
            .checked_add(count)
            .ok_or_else(|| Error::Corrupt("column counts overflow".into()))?;
        col_ptr.push(next);
    }
    if col_ptr[m] as usize != nnz {
        return Err(Error::Corrupt("column counts disagree with nnz".into()));
    }
    let offsets = c
        .take(2 * nnz)?
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    let raw = codec.decode(c.take(stored_len)?, values_len)?;
    if c.pos != bytes.len() {
        return Err(Error::Corrupt("trailing bytes after block".into()));
    }
    Ok(ColumnBlock {
        block_id,
        row_begin: row_begin as u32,
        row_end: row_end as u32,
        col_ptr,
        offsets,
        values: unshuffle_values(&raw, nnz),
    })
}

pub fn block_file_name(block_id: u64) -> String {
    format!("block_{block_id}.bin")
}

/// Where the training columns live.
#[derive(Debug)]
pub enum BlockStore {
    InMemory {
        blocks: Vec<Arc<ColumnBlock>>,
        n_rows: usize,
        n_features: usize,
    },
    Spilled(SpilledBlocks),
}

#[derive(Debug, Clone)]
pub struct SpilledBlocks {
    pub(crate) paths: Vec<PathBuf>,
    pub(crate) n_dirs: usize,
    pub(crate) budget: usize,
    pub(crate) n_rows: usize,
    pub(crate) n_features: usize,
    pub(crate) nnz: usize,
    pub(crate) stored_bytes: u64,
    pub(crate) raw_bytes: u64,
}

impl SpilledBlocks {
    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    /// Stored bytes over identity-encoded bytes across all blocks.
    pub fn compression_ratio(&self) -> f64 {
        self.stored_bytes as f64 / self.raw_bytes.max(1) as f64
    }
}

impl BlockStore {
    pub fn build(matrix: &DataMatrix, config: &BlockStoreConfig) -> Result<Self> {
        config.validate()?;
        if config.spill_directories.is_empty() {
            let blocks = build_blocks(matrix, config.block_size)?
                .into_iter()
                .map(Arc::new)
                .collect();
            return Ok(BlockStore::InMemory {
                blocks,
                n_rows: matrix.n_rows(),
                n_features: matrix.n_features(),
            });
        }
        let dirs = &config.spill_directories;
        for d in dirs {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let codec = config.codec();
        let n = matrix.n_rows();
        let mut spilled = SpilledBlocks {
            paths: Vec::new(),
            n_dirs: dirs.len(),
            budget: config.memory_budget_blocks,
            n_rows: n,
            n_features: matrix.n_features(),
            nnz: matrix.nnz(),
            stored_bytes: 0,
            raw_bytes: 0,
        };
        for b in 0..n.div_ceil(config.block_size) {
            let begin = b * config.block_size;
            let end = (begin + config.block_size).min(n);
            let block = ColumnBlock::from_rows(matrix, b as u64, begin, end)?;
            let bytes = compress_block(&block, codec);
            let path = dirs[b % dirs.len()].join(block_file_name(b as u64));
            fs::write(&path, &bytes).map_err(|source| Error::BlockIo {
                block_id: b as u64,
                path: path.clone(),
                source,
            })?;
            spilled.stored_bytes += bytes.len() as u64;
            spilled.raw_bytes += block.raw_size() as u64;
            spilled.paths.push(path);
        }
        Ok(BlockStore::Spilled(spilled))
    }

    pub fn n_blocks(&self) -> usize {
        match self {
            BlockStore::InMemory { blocks, .. } => blocks.len(),
            BlockStore::Spilled(s) => s.paths.len(),
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            BlockStore::InMemory { n_rows, .. } => *n_rows,
            BlockStore::Spilled(s) => s.n_rows,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            BlockStore::InMemory { n_features, .. } => *n_features,
            BlockStore::Spilled(s) => s.n_features,
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            BlockStore::InMemory { blocks, .. } => blocks.iter().map(|b| b.nnz()).sum(),
            BlockStore::Spilled(s) => s.nnz,
        }
    }

    pub fn is_spilled(&self) -> bool {
        matches!(self, BlockStore::Spilled(_))
    }

    pub fn in_memory_blocks(&self) -> Option<&[Arc<ColumnBlock>]> {
        match self {
            BlockStore::InMemory { blocks, .. } => Some(blocks),
            BlockStore::Spilled(_) => None,
        }
    }

    /// Streams blocks in `plan` order, prefetching spilled blocks under the
    /// memory budget.
    pub fn stream(&self, plan: &[usize]) -> Result<BlockStream> {
        if let Some(&bad) = plan.iter().find(|&&b| b >= self.n_blocks()) {
            return Err(Error::InvalidInput(format!("no block {bad}")));
        }
        Ok(match self {
            BlockStore::InMemory { blocks, .. } => {
                BlockStream::in_memory(plan.iter().map(|&b| blocks[b].clone()).collect())
            }
            BlockStore::Spilled(s) => BlockStream::spilled(s, plan),
        })
    }

    /// Visits every block in id order.
    pub fn for_each_block(&self, mut f: impl FnMut(&ColumnBlock) -> Result<()>) -> Result<()> {
        let plan: Vec<usize> = (0..self.n_blocks()).collect();
        for block in self.stream(&plan)? {
            let block = block?;
            f(&block)?;
        }
        Ok(())
    }
}

pub(crate) fn read_block_file(block_id: u64, path: &Path) -> Result<ColumnBlock> {
    let bytes = fs::read(path).map_err(|source| Error::BlockIo {
        block_id,
        path: path.to_path_buf(),
        source,
    })?;
    decompress_block(&bytes).map_err(|e| Error::BlockIo {
        block_id,
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Entry;

    fn matrix(n: usize) -> DataMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![Entry::new(0, (i % 3) as f64)];
                if i % 2 == 0 {
                    r.push(Entry::new(2, -(i as f64)));
                }
                r
            })
            .collect();
        DataMatrix::from_rows(rows, vec![0.0; n], None, 3).unwrap()
    }

    #[test]
    fn ceil_partition() {
        let m = matrix(10);
        let blocks = build_blocks(&m, 4).unwrap();
        let ranges: Vec<_> = blocks.iter().map(|b| b.row_range()).collect();
        assert_eq!(ranges, vec![0..4, 4..8, 8..10]);
        assert_eq!(blocks.iter().map(|b| b.nnz()).sum::<usize>(), m.nnz());
        for b in &blocks {
            b.validate().unwrap();
        }
    }

    #[test]
    fn stable_among_equal_values() {
        let m = matrix(12);
        let b = &build_blocks(&m, 12).unwrap()[0];
        let col: Vec<_> = b.column(0).iter().collect();
        let zeros: Vec<u32> = col.iter().filter(|(_, v)| *v == 0.0).map(|(r, _)| *r).collect();
        assert_eq!(zeros, vec![0, 3, 6, 9]);
        assert!(b.column(1).is_empty());
    }

    #[test]
    fn empty_column_round_trip() {
        let b = &build_blocks(&matrix(5), 256).unwrap()[0];
        for codec in [&IdentityCodec as &dyn ByteCodec, &DeflateCodec] {
            let bytes = compress_block(b, codec);
            assert_eq!(&decompress_block(&bytes).unwrap(), b);
        }
    }

    #[test]
    fn corruption_detected() {
        let b = &build_blocks(&matrix(50), 256).unwrap()[0];
        let mut bytes = compress_block(b, &DeflateCodec);
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        assert!(matches!(decompress_block(&bytes), Err(Error::Checksum { .. })));
        assert!(decompress_block(&bytes[..10]).is_err());
        assert!(decompress_block(b"not a block at all, definitely").is_err());
    }

    #[test]
    fn config_bounds() {
        let mut c = BlockStoreConfig::default();
        assert!(c.validate().is_ok());
        c.block_size = 100;
        assert!(c.validate().is_err());
        c.block_size = MAX_BLOCK_SIZE + 1;
        assert!(c.validate().is_err());
        c.block_size = 256;
        c.memory_budget_blocks = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn spill_round_robin_placement() {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let m = matrix(2560);
        let config = BlockStoreConfig {
            block_size: 256,
            compression: true,
            spill_directories: dirs.iter().map(|d| d.path().to_path_buf()).collect(),
            memory_budget_blocks: 2,
        };
        let store = BlockStore::build(&m, &config).unwrap();
        assert_eq!(store.n_blocks(), 10);
        for b in 0..10u64 {
            let expect = dirs[(b % 2) as usize].path().join(block_file_name(b));
            assert!(expect.exists(), "{expect:?}");
        }
        let in_mem = build_blocks(&m, 256).unwrap();
        let mut seen = 0;
        store
            .for_each_block(|b| {
                assert_eq!(b, &in_mem[seen]);
                seen += 1;
                Ok(())
            })
            .unwrap();
        assert_eq!(seen, 10);
    }
}
