//! The `HLN1` index file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "HLN1"  u32 version
//! header: u32 mode_flags, u32 flags, u64 n, u64 m, u32 l, u64 seed, u32 k, u32 m_t
//! u32 crc32(header)
//! sections, each: [u8; 4] tag, u64 payload_len, payload, u32 crc32(payload)
//!   BASE  n·m f32                       base vectors
//!   PROJ  m·l f32                       projection (absent for imported codes)
//!   CODE  n·⌈l/64⌉ u64                  packed codes
//!   KMNS  u32 iters, k·m f32, n u32     partition (quantized/kmeansqi)
//!   BUCK  u32 tables, u32 width, per table: u64 keys, keys u64, (keys+1) u32, n u32
//!   END!  empty
//! ```
//!
//! `flags` bit 0 marks an index built from imported codes. `k` and `m_t` are
//! zero when the corresponding section is absent.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::codes::PackedCodes;
use crate::error::{Error, Result};
use crate::hashers::ProjectionMatrix;
use crate::index::HashIndex;
use crate::matrix::Matrix;
use crate::quantizer::KmeansPartition;
use crate::search::{BucketDirectory, ModeSet};

pub const MAGIC: [u8; 4] = *b"HLN1";
pub const VERSION: u32 = 1;

const FLAG_EXTERNAL_CODES: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4 + 8 + 4 + 4;

const TAG_BASE: [u8; 4] = *b"BASE";
const TAG_PROJ: [u8; 4] = *b"PROJ";
const TAG_CODE: [u8; 4] = *b"CODE";
const TAG_KMNS: [u8; 4] = *b"KMNS";
const TAG_BUCK: [u8; 4] = *b"BUCK";
const TAG_END: [u8; 4] = *b"END!";

/// Serializes an index to bytes.
pub fn index_to_bytes(index: &HashIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);

    let mut header = Vec::with_capacity(HEADER_LEN);
    put_u32(&mut header, index.modes().bits());
    put_u32(
        &mut header,
        if index.has_external_codes() {
            FLAG_EXTERNAL_CODES
        } else {
            0
        },
    );
    put_u64(&mut header, index.len() as u64);
    put_u64(&mut header, index.dim() as u64);
    put_u32(&mut header, index.bits() as u32);
    put_u64(&mut header, index.seed());
    put_u32(&mut header, index.clusters().unwrap_or(0) as u32);
    put_u32(&mut header, index.tables().unwrap_or(0) as u32);
    out.extend_from_slice(&header);
    put_u32(&mut out, crc32fast::hash(&header));

    let mut payload = Vec::new();
    put_f32s(&mut payload, index.base().as_slice());
    section(&mut out, TAG_BASE, &mut payload);

    if let Some(p) = index.encoder() {
        put_f32s(&mut payload, p.as_slice());
        section(&mut out, TAG_PROJ, &mut payload);
    }

    for &w in index.codes().words() {
        put_u64(&mut payload, w);
    }
    section(&mut out, TAG_CODE, &mut payload);

    if let Some(p) = index.partition() {
        put_u32(&mut payload, p.iterations_run() as u32);
        put_f32s(&mut payload, p.centroids().as_slice());
        put_u32s(&mut payload, p.assignments());
        section(&mut out, TAG_KMNS, &mut payload);
    }

    if let Some(dir) = index.buckets() {
        put_u32(&mut payload, dir.num_tables() as u32);
        put_u32(&mut payload, dir.bits_per_table() as u32);
        for t in dir.tables() {
            put_u64(&mut payload, t.keys().len() as u64);
            for &k in t.keys() {
                put_u64(&mut payload, k);
            }
            put_u32s(&mut payload, t.offsets());
            put_u32s(&mut payload, t.ids());
        }
        section(&mut out, TAG_BUCK, &mut payload);
    }

    section(&mut out, TAG_END, &mut payload);
    out
}

pub fn save_index(index: &HashIndex, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&index_to_bytes(index))?;
    w.flush()?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<HashIndex> {
    index_from_bytes(&std::fs::read(path)?)
}

/// Parses an index. Nothing is returned unless every checksum verifies.
pub fn index_from_bytes(bytes: &[u8]) -> Result<HashIndex> {
    if bytes.len() < 8 {
        return Err(checksum("header", "file truncated before header"));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let header = bytes
        .get(8..8 + HEADER_LEN + 4)
        .ok_or_else(|| checksum("header", "truncated"))?;
    let (header, crc) = header.split_at(HEADER_LEN);
    if crc32fast::hash(header) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(checksum("header", "crc mismatch"));
    }
    let mut h = Reader::new(header, "header");
    let modes = ModeSet::from_bits(h.u32()?)?;
    let flags = h.u32()?;
    let n = to_usize(h.u64()?)?;
    let dim = to_usize(h.u64()?)?;
    let bits = h.u32()? as usize;
    let seed = h.u64()?;
    let clusters = h.u32()? as usize;
    let tables = h.u32()? as usize;
    let external = flags & FLAG_EXTERNAL_CODES != 0;
    if flags & !FLAG_EXTERNAL_CODES != 0 {
        return Err(Error::MalformedIndex(format!(
            "unknown header flags {flags:#x}"
        )));
    }

    let mut sections = Sections {
        bytes,
        pos: 8 + HEADER_LEN + 4,
    };

    let mut s = sections.next(TAG_BASE)?;
    let base = Matrix::from_vec(n, dim, s.f32s(n.checked_mul(dim).ok_or_else(overflow)?)?)?;
    s.finish()?;

    let encoder = if external {
        None
    } else {
        let mut s = sections.next(TAG_PROJ)?;
        let data = s.f32s(dim.checked_mul(bits).ok_or_else(overflow)?)?;
        s.finish()?;
        Some(ProjectionMatrix::from_parts(dim, bits, seed, data)?)
    };

    let mut s = sections.next(TAG_CODE)?;
    let words = s.u64s(n.checked_mul(bits.div_ceil(64)).ok_or_else(overflow)?)?;
    s.finish()?;
    let codes = PackedCodes::from_words(n, bits, words)?;

    let partition = if modes.needs_partition() {
        let mut s = sections.next(TAG_KMNS)?;
        let iters = s.u32()? as usize;
        let centroids = Matrix::from_vec(
            clusters,
            dim,
            s.f32s(clusters.checked_mul(dim).ok_or_else(overflow)?)?,
        )?;
        let assignments = s.u32s(n)?;
        s.finish()?;
        Some(KmeansPartition::from_parts(centroids, assignments, iters)?)
    } else {
        None
    };

    let buckets = if modes.contains(crate::search::SearchMode::Bucket) {
        let mut s = sections.next(TAG_BUCK)?;
        let stored_tables = s.u32()? as usize;
        let _width = s.u32()?;
        if stored_tables != tables {
            return Err(Error::MalformedIndex(format!(
                "header lists {tables} tables, section holds {stored_tables}"
            )));
        }
        let mut parts = Vec::with_capacity(tables);
        for _ in 0..tables {
            let nkeys = to_usize(s.u64()?)?;
            let keys = s.u64s(nkeys)?;
            let offsets = s.u32s(nkeys + 1)?;
            let ids = s.u32s(n)?;
            parts.push((keys, offsets, ids));
        }
        s.finish()?;
        Some(BucketDirectory::from_parts(bits, n, parts)?)
    } else {
        None
    };

    sections.next(TAG_END)?.finish()?;
    if sections.pos != bytes.len() {
        return Err(Error::MalformedIndex(
            "trailing bytes after end marker".into(),
        ));
    }
    HashIndex::from_parts(base, encoder, codes, partition, buckets, modes, seed)
}

fn checksum(section: &str, detail: &str) -> Error {
    Error::Checksum {
        section: section.into(),
        detail: detail.into(),
    }
}

fn overflow() -> Error {
    Error::MalformedIndex("section size overflows".into())
}

fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| overflow())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32s(out: &mut Vec<u8>, vs: &[u32]) {
    out.reserve(vs.len() * 4);
    for &v in vs {
        put_u32(out, v);
    }
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    out.reserve(vs.len() * 4);
    for &v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Appends a framed section and clears `payload` for reuse.
fn section(out: &mut Vec<u8>, tag: [u8; 4], payload: &mut Vec<u8>) {
    out.extend_from_slice(&tag);
    put_u64(out, payload.len() as u64);
    out.extend_from_slice(payload);
    put_u32(out, crc32fast::hash(payload));
    payload.clear();
}

struct Sections<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Sections<'a> {
    /// Reads and verifies the next section, which must carry `tag`.
    fn next(&mut self, tag: [u8; 4]) -> Result<Reader<'a>> {
        let name = String::from_utf8_lossy(&tag).into_owned();
        let frame = self
            .bytes
            .get(self.pos..self.pos + 12)
            .ok_or_else(|| checksum(&name, "file truncated before section"))?;
        if frame[..4] != tag {
            return Err(Error::MalformedIndex(format!(
                "expected section {name}, found {:?}",
                String::from_utf8_lossy(&frame[..4])
            )));
        }
        let len = to_usize(u64::from_le_bytes(frame[4..12].try_into().unwrap()))?;
        let start = self.pos + 12;
        let end = start.checked_add(len).ok_or_else(overflow)?;
        let payload = self
            .bytes
            .get(start..end)
            .ok_or_else(|| checksum(&name, "truncated payload"))?;
        let crc = self
            .bytes
            .get(end..end + 4)
            .ok_or_else(|| checksum(&name, "truncated before checksum"))?;
        if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(checksum(&name, "crc mismatch"));
        }
        self.pos = end + 4;
        Ok(Reader::new(payload, &name))
    }
}

/// Bounds-checked little-endian reader over a verified payload.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: String,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], name: &str) -> Self {
        Self {
            bytes,
            pos: 0,
            name: name.to_owned(),
        }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or_else(overflow)?;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| {
            Error::MalformedIndex(format!(
                "section {} shorter than its header implies",
                self.name
            ))
        })?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let b = self.take(n.checked_mul(4).ok_or_else(overflow)?)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(overflow)?)?;
        Ok(b.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(n.checked_mul(4).ok_or_else(overflow)?)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::MalformedIndex(format!(
                "section {} has {} unexpected trailing bytes",
                self.name,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::BuildConfig;

    fn small_index(modes: &str) -> HashIndex {
        let data = (0..300 * 6)
            .map(|i| ((i * 7919) % 113) as f32 * 0.1)
            .collect();
        let base = Matrix::from_vec(300, 6, data).unwrap();
        let cfg = BuildConfig {
            bits: 40,
            clusters: 6,
            tables: 2,
            seed: 17,
            kmeans_iters: 8,
            modes: modes.parse().unwrap(),
        };
        HashIndex::build(base, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        for modes in ["all", "hamming", "bucket", "kmeansqi"] {
            let idx = small_index(modes);
            let bytes = index_to_bytes(&idx);
            let back = index_from_bytes(&bytes).unwrap();
            assert_eq!(back, idx);
            assert_eq!(index_to_bytes(&back), bytes);
        }
    }

    #[test]
    fn external_codes_round_trip() {
        let idx = small_index("hamming,quantized");
        let ext = HashIndex::build_with_codes(
            idx.base().clone(),
            idx.codes().clone(),
            &BuildConfig {
                bits: 40,
                clusters: 6,
                tables: 2,
                seed: 17,
                kmeans_iters: 8,
                modes: "hamming,quantized".parse().unwrap(),
            },
        )
        .unwrap();
        let back = index_from_bytes(&index_to_bytes(&ext)).unwrap();
        assert!(back.has_external_codes());
        assert_eq!(back, ext);
    }

    #[test]
    fn failures_are_distinguished() {
        let bytes = index_to_bytes(&small_index("all"));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            index_from_bytes(&bad),
            Err(Error::BadMagic { .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            index_from_bytes(&bad),
            Err(Error::UnsupportedVersion {
                found: 2,
                supported: 1
            })
        ));

        let mut bad = bytes.clone();
        let mid = bytes.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(
            index_from_bytes(&bad),
            Err(Error::Checksum { .. })
        ));

        for cut in [6, 20, 60, bytes.len() / 3, bytes.len() - 1] {
            assert!(
                matches!(index_from_bytes(&bytes[..cut]), Err(Error::Checksum { .. })),
                "cut at {cut}"
            );
        }
    }
}
