//! Dataset, result and code-exchange files.
//!
//! The vecs family (`.fvecs`, `.ivecs`, `.bvecs`) stores each record as a
//! 4-byte little-endian dimension followed by that many little-endian
//! elements; the record count follows from the file size.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::codes::PackedCodes;
use crate::error::{Error, Result};
use crate::eval::{GroundTruth, SweepRecord};
use crate::hashers::{bytes_per_code, export_code_bytes, import_code_bytes};
use crate::matrix::Matrix;
use crate::search::QueryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecsKind {
    Float32,
    Int32,
    Uint8,
}

impl VecsKind {
    /// Guesses the element kind from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VecsKind::Float32),
            "ivecs" => Some(VecsKind::Int32),
            "bvecs" | "u8vecs" => Some(VecsKind::Uint8),
            _ => None,
        }
    }

    pub fn element_size(self) -> usize {
        match self {
            VecsKind::Float32 | VecsKind::Int32 => 4,
            VecsKind::Uint8 => 1,
        }
    }
}

pub trait VecsElement: Copy + Default {
    const KIND: VecsKind;
    fn decode(bytes: &[u8]) -> Self;
    fn encode<W: Write>(self, w: &mut W) -> std::io::Result<()>;
}

impl VecsElement for f32 {
    const KIND: VecsKind = VecsKind::Float32;
    fn decode(b: &[u8]) -> Self {
        f32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }
    fn encode<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_f32::<LittleEndian>(self)
    }
}

impl VecsElement for i32 {
    const KIND: VecsKind = VecsKind::Int32;
    fn decode(b: &[u8]) -> Self {
        i32::from_le_bytes([b[0], b[1], b[2], b[3]])
    }
    fn encode<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_i32::<LittleEndian>(self)
    }
}

impl VecsElement for u8 {
    const KIND: VecsKind = VecsKind::Uint8;
    fn decode(b: &[u8]) -> Self {
        b[0]
    }
    fn encode<W: Write>(self, w: &mut W) -> std::io::Result<()> {
        w.write_u8(self)
    }
}

/// Reads `total_len` bytes of vecs records from `reader`.
pub fn read_vecs_from<T: VecsElement, R: Read>(mut reader: R, total_len: u64) -> Result<Matrix<T>> {
    if total_len < 4 {
        return Err(Error::CorruptVecs {
            offset: 0,
            reason: "file too short for a dimension header".into(),
        });
    }
    let first = reader.read_i32::<LittleEndian>()?;
    if first < 1 {
        return Err(Error::CorruptVecs {
            offset: 0,
            reason: format!("dimension {first} is not positive"),
        });
    }
    let dim = first as usize;
    let elem = T::KIND.element_size();
    let record = 4 + (dim * elem) as u64;
    if total_len % record != 0 {
        return Err(Error::CorruptVecs {
            offset: total_len - total_len % record,
            reason: format!("size {total_len} is not a multiple of the {record}-byte record"),
        });
    }
    let rows = (total_len / record) as usize;
    let mut data = Vec::with_capacity(rows * dim);
    let mut buf = vec![0u8; dim * elem];
    for r in 0..rows {
        if r > 0 {
            let d = reader.read_i32::<LittleEndian>()?;
            if d as i64 != dim as i64 {
                return Err(Error::InconsistentDimension {
                    record: r,
                    expected: dim,
                    actual: d.max(0) as usize,
                });
            }
        }
        reader.read_exact(&mut buf)?;
        data.extend(buf.chunks_exact(elem).map(T::decode));
    }
    Matrix::from_vec(rows, dim, data)
}

pub fn read_vecs_file<T: VecsElement>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let file = File::open(path.as_ref())?;
    let len = file.metadata()?.len();
    read_vecs_from(BufReader::new(file), len)
}

/// Reads a vecs file of the given element kind, converting to `f32`.
pub fn read_vecs(path: impl AsRef<Path>, kind: VecsKind) -> Result<Matrix> {
    fn widen<T: VecsElement>(m: Matrix<T>, f: impl Fn(T) -> f32) -> Result<Matrix> {
        let (rows, cols) = (m.rows(), m.cols());
        Matrix::from_vec(rows, cols, m.into_vec().into_iter().map(f).collect())
    }
    match kind {
        VecsKind::Float32 => read_vecs_file::<f32>(path),
        VecsKind::Int32 => widen(read_vecs_file::<i32>(path)?, |v| v as f32),
        VecsKind::Uint8 => widen(read_vecs_file::<u8>(path)?, f32::from),
    }
}

/// Reads a vecs file, taking the element kind from its extension.
pub fn read_vecs_auto(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let kind = VecsKind::from_path(path)
        .ok_or_else(|| Error::invalid(format!("cannot tell vecs kind of {}", path.display())))?;
    read_vecs(path, kind)
}

pub fn write_vecs_to<T: VecsElement, W: Write>(mut w: W, m: &Matrix<T>) -> Result<()> {
    let dim = i32::try_from(m.cols()).map_err(|_| Error::invalid("dimension exceeds i32"))?;
    if dim < 1 {
        return Err(Error::invalid("vecs records need at least one element"));
    }
    for row in m.iter_rows() {
        w.write_i32::<LittleEndian>(dim)?;
        for &v in row {
            v.encode(&mut w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_vecs_file<T: VecsElement>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    write_vecs_to(BufWriter::new(File::create(path)?), m)
}

pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    let ids = gt.as_flat().iter().map(|&i| i as i32).collect();
    write_vecs_file(path, &Matrix::from_vec(gt.queries(), gt.k(), ids)?)
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let m = read_vecs_file::<i32>(path)?;
    let k = m.cols();
    let ids = m
        .into_vec()
        .into_iter()
        .map(|v| u32::try_from(v).map_err(|_| Error::invalid(format!("negative neighbor id {v}"))))
        .collect::<Result<_>>()?;
    GroundTruth::from_flat(k, ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Ivecs,
}

impl std::str::FromStr for ResultFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "ivecs" => Ok(ResultFormat::Ivecs),
            other => Err(Error::invalid(format!("unknown result format '{other}'"))),
        }
    }
}

impl ResultFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ivecs") => ResultFormat::Ivecs,
            _ => ResultFormat::Csv,
        }
    }
}

pub enum Results<'a> {
    Queries(&'a [QueryRecord]),
    Sweep(&'a [SweepRecord]),
}

pub fn write_results(
    results: Results<'_>,
    path: impl AsRef<Path>,
    format: ResultFormat,
) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match (results, format) {
        (Results::Sweep(records), ResultFormat::Csv) => write_sweep_csv(w, records),
        (Results::Queries(records), ResultFormat::Csv) => write_query_csv(w, records),
        (Results::Queries(records), ResultFormat::Ivecs) => write_query_ivecs(w, records),
        (Results::Sweep(_), ResultFormat::Ivecs) => {
            Err(Error::invalid("sweep results can only be written as CSV"))
        }
    }
}

/// Column layout of the sweep CSV.
pub const SWEEP_CSV_HEADER: &str =
    "mode,l,tables,C,L,recall,qps,mean_ms,coding_ms,locating_ms,scanning_ms";

#[derive(Debug, Serialize, Deserialize)]
struct SweepRow {
    mode: String,
    l: usize,
    tables: usize,
    #[serde(rename = "C")]
    nprobe: usize,
    #[serde(rename = "L")]
    pool: usize,
    recall: f64,
    qps: f64,
    mean_ms: f64,
    coding_ms: f64,
    locating_ms: f64,
    scanning_ms: f64,
}

pub fn write_sweep_csv<W: Write>(w: W, records: &[SweepRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(SWEEP_CSV_HEADER.split(','))?;
    for r in records {
        out.serialize(SweepRow {
            mode: r.mode.to_string(),
            l: r.bits,
            tables: r.tables,
            nprobe: r.nprobe,
            pool: r.pool,
            recall: r.recall,
            qps: r.qps,
            mean_ms: r.mean_ms,
            coding_ms: r.coding_ms,
            locating_ms: r.locating_ms,
            scanning_ms: r.scanning_ms,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a sweep CSV; percentile columns are not part of the file and come
/// back as `None`.
pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != SWEEP_CSV_HEADER {
        return Err(Error::invalid(format!(
            "unexpected sweep CSV header '{}'",
            header.join(",")
        )));
    }
    reader
        .deserialize::<SweepRow>()
        .map(|row| {
            let row = row?;
            Ok(SweepRecord {
                mode: row.mode.parse()?,
                bits: row.l,
                tables: row.tables,
                nprobe: row.nprobe,
                pool: row.pool,
                recall: row.recall,
                qps: row.qps,
                mean_ms: row.mean_ms,
                p50_ms: None,
                p99_ms: None,
                coding_ms: row.coding_ms,
                locating_ms: row.locating_ms,
                scanning_ms: row.scanning_ms,
            })
        })
        .collect()
}

/// One line per returned neighbor: `query,rank,id,distance`.
pub fn write_query_csv<W: Write>(w: W, records: &[QueryRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["query", "rank", "id", "distance"])?;
    for (q, rec) in records.iter().enumerate() {
        for (rank, (id, d)) in rec.ids.iter().zip(&rec.distances).enumerate() {
            out.write_record([
                q.to_string(),
                rank.to_string(),
                id.to_string(),
                d.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Result ids as ivecs, one record per query. Queries that returned fewer
/// ids than the longest result are padded with -1.
pub fn write_query_ivecs<W: Write>(w: W, records: &[QueryRecord]) -> Result<()> {
    let width = records.iter().map(|r| r.ids.len()).max().unwrap_or(0);
    if width == 0 {
        return Ok(());
    }
    let mut data = Vec::with_capacity(records.len() * width);
    for rec in records {
        data.extend(rec.ids.iter().map(|&i| i as i32));
        data.extend(std::iter::repeat(-1).take(width - rec.ids.len()));
    }
    write_vecs_to(w, &Matrix::from_vec(records.len(), width, data)?)
}

/// Sidecar describing a code-exchange file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFileMeta {
    pub bits: usize,
    pub count: usize,
}

/// Path of the sidecar that records the true code length of a code file.
pub fn code_meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes codes as uint8 vecs (`⌈l/8⌉` bytes per record, bits little-endian
/// within bytes) plus a JSON sidecar holding `l`.
pub fn write_code_file(path: impl AsRef<Path>, codes: &PackedCodes) -> Result<()> {
    let path = path.as_ref();
    let bpc = bytes_per_code(codes.bits());
    let m = Matrix::from_vec(codes.len(), bpc, export_code_bytes(codes))?;
    write_vecs_file(path, &m)?;
    let meta = CodeFileMeta {
        bits: codes.bits(),
        count: codes.len(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(code_meta_path(path), json + "\n")?;
    Ok(())
}

/// Reads a code-exchange file. The code length comes from `bits`, else the
/// sidecar, else `8 × bytes per record`.
pub fn read_code_file(path: impl AsRef<Path>, bits: Option<usize>) -> Result<PackedCodes> {
    let path = path.as_ref();
    let meta_path = code_meta_path(path);
    let meta: Option<CodeFileMeta> = if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path)?;
        Some(
            serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("{}: {e}", meta_path.display())))?,
        )
    } else {
        None
    };
    let m = read_vecs_file::<u8>(path)?;
    let bits = match (bits, &meta) {
        (Some(b), Some(meta)) if b != meta.bits => {
            return Err(Error::invalid(format!(
                "--bits {b} disagrees with sidecar ({} bits)",
                meta.bits
            )))
        }
        (Some(b), _) => b,
        (None, Some(meta)) => meta.bits,
        (None, None) => m.cols() * 8,
    };
    if let Some(meta) = &meta {
        if meta.count != m.rows() {
            return Err(Error::invalid(format!(
                "sidecar lists {} codes, file holds {}",
                meta.count,
                m.rows()
            )));
        }
    }
    if bytes_per_code(bits) != m.cols() {
        return Err(Error::PayloadSize {
            expected: bytes_per_code(bits),
            actual: m.cols(),
        });
    }
    let rows = m.rows();
    import_code_bytes(&m.into_vec(), rows, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::SearchMode;
    use std::io::Cursor;
    use std::time::Duration;

    fn read_bytes<T: VecsElement>(bytes: &[u8]) -> Result<Matrix<T>> {
        read_vecs_from(Cursor::new(bytes), bytes.len() as u64)
    }

    #[test]
    fn reads_single_float_record() {
        let mut bytes = vec![2, 0, 0, 0];
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        let m = read_bytes::<f32>(&bytes).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_eq!(m.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn corrupt_sizes_report_offsets() {
        let mut bytes = vec![2, 0, 0, 0];
        bytes.extend_from_slice(&[0; 8]);
        bytes.extend_from_slice(&[2, 0, 0]);
        match read_bytes::<f32>(&bytes) {
            Err(Error::CorruptVecs { offset: 12, .. }) => {}
            other => panic!("{other:?}"),
        }
        let mut bytes = vec![1, 0, 0, 0, 9, 1, 0, 0, 0, 8, 2, 0, 0, 0];
        bytes.extend_from_slice(&[7]);
        // 15 bytes with 5-byte records: third header claims d=2.
        match read_bytes::<u8>(&bytes) {
            Err(Error::InconsistentDimension {
                record: 2,
                expected: 1,
                actual: 2,
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(read_bytes::<u8>(&[0, 0, 0, 0]).is_err());
        assert!(read_bytes::<u8>(&[1, 0]).is_err());
    }

    #[test]
    fn vecs_round_trip_all_kinds() {
        let f = Matrix::from_vec(2, 3, vec![1.5f32, -2.0, 0.0, 3.0, 4.0, 1e-3]).unwrap();
        let mut buf = Vec::new();
        write_vecs_to(&mut buf, &f).unwrap();
        assert_eq!(read_bytes::<f32>(&buf).unwrap(), f);

        let i = Matrix::from_vec(3, 1, vec![-1i32, 7, i32::MAX]).unwrap();
        let mut buf = Vec::new();
        write_vecs_to(&mut buf, &i).unwrap();
        assert_eq!(read_bytes::<i32>(&buf).unwrap(), i);
    }

    #[test]
    fn kind_from_extension() {
        assert_eq!(
            VecsKind::from_path(Path::new("sift_base.fvecs")),
            Some(VecsKind::Float32)
        );
        assert_eq!(
            VecsKind::from_path(Path::new("gt.ivecs")),
            Some(VecsKind::Int32)
        );
        assert_eq!(
            VecsKind::from_path(Path::new("b.bvecs")),
            Some(VecsKind::Uint8)
        );
        assert_eq!(VecsKind::from_path(Path::new("x.txt")), None);
    }

    fn sweep_record() -> SweepRecord {
        SweepRecord {
            mode: SearchMode::Quantized,
            bits: 1024,
            tables: 0,
            nprobe: 20,
            pool: 500,
            recall: 0.8125,
            qps: 1234.5,
            mean_ms: 0.81,
            p50_ms: Some(0.8),
            p99_ms: Some(1.2),
            coding_ms: 0.05,
            locating_ms: 0.5,
            scanning_ms: 0.31,
        }
    }

    #[test]
    fn sweep_csv_header_only_when_empty() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{SWEEP_CSV_HEADER}\n")
        );
    }

    #[test]
    fn sweep_csv_round_trip() {
        let rec = sweep_record();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let back = read_sweep_csv(Cursor::new(buf)).unwrap();
        assert_eq!(
            back,
            vec![SweepRecord {
                p50_ms: None,
                p99_ms: None,
                ..rec
            }]
        );
    }

    #[test]
    fn query_ivecs_round_trip() {
        let rec = |ids: Vec<u32>| QueryRecord {
            distances: vec![0.0; ids.len()],
            ids,
            coding_time: Duration::ZERO,
            locating_time: Duration::ZERO,
            scanning_time: Duration::ZERO,
            candidates_examined: 0,
            hamming_computations: 0,
            buckets_visited: 0,
            radius_reached: 0,
            pool_short: false,
        };
        let records = vec![rec(vec![4, 1, 9]), rec(vec![0, 2, 3])];
        let mut buf = Vec::new();
        write_query_ivecs(&mut buf, &records).unwrap();
        let m = read_bytes::<i32>(&buf).unwrap();
        assert_eq!(m.row(0), &[4, 1, 9]);
        assert_eq!(m.row(1), &[0, 2, 3]);

        let mut buf = Vec::new();
        write_query_ivecs(&mut buf, &[rec(vec![5]), rec(vec![1, 2])]).unwrap();
        assert_eq!(read_bytes::<i32>(&buf).unwrap().row(0), &[5, -1]);
    }
}
