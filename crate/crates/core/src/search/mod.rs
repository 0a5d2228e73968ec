//! Candidate locating procedures and exact re-ranking.
//!
//! Every query goes through three timed phases: coding (hash the query),
//! locating (collect a candidate pool of size `L` from the hash index) and
//! scanning (exact Euclidean re-ranking of the pool to the final `K`).
//! Distance ties are broken by ascending base id everywhere.

mod buckets;
mod select;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub use buckets::{
    bucket_search_locate, buckets_at_radius, buckets_within_radius, uses_direct_storage,
    BucketDirectory, BucketLocate, BucketTable, DIRECT_MAX_BITS, MAX_TABLE_BITS,
};

use crate::codes::{hamming_to_all, hamming_to_subset, BitCode, PackedCodes};
use crate::error::{Error, Result};
use crate::index::HashIndex;
use crate::matrix::{squared_l2, Matrix};
use crate::quantizer::KmeansPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SearchMode {
    /// Rank every base code by hamming distance.
    HammingRanking,
    /// Multi-table hash bucket radius sweep.
    Bucket,
    /// Hamming ranking restricted to the nearest kmeans clusters.
    Quantized,
    /// Exact scan of the nearest kmeans clusters, no codes involved.
    KmeansQi,
}

impl SearchMode {
    pub const ALL: [SearchMode; 4] = [
        SearchMode::HammingRanking,
        SearchMode::Bucket,
        SearchMode::Quantized,
        SearchMode::KmeansQi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SearchMode::HammingRanking => "hamming_ranking",
            SearchMode::Bucket => "bucket",
            SearchMode::Quantized => "quantized",
            SearchMode::KmeansQi => "kmeansqi",
        }
    }

    pub(crate) fn flag(self) -> u32 {
        match self {
            SearchMode::HammingRanking => 1,
            SearchMode::Bucket => 2,
            SearchMode::Quantized => 4,
            SearchMode::KmeansQi => 8,
        }
    }

    pub fn uses_codes(self) -> bool {
        self != SearchMode::KmeansQi
    }

    pub fn uses_partition(self) -> bool {
        matches!(self, SearchMode::Quantized | SearchMode::KmeansQi)
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hamming_ranking" | "hamming" | "hr" => Ok(SearchMode::HammingRanking),
            "bucket" | "hash_bucket" | "hb" => Ok(SearchMode::Bucket),
            "quantized" | "qhr" => Ok(SearchMode::Quantized),
            "kmeansqi" | "kmeans" => Ok(SearchMode::KmeansQi),
            other => Err(Error::invalid(format!(
                "unknown search mode '{other}' (expected hamming_ranking, bucket, quantized or kmeansqi)"
            ))),
        }
    }
}

/// A set of search modes, stored as flag bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModeSet(u32);

impl ModeSet {
    pub const fn empty() -> Self {
        ModeSet(0)
    }

    pub fn all() -> Self {
        SearchMode::ALL.into_iter().collect()
    }

    pub fn contains(self, mode: SearchMode) -> bool {
        self.0 & mode.flag() != 0
    }

    pub fn insert(&mut self, mode: SearchMode) {
        self.0 |= mode.flag();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        if bits & !0xF != 0 {
            return Err(Error::MalformedIndex(format!(
                "unknown mode flags {bits:#x}"
            )));
        }
        Ok(ModeSet(bits))
    }

    pub fn iter(self) -> impl Iterator<Item = SearchMode> {
        SearchMode::ALL
            .into_iter()
            .filter(move |m| self.contains(*m))
    }

    pub fn needs_partition(self) -> bool {
        self.iter().any(SearchMode::uses_partition)
    }
}

impl FromIterator<SearchMode> for ModeSet {
    fn from_iter<I: IntoIterator<Item = SearchMode>>(iter: I) -> Self {
        let mut set = ModeSet::empty();
        for m in iter {
            set.insert(m);
        }
        set
    }
}

impl FromStr for ModeSet {
    type Err = Error;

    /// Comma-separated mode names, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(ModeSet::all());
        }
        let set: ModeSet = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if set.is_empty() {
            return Err(Error::invalid("no search modes given"));
        }
        Ok(set)
    }
}

impl fmt::Display for ModeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(SearchMode::name).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    /// Candidate pool size `L`.
    pub pool: usize,
    /// Neighbors returned, `K`.
    pub k: usize,
    /// Clusters probed, `C` (quantized and kmeansqi modes).
    pub nprobe: usize,
    pub mode: SearchMode,
    /// Count coding time towards the reported total.
    pub include_coding: bool,
}

impl SearchParams {
    pub fn new(mode: SearchMode, k: usize, pool: usize, nprobe: usize) -> Self {
        Self {
            pool,
            k,
            nprobe,
            mode,
            include_coding: false,
        }
    }

    pub fn validate(&self, n: usize, clusters: Option<usize>) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if self.mode != SearchMode::KmeansQi && !(self.k <= self.pool && self.pool <= n) {
            return Err(Error::invalid(format!(
                "need K <= L <= n, got K={}, L={}, n={n}",
                self.k, self.pool
            )));
        }
        if self.mode.uses_partition() {
            let k = clusters.ok_or_else(|| Error::ModeUnavailable(self.mode.to_string()))?;
            if self.nprobe == 0 || self.nprobe > k {
                return Err(Error::invalid(format!(
                    "probe count C={} outside 1..={k}",
                    self.nprobe
                )));
            }
        }
        Ok(())
    }
}

/// Result of one query with its phase timings.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub ids: Vec<u32>,
    /// Euclidean distances, ascending, parallel to `ids`.
    pub distances: Vec<f32>,
    pub coding_time: Duration,
    pub locating_time: Duration,
    pub scanning_time: Duration,
    pub candidates_examined: usize,
    /// Hamming distances computed while locating (`n` for hamming ranking,
    /// the probed cluster sizes for quantized ranking, zero otherwise).
    pub hamming_computations: usize,
    /// Bucket mode only.
    pub buckets_visited: u64,
    /// Bucket mode only.
    pub radius_reached: u32,
    /// Fewer than `L` candidates were reachable (quantized mode when the
    /// probed clusters hold fewer than `L` points).
    pub pool_short: bool,
}

impl QueryRecord {
    /// Locating plus scanning, plus coding when requested.
    pub fn search_time(&self, include_coding: bool) -> Duration {
        let t = self.locating_time + self.scanning_time;
        if include_coding {
            t + self.coding_time
        } else {
            t
        }
    }
}

/// Reusable per-query buffers. One per worker.
#[derive(Debug, Default, Clone)]
pub struct SearchScratch {
    distances: Vec<u16>,
    counts: Vec<u32>,
    visited: Vec<u64>,
    gathered: Vec<u32>,
}

impl SearchScratch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn for_index(index: &HashIndex) -> Self {
        let n = index.len();
        Self {
            distances: Vec::with_capacity(n),
            counts: Vec::with_capacity(index.bits() + 1),
            visited: vec![0; n.div_ceil(64)],
            gathered: Vec::new(),
        }
    }
}

/// The `pool` codes nearest to `code` in hamming distance, ordered by
/// `(distance, id)`.
pub fn hamming_ranking_locate(
    codes: &PackedCodes,
    code: &BitCode,
    pool: usize,
    scratch: &mut SearchScratch,
) -> Result<Vec<u32>> {
    if pool == 0 || pool > codes.len() {
        return Err(Error::invalid(format!(
            "pool size {pool} outside 1..={}",
            codes.len()
        )));
    }
    scratch.distances.resize(codes.len(), 0);
    hamming_to_all(codes, code, &mut scratch.distances)?;
    Ok(select::select_smallest(
        &scratch.distances,
        codes.bits(),
        pool,
        &mut scratch.counts,
        |i| i as u32,
    ))
}

/// Hamming ranking over the members of the `nprobe` clusters nearest to
/// `query`. Returns `min(pool, |members|)` ids ordered by `(distance, id)`.
pub fn quantized_locate(
    partition: &KmeansPartition,
    codes: &PackedCodes,
    query: &[f32],
    code: &BitCode,
    nprobe: usize,
    pool: usize,
    scratch: &mut SearchScratch,
) -> Result<Vec<u32>> {
    if pool == 0 {
        return Err(Error::invalid("pool size must be at least 1"));
    }
    if code.len() != codes.bits() {
        return Err(Error::CodeLengthMismatch {
            left: codes.bits(),
            right: code.len(),
        });
    }
    if partition.len() != codes.len() {
        return Err(Error::invalid(
            "partition and codes cover different base sets",
        ));
    }
    gather_clusters(partition, query, nprobe, &mut scratch.gathered)?;
    hamming_to_subset(codes, code, &scratch.gathered, &mut scratch.distances);
    let gathered = &scratch.gathered;
    Ok(select::select_smallest(
        &scratch.distances,
        codes.bits(),
        pool,
        &mut scratch.counts,
        |i| gathered[i],
    ))
}

/// All members of the `nprobe` clusters nearest to `query`, ascending id.
pub fn kmeansqi_locate(
    partition: &KmeansPartition,
    query: &[f32],
    nprobe: usize,
) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    gather_clusters(partition, query, nprobe, &mut out)?;
    Ok(out)
}

fn gather_clusters(
    partition: &KmeansPartition,
    query: &[f32],
    nprobe: usize,
    out: &mut Vec<u32>,
) -> Result<()> {
    let clusters = partition.nearest_clusters(query, nprobe)?;
    out.clear();
    for c in clusters {
        out.extend_from_slice(partition.inverted_list(c as usize));
    }
    out.sort_unstable();
    Ok(())
}

/// The `k` candidates nearest to `query` in Euclidean distance, ordered by
/// `(distance, id)`, with their distances.
pub fn rerank(
    base: &Matrix,
    query: &[f32],
    candidates: &[u32],
    k: usize,
) -> Result<(Vec<u32>, Vec<f32>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to re-rank"));
    }
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if query.len() != base.cols() {
        return Err(Error::DimensionMismatch {
            expected: base.cols(),
            actual: query.len(),
        });
    }
    let mut scored: Vec<(f32, u32)> = candidates
        .iter()
        .map(|&id| (squared_l2(base.row(id as usize), query), id))
        .collect();
    let (ids, dists) = smallest_k(&mut scored, k);
    Ok((ids, dists.into_iter().map(f32::sqrt).collect()))
}

/// Sorts the `k` smallest `(distance, id)` pairs to the front and returns them.
pub(crate) fn smallest_k(scored: &mut Vec<(f32, u32)>, k: usize) -> (Vec<u32>, Vec<f32>) {
    let by = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by);
    scored.iter().map(|&(d, id)| (id, d)).unzip()
}

/// Runs one query against `index`, encoding it with the index's projection.
pub fn search(index: &HashIndex, query: &[f32], params: &SearchParams) -> Result<QueryRecord> {
    let mut scratch = SearchScratch::for_index(index);
    search_with(index, query, None, params, &mut scratch)
}

/// Runs one query, optionally with a precomputed query code (required for
/// indexes built from imported codes).
pub fn search_with(
    index: &HashIndex,
    query: &[f32],
    code: Option<&BitCode>,
    params: &SearchParams,
    scratch: &mut SearchScratch,
) -> Result<QueryRecord> {
    if !index.modes().contains(params.mode) {
        return Err(Error::ModeUnavailable(params.mode.to_string()));
    }
    params.validate(index.len(), index.partition().map(KmeansPartition::k))?;
    if query.len() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: query.len(),
        });
    }

    let start = Instant::now();
    let encoded;
    let code = if params.mode.uses_codes() {
        match code {
            Some(c) => Some(c),
            None => {
                let encoder = index.encoder().ok_or_else(|| {
                    Error::invalid("index uses imported codes; a query code must be supplied")
                })?;
                encoded = encoder.encode(query)?;
                Some(&encoded)
            }
        }
    } else {
        None
    };
    let coding_time = start.elapsed();

    let start = Instant::now();
    let mut buckets_visited = 0;
    let mut radius_reached = 0;
    let candidates = match params.mode {
        SearchMode::HammingRanking => {
            hamming_ranking_locate(index.codes(), code.unwrap(), params.pool, scratch)?
        }
        SearchMode::Bucket => {
            let dir = index
                .buckets()
                .ok_or_else(|| Error::ModeUnavailable(params.mode.to_string()))?;
            let found =
                bucket_search_locate(dir, code.unwrap(), params.pool, &mut scratch.visited)?;
            buckets_visited = found.buckets_visited;
            radius_reached = found.radius_reached;
            found.ids
        }
        SearchMode::Quantized => quantized_locate(
            index.partition().unwrap(),
            index.codes(),
            query,
            code.unwrap(),
            params.nprobe,
            params.pool,
            scratch,
        )?,
        SearchMode::KmeansQi => kmeansqi_locate(index.partition().unwrap(), query, params.nprobe)?,
    };
    let locating_time = start.elapsed();
    let hamming_computations = match params.mode {
        SearchMode::HammingRanking => index.len(),
        SearchMode::Quantized => scratch.gathered.len(),
        SearchMode::Bucket | SearchMode::KmeansQi => 0,
    };

    let start = Instant::now();
    let (ids, distances) = rerank(index.base(), query, &candidates, params.k)?;
    let scanning_time = start.elapsed();

    Ok(QueryRecord {
        ids,
        distances,
        coding_time,
        locating_time,
        scanning_time,
        candidates_examined: candidates.len(),
        hamming_computations,
        buckets_visited,
        radius_reached,
        pool_short: params.mode != SearchMode::KmeansQi && candidates.len() < params.pool,
    })
}
