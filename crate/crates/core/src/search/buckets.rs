//! Hash-bucket directories and the radius-sweep bucket search.
//!
//! A code of `l` bits is cut into `num_tables` contiguous slices of
//! `⌊l / num_tables⌋` bits; leftover high bits are ignored. Each slice value
//! names a bucket in that table's directory.
//!
//! The search probes radius `r = 0, 1, 2, …`. For each radius every table is
//! probed in order, and within a table the buckets at exactly distance `r`
//! are visited in lexicographic order of their flip positions. Ids already
//! collected (from an earlier bucket or another table) are skipped and do not
//! count towards the pool.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::codes::{extract_bits, BitCode, PackedCodes};
use crate::error::{Error, Result};

/// Widest slice stored as a direct-address array.
pub const DIRECT_MAX_BITS: usize = 28;

/// Widest slice supported at all (bucket keys are single words).
pub const MAX_TABLE_BITS: usize = 64;

/// Number of buckets at exactly hamming distance `r` from a fixed `l`-bit
/// code, i.e. the binomial coefficient `C(l, r)`.
pub fn buckets_at_radius(l: usize, r: usize) -> Result<u128> {
    if r > l {
        return Err(Error::invalid(format!(
            "radius {r} exceeds code length {l}"
        )));
    }
    let r = r.min(l - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // C(l, i+1) = C(l, i) · (l-i) / (i+1); dividing out the gcd first keeps
        // intermediates within the final magnitude.
        let (num, den) = ((l - i) as u128, (i + 1) as u128);
        let g = gcd(acc, den);
        acc = (acc / g)
            .checked_mul(num / (den / g))
            .ok_or_else(|| Error::invalid(format!("C({l}, {r}) overflows 128 bits")))?;
    }
    Ok(acc)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Number of buckets within hamming distance `r`, `∑_{i≤r} C(l, i)`.
pub fn buckets_within_radius(l: usize, r: usize) -> Result<u128> {
    (0..=r).try_fold(0u128, |acc, i| {
        let c = buckets_at_radius(l, i)?;
        acc.checked_add(c)
            .ok_or_else(|| Error::invalid(format!("bucket count within radius {r} overflows")))
    })
}

/// Pascal triangle of `C(n, k)` for `n, k ≤ 64`, saturating.
fn binomial_table() -> &'static [[u64; 65]; 65] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Box<[[u64; 65]; 65]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([[0u64; 65]; 65]);
        for n in 0..=64 {
            t[n][0] = 1;
            for k in 1..=n {
                t[n][k] = t[n - 1][k - 1].saturating_add(t[n - 1][k]);
            }
        }
        t
    })
}

#[inline]
fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        0
    } else {
        binomial_table()[n][k]
    }
}

/// Sort key that orders same-weight masks by the lexicographic order of
/// their ascending set-bit positions: `a` precedes `b` exactly when the lowest
/// differing bit belongs to `a`, i.e. when `a.reverse_bits() > b.reverse_bits()`.
#[inline]
fn flip_order(mask: u64) -> std::cmp::Reverse<u64> {
    std::cmp::Reverse(mask.reverse_bits())
}

/// 0-based position of `mask` among all `width`-bit masks of the same weight
/// enumerated in lexicographic flip-position order.
fn combination_rank(mask: u64, width: usize) -> u64 {
    let r = mask.count_ones() as usize;
    let mut rank = 0u64;
    let mut next_free = 0usize;
    let mut remaining = mask;
    let mut i = 0usize;
    while remaining != 0 {
        let pos = remaining.trailing_zeros() as usize;
        remaining &= remaining - 1;
        for skipped in next_free..pos {
            rank = rank.saturating_add(binom(width - 1 - skipped, r - 1 - i));
        }
        next_free = pos + 1;
        i += 1;
    }
    rank
}

/// Iterates the weight-`r` masks of a `width`-bit word in lexicographic
/// flip-position order.
struct Combinations {
    width: usize,
    positions: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(width: usize, r: usize) -> Self {
        Self {
            width,
            positions: (0..r).collect(),
            done: r > width,
        }
    }
}

impl Iterator for Combinations {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.done {
            return None;
        }
        let mask = self.positions.iter().fold(0u64, |m, &p| m | 1 << p);
        let r = self.positions.len();
        match (0..r)
            .rev()
            .find(|&i| self.positions[i] < self.width - r + i)
        {
            Some(i) => {
                self.positions[i] += 1;
                for j in i + 1..r {
                    self.positions[j] = self.positions[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Lookup {
    /// `starts[key]..starts[key + 1]` indexes `ids`.
    Direct(Vec<u32>),
    /// key → index into `keys`.
    Map(HashMap<u64, u32>),
}

/// One table: non-empty buckets in ascending key order, CSR style.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    keys: Vec<u64>,
    offsets: Vec<u32>,
    ids: Vec<u32>,
    lookup: Lookup,
}

impl BucketTable {
    fn from_csr(width: usize, n: usize, keys: Vec<u64>, offsets: Vec<u32>, ids: Vec<u32>) -> Self {
        let lookup = if uses_direct_storage(width, n) {
            let mut starts = vec![0u32; (1usize << width) + 1];
            for (slot, &key) in keys.iter().enumerate() {
                starts[key as usize + 1] = offsets[slot + 1] - offsets[slot];
            }
            for i in 1..starts.len() {
                starts[i] += starts[i - 1];
            }
            Lookup::Direct(starts)
        } else {
            Lookup::Map(
                keys.iter()
                    .enumerate()
                    .map(|(slot, &k)| (k, slot as u32))
                    .collect(),
            )
        };
        Self {
            keys,
            offsets,
            ids,
            lookup,
        }
    }

    #[inline]
    fn bucket(&self, key: u64) -> &[u32] {
        match &self.lookup {
            Lookup::Direct(starts) => {
                let k = key as usize;
                &self.ids[starts[k] as usize..starts[k + 1] as usize]
            }
            Lookup::Map(map) => match map.get(&key) {
                Some(&slot) => self.slot(slot as usize),
                None => &[],
            },
        }
    }

    #[inline]
    fn slot(&self, slot: usize) -> &[u32] {
        &self.ids[self.offsets[slot] as usize..self.offsets[slot + 1] as usize]
    }

    /// Non-empty buckets in ascending key order.
    pub fn buckets(&self) -> impl Iterator<Item = (u64, &[u32])> + '_ {
        self.keys
            .iter()
            .enumerate()
            .map(move |(s, &k)| (k, self.slot(s)))
    }

    pub fn non_empty_buckets(&self) -> usize {
        self.keys.len()
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.lookup, Lookup::Direct(_))
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

/// Direct addressing is used for slices of at most [`DIRECT_MAX_BITS`] bits
/// whose address space is not wildly larger than the data (`2^b ≤ max(16n, 2^16)`).
pub fn uses_direct_storage(width: usize, n: usize) -> bool {
    width <= DIRECT_MAX_BITS && (1usize << width) <= (16 * n).max(1 << 16)
}

/// Per-table bucket maps over slices of the base codes.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketDirectory {
    code_bits: usize,
    bits_per_table: usize,
    n: usize,
    tables: Vec<BucketTable>,
}

impl BucketDirectory {
    pub fn build(codes: &PackedCodes, num_tables: usize) -> Result<Self> {
        let code_bits = codes.bits();
        let width = table_width(code_bits, num_tables)?;
        let n = codes.len();
        if n > u32::MAX as usize {
            return Err(Error::invalid("too many codes for 32-bit ids"));
        }
        let tables = (0..num_tables)
            .into_par_iter()
            .map(|t| {
                let mut pairs: Vec<(u64, u32)> = (0..n)
                    .map(|i| (codes.slice_bits(i, t * width, width), i as u32))
                    .collect();
                pairs.sort_unstable();
                let mut keys = Vec::new();
                let mut offsets = vec![0u32];
                let mut ids = Vec::with_capacity(n);
                for (pos, &(key, id)) in pairs.iter().enumerate() {
                    if keys.last() != Some(&key) {
                        if pos > 0 {
                            offsets.push(pos as u32);
                        }
                        keys.push(key);
                    }
                    ids.push(id);
                }
                offsets.push(n as u32);
                if n == 0 {
                    offsets.truncate(1);
                }
                BucketTable::from_csr(width, n, keys, offsets, ids)
            })
            .collect();
        Ok(Self {
            code_bits,
            bits_per_table: width,
            n,
            tables,
        })
    }

    /// Reassembles a directory from its serialized CSR parts, validating the
    /// partition invariants.
    pub fn from_parts(
        code_bits: usize,
        n: usize,
        parts: Vec<(Vec<u64>, Vec<u32>, Vec<u32>)>,
    ) -> Result<Self> {
        let width = table_width(code_bits, parts.len())?;
        let mut tables = Vec::with_capacity(parts.len());
        for (t, (keys, offsets, ids)) in parts.into_iter().enumerate() {
            let bad = |what: &str| Error::MalformedIndex(format!("bucket table {t}: {what}"));
            if offsets.len() != keys.len() + 1
                || offsets[0] != 0
                || *offsets.last().unwrap() as usize != n
            {
                return Err(bad("offsets do not cover the ids"));
            }
            if ids.len() != n || offsets.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad("empty or unordered bucket"));
            }
            if keys.windows(2).any(|w| w[0] >= w[1])
                || keys.iter().any(|&k| width < 64 && k >> width != 0)
            {
                return Err(bad("keys out of order or out of range"));
            }
            let mut seen = vec![false; n];
            for &id in &ids {
                match seen.get_mut(id as usize) {
                    Some(s) if !*s => *s = true,
                    _ => return Err(bad("ids are not a partition")),
                }
            }
            tables.push(BucketTable::from_csr(width, n, keys, offsets, ids));
        }
        Ok(Self {
            code_bits,
            bits_per_table: width,
            n,
            tables,
        })
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn bits_per_table(&self) -> usize {
        self.bits_per_table
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn tables(&self) -> &[BucketTable] {
        &self.tables
    }

    pub fn table(&self, t: usize) -> &BucketTable {
        &self.tables[t]
    }

    /// Bucket key of `code` in table `t`.
    pub fn slice_of(&self, code: &BitCode, t: usize) -> u64 {
        extract_bits(code.words(), t * self.bits_per_table, self.bits_per_table)
    }
}

fn table_width(code_bits: usize, num_tables: usize) -> Result<usize> {
    if num_tables == 0 || num_tables > code_bits {
        return Err(Error::invalid(format!(
            "table count {num_tables} outside 1..={code_bits}"
        )));
    }
    let width = code_bits / num_tables;
    if width > MAX_TABLE_BITS {
        return Err(Error::invalid(format!(
            "{width}-bit table slices exceed the {MAX_TABLE_BITS}-bit bucket key limit; use more tables"
        )));
    }
    Ok(width)
}

/// Outcome of a bucket-search locate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketLocate {
    pub ids: Vec<u32>,
    /// Radius at which the sweep stopped.
    pub radius_reached: u32,
    /// Buckets probed, counted in enumeration order up to the stopping
    /// bucket, empty buckets included.
    pub buckets_visited: u64,
}

/// Radius sweep over all tables until `pool` distinct ids are collected.
///
/// `visited` is an `n`-bit scratch bitmap that must be all-zero on entry; it
/// is left all-zero on return.
pub fn bucket_search_locate(
    dir: &BucketDirectory,
    code: &BitCode,
    pool: usize,
    visited: &mut Vec<u64>,
) -> Result<BucketLocate> {
    if code.len() != dir.code_bits {
        return Err(Error::CodeLengthMismatch {
            left: dir.code_bits,
            right: code.len(),
        });
    }
    if pool == 0 {
        return Err(Error::invalid("pool size must be at least 1"));
    }
    let words = dir.n.div_ceil(64);
    if visited.len() < words {
        visited.resize(words, 0);
    }
    let target = pool.min(dir.n);
    let width = dir.bits_per_table;
    let slices: Vec<u64> = (0..dir.tables.len())
        .map(|t| dir.slice_of(code, t))
        .collect();

    let mut out = Vec::with_capacity(target);
    let mut visited_total = 0u64;
    let mut matches: Vec<(std::cmp::Reverse<u64>, u32)> = Vec::new();
    let finish = |out: Vec<u32>, visited: &mut Vec<u64>, r: usize, count: u64| {
        for &id in &out {
            visited[id as usize / 64] = 0;
        }
        BucketLocate {
            ids: out,
            radius_reached: r as u32,
            buckets_visited: count,
        }
    };

    if target == 0 {
        return Ok(finish(out, visited, 0, 0));
    }

    for r in 0..=width {
        let per_table = binom(width, r);
        for (table, &slice) in dir.tables.iter().zip(&slices) {
            if per_table as usize <= table.keys.len() {
                for (pos, mask) in Combinations::new(width, r).enumerate() {
                    if collect(table.bucket(slice ^ mask), &mut out, visited, target) {
                        let count = visited_total.saturating_add(pos as u64 + 1);
                        return Ok(finish(out, visited, r, count));
                    }
                }
            } else {
                // Fewer non-empty buckets than probes: scan them instead and
                // replay the enumeration order.
                matches.clear();
                matches.extend(
                    table
                        .keys
                        .iter()
                        .enumerate()
                        .filter(|(_, &k)| (k ^ slice).count_ones() as usize == r)
                        .map(|(s, &k)| (flip_order(k ^ slice), s as u32)),
                );
                matches.sort_unstable();
                for &(_, s) in &matches {
                    if collect(table.slot(s as usize), &mut out, visited, target) {
                        let mask = table.keys[s as usize] ^ slice;
                        let count = visited_total.saturating_add(combination_rank(mask, width) + 1);
                        return Ok(finish(out, visited, r, count));
                    }
                }
            }
            visited_total = visited_total.saturating_add(per_table);
        }
    }
    unreachable!("radius sweep covers every bucket of every table")
}

/// Appends unseen members of `bucket`; returns true once `out` holds `target` ids.
#[inline]
fn collect(bucket: &[u32], out: &mut Vec<u32>, visited: &mut [u64], target: usize) -> bool {
    for &id in bucket {
        let (w, b) = (id as usize / 64, id % 64);
        if visited[w] >> b & 1 == 0 {
            visited[w] |= 1 << b;
            out.push(id);
            if out.len() == target {
                return true;
            }
        }
    }
    false
}
