//! Ground truth, recall, and recall–time parameter sweeps.

use std::collections::HashSet;
use std::time::Duration;

use rayon::prelude::*;

use crate::codes::PackedCodes;
use crate::error::{Error, Result};
use crate::index::HashIndex;
use crate::matrix::{squared_l2, Matrix};
use crate::search::{
    search_with, smallest_k, QueryRecord, SearchMode, SearchParams, SearchScratch,
};

/// Exact nearest neighbors, `k` ids per query in ascending distance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    k: usize,
    ids: Vec<u32>,
}

impl GroundTruth {
    pub fn from_flat(k: usize, ids: Vec<u32>) -> Result<Self> {
        if k == 0 || ids.len() % k != 0 {
            return Err(Error::invalid(format!(
                "{} ground-truth ids do not form rows of {k}",
                ids.len()
            )));
        }
        Ok(Self { k, ids })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn queries(&self) -> usize {
        self.ids.len() / self.k
    }

    pub fn neighbors(&self, query: usize) -> &[u32] {
        &self.ids[query * self.k..(query + 1) * self.k]
    }

    pub fn as_flat(&self) -> &[u32] {
        &self.ids
    }
}

/// Exhaustive Euclidean k-NN for every query; ties go to the lower id.
pub fn brute_force_ground_truth(base: &Matrix, queries: &Matrix, k: usize) -> Result<GroundTruth> {
    if k == 0 || k > base.rows() {
        return Err(Error::invalid(format!("K={k} outside 1..={}", base.rows())));
    }
    if queries.cols() != base.cols() {
        return Err(Error::DimensionMismatch {
            expected: base.cols(),
            actual: queries.cols(),
        });
    }
    let rows: Vec<Vec<u32>> = (0..queries.rows())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut scored: Vec<(f32, u32)> = base
                .iter_rows()
                .enumerate()
                .map(|(i, x)| (squared_l2(x, q), i as u32))
                .collect();
            smallest_k(&mut scored, k).0
        })
        .collect();
    GroundTruth::from_flat(k, rows.concat())
}

/// `|R ∩ R'| / |R'|` with set semantics.
pub fn recall(result: &[u32], truth: &[u32]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::invalid("ground truth is empty"));
    }
    let truth: HashSet<u32> = truth.iter().copied().collect();
    let result: HashSet<u32> = result.iter().copied().collect();
    Ok(result.intersection(&truth).count() as f64 / truth.len() as f64)
}

/// One row of recall–time curve data.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub mode: SearchMode,
    /// Code length (0 for kmeansqi).
    pub bits: usize,
    /// Bucket tables (0 unless bucket mode).
    pub tables: usize,
    /// Clusters probed (0 unless quantized or kmeansqi).
    pub nprobe: usize,
    /// Pool size (0 for kmeansqi).
    pub pool: usize,
    pub recall: f64,
    pub qps: f64,
    pub mean_ms: f64,
    pub p50_ms: Option<f64>,
    pub p99_ms: Option<f64>,
    pub coding_ms: f64,
    pub locating_ms: f64,
    pub scanning_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Untimed pass over all queries before each timed pass.
    pub warmup: bool,
    /// Run queries on the rayon pool; timing columns become NaN.
    pub parallel: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            warmup: true,
            parallel: false,
        }
    }
}

/// Evaluates every grid point. Errors are reported per point so one
/// incompatible point does not stop the sweep.
pub fn run_sweep(
    index: &HashIndex,
    queries: &Matrix,
    query_codes: Option<&PackedCodes>,
    truth: &GroundTruth,
    grid: &[SearchParams],
    options: &SweepOptions,
) -> Vec<Result<SweepRecord>> {
    grid.iter()
        .map(|params| sweep_point(index, queries, query_codes, truth, params, options))
        .collect()
}

fn sweep_point(
    index: &HashIndex,
    queries: &Matrix,
    query_codes: Option<&PackedCodes>,
    truth: &GroundTruth,
    params: &SearchParams,
    options: &SweepOptions,
) -> Result<SweepRecord> {
    if truth.queries() != queries.rows() {
        return Err(Error::invalid(format!(
            "ground truth covers {} queries, query set has {}",
            truth.queries(),
            queries.rows()
        )));
    }
    if truth.k() < params.k {
        return Err(Error::invalid(format!(
            "ground truth has {} neighbors per query, K={} requested",
            truth.k(),
            params.k
        )));
    }
    if let Some(codes) = query_codes {
        if codes.len() != queries.rows() {
            return Err(Error::invalid("query code count differs from query count"));
        }
    }
    let run_one = |qi: usize, scratch: &mut SearchScratch| -> Result<QueryRecord> {
        let code = query_codes.map(|c| c.bit_code(qi));
        search_with(index, queries.row(qi), code.as_ref(), params, scratch)
    };

    let records: Vec<QueryRecord> = if options.parallel {
        (0..queries.rows())
            .into_par_iter()
            .map_init(|| SearchScratch::for_index(index), |s, qi| run_one(qi, s))
            .collect::<Result<_>>()?
    } else {
        let mut scratch = SearchScratch::for_index(index);
        if options.warmup {
            for qi in 0..queries.rows() {
                run_one(qi, &mut scratch)?;
            }
        }
        (0..queries.rows())
            .map(|qi| run_one(qi, &mut scratch))
            .collect::<Result<_>>()?
    };

    let mut recall_sum = 0.0;
    for (qi, rec) in records.iter().enumerate() {
        recall_sum += recall(&rec.ids, &truth.neighbors(qi)[..params.k])?;
    }
    let nq = records.len().max(1) as f64;
    let recall = recall_sum / nq;

    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let (mean_ms, p50_ms, p99_ms, coding_ms, locating_ms, scanning_ms) = if options.parallel {
        (f64::NAN, None, None, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mut totals: Vec<f64> = records
            .iter()
            .map(|r| ms(r.search_time(params.include_coding)))
            .collect();
        let mean = totals.iter().sum::<f64>() / nq;
        totals.sort_by(f64::total_cmp);
        (
            mean,
            Some(percentile(&totals, 0.50)),
            Some(percentile(&totals, 0.99)),
            records.iter().map(|r| ms(r.coding_time)).sum::<f64>() / nq,
            records.iter().map(|r| ms(r.locating_time)).sum::<f64>() / nq,
            records.iter().map(|r| ms(r.scanning_time)).sum::<f64>() / nq,
        )
    };

    let mode = params.mode;
    Ok(SweepRecord {
        mode,
        bits: if mode.uses_codes() { index.bits() } else { 0 },
        tables: if mode == SearchMode::Bucket {
            index.tables().unwrap_or(0)
        } else {
            0
        },
        nprobe: if mode.uses_partition() {
            params.nprobe
        } else {
            0
        },
        pool: if mode == SearchMode::KmeansQi {
            0
        } else {
            params.pool
        },
        recall,
        qps: if mean_ms > 0.0 {
            1e3 / mean_ms
        } else {
            f64::NAN
        },
        mean_ms,
        p50_ms,
        p99_ms,
        coding_ms,
        locating_ms,
        scanning_ms,
    })
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Parses a sweep description into a parameter grid.
///
/// Axes are separated by `;` and written `name=values`, where values are a
/// comma list of numbers and `start:step:stop` ranges (stop inclusive), e.g.
/// `L=500:500:10000;C=10,20,50`. Axis names: `L` (pool), `C` (nprobe), `K`.
/// The grid is the cartesian product of `modes` and all axes, with `base`
/// supplying every value not swept. `C` only multiplies the cluster-based
/// modes and `L` every mode except kmeansqi.
pub fn parse_sweep(
    spec: &str,
    modes: &[SearchMode],
    base: &SearchParams,
) -> Result<Vec<SearchParams>> {
    let mut pools = vec![base.pool];
    let mut probes = vec![base.nprobe];
    let mut ks = vec![base.k];
    for axis in spec.split(';').map(str::trim).filter(|a| !a.is_empty()) {
        let (name, values) = axis
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("sweep axis '{axis}' is not name=values")))?;
        let values = parse_values(values)?;
        match name.trim() {
            "L" | "pool" => pools = values,
            "C" | "nprobe" => probes = values,
            "K" | "k" => ks = values,
            other => {
                return Err(Error::invalid(format!(
                    "unknown sweep axis '{other}' (expected L, C or K)"
                )))
            }
        }
    }
    let mut grid = Vec::new();
    for &mode in modes {
        // Axes a mode ignores collapse to a single point.
        let mode_probes = if mode.uses_partition() {
            &probes[..]
        } else {
            &probes[..1]
        };
        let mode_pools = if mode == SearchMode::KmeansQi {
            &pools[..1]
        } else {
            &pools[..]
        };
        for &k in &ks {
            for &nprobe in mode_probes {
                for &pool in mode_pools {
                    grid.push(SearchParams {
                        mode,
                        k,
                        nprobe,
                        pool,
                        include_coding: base.include_coding,
                    });
                }
            }
        }
    }
    Ok(grid)
}

fn parse_values(s: &str) -> Result<Vec<usize>> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| Error::invalid(format!("'{t}' is not a non-negative integer")))
    };
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(num(v)?),
            [start, step, stop] => {
                let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
                if step == 0 || start > stop {
                    return Err(Error::invalid(format!("bad range '{item}'")));
                }
                out.extend((start..=stop).step_by(step));
            }
            _ => return Err(Error::invalid(format!("bad sweep value '{item}'"))),
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("sweep axis has no values"));
    }
    Ok(out)
}
