//! Lloyd's kmeans coarse partition with inverted lists.
//!
//! Seeding is kmeans++ driven by a `ChaCha8Rng`. Distances are squared
//! Euclidean and every tie is broken towards the lowest index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{squared_l2, Matrix};

pub const DEFAULT_KMEANS_ITERS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansPartition {
    centroids: Matrix,
    assignments: Vec<u32>,
    inverted_lists: Vec<Vec<u32>>,
    iterations_run: usize,
}

impl KmeansPartition {
    /// Rebuilds a partition from centroids and assignments; inverted lists
    /// are derived in ascending id order.
    pub fn from_parts(
        centroids: Matrix,
        assignments: Vec<u32>,
        iterations_run: usize,
    ) -> Result<Self> {
        let k = centroids.rows();
        if k == 0 {
            return Err(Error::invalid("partition needs at least one centroid"));
        }
        let mut inverted_lists = vec![Vec::new(); k];
        for (i, &c) in assignments.iter().enumerate() {
            let list = inverted_lists.get_mut(c as usize).ok_or_else(|| {
                Error::invalid(format!("point {i} assigned to cluster {c} >= k={k}"))
            })?;
            list.push(i as u32);
        }
        Ok(Self {
            centroids,
            assignments,
            inverted_lists,
            iterations_run,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        self.centroids.row(c)
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn inverted_list(&self, c: usize) -> &[u32] {
        &self.inverted_lists[c]
    }

    pub fn inverted_lists(&self) -> &[Vec<u32>] {
        &self.inverted_lists
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    /// Sum of squared distances from each point of `x` to its assigned centroid.
    pub fn objective(&self, x: &Matrix) -> f64 {
        objective(x, &self.centroids, &self.assignments)
    }

    /// The `probes` clusters nearest to `q`, ascending by centroid distance.
    pub fn nearest_clusters(&self, q: &[f32], probes: usize) -> Result<Vec<u32>> {
        if probes == 0 || probes > self.k() {
            return Err(Error::invalid(format!(
                "probe count {probes} outside 1..={}",
                self.k()
            )));
        }
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: q.len(),
            });
        }
        let mut scored: Vec<(f32, u32)> = self
            .centroids
            .iter_rows()
            .enumerate()
            .map(|(c, centroid)| (squared_l2(q, centroid), c as u32))
            .collect();
        let by_distance = |a: &(f32, u32), b: &(f32, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if probes < scored.len() {
            scored.select_nth_unstable_by(probes - 1, by_distance);
            scored.truncate(probes);
        }
        scored.sort_unstable_by(by_distance);
        Ok(scored.into_iter().map(|(_, c)| c).collect())
    }
}

/// Training result together with the objective after every assignment step.
#[derive(Debug, Clone)]
pub struct KmeansTrace {
    pub partition: KmeansPartition,
    pub objectives: Vec<f64>,
}

pub fn kmeans_train(x: &Matrix, k: usize, max_iters: usize, seed: u64) -> Result<KmeansPartition> {
    kmeans_train_traced(x, k, max_iters, seed).map(|t| t.partition)
}

/// Runs kmeans++ seeding followed by Lloyd iterations.
///
/// Each iteration assigns points to their nearest centroid and recomputes the
/// means. Training stops at an assignment fixpoint or after `max_iters`
/// updates; the returned assignments are always nearest-centroid with respect
/// to the returned centroids.
pub fn kmeans_train_traced(
    x: &Matrix,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KmeansTrace> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::invalid("kmeans input is empty"));
    }
    if k == 0 || k > x.rows() {
        return Err(Error::invalid(format!(
            "cluster count {k} outside 1..={}",
            x.rows()
        )));
    }
    if max_iters == 0 {
        return Err(Error::invalid("kmeans needs at least one iteration"));
    }

    let mut centroids = kmeans_plus_plus(x, k, seed);
    let mut assignments = assign(x, &centroids);
    let mut objectives = vec![objective_flat(x, &centroids, &assignments)];
    let mut iterations_run = 0;
    for _ in 0..max_iters {
        update_centroids(x, &mut centroids, &mut assignments);
        iterations_run += 1;
        let next = assign(x, &centroids);
        objectives.push(objective_flat(x, &centroids, &next));
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }

    let centroids = Matrix::from_vec(k, x.cols(), centroids)?;
    Ok(KmeansTrace {
        partition: KmeansPartition::from_parts(centroids, assignments, iterations_run)?,
        objectives,
    })
}

/// kmeans++ seeding: the first centroid is uniform, each further one is drawn
/// with probability proportional to its squared distance to the nearest
/// chosen centroid. Returns `k × dim` centroids, row-major.
pub fn kmeans_plus_plus(x: &Matrix, k: usize, seed: u64) -> Vec<f32> {
    let n = x.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k * x.cols());
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(x.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| squared_l2(x.row(i), x.row(first)) as f64)
        .collect();

    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just past the last partial sum.
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(x.row(pick));
        let c = &centroids[start..];
        nearest.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = squared_l2(x.row(i), c) as f64;
            if nd < *d {
                *d = nd;
            }
        });
    }
    centroids
}

fn nearest_centroid(point: &[f32], centroids: &[f32], dim: usize) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_l2(point, centroid);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

fn assign(x: &Matrix, centroids: &[f32]) -> Vec<u32> {
    let dim = x.cols();
    (0..x.rows())
        .into_par_iter()
        .map(|i| nearest_centroid(x.row(i), centroids, dim).0)
        .collect()
}

fn objective(x: &Matrix, centroids: &Matrix, assignments: &[u32]) -> f64 {
    objective_flat(x, centroids.as_slice(), assignments)
}

fn objective_flat(x: &Matrix, centroids: &[f32], assignments: &[u32]) -> f64 {
    let dim = x.cols();
    // Summed sequentially so the value does not depend on the thread count.
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let c = c as usize;
            squared_l2(x.row(i), &centroids[c * dim..(c + 1) * dim]) as f64
        })
        .sum()
}

/// Moves every centroid to the mean of its members, then repairs empty
/// clusters: each one (in ascending id order) takes the point farthest from
/// its centroid within the currently largest cluster.
fn update_centroids(x: &Matrix, centroids: &mut [f32], assignments: &mut [u32]) {
    let dim = x.cols();
    let k = centroids.len() / dim;
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        let c = c as usize;
        counts[c] += 1;
        for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x.row(i)) {
            *s += v as f64;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            recompute_mean(
                &sums[c * dim..(c + 1) * dim],
                counts[c],
                &mut centroids[c * dim..(c + 1) * dim],
            );
        }
    }

    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let donor = (0..k)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        if counts[donor] < 2 {
            break;
        }
        let donor_centroid = centroids[donor * dim..(donor + 1) * dim].to_vec();
        let mut far = (usize::MAX, f32::NEG_INFINITY);
        for (i, &c) in assignments.iter().enumerate() {
            if c as usize == donor {
                let d = squared_l2(x.row(i), &donor_centroid);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        let moved = far.0;
        assignments[moved] = empty as u32;
        counts[empty] = 1;
        counts[donor] -= 1;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(x.row(moved));
        let sum = &mut sums[donor * dim..(donor + 1) * dim];
        for (s, &v) in sum.iter_mut().zip(x.row(moved)) {
            *s -= v as f64;
        }
        recompute_mean(
            &sums[donor * dim..(donor + 1) * dim],
            counts[donor],
            &mut centroids[donor * dim..(donor + 1) * dim],
        );
    }
}

fn recompute_mean(sum: &[f64], count: usize, out: &mut [f32]) {
    let inv = 1.0 / count as f64;
    for (o, &s) in out.iter_mut().zip(sum) {
        *o = (s * inv) as f32;
    }
}
