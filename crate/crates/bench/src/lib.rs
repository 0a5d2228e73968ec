//! Seeded fixtures shared by the criterion benchmarks.

use hashrank_core::synthetic::{sift_like, uniform_codes};
use hashrank_core::{BitCode, BuildConfig, HashIndex, Matrix, ModeSet, PackedCodes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random base codes plus `queries` query codes of the same length.
pub fn code_fixture(
    n: usize,
    bits: usize,
    queries: usize,
    seed: u64,
) -> (PackedCodes, Vec<BitCode>) {
    let base = uniform_codes(n, bits, seed);
    let q = uniform_codes(queries, bits, seed ^ 0xFFFF);
    let q = (0..queries).map(|i| q.bit_code(i)).collect();
    (base, q)
}

/// A SIFT-like dataset with every search mode prepared.
pub struct IndexFixture {
    pub index: HashIndex,
    pub queries: Matrix,
}

pub fn index_fixture(
    n: usize,
    dim: usize,
    bits: usize,
    clusters: usize,
    tables: usize,
    seed: u64,
) -> IndexFixture {
    let (base, queries) = sift_like(n, 64, dim, 50, seed);
    let config = BuildConfig {
        bits,
        clusters,
        tables,
        seed,
        kmeans_iters: 10,
        modes: ModeSet::all(),
    };
    IndexFixture {
        index: HashIndex::build(base, &config).expect("valid fixture"),
        queries,
    }
}

/// Cycles through a fixed query set.
pub struct Cycle {
    next: usize,
    len: usize,
}

impl Cycle {
    pub fn new(len: usize) -> Self {
        Self { next: 0, len }
    }

    pub fn random_start(len: usize, seed: u64) -> Self {
        Self {
            next: ChaCha8Rng::seed_from_u64(seed).random_range(0..len),
            len,
        }
    }
}

impl Iterator for Cycle {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        let i = self.next;
        self.next = (self.next + 1) % self.len;
        Some(i)
    }
}
