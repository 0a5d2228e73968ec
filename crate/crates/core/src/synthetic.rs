//! Seeded synthetic datasets for tests, benchmarks and desk-scale runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codes::PackedCodes;
use crate::matrix::Matrix;

/// `n` uniformly random codes of `bits` bits.
pub fn uniform_codes(n: usize, bits: usize, seed: u64) -> PackedCodes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes = PackedCodes::zeroed(n, bits).expect("valid code length");
    let wpc = codes.words_per_code();
    let tail = bits % 64;
    for row in codes.words_mut().chunks_exact_mut(wpc) {
        for w in row.iter_mut() {
            *w = rng.random();
        }
        if tail != 0 {
            row[wpc - 1] &= (1u64 << tail) - 1;
        }
    }
    codes
}

/// Uniform vectors in `[-1, 1)^dim`.
pub fn uniform_vectors(n: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    Matrix::from_vec(n, dim, data).expect("shape")
}

/// Non-negative clustered vectors resembling SIFT descriptors: a mixture of
/// `clusters` Gaussian blobs with centers in `[0, 64)^dim`, clipped at zero.
/// Returns `(base, queries)` drawn from the same mixture.
pub fn sift_like(
    n_base: usize,
    n_query: usize,
    dim: usize,
    clusters: usize,
    seed: u64,
) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f32>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0f32..64.0)).collect())
        .collect();
    let noise = Normal::new(0.0f32, 12.0).expect("valid sigma");
    let mut draw = |count: usize| {
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let c = &centers[rng.random_range(0..clusters)];
            data.extend(
                c.iter()
                    .map(|&v| (v + noise.sample(&mut rng)).max(0.0).round()),
            );
        }
        Matrix::from_vec(count, dim, data).expect("shape")
    };
    let base = draw(n_base);
    let queries = draw(n_query);
    (base, queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_codes_respect_padding() {
        let c = uniform_codes(100, 70, 1);
        assert_eq!(
            c,
            PackedCodes::from_words(100, 70, c.words().to_vec()).unwrap()
        );
        let ones: u32 = c.words().iter().map(|w| w.count_ones()).sum();
        let frac = ones as f64 / 7000.0;
        assert!((frac - 0.5).abs() < 0.05);
    }

    #[test]
    fn sift_like_is_seeded_and_non_negative() {
        let (a, qa) = sift_like(100, 10, 16, 5, 3);
        let (b, _) = sift_like(100, 10, 16, 5, 3);
        assert_eq!(a, b);
        assert_eq!((qa.rows(), qa.cols()), (10, 16));
        assert!(a.as_slice().iter().all(|&v| v >= 0.0));
    }
}
