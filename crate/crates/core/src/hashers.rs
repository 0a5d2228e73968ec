//! Random-projection LSH and external code import.
//!
//! RPLSH draws an `m × l` matrix with i.i.d. standard normal entries and
//! encodes a vector by the signs of its projection: bit `i` is 1 when the
//! `i`-th projected coordinate is `>= 0`. Data is not centered.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::codes::{BitCode, PackedCodes, WORD_BITS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// The Gaussian projection matrix of an RPLSH hasher, stored row-major
/// (`dim` rows of `bits` entries).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    dim: usize,
    bits: usize,
    seed: u64,
    data: Vec<f32>,
}

impl ProjectionMatrix {
    /// Wraps an explicit matrix, e.g. one loaded from disk or built by hand.
    pub fn from_parts(dim: usize, bits: usize, seed: u64, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || bits == 0 {
            return Err(Error::invalid("projection shape must be at least 1x1"));
        }
        BitCode::zeros(bits)?;
        if data.len() != dim * bits {
            return Err(Error::DimensionMismatch {
                expected: dim * bits,
                actual: data.len(),
            });
        }
        Ok(Self {
            dim,
            bits,
            seed,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.bits + col]
    }

    /// Encodes one vector.
    pub fn encode(&self, x: &[f32]) -> Result<BitCode> {
        self.check_dim(x.len())?;
        let mut acc = vec![0.0f64; self.bits];
        let mut code = BitCode::zeros(self.bits)?;
        self.project(x, &mut acc);
        for (j, &v) in acc.iter().enumerate() {
            if v >= 0.0 {
                code.set(j);
            }
        }
        Ok(code)
    }

    /// Encodes every row of `x`; code `i` equals `encode(x.row(i))`.
    pub fn encode_batch(&self, x: &Matrix) -> Result<PackedCodes> {
        self.check_dim(x.cols())?;
        let mut out = PackedCodes::zeroed(x.rows(), self.bits)?;
        let wpc = out.words_per_code();
        out.words_mut()
            .par_chunks_exact_mut(wpc)
            .zip(x.as_slice().par_chunks_exact(x.cols()))
            .for_each_init(
                || vec![0.0f64; self.bits],
                |acc, (words, row)| {
                    self.project(row, acc);
                    for (j, &v) in acc.iter().enumerate() {
                        if v >= 0.0 {
                            words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
                        }
                    }
                },
            );
        Ok(out)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: got,
            });
        }
        Ok(())
    }

    /// `acc = xᵀA`, accumulated in f64.
    fn project(&self, x: &[f32], acc: &mut [f64]) {
        acc.fill(0.0);
        for (xi, row) in x.iter().zip(self.data.chunks_exact(self.bits)) {
            let xi = *xi as f64;
            if xi == 0.0 {
                continue;
            }
            for (a, &r) in acc.iter_mut().zip(row) {
                *a += xi * r as f64;
            }
        }
    }
}

/// Draws an RPLSH projection matrix. Entries come from `StandardNormal`
/// (ziggurat) over a `ChaCha8Rng` seeded with `seed`, filled row-major.
pub fn train_rplsh(dim: usize, bits: usize, seed: u64) -> Result<ProjectionMatrix> {
    if dim == 0 || bits == 0 {
        return Err(Error::invalid(format!(
            "RPLSH needs positive dimension and code length, got m={dim}, l={bits}"
        )));
    }
    BitCode::zeros(bits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dim * bits)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v as f32
        })
        .collect();
    ProjectionMatrix::from_parts(dim, bits, seed, data)
}

/// Bytes used per code in the byte-oriented exchange format.
#[inline]
pub fn bytes_per_code(bits: usize) -> usize {
    bits.div_ceil(8)
}

/// Imports codes produced elsewhere as a row-major `n × bits` 0/1 matrix.
pub fn import_codes(values: &[u8], bits: usize) -> Result<PackedCodes> {
    crate::codes::pack_codes(values, bits)
}

/// Imports `n` codes from a packed byte stream: `⌈bits/8⌉` bytes per code,
/// bit `j` in byte `j / 8` at position `j % 8`.
pub fn import_code_bytes(bytes: &[u8], n: usize, bits: usize) -> Result<PackedCodes> {
    BitCode::zeros(bits)?;
    let bpc = bytes_per_code(bits);
    let expected = n * bpc;
    if n == 0 || bytes.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            actual: bytes.len(),
        });
    }
    let mut out = PackedCodes::zeroed(n, bits)?;
    let stray = match bits % 8 {
        0 => 0u8,
        r => !((1u8 << r) - 1),
    };
    for (i, (chunk, words)) in bytes.chunks_exact(bpc).zip(out.rows_mut()).enumerate() {
        if chunk[bpc - 1] & stray != 0 {
            return Err(Error::StrayBits {
                offset: i * bpc + bpc - 1,
                bits,
            });
        }
        for (b, &byte) in chunk.iter().enumerate() {
            words[b / 8] |= (byte as u64) << (8 * (b % 8));
        }
    }
    Ok(out)
}

/// Inverse of [`import_code_bytes`].
pub fn export_code_bytes(codes: &PackedCodes) -> Vec<u8> {
    let bpc = bytes_per_code(codes.bits());
    let mut out = Vec::with_capacity(codes.len() * bpc);
    for i in 0..codes.len() {
        let code = codes.code(i);
        out.extend((0..bpc).map(|b| (code[b / 8] >> (8 * (b % 8))) as u8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::hamming_distance;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_rplsh(128, 1024, 42).unwrap();
        let b = train_rplsh(128, 1024, 42).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a.as_slice(), train_rplsh(128, 1024, 43).unwrap().as_slice());
    }

    #[test]
    fn entries_look_standard_normal() {
        let p = train_rplsh(128, 1024, 5).unwrap();
        let n = p.as_slice().len() as f64;
        let mean = p.as_slice().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = p
            .as_slice()
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 4.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn gist_shape_trains() {
        let p = train_rplsh(960, 1024, 1).unwrap();
        assert_eq!((p.dim(), p.bits()), (960, 1024));
    }

    #[test]
    fn rejects_degenerate_shape() {
        assert!(train_rplsh(0, 8, 1).is_err());
        assert!(train_rplsh(8, 0, 1).is_err());
    }

    #[test]
    fn zero_projection_maps_to_one() {
        let p = ProjectionMatrix::from_parts(2, 3, 0, vec![1.0, 0.0, -1.0, 1.0, 0.0, 1.0]).unwrap();
        // projections: (1·1 + 1·1, 0, -1 + 1) = (2, 0, 0)
        let code = p.encode(&[1.0, 1.0]).unwrap();
        assert_eq!(code.to_bits(), vec![1, 1, 1]);
        let code = p.encode(&[-1.0, 0.5]).unwrap();
        // (-0.5, 0, 1.5)
        assert_eq!(code.to_bits(), vec![0, 1, 1]);
    }

    #[test]
    fn identity_projection_is_sign_rule() {
        let p = ProjectionMatrix::from_parts(2, 2, 0, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.encode(&[3.2, -1.5]).unwrap().to_bits(), vec![1, 0]);
    }

    #[test]
    fn negation_complements_code() {
        let p = train_rplsh(16, 200, 9).unwrap();
        let x: Vec<f32> = (0..16).map(|i| (i as f32 * 0.37).cos() + 0.01).collect();
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        assert_eq!(p.encode(&neg).unwrap(), p.encode(&x).unwrap().complement());
    }

    #[test]
    fn encode_dimension_mismatch() {
        let p = train_rplsh(4, 8, 0).unwrap();
        assert!(matches!(
            p.encode(&[1.0; 3]),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 3
            })
        ));
        assert!(p.encode_batch(&random_matrix(2, 5, 0)).is_err());
    }

    #[test]
    fn batch_matches_looped_encode() {
        let x = random_matrix(300, 24, 11);
        for bits in [1usize, 63, 64, 65, 256] {
            let p = train_rplsh(24, bits, bits as u64).unwrap();
            let batch = p.encode_batch(&x).unwrap();
            for i in 0..x.rows() {
                assert_eq!(batch.bit_code(i), p.encode(x.row(i)).unwrap());
            }
        }
        let p = train_rplsh(24, 32, 0).unwrap();
        let one = random_matrix(1, 24, 3);
        assert_eq!(
            p.encode_batch(&one).unwrap().bit_code(0),
            p.encode(one.row(0)).unwrap()
        );
    }

    #[test]
    fn byte_import_bit_order() {
        let codes = import_code_bytes(&[0xA5], 1, 8).unwrap();
        let set: Vec<usize> = (0..8).filter(|&j| codes.get(0, j)).collect();
        assert_eq!(set, vec![0, 2, 5, 7]);
    }

    #[test]
    fn byte_import_errors() {
        match import_code_bytes(&[0u8; 5], 2, 24) {
            Err(Error::PayloadSize {
                expected: 6,
                actual: 5,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match import_code_bytes(&[0xFF, 0x01, 0x0F, 0x10], 2, 12) {
            Err(Error::StrayBits {
                offset: 3,
                bits: 12,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn export_import_round_trip() {
        let x = random_matrix(50, 10, 2);
        for bits in [7usize, 64, 100] {
            let codes = train_rplsh(10, bits, 3).unwrap().encode_batch(&x).unwrap();
            let bytes = export_code_bytes(&codes);
            assert_eq!(bytes.len(), 50 * bits.div_ceil(8));
            assert_eq!(import_code_bytes(&bytes, 50, bits).unwrap(), codes);
            assert_eq!(import_codes(&codes.unpack(), bits).unwrap(), codes);
        }
    }

    /// Random-projection locality: the fraction of differing bits tracks the
    /// angle between vectors (it estimates θ/π).
    #[test]
    fn differing_bits_track_angle() {
        let dim = 32;
        let p = train_rplsh(dim, 1024, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let mut pairs = Vec::new();
        for _ in 0..1000 {
            let a: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: f32 = rng.random_range(0.0..1.0);
            let b: Vec<f32> = a
                .iter()
                .map(|&v| mix * v + (1.0 - mix) * rng.random_range(-1.0f32..1.0))
                .collect();
            let dot: f64 = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (*x as f64) * (*y as f64))
                .sum();
            let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let angle = (dot / (na * nb)).clamp(-1.0, 1.0).acos();
            let d = hamming_distance(&p.encode(&a).unwrap(), &p.encode(&b).unwrap()).unwrap();
            pairs.push((angle, d as f64));
        }
        let rho = spearman(&pairs);
        assert!(rho > 0.9, "rank correlation {rho}");
    }

    fn ranks(values: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut r = vec![0.0; values.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }

    fn spearman(pairs: &[(f64, f64)]) -> f64 {
        let a = ranks(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let b = ranks(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
