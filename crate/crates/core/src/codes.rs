//! Packed binary codes and the hamming-distance kernel.
//!
//! Codes are stored row-major, one code after another, in 64-bit words. Bit
//! `j` of a code lives in word `j / 64` at bit position `j % 64`. Padding bits
//! beyond the code length are always zero, so distances can be computed with
//! a plain XOR + popcount over whole words.

use crate::error::{Error, Result};

pub const WORD_BITS: usize = 64;

/// Longest supported code, in bits.
pub const MAX_BITS: usize = 4096;

#[inline]
pub fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

fn check_bits(bits: usize) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::invalid(format!(
            "code length {bits} outside 1..={MAX_BITS}"
        )));
    }
    Ok(())
}

/// Mask of the valid bits in the last word of a `bits`-long code.
#[inline]
fn tail_mask(bits: usize) -> u64 {
    match bits % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Hamming distance between two equally long word slices.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// A single binary code, e.g. an encoded query.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitCode {
    bits: usize,
    words: Vec<u64>,
}

impl BitCode {
    pub fn zeros(bits: usize) -> Result<Self> {
        check_bits(bits)?;
        Ok(Self {
            bits,
            words: vec![0; words_for(bits)],
        })
    }

    /// Builds a code from a slice of 0/1 values.
    pub fn from_bits(values: &[u8]) -> Result<Self> {
        let mut code = Self::zeros(values.len())?;
        for (j, &v) in values.iter().enumerate() {
            match v {
                0 => {}
                1 => code.words[j / WORD_BITS] |= 1 << (j % WORD_BITS),
                value => {
                    return Err(Error::NonBinary {
                        row: 0,
                        col: j,
                        value,
                    })
                }
            }
        }
        Ok(code)
    }

    /// Builds a code from raw words. Any bit set past `bits` is rejected.
    pub fn from_words(bits: usize, words: Vec<u64>) -> Result<Self> {
        check_bits(bits)?;
        if words.len() != words_for(bits) {
            return Err(Error::PayloadSize {
                expected: words_for(bits) * 8,
                actual: words.len() * 8,
            });
        }
        if words[words.len() - 1] & !tail_mask(bits) != 0 {
            return Err(Error::StrayBits {
                offset: (words.len() - 1) * 8,
                bits,
            });
        }
        Ok(Self { bits, words })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, j: usize) -> bool {
        assert!(
            j < self.bits,
            "bit {j} out of range for {}-bit code",
            self.bits
        );
        self.words[j / WORD_BITS] >> (j % WORD_BITS) & 1 == 1
    }

    pub(crate) fn set(&mut self, j: usize) {
        debug_assert!(j < self.bits);
        self.words[j / WORD_BITS] |= 1 << (j % WORD_BITS);
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.bits).map(|j| self.get(j) as u8).collect()
    }

    /// Bitwise complement, padding kept at zero.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let last = words.len() - 1;
        words[last] &= tail_mask(self.bits);
        Self {
            bits: self.bits,
            words,
        }
    }
}

/// `n` binary codes of `bits` bits each, packed contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    n: usize,
    bits: usize,
    words_per_code: usize,
    data: Vec<u64>,
}

impl PackedCodes {
    /// An all-zero code table, filled in place by the encoders.
    pub(crate) fn zeroed(n: usize, bits: usize) -> Result<Self> {
        check_bits(bits)?;
        let words_per_code = words_for(bits);
        Ok(Self {
            n,
            bits,
            words_per_code,
            data: vec![0; n * words_per_code],
        })
    }

    pub fn from_words(n: usize, bits: usize, data: Vec<u64>) -> Result<Self> {
        check_bits(bits)?;
        let wpc = words_for(bits);
        if data.len() != n * wpc {
            return Err(Error::PayloadSize {
                expected: n * wpc * 8,
                actual: data.len() * 8,
            });
        }
        let mask = !tail_mask(bits);
        if let Some(i) = (0..n).find(|&i| data[(i + 1) * wpc - 1] & mask != 0) {
            return Err(Error::StrayBits {
                offset: ((i + 1) * wpc - 1) * 8,
                bits,
            });
        }
        Ok(Self {
            n,
            bits,
            words_per_code: wpc,
            data,
        })
    }

    pub fn from_codes(codes: &[BitCode]) -> Result<Self> {
        let first = codes
            .first()
            .ok_or_else(|| Error::invalid("no codes given"))?;
        let mut out = Self::zeroed(codes.len(), first.len())?;
        for (i, c) in codes.iter().enumerate() {
            if c.len() != out.bits {
                return Err(Error::CodeLengthMismatch {
                    left: out.bits,
                    right: c.len(),
                });
            }
            out.code_mut(i).copy_from_slice(c.words());
        }
        Ok(out)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn bits(&self) -> usize {
        self.bits
    }

    #[inline]
    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn code(&self, i: usize) -> &[u64] {
        &self.data[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    #[inline]
    pub(crate) fn code_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, u64> {
        self.data.chunks_exact_mut(self.words_per_code)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(j < self.bits);
        self.code(i)[j / WORD_BITS] >> (j % WORD_BITS) & 1 == 1
    }

    pub fn bit_code(&self, i: usize) -> BitCode {
        BitCode {
            bits: self.bits,
            words: self.code(i).to_vec(),
        }
    }

    /// Unpacks into a row-major `n × bits` matrix of 0/1 values.
    pub fn unpack(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.n * self.bits);
        for i in 0..self.n {
            let code = self.code(i);
            out.extend((0..self.bits).map(|j| (code[j / WORD_BITS] >> (j % WORD_BITS) & 1) as u8));
        }
        out
    }

    /// Extracts `len` (≤ 64) consecutive bits of code `i` starting at `start`.
    #[inline]
    pub fn slice_bits(&self, i: usize, start: usize, len: usize) -> u64 {
        extract_bits(self.code(i), start, len)
    }
}

/// Extracts `len` (≤ 64) bits starting at bit `start` of a word slice,
/// returned in the low bits.
#[inline]
pub fn extract_bits(words: &[u64], start: usize, len: usize) -> u64 {
    debug_assert!((1..=64).contains(&len));
    let w = start / WORD_BITS;
    let off = start % WORD_BITS;
    let mut v = words[w] >> off;
    if off + len > WORD_BITS {
        v |= words[w + 1] << (WORD_BITS - off);
    }
    if len == 64 {
        v
    } else {
        v & ((1u64 << len) - 1)
    }
}

/// Packs a row-major `n × bits` matrix of 0/1 values.
pub fn pack_codes(values: &[u8], bits: usize) -> Result<PackedCodes> {
    check_bits(bits)?;
    if values.is_empty() || values.len() % bits != 0 {
        return Err(Error::invalid(format!(
            "{} values do not form a non-empty matrix with {bits} columns",
            values.len()
        )));
    }
    let n = values.len() / bits;
    let mut out = PackedCodes::zeroed(n, bits)?;
    for (i, row) in values.chunks_exact(bits).enumerate() {
        let code = out.code_mut(i);
        for (j, &v) in row.iter().enumerate() {
            match v {
                0 => {}
                1 => code[j / WORD_BITS] |= 1 << (j % WORD_BITS),
                value => {
                    return Err(Error::NonBinary {
                        row: i,
                        col: j,
                        value,
                    })
                }
            }
        }
    }
    Ok(out)
}

pub fn hamming_distance(a: &BitCode, b: &BitCode) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::CodeLengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(hamming_words(a.words(), b.words()))
}

/// Writes the distance from `q` to every code into `out`.
pub fn hamming_to_all(codes: &PackedCodes, q: &BitCode, out: &mut [u16]) -> Result<()> {
    if q.len() != codes.bits() {
        return Err(Error::CodeLengthMismatch {
            left: codes.bits(),
            right: q.len(),
        });
    }
    if out.len() != codes.len() {
        return Err(Error::DimensionMismatch {
            expected: codes.len(),
            actual: out.len(),
        });
    }
    let qw = q.words();
    let wpc = codes.words_per_code();
    // Specialised paths for the common short lengths let the compiler keep
    // the query in registers.
    match wpc {
        1 => {
            let q0 = qw[0];
            for (d, c) in out.iter_mut().zip(codes.words()) {
                *d = (c ^ q0).count_ones() as u16;
            }
        }
        2 => {
            for (d, c) in out.iter_mut().zip(codes.words().chunks_exact(2)) {
                *d = ((c[0] ^ qw[0]).count_ones() + (c[1] ^ qw[1]).count_ones()) as u16;
            }
        }
        _ => {
            for (d, c) in out.iter_mut().zip(codes.words().chunks_exact(wpc)) {
                *d = hamming_words(c, qw) as u16;
            }
        }
    }
    Ok(())
}

/// Distances from `q` to the codes listed in `ids`, written to `out[k]` for `ids[k]`.
pub(crate) fn hamming_to_subset(codes: &PackedCodes, q: &BitCode, ids: &[u32], out: &mut Vec<u16>) {
    out.clear();
    let qw = q.words();
    out.extend(
        ids.iter()
            .map(|&i| hamming_words(codes.code(i as usize), qw) as u16),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
        (0..len).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn pack_single_bit() {
        let c = pack_codes(&[1], 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.words(), &[1]);
    }

    #[test]
    fn pack_bit_layout() {
        let c = pack_codes(&[1, 0, 1, 0, 0, 0], 3).unwrap();
        assert_eq!(c.code(0), &[0b101]);
        assert_eq!(c.code(1), &[0]);
    }

    #[test]
    fn pack_rejects_non_binary_with_position() {
        let err = pack_codes(&[0, 1, 0, 1, 2, 0], 3).unwrap_err();
        assert!(matches!(
            err,
            Error::NonBinary {
                row: 1,
                col: 1,
                value: 2
            }
        ));
    }

    #[test]
    fn pack_rejects_empty_and_ragged() {
        assert!(pack_codes(&[], 3).is_err());
        assert!(pack_codes(&[0, 1], 3).is_err());
        assert!(pack_codes(&[0; 4097], 4097).is_err());
    }

    #[test]
    fn pack_unpack_round_trip_100x64() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_bits(&mut rng, 100 * 64);
        let c = pack_codes(&x, 64).unwrap();
        assert_eq!(c.unpack(), x);
        assert_eq!(c.words().len(), 100);
    }

    #[test]
    fn distance_examples() {
        let a = BitCode::from_bits(&[1, 1, 0, 1]).unwrap(); // 0b1011
        let b = BitCode::from_bits(&[0, 1, 0, 0]).unwrap(); // 0b0010
        assert_eq!(hamming_distance(&a, &b).unwrap(), 2);
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);

        let zeros = BitCode::zeros(64).unwrap();
        assert_eq!(hamming_distance(&zeros, &zeros.complement()).unwrap(), 64);
    }

    #[test]
    fn distance_length_mismatch() {
        let a = BitCode::zeros(4).unwrap();
        let b = BitCode::zeros(5).unwrap();
        assert!(matches!(
            hamming_distance(&a, &b),
            Err(Error::CodeLengthMismatch { left: 4, right: 5 })
        ));
        let codes = pack_codes(&[0; 8], 4).unwrap();
        let mut out = vec![0u16; 2];
        assert!(hamming_to_all(&codes, &b, &mut out).is_err());
        let mut short = vec![0u16; 1];
        assert!(hamming_to_all(&codes, &a, &mut short).is_err());
    }

    #[test]
    fn to_all_finds_self_and_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_bits(&mut rng, 6 * 70);
        let codes = pack_codes(&x, 70).unwrap();
        let q = codes.bit_code(3);
        let mut out = vec![0u16; 6];
        hamming_to_all(&codes, &q, &mut out).unwrap();
        assert_eq!(out[3], 0);

        let single = pack_codes(&x[..70], 70).unwrap();
        let mut one = vec![0u16; 1];
        hamming_to_all(&single, &single.bit_code(0).complement(), &mut one).unwrap();
        assert_eq!(one, vec![70]);
    }

    #[test]
    fn to_all_matches_pairwise_loop() {
        for &bits in &[128usize, 64, 100, 33] {
            let mut rng = ChaCha8Rng::seed_from_u64(bits as u64);
            let x = random_bits(&mut rng, 1000 * bits);
            let codes = pack_codes(&x, bits).unwrap();
            let q = BitCode::from_bits(&random_bits(&mut rng, bits)).unwrap();
            let mut out = vec![0u16; 1000];
            hamming_to_all(&codes, &q, &mut out).unwrap();
            for (i, &d) in out.iter().enumerate() {
                assert_eq!(d as u32, hamming_distance(&codes.bit_code(i), &q).unwrap());
            }
        }
    }

    #[test]
    fn from_words_rejects_padding() {
        assert!(matches!(
            BitCode::from_words(3, vec![0b1000]),
            Err(Error::StrayBits { .. })
        ));
        assert!(PackedCodes::from_words(2, 3, vec![0b111, 0b1000]).is_err());
        assert!(PackedCodes::from_words(2, 3, vec![0b111, 0b010]).is_ok());
    }

    #[test]
    fn extract_bits_across_words() {
        let words = [0xF000_0000_0000_0000u64, 0b1011];
        assert_eq!(extract_bits(&words, 60, 8), 0b1011_1111);
        assert_eq!(extract_bits(&words, 0, 64), words[0]);
        assert_eq!(extract_bits(&words, 64, 3), 0b011);
    }

    fn code_strategy(bits: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..2, bits)
    }

    proptest! {
        #[test]
        fn packing_preserves_entrywise_distance(
            (a, b, c) in (1usize..300).prop_flat_map(|l| (code_strategy(l), code_strategy(l), code_strategy(l)))
        ) {
            let ca = BitCode::from_bits(&a).unwrap();
            let cb = BitCode::from_bits(&b).unwrap();
            let cc = BitCode::from_bits(&c).unwrap();
            let dab = hamming_distance(&ca, &cb).unwrap();
            let naive = a.iter().zip(&b).filter(|(x, y)| x != y).count() as u32;
            prop_assert_eq!(dab, naive);
            prop_assert_eq!(dab, hamming_distance(&cb, &ca).unwrap());
            prop_assert!(dab as usize <= a.len());
            let dac = hamming_distance(&ca, &cc).unwrap();
            let dbc = hamming_distance(&cb, &cc).unwrap();
            prop_assert!(dac <= dab + dbc);
            prop_assert_eq!(ca.complement().complement(), ca.clone());
            prop_assert_eq!(hamming_distance(&ca, &ca.complement()).unwrap() as usize, a.len());
        }
    }
}
