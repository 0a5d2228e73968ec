//! A built hash index: base vectors, hasher, codes, and the optional kmeans
//! partition and bucket directory the requested search modes need.

use crate::codes::PackedCodes;
use crate::error::{Error, Result};
use crate::hashers::{train_rplsh, ProjectionMatrix};
use crate::matrix::Matrix;
use crate::quantizer::{kmeans_train, KmeansPartition, DEFAULT_KMEANS_ITERS};
use crate::search::{BucketDirectory, ModeSet, SearchMode};

/// Mixed into the index seed to derive the kmeans seed, so the projection and
/// the partition draw from unrelated streams.
pub const KMEANS_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    /// Code length `l`.
    pub bits: usize,
    /// kmeans cluster count `k` (quantized and kmeansqi modes).
    pub clusters: usize,
    /// Bucket tables `m_t` (bucket mode).
    pub tables: usize,
    pub seed: u64,
    pub kmeans_iters: usize,
    pub modes: ModeSet,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            bits: 1024,
            clusters: 1000,
            tables: 32,
            seed: 0,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            modes: ModeSet::all(),
        }
    }
}

impl BuildConfig {
    pub fn kmeans_seed(&self) -> u64 {
        self.seed ^ KMEANS_SEED_SALT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashIndex {
    base: Matrix,
    encoder: Option<ProjectionMatrix>,
    codes: PackedCodes,
    partition: Option<KmeansPartition>,
    buckets: Option<BucketDirectory>,
    modes: ModeSet,
    seed: u64,
}

impl HashIndex {
    /// Trains RPLSH on the base set and builds the structures for `config.modes`.
    pub fn build(base: Matrix, config: &BuildConfig) -> Result<Self> {
        check_base(&base)?;
        let encoder = train_rplsh(base.cols(), config.bits, config.seed)?;
        let codes = encoder.encode_batch(&base)?;
        Self::assemble(base, Some(encoder), codes, config)
    }

    /// Builds an index around codes produced by an external hasher. Queries
    /// must then be searched with their own imported codes.
    pub fn build_with_codes(
        base: Matrix,
        codes: PackedCodes,
        config: &BuildConfig,
    ) -> Result<Self> {
        check_base(&base)?;
        if codes.len() != base.rows() {
            return Err(Error::invalid(format!(
                "{} codes for {} base vectors",
                codes.len(),
                base.rows()
            )));
        }
        Self::assemble(base, None, codes, config)
    }

    fn assemble(
        base: Matrix,
        encoder: Option<ProjectionMatrix>,
        codes: PackedCodes,
        config: &BuildConfig,
    ) -> Result<Self> {
        if config.modes.is_empty() {
            return Err(Error::invalid("no search modes requested"));
        }
        let partition = if config.modes.needs_partition() {
            Some(kmeans_train(
                &base,
                config.clusters,
                config.kmeans_iters,
                config.kmeans_seed(),
            )?)
        } else {
            None
        };
        let buckets = if config.modes.contains(SearchMode::Bucket) {
            Some(BucketDirectory::build(&codes, config.tables)?)
        } else {
            None
        };
        Self::from_parts(
            base,
            encoder,
            codes,
            partition,
            buckets,
            config.modes,
            config.seed,
        )
    }

    /// Assembles an index from already built parts, checking they agree.
    pub fn from_parts(
        base: Matrix,
        encoder: Option<ProjectionMatrix>,
        codes: PackedCodes,
        partition: Option<KmeansPartition>,
        buckets: Option<BucketDirectory>,
        modes: ModeSet,
        seed: u64,
    ) -> Result<Self> {
        check_base(&base)?;
        let n = base.rows();
        if codes.len() != n {
            return Err(Error::MalformedIndex(format!(
                "{} codes for {n} base vectors",
                codes.len()
            )));
        }
        if let Some(e) = &encoder {
            if e.dim() != base.cols() || e.bits() != codes.bits() {
                return Err(Error::MalformedIndex(
                    "projection shape disagrees with base/codes".into(),
                ));
            }
        }
        if let Some(p) = &partition {
            if p.len() != n || p.dim() != base.cols() {
                return Err(Error::MalformedIndex(
                    "partition shape disagrees with base".into(),
                ));
            }
        }
        if let Some(b) = &buckets {
            if b.len() != n || b.code_bits() != codes.bits() {
                return Err(Error::MalformedIndex(
                    "bucket directory disagrees with codes".into(),
                ));
            }
        }
        if modes.needs_partition() != partition.is_some()
            || modes.contains(SearchMode::Bucket) != buckets.is_some()
        {
            return Err(Error::MalformedIndex(format!(
                "mode set {modes} disagrees with stored sections"
            )));
        }
        Ok(Self {
            base,
            encoder,
            codes,
            partition,
            buckets,
            modes,
            seed,
        })
    }

    pub fn base(&self) -> &Matrix {
        &self.base
    }

    pub fn encoder(&self) -> Option<&ProjectionMatrix> {
        self.encoder.as_ref()
    }

    pub fn codes(&self) -> &PackedCodes {
        &self.codes
    }

    pub fn partition(&self) -> Option<&KmeansPartition> {
        self.partition.as_ref()
    }

    pub fn buckets(&self) -> Option<&BucketDirectory> {
        self.buckets.as_ref()
    }

    pub fn modes(&self) -> ModeSet {
        self.modes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of base vectors.
    pub fn len(&self) -> usize {
        self.base.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.base.cols()
    }

    pub fn bits(&self) -> usize {
        self.codes.bits()
    }

    pub fn clusters(&self) -> Option<usize> {
        self.partition.as_ref().map(KmeansPartition::k)
    }

    pub fn tables(&self) -> Option<usize> {
        self.buckets.as_ref().map(BucketDirectory::num_tables)
    }

    pub fn has_external_codes(&self) -> bool {
        self.encoder.is_none()
    }
}

fn check_base(base: &Matrix) -> Result<()> {
    if base.rows() == 0 || base.cols() == 0 {
        return Err(Error::invalid("base set is empty"));
    }
    if base.rows() > u32::MAX as usize {
        return Err(Error::invalid("base set too large for 32-bit ids"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashers::train_rplsh;

    fn base() -> Matrix {
        let data = (0..200 * 8)
            .map(|i| ((i * 37 % 101) as f32) / 10.0)
            .collect();
        Matrix::from_vec(200, 8, data).unwrap()
    }

    #[test]
    fn builds_only_requested_sections() {
        let cfg = BuildConfig {
            bits: 64,
            clusters: 5,
            tables: 4,
            seed: 3,
            kmeans_iters: 5,
            modes: "hamming".parse().unwrap(),
        };
        let idx = HashIndex::build(base(), &cfg).unwrap();
        assert!(idx.partition().is_none() && idx.buckets().is_none());

        let cfg = BuildConfig {
            modes: ModeSet::all(),
            ..cfg
        };
        let idx = HashIndex::build(base(), &cfg).unwrap();
        assert_eq!(idx.clusters(), Some(5));
        assert_eq!(idx.tables(), Some(4));
        assert_eq!(
            idx.codes(),
            &train_rplsh(8, 64, 3)
                .unwrap()
                .encode_batch(&base())
                .unwrap()
        );
    }

    #[test]
    fn external_codes_must_cover_base() {
        let cfg = BuildConfig {
            bits: 16,
            clusters: 2,
            tables: 1,
            modes: "hamming".parse().unwrap(),
            ..BuildConfig::default()
        };
        let codes = train_rplsh(8, 16, 0)
            .unwrap()
            .encode_batch(&base())
            .unwrap();
        assert!(HashIndex::build_with_codes(base(), codes.clone(), &cfg)
            .unwrap()
            .has_external_codes());
        let short = Matrix::from_vec(3, 8, vec![0.0; 24]).unwrap();
        assert!(HashIndex::build_with_codes(short, codes, &cfg).is_err());
    }
}
