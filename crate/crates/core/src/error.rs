use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("too few batches to partition: {available} batches into {parts} parts")]
    TooFewBatches { parts: usize, available: usize },

    #[error("batch too short to split: {available} samples into {parts} parts")]
    BatchTooShort { parts: usize, available: usize },

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("too few clip-estimation samples: need {needed}, have {available}")]
    TooFewClipSamples { needed: usize, available: usize },

    #[error("empty batch pool")]
    EmptyPool,

    #[error("subspace rank {ell} outside [1, {dim}]")]
    RankOutOfRange { ell: usize, dim: usize },

    #[error("degenerate spectrum: moment matrix is zero")]
    DegenerateSpectrum,

    #[error("target weight zero")]
    TargetWeightZero,

    #[error("empty filtered set")]
    EmptyFilteredSet,

    #[error("batch {batch} too short for the test/estimation splits ({available} samples, need {needed})")]
    BatchTooShortForSplits { batch: usize, available: usize, needed: usize },

    #[error("round {round}: {source}")]
    Round { round: usize, source: Box<Error> },

    #[error("list recovery produced no estimates")]
    NoEstimates,

    #[error("too few selection samples: need {needed}, have {available}")]
    TooFewSelectionSamples { needed: usize, available: usize },

    #[error("empty estimate list")]
    EmptyList,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("component fractions are all zero")]
    ZeroFractions,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn in_round(self, round: usize) -> Error {
        Error::Round { round, source: Box::new(self) }
    }

    /// Innermost error, skipping round annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Round { source, .. } => source.root(),
            other => other,
        }
    }
}
