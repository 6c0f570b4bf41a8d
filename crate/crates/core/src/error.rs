use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The initial window must contain at least as many samples as channels
    /// for the covariance to be full rank.
    #[error("full-rank requirement violated: window length ns = {ns} is smaller than the channel count k = {k}")]
    RankRequirement { ns: usize, k: usize },

    #[error("not enough samples: {0}")]
    InsufficientSamples(String),

    #[error("singular matrix: pivot {pivot:e} is below threshold {threshold:e} (consider a larger ridge)")]
    SingularMatrix { pivot: f64, threshold: f64 },

    /// `1 + tr(C⁻¹E)` vanished while applying a rank-one inverse update.
    #[error("singular rank-one update at term {term}: |1 + tr| = {pivot:e} <= {threshold:e}")]
    SingularUpdate { term: usize, pivot: f64, threshold: f64 },

    #[error("degenerate lead field: {0}")]
    DegenerateLeadField(String),

    #[error("source cannot be resolved: {0}")]
    UnresolvableSource(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("scene error: {0}")]
    Scene(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that stem from caller-supplied parameters rather
    /// than from data content or numerics.
    pub fn is_parameter_error(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::RankRequirement { .. })
    }

    pub fn is_numerical_error(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::SingularUpdate { .. }
                | Error::UnresolvableSource(_)
                | Error::DegenerateLeadField(_)
        )
    }
}
