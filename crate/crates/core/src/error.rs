use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DacsError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("duplicate finite score {0}; enable jitter to break ties")]
    DuplicateFiniteScore(f64),
    #[error("non-finite value in input: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("the underrepresentation index has no relaxed form")]
    UnsupportedRelaxation,
    #[error("invalid similarity matrix: {0}")]
    InvalidSimilarity(String),
    #[error("all points coincide, automatic bandwidth is undefined")]
    DegenerateBandwidth,
    #[error("fingerprint {0} has no set bits")]
    AllZeroFingerprint(usize),
    #[error("infeasible projection: caps sum to {cap_sum}, total is {total}")]
    Infeasible { cap_sum: f64, total: f64 },
    #[error("solver diverged after {0} iterations")]
    SolverDiverged(usize),
    #[error("table cell (t={t}, s={s}) is missing")]
    MissingCell { t: usize, s: usize },
    #[error("membership vector has no one-bit to flip")]
    NoFlippableOne,
    #[error("unknown setting `{0}`")]
    UnknownSetting(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("malformed data: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, DacsError>;

impl From<std::io::Error> for DacsError {
    fn from(e: std::io::Error) -> Self {
        DacsError::Io(e.to_string())
    }
}

impl From<csv::Error> for DacsError {
    fn from(e: csv::Error) -> Self {
        DacsError::Data(e.to_string())
    }
}
