use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position count {0} outside the supported range [1, 16]")]
    BadPositionCount(usize),
    #[error("star network needs at least 2 positions, got {0}")]
    DegenerateStar(usize),
    #[error("position {position} out of range for a {n}-position network")]
    PositionOutOfRange { position: usize, n: usize },
    #[error("action profile has {profile_len} entries but the network has {n} positions")]
    ProfileLengthMismatch { profile_len: usize, n: usize },
    #[error("induced contact graph has {edges} edges, enumeration guard is {guard}")]
    EnumerationGuard { edges: usize, guard: usize },
    #[error("invalid game parameters: {0}")]
    BadParams(String),
    #[error("no pure-strategy Nash equilibrium exists for these parameters")]
    NoPureNash,
    #[error("predicate not satisfied anywhere on the scanned fine range [0, {0}]")]
    PredicateNeverHolds(String),
    #[error("Monte Carlo needs at least one replication")]
    ZeroReplications,
    #[error("invalid session configuration: {0}")]
    BadSessionConfig(String),
    #[error("group has no ghost left to substitute a second dropout")]
    NoGhostAvailable,
    #[error("session log is incomplete: {0}")]
    IncompleteLog(String),
    #[error("round sequence has length {got}, expected {expected}")]
    BadSequenceLength { got: usize, expected: usize },
    #[error("strategy {0} is only defined in the superspreader environment")]
    StarOnlyStrategy(String),
    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("need at least {need} clusters, got {got}")]
    TooFewClusters { need: usize, got: usize },
    #[error("outcome is degenerate: {0}")]
    DegenerateOutcome(String),
    #[error("perfect separation detected in the binary-response fit")]
    Separation,
    #[error("maximum likelihood did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("unknown covariate column {0:?}")]
    UnknownColumn(String),
    #[error("missing coefficient {0:?} in the calibration")]
    MissingCoefficient(String),
    #[error("split dummy {0:?} takes a single value; both groups must be present")]
    OneSidedDummy(String),
    #[error("infeasible moment target: {0}")]
    InfeasibleTarget(String),
    #[error("risk aversion exponent must be positive, got {0}")]
    BadRiskExponent(f64),
    #[error("box count {0} outside [0, 100]")]
    BadBoxCount(i64),
    #[error("SVO angle undefined: both mean allocations equal 50")]
    UndefinedAngle,
    #[error("missing required column {0:?}")]
    MissingCsvColumn(String),
    #[error("no observations in the date range {start}..={end}")]
    EmptyDateRange {
        start: chrono::NaiveDate,
        end: chrono::NaiveDate,
    },
    #[error("degenerate variance in correlation input")]
    DegenerateVariance,
    #[error("sequences have different lengths or fewer than 2 points")]
    BadCorrelationInput,
    #[error("invalid geographic coordinate: lat {lat}, lon {lon}")]
    BadCoordinate { lat: f64, lon: f64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
