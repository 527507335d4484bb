use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph is disconnected: no path from point {from} to point {to}")]
    DisconnectedGraph { from: usize, to: usize },

    #[error("{what} must be strictly positive, got {value} at index {index}")]
    NonPositiveInput {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("space of {requested} points exceeds the cap of {cap}")]
    SizeOverflow { requested: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("metric axiom violated: d({i},{k}) = {direct} > d({i},{via}) + d({via},{k}) = {detour}")]
    MetricViolation {
        i: usize,
        k: usize,
        via: usize,
        direct: f64,
        detour: f64,
    },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("degenerate radii: every sampled ball has the same mass, slope undefined")]
    DegenerateRadii,

    #[error("field has {field} values but the space has {space} points (or belongs to another space)")]
    FieldSpaceMismatch { field: usize, space: usize },

    #[error("field value at index {index} is not finite")]
    NonFiniteValue { index: usize },

    #[error("invalid exponent {0}: must be >= 1")]
    InvalidExponent(f64),

    #[error("point {0} has no admissible neighbor under the chosen rule")]
    IsolatedPoint(usize),

    #[error("subset is empty")]
    EmptySet,

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("argument {value} outside domain {domain}")]
    OutOfDomain { value: f64, domain: String },

    #[error("grand norm diverged: supremum exceeds {cap:e}")]
    NormDiverged { cap: f64 },

    #[error("family is unbounded at p = {p}")]
    UnboundedFamily { p: f64 },

    #[error("family is empty")]
    EmptyFamily,

    #[error("invalid psi: {0}")]
    InvalidPsi(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("empty exponent bracket ({lo}, {hi}) for q = {q}")]
    EmptyBracket { q: f64, lo: f64, hi: f64 },

    #[error("measure is not a probability: total mass {0}")]
    NotProbability(f64),

    #[error("factorable estimate violated at (p, q) = ({p}, {q}): K_P = {kp} > R*V = {bound}")]
    AfeViolated { p: f64, q: f64, kp: f64, bound: f64 },

    #[error("order mismatch: exponent bound {b} must exceed order s = {s}")]
    OrderMismatch { b: f64, s: f64 },

    #[error("constant table does not cover {0}")]
    TableCoverage(String),

    #[error("invalid transfer: {0}")]
    InvalidTransfer(String),

    #[error("extremal search failed: every start was degenerate")]
    SearchFailed,
}
