use thiserror::Error;

use crate::heterog::HeterogGains;
use crate::homog::HomogGains;
use crate::CertificateReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // numerical kernels
    #[error("matrix is not Hurwitz (max real part of spectrum = {max_real:.6e})")]
    NotHurwitz { max_real: f64 },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),
    #[error("ill-conditioned solve: {0}")]
    IllConditioned(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in {0}")]
    NonFinite(String),

    // graph
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({from}, {to}) terminates at a leader; leaders must not receive information")]
    EdgeIntoLeader { from: usize, to: usize },
    #[error("the follower subgraph is not connected")]
    FollowersDisconnected,
    #[error("leader {0} has no edge to any follower")]
    IsolatedLeader(usize),
    #[error("node label {label} out of range 1..={max}")]
    LabelOutOfRange { label: usize, max: usize },
    #[error("graph needs at least one follower and one leader")]
    EmptyGraph,

    // design
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("regularity violation: {0}")]
    RegularityViolation(String),
    #[error("model invariant violated: {0}")]
    ModelInvariant(String),
    #[error("c_p = {cp} outside the admissible range (0, {upper})")]
    CpOutOfRange { cp: f64, upper: f64 },
    #[error("certified bound {:.6} is not below gamma {:.6}", .0.bound, .0.gamma)]
    BoundExceedsGamma(Box<HomogGains>),
    #[error("per-agent value exceeds threshold gamma/(M*lambda_M^2) for agents {agents:?}")]
    ThresholdExceeded {
        agents: Vec<usize>,
        gains: Box<HeterogGains>,
    },
    #[error("regulator equations infeasible for agent {agent} (residual {residual:.3e})")]
    RegulatorInfeasible { agent: usize, residual: f64 },
    #[error("certificate failed: {}", .0.failures().join("; "))]
    CertificateFailed(Box<CertificateReport>),

    // h2 / simulation
    #[error("quadrature horizon too short (tail estimate {tail:.3e} vs accumulated {accumulated:.3e})")]
    HorizonTooShort { tail: f64, accumulated: f64 },
    #[error("state diverged at t = {time:.4} (|x| = {magnitude:.3e})")]
    NonFiniteState { time: f64, magnitude: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // model files and I/O
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Io(String),
}
