//! Distributed H2-suboptimal containment control for leader/follower
//! multi-agent systems.
//!
//! The crate covers both the homogeneous case (one shared plant, state
//! containment) and the heterogeneous case (per-agent plants, output
//! containment against an exosystem leader). Each pipeline designs
//! observer-based protocol gains from perturbed Riccati equations, checks
//! the resulting suboptimality certificate, assembles the networked error
//! system, and evaluates its H2 norm. A fixed-step simulator and a CLI sit
//! on top.

pub mod certificate;
pub mod cli;
pub mod error;
pub mod graph;
pub mod h2;
pub mod heterog;
pub mod homog;
pub mod matcore;
pub mod model;
pub mod presets;
pub mod report;
pub mod sim;
pub mod testkit;

pub use certificate::{CertificateReport, Check};
pub use error::{Error, Result};
pub use graph::{build_graph, laplacian_partition, CommGraph, LaplacianPartition};
pub use h2::{h2_norm, h2_norm_quadrature, H2Method, H2Result};
pub use heterog::{design_heterogeneous, HeterogAgent, HeterogGains, LeaderModel};
pub use homog::{design_homogeneous, AgentModel, ClosedLoopSystem, HomogGains};
pub use matcore::Matrix;
