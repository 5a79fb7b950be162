//! Model files (JSON, `schema_version` 1).
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "mode": "homogeneous",
//!   "graph": { "leaders": [7, 8, 9], "edges": [[1, 2], [7, 2]] },
//!   "plant": { "A": [[...]], "B": [[...]], "C1": ..., "C2": ..., "D1": ..., "D2": ..., "E": ... },
//!   "design": { "gamma": 289.0 },
//!   "simulation": { "t_final": 30.0, "dt": 0.001, "x0_followers": [[...]], "x0_leaders": [[...]] }
//! }
//! ```
//!
//! Heterogeneous files replace `plant` by `agents` (one plant per follower,
//! in ascending follower-label order) and add `leader` with `S` and `R`.
//! Node labels are arbitrary integers; followers are every non-leader node.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, laplacian_partition, CommGraph, LabelMap, LaplacianPartition};
use crate::heterog::{HeterogDesignParams, LeaderModel};
use crate::homog::{check_regularity, AgentModel, HomogDesignParams};
use crate::matcore::Matrix;
use crate::sim::{DisturbanceSpec, SimOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Homogeneous,
    Heterogeneous,
}

/// Row-major nested arrays.
pub type RawMatrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// Optional explicit node list; otherwise every label in `edges`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<i64>>,
    pub leaders: Vec<i64>,
    /// `[from, to]`; follower pairs are undirected.
    pub edges: Vec<[i64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: RawMatrix,
    #[serde(rename = "B")]
    pub b: RawMatrix,
    #[serde(rename = "C1")]
    pub c1: RawMatrix,
    #[serde(rename = "C2")]
    pub c2: RawMatrix,
    #[serde(rename = "D1")]
    pub d1: RawMatrix,
    #[serde(rename = "D2")]
    pub d2: RawMatrix,
    #[serde(rename = "E")]
    pub e: RawMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSection {
    #[serde(rename = "S")]
    pub s: RawMatrix,
    #[serde(rename = "R")]
    pub r: RawMatrix,
}

fn default_small() -> f64 {
    1e-3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub gamma: f64,
    #[serde(default = "default_small")]
    pub delta: f64,
    #[serde(default = "default_small")]
    pub eta: f64,
    /// Homogeneous only; defaults to the closed-form choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<f64>,
    /// Require `D1D1ᵀ = I` and `D2ᵀD2 = I` rather than only positive definite.
    #[serde(default = "default_true")]
    pub strict_identity: bool,
}

fn default_t_final() -> f64 {
    30.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Follower states in ascending follower-label order.
    pub x0_followers: Vec<Vec<f64>>,
    /// Leader states in `graph.leaders` order.
    pub x0_leaders: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<Vec<f64>>>,
    /// Disturbance input matrix used in simulation instead of the design `E`
    /// (shared by every follower).
    #[serde(default, rename = "E", skip_serializing_if = "Option::is_none")]
    pub e: Option<RawMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub mode: Mode,
    pub graph: GraphSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<PlantSection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader: Option<LeaderSection>,
    pub design: DesignSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

fn parse_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses JSON text; errors carry the JSON path of the offending field.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        parse_error(if path == "." { "(root)".to_string() } else { path }, e.into_inner().to_string())
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(parse_error(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema_version),
        ));
    }
    Ok(file)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

pub fn to_matrix(raw: &RawMatrix, path: &str) -> Result<Matrix> {
    let rows = raw.len();
    let cols = raw.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(parse_error(path, "matrix must have at least one row and one column"));
    }
    if let Some(k) = raw.iter().position(|r| r.len() != cols) {
        return Err(parse_error(
            format!("{path}[{k}]"),
            format!("row has {} entries, expected {cols}", raw[k].len()),
        ));
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| raw[i][j]))
}

pub fn from_matrix(m: &Matrix) -> RawMatrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn plant_model(p: &PlantSection, path: &str) -> Result<AgentModel> {
    let m = |raw: &RawMatrix, name: &str| to_matrix(raw, &format!("{path}.{name}"));
    AgentModel::new(
        m(&p.a, "A")?,
        m(&p.b, "B")?,
        m(&p.c1, "C1")?,
        m(&p.c2, "C2")?,
        m(&p.d1, "D1")?,
        m(&p.d2, "D2")?,
        m(&p.e, "E")?,
    )
    .map_err(|e| Error::ModelInvariant(format!("{path}: {e}")))
}

/// Validated problem data.
#[derive(Debug, Clone)]
pub enum Problem {
    Homogeneous { sys: AgentModel },
    Heterogeneous { agents: Vec<AgentModel>, leader: LeaderModel },
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub file: ModelFile,
    pub labels: LabelMap,
    pub graph: CommGraph,
    pub part: LaplacianPartition,
    pub problem: Problem,
}

fn load_graph(g: &GraphSection) -> Result<(LabelMap, CommGraph)> {
    let mut labels: BTreeSet<i64> = g.nodes.iter().flatten().copied().collect();
    let mut seen = BTreeSet::new();
    for &l in &g.leaders {
        if !seen.insert(l) {
            return Err(Error::ModelInvariant(format!("graph.leaders: label {l} listed twice")));
        }
        if g.nodes.is_none() {
            labels.insert(l);
        }
    }
    for (k, &[from, to]) in g.edges.iter().enumerate() {
        if g.nodes.is_some() {
            for l in [from, to] {
                if !labels.contains(&l) {
                    return Err(Error::ModelInvariant(format!(
                        "graph.edges[{k}]: label {l} is not in graph.nodes"
                    )));
                }
            }
        } else {
            labels.insert(from);
            labels.insert(to);
        }
        if from == to {
            return Err(Error::ModelInvariant(format!("graph.edges[{k}]: self-loop at node {from}")));
        }
        if g.leaders.contains(&to) {
            return Err(Error::ModelInvariant(format!(
                "graph.edges[{k}] = [{from}, {to}] ends at leader {to}; leaders must not receive \
                 information from any node (no incoming edges)"
            )));
        }
    }
    let map = LabelMap::new(&labels, &g.leaders).map_err(|e| Error::ModelInvariant(format!("graph.leaders: {e}")))?;
    let edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .map(|&[a, b]| (map.index_of(a).expect("label collected"), map.index_of(b).expect("label collected")))
        .collect();
    let graph = build_graph(map.followers.len(), map.leaders.len(), &edges).map_err(|e| match e {
        Error::IsolatedLeader(idx) => Error::ModelInvariant(format!(
            "graph: leader {} has no edge to any follower",
            map.leaders[idx - map.followers.len() - 1]
        )),
        other => Error::ModelInvariant(format!("graph: {other}")),
    })?;
    Ok((map, graph))
}

/// Full validation: graph assumptions, matrix shapes, regularity of every
/// plant, stabilizability/detectability, and the leader generator.
pub fn load(file: ModelFile) -> Result<LoadedModel> {
    let (labels, graph) = load_graph(&file.graph)?;
    let part = laplacian_partition(&graph)?;
    let strict = file.design.strict_identity;
    let problem = match file.mode {
        Mode::Homogeneous => {
            if file.agents.is_some() || file.leader.is_some() {
                return Err(parse_error(
                    "(root)",
                    "homogeneous models take `plant`, not `agents`/`leader`",
                ));
            }
            let plant = file
                .plant
                .as_ref()
                .ok_or_else(|| parse_error("plant", "missing section"))?;
            let sys = plant_model(plant, "plant")?;
            check_regularity(&sys, strict).map_err(|e| Error::ModelInvariant(format!("plant: {e}")))?;
            sys.check_structure()
                .map_err(|e| Error::ModelInvariant(format!("plant: {e}")))?;
            Problem::Homogeneous { sys }
        }
        Mode::Heterogeneous => {
            if file.plant.is_some() {
                return Err(parse_error("plant", "heterogeneous models take `agents` and `leader`"));
            }
            let raw = file
                .agents
                .as_ref()
                .ok_or_else(|| parse_error("agents", "missing section"))?;
            let ls = file
                .leader
                .as_ref()
                .ok_or_else(|| parse_error("leader", "missing section"))?;
            let leader = LeaderModel::new(to_matrix(&ls.s, "leader.S")?, to_matrix(&ls.r, "leader.R")?)
                .map_err(|e| Error::ModelInvariant(format!("leader: {e}")))?;
            if raw.len() != labels.followers.len() {
                return Err(Error::ModelInvariant(format!(
                    "agents: {} plants for {} followers",
                    raw.len(),
                    labels.followers.len()
                )));
            }
            let mut agents = Vec::with_capacity(raw.len());
            for (k, p) in raw.iter().enumerate() {
                let path = format!("agents[{k}]");
                let sys = plant_model(p, &path)?;
                if sys.dims().p != leader.output_dim() {
                    return Err(Error::ModelInvariant(format!(
                        "{path}: {} controlled outputs, leader R has {} rows",
                        sys.dims().p,
                        leader.output_dim()
                    )));
                }
                check_regularity(&sys, strict).map_err(|e| Error::ModelInvariant(format!("{path}: {e}")))?;
                sys.check_structure()
                    .map_err(|e| Error::ModelInvariant(format!("{path}: {e}")))?;
                agents.push(sys);
            }
            Problem::Heterogeneous { agents, leader }
        }
    };
    Ok(LoadedModel {
        file,
        labels,
        graph,
        part,
        problem,
    })
}

/// Command-line overrides of the design section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DesignOverrides {
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub cp: Option<f64>,
}

impl DesignOverrides {
    pub fn apply(&self, d: &DesignSection) -> DesignSection {
        DesignSection {
            gamma: self.gamma.unwrap_or(d.gamma),
            delta: self.delta.unwrap_or(d.delta),
            eta: self.eta.unwrap_or(d.eta),
            cp: self.cp.or(d.cp),
            strict_identity: d.strict_identity,
        }
    }
}

impl DesignSection {
    pub fn homogeneous_params(&self) -> HomogDesignParams {
        HomogDesignParams {
            gamma: self.gamma,
            cp: self.cp,
            delta: self.delta,
            eta: self.eta,
            strict_identity: self.strict_identity,
        }
    }

    pub fn heterogeneous_params(&self) -> HeterogDesignParams {
        HeterogDesignParams {
            gamma: self.gamma,
            delta: self.delta,
            eta: self.eta,
            strict_identity: self.strict_identity,
        }
    }
}

impl SimulationSection {
    pub fn options(&self) -> SimOptions {
        SimOptions {
            t_final: self.t_final,
            dt: self.dt,
            stride: self.stride,
        }
    }

    pub fn disturbance_spec(&self) -> DisturbanceSpec {
        self.disturbance.clone().unwrap_or_else(DisturbanceSpec::zero)
    }
}
