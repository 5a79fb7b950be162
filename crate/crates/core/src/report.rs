//! Machine-readable reports, their plain-text rendering, and atomic file
//! output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certificate::CertificateReport;
use crate::error::{Error, Result};
use crate::heterog::HeterogGains;
use crate::homog::{CpCase, HomogGains};
use crate::model::{from_matrix, Mode, RawMatrix};
use crate::sim::ContainmentMetrics;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogSummary {
    pub cp: f64,
    pub cp_case: CpCase,
    pub delta: f64,
    pub eta: f64,
    pub bound: f64,
    #[serde(rename = "F")]
    pub f: RawMatrix,
    #[serde(rename = "G")]
    pub g: RawMatrix,
    #[serde(rename = "P")]
    pub p: RawMatrix,
    #[serde(rename = "Q")]
    pub q: RawMatrix,
}

impl From<&HomogGains> for HomogSummary {
    fn from(g: &HomogGains) -> Self {
        Self {
            cp: g.cp,
            cp_case: g.case,
            delta: g.delta,
            eta: g.eta,
            bound: g.bound,
            f: from_matrix(&g.f),
            g: from_matrix(&g.g),
            p: from_matrix(&g.p),
            q: from_matrix(&g.q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSummary {
    pub label: i64,
    pub s_value: f64,
    #[serde(rename = "F")]
    pub f: RawMatrix,
    #[serde(rename = "G")]
    pub g: RawMatrix,
    #[serde(rename = "P")]
    pub p: RawMatrix,
    #[serde(rename = "Q")]
    pub q: RawMatrix,
    #[serde(rename = "Pi")]
    pub pi: RawMatrix,
    #[serde(rename = "Gamma")]
    pub gamma: RawMatrix,
    pub regulator_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogSummary {
    pub threshold: f64,
    pub delta: f64,
    pub eta: f64,
    pub agents: Vec<AgentSummary>,
}

impl HeterogSummary {
    pub fn new(g: &HeterogGains, labels: &[i64]) -> Self {
        Self {
            threshold: g.threshold,
            delta: g.delta,
            eta: g.eta,
            agents: g
                .agents
                .iter()
                .zip(labels)
                .map(|(a, &label)| AgentSummary {
                    label,
                    s_value: a.s_value,
                    f: from_matrix(&a.f),
                    g: from_matrix(&a.g),
                    p: from_matrix(&a.p),
                    q: from_matrix(&a.q),
                    pi: from_matrix(&a.regulator.pi),
                    gamma: from_matrix(&a.regulator.gamma),
                    regulator_residual: a.regulator.residual,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSummary {
    pub norm: f64,
    pub horizon: f64,
    pub dt: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignReport {
    pub report_version: u32,
    pub mode: Mode,
    pub accepted: bool,
    pub gamma: f64,
    pub sqrt_gamma: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub error_system_dim: usize,
    /// Absent when the error system is not Hurwitz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSummary>,
    pub certificate: CertificateReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homogeneous: Option<HomogSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heterogeneous: Option<HeterogSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct H2Report {
    pub report_version: u32,
    pub mode: Mode,
    pub accepted: bool,
    pub h2_norm: f64,
    pub sqrt_gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationReport {
    pub report_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub samples: usize,
    pub metrics: ContainmentMetrics,
    pub files: Vec<String>,
}

/// Pretty JSON with a trailing newline; floats use the shortest
/// representation that parses back to the same value.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_design_report(text: &str) -> Result<DesignReport> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

/// `%.6g`-style formatting.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding may carry into the next decade (e.g. 999999.7).
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    let exp = exp.max(rounded.abs().log10().floor() as i32);
    if !(-5..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').unwrap_or((&s, "0"));
        format!("{}e{e}", trim_zeros(mantissa))
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn matrix_text(out: &mut String, name: &str, m: &RawMatrix) {
    let _ = writeln!(out, "  {name} =");
    for row in m {
        let cells: Vec<String> = row.iter().map(|&v| format!(" {:>12}", sig6(v))).collect();
        let _ = writeln!(out, "    [{} ]", cells.join(""));
    }
}

pub fn render_design_text(r: &DesignReport) -> String {
    let mut out = String::new();
    let mode = match r.mode {
        Mode::Homogeneous => "homogeneous",
        Mode::Heterogeneous => "heterogeneous",
    };
    let _ = writeln!(out, "{mode} design: {}", if r.accepted { "ACCEPTED" } else { "REJECTED" });
    let _ = writeln!(
        out,
        "  L1 spectrum: lambda_min = {}, lambda_max = {}",
        sig6(r.lambda_min),
        sig6(r.lambda_max)
    );
    let _ = writeln!(out, "  gamma = {}, sqrt(gamma) = {}", sig6(r.gamma), sig6(r.sqrt_gamma));
    if let Some(h) = &r.homogeneous {
        let case = match h.cp_case {
            CpCase::Case1 => "case 1",
            CpCase::Case2 => "case 2",
            CpCase::OutOfRange => "out of range",
        };
        let _ = writeln!(out, "  c_p = {} ({case}), delta = {}, eta = {}", sig6(h.cp), sig6(h.delta), sig6(h.eta));
        let _ = writeln!(out, "  certified bound = {}", sig6(h.bound));
        matrix_text(&mut out, "F", &h.f);
        matrix_text(&mut out, "G", &h.g);
    }
    if let Some(h) = &r.heterogeneous {
        let _ = writeln!(
            out,
            "  threshold gamma/(M*lambda_max^2) = {}, delta = {}, eta = {}",
            sig6(h.threshold),
            sig6(h.delta),
            sig6(h.eta)
        );
        for a in &h.agents {
            let _ = writeln!(out, "  agent {}: S = {}", a.label, sig6(a.s_value));
            matrix_text(&mut out, "F", &a.f);
            matrix_text(&mut out, "G", &a.g);
            matrix_text(&mut out, "Pi", &a.pi);
            matrix_text(&mut out, "Gamma", &a.gamma);
        }
    }
    let _ = writeln!(out, "  error system dimension = {}", r.error_system_dim);
    match r.h2_norm {
        Some(n) => {
            let _ = writeln!(out, "  H2 norm = {}", sig6(n));
        }
        None => {
            let _ = writeln!(out, "  H2 norm = unavailable (error system not Hurwitz)");
        }
    }
    if let Some(q) = &r.quadrature {
        let _ = writeln!(
            out,
            "  H2 norm (quadrature) = {}, relative gap = {}",
            sig6(q.norm),
            sig6(q.relative_gap)
        );
    }
    let _ = writeln!(out, "  certificate:");
    for c in &r.certificate.checks {
        let _ = writeln!(
            out,
            "    [{}] {}: {} < {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            sig6(c.value),
            sig6(c.limit)
        );
    }
    out
}

/// Writes through a temporary file in the destination directory and
/// renames it into place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))
            .map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
