//! Command-line front end.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 model
//! invariant violated, 4 bound or threshold above `gamma`, 5 numerical
//! failure, 6 diverging simulation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::h2::{h2_norm, h2_norm_quadrature_auto, relative_gap};
use crate::heterog::{assemble_error_system_het, design_heterogeneous, verify_heterog_certificate, HeterogGains};
use crate::homog::{assemble_error_system, design_homogeneous, verify_homog_certificate, ClosedLoopSystem, HomogGains};
use crate::matcore;
use crate::model::{self, to_matrix, DesignOverrides, LoadedModel, Mode, Problem};
use crate::report::{
    render_design_text, to_json, write_atomic, DesignReport, H2Report, HeterogSummary, HomogSummary,
    QuadratureSummary, SimulationReport, REPORT_VERSION,
};
use crate::sim::{
    containment_metrics, render_svg, simulate_heterogeneous, simulate_homogeneous, trace_groups, write_csv,
    DisturbanceSpec, HeterogScenario, HomogScenario, SimulationTrace,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_BOUND: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;
pub const EXIT_DIVERGED: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "h2-containment", version, about = "Design and simulate H2-suboptimal containment protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a model file and check every modelling assumption.
    Validate {
        model: PathBuf,
    },
    /// Design protocol gains and report the certificate and H2 norm.
    Design {
        model: PathBuf,
        #[command(flatten)]
        design: DesignFlags,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cross-check the H2 norm by impulse-response quadrature.
        #[arg(long)]
        quadrature: bool,
        /// Rendering printed on stdout.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Design, then simulate the network and write traces.
    Simulate {
        model: PathBuf,
        #[command(flatten)]
        design: DesignFlags,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Overrides the disturbance seed of the model file.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write one SVG plot per signal group.
        #[arg(long)]
        svg: bool,
        /// Ignore the model's disturbance and simulate the nominal network.
        #[arg(long)]
        no_disturbance: bool,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Keep every k-th sample in the trace.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Design, then report the H2 norm of the error system.
    H2 {
        model: PathBuf,
        #[command(flatten)]
        design: DesignFlags,
        #[arg(long)]
        quadrature: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct DesignFlags {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Coupling gain (homogeneous models only).
    #[arg(long)]
    cp: Option<f64>,
}

impl DesignFlags {
    fn overrides(&self) -> DesignOverrides {
        DesignOverrides {
            gamma: self.gamma,
            delta: self.delta,
            eta: self.eta,
            cp: self.cp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Io(_) | Error::InvalidArgument(_) | Error::NonFinite(_) => EXIT_PARSE,
        Error::SelfLoop(_)
        | Error::EdgeIntoLeader { .. }
        | Error::FollowersDisconnected
        | Error::IsolatedLeader(_)
        | Error::LabelOutOfRange { .. }
        | Error::EmptyGraph
        | Error::InvalidSpectrum(_)
        | Error::RegularityViolation(_)
        | Error::ModelInvariant(_)
        | Error::CpOutOfRange { .. }
        | Error::DimensionMismatch(_)
        | Error::RegulatorInfeasible { .. } => EXIT_INVARIANT,
        Error::BoundExceedsGamma(_) | Error::ThresholdExceeded { .. } => EXIT_BOUND,
        Error::NotHurwitz { .. }
        | Error::NotSymmetric { .. }
        | Error::NoStabilizingSolution(_)
        | Error::IllConditioned(_)
        | Error::CertificateFailed(_)
        | Error::HorizonTooShort { .. } => EXIT_SOLVER,
        Error::NonFiniteState { .. } => EXIT_DIVERGED,
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    model::load(model::read_model(path)?)
}

/// Gains of either pipeline, kept even when rejected.
#[derive(Debug, Clone)]
pub enum DesignedGains {
    Homogeneous(HomogGains),
    Heterogeneous(HeterogGains),
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub report: DesignReport,
    pub gains: DesignedGains,
    pub error_system: ClosedLoopSystem,
}

fn certificate_of(r: Result<crate::CertificateReport>) -> Result<crate::CertificateReport> {
    match r {
        Ok(rep) => Ok(rep),
        Err(Error::CertificateFailed(rep)) => Ok(*rep),
        Err(e) => Err(e),
    }
}

fn quadrature_summary(clp: &ClosedLoopSystem, gramian: f64) -> Result<QuadratureSummary> {
    let (q, horizon, dt) = h2_norm_quadrature_auto(clp)?;
    Ok(QuadratureSummary {
        norm: q.norm,
        horizon,
        dt,
        relative_gap: relative_gap(gramian, q.norm),
    })
}

/// Runs the design for the model's mode. Designs whose bound or threshold
/// test fails are returned with `accepted = false`.
pub fn run_design(model: &LoadedModel, overrides: &DesignOverrides, quadrature: bool) -> Result<DesignOutcome> {
    let design = overrides.apply(&model.file.design);
    let part = &model.part;
    let (gains, error_system, certificate) = match &model.problem {
        Problem::Homogeneous { sys } => {
            let gains = match design_homogeneous(sys, part, &design.homogeneous_params()) {
                Ok(g) => g,
                Err(Error::BoundExceedsGamma(g)) => *g,
                Err(e) => return Err(e),
            };
            let clp = assemble_error_system(sys, part, &gains)?;
            let cert = certificate_of(verify_homog_certificate(sys, part, &gains))?;
            (DesignedGains::Homogeneous(gains), clp, cert)
        }
        Problem::Heterogeneous { agents, leader } => {
            if design.cp.is_some() {
                return Err(Error::InvalidArgument("c_p applies to homogeneous models only".into()));
            }
            let gains = match design_heterogeneous(agents, leader, part, &design.heterogeneous_params()) {
                Ok(g) => g,
                Err(Error::ThresholdExceeded { gains, .. }) => *gains,
                Err(e) => return Err(e),
            };
            let clp = assemble_error_system_het(agents, leader, part, &gains)?;
            let cert = certificate_of(verify_heterog_certificate(agents, leader, part, &gains))?;
            (DesignedGains::Heterogeneous(gains), clp, cert)
        }
    };
    let h2 = if matcore::is_hurwitz(&error_system.a, 0.0) {
        Some(h2_norm(&error_system)?.norm)
    } else {
        None
    };
    let quadrature = match (quadrature, h2) {
        (true, Some(n)) => Some(quadrature_summary(&error_system, n)?),
        _ => None,
    };
    let (accepted, homogeneous, heterogeneous) = match &gains {
        DesignedGains::Homogeneous(g) => (g.accepted, Some(HomogSummary::from(g)), None),
        DesignedGains::Heterogeneous(g) => (g.accepted, None, Some(HeterogSummary::new(g, &model.labels.followers))),
    };
    let report = DesignReport {
        report_version: REPORT_VERSION,
        mode: model.file.mode,
        accepted,
        gamma: design.gamma,
        sqrt_gamma: design.gamma.sqrt(),
        lambda_min: part.lambda_min(),
        lambda_max: part.lambda_max(),
        error_system_dim: error_system.state_dim(),
        h2_norm: h2,
        quadrature,
        certificate,
        homogeneous,
        heterogeneous,
    };
    Ok(DesignOutcome {
        report,
        gains,
        error_system,
    })
}

/// Exit status implied by a completed design.
fn design_status(report: &DesignReport) -> i32 {
    if !report.accepted {
        EXIT_BOUND
    } else if !report.certificate.passed() || report.h2_norm.is_none() {
        EXIT_SOLVER
    } else {
        EXIT_OK
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::Io(format!("stdout: {e}")))
}

fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<i32> {
    let m = load_model(path)?;
    let mode = match m.file.mode {
        Mode::Homogeneous => "homogeneous",
        Mode::Heterogeneous => "heterogeneous",
    };
    emit(
        out,
        &format!(
            "valid {mode} model: {} followers, {} leaders, lambda_min = {}, lambda_max = {}\n",
            m.part.num_followers(),
            m.part.num_leaders(),
            crate::report::sig6(m.part.lambda_min()),
            crate::report::sig6(m.part.lambda_max())
        ),
    )?;
    Ok(EXIT_OK)
}

fn cmd_design(
    path: &Path,
    flags: &DesignFlags,
    out_path: Option<&Path>,
    quadrature: bool,
    format: Format,
    out: &mut dyn Write,
) -> Result<i32> {
    let m = load_model(path)?;
    let outcome = run_design(&m, &flags.overrides(), quadrature)?;
    let json = to_json(&outcome.report)?;
    match out_path {
        Some(p) => {
            write_atomic(p, json.as_bytes())?;
            if format == Format::Text {
                emit(out, &render_design_text(&outcome.report))?;
            }
        }
        None => match format {
            Format::Json => emit(out, &json)?,
            Format::Text => emit(out, &render_design_text(&outcome.report))?,
        },
    }
    Ok(design_status(&outcome.report))
}

fn cmd_h2(path: &Path, flags: &DesignFlags, quadrature: bool, out_path: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let m = load_model(path)?;
    let outcome = run_design(&m, &flags.overrides(), quadrature)?;
    let Some(norm) = outcome.report.h2_norm else {
        return Err(Error::NotHurwitz {
            max_real: matcore::max_real_part(&outcome.error_system.a)?,
        });
    };
    let report = H2Report {
        report_version: REPORT_VERSION,
        mode: m.file.mode,
        accepted: outcome.report.accepted,
        h2_norm: norm,
        sqrt_gamma: outcome.report.sqrt_gamma,
        quadrature: outcome.report.quadrature.clone(),
    };
    let json = to_json(&report)?;
    match out_path {
        Some(p) => write_atomic(p, json.as_bytes())?,
        None => emit(out, &json)?,
    }
    Ok(design_status(&outcome.report))
}

pub struct SimulateRequest {
    pub seed: Option<u64>,
    pub no_disturbance: bool,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub stride: Option<usize>,
}

/// Designs and simulates the model's scenario. Returns the trace together
/// with the disturbance actually used.
pub fn run_simulation(
    m: &LoadedModel,
    overrides: &DesignOverrides,
    req: &SimulateRequest,
) -> Result<(DesignOutcome, SimulationTrace, DisturbanceSpec)> {
    let sim = m
        .file
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Parse {
            path: "simulation".into(),
            message: "missing section (required by simulate)".into(),
        })?;
    let outcome = run_design(m, overrides, false)?;
    if !outcome.report.accepted {
        return Err(match outcome.gains {
            DesignedGains::Homogeneous(g) => Error::BoundExceedsGamma(Box::new(g)),
            DesignedGains::Heterogeneous(g) => Error::ThresholdExceeded {
                agents: g
                    .agents
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.s_value >= g.threshold)
                    .map(|(i, _)| i + 1)
                    .collect(),
                gains: Box::new(g),
            },
        });
    }
    let mut opts = sim.options();
    opts.t_final = req.t_final.unwrap_or(opts.t_final);
    opts.dt = req.dt.unwrap_or(opts.dt);
    opts.stride = req.stride.unwrap_or(opts.stride);
    let mut dist = if req.no_disturbance {
        DisturbanceSpec::zero()
    } else {
        sim.disturbance_spec()
    };
    if let Some(seed) = req.seed {
        dist.seed = seed;
    }
    let sim_e = sim.e.as_ref().map(|e| to_matrix(e, "simulation.E")).transpose()?;
    let with_e = |sys: &crate::AgentModel| -> Result<crate::AgentModel> {
        let mut s = sys.clone();
        if let Some(e) = &sim_e {
            s.e = e.clone();
            s.check_dims()
                .map_err(|err| Error::ModelInvariant(format!("simulation.E: {err}")))?;
        }
        Ok(s)
    };
    let trace = match (&m.problem, &outcome.gains) {
        (Problem::Homogeneous { sys }, DesignedGains::Homogeneous(gains)) => {
            let sys = with_e(sys)?;
            simulate_homogeneous(
                &HomogScenario {
                    sys: &sys,
                    part: &m.part,
                    gains,
                    x0_followers: &sim.x0_followers,
                    x0_leaders: &sim.x0_leaders,
                    w0: sim.w0.as_deref(),
                },
                &dist,
                &opts,
            )?
        }
        (Problem::Heterogeneous { agents, leader }, DesignedGains::Heterogeneous(gains)) => {
            let agents = agents.iter().map(with_e).collect::<Result<Vec<_>>>()?;
            simulate_heterogeneous(
                &HeterogScenario {
                    agents: &agents,
                    leader,
                    part: &m.part,
                    gains,
                    x0_followers: &sim.x0_followers,
                    x0_leaders: &sim.x0_leaders,
                    w0: sim.w0.as_deref(),
                    v0: sim.v0.as_deref(),
                },
                &dist,
                &opts,
            )?
        }
        _ => unreachable!("design mode follows model mode"),
    };
    Ok((outcome, trace, dist))
}

fn cmd_simulate(
    path: &Path,
    flags: &DesignFlags,
    out_dir: &Path,
    svg: bool,
    req: &SimulateRequest,
    out: &mut dyn Write,
) -> Result<i32> {
    let m = load_model(path)?;
    let (_, trace, dist) = run_simulation(&m, &flags.overrides(), req)?;
    let metrics = containment_metrics(&trace);

    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let mut csv = Vec::new();
    write_csv(&trace, &mut csv)?;
    let mut files = vec![("trace.csv".to_string(), csv)];
    if svg {
        for (name, labels, data) in trace_groups(&trace) {
            if labels.is_empty() {
                continue;
            }
            files.push((format!("{name}.svg"), render_svg(name, &trace.times, &labels, data).into_bytes()));
        }
    }
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push("metrics.json".into());
    let report = SimulationReport {
        report_version: REPORT_VERSION,
        mode: m.file.mode,
        seed: dist.seed,
        samples: trace.len(),
        metrics,
        files: names,
    };
    let json = to_json(&report)?;
    files.push(("metrics.json".into(), json.clone().into_bytes()));
    for (name, bytes) in &files {
        write_atomic(&out_dir.join(name), bytes)?;
    }
    emit(out, &json)?;
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and executes the command, writing
/// regular output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Validate { model } => cmd_validate(model, out),
        Command::Design {
            model,
            design,
            out: out_path,
            quadrature,
            format,
        } => cmd_design(model, design, out_path.as_deref(), *quadrature, *format, out),
        Command::Simulate {
            model,
            design,
            out_dir,
            seed,
            svg,
            no_disturbance,
            t_final,
            dt,
            stride,
        } => cmd_simulate(
            model,
            design,
            out_dir,
            *svg,
            &SimulateRequest {
                seed: *seed,
                no_disturbance: *no_disturbance,
                t_final: *t_final,
                dt: *dt,
                stride: *stride,
            },
            out,
        ),
        Command::H2 {
            model,
            design,
            quadrature,
            out: out_path,
        } => cmd_h2(model, design, *quadrature, out_path.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
