//! Heterogeneous output containment: followers with individual plants track
//! the convex hull of leader outputs generated by a common exosystem
//! `(S, R)`. Each follower carries a Luenberger observer and a copy of the
//! exosystem driven by its neighbours.

use crate::certificate::CertificateReport;
use crate::error::{Error, Result};
use crate::graph::LaplacianPartition;
use crate::homog::{check_regularity, stability_value, AgentModel, ClosedLoopSystem};
use crate::matcore::{self, block, block_diag, identity, kron, trace, Matrix};

/// Follower plants share the [`AgentModel`] shape; only `p` must agree.
pub type HeterogAgent = AgentModel;

/// Exosystem `v̇ = Sv`, `z = Rv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderModel {
    pub s: Matrix,
    pub r: Matrix,
}

impl LeaderModel {
    /// Rejects generators with eigenvalues off the imaginary axis (the
    /// variant with an extra stabilising gain on the reference copy is not
    /// supported) and non-observable `(R, S)`.
    pub fn new(s: Matrix, r: Matrix) -> Result<Self> {
        if !s.is_square() || s.nrows() == 0 || r.ncols() != s.nrows() || r.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "leader S is {}x{}, R is {}x{}",
                s.nrows(),
                s.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        matcore::ensure_finite(&s, "S")?;
        matcore::ensure_finite(&r, "R")?;
        let tol = 1e-8 * (1.0 + s.norm());
        for ev in matcore::eigenvalues(&s)? {
            if ev.re.abs() > tol {
                return Err(Error::ModelInvariant(format!(
                    "leader generator S has eigenvalue {:.6}{:+.6}i off the imaginary axis; \
                     generators with non-marginal modes need an extra gain on the reference \
                     system, which is not supported",
                    ev.re, ev.im
                )));
            }
        }
        if !matcore::is_observable(&r, &s)? {
            return Err(Error::ModelInvariant("(R, S) is not observable".into()));
        }
        Ok(Self { s, r })
    }

    /// Exosystem order.
    pub fn order(&self) -> usize {
        self.s.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.r.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution {
    pub pi: Matrix,
    pub gamma: Matrix,
    pub residual: f64,
}

fn regulator_residual(agent: &AgentModel, leader: &LeaderModel, pi: &Matrix, gamma: &Matrix) -> f64 {
    let first = &agent.a * pi + &agent.b * gamma - pi * &leader.s;
    let second = &agent.c2 * pi + &agent.d2 * gamma - &leader.r;
    (first.norm_squared() + second.norm_squared()).sqrt()
}

/// Minimum-norm least-squares solution of `AΠ + BΓ = ΠS`, `C2Π + D2Γ = R`.
/// `agent` is the 1-based index quoted in the infeasibility error.
pub fn solve_regulator(agent: &AgentModel, leader: &LeaderModel, index: usize) -> Result<RegulatorSolution> {
    agent.check_dims()?;
    let d = agent.dims();
    let r = leader.order();
    if d.p != leader.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "agent {index} has {} controlled outputs but R has {} rows",
            d.p,
            leader.output_dim()
        )));
    }
    let ir = identity(r);
    // Column-major vectorisation: vec(AΠ) = (I⊗A)vecΠ, vec(ΠS) = (Sᵀ⊗I)vecΠ.
    let coef = block(&[
        vec![
            kron(&ir, &agent.a) - kron(&leader.s.transpose(), &identity(d.n)),
            kron(&ir, &agent.b),
        ],
        vec![kron(&ir, &agent.c2), kron(&ir, &agent.d2)],
    ])?;
    let mut rhs = Matrix::zeros(d.n * r + d.p * r, 1);
    for (k, v) in leader.r.iter().enumerate() {
        rhs[(d.n * r + k, 0)] = *v;
    }
    let (sol, _) = matcore::solve_lsq(&coef, &rhs)?;
    let pi = Matrix::from_column_slice(d.n, r, &sol.as_slice()[..d.n * r]);
    let gamma = Matrix::from_column_slice(d.m, r, &sol.as_slice()[d.n * r..]);
    let residual = regulator_residual(agent, leader, &pi, &gamma);
    if residual > 1e-8 * (1.0 + leader.r.norm()) {
        return Err(Error::RegulatorInfeasible { agent: index, residual });
    }
    Ok(RegulatorSolution { pi, gamma, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogDesignParams {
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    pub strict_identity: bool,
}

impl HeterogDesignParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            delta: 1e-3,
            eta: 1e-3,
            strict_identity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentGains {
    pub f: Matrix,
    pub g: Matrix,
    pub p: Matrix,
    pub q: Matrix,
    pub regulator: RegulatorSolution,
    /// `tr(C1QPQC1ᵀ(D1D1ᵀ)⁻¹) + tr(C2QC2ᵀ)`
    pub s_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogGains {
    pub agents: Vec<AgentGains>,
    pub gamma: f64,
    /// `γ / (M·λM²)`
    pub threshold: f64,
    pub delta: f64,
    pub eta: f64,
    pub accepted: bool,
}

fn weight_inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RegularityViolation(format!("{what} is not positive definite")))
}

/// `tr(C1QPQC1ᵀ(D1D1ᵀ)⁻¹) + tr(C2QC2ᵀ)`
pub fn agent_s_value(agent: &AgentModel, p: &Matrix, q: &Matrix) -> Result<f64> {
    let w1_inv = weight_inverse(&agent.measurement_weight(), "D1·D1ᵀ")?;
    Ok(trace(&(&agent.c1 * q * p * q * agent.c1.transpose() * w1_inv)) + trace(&(&agent.c2 * q * agent.c2.transpose())))
}

pub fn threshold(gamma: f64, part: &LaplacianPartition) -> f64 {
    gamma / (part.num_followers() as f64 * part.lambda_max().powi(2))
}

fn check_agent_count(agents: &[HeterogAgent], part: &LaplacianPartition) -> Result<()> {
    if agents.len() != part.num_followers() {
        return Err(Error::DimensionMismatch(format!(
            "{} agent models for {} followers",
            agents.len(),
            part.num_followers()
        )));
    }
    Ok(())
}

/// Designs one agent: regulator, then the two perturbed Riccati equations.
pub fn design_agent(
    agent: &AgentModel,
    leader: &LeaderModel,
    params: &HeterogDesignParams,
    index: usize,
) -> Result<AgentGains> {
    check_regularity(agent, params.strict_identity)?;
    agent.check_structure()?;
    let regulator = solve_regulator(agent, leader, index)?;
    let n = agent.dims().n;
    let w1_inv = weight_inverse(&agent.measurement_weight(), "D1·D1ᵀ")?;
    let w2_inv = weight_inverse(&agent.control_weight(), "D2ᵀ·D2")?;

    let s_p = &agent.b * &w2_inv * agent.b.transpose();
    let q_p = agent.c2.transpose() * &agent.c2 + identity(n) * params.delta;
    let (p, _) = matcore::solve_care(&agent.a, &s_p, &q_p)?;

    let s_q = agent.c1.transpose() * &w1_inv * &agent.c1;
    let q_q = &agent.e * agent.e.transpose() + identity(n) * params.eta;
    let (q, _) = matcore::solve_care(&agent.a.transpose(), &s_q, &q_q)?;

    let f = -(&w2_inv * agent.b.transpose() * &p);
    let g = -(&q * agent.c1.transpose() * &w1_inv);
    let s_value = agent_s_value(agent, &p, &q)?;
    Ok(AgentGains {
        f,
        g,
        p,
        q,
        regulator,
        s_value,
    })
}

/// Per-agent designs compared against `γ/(M·λM²)`. Agents over the
/// threshold are reported (1-based) in [`Error::ThresholdExceeded`], which
/// carries the complete design.
pub fn design_heterogeneous(
    agents: &[HeterogAgent],
    leader: &LeaderModel,
    part: &LaplacianPartition,
    params: &HeterogDesignParams,
) -> Result<HeterogGains> {
    check_agent_count(agents, part)?;
    for (name, v) in [("gamma", params.gamma), ("delta", params.delta), ("eta", params.eta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let designs = agents
        .iter()
        .enumerate()
        .map(|(i, a)| design_agent(a, leader, params, i + 1))
        .collect::<Result<Vec<_>>>()?;
    let threshold = threshold(params.gamma, part);
    let over: Vec<usize> = designs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.s_value >= threshold)
        .map(|(i, _)| i + 1)
        .collect();
    let gains = HeterogGains {
        agents: designs,
        gamma: params.gamma,
        threshold,
        delta: params.delta,
        eta: params.eta,
        accepted: over.is_empty(),
    };
    if over.is_empty() {
        Ok(gains)
    } else {
        Err(Error::ThresholdExceeded {
            agents: over,
            gains: Box::new(gains),
        })
    }
}

/// `I_M⊗S − L1⊗I_r`
pub fn reference_block(leader: &LeaderModel, part: &LaplacianPartition) -> Matrix {
    let r = leader.order();
    kron(&identity(part.num_followers()), &leader.s) - kron(&part.l1, &identity(r))
}

/// Error system in `(e, δ, ξ)`:
///
/// ```text
/// A_o = [[A+GC1, 0, 0], [−BF, A+BF, Π], [0, 0, I⊗S − L1⊗I_r]]
/// E_o = [[E+GD1], [E], [0]]
/// C_o = [−(L1⊗I_p)D2F, (L1⊗I_p)(C2+D2F), I⊗R]
/// ```
///
/// with `A`, `B`, `F`, ... block-diagonal over the agents.
pub fn assemble_error_system_het(
    agents: &[HeterogAgent],
    leader: &LeaderModel,
    part: &LaplacianPartition,
    gains: &HeterogGains,
) -> Result<ClosedLoopSystem> {
    check_agent_count(agents, part)?;
    if gains.agents.len() != agents.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gain sets for {} agents",
            gains.agents.len(),
            agents.len()
        )));
    }
    let m = agents.len();
    let r = leader.order();
    let p = leader.output_dim();
    for (i, (a, g)) in agents.iter().zip(&gains.agents).enumerate() {
        let d = a.dims();
        if d.p != p
            || g.f.shape() != (d.m, d.n)
            || g.g.shape() != (d.n, d.r)
            || g.regulator.pi.shape() != (d.n, r)
        {
            return Err(Error::DimensionMismatch(format!("agent {} gains do not match its model", i + 1)));
        }
    }
    let diag = |f: &dyn Fn(&AgentModel, &AgentGains) -> Matrix| -> Matrix {
        block_diag(&agents.iter().zip(&gains.agents).map(|(a, g)| f(a, g)).collect::<Vec<_>>())
    };
    let a = diag(&|a, _| a.a.clone());
    let bf = diag(&|a, g| &a.b * &g.f);
    let gc1 = diag(&|a, g| &g.g * &a.c1);
    let pi = diag(&|_, g| g.regulator.pi.clone());
    let e = diag(&|a, _| a.e.clone());
    let gd1 = diag(&|a, g| &g.g * &a.d1);
    let c2 = diag(&|a, _| a.c2.clone());
    let d2f = diag(&|a, g| &a.d2 * &g.f);

    let nx = a.nrows();
    let nv = m * r;
    let zero = |rows: usize, cols: usize| Matrix::zeros(rows, cols);
    let a_o = block(&[
        vec![&a + &gc1, zero(nx, nx), zero(nx, nv)],
        vec![-bf.clone(), &a + &bf, pi],
        vec![zero(nv, nx), zero(nv, nx), reference_block(leader, part)],
    ])?;
    let e_o = block(&[vec![&e + &gd1], vec![e.clone()], vec![zero(nv, e.ncols())]])?;
    let l1p = kron(&part.l1, &identity(p));
    let c_o = block(&[vec![-(&l1p * &d2f), &l1p * (&c2 + &d2f), kron(&identity(m), &leader.r)]])?;

    let mut labels = Vec::with_capacity(2 * nx + nv);
    for name in ["e", "delta"] {
        for (i, ag) in agents.iter().enumerate() {
            labels.extend((1..=ag.dims().n).map(|k| format!("{name}{}_{k}", i + 1)));
        }
    }
    for i in 1..=m {
        labels.extend((1..=r).map(|k| format!("xi{i}_{k}")));
    }
    ClosedLoopSystem::new(a_o, e_o, c_o, labels)
}

/// Per-agent auxiliary loop in `(x_i, w_i)` coordinates.
pub fn auxiliary_closed_loop_het(agent: &AgentModel, gains: &AgentGains) -> Result<ClosedLoopSystem> {
    let bf = &agent.b * &gains.f;
    let gc1 = &gains.g * &agent.c1;
    let a = block(&[
        vec![agent.a.clone(), bf.clone()],
        vec![-gc1.clone(), &agent.a + &bf + &gc1],
    ])?;
    let e = block(&[vec![agent.e.clone()], vec![-(&gains.g * &agent.d1)]])?;
    let c = block(&[vec![agent.c2.clone(), &agent.d2 * &gains.f]])?;
    let n = agent.dims().n;
    let labels = (1..=n)
        .map(|k| format!("x_{k}"))
        .chain((1..=n).map(|k| format!("w_{k}")))
        .collect();
    ClosedLoopSystem::new(a, e, c, labels)
}

/// Checks the stability decomposition (`A_i + B_iF_i`, `A_i + G_iC1_i`, the
/// reference block and the assembled `A_o`), re-derives every `S_i` value
/// from the stored `P_i`, `Q_i`, and compares them with the threshold.
pub fn verify_heterog_certificate(
    agents: &[HeterogAgent],
    leader: &LeaderModel,
    part: &LaplacianPartition,
    gains: &HeterogGains,
) -> Result<CertificateReport> {
    check_agent_count(agents, part)?;
    let mut report = CertificateReport::default();
    let threshold = threshold(gains.gamma, part);
    report.require_below(
        "threshold recomputation",
        (threshold - gains.threshold).abs(),
        1e-12 * (1.0 + threshold),
    );
    for (i, (a, g)) in agents.iter().zip(&gains.agents).enumerate() {
        let k = i + 1;
        let (value, limit) = stability_value(&(&a.a + &a.b * &g.f))?;
        report.require_below(format!("stability of A{k} + B{k}·F{k}"), value, limit);
        let (value, limit) = stability_value(&(&a.a + &g.g * &a.c1))?;
        report.require_below(format!("stability of A{k} + G{k}·C1_{k}"), value, limit);
        let s = agent_s_value(a, &g.p, &g.q)?;
        report.require_below(
            format!("S{k} recomputation"),
            (s - g.s_value).abs(),
            1e-10 * (1.0 + s.abs()),
        );
        report.require_below(format!("S{k} < threshold"), s, threshold);
    }
    let (value, limit) = stability_value(&reference_block(leader, part))?;
    report.require_below("stability of I⊗S − L1⊗I", value, limit);
    let clp = assemble_error_system_het(agents, leader, part, gains)?;
    let (value, limit) = stability_value(&clp.a)?;
    report.require_below("stability of A_o", value, limit);
    report.into_result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, laplacian_partition, six_follower_example};
    use crate::matcore::from_rows;
    use crate::presets;

    fn golden() -> (Vec<HeterogAgent>, LeaderModel, LaplacianPartition) {
        (
            presets::heterogeneous_agents(),
            presets::leader_model(),
            laplacian_partition(&six_follower_example()).unwrap(),
        )
    }

    #[test]
    fn leader_spectrum_and_observability() {
        assert!(LeaderModel::new(from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]), from_rows(&[&[1.0, 0.0]])).is_ok());
        match LeaderModel::new(from_rows(&[&[0.1, 0.0], &[0.0, 0.0]]), identity(2)) {
            Err(Error::ModelInvariant(msg)) => assert!(msg.contains("imaginary axis")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            LeaderModel::new(from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]), from_rows(&[&[0.0, 1.0]])),
            Err(Error::ModelInvariant(_))
        ));
    }

    #[test]
    fn regulator_for_example_agents() {
        let (agents, leader, _) = golden();
        for (i, a) in agents.iter().enumerate() {
            let sol = solve_regulator(a, &leader, i + 1).unwrap();
            let pi_ref = from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
            assert!((&sol.pi - pi_ref).amax() < 1e-10);
            assert!((&sol.gamma - from_rows(&[&[0.0, 1.0]])).amax() < 1e-10);
            let first = &a.a * &sol.pi + &a.b * &sol.gamma - &sol.pi * &leader.s;
            let second = &a.c2 * &sol.pi + &a.d2 * &sol.gamma - &leader.r;
            assert!(first.amax() < 1e-10 && second.amax() < 1e-10);
        }
    }

    #[test]
    fn identity_regulation() {
        let leader = presets::leader_model();
        let agent = AgentModel::new(
            leader.s.clone(),
            Matrix::zeros(2, 1),
            from_rows(&[&[1.0, 0.0]]),
            leader.r.clone(),
            from_rows(&[&[1.0]]),
            Matrix::zeros(2, 1),
            Matrix::zeros(2, 1),
        )
        .unwrap();
        let sol = solve_regulator(&agent, &leader, 1).unwrap();
        assert!((&sol.pi - identity(2)).amax() < 1e-10);
        assert!(sol.gamma.amax() < 1e-10);
    }

    #[test]
    fn inconsistent_regulator_is_reported() {
        // Output map that never reaches the second row of R.
        let leader = presets::leader_model();
        let mut agent = presets::heterogeneous_agent(1.0, 1.0);
        agent.c2 = from_rows(&[&[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0]]);
        agent.d2 = Matrix::zeros(2, 1);
        match solve_regulator(&agent, &leader, 4) {
            Err(Error::RegulatorInfeasible { agent: 4, residual }) => assert!(residual > 1e-3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn example_design_values() {
        let (agents, leader, part) = golden();
        let gains = design_heterogeneous(&agents, &leader, &part, &HeterogDesignParams::new(115.0)).unwrap();
        let f_ref = [
            [-1.0005, -1.7329, -0.7326],
            [-1.0005, -1.2345, -0.4951],
            [-1.0005, -1.0327, -0.3982],
        ];
        let s_ref = [0.5630, 0.3917, 0.3350];
        for (i, g) in gains.agents.iter().enumerate() {
            for k in 0..3 {
                assert!((g.f[(0, k)] - f_ref[i % 3][k]).abs() < 5e-4);
            }
            assert!((g.s_value - s_ref[i % 3]).abs() < 5e-4);
            assert!(g.g.iter().all(|&v| v < 0.0));
        }
        assert!((gains.threshold - 0.5650).abs() < 5e-5);
        verify_heterog_certificate(&agents, &leader, &part, &gains).unwrap();

        let clp = assemble_error_system_het(&agents, &leader, &part, &gains).unwrap();
        assert_eq!(clp.state_dim(), 48);
        assert!(matcore::is_hurwitz(&clp.a, 0.0));
        assert_eq!(clp.labels[18], "delta1_1");
        assert_eq!(clp.labels[36], "xi1_1");
    }

    #[test]
    fn low_gamma_flags_worst_agents() {
        let (agents, leader, part) = golden();
        match design_heterogeneous(&agents, &leader, &part, &HeterogDesignParams::new(100.0)) {
            Err(Error::ThresholdExceeded { agents, gains }) => {
                assert_eq!(agents, vec![1, 4]);
                assert!((gains.threshold - 0.4913).abs() < 5e-5);
                assert!(!gains.accepted);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_follower_reference_block() {
        let leader = presets::leader_model();
        let part = laplacian_partition(&build_graph(1, 1, &[(2, 1)]).unwrap()).unwrap();
        let agents = vec![presets::heterogeneous_agent(1.0, 1.0)];
        let gains = design_heterogeneous(&agents, &leader, &part, &HeterogDesignParams::new(100.0)).unwrap();
        let clp = assemble_error_system_het(&agents, &leader, &part, &gains).unwrap();
        let xi = clp.a.view((6, 6), (2, 2)).clone_owned();
        assert_eq!(xi, &leader.s - identity(2));
    }

    #[test]
    fn zero_gains_keep_block_placement() {
        let (agents, leader, part) = golden();
        let mut gains = design_heterogeneous(&agents, &leader, &part, &HeterogDesignParams::new(115.0)).unwrap();
        for g in &mut gains.agents {
            g.f = Matrix::zeros(1, 3);
            g.g = Matrix::zeros(3, 1);
        }
        let clp = assemble_error_system_het(&agents, &leader, &part, &gains).unwrap();
        let a = block_diag(&agents.iter().map(|a| a.a.clone()).collect::<Vec<_>>());
        assert_eq!(clp.a.view((0, 0), (18, 18)).clone_owned(), a);
        assert_eq!(clp.a.view((18, 18), (18, 18)).clone_owned(), a);
        assert!(clp.a.view((0, 18), (18, 30)).iter().all(|&v| v == 0.0));
        assert!(matcore::is_hurwitz(&reference_block(&leader, &part), 0.0));
        assert!(!matcore::is_hurwitz(&clp.a, 0.0));
    }

    #[test]
    fn zeroed_feedback_fails_certificate() {
        let (agents, leader, part) = golden();
        let mut gains = design_heterogeneous(&agents, &leader, &part, &HeterogDesignParams::new(115.0)).unwrap();
        gains.agents[1].f = Matrix::zeros(1, 3);
        match verify_heterog_certificate(&agents, &leader, &part, &gains) {
            Err(Error::CertificateFailed(rep)) => {
                assert!(rep.failures().iter().any(|f| f.starts_with("stability of A2 + B2·F2")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
