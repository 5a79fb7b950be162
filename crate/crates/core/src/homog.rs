//! Homogeneous state containment: one shared plant for every agent, a
//! distributed observer-based protocol with gains `F = −c_p·BᵀP` and
//! `G = −Q·C1ᵀ`, and the networked error system those gains induce.

use serde::{Deserialize, Serialize};

use crate::certificate::CertificateReport;
use crate::error::{Error, Result};
use crate::graph::LaplacianPartition;
use crate::matcore::{self, block, identity, kron, trace, Matrix};

/// Exact-zero / exact-identity checks on the feedthrough matrices.
pub const REGULARITY_TOL: f64 = 1e-10;

/// `ẋ = Ax + Bu + Ed`, `y = C1x + D1d`, `z = C2x + D2u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c1: Matrix,
    pub c2: Matrix,
    pub d1: Matrix,
    pub d2: Matrix,
    pub e: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// state
    pub n: usize,
    /// input
    pub m: usize,
    /// disturbance
    pub q: usize,
    /// measured output
    pub r: usize,
    /// controlled output
    pub p: usize,
}

impl AgentModel {
    pub fn new(a: Matrix, b: Matrix, c1: Matrix, c2: Matrix, d1: Matrix, d2: Matrix, e: Matrix) -> Result<Self> {
        let sys = Self { a, b, c1, c2, d1, d2, e };
        sys.check_dims()?;
        Ok(sys)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.a.nrows(),
            m: self.b.ncols(),
            q: self.e.ncols(),
            r: self.c1.nrows(),
            p: self.c2.nrows(),
        }
    }

    pub fn check_dims(&self) -> Result<()> {
        let d = self.dims();
        let expect = |name: &str, m: &Matrix, rows: usize, cols: usize| -> Result<()> {
            if m.shape() == (rows, cols) {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )))
            }
        };
        if d.n == 0 || d.m == 0 || d.q == 0 || d.r == 0 || d.p == 0 {
            return Err(Error::DimensionMismatch("agent dimensions must be positive".into()));
        }
        expect("A", &self.a, d.n, d.n)?;
        expect("B", &self.b, d.n, d.m)?;
        expect("C1", &self.c1, d.r, d.n)?;
        expect("C2", &self.c2, d.p, d.n)?;
        expect("D1", &self.d1, d.r, d.q)?;
        expect("D2", &self.d2, d.p, d.m)?;
        expect("E", &self.e, d.n, d.q)?;
        for (name, m) in [
            ("A", &self.a),
            ("B", &self.b),
            ("C1", &self.c1),
            ("C2", &self.c2),
            ("D1", &self.d1),
            ("D2", &self.d2),
            ("E", &self.e),
        ] {
            matcore::ensure_finite(m, name)?;
        }
        Ok(())
    }

    /// `(A, B)` stabilizable and `(C1, A)` detectable.
    pub fn check_structure(&self) -> Result<()> {
        if !matcore::is_stabilizable(&self.a, &self.b)? {
            return Err(Error::ModelInvariant("(A, B) is not stabilizable".into()));
        }
        if !matcore::is_detectable(&self.c1, &self.a)? {
            return Err(Error::ModelInvariant("(C1, A) is not detectable".into()));
        }
        Ok(())
    }

    /// `D1·D1ᵀ`
    pub fn measurement_weight(&self) -> Matrix {
        &self.d1 * self.d1.transpose()
    }

    /// `D2ᵀ·D2`
    pub fn control_weight(&self) -> Matrix {
        self.d2.transpose() * &self.d2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub d1_et_norm: f64,
    pub d2t_c2_norm: f64,
    pub d1_d1t_min_eig: f64,
    pub d2t_d2_min_eig: f64,
    pub strict_identity: bool,
}

/// Orthogonality and normalisation of the feedthrough terms:
/// `D1Eᵀ = 0`, `D2ᵀC2 = 0`, and `D1D1ᵀ`, `D2ᵀD2` equal to the identity
/// (or only positive definite when `strict_identity` is false).
pub fn check_regularity(sys: &AgentModel, strict_identity: bool) -> Result<RegularityReport> {
    sys.check_dims()?;
    let d1_et = &sys.d1 * sys.e.transpose();
    let d2t_c2 = sys.d2.transpose() * &sys.c2;
    let w1 = sys.measurement_weight();
    let w2 = sys.control_weight();
    let report = RegularityReport {
        d1_et_norm: d1_et.norm(),
        d2t_c2_norm: d2t_c2.norm(),
        d1_d1t_min_eig: matcore::min_eigenvalue_sym(&w1)?,
        d2t_d2_min_eig: matcore::min_eigenvalue_sym(&w2)?,
        strict_identity,
    };
    if report.d1_et_norm > REGULARITY_TOL {
        return Err(Error::RegularityViolation(format!(
            "D1·Eᵀ ≠ 0 (norm {:.3e})",
            report.d1_et_norm
        )));
    }
    if report.d2t_c2_norm > REGULARITY_TOL {
        return Err(Error::RegularityViolation(format!(
            "D2ᵀ·C2 ≠ 0 (norm {:.3e})",
            report.d2t_c2_norm
        )));
    }
    if report.d1_d1t_min_eig <= REGULARITY_TOL {
        return Err(Error::RegularityViolation("D1·D1ᵀ is singular".into()));
    }
    if report.d2t_d2_min_eig <= REGULARITY_TOL {
        return Err(Error::RegularityViolation("D2ᵀ·D2 is singular".into()));
    }
    if strict_identity {
        if (&w1 - identity(w1.nrows())).norm() > REGULARITY_TOL {
            return Err(Error::RegularityViolation("D1·D1ᵀ ≠ I".into()));
        }
        if (&w2 - identity(w2.nrows())).norm() > REGULARITY_TOL {
            return Err(Error::RegularityViolation("D2ᵀ·D2 ≠ I".into()));
        }
    }
    Ok(report)
}

fn check_spectrum(lambda1: f64, lambda_m: f64) -> Result<()> {
    if lambda1 > 0.0 && lambda1 <= lambda_m && lambda_m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpectrum(format!(
            "need 0 < λ1 ≤ λM, got λ1 = {lambda1}, λM = {lambda_m}"
        )))
    }
}

/// `2 / ((λ1 + λM)(λ1² + λM²))`, the coupling gain at which the case-1 and
/// case-2 Riccati coefficients coincide and are largest.
pub fn default_cp(lambda1: f64, lambda_m: f64) -> Result<f64> {
    check_spectrum(lambda1, lambda_m)?;
    Ok(2.0 / ((lambda1 + lambda_m) * (lambda1 * lambda1 + lambda_m * lambda_m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpCase {
    /// `0 < c_p < c_p*`: the Riccati coefficient is taken at `λ1`.
    Case1,
    /// `c_p* ≤ c_p < 2/λM³`: the coefficient is taken at `λM`.
    Case2,
    OutOfRange,
}

pub fn cp_case(cp: f64, lambda1: f64, lambda_m: f64) -> CpCase {
    let Ok(star) = default_cp(lambda1, lambda_m) else {
        return CpCase::OutOfRange;
    };
    let upper = 2.0 / lambda_m.powi(3);
    if cp > 0.0 && cp < star {
        CpCase::Case1
    } else if cp >= star && cp < upper {
        CpCase::Case2
    } else {
        CpCase::OutOfRange
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogDesignParams {
    pub gamma: f64,
    /// `None` selects [`default_cp`].
    pub cp: Option<f64>,
    pub delta: f64,
    pub eta: f64,
    pub strict_identity: bool,
}

impl HomogDesignParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            cp: None,
            delta: 1e-3,
            eta: 1e-3,
            strict_identity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogGains {
    pub f: Matrix,
    pub g: Matrix,
    pub cp: f64,
    pub case: CpCase,
    pub p: Matrix,
    pub q: Matrix,
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    /// `M·[tr(C1QPQC1ᵀ(D1D1ᵀ)⁻¹) + λM⁴·tr(C2QC2ᵀ)]`
    pub bound: f64,
    pub accepted: bool,
}

fn inverse_spd(m: &Matrix, what: &str) -> Result<Matrix> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::RegularityViolation(format!("{what} is not positive definite")))
}

/// `M·[tr(C1QPQC1ᵀ(D1D1ᵀ)⁻¹) + λM⁴·tr(C2QC2ᵀ)]`
pub fn certified_bound(sys: &AgentModel, part: &LaplacianPartition, p: &Matrix, q: &Matrix) -> Result<f64> {
    let w1_inv = inverse_spd(&sys.measurement_weight(), "D1·D1ᵀ")?;
    let lm4 = part.lambda_max().powi(4);
    let per_agent = trace(&(&sys.c1 * q * p * q * sys.c1.transpose() * w1_inv))
        + lm4 * trace(&(&sys.c2 * q * sys.c2.transpose()));
    Ok(part.num_followers() as f64 * per_agent)
}

/// Runs the two perturbed Riccati equations and forms `F`, `G` and the
/// certified bound. A bound at or above `gamma` is reported through
/// [`Error::BoundExceedsGamma`], which still carries the full design.
pub fn design_homogeneous(
    sys: &AgentModel,
    part: &LaplacianPartition,
    params: &HomogDesignParams,
) -> Result<HomogGains> {
    check_regularity(sys, params.strict_identity)?;
    for (name, v) in [("gamma", params.gamma), ("delta", params.delta), ("eta", params.eta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let lambda1 = part.lambda_min();
    let lambda_m = part.lambda_max();
    let cp = match params.cp {
        Some(cp) => cp,
        None => default_cp(lambda1, lambda_m)?,
    };
    let case = cp_case(cp, lambda1, lambda_m);
    let lambda = match case {
        CpCase::Case1 => lambda1,
        CpCase::Case2 => lambda_m,
        CpCase::OutOfRange => {
            return Err(Error::CpOutOfRange {
                cp,
                upper: 2.0 / lambda_m.powi(3),
            })
        }
    };
    let n = sys.dims().n;
    let w1_inv = inverse_spd(&sys.measurement_weight(), "D1·D1ᵀ")?;
    let w2_inv = inverse_spd(&sys.control_weight(), "D2ᵀ·D2")?;

    // Aᵀ P + P A − r·P B W2⁻¹ Bᵀ P + λM⁴ C2ᵀC2 + δI = 0, r = 2c_pλ − c_p²λ⁴
    let coeff = 2.0 * cp * lambda - cp * cp * lambda.powi(4);
    let s_p = &sys.b * &w2_inv * sys.b.transpose() * coeff;
    let q_p = sys.c2.transpose() * &sys.c2 * lambda_m.powi(4) + identity(n) * params.delta;
    let (p, _) = matcore::solve_care(&sys.a, &s_p, &q_p)?;

    // A Q + Q Aᵀ − Q C1ᵀ W1⁻¹ C1 Q + EEᵀ/λ1² + ηI = 0
    let s_q = sys.c1.transpose() * &w1_inv * &sys.c1;
    let q_q = &sys.e * sys.e.transpose() / (lambda1 * lambda1) + identity(n) * params.eta;
    let (q, _) = matcore::solve_care(&sys.a.transpose(), &s_q, &q_q)?;

    let f = -(&w2_inv * sys.b.transpose() * &p) * cp;
    let g = -(&q * sys.c1.transpose() * &w1_inv);
    let bound = certified_bound(sys, part, &p, &q)?;
    let accepted = bound < params.gamma;
    let gains = HomogGains {
        f,
        g,
        cp,
        case,
        p,
        q,
        delta: params.delta,
        eta: params.eta,
        gamma: params.gamma,
        bound,
        accepted,
    };
    if accepted {
        Ok(gains)
    } else {
        Err(Error::BoundExceedsGamma(Box::new(gains)))
    }
}

/// Error-system realisation `(A_o, E_o, C_o)` with a label per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopSystem {
    pub a: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub labels: Vec<String>,
}

impl ClosedLoopSystem {
    pub fn new(a: Matrix, e: Matrix, c: Matrix, labels: Vec<String>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || e.nrows() != n || c.ncols() != n || labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "closed loop: A {}x{}, E {}x{}, C {}x{}, {} labels",
                a.nrows(),
                a.ncols(),
                e.nrows(),
                e.ncols(),
                c.nrows(),
                c.ncols(),
                labels.len()
            )));
        }
        Ok(Self { a, e, c, labels })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
}

pub(crate) fn stacked_labels(groups: &[(&str, usize, usize)]) -> Vec<String> {
    groups
        .iter()
        .flat_map(|&(name, agents, dim)| {
            (1..=agents).flat_map(move |i| (1..=dim).map(move |k| format!("{name}{i}_{k}")))
        })
        .collect()
}

fn check_gain_dims(sys: &AgentModel, f: &Matrix, g: &Matrix) -> Result<()> {
    let d = sys.dims();
    if f.shape() != (d.m, d.n) || g.shape() != (d.n, d.r) {
        return Err(Error::DimensionMismatch(format!(
            "F is {}x{} (expected {}x{}), G is {}x{} (expected {}x{})",
            f.nrows(),
            f.ncols(),
            d.m,
            d.n,
            g.nrows(),
            g.ncols(),
            d.n,
            d.r
        )));
    }
    Ok(())
}

/// Error system in `(ξ_x, ξ_w)` for arbitrary gains:
///
/// ```text
/// A_o = [[I⊗A, I⊗BF], [−L1⊗GC1, I⊗(A+GC1) + L1⊗BF]]
/// E_o = [[L1⊗E], [−L1²⊗GD1]]
/// C_o = [I⊗C2, I⊗D2F]
/// ```
pub fn assemble_error_system_with(
    sys: &AgentModel,
    part: &LaplacianPartition,
    f: &Matrix,
    g: &Matrix,
) -> Result<ClosedLoopSystem> {
    check_gain_dims(sys, f, g)?;
    let d = sys.dims();
    let m = part.num_followers();
    let im = identity(m);
    let l1 = &part.l1;
    let bf = &sys.b * f;
    let gc1 = g * &sys.c1;
    let a_o = block(&[
        vec![kron(&im, &sys.a), kron(&im, &bf)],
        vec![-kron(l1, &gc1), kron(&im, &(&sys.a + &gc1)) + kron(l1, &bf)],
    ])?;
    let e_o = block(&[vec![kron(l1, &sys.e)], vec![-kron(&(l1 * l1), &(g * &sys.d1))]])?;
    let c_o = block(&[vec![kron(&im, &sys.c2), kron(&im, &(&sys.d2 * f))]])?;
    let labels = stacked_labels(&[("xi_x", m, d.n), ("xi_w", m, d.n)]);
    ClosedLoopSystem::new(a_o, e_o, c_o, labels)
}

pub fn assemble_error_system(
    sys: &AgentModel,
    part: &LaplacianPartition,
    gains: &HomogGains,
) -> Result<ClosedLoopSystem> {
    assemble_error_system_with(sys, part, &gains.f, &gains.g)
}

/// The `i`-th decoupled auxiliary loop: input matrix scaled by `λ_i`,
/// disturbance by `1/λ1`, controlled output by `λ_i²`.
pub fn auxiliary_closed_loop(
    sys: &AgentModel,
    f: &Matrix,
    g: &Matrix,
    lambda_i: f64,
    lambda1: f64,
) -> Result<ClosedLoopSystem> {
    check_gain_dims(sys, f, g)?;
    let bf = &sys.b * f * lambda_i;
    let gc1 = g * &sys.c1;
    let a = block(&[
        vec![sys.a.clone(), bf.clone()],
        vec![-gc1.clone(), &sys.a + &gc1 + &bf],
    ])?;
    let e = block(&[vec![&sys.e / lambda1], vec![-(g * &sys.d1)]])?;
    let l2 = lambda_i * lambda_i;
    let c = block(&[vec![&sys.c2 * l2, &sys.d2 * f * l2]])?;
    let n = sys.dims().n;
    ClosedLoopSystem::new(a, e, c, stacked_labels(&[("xi", 1, n), ("w", 1, n)]))
}

/// `A + λ_i·BF` for every eigenvalue of `L1`, followed by `A + GC1`. The
/// error system is internally stable iff all of them are Hurwitz.
pub fn mode_matrices(sys: &AgentModel, part: &LaplacianPartition, f: &Matrix, g: &Matrix) -> Vec<Matrix> {
    let bf = &sys.b * f;
    let mut out: Vec<Matrix> = part.eigenvalues.iter().map(|&l| &sys.a + &bf * l).collect();
    out.push(&sys.a + g * &sys.c1);
    out
}

/// State transformation `blockdiag(Uᵀ⊗I_n, Uᵀ⊗I_n)` that block-diagonalises
/// the error dynamics along the eigenvectors of `L1`.
pub fn modal_transform(part: &LaplacianPartition, n: usize) -> Matrix {
    let ut = kron(&part.eigenvectors.transpose(), &identity(n));
    matcore::block_diag(&[ut.clone(), ut])
}

/// Spectral abscissa with the strict margin `−1e-9·(1 + ‖M‖_F)`, so that
/// marginal modes computed as tiny negatives still count as unstable.
pub(crate) fn stability_value(m: &Matrix) -> Result<(f64, f64)> {
    Ok((matcore::max_real_part(m)?, -1e-9 * (1.0 + m.norm())))
}

/// Margin for "negative definite": `max eig < −1e-9·(1 + ‖X‖_F)`.
pub(crate) fn negative_definite_value(x: &Matrix) -> Result<(f64, f64)> {
    let sym = matcore::symmetrize(x);
    Ok((matcore::max_eigenvalue_sym(&sym)?, -1e-9 * (1.0 + sym.norm())))
}

/// Re-derives every inequality behind the suboptimality claim from the
/// stored `P`, `Q`, `F`, `G`: one `P`-inequality per Laplacian eigenvalue,
/// the `Q`-inequality, the summed trace condition against `gamma`, and
/// Hurwitz stability of each modal matrix.
pub fn verify_homog_certificate(
    sys: &AgentModel,
    part: &LaplacianPartition,
    gains: &HomogGains,
) -> Result<CertificateReport> {
    check_gain_dims(sys, &gains.f, &gains.g)?;
    let mut report = CertificateReport::default();
    let w1_inv = inverse_spd(&sys.measurement_weight(), "D1·D1ᵀ")?;
    let p = &gains.p;
    let q = &gains.q;
    report.require_below("P > 0 (negated min eigenvalue)", -matcore::min_eigenvalue_sym(p)?, 0.0);
    report.require_below("Q > 0 (negated min eigenvalue)", -matcore::min_eigenvalue_sym(q)?, 0.0);

    let bf = &sys.b * &gains.f;
    let d2f = &sys.d2 * &gains.f;
    for (i, &lam) in part.eigenvalues.iter().enumerate() {
        let acl = &sys.a + &bf * lam;
        let out = (&sys.c2 + &d2f) * (lam * lam);
        let ric = acl.transpose() * p + p * &acl + out.transpose() * out;
        let (value, limit) = negative_definite_value(&ric)?;
        report.require_below(format!("P-inequality, mode {}", i + 1), value, limit);
    }
    let lambda1 = part.lambda_min();
    let ric_q = &sys.a * q + q * sys.a.transpose() - q * sys.c1.transpose() * &w1_inv * &sys.c1 * q
        + &sys.e * sys.e.transpose() / (lambda1 * lambda1);
    let (value, limit) = negative_definite_value(&ric_q)?;
    report.require_below("Q-inequality", value, limit);

    let c1_term = trace(&(&sys.c1 * q * p * q * sys.c1.transpose() * &w1_inv));
    let c2_term = trace(&(&sys.c2 * q * sys.c2.transpose()));
    let trace_sum: f64 = part.eigenvalues.iter().map(|l| c1_term + l.powi(4) * c2_term).sum();
    report.require_below("trace sum < gamma", trace_sum, gains.gamma);

    let modes = mode_matrices(sys, part, &gains.f, &gains.g);
    let last = modes.len() - 1;
    for (i, mode) in modes.iter().enumerate() {
        let name = if i == last {
            "stability of A + G·C1".to_string()
        } else {
            format!("stability of A + λ{}·B·F", i + 1)
        };
        let (value, limit) = stability_value(mode)?;
        report.require_below(name, value, limit);
    }
    report.into_result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, laplacian_partition, six_follower_example};
    use crate::presets;

    #[test]
    fn regularity_of_example_plant() {
        let sys = presets::homogeneous_plant();
        let rep = check_regularity(&sys, true).unwrap();
        assert!(rep.d1_et_norm < 1e-12 && rep.d2t_c2_norm < 1e-12);
    }

    #[test]
    fn regularity_violations() {
        let mut sys = presets::homogeneous_plant();
        sys.d1 = Matrix::zeros(1, 3);
        match check_regularity(&sys, true) {
            Err(Error::RegularityViolation(msg)) => assert!(msg.contains("D1·D1ᵀ is singular")),
            other => panic!("unexpected {other:?}"),
        }
        let mut sys = presets::homogeneous_plant();
        sys.c2[(2, 0)] = 0.1;
        match check_regularity(&sys, true) {
            Err(Error::RegularityViolation(msg)) => assert!(msg.contains("D2ᵀ·C2")),
            other => panic!("unexpected {other:?}"),
        }
        let mut sys = presets::homogeneous_plant();
        sys.d1 *= 2.0;
        assert!(check_regularity(&sys, true).is_err());
        assert!(check_regularity(&sys, false).is_ok());
    }

    #[test]
    fn default_cp_values() {
        assert!((default_cp(1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((default_cp(1.0, 2.0).unwrap() - 2.0 / 15.0).abs() < 1e-15);
        assert!((default_cp(0.6856, 5.8245).unwrap() - 0.0089).abs() < 5e-5);
        assert!(matches!(default_cp(0.0, 1.0), Err(Error::InvalidSpectrum(_))));
        assert!(matches!(default_cp(2.0, 1.0), Err(Error::InvalidSpectrum(_))));
    }

    #[test]
    fn cp_case_boundaries() {
        let (l1, lm) = (0.6856, 5.8245);
        let star = default_cp(l1, lm).unwrap();
        assert_eq!(cp_case(star, l1, lm), CpCase::Case2);
        assert_eq!(cp_case(2.0 / lm.powi(3), l1, lm), CpCase::OutOfRange);
        assert_eq!(cp_case(0.4, 1.0, 1.0), CpCase::Case1);
        assert_eq!(cp_case(0.0, 1.0, 1.0), CpCase::OutOfRange);
    }

    #[test]
    fn example_design_gains() {
        let sys = presets::homogeneous_plant();
        let part = laplacian_partition(&six_follower_example()).unwrap();
        let gains = design_homogeneous(&sys, &part, &HomogDesignParams::new(289.0)).unwrap();
        let f_ref = [-0.9439, -0.7750, -0.6738];
        let g_ref = [-0.0502, -0.3429, -0.0337];
        for k in 0..3 {
            assert!((gains.f[(0, k)] - f_ref[k]).abs() < 5e-4);
            assert!((gains.g[(k, 0)] - g_ref[k]).abs() < 5e-4);
        }
        assert!((gains.bound - 288.2621).abs() < 1e-3);
        assert!(gains.accepted);
        assert_eq!(gains.case, CpCase::Case2);
        let recomputed = certified_bound(&sys, &part, &gains.p, &gains.q).unwrap();
        assert!((recomputed - gains.bound).abs() <= 1e-10 * gains.bound);

        let clp = assemble_error_system(&sys, &part, &gains).unwrap();
        assert_eq!(clp.state_dim(), 36);
        assert!(matcore::is_hurwitz(&clp.a, 0.0));
        verify_homog_certificate(&sys, &part, &gains).unwrap();
    }

    #[test]
    fn low_gamma_is_rejected_with_diagnostics() {
        let sys = presets::homogeneous_plant();
        let part = laplacian_partition(&six_follower_example()).unwrap();
        match design_homogeneous(&sys, &part, &HomogDesignParams::new(100.0)) {
            Err(Error::BoundExceedsGamma(g)) => {
                assert!(!g.accepted);
                assert!((g.bound - 288.2621).abs() < 1e-3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cp_out_of_range_is_rejected() {
        let sys = presets::homogeneous_plant();
        let part = laplacian_partition(&six_follower_example()).unwrap();
        let mut params = HomogDesignParams::new(289.0);
        params.cp = Some(1.0);
        assert!(matches!(
            design_homogeneous(&sys, &part, &params),
            Err(Error::CpOutOfRange { .. })
        ));
    }

    #[test]
    fn certificate_failures() {
        let sys = presets::homogeneous_plant();
        let part = laplacian_partition(&six_follower_example()).unwrap();
        let gains = design_homogeneous(&sys, &part, &HomogDesignParams::new(289.0)).unwrap();

        let mut zero_f = gains.clone();
        zero_f.f = Matrix::zeros(1, 3);
        match verify_homog_certificate(&sys, &part, &zero_f) {
            Err(Error::CertificateFailed(rep)) => {
                assert!(rep.failures().iter().any(|f| f.contains("stability of A + λ1")));
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut low_gamma = gains.clone();
        // The per-mode trace sum (≈108.2) sits well below the design bound.
        low_gamma.gamma = 100.0;
        match verify_homog_certificate(&sys, &part, &low_gamma) {
            Err(Error::CertificateFailed(rep)) => {
                assert_eq!(rep.failures().len(), 1);
                assert!(rep.failures()[0].contains("trace sum"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_gains_give_block_diagonal_dynamics() {
        let sys = presets::homogeneous_plant();
        let part = laplacian_partition(&six_follower_example()).unwrap();
        let clp = assemble_error_system_with(&sys, &part, &Matrix::zeros(1, 3), &Matrix::zeros(3, 1)).unwrap();
        let expected = matcore::block_diag(&[kron(&identity(6), &sys.a), kron(&identity(6), &sys.a)]);
        assert_eq!(clp.a, expected);
        assert_eq!(clp.labels[0], "xi_x1_1");
        assert_eq!(clp.labels[18], "xi_w1_1");
    }

    #[test]
    fn single_follower_reduces_to_auxiliary_loop() {
        // M = 1 with one leader edge: L1 = [[1]], so λ = λ1 = 1 and the
        // networked error system coincides with the auxiliary loop.
        let sys = presets::homogeneous_plant();
        let part = laplacian_partition(&build_graph(1, 1, &[(2, 1)]).unwrap()).unwrap();
        assert_eq!(part.l1, Matrix::from_element(1, 1, 1.0));
        let f = matcore::from_rows(&[&[-0.5, 0.1, -0.3]]);
        let g = matcore::column(&[-0.2, 0.4, 0.05]);
        let net = assemble_error_system_with(&sys, &part, &f, &g).unwrap();
        let aux = auxiliary_closed_loop(&sys, &f, &g, 1.0, 1.0).unwrap();
        assert_eq!(net.a, aux.a);
        assert_eq!(net.e, aux.e);
        assert_eq!(net.c, aux.c);
    }

    #[test]
    fn modal_transform_diagonalises_coupling() {
        let sys = presets::homogeneous_plant();
        let part = laplacian_partition(&six_follower_example()).unwrap();
        let gains = design_homogeneous(&sys, &part, &HomogDesignParams::new(289.0)).unwrap();
        let clp = assemble_error_system(&sys, &part, &gains).unwrap();
        let t = modal_transform(&part, 3);
        let hat = &t * &clp.a * t.transpose();
        let lambda = Matrix::from_diagonal(&nalgebra::DVector::from_vec(part.eigenvalues.clone()));
        let bf = &sys.b * &gains.f;
        let gc1 = &gains.g * &sys.c1;
        let expected = block(&[
            vec![kron(&identity(6), &sys.a), kron(&identity(6), &bf)],
            vec![-kron(&lambda, &gc1), kron(&identity(6), &(&sys.a + &gc1)) + kron(&lambda, &bf)],
        ])
        .unwrap();
        assert!((hat - expected).norm() < 1e-10);
    }
}
