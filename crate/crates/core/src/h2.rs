//! H2 norm of an assembled error system, from the controllability Gramian
//! or by direct quadrature of the impulse response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homog::ClosedLoopSystem;
use crate::matcore::{self, identity, trace, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum H2Method {
    Gramian,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Result {
    pub norm: f64,
    /// `norm²`
    pub cost: f64,
    /// Trace of the controllability Gramian (or its quadrature estimate).
    pub gramian_trace: f64,
    pub method: H2Method,
}

fn require_hurwitz(a: &Matrix) -> Result<f64> {
    let max_real = matcore::max_real_part(a)?;
    if max_real < 0.0 {
        Ok(max_real)
    } else {
        Err(Error::NotHurwitz { max_real })
    }
}

/// `√tr(C X Cᵀ)` with `A X + X Aᵀ + E Eᵀ = 0`.
pub fn h2_norm(clp: &ClosedLoopSystem) -> Result<H2Result> {
    require_hurwitz(&clp.a)?;
    let (x, _) = matcore::solve_lyapunov(&clp.a, &(&clp.e * clp.e.transpose()))?;
    let cost = trace(&(&clp.c * &x * clp.c.transpose())).max(0.0);
    Ok(H2Result {
        norm: cost.sqrt(),
        cost,
        gramian_trace: trace(&x),
        method: H2Method::Gramian,
    })
}

/// Squared norm from the observability Gramian: `tr(Eᵀ Y E)` with
/// `Aᵀ Y + Y A + Cᵀ C = 0`.
pub fn h2_cost_dual(clp: &ClosedLoopSystem) -> Result<f64> {
    require_hurwitz(&clp.a)?;
    let (y, _) = matcore::solve_lyapunov(&clp.a.transpose(), &(clp.c.transpose() * &clp.c))?;
    Ok(trace(&(clp.e.transpose() * y * &clp.e)))
}

/// Horizon `8/|max Re λ(A)|` and step `horizon/40000`, shortened when
/// needed to keep `|λ|·dt ≤ 0.5` for every eigenvalue.
pub fn default_quadrature_params(clp: &ClosedLoopSystem) -> Result<(f64, f64)> {
    let max_real = require_hurwitz(&clp.a)?;
    let horizon = 8.0 / max_real.abs();
    let radius = matcore::eigenvalues(&clp.a)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let dt = (horizon / 40_000.0).min(0.5 / radius.max(f64::MIN_POSITIVE));
    Ok((horizon, dt))
}

/// `√∫₀ᴴ ‖C e^{At} E‖²_F dt`, each column of `E` propagated by RK4 and the
/// integrand accumulated with composite Simpson. The step is adjusted so
/// that an even number of steps spans the horizon exactly. A tail beyond
/// `H` estimated above `1e-6` of the accumulated integral is an error.
pub fn h2_norm_quadrature(clp: &ClosedLoopSystem, horizon: f64, dt: f64) -> Result<H2Result> {
    let max_real = require_hurwitz(&clp.a)?;
    if !(horizon > 0.0 && dt > 0.0 && dt <= horizon) {
        return Err(Error::InvalidArgument(format!(
            "quadrature needs 0 < dt ≤ horizon, got dt = {dt}, horizon = {horizon}"
        )));
    }
    let mut steps = (horizon / dt).ceil() as usize;
    steps += steps % 2;
    let h = horizon / steps as f64;

    // One RK4 step of ẋ = Ax is multiplication by this polynomial in hA.
    let n = clp.state_dim();
    let ha = &clp.a * h;
    let mut phi = identity(n);
    let mut term = identity(n);
    for k in 1..=4 {
        term = &term * &ha / k as f64;
        phi += &term;
    }

    let mut x = clp.e.clone();
    let integrand = |x: &Matrix| (&clp.c * x).norm_squared();
    let state = |x: &Matrix| x.norm_squared();
    let mut acc = integrand(&x);
    let mut acc_state = state(&x);
    for k in 1..=steps {
        x = &phi * &x;
        let w = if k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(&x);
        acc_state += w * state(&x);
    }
    let cost = acc * h / 3.0;
    let gramian_trace = acc_state * h / 3.0;
    let tail = integrand(&x) / (2.0 * max_real.abs());
    if tail > 1e-6 * cost {
        return Err(Error::HorizonTooShort {
            tail,
            accumulated: cost,
        });
    }
    Ok(H2Result {
        norm: cost.sqrt(),
        cost,
        gramian_trace,
        method: H2Method::Quadrature,
    })
}

/// Quadrature from the default parameters, doubling the horizon (same
/// step) while the tail test fails. Returns the result with the horizon and
/// step actually used.
pub fn h2_norm_quadrature_auto(clp: &ClosedLoopSystem) -> Result<(H2Result, f64, f64)> {
    let (mut horizon, dt) = default_quadrature_params(clp)?;
    for _ in 0..6 {
        match h2_norm_quadrature(clp, horizon, dt) {
            Ok(r) => return Ok((r, horizon, dt)),
            Err(Error::HorizonTooShort { .. }) => horizon *= 2.0,
            Err(e) => return Err(e),
        }
    }
    h2_norm_quadrature(clp, horizon, dt).map(|r| (r, horizon, dt))
}

pub fn relative_gap(reference: f64, other: f64) -> f64 {
    if reference == 0.0 {
        other.abs()
    } else {
        ((other - reference) / reference).abs()
    }
}
