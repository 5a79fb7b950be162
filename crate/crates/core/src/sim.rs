//! Fixed-step RK4 simulation of the leader/follower network running the
//! designed protocols, with seeded disturbances and containment metrics.

use std::io::Write;

use nalgebra::{DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LaplacianPartition;
use crate::heterog::{HeterogAgent, HeterogGains, LeaderModel};
use crate::homog::{AgentModel, HomogGains};
use crate::matcore::{identity, kron, Matrix};

/// Any state entry above this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    Zero,
    BoundedWhite,
}

/// Uniform noise on `[−amplitude, amplitude]`, redrawn every `sample_dt`
/// and held constant in between. Channels are drawn follower by follower
/// from one ChaCha stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    /// `None` means one sample per integration step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
}

impl DisturbanceSpec {
    pub fn zero() -> Self {
        Self {
            kind: DisturbanceKind::Zero,
            amplitude: 0.0,
            seed: 0,
            sample_dt: None,
        }
    }

    pub fn bounded_white(amplitude: f64, seed: u64) -> Self {
        Self {
            kind: DisturbanceKind::BoundedWhite,
            amplitude,
            seed,
            sample_dt: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "disturbance amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if let Some(s) = self.sample_dt {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("sample_dt must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

struct NoiseSource {
    kind: DisturbanceKind,
    amplitude: f64,
    sample_dt: f64,
    rng: ChaCha8Rng,
    index: Option<u64>,
    current: Vec<f64>,
}

impl NoiseSource {
    fn new(spec: &DisturbanceSpec, channels: usize, dt: f64) -> Self {
        Self {
            kind: spec.kind,
            amplitude: spec.amplitude,
            sample_dt: spec.sample_dt.unwrap_or(dt),
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            index: None,
            current: vec![0.0; channels],
        }
    }

    /// Sample in effect at time `t`.
    fn at(&mut self, t: f64) -> &[f64] {
        if self.kind == DisturbanceKind::Zero || self.amplitude == 0.0 {
            return &self.current;
        }
        let target = ((t / self.sample_dt) + 1e-9).floor().max(0.0) as u64;
        while self.index.is_none_or(|i| i < target) {
            for v in &mut self.current {
                *v = self.rng.random_range(-self.amplitude..=self.amplitude);
            }
            self.index = Some(self.index.map_or(0, |i| i + 1));
        }
        &self.current
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Record every `stride`-th step (the first and last steps always).
    pub stride: usize,
}

impl SimOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        Self { t_final, dt, stride: 1 }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "simulation needs dt > 0 and T ≥ dt, got dt = {}, T = {}",
                self.dt, self.t_final
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        let steps = (self.t_final / self.dt).round() as usize;
        if (steps as f64 * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::InvalidArgument(format!(
                "T = {} is not a whole number of steps of {}",
                self.t_final, self.dt
            )));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Homogeneous,
    Heterogeneous,
}

/// Sampled trajectories; each field holds one stacked vector per time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub mode: SimMode,
    pub times: Vec<f64>,
    pub follower_dims: Vec<usize>,
    pub leader_dim: usize,
    pub output_dim: usize,
    pub follower_states: Vec<DVector<f64>>,
    pub leader_states: Vec<DVector<f64>>,
    /// `w`
    pub observer_states: Vec<DVector<f64>>,
    /// `v`; empty in the homogeneous case.
    pub reference_states: Vec<DVector<f64>>,
    pub follower_outputs: Vec<DVector<f64>>,
    pub leader_outputs: Vec<DVector<f64>>,
    /// `(L1⊗I)z_f + (L2⊗I)z_l`
    pub performance: Vec<DVector<f64>>,
    /// `ω_x` (homogeneous) or `ω_z` (heterogeneous).
    pub hull: Vec<DVector<f64>>,
    /// `ω_v = (H⊗I_r)x_l`; empty in the homogeneous case.
    pub reference_hull: Vec<DVector<f64>>,
    /// Disturbance held over the step starting at each sample time.
    pub disturbance: Vec<DVector<f64>>,
}

impl SimulationTrace {
    fn new(mode: SimMode, follower_dims: Vec<usize>, leader_dim: usize, output_dim: usize) -> Self {
        Self {
            mode,
            times: Vec::new(),
            follower_dims,
            leader_dim,
            output_dim,
            follower_states: Vec::new(),
            leader_states: Vec::new(),
            observer_states: Vec::new(),
            reference_states: Vec::new(),
            follower_outputs: Vec::new(),
            leader_outputs: Vec::new(),
            performance: Vec::new(),
            hull: Vec::new(),
            reference_hull: Vec::new(),
            disturbance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The quantity driven into the hull: follower states (homogeneous) or
    /// follower outputs (heterogeneous).
    pub fn contained_signal(&self, k: usize) -> &DVector<f64> {
        match self.mode {
            SimMode::Homogeneous => &self.follower_states[k],
            SimMode::Heterogeneous => &self.follower_outputs[k],
        }
    }

    pub fn hull_error(&self, k: usize) -> f64 {
        (self.contained_signal(k) - &self.hull[k]).norm()
    }
}

/// `(L1⊗I_p)z_f + (L2⊗I_p)z_l`
pub fn performance_output(part: &LaplacianPartition, z_f: &DVector<f64>, z_l: &DVector<f64>) -> DVector<f64> {
    let p = z_f.len() / part.num_followers();
    let ip = identity(p);
    kron(&part.l1, &ip) * z_f + kron(&part.l2, &ip) * z_l
}

fn stack(rows: &[Vec<f64>], dims: &[usize], what: &str) -> Result<DVector<f64>> {
    if rows.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {} vectors for {} agents",
            rows.len(),
            dims.len()
        )));
    }
    let mut out = Vec::new();
    for (i, (row, &d)) in rows.iter().zip(dims).enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{what} {} has length {}, expected {d}",
                i + 1,
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} {}", i + 1)));
        }
        out.extend_from_slice(row);
    }
    Ok(DVector::from_vec(out))
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    dims.iter()
        .map(|d| {
            let o = acc;
            acc += d;
            o
        })
        .collect()
}

/// Classical RK4 with the disturbance frozen over each step.
fn integrate<F, R>(
    s0: DVector<f64>,
    opts: &SimOptions,
    noise: &mut NoiseSource,
    rhs: F,
    mut record: R,
) -> Result<()>
where
    F: Fn(&DVectorView<f64>, &[f64]) -> DVector<f64>,
    R: FnMut(f64, &DVector<f64>, &[f64]),
{
    let steps = opts.steps()?;
    let h = opts.dt;
    let mut s = s0;
    for k in 0..=steps {
        let t = k as f64 * h;
        let d = noise.at(t).to_vec();
        if k % opts.stride == 0 || k == steps {
            record(t, &s, &d);
        }
        if k == steps {
            break;
        }
        let k1 = rhs(&s.as_view(), &d);
        let k2 = rhs(&(&s + &k1 * (h / 2.0)).as_view(), &d);
        let k3 = rhs(&(&s + &k2 * (h / 2.0)).as_view(), &d);
        let k4 = rhs(&(&s + &k3 * h).as_view(), &d);
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let magnitude = s.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        if magnitude > DIVERGENCE_LIMIT {
            return Err(Error::NonFiniteState {
                time: t + h,
                magnitude,
            });
        }
    }
    Ok(())
}

fn mat_vec(m: &Matrix, v: DVectorView<f64>) -> DVector<f64> {
    m * v
}

pub struct HomogScenario<'a> {
    pub sys: &'a AgentModel,
    pub part: &'a LaplacianPartition,
    pub gains: &'a HomogGains,
    pub x0_followers: &'a [Vec<f64>],
    pub x0_leaders: &'a [Vec<f64>],
    /// `None` starts every observer at zero.
    pub w0: Option<&'a [Vec<f64>]>,
}

/// Leaders `ẋ = Ax`; followers `ẋ_i = Ax_i + BFw_i + Ed_i` with
/// `ẇ_i = Aw_i + BF·Σ_j a_ij(w_i − w_j) + G(C1w_i − Σ_j a_ij(y_i − y_j))`,
/// where leader observers are identically zero and leader measurements are
/// noise-free.
pub fn simulate_homogeneous(
    sc: &HomogScenario<'_>,
    dist: &DisturbanceSpec,
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    dist.validate()?;
    let sys = sc.sys;
    let part = sc.part;
    sys.check_dims()?;
    let d = sys.dims();
    let (mf, ml, n) = (part.num_followers(), part.num_leaders(), d.n);
    if sc.gains.f.shape() != (d.m, n) || sc.gains.g.shape() != (n, d.r) {
        return Err(Error::DimensionMismatch("gains do not match the plant".into()));
    }
    let xl0 = stack(sc.x0_leaders, &vec![n; ml], "leader state")?;
    let xf0 = stack(sc.x0_followers, &vec![n; mf], "follower state")?;
    let w0 = match sc.w0 {
        Some(w) => stack(w, &vec![n; mf], "observer state")?,
        None => DVector::zeros(mf * n),
    };
    let s0 = DVector::from_iterator(ml * n + 2 * mf * n, xl0.iter().chain(xf0.iter()).chain(w0.iter()).copied());

    let adj = part.laplacian.clone();
    let bf = &sys.b * &sc.gains.f;
    let f = &sc.gains.f;
    let g = &sc.gains.g;
    let (ol, of, ow) = (0, ml * n, ml * n + mf * n);
    let rhs = |s: &DVectorView<f64>, dist: &[f64]| -> DVector<f64> {
        let mut ds = DVector::zeros(s.len());
        let x = |j: usize| -> DVectorView<f64> {
            if j < mf {
                s.rows(of + j * n, n)
            } else {
                s.rows(ol + (j - mf) * n, n)
            }
        };
        let y = |j: usize| -> DVector<f64> {
            let mut y = mat_vec(&sys.c1, x(j));
            if j < mf {
                y += &sys.d1 * DVector::from_column_slice(&dist[j * d.q..(j + 1) * d.q]);
            }
            y
        };
        for j in 0..ml {
            ds.rows_mut(ol + j * n, n).copy_from(&mat_vec(&sys.a, x(mf + j)));
        }
        for i in 0..mf {
            let wi = s.rows(ow + i * n, n);
            let yi = y(i);
            let mut coupling = DVector::zeros(n);
            let mut zeta = DVector::zeros(d.r);
            for j in 0..mf + ml {
                // Off-diagonal Laplacian entries are −a_ij.
                let a = -adj[(i, j)];
                if j == i || a == 0.0 {
                    continue;
                }
                if j < mf {
                    coupling += (wi - s.rows(ow + j * n, n)) * a;
                } else {
                    coupling += wi * a;
                }
                zeta += (&yi - y(j)) * a;
            }
            let di = DVector::from_column_slice(&dist[i * d.q..(i + 1) * d.q]);
            let ui = f * wi;
            let dx = mat_vec(&sys.a, x(i)) + &sys.b * ui + &sys.e * di;
            let dw = &sys.a * wi + &bf * coupling + g * (&sys.c1 * wi - zeta);
            ds.rows_mut(of + i * n, n).copy_from(&dx);
            ds.rows_mut(ow + i * n, n).copy_from(&dw);
        }
        ds
    };

    let hull_map = kron(&part.hull_coeffs, &identity(n));
    let mut trace = SimulationTrace::new(SimMode::Homogeneous, vec![n; mf], n, d.p);
    let d2f = &sys.d2 * f;
    let c2_blk = kron(&identity(mf), &sys.c2);
    let d2f_blk = kron(&identity(mf), &d2f);
    let c2_lead = kron(&identity(ml), &sys.c2);
    let mut noise = NoiseSource::new(dist, mf * d.q, opts.dt);
    integrate(s0, opts, &mut noise, rhs, |t, s, dist| {
        let xl = s.rows(ol, ml * n).clone_owned();
        let xf = s.rows(of, mf * n).clone_owned();
        let w = s.rows(ow, mf * n).clone_owned();
        let zf = &c2_blk * &xf + &d2f_blk * &w;
        let zl = &c2_lead * &xl;
        trace.times.push(t);
        trace.performance.push(performance_output(part, &zf, &zl));
        trace.hull.push(&hull_map * &xl);
        trace.follower_outputs.push(zf);
        trace.leader_outputs.push(zl);
        trace.follower_states.push(xf);
        trace.leader_states.push(xl);
        trace.observer_states.push(w);
        trace.disturbance.push(DVector::from_column_slice(dist));
    })?;
    Ok(trace)
}

pub struct HeterogScenario<'a> {
    pub agents: &'a [HeterogAgent],
    pub leader: &'a LeaderModel,
    pub part: &'a LaplacianPartition,
    pub gains: &'a HeterogGains,
    pub x0_followers: &'a [Vec<f64>],
    pub x0_leaders: &'a [Vec<f64>],
    pub w0: Option<&'a [Vec<f64>]>,
    pub v0: Option<&'a [Vec<f64>]>,
}

/// Leaders `ẋ = Sx`; followers with observers
/// `ẇ_i = A_iw_i + B_iu_i + G_i(C1_iw_i − y_i)`, reference copies
/// `v̇_i = Sv_i + Σ_F a_ij(v_j − v_i) + Σ_L a_ij(x_j − v_i)` and control
/// `u_i = F_i(w_i − Π_iv_i) + Γ_iv_i`.
pub fn simulate_heterogeneous(
    sc: &HeterogScenario<'_>,
    dist: &DisturbanceSpec,
    opts: &SimOptions,
) -> Result<SimulationTrace> {
    dist.validate()?;
    let part = sc.part;
    let agents = sc.agents;
    let (mf, ml) = (part.num_followers(), part.num_leaders());
    let r = sc.leader.order();
    let p = sc.leader.output_dim();
    if agents.len() != mf || sc.gains.agents.len() != mf {
        return Err(Error::DimensionMismatch(format!(
            "{} agents and {} gain sets for {mf} followers",
            agents.len(),
            sc.gains.agents.len()
        )));
    }
    for a in agents {
        a.check_dims()?;
    }
    let dims: Vec<usize> = agents.iter().map(|a| a.dims().n).collect();
    let qdims: Vec<usize> = agents.iter().map(|a| a.dims().q).collect();
    let nx: usize = dims.iter().sum();
    let xo = offsets(&dims);
    let qo = offsets(&qdims);
    let xl0 = stack(sc.x0_leaders, &vec![r; ml], "leader state")?;
    let xf0 = stack(sc.x0_followers, &dims, "follower state")?;
    let w0 = match sc.w0 {
        Some(w) => stack(w, &dims, "observer state")?,
        None => DVector::zeros(nx),
    };
    let v0 = match sc.v0 {
        Some(v) => stack(v, &vec![r; mf], "reference state")?,
        None => DVector::zeros(mf * r),
    };
    let (ol, of, ow, ov) = (0, ml * r, ml * r + nx, ml * r + 2 * nx);
    let s0 = DVector::from_iterator(
        ov + mf * r,
        xl0.iter().chain(xf0.iter()).chain(w0.iter()).chain(v0.iter()).copied(),
    );

    let feedforward: Vec<Matrix> = sc
        .gains
        .agents
        .iter()
        .map(|g| &g.regulator.gamma - &g.f * &g.regulator.pi)
        .collect();
    let lap = &part.laplacian;
    let s_mat = &sc.leader.s;
    let control = |i: usize, w: DVectorView<f64>, v: DVectorView<f64>| -> DVector<f64> {
        &sc.gains.agents[i].f * w + &feedforward[i] * v
    };
    let rhs = |s: &DVectorView<f64>, dist: &[f64]| -> DVector<f64> {
        let mut ds = DVector::zeros(s.len());
        for j in 0..ml {
            ds.rows_mut(ol + j * r, r).copy_from(&(s_mat * s.rows(ol + j * r, r)));
        }
        for i in 0..mf {
            let a = &agents[i];
            let g = &sc.gains.agents[i];
            let n = dims[i];
            let xi = s.rows(of + xo[i], n);
            let wi = s.rows(ow + xo[i], n);
            let vi = s.rows(ov + i * r, r);
            let di = DVector::from_column_slice(&dist[qo[i]..qo[i] + qdims[i]]);
            let ui = control(i, wi, vi);
            let yi = &a.c1 * xi + &a.d1 * &di;
            let dx = &a.a * xi + &a.b * &ui + &a.e * &di;
            let dw = &a.a * wi + &a.b * &ui + &g.g * (&a.c1 * wi - yi);
            let mut dv = s_mat * vi;
            for j in 0..mf + ml {
                let aij = -lap[(i, j)];
                if j == i || aij == 0.0 {
                    continue;
                }
                let other = if j < mf {
                    s.rows(ov + j * r, r)
                } else {
                    s.rows(ol + (j - mf) * r, r)
                };
                dv += (other - vi) * aij;
            }
            ds.rows_mut(of + xo[i], n).copy_from(&dx);
            ds.rows_mut(ow + xo[i], n).copy_from(&dw);
            ds.rows_mut(ov + i * r, r).copy_from(&dv);
        }
        ds
    };

    let hull_out = kron(&part.hull_coeffs, &identity(p));
    let hull_ref = kron(&part.hull_coeffs, &identity(r));
    let r_lead = kron(&identity(ml), &sc.leader.r);
    let mut trace = SimulationTrace::new(SimMode::Heterogeneous, dims.clone(), r, p);
    let mut noise = NoiseSource::new(dist, qdims.iter().sum(), opts.dt);
    integrate(s0, opts, &mut noise, rhs, |t, s, dist| {
        let xl = s.rows(ol, ml * r).clone_owned();
        let xf = s.rows(of, nx).clone_owned();
        let w = s.rows(ow, nx).clone_owned();
        let v = s.rows(ov, mf * r).clone_owned();
        let mut zf = DVector::zeros(mf * p);
        for i in 0..mf {
            let a = &agents[i];
            let n = dims[i];
            let ui = control(i, w.rows(xo[i], n), v.rows(i * r, r));
            zf.rows_mut(i * p, p)
                .copy_from(&(&a.c2 * xf.rows(xo[i], n) + &a.d2 * ui));
        }
        let zl = &r_lead * &xl;
        trace.times.push(t);
        trace.performance.push(performance_output(part, &zf, &zl));
        trace.hull.push(&hull_out * &zl);
        trace.reference_hull.push(&hull_ref * &xl);
        trace.follower_outputs.push(zf);
        trace.leader_outputs.push(zl);
        trace.follower_states.push(xf);
        trace.leader_states.push(xl);
        trace.observer_states.push(w);
        trace.reference_states.push(v);
        trace.disturbance.push(DVector::from_column_slice(dist));
    })?;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentMetrics {
    pub initial_hull_error: f64,
    pub final_hull_error: f64,
    pub final_eps_norm: f64,
    /// `final_hull_error / initial_hull_error` (0 when both vanish).
    pub decay_ratio: f64,
    /// `‖w − x_f‖` final over initial; heterogeneous runs only.
    pub observer_decay_ratio: Option<f64>,
    /// `‖v − ω_v‖` final over initial; heterogeneous runs only.
    pub reference_decay_ratio: Option<f64>,
}

fn ratio(first: f64, last: f64) -> f64 {
    if first == 0.0 {
        if last == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        last / first
    }
}

pub fn containment_metrics(trace: &SimulationTrace) -> ContainmentMetrics {
    if trace.is_empty() {
        return ContainmentMetrics {
            initial_hull_error: 0.0,
            final_hull_error: 0.0,
            final_eps_norm: 0.0,
            decay_ratio: 0.0,
            observer_decay_ratio: None,
            reference_decay_ratio: None,
        };
    }
    let last = trace.len() - 1;
    let initial = trace.hull_error(0);
    let fin = trace.hull_error(last);
    let (obs, refr) = match trace.mode {
        SimMode::Homogeneous => (None, None),
        SimMode::Heterogeneous => {
            let obs = |k: usize| (&trace.observer_states[k] - &trace.follower_states[k]).norm();
            let rf = |k: usize| {
                let v = &trace.reference_states[k];
                let target = &trace.reference_hull[k];
                (v - target).norm()
            };
            (Some(ratio(obs(0), obs(last))), Some(ratio(rf(0), rf(last))))
        }
    };
    ContainmentMetrics {
        initial_hull_error: initial,
        final_hull_error: fin,
        final_eps_norm: trace.performance[last].norm(),
        decay_ratio: ratio(initial, fin),
        observer_decay_ratio: obs,
        reference_decay_ratio: refr,
    }
}

/// Networked error coordinates `((L1⊗I)(x_f − ω_x), (L1⊗I)w)` of a
/// homogeneous trace at sample `k`.
pub fn homogeneous_error_state(trace: &SimulationTrace, part: &LaplacianPartition, k: usize) -> DVector<f64> {
    let n = trace.leader_dim;
    let l1n = kron(&part.l1, &identity(n));
    let xi_x = &l1n * (&trace.follower_states[k] - &trace.hull[k]);
    let xi_w = &l1n * &trace.observer_states[k];
    DVector::from_iterator(xi_x.len() + xi_w.len(), xi_x.iter().chain(xi_w.iter()).copied())
}

fn group_labels(prefix: &str, dims: &[usize]) -> Vec<String> {
    dims.iter()
        .enumerate()
        .flat_map(|(i, &d)| (1..=d).map(move |k| format!("{prefix}{}_{k}", i + 1)))
        .collect()
}

/// Column groups of the CSV export: `(name, labels, per-sample data)`.
pub fn trace_groups(trace: &SimulationTrace) -> Vec<(&'static str, Vec<String>, &[DVector<f64>])> {
    let mf = trace.follower_dims.len();
    let ml = trace.leader_states.first().map_or(0, |v| v.len() / trace.leader_dim.max(1));
    let p = trace.output_dim;
    let mut groups = vec![
        ("followers", group_labels("x", &trace.follower_dims), &trace.follower_states[..]),
        ("leaders", group_labels("xl", &vec![trace.leader_dim; ml]), &trace.leader_states[..]),
        ("observers", group_labels("w", &trace.follower_dims), &trace.observer_states[..]),
    ];
    if trace.mode == SimMode::Heterogeneous {
        groups.push(("references", group_labels("v", &vec![trace.leader_dim; mf]), &trace.reference_states[..]));
    }
    groups.push(("outputs", group_labels("z", &vec![p; mf]), &trace.follower_outputs[..]));
    groups.push(("leader_outputs", group_labels("zl", &vec![p; ml]), &trace.leader_outputs[..]));
    groups.push(("performance", group_labels("eps", &vec![p; mf]), &trace.performance[..]));
    let hull_dim = match trace.mode {
        SimMode::Homogeneous => trace.leader_dim,
        SimMode::Heterogeneous => p,
    };
    groups.push(("hull", group_labels("omega", &vec![hull_dim; mf]), &trace.hull[..]));
    if trace.mode == SimMode::Heterogeneous {
        groups.push((
            "reference_hull",
            group_labels("omega_v", &vec![trace.leader_dim; mf]),
            &trace.reference_hull[..],
        ));
    }
    let qdim = trace.disturbance.first().map_or(0, |d| d.len());
    groups.push(("disturbance", (1..=qdim).map(|k| format!("d_{k}")).collect(), &trace.disturbance[..]));
    groups
}

/// RFC-4180 CSV: header row, time first, then every group of
/// [`trace_groups`] in order.
pub fn write_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(format!("CSV write failed: {e}"));
    let groups = trace_groups(trace);
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain(groups.iter().flat_map(|(_, labels, _)| labels.iter().cloned()))
        .collect();
    w.write_record(&header).map_err(io)?;
    for (k, t) in trace.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for (_, _, data) in &groups {
            row.extend(data[k].iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("CSV write failed: {e}")))?;
    Ok(())
}

/// Minimal SVG line plot, one polyline per labelled series.
pub fn render_svg(title: &str, times: &[f64], labels: &[String], data: &[DVector<f64>]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    ];
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(1.0).max(t0 + f64::EPSILON);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in data.iter().flat_map(|d| d.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !lo.is_finite() || hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let sx = |t: f64| PAD + (t - t0) / (t1 - t0) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{PAD}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">t = {t0:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">t = {t1:.3}</text>\n\
         <text x=\"2\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{hi:.3}</text>\n\
         <text x=\"2\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{lo:.3}</text>\n",
        xml_escape(title),
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        H - PAD + 14.0,
        W - PAD,
        H - PAD + 14.0,
        PAD,
        H - PAD,
    );
    // Thin long traces to roughly one point per horizontal pixel.
    let step = (times.len() / (W as usize)).max(1);
    for (c, label) in labels.iter().enumerate() {
        let points: Vec<String> = (0..times.len())
            .step_by(step)
            .chain(std::iter::once(times.len().saturating_sub(1)))
            .filter(|&k| k < times.len())
            .map(|k| format!("{:.2},{:.2}", sx(times[k]), sy(data[k][c])))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"><title>{}</title></polyline>\n",
            COLORS[c % COLORS.len()],
            points.join(" "),
            xml_escape(label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
