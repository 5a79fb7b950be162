//! Built-in example scenarios on the six-follower, three-leader topology
//! of [`crate::graph::six_follower_example`].

use crate::heterog::{HeterogAgent, LeaderModel};
use crate::homog::AgentModel;
use crate::matcore::{column, from_rows, Matrix};

/// Third-order shared plant with scalar input and measured output.
pub fn homogeneous_plant() -> AgentModel {
    AgentModel::new(
        from_rows(&[&[0.0, 0.0, -1.0], &[0.0, 0.0, 2.0], &[1.0, 0.0, -1.5]]),
        column(&[1.0, 1.2, 1.5]),
        from_rows(&[&[1.0, 1.0, 0.0]]),
        from_rows(&[&[0.2, 0.2, 0.2], &[0.2, 0.2, 0.2], &[0.0, 0.0, 0.0]]),
        from_rows(&[&[0.0, 1.0, 0.0]]),
        column(&[0.0, 0.0, 1.0]),
        from_rows(&[&[0.1, 0.0, 0.0], &[0.1, 0.0, 0.0], &[0.0, 0.0, 0.1]]),
    )
    .expect("preset plant is consistent")
}

pub const HOMOGENEOUS_GAMMA: f64 = 289.0;
pub const HOMOGENEOUS_NOISE: f64 = 15.0;

pub fn homogeneous_follower_states() -> Vec<Vec<f64>> {
    vec![
        vec![-7.09, -0.11, -14.33],
        vec![1.70, 1.20, -7.97],
        vec![0.74, 4.5, 6.47],
        vec![-2.09, -3.39, 15.62],
        vec![-13.14, 12.81, 13.58],
        vec![9.18, -11.76, -6.11],
    ]
}

pub fn homogeneous_leader_states() -> Vec<Vec<f64>> {
    vec![vec![-4.97, 6.49, -10.83], vec![7.98, -11.29, 5.5], vec![0.47, 9.06, 7.68]]
}

/// Disturbance input matrix used in the noisy homogeneous simulation.
pub fn homogeneous_sim_e() -> Matrix {
    from_rows(&[&[0.25, 0.0, -0.21], &[0.19, 0.0, 0.07], &[-0.01, 0.0, 0.04]])
}

/// Ramp generator with a unit-gain output map.
pub fn leader_model() -> LeaderModel {
    LeaderModel::new(from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]), from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]))
        .expect("preset leader is valid")
}

/// Six followers, three distinct ones repeated: `b_i = f_i ∈ {1, 2, 3}`.
pub fn heterogeneous_agents() -> Vec<HeterogAgent> {
    [1.0, 2.0, 3.0, 1.0, 2.0, 3.0]
        .iter()
        .map(|&k| heterogeneous_agent(k, k))
        .collect()
}

pub fn heterogeneous_agent(b: f64, f: f64) -> HeterogAgent {
    AgentModel::new(
        from_rows(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, -f, -2.0]]),
        column(&[0.0, 0.0, b]),
        from_rows(&[&[1.0, 2.0, 1.0]]),
        from_rows(&[&[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0]]),
        from_rows(&[&[1.0, 0.0]]),
        column(&[0.0, 1.0]),
        from_rows(&[&[0.0, 0.2], &[0.0, 0.0], &[0.0, 0.2]]),
    )
    .expect("preset agent is consistent")
}

pub const HETEROGENEOUS_GAMMA: f64 = 115.0;
pub const HETEROGENEOUS_NOISE: f64 = 2.0;

pub fn heterogeneous_follower_states() -> Vec<Vec<f64>> {
    vec![
        vec![2.58, -0.82, -1.99],
        vec![-0.99, 0.49, 2.28],
        vec![1.52, -0.06, 1.29],
        vec![2.12, -1.23, 1.59],
        vec![-0.51, -1.62, -1.72],
        vec![-0.74, -0.26, -1.1],
    ]
}

pub fn heterogeneous_leader_states() -> Vec<Vec<f64>> {
    vec![vec![1.89, -0.11], vec![1.63, -1.34], vec![2.76, 0.64]]
}

pub fn heterogeneous_reference_states() -> Vec<Vec<f64>> {
    vec![
        vec![-0.34, 1.67],
        vec![2.28, -1.64],
        vec![0.14, -0.46],
        vec![1.23, -1.47],
        vec![-1.03, 1.01],
        vec![-0.54, -0.26],
    ]
}

pub fn heterogeneous_sim_e() -> Matrix {
    from_rows(&[&[0.0, 0.06], &[0.0, 0.18], &[0.0, 0.36]])
}
