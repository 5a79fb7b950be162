#![allow(dead_code)]

use std::path::PathBuf;

use h2_containment::graph::{laplacian_partition, six_follower_example, LaplacianPartition};
use h2_containment::heterog::{HeterogAgent, LeaderModel};
use h2_containment::homog::AgentModel;
use h2_containment::presets;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn example_partition() -> LaplacianPartition {
    laplacian_partition(&six_follower_example()).unwrap()
}

pub fn homogeneous_example() -> (AgentModel, LaplacianPartition) {
    (presets::homogeneous_plant(), example_partition())
}

pub fn heterogeneous_example() -> (Vec<HeterogAgent>, LeaderModel, LaplacianPartition) {
    (presets::heterogeneous_agents(), presets::leader_model(), example_partition())
}

pub fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

pub fn max_abs_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).abs().max()
}
