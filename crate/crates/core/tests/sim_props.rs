use h2_containment::graph::laplacian_partition;
use h2_containment::heterog::{design_heterogeneous, HeterogDesignParams};
use h2_containment::homog::{assemble_error_system, design_homogeneous, AgentModel, HomogDesignParams, HomogGains};
use h2_containment::presets;
use h2_containment::sim::{
    containment_metrics, homogeneous_error_state, performance_output, simulate_heterogeneous, simulate_homogeneous,
    write_csv, DisturbanceSpec, HeterogScenario, HomogScenario, SimOptions, SimulationTrace,
};
use h2_containment::{build_graph, LaplacianPartition};
use nalgebra::DVector;
use proptest::prelude::*;

mod common;

fn example_design() -> (AgentModel, LaplacianPartition, HomogGains) {
    let (mut sys, part) = common::homogeneous_example();
    let gains = design_homogeneous(&sys, &part, &HomogDesignParams::new(presets::HOMOGENEOUS_GAMMA)).unwrap();
    sys.e = presets::homogeneous_sim_e();
    (sys, part, gains)
}

fn run_homog(sys: &AgentModel, part: &LaplacianPartition, gains: &HomogGains, dist: &DisturbanceSpec, opts: &SimOptions) -> SimulationTrace {
    let xf = presets::homogeneous_follower_states();
    let xl = presets::homogeneous_leader_states();
    let sc = HomogScenario {
        sys,
        part,
        gains,
        x0_followers: &xf,
        x0_leaders: &xl,
        w0: None,
    };
    simulate_homogeneous(&sc, dist, opts).unwrap()
}

fn csv_bytes(trace: &SimulationTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(trace, &mut buf).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn identical_seeds_give_identical_traces(seed in any::<u64>()) {
        let (sys, part, gains) = example_design();
        let dist = DisturbanceSpec::bounded_white(presets::HOMOGENEOUS_NOISE, seed);
        let opts = SimOptions::new(1.0, 1e-3);
        let a = run_homog(&sys, &part, &gains, &dist, &opts);
        let b = run_homog(&sys, &part, &gains, &dist, &opts);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(csv_bytes(&a), csv_bytes(&b));
    }

    #[test]
    fn performance_output_is_recomputable(seed in any::<u64>()) {
        let (sys, part, gains) = example_design();
        let dist = DisturbanceSpec::bounded_white(presets::HOMOGENEOUS_NOISE, seed);
        let trace = run_homog(&sys, &part, &gains, &dist, &SimOptions::new(1.0, 1e-3));
        let n = sys.dims().n;
        let m = part.num_followers();
        let u = &sys.d2 * &gains.f;
        for k in 0..trace.len() {
            let x = &trace.follower_states[k];
            let w = &trace.observer_states[k];
            let z_f = DVector::from_iterator(
                m * sys.c2.nrows(),
                (0..m).flat_map(|i| {
                    let xi = x.rows(i * n, n);
                    let wi = w.rows(i * n, n);
                    (&sys.c2 * xi + &u * wi).iter().copied().collect::<Vec<_>>()
                }),
            );
            let xl = &trace.leader_states[k];
            let z_l = DVector::from_iterator(
                part.num_leaders() * sys.c2.nrows(),
                (0..part.num_leaders()).flat_map(|j| (&sys.c2 * xl.rows(j * n, n)).iter().copied().collect::<Vec<_>>()),
            );
            let eps = performance_output(&part, &z_f, &z_l);
            let scale = 1.0 + eps.norm();
            prop_assert!((&eps - &trace.performance[k]).norm() <= 1e-10 * scale);
        }
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    let (sys, part, gains) = example_design();
    let dist = DisturbanceSpec::zero();
    let t = 2.0;
    let h = 0.04;
    let terminal = |dt: f64| {
        let tr = run_homog(&sys, &part, &gains, &dist, &SimOptions::new(t, dt));
        let k = tr.len() - 1;
        let mut v = tr.follower_states[k].as_slice().to_vec();
        v.extend_from_slice(tr.observer_states[k].as_slice());
        DVector::from_vec(v)
    };
    let reference = terminal(h / 8.0);
    let coarse = (terminal(h) - &reference).norm();
    let fine = (terminal(h / 2.0) - &reference).norm();
    let ratio = coarse / fine;
    assert!((12.0..=20.0).contains(&ratio), "error ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn error_coordinates_follow_the_assembled_system() {
    let (sys, part, gains) = example_design();
    let opts = SimOptions::new(5.0, 1e-3);
    let trace = run_homog(&sys, &part, &gains, &DisturbanceSpec::zero(), &opts);
    let clp = assemble_error_system(&sys, &part, &gains).unwrap();
    let a = &clp.a;
    let mut s = homogeneous_error_state(&trace, &part, 0);
    let h = opts.dt;
    for _ in 0..(opts.t_final / h).round() as usize {
        let k1 = a * &s;
        let k2 = a * (&s + &k1 * (h / 2.0));
        let k3 = a * (&s + &k2 * (h / 2.0));
        let k4 = a * (&s + &k3 * h);
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let from_trace = homogeneous_error_state(&trace, &part, trace.len() - 1);
    let rel = (&from_trace - &s).norm() / s.norm();
    assert!(rel <= 1e-6, "relative mismatch {rel:e}");
}

#[test]
fn zero_everything_stays_at_rest() {
    let (sys, part, mut gains) = example_design();
    gains.f.fill(0.0);
    gains.g.fill(0.0);
    let zeros = |k: usize| vec![vec![0.0; 3]; k];
    let (xf, xl) = (zeros(6), zeros(3));
    let sc = HomogScenario {
        sys: &sys,
        part: &part,
        gains: &gains,
        x0_followers: &xf,
        x0_leaders: &xl,
        w0: Some(&xf),
    };
    let trace = simulate_homogeneous(&sc, &DisturbanceSpec::zero(), &SimOptions::new(1.0, 1e-2)).unwrap();
    assert!(trace.follower_states.iter().chain(&trace.observer_states).all(|v| v.iter().all(|&x| x == 0.0)));
    let m = containment_metrics(&trace);
    assert_eq!((m.initial_hull_error, m.final_hull_error, m.final_eps_norm, m.decay_ratio), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn heterogeneous_equilibrium_has_zero_performance_output() {
    let leader = presets::leader_model();
    let agents = presets::heterogeneous_agents();
    let graph = build_graph(2, 1, &[(1, 2), (2, 1), (3, 1)]).unwrap();
    let part = laplacian_partition(&graph).unwrap();
    let two = agents[..2].to_vec();
    let gains = design_heterogeneous(&two, &leader, &part, &HeterogDesignParams::new(1e6)).unwrap();
    // Leader at the origin; followers at Π·0 = 0 with zero observer and reference states.
    let zeros = |k: usize, d: usize| vec![vec![0.0; d]; k];
    let xf = zeros(2, 3);
    let xl = zeros(1, 2);
    let v0 = zeros(2, 2);
    let sc = HeterogScenario {
        agents: &two,
        leader: &leader,
        part: &part,
        gains: &gains,
        x0_followers: &xf,
        x0_leaders: &xl,
        w0: Some(&xf),
        v0: Some(&v0),
    };
    let trace = simulate_heterogeneous(&sc, &DisturbanceSpec::zero(), &SimOptions::new(2.0, 1e-2)).unwrap();
    assert!(trace.performance.iter().all(|e| e.norm() == 0.0));
}

#[test]
fn heterogeneous_trace_on_leader_manifold_stays_there() {
    // Follower starts at Π·v with v equal to the single leader's state.
    let agents = presets::heterogeneous_agents()[..1].to_vec();
    let leader = presets::leader_model();
    let graph = build_graph(1, 1, &[(2, 1)]).unwrap();
    let part = laplacian_partition(&graph).unwrap();
    let gains = design_heterogeneous(&agents, &leader, &part, &HeterogDesignParams::new(1e6)).unwrap();
    let v = vec![0.7, -0.3];
    let pi = &gains.agents[0].regulator.pi;
    let x = pi * DVector::from_vec(v.clone());
    let xf = vec![x.as_slice().to_vec()];
    let xl = vec![v.clone()];
    let v0 = vec![v];
    let sc = HeterogScenario {
        agents: &agents,
        leader: &leader,
        part: &part,
        gains: &gains,
        x0_followers: &xf,
        x0_leaders: &xl,
        w0: Some(&xf),
        v0: Some(&v0),
    };
    let trace = simulate_heterogeneous(&sc, &DisturbanceSpec::zero(), &SimOptions::new(2.0, 1e-3)).unwrap();
    let worst = trace.performance.iter().map(|e| e.norm()).fold(0.0, f64::max);
    assert!(worst <= 1e-9, "max |eps| = {worst:e}");
}
