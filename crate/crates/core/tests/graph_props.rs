use h2_containment::graph::{build_graph, laplacian_partition};
use h2_containment::matcore::{is_positive_definite, Matrix};
use h2_containment::testkit::random_graph;
use h2_containment::Error;
use proptest::prelude::*;

mod common;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partition_invariants(seed in any::<u64>(), followers in 1usize..=8, leaders in 1usize..=3) {
        let mut rng = common::rng(seed);
        let g = random_graph(&mut rng, followers, leaders);
        let part = laplacian_partition(&g).unwrap();
        prop_assert_eq!(&part.l1, &part.l1.transpose());
        prop_assert!(part.lambda_min() > 0.0);
        prop_assert!(is_positive_definite(&part.l1, 0.0).unwrap());
        for row in part.hull_coeffs.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-10);
            prop_assert!(row.iter().all(|&v| v >= -1e-10));
        }
        let l = g.laplacian();
        let n = followers + leaders;
        prop_assert!(l.rows(followers, leaders).iter().all(|&v| v == 0.0));
        for i in 0..n {
            prop_assert_eq!(l.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn leader_edges_are_rejected(seed in any::<u64>(), followers in 2usize..=5) {
        let mut rng = common::rng(seed);
        let g = random_graph(&mut rng, followers, 2);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for i in 0..followers + 2 {
            for j in g.in_neighbors(i) {
                edges.push((j + 1, i + 1));
            }
        }
        let mut into_leader = edges.clone();
        into_leader.push((1, followers + 1));
        let rejected = matches!(build_graph(followers, 2, &into_leader), Err(Error::EdgeIntoLeader { .. }));
        prop_assert!(rejected);
        let mut between_leaders = edges.clone();
        between_leaders.push((followers + 2, followers + 1));
        let rejected = matches!(build_graph(followers, 2, &between_leaders), Err(Error::EdgeIntoLeader { .. }));
        prop_assert!(rejected);
        prop_assert!(build_graph(followers, 2, &edges).is_ok());
    }
}

#[test]
fn structural_violations_have_specific_errors() {
    assert!(matches!(build_graph(2, 1, &[(1, 2), (3, 1), (1, 1)]), Err(Error::SelfLoop(_))));
    assert!(matches!(build_graph(3, 1, &[(1, 2), (4, 1)]), Err(Error::FollowersDisconnected)));
    assert!(matches!(build_graph(2, 2, &[(1, 2), (3, 1)]), Err(Error::IsolatedLeader(_))));
    assert!(matches!(build_graph(2, 1, &[(1, 5)]), Err(Error::LabelOutOfRange { .. })));
}

#[test]
fn example_laplacian_is_symmetric_integer() {
    let part = common::example_partition();
    assert!(part.l1.iter().all(|v| v.fract() == 0.0));
    let zero = Matrix::zeros(6, 6);
    assert_ne!(part.l1, zero);
}
