//! Random problem generators for property tests and randomized checks.
//! Every generator draws from the caller's RNG only, so a seed fixes the
//! whole instance.

use rand::Rng;

use crate::graph::{build_graph, CommGraph};
use crate::heterog::{HeterogAgent, LeaderModel};
use crate::homog::{AgentModel, ClosedLoopSystem};
use crate::matcore::{self, block, identity, kron, Matrix};

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

/// Rejects draws whose control or filter Riccati solutions (with the
/// default `1e-3` perturbations) are large enough to lose double-precision
/// residual accuracy.
fn well_conditioned(a: &Matrix, b: &Matrix, c1: &Matrix, c2: &Matrix, e: &Matrix) -> bool {
    let n = a.nrows();
    let small = identity(n) * 1e-3;
    let control = matcore::solve_care(a, &(b * b.transpose()), &(c2.transpose() * c2 + &small));
    let filter = matcore::solve_care(&a.transpose(), &(c1.transpose() * c1), &(e * e.transpose() + &small));
    matches!((control, filter), (Ok((p, _)), Ok((q, _))) if p.norm() < 1e3 && q.norm() < 1e3)
}

/// Connected follower graph (random spanning tree plus extra edges) with
/// every leader pinned to one or two followers.
pub fn random_graph(rng: &mut impl Rng, followers: usize, leaders: usize) -> CommGraph {
    let mut edges = Vec::new();
    for i in 2..=followers {
        edges.push((rng.random_range(1..i), i));
    }
    for i in 1..=followers {
        for j in i + 1..=followers {
            if rng.random_bool(0.25) {
                edges.push((i, j));
            }
        }
    }
    for l in followers + 1..=followers + leaders {
        let targets = rng.random_range(1..=followers.min(2));
        for _ in 0..targets {
            edges.push((l, rng.random_range(1..=followers)));
        }
    }
    build_graph(followers, leaders, &edges).expect("generated graph satisfies the topology assumptions")
}

/// Plant with `D1 = [I 0]`, `E = [0 E2]`, `C2 = [C2a; 0]`, `D2 = [0; I]`,
/// so every regularity condition holds with identity weights. Redrawn
/// until both design Riccati equations are well conditioned.
pub fn random_homogeneous_plant(rng: &mut impl Rng, n: usize) -> AgentModel {
    loop {
        let m = rng.random_range(1..=n.min(2));
        let r = rng.random_range(1..=n.min(2));
        let q2 = rng.random_range(1..=2);
        let p1 = rng.random_range(1..=2);
        let a = uniform(rng, n, n, 1.5);
        let b = uniform(rng, n, m, 1.0);
        let c1 = uniform(rng, r, n, 1.0);
        let d1 = block(&[vec![identity(r), Matrix::zeros(r, q2)]]).unwrap();
        let e = block(&[vec![Matrix::zeros(n, r), uniform(rng, n, q2, 0.5)]]).unwrap();
        let c2 = block(&[vec![uniform(rng, p1, n, 0.5)], vec![Matrix::zeros(m, n)]]).unwrap();
        let d2 = block(&[vec![Matrix::zeros(p1, m)], vec![identity(m)]]).unwrap();
        if !well_conditioned(&a, &b, &c1, &c2, &e) {
            continue;
        }
        let sys = AgentModel::new(a, b, c1, c2, d1, d2, e).unwrap();
        if sys.check_structure().is_ok() {
            return sys;
        }
    }
}

/// Either a double integrator or a harmonic oscillator, with a random
/// invertible `R` (so `(R, S)` is observable). The second row of `R` is
/// kept away from `[0 ·]`, which would make the followers' `Π` nearly rank
/// one for a double integrator.
pub fn random_leader(rng: &mut impl Rng) -> LeaderModel {
    let s = if rng.random_bool(0.5) {
        matcore::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]])
    } else {
        let w = rng.random_range(0.3..1.5);
        matcore::from_rows(&[&[0.0, w], &[-w, 0.0]])
    };
    loop {
        let r = uniform(rng, 2, 2, 1.0);
        if r.determinant().abs() > 0.2 && r[(1, 0)].abs() > 0.3 {
            return LeaderModel::new(s.clone(), r).unwrap();
        }
    }
}

/// Follower of order `n ≥ 2` tracking a two-output leader. `C2 = [c; 0]`,
/// `D2 = [0; 1]` force `Γ = R₂`; `Π` then solves `AΠ − ΠS = −BR₂` and `c`
/// is chosen so that `cΠ = R₁`, which makes the regulator equations exactly
/// solvable.
pub fn random_heterogeneous_agent(rng: &mut impl Rng, n: usize, leader: &LeaderModel) -> HeterogAgent {
    let r = leader.order();
    loop {
        let a = uniform(rng, n, n, 1.5);
        let b = uniform(rng, n, 1, 1.0);
        let c1 = uniform(rng, 1, n, 1.0);
        let q = 2;
        let d1 = matcore::from_rows(&[&[1.0, 0.0]]);
        let e = block(&[vec![Matrix::zeros(n, 1), uniform(rng, n, q - 1, 0.5)]]).unwrap();
        let r1 = leader.r.rows(0, 1).clone_owned();
        let r2 = leader.r.rows(1, 1).clone_owned();
        let coef = kron(&identity(r), &a) - kron(&leader.s.transpose(), &identity(n));
        let rhs = -(&b * &r2);
        let Ok((vec_pi, _)) = matcore::solve_lsq(&coef, &Matrix::from_column_slice(n * r, 1, rhs.as_slice())) else {
            continue;
        };
        let pi = Matrix::from_column_slice(n, r, vec_pi.as_slice());
        let sv = pi.clone().svd(false, false).singular_values;
        let coef_sv = coef.clone().svd(false, false).singular_values;
        if coef_sv.min() < 0.1 || sv.max() > 10.0 || sv.min() < 0.1 || (&coef * &vec_pi - Matrix::from_column_slice(n * r, 1, rhs.as_slice())).norm() > 1e-9 {
            continue;
        }
        let (ct, _) = matcore::solve_lsq(&pi.transpose(), &r1.transpose()).unwrap();
        let c2 = block(&[vec![ct.transpose()], vec![Matrix::zeros(1, n)]]).unwrap();
        let d2 = matcore::column(&[0.0, 1.0]);
        if !well_conditioned(&a, &b, &c1, &c2, &e) {
            continue;
        }
        let sys = AgentModel::new(a, b, c1, c2, d1, d2, e).unwrap();
        if sys.check_structure().is_ok() {
            return sys;
        }
    }
}

/// Hurwitz `A` (random matrix shifted left of the imaginary axis by a
/// margin in `[0.2, 1.2]`) with random `E` and `C`.
pub fn random_hurwitz_system(rng: &mut impl Rng, n: usize) -> ClosedLoopSystem {
    let x = uniform(rng, n, n, 1.0);
    let shift = matcore::max_real_part(&x).unwrap() + rng.random_range(0.2..1.2);
    let a = x - identity(n) * shift;
    let q = rng.random_range(1..=3);
    let p = rng.random_range(1..=3);
    let e = uniform(rng, n, q, 1.0);
    let c = uniform(rng, p, n, 1.0);
    let labels = (1..=n).map(|k| format!("x{k}")).collect();
    ClosedLoopSystem::new(a, e, c, labels).unwrap()
}

/// Random orthogonal matrix from the QR factor of a Gaussian-like draw.
pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> Matrix {
    uniform(rng, n, n, 1.0).qr().q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heterog::solve_regulator;
    use crate::homog::check_regularity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_respect_their_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_graph(&mut rng, 4, 2);
            assert_eq!(g.num_nodes(), 6);
            let sys = random_homogeneous_plant(&mut rng, 3);
            check_regularity(&sys, true).unwrap();
            let leader = random_leader(&mut rng);
            let agent = random_heterogeneous_agent(&mut rng, 3, &leader);
            check_regularity(&agent, true).unwrap();
            solve_regulator(&agent, &leader, 1).unwrap();
            assert!(matcore::is_hurwitz(&random_hurwitz_system(&mut rng, 5).a, 0.0));
        }
    }
}
