mod common;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgne::graph::Topology;
use rgne::operators::{ExtendedOperator, Layout, Preconditioner, ResidualNorm, StackedPoint};
use rgne_testkit::power_iteration_norm;

fn random_point(layout: &Layout, rng: &mut ChaCha8Rng, scale: f64) -> StackedPoint {
    let flat = DVector::from_fn(layout.total_dim(), |_, _| rng.gen_range(-scale..scale));
    StackedPoint::from_flat(layout, &flat).unwrap()
}

#[test]
fn resolvent_is_firmly_nonexpansive() {
    let r = common::reference(Topology::Ring);
    let op = ExtendedOperator::new(&r.canonical);
    let layout = op.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let u = random_point(&layout, &mut rng, 30.0);
        let v = random_point(&layout, &mut rng, 30.0);
        let (ju, jv) = (op.resolvent_b(&u).unwrap(), op.resolvent_b(&v).unwrap());
        let d = ju.sub(&jv);
        assert!(d.dot(&d) <= d.dot(&u.sub(&v)) + 1e-6);
        // idempotent
        assert!(op.resolvent_b(&ju).unwrap().sub(&ju).amax() < 1e-7);
    }
}

#[test]
fn lipschitz_and_monotone_on_samples() {
    for t in [Topology::Ring, Topology::Complete] {
        let r = common::reference(t);
        let op = ExtendedOperator::new(&r.canonical);
        let layout = op.layout();
        let ell_a = op.lipschitz_bound(r.game.pseudo_gradient_lipschitz().unwrap());
        let linear_norm = power_iteration_norm(&op.assemble_linear(), 5000);
        assert!(linear_norm <= ell_a);
        let skew = op.assemble_a2();
        assert!((&skew + skew.transpose()).amax() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let u = random_point(&layout, &mut rng, 20.0);
            let v = random_point(&layout, &mut rng, 20.0);
            let da = op.eval_a(&u).unwrap().sub(&op.eval_a(&v).unwrap());
            let du = u.sub(&v);
            assert!(da.norm() <= ell_a * du.norm() * (1.0 + 1e-12));
            assert!(da.dot(&du) >= -1e-9 * du.dot(&du));
        }
    }
}

#[test]
fn residual_is_lipschitz() {
    let r = common::reference(Topology::Ring);
    let op = ExtendedOperator::new(&r.canonical);
    let layout = op.layout();
    let ell_a = op.lipschitz_bound(r.game.pseudo_gradient_lipschitz().unwrap());
    let phi = Preconditioner::evenly_spaced(&layout, ell_a, 0.99).unwrap();
    // the displacement is identity minus a nonexpansive map of I − Φ⁻¹A
    let constant = 2.0 + phi.ell_phi();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let u = random_point(&layout, &mut rng, 20.0);
        let v = u.add(&random_point(&layout, &mut rng, 1e-3));
        let ru = op.natural_residual(&phi, &u, ResidualNorm::Euclidean).unwrap();
        let rv = op.natural_residual(&phi, &v, ResidualNorm::Euclidean).unwrap();
        assert!((ru - rv).abs() <= constant * u.sub(&v).norm() + 1e-7);
    }
}

#[test]
fn converged_point_is_a_zero_under_any_metric() {
    let (r, run) = common::ring_run();
    let op = ExtendedOperator::new(&r.canonical);
    let layout = op.layout();
    assert!(run.converged);
    let own = op
        .natural_residual(&run.preconditioner, &run.final_point, ResidualNorm::Euclidean)
        .unwrap();
    assert!(own <= 1e-9);
    let uniform = Preconditioner::uniform(&layout, run.ell_a, 0.5).unwrap();
    let other = op
        .natural_residual(&uniform, &run.final_point, ResidualNorm::Euclidean)
        .unwrap();
    assert!(other <= 1e-7, "{other}");
}
