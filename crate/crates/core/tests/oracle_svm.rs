//! SMO optimality against an independent projected-gradient solver for the
//! dual QP, plus KKT verification on every trained machine.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use afe_core::matrix::Matrix;
use afe_core::svm::{kkt_satisfied, smo_solve, svm_train, SvmHyper};

#[test]
fn smo_matches_projected_gradient_oracle() {
    assert!(common::smo_dual_gap_sweep(200, 77) <= 1e-6);
}

#[test]
fn kkt_holds_on_every_trained_machine() {
    let mut rng = ChaCha20Rng::seed_from_u64(78);
    for trial in 0..200 {
        let (x, y, hyper) = common::random_svm_problem(&mut rng);
        let sol = smo_solve(&x, &y, hyper, 1e-3).unwrap();
        assert!(
            kkt_satisfied(&x, &y, &sol, hyper, 1e-3).unwrap(),
            "trial {trial}: KKT violated"
        );
    }
}

#[test]
fn xor_reaches_zero_training_error() {
    let x = Matrix::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
    ])
    .unwrap();
    let y = [1.0, 1.0, -1.0, -1.0];
    let m = svm_train(&x, &y, SvmHyper::new(10.0, 1.0).unwrap(), 1e-4).unwrap();
    for i in 0..4 {
        assert!(m.decision(x.row(i)).unwrap() * y[i] > 0.0, "point {i} misclassified");
    }
}
