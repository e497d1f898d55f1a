use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use sosc_core::control::{
    care_residual, lqr_infinite, lqt_finite, tracking_weight, DoubleIntegrator, StepwiseReference,
};
use sosc_core::Gaussian;

/// Integrates `Ṗ = AᵀP + PA − PBR⁻¹BᵀP + Q` forward in reverse time with
/// explicit Euler until it settles.
fn settle_riccati(sys: &DoubleIntegrator, q: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let a = sys.a();
    let b = sys.b();
    let s = &b * r.clone().try_inverse().unwrap() * b.transpose();
    let n = sys.state_dim();
    let mut p = DMatrix::zeros(n, n);
    let h = 1e-4;
    for _ in 0..400_000 {
        let dp = a.transpose() * &p + &p * &a - &p * &s * &p + q;
        p += dp * h;
    }
    p
}

#[test]
fn scalar_care_matches_closed_form_and_integration() {
    let sys = DoubleIntegrator::new(1, 0.01).unwrap();
    let q = dmatrix![1.0, 0.0; 0.0, 0.0];
    let r = dmatrix![1.0];
    let lqr = lqr_infinite(&sys, &q, &r).unwrap();
    let r2 = 2.0f64.sqrt();
    assert!((&lqr.p - dmatrix![r2, 1.0; 1.0, r2]).norm() < 1e-9);
    assert!((&lqr.gain - dmatrix![1.0, r2]).norm() < 1e-9);
    assert!((&lqr.p - settle_riccati(&sys, &q, &r)).norm() < 1e-6);
}

#[test]
fn care_residual_below_tolerance_for_tracking_weights() {
    let sys = DoubleIntegrator::new(2, 0.01).unwrap();
    let r = DMatrix::identity(2, 2) * 1e-2;
    for (var, corr) in [(0.15, 0.0), (0.02, 0.01), (1.0, 0.5), (1e-3, 0.0)] {
        let cov = dmatrix![var, corr * var; corr * var, var];
        let g = Gaussian::from_dense(dvector![0.3, -0.4], &cov).unwrap();
        let q = tracking_weight(&g);
        let lqr = lqr_infinite(&sys, &q, &r).unwrap();
        assert!(care_residual(&sys, &lqr.p, &q, &r).unwrap() < 1e-8);
        assert!((&lqr.p - settle_riccati(&sys, &q, &r)).norm() / lqr.p.norm() < 1e-5);
    }
}

#[test]
fn lqr_closed_loop_converges() {
    let sys = DoubleIntegrator::new(2, 0.01).unwrap();
    let g = Gaussian::isotropic(dvector![1.0, -2.0], 0.15).unwrap();
    let lqr = lqr_infinite(&sys, &tracking_weight(&g), &(DMatrix::identity(2, 2) * 1e-2)).unwrap();
    let target = sys.at_rest(g.mean());
    let traj = lqr.simulate(&sys, &dvector![-1.0, 0.5, 0.0, 0.0], &target, 2000);
    assert!((traj.last().unwrap() - &target).norm() < 1e-3);
}

#[test]
fn lqt_terminal_conditions_and_stationary_gains() {
    let sys = DoubleIntegrator::new(2, 0.01).unwrap();
    let r = DMatrix::identity(2, 2) * 1e-2;
    let g = Gaussian::from_dense(dvector![0.5, 0.25], &dmatrix![0.1, 0.02; 0.02, 0.05]).unwrap();
    let lqr = lqr_infinite(&sys, &tracking_weight(&g), &r).unwrap();
    for steps in [500, 800] {
        let reference = StepwiseReference::constant(g.clone(), steps).unwrap();
        let x0 = dvector![-0.5, 0.8, 0.0, 0.0];
        let sol = lqt_finite(&sys, &reference, &r, &x0).unwrap();
        assert_eq!(sol.p.len(), steps + 1);
        assert!(sol.p[steps].iter().all(|&v| v == 0.0));
        assert!(sol.d[steps].iter().all(|&v| v == 0.0));
        let mid = &sol.gains[steps / 2];
        assert!((mid - &lqr.gain).norm() / lqr.gain.norm() < 0.01);
        let target = sys.at_rest(g.mean());
        let near_end = &sol.states[steps * 4 / 5];
        assert!((near_end - &target).norm() < 1e-3);
    }
}

#[test]
fn lqt_follows_a_switching_reference() {
    let sys = DoubleIntegrator::new(1, 0.01).unwrap();
    let a = Gaussian::isotropic(dvector![0.0], 0.01).unwrap();
    let b = Gaussian::isotropic(dvector![1.0], 0.01).unwrap();
    let mut targets = vec![a; 300];
    targets.extend(vec![b; 700]);
    let states = (0..1000).map(|k| usize::from(k >= 300)).collect();
    let reference = StepwiseReference::new(targets, states).unwrap();
    let sol = lqt_finite(&sys, &reference, &dmatrix![1e-2], &DVector::zeros(2)).unwrap();
    assert!(sol.states[290][0].abs() < 1e-6);
    assert!((sol.states[800][0] - 1.0).abs() < 1e-3);
}
