use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sosc_core::subspace::update_weights;
use sosc_core::{SubspaceCluster, WeightMode};

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Points from a rank-`r` affine subspace with distinct spreads per axis.
fn subspace_stream(seed: u64, d: usize, r: usize, n: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::<f64>::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
    let q = raw.qr().q();
    let center = gaussian_vec(&mut rng, d);
    let scales: Vec<f64> = (0..r).map(|k| 1.5 / (k as f64 + 1.0) + rng.random::<f64>() * 0.2).collect();
    (0..n)
        .map(|_| {
            let z = DVector::from_iterator(
                r,
                scales.iter().map(|s| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    s * n
                }),
            );
            &center + &q * z
        })
        .collect()
}

struct Replay {
    checked: usize,
    truncated: usize,
    worst: f64,
}

/// Streams `points` into one cluster, comparing `U·diag(λ)·Uᵀ` with the dense
/// recursion `C ← w/(w+1)·C + w/(w+1)²·(ξ−μ')(ξ−μ')ᵀ` after every step that
/// keeps all basis columns.
fn replay(points: &[DVector<f64>], lambda1: f64, sigma2: f64) -> Replay {
    let d = points[0].len();
    let mode = WeightMode::Linear;
    let mut cluster = vec![SubspaceCluster::seed(0, &points[0], mode.initial())];
    let mut dense = DMatrix::<f64>::zeros(d, d);
    let mut out = Replay { checked: 0, truncated: 0, worst: 0.0 };
    for xi in &points[1..] {
        let c = &mut cluster[0];
        let w = c.weight();
        let previous_dim = c.dim();
        let old_mean = c.update_mean(xi);
        let basis = c.update_basis(xi, &old_mean, sigma2);
        let ncols = c.basis().ncols();
        let dim = c.update_dim(xi, lambda1, 50.0, previous_dim, None);

        let dev = xi - c.mean();
        dense = &dense * (w / (w + 1.0)) + &dev * dev.transpose() * (w / ((w + 1.0) * (w + 1.0)));

        let u = c.basis();
        let factored = &u * DMatrix::from_diagonal(&c.eig_diag()) * u.transpose();
        if basis.dropped > 0 || dim.dim < ncols {
            out.truncated += 1;
            dense = factored;
        } else {
            out.checked += 1;
            out.worst = out.worst.max((&factored - &dense).norm());
        }
        update_weights(&mut cluster, Some(0), mode);
    }
    out
}

#[test]
fn factored_covariance_tracks_dense_recursion() {
    for d in 3..=8 {
        for seed in 0..4 {
            let points = subspace_stream(seed * 31 + d as u64, d, d - 2, 200);
            let r = replay(&points, 0.0, 1e-6);
            assert!(r.worst < 1e-8, "D={d} seed={seed}: worst {:e}", r.worst);
            assert!(r.checked >= 190, "D={d} seed={seed}: only {} steps checked", r.checked);
        }
    }
}

#[test]
fn full_rank_stream_matches_between_truncations() {
    for d in 2..=6 {
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let points: Vec<_> = (0..200).map(|_| gaussian_vec(&mut rng, d)).collect();
        let r = replay(&points, 0.0, 1e-6);
        assert!(r.worst < 1e-8, "D={d}: worst {:e}", r.worst);
        assert!(r.checked > 0);
    }
}

#[test]
fn mean_is_arithmetic_under_linear_weights() {
    let points = subspace_stream(5, 5, 3, 200);
    let mode = WeightMode::Linear;
    let mut cluster = vec![SubspaceCluster::seed(0, &points[0], mode.initial())];
    let mut sum = points[0].clone();
    for (n, xi) in points[1..].iter().enumerate() {
        cluster[0].absorb(xi, 0.35, 0.15, 50.0);
        update_weights(&mut cluster, Some(0), mode);
        sum += xi;
        let avg = &sum / (n as f64 + 2.0);
        assert!((cluster[0].mean() - avg).norm() < 1e-10);
    }
}
