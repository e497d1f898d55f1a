//! Planar point-mass reaching task standing in for teleoperation data.
//!
//! Demonstrations follow a bowed minimum-jerk path from a jittered start to
//! a fixed goal, then hold the goal. The learning space duplicates the
//! position, `ξ = [x; x]`, so regression can map an operator position (first
//! block) to a desired position (second block).

use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sosc_core::{Hyperparams, WeightMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachingTask {
    pub start: [f64; 2],
    pub goal: [f64; 2],
    /// Peak sideways offset of the path.
    pub bow: f64,
    pub motion_steps: usize,
    pub hold_steps: usize,
    /// Standard deviation of the start jitter between trajectories.
    pub start_jitter: f64,
    /// Half-width of the uniform jitter on `bow`.
    pub bow_jitter: f64,
}

impl Default for ReachingTask {
    fn default() -> Self {
        ReachingTask {
            start: [0.0, 0.0],
            goal: [1.0, 0.6],
            bow: 0.25,
            motion_steps: 150,
            hold_steps: 40,
            start_jitter: 0.03,
            bow_jitter: 0.05,
        }
    }
}

fn min_jerk(tau: f64) -> f64 {
    tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

impl ReachingTask {
    pub fn goal(&self) -> DVector<f64> {
        dvector![self.goal[0], self.goal[1]]
    }

    /// Positions along one bowed minimum-jerk reach followed by the hold.
    pub fn path(&self, start: &DVector<f64>, bow: f64) -> Vec<DVector<f64>> {
        let goal = self.goal();
        let span = &goal - start;
        let normal = dvector![-span[1], span[0]] / span.norm().max(f64::EPSILON);
        let last = (self.motion_steps.max(2) - 1) as f64;
        let mut out: Vec<DVector<f64>> = (0..self.motion_steps)
            .map(|k| {
                let m = min_jerk(k as f64 / last);
                start + &span * m + &normal * (bow * (std::f64::consts::PI * m).sin())
            })
            .collect();
        out.extend(std::iter::repeat_n(goal, self.hold_steps));
        out
    }

    fn jittered(&self, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let jitter = Normal::new(0.0, self.start_jitter).expect("jitter is a valid deviation");
        let start = dvector![self.start[0] + jitter.sample(rng), self.start[1] + jitter.sample(rng)];
        let bow = self.bow + rng.random_range(-self.bow_jitter..=self.bow_jitter);
        self.path(&start, bow)
    }

    /// `count` noise-free demonstrations.
    pub fn demonstrations(&self, count: usize, seed: u64) -> Vec<Vec<DVector<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.jittered(&mut rng)).collect()
    }

    /// A fresh reach with i.i.d. Gaussian perturbations of deviation
    /// `noise_sd` on every coordinate of every step.
    pub fn operator(&self, noise_sd: f64, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let clean = self.jittered(&mut rng);
        let noise = Normal::new(0.0, noise_sd).expect("operator noise is a valid deviation");
        clean.into_iter().map(|x| x.map(|v| v + noise.sample(&mut rng))).collect()
    }
}

/// `[x; x]`.
pub fn joint(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| x[i % n])
}

/// Hyperparameters sized to the task: clusters a few centimetres wide, a
/// distance weighting that fades beyond that scale and a noise floor well
/// under the operator uncertainty.
pub fn reaching_hyperparams() -> Hyperparams {
    Hyperparams {
        lambda: 0.08,
        lambda1: 0.01,
        lambda2: 0.005,
        lambda3: 0.005,
        sigma2: 1e-3,
        b_m: 0.05,
        weight_mode: WeightMode::Linear,
        kappa2: 0.01,
        s_max: 200,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_ends_at_goal_and_starts_at_start() {
        let task = ReachingTask::default();
        let p = task.path(&dvector![0.0, 0.0], 0.2);
        assert_eq!(p.len(), 190);
        assert!(p[0].norm() < 1e-15);
        assert!((&p[149] - task.goal()).norm() < 1e-12);
        assert_eq!(p[189], task.goal());
    }

    #[test]
    fn joint_duplicates() {
        assert_eq!(joint(&dvector![1.0, 2.0]), dvector![1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn operator_is_seeded() {
        let task = ReachingTask::default();
        assert_eq!(task.operator(0.05, 3), task.operator(0.05, 3));
        assert_ne!(task.operator(0.05, 3), task.operator(0.05, 4));
    }
}
