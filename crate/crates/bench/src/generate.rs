use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

const MAX_PLACEMENT_DRAWS: usize = 10_000;
const MAX_PLACEMENT_RESTARTS: usize = 50;
const CENTER_RANGE: f64 = 5.0;

/// One ground-truth cluster: an affine subspace through `center` spanned by
/// the first `dim` columns of the orthonormal `frame`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: Vec<f64>,
    /// Orthonormal `D×D` matrix, row-major.
    pub frame: Vec<f64>,
    pub dim: usize,
}

impl ClusterSpec {
    pub fn center(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.center)
    }

    /// The `D×dim` basis currently in use.
    pub fn basis(&self) -> DMatrix<f64> {
        let d = self.center.len();
        DMatrix::from_row_slice(d, d, &self.frame).columns(0, self.dim).into_owned()
    }
}

/// Change applied to the mixture at a given instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mutation {
    /// Every active cluster of dimension `d` becomes `D − d` dimensional.
    FlipDims,
    /// Activates the next `count` clusters.
    AddClusters { count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    /// Index of the first point generated after the mutation.
    pub at: usize,
    pub mutation: Mutation,
}

/// Everything needed to reproduce a stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub dim: usize,
    /// All clusters, including those activated by later stages.
    pub clusters: Vec<ClusterSpec>,
    /// Clusters active from the first point.
    pub initial_k: usize,
    pub length: usize,
    /// Inclusive dwell interval.
    pub dwell: (usize, usize),
    /// Variance of the isotropic white noise.
    pub noise: f64,
    pub stages: Vec<Stage>,
    pub seed: u64,
}

/// Points with their ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStream {
    pub points: Vec<DVector<f64>>,
    pub labels: Vec<usize>,
    pub stages: Vec<usize>,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn random_frame(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let m = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let q = m.qr().q();
    q.transpose().as_slice().to_vec()
}

/// Sequential rejection sampling; fails when one center cannot be placed
/// within the draw budget.
fn place_centers(rng: &mut ChaCha8Rng, dim: usize, total: usize, min_distance: f64) -> Result<Vec<DVector<f64>>> {
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(total);
    for index in 0..total {
        let placed = (0..MAX_PLACEMENT_DRAWS).find_map(|_| {
            let c = DVector::from_fn(dim, |_, _| rng.random_range(-CENTER_RANGE..=CENTER_RANGE));
            centers.iter().all(|o| (o - &c).norm() >= min_distance).then_some(c)
        });
        centers.push(placed.ok_or(BenchError::Separation { index, min_distance, attempts: MAX_PLACEMENT_DRAWS })?);
    }
    Ok(centers)
}

impl GeneratorSpec {
    /// Draws centers in `[−5, 5]^D` at least `4·√D` apart, random
    /// orthonormal frames and subspace dimensions in `1..D`. A placement
    /// that gets stuck starts over, up to a fixed number of times.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        dim: usize,
        initial_k: usize,
        length: usize,
        dwell: (usize, usize),
        noise: f64,
        stages: Vec<Stage>,
        seed: u64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(BenchError::InvalidSpec("dimension must be at least 2".into()));
        }
        let added: usize = stages
            .iter()
            .map(|s| match s.mutation {
                Mutation::AddClusters { count } => count,
                Mutation::FlipDims => 0,
            })
            .sum();
        let total = initial_k + added;
        let min_distance = 4.0 * (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centers = place_centers(&mut rng, dim, total, min_distance);
        for _ in 1..MAX_PLACEMENT_RESTARTS {
            if centers.is_ok() {
                break;
            }
            centers = place_centers(&mut rng, dim, total, min_distance);
        }
        let clusters = centers?
            .into_iter()
            .map(|center| {
                let sub_dim = rng.random_range(1..dim);
                ClusterSpec { center: center.as_slice().to_vec(), frame: random_frame(&mut rng, dim), dim: sub_dim }
            })
            .collect();
        let spec = GeneratorSpec { dim, clusters, initial_k, length, dwell, noise, stages, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Three-stage stream in three dimensions: four clusters, then flipped
    /// subspace dimensions from point 2500, then two extra clusters from
    /// point 5000.
    pub fn nonstationary(seed: u64) -> Result<Self> {
        let stages = vec![
            Stage { at: 2500, mutation: Mutation::FlipDims },
            Stage { at: 5000, mutation: Mutation::AddClusters { count: 2 } },
        ];
        GeneratorSpec::random(3, 4, 7500, (70, 90), 0.04, stages, seed)
    }

    /// Four fixed clusters in `dim` dimensions.
    pub fn stationary(dim: usize, length: usize, seed: u64) -> Result<Self> {
        GeneratorSpec::random(dim, 4, length, (70, 90), 0.04, Vec::new(), seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::InvalidSpec(m));
        let d = self.dim;
        if d < 2 {
            return bad("dimension must be at least 2".into());
        }
        if self.initial_k == 0 || self.initial_k > self.clusters.len() {
            return bad(format!("initial_k {} outside 1..={}", self.initial_k, self.clusters.len()));
        }
        if self.dwell.0 == 0 || self.dwell.0 > self.dwell.1 {
            return bad(format!("dwell interval {:?} is empty or starts at 0", self.dwell));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise variance must be finite and nonnegative".into());
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if c.center.len() != d || c.frame.len() != d * d {
                return bad(format!("cluster {i} has the wrong shape"));
            }
            if c.dim >= d {
                return bad(format!("cluster {i} has dimension {} >= {d}", c.dim));
            }
            let f = DMatrix::from_row_slice(d, d, &c.frame);
            if (f.transpose() * &f - DMatrix::identity(d, d)).norm() > 1e-9 {
                return bad(format!("cluster {i} frame is not orthonormal"));
            }
        }
        let mut active = self.initial_k;
        let mut last = 0;
        for s in &self.stages {
            if s.at < last {
                return bad("stages must be sorted by instant".into());
            }
            last = s.at;
            if let Mutation::AddClusters { count } = s.mutation {
                active += count;
            }
        }
        if active > self.clusters.len() {
            return bad(format!("stages activate {active} clusters but only {} are defined", self.clusters.len()));
        }
        Ok(())
    }

    /// Cluster specs as they stand after every stage has been applied.
    pub fn final_clusters(&self) -> Vec<ClusterSpec> {
        let mut clusters = self.clusters.clone();
        let mut active = self.initial_k;
        for s in &self.stages {
            apply(s.mutation, &mut clusters, &mut active, self.dim);
        }
        clusters.truncate(active);
        clusters
    }
}

fn apply(m: Mutation, clusters: &mut [ClusterSpec], active: &mut usize, d: usize) {
    match m {
        Mutation::FlipDims => clusters[..*active].iter_mut().for_each(|c| c.dim = d - c.dim),
        Mutation::AddClusters { count } => *active += count,
    }
}

/// Samples the stream: clusters are visited cyclically, each for a dwell
/// drawn uniformly from the interval; a point is `center + U·z + e` with
/// `z ~ N(0, I_d)` and `e ~ N(0, noise·I)`.
pub fn generate(spec: &GeneratorSpec) -> Result<LabeledStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let sd = spec.noise.sqrt();
    let mut clusters = spec.clusters.clone();
    let mut bases: Vec<DMatrix<f64>> = clusters.iter().map(ClusterSpec::basis).collect();
    let centers: Vec<DVector<f64>> = clusters.iter().map(ClusterSpec::center).collect();
    let mut active = spec.initial_k;
    let mut next_stage = 0;

    let mut out = LabeledStream {
        points: Vec::with_capacity(spec.length),
        labels: Vec::with_capacity(spec.length),
        stages: Vec::with_capacity(spec.length),
    };
    let mut current = 0;
    let mut remaining = rng.random_range(spec.dwell.0..=spec.dwell.1);
    for t in 0..spec.length {
        while next_stage < spec.stages.len() && spec.stages[next_stage].at <= t {
            apply(spec.stages[next_stage].mutation, &mut clusters, &mut active, spec.dim);
            bases = clusters.iter().map(ClusterSpec::basis).collect();
            next_stage += 1;
        }
        if remaining == 0 {
            current = (current + 1) % active;
            remaining = rng.random_range(spec.dwell.0..=spec.dwell.1);
        }
        let u = &bases[current];
        let z = normal_vec(&mut rng, u.ncols());
        let e = normal_vec(&mut rng, spec.dim) * sd;
        out.points.push(&centers[current] + u * z + e);
        out.labels.push(current);
        out.stages.push(next_stage);
        remaining -= 1;
    }
    Ok(out)
}
