//! Task-parameterized variant: every cluster keeps one local Gaussian per
//! frame of reference, and the frames are fused by products of transformed
//! Gaussians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmath::{product, transform, Frame, Gaussian};
use crate::hsmm::{SemiMarkovChain, StreamCursor, TransitionCounts};
use crate::params::Hyperparams;
use crate::sosc::{blend_means, check_point, forward_with, nearest_of, Book, Components, StepReport};
use crate::subspace::{DurationStats, SubspaceCluster};

/// A cluster seen from `P` frames; sequencing statistics are shared.
#[derive(Clone, Debug, PartialEq)]
pub struct TpCluster {
    pub(crate) id: usize,
    pub(crate) prior: f64,
    pub(crate) weight: f64,
    pub(crate) duration: DurationStats,
    pub(crate) locals: Vec<SubspaceCluster>,
}

impl TpCluster {
    /// Assembles a cluster from per-frame local states. The locals' own
    /// prior, weight and duration fields are overwritten by the shared ones.
    pub fn from_parts(
        id: usize,
        prior: f64,
        weight: f64,
        duration: DurationStats,
        mut locals: Vec<SubspaceCluster>,
    ) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::Empty("frame-local clusters"));
        }
        for l in &mut locals {
            l.id = id;
            l.prior = prior;
            l.weight = weight;
            l.duration = duration.clone();
        }
        Ok(TpCluster { id, prior, weight, duration, locals })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn duration(&self) -> &DurationStats {
        &self.duration
    }

    /// Frame-local states, one per frame.
    pub fn locals(&self) -> &[SubspaceCluster] {
        &self.locals
    }

    /// Smallest local subspace dimension.
    pub fn dim(&self) -> usize {
        self.locals.iter().map(|l| l.dim).min().unwrap_or(0)
    }

    /// Product of the local Gaussians mapped through `frames`.
    pub fn combine(&self, frames: &[Frame], sigma2: f64) -> Result<Combined> {
        if frames.len() != self.locals.len() {
            return Err(Error::FrameCount { expected: self.locals.len(), got: frames.len() });
        }
        let parts = self
            .locals
            .iter()
            .zip(frames)
            .map(|(l, f)| transform(&l.gaussian(sigma2)?, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Combined { gaussian: product(&parts)?, dim: self.dim() })
    }
}

/// Fused Gaussian of one cluster together with its reported subspace size.
#[derive(Clone, Debug, PartialEq)]
pub struct Combined {
    pub gaussian: Gaussian,
    /// Minimum of the frame-local dimensions; the covariance is not truncated.
    pub dim: usize,
}

impl Combined {
    /// Subspace distance using the leading `dim` directions of the product.
    pub fn dist2(&self, xi: &DVector<f64>, b_m: f64) -> f64 {
        let g = &self.gaussian;
        let cols = self.dim.min(g.rank());
        let v = xi - g.mean();
        let norm2 = v.norm_squared();
        if cols == 0 {
            return norm2;
        }
        let rho = (-norm2 / b_m).exp();
        let proj = g.basis().columns(0, cols).transpose() * &v;
        (norm2 - (2.0 * rho - rho * rho) * proj.norm_squared()).max(0.0)
    }
}

/// One observation with the frames active when it was recorded.
#[derive(Clone, Debug)]
pub(crate) struct FramedPoint {
    xi: DVector<f64>,
    locals: Vec<DVector<f64>>,
    frames: Vec<Frame>,
    sigma2: f64,
}

impl Components for Vec<TpCluster> {
    type Obs = FramedPoint;

    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn dist2_all(&self, obs: &FramedPoint, b_m: f64) -> Result<Vec<f64>> {
        self.iter().map(|c| Ok(c.combine(&obs.frames, obs.sigma2)?.dist2(&obs.xi, b_m))).collect()
    }

    fn dist2_one(&self, i: usize, obs: &FramedPoint, b_m: f64) -> Result<f64> {
        Ok(self[i].combine(&obs.frames, obs.sigma2)?.dist2(&obs.xi, b_m))
    }

    fn dim(&self, i: usize) -> usize {
        self[i].dim()
    }

    fn spawn(&mut self, obs: &FramedPoint, id: usize, weight: f64) {
        let locals = obs.locals.iter().map(|x| SubspaceCluster::seed(id, x, weight)).collect();
        self.push(TpCluster { id, prior: 0.0, weight, duration: DurationStats::new(), locals });
    }

    fn absorb(&mut self, i: usize, obs: &FramedPoint, hp: &Hyperparams) -> bool {
        let c = &mut self[i];
        let mut guarded = false;
        for (local, x) in c.locals.iter_mut().zip(&obs.locals) {
            local.weight = c.weight;
            guarded |= local.absorb(x, hp.lambda1, hp.sigma2, hp.b_m).dim.guarded;
        }
        guarded
    }

    fn id(&self, i: usize) -> usize {
        self[i].id
    }

    fn prior(&self, i: usize) -> f64 {
        self[i].prior
    }

    fn set_prior(&mut self, i: usize, p: f64) {
        self[i].prior = p;
        self[i].locals.iter_mut().for_each(|l| l.prior = p);
    }

    fn weight(&self, i: usize) -> f64 {
        self[i].weight
    }

    fn set_weight(&mut self, i: usize, w: f64) {
        self[i].weight = w;
        self[i].locals.iter_mut().for_each(|l| l.weight = w);
    }

    fn duration(&self, i: usize) -> &DurationStats {
        &self[i].duration
    }

    fn set_duration(&mut self, i: usize, d: DurationStats) {
        self[i].locals.iter_mut().for_each(|l| l.duration = d.clone());
        self[i].duration = d;
    }

    /// Largest gap between local means over all frames.
    fn mean_gap(&self, i: usize, j: usize) -> f64 {
        self[i].locals.iter().zip(&self[j].locals).map(|(a, b)| (&a.mean - &b.mean).norm()).fold(0.0, f64::max)
    }

    fn merge_geometry(&mut self, survivor: usize, absorbed: usize) {
        let gone = self[absorbed].clone();
        let (ws, wa) = (self[survivor].weight, gone.weight);
        for (local, other) in self[survivor].locals.iter_mut().zip(&gone.locals) {
            blend_means(local, other, ws, wa);
        }
        self.remove(absorbed);
    }
}

/// Task-parameterized streaming model over `P` frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TpSoscModel {
    dim: usize,
    frames: usize,
    hp: Hyperparams,
    clusters: Vec<TpCluster>,
    book: Book,
}

impl TpSoscModel {
    pub fn new(dim: usize, frames: usize, hp: Hyperparams) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter("data dimension must be at least 2".into()));
        }
        if frames == 0 {
            return Err(Error::InvalidParameter("at least one frame is required".into()));
        }
        hp.validate()?;
        Ok(TpSoscModel { dim, frames, hp, clusters: Vec::new(), book: Book::default() })
    }

    pub fn from_parts(
        dim: usize,
        frames: usize,
        hp: Hyperparams,
        clusters: Vec<TpCluster>,
        counts: TransitionCounts,
        cursor: StreamCursor,
        next_id: usize,
    ) -> Result<Self> {
        let mut model = TpSoscModel::new(dim, frames, hp)?;
        if counts.len() != clusters.len() {
            return Err(Error::DimensionMismatch { expected: clusters.len(), got: counts.len() });
        }
        for (i, c) in clusters.iter().enumerate() {
            if c.locals.len() != frames {
                return Err(Error::FrameCount { expected: frames, got: c.locals.len() });
            }
            if let Some(bad) = c.locals.iter().find(|l| l.mean.len() != dim) {
                return Err(Error::DimensionMismatch { expected: dim, got: bad.mean.len() });
            }
            if c.id >= next_id || clusters[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::Schema(format!("cluster id {} is duplicated or not below next_id", c.id)));
            }
        }
        if let Some(z) = cursor.z {
            if !clusters.iter().any(|c| c.id == z) {
                return Err(Error::Schema(format!("cursor refers to unknown cluster {z}")));
            }
        }
        model.clusters = clusters;
        model.book = Book { counts, cursor, next_id };
        Ok(model)
    }

    /// Feeds one global datapoint recorded under `frames`.
    pub fn observe(&mut self, xi: &DVector<f64>, frames: &[Frame]) -> Result<StepReport> {
        check_point(xi, self.dim)?;
        self.check_frames(frames)?;
        let locals = frames.iter().map(|f| f.to_local(xi)).collect();
        let obs = FramedPoint { xi: xi.clone(), locals, frames: frames.to_vec(), sigma2: self.hp.sigma2 };
        self.book.step(&mut self.clusters, &obs, &self.hp)
    }

    pub fn end_sequence(&mut self) {
        self.book.end_sequence(&mut self.clusters);
    }

    pub fn merge_clusters(&mut self, i: usize, j: usize) -> Result<(usize, usize)> {
        self.book.merge(&mut self.clusters, i, j)
    }

    /// Per-cluster Gaussians adapted to a new set of frames.
    pub fn combine(&self, frames: &[Frame]) -> Result<Vec<Combined>> {
        self.check_frames(frames)?;
        self.clusters.iter().map(|c| c.combine(frames, self.hp.sigma2)).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn clusters(&self) -> &[TpCluster] {
        &self.clusters
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn counts(&self) -> &TransitionCounts {
        &self.book.counts
    }

    pub fn cursor(&self) -> &StreamCursor {
        &self.book.cursor
    }

    pub fn next_id(&self) -> usize {
        self.book.next_id
    }

    pub fn priors(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.prior).collect()
    }

    pub fn chain(&self) -> SemiMarkovChain {
        self.book.chain(&self.clusters)
    }

    /// Forward variable under `frames` given an observed prefix.
    pub fn forward(&self, frames: &[Frame], observed: &[DVector<f64>], horizon: usize) -> Result<DMatrix<f64>> {
        let gs: Vec<Gaussian> = self.combine(frames)?.into_iter().map(|c| c.gaussian).collect();
        forward_with(&self.chain(), &gs, observed, horizon, self.hp.s_max)
    }

    /// Index of the nearest fused subspace under `frames`.
    pub fn nearest(&self, xi: &DVector<f64>, frames: &[Frame]) -> Result<usize> {
        check_point(xi, self.dim)?;
        let combined = self.combine(frames)?;
        nearest_of(combined.iter().map(|c| c.dist2(xi, self.hp.b_m)))
    }

    fn check_frames(&self, frames: &[Frame]) -> Result<()> {
        if frames.len() != self.frames {
            return Err(Error::FrameCount { expected: self.frames, got: frames.len() });
        }
        if let Some(f) = frames.iter().find(|f| f.dim() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, got: f.dim() });
        }
        Ok(())
    }
}
