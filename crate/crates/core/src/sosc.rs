//! Streaming orchestration: one `observe` call per datapoint wiring the
//! assignment, parameter updates, duration/transition bookkeeping and the
//! merge scan.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmath::Gaussian;
use crate::hsmm::{self, hsmm_costs, hsmm_loss, SemiMarkovChain, StreamCursor, TransitionCounts};
use crate::params::Hyperparams;
use crate::subspace::{argmin_assignment, Assignment, DurationStats, SubspaceCluster};

/// What happened during one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Observation count after this step.
    pub t: u64,
    /// Id of the cluster that received the point (after any merge).
    pub z: usize,
    pub created: bool,
    /// Number of clusters after the step.
    pub k: usize,
    /// Subspace dimension of the receiving cluster after its update.
    pub dim: usize,
    /// Run length of the current state.
    pub s: u64,
    /// Sequence loss before the update, evaluated with the chosen cluster
    /// (or the cheapest existing one when a cluster was created).
    pub loss_before: Option<f64>,
    pub loss_after: f64,
    /// `λK + λ₁d + dist²` before and after, for points joining an existing
    /// cluster.
    pub cluster_loss: Option<(f64, f64)>,
    /// The dimension rule was overridden to keep the loss from rising.
    pub dim_guarded: bool,
    /// `(absorbed id, survivor id)` when a merge fired.
    pub merged: Option<(usize, usize)>,
}

/// Per-cluster state the orchestration needs, whatever the cluster's
/// internal representation.
pub(crate) trait Components {
    type Obs;
    fn len(&self) -> usize;
    fn dist2_all(&self, obs: &Self::Obs, b_m: f64) -> Result<Vec<f64>>;
    fn dist2_one(&self, i: usize, obs: &Self::Obs, b_m: f64) -> Result<f64>;
    fn dim(&self, i: usize) -> usize;
    fn spawn(&mut self, obs: &Self::Obs, id: usize, weight: f64);
    /// Updates cluster `i` with the observation; true if the dimension
    /// rule was overridden.
    fn absorb(&mut self, i: usize, obs: &Self::Obs, hp: &Hyperparams) -> bool;
    fn id(&self, i: usize) -> usize;
    fn prior(&self, i: usize) -> f64;
    fn set_prior(&mut self, i: usize, p: f64);
    fn weight(&self, i: usize) -> f64;
    fn set_weight(&mut self, i: usize, w: f64);
    fn duration(&self, i: usize) -> &DurationStats;
    fn set_duration(&mut self, i: usize, d: DurationStats);
    fn mean_gap(&self, i: usize, j: usize) -> f64;
    /// Keeps the geometry of `survivor`, blends the means by weight and
    /// removes `absorbed` from the list.
    fn merge_geometry(&mut self, survivor: usize, absorbed: usize);
}

/// Transition counts, cursor and id allocator shared by every model flavour.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Book {
    pub counts: TransitionCounts,
    pub cursor: StreamCursor,
    pub next_id: usize,
}

impl Book {
    fn index_of<C: Components>(&self, comps: &C, id: usize) -> Option<usize> {
        (0..comps.len()).find(|&i| comps.id(i) == id)
    }

    /// Probability of the jump `from → to` as used by the loss: the count
    /// ratio when positive, otherwise the unseen-transition pseudo-count.
    fn jump_prob(&self, from: Option<usize>, to: usize) -> Option<f64> {
        let from = from.filter(|&f| f != to)?;
        let pseudo = 1.0 / (self.counts.row_total(from) as f64 + 1.0);
        Some(self.counts.prob(from, to).filter(|&a| a > 0.0).unwrap_or(pseudo))
    }

    pub fn step<C: Components>(&mut self, comps: &mut C, obs: &C::Obs, hp: &Hyperparams) -> Result<StepReport> {
        let k = comps.len();
        let current = self.cursor.z.and_then(|id| self.index_of(comps, id));
        let dist2 = comps.dist2_all(obs, hp.b_m)?;
        if dist2.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("subspace distance"));
        }
        let costs = hsmm_costs(&dist2, &self.counts, current, hp);
        let choice = argmin_assignment(&costs);
        let t = self.cursor.t;

        let seq_loss = |book: &Book, comps: &C, kk: usize, i: usize, d2: f64| {
            hsmm_loss(hp, kk, comps.dim(i), d2, book.jump_prob(current, i), book.counts.distinct_out(i))
        };

        let (idx, created, loss_before, cluster_before, dim_guarded) = match choice {
            Assignment::New => {
                let before = (k > 0).then(|| {
                    let j = (1..k).fold(0, |best, i| if costs[i] < costs[best] { i } else { best });
                    seq_loss(self, comps, k, j, dist2[j])
                });
                for i in 0..k {
                    comps.set_weight(i, crate::subspace::next_weight(comps.weight(i), false, hp.weight_mode));
                }
                let id = self.next_id;
                self.next_id += 1;
                comps.spawn(obs, id, hp.weight_mode.initial());
                self.counts.push_state();
                (k, true, before, None, false)
            }
            Assignment::Existing(i) => {
                let before = seq_loss(self, comps, k, i, dist2[i]);
                let cluster_before = hp.lambda * k as f64 + hp.lambda1 * comps.dim(i) as f64 + dist2[i];
                let guarded = comps.absorb(i, obs, hp);
                for j in 0..k {
                    let w = crate::subspace::next_weight(comps.weight(j), j == i, hp.weight_mode);
                    comps.set_weight(j, w);
                }
                (i, false, Some(before), Some(cluster_before), guarded)
            }
        };

        let kk = comps.len();
        let tf = t as f64;
        for i in 0..kk {
            let bump = if i == idx { 1.0 } else { 0.0 };
            comps.set_prior(i, (tf * comps.prior(i) + bump) / (tf + 1.0));
        }

        match current {
            Some(prev) if prev != idx => {
                self.counts.record(prev, idx)?;
                let mut dur = comps.duration(prev).clone();
                dur.record(self.cursor.s as f64);
                comps.set_duration(prev, dur);
                self.cursor.s = 1;
            }
            Some(_) => self.cursor.s += 1,
            None => self.cursor.s = 1,
        }
        self.cursor.z = Some(comps.id(idx));
        self.cursor.t += 1;

        let post_dist2 = comps.dist2_one(idx, obs, hp.b_m)?;
        let loss_after = seq_loss(self, comps, kk, idx, post_dist2);
        let cluster_loss =
            cluster_before.map(|pre| (pre, hp.lambda * kk as f64 + hp.lambda1 * comps.dim(idx) as f64 + post_dist2));
        let dim = comps.dim(idx);

        let mut merged = None;
        for other in 0..kk {
            if other != idx && comps.mean_gap(idx, other) < hp.lambda {
                merged = Some(self.merge(comps, idx, other)?);
                break;
            }
        }

        Ok(StepReport {
            t: self.cursor.t,
            z: self.cursor.z.expect("cursor holds the assigned cluster"),
            created,
            k: comps.len(),
            dim,
            s: self.cursor.s,
            loss_before,
            loss_after,
            cluster_loss,
            dim_guarded,
            merged,
        })
    }

    /// Merges clusters at indices `i` and `j`; returns `(absorbed id,
    /// survivor id)`.
    pub fn merge<C: Components>(&mut self, comps: &mut C, i: usize, j: usize) -> Result<(usize, usize)> {
        let k = comps.len();
        if i >= k || j >= k {
            return Err(Error::InvalidIndex(format!("merge {i} and {j} with {k} clusters")));
        }
        if i == j {
            return Err(Error::SelfMerge(comps.id(i)));
        }
        let (wi, wj) = (comps.weight(i), comps.weight(j));
        let i_dominates = wi > wj || (wi == wj && comps.id(i) < comps.id(j));
        let (dom, sub) = if i_dominates { (i, j) } else { (j, i) };
        let (dom_id, sub_id) = (comps.id(dom), comps.id(sub));
        let prior = comps.prior(dom) + comps.prior(sub);
        let weight = comps.weight(dom) + comps.weight(sub);
        let duration = DurationStats::pooled(comps.duration(dom), comps.duration(sub));

        self.counts.merge(dom, sub)?;
        comps.merge_geometry(dom, sub);
        let survivor = if sub < dom { dom - 1 } else { dom };
        comps.set_prior(survivor, prior);
        comps.set_weight(survivor, weight);
        comps.set_duration(survivor, duration);
        if self.cursor.z == Some(sub_id) {
            self.cursor.z = Some(dom_id);
        }
        Ok((sub_id, dom_id))
    }

    /// Closes the current run, recording its dwell time.
    pub fn end_sequence<C: Components>(&mut self, comps: &mut C) {
        if let Some(idx) = self.cursor.z.and_then(|id| self.index_of(comps, id)) {
            let mut dur = comps.duration(idx).clone();
            dur.record(self.cursor.s as f64);
            comps.set_duration(idx, dur);
        }
        self.cursor.z = None;
        self.cursor.s = 0;
    }

    pub fn chain<C: Components>(&self, comps: &C) -> SemiMarkovChain {
        let k = comps.len();
        SemiMarkovChain {
            priors: (0..k).map(|i| comps.prior(i)).collect(),
            trans: self.counts.probabilities(),
            dur_mu: (0..k).map(|i| comps.duration(i).mu).collect(),
            dur_var: (0..k).map(|i| comps.duration(i).sigma).collect(),
        }
    }
}

/// Blends `absorbed` into `survivor`: the survivor keeps its basis,
/// dimension and distance ledger; the mean is weight-averaged.
pub(crate) fn blend_means(survivor: &mut SubspaceCluster, absorbed: &SubspaceCluster, ws: f64, wa: f64) {
    let total = ws + wa;
    if total > 0.0 {
        survivor.mean = (&survivor.mean * ws + &absorbed.mean * wa) / total;
    }
}

impl Components for Vec<SubspaceCluster> {
    type Obs = DVector<f64>;

    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn dist2_all(&self, xi: &DVector<f64>, b_m: f64) -> Result<Vec<f64>> {
        Ok(self.iter().map(|c| c.dist2(xi, b_m)).collect())
    }

    fn dist2_one(&self, i: usize, xi: &DVector<f64>, b_m: f64) -> Result<f64> {
        Ok(self[i].dist2(xi, b_m))
    }

    fn dim(&self, i: usize) -> usize {
        self[i].dim
    }

    fn spawn(&mut self, xi: &DVector<f64>, id: usize, weight: f64) {
        self.push(SubspaceCluster::seed(id, xi, weight));
    }

    fn absorb(&mut self, i: usize, xi: &DVector<f64>, hp: &Hyperparams) -> bool {
        self[i].absorb(xi, hp.lambda1, hp.sigma2, hp.b_m).dim.guarded
    }

    fn id(&self, i: usize) -> usize {
        self[i].id
    }

    fn prior(&self, i: usize) -> f64 {
        self[i].prior
    }

    fn set_prior(&mut self, i: usize, p: f64) {
        self[i].prior = p;
    }

    fn weight(&self, i: usize) -> f64 {
        self[i].weight
    }

    fn set_weight(&mut self, i: usize, w: f64) {
        self[i].weight = w;
    }

    fn duration(&self, i: usize) -> &DurationStats {
        &self[i].duration
    }

    fn set_duration(&mut self, i: usize, d: DurationStats) {
        self[i].duration = d;
    }

    fn mean_gap(&self, i: usize, j: usize) -> f64 {
        (&self[i].mean - &self[j].mean).norm()
    }

    fn merge_geometry(&mut self, survivor: usize, absorbed: usize) {
        let gone = self[absorbed].clone();
        let (ws, wa) = (self[survivor].weight, gone.weight);
        blend_means(&mut self[survivor], &gone, ws, wa);
        self.remove(absorbed);
    }
}

/// Online subspace clustering model with explicit-duration sequencing.
#[derive(Clone, Debug, PartialEq)]
pub struct SoscModel {
    dim: usize,
    hp: Hyperparams,
    clusters: Vec<SubspaceCluster>,
    book: Book,
}

impl SoscModel {
    pub fn new(dim: usize, hp: Hyperparams) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter("data dimension must be at least 2".into()));
        }
        hp.validate()?;
        Ok(SoscModel { dim, hp, clusters: Vec::new(), book: Book::default() })
    }

    /// Reassembles a model from stored parts, checking consistency.
    pub fn from_parts(
        dim: usize,
        hp: Hyperparams,
        clusters: Vec<SubspaceCluster>,
        counts: TransitionCounts,
        cursor: StreamCursor,
        next_id: usize,
    ) -> Result<Self> {
        let mut model = SoscModel::new(dim, hp)?;
        if counts.len() != clusters.len() {
            return Err(Error::DimensionMismatch { expected: clusters.len(), got: counts.len() });
        }
        for (i, c) in clusters.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.mean.len() });
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

    /// Feeds one datapoint through assignment, update and merge.
    pub fn observe(&mut self, xi: &DVector<f64>) -> Result<StepReport> {
        check_point(xi, self.dim)?;
        self.book.step(&mut self.clusters, xi, &self.hp)
    }

    /// Ends the current sequence: the running dwell is recorded and the next
    /// point starts without a predecessor state.
    pub fn end_sequence(&mut self) {
        self.book.end_sequence(&mut self.clusters);
    }

    /// Merges clusters at positions `i` and `j`; see [`StepReport::merged`].
    pub fn merge_clusters(&mut self, i: usize, j: usize) -> Result<(usize, usize)> {
        self.book.merge(&mut self.clusters, i, j)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn clusters(&self) -> &[SubspaceCluster] {
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

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.id == id)
    }

    pub fn priors(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.prior).collect()
    }

    /// Emission Gaussians in cluster order.
    pub fn gaussians(&self) -> Result<Vec<Gaussian>> {
        self.clusters.iter().map(|c| c.gaussian(self.hp.sigma2)).collect()
    }

    pub fn chain(&self) -> SemiMarkovChain {
        self.book.chain(&self.clusters)
    }

    /// Forward variable given an observed prefix (possibly empty).
    pub fn forward(&self, observed: &[DVector<f64>], horizon: usize) -> Result<DMatrix<f64>> {
        let gs = self.gaussians()?;
        forward_with(&self.chain(), &gs, observed, horizon, self.hp.s_max)
    }

    /// Index of the nearest subspace, ignoring sequence information.
    pub fn nearest(&self, xi: &DVector<f64>) -> Result<usize> {
        check_point(xi, self.dim)?;
        nearest_of(self.clusters.iter().map(|c| c.dist2(xi, self.hp.b_m)))
    }
}

pub(crate) fn nearest_of(dists: impl Iterator<Item = f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in dists.enumerate() {
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("model has no clusters"))
}

/// Forward variable with Gaussian evidence on the observed prefix.
pub fn forward_with(
    chain: &SemiMarkovChain,
    emissions: &[Gaussian],
    observed: &[DVector<f64>],
    horizon: usize,
    s_max: usize,
) -> Result<DMatrix<f64>> {
    if emissions.len() != chain.len() {
        return Err(Error::DimensionMismatch { expected: chain.len(), got: emissions.len() });
    }
    let loglik: Vec<Vec<f64>> = observed
        .iter()
        .map(|x| {
            emissions
                .iter()
                .map(|g| {
                    if x.len() == g.dim() {
                        Ok(g.log_pdf(x))
                    } else {
                        Err(Error::DimensionMismatch { expected: g.dim(), got: x.len() })
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    hsmm::forward(chain, &loglik, horizon, s_max)
}

pub(crate) fn check_point(xi: &DVector<f64>, dim: usize) -> Result<()> {
    if xi.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: xi.len() });
    }
    if !xi.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("observation"));
    }
    Ok(())
}
