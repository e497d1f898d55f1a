//! Online subspace clusters: distance, assignment and the incremental
//! mean/basis/dimension updates.

use nalgebra::{DMatrix, DVector};

use crate::eigen::{orthonormality_drift, orthonormalize, sym_eigen};
use crate::error::{Error, Result};
use crate::gaussmath::Gaussian;
use crate::params::WeightMode;

/// Residual norms at or below this fraction of `‖ξ − μ‖` add no basis vector.
const RESIDUAL_TOL: f64 = 1e-9;
/// Basis columns whose eigenvalue falls below `σ²` times this are dropped.
const DROP_FRACTION: f64 = 1e-3;
const DRIFT_TOL: f64 = 1e-9;
/// Slack allowed when checking that an update does not raise the loss.
pub const LOSS_SLACK: f64 = 1e-12;

/// Dwell-time statistics of one state, kept with Welford's recurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct DurationStats {
    pub mu: f64,
    pub sigma: f64,
    pub e: f64,
    pub n: u64,
}

impl DurationStats {
    /// Variance used until two dwells are seen or when the estimate collapses.
    pub const VARIANCE_FLOOR: f64 = 1.0;
    const COLLAPSE_TOL: f64 = 1e-6;

    pub fn new() -> Self {
        DurationStats { mu: 0.0, sigma: Self::VARIANCE_FLOOR, e: 0.0, n: 0 }
    }

    /// Records one completed dwell of `s` steps.
    pub fn record(&mut self, s: f64) {
        let old_mu = self.mu;
        self.mu += (s - old_mu) / (self.n as f64 + 1.0);
        self.e += (s - old_mu) * (s - self.mu);
        self.n += 1;
        self.refresh_sigma();
    }

    /// Pooled statistics of two disjoint dwell sets.
    pub fn pooled(a: &DurationStats, b: &DurationStats) -> DurationStats {
        let n = a.n + b.n;
        if n == 0 {
            return DurationStats::new();
        }
        let (na, nb, nf) = (a.n as f64, b.n as f64, n as f64);
        let delta = b.mu - a.mu;
        let mut out = DurationStats {
            mu: (na * a.mu + nb * b.mu) / nf,
            sigma: Self::VARIANCE_FLOOR,
            e: a.e + b.e + na * nb / nf * delta * delta,
            n,
        };
        out.refresh_sigma();
        out
    }

    fn refresh_sigma(&mut self) {
        self.sigma = if self.n > 1 {
            let var = self.e / (self.n as f64 - 1.0);
            if var < Self::COLLAPSE_TOL {
                Self::VARIANCE_FLOOR
            } else {
                var
            }
        } else {
            Self::VARIANCE_FLOOR
        };
    }
}

impl Default for DurationStats {
    fn default() -> Self {
        Self::new()
    }
}

/// One mixture component's online state.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceCluster {
    pub(crate) id: usize,
    pub(crate) prior: f64,
    pub(crate) mean: DVector<f64>,
    /// Orthonormal columns; only the first `dim` are active between steps.
    pub(crate) basis: DMatrix<f64>,
    pub(crate) eig: DVector<f64>,
    pub(crate) dim: usize,
    pub(crate) weight: f64,
    pub(crate) avg_dist: Vec<Option<f64>>,
    pub(crate) duration: DurationStats,
}

/// Outcome of [`SubspaceCluster::update_basis`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisUpdate {
    /// A residual direction was appended before rotating.
    pub augmented: bool,
    /// Columns removed because their eigenvalue collapsed.
    pub dropped: usize,
}

/// Outcome of [`SubspaceCluster::update_dim`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimUpdate {
    /// Dimension picked by the averaged-distance rule.
    pub proposed: usize,
    /// Dimension actually kept.
    pub dim: usize,
    /// True when the proposal was overridden to keep the loss from rising.
    pub guarded: bool,
    /// `λ₁·dim + dist²` for the kept dimension.
    pub loss: f64,
}

/// Combined outcome of one [`SubspaceCluster::absorb`] call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbsorbReport {
    pub pre_loss: f64,
    pub post_loss: f64,
    pub basis: BasisUpdate,
    pub dim: DimUpdate,
}

impl SubspaceCluster {
    /// Fresh cluster centred on `xi` with an empty basis.
    pub fn seed(id: usize, xi: &DVector<f64>, weight: f64) -> Self {
        let d = xi.len();
        SubspaceCluster {
            id,
            prior: 0.0,
            mean: xi.clone(),
            basis: DMatrix::zeros(d, 0),
            eig: DVector::zeros(0),
            dim: 0,
            weight,
            avg_dist: vec![None; d],
            duration: DurationStats::new(),
        }
    }

    /// Rebuilds a cluster from stored parts, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        id: usize,
        prior: f64,
        mean: DVector<f64>,
        basis: DMatrix<f64>,
        eig: DVector<f64>,
        weight: f64,
        avg_dist: Vec<Option<f64>>,
        duration: DurationStats,
    ) -> Result<Self> {
        let d = mean.len();
        if basis.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, got: basis.nrows() });
        }
        if eig.len() != basis.ncols() {
            return Err(Error::DimensionMismatch { expected: basis.ncols(), got: eig.len() });
        }
        if avg_dist.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: avg_dist.len() });
        }
        if d > 0 && basis.ncols() > d - 1 {
            return Err(Error::InvalidParameter("subspace dimension must stay below D".into()));
        }
        let finite = mean.iter().chain(basis.iter()).chain(eig.iter()).all(|v| v.is_finite())
            && avg_dist.iter().flatten().all(|v| v.is_finite())
            && [prior, weight, duration.mu, duration.sigma, duration.e].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("cluster"));
        }
        if !(0.0..=1.0).contains(&prior) || weight < 0.0 {
            return Err(Error::InvalidParameter("prior or weight out of range".into()));
        }
        if eig.iter().any(|&l| l <= 0.0) || avg_dist.iter().flatten().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("eigenvalues must be positive".into()));
        }
        if orthonormality_drift(&basis) > DRIFT_TOL {
            return Err(Error::InvalidParameter("basis is not orthonormal".into()));
        }
        let dim = basis.ncols();
        Ok(SubspaceCluster { id, prior, mean, basis, eig, dim, weight, avg_dist, duration })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Active basis columns (`D × dim`).
    pub fn basis(&self) -> DMatrix<f64> {
        self.basis.columns(0, self.dim).into_owned()
    }

    /// Active eigenvalues, descending.
    pub fn eig_diag(&self) -> DVector<f64> {
        self.eig.rows(0, self.dim).into_owned()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Averaged distance per subspace size; `None` where never observed.
    pub fn avg_dist(&self) -> &[Option<f64>] {
        &self.avg_dist
    }

    pub fn duration(&self) -> &DurationStats {
        &self.duration
    }

    /// Emission Gaussian `U·diag(λ)·Uᵀ + σ²·I`.
    pub fn gaussian(&self, sigma2: f64) -> Result<Gaussian> {
        Gaussian::new(self.mean.clone(), self.basis(), self.eig_diag(), sigma2)
    }

    /// Squared subspace distance of `xi` using the active basis.
    pub fn dist2(&self, xi: &DVector<f64>, b_m: f64) -> f64 {
        dist2_with(xi, &self.mean, &self.basis, self.dim, b_m)
    }

    /// Moves the mean toward `xi` and returns the previous mean.
    pub fn update_mean(&mut self, xi: &DVector<f64>) -> DVector<f64> {
        let w = self.weight;
        let old = self.mean.clone();
        self.mean = (&old * w + xi) / (w + 1.0);
        old
    }

    /// Rotates the basis to absorb `xi`, given the mean before the update.
    ///
    /// The basis may grow by one column. It is left untruncated so that
    /// [`SubspaceCluster::update_dim`] can score one extra dimension.
    pub fn update_basis(&mut self, xi: &DVector<f64>, old_mean: &DVector<f64>, sigma2: f64) -> BasisUpdate {
        let dim_d = self.mean.len();
        let u = self.basis.columns(0, self.dim).into_owned();
        let eig = self.eig.rows(0, self.dim).into_owned();
        let w = self.weight;

        let before = xi - old_mean;
        let mut resid = &before - &u * (u.transpose() * &before);
        for _ in 0..2 {
            let back = u.transpose() * &resid;
            resid -= &u * back;
        }
        let rnorm = resid.norm();
        let unit = if self.dim < dim_d && rnorm > RESIDUAL_TOL * before.norm() && rnorm > 0.0 {
            Some(resid / rnorm)
        } else {
            None
        };

        let after = xi - &self.mean;
        let n = self.dim + usize::from(unit.is_some());
        let mut coords = DVector::zeros(n);
        coords.rows_mut(0, self.dim).copy_from(&(u.transpose() * &after));
        if let Some(p) = &unit {
            coords[self.dim] = p.dot(&after);
        }

        let c1 = w / (w + 1.0);
        let c2 = w / ((w + 1.0) * (w + 1.0));
        let mut reduced = &coords * coords.transpose() * c2;
        for k in 0..self.dim {
            reduced[(k, k)] += c1 * eig[k];
        }
        let decomp = sym_eigen(&reduced);

        let mut augmented = DMatrix::zeros(dim_d, n);
        augmented.columns_mut(0, self.dim).copy_from(&u);
        if let Some(p) = &unit {
            augmented.set_column(self.dim, p);
        }
        let rotated = augmented * &decomp.vectors;

        let keep: Vec<usize> = (0..n).filter(|&k| decomp.values[k] >= sigma2 * DROP_FRACTION).collect();
        let mut basis = DMatrix::zeros(dim_d, keep.len());
        let mut values = DVector::zeros(keep.len());
        for (dst, &k) in keep.iter().enumerate() {
            basis.set_column(dst, &rotated.column(k));
            values[dst] = decomp.values[k];
        }
        if orthonormality_drift(&basis) > DRIFT_TOL {
            orthonormalize(&mut basis);
        }
        let dropped = n - keep.len();
        self.dim = keep.len();
        self.basis = basis;
        self.eig = values;
        BasisUpdate { augmented: unit.is_some(), dropped }
    }

    /// Refreshes the averaged distance vector and picks the subspace size.
    ///
    /// `ceiling` caps the single-point loss `λ₁·d + dist²`: when the
    /// averaged rule proposes a size that would exceed it, the previous size
    /// is kept, or failing that the size with the smallest loss.
    pub fn update_dim(
        &mut self,
        xi: &DVector<f64>,
        lambda1: f64,
        b_m: f64,
        previous_dim: usize,
        ceiling: Option<f64>,
    ) -> DimUpdate {
        let dim_d = self.mean.len();
        let w = self.weight;
        let top = self.dim.min(dim_d.saturating_sub(1));
        let deltas = nested_dist2(xi, &self.mean, &self.basis, top, b_m);
        for (k, &delta) in deltas.iter().enumerate() {
            let prev = self.avg_dist[k].unwrap_or(0.0);
            self.avg_dist[k] = Some((w * prev + delta) / (w + 1.0));
        }
        let mut proposed = 0;
        let mut best = f64::INFINITY;
        for k in 0..=top {
            if let Some(e) = self.avg_dist[k] {
                let cost = lambda1 * k as f64 + e;
                if cost < best {
                    best = cost;
                    proposed = k;
                }
            }
        }
        let loss_at = |k: usize| lambda1 * k as f64 + deltas[k];
        let mut dim = proposed;
        let mut guarded = false;
        if let Some(limit) = ceiling {
            if loss_at(proposed) > limit + LOSS_SLACK {
                guarded = true;
                let fallback = previous_dim.min(top);
                dim = if loss_at(fallback) <= limit + LOSS_SLACK {
                    fallback
                } else {
                    (0..=top)
                        .min_by(|&a, &b| loss_at(a).partial_cmp(&loss_at(b)).unwrap_or(std::cmp::Ordering::Equal))
                        .unwrap_or(0)
                };
            }
        }
        self.truncate(dim);
        DimUpdate { proposed, dim, guarded, loss: loss_at(dim) }
    }

    /// Full parameter update for an observation assigned to this cluster.
    /// Uses the current weight; the caller advances weights afterwards.
    pub fn absorb(&mut self, xi: &DVector<f64>, lambda1: f64, sigma2: f64, b_m: f64) -> AbsorbReport {
        let previous_dim = self.dim;
        let pre_loss = lambda1 * previous_dim as f64 + self.dist2(xi, b_m);
        let old_mean = self.update_mean(xi);
        let basis = self.update_basis(xi, &old_mean, sigma2);
        let dim = self.update_dim(xi, lambda1, b_m, previous_dim, Some(pre_loss));
        AbsorbReport { pre_loss, post_loss: dim.loss, basis, dim }
    }

    fn truncate(&mut self, dim: usize) {
        let dim = dim.min(self.basis.ncols());
        self.basis = self.basis.columns(0, dim).into_owned();
        self.eig = self.eig.rows(0, dim).into_owned();
        self.dim = dim;
    }
}

/// Subspace distance `‖v − ρ·U·Uᵀ·v‖` with `v = ξ − μ`, `ρ = exp(−‖v‖²/b_m)`.
pub fn subspace_distance(xi: &DVector<f64>, mean: &DVector<f64>, basis: &DMatrix<f64>, b_m: f64) -> f64 {
    dist2_with(xi, mean, basis, basis.ncols(), b_m).sqrt()
}

fn dist2_with(xi: &DVector<f64>, mean: &DVector<f64>, basis: &DMatrix<f64>, cols: usize, b_m: f64) -> f64 {
    let v = xi - mean;
    let norm2 = v.norm_squared();
    if cols == 0 {
        return norm2;
    }
    let rho = (-norm2 / b_m).exp();
    let proj = basis.columns(0, cols).transpose() * &v;
    (norm2 - (2.0 * rho - rho * rho) * proj.norm_squared()).max(0.0)
}

/// Squared distances to the nested subspaces spanned by the first
/// `0, 1, …, top` columns of `basis`.
fn nested_dist2(xi: &DVector<f64>, mean: &DVector<f64>, basis: &DMatrix<f64>, top: usize, b_m: f64) -> Vec<f64> {
    let v = xi - mean;
    let norm2 = v.norm_squared();
    let shrink = {
        let rho = (-norm2 / b_m).exp();
        2.0 * rho - rho * rho
    };
    let mut out = Vec::with_capacity(top + 1);
    let mut captured = 0.0;
    out.push(norm2);
    for k in 0..top {
        let g = basis.column(k).dot(&v);
        captured += g * g;
        out.push((norm2 - shrink * captured).max(0.0));
    }
    out
}

/// Result of a hard assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    /// Index into the current cluster list.
    Existing(usize),
    New,
}

/// Index of the smallest cost; the last entry stands for a new cluster.
/// Ties go to the lowest index, so existing clusters beat creation.
pub fn argmin_assignment(costs: &[f64]) -> Assignment {
    let k = costs.len() - 1;
    let mut best = k;
    for i in 0..k {
        if costs[i] < costs[best] || (costs[i] == costs[best] && i < best) {
            best = i;
        }
    }
    if best == k {
        Assignment::New
    } else {
        Assignment::Existing(best)
    }
}

/// Nearest-subspace assignment with a flat creation cost `lambda`.
pub fn assign_dp(xi: &DVector<f64>, clusters: &[SubspaceCluster], lambda: f64, b_m: f64) -> Assignment {
    let mut costs: Vec<f64> = clusters.iter().map(|c| c.dist2(xi, b_m)).collect();
    costs.push(lambda);
    argmin_assignment(&costs)
}

/// Prior update after observation number `t + 1`.
///
/// `winner` indexes the cluster that received the point; a newly appended
/// cluster counts as the winner when it is the last element.
pub fn update_priors(clusters: &mut [SubspaceCluster], winner: usize, t: u64) {
    let t = t as f64;
    for (i, c) in clusters.iter_mut().enumerate() {
        let bump = if i == winner { 1.0 } else { 0.0 };
        c.prior = (t * c.prior + bump) / (t + 1.0);
    }
}

/// Advances every cluster's weight; `visited` is the cluster that absorbed
/// the current point, if any.
pub fn update_weights(clusters: &mut [SubspaceCluster], visited: Option<usize>, mode: WeightMode) {
    for (i, c) in clusters.iter_mut().enumerate() {
        c.weight = next_weight(c.weight, visited == Some(i), mode);
    }
}

/// One step of the weight recursion.
pub fn next_weight(w: f64, visited: bool, mode: WeightMode) -> f64 {
    match mode {
        WeightMode::Linear => {
            if visited {
                w + 1.0
            } else {
                w
            }
        }
        WeightMode::Eligibility { zeta } => {
            if visited {
                zeta * w + 1.0
            } else {
                zeta * w
            }
        }
        WeightMode::Constant { w } => w,
    }
}

/// Single-point subspace clustering loss `λK + λ₁d + dist²`.
pub fn mppca_loss(lambda: f64, k: usize, lambda1: f64, dim: usize, dist2: f64) -> f64 {
    lambda * k as f64 + lambda1 * dim as f64 + dist2
}
