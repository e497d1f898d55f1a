//! Explicit-duration semi-Markov bookkeeping: transition counts, the stream
//! cursor, transition-aware assignment costs and the forward variable.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::params::Hyperparams;
use crate::subspace::{argmin_assignment, Assignment};

/// Visit counts between states; the diagonal is always zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransitionCounts {
    counts: Vec<Vec<u64>>,
}

impl TransitionCounts {
    pub fn new(k: usize) -> Self {
        TransitionCounts { counts: vec![vec![0; k]; k] }
    }

    /// Builds counts from a square table; rejects nonzero diagonals.
    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let k = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: row.len() });
            }
            if row[i] != 0 {
                return Err(Error::SelfTransition(i));
            }
        }
        Ok(TransitionCounts { counts: rows })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j]
    }

    /// Appends an unvisited state.
    pub fn push_state(&mut self) {
        for row in &mut self.counts {
            row.push(0);
        }
        self.counts.push(vec![0; self.counts.len() + 1]);
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Number of distinct states ever reached from `i`.
    pub fn distinct_out(&self, i: usize) -> usize {
        self.counts[i].iter().filter(|&&c| c > 0).count()
    }

    /// `a[i][j]`, or `None` while state `i` has never been left.
    pub fn prob(&self, i: usize, j: usize) -> Option<f64> {
        let total = self.row_total(i);
        (total > 0).then(|| self.counts[i][j] as f64 / total as f64)
    }

    /// Row-stochastic matrix; rows of never-left states are zero.
    pub fn probabilities(&self) -> DMatrix<f64> {
        let k = self.len();
        DMatrix::from_fn(k, k, |i, j| self.prob(i, j).unwrap_or(0.0))
    }

    /// Counts one transition `from → to`.
    pub fn record(&mut self, from: usize, to: usize) -> Result<()> {
        let k = self.len();
        if from >= k || to >= k {
            return Err(Error::InvalidIndex(format!("transition {from}->{to} with {k} states")));
        }
        if from == to {
            return Err(Error::SelfTransition(from));
        }
        self.counts[from][to] += 1;
        Ok(())
    }

    /// Folds state `absorbed` into `survivor`: rows and columns are summed,
    /// the diagonal cleared and the absorbed index removed.
    pub fn merge(&mut self, survivor: usize, absorbed: usize) -> Result<()> {
        if survivor == absorbed {
            return Err(Error::SelfMerge(survivor));
        }
        let k = self.len();
        if survivor >= k || absorbed >= k {
            return Err(Error::InvalidIndex(format!("merge {absorbed} into {survivor} with {k} states")));
        }
        let moved = self.counts[absorbed].clone();
        for (j, c) in moved.into_iter().enumerate() {
            self.counts[survivor][j] += c;
        }
        for row in &mut self.counts {
            row[survivor] += row[absorbed];
        }
        self.counts[survivor][survivor] = 0;
        self.counts.remove(absorbed);
        for row in &mut self.counts {
            row.remove(absorbed);
        }
        Ok(())
    }
}

/// Streaming position: observation count, current state and run length.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StreamCursor {
    /// Observations seen so far.
    pub t: u64,
    /// Id of the cluster holding the latest observation.
    pub z: Option<usize>,
    /// Length of the current run of identical assignments.
    pub s: u64,
}

/// Assignment costs for every cluster plus a trailing creation cost.
///
/// `current` is the index of the state holding the previous observation.
/// Staying there costs the bare distance; reached states pay `−λ₂·ln a`;
/// states never reached from `current` pay a pseudo-count and `λ₃`.
/// Without a current state the costs reduce to nearest-subspace with a flat
/// creation cost `λ`.
pub fn hsmm_costs(dist2: &[f64], counts: &TransitionCounts, current: Option<usize>, hp: &Hyperparams) -> Vec<f64> {
    let Some(z) = current else {
        let mut costs = dist2.to_vec();
        costs.push(hp.lambda);
        return costs;
    };
    let total = counts.row_total(z) as f64;
    let unseen = hp.lambda2 * (total + 1.0).ln() + hp.lambda3;
    let mut costs: Vec<f64> = dist2
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if i == z {
                d
            } else {
                match counts.prob(z, i) {
                    Some(a) if a > 0.0 => d - hp.lambda2 * a.ln(),
                    _ => d + unseen,
                }
            }
        })
        .collect();
    costs.push(hp.lambda + unseen);
    costs
}

/// Transition-aware hard assignment from precomputed squared distances.
pub fn assign_hsmm(dist2: &[f64], counts: &TransitionCounts, current: Option<usize>, hp: &Hyperparams) -> Assignment {
    argmin_assignment(&hsmm_costs(dist2, counts, current, hp))
}

/// Single-point sequence loss `λ(K−1) + λ₁d − λ₂·ln a + λ₃τ + dist²`.
/// Pass `transition = None` for a dwell step.
pub fn hsmm_loss(hp: &Hyperparams, k: usize, dim: usize, dist2: f64, transition: Option<f64>, tau: usize) -> f64 {
    let jump = transition.map_or(0.0, |a| -hp.lambda2 * a.ln());
    hp.lambda * (k as f64 - 1.0) + hp.lambda1 * dim as f64 + jump + hp.lambda3 * tau as f64 + dist2
}

/// Priors, transitions and Gaussian dwell-time models of a semi-Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct SemiMarkovChain {
    pub priors: Vec<f64>,
    /// Row-stochastic, or zero rows for absorbing states.
    pub trans: DMatrix<f64>,
    pub dur_mu: Vec<f64>,
    pub dur_var: Vec<f64>,
}

impl SemiMarkovChain {
    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let k = self.len();
        if k == 0 {
            return Err(Error::Empty("semi-Markov chain"));
        }
        if self.trans.nrows() != k || self.trans.ncols() != k {
            return Err(Error::DimensionMismatch { expected: k, got: self.trans.nrows() });
        }
        if self.dur_mu.len() != k || self.dur_var.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: self.dur_mu.len().min(self.dur_var.len()) });
        }
        if self.dur_var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("duration variances must be positive".into()));
        }
        let finite = self.priors.iter().chain(self.dur_mu.iter()).chain(self.trans.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("semi-Markov chain"));
        }
        Ok(())
    }

    /// Log Gaussian density of dwelling `s` steps in state `i`.
    pub fn log_duration(&self, i: usize, s: usize) -> f64 {
        let var = self.dur_var[i];
        let diff = s as f64 - self.dur_mu[i];
        -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + diff * diff / var)
    }
}

/// Rescaled forward variable over `horizon` rows.
///
/// Row 0 is the prior, weighted by `obs_loglik[0]` when given. Each later row
/// sums over the state `j` active `s` steps earlier, the jump `j → i`, the
/// dwell density of `s` steps in `i`, and the observation likelihoods of
/// the covered steps. Rows beyond the observed prefix carry no evidence.
/// The recursion runs on log values so long dwells do not underflow.
pub fn forward(chain: &SemiMarkovChain, obs_loglik: &[Vec<f64>], horizon: usize, s_max: usize) -> Result<DMatrix<f64>> {
    chain.validate()?;
    let k = chain.len();
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if s_max == 0 {
        return Err(Error::InvalidParameter("s_max must be at least 1".into()));
    }
    if let Some(row) = obs_loglik.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: row.len() });
    }
    // cumulative evidence per state; cum[t][i] covers steps 0..t
    let mut cum = vec![vec![0.0; k]; horizon + 1];
    for t in 0..horizon {
        for i in 0..k {
            let ll = obs_loglik.get(t).map_or(0.0, |r| r[i]);
            cum[t + 1][i] = cum[t][i] + ll;
        }
    }
    let log_trans = chain.trans.map(|a| if a > 0.0 { a.ln() } else { f64::NEG_INFINITY });

    let mut log_alpha = vec![vec![f64::NEG_INFINITY; k]; horizon];
    for i in 0..k {
        let p = chain.priors[i];
        log_alpha[0][i] = if p > 0.0 { p.ln() + (cum[1][i] - cum[0][i]) } else { f64::NEG_INFINITY };
    }
    check_row(&log_alpha[0], 0)?;

    let mut terms = Vec::with_capacity(k * s_max);
    for t in 1..horizon {
        for i in 0..k {
            terms.clear();
            for s in 1..=s_max.min(t) {
                let start = t - s;
                let evidence = cum[t + 1][i] - cum[start + 1][i];
                let dwell = chain.log_duration(i, s);
                for j in 0..k {
                    let la = log_alpha[start][j] + log_trans[(j, i)];
                    if la > f64::NEG_INFINITY {
                        terms.push(la + dwell + evidence);
                    }
                }
            }
            log_alpha[t][i] = log_sum_exp(&terms);
        }
        check_row(&log_alpha[t], t)?;
    }

    let mut out = DMatrix::zeros(horizon, k);
    for (t, row) in log_alpha.iter().enumerate() {
        let shift = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - shift).exp()).sum();
        for i in 0..k {
            out[(t, i)] = (row[i] - shift).exp() / total;
        }
    }
    Ok(out)
}

fn check_row(row: &[f64], t: usize) -> Result<()> {
    if row.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("forward variable"));
    }
    if row.iter().all(|&v| v == f64::NEG_INFINITY) {
        return Err(Error::Unreachable(t));
    }
    Ok(())
}

/// `ln Σ exp(xᵢ)`; `−∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Most likely state per row.
pub fn decode(alpha: &DMatrix<f64>) -> Vec<usize> {
    alpha
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for i in 1..row.len() {
                if row[i] > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
