use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmath::{condition_dense, product, Gaussian};

/// Weighted set of Gaussians sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    priors: Vec<f64>,
    components: Vec<Gaussian>,
}

impl Mixture {
    pub fn new(priors: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture"));
        }
        if priors.len() != components.len() {
            return Err(Error::DimensionMismatch { expected: components.len(), got: priors.len() });
        }
        let d = components[0].dim();
        if let Some(bad) = components.iter().find(|g| g.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.dim() });
        }
        if priors.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter("mixture priors must be finite and nonnegative".into()));
        }
        Ok(Mixture { priors, components })
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Log density of `x` under `N(mean, cov)` via a Cholesky factor.
fn log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("input block of a component"))?;
    let diff = x - mean;
    let sol = chol.l().solve_lower_triangular(&diff).ok_or(Error::Singular("input block of a component"))?;
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let n = x.len() as f64;
    Ok(-0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det + sol.norm_squared()))
}

/// Gaussian mixture regression of the `out_idx` block given `x_in`.
pub fn gmr(mix: &Mixture, in_idx: &[usize], out_idx: &[usize], x_in: &DVector<f64>) -> Result<Gaussian> {
    gmr_with_responsibilities(mix, in_idx, out_idx, x_in).map(|(g, _)| g)
}

/// [`gmr`] that also returns the normalized responsibilities.
pub fn gmr_with_responsibilities(
    mix: &Mixture,
    in_idx: &[usize],
    out_idx: &[usize],
    x_in: &DVector<f64>,
) -> Result<(Gaussian, Vec<f64>)> {
    let d = mix.dim();
    if x_in.len() != in_idx.len() {
        return Err(Error::DimensionMismatch { expected: in_idx.len(), got: x_in.len() });
    }
    if out_idx.is_empty() {
        return Err(Error::Empty("output index set"));
    }
    for &i in in_idx.iter().chain(out_idx) {
        if i >= d {
            return Err(Error::InvalidIndex(format!("index {i} out of range for dimension {d}")));
        }
    }
    if in_idx.iter().any(|i| out_idx.contains(i)) {
        return Err(Error::InvalidIndex("input and output index sets overlap".into()));
    }

    let mut log_w = Vec::with_capacity(mix.len());
    let mut conds = Vec::with_capacity(mix.len());
    for (g, &p) in mix.components.iter().zip(&mix.priors) {
        let cov = g.covariance();
        let lw = if in_idx.is_empty() {
            p.ln()
        } else {
            let mu_in = DVector::from_iterator(in_idx.len(), in_idx.iter().map(|&i| g.mean()[i]));
            let cov_in = cov.select_rows(in_idx).select_columns(in_idx);
            p.ln() + log_density(x_in, &mu_in, &cov_in)?
        };
        log_w.push(lw);
        conds.push(condition_dense(g.mean(), &cov, in_idx, out_idx, x_in)?);
    }
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::FarFromModel);
    }
    let mut h: Vec<f64> = log_w.iter().map(|lw| (lw - top).exp()).collect();
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= total);

    let n = out_idx.len();
    let mut mean = DVector::zeros(n);
    for ((mu, _), &hi) in conds.iter().zip(&h) {
        mean += mu * hi;
    }
    let mut cov = DMatrix::zeros(n, n);
    for ((mu, sigma), &hi) in conds.iter().zip(&h) {
        let dev = mu - &mean;
        cov += (sigma + &dev * dev.transpose()) * hi;
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((Gaussian::from_dense(mean, &cov)?, h))
}

/// Desired state fusing the operator input `N(x_in, κ²I)` with the
/// regression prediction of the output block.
pub fn shared_control_step(
    mix: &Mixture,
    in_idx: &[usize],
    out_idx: &[usize],
    x_in: &DVector<f64>,
    kappa2: f64,
) -> Result<Gaussian> {
    if !(kappa2 > 0.0 && kappa2.is_finite()) {
        return Err(Error::InvalidParameter("kappa2 must be positive".into()));
    }
    if in_idx.len() != out_idx.len() {
        return Err(Error::DimensionMismatch { expected: out_idx.len(), got: in_idx.len() });
    }
    let predicted = gmr(mix, in_idx, out_idx, x_in)?;
    let operator = Gaussian::isotropic(x_in.clone(), kappa2)?;
    product(&[operator, predicted])
}
