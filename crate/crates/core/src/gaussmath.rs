//! Factored multivariate Gaussians and the affine/product/conditioning
//! operations the rest of the crate is built on.
//!
//! A [`Gaussian`] stores its covariance as `U·diag(λ)·Uᵀ + σ²·I` with an
//! orthonormal `U`. Dense matrices only appear where an operation genuinely
//! needs one (products, conditioning, arbitrary linear maps).

use nalgebra::{DMatrix, DVector};

use crate::eigen::{clamped_inverse, orthonormality_drift, sym_eigen};
use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;
/// Relative clamp applied to eigenvalues before inverting a covariance.
const PRECISION_CLAMP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigvals: DVector<f64>,
    noise: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, basis: DMatrix<f64>, eigvals: DVector<f64>, noise: f64) -> Result<Self> {
        let dim = mean.len();
        if basis.nrows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: basis.nrows() });
        }
        if basis.ncols() != eigvals.len() {
            return Err(Error::DimensionMismatch { expected: basis.ncols(), got: eigvals.len() });
        }
        if basis.ncols() > dim {
            return Err(Error::InvalidParameter("basis has more columns than rows".into()));
        }
        if !mean.iter().chain(basis.iter()).chain(eigvals.iter()).all(|v| v.is_finite()) || !noise.is_finite() {
            return Err(Error::NonFinite("gaussian"));
        }
        if noise <= 0.0 || eigvals.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite("eigenvalues and noise floor must be positive"));
        }
        if orthonormality_drift(&basis) > ORTHONORMAL_TOL {
            return Err(Error::InvalidParameter("basis is not orthonormal".into()));
        }
        Ok(Gaussian { mean, basis, eigvals, noise })
    }

    /// `N(mean, noise·I)`.
    pub fn isotropic(mean: DVector<f64>, noise: f64) -> Result<Self> {
        let dim = mean.len();
        Gaussian::new(mean, DMatrix::zeros(dim, 0), DVector::zeros(0), noise)
    }

    /// Refactors a dense covariance. The noise floor becomes the smallest
    /// eigenvalue and the basis keeps every direction above it.
    pub fn from_dense(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: cov.nrows() });
        }
        if !cov.iter().all(|v| v.is_finite()) || !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dense covariance"));
        }
        if dim == 0 {
            return Err(Error::Empty("zero-dimensional gaussian"));
        }
        let eig = sym_eigen(cov);
        let floor = eig.values[dim - 1];
        if floor <= 0.0 {
            return Err(Error::NotPositiveDefinite("dense covariance"));
        }
        let cutoff = eig.values[0].abs() * 1e-12;
        let keep: Vec<usize> = (0..dim).filter(|&k| eig.values[k] - floor > cutoff).collect();
        let mut basis = DMatrix::zeros(dim, keep.len());
        let mut eigvals = DVector::zeros(keep.len());
        for (dst, &k) in keep.iter().enumerate() {
            basis.set_column(dst, &eig.vectors.column(k));
            eigvals[dst] = eig.values[k] - floor;
        }
        Ok(Gaussian { mean, basis, eigvals, noise: floor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of basis directions carrying variance above the floor.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn noise_floor(&self) -> f64 {
        self.noise
    }

    /// Dense `U·diag(λ)·Uᵀ + σ²·I`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let scaled = &self.basis * DMatrix::from_diagonal(&self.eigvals);
        let mut cov = scaled * self.basis.transpose();
        for i in 0..self.dim() {
            cov[(i, i)] += self.noise;
        }
        (&cov + cov.transpose()) * 0.5
    }

    /// Dense inverse covariance computed from the factors.
    pub fn precision(&self) -> DMatrix<f64> {
        let floor = self.noise.max(self.noise * PRECISION_CLAMP);
        let inv_floor = 1.0 / floor;
        let shrink = DVector::from_iterator(self.rank(), self.eigvals.iter().map(|&l| 1.0 / (l + floor) - inv_floor));
        let mut prec = &self.basis * DMatrix::from_diagonal(&shrink) * self.basis.transpose();
        for i in 0..self.dim() {
            prec[(i, i)] += inv_floor;
        }
        (&prec + prec.transpose()) * 0.5
    }

    pub fn log_det(&self) -> f64 {
        let free = (self.dim() - self.rank()) as f64;
        self.eigvals.iter().map(|&l| (l + self.noise).ln()).sum::<f64>() + free * self.noise.ln()
    }

    /// Squared Mahalanobis distance, evaluated on the factors.
    pub fn mahalanobis2(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let proj = self.basis.transpose() * &diff;
        let mut m = diff.norm_squared() / self.noise;
        for (k, g) in proj.iter().enumerate() {
            m -= g * g * (1.0 / self.noise - 1.0 / (self.eigvals[k] + self.noise));
        }
        m.max(0.0)
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim() as f64;
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det() + self.mahalanobis2(x))
    }

    /// Marginal over the listed coordinates.
    pub fn marginal(&self, idx: &[usize]) -> Result<Gaussian> {
        check_indices(idx, self.dim())?;
        if idx.is_empty() {
            return Err(Error::Empty("marginal index set"));
        }
        let cov = self.covariance();
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        Gaussian::from_dense(mean, &cov.select_rows(idx).select_columns(idx))
    }

    pub fn transform(&self, frame: &Frame) -> Result<Gaussian> {
        transform(self, frame)
    }
}

/// Dense covariance of `g`.
pub fn full_covariance(g: &Gaussian) -> DMatrix<f64> {
    g.covariance()
}

/// Affine coordinate system `x ↦ A·x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    rotation: DMatrix<f64>,
    offset: DVector<f64>,
    inverse: DMatrix<f64>,
    orthogonal: bool,
}

impl Frame {
    pub fn new(rotation: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let dim = offset.len();
        if rotation.nrows() != dim || rotation.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: rotation.nrows() });
        }
        if !rotation.iter().chain(offset.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("frame"));
        }
        let orthogonal = orthonormality_drift(&rotation) <= ORTHONORMAL_TOL;
        let inverse = if orthogonal {
            rotation.transpose()
        } else {
            let lu = rotation.clone().lu();
            let det = lu.determinant();
            let scale = rotation.abs().max().powi(dim as i32);
            if det.abs() <= 1e-12 * scale || !det.is_finite() {
                return Err(Error::Singular("frame rotation"));
            }
            lu.try_inverse().ok_or(Error::Singular("frame rotation"))?
        };
        Ok(Frame { rotation, offset, inverse, orthogonal })
    }

    pub fn identity(dim: usize) -> Self {
        Frame {
            rotation: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
            inverse: DMatrix::identity(dim, dim),
            orthogonal: true,
        }
    }

    pub fn translation(offset: DVector<f64>) -> Self {
        let dim = offset.len();
        Frame { offset, ..Frame::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    /// `A⁻¹·(x − b)`: the point as seen from this frame.
    pub fn to_local(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.inverse * (x - &self.offset)
    }

    /// `A·x + b`.
    pub fn to_global(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rotation * x + &self.offset
    }
}

/// Maps `g` through `frame`: mean `A·μ + b`, covariance `A·Σ·Aᵀ`.
///
/// Orthogonal frames rotate the factors directly, so the rank and noise floor
/// are preserved; any other invertible map goes through a dense refactoring.
pub fn transform(g: &Gaussian, frame: &Frame) -> Result<Gaussian> {
    if frame.dim() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: frame.dim() });
    }
    let mean = frame.to_global(&g.mean);
    if frame.orthogonal {
        let basis = &frame.rotation * &g.basis;
        Ok(Gaussian { mean, basis, eigvals: g.eigvals.clone(), noise: g.noise })
    } else {
        let cov = &frame.rotation * g.covariance() * frame.rotation.transpose();
        Gaussian::from_dense(mean, &((&cov + cov.transpose()) * 0.5))
    }
}

/// Normalized product of Gaussians: precisions add, means are
/// precision-weighted.
pub fn product(gs: &[Gaussian]) -> Result<Gaussian> {
    let first = gs.first().ok_or(Error::Empty("product of gaussians"))?;
    let dim = first.dim();
    if let Some(bad) = gs.iter().find(|g| g.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.dim() });
    }
    if gs.len() == 1 {
        return Ok(first.clone());
    }
    let mut prec = DMatrix::<f64>::zeros(dim, dim);
    let mut info = DVector::<f64>::zeros(dim);
    let mut min_floor = f64::INFINITY;
    for g in gs {
        let p = g.precision();
        info += &p * &g.mean;
        prec += p;
        min_floor = min_floor.min(g.noise);
    }
    // eigenvalues of the summed precision are bounded above by Σ 1/σⱼ²
    let cov = clamped_inverse(&prec, (min_floor / gs.len() as f64) * PRECISION_CLAMP);
    let mean = &cov * info;
    Gaussian::from_dense(mean, &cov)
}

/// Conditional of the `out_idx` block given `x_in` on the `in_idx` block.
pub fn condition(g: &Gaussian, in_idx: &[usize], out_idx: &[usize], x_in: &DVector<f64>) -> Result<Gaussian> {
    check_indices(in_idx, g.dim())?;
    check_indices(out_idx, g.dim())?;
    if out_idx.is_empty() {
        return Err(Error::Empty("output index set"));
    }
    if in_idx.iter().any(|i| out_idx.contains(i)) {
        return Err(Error::InvalidIndex("input and output index sets overlap".into()));
    }
    if x_in.len() != in_idx.len() {
        return Err(Error::DimensionMismatch { expected: in_idx.len(), got: x_in.len() });
    }
    let (mean, cov) = condition_dense(g.mean(), &g.covariance(), in_idx, out_idx, x_in)?;
    Gaussian::from_dense(mean, &cov)
}

/// Dense conditioning used by [`condition`] and by regression.
pub(crate) fn condition_dense(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    in_idx: &[usize],
    out_idx: &[usize],
    x_in: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mu_o = DVector::from_iterator(out_idx.len(), out_idx.iter().map(|&i| mean[i]));
    let sigma_o = cov.select_rows(out_idx).select_columns(out_idx);
    if in_idx.is_empty() {
        return Ok((mu_o, sigma_o));
    }
    let mu_i = DVector::from_iterator(in_idx.len(), in_idx.iter().map(|&i| mean[i]));
    let sigma_i = cov.select_rows(in_idx).select_columns(in_idx);
    let sigma_oi = cov.select_rows(out_idx).select_columns(in_idx);
    let chol = sigma_i.cholesky().ok_or(Error::Singular("input block of the covariance"))?;
    let gain_t = chol.solve(&sigma_oi.transpose());
    let mean_out = mu_o + gain_t.transpose() * (x_in - mu_i);
    let cond = sigma_o - &sigma_oi * gain_t;
    Ok((mean_out, (&cond + cond.transpose()) * 0.5))
}

fn check_indices(idx: &[usize], dim: usize) -> Result<()> {
    for (k, &i) in idx.iter().enumerate() {
        if i >= dim {
            return Err(Error::InvalidIndex(format!("index {i} out of range for dimension {dim}")));
        }
        if idx[..k].contains(&i) {
            return Err(Error::InvalidIndex(format!("index {i} repeated")));
        }
    }
    Ok(())
}
