use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmath::Gaussian;

use super::plan::StepwiseReference;

const CARE_TOL: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 10_000;

/// Unit-mass double integrator over `m` position coordinates; the state is
/// `[position; velocity]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleIntegrator {
    m: usize,
    dt: f64,
}

impl DoubleIntegrator {
    pub fn new(m: usize, dt: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("need at least one position coordinate".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        Ok(DoubleIntegrator { m, dt })
    }

    pub fn positions(&self) -> usize {
        self.m
    }

    pub fn state_dim(&self) -> usize {
        2 * self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Continuous drift `[[0, I], [0, 0]]`.
    pub fn a(&self) -> DMatrix<f64> {
        let m = self.m;
        let mut a = DMatrix::zeros(2 * m, 2 * m);
        a.view_mut((0, m), (m, m)).fill_with_identity();
        a
    }

    /// Continuous input matrix `[0; I]`.
    pub fn b(&self) -> DMatrix<f64> {
        let m = self.m;
        let mut b = DMatrix::zeros(2 * m, m);
        b.view_mut((m, 0), (m, m)).fill_with_identity();
        b
    }

    /// Exact zero-order-hold discretization.
    pub fn discrete(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, dt) = (self.m, self.dt);
        let mut ad = DMatrix::identity(2 * m, 2 * m);
        let mut bd = DMatrix::zeros(2 * m, m);
        for i in 0..m {
            ad[(i, m + i)] = dt;
            bd[(i, i)] = 0.5 * dt * dt;
            bd[(m + i, i)] = dt;
        }
        (ad, bd)
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (ad, bd) = self.discrete();
        ad * x + bd * u
    }

    /// Full-state target `[position; 0]`.
    pub fn at_rest(&self, position: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(2 * self.m);
        x.rows_mut(0, self.m).copy_from(position);
        x
    }
}

/// State weight `blockdiag(Σ⁻¹, 0)` for tracking the position distribution
/// `g`; velocities are left free.
pub fn tracking_weight(g: &Gaussian) -> DMatrix<f64> {
    let m = g.dim();
    let mut q = DMatrix::zeros(2 * m, 2 * m);
    q.view_mut((0, 0), (m, m)).copy_from(&g.precision());
    q
}

fn s_matrix(sys: &DoubleIntegrator, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = sys.positions();
    if r.nrows() != m || r.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: r.nrows() });
    }
    let chol = r.clone().cholesky().ok_or(Error::NotPositiveDefinite("control weight R"))?;
    let r_inv = chol.inverse();
    let b = sys.b();
    Ok((&b * &r_inv * b.transpose(), r_inv))
}

/// Frobenius norm of `AᵀP + PA − P·B·R⁻¹·Bᵀ·P + Q`.
pub fn care_residual(sys: &DoubleIntegrator, p: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let (s, _) = s_matrix(sys, r)?;
    let a = sys.a();
    Ok((a.transpose() * p + p * &a - p * &s * p + q).norm())
}

/// Infinite-horizon regulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Lqr {
    pub p: DMatrix<f64>,
    /// `R⁻¹·Bᵀ·P = [K_P, K_V]`.
    pub gain: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl Lqr {
    /// Stiffness block.
    pub fn kp(&self) -> DMatrix<f64> {
        let m = self.gain.nrows();
        self.gain.columns(0, m).into_owned()
    }

    /// Damping block.
    pub fn kv(&self) -> DMatrix<f64> {
        let m = self.gain.nrows();
        self.gain.columns(m, m).into_owned()
    }

    /// `u = −K·(x − target)`.
    pub fn control(&self, x: &DVector<f64>, target: &DVector<f64>) -> DVector<f64> {
        -(&self.gain * (x - target))
    }

    /// Closed-loop rollout of `steps` discrete steps from `x0`.
    pub fn simulate(
        &self,
        sys: &DoubleIntegrator,
        x0: &DVector<f64>,
        target: &DVector<f64>,
        steps: usize,
    ) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut x = x0.clone();
        out.push(x.clone());
        for _ in 0..steps {
            let u = self.control(&x, target);
            x = sys.step(&x, &u);
            out.push(x.clone());
        }
        out
    }
}

/// Solves `AᵀX + XA = −C` through the Kronecker form.
fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, c.iter().map(|v| -v));
    let sol = op.lu().solve(&rhs).ok_or(Error::Singular("Lyapunov operator"))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Continuous algebraic Riccati solution by Newton–Kleinman iteration.
pub fn lqr_infinite(sys: &DoubleIntegrator, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Lqr> {
    let n = sys.state_dim();
    let m = sys.positions();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: q.nrows() });
    }
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("state weight Q"));
    }
    let (s, r_inv) = s_matrix(sys, r)?;
    let a = sys.a();
    let b = sys.b();
    // [I, 2I] places every closed-loop pole at −1
    let mut gain = DMatrix::zeros(m, n);
    for i in 0..m {
        gain[(i, i)] = 1.0;
        gain[(i, m + i)] = 2.0;
    }
    for it in 1..=MAX_NEWTON_STEPS {
        let closed = &a - &b * &gain;
        let c = q + gain.transpose() * r * &gain;
        let p = lyapunov(&closed, &c)?;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::RiccatiBlowUp(it));
        }
        gain = &r_inv * b.transpose() * &p;
        let residual = (a.transpose() * &p + &p * &a - &p * &s * &p + q).norm();
        if residual < CARE_TOL {
            return Ok(Lqr { p, gain, residual, iterations: it });
        }
    }
    Err(Error::NoConvergence(MAX_NEWTON_STEPS))
}

/// Finite-horizon tracking law and its rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct LqtSolution {
    /// Riccati matrices at the `T + 1` grid times; the last is zero.
    pub p: Vec<DMatrix<f64>>,
    /// Auxiliary vectors at the grid times; the last is zero.
    pub d: Vec<DVector<f64>>,
    /// `[K_P, K_V]` for each of the `T` steps.
    pub gains: Vec<DMatrix<f64>>,
    /// `R⁻¹·Bᵀ·d` for each step.
    pub feedforward: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// `T + 1` states starting from `x0`.
    pub states: Vec<DVector<f64>>,
}

type Flow = (DMatrix<f64>, DVector<f64>);

/// Reverse-time derivative of `(P, d)` for a constant segment target.
fn riccati_flow(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    q: &DMatrix<f64>,
    target: &DVector<f64>,
    p: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Flow {
    let dp = a.transpose() * p + p * a - p * s * p + q;
    let dd = a.transpose() * d - p * s * d - p * a * target;
    (dp, dd)
}

/// Tracks a stepwise reference: integrates the Riccati and auxiliary
/// equations backward with RK4 from `P_T = 0, d_T = 0`, then simulates the
/// discretized system from `x0`.
pub fn lqt_finite(
    sys: &DoubleIntegrator,
    reference: &StepwiseReference,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<LqtSolution> {
    let n = sys.state_dim();
    let m = sys.positions();
    if reference.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: reference.dim() });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let (s, r_inv) = s_matrix(sys, r)?;
    let a = sys.a();
    let b = sys.b();
    let h = sys.dt();
    let steps = reference.len();

    let mut p = vec![DMatrix::zeros(n, n); steps + 1];
    let mut d = vec![DVector::zeros(n); steps + 1];
    for k in (0..steps).rev() {
        let q = tracking_weight(&reference.targets()[k]);
        let target = sys.at_rest(reference.targets()[k].mean());
        let (p1, d1) = (&p[k + 1], &d[k + 1]);
        let f = |pp: &DMatrix<f64>, dd: &DVector<f64>| riccati_flow(&a, &s, &q, &target, pp, dd);
        let (k1p, k1d) = f(p1, d1);
        let (k2p, k2d) = f(&(p1 + &k1p * (0.5 * h)), &(d1 + &k1d * (0.5 * h)));
        let (k3p, k3d) = f(&(p1 + &k2p * (0.5 * h)), &(d1 + &k2d * (0.5 * h)));
        let (k4p, k4d) = f(&(p1 + &k3p * h), &(d1 + &k3d * h));
        let pk = p1 + (k1p + &k2p * 2.0 + &k3p * 2.0 + k4p) * (h / 6.0);
        let dk = d1 + (k1d + &k2d * 2.0 + &k3d * 2.0 + k4d) * (h / 6.0);
        if !pk.iter().chain(dk.iter()).all(|v| v.is_finite()) {
            return Err(Error::RiccatiBlowUp(k));
        }
        p[k] = (&pk + pk.transpose()) * 0.5;
        d[k] = dk;
    }

    let bt = b.transpose();
    let mut gains = Vec::with_capacity(steps);
    let mut feedforward = Vec::with_capacity(steps);
    let mut controls = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    states.push(x.clone());
    for k in 0..steps {
        let gain = &r_inv * &bt * &p[k];
        let ff = &r_inv * &bt * &d[k];
        let target = sys.at_rest(reference.targets()[k].mean());
        let u = -(&gain * (&x - target)) + &ff;
        x = sys.step(&x, &u);
        gains.push(gain);
        feedforward.push(ff);
        controls.push(u);
        states.push(x.clone());
    }
    Ok(LqtSolution { p, d, gains, feedforward, controls, states })
}
