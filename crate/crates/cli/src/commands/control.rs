use std::io::Write;

use serde::Serialize;
use sosc_core::control::{
    lqr_infinite, lqt_finite, plan_autonomous, shared_control_step, tracking_weight, DoubleIntegrator, LqtSolution,
    Mixture, StepwiseReference,
};
use sosc_core::persist::AnyModel;
use sosc_core::{DMatrix, DVector, Frame, Gaussian};

use super::check_dim;
use crate::config::ControlSettings;
use crate::error::{CliError, Result};

/// Emission Gaussians and cluster ids; task-parameterized models need frames.
fn emissions(model: &AnyModel, frames: Option<&[Frame]>) -> Result<(Vec<Gaussian>, Vec<usize>)> {
    match model {
        AnyModel::Plain(m) => Ok((m.gaussians()?, m.clusters().iter().map(|c| c.id()).collect())),
        AnyModel::Tp(m) => {
            let frames = frames.ok_or_else(|| CliError::Usage("a task-parameterized model needs --frames".into()))?;
            let combined = m.combine(frames)?;
            Ok((combined.into_iter().map(|c| c.gaussian).collect(), m.clusters().iter().map(|c| c.id()).collect()))
        }
    }
}

fn system(positions: usize, settings: &ControlSettings) -> Result<(DoubleIntegrator, DMatrix<f64>)> {
    if settings.upsample == 0 {
        return Err(CliError::Usage("upsample must be at least 1".into()));
    }
    let sys = DoubleIntegrator::new(positions, settings.dt)?;
    Ok((sys, DMatrix::identity(positions, positions) * settings.r))
}

fn gather(x: &DVector<f64>, idx: &[usize]) -> Result<DVector<f64>> {
    if let Some(&bad) = idx.iter().find(|&&i| i >= x.len()) {
        return Err(
            sosc_core::Error::InvalidIndex(format!("index {bad} out of range for dimension {}", x.len())).into()
        );
    }
    Ok(DVector::from_iterator(idx.len(), idx.iter().map(|&i| x[i])))
}

/// An autonomous plan and its tracking rollout.
#[derive(Clone, Debug)]
pub struct PlanRun {
    /// Reference at controller rate.
    pub reference: StepwiseReference,
    /// Cluster id of each reference step.
    pub ids: Vec<usize>,
    pub lqt: LqtSolution,
}

/// Plans `horizon` model steps from the observation `xi0` and tracks the
/// output block with a double integrator starting at rest at `xi0[out_idx]`.
pub fn plan(
    model: &AnyModel,
    frames: Option<&[Frame]>,
    xi0: &DVector<f64>,
    out_idx: &[usize],
    horizon: usize,
    settings: &ControlSettings,
) -> Result<PlanRun> {
    check_dim(xi0, model.dim())?;
    if horizon == 0 {
        return Err(CliError::Usage("horizon must be positive".into()));
    }
    let (gs, ids) = emissions(model, frames)?;
    let chain = match model {
        AnyModel::Plain(m) => m.chain(),
        AnyModel::Tp(m) => m.chain(),
    };
    let reference =
        plan_autonomous(&chain, &gs, xi0, out_idx, horizon, model.hyperparams().s_max)?.upsample(settings.upsample);
    let (sys, r) = system(out_idx.len(), settings)?;
    let x0 = sys.at_rest(&gather(xi0, out_idx)?);
    let lqt = lqt_finite(&sys, &reference, &r, &x0)?;
    let ids = reference.states().iter().map(|&z| ids[z]).collect();
    Ok(PlanRun { reference, ids, lqt })
}

/// CSV columns: `t, z`, the target mean `mu_*`, then the position `x_*`
/// and velocity `v_*` reached after applying the control of step `t`.
pub fn write_plan_csv<W: Write>(out: W, run: &PlanRun) -> Result<()> {
    let m = run.reference.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "z".to_string()];
    header.extend((0..m).map(|i| format!("mu_{i}")));
    header.extend((0..m).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("v_{i}")));
    w.write_record(&header)?;
    for (t, (g, &z)) in run.reference.targets().iter().zip(&run.ids).enumerate() {
        let mut row = vec![t.to_string(), z.to_string()];
        row.extend(g.mean().iter().map(f64::to_string));
        row.extend(run.lqt.states[t + 1].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One step of a shared-control run.
#[derive(Clone, Debug)]
pub struct SharedStep {
    pub operator: DVector<f64>,
    pub desired: Gaussian,
    /// Controller state `[position; velocity]` after the step.
    pub state: DVector<f64>,
}

/// Runs shared control along an operator trajectory.
///
/// Every operator sample is fused with the regression prediction; an
/// infinite-horizon regulator weighted by the fused precision then drives
/// the double integrator toward the fused mean for `upsample` controller
/// steps. The system starts at rest at the first operator sample.
pub fn shared_control(
    model: &AnyModel,
    frames: Option<&[Frame]>,
    operator: &[DVector<f64>],
    in_idx: &[usize],
    out_idx: &[usize],
    kappa2: f64,
    settings: &ControlSettings,
) -> Result<Vec<SharedStep>> {
    let first = operator.first().ok_or_else(|| CliError::Data("empty operator trajectory".into()))?;
    let (gs, _) = emissions(model, frames)?;
    let priors = match model {
        AnyModel::Plain(m) => m.priors(),
        AnyModel::Tp(m) => m.priors(),
    };
    let mix = Mixture::new(priors, gs)?;
    let (sys, r) = system(out_idx.len(), settings)?;
    check_dim(first, in_idx.len())?;
    let mut x = sys.at_rest(first);
    let mut steps = Vec::with_capacity(operator.len());
    for op in operator {
        check_dim(op, in_idx.len())?;
        let desired = shared_control_step(&mix, in_idx, out_idx, op, kappa2)?;
        let lqr = lqr_infinite(&sys, &tracking_weight(&desired), &r)?;
        let target = sys.at_rest(desired.mean());
        for _ in 0..settings.upsample {
            let u = lqr.control(&x, &target);
            x = sys.step(&x, &u);
        }
        steps.push(SharedStep { operator: op.clone(), desired, state: x.clone() });
    }
    Ok(steps)
}

/// CSV columns: `t`, operator input `op_*`, fused mean `mu_*`, then
/// position `x_*` and velocity `v_*`.
pub fn write_shared_csv<W: Write>(out: W, steps: &[SharedStep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = steps.first() else {
        w.flush()?;
        return Ok(());
    };
    let (n_in, m) = (first.operator.len(), first.desired.dim());
    let mut header = vec!["t".to_string()];
    header.extend((0..n_in).map(|i| format!("op_{i}")));
    header.extend((0..m).map(|i| format!("mu_{i}")));
    header.extend((0..m).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("v_{i}")));
    w.write_record(&header)?;
    for (t, s) in steps.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(s.operator.iter().map(f64::to_string));
        row.extend(s.desired.mean().iter().map(f64::to_string));
        row.extend(s.state.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A combined Gaussian as written by `combine-frames`.
#[derive(Clone, Debug, Serialize)]
pub struct CombinedDoc {
    pub id: usize,
    pub mean: Vec<f64>,
    /// Row-major.
    pub covariance: Vec<f64>,
    pub dim: usize,
}

/// Combines every cluster of a task-parameterized model under `frames`.
pub fn combine_frames(model: &AnyModel, frames: &[Frame]) -> Result<Vec<CombinedDoc>> {
    let AnyModel::Tp(m) = model else {
        return Err(CliError::Usage("combine-frames needs a task-parameterized model".into()));
    };
    let combined = m.combine(frames)?;
    Ok(m.clusters()
        .iter()
        .zip(combined)
        .map(|(c, g)| CombinedDoc {
            id: c.id(),
            mean: g.gaussian.mean().as_slice().to_vec(),
            covariance: g.gaussian.covariance().transpose().as_slice().to_vec(),
            dim: g.dim,
        })
        .collect())
}
