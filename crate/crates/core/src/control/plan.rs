use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gaussmath::Gaussian;
use crate::hsmm::{decode, SemiMarkovChain};
use crate::sosc::forward_with;

/// Piecewise-constant sequence of target Gaussians with the state that
/// produced each step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepwiseReference {
    targets: Vec<Gaussian>,
    states: Vec<usize>,
}

impl StepwiseReference {
    pub fn new(targets: Vec<Gaussian>, states: Vec<usize>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Empty("stepwise reference"));
        }
        if states.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: targets.len(), got: states.len() });
        }
        let d = targets[0].dim();
        if let Some(bad) = targets.iter().find(|g| g.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.dim() });
        }
        Ok(StepwiseReference { targets, states })
    }

    /// Holds one target for `steps` steps.
    pub fn constant(target: Gaussian, steps: usize) -> Result<Self> {
        StepwiseReference::new(vec![target; steps], vec![0; steps])
    }

    pub fn targets(&self) -> &[Gaussian] {
        &self.targets
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.targets[0].dim()
    }

    /// Repeats every step `factor` times, e.g. to run the controller on a
    /// finer grid than the model.
    pub fn upsample(&self, factor: usize) -> StepwiseReference {
        let factor = factor.max(1);
        let targets = self.targets.iter().flat_map(|g| std::iter::repeat_n(g.clone(), factor)).collect();
        let states = self.states.iter().flat_map(|&z| std::iter::repeat_n(z, factor)).collect();
        StepwiseReference { targets, states }
    }
}

/// Decodes a reference of `horizon` steps starting from the observation
/// `xi_t0`.
///
/// The first forward row weighs the priors by the likelihood of `xi_t0`;
/// later rows use only transitions and durations. Once every remaining
/// state has never been left, the forward variable vanishes; from there the
/// last decoded state is held as a terminal state.
pub fn plan_autonomous(
    chain: &SemiMarkovChain,
    emissions: &[Gaussian],
    xi_t0: &DVector<f64>,
    out_idx: &[usize],
    horizon: usize,
    s_max: usize,
) -> Result<StepwiseReference> {
    if chain.is_empty() {
        return Err(Error::Empty("model has no clusters"));
    }
    let alpha = match forward_with(chain, emissions, std::slice::from_ref(xi_t0), horizon, s_max) {
        Ok(a) => a,
        Err(Error::Unreachable(t)) if t >= 1 => forward_with(chain, emissions, std::slice::from_ref(xi_t0), t, s_max)?,
        Err(e) => return Err(e),
    };
    let mut states = decode(&alpha);
    let last = *states.last().expect("forward returns at least one row");
    states.resize(horizon, last);
    let blocks = emissions.iter().map(|g| g.marginal(out_idx)).collect::<Result<Vec<_>>>()?;
    let targets = states.iter().map(|&z| blocks[z].clone()).collect();
    StepwiseReference::new(targets, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn emissions() -> Vec<Gaussian> {
        (0..3).map(|i| Gaussian::isotropic(dvector![i as f64 * 10.0, 0.0], 0.5).unwrap()).collect()
    }

    #[test]
    fn single_state_plan_is_constant() {
        let chain = SemiMarkovChain { priors: vec![1.0], trans: dmatrix![0.0], dur_mu: vec![5.0], dur_var: vec![1.0] };
        let g = vec![Gaussian::isotropic(dvector![1.0, 2.0], 0.1).unwrap()];
        let plan = plan_autonomous(&chain, &g, &dvector![1.0, 2.0], &[0, 1], 30, 10).unwrap();
        assert_eq!(plan.len(), 30);
        assert!(plan.states().iter().all(|&z| z == 0));
    }

    #[test]
    fn starts_in_the_state_holding_the_observation() {
        let chain = SemiMarkovChain {
            priors: vec![1.0 / 3.0; 3],
            trans: dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; 1.0, 0.0, 0.0],
            dur_mu: vec![4.0; 3],
            dur_var: vec![1.0; 3],
        };
        let plan = plan_autonomous(&chain, &emissions(), &dvector![20.0, 0.0], &[0], 20, 10).unwrap();
        assert_eq!(plan.states()[0], 2);
        assert_eq!(plan.states()[1], 0);
        assert_eq!(plan.dim(), 1);
    }

    #[test]
    fn upsample_repeats_steps() {
        let g = Gaussian::isotropic(dvector![0.0], 1.0).unwrap();
        let r = StepwiseReference::new(vec![g.clone(), g], vec![0, 1]).unwrap();
        assert_eq!(r.upsample(3).states(), &[0, 0, 0, 1, 1, 1]);
    }
}
