use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-cluster update weight evolves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WeightMode {
    /// Visit count; suited to stationary streams.
    Linear,
    /// Discounted visit count with factor `zeta` in (0, 1).
    Eligibility { zeta: f64 },
    /// Fixed step-size weight.
    Constant { w: f64 },
}

impl WeightMode {
    /// Weight given to a freshly created cluster.
    pub fn initial(&self) -> f64 {
        match *self {
            WeightMode::Linear | WeightMode::Eligibility { .. } => 1.0,
            WeightMode::Constant { w } => w,
        }
    }
}

/// Penalties and constants shared by assignment, updates and synthesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// New-cluster penalty; also the merge distance.
    pub lambda: f64,
    /// Subspace dimension penalty.
    pub lambda1: f64,
    /// Transition penalty.
    pub lambda2: f64,
    /// Penalty for a transition that has never been observed.
    pub lambda3: f64,
    /// Isotropic noise variance.
    pub sigma2: f64,
    /// Bandwidth of the distance weighting.
    pub b_m: f64,
    pub weight_mode: WeightMode,
    /// Operator uncertainty used by shared control.
    pub kappa2: f64,
    /// Longest duration considered by the forward variable.
    pub s_max: usize,
}

impl Hyperparams {
    /// Values used for the three-dimensional non-stationary benchmark stream.
    pub fn synthetic() -> Self {
        Hyperparams {
            lambda: 3.6,
            lambda1: 0.35,
            lambda2: 0.025,
            lambda3: 0.025,
            sigma2: 0.15,
            b_m: 50.0,
            weight_mode: WeightMode::Eligibility { zeta: 0.995 },
            kappa2: 0.01,
            s_max: 150,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        let finite = [self.lambda, self.lambda1, self.lambda2, self.lambda3, self.sigma2, self.b_m, self.kappa2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("hyperparameters"));
        }
        if self.lambda <= 0.0 {
            return bad("lambda must be positive");
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return bad("lambda1, lambda2 and lambda3 must be nonnegative");
        }
        if self.sigma2 <= 0.0 {
            return bad("sigma2 must be positive");
        }
        if self.b_m <= 0.0 {
            return bad("b_m must be positive");
        }
        if self.kappa2 <= 0.0 {
            return bad("kappa2 must be positive");
        }
        if self.s_max == 0 {
            return bad("s_max must be at least 1");
        }
        match self.weight_mode {
            WeightMode::Linear => {}
            WeightMode::Eligibility { zeta } => {
                if !(zeta > 0.0 && zeta < 1.0) {
                    return bad("eligibility zeta must lie in (0, 1)");
                }
            }
            WeightMode::Constant { w } => {
                if !(w > 0.0 && w.is_finite()) {
                    return bad("constant weight must be positive");
                }
            }
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::synthetic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_preset_is_valid() {
        let hp = Hyperparams::synthetic();
        hp.validate().unwrap();
        assert_eq!(hp.lambda, 3.6);
        assert_eq!(hp.lambda1, 0.35);
        assert_eq!(hp.s_max, 150);
    }

    #[test]
    fn rejects_bad_values() {
        let mut hp = Hyperparams::synthetic();
        hp.lambda = 0.0;
        assert!(hp.validate().is_err());
        let mut hp = Hyperparams::synthetic();
        hp.weight_mode = WeightMode::Eligibility { zeta: 1.0 };
        assert!(hp.validate().is_err());
        let mut hp = Hyperparams::synthetic();
        hp.sigma2 = f64::NAN;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn weight_mode_json_shape() {
        let json = serde_json::to_string(&WeightMode::Eligibility { zeta: 0.5 }).unwrap();
        assert_eq!(json, r#"{"mode":"eligibility","zeta":0.5}"#);
    }
}
