use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest entropic regularization accepted at load.
pub const EPSILON_FLOOR: f64 = 1e-4;

/// Inference hyperparameters. Defaults follow the reference configuration of
/// the method; the iteration caps and tolerances are engine choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Local-context window, in utterances.
    pub window: usize,
    /// Global edges require `cos + 1 > tau_s`.
    pub tau_s: f64,
    /// Temporal decay constant of local and intra-speaker weights.
    pub tau_e: f64,
    /// Row-softmax temperature applied to the transport plan.
    pub tau_r: f64,
    /// Attribute vs. structure trade-off.
    pub alpha: f64,
    /// Weight of the alignment score in the fused prediction.
    pub beta: f64,
    pub epsilon: f64,
    pub lambda_ee: f64,
    pub lambda_ce: f64,
    pub lambda_ot: f64,
    /// Encoder depth.
    pub layers: usize,
    pub outer_iters: usize,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    pub outer_tol: f64,
    pub decision_threshold: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            window: 5,
            tau_s: 0.5,
            tau_e: 2.0,
            tau_r: 1.0,
            alpha: 0.8,
            beta: 0.4,
            epsilon: 0.5,
            lambda_ee: 0.2,
            lambda_ce: 0.4,
            lambda_ot: 1.0,
            layers: 2,
            outer_iters: 20,
            sinkhorn_iters: 500,
            sinkhorn_tol: 1e-7,
            outer_tol: 1e-6,
            decision_threshold: 0.5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let finite = [
            ("tau_s", self.tau_s),
            ("tau_e", self.tau_e),
            ("tau_r", self.tau_r),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("epsilon", self.epsilon),
            ("lambda_ee", self.lambda_ee),
            ("lambda_ce", self.lambda_ce),
            ("lambda_ot", self.lambda_ot),
            ("sinkhorn_tol", self.sinkhorn_tol),
            ("outer_tol", self.outer_tol),
            ("decision_threshold", self.decision_threshold),
        ];
        if let Some((name, v)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} must be finite, got {v}"));
        }
        if self.tau_e <= 0.0 {
            return bad(format!("tau_e must be > 0, got {}", self.tau_e));
        }
        if self.tau_r <= 0.0 {
            return bad(format!("tau_r must be > 0, got {}", self.tau_r));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.epsilon < EPSILON_FLOOR {
            return bad(format!(
                "epsilon must be >= {EPSILON_FLOOR}, got {}",
                self.epsilon
            ));
        }
        for (name, v) in [
            ("lambda_ee", self.lambda_ee),
            ("lambda_ce", self.lambda_ce),
            ("lambda_ot", self.lambda_ot),
        ] {
            if v < 0.0 {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if self.layers < 1 {
            return bad("layers must be >= 1".into());
        }
        if self.outer_iters < 1 || self.sinkhorn_iters < 1 {
            return bad("iteration caps must be >= 1".into());
        }
        if self.sinkhorn_tol <= 0.0 || self.outer_tol < 0.0 {
            return bad("tolerances must be positive".into());
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return bad(format!(
                "decision_threshold must lie in (0, 1), got {}",
                self.decision_threshold
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_values() {
        let hp = HyperParams::default();
        assert_eq!(hp.window, 5);
        assert_eq!(
            (hp.tau_s, hp.tau_e, hp.tau_r, hp.alpha, hp.beta, hp.epsilon),
            (0.5, 2.0, 1.0, 0.8, 0.4, 0.5)
        );
        assert_eq!((hp.lambda_ee, hp.lambda_ce, hp.lambda_ot), (0.2, 0.4, 1.0));
        hp.validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        let hp = HyperParams {
            alpha: 1.5,
            ..HyperParams::default()
        };
        assert!(hp.validate().is_err());
        let hp = HyperParams {
            epsilon: 1e-5,
            ..HyperParams::default()
        };
        assert!(hp.validate().is_err());
        let hp = HyperParams {
            decision_threshold: 1.0,
            ..HyperParams::default()
        };
        assert!(hp.validate().is_err());
        let hp = HyperParams {
            layers: 0,
            ..HyperParams::default()
        };
        assert!(hp.validate().is_err());
        let hp = HyperParams {
            tau_r: 0.0,
            ..HyperParams::default()
        };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let hp: HyperParams = toml::from_str("alpha = 0.5\nwindow = 3\n").unwrap();
        assert_eq!(hp.alpha, 0.5);
        assert_eq!(hp.window, 3);
        assert_eq!(hp.beta, 0.4);
    }
}
