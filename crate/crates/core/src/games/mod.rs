//! Prediction with expert advice: investment losses, the Aggregating
//! Algorithm, its sleeping-experts extension, cluster-aware decision rules,
//! cluster meta-experts and the loss-bound machinery.

mod bounds;
mod clustered;

pub use bounds::{cluster_bound_advantage, regret_bound, ClusterBounds};
pub use clustered::{
    caa_prediction, caa_step, cluster_mean_decisions, ecaa_evolve, ecaa_step, ClusterAssignment,
    DecisionRule,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("no awake expert carries positive weight")]
    NoLiveExpert,
    #[error("wealth must be positive, got {0}")]
    NonPositiveWealth(f64),
    #[error("decision slice has length {got}, weight state expects {expected}")]
    DecisionArity { got: usize, expected: usize },
    #[error("expert {expert} is not assigned to a cluster")]
    UnassignedExpert { expert: usize },
    #[error("cluster cardinalities sum to {got}, expected N = {expected}")]
    CardinalityMismatch { got: usize, expected: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Investment game losses. Both are `-log` of a wealth factor, so they are
/// nonnegative and become infinite at the bankruptcy boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `-log(max(1 + rho*gamma*r, 0))`: gains reduce loss, losses raise it.
    LongShort,
    /// `-log(max(1 + rho*min(gamma*r, 0), 0))`: penalises losing epochs and
    /// ignores gains.
    Downside,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::LongShort => "long-short",
            LossKind::Downside => "downside",
        }
    }

    pub fn parse(s: &str) -> Option<LossKind> {
        match s {
            "long-short" | "long_short" => Some(LossKind::LongShort),
            "downside" => Some(LossKind::Downside),
            _ => None,
        }
    }
}

/// Per-decision loss for a return `r` under scaling `rho`.
pub fn loss(kind: LossKind, rho: f64, gamma: f64, r: f64) -> f64 {
    debug_assert!(gamma.abs() <= 1.0 + 1e-12, "decision out of [-1,1]: {gamma}");
    debug_assert!(rho > 0.0);
    let exposure = match kind {
        LossKind::LongShort => rho * gamma * r,
        LossKind::Downside => rho * (gamma * r).min(0.0),
    };
    let factor = (1.0 + exposure).max(0.0);
    if factor == 0.0 {
        f64::INFINITY
    } else {
        -factor.ln()
    }
}

/// Wealth after one epoch plus a bankruptcy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthOutcome {
    pub wealth: f64,
    pub bankrupt: bool,
}

/// `W * (1 + gamma * omega)`; a nonpositive result flags bankruptcy.
pub fn wealth_update(wealth: f64, gamma: f64, omega: f64) -> Result<WealthOutcome, GameError> {
    if !(wealth > 0.0) {
        return Err(GameError::NonPositiveWealth(wealth));
    }
    let next = wealth * (1.0 + gamma * omega);
    Ok(WealthOutcome {
        wealth: next.max(0.0),
        bankrupt: next <= 0.0,
    })
}

/// Exponential weights of an expert pool with the game parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub weights: Vec<f64>,
    pub eta: f64,
    pub rho: f64,
}

impl WeightState {
    pub fn uniform(n: usize, eta: f64, rho: f64) -> Self {
        WeightState {
            weights: vec![1.0 / n.max(1) as f64; n],
            eta,
            rho,
        }
    }

    pub fn with_weights(weights: Vec<f64>, eta: f64, rho: f64) -> Self {
        WeightState { weights, eta, rho }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn check_arity(&self, got: usize) -> Result<(), GameError> {
        if got == self.len() {
            Ok(())
        } else {
            Err(GameError::DecisionArity {
                got,
                expected: self.len(),
            })
        }
    }

    /// Predictions depend on weight ratios only, so the vector can be
    /// rescaled freely. Long runs shrink every weight towards zero; rescale
    /// before the whole pool underflows.
    pub(crate) fn guard_underflow(&mut self) {
        let max = self.weights.iter().cloned().fold(0.0f64, f64::max);
        if max > 0.0 && max < 1e-150 {
            for w in &mut self.weights {
                *w /= max;
            }
        }
    }
}

/// One step of the Aggregating Algorithm with every expert awake.
///
/// The prediction is the weight-normalised average of decisions (the
/// substitution rule); afterwards each weight is multiplied by
/// `exp(-eta * loss_i)`. Experts hitting infinite loss drop to weight zero.
pub fn aa_step(
    state: &mut WeightState,
    decisions: &[f64],
    outcome: f64,
    kind: LossKind,
) -> Result<f64, GameError> {
    state.check_arity(decisions.len())?;
    let total: f64 = state.weights.iter().sum();
    if !(total > 0.0) {
        return Err(GameError::NoLiveExpert);
    }
    // Normalise first, then combine (the substitution rule as written);
    // this keeps a lone expert's prediction bit-exact.
    let prediction = state
        .weights
        .iter()
        .zip(decisions)
        .map(|(w, g)| (w / total) * g)
        .sum::<f64>();
    let prediction = prediction.clamp(-1.0, 1.0);
    for (w, &gamma) in state.weights.iter_mut().zip(decisions) {
        let l = loss(kind, state.rho, gamma, outcome);
        *w *= (-state.eta * l).exp();
    }
    state.guard_underflow();
    Ok(prediction)
}

/// One step of the Aggregating Algorithm with sleeping experts.
///
/// Awake experts (`Some(gamma)`) are normalised among themselves for the
/// prediction and charged their own loss; sleeping experts are charged the
/// learner's loss, which preserves their relative weight. With no awake
/// expert the learner abstains (prediction 0) and weights stay put.
pub fn aa_sleeping_step(
    state: &mut WeightState,
    decisions: &[Option<f64>],
    outcome: f64,
    kind: LossKind,
) -> Result<f64, GameError> {
    state.check_arity(decisions.len())?;
    let awake_total: f64 = state
        .weights
        .iter()
        .zip(decisions)
        .filter_map(|(w, d)| d.map(|_| *w))
        .sum();
    let any_awake = decisions.iter().any(|d| d.is_some());
    if !any_awake {
        return Ok(0.0);
    }
    if !(awake_total > 0.0) {
        return Err(GameError::NoLiveExpert);
    }
    let prediction = state
        .weights
        .iter()
        .zip(decisions)
        .filter_map(|(w, d)| d.map(|g| (w / awake_total) * g))
        .sum::<f64>();
    let prediction = prediction.clamp(-1.0, 1.0);
    let learner_loss = loss(kind, state.rho, prediction, outcome);
    for (w, d) in state.weights.iter_mut().zip(decisions) {
        let l = match d {
            Some(gamma) => loss(kind, state.rho, *gamma, outcome),
            None => learner_loss,
        };
        *w *= (-state.eta * l).exp();
    }
    state.guard_underflow();
    Ok(prediction)
}
