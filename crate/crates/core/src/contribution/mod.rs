//! Per-round coalition utilities and client contribution estimates.
//!
//! Within round `t`, a coalition `S` of the selected clients is represented by
//! the mean of its members' model deltas (`0` for the empty coalition). The
//! trajectory utility scores it by proximity to the server's validation
//! reference delta:
//!
//! ```text
//! v(S) = 1 / (1 + Dist(delta_S, delta_val)^2 / sigma),   sigma = max(|delta_val|^2, EPS_SIGMA)
//! ```
//!
//! Shapley values of `v` are estimated per round and summed across rounds in
//! a [`ContributionLedger`].

mod ledger;
mod shapley;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ClientId, LabeledDataset};
use crate::error::{check_dims, Error, Result};
use crate::model::{evaluate, ModelSpec};
use crate::params::{cosine_similarity, squared_distance, ParamVector};
use crate::rng::derive_seed;

pub use ledger::{ContributionLedger, LedgerEntry};
pub use shapley::{exact_shapley, monte_carlo_shapley, Coalition, ShapleyValues, MAX_EXACT_PLAYERS};

/// Floor on the trajectory normalizer.
pub const EPS_SIGMA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    TsvEuclidean,
    /// Dist is the angle `arccos(cos(a, b))`; a zero vector is at angle pi/2.
    TsvAngular,
    ValidationAccuracy,
    NegativeValidationLoss,
}

impl UtilityKind {
    pub const ALL: [UtilityKind; 4] = [
        UtilityKind::TsvEuclidean,
        UtilityKind::TsvAngular,
        UtilityKind::ValidationAccuracy,
        UtilityKind::NegativeValidationLoss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UtilityKind::TsvEuclidean => "tsv-euclidean",
            UtilityKind::TsvAngular => "tsv-angular",
            UtilityKind::ValidationAccuracy => "validation-accuracy",
            UtilityKind::NegativeValidationLoss => "negative-validation-loss",
        }
    }

    /// Whether coalition scoring needs a model evaluation on the validation set.
    pub fn needs_model_evaluation(self) -> bool {
        matches!(
            self,
            UtilityKind::ValidationAccuracy | UtilityKind::NegativeValidationLoss
        )
    }
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for UtilityKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown utility `{s}`"))
    }
}

/// One round's client deltas and validation reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    round: usize,
    selected: Vec<ClientId>,
    deltas: BTreeMap<ClientId, ParamVector>,
    val_delta: ParamVector,
    sigma: f64,
}

impl RoundRecord {
    /// Build a record with `sigma = compute_sigma(val_delta)`.
    pub fn new(round: usize, deltas: BTreeMap<ClientId, ParamVector>, val_delta: ParamVector) -> Result<Self> {
        let sigma = compute_sigma(&val_delta);
        Self::with_sigma(round, deltas, val_delta, sigma)
    }

    pub fn with_sigma(
        round: usize,
        deltas: BTreeMap<ClientId, ParamVector>,
        val_delta: ParamVector,
        sigma: f64,
    ) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::structural("a round record needs at least one client"));
        }
        for d in deltas.values() {
            check_dims(val_delta.dim(), d.dim())?;
        }
        if !(sigma >= EPS_SIGMA && sigma.is_finite()) {
            return Err(Error::structural(format!("sigma {sigma} below floor {EPS_SIGMA}")));
        }
        Ok(Self {
            round,
            selected: deltas.keys().copied().collect(),
            deltas,
            val_delta,
            sigma,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Selected client ids in ascending order.
    pub fn selected(&self) -> &[ClientId] {
        &self.selected
    }

    pub fn deltas(&self) -> &BTreeMap<ClientId, ParamVector> {
        &self.deltas
    }

    pub fn val_delta(&self) -> &ParamVector {
        &self.val_delta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn positions_to_ids(&self, c: Coalition) -> impl Iterator<Item = ClientId> + '_ {
        c.positions().map(move |p| self.selected[p])
    }

    /// Mean delta of the coalition given as player positions.
    fn mask_delta(&self, c: Coalition, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if c.is_empty() {
            return;
        }
        for id in self.positions_to_ids(c) {
            for (o, x) in out.iter_mut().zip(self.deltas[&id].as_slice()) {
                *o += x;
            }
        }
        let k = c.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
    }

    fn coalition_of(&self, ids: &[ClientId]) -> Result<Coalition> {
        let mut c = Coalition::EMPTY;
        for id in ids {
            let pos = self
                .selected
                .binary_search(id)
                .map_err(|_| Error::structural(format!("client {id} was not selected in round {}", self.round)))?;
            c = c.with(pos);
        }
        Ok(c)
    }
}

/// `max(|val_delta|^2, EPS_SIGMA)`.
pub fn compute_sigma(val_delta: &ParamVector) -> f64 {
    val_delta.norm_squared().max(EPS_SIGMA)
}

/// Mean delta of `coalition`; the zero vector for the empty coalition.
pub fn coalition_delta(record: &RoundRecord, coalition: &[ClientId]) -> Result<ParamVector> {
    let c = record.coalition_of(coalition)?;
    let mut out = vec![0.0; record.val_delta.dim()];
    record.mask_delta(c, &mut out);
    ParamVector::new(out)
}

fn tsv_from_delta(record: &RoundRecord, delta: &[f64], angular: bool) -> f64 {
    let dist_sq = if angular {
        let a = ParamVector::from_vec_unchecked(delta.to_vec());
        let cos = cosine_similarity(&a, &record.val_delta).expect("dims checked at construction");
        cos.acos().powi(2)
    } else {
        squared_distance(delta, record.val_delta.as_slice())
    };
    1.0 / (1.0 + dist_sq / record.sigma)
}

/// Trajectory utility of `coalition` under the Euclidean distance.
pub fn tsv_utility(record: &RoundRecord, coalition: &[ClientId]) -> Result<f64> {
    let delta = coalition_delta(record, coalition)?;
    Ok(tsv_from_delta(record, delta.as_slice(), false))
}

/// Model and data needed by the validation-accuracy and validation-loss utilities.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub spec: &'a ModelSpec,
    pub theta: &'a ParamVector,
    pub validation: &'a LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapleyConfig {
    /// Use exact enumeration when the round has at most this many clients.
    pub exact_threshold: usize,
    pub mc_permutations: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        Self {
            exact_threshold: 12,
            mc_permutations: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundContributions {
    pub values: BTreeMap<ClientId, f64>,
    pub evaluations: usize,
    pub exact: bool,
}

/// Shapley values of the selected clients for one round's utility.
pub fn round_contributions(
    record: &RoundRecord,
    kind: UtilityKind,
    estimator: &ShapleyConfig,
    eval: Option<&EvalContext<'_>>,
) -> Result<RoundContributions> {
    let eval = match (kind.needs_model_evaluation(), eval) {
        (true, None) => {
            return Err(Error::structural(format!(
                "utility {kind} needs a model and validation set"
            )))
        }
        (true, Some(e)) => {
            check_dims(e.theta.dim(), record.val_delta.dim())?;
            Some(e)
        }
        (false, _) => None,
    };

    let mut buf = vec![0.0; record.val_delta.dim()];
    let utility = |c: Coalition| -> Result<f64> {
        record.mask_delta(c, &mut buf);
        match kind {
            UtilityKind::TsvEuclidean => Ok(tsv_from_delta(record, &buf, false)),
            UtilityKind::TsvAngular => Ok(tsv_from_delta(record, &buf, true)),
            UtilityKind::ValidationAccuracy | UtilityKind::NegativeValidationLoss => {
                let e = eval.expect("checked above");
                for (b, t) in buf.iter_mut().zip(e.theta.as_slice()) {
                    *b += t;
                }
                let theta_s = ParamVector::new(buf.clone())?;
                let ev = evaluate(e.spec, &theta_s, e.validation)?;
                Ok(if kind == UtilityKind::ValidationAccuracy {
                    ev.accuracy
                } else {
                    -ev.loss
                })
            }
        }
    };

    let players = record.selected();
    let exact = players.len() <= estimator.exact_threshold.min(MAX_EXACT_PLAYERS);
    let sv = if exact {
        exact_shapley(players, utility)?
    } else {
        let seed = derive_seed(estimator.seed, &[record.round as u64]);
        monte_carlo_shapley(players, utility, estimator.mc_permutations, seed)?
    };
    Ok(RoundContributions {
        values: sv.values,
        evaluations: sv.evaluations,
        exact,
    })
}
