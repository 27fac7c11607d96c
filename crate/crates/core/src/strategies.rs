//! Aggregation-weight policies and the weighted model average.
//!
//! Ledger-based policies (FedTSV, CGSV, LOO) emit `max(0, cumulative score)`
//! for each selected client and fall back to uniform weights when every such
//! value is zero. No policy ever produces a negative weight.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contribution::ContributionLedger;
use crate::data::{ClientId, LabeledDataset};
use crate::error::{check_dims, Error, Result};
use crate::model::{evaluate, ModelSpec};
use crate::params::{cosine_similarity, mean, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Uniform,
    DataSize,
    FedTsv,
    Cgsv,
    Loo,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Uniform,
        PolicyKind::DataSize,
        PolicyKind::FedTsv,
        PolicyKind::Cgsv,
        PolicyKind::Loo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Uniform => "uniform",
            PolicyKind::DataSize => "datasize",
            PolicyKind::FedTsv => "fedtsv",
            PolicyKind::Cgsv => "cgsv",
            PolicyKind::Loo => "loo",
        }
    }

    /// Policies whose weights come from a cumulative contribution ledger.
    pub fn uses_ledger(self) -> bool {
        matches!(self, PolicyKind::FedTsv | PolicyKind::Cgsv | PolicyKind::Loo)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "data-size" {
            return Ok(PolicyKind::DataSize);
        }
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Raw (unnormalized) nonnegative weights over one round's selected clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundWeights {
    pub weights: BTreeMap<ClientId, f64>,
    pub fallback_used: bool,
}

impl RoundWeights {
    pub fn uniform(selected: &[ClientId]) -> Self {
        Self {
            weights: selected.iter().map(|&id| (id, 1.0)).collect(),
            fallback_used: false,
        }
    }

    /// Truncate at zero; substitute uniform weights if nothing positive remains.
    pub fn truncated(raw: BTreeMap<ClientId, f64>) -> Self {
        let weights: BTreeMap<ClientId, f64> = raw.into_iter().map(|(id, v)| (id, v.max(0.0))).collect();
        if weights.values().all(|&w| w == 0.0) {
            Self {
                weights: weights.keys().map(|&id| (id, 1.0)).collect(),
                fallback_used: true,
            }
        } else {
            Self {
                weights,
                fallback_used: false,
            }
        }
    }

    /// `alpha_i / sum_j alpha_j`.
    pub fn normalized(&self) -> BTreeMap<ClientId, f64> {
        let total: f64 = self.weights.values().sum();
        self.weights.iter().map(|(&id, &w)| (id, w / total)).collect()
    }
}

pub fn datasize_weights(selected: &[ClientId], sizes: &BTreeMap<ClientId, usize>) -> Result<RoundWeights> {
    let raw = selected
        .iter()
        .map(|id| {
            sizes
                .get(id)
                .map(|&n| (*id, n as f64))
                .ok_or_else(|| Error::structural(format!("no dataset size for client {id}")))
        })
        .collect::<Result<_>>()?;
    Ok(RoundWeights::truncated(raw))
}

/// `alpha_i = max(0, cumulative_i)` over `selected`, uniform if all zero.
pub fn fedtsv_weights(ledger: &ContributionLedger, selected: &[ClientId]) -> RoundWeights {
    RoundWeights::truncated(selected.iter().map(|&id| (id, ledger.cumulative(id))).collect())
}

/// Cosine of each delta with the mean of all deltas in the round.
pub fn cgsv_scores(deltas: &BTreeMap<ClientId, ParamVector>) -> Result<BTreeMap<ClientId, f64>> {
    let all: Vec<&ParamVector> = deltas.values().collect();
    let reference = mean(&all)?;
    deltas
        .iter()
        .map(|(&id, d)| Ok((id, cosine_similarity(d, &reference)?)))
        .collect()
}

/// Single-round CGSV weights, `max(0, cos(delta_i, mean delta))`.
pub fn cgsv_weights(deltas: &BTreeMap<ClientId, ParamVector>) -> Result<RoundWeights> {
    Ok(RoundWeights::truncated(cgsv_scores(deltas)?))
}

/// Leave-one-out margins `U(all) - U(all \ {i})`, where `U(S)` is the
/// validation accuracy of `theta + mean(deltas in S)` and `U(empty) = acc(theta)`.
pub fn loo_scores(
    spec: &ModelSpec,
    theta: &ParamVector,
    deltas: &BTreeMap<ClientId, ParamVector>,
    validation: &LabeledDataset,
) -> Result<BTreeMap<ClientId, f64>> {
    if deltas.is_empty() {
        return Err(Error::structural("leave-one-out needs at least one client"));
    }
    let utility = |members: Vec<&ParamVector>| -> Result<f64> {
        let model = if members.is_empty() {
            theta.clone()
        } else {
            theta.add(&mean(&members)?)?
        };
        Ok(evaluate(spec, &model, validation)?.accuracy)
    };
    let full = utility(deltas.values().collect())?;
    deltas
        .keys()
        .map(|&i| {
            let rest: Vec<&ParamVector> = deltas.iter().filter(|(&j, _)| j != i).map(|(_, d)| d).collect();
            Ok((i, full - utility(rest)?))
        })
        .collect()
}

/// Single-round LOO weights, `max(0, margin_i)`.
pub fn loo_weights(
    spec: &ModelSpec,
    theta: &ParamVector,
    deltas: &BTreeMap<ClientId, ParamVector>,
    validation: &LabeledDataset,
) -> Result<RoundWeights> {
    Ok(RoundWeights::truncated(loo_scores(spec, theta, deltas, validation)?))
}

/// `sum_i (alpha_i / sum_j alpha_j) * model_i`, accumulated in client-id order.
pub fn aggregate(client_models: &BTreeMap<ClientId, ParamVector>, weights: &RoundWeights) -> Result<ParamVector> {
    if client_models.is_empty() {
        return Err(Error::structural("aggregation over no clients"));
    }
    if !client_models.keys().eq(weights.weights.keys()) {
        return Err(Error::structural("weight ids do not match client model ids"));
    }
    let total: f64 = weights.weights.values().sum();
    if total.is_nan() || total <= 0.0 || weights.weights.values().any(|&w| w < 0.0) {
        return Err(Error::structural("aggregation weights must be nonnegative with a positive sum"));
    }
    let dim = client_models.values().next().map(ParamVector::dim).unwrap_or(0);
    let mut acc = vec![0.0; dim];
    for (id, model) in client_models {
        check_dims(dim, model.dim())?;
        let coef = weights.weights[id] / total;
        for (a, x) in acc.iter_mut().zip(model.as_slice()) {
            *a += coef * x;
        }
    }
    ParamVector::new(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn fedtsv_truncates_and_falls_back() {
        let mut ledger = ContributionLedger::new();
        ledger
            .accumulate(&BTreeMap::from([(1, 0.6), (2, -0.2), (3, 0.1)]), 0)
            .unwrap();
        let w = fedtsv_weights(&ledger, &[1, 2, 3]);
        assert_eq!(w.weights, BTreeMap::from([(1, 0.6), (2, 0.0), (3, 0.1)]));
        assert!(!w.fallback_used);

        let w = fedtsv_weights(&ledger, &[2]);
        assert!(w.fallback_used);
        assert_eq!(w.weights, BTreeMap::from([(2, 1.0)]));

        let fresh = ContributionLedger::new();
        let w = fedtsv_weights(&fresh, &[4, 5]);
        assert!(w.fallback_used);
        assert_eq!(w.weights, BTreeMap::from([(4, 1.0), (5, 1.0)]));
    }

    #[test]
    fn cgsv_identical_and_single() {
        let same = BTreeMap::from([(1, pv(&[1.0, 2.0])), (2, pv(&[1.0, 2.0]))]);
        let w = cgsv_weights(&same).unwrap();
        for v in w.weights.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let single = BTreeMap::from([(7, pv(&[0.3, -0.1]))]);
        assert!((cgsv_scores(&single).unwrap()[&7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cgsv_rewards_a_dominating_antiparallel_update() {
        // client 2 points against client 1 but is ten times larger, so the
        // mean follows it and client 2 scores positive while client 1 does not
        let deltas = BTreeMap::from([(1, pv(&[1.0, 0.5])), (2, pv(&[-10.0, -5.0]))]);
        let s = cgsv_scores(&deltas).unwrap();
        let reference = [(1.0 - 10.0) / 2.0, (0.5 - 5.0) / 2.0];
        let cos = |a: [f64; 2]| {
            let dot = a[0] * reference[0] + a[1] * reference[1];
            dot / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (reference[0] * reference[0] + reference[1] * reference[1]).sqrt())
        };
        assert!(cos([-10.0, -5.0]) > 0.0 && cos([1.0, 0.5]) < 0.0);
        assert!(s[&2] > 0.0);
        assert!(s[&1] < 0.0);
        assert!((s[&2] - cos([-10.0, -5.0])).abs() < 1e-12);
    }

    fn toy_validation() -> (ModelSpec, LabeledDataset) {
        let spec = ModelSpec::softmax(2, 2);
        let val = LabeledDataset::new(
            vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, 0.2, 0.8],
            2,
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        (spec, val)
    }

    #[test]
    fn loo_symmetry_single_and_noise() {
        let (spec, val) = toy_validation();
        let theta = ParamVector::zeros(6);
        let good = pv(&[1.0, -1.0, -1.0, 1.0, 0.0, 0.0]);

        let same = BTreeMap::from([(1, good.clone()), (2, good.clone()), (3, good.clone())]);
        let m = loo_scores(&spec, &theta, &same, &val).unwrap();
        assert!(m.values().all(|&v| v == m[&1]));

        let single = BTreeMap::from([(4, good.clone())]);
        let m = loo_scores(&spec, &theta, &single, &val).unwrap();
        let with = evaluate(&spec, &good, &val).unwrap().accuracy;
        let without = evaluate(&spec, &theta, &val).unwrap().accuracy;
        assert!((m[&4] - (with - without)).abs() < 1e-15);

        let noise = pv(&[0.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        let mixed = BTreeMap::from([(1, good.clone()), (2, good.clone()), (9, noise)]);
        let m = loo_scores(&spec, &theta, &mixed, &val).unwrap();
        assert!((m[&9] + 0.25).abs() < 1e-15);
        assert!((m[&1] - 0.25).abs() < 1e-15);
        let w = loo_weights(&spec, &theta, &mixed, &val).unwrap();
        assert_eq!(w.weights[&9], 0.0);
    }

    #[test]
    fn aggregate_cases() {
        let a = pv(&[1.0, 4.0]);
        let b = pv(&[3.0, -2.0]);
        let models = BTreeMap::from([(1, a.clone()), (2, b.clone())]);
        let uni = aggregate(&models, &RoundWeights::uniform(&[1, 2])).unwrap();
        assert_eq!(uni, pv(&[2.0, 1.0]));

        let one = RoundWeights {
            weights: BTreeMap::from([(1, 0.0), (2, 1.0)]),
            fallback_used: false,
        };
        assert_eq!(aggregate(&models, &one).unwrap(), b);

        let w = RoundWeights {
            weights: BTreeMap::from([(1, 2.0), (2, 1.0)]),
            fallback_used: false,
        };
        let got = aggregate(&models, &w).unwrap();
        for j in 0..2 {
            let oracle = (2.0 * a.as_slice()[j] + b.as_slice()[j]) / 3.0;
            assert!((got.as_slice()[j] - oracle).abs() < 1e-12);
        }

        let wrong = RoundWeights::uniform(&[1, 3]);
        assert!(aggregate(&models, &wrong).is_err());
    }

    #[test]
    fn datasize_uses_counts() {
        let w = datasize_weights(&[1, 2], &BTreeMap::from([(1, 30), (2, 10)])).unwrap();
        assert_eq!(w.normalized()[&1], 0.75);
        assert!(datasize_weights(&[3], &BTreeMap::new()).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
        }
    }

    fn models_and_weights() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..6, 1usize..8).prop_flat_map(|(k, d)| {
            (
                proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, d), k),
                proptest::collection::vec(0.0f64..10.0, k),
            )
        })
    }

    proptest! {
        #[test]
        fn aggregation_invariants((models, raw) in models_and_weights(), c in 0.01f64..100.0) {
            let models: BTreeMap<ClientId, ParamVector> =
                models.into_iter().enumerate().map(|(i, m)| (i, ParamVector::new(m).unwrap())).collect();
            let w = RoundWeights::truncated(raw.iter().copied().enumerate().collect());
            prop_assert!(w.weights.values().all(|&x| x >= 0.0));
            let total: f64 = w.normalized().values().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);

            let theta = aggregate(&models, &w).unwrap();
            let scaled = RoundWeights {
                weights: w.weights.iter().map(|(&i, &x)| (i, x * c)).collect(),
                fallback_used: w.fallback_used,
            };
            let theta_scaled = aggregate(&models, &scaled).unwrap();
            for j in 0..theta.dim() {
                let col: Vec<f64> = models.values().map(|m| m.as_slice()[j]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let x = theta.as_slice()[j];
                prop_assert!(x >= lo - 1e-12 * lo.abs().max(1.0) && x <= hi + 1e-12 * hi.abs().max(1.0));
                prop_assert!((x - theta_scaled.as_slice()[j]).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
