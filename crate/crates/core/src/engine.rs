//! The federated round loop.
//!
//! Each round selects clients, trains them from the current global model
//! (possibly in parallel), computes the server's validation reference when
//! the policy needs one, updates the contribution ledger, derives weights and
//! aggregates. Client results are gathered into id order before any
//! reduction, so the outcome does not depend on the worker count.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contribution::{
    round_contributions, ContributionLedger, EvalContext, RoundRecord, ShapleyConfig, UtilityKind,
};
use crate::data::{ClientDataset, ClientId, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{evaluate, sgd_steps, ModelSpec};
use crate::params::ParamVector;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::strategies::{
    aggregate, cgsv_scores, datasize_weights, fedtsv_weights, loo_scores, PolicyKind, RoundWeights,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub total_rounds: usize,
    pub clients_per_round: usize,
    pub local_epochs: usize,
    /// Fixed number of local SGD steps; overrides `local_epochs` when set.
    pub local_steps: Option<usize>,
    pub lr: f64,
    pub batch_size: usize,
    /// Batch size of the server validation pass; defaults to `batch_size`.
    pub validation_batch_size: Option<usize>,
    /// Steps of the server validation pass; defaults to the step count of one
    /// local schedule on an average-sized shard.
    pub validation_steps: Option<usize>,
    pub selection_seed: u64,
}

impl RoundSchedule {
    pub fn validate(&self, n_clients: usize) -> Result<()> {
        if self.clients_per_round == 0 || self.clients_per_round > n_clients {
            return Err(Error::structural(format!(
                "clients_per_round={} must lie in 1..={n_clients}",
                self.clients_per_round
            )));
        }
        if self.batch_size == 0 || self.validation_batch_size == Some(0) {
            return Err(Error::structural("batch sizes must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::structural("lr must be finite and nonnegative"));
        }
        if self.local_steps.is_none() && self.local_epochs == 0 {
            return Err(Error::structural("local_epochs must be positive"));
        }
        Ok(())
    }

    /// Local SGD steps for a shard of `n` samples.
    pub fn client_steps(&self, n: usize) -> usize {
        self.local_steps
            .unwrap_or_else(|| self.local_epochs * n.div_ceil(self.batch_size))
    }

    /// Steps of the server validation pass given the mean client shard size.
    pub fn validation_steps_for(&self, mean_shard: f64) -> usize {
        self.validation_steps.unwrap_or_else(|| {
            self.local_steps.unwrap_or_else(|| {
                self.local_epochs * (mean_shard / self.batch_size as f64).ceil() as usize
            })
        })
    }
}

/// `k` distinct client ids drawn uniformly without replacement, sorted.
pub fn select_clients(n_clients: usize, k: usize, round: usize, seed: u64) -> Result<Vec<ClientId>> {
    if k > n_clients {
        return Err(Error::structural(format!(
            "cannot select {k} clients out of {n_clients}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Selection, &[round as u64]);
    let mut ids = sample(&mut rng, n_clients, k).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Seed of client `id`'s batch sampler in `round`.
pub fn client_round_seed(master_seed: u64, id: ClientId, round: usize) -> u64 {
    derive_seed(master_seed, &[Stream::ClientTraining as u64, id as u64, round as u64])
}

pub fn validation_round_seed(master_seed: u64, round: usize) -> u64 {
    derive_seed(master_seed, &[Stream::ValidationPass as u64, round as u64])
}

/// Everything a run reads but never mutates.
#[derive(Debug, Clone)]
pub struct Federation {
    pub spec: ModelSpec,
    pub clients: Vec<ClientDataset>,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

impl Federation {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn mean_shard_size(&self) -> f64 {
        let total: usize = self.clients.iter().map(|c| c.data.len()).sum();
        total as f64 / self.clients.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub schedule: RoundSchedule,
    pub policy: PolicyKind,
    pub utility: UtilityKind,
    pub shapley: ShapleyConfig,
    pub master_seed: u64,
    /// Record per-round wall-clock time (makes metrics non-reproducible).
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub selected: Vec<ClientId>,
    /// Raw weights used for aggregation.
    pub weights: BTreeMap<ClientId, f64>,
    pub fallback_used: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub theta: ParamVector,
    pub round: usize,
    pub ledger: ContributionLedger,
    pub metrics: Vec<RoundMetrics>,
}

impl RunState {
    pub fn new(theta: ParamVector) -> Self {
        Self {
            theta,
            round: 0,
            ledger: ContributionLedger::new(),
            metrics: Vec::new(),
        }
    }
}

/// Intermediate quantities of one round, for inspection and tests.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    pub selected: Vec<ClientId>,
    pub client_models: BTreeMap<ClientId, ParamVector>,
    pub val_delta: Option<ParamVector>,
    pub contributions: Option<BTreeMap<ClientId, f64>>,
    pub weights: RoundWeights,
}

/// Server reference delta: `K` SGD steps on the validation set from `theta`.
pub fn validation_reference(
    fed: &Federation,
    cfg: &EngineConfig,
    theta: &ParamVector,
    round: usize,
) -> Result<ParamVector> {
    let s = &cfg.schedule;
    let steps = s.validation_steps_for(fed.mean_shard_size());
    let batch = s.validation_batch_size.unwrap_or(s.batch_size);
    let end = sgd_steps(
        &fed.spec,
        theta,
        &fed.validation,
        steps,
        s.lr,
        batch,
        validation_round_seed(cfg.master_seed, round),
    )?;
    end.sub(theta)
}

fn train_clients(
    fed: &Federation,
    cfg: &EngineConfig,
    theta: &ParamVector,
    selected: &[ClientId],
    round: usize,
    pool: Option<&rayon::ThreadPool>,
) -> Result<BTreeMap<ClientId, ParamVector>> {
    let s = &cfg.schedule;
    let train = |&id: &ClientId| -> Result<(ClientId, ParamVector)> {
        let client = fed
            .clients
            .get(id)
            .ok_or_else(|| Error::structural(format!("unknown client {id}")))?;
        let model = sgd_steps(
            &fed.spec,
            theta,
            &client.data,
            s.client_steps(client.data.len()),
            s.lr,
            s.batch_size,
            client_round_seed(cfg.master_seed, id, round),
        )?;
        Ok((id, model))
    };
    // collect() keeps input order, so the gather is id-ordered for any pool size
    let results: Vec<Result<(ClientId, ParamVector)>> = match pool {
        Some(p) if p.current_num_threads() > 1 => p.install(|| selected.par_iter().map(train).collect()),
        _ => selected.iter().map(train).collect(),
    };
    results.into_iter().collect()
}

/// Advance `state` by one round, returning the round's intermediates too.
pub fn run_round_traced(
    mut state: RunState,
    fed: &Federation,
    cfg: &EngineConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(RunState, RoundTrace)> {
    let started = Instant::now();
    let t = state.round;
    let s = &cfg.schedule;
    let selected = select_clients(fed.n_clients(), s.clients_per_round, t, s.selection_seed)?;
    let theta = &state.theta;
    let client_models = train_clients(fed, cfg, theta, &selected, t, pool)?;
    let deltas = || -> Result<BTreeMap<ClientId, ParamVector>> {
        client_models
            .iter()
            .map(|(&id, m)| Ok((id, m.sub(theta)?)))
            .collect()
    };

    let mut val_delta = None;
    let contributions = match cfg.policy {
        PolicyKind::FedTsv => {
            let reference = validation_reference(fed, cfg, theta, t)?;
            let record = RoundRecord::new(t, deltas()?, reference.clone())?;
            val_delta = Some(reference);
            let ctx = EvalContext {
                spec: &fed.spec,
                theta,
                validation: &fed.validation,
            };
            let rc = round_contributions(&record, cfg.utility, &cfg.shapley, Some(&ctx))?;
            Some(rc.values)
        }
        PolicyKind::Cgsv => Some(cgsv_scores(&deltas()?)?),
        PolicyKind::Loo => Some(loo_scores(&fed.spec, theta, &deltas()?, &fed.validation)?),
        PolicyKind::Uniform | PolicyKind::DataSize => None,
    };
    state
        .ledger
        .accumulate(contributions.as_ref().unwrap_or(&BTreeMap::new()), t)?;

    let weights = match cfg.policy {
        PolicyKind::Uniform => RoundWeights::uniform(&selected),
        PolicyKind::DataSize => {
            let sizes = selected.iter().map(|&id| (id, fed.clients[id].data.len())).collect();
            datasize_weights(&selected, &sizes)?
        }
        PolicyKind::FedTsv | PolicyKind::Cgsv | PolicyKind::Loo => fedtsv_weights(&state.ledger, &selected),
    };

    let next = aggregate(&client_models, &weights)?;
    let ev = evaluate(&fed.spec, &next, &fed.test)?;
    let wall_ms = if cfg.record_wall_time {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    state.metrics.push(RoundMetrics {
        round: t,
        test_accuracy: ev.accuracy,
        test_loss: ev.loss,
        selected: selected.clone(),
        weights: weights.weights.clone(),
        fallback_used: weights.fallback_used,
        wall_ms,
    });
    state.theta = next;
    state.round += 1;
    Ok((
        state,
        RoundTrace {
            selected,
            client_models,
            val_delta,
            contributions,
            weights,
        },
    ))
}

pub fn run_round(
    state: RunState,
    fed: &Federation,
    cfg: &EngineConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<RunState> {
    run_round_traced(state, fed, cfg, pool).map(|(s, _)| s)
}

/// Run `cfg.schedule.total_rounds` rounds from `state`; errors carry the round index.
pub fn run_rounds(
    mut state: RunState,
    fed: &Federation,
    cfg: &EngineConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<RunState> {
    cfg.schedule.validate(fed.n_clients())?;
    if cfg.policy == PolicyKind::FedTsv && cfg.utility.needs_model_evaluation() {
        log::warn!(
            "utility {} evaluates a model on the validation set for every coalition",
            cfg.utility
        );
    }
    while state.round < cfg.schedule.total_rounds {
        let round = state.round;
        state = run_round(state, fed, cfg, pool).map_err(|e| Error::Round {
            round,
            source: Box::new(e),
        })?;
        log::debug!(
            "round {round}: test accuracy {:.4}",
            state.metrics.last().map_or(0.0, |m| m.test_accuracy)
        );
    }
    Ok(state)
}
