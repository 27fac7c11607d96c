//! Config-driven experiments: data loading, the run loop and its artifacts.
//!
//! [`run_experiment`] is a pure function of an [`ExperimentConfig`] (plus a
//! worker count that does not affect results); [`RunArtifacts::write`] lays
//! the outcome out as the files described in [`output`].

pub mod compare;
pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{holdout_split, load_csv, load_idx, partition, synth_blobs, LabeledDataset, Profile};
use crate::engine::{run_rounds, Federation, RunState};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelSpec};
use crate::rng::{derive_seed, Stream};

pub use compare::{cmd_compare, inspect_report, Comparison, RunSummary};
pub use config::{load_config, parse_config, ConfigOverrides, DataSource, ExperimentConfig};
pub use output::{FinalWeight, LedgerFile};

/// Training pool and test set described by `cfg.data`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let truncate = |d: LabeledDataset| -> Result<LabeledDataset> {
        match cfg.data.max_samples {
            Some(n) if n < d.len() => d.subset(&(0..n).collect::<Vec<_>>()),
            _ => Ok(d),
        }
    };
    let holdout_seed = derive_seed(cfg.partition.seed, &[Stream::Split as u64]);
    let (train, test) = match &cfg.data.source {
        DataSource::Synthetic(s) => {
            let all = synth_blobs(s.classes, s.per_class, s.dim, s.separation, s.seed);
            holdout_split(&truncate(all)?, cfg.data.test_fraction, holdout_seed)?
        }
        DataSource::Idx { images, labels, test } => {
            let train = truncate(load_idx(images, labels)?)?;
            match test {
                Some((ti, tl)) => (train, load_idx(ti, tl)?),
                None => holdout_split(&train, cfg.data.test_fraction, holdout_seed)?,
            }
        }
        DataSource::Csv { path, test_path } => {
            let train = truncate(load_csv(path)?)?;
            match test_path {
                Some(t) => (train, load_csv(t)?),
                None => holdout_split(&train, cfg.data.test_fraction, holdout_seed)?,
            }
        }
    };
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: test.dim(),
        });
    }
    Ok((train, test))
}

/// Load data, partition it and size the model.
pub fn build_federation(cfg: &ExperimentConfig) -> Result<Federation> {
    let (train, test) = load_data(cfg)?;
    let parts = partition(&train, &cfg.partition)?;
    let num_classes = train.num_classes().max(test.num_classes());
    let spec = cfg.model_spec(train.dim(), num_classes);
    spec.validate()?;
    Ok(Federation {
        spec,
        clients: parts.clients,
        validation: parts.validation,
        test,
    })
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub profiles: Vec<Profile>,
    pub shard_sizes: Vec<usize>,
    pub state: RunState,
}

impl RunArtifacts {
    pub fn final_weights(&self) -> Vec<FinalWeight> {
        output::final_weights(self.config.strategy, &self.state.ledger, &self.profiles, &self.shard_sizes)
    }

    pub fn ledger_file(&self) -> Result<LedgerFile> {
        LedgerFile::build(
            self.config.strategy,
            self.config.utility.as_str(),
            &self.state.ledger,
            &self.state.metrics,
        )
    }

    /// Write every artifact file into `dir`, creating it if needed.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        output::write_text(&dir.join(output::CONFIG_ECHO_FILE), &self.config.to_echo())?;
        output::write_text(
            &dir.join(output::METRICS_FILE),
            &output::metrics_to_string(&self.state.metrics),
        )?;
        output::write_text(
            &dir.join(output::WEIGHTS_FILE),
            &output::weights_to_string(&self.final_weights()),
        )?;
        output::write_text(&dir.join(output::LEDGER_FILE), &self.ledger_file()?.to_json())?;
        output::write_model(dir.join(output::MODEL_FILE), &self.state.theta)
    }
}

fn thread_pool(jobs: usize) -> Result<Option<rayon::ThreadPool>> {
    if jobs <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map(Some)
        .map_err(|e| Error::structural(format!("cannot start {jobs} workers: {e}")))
}

/// Run `cfg` to completion with `jobs` client-training workers.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<RunArtifacts> {
    let fed = build_federation(cfg)?;
    let theta = init_params(&fed.spec, cfg.init_seed)?;
    let pool = thread_pool(jobs)?;
    let state = run_rounds(RunState::new(theta), &fed, &cfg.engine_config(), pool.as_ref())?;
    Ok(RunArtifacts {
        config: cfg.clone(),
        spec: fed.spec,
        profiles: fed.clients.iter().map(|c| c.profile).collect(),
        shard_sizes: fed.clients.iter().map(|c| c.data.len()).collect(),
        state,
    })
}

/// Load, run and write a config; returns the output directory.
pub fn cmd_run(config_path: impl AsRef<Path>, overrides: &ConfigOverrides, jobs: usize) -> Result<PathBuf> {
    let cfg = load_config(config_path, overrides)?;
    let artifacts = run_experiment(&cfg, jobs)?;
    artifacts.write(&cfg.output_dir)?;
    Ok(cfg.output_dir)
}
