//! Flat `key=value` experiment configuration.
//!
//! One setting per line, dotted namespaces, `#` comments. Every key has a
//! documented default (see [`KEYS`]); unknown keys and malformed values are
//! rejected with the key name and `file:line` location. Sub-seeds that are not
//! set explicitly are derived from `master_seed`, so overriding the master seed
//! moves every random stream at once.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::contribution::{ShapleyConfig, UtilityKind};
use crate::data::PartitionSpec;
use crate::engine::{EngineConfig, RoundSchedule};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::rng::{derive_seed, Stream};
use crate::strategies::PolicyKind;

/// Every accepted key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("master_seed", "0"),
    ("output_dir", "runs/out"),
    ("record_wall_time", "false"),
    ("data.source", "synthetic (synthetic | idx | csv)"),
    ("data.test_fraction", "0.2 (ignored when explicit test files are given)"),
    ("data.max_samples", "unset (use every training sample)"),
    ("data.synthetic.classes", "10"),
    ("data.synthetic.per_class", "200"),
    ("data.synthetic.dim", "20"),
    ("data.synthetic.separation", "4.0"),
    ("data.synthetic.seed", "derived from master_seed"),
    ("data.idx.images", "required for idx"),
    ("data.idx.labels", "required for idx"),
    ("data.idx.test_images", "unset"),
    ("data.idx.test_labels", "unset"),
    ("data.csv.path", "required for csv"),
    ("data.csv.test_path", "unset"),
    ("partition.n_clients", "10"),
    ("partition.n_iid", "n_clients - n_noniid - n_malicious"),
    ("partition.n_noniid", "0"),
    ("partition.n_malicious", "0"),
    ("partition.dirichlet_alpha", "0.1"),
    ("partition.validation_fraction", "0.05"),
    ("partition.shared_shuffle_map", "true"),
    ("partition.seed", "derived from master_seed"),
    ("model.kind", "softmax (softmax | mlp)"),
    ("model.hidden_width", "64"),
    ("model.init_seed", "derived from master_seed"),
    ("schedule.rounds", "50"),
    ("schedule.clients_per_round", "5"),
    ("schedule.local_epochs", "1"),
    ("schedule.local_steps", "unset (local_epochs passes over the shard)"),
    ("schedule.lr", "0.01"),
    ("schedule.batch_size", "64"),
    ("schedule.validation_batch_size", "unset (batch_size)"),
    ("schedule.validation_steps", "unset (one local schedule on a mean-sized shard)"),
    ("schedule.selection_seed", "derived from master_seed"),
    ("strategy", "fedtsv (uniform | datasize | fedtsv | cgsv | loo)"),
    ("utility", "tsv-euclidean (tsv-euclidean | tsv-angular | val-accuracy | neg-val-loss)"),
    ("shapley.exact_threshold", "12"),
    ("shapley.mc_permutations", "2000"),
    ("shapley.seed", "derived from master_seed"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticData),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test: Option<(PathBuf, PathBuf)>,
    },
    Csv {
        path: PathBuf,
        test_path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub test_fraction: f64,
    pub max_samples: Option<usize>,
}

impl DataConfig {
    /// Whether the test set is carved out of the training data.
    pub fn uses_holdout_test(&self) -> bool {
        match &self.source {
            DataSource::Synthetic(_) => true,
            DataSource::Idx { test, .. } => test.is_none(),
            DataSource::Csv { test_path, .. } => test_path.is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub record_wall_time: bool,
    pub data: DataConfig,
    pub partition: PartitionSpec,
    pub model_kind: ModelKind,
    pub hidden_width: usize,
    pub init_seed: u64,
    pub schedule: RoundSchedule,
    pub strategy: PolicyKind,
    pub utility: UtilityKind,
    pub shapley: ShapleyConfig,
}

/// Values supplied on the command line, applied before seeds are derived.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub output_dir: Option<PathBuf>,
    pub master_seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn model_spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        match self.model_kind {
            ModelKind::SoftmaxRegression => ModelSpec::softmax(input_dim, num_classes),
            ModelKind::Mlp1Hidden => ModelSpec::mlp(input_dim, self.hidden_width, num_classes),
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            schedule: self.schedule.clone(),
            policy: self.strategy,
            utility: self.utility,
            shapley: self.shapley,
            master_seed: self.master_seed,
            record_wall_time: self.record_wall_time,
        }
    }

    /// The fully resolved configuration as loadable `key=value` text.
    pub fn to_echo(&self) -> String {
        let mut kv: Vec<(&str, String)> = vec![
            ("master_seed", self.master_seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("record_wall_time", self.record_wall_time.to_string()),
            ("data.test_fraction", fmt_real(self.data.test_fraction)),
        ];
        if let Some(n) = self.data.max_samples {
            kv.push(("data.max_samples", n.to_string()));
        }
        match &self.data.source {
            DataSource::Synthetic(s) => {
                kv.push(("data.source", "synthetic".into()));
                kv.push(("data.synthetic.classes", s.classes.to_string()));
                kv.push(("data.synthetic.per_class", s.per_class.to_string()));
                kv.push(("data.synthetic.dim", s.dim.to_string()));
                kv.push(("data.synthetic.separation", fmt_real(s.separation)));
                kv.push(("data.synthetic.seed", s.seed.to_string()));
            }
            DataSource::Idx { images, labels, test } => {
                kv.push(("data.source", "idx".into()));
                kv.push(("data.idx.images", images.display().to_string()));
                kv.push(("data.idx.labels", labels.display().to_string()));
                if let Some((ti, tl)) = test {
                    kv.push(("data.idx.test_images", ti.display().to_string()));
                    kv.push(("data.idx.test_labels", tl.display().to_string()));
                }
            }
            DataSource::Csv { path, test_path } => {
                kv.push(("data.source", "csv".into()));
                kv.push(("data.csv.path", path.display().to_string()));
                if let Some(t) = test_path {
                    kv.push(("data.csv.test_path", t.display().to_string()));
                }
            }
        }
        let p = &self.partition;
        kv.extend([
            ("partition.n_clients", p.n_clients.to_string()),
            ("partition.n_iid", p.n_iid.to_string()),
            ("partition.n_noniid", p.n_noniid.to_string()),
            ("partition.n_malicious", p.n_malicious.to_string()),
            ("partition.dirichlet_alpha", fmt_real(p.dirichlet_alpha)),
            ("partition.validation_fraction", fmt_real(p.validation_fraction)),
            ("partition.shared_shuffle_map", p.shared_shuffle_map.to_string()),
            ("partition.seed", p.seed.to_string()),
            ("model.kind", self.model_kind.as_str().into()),
            ("model.hidden_width", self.hidden_width.to_string()),
            ("model.init_seed", self.init_seed.to_string()),
        ]);
        let s = &self.schedule;
        kv.extend([
            ("schedule.rounds", s.total_rounds.to_string()),
            ("schedule.clients_per_round", s.clients_per_round.to_string()),
            ("schedule.local_epochs", s.local_epochs.to_string()),
            ("schedule.lr", fmt_real(s.lr)),
            ("schedule.batch_size", s.batch_size.to_string()),
            ("schedule.selection_seed", s.selection_seed.to_string()),
        ]);
        if let Some(k) = s.local_steps {
            kv.push(("schedule.local_steps", k.to_string()));
        }
        if let Some(b) = s.validation_batch_size {
            kv.push(("schedule.validation_batch_size", b.to_string()));
        }
        if let Some(k) = s.validation_steps {
            kv.push(("schedule.validation_steps", k.to_string()));
        }
        kv.extend([
            ("strategy", self.strategy.as_str().into()),
            ("utility", self.utility.as_str().into()),
            ("shapley.exact_threshold", self.shapley.exact_threshold.to_string()),
            ("shapley.mc_permutations", self.shapley.mc_permutations.to_string()),
            ("shapley.seed", self.shapley.seed.to_string()),
        ]);
        kv.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::from("# resolved experiment configuration\n");
        for (k, v) in kv {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// Shortest decimal text that parses back to the same `f64`.
fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

struct Entry {
    value: String,
    line: usize,
}

/// Parsed key/value pairs that are consumed as they are read, so whatever
/// remains at the end is an unknown key.
struct Fields {
    origin: String,
    entries: BTreeMap<String, Entry>,
    base_dir: PathBuf,
}

impl Fields {
    fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let location = format!("{origin}:{line}");
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::config(content, &location, "expected key=value"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config("", location, "empty key"));
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line,
            };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(Error::config(
                    key,
                    location,
                    format!("duplicate key (first set on line {})", prev.line),
                ));
            }
        }
        Ok(Self {
            origin: origin.to_string(),
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    fn location(&self, key: &str) -> String {
        match self.entries.get(key) {
            Some(e) => format!("{}:{}", self.origin, e.line),
            None => format!("{} (default)", self.origin),
        }
    }

    fn error(&self, key: &str, message: impl Into<String>) -> Error {
        Error::config(key, self.location(key), message)
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let Some(entry) = self.entries.remove(key) else {
            return Ok(None);
        };
        entry.value.parse::<T>().map(Some).map_err(|e| {
            Error::config(
                key,
                format!("{}:{}", self.origin, entry.line),
                format!("cannot parse `{}`: {e}", entry.value),
            )
        })
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        let Some(raw) = self.opt::<PathBuf>(key)? else {
            return Ok(None);
        };
        Ok(Some(if raw.is_absolute() { raw } else { self.base_dir.join(raw) }))
    }

    fn existing_file(&mut self, key: &str) -> Result<Option<PathBuf>> {
        let location = self.location(key);
        match self.path(key)? {
            Some(p) if !p.is_file() => Err(Error::config(
                key,
                location,
                format!("file {} does not exist", p.display()),
            )),
            other => Ok(other),
        }
    }

    fn required_file(&mut self, key: &str) -> Result<PathBuf> {
        let location = self.location(key);
        self.existing_file(key)?
            .ok_or_else(|| Error::config(key, location, "required key is missing"))
    }
}

fn seed_or_derived(fields: &mut Fields, key: &str, master: u64, stream: Stream) -> Result<u64> {
    Ok(fields
        .opt(key)?
        .unwrap_or_else(|| derive_seed(master, &[stream as u64])))
}

/// Parse configuration text. Relative paths resolve against `base_dir`;
/// `origin` names the source in error locations.
pub fn parse_config(text: &str, origin: &str, base_dir: &Path, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let mut f = Fields::parse(text, origin, base_dir)?;

    let file_seed: u64 = f.get("master_seed", 0)?;
    let master_seed = overrides.master_seed.unwrap_or(file_seed);
    let file_out: PathBuf = f.get("output_dir", PathBuf::from("runs/out"))?;
    let output_dir = overrides.output_dir.clone().unwrap_or(file_out);
    let record_wall_time = f.get("record_wall_time", false)?;

    let source_kind: String = f.get("data.source", "synthetic".to_string())?;
    let source = match source_kind.as_str() {
        "synthetic" => DataSource::Synthetic(SyntheticData {
            classes: f.get("data.synthetic.classes", 10)?,
            per_class: f.get("data.synthetic.per_class", 200)?,
            dim: f.get("data.synthetic.dim", 20)?,
            separation: f.get("data.synthetic.separation", 4.0)?,
            seed: seed_or_derived(&mut f, "data.synthetic.seed", master_seed, Stream::Synthetic)?,
        }),
        "idx" => {
            let images = f.required_file("data.idx.images")?;
            let labels = f.required_file("data.idx.labels")?;
            let test_images = f.existing_file("data.idx.test_images")?;
            let test_labels = f.existing_file("data.idx.test_labels")?;
            let test = match (test_images, test_labels) {
                (Some(i), Some(l)) => Some((i, l)),
                (None, None) => None,
                (Some(_), None) => return Err(f.error("data.idx.test_labels", "required with data.idx.test_images")),
                (None, Some(_)) => return Err(f.error("data.idx.test_images", "required with data.idx.test_labels")),
            };
            DataSource::Idx { images, labels, test }
        }
        "csv" => DataSource::Csv {
            path: f.required_file("data.csv.path")?,
            test_path: f.existing_file("data.csv.test_path")?,
        },
        other => {
            return Err(f.error(
                "data.source",
                format!("unknown data source `{other}` (expected synthetic, idx or csv)"),
            ))
        }
    };
    let data = DataConfig {
        source,
        test_fraction: f.get("data.test_fraction", 0.2)?,
        max_samples: f.opt("data.max_samples")?,
    };

    let n_clients: usize = f.get("partition.n_clients", 10)?;
    let n_noniid: usize = f.get("partition.n_noniid", 0)?;
    let n_malicious: usize = f.get("partition.n_malicious", 0)?;
    let n_iid_loc = f.location("partition.n_iid");
    let n_iid: usize = match f.opt("partition.n_iid")? {
        Some(n) => n,
        None => n_clients.checked_sub(n_noniid + n_malicious).ok_or_else(|| {
            Error::config(
                "partition.n_clients",
                n_iid_loc.clone(),
                "n_noniid + n_malicious exceeds n_clients",
            )
        })?,
    };
    let partition = PartitionSpec {
        n_clients,
        n_iid,
        n_noniid,
        n_malicious,
        dirichlet_alpha: f.get("partition.dirichlet_alpha", 0.1)?,
        validation_fraction: f.get("partition.validation_fraction", 0.05)?,
        seed: seed_or_derived(&mut f, "partition.seed", master_seed, Stream::Partition)?,
        shared_shuffle_map: f.get("partition.shared_shuffle_map", true)?,
    };
    let partition_loc = f.location("partition.n_iid");

    let model_kind = match f.get("model.kind", "softmax".to_string())?.as_str() {
        "softmax" => ModelKind::SoftmaxRegression,
        "mlp" => ModelKind::Mlp1Hidden,
        other => return Err(f.error("model.kind", format!("unknown model kind `{other}` (expected softmax or mlp)"))),
    };
    let hidden_width = f.get("model.hidden_width", 64)?;
    let init_seed = seed_or_derived(&mut f, "model.init_seed", master_seed, Stream::Init)?;

    let cpr_loc = f.location("schedule.clients_per_round");
    let schedule = RoundSchedule {
        total_rounds: f.get("schedule.rounds", 50)?,
        clients_per_round: f.get("schedule.clients_per_round", 5)?,
        local_epochs: f.get("schedule.local_epochs", 1)?,
        local_steps: f.opt("schedule.local_steps")?,
        lr: f.get("schedule.lr", 0.01)?,
        batch_size: f.get("schedule.batch_size", 64)?,
        validation_batch_size: f.opt("schedule.validation_batch_size")?,
        validation_steps: f.opt("schedule.validation_steps")?,
        selection_seed: seed_or_derived(&mut f, "schedule.selection_seed", master_seed, Stream::Selection)?,
    };
    let strategy = f.get("strategy", PolicyKind::FedTsv)?;
    let utility = f.get("utility", UtilityKind::TsvEuclidean)?;
    let shapley = ShapleyConfig {
        exact_threshold: f.get("shapley.exact_threshold", 12)?,
        mc_permutations: f.get("shapley.mc_permutations", 2000)?,
        seed: seed_or_derived(&mut f, "shapley.seed", master_seed, Stream::MonteCarlo)?,
    };

    if let Some((key, entry)) = f.entries.iter().next() {
        return Err(Error::config(
            key.as_str(),
            format!("{}:{}", f.origin, entry.line),
            "unknown key",
        ));
    }

    let cfg = ExperimentConfig {
        master_seed,
        output_dir,
        record_wall_time,
        data,
        partition,
        model_kind,
        hidden_width,
        init_seed,
        schedule,
        strategy,
        utility,
        shapley,
    };
    validate(&cfg, origin, &partition_loc, &cpr_loc)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig, origin: &str, partition_loc: &str, cpr_loc: &str) -> Result<()> {
    let bad = |key: &str, msg: &str| Err(Error::config(key, origin, msg));
    cfg.partition
        .validate()
        .map_err(|e| Error::config("partition.n_iid", partition_loc, e.to_string()))?;
    if cfg.schedule.clients_per_round > cfg.partition.n_clients {
        return Err(Error::config(
            "schedule.clients_per_round",
            cpr_loc,
            format!(
                "clients_per_round={} exceeds partition.n_clients={}",
                cfg.schedule.clients_per_round, cfg.partition.n_clients
            ),
        ));
    }
    cfg.schedule
        .validate(cfg.partition.n_clients)
        .map_err(|e| Error::config("schedule", origin, e.to_string()))?;
    if cfg.data.uses_holdout_test() && !(cfg.data.test_fraction > 0.0 && cfg.data.test_fraction < 1.0) {
        return bad("data.test_fraction", "must lie in (0, 1)");
    }
    if cfg.data.max_samples == Some(0) {
        return bad("data.max_samples", "must be positive");
    }
    if let DataSource::Synthetic(s) = &cfg.data.source {
        if s.classes < 2 || s.per_class == 0 || s.dim == 0 {
            return bad("data.synthetic", "need at least 2 classes, 1 sample per class and 1 dimension");
        }
        if !(s.separation >= 0.0 && s.separation.is_finite()) {
            return bad("data.synthetic.separation", "must be finite and nonnegative");
        }
    }
    if cfg.model_kind == ModelKind::Mlp1Hidden && cfg.hidden_width == 0 {
        return bad("model.hidden_width", "must be positive");
    }
    if cfg.shapley.mc_permutations == 0 {
        return bad("shapley.mc_permutations", "must be positive");
    }
    if cfg.shapley.exact_threshold > crate::contribution::MAX_EXACT_PLAYERS {
        return bad("shapley.exact_threshold", "exceeds the exact-enumeration cap of 16");
    }
    Ok(())
}

/// Read and parse a config file; relative paths resolve against its directory.
pub fn load_config(path: impl AsRef<Path>, overrides: &ConfigOverrides) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config("<file>", path.display().to_string(), format!("cannot read config: {e}"))
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, &path.display().to_string(), base, overrides)
}
