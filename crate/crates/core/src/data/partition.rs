//! Federated partitioning into IID, Dirichlet non-IID and label-shuffled
//! malicious clients, after removing a clean server validation split.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{ClientId, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    IidBenign,
    NoniidBenign,
    Malicious,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::IidBenign, Profile::NoniidBenign, Profile::Malicious];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::IidBenign => "iid-benign",
            Profile::NoniidBenign => "noniid-benign",
            Profile::Malicious => "malicious",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub n_clients: usize,
    pub n_iid: usize,
    pub n_noniid: usize,
    pub n_malicious: usize,
    pub dirichlet_alpha: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    /// One label permutation for all malicious clients (default) or one each.
    pub shared_shuffle_map: bool,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_iid + self.n_noniid + self.n_malicious != self.n_clients {
            return Err(Error::structural(format!(
                "profile counts {}+{}+{} do not sum to n_clients={}",
                self.n_iid, self.n_noniid, self.n_malicious, self.n_clients
            )));
        }
        if self.n_clients == 0 {
            return Err(Error::structural("n_clients must be positive"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::structural("dirichlet_alpha must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::structural("validation_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn profile_of(&self, id: ClientId) -> Profile {
        if id < self.n_iid {
            Profile::IidBenign
        } else if id < self.n_iid + self.n_noniid {
            Profile::NoniidBenign
        } else {
            Profile::Malicious
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: ClientId,
    pub profile: Profile,
    /// Local samples; malicious labels are stored already remapped.
    pub data: LabeledDataset,
    /// `original label -> stored label`, present iff the client is malicious.
    pub shuffle_map: Option<Vec<usize>>,
    /// Row indices into the dataset passed to [`partition`].
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub clients: Vec<ClientDataset>,
    pub validation: LabeledDataset,
    pub validation_indices: Vec<usize>,
}

/// Split `data` into a server validation set and `spec.n_clients` shards.
///
/// Client ids are assigned IID first, then non-IID, then malicious. Shards
/// have equal size up to one sample.
pub fn partition(data: &LabeledDataset, spec: &PartitionSpec) -> Result<Partition> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Partition, &[]);
    let n = data.len();
    let n_val = ((spec.validation_fraction * n as f64).round() as usize).max(1);
    if n_val + spec.n_clients > n {
        return Err(Error::structural(format!(
            "{n} samples cannot fill a validation split of {n_val} and {} non-empty clients",
            spec.n_clients
        )));
    }

    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(&mut rng);
    let mut validation_indices = all[..n_val].to_vec();
    validation_indices.sort_unstable();
    let train = &all[n_val..];

    let n_train = train.len();
    let base = n_train / spec.n_clients;
    let extra = n_train % spec.n_clients;
    let shard_size = |id: usize| base + usize::from(id < extra);

    let num_classes = data.num_classes();
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in train {
        pools[data.label(i)].push(i);
    }

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); spec.n_clients];

    // Non-IID clients draw from class pools first so their skew is not
    // limited by what IID shards left behind.
    for (id, slot) in assigned.iter_mut().enumerate().take(spec.n_iid + spec.n_noniid).skip(spec.n_iid) {
        let p = sample_dirichlet(spec.dirichlet_alpha, num_classes, &mut rng);
        let want = largest_remainder(&p, shard_size(id));
        let mut taken = Vec::with_capacity(shard_size(id));
        let mut deficit = 0;
        for (c, &w) in want.iter().enumerate() {
            let k = w.min(pools[c].len());
            let start = pools[c].len() - k;
            taken.extend(pools[c].drain(start..));
            deficit += w - k;
        }
        if deficit > 0 {
            let mut by_weight: Vec<usize> = (0..num_classes).collect();
            by_weight.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
            for c in by_weight {
                let k = deficit.min(pools[c].len());
                let start = pools[c].len() - k;
                taken.extend(pools[c].drain(start..));
                deficit -= k;
                if deficit == 0 {
                    break;
                }
            }
        }
        *slot = taken;
    }

    let mut rest: Vec<usize> = pools.into_iter().flatten().collect();
    rest.shuffle(&mut rng);
    let mut cursor = 0;
    for id in (0..spec.n_iid).chain(spec.n_iid + spec.n_noniid..spec.n_clients) {
        let k = shard_size(id);
        assigned[id] = rest[cursor..cursor + k].to_vec();
        cursor += k;
    }
    debug_assert_eq!(cursor, rest.len());

    let shared_map = if spec.n_malicious > 0 && spec.shared_shuffle_map {
        Some(random_derangement(num_classes, &mut rng)?)
    } else {
        None
    };

    let mut clients = Vec::with_capacity(spec.n_clients);
    for (id, mut idx) in assigned.into_iter().enumerate() {
        idx.sort_unstable();
        let profile = spec.profile_of(id);
        let mut local = data.subset(&idx)?;
        let shuffle_map = if profile == Profile::Malicious {
            let map = match &shared_map {
                Some(m) => m.clone(),
                None => random_derangement(num_classes, &mut rng)?,
            };
            let corrupted = local.labels().iter().map(|&l| map[l]).collect();
            local = local.with_labels(corrupted)?;
            Some(map)
        } else {
            None
        };
        clients.push(ClientDataset {
            client_id: id,
            profile,
            data: local,
            shuffle_map,
            source_indices: idx,
        });
    }

    Ok(Partition {
        clients,
        validation: data.subset(&validation_indices)?,
        validation_indices,
    })
}

/// Dirichlet(alpha, ..., alpha) sample computed in log space.
///
/// For small `alpha` the plain gamma draws underflow to zero; using
/// `G(a) = G(a + 1) * U^(1/a)` keeps every component representable.
fn sample_dirichlet(alpha: f64, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha is positive");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Integer counts summing to `total`, proportional to `p`.
pub(crate) fn largest_remainder(p: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = p.iter().map(|x| x * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

fn random_derangement(k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::structural("label shuffling needs at least two classes"));
    }
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}
