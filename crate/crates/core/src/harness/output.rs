//! Run artifacts on disk: metrics, final weights, ledger history and model.
//!
//! Reals in CSV files use 17 significant digits so every `f64` round-trips
//! exactly, and every file is a pure function of the run's results.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contribution::ContributionLedger;
use crate::data::{ClientId, Profile};
use crate::engine::RoundMetrics;
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::strategies::PolicyKind;

pub const METRICS_FILE: &str = "metrics.csv";
pub const WEIGHTS_FILE: &str = "weights_final.csv";
pub const LEDGER_FILE: &str = "ledger.json";
pub const MODEL_FILE: &str = "model_final.bin";
pub const CONFIG_ECHO_FILE: &str = "config_echo.txt";

/// First line of `metrics.csv`; bump the version when columns change.
pub const METRICS_SCHEMA: &str = "#schema=fedtsv-metrics/1";
pub const METRICS_HEADER: &str = "round,test_accuracy,test_loss,selected,weights,fallback_used,wall_ms";
pub const WEIGHTS_SCHEMA: &str = "#schema=fedtsv-weights/1";
pub const WEIGHTS_HEADER: &str = "client_id,profile,cumulative_phi,final_alpha,weight_share";
pub const LEDGER_SCHEMA: &str = "fedtsv-ledger/1";
pub const MODEL_MAGIC: &[u8; 4] = b"FTSV";
pub const MODEL_VERSION: u32 = 1;

/// A real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_err(what: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{what} line {line}: {msg}"))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Split a schema-tagged CSV into its data lines after checking the tag and header.
fn csv_body<'a>(text: &'a str, what: &str, schema: &str, header: &str) -> Result<Vec<(usize, &'a str)>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == schema => {}
        Some((n, l)) if l.starts_with("#schema=") => {
            return Err(format_err(what, n, format!("unsupported schema `{l}`, expected `{schema}`")))
        }
        _ => return Err(format_err(what, 1, format!("missing schema line `{schema}`"))),
    }
    match lines.next() {
        Some((_, l)) if l == header => {}
        _ => return Err(format_err(what, 2, format!("expected header `{header}`"))),
    }
    Ok(lines.filter(|(_, l)| !l.is_empty()).collect())
}

fn parse_field<T: std::str::FromStr>(what: &str, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| format_err(what, line, format!("bad {name} `{s}`")))
}

// ---------------------------------------------------------------- metrics

pub fn metrics_to_string(rows: &[RoundMetrics]) -> String {
    let mut out = format!("{METRICS_SCHEMA}\n{METRICS_HEADER}\n");
    for r in rows {
        let selected: Vec<String> = r.selected.iter().map(|id| id.to_string()).collect();
        let weights: Vec<String> = r
            .weights
            .iter()
            .map(|(id, w)| format!("{id}:{}", fmt_real(*w)))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.round,
            fmt_real(r.test_accuracy),
            fmt_real(r.test_loss),
            selected.join(";"),
            weights.join(";"),
            r.fallback_used,
            r.wall_ms
        ));
    }
    out
}

pub fn parse_metrics(text: &str) -> Result<Vec<RoundMetrics>> {
    const WHAT: &str = "metrics.csv";
    csv_body(text, WHAT, METRICS_SCHEMA, METRICS_HEADER)?
        .into_iter()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(format_err(WHAT, n, format!("expected 7 columns, found {}", cols.len())));
            }
            let selected = split_list(cols[3])
                .map(|s| parse_field(WHAT, n, "client id", s))
                .collect::<Result<Vec<ClientId>>>()?;
            let weights = split_list(cols[4])
                .map(|pair| {
                    let (id, w) = pair
                        .split_once(':')
                        .ok_or_else(|| format_err(WHAT, n, format!("bad weight entry `{pair}`")))?;
                    Ok((parse_field(WHAT, n, "client id", id)?, parse_field(WHAT, n, "weight", w)?))
                })
                .collect::<Result<BTreeMap<ClientId, f64>>>()?;
            Ok(RoundMetrics {
                round: parse_field(WHAT, n, "round", cols[0])?,
                test_accuracy: parse_field(WHAT, n, "test_accuracy", cols[1])?,
                test_loss: parse_field(WHAT, n, "test_loss", cols[2])?,
                selected,
                weights,
                fallback_used: parse_field(WHAT, n, "fallback_used", cols[5])?,
                wall_ms: parse_field(WHAT, n, "wall_ms", cols[6])?,
            })
        })
        .collect()
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').filter(|p| !p.is_empty())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<RoundMetrics>> {
    parse_metrics(&read_text(path.as_ref())?)
}

// ---------------------------------------------------------- final weights

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalWeight {
    pub client_id: ClientId,
    pub profile: Profile,
    /// Ledger total; zero for policies without a ledger.
    pub cumulative_phi: f64,
    /// The weight the policy would give this client if selected now.
    pub final_alpha: f64,
    /// `final_alpha` as a fraction of the total over all clients.
    pub weight_share: f64,
}

/// Final per-client weights under `policy`, for every client in id order.
pub fn final_weights(
    policy: PolicyKind,
    ledger: &ContributionLedger,
    profiles: &[Profile],
    shard_sizes: &[usize],
) -> Vec<FinalWeight> {
    let alpha: Vec<f64> = (0..profiles.len())
        .map(|id| match policy {
            PolicyKind::Uniform => 1.0,
            PolicyKind::DataSize => shard_sizes[id] as f64,
            PolicyKind::FedTsv | PolicyKind::Cgsv | PolicyKind::Loo => ledger.cumulative(id).max(0.0),
        })
        .collect();
    let total: f64 = alpha.iter().sum();
    let n = profiles.len() as f64;
    profiles
        .iter()
        .enumerate()
        .map(|(id, &profile)| FinalWeight {
            client_id: id,
            profile,
            cumulative_phi: ledger.cumulative(id),
            final_alpha: alpha[id],
            weight_share: if total > 0.0 { alpha[id] / total } else { 1.0 / n },
        })
        .collect()
}

pub fn weights_to_string(rows: &[FinalWeight]) -> String {
    let mut out = format!("{WEIGHTS_SCHEMA}\n{WEIGHTS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.client_id,
            r.profile,
            fmt_real(r.cumulative_phi),
            fmt_real(r.final_alpha),
            fmt_real(r.weight_share)
        ));
    }
    out
}

pub fn parse_weights(text: &str) -> Result<Vec<FinalWeight>> {
    const WHAT: &str = "weights_final.csv";
    csv_body(text, WHAT, WEIGHTS_SCHEMA, WEIGHTS_HEADER)?
        .into_iter()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(format_err(WHAT, n, format!("expected 5 columns, found {}", cols.len())));
            }
            Ok(FinalWeight {
                client_id: parse_field(WHAT, n, "client_id", cols[0])?,
                profile: Profile::parse(cols[1])
                    .ok_or_else(|| format_err(WHAT, n, format!("unknown profile `{}`", cols[1])))?,
                cumulative_phi: parse_field(WHAT, n, "cumulative_phi", cols[2])?,
                final_alpha: parse_field(WHAT, n, "final_alpha", cols[3])?,
                weight_share: parse_field(WHAT, n, "weight_share", cols[4])?,
            })
        })
        .collect()
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<Vec<FinalWeight>> {
    parse_weights(&read_text(path.as_ref())?)
}

// ----------------------------------------------------------------- ledger

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRound {
    pub round: usize,
    pub selected: Vec<ClientId>,
    /// Per-round scores; absent for policies without a ledger.
    pub contributions: Option<BTreeMap<ClientId, f64>>,
    pub weights: BTreeMap<ClientId, f64>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerFile {
    pub schema: String,
    pub strategy: PolicyKind,
    pub utility: String,
    pub rounds: Vec<LedgerRound>,
    pub cumulative: BTreeMap<ClientId, f64>,
}

impl LedgerFile {
    pub fn build(policy: PolicyKind, utility: &str, ledger: &ContributionLedger, metrics: &[RoundMetrics]) -> Result<Self> {
        if ledger.history().len() != metrics.len() {
            return Err(Error::structural("ledger history and metrics disagree on the round count"));
        }
        let rounds = ledger
            .history()
            .iter()
            .zip(metrics)
            .map(|(entry, m)| LedgerRound {
                round: m.round,
                selected: m.selected.clone(),
                contributions: policy.uses_ledger().then(|| entry.contributions.clone()),
                weights: m.weights.clone(),
                fallback_used: m.fallback_used,
            })
            .collect();
        Ok(Self {
            schema: LEDGER_SCHEMA.to_string(),
            strategy: policy,
            utility: utility.to_string(),
            rounds,
            cumulative: ledger.cumulative_map().clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ledger serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: LedgerFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("ledger.json: {e}")))?;
        if file.schema != LEDGER_SCHEMA {
            return Err(Error::Format(format!(
                "ledger.json: unsupported schema `{}`, expected `{LEDGER_SCHEMA}`",
                file.schema
            )));
        }
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path.as_ref())?)
    }
}

// ------------------------------------------------------------------ model

pub fn model_to_bytes(theta: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * theta.dim());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(theta.dim() as u64).to_le_bytes());
    for v in theta.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ParamVector> {
    let bad = |m: &str| Error::Format(format!("model_final.bin: {m}"));
    if bytes.len() < 16 || &bytes[..4] != MODEL_MAGIC {
        return Err(bad("missing FTSV magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dim = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != dim.saturating_mul(8) {
        return Err(bad(&format!("header declares {dim} values, body holds {} bytes", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ParamVector::new(values)
}

pub fn write_model(path: impl AsRef<Path>, theta: &ParamVector) -> Result<()> {
    write_file(path.as_ref(), &model_to_bytes(theta))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ParamVector> {
    let path = path.as_ref();
    model_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(round: usize) -> RoundMetrics {
        RoundMetrics {
            round,
            test_accuracy: 0.1 + 0.2,
            test_loss: std::f64::consts::PI,
            selected: vec![1, 4],
            weights: BTreeMap::from([(1, 0.25), (4, 1.0 / 3.0)]),
            fallback_used: round == 0,
            wall_ms: 0,
        }
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let rows = vec![row(0), row(1)];
        let text = metrics_to_string(&rows);
        assert!(text.starts_with("#schema=fedtsv-metrics/1\nround,"));
        assert_eq!(parse_metrics(&text).unwrap(), rows);
    }

    #[test]
    fn reals_carry_seventeen_digits() {
        let s = fmt_real(0.1);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let text = metrics_to_string(&[row(0)]).replace("metrics/1", "metrics/9");
        assert!(matches!(parse_metrics(&text), Err(Error::Format(m)) if m.contains("unsupported schema")));
        assert!(parse_metrics("round,x\n").is_err());
    }

    #[test]
    fn weights_partition_profiles_and_shares_sum_to_one() {
        let mut ledger = ContributionLedger::new();
        ledger.accumulate(&BTreeMap::from([(0, 0.5), (1, -0.2), (2, 0.25)]), 0).unwrap();
        let profiles = [Profile::IidBenign, Profile::NoniidBenign, Profile::Malicious];
        let rows = final_weights(PolicyKind::FedTsv, &ledger, &profiles, &[10, 10, 10]);
        assert_eq!(rows[1].final_alpha, 0.0);
        assert_eq!(rows[1].cumulative_phi, -0.2);
        assert!((rows.iter().map(|r| r.weight_share).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(parse_weights(&weights_to_string(&rows)).unwrap(), rows);

        let sized = final_weights(PolicyKind::DataSize, &ledger, &profiles, &[1, 1, 2]);
        assert_eq!(sized[2].weight_share, 0.5);
        let empty = final_weights(PolicyKind::Cgsv, &ContributionLedger::new(), &profiles, &[1, 1, 1]);
        assert!(empty.iter().all(|r| r.weight_share == 1.0 / 3.0));
    }

    #[test]
    fn ledger_json_round_trip() {
        let mut ledger = ContributionLedger::new();
        ledger.accumulate(&BTreeMap::from([(1, 0.0), (4, 0.0)]), 0).unwrap();
        ledger.accumulate(&BTreeMap::from([(1, 0.1), (4, 0.3)]), 1).unwrap();
        let file = LedgerFile::build(PolicyKind::FedTsv, "tsv-euclidean", &ledger, &[row(0), row(1)]).unwrap();
        let json = file.to_json();
        let back = LedgerFile::parse(&json).unwrap();
        assert_eq!(back, file);
        assert!(back.rounds[0].fallback_used);
        assert!(LedgerFile::parse(&json.replace("fedtsv-ledger/1", "fedtsv-ledger/2")).is_err());
        assert!(LedgerFile::build(PolicyKind::FedTsv, "x", &ledger, &[row(0)]).is_err());
    }

    #[test]
    fn model_header_layout() {
        let theta = ParamVector::new(vec![1.5, -2.0]).unwrap();
        let bytes = model_to_bytes(&theta);
        assert_eq!(&bytes[..4], b"FTSV");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 32);
        assert!(model_from_bytes(&bytes[..31]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 2;
        assert!(model_from_bytes(&wrong).is_err());
    }

    proptest! {
        #[test]
        fn model_bytes_round_trip(values in prop::collection::vec(-1e300f64..1e300, 1..50)) {
            let theta = ParamVector::new(values).unwrap();
            prop_assert_eq!(model_from_bytes(&model_to_bytes(&theta)).unwrap(), theta);
        }

        #[test]
        fn reals_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
            prop_assert_eq!(fmt_real(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
