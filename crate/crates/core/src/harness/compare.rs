//! Side-by-side reports over finished run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::output::{self, FinalWeight, LedgerFile};
use crate::data::Profile;
use crate::engine::RoundMetrics;
use crate::error::{Error, Result};
use crate::strategies::PolicyKind;

/// The parts of a run directory the reports read.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub strategy: PolicyKind,
    pub metrics: Vec<RoundMetrics>,
    pub weights: Vec<FinalWeight>,
    pub fallback_rounds: usize,
}

impl RunSummary {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let metrics = output::read_metrics(dir.join(output::METRICS_FILE))?;
        let weights = output::read_weights(dir.join(output::WEIGHTS_FILE))?;
        let ledger = LedgerFile::read(dir.join(output::LEDGER_FILE))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            strategy: ledger.strategy,
            fallback_rounds: ledger.rounds.iter().filter(|r| r.fallback_used).count(),
            metrics,
            weights,
        })
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.test_accuracy)
    }

    /// Mean final weight share per client profile.
    pub fn profile_mean_share(&self) -> BTreeMap<Profile, f64> {
        profile_means(&self.weights, |w| w.weight_share)
    }

    fn label(&self) -> String {
        let name = self
            .dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.dir.display().to_string());
        format!("{}@{name}", self.strategy)
    }
}

/// Mean of `field` over the clients of each profile present in `weights`.
pub fn profile_means(weights: &[FinalWeight], field: impl Fn(&FinalWeight) -> f64) -> BTreeMap<Profile, f64> {
    let mut sums: BTreeMap<Profile, (f64, usize)> = BTreeMap::new();
    for w in weights {
        let e = sums.entry(w.profile).or_insert((0.0, 0));
        e.0 += field(w);
        e.1 += 1;
    }
    sums.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect()
}

/// Aligned per-round comparison of two or more runs against the first.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub rounds: usize,
    /// `accuracy[r][k]` is run `k`'s test accuracy after round `r`.
    pub accuracy: Vec<Vec<f64>>,
    pub loss: Vec<Vec<f64>>,
    pub final_accuracy: Vec<f64>,
    pub profile_shares: Vec<BTreeMap<Profile, f64>>,
    pub warnings: Vec<String>,
}

impl Comparison {
    pub fn build(runs: &[RunSummary]) -> Result<Self> {
        if runs.len() < 2 {
            return Err(Error::structural("compare needs at least two run directories"));
        }
        let rounds = runs.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
        let mut warnings = Vec::new();
        if runs.iter().any(|r| r.metrics.len() != rounds) {
            let counts: Vec<String> = runs.iter().map(|r| r.metrics.len().to_string()).collect();
            warnings.push(format!(
                "round counts differ ({}); comparing the first {rounds}",
                counts.join(", ")
            ));
        }
        let column = |f: fn(&RoundMetrics) -> f64| -> Vec<Vec<f64>> {
            (0..rounds)
                .map(|r| runs.iter().map(|run| f(&run.metrics[r])).collect())
                .collect()
        };
        let accuracy = column(|m| m.test_accuracy);
        let loss = column(|m| m.test_loss);
        let final_accuracy = match accuracy.last() {
            Some(row) => row.clone(),
            None => vec![f64::NAN; runs.len()],
        };
        Ok(Self {
            labels: runs.iter().map(RunSummary::label).collect(),
            rounds,
            accuracy,
            loss,
            final_accuracy,
            profile_shares: runs.iter().map(RunSummary::profile_mean_share).collect(),
            warnings,
        })
    }

    /// Accuracy of run `k` minus that of the first run, per round.
    pub fn accuracy_deltas(&self, k: usize) -> Vec<f64> {
        self.accuracy.iter().map(|row| row[k] - row[0]).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(out, "runs:");
        for (k, l) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "  [{k}] {l}");
        }

        let n = self.labels.len();
        let mut header = vec!["round".to_string()];
        header.extend((0..n).map(|k| format!("acc[{k}]")));
        header.extend((0..n).map(|k| format!("loss[{k}]")));
        header.extend((1..n).map(|k| format!("dacc[{k}-0]")));
        let mut rows = vec![header];
        for r in 0..self.rounds {
            let mut row = vec![r.to_string()];
            row.extend(self.accuracy[r].iter().map(|a| format!("{a:.4}")));
            row.extend(self.loss[r].iter().map(|l| format!("{l:.4}")));
            row.extend((1..n).map(|k| format!("{:+.4}", self.accuracy[r][k] - self.accuracy[r][0])));
            rows.push(row);
        }
        let _ = writeln!(out, "\nper-round test accuracy and loss:");
        out.push_str(&align(&rows));

        let _ = writeln!(out, "\nfinal test accuracy:");
        for (k, a) in self.final_accuracy.iter().enumerate() {
            let _ = writeln!(out, "  [{k}] {a:.4}");
        }

        let _ = writeln!(out, "\nmean final weight share by profile:");
        let mut rows = vec![vec!["run".to_string()]];
        rows[0].extend(Profile::ALL.iter().map(|p| p.to_string()));
        for (k, shares) in self.profile_shares.iter().enumerate() {
            let mut row = vec![format!("[{k}]")];
            row.extend(
                Profile::ALL
                    .iter()
                    .map(|p| shares.get(p).map_or("-".to_string(), |s| format!("{s:.4}"))),
            );
            rows.push(row);
        }
        out.push_str(&align(&rows));
        out
    }
}

/// Right-aligned columns separated by two spaces.
fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:>w$}", w = widths[c]))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Compare run directories; writes `compare_report.txt` into `output` when given.
pub fn cmd_compare(dirs: &[PathBuf], output: Option<&Path>) -> Result<String> {
    let runs = dirs.iter().map(RunSummary::load).collect::<Result<Vec<_>>>()?;
    let cmp = Comparison::build(&runs)?;
    for w in &cmp.warnings {
        log::warn!("{w}");
    }
    let report = cmp.render();
    if let Some(dir) = output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        output::write_text(&dir.join("compare_report.txt"), &report)?;
    }
    Ok(report)
}

/// Human-readable summary of one run directory.
pub fn inspect_report(dir: impl AsRef<Path>) -> Result<String> {
    let run = RunSummary::load(dir)?;
    let mut out = String::new();
    let _ = writeln!(out, "run: {}", run.dir.display());
    let _ = writeln!(out, "strategy: {}", run.strategy);
    let _ = writeln!(out, "rounds: {}", run.metrics.len());
    if let Some(last) = run.metrics.last() {
        let best = run.metrics.iter().map(|m| m.test_accuracy).fold(f64::MIN, f64::max);
        let _ = writeln!(out, "final test accuracy: {:.4}", last.test_accuracy);
        let _ = writeln!(out, "final test loss: {:.4}", last.test_loss);
        let _ = writeln!(out, "best test accuracy: {best:.4}");
    }
    let _ = writeln!(out, "fallback rounds: {}", run.fallback_rounds);
    let _ = writeln!(out, "clients: {}", run.weights.len());
    for (p, share) in run.profile_mean_share() {
        let count = run.weights.iter().filter(|w| w.profile == p).count();
        let _ = writeln!(out, "  {p:<14} {count:>4} clients, mean weight share {share:.4}");
    }
    let mut ranked: Vec<&FinalWeight> = run.weights.iter().collect();
    ranked.sort_by(|a, b| b.weight_share.total_cmp(&a.weight_share).then(a.client_id.cmp(&b.client_id)));
    let _ = writeln!(out, "top clients by final weight:");
    for w in ranked.iter().take(5) {
        let _ = writeln!(
            out,
            "  client {:>4} ({}) share {:.4} phi {:+.6}",
            w.client_id, w.profile, w.weight_share, w.cumulative_phi
        );
    }
    Ok(out)
}
