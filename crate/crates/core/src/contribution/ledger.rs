use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::ClientId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub contributions: BTreeMap<ClientId, f64>,
}

/// Running per-client sums of per-round contribution scores.
///
/// A client that was never scored has a cumulative value of exactly zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContributionLedger {
    cumulative: BTreeMap<ClientId, f64>,
    history: Vec<LedgerEntry>,
}

impl ContributionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cumulative(&self, id: ClientId) -> f64 {
        self.cumulative.get(&id).copied().unwrap_or(0.0)
    }

    pub fn cumulative_map(&self) -> &BTreeMap<ClientId, f64> {
        &self.cumulative
    }

    pub fn history(&self) -> &[LedgerEntry] {
        &self.history
    }

    /// Add one round of scores. Rounds must be recorded in increasing order.
    pub fn accumulate(&mut self, contributions: &BTreeMap<ClientId, f64>, round: usize) -> Result<()> {
        if let Some(last) = self.history.last() {
            if round <= last.round {
                return Err(Error::structural(format!(
                    "round {round} already recorded (last recorded round is {})",
                    last.round
                )));
            }
        }
        for (&id, &phi) in contributions {
            *self.cumulative.entry(id).or_insert(0.0) += phi;
        }
        self.history.push(LedgerEntry {
            round,
            contributions: contributions.clone(),
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_across_rounds() {
        let mut l = ContributionLedger::new();
        l.accumulate(&BTreeMap::from([(1, 0.3)]), 0).unwrap();
        l.accumulate(&BTreeMap::from([(1, 0.2)]), 1).unwrap();
        assert!((l.cumulative(1) - 0.5).abs() < 1e-15);
        assert_eq!(l.cumulative(7), 0.0);
        assert_eq!(l.history().len(), 2);
    }

    #[test]
    fn empty_round_only_appends_history() {
        let mut l = ContributionLedger::new();
        l.accumulate(&BTreeMap::from([(2, -0.1)]), 0).unwrap();
        let before = l.cumulative_map().clone();
        l.accumulate(&BTreeMap::new(), 1).unwrap();
        assert_eq!(l.cumulative_map(), &before);
        assert_eq!(l.history().len(), 2);
    }

    #[test]
    fn duplicate_round_is_rejected() {
        let mut l = ContributionLedger::new();
        l.accumulate(&BTreeMap::new(), 3).unwrap();
        assert!(l.accumulate(&BTreeMap::new(), 3).is_err());
        assert!(l.accumulate(&BTreeMap::new(), 2).is_err());
    }
}
