//! Exact and permutation-sampling Shapley values over small player sets.
//!
//! Players are addressed by position in the `players` slice, and coalitions
//! are bitmasks over those positions, so a utility is evaluated at most once
//! per coalition.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use crate::data::ClientId;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Largest player count accepted by [`exact_shapley`].
pub const MAX_EXACT_PLAYERS: usize = 16;

/// A subset of player positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn from_bits(bits: u64) -> Self {
        Coalition(bits)
    }

    pub fn full(n: usize) -> Self {
        assert!(n < 64, "coalitions hold at most 63 players");
        Coalition((1u64 << n) - 1)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, pos: usize) -> bool {
        self.0 & (1 << pos) != 0
    }

    pub fn with(self, pos: usize) -> Self {
        Coalition(self.0 | (1 << pos))
    }

    pub fn without(self, pos: usize) -> Self {
        Coalition(self.0 & !(1 << pos))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Member positions in ascending order.
    pub fn positions(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |p| bits & (1 << p) != 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyValues {
    pub values: BTreeMap<ClientId, f64>,
    /// Distinct coalitions on which the utility was evaluated.
    pub evaluations: usize,
}

fn check_players(players: &[ClientId]) -> Result<()> {
    let mut sorted = players.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != players.len() {
        return Err(Error::structural("duplicate player id"));
    }
    if players.len() >= 64 {
        return Err(Error::structural("at most 63 players are supported"));
    }
    Ok(())
}

/// Exact Shapley values by enumerating all `2^n` coalitions once.
pub fn exact_shapley<F>(players: &[ClientId], mut utility: F) -> Result<ShapleyValues>
where
    F: FnMut(Coalition) -> Result<f64>,
{
    check_players(players)?;
    let n = players.len();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyPlayers {
            players: n,
            cap: MAX_EXACT_PLAYERS,
        });
    }
    let table: Vec<f64> = (0..1u64 << n)
        .map(|bits| utility(Coalition(bits)))
        .collect::<Result<_>>()?;

    // weight[s] = s! (n - s - 1)! / n! = 1 / (n * C(n - 1, s))
    let mut weight = Vec::with_capacity(n);
    let mut binom = 1.0f64;
    for s in 0..n {
        weight.push(1.0 / (n as f64 * binom));
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let mut phi = vec![0.0; n];
    for (bits, &u) in table.iter().enumerate() {
        let s = Coalition(bits as u64);
        for (i, p) in phi.iter_mut().enumerate() {
            if !s.contains(i) {
                *p += weight[s.len()] * (table[s.with(i).0 as usize] - u);
            }
        }
    }
    Ok(ShapleyValues {
        values: players.iter().copied().zip(phi).collect(),
        evaluations: table.len(),
    })
}

/// Monte Carlo Shapley values from `num_permutations` uniform orderings.
pub fn monte_carlo_shapley<F>(
    players: &[ClientId],
    mut utility: F,
    num_permutations: usize,
    seed: u64,
) -> Result<ShapleyValues>
where
    F: FnMut(Coalition) -> Result<f64>,
{
    check_players(players)?;
    if num_permutations == 0 {
        return Err(Error::structural("num_permutations must be at least 1"));
    }
    let n = players.len();
    let mut memo: HashMap<Coalition, f64> = HashMap::new();
    let mut eval = |c: Coalition| -> Result<f64> {
        if let Some(&u) = memo.get(&c) {
            return Ok(u);
        }
        let u = utility(c)?;
        memo.insert(c, u);
        Ok(u)
    };

    // Count how often each (player, predecessor set) marginal is drawn, then
    // weight each distinct marginal by its frequency.
    let mut rng = stream_rng(seed, Stream::MonteCarlo, &[]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut counts: BTreeMap<(usize, Coalition), u64> = BTreeMap::new();
    for _ in 0..num_permutations {
        order.shuffle(&mut rng);
        let mut s = Coalition::EMPTY;
        for &pos in &order {
            *counts.entry((pos, s)).or_insert(0) += 1;
            s = s.with(pos);
        }
    }
    let k = num_permutations as f64;
    let mut phi = vec![0.0; n];
    for (&(pos, before), &count) in &counts {
        let marginal = eval(before.with(pos))? - eval(before)?;
        phi[pos] += (count as f64 / k) * marginal;
    }
    let evaluations = memo.len();
    Ok(ShapleyValues {
        values: players.iter().copied().zip(phi).collect(),
        evaluations,
    })
}
