//! Exact and Monte Carlo Shapley values on small cooperative games.
//!
//! ```text
//! cargo run --example shapley_games
//! ```

use fedtsv::contribution::{exact_shapley, monte_carlo_shapley, Coalition};

fn main() -> fedtsv::Result<()> {
    // Glove game: player 0 holds a left glove, players 1 and 2 hold right
    // gloves, and a coalition is worth the number of pairs it can form.
    let glove = |c: Coalition| -> fedtsv::Result<f64> {
        let left = usize::from(c.contains(0));
        let right = usize::from(c.contains(1)) + usize::from(c.contains(2));
        Ok(left.min(right) as f64)
    };
    let players = [0, 1, 2];
    let exact = exact_shapley(&players, glove)?;
    println!("glove game, exact ({} coalitions evaluated):", exact.evaluations);
    for (id, phi) in &exact.values {
        println!("  player {id}: {phi:.4}");
    }

    // A weighted voting game over eight players: a coalition wins when its
    // total weight reaches the quota.
    let weights = [8.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 1.0];
    let quota = 16.0;
    let voting = |c: Coalition| -> fedtsv::Result<f64> {
        let w: f64 = c.positions().map(|p| weights[p]).sum();
        Ok(if w >= quota { 1.0 } else { 0.0 })
    };
    let ids: Vec<usize> = (0..weights.len()).collect();
    let exact = exact_shapley(&ids, voting)?;
    println!("\nweighted voting game (quota {quota}):");
    println!("  player  weight   exact    mc(200)  mc(5000)");
    let rough = monte_carlo_shapley(&ids, voting, 200, 1)?;
    let fine = monte_carlo_shapley(&ids, voting, 5000, 1)?;
    for (i, w) in weights.iter().enumerate() {
        println!(
            "  {i:>6}  {w:>6}  {:>7.4}  {:>7.4}  {:>8.4}",
            exact.values[&i], rough.values[&i], fine.values[&i]
        );
    }
    let total: f64 = exact.values.values().sum();
    println!("  sum of exact values: {total:.6} (the grand coalition's worth is 1)");
    println!(
        "  distinct coalitions evaluated: exact {}, mc(5000) {}",
        exact.evaluations, fine.evaluations
    );
    Ok(())
}
