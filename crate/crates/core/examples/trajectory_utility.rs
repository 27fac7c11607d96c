//! The per-round trajectory utility and how its Shapley split turns into
//! aggregation weights.
//!
//! Three honest clients move roughly along the server's validation step; a
//! fourth pushes the other way with a much larger update.
//!
//! ```text
//! cargo run --example trajectory_utility
//! ```

use std::collections::BTreeMap;

use fedtsv::contribution::{
    coalition_delta, round_contributions, tsv_utility, ContributionLedger, RoundRecord, ShapleyConfig, UtilityKind,
};
use fedtsv::strategies::{cgsv_scores, fedtsv_weights};
use fedtsv::ParamVector;

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec()).expect("finite")
}

fn main() -> fedtsv::Result<()> {
    let val_delta = pv(&[1.0, 0.5, 0.0]);
    let deltas = BTreeMap::from([
        (0, pv(&[0.9, 0.6, 0.1])),
        (1, pv(&[1.1, 0.4, -0.1])),
        (2, pv(&[0.8, 0.5, 0.05])),
        (7, pv(&[-4.0, -2.0, 3.0])),
    ]);
    let record = RoundRecord::new(0, deltas.clone(), val_delta)?;
    println!("sigma = |val_delta|^2 = {:.4}", record.sigma());

    println!("\ncoalition        mean delta                 utility");
    for coalition in [vec![], vec![0], vec![0, 1, 2], vec![7], vec![0, 1, 2, 7]] {
        let d = coalition_delta(&record, &coalition)?;
        let shown: Vec<String> = d.as_slice().iter().map(|x| format!("{x:+.3}")).collect();
        println!(
            "{:<15}  [{}]  {:.4}",
            format!("{coalition:?}"),
            shown.join(", "),
            tsv_utility(&record, &coalition)?
        );
    }

    let rc = round_contributions(&record, UtilityKind::TsvEuclidean, &ShapleyConfig::default(), None)?;
    println!(
        "\nper-round Shapley values ({} path, {} coalitions):",
        if rc.exact { "exact" } else { "monte carlo" },
        rc.evaluations
    );
    for (id, phi) in &rc.values {
        println!("  client {id}: {phi:+.4}");
    }

    let mut ledger = ContributionLedger::new();
    ledger.accumulate(&rc.values, 0)?;
    let selected: Vec<usize> = deltas.keys().copied().collect();
    let w = fedtsv_weights(&ledger, &selected).normalized();
    let cos = cgsv_scores(&deltas)?;
    println!("\nclient  fedtsv weight  cgsv score");
    for id in selected {
        println!("{id:>6}  {:>13.4}  {:>+10.4}", w[&id], cos[&id]);
    }
    Ok(())
}
