//! Run the same federation under every aggregation policy and compare
//! accuracy curves and the weight each client profile ends up with.
//!
//! ```text
//! cargo run --release --example compare_policies [output-root]
//! ```

use std::path::PathBuf;

use fedtsv::harness::{load_config, run_experiment, Comparison, ConfigOverrides, RunSummary};
use fedtsv::strategies::PolicyKind;

fn main() -> fedtsv::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fedtsv-compare"));
    let preset = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic-malicious.cfg");

    let mut runs = Vec::new();
    for policy in PolicyKind::ALL {
        let dir = root.join(policy.as_str());
        let overrides = ConfigOverrides {
            output_dir: Some(dir.clone()),
            master_seed: None,
        };
        let mut cfg = load_config(&preset, &overrides)?;
        cfg.strategy = policy;
        run_experiment(&cfg, 1)?.write(&dir)?;
        println!("finished {policy} -> {}", dir.display());
        runs.push(RunSummary::load(&dir)?);
    }

    let comparison = Comparison::build(&runs)?;
    println!("\n{}", comparison.render());
    Ok(())
}
