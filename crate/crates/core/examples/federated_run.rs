//! Run one experiment from a config file and print a summary of its outputs.
//!
//! ```text
//! cargo run --release --example federated_run [config] [output-dir]
//! ```
//!
//! Without arguments this runs `configs/synthetic-malicious.cfg`.

use std::path::PathBuf;

use fedtsv::harness::{inspect_report, load_config, run_experiment, ConfigOverrides};

fn main() -> fedtsv::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic-malicious.cfg"));
    let overrides = ConfigOverrides {
        output_dir: args.next().map(PathBuf::from),
        master_seed: None,
    };
    let cfg = load_config(&config, &overrides)?;
    println!(
        "{}: {} rounds, {} of {} clients per round, strategy {}",
        config.display(),
        cfg.schedule.total_rounds,
        cfg.schedule.clients_per_round,
        cfg.partition.n_clients,
        cfg.strategy
    );

    let artifacts = run_experiment(&cfg, 1)?;
    artifacts.write(&cfg.output_dir)?;
    print!("{}", inspect_report(&cfg.output_dir)?);
    Ok(())
}
