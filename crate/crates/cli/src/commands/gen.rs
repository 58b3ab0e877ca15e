//! `cwm gen` — write a synthetic play log with its ground-truth sidecar.

use cwm_core::records::{stats, write_csv};
use cwm_core::synth::{generate, write_ground_truth};
use cwm_core::Result;

use super::{ensure_parent, guard_overwrite, write_json};
use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, force: bool) -> Result<()> {
    cfg.synth.validate()?;
    let data_path = cfg.out_dir.join("data").join("synthetic.csv");
    let truth_path = cfg.out_dir.join("data").join("ground_truth.csv");
    let stats_path = cfg.out_dir.join("data").join("stats.json");
    for path in [&data_path, &truth_path, &stats_path] {
        guard_overwrite(path, force)?;
    }

    let (ds, gt) = generate(&cfg.synth)?;
    ensure_parent(&data_path)?;
    write_csv(&ds, &data_path)?;
    write_ground_truth(&gt, &truth_path)?;

    let summary = stats(&ds)?;
    write_json(&summary, &stats_path)?;
    log::info!("wrote {} records to {}", ds.len(), data_path.display());
    println!("{}", serde_json::to_string_pretty(&summary).expect("stats serialize"));
    Ok(())
}
