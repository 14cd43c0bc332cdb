//! Train the reference admission model end to end and show that an
//! identical rerun reproduces the same artifact.
//!
//!     cargo run --release --example train_model

use lm_core::demo;
use lm_core::features::PLANTED_FEATURE;

fn main() -> lm_core::Result<()> {
    let (platform, cohort) = demo::synthetic_platform(2000, 42)?;
    println!("cohort {} with {} rows", cohort.cohort_id, cohort.rows.len());

    let mut cfg = demo::train_config(&cohort.cohort_id);
    cfg.hyperparameters.epochs = 40;
    println!("{}", toml::to_string(&cfg).expect("config encodes"));

    let out = platform.train(&cfg)?;
    println!("{} v{} ({})", out.spec.model_id, out.spec.version, out.run_id);
    println!("{}", out.report.table());
    println!("top features by permutation importance:");
    for f in out.importance.iter().take(5) {
        println!("  {:<24} {:+.4}", f.feature, f.importance);
    }
    println!("planted feature ranked first: {}", out.importance[0].feature == PLANTED_FEATURE);

    let rerun = platform.train(&cfg)?;
    println!(
        "rerun: same artifact {}, same provenance {}, new version created {}",
        rerun.spec.artifact_digest == out.spec.artifact_digest,
        rerun.provenance.record_digest == out.provenance.record_digest,
        rerun.created
    );
    Ok(())
}
