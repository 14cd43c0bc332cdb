//! Track several training runs as versions of one model, promote through
//! the stage machine, and trace the winner back to its inputs.
//!
//!     cargo run --release --example registry_and_provenance

use lm_core::demo;
use lm_core::registry::{get_lineage, Stage};

fn main() -> lm_core::Result<()> {
    let (platform, cohort) = demo::synthetic_platform(1000, 8)?;
    let reg = &platform.registry;

    for (seed, epochs) in [(1, 10), (2, 30), (3, 60)] {
        let mut cfg = demo::train_config(&cohort.cohort_id);
        cfg.hyperparameters.seed = seed;
        cfg.hyperparameters.epochs = epochs;
        let out = platform.train(&cfg)?;
        println!("v{}: seed {seed} epochs {epochs} auc_test {:.4}", out.spec.version, out.report.auc_test);
    }

    // Serving only considers Production, so promote the strongest candidate first.
    let candidate = reg
        .list(Some(demo::TASK_ID))
        .into_iter()
        .max_by(|a, b| a.metrics["auc_test"].total_cmp(&b.metrics["auc_test"]))
        .expect("three versions");
    reg.transition_stage(&candidate.model_id, candidate.version, Stage::Staging, "alice")?;
    reg.transition_stage(&candidate.model_id, candidate.version, Stage::Production, "bob")?;
    let best = reg.get_best_model(demo::TASK_ID)?;
    println!("serving: v{} (auc_test {:.4})", best.version, best.metrics["auc_test"]);

    let other = reg.versions(&best.model_id).into_iter().find(|s| s.version != best.version).expect("three versions");
    if let Err(e) = reg.transition_stage(&other.model_id, other.version, Stage::Production, "eve") {
        println!("rejected: {e}");
    }
    reg.transition_stage(&other.model_id, other.version, Stage::Staging, "alice")?;
    reg.transition_stage(&other.model_id, other.version, Stage::Production, "bob")?;

    for s in reg.list(Some(demo::TASK_ID)) {
        println!("{} v{} {}", s.model_id, s.version, s.stage);
    }
    println!("audit:");
    for t in reg.audit_log() {
        println!("  v{} {} -> {} by {} {}", t.version, t.from, t.to, t.actor, t.reason.unwrap_or_default());
    }

    let lineage = get_lineage(reg.blobs(), &best.provenance_ref, Some(&platform.features))?;
    println!("provenance {} ({})", lineage.record.record_digest.short(), lineage.record.code_revision);
    for c in &lineage.cohorts {
        println!("  {} cohort {} rows {:?} positives {:?}", c.role, c.digest.short(), c.n_rows, c.n_positive);
    }
    let verified = lineage.features.iter().filter(|f| f.params_match).count();
    println!("  {verified}/{} feature definitions match their recorded params", lineage.features.len());
    Ok(())
}
