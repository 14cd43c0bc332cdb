//! Generate a synthetic population, normalize a few raw claims from two
//! source layouts, then build and split a labelled cohort.
//!
//!     cargo run --example ingest_and_cohort

use std::collections::BTreeMap;

use lm_core::demo;
use lm_core::domain::{validate_timeline, PatientTimeline, Sex};
use lm_core::ingest::{
    build_cohort, generate_synthetic, normalize_to_cdm, split_cohort, GeneratorConfig, RawSourceRecord, SourceMappings,
};

fn raw(source: &str, fields: &[(&str, &str)]) -> RawSourceRecord {
    RawSourceRecord {
        source_name: source.into(),
        payload: fields.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
    }
}

fn main() -> lm_core::Result<()> {
    let cfg = GeneratorConfig { n_patients: 500, seed: 3, ..Default::default() };
    let timelines = generate_synthetic(&cfg)?;
    let events: usize = timelines.iter().map(|t| t.events.len()).sum();
    println!("generated {} patients with {events} events", timelines.len());
    assert!(timelines.iter().all(|t| validate_timeline(t).violations.is_empty()));

    // Raw records from a claims feed and a pharmacy feed.
    let records = vec![
        raw("claims_v1", &[("pid", "X1"), ("dt", "2020-03-04"), ("dx", "DX-RISK")]),
        raw("claims_v1", &[("pid", "X1"), ("dt", "2021-02-10"), ("adm", "ADM-UNPLANNED")]),
        raw("pharmacy_v1", &[("member", "X1"), ("fill_date", "2020-03-09"), ("ndc", "RX-002"), ("cost", "12.5")]),
        raw("claims_v1", &[("pid", "X2"), ("dt", "not-a-date"), ("dx", "DX-001")]),
        raw("claims_v1", &[("pid", "X2"), ("dt", "2020-01-01")]),
    ];
    let out = normalize_to_cdm(&records, &SourceMappings::builtin())?;
    println!("normalized {} events; rejects:", out.events.len());
    for r in &out.rejects {
        println!("  #{} {}: {}", r.index, r.source_name, r.reason);
    }
    let extra = PatientTimeline::new("X1", "1950-06-01".parse().unwrap(), Sex::M, out.events);

    let mut all = timelines;
    all.push(extra);
    let cohort = build_cohort(&all, &demo::target(), &demo::index_rule())?;
    let positives = cohort.rows.iter().filter(|r| r.label == 1).count();
    println!(
        "cohort {}: {} rows, {positives} positive ({:.1}%), digest {}",
        cohort.cohort_id,
        cohort.rows.len(),
        100.0 * positives as f64 / cohort.rows.len() as f64,
        cohort.data_digest.short()
    );
    let x1 = cohort.rows.iter().find(|r| r.patient_id == "X1").expect("X1 is in the cohort");
    println!("X1 indexed {} with label {}", x1.index_date, x1.label);

    let (train, test) = split_cohort(&cohort, (0.8, 0.2), 7)?;
    println!("split: train {} rows ({}), test {} rows ({})", train.rows.len(), train.cohort_id, test.rows.len(), test.cohort_id);
    Ok(())
}
