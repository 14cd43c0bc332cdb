//! Acceptance suite. Runs every criterion in order, prints one
//! `PASS`/`FAIL` line each, and exits non-zero if any fails.
//!
//! Tolerances are pinned at the top of the file.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant};

use chrono::{Duration, NaiveDate};
use lm_core::demo;
use lm_core::domain::{ClaimEvent, Cohort, CohortRow, EventType};
use lm_core::features::{FeatureScalar, VectorPolicy, PLANTED_FEATURE};
use lm_core::inference::{FeedbackLog, InferenceService, PredictionLog, PredictionRecord, PredictionRequest};
use lm_core::ingest::label_for;
use lm_core::monitoring::{psi, AlertKind, AlertLog, Monitor, MonitorConfig, Severity};
use lm_core::registry::{get_lineage, score_linear, ContentAddressed, ModelRegistry, Stage};
use lm_core::training::{auc, gradient, objective, LinearModel};
use lm_core::workspace::DataRoot;
use lm_core::Platform;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const E2E_BUDGET: StdDuration = StdDuration::from_secs(300);
const E2E_PATIENTS: usize = 2000;
const E2E_MIN_EVENTS: usize = 20_000;
const E2E_MIN_FEATURES: usize = 40;
const E2E_PREDICTIONS: usize = 1000;
const E2E_FEEDBACK: usize = 200;
const SKEW_PAIRS: usize = 200;
const PIT_TRIALS: usize = 10_000;
const AUC_INSTANCES: usize = 100;
const AUC_MAX_N: usize = 200;
const GRADIENT_REL_TOL: f64 = 1e-5;
const PSI_EXAMPLE: f64 = 0.878_889_8; // 0.4 ln(9/5) + 0.4 ln 5, evaluated by hand
const PSI_TOL: f64 = 1e-4;
const PLANTED_MIN_AUC: f64 = 0.7;
const DRIFT_TRIALS: u64 = 20;
const DRIFT_MAX_FALSE: usize = 1;
const DRIFT_MIN_DETECTED: usize = 19;
const DRIFT_SHIFT_SD: f64 = 3.0;
const DRIFT_FEATURE: &str = "age_at_index";
const STAGE_TRANSITIONS: usize = 10_000;
const LATENCY_REQUESTS: usize = 400;
const TRACKED_RUNS: u32 = 50;

type Outcome = Result<String, String>;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lm")
}

fn count_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).map(|s| s.lines().filter(|l| !l.trim().is_empty()).count()).unwrap_or(0)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2e_lifecycle() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/demo.sh");
    let started = Instant::now();
    let out = Command::new("bash")
        .arg(&script)
        .env("LM_BIN", bin())
        .env("LM_DATA_ROOT", dir.path())
        .env("PATIENTS", E2E_PATIENTS.to_string())
        .env("REQUESTS", E2E_PREDICTIONS.to_string())
        .env("FEEDBACK", E2E_FEEDBACK.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    check(out.status.success(), || {
        format!("demo exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    check(elapsed < E2E_BUDGET, || format!("took {elapsed:?}"))?;

    let root = DataRoot::new(dir.path());
    let patients = count_lines(&root.patients());
    let events: usize = root.event_files().map_err(|e| e.to_string())?.iter().map(|p| count_lines(p)).sum();
    let features = count_lines(&root.catalog());
    let predictions = count_lines(&root.predictions());
    let feedback = count_lines(&root.feedback());
    check(patients == E2E_PATIENTS, || format!("{patients} patients"))?;
    check(events >= E2E_MIN_EVENTS, || format!("{events} events"))?;
    check(features >= E2E_MIN_FEATURES, || format!("{features} features"))?;
    check(predictions == E2E_PREDICTIONS, || format!("{predictions} predictions logged"))?;
    check(feedback == E2E_FEEDBACK, || format!("{feedback} feedback records"))?;
    Ok(format!(
        "{patients} patients, {events} events, {features} features, {predictions} predictions, {feedback} feedback in {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn lm_json(root: &Path, args: &[&str]) -> Result<Value, String> {
    let out = Command::new(bin()).env("LM_DATA_ROOT", root).arg("--json").args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("lm {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())
}

fn reproducibility() -> Outcome {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = dir.path();
        lm_json(root, &["ingest", "generate", "--patients", "1000", "--seed", "77"])?;
        let cohort = lm_json(root, &["cohort", "build"])?;
        lm_json(root, &["features", "register"])?;
        let train = lm_json(root, &["train", "run"])?;
        let model = train["model_id"].as_str().unwrap_or_default().to_string();
        let version = train["version"].to_string();
        let spec = lm_json(root, &["registry", "show", &model, &version])?;
        runs.push((cohort["data_digest"].clone(), train, spec));
    }
    let (a, b) = (&runs[0], &runs[1]);
    check(a.0 == b.0, || "input digests differ".into())?;
    check(a.1["artifact_digest"] == b.1["artifact_digest"], || "artifact digests differ".into())?;
    check(a.1["provenance_ref"] == b.1["provenance_ref"], || "provenance digests differ".into())?;
    // serde_json round-trips f64 exactly, so equality here is bit equality.
    check(a.2["metrics"] == b.2["metrics"], || format!("metrics differ: {} vs {}", a.2["metrics"], b.2["metrics"]))?;
    check(a.1["report"] == b.1["report"], || "eval reports differ".into())?;
    Ok(format!("artifact {}", a.1["artifact_digest"].as_str().unwrap_or_default().get(..12).unwrap_or_default()))
}

fn random_date(rng: &mut ChaCha8Rng, from: NaiveDate, days: i64) -> NaiveDate {
    from + Duration::days(rng.random_range(0..days))
}

fn promote(reg: &ModelRegistry, model: &str, version: u32) -> Result<(), String> {
    reg.transition_stage(model, version, Stage::Staging, "acceptance").map_err(|e| e.to_string())?;
    reg.transition_stage(model, version, Stage::Production, "acceptance").map_err(|e| e.to_string())?;
    Ok(())
}

fn cold_service(p: &Platform) -> InferenceService {
    InferenceService::new(
        p.registry.clone(),
        Arc::new(p.features.cold_copy()),
        p.timelines.clone(),
        Arc::new(PredictionLog::in_memory()),
        Arc::new(FeedbackLog::in_memory()),
    )
}

/// Trains on a cohort with a random index date per patient, then compares
/// the training row digests with both serving paths.
fn skew() -> Outcome {
    let (p, _) = demo::synthetic_platform(1000, 31).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let target = demo::target();
    let rows: Vec<CohortRow> = p
        .timelines
        .patient_ids()
        .into_iter()
        .filter_map(|id| {
            let t = p.timelines.get(&id)?;
            let d = random_date(&mut rng, "2019-06-01".parse().unwrap(), 730);
            (t.birth_date <= d).then(|| CohortRow { label: label_for(&t, &target, d), patient_id: id, index_date: d })
        })
        .collect();
    let cohort = Cohort::from_rows(target, rows).map_err(|e| e.to_string())?;
    p.add_cohort(&cohort).map_err(|e| e.to_string())?;
    let out = p.train(&demo::train_config(&cohort.cohort_id)).map_err(|e| e.to_string())?;
    promote(&p.registry, &out.spec.model_id, out.spec.version)?;

    let warm = p.inference(None);
    let cold = cold_service(&p);
    let cold_repo = p.features.cold_copy();
    let sample: Vec<_> = out.rows.choose_multiple(&mut rng, SKEW_PAIRS).collect();
    let mut mismatches = 0;
    for row in &sample {
        let req = PredictionRequest::new(demo::TASK_ID, &row.patient_id, row.index_date);
        let stored = warm.predict(&req.clone().with_policy(VectorPolicy::PrecomputedOnly), None).map_err(|e| e.to_string())?;
        let computed = cold.predict(&req, None).map_err(|e| e.to_string())?;
        let t = p.timelines.get(&row.patient_id).ok_or("missing timeline")?;
        let (v, _) = cold_repo
            .get_vector_asof(Some(&t), &row.patient_id, &out.spec.feature_refs, row.index_date, VectorPolicy::ComputeOnMiss)
            .map_err(|e| e.to_string())?;
        for d in [&stored.vector_digest, &computed.vector_digest, &v.vector_digest] {
            mismatches += usize::from(*d != row.vector_digest);
        }
    }
    let distinct_dates = sample.iter().map(|r| r.index_date).collect::<std::collections::BTreeSet<_>>().len();
    check(mismatches == 0, || format!("{mismatches} digest mismatches"))?;
    Ok(format!("{} pairs over {distinct_dates} dates, 3 serving paths, 0 mismatches", sample.len()))
}

/// Each trial appends one event dated after some as-of date and checks that
/// nothing served or stored for earlier dates moves.
fn point_in_time() -> Outcome {
    let (p, _) = demo::synthetic_platform(300, 17).map_err(|e| e.to_string())?;
    let dates: Vec<NaiveDate> = ["2019-07-01", "2020-01-01", "2020-07-01", "2021-01-01"].iter().map(|s| s.parse().unwrap()).collect();
    let ids = p.timelines.patient_ids();
    let rows: Vec<CohortRow> = ids
        .iter()
        .filter_map(|id| {
            let t = p.timelines.get(id)?;
            (t.birth_date <= dates[0]).then(|| CohortRow { patient_id: id.clone(), index_date: demo::index_date(), label: 0 })
        })
        .collect();
    let mut rows = rows;
    for (i, r) in rows.iter_mut().enumerate() {
        r.label = u8::from(i % 4 == 0);
    }
    let cohort = Cohort::from_rows(demo::target(), rows).map_err(|e| e.to_string())?;
    p.add_cohort(&cohort).map_err(|e| e.to_string())?;
    let out = p.train(&demo::train_config(&cohort.cohort_id)).map_err(|e| e.to_string())?;
    promote(&p.registry, &out.spec.model_id, out.spec.version)?;
    let refs = out.spec.feature_refs.clone();
    let patients: Vec<String> = cohort.rows.iter().map(|r| r.patient_id.clone()).collect();
    let points: Vec<(String, NaiveDate)> =
        patients.iter().flat_map(|id| dates.iter().map(move |d| (id.clone(), *d))).collect();
    let report = p.features.materialize_points(p.timelines.as_ref(), &refs, &points).map_err(|e| e.to_string())?;
    check(report.failures.is_empty(), || "materialization failures".into())?;

    let cold = cold_service(&p);
    let mut baseline: HashMap<(String, NaiveDate), (f64, lm_core::domain::Digest)> = HashMap::new();
    for (id, d) in &points {
        let r = cold.predict(&PredictionRequest::new(demo::TASK_ID, id, *d), None).map_err(|e| e.to_string())?;
        baseline.insert((id.clone(), *d), (r.probability, r.vector_digest));
    }
    let stored_before = p.features.store().snapshot();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let types = [EventType::Diagnosis, EventType::Procedure, EventType::Admission, EventType::Pharmacy];
    let codes = ["DX-RISK", "DX-001", "DX-004", "PX-002", "ADM-UNPLANNED", "ADM-001", "RX-000", "RX-003"];
    let mut earliest_append: HashMap<String, NaiveDate> = HashMap::new();
    let mut violations = 0usize;
    let mut checks = 0usize;
    for _ in 0..PIT_TRIALS {
        let id = patients.choose(&mut rng).expect("patients").clone();
        let d = *dates.choose(&mut rng).expect("dates");
        let when = d + Duration::days(rng.random_range(1..=400));
        p.timelines.append_event(ClaimEvent {
            patient_id: id.clone(),
            event_date: when,
            event_type: *types.choose(&mut rng).expect("types"),
            code: codes.choose(&mut rng).expect("codes").to_string(),
            value: None,
            source: "future".into(),
        });
        let cut = earliest_append.entry(id.clone()).or_insert(when);
        *cut = (*cut).min(when);
        let cut = *cut;
        // Every as-of date still strictly before this patient's first appended event.
        for &as_of in dates.iter().filter(|x| **x < cut) {
            let (prob, digest) = &baseline[&(id.clone(), as_of)];
            let served = cold.predict(&PredictionRequest::new(demo::TASK_ID, &id, as_of), None).map_err(|e| e.to_string())?;
            let stored = p
                .features
                .get_vector_asof(None, &id, &refs, as_of, VectorPolicy::PrecomputedOnly)
                .map_err(|e| e.to_string())?;
            checks += 1;
            if served.probability != *prob || served.vector_digest != *digest || stored.0.vector_digest != *digest {
                violations += 1;
            }
        }
    }

    // Recompute the whole store from the mutated timelines.
    for r in &refs {
        p.features.mark_stale(&r.name).map_err(|e| e.to_string())?;
    }
    p.features.materialize_points(p.timelines.as_ref(), &refs, &points).map_err(|e| e.to_string())?;
    let after: HashMap<_, _> = p
        .features
        .store()
        .snapshot()
        .into_iter()
        .map(|v| ((v.patient_id.clone(), v.feature_name.clone(), v.as_of_date), v.value))
        .collect();
    let mut stored_checked = 0;
    for v in &stored_before {
        if earliest_append.get(&v.patient_id).is_none_or(|cut| v.as_of_date < *cut) {
            stored_checked += 1;
            if after.get(&(v.patient_id.clone(), v.feature_name.clone(), v.as_of_date)) != Some(&v.value) {
                violations += 1;
            }
        }
    }
    check(violations == 0, || format!("{violations} violations"))?;
    check(checks >= PIT_TRIALS / 2, || format!("only {checks} served checks"))?;
    Ok(format!("{PIT_TRIALS} trials, {checks} served checks, {stored_checked} recomputed values, 0 violations"))
}

fn pair_auc(s: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..AUC_INSTANCES {
        let n = rng.random_range(2..=AUC_MAX_N);
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        y[0] = 1;
        y[1] = 0;
        // Coarse scores force ties.
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 4.0).collect();
        let got = auc(&s, &y).map_err(|e| e.to_string())?;
        let want = pair_auc(&s, &y);
        check(got == want, || format!("instance {k}: auc {got} vs pairs {want}"))?;
    }

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (n, d) = (rng.random_range(5..60), rng.random_range(1..8));
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let rows: Vec<usize> = (0..n).collect();
        let l2 = rng.random_range(0.0..0.1);
        let model = LinearModel {
            intercept: rng.random_range(-1.0..1.0),
            coefficients: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let g = gradient(&model, &x, &y, &rows, l2);
        let h = 1e-5;
        let fd = |f: &dyn Fn(&mut LinearModel)| {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            f(&mut plus);
            f(&mut minus);
            (plus, minus)
        };
        let mut compare = |analytic: f64, plus: LinearModel, minus: LinearModel| {
            let numeric = (objective(&plus, &x, &y, &rows, l2) - objective(&minus, &x, &y, &rows, l2)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        };
        let (mut plus, mut minus) = fd(&|_| {});
        plus.intercept += h;
        minus.intercept -= h;
        compare(g.intercept, plus, minus);
        for j in 0..d {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            plus.coefficients[j] += h;
            minus.coefficients[j] -= h;
            compare(g.coefficients[j], plus, minus);
        }
    }
    check(worst < GRADIENT_REL_TOL, || format!("gradient relative error {worst:e}"))?;

    let v = psi(&[0.5, 0.5], &[0.9, 0.1]).map_err(|e| e.to_string())?;
    check((v - PSI_EXAMPLE).abs() <= PSI_TOL, || format!("psi {v}"))?;
    Ok(format!("{AUC_INSTANCES} auc instances exact, gradient rel err {worst:.1e}, psi {v:.4}"))
}

fn planted_signal() -> Outcome {
    let (p, cohort) = demo::synthetic_platform(2000, 42).map_err(|e| e.to_string())?;
    let out = p.train(&demo::train_config(&cohort.cohort_id)).map_err(|e| e.to_string())?;
    let top = &out.importance[0].feature;
    check(out.report.auc_test > PLANTED_MIN_AUC, || format!("auc_test {}", out.report.auc_test))?;
    check(top == PLANTED_FEATURE, || format!("top feature {top}"))?;
    Ok(format!("auc_test {:.4}, top feature {top}", out.report.auc_test))
}

/// Windows are resampled from real served predictions; the shifted window
/// moves one model input by a multiple of its training standard deviation
/// and rescores it.
fn drift_detection() -> Outcome {
    let (p, cohort) = demo::synthetic_platform(2000, 8).map_err(|e| e.to_string())?;
    let out = p.train(&demo::train_config(&cohort.cohort_id)).map_err(|e| e.to_string())?;
    promote(&p.registry, &out.spec.model_id, out.spec.version)?;
    let svc = p.inference(None);
    let served: Vec<PredictionRecord> = cohort
        .rows
        .iter()
        .map(|r| svc.predict(&PredictionRequest::new(demo::TASK_ID, &r.patient_id, r.index_date), None))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let artifact = p.registry.artifact(&out.spec.artifact_digest).map_err(|e| e.to_string())?;
    let profile = p.profiles.get(&out.spec.model_id, out.spec.version).map_err(|e| e.to_string())?;
    let col = out.spec.feature_refs.iter().position(|r| r.name == DRIFT_FEATURE).ok_or("drift feature not in model")?;
    let shift = DRIFT_SHIFT_SD * profile.features[col].std_dev;
    let cfg = MonitorConfig::default();

    let run = |window: Vec<PredictionRecord>| -> Result<Vec<lm_core::monitoring::Alert>, String> {
        let log = Arc::new(PredictionLog::in_memory());
        for r in &window {
            log.append(r).map_err(|e| e.to_string())?;
        }
        let m = Monitor::new(
            p.registry.clone(),
            log,
            Arc::new(FeedbackLog::in_memory()),
            p.profiles.clone(),
            Arc::new(AlertLog::in_memory()),
            cfg.clone(),
        );
        Ok(m.evaluate_and_notify().map_err(|e| e.to_string())?.new_alerts)
    };
    let (mut false_alarms, mut detected) = (0, 0);
    for trial in 0..DRIFT_TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        // Resampling reuses records, so each copy gets its own request id.
        let calm: Vec<PredictionRecord> = (0..cfg.drift_window)
            .map(|i| {
                let mut r = served.choose(&mut rng).expect("served").clone();
                r.request_id = format!("{trial}-{i}");
                r
            })
            .collect();
        let alerts = run(calm.clone())?;
        if alerts.iter().any(|a| a.severity == Severity::Critical) {
            false_alarms += 1;
        }
        let shifted: Vec<PredictionRecord> = calm
            .into_iter()
            .map(|mut r| {
                if let FeatureScalar::Numeric(v) = &mut r.entries[col].value {
                    *v += shift;
                }
                let x: Vec<f64> = r.entries.iter().map(|e| e.value.model_input().unwrap_or(0.0)).collect();
                let s = score_linear(&artifact, &x).expect("scores");
                r.raw_score = s.raw;
                r.probability = s.probability;
                r
            })
            .collect();
        let alerts = run(shifted)?;
        let metric = format!("psi:{DRIFT_FEATURE}");
        if alerts.iter().any(|a| a.kind == AlertKind::FeatureDrift && a.severity == Severity::Critical && a.metric_name == metric) {
            detected += 1;
        }
    }
    check(false_alarms <= DRIFT_MAX_FALSE, || format!("{false_alarms} false critical alerts"))?;
    check(detected >= DRIFT_MIN_DETECTED, || format!("{detected}/{DRIFT_TRIALS} shifts detected"))?;
    Ok(format!("{false_alarms}/{DRIFT_TRIALS} false critical, {detected}/{DRIFT_TRIALS} shifts detected"))
}

fn allowed(from: Stage, to: Stage) -> bool {
    matches!(
        (from, to),
        (Stage::None, Stage::Staging)
            | (Stage::Staging, Stage::Production)
            | (Stage::Production, Stage::Archived)
            | (Stage::Staging, Stage::Archived)
    )
}

fn stage_machine() -> Outcome {
    let reg = ModelRegistry::in_memory();
    let refs = vec![lm_core::features::FeatureRef::new("f", 1)];
    let models = ["m1", "m2", "m3"];
    let mut oracle: BTreeMap<(&str, u32), Stage> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (k, m) in models.iter().enumerate() {
        for v in 0..5 {
            let version = register(&reg, m, &refs, (k * 10 + v) as f64)?;
            oracle.insert((*m, version), Stage::None);
        }
    }
    let stages = [Stage::None, Stage::Staging, Stage::Production, Stage::Archived];
    let (mut accepted, mut rejected, mut registered) = (0, 0, 15);
    for step in 0..STAGE_TRANSITIONS {
        let m = *models.choose(&mut rng).expect("models");
        // Archived is terminal, so keep fresh versions arriving.
        if rng.random_bool(0.05) {
            registered += 1;
            let version = register(&reg, m, &refs, 1000.0 + f64::from(registered))?;
            oracle.insert((m, version), Stage::None);
        }
        let newest = oracle.keys().filter(|(om, _)| *om == m).map(|(_, v)| *v).max().expect("versions");
        let version = rng.random_range(1..=newest);
        let to = *stages.choose(&mut rng).expect("stages");
        let from = oracle[&(m, version)];
        let result = reg.transition_stage(m, version, to, "fuzz");
        check(result.is_ok() == allowed(from, to), || format!("step {step}: {m} v{version} {from}->{to} gave {result:?}"))?;
        if result.is_ok() {
            accepted += 1;
            if to == Stage::Production {
                for ((om, _), s) in oracle.iter_mut() {
                    if *om == m && *s == Stage::Production {
                        *s = Stage::Archived;
                    }
                }
            }
            oracle.insert((m, version), to);
        } else {
            rejected += 1;
        }
        for om in models {
            let live: Vec<_> = reg.versions(om).into_iter().filter(|s| s.stage == Stage::Production).collect();
            check(live.len() <= 1, || format!("step {step}: {} Production versions of {om}", live.len()))?;
            for s in reg.versions(om) {
                check(oracle[&(om, s.version)] == s.stage, || format!("step {step}: {om} v{} diverged", s.version))?;
            }
        }
    }
    let audit = reg.audit_log();
    let mut replay: BTreeMap<(String, u32), Stage> = BTreeMap::new();
    for t in &audit {
        let cur = replay.entry((t.model_id.clone(), t.version)).or_insert(Stage::None);
        check(*cur == t.from && allowed(t.from, t.to), || format!("audit entry {t:?} is not a legal step"))?;
        *cur = t.to;
    }
    check(accepted >= STAGE_TRANSITIONS / 20, || format!("only {accepted} transitions accepted"))?;
    Ok(format!(
        "{STAGE_TRANSITIONS} transitions over {registered} versions ({accepted} accepted, {rejected} rejected), {} audit entries replayed",
        audit.len()
    ))
}

fn register(reg: &ModelRegistry, model: &str, refs: &[lm_core::features::FeatureRef], seed: f64) -> Result<u32, String> {
    use lm_core::registry::{ModelArtifact, ModelSpecDraft, ProvenanceRecord};
    let prov = ProvenanceRecord::new(
        lm_core::domain::digest(model.as_bytes()),
        lm_core::domain::digest(&seed.to_le_bytes()),
        vec![],
        "logreg_sgd",
        BTreeMap::new(),
        BTreeMap::from([("auc_test".to_string(), 0.5)]),
        "acceptance",
        chrono::Utc::now(),
    )
    .map_err(|e| e.to_string())?;
    let art = ModelArtifact::linear(seed, vec![1.0], None).map_err(|e| e.to_string())?;
    let draft = ModelSpecDraft {
        task_id: "t".into(),
        model_id: model.into(),
        serving_handle: String::new(),
        feature_refs: refs.to_vec(),
        metadata_generator_ids: vec![],
        provenance_ref: prov.record_digest.clone(),
        metrics: prov.metrics.clone(),
        thresholds: BTreeMap::new(),
    };
    Ok(reg.register_model(draft, &art, &prov).map_err(|e| e.to_string())?.version)
}

fn percentile(v: &mut [f64], q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

fn latency() -> Outcome {
    let (p, cohort) = demo::synthetic_platform(LATENCY_REQUESTS, 3).map_err(|e| e.to_string())?;
    let out = p.train(&demo::train_config(&cohort.cohort_id)).map_err(|e| e.to_string())?;
    promote(&p.registry, &out.spec.model_id, out.spec.version)?;
    let warm = p.inference(None);
    let cold = cold_service(&p);
    let reqs: Vec<PredictionRequest> =
        cohort.rows.iter().map(|r| PredictionRequest::new(demo::TASK_ID, &r.patient_id, r.index_date)).collect();
    // Prime caches that both paths share.
    warm.predict(&reqs[0], None).map_err(|e| e.to_string())?;
    cold.predict(&reqs[0], None).map_err(|e| e.to_string())?;
    let mut hot = Vec::with_capacity(reqs.len());
    let mut miss = Vec::with_capacity(reqs.len());
    for r in &reqs {
        let a = warm.predict(&r.clone().with_policy(VectorPolicy::PrecomputedOnly), None).map_err(|e| e.to_string())?;
        let b = cold.predict(r, None).map_err(|e| e.to_string())?;
        check(b.origin_flags.iter().all(|o| *o == lm_core::features::Origin::Computed), || "cold path hit the store".into())?;
        hot.push(a.latency_ms);
        miss.push(b.latency_ms);
    }
    let p95 = percentile(&mut hot, 0.95);
    let p50 = percentile(&mut miss, 0.5);
    check(p95 < p50, || format!("precomputed p95 {p95:.4} ms >= compute p50 {p50:.4} ms"))?;
    Ok(format!("precomputed p95 {p95:.4} ms < compute-on-miss p50 {p50:.4} ms over {} requests", reqs.len()))
}

fn experiment_tracking() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = DataRoot::new(dir.path());
    let model_id;
    {
        let (mem, cohort) = demo::synthetic_platform(600, 12).map_err(|e| e.to_string())?;
        lm_core::ingest::save_timelines(&root, "synthetic", &mem.timelines.patient_ids().iter().filter_map(|id| mem.timelines.get(id)).map(|t| (*t).clone()).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let p = Platform::open(&root).map_err(|e| e.to_string())?;
        for d in lm_core::features::standard_features() {
            p.features.register_feature(d).map_err(|e| e.to_string())?;
        }
        p.add_cohort(&cohort).map_err(|e| e.to_string())?;
        let mut cfg = demo::train_config(&cohort.cohort_id);
        model_id = cfg.model_id();
        for run in 0..TRACKED_RUNS {
            cfg.hyperparameters.seed = u64::from(run) + 1;
            cfg.hyperparameters.epochs = 10 + run % 5 * 5;
            cfg.hyperparameters.learning_rate = [0.05, 0.1, 0.2][run as usize % 3];
            let out = p.train(&cfg).map_err(|e| e.to_string())?;
            check(out.created, || format!("run {run} did not create a version"))?;
        }
    }
    // Everything below reads back from disk.
    let p = Platform::open(&root).map_err(|e| e.to_string())?;
    let versions = p.registry.versions(&model_id);
    check(versions.len() == TRACKED_RUNS as usize, || format!("{} versions", versions.len()))?;
    let listed = p.registry.list(Some(demo::TASK_ID)).len();
    check(listed == TRACKED_RUNS as usize, || format!("{listed} listed"))?;
    let mut artifacts = std::collections::BTreeSet::new();
    for s in &versions {
        let lineage = get_lineage(p.registry.blobs(), &s.provenance_ref, Some(&p.features)).map_err(|e| e.to_string())?;
        let rec = &lineage.record;
        check(*rec.declared_digest() == rec.content_digest().map_err(|e| e.to_string())?, || format!("v{} record digest", s.version))?;
        check(rec.record_digest == s.provenance_ref, || format!("v{} provenance ref", s.version))?;
        check(lineage.cohorts.iter().all(|c| c.n_rows.is_some()), || format!("v{} cohort blob missing", s.version))?;
        check(lineage.features.len() == s.feature_refs.len() && lineage.features.iter().all(|f| f.params_match), || {
            format!("v{} feature lineage", s.version)
        })?;
        let art = p.registry.artifact(&s.artifact_digest).map_err(|e| e.to_string())?;
        check(art.content_digest().map_err(|e| e.to_string())? == s.artifact_digest, || format!("v{} artifact digest", s.version))?;
        artifacts.insert(s.artifact_digest.clone());
    }
    check(artifacts.len() == TRACKED_RUNS as usize, || format!("{} distinct artifacts", artifacts.len()))?;
    Ok(format!("{} versions listed after reopen, every provenance record and cohort verified", versions.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("end-to-end lifecycle", e2e_lifecycle),
        ("reproducibility", reproducibility),
        ("training/inference skew", skew),
        ("point-in-time safety", point_in_time),
        ("metric oracles", metric_oracles),
        ("planted signal", planted_signal),
        ("drift detection", drift_detection),
        ("registry stage machine", stage_machine),
        ("precomputation latency", latency),
        ("experiment tracking", experiment_tracking),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|x| x == &n.to_string() || name.contains(x.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        let line = match &result {
            Ok(detail) => format!("criterion {n:>2} PASS {name}: {detail} ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                format!("criterion {n:>2} FAIL {name}: {why} ({secs:.1}s)")
            }
        };
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    }
    if failed > 0 {
        let _ = writeln!(out, "{failed} criteria failed");
        std::process::exit(1);
    }
}
