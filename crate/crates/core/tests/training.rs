use std::collections::{BTreeMap, HashMap};

use lm_core::demo;
use lm_core::domain::PatientTimeline;
use lm_core::features::{standard_features, FeatureRepository, GeneratorRegistry, VectorPolicy, PLANTED_FEATURE};
use lm_core::ingest::{build_cohort, generate_synthetic, GeneratorConfig};
use lm_core::monitoring::ProfileStore;
use lm_core::registry::{sigmoid, ModelRegistry};
use lm_core::training::{
    auc, brier, fit_platt, gradient, objective, permutation_importance, run_pipeline, train_logreg, Hyperparameters,
    LinearModel, PipelineContext, PipelineError, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair_count_auc(s: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

#[test]
fn auc_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        // Coarse scores force plenty of ties.
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 4.0).collect();
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1u8)).collect();
        y[0] = 1;
        y[1] = 0;
        assert_eq!(auc(&s, &y).unwrap(), pair_count_auc(&s, &y));
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let d = rng.random_range(1..=10);
        let n = 30;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1u8)).collect();
        let rows: Vec<usize> = (0..n).collect();
        let l2 = 0.1;
        let m = LinearModel {
            intercept: rng.random_range(-1.0..1.0),
            coefficients: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let g = gradient(&m, &x, &y, &rows, l2);
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for j in 0..=d {
            let (mut plus, mut minus) = (m.clone(), m.clone());
            if j == d {
                plus.intercept += h;
                minus.intercept -= h;
            } else {
                plus.coefficients[j] += h;
                minus.coefficients[j] -= h;
            }
            let fd = (objective(&plus, &x, &y, &rows, l2) - objective(&minus, &x, &y, &rows, l2)) / (2.0 * h);
            let an = if j == d { g.intercept } else { g.coefficients[j] };
            assert!(rel(an, fd) < 1e-5, "coordinate {j}: analytic {an} vs numeric {fd}");
        }
    }
}

#[test]
fn full_batch_loss_is_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] + 0.5 * r[1] + rng.random_range(-0.5..0.5) > 0.0)).collect();
    let rows: Vec<usize> = (0..x.len()).collect();
    let mut prev = f64::INFINITY;
    for epochs in 1..=30 {
        let hp = Hyperparameters { learning_rate: 0.1, epochs, l2: 0.01, batch_size: x.len(), seed: 1 };
        let loss = objective(&train_logreg(&x, &y, &hp).unwrap(), &x, &y, &rows, 0.01);
        assert!(loss <= prev + 1e-15, "epoch {epochs}: {loss} > {prev}");
        prev = loss;
    }
}

#[test]
fn separable_data_is_learned_and_planted_feature_ranks_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let make = |rng: &mut ChaCha8Rng, n: usize| {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[2] > 0.0)).collect();
        (x, y)
    };
    let (xtr, ytr) = make(&mut rng, 400);
    let (xte, yte) = make(&mut rng, 200);
    let hp = Hyperparameters { l2: 0.01, ..Default::default() };
    let m = train_logreg(&xtr, &ytr, &hp).unwrap();
    let test_auc = auc(&m.raw_scores(&xte), &yte).unwrap();
    assert!(test_auc > 0.95, "{test_auc}");
    assert_eq!(test_auc, pair_count_auc(&m.raw_scores(&xte), &yte));

    let names: Vec<String> = (0..5).map(|i| format!("f{i}")).collect();
    let imp = permutation_importance(&m, &xte, &yte, &names, 9, 5).unwrap();
    assert_eq!(imp[0].feature, "f2");
    assert!(imp[1..].iter().all(|f| f.importance < imp[0].importance));
    assert_eq!(imp, permutation_importance(&m, &xte, &yte, &names, 9, 5).unwrap());

    let mut zeroed = m.clone();
    zeroed.coefficients[4] = 0.0;
    let imp = permutation_importance(&zeroed, &xte, &yte, &names, 9, 5).unwrap();
    let f4 = imp.iter().find(|f| f.feature == "f4").unwrap();
    assert!(f4.importance.abs() <= 0.02);
}

#[test]
fn calibration_does_not_worsen_brier_on_overconfident_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits: Vec<f64> = (0..2000).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y: Vec<u8> = logits.iter().map(|l| u8::from(rng.random_bool(sigmoid(*l)))).collect();
    let overconfident: Vec<f64> = logits.iter().map(|l| 3.0 * l).collect();
    let raw_p: Vec<f64> = overconfident.iter().map(|s| sigmoid(*s)).collect();
    let p = fit_platt(&overconfident, &y).unwrap();
    let cal_p: Vec<f64> = overconfident.iter().map(|s| sigmoid(p.a * s + p.b)).collect();
    assert!(brier(&cal_p, &y).unwrap() <= brier(&raw_p, &y).unwrap());
    assert!((p.a - 1.0 / 3.0).abs() < 0.05, "{p:?}");
}

struct Env {
    timelines: HashMap<String, PatientTimeline>,
    cohorts: BTreeMap<String, lm_core::domain::Cohort>,
    features: FeatureRepository,
    registry: ModelRegistry,
    profiles: ProfileStore,
    cohort_id: String,
}

impl Env {
    fn new(n_patients: usize) -> Self {
        let tls = generate_synthetic(&GeneratorConfig { n_patients, ..Default::default() }).unwrap();
        let cohort = build_cohort(&tls, &demo::target(), &demo::index_rule()).unwrap();
        let features = FeatureRepository::in_memory(GeneratorRegistry::builtin());
        for d in standard_features() {
            features.register_feature(d).unwrap();
        }
        Env {
            timelines: tls.into_iter().map(|t| (t.patient_id.clone(), t)).collect(),
            cohort_id: cohort.cohort_id.clone(),
            cohorts: [(cohort.cohort_id.clone(), cohort)].into(),
            features,
            registry: ModelRegistry::in_memory(),
            profiles: ProfileStore::in_memory(),
        }
    }

    fn ctx(&self) -> PipelineContext<'_> {
        PipelineContext {
            cohorts: &self.cohorts,
            timelines: &self.timelines,
            features: &self.features,
            registry: &self.registry,
            profiles: &self.profiles,
        }
    }
}

#[test]
fn pipeline_learns_planted_signal_and_is_reproducible() {
    let env = Env::new(2000);
    let cfg = demo::train_config(&env.cohort_id);
    let a = run_pipeline(&env.ctx(), &cfg).unwrap();
    assert!(a.report.auc_test > 0.7, "auc_test {}", a.report.auc_test);
    assert_eq!(a.importance[0].feature, PLANTED_FEATURE, "{:?}", &a.importance[..3]);
    assert_eq!(a.spec.version, 1);
    assert!(env.registry.get_run(&a.run_id).unwrap().status == "registered");
    env.profiles.get(&a.spec.model_id, 1).unwrap();

    let b = run_pipeline(&env.ctx(), &cfg).unwrap();
    assert!(!b.created);
    assert_eq!(a.spec.artifact_digest, b.spec.artifact_digest);
    assert_eq!(a.provenance.record_digest, b.provenance.record_digest);
    assert_eq!(a.report, b.report);

    // Training rows match the inference path on a cold repository.
    let cold = env.features.cold_copy();
    for row in a.rows.iter().take(50) {
        let (v, _) = cold
            .get_vector_asof(
                env.timelines.get(&row.patient_id),
                &row.patient_id,
                &a.spec.feature_refs,
                row.index_date,
                VectorPolicy::ComputeOnMiss,
            )
            .unwrap();
        assert_eq!(v.vector_digest, row.vector_digest);
    }
}

#[test]
fn missing_feature_fails_at_feature_stage() {
    let env = Env::new(200);
    let cfg = TrainConfig::new(demo::TASK_ID, &env.cohort_id, &["age_at_index", "no_such_feature"]);
    let err = run_pipeline(&env.ctx(), &cfg).unwrap_err();
    assert_eq!(err.stage(), Some("features"));
    let PipelineError::Failed { run_id, .. } = err else { unreachable!() };
    assert_eq!(env.registry.get_run(&run_id).unwrap().status, "failed:features");
    assert!(env.registry.list(None).is_empty());
}

#[test]
fn train_config_parses_from_toml() {
    let cfg = TrainConfig::from_toml(
        r#"
        task_id = "t"
        cohort_id = "c-1"
        features = ["age_at_index", "sex_female@v1"]
        split = [0.7, 0.3]
        [hyperparameters]
        learning_rate = 0.05
        seed = 11
        "#,
    )
    .unwrap();
    assert_eq!(cfg.hyperparameters.learning_rate, 0.05);
    assert_eq!(cfg.hyperparameters.epochs, Hyperparameters::default().epochs);
    assert_eq!(cfg.split, (0.7, 0.3));
    assert_eq!(cfg.model_id(), "t-logreg");
    assert!(TrainConfig::from_toml("task_id = 1").is_err());
    assert!(TrainConfig::from_toml("task_id='t'\ncohort_id='c'\nfeatures=['a']\nbogus=1").is_err());
}
