//! Seeded synthetic claims generator.
//!
//! Each patient draws from its own ChaCha stream (`seed`, patient index), so
//! output is a pure function of the config and independent of thread count.
//! A `target_injection_rate` fraction of patients (exactly
//! `round(rate * n_patients)`, chosen by a seeded shuffle) receive the
//! planted risk-factor diagnosis early in the date range, followed by
//! recurring unplanned admissions.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::domain::{ClaimEvent, EventType, PatientTimeline, Sex};

pub const RISK_FACTOR_CODE: &str = "DX-RISK";
pub const UNPLANNED_ADMISSION_CODE: &str = "ADM-UNPLANNED";
pub const SYNTHETIC_SOURCE: &str = "synthetic";

/// Share of non-injected patients who also carry the risk code.
const RISK_CODE_NOISE_RATE: f64 = 0.05;
/// Mean gap between recurring unplanned admissions.
const READMISSION_MEAN_GAP_DAYS: f64 = 90.0;
/// The planted diagnosis lands in this leading fraction of the date range.
const RISK_ONSET_SPAN: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_patients: usize,
    pub mean_events_per_patient: f64,
    pub date_range: (NaiveDate, NaiveDate),
    pub code_vocabulary_sizes: BTreeMap<EventType, u32>,
    pub target_injection_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 42,
            n_patients: 2000,
            mean_events_per_patient: 12.0,
            date_range: (
                NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
                NaiveDate::from_ymd_opt(2021, 12, 31).unwrap(),
            ),
            code_vocabulary_sizes: [
                (EventType::Diagnosis, 40),
                (EventType::Procedure, 20),
                (EventType::Admission, 3),
                (EventType::Pharmacy, 30),
            ]
            .into(),
            target_injection_rate: 0.3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::Config(m.to_string()));
        if self.n_patients == 0 {
            return bad("n_patients must be positive");
        }
        if !(self.mean_events_per_patient > 0.0 && self.mean_events_per_patient.is_finite()) {
            return bad("mean_events_per_patient must be positive");
        }
        if self.date_range.0 >= self.date_range.1 {
            return bad("date_range start must precede end");
        }
        if !(0.0..=1.0).contains(&self.target_injection_rate) {
            return bad("target_injection_rate must lie in [0, 1]");
        }
        if self.code_vocabulary_sizes.values().any(|&n| n == 0) {
            return bad("code vocabulary sizes must be positive");
        }
        if self.code_vocabulary_sizes.is_empty() {
            return bad("code_vocabulary_sizes is empty");
        }
        Ok(())
    }

    fn span_days(&self) -> i64 {
        (self.date_range.1 - self.date_range.0).num_days()
    }
}

pub fn code_for(event_type: EventType, index: u32) -> String {
    let prefix = match event_type {
        EventType::Diagnosis => "DX",
        EventType::Procedure => "PX",
        EventType::Admission => "ADM",
        EventType::Pharmacy => "RX",
    };
    format!("{prefix}-{index:03}")
}

pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<Vec<PatientTimeline>, IngestError> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..cfg.n_patients).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_injected = (cfg.target_injection_rate * cfg.n_patients as f64).round() as usize;
    let mut injected = vec![false; cfg.n_patients];
    for &i in &order[..n_injected] {
        injected[i] = true;
    }

    Ok((0..cfg.n_patients)
        .into_par_iter()
        .map(|i| generate_patient(cfg, i, injected[i]))
        .collect())
}

fn event_weight(t: EventType) -> f64 {
    match t {
        EventType::Diagnosis => 0.45,
        EventType::Procedure => 0.25,
        EventType::Pharmacy => 0.25,
        EventType::Admission => 0.05,
    }
}

fn generate_patient(cfg: &GeneratorConfig, index: usize, injected: bool) -> PatientTimeline {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);

    let patient_id = format!("P{index:06}");
    let (start, end) = cfg.date_range;
    let span = cfg.span_days();

    let age_years: i64 = rng.random_range(18..=89);
    let birth_date = start - Duration::days(age_years * 365 + rng.random_range(0..365));
    let sex = match rng.random::<f64>() {
        u if u < 0.50 => Sex::F,
        u if u < 0.98 => Sex::M,
        _ => Sex::U,
    };

    let types: Vec<(EventType, u32)> = cfg
        .code_vocabulary_sizes
        .iter()
        .map(|(&t, &n)| (t, n))
        .collect();
    let total_weight: f64 = types.iter().map(|(t, _)| event_weight(*t)).sum();
    let cost = LogNormal::new(4.0, 1.0).expect("valid lognormal");
    let n_events = Poisson::new(cfg.mean_events_per_patient)
        .expect("validated mean")
        .sample(&mut rng) as usize;

    let mut events = Vec::with_capacity(n_events + 8);
    let event = |date: NaiveDate, event_type: EventType, code: String, value: Option<f64>| ClaimEvent {
        patient_id: patient_id.clone(),
        event_date: date,
        event_type,
        code,
        value,
        source: SYNTHETIC_SOURCE.to_string(),
    };

    for _ in 0..n_events {
        let date = start + Duration::days(rng.random_range(0..=span));
        let mut pick = rng.random::<f64>() * total_weight;
        let mut chosen = types[types.len() - 1];
        for &(t, n) in &types {
            pick -= event_weight(t);
            if pick < 0.0 {
                chosen = (t, n);
                break;
            }
        }
        let (event_type, vocab) = chosen;
        // squared uniform skews toward low code indices
        let u: f64 = rng.random();
        let code_index = ((u * u) * vocab as f64).floor() as u32;
        let value = match event_type {
            EventType::Diagnosis => None,
            _ => Some(round_cents(cost.sample(&mut rng))),
        };
        events.push(event(date, event_type, code_for(event_type, code_index.min(vocab - 1)), value));
    }

    if injected {
        let onset_span = ((span as f64) * RISK_ONSET_SPAN) as i64;
        let onset = start + Duration::days(rng.random_range(0..=onset_span));
        events.push(event(onset, EventType::Diagnosis, RISK_FACTOR_CODE.into(), None));
        let gap = Exp::new(1.0 / READMISSION_MEAN_GAP_DAYS).expect("positive rate");
        let mut at = onset + Duration::days(rng.random_range(1..=90));
        while at <= end {
            events.push(event(at, EventType::Admission, UNPLANNED_ADMISSION_CODE.into(), Some(round_cents(cost.sample(&mut rng) * 10.0))));
            at += Duration::days(1 + gap.sample(&mut rng).floor() as i64);
        }
    } else if rng.random::<f64>() < RISK_CODE_NOISE_RATE {
        let date = start + Duration::days(rng.random_range(0..=span));
        events.push(event(date, EventType::Diagnosis, RISK_FACTOR_CODE.into(), None));
    }

    PatientTimeline::new(patient_id.clone(), birth_date, sex, events)
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
