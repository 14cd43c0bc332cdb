//! The standard feature set used by the demo and the acceptance suite.

use serde_json::json;

use super::FeatureDefinition;
use crate::domain::EventType;
use crate::ingest::{code_for, RISK_FACTOR_CODE};

/// Indicator for the risk-factor diagnosis planted by the synthetic generator.
pub const PLANTED_FEATURE: &str = "dx_risk_ever";

fn indicator(name: String, event_type: EventType, code: String) -> FeatureDefinition {
    FeatureDefinition::new(name, "code_indicator")
        .param("event_type", event_type.as_str())
        .param("code", code)
}

fn count(name: &str, event_type: EventType, window_days: u32) -> FeatureDefinition {
    FeatureDefinition::new(name, "event_count_window")
        .param("event_type", event_type.as_str())
        .param("window_days", window_days)
        .group("utilization_windows")
}

/// 44 definitions, in dependency order: demographics, code indicators,
/// windowed utilization counts, and two composites.
pub fn standard_features() -> Vec<FeatureDefinition> {
    let mut defs = vec![
        FeatureDefinition::new("age_at_index", "age_at_index"),
        FeatureDefinition::new("sex_female", "sex_indicator"),
        indicator(PLANTED_FEATURE.into(), EventType::Diagnosis, RISK_FACTOR_CODE.into()),
    ];
    for i in 0..20 {
        defs.push(
            indicator(format!("dx_{i:03}_ever"), EventType::Diagnosis, code_for(EventType::Diagnosis, i))
                .group("dx_indicators"),
        );
    }
    for i in 0..8 {
        defs.push(indicator(format!("px_{i:03}_ever"), EventType::Procedure, code_for(EventType::Procedure, i)));
    }
    for i in 0..4 {
        defs.push(indicator(format!("rx_{i:03}_ever"), EventType::Pharmacy, code_for(EventType::Pharmacy, i)));
    }
    for (prefix, t) in [("dx", EventType::Diagnosis), ("px", EventType::Procedure), ("rx", EventType::Pharmacy)] {
        for w in [90, 365] {
            defs.push(count(&format!("{prefix}_count_{w}d"), t, w));
        }
    }
    let routine_admissions: Vec<String> = (0..3).map(|i| code_for(EventType::Admission, i)).collect();
    defs.push(count("adm_routine_count_365d", EventType::Admission, 365).param("code_set", json!(routine_admissions)));
    defs.push(
        FeatureDefinition::new("comorbidity_score", "weighted_sum")
            .param("weights", json!([1.0, 1.0, 2.0, 2.0, 3.0]))
            .depends_on(&["dx_000_ever", "dx_001_ever", "dx_002_ever", "dx_003_ever", "dx_004_ever"]),
    );
    defs.push(
        FeatureDefinition::new("utilization_index", "weighted_sum")
            .param("weights", json!([1.0, 1.5, 0.5]))
            .depends_on(&["dx_count_365d", "px_count_365d", "rx_count_365d"]),
    );
    defs
}
