//! Feature generators.
//!
//! A generator only ever receives a [`TimelineView`] truncated at the as-of
//! date, so it cannot observe later events.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};

use super::{FeatureScalar, Params, ValueType};
use crate::domain::{EventType, Sex, TimelineView};

pub trait FeatureGenerator: Send + Sync {
    fn id(&self) -> &'static str;

    fn value_type(&self) -> ValueType {
        ValueType::Numeric
    }

    /// Checks params and dependency arity at registration time.
    fn validate(&self, params: &Params, dependencies: &[String]) -> Result<(), String>;

    /// Pure and reentrant. `dependencies` is aligned with the definition's
    /// dependency list.
    fn compute(
        &self,
        view: &TimelineView<'_>,
        as_of: NaiveDate,
        params: &Params,
        dependencies: &[FeatureScalar],
    ) -> Result<FeatureScalar, String>;
}

#[derive(Clone)]
pub struct GeneratorRegistry {
    by_id: BTreeMap<&'static str, Arc<dyn FeatureGenerator>>,
}

impl std::fmt::Debug for GeneratorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.by_id.keys()).finish()
    }
}

impl Default for GeneratorRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl GeneratorRegistry {
    pub fn empty() -> Self {
        GeneratorRegistry { by_id: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(AgeAtIndex));
        r.register(Arc::new(EventCountWindow));
        r.register(Arc::new(CodeIndicator));
        r.register(Arc::new(SexIndicator));
        r.register(Arc::new(WeightedSum));
        r
    }

    pub fn register(&mut self, generator: Arc<dyn FeatureGenerator>) {
        self.by_id.insert(generator.id(), generator);
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn FeatureGenerator>> {
        self.by_id.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.by_id.keys().copied()
    }
}

fn no_deps(dependencies: &[String]) -> Result<(), String> {
    if dependencies.is_empty() {
        Ok(())
    } else {
        Err("generator takes no dependencies".into())
    }
}

fn str_param<'a>(params: &'a Params, key: &str) -> Result<&'a str, String> {
    params
        .get(key)
        .and_then(|v| v.as_str())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("param {key:?} must be a non-empty string"))
}

fn event_type_param(params: &Params) -> Result<Option<EventType>, String> {
    match params.get("event_type") {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => v
            .as_str()
            .ok_or_else(|| "param \"event_type\" must be a string".to_string())?
            .parse()
            .map(Some),
    }
}

fn code_set_param(params: &Params) -> Result<BTreeSet<String>, String> {
    match params.get("code_set") {
        None | Some(serde_json::Value::Null) => Ok(BTreeSet::new()),
        Some(serde_json::Value::Array(items)) => items
            .iter()
            .map(|c| c.as_str().map(str::to_string).ok_or_else(|| "code_set entries must be strings".to_string()))
            .collect(),
        Some(_) => Err("param \"code_set\" must be an array of strings".into()),
    }
}

/// Whole years between birth and the as-of date: `floor(days / 365.25)`.
#[derive(Debug, Clone, Copy)]
pub struct AgeAtIndex;

impl FeatureGenerator for AgeAtIndex {
    fn id(&self) -> &'static str {
        "age_at_index"
    }

    fn validate(&self, _: &Params, dependencies: &[String]) -> Result<(), String> {
        no_deps(dependencies)
    }

    fn compute(&self, view: &TimelineView<'_>, as_of: NaiveDate, _: &Params, _: &[FeatureScalar]) -> Result<FeatureScalar, String> {
        let days = (as_of - view.birth_date).num_days();
        Ok(FeatureScalar::Numeric((days as f64 / 365.25).floor()))
    }
}

/// Count of events in `(as_of - window_days, as_of]`, optionally filtered by
/// `event_type` and `code_set` (an empty set matches every code).
#[derive(Debug, Clone, Copy)]
pub struct EventCountWindow;

impl FeatureGenerator for EventCountWindow {
    fn id(&self) -> &'static str {
        "event_count_window"
    }

    fn validate(&self, params: &Params, dependencies: &[String]) -> Result<(), String> {
        no_deps(dependencies)?;
        event_type_param(params)?;
        code_set_param(params)?;
        match params.get("window_days").and_then(|v| v.as_u64()) {
            Some(w) if w >= 1 => Ok(()),
            _ => Err("param \"window_days\" must be a positive integer".into()),
        }
    }

    fn compute(&self, view: &TimelineView<'_>, as_of: NaiveDate, params: &Params, _: &[FeatureScalar]) -> Result<FeatureScalar, String> {
        let event_type = event_type_param(params)?;
        let codes = code_set_param(params)?;
        let window = params
            .get("window_days")
            .and_then(|v| v.as_u64())
            .ok_or("param \"window_days\" missing")? as i64;
        let lower = as_of - Duration::days(window);
        let start = view.events.partition_point(|e| e.event_date <= lower);
        let n = view.events[start..]
            .iter()
            .filter(|e| event_type.is_none_or(|t| e.event_type == t))
            .filter(|e| codes.is_empty() || codes.contains(&e.code))
            .count();
        Ok(FeatureScalar::Numeric(n as f64))
    }
}

/// 1 if any event with `code` (and optional `event_type`) is on or before the as-of date.
#[derive(Debug, Clone, Copy)]
pub struct CodeIndicator;

impl FeatureGenerator for CodeIndicator {
    fn id(&self) -> &'static str {
        "code_indicator"
    }

    fn validate(&self, params: &Params, dependencies: &[String]) -> Result<(), String> {
        no_deps(dependencies)?;
        event_type_param(params)?;
        str_param(params, "code").map(|_| ())
    }

    fn compute(&self, view: &TimelineView<'_>, _: NaiveDate, params: &Params, _: &[FeatureScalar]) -> Result<FeatureScalar, String> {
        let code = str_param(params, "code")?;
        let event_type = event_type_param(params)?;
        let hit = view
            .events
            .iter()
            .any(|e| e.code == code && event_type.is_none_or(|t| e.event_type == t));
        Ok(FeatureScalar::Numeric(if hit { 1.0 } else { 0.0 }))
    }
}

/// 1 for female, else 0.
#[derive(Debug, Clone, Copy)]
pub struct SexIndicator;

impl FeatureGenerator for SexIndicator {
    fn id(&self) -> &'static str {
        "sex_indicator"
    }

    fn validate(&self, _: &Params, dependencies: &[String]) -> Result<(), String> {
        no_deps(dependencies)
    }

    fn compute(&self, view: &TimelineView<'_>, _: NaiveDate, _: &Params, _: &[FeatureScalar]) -> Result<FeatureScalar, String> {
        Ok(FeatureScalar::Numeric(if view.sex == Sex::F { 1.0 } else { 0.0 }))
    }
}

/// `Σ weights[i] * dependency[i]`, a composite over other features (for
/// example a comorbidity index). Missing dependencies make the result missing.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSum;

fn weights(params: &Params) -> Result<Vec<f64>, String> {
    params
        .get("weights")
        .and_then(|w| w.as_array())
        .ok_or("param \"weights\" must be an array of numbers")?
        .iter()
        .map(|w| w.as_f64().ok_or_else(|| "weights must be numbers".to_string()))
        .collect()
}

impl FeatureGenerator for WeightedSum {
    fn id(&self) -> &'static str {
        "weighted_sum"
    }

    fn validate(&self, params: &Params, dependencies: &[String]) -> Result<(), String> {
        let w = weights(params)?;
        if dependencies.is_empty() {
            return Err("weighted_sum needs at least one dependency".into());
        }
        if w.len() != dependencies.len() {
            return Err(format!("{} weights for {} dependencies", w.len(), dependencies.len()));
        }
        Ok(())
    }

    fn compute(&self, _: &TimelineView<'_>, _: NaiveDate, params: &Params, deps: &[FeatureScalar]) -> Result<FeatureScalar, String> {
        let w = weights(params)?;
        let mut total = 0.0;
        for (wi, d) in w.iter().zip(deps) {
            match d {
                FeatureScalar::Numeric(v) => total += wi * v,
                FeatureScalar::Missing => return Ok(FeatureScalar::Missing),
                FeatureScalar::Categorical(_) => return Err("weighted_sum over a categorical dependency".into()),
            }
        }
        Ok(FeatureScalar::Numeric(total))
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::domain::{ClaimEvent, PatientTimeline};

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + Duration::days(n)
    }

    fn timeline(event_days: &[i64]) -> PatientTimeline {
        PatientTimeline::new(
            "p",
            day(0),
            Sex::F,
            event_days
                .iter()
                .map(|&d| ClaimEvent {
                    patient_id: "p".into(),
                    event_date: day(d),
                    event_type: EventType::Diagnosis,
                    code: "DX-001".into(),
                    value: None,
                    source: "t".into(),
                })
                .collect(),
        )
    }

    fn params(v: serde_json::Value) -> Params {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn age_at_index_floor() {
        let t = timeline(&[]);
        let v = AgeAtIndex.compute(&t.view_as_of(day(7305)), day(7305), &Params::new(), &[]).unwrap();
        assert_eq!(v, FeatureScalar::Numeric(20.0));
        let v = AgeAtIndex.compute(&t.view_as_of(day(7304)), day(7304), &Params::new(), &[]).unwrap();
        assert_eq!(v, FeatureScalar::Numeric(19.0));
    }

    #[test]
    fn window_excludes_lower_bound() {
        let t = timeline(&[10, 40, 100]);
        let p = params(json!({"event_type": "diagnosis", "window_days": 90}));
        let v = EventCountWindow.compute(&t.view_as_of(day(100)), day(100), &p, &[]).unwrap();
        assert_eq!(v, FeatureScalar::Numeric(2.0));
        let p = params(json!({"window_days": 91, "code_set": ["DX-001"]}));
        let v = EventCountWindow.compute(&t.view_as_of(day(100)), day(100), &p, &[]).unwrap();
        assert_eq!(v, FeatureScalar::Numeric(3.0));
        let p = params(json!({"window_days": 365, "code_set": ["DX-999"]}));
        let v = EventCountWindow.compute(&t.view_as_of(day(100)), day(100), &p, &[]).unwrap();
        assert_eq!(v, FeatureScalar::Numeric(0.0));
    }

    #[test]
    fn indicator_and_sex() {
        let t = timeline(&[50]);
        let p = params(json!({"code": "DX-001"}));
        assert_eq!(CodeIndicator.compute(&t.view_as_of(day(49)), day(49), &p, &[]).unwrap(), FeatureScalar::Numeric(0.0));
        assert_eq!(CodeIndicator.compute(&t.view_as_of(day(50)), day(50), &p, &[]).unwrap(), FeatureScalar::Numeric(1.0));
        let p = params(json!({"code": "DX-404"}));
        assert_eq!(CodeIndicator.compute(&t.view_as_of(day(99)), day(99), &p, &[]).unwrap(), FeatureScalar::Numeric(0.0));
        assert_eq!(SexIndicator.compute(&t.view_as_of(day(0)), day(0), &p, &[]).unwrap(), FeatureScalar::Numeric(1.0));
    }

    #[test]
    fn weighted_sum() {
        let t = timeline(&[]);
        let p = params(json!({"weights": [2.0, 0.5]}));
        assert!(WeightedSum.validate(&p, &["a".into(), "b".into()]).is_ok());
        assert!(WeightedSum.validate(&p, &["a".into()]).is_err());
        let v = WeightedSum
            .compute(&t.view_as_of(day(0)), day(0), &p, &[FeatureScalar::Numeric(1.0), FeatureScalar::Numeric(4.0)])
            .unwrap();
        assert_eq!(v, FeatureScalar::Numeric(4.0));
        let v = WeightedSum
            .compute(&t.view_as_of(day(0)), day(0), &p, &[FeatureScalar::Missing, FeatureScalar::Numeric(4.0)])
            .unwrap();
        assert_eq!(v, FeatureScalar::Missing);
    }

    #[test]
    fn param_validation() {
        assert!(EventCountWindow.validate(&params(json!({"window_days": 0})), &[]).is_err());
        assert!(EventCountWindow.validate(&params(json!({"window_days": 30, "event_type": "lab"})), &[]).is_err());
        assert!(CodeIndicator.validate(&Params::new(), &[]).is_err());
        assert!(AgeAtIndex.validate(&Params::new(), &["x".into()]).is_err());
    }
}
