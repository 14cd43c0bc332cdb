use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Deref;
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::{Catalog, CatalogEntry, RegistrationReceipt};
use super::generators::GeneratorRegistry;
use super::schedule::plan_stages;
use super::store::FeatureStore;
use super::{FeatureDefinition, FeatureError, FeatureRef, FeatureScalar, FeatureVector, VectorEntry};
use crate::domain::PatientTimeline;
use crate::ingest::TimelineStore;
use crate::workspace::DataRoot;

/// Borrowed or shared access to one timeline.
pub enum TimelineRef<'a> {
    Borrowed(&'a PatientTimeline),
    Shared(Arc<PatientTimeline>),
}

impl Deref for TimelineRef<'_> {
    type Target = PatientTimeline;

    fn deref(&self) -> &PatientTimeline {
        match self {
            TimelineRef::Borrowed(t) => t,
            TimelineRef::Shared(t) => t,
        }
    }
}

pub trait TimelineSource: Sync {
    fn timeline(&self, patient_id: &str) -> Option<TimelineRef<'_>>;
}

impl TimelineSource for TimelineStore {
    fn timeline(&self, patient_id: &str) -> Option<TimelineRef<'_>> {
        self.get(patient_id).map(TimelineRef::Shared)
    }
}

impl TimelineSource for HashMap<String, PatientTimeline> {
    fn timeline(&self, patient_id: &str) -> Option<TimelineRef<'_>> {
        self.get(patient_id).map(TimelineRef::Borrowed)
    }
}

struct SliceIndex<'a>(HashMap<&'a str, &'a PatientTimeline>);

impl TimelineSource for SliceIndex<'_> {
    fn timeline(&self, patient_id: &str) -> Option<TimelineRef<'_>> {
        self.0.get(patient_id).map(|t| TimelineRef::Borrowed(t))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorPolicy {
    PrecomputedOnly,
    #[default]
    ComputeOnMiss,
}

/// Where a vector entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Stored,
    Computed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub patient_id: String,
    pub feature: FeatureRef,
    pub as_of_date: NaiveDate,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializeReport {
    pub written: usize,
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
    pub stages: Vec<Vec<FeatureRef>>,
}

/// Catalog + generators + value store behind one API.
#[derive(Debug)]
pub struct FeatureRepository {
    catalog: RwLock<Catalog>,
    generators: GeneratorRegistry,
    store: FeatureStore,
}

enum Cell {
    Skipped,
    Written(FeatureScalar),
    Failed(String),
}

impl FeatureRepository {
    pub fn in_memory(generators: GeneratorRegistry) -> Self {
        FeatureRepository { catalog: RwLock::new(Catalog::in_memory()), generators, store: FeatureStore::in_memory() }
    }

    /// Opens `catalog.jsonl` and `features/` under the data root.
    pub fn open(root: &DataRoot, generators: GeneratorRegistry) -> Result<Self, FeatureError> {
        Ok(FeatureRepository {
            catalog: RwLock::new(Catalog::open(&root.catalog())?),
            generators,
            store: FeatureStore::open(&root.features_dir())?,
        })
    }

    /// Same catalog and generators, but a fresh empty in-memory value store.
    pub fn cold_copy(&self) -> Self {
        let mut catalog = Catalog::in_memory();
        let mut entries: Vec<CatalogEntry> = self.catalog.read().entries().cloned().collect();
        entries.sort_by_key(|e| e.registered_at);
        for e in entries {
            catalog.insert_entry(e);
        }
        FeatureRepository { catalog: RwLock::new(catalog), generators: self.generators.clone(), store: FeatureStore::in_memory() }
    }

    pub fn store(&self) -> &FeatureStore {
        &self.store
    }

    pub fn generators(&self) -> &GeneratorRegistry {
        &self.generators
    }

    pub fn register_feature(&self, def: FeatureDefinition) -> Result<RegistrationReceipt, FeatureError> {
        self.catalog.write().register(def, &self.generators)
    }

    pub fn entry(&self, r: &FeatureRef) -> Option<CatalogEntry> {
        self.catalog.read().get(r).cloned()
    }

    pub fn catalog_len(&self) -> usize {
        self.catalog.read().len()
    }

    pub fn search_catalog(&self, query: &str) -> Vec<FeatureDefinition> {
        self.catalog.read().search(query)
    }

    pub fn latest_refs(&self, names: &[String]) -> Result<Vec<FeatureRef>, FeatureError> {
        let catalog = self.catalog.read();
        names
            .iter()
            .map(|n| {
                catalog
                    .latest(n)
                    .map(CatalogEntry::feature_ref)
                    .ok_or_else(|| FeatureError::NotFound(n.clone()))
            })
            .collect()
    }

    /// Staged execution order for the latest versions of `names` and their
    /// dependency closure.
    pub fn resolve_execution_order(&self, names: &[String]) -> Result<Vec<Vec<String>>, FeatureError> {
        let refs = self.latest_refs(names)?;
        Ok(self
            .plan(&refs)?
            .into_iter()
            .map(|stage| stage.into_iter().map(|r| r.name).collect())
            .collect())
    }

    fn closure(catalog: &Catalog, refs: &[FeatureRef]) -> Result<BTreeMap<FeatureRef, CatalogEntry>, FeatureError> {
        let mut out = BTreeMap::new();
        let mut stack: Vec<FeatureRef> = refs.to_vec();
        while let Some(r) = stack.pop() {
            if out.contains_key(&r) {
                continue;
            }
            let entry = catalog.get(&r).ok_or_else(|| FeatureError::NotFound(r.to_string()))?;
            stack.extend(entry.pinned_dependencies.iter().cloned());
            out.insert(r, entry.clone());
        }
        Ok(out)
    }

    /// Stages over `refs` plus the versions they pin, transitively.
    pub fn plan(&self, refs: &[FeatureRef]) -> Result<Vec<Vec<FeatureRef>>, FeatureError> {
        let closure = Self::closure(&self.catalog.read(), refs)?;
        Self::stages_of(&closure)
    }

    fn stages_of(closure: &BTreeMap<FeatureRef, CatalogEntry>) -> Result<Vec<Vec<FeatureRef>>, FeatureError> {
        let graph: BTreeMap<FeatureRef, (Vec<FeatureRef>, Option<String>)> = closure
            .iter()
            .map(|(r, e)| (r.clone(), (e.pinned_dependencies.clone(), e.definition.group_id.clone())))
            .collect();
        plan_stages(&graph).map_err(|left| FeatureError::Cycle(left.into_iter().map(|r| r.name).collect()))
    }

    /// Flags `feature_name` and all of its transitive dependents stale.
    pub fn mark_stale(&self, feature_name: &str) -> Result<BTreeSet<String>, FeatureError> {
        let affected = self.catalog.read().dependents_closure(feature_name)?;
        self.store.mark_stale(&affected)?;
        Ok(affected)
    }

    /// Materializes the latest versions of `names` for every timeline at
    /// every date in `as_of_dates`.
    pub fn materialize(
        &self,
        timelines: &[PatientTimeline],
        names: &[String],
        as_of_dates: &[NaiveDate],
    ) -> Result<MaterializeReport, FeatureError> {
        let refs = self.latest_refs(names)?;
        let index = SliceIndex(timelines.iter().map(|t| (t.patient_id.as_str(), t)).collect());
        let points: Vec<(String, NaiveDate)> = timelines
            .iter()
            .flat_map(|t| as_of_dates.iter().map(move |d| (t.patient_id.clone(), *d)))
            .collect();
        self.materialize_points(&index, &refs, &points)
    }

    /// Computes and stores `refs` (plus pinned dependencies) at each
    /// (patient, as-of) point, stage by stage. Fresh values are skipped.
    /// Cells run in parallel within a stage; a failed cell is recorded and
    /// the batch continues.
    pub fn materialize_points(
        &self,
        timelines: &dyn TimelineSource,
        refs: &[FeatureRef],
        points: &[(String, NaiveDate)],
    ) -> Result<MaterializeReport, FeatureError> {
        let closure = Self::closure(&self.catalog.read(), refs)?;
        let stages = Self::stages_of(&closure)?;
        let points: Vec<&(String, NaiveDate)> = points.iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut report = MaterializeReport { stages: stages.clone(), ..Default::default() };

        for stage in &stages {
            let cells: Vec<(&FeatureRef, &(String, NaiveDate))> =
                stage.iter().flat_map(|r| points.iter().map(move |p| (r, *p))).collect();
            let results: Vec<Cell> = cells
                .par_iter()
                .map(|(r, (patient_id, as_of))| {
                    if self.store.get_fresh(patient_id, r, *as_of).is_some() {
                        return Cell::Skipped;
                    }
                    let Some(timeline) = timelines.timeline(patient_id) else {
                        return Cell::Failed(format!("no timeline for patient {patient_id}"));
                    };
                    let entry = &closure[*r];
                    let mut deps = Vec::with_capacity(entry.pinned_dependencies.len());
                    for d in &entry.pinned_dependencies {
                        match self.store.get_fresh(patient_id, d, *as_of) {
                            Some(v) => deps.push(v),
                            None => return Cell::Failed(format!("dependency {d} unavailable")),
                        }
                    }
                    match self.compute_cell(entry, &timeline, *as_of, &deps) {
                        Ok(v) => Cell::Written(v),
                        Err(e) => Cell::Failed(e.to_string()),
                    }
                })
                .collect();

            let mut batches: BTreeMap<&FeatureRef, Vec<(String, NaiveDate, FeatureScalar)>> = BTreeMap::new();
            for ((r, (patient_id, as_of)), cell) in cells.iter().zip(results) {
                match cell {
                    Cell::Skipped => report.skipped += 1,
                    Cell::Written(v) => batches.entry(r).or_default().push((patient_id.clone(), *as_of, v)),
                    Cell::Failed(error) => report.failures.push(CellFailure {
                        patient_id: patient_id.clone(),
                        feature: (*r).clone(),
                        as_of_date: *as_of,
                        error,
                    }),
                }
            }
            for (r, batch) in batches {
                report.written += self.store.put_batch(r, batch)?;
            }
        }
        Ok(report)
    }

    /// The one code path that turns a definition into a value. Used by
    /// materialization and by on-demand vector assembly alike.
    fn compute_cell(
        &self,
        entry: &CatalogEntry,
        timeline: &PatientTimeline,
        as_of: NaiveDate,
        deps: &[FeatureScalar],
    ) -> Result<FeatureScalar, FeatureError> {
        let def = &entry.definition;
        let generator = self
            .generators
            .get(&def.generator_id)
            .ok_or_else(|| FeatureError::UnknownGenerator(def.generator_id.clone()))?;
        let value = generator
            .compute(&timeline.view_as_of(as_of), as_of, &def.params, deps)
            .map_err(FeatureError::Generator)?;
        match value.value_type() {
            Some(t) if t != def.value_type => Err(FeatureError::Generator(format!(
                "{} produced a {t:?} value for a {:?} feature",
                def.generator_id, def.value_type
            ))),
            _ => Ok(value),
        }
    }

    fn resolve_value(
        &self,
        catalog: &Catalog,
        r: &FeatureRef,
        patient_id: &str,
        timeline: Option<&PatientTimeline>,
        as_of: NaiveDate,
        memo: &mut HashMap<FeatureRef, FeatureScalar>,
    ) -> Result<FeatureScalar, FeatureError> {
        if let Some(v) = self.store.get_fresh(patient_id, r, as_of) {
            return Ok(v);
        }
        if let Some(v) = memo.get(r) {
            return Ok(v.clone());
        }
        let entry = catalog.get(r).ok_or_else(|| FeatureError::NotFound(r.to_string()))?;
        let timeline = timeline.ok_or_else(|| FeatureError::MissingTimeline(patient_id.to_string()))?;
        let mut deps = Vec::with_capacity(entry.pinned_dependencies.len());
        for d in &entry.pinned_dependencies {
            deps.push(self.resolve_value(catalog, d, patient_id, Some(timeline), as_of, memo)?);
        }
        let v = self.compute_cell(entry, timeline, as_of, &deps)?;
        memo.insert(r.clone(), v.clone());
        Ok(v)
    }

    /// Assembles the vector for `refs`, in exactly that order, as of
    /// `as_of`. Under `ComputeOnMiss` absent or stale entries are computed
    /// (not written back); `timeline` is only needed for that case.
    pub fn get_vector_asof(
        &self,
        timeline: Option<&PatientTimeline>,
        patient_id: &str,
        refs: &[FeatureRef],
        as_of: NaiveDate,
        policy: VectorPolicy,
    ) -> Result<(FeatureVector, Vec<Origin>), FeatureError> {
        let catalog = self.catalog.read();
        let mut entries = Vec::with_capacity(refs.len());
        let mut origins = Vec::with_capacity(refs.len());
        let mut missing = Vec::new();
        let mut memo = HashMap::new();
        let stored = self.store.get_fresh_many(patient_id, refs, as_of);
        for (r, hit) in refs.iter().zip(stored) {
            if catalog.get(r).is_none() {
                return Err(FeatureError::NotFound(r.to_string()));
            }
            let (value, origin) = match hit {
                Some(v) => (v, Origin::Stored),
                None if policy == VectorPolicy::PrecomputedOnly => {
                    missing.push(r.name.clone());
                    continue;
                }
                None => (self.resolve_value(&catalog, r, patient_id, timeline, as_of, &mut memo)?, Origin::Computed),
            };
            entries.push(VectorEntry { feature_name: r.name.clone(), feature_version: r.version, value });
            origins.push(origin);
        }
        if !missing.is_empty() {
            return Err(FeatureError::Miss(missing));
        }
        Ok((FeatureVector::new(patient_id.to_string(), as_of, entries)?, origins))
    }
}
