use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::generators::GeneratorRegistry;
use super::{FeatureDefinition, FeatureError, FeatureRef};
use crate::jsonl::{self, Appender};

/// A registered definition plus the dependency versions it was pinned to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub definition: FeatureDefinition,
    pub pinned_dependencies: Vec<FeatureRef>,
    pub registered_at: DateTime<Utc>,
}

impl CatalogEntry {
    pub fn feature_ref(&self) -> FeatureRef {
        self.definition.feature_ref()
    }

    fn same_content(&self, def: &FeatureDefinition, pinned: &[FeatureRef]) -> bool {
        let d = &self.definition;
        d.generator_id == def.generator_id
            && d.params == def.params
            && d.dependencies == def.dependencies
            && d.value_type == def.value_type
            && d.group_id == def.group_id
            && self.pinned_dependencies == pinned
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationReceipt {
    pub feature: FeatureRef,
    /// False when an identical definition already existed.
    pub created: bool,
}

/// Versioned feature catalog, optionally backed by an append-only file.
#[derive(Debug, Default)]
pub struct Catalog {
    entries: BTreeMap<String, Vec<CatalogEntry>>,
    log: Option<Appender>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

impl Catalog {
    pub fn in_memory() -> Self {
        Catalog::default()
    }

    pub fn open(path: &Path) -> Result<Self, FeatureError> {
        let mut catalog = Catalog::default();
        for entry in jsonl::read_all::<CatalogEntry>(path)? {
            catalog.entries.entry(entry.definition.name.clone()).or_default().push(entry);
        }
        for versions in catalog.entries.values_mut() {
            versions.sort_by_key(|e| e.definition.version);
        }
        catalog.log = Some(Appender::open(path)?);
        Ok(catalog)
    }

    /// Registers `def`. An identical re-registration returns the existing
    /// version; any change to generator, params, dependencies, type, group,
    /// or the dependency versions it pins creates version `latest + 1`.
    pub fn register(
        &mut self,
        mut def: FeatureDefinition,
        generators: &GeneratorRegistry,
    ) -> Result<RegistrationReceipt, FeatureError> {
        let invalid = |reason: String| FeatureError::InvalidDefinition { name: def.name.clone(), reason };
        if !valid_name(&def.name) {
            return Err(invalid("names use [A-Za-z0-9_.-]".into()));
        }
        let generator = generators
            .get(&def.generator_id)
            .ok_or_else(|| FeatureError::UnknownGenerator(def.generator_id.clone()))?;
        generator.validate(&def.params, &def.dependencies).map_err(invalid)?;
        if generator.value_type() != def.value_type {
            return Err(invalid(format!("generator {} yields {:?} values", def.generator_id, generator.value_type())));
        }
        let mut pinned = Vec::with_capacity(def.dependencies.len());
        for dep in &def.dependencies {
            if dep == &def.name {
                return Err(FeatureError::Cycle(vec![def.name.clone(), def.name.clone()]));
            }
            let latest = self.latest(dep).ok_or_else(|| FeatureError::NotFound(dep.clone()))?;
            pinned.push(latest.feature_ref());
        }
        if let Some(path) = self.path_to(&def.dependencies, &def.name) {
            let mut cycle = vec![def.name.clone()];
            cycle.extend(path);
            return Err(FeatureError::Cycle(cycle));
        }

        if let Some(latest) = self.latest(&def.name) {
            if latest.same_content(&def, &pinned) {
                return Ok(RegistrationReceipt { feature: latest.feature_ref(), created: false });
            }
        }
        def.version = self.latest(&def.name).map_or(1, |e| e.definition.version + 1);
        let entry = CatalogEntry { definition: def, pinned_dependencies: pinned, registered_at: Utc::now() };
        if let Some(log) = self.log.as_mut() {
            log.append(&entry)?;
        }
        let receipt = RegistrationReceipt { feature: entry.feature_ref(), created: true };
        self.entries.entry(entry.definition.name.clone()).or_default().push(entry);
        Ok(receipt)
    }

    /// Path of names from any of `starts` to `target` following the latest
    /// version's dependencies.
    fn path_to(&self, starts: &[String], target: &str) -> Option<Vec<String>> {
        fn dfs(c: &Catalog, node: &str, target: &str, seen: &mut BTreeSet<String>, path: &mut Vec<String>) -> bool {
            path.push(node.to_string());
            if node == target {
                return true;
            }
            if seen.insert(node.to_string()) {
                if let Some(e) = c.latest(node) {
                    for d in &e.definition.dependencies {
                        if dfs(c, d, target, seen, path) {
                            return true;
                        }
                    }
                }
            }
            path.pop();
            false
        }
        let mut seen = BTreeSet::new();
        for s in starts {
            let mut path = Vec::new();
            if dfs(self, s, target, &mut seen, &mut path) {
                return Some(path);
            }
        }
        None
    }

    /// Inserts an already-versioned entry without re-validation.
    pub(crate) fn insert_entry(&mut self, entry: CatalogEntry) {
        let versions = self.entries.entry(entry.definition.name.clone()).or_default();
        versions.push(entry);
        versions.sort_by_key(|e| e.definition.version);
    }

    pub fn get(&self, r: &FeatureRef) -> Option<&CatalogEntry> {
        self.entries
            .get(&r.name)?
            .iter()
            .find(|e| e.definition.version == r.version)
    }

    pub fn latest(&self, name: &str) -> Option<&CatalogEntry> {
        self.entries.get(name)?.last()
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Case-insensitive substring match on name and generator id over every
    /// version, ordered by (name, version).
    pub fn search(&self, query: &str) -> Vec<FeatureDefinition> {
        let q = query.to_lowercase();
        self.entries()
            .filter(|e| {
                e.definition.name.to_lowercase().contains(&q) || e.definition.generator_id.to_lowercase().contains(&q)
            })
            .map(|e| e.definition.clone())
            .collect()
    }

    /// `name` plus every feature that depends on it, directly or transitively,
    /// through any registered version.
    pub fn dependents_closure(&self, name: &str) -> Result<BTreeSet<String>, FeatureError> {
        if !self.contains_name(name) {
            return Err(FeatureError::NotFound(name.to_string()));
        }
        let mut reverse: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in self.entries() {
            for d in &e.definition.dependencies {
                reverse.entry(d.as_str()).or_default().insert(e.definition.name.as_str());
            }
        }
        let mut out = BTreeSet::new();
        let mut stack = vec![name];
        while let Some(n) = stack.pop() {
            if out.insert(n.to_string()) {
                if let Some(children) = reverse.get(n) {
                    stack.extend(children.iter().copied());
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gens() -> GeneratorRegistry {
        GeneratorRegistry::builtin()
    }

    fn sum(name: &str, deps: &[&str]) -> FeatureDefinition {
        FeatureDefinition::new(name, "weighted_sum")
            .param("weights", vec![1.0; deps.len()])
            .depends_on(deps)
    }

    #[test]
    fn idempotent_then_bumped() {
        let mut c = Catalog::in_memory();
        let def = FeatureDefinition::new("age_at_index", "age_at_index");
        assert_eq!(c.register(def.clone(), &gens()).unwrap(), RegistrationReceipt { feature: FeatureRef::new("age_at_index", 1), created: true });
        assert_eq!(c.register(def.clone(), &gens()).unwrap().feature.version, 1);
        let changed = def.param("note", "x");
        let r = c.register(changed, &gens()).unwrap();
        assert_eq!(r.feature.version, 2);
        assert!(r.created);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn unknown_generator() {
        let mut c = Catalog::in_memory();
        assert!(matches!(
            c.register(FeatureDefinition::new("x", "nope"), &gens()),
            Err(FeatureError::UnknownGenerator(_))
        ));
    }

    #[test]
    fn cycle_is_rejected() {
        let mut c = Catalog::in_memory();
        c.register(FeatureDefinition::new("a", "sex_indicator"), &gens()).unwrap();
        c.register(sum("b", &["a"]), &gens()).unwrap();
        // re-defining a on top of b closes a -> b -> a
        let err = c.register(sum("a", &["b"]), &gens()).unwrap_err();
        assert!(matches!(err, FeatureError::Cycle(ref p) if p == &["a", "b", "a"]), "{err:?}");
        assert!(matches!(c.register(sum("c", &["c"]), &gens()), Err(FeatureError::NotFound(_)) | Err(FeatureError::Cycle(_))));
        assert_eq!(c.latest("a").unwrap().definition.version, 1);
    }

    #[test]
    fn dependency_pins_bump_dependents() {
        let mut c = Catalog::in_memory();
        c.register(FeatureDefinition::new("a", "sex_indicator"), &gens()).unwrap();
        c.register(sum("b", &["a"]), &gens()).unwrap();
        c.register(FeatureDefinition::new("a", "sex_indicator").group("g"), &gens()).unwrap();
        let r = c.register(sum("b", &["a"]), &gens()).unwrap();
        assert_eq!(r.feature, FeatureRef::new("b", 2));
        assert_eq!(c.get(&FeatureRef::new("b", 1)).unwrap().pinned_dependencies, vec![FeatureRef::new("a", 1)]);
        assert_eq!(c.get(&FeatureRef::new("b", 2)).unwrap().pinned_dependencies, vec![FeatureRef::new("a", 2)]);
    }

    #[test]
    fn search_and_closure() {
        let mut c = Catalog::in_memory();
        c.register(FeatureDefinition::new("age_at_index", "age_at_index"), &gens()).unwrap();
        c.register(
            FeatureDefinition::new("dx_count_90d", "event_count_window").param("window_days", 90),
            &gens(),
        )
        .unwrap();
        let names = |v: Vec<FeatureDefinition>| v.into_iter().map(|d| d.name).collect::<Vec<_>>();
        assert_eq!(names(c.search("age")), ["age_at_index"]);
        assert_eq!(names(c.search("AGE")), ["age_at_index"]);
        assert_eq!(names(c.search("")), ["age_at_index", "dx_count_90d"]);
        assert!(c.search("zzz").is_empty());
        assert_eq!(names(c.search("window")), ["dx_count_90d"]);

        c.register(sum("b", &["age_at_index"]), &gens()).unwrap();
        c.register(sum("d", &["b", "dx_count_90d"]), &gens()).unwrap();
        let got: Vec<_> = c.dependents_closure("age_at_index").unwrap().into_iter().collect();
        assert_eq!(got, ["age_at_index", "b", "d"]);
        assert!(c.dependents_closure("ghost").is_err());
    }

    #[test]
    fn persisted_catalog_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.jsonl");
        {
            let mut c = Catalog::open(&path).unwrap();
            c.register(FeatureDefinition::new("a", "sex_indicator"), &gens()).unwrap();
            c.register(sum("b", &["a"]), &gens()).unwrap();
        }
        let mut c = Catalog::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert!(!c.register(sum("b", &["a"]), &gens()).unwrap().created);
    }

    #[test]
    fn type_and_name_checks() {
        let mut c = Catalog::in_memory();
        let mut def = FeatureDefinition::new("a", "sex_indicator");
        def.value_type = super::super::ValueType::Categorical;
        assert!(matches!(c.register(def, &gens()), Err(FeatureError::InvalidDefinition { .. })));
        assert!(c.register(FeatureDefinition::new("a b", "sex_indicator"), &gens()).is_err());
    }
}
