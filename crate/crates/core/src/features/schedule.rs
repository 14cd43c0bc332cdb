//! Stage planning over the feature dependency DAG.

use std::collections::{BTreeMap, BTreeSet};

/// Splits `nodes` (node -> (dependencies, group)) into stages: every node's
/// dependencies sit in strictly earlier stages, so nodes inside one stage
/// can run in parallel. Each node starts at its earliest possible stage;
/// members of a group are then pushed to a common stage when none of them
/// depends on another. All dependencies must be keys of `nodes`.
///
/// Returns the nodes left on a cycle as the error.
pub fn plan_stages<K: Ord + Clone>(nodes: &BTreeMap<K, (Vec<K>, Option<String>)>) -> Result<Vec<Vec<K>>, Vec<K>> {
    // Kahn with an ordered ready set for a deterministic order
    let mut indegree: BTreeMap<&K, usize> = nodes.keys().map(|k| (k, 0)).collect();
    let mut dependents: BTreeMap<&K, Vec<&K>> = BTreeMap::new();
    for (k, (deps, _)) in nodes {
        let unique: BTreeSet<&K> = deps.iter().collect();
        for d in unique {
            if nodes.contains_key(d) {
                *indegree.get_mut(k).expect("node") += 1;
                dependents.entry(d).or_default().push(k);
            }
        }
    }
    let mut ready: BTreeSet<&K> = indegree.iter().filter(|(_, n)| **n == 0).map(|(k, _)| *k).collect();
    let mut topo: Vec<&K> = Vec::with_capacity(nodes.len());
    while let Some(k) = ready.pop_first() {
        topo.push(k);
        for &child in dependents.get(k).map(Vec::as_slice).unwrap_or_default() {
            let n = indegree.get_mut(child).expect("node");
            *n -= 1;
            if *n == 0 {
                ready.insert(child);
            }
        }
    }
    if topo.len() != nodes.len() {
        let done: BTreeSet<&K> = topo.iter().copied().collect();
        return Err(nodes.keys().filter(|k| !done.contains(k)).cloned().collect());
    }

    let deps_of = |k: &K| nodes[k].0.iter().filter(|d| nodes.contains_key(*d));
    let mut level: BTreeMap<&K, usize> = BTreeMap::new();
    let mut ancestors: BTreeMap<&K, BTreeSet<&K>> = BTreeMap::new();
    for &k in &topo {
        let mut lvl = 0;
        let mut anc = BTreeSet::new();
        for d in deps_of(k) {
            let d = nodes.get_key_value(d).expect("node").0;
            lvl = lvl.max(level[d] + 1);
            anc.insert(d);
            anc.extend(ancestors[d].iter().copied());
        }
        level.insert(k, lvl);
        ancestors.insert(k, anc);
    }

    let mut groups: BTreeMap<&str, Vec<&K>> = BTreeMap::new();
    for (k, (_, g)) in nodes {
        if let Some(g) = g {
            groups.entry(g.as_str()).or_default().push(k);
        }
    }
    groups.retain(|_, members| {
        members.len() > 1
            && members
                .iter()
                .all(|a| members.iter().all(|b| !ancestors[a].contains(b)))
    });

    for _ in 0..=nodes.len() {
        let mut changed = false;
        for members in groups.values() {
            let target = members.iter().map(|m| level[m]).max().unwrap_or(0);
            for m in members {
                let l = level.get_mut(m).expect("node");
                if *l < target {
                    *l = target;
                    changed = true;
                }
            }
        }
        for &k in &topo {
            let floor = deps_of(k)
                .map(|d| level[nodes.get_key_value(d).expect("node").0] + 1)
                .max()
                .unwrap_or(0);
            let l = level.get_mut(k).expect("node");
            if *l < floor {
                *l = floor;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut by_level: BTreeMap<usize, Vec<K>> = BTreeMap::new();
    for (k, l) in level {
        by_level.entry(l).or_default().push(k.clone());
    }
    Ok(by_level.into_values().collect())
}
