//! Task-relevant region priorities, visit bookkeeping and goal-oriented target choice.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mapping::{ExplorationMap, ExploreState, MaskedMap};
use crate::oracle::{Oracle, OracleError};

/// Region types in priority order (highest first) plus the region ids already used up.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionPriorityList {
    entries: Vec<(String, u32)>,
    pub exhausted: BTreeSet<u32>,
}

impl RegionPriorityList {
    /// Duplicates keep their first position.
    pub fn from_ordered<S: AsRef<str>>(types: &[S]) -> Self {
        let mut seen = BTreeSet::new();
        let unique: Vec<String> = types
            .iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| seen.insert(t.clone()))
            .collect();
        let n = unique.len() as u32;
        Self {
            entries: unique
                .into_iter()
                .enumerate()
                .map(|(i, t)| (t, n - i as u32))
                .collect(),
            exhausted: BTreeSet::new(),
        }
    }

    pub fn entries(&self) -> &[(String, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rank of a region type; larger is more important, `None` if not prioritized.
    pub fn rank(&self, region_type: &str) -> Option<u32> {
        self.entries
            .iter()
            .find(|(t, _)| t == region_type)
            .map(|(_, r)| *r)
    }
}

/// Asks the oracle which region types matter for the question.
pub fn prioritize_regions(
    question: &str,
    oracle: &dyn Oracle,
) -> Result<RegionPriorityList, OracleError> {
    let types = oracle.prioritize_regions(question)?;
    Ok(RegionPriorityList::from_ordered(&types))
}

/// Per-cell visit counts and the consecutive goal-relocation counter of the region
/// currently being worked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitLedger {
    counts: Vec<u32>,
    active: Option<u32>,
    consecutive: BTreeMap<u32, u32>,
}

impl VisitLedger {
    pub fn new(cells: usize) -> Self {
        Self {
            counts: vec![0; cells],
            active: None,
            consecutive: BTreeMap::new(),
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, cell: usize) -> u32 {
        self.counts[cell]
    }

    pub fn consecutive(&self, region: u32) -> u32 {
        self.consecutive.get(&region).copied().unwrap_or(0)
    }

    pub fn active(&self) -> Option<u32> {
        self.active
    }

    /// Carries the streak of region `from` over to `to` after the two were merged.
    pub fn alias(&mut self, from: u32, to: u32) {
        if from == to {
            return;
        }
        let streak = self.consecutive.remove(&from).unwrap_or(0);
        if self.active == Some(from) {
            self.active = Some(to);
            self.consecutive.insert(to, streak);
        }
    }

    /// Counts a visit to `cell`. A visit attributed to the active region extends its
    /// streak; anything else resets that streak and makes `region` the active one.
    pub fn record_visit(&mut self, cell: usize, region: Option<u32>) {
        self.counts[cell] += 1;
        if region.is_some() && region == self.active {
            *self.consecutive.entry(region.unwrap()).or_default() += 1;
            return;
        }
        if let Some(prev) = self.active {
            self.consecutive.insert(prev, 0);
        }
        self.active = region;
        if let Some(r) = region {
            self.consecutive.insert(r, 1);
        }
    }
}

/// Highest-valued reachable explored-free cell of the masked map. Ties go to the cell
/// closer to the agent (by `geodesic_m`), then to the lower row-major index. `None`
/// when no reachable cell carries a positive value.
pub fn select_goal_target(
    masked: &MaskedMap,
    map: &ExplorationMap,
    geodesic_m: &[f64],
) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for i in 0..masked.values().len() {
        let v = masked.get(i);
        if v <= 0.0 || map.get(i) != ExploreState::FreeExplored || !geodesic_m[i].is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bv, bd)) => v > bv || (v == bv && geodesic_m[i] < bd),
        };
        if better {
            best = Some((i, v, geodesic_m[i]));
        }
    }
    best.map(|(i, _, _)| i)
}
