//! Agent belief maps: exploration state, semantic values, functional regions and the
//! region-masked semantic map used for goal-oriented target selection.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Cell, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("farthest point sampling needs at least one candidate")]
    NoCandidates,
    #[error("unknown region id {0}")]
    UnknownRegion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExploreState {
    Unknown,
    FreeExplored,
    OccupiedExplored,
}

/// Per-cell exploration state. Cells only ever leave `Unknown`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationMap {
    pub width: usize,
    pub height: usize,
    states: Vec<ExploreState>,
}

impl ExplorationMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            states: vec![ExploreState::Unknown; width * height],
        }
    }

    pub fn for_scene(scene: &Scene) -> Self {
        Self::new(scene.width, scene.height)
    }

    pub fn from_states(width: usize, height: usize, states: Vec<ExploreState>) -> Self {
        assert_eq!(states.len(), width * height);
        Self {
            width,
            height,
            states,
        }
    }

    pub fn get(&self, index: usize) -> ExploreState {
        self.states[index]
    }

    /// State at signed coordinates; `None` outside the grid.
    pub fn get_at(&self, col: i64, row: i64) -> Option<ExploreState> {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return None;
        }
        Some(self.states[row as usize * self.width + col as usize])
    }

    pub fn states(&self) -> &[ExploreState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn explored_count(&self) -> usize {
        self.states
            .iter()
            .filter(|s| **s != ExploreState::Unknown)
            .count()
    }

    pub fn free_explored(&self) -> impl Iterator<Item = usize> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == ExploreState::FreeExplored)
            .map(|(i, _)| i)
    }

    /// Marks every visible cell with its true occupancy.
    pub fn update_explored(&mut self, visible: &BTreeSet<usize>, scene: &Scene) {
        for &i in visible {
            self.states[i] = match scene.cell(i) {
                Cell::Free => ExploreState::FreeExplored,
                Cell::Occupied => ExploreState::OccupiedExplored,
            };
        }
    }
}

/// Picks up to `k` spread-out cells: the first uniformly at random, each later one
/// maximizing its minimum Euclidean distance to those already chosen. Ties go to the
/// earliest candidate in slice order.
pub fn farthest_point_sample<R: Rng + ?Sized>(
    candidates: &[usize],
    width: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, MappingError> {
    if candidates.is_empty() {
        return Err(MappingError::NoCandidates);
    }
    let coords: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&c| ((c % width) as f64, (c / width) as f64))
        .collect();
    let first = rng.random_range(0..candidates.len());
    let mut chosen = vec![first];
    let mut min_d2: Vec<f64> = coords
        .iter()
        .map(|&(x, y)| (x - coords[first].0).powi(2) + (y - coords[first].1).powi(2))
        .collect();
    while chosen.len() < k.min(candidates.len()) {
        let mut best = None;
        for (i, &d) in min_d2.iter().enumerate() {
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (next, _) = best.expect("candidates nonempty");
        chosen.push(next);
        let (nx, ny) = coords[next];
        for (i, &(x, y)) in coords.iter().enumerate() {
            min_d2[i] = min_d2[i].min((x - nx).powi(2) + (y - ny).powi(2));
        }
    }
    Ok(chosen.into_iter().map(|i| candidates[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub cell: usize,
    pub v_l: f64,
}

/// Weights of the local and global scores in the fused sample value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub local: f64,
    pub global: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            local: 0.5,
            global: 0.5,
        }
    }
}

/// Task-relevance value per cell, always within `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMap {
    pub width: usize,
    pub height: usize,
    values: Vec<f64>,
}

impl SemanticMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean value over in-bounds cells within Euclidean `radius` cells of `center`.
    pub fn mean_around(&self, center: usize, radius: f64) -> f64 {
        let (cc, cr) = ((center % self.width) as i64, (center / self.width) as i64);
        let r = radius.floor() as i64;
        let (mut sum, mut n) = (0.0, 0usize);
        for dr in -r..=r {
            for dc in -r..=r {
                let (c, row) = (cc + dc, cr + dr);
                if c < 0 || row < 0 || c as usize >= self.width || row as usize >= self.height {
                    continue;
                }
                if ((dc * dc + dr * dr) as f64) > radius * radius + 1e-9 {
                    continue;
                }
                sum += self.values[row as usize * self.width + c as usize];
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Stamps each sample's fused value as a truncated Gaussian peaked at the sample
    /// cell, combining with existing values by per-cell maximum.
    pub fn update_semantic(
        &mut self,
        samples: &[SamplePoint],
        v_g: f64,
        fusion: FusionWeights,
        kernel_sigma_cells: f64,
    ) {
        let sigma = kernel_sigma_cells.max(f64::MIN_POSITIVE);
        let cutoff = 3.0 * sigma;
        let reach = cutoff.floor() as i64;
        for sample in samples {
            let v = (fusion.local * sample.v_l + fusion.global * v_g).clamp(0.0, 1.0);
            let (sc, sr) = (
                (sample.cell % self.width) as i64,
                (sample.cell / self.width) as i64,
            );
            for dr in -reach..=reach {
                for dc in -reach..=reach {
                    let d2 = (dc * dc + dr * dr) as f64;
                    if d2 > cutoff * cutoff {
                        continue;
                    }
                    let (c, r) = (sc + dc, sr + dr);
                    if c < 0 || r < 0 || c as usize >= self.width || r as usize >= self.height {
                        continue;
                    }
                    let idx = r as usize * self.width + c as usize;
                    let stamped = v * (-d2 / (2.0 * sigma * sigma)).exp();
                    if stamped > self.values[idx] {
                        self.values[idx] = stamped;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub region_type: String,
    pub cell_count: usize,
}

/// Functional-region labels. Ids are handed out from a counter starting at 1; merged ids
/// are remembered as aliases of the surviving one.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub width: usize,
    pub height: usize,
    cells: Vec<Option<u32>>,
    table: BTreeMap<u32, RegionInfo>,
    aliases: BTreeMap<u32, u32>,
    next_id: u32,
}

impl RegionMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![None; width * height],
            table: BTreeMap::new(),
            aliases: BTreeMap::new(),
            next_id: 1,
        }
    }

    pub fn get(&self, index: usize) -> Option<u32> {
        self.cells[index]
    }

    pub fn cells(&self) -> &[Option<u32>] {
        &self.cells
    }

    pub fn table(&self) -> &BTreeMap<u32, RegionInfo> {
        &self.table
    }

    pub fn region_type(&self, id: u32) -> Option<&str> {
        self.table.get(&id).map(|r| r.region_type.as_str())
    }

    /// Follows merge aliases to the id that currently represents `id`.
    pub fn canonical(&self, mut id: u32) -> Option<u32> {
        while let Some(&to) = self.aliases.get(&id) {
            id = to;
        }
        self.table.contains_key(&id).then_some(id)
    }

    fn type_of_cell(&self, index: usize) -> Option<&str> {
        self.cells[index].and_then(|id| self.region_type(id))
    }

    fn relabel(&mut self, from: u32, to: u32) {
        if from == to {
            return;
        }
        for c in self.cells.iter_mut() {
            if *c == Some(from) {
                *c = Some(to);
            }
        }
        self.aliases.insert(from, to);
    }

    fn rebuild_table(&mut self) {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for id in self.cells.iter().flatten() {
            *counts.entry(*id).or_default() += 1;
        }
        self.table.retain(|id, _| counts.contains_key(id));
        for (id, info) in self.table.iter_mut() {
            info.cell_count = counts[id];
        }
    }

    /// Labels the explored free cells of the Chebyshev neighbourhood of `q` with a
    /// region of `region_type`, when `confidence` exceeds `threshold`. Same-type ids
    /// touching the neighbourhood are reused (and fused together if several touch).
    /// Returns the id that was stamped.
    #[allow(clippy::too_many_arguments)]
    pub fn update_region(
        &mut self,
        explored: &ExplorationMap,
        region_type: &str,
        confidence: f64,
        q: usize,
        threshold: f64,
        neighborhood_radius_cells: usize,
    ) -> Option<u32> {
        if confidence <= threshold {
            return None;
        }
        let (qc, qr) = ((q % self.width) as i64, (q / self.width) as i64);
        let r = neighborhood_radius_cells as i64;
        let mut stamp = Vec::new();
        let mut touching = BTreeSet::new();
        for dr in -(r + 1)..=(r + 1) {
            for dc in -(r + 1)..=(r + 1) {
                let (c, row) = (qc + dc, qr + dr);
                if c < 0 || row < 0 || c as usize >= self.width || row as usize >= self.height {
                    continue;
                }
                let idx = row as usize * self.width + c as usize;
                if self.type_of_cell(idx) == Some(region_type) {
                    touching.insert(self.cells[idx].expect("typed cell has id"));
                }
                if dr.abs() <= r
                    && dc.abs() <= r
                    && explored.get(idx) == ExploreState::FreeExplored
                {
                    stamp.push(idx);
                }
            }
        }
        if stamp.is_empty() {
            return None;
        }
        let id = match touching.iter().next() {
            Some(&keep) => {
                for &other in touching.iter().skip(1) {
                    self.relabel(other, keep);
                }
                keep
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.table.insert(
                    id,
                    RegionInfo {
                        region_type: region_type.to_string(),
                        cell_count: 0,
                    },
                );
                id
            }
        };
        for idx in stamp {
            self.cells[idx] = Some(id);
        }
        self.rebuild_table();
        Some(id)
    }

    /// Fuses same-type regions whose cells come within `gap_cells` (Chebyshev) of each
    /// other. The smallest id of each fused group survives.
    pub fn merge_regions(&mut self, gap_cells: usize) {
        let ids: Vec<u32> = self.table.keys().copied().collect();
        let pos: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let g = gap_cells as i64;
        for idx in 0..self.cells.len() {
            let Some(id) = self.cells[idx] else { continue };
            let (c0, r0) = ((idx % self.width) as i64, (idx / self.width) as i64);
            for dr in -g..=g {
                for dc in -g..=g {
                    let (c, r) = (c0 + dc, r0 + dr);
                    if c < 0 || r < 0 || c as usize >= self.width || r as usize >= self.height {
                        continue;
                    }
                    let Some(other) = self.cells[r as usize * self.width + c as usize] else {
                        continue;
                    };
                    if other != id && self.table[&other].region_type == self.table[&id].region_type {
                        let (a, b) = (find(&mut parent, pos[&id]), find(&mut parent, pos[&other]));
                        if a != b {
                            // ids are sorted, so the lower index is the smaller id.
                            let (lo, hi) = (a.min(b), a.max(b));
                            parent[hi] = lo;
                        }
                    }
                }
            }
        }
        for i in 0..ids.len() {
            let root = find(&mut parent, i);
            if root != i {
                self.relabel(ids[i], ids[root]);
            }
        }
        self.rebuild_table();
    }
}

/// Semantic values restricted to one region, with visit decay applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMap {
    pub width: usize,
    pub height: usize,
    pub region: u32,
    values: Vec<f64>,
}

impl MaskedMap {
    /// An all-zero map, used when no region has been targeted yet.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            region: 0,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, region: u32, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            region,
            values,
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Keeps the semantic value of cells in region `r`, zeroes the rest, and multiplies each
/// cell by `decay_factor` raised to its visit count.
pub fn mask_semantic(
    sem: &SemanticMap,
    reg: &RegionMap,
    r: u32,
    visit_counts: &[u32],
    decay_factor: f64,
) -> Result<MaskedMap, MappingError> {
    if !reg.table().contains_key(&r) {
        return Err(MappingError::UnknownRegion(r));
    }
    let values = (0..sem.values.len())
        .map(|i| {
            if reg.get(i) != Some(r) {
                return 0.0;
            }
            let visits = visit_counts.get(i).copied().unwrap_or(0);
            sem.values[i] * decay_factor.powi(visits as i32)
        })
        .collect();
    Ok(MaskedMap {
        width: sem.width,
        height: sem.height,
        region: r,
        values,
    })
}
