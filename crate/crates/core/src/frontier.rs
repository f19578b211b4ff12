//! Frontier detection, clustering, composite weighting and weighted sampling.

use std::collections::{BTreeSet, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::{ExplorationMap, ExploreState};
use crate::scene::Point;

#[derive(Debug, Error, PartialEq)]
pub enum FrontierError {
    #[error("no frontier candidates to sample from")]
    Empty,
    #[error("frontier weights must be finite and positive")]
    BadWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCandidate {
    pub cell: usize,
    pub cluster_size: usize,
    pub v_sem: f64,
    pub r_e: f64,
    pub r_o: f64,
    pub dis_m: f64,
    pub weight: f64,
}

impl FrontierCandidate {
    fn unweighted(cell: usize, cluster_size: usize) -> Self {
        Self {
            cell,
            cluster_size,
            v_sem: 0.0,
            r_e: 0.0,
            r_o: 0.0,
            dis_m: 0.0,
            weight: 1.0,
        }
    }
}

/// Gains on the semantic value, unexplored rate and unoccupied rate, and the distance
/// decay rate per meter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub alpha_sem: f64,
    pub alpha_explore: f64,
    pub alpha_open: f64,
    pub lambda: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            alpha_sem: 1.0,
            alpha_explore: 1.0,
            alpha_open: 0.5,
            lambda: 0.3,
        }
    }
}

/// How the distance term of a frontier weight is measured from the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontierDistance {
    /// Straight line between cell centers.
    #[default]
    Euclidean,
    /// Shortest 8-connected path through free cells.
    Geodesic,
}

const NEIGHBORS8: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Explored free cells with at least one unknown 8-neighbour.
pub fn detect_frontiers(map: &ExplorationMap) -> BTreeSet<usize> {
    map.free_explored()
        .filter(|&i| {
            let (c, r) = ((i % map.width) as i64, (i / map.width) as i64);
            NEIGHBORS8
                .iter()
                .any(|(dc, dr)| map.get_at(c + dc, r + dr) == Some(ExploreState::Unknown))
        })
        .collect()
}

/// Groups frontier cells into 8-connected clusters, drops clusters smaller than
/// `min_cluster_size`, and represents each by the member nearest its centroid.
pub fn cluster_frontiers(
    cells: &BTreeSet<usize>,
    width: usize,
    min_cluster_size: usize,
) -> Vec<FrontierCandidate> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &seed in cells {
        if !seen.insert(seed) {
            continue;
        }
        let mut members = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(cur) = queue.pop_front() {
            let (c, r) = ((cur % width) as i64, (cur / width) as i64);
            for (dc, dr) in NEIGHBORS8 {
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc as usize >= width {
                    continue;
                }
                let n = nr as usize * width + nc as usize;
                if cells.contains(&n) && seen.insert(n) {
                    members.push(n);
                    queue.push_back(n);
                }
            }
        }
        if members.len() < min_cluster_size {
            continue;
        }
        let n = members.len() as f64;
        let cx = members.iter().map(|m| (m % width) as f64).sum::<f64>() / n;
        let cy = members.iter().map(|m| (m / width) as f64).sum::<f64>() / n;
        // Row-major index order doubles as the (row, col) tie-break.
        let rep = *members
            .iter()
            .min_by(|a, b| {
                let da = ((**a % width) as f64 - cx).powi(2) + ((**a / width) as f64 - cy).powi(2);
                let db = ((**b % width) as f64 - cx).powi(2) + ((**b / width) as f64 - cy).powi(2);
                da.total_cmp(&db).then(a.cmp(b))
            })
            .expect("cluster nonempty");
        out.push(FrontierCandidate::unweighted(rep, members.len()));
    }
    out
}

/// Unexplored and unoccupied rates along the ray leaving frontier cell `f` away from
/// the agent. Samples are taken one cell apart for `probe_len_m`; samples outside the
/// grid count as explored and occupied.
pub fn direction_rates(
    map: &ExplorationMap,
    resolution: f64,
    p_cur: Point,
    f: usize,
    probe_len_m: f64,
) -> (f64, f64) {
    let (fc, fr) = ((f % map.width) as f64 + 0.5, (f / map.width) as f64 + 0.5);
    let (ac, ar) = (p_cur.x / resolution, p_cur.y / resolution);
    let (dx, dy) = (fc - ac, fr - ar);
    let norm = dx.hypot(dy);
    let samples = ((probe_len_m / resolution).round() as usize).max(1);
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let (ux, uy) = (dx / norm, dy / norm);
    let (mut unknown, mut open) = (0usize, 0usize);
    for k in 1..=samples {
        let x = fc + ux * k as f64;
        let y = fr + uy * k as f64;
        match map.get_at(x.floor() as i64, y.floor() as i64) {
            Some(ExploreState::Unknown) => {
                unknown += 1;
                open += 1;
            }
            Some(ExploreState::FreeExplored) => open += 1,
            Some(ExploreState::OccupiedExplored) | None => {}
        }
    }
    (
        unknown as f64 / samples as f64,
        open as f64 / samples as f64,
    )
}

/// `exp(α_s·v_sem + α_e·r_e + α_o·r_o) · exp(−λ·dis)`.
pub fn frontier_weight(c: &FrontierCandidate, params: &WeightParams) -> f64 {
    (params.alpha_sem * c.v_sem + params.alpha_explore * c.r_e + params.alpha_open * c.r_o).exp()
        * (-params.lambda * c.dis_m).exp()
}

/// Draws a candidate index with probability proportional to its weight.
pub fn sample_frontier<R: Rng + ?Sized>(
    candidates: &[FrontierCandidate],
    rng: &mut R,
) -> Result<usize, FrontierError> {
    if candidates.is_empty() {
        return Err(FrontierError::Empty);
    }
    if candidates
        .iter()
        .any(|c| !(c.weight.is_finite() && c.weight > 0.0))
    {
        return Err(FrontierError::BadWeights);
    }
    let dist = WeightedIndex::new(candidates.iter().map(|c| c.weight))
        .map_err(|_| FrontierError::BadWeights)?;
    Ok(dist.sample(rng))
}
