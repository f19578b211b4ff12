//! The episode state machine behind the four exploring agents.
//!
//! Each step is one relocation cycle: observe, update maps, ask whether to stop, pick
//! a waypoint for the current mode, walk the planned action path (cut short so the
//! agent never leaves a `max_relocation_m` disk around where it started), then decide
//! the mode for the next step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataio::QAItem;
use crate::frontier::{
    cluster_frontiers, detect_frontiers, direction_rates, frontier_weight, sample_frontier,
    FrontierDistance, WeightParams,
};
use crate::goal::{prioritize_regions, select_goal_target, RegionPriorityList, VisitLedger};
use crate::mapping::{
    farthest_point_sample, mask_semantic, ExplorationMap, ExploreState, FusionWeights, MaskedMap,
    RegionMap, SamplePoint, SemanticMap,
};
use crate::oracle::{GroundTruthView, ObservationPayload, Oracle, OracleError, VisibleRegion};
use crate::scene::{
    apply_action, distance_field, plan_actions, visible_cells, AtomicAction, Kinematics, Point,
    Pose, Scene,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[serde(rename = "re")]
    RandomExploration,
    #[serde(rename = "fbe")]
    FrontierBased,
    #[serde(rename = "goe")]
    GoalOriented,
    #[serde(rename = "fineqa")]
    FineEQA,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::RandomExploration,
        Strategy::FrontierBased,
        Strategy::GoalOriented,
        Strategy::FineEQA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::RandomExploration => "re",
            Strategy::FrontierBased => "fbe",
            Strategy::GoalOriented => "goe",
            Strategy::FineEQA => "fineqa",
        }
    }

    fn uses_regions(self) -> bool {
        matches!(self, Strategy::GoalOriented | Strategy::FineEQA)
    }

    fn base_mode(self) -> Mode {
        match self {
            Strategy::FrontierBased | Strategy::FineEQA => Mode::Frontier,
            Strategy::RandomExploration | Strategy::GoalOriented => Mode::Random,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}; expected one of re, fbe, goe, fineqa"))
    }
}

/// Every tunable of an episode. All fields have defaults and are exposed in the
/// config file under the same names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub turn_degrees: u32,
    pub fov_degrees: f64,
    pub view_range_m: f64,
    pub sample_count: usize,
    pub fusion: FusionWeights,
    pub kernel_sigma_cells: f64,
    pub region_threshold: f64,
    pub region_radius_cells: usize,
    pub merge_gap_cells: usize,
    pub decay_factor: f64,
    pub weights: WeightParams,
    pub probe_len_m: f64,
    pub min_cluster_size: usize,
    pub min_frontier_distance_m: f64,
    pub frontier_distance: FrontierDistance,
    pub max_relocation_m: f64,
    pub region_step_cap: u32,
    pub steps_per_m2: f64,
    pub max_steps_cap: usize,
    pub waypoint_retries: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            turn_degrees: 30,
            fov_degrees: 90.0,
            view_range_m: 3.0,
            sample_count: 8,
            fusion: FusionWeights::default(),
            kernel_sigma_cells: 3.0,
            region_threshold: 0.5,
            region_radius_cells: 4,
            merge_gap_cells: 2,
            decay_factor: 0.5,
            weights: WeightParams::default(),
            probe_len_m: 3.0,
            min_cluster_size: 3,
            min_frontier_distance_m: 0.5,
            frontier_distance: FrontierDistance::Euclidean,
            max_relocation_m: 3.0,
            region_step_cap: 3,
            steps_per_m2: 0.5,
            max_steps_cap: 100,
            waypoint_retries: 5,
        }
    }
}

impl Params {
    pub fn kinematics(&self) -> Kinematics {
        Kinematics {
            turn_degrees: self.turn_degrees,
        }
    }

    /// `min(max_steps_cap, ceil(steps_per_m2 · free area))`, at least 1.
    pub fn max_steps(&self, scene: &Scene) -> usize {
        let scaled = (self.steps_per_m2 * scene.free_area_m2()).ceil().max(1.0) as usize;
        scaled.min(self.max_steps_cap)
    }

    /// Frontier weights for a strategy: the frontier-only baseline ignores semantics.
    pub fn weights_for(&self, strategy: Strategy) -> WeightParams {
        match strategy {
            Strategy::FrontierBased => WeightParams {
                alpha_sem: 0.0,
                ..self.weights
            },
            _ => self.weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "region")]
pub enum Mode {
    Frontier,
    Random,
    Goal(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Exploring,
    Completed,
    BudgetExhausted,
}

/// What happened in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    /// The stop oracle fired; no relocation.
    Stop,
    Moved,
    /// A waypoint was chosen but the agent did not change cells.
    Idle,
    /// No reachable waypoint after the bounded retries and the fallback.
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCall {
    pub call: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mode: Mode,
    pub event: StepEvent,
    /// Pose when the step began.
    pub start: Pose,
    /// Pose when the step ended.
    pub pose: Pose,
    /// Cell picked by the mode before clamping.
    pub target: Option<usize>,
    /// Cell actually reached.
    pub waypoint: Option<usize>,
    /// Cells entered, in order.
    pub path: Vec<usize>,
    pub actions: usize,
    pub travel_m: f64,
    pub oracle: Vec<OracleCall>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub id: u32,
    pub region_type: String,
}

/// Final belief maps, kept for rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub width: usize,
    pub height: usize,
    /// One glyph per cell, row-major: `?` unknown, `.` free, `#` occupied.
    pub explored: String,
    pub semantic: Vec<f64>,
    /// Region id per cell, 0 for none.
    pub regions: Vec<u32>,
    pub region_types: Vec<RegionLabel>,
    /// Last masked map computed in goal mode.
    pub masked: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub qa_id: String,
    pub strategy: Strategy,
    pub status: EpisodeStatus,
    pub steps: usize,
    pub p_m: f64,
    pub answer: String,
    /// Global semantic score of the final observation, used as answer confidence.
    pub ce: f64,
    pub final_pose: Pose,
    pub final_view: GroundTruthView,
    pub records: Vec<StepRecord>,
    pub snapshot: MapSnapshot,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("start pose is not on a free cell")]
    InvalidStart,
    #[error("target is not on a free cell")]
    InvalidTarget,
    #[error("step {step}: {source}")]
    Oracle {
        step: usize,
        #[source]
        source: OracleError,
    },
}

/// Seed for one episode, independent of the order episodes are run in.
pub fn episode_seed(run_seed: u64, qa_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(qa_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn digest<T: Serialize, U: Serialize>(call: &str, request: &T, response: &U) -> OracleCall {
    let mut h = Sha256::new();
    h.update(call.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(request).expect("request serializes"));
    h.update([0]);
    h.update(serde_json::to_vec(response).expect("response serializes"));
    let hex: String = h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect();
    OracleCall {
        call: call.to_string(),
        digest: hex,
    }
}

/// One observation: which cells were seen and the payload built from them.
#[derive(Debug, Clone)]
pub struct Observation {
    pub visible: BTreeSet<usize>,
    pub sample_cells: Vec<usize>,
    pub payload: ObservationPayload,
}

/// Looks from `pose` (in four directions 90° apart when `sweep`), optionally picking
/// spread-out sample points among the visible free cells.
pub fn observe<R: Rng + ?Sized>(
    scene: &Scene,
    qa: &QAItem,
    pose: &Pose,
    params: &Params,
    sweep: bool,
    samples: Option<&mut R>,
) -> Observation {
    let mut visible = BTreeSet::new();
    let turns = if sweep { 4 } else { 1 };
    for k in 0..turns {
        let p = Pose::new(pose.position, pose.heading + 90.0 * k as f64);
        visible.extend(visible_cells(scene, &p, params.fov_degrees, params.view_range_m));
    }
    let free: Vec<usize> = visible.iter().copied().filter(|&i| scene.is_free(i)).collect();
    let sample_cells = match samples {
        Some(rng) if !free.is_empty() && params.sample_count > 0 => {
            farthest_point_sample(&free, scene.width, params.sample_count, rng)
                .expect("candidates nonempty")
        }
        _ => Vec::new(),
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in &free {
        if let Some(r) = scene.region_at(i) {
            *counts.entry(r).or_default() += 1;
        }
    }
    let sample_points: Vec<Point> = sample_cells.iter().map(|&c| scene.center_of(c)).collect();
    let target_visible = scene
        .cell_of(qa.target)
        .is_some_and(|t| visible.contains(&t));
    let view = GroundTruthView {
        agent: pose.position,
        sample_points: sample_points.clone(),
        sample_regions: sample_cells
            .iter()
            .map(|&c| scene.region_at(c).map(str::to_string))
            .collect(),
        target_answer: qa.gold_answer.clone(),
        target_visible,
        visible_free_cells: free.len(),
        visible_regions: counts
            .into_iter()
            .map(|(t, cells)| VisibleRegion {
                cells,
                region_type: t.to_string(),
            })
            .collect(),
    };
    Observation {
        visible,
        sample_cells,
        payload: ObservationPayload {
            question: qa.question.clone(),
            pose: *pose,
            sample_points,
            ground_truth: Some(view),
            image_ref: None,
        },
    }
}

/// Samples a distance in `(0, max_relocation_m]` and a uniform direction, and returns
/// the reachable free cell within `max_relocation_m` of the pose that lies nearest the
/// offset point. Falls back to the current cell when nothing else is reachable.
pub fn random_waypoint<R: Rng + ?Sized>(
    scene: &Scene,
    pose: &Pose,
    dist: &[f64],
    max_relocation_m: f64,
    rng: &mut R,
) -> usize {
    let current = scene.cell_of(pose.position).expect("pose on grid");
    let d = max_relocation_m - rng.random_range(0.0..max_relocation_m);
    let theta = rng.random_range(0.0..360.0f64).to_radians();
    let goal = Point::new(
        pose.position.x + d * theta.cos(),
        pose.position.y - d * theta.sin(),
    );
    let reach = (max_relocation_m / scene.resolution).ceil() as i64 + 1;
    let (c0, r0) = scene.col_row(current);
    let mut best: Option<(f64, usize)> = None;
    for r in (r0 as i64 - reach)..=(r0 as i64 + reach) {
        for c in (c0 as i64 - reach)..=(c0 as i64 + reach) {
            if !scene.is_free_at(c, r) {
                continue;
            }
            let i = scene.index(c as usize, r as usize);
            let center = scene.center_of(i);
            if !dist[i].is_finite() || center.distance(&pose.position) > max_relocation_m + 1e-9 {
                continue;
            }
            let e = center.distance(&goal);
            if best.is_none_or(|(be, _)| e < be) {
                best = Some((e, i));
            }
        }
    }
    best.map_or(current, |(_, i)| i)
}

/// Walks `actions` from `start`, stopping before the first move that would leave the
/// disk of radius `max_m` around `start`. Returns the end pose, entered cells, the
/// number of actions executed and the distance travelled.
pub fn walk_clamped(
    scene: &Scene,
    kin: &Kinematics,
    start: &Pose,
    actions: &[AtomicAction],
    max_m: f64,
) -> (Pose, Vec<usize>, usize, f64) {
    let mut pose = *start;
    let mut path = Vec::new();
    let mut travel = 0.0;
    let mut executed = 0;
    for &a in actions {
        let next = apply_action(scene, kin, &pose, a);
        if next.position.distance(&start.position) > max_m + 1e-9 {
            break;
        }
        if next.position != pose.position {
            travel += next.position.distance(&pose.position);
            path.push(scene.cell_of(next.position).expect("on grid"));
        }
        pose = next;
        executed += 1;
    }
    (pose, path, executed, travel)
}

/// Mutable state of one episode.
pub struct EpisodeState {
    pub pose: Pose,
    pub explored: ExplorationMap,
    pub semantic: SemanticMap,
    pub regions: RegionMap,
    pub masked: Option<MaskedMap>,
    pub ledger: VisitLedger,
    pub priorities: RegionPriorityList,
    pub mode: Mode,
    pub step_index: usize,
    pub path_length_m: f64,
    pub status: EpisodeStatus,
    pub records: Vec<StepRecord>,
    sweep_next: bool,
    last_observation: Option<Observation>,
}

impl EpisodeState {
    pub fn new(scene: &Scene, start: Pose, strategy: Strategy, priorities: RegionPriorityList) -> Self {
        Self {
            pose: start,
            explored: ExplorationMap::for_scene(scene),
            semantic: SemanticMap::new(scene.width, scene.height),
            regions: RegionMap::new(scene.width, scene.height),
            masked: None,
            ledger: VisitLedger::new(scene.len()),
            priorities,
            mode: strategy.base_mode(),
            step_index: 0,
            path_length_m: 0.0,
            status: EpisodeStatus::Exploring,
            records: Vec::new(),
            sweep_next: false,
            last_observation: None,
        }
    }

    fn is_exhausted(&self, id: u32) -> bool {
        let id = self.regions.canonical(id).unwrap_or(id);
        self.priorities
            .exhausted
            .iter()
            .any(|&e| self.regions.canonical(e).unwrap_or(e) == id)
    }

    /// Highest-priority region present in the region map that is not used up. Ties go
    /// to the smaller id.
    fn best_region(&self) -> Option<(u32, u32)> {
        let mut best: Option<(u32, u32)> = None;
        for (&id, info) in self.regions.table() {
            let Some(rank) = self.priorities.rank(&info.region_type) else {
                continue;
            };
            if self.is_exhausted(id) {
                continue;
            }
            if best.is_none_or(|(_, br)| rank > br) {
                best = Some((id, rank));
            }
        }
        best
    }

    fn rank_of(&self, id: u32) -> u32 {
        self.regions
            .region_type(id)
            .and_then(|t| self.priorities.rank(t))
            .unwrap_or(0)
    }

    /// Marks the active goal region used up and falls back to the next region or to
    /// the strategy's base mode.
    fn leave_goal(&mut self, strategy: Strategy) {
        if let Mode::Goal(r) = self.mode {
            self.priorities.exhausted.insert(r);
        }
        self.mode = match self.best_region() {
            Some((id, _)) => Mode::Goal(id),
            None => strategy.base_mode(),
        };
    }

    fn end_of_step_transition(&mut self, strategy: Strategy, params: &Params) {
        if !strategy.uses_regions() {
            return;
        }
        if let Mode::Goal(r) = self.mode {
            if self.ledger.consecutive(r) >= params.region_step_cap {
                self.leave_goal(strategy);
            }
        }
        match (self.mode, self.best_region()) {
            (Mode::Goal(r), Some((b, rank))) if rank > self.rank_of(r) => self.mode = Mode::Goal(b),
            (Mode::Goal(_), _) => {}
            (_, Some((b, _))) => self.mode = Mode::Goal(b),
            (_, None) => {}
        }
    }

    /// Follows region merges so the goal region and its streak keep a live id. A goal
    /// merged into a used-up region is dropped.
    fn canonicalize_goal(&mut self, strategy: Strategy) {
        if let Mode::Goal(r) = self.mode {
            let c = self.regions.canonical(r).unwrap_or(r);
            if c != r {
                self.ledger.alias(r, c);
                self.mode = Mode::Goal(c);
            }
            if self.is_exhausted(c) {
                self.mode = match self.best_region() {
                    Some((id, _)) => Mode::Goal(id),
                    None => strategy.base_mode(),
                };
            }
        }
    }

    pub fn snapshot(&self) -> MapSnapshot {
        MapSnapshot {
            width: self.explored.width,
            height: self.explored.height,
            explored: self
                .explored
                .states()
                .iter()
                .map(|s| match s {
                    ExploreState::Unknown => '?',
                    ExploreState::FreeExplored => '.',
                    ExploreState::OccupiedExplored => '#',
                })
                .collect(),
            semantic: self.semantic.values().to_vec(),
            regions: self.regions.cells().iter().map(|c| c.unwrap_or(0)).collect(),
            region_types: self
                .regions
                .table()
                .iter()
                .map(|(id, info)| RegionLabel {
                    id: *id,
                    region_type: info.region_type.clone(),
                })
                .collect(),
            masked: self.masked.as_ref().map(|m| m.values().to_vec()),
        }
    }
}

/// Everything a step needs besides the state.
pub struct EpisodeContext<'a> {
    pub scene: &'a Scene,
    pub qa: &'a QAItem,
    pub strategy: Strategy,
    pub oracle: &'a dyn Oracle,
    pub params: &'a Params,
}

impl EpisodeContext<'_> {
    fn oracle_err(&self, state: &EpisodeState) -> impl Fn(OracleError) -> EpisodeError {
        let step = state.step_index + 1;
        move |source| EpisodeError::Oracle { step, source }
    }
}

/// Runs one relocation cycle.
pub fn step<R: Rng + ?Sized>(
    state: &mut EpisodeState,
    ctx: &EpisodeContext<'_>,
    rng: &mut R,
) -> Result<StepEvent, EpisodeError> {
    assert_eq!(state.status, EpisodeStatus::Exploring, "step on a finished episode");
    let scene = ctx.scene;
    let params = ctx.params;
    let err = ctx.oracle_err(state);
    let mut calls = Vec::new();

    let obs = observe(
        scene,
        ctx.qa,
        &state.pose,
        params,
        std::mem::take(&mut state.sweep_next),
        ctx.strategy.uses_regions().then_some(&mut *rng),
    );
    state.explored.update_explored(&obs.visible, scene);
    if ctx.strategy.uses_regions() {
        let scores = ctx.oracle.semantic_scores(&obs.payload).map_err(&err)?;
        calls.push(digest("semantic_scores", &obs.payload, &scores));
        let samples: Vec<SamplePoint> = obs
            .sample_cells
            .iter()
            .zip(&scores.v_l)
            .map(|(&cell, &v_l)| SamplePoint { cell, v_l })
            .collect();
        state
            .semantic
            .update_semantic(&samples, scores.v_g, params.fusion, params.kernel_sigma_cells);
        let guess = ctx.oracle.classify_region(&obs.payload).map_err(&err)?;
        calls.push(digest("classify_region", &obs.payload, &guess));
        if let Some(q) = scene.cell_of(guess.rep_point) {
            state.regions.update_region(
                &state.explored,
                &guess.region_type,
                guess.confidence,
                q,
                params.region_threshold,
                params.region_radius_cells,
            );
            state.regions.merge_regions(params.merge_gap_cells);
            state.canonicalize_goal(ctx.strategy);
        }
    }
    let stop = ctx.oracle.should_stop(&obs.payload).map_err(&err)?;
    calls.push(digest("should_stop", &obs.payload, &stop));
    state.step_index += 1;
    let start = state.pose;
    let record = |state: &mut EpisodeState, event, target, waypoint, path, actions, travel, calls| {
        state.records.push(StepRecord {
            step: state.step_index,
            mode: state.mode,
            event,
            start,
            pose: state.pose,
            target,
            waypoint,
            path,
            actions,
            travel_m: travel,
            oracle: calls,
        });
    };
    state.last_observation = Some(obs);
    if stop {
        state.status = EpisodeStatus::Completed;
        record(state, StepEvent::Stop, None, None, Vec::new(), 0, 0.0, calls);
        return Ok(StepEvent::Stop);
    }

    let kin = params.kinematics();
    let here = scene.cell_of(state.pose.position).expect("pose on grid");
    let dist = distance_field(scene, here);
    let mut chosen: Option<(usize, Vec<AtomicAction>)> = None;
    let mut excluded: BTreeSet<usize> = BTreeSet::new();
    for _ in 0..params.waypoint_retries.max(1) {
        let Some(target) = choose_target(state, ctx, &dist, &excluded, rng) else {
            break;
        };
        match plan_actions(scene, &kin, &state.pose, scene.center_of(target)) {
            Ok(actions) => {
                chosen = Some((target, actions));
                break;
            }
            Err(_) => {
                excluded.insert(target);
            }
        }
    }
    if chosen.is_none() {
        let target = random_waypoint(scene, &state.pose, &dist, params.max_relocation_m, rng);
        if let Ok(actions) = plan_actions(scene, &kin, &state.pose, scene.center_of(target)) {
            chosen = Some((target, actions));
        }
    }
    let Some((target, actions)) = chosen else {
        state.ledger.record_visit(here, None);
        record(state, StepEvent::Stuck, None, None, Vec::new(), 0, 0.0, calls);
        state.end_of_step_transition(ctx.strategy, params);
        return Ok(StepEvent::Stuck);
    };

    let (end, path, executed, travel) =
        walk_clamped(scene, &kin, &state.pose, &actions, params.max_relocation_m);
    state.pose = end;
    state.path_length_m += travel;
    let reached = scene.cell_of(end.position).expect("pose on grid");
    let goal_region = match state.mode {
        Mode::Goal(r) => Some(r),
        _ => None,
    };
    state.ledger.record_visit(reached, goal_region);
    if goal_region.is_some() {
        state.sweep_next = true;
    }
    let event = if path.is_empty() {
        StepEvent::Idle
    } else {
        StepEvent::Moved
    };
    record(state, event, Some(target), Some(reached), path, executed, travel, calls);
    state.end_of_step_transition(ctx.strategy, params);
    Ok(event)
}

/// Distance from the agent to frontier cell `cell`; `dist` is the geodesic field from
/// the agent's cell.
pub fn frontier_distance_m(kind: FrontierDistance, scene: &Scene, pose: &Pose, dist: &[f64], cell: usize) -> f64 {
    match kind {
        FrontierDistance::Euclidean => pose.position.distance(&scene.center_of(cell)),
        FrontierDistance::Geodesic => dist[cell],
    }
}

/// Picks the next waypoint for the current mode, leaving goal mode when the region
/// offers no target.
fn choose_target<R: Rng + ?Sized>(
    state: &mut EpisodeState,
    ctx: &EpisodeContext<'_>,
    dist: &[f64],
    excluded: &BTreeSet<usize>,
    rng: &mut R,
) -> Option<usize> {
    let scene = ctx.scene;
    let params = ctx.params;
    loop {
        match state.mode {
            Mode::Random => {
                return Some(random_waypoint(scene, &state.pose, dist, params.max_relocation_m, rng))
            }
            Mode::Frontier => {
                let frontiers = detect_frontiers(&state.explored);
                let weights = params.weights_for(ctx.strategy);
                let mut cands = cluster_frontiers(&frontiers, scene.width, params.min_cluster_size);
                for c in &mut cands {
                    c.dis_m = frontier_distance_m(params.frontier_distance, scene, &state.pose, dist, c.cell);
                }
                cands.retain(|c| {
                    dist[c.cell].is_finite()
                        && c.dis_m >= params.min_frontier_distance_m
                        && !excluded.contains(&c.cell)
                });
                for c in &mut cands {
                    c.v_sem = state.semantic.get(c.cell);
                    (c.r_e, c.r_o) = direction_rates(
                        &state.explored,
                        scene.resolution,
                        state.pose.position,
                        c.cell,
                        params.probe_len_m,
                    );
                    c.weight = frontier_weight(c, &weights);
                }
                return match sample_frontier(&cands, rng) {
                    Ok(i) => Some(cands[i].cell),
                    Err(_) => Some(random_waypoint(
                        scene,
                        &state.pose,
                        dist,
                        params.max_relocation_m,
                        rng,
                    )),
                };
            }
            Mode::Goal(r) => {
                let masked = mask_semantic(
                    &state.semantic,
                    &state.regions,
                    r,
                    state.ledger.counts(),
                    params.decay_factor,
                );
                let target = masked.as_ref().ok().and_then(|m| {
                    let mut d = dist.to_vec();
                    for &e in excluded {
                        d[e] = f64::INFINITY;
                    }
                    select_goal_target(m, &state.explored, &d)
                });
                if let Ok(m) = masked {
                    state.masked = Some(m);
                }
                match target {
                    Some(t) => return Some(t),
                    None => state.leave_goal(ctx.strategy),
                }
            }
        }
    }
}

/// Runs an episode to completion or budget exhaustion and asks for the answer from
/// the final observation.
pub fn run_episode(
    scene: &Scene,
    qa: &QAItem,
    strategy: Strategy,
    oracle: &dyn Oracle,
    params: &Params,
    seed: u64,
) -> Result<EpisodeResult, EpisodeError> {
    if !scene.is_valid_pose(&qa.start) {
        return Err(EpisodeError::InvalidStart);
    }
    if !scene.cell_of(qa.target).is_some_and(|t| scene.is_free(t)) {
        return Err(EpisodeError::InvalidTarget);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, &qa.id));
    // A failed priority query leaves the list empty, which keeps the agent out of
    // goal mode for the whole episode.
    let priorities = if strategy.uses_regions() {
        prioritize_regions(&qa.question, oracle).unwrap_or_default()
    } else {
        RegionPriorityList::default()
    };
    let mut state = EpisodeState::new(scene, qa.start, strategy, priorities);
    let ctx = EpisodeContext {
        scene,
        qa,
        strategy,
        oracle,
        params,
    };
    let max_steps = params.max_steps(scene);
    while state.status == EpisodeStatus::Exploring && state.step_index < max_steps {
        step(&mut state, &ctx, &mut rng)?;
    }
    if state.status == EpisodeStatus::Exploring {
        state.status = EpisodeStatus::BudgetExhausted;
    }
    let final_obs = match state.last_observation.take() {
        Some(obs) if state.status == EpisodeStatus::Completed => obs,
        _ => observe::<ChaCha8Rng>(scene, qa, &state.pose, params, false, None),
    };
    let final_err = |source| EpisodeError::Oracle {
        step: state.step_index,
        source,
    };
    let answer = oracle.answer(&final_obs.payload).map_err(final_err)?;
    let ce = oracle
        .semantic_scores(&final_obs.payload)
        .map_err(final_err)?
        .v_g;
    let final_view = final_obs
        .payload
        .ground_truth
        .clone()
        .expect("observations carry ground truth");
    Ok(EpisodeResult {
        qa_id: qa.id.clone(),
        strategy,
        status: state.status,
        steps: state.step_index,
        p_m: state.path_length_m,
        answer,
        ce,
        final_pose: state.pose,
        final_view,
        snapshot: state.snapshot(),
        records: state.records,
    })
}
