use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use super::{AtomicAction, Kinematics, Point, Pose, Scene};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("goal is unreachable")]
    Unreachable,
}

const NEIGHBORS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Geodesic distance in meters from `source` to every cell, over 8-connected free cells
/// with diagonal cost √2·resolution. Unreachable and occupied cells hold `f64::INFINITY`.
pub fn distance_field(scene: &Scene, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; scene.len()];
    if !scene.is_free(source) {
        return dist;
    }
    let straight = scene.resolution;
    let diagonal = std::f64::consts::SQRT_2 * scene.resolution;
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        cell: source,
    });
    while let Some(Entry { dist: d, cell }) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        let (col, row) = scene.col_row(cell);
        for (dc, dr) in NEIGHBORS {
            let (nc, nr) = (col as i64 + dc, row as i64 + dr);
            if !scene.is_free_at(nc, nr) {
                continue;
            }
            let next = scene.index(nc as usize, nr as usize);
            let step = if dc != 0 && dr != 0 { diagonal } else { straight };
            let nd = d + step;
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Entry { dist: nd, cell: next });
            }
        }
    }
    dist
}

/// Shortest 8-connected free-cell path length between the cells containing `a` and `b`.
/// `None` when either end is occupied, out of bounds, or disconnected.
pub fn geodesic_distance(scene: &Scene, a: Point, b: Point) -> Option<f64> {
    let ca = scene.cell_of(a)?;
    let cb = scene.cell_of(b)?;
    if !scene.is_free(ca) || !scene.is_free(cb) {
        return None;
    }
    if ca == cb {
        return Some(0.0);
    }
    let d = distance_field(scene, ca)[cb];
    d.is_finite().then_some(d)
}

/// Shortest atomic-action sequence from `start` ending anywhere on the goal's cell.
///
/// Runs a backward breadth-first search from every heading at the goal cell over the
/// `(cell, heading)` state graph, then walks forward from the start choosing the first
/// action in `MoveForward, TurnLeft, TurnRight` order that makes progress.
pub fn plan_actions(
    scene: &Scene,
    kin: &Kinematics,
    start: &Pose,
    goal: Point,
) -> Result<Vec<AtomicAction>, PlanError> {
    let start_cell = scene.cell_of(start.position).ok_or(PlanError::Unreachable)?;
    let goal_cell = scene.cell_of(goal).ok_or(PlanError::Unreachable)?;
    if !scene.is_free(goal_cell) || !scene.is_free(start_cell) {
        return Err(PlanError::Unreachable);
    }
    if start_cell == goal_cell {
        return Ok(Vec::new());
    }
    let nh = kin.heading_count();
    let state = |cell: usize, h: usize| cell * nh + h;
    let mut to_goal = vec![u32::MAX; scene.len() * nh];
    let mut queue = VecDeque::new();
    for h in 0..nh {
        to_goal[state(goal_cell, h)] = 0;
        queue.push_back((goal_cell, h));
    }
    let start_h = kin.heading_index(start.heading);
    let start_state = state(start_cell, start_h);
    while let Some((cell, h)) = queue.pop_front() {
        if to_goal[start_state] != u32::MAX {
            break;
        }
        let d = to_goal[state(cell, h)] + 1;
        // Predecessors by turning: a left turn from h-1, a right turn from h+1.
        for ph in [(h + nh - 1) % nh, (h + 1) % nh] {
            let s = state(cell, ph);
            if to_goal[s] == u32::MAX {
                to_goal[s] = d;
                queue.push_back((cell, ph));
            }
        }
        // Predecessor by moving forward: the cell one step behind along heading h.
        let (col, row) = scene.col_row(cell);
        let (dc, dr) = kin.forward_offset(h);
        let (pc, pr) = (col as i64 - dc, row as i64 - dr);
        if scene.is_free_at(pc, pr) {
            let prev = scene.index(pc as usize, pr as usize);
            let s = state(prev, h);
            if to_goal[s] == u32::MAX {
                to_goal[s] = d;
                queue.push_back((prev, h));
            }
        }
    }
    if to_goal[start_state] == u32::MAX {
        return Err(PlanError::Unreachable);
    }

    let mut actions = Vec::with_capacity(to_goal[start_state] as usize);
    let (mut cell, mut h) = (start_cell, start_h);
    while cell != goal_cell {
        let here = to_goal[state(cell, h)];
        let mut advanced = false;
        for action in AtomicAction::ALL {
            let (nc, nhd) = match action {
                AtomicAction::MoveForward => {
                    let (col, row) = scene.col_row(cell);
                    let (dc, dr) = kin.forward_offset(h);
                    let (fc, fr) = (col as i64 + dc, row as i64 + dr);
                    if !scene.is_free_at(fc, fr) {
                        continue;
                    }
                    (scene.index(fc as usize, fr as usize), h)
                }
                AtomicAction::TurnLeft => (cell, (h + 1) % nh),
                AtomicAction::TurnRight => (cell, (h + nh - 1) % nh),
            };
            if to_goal[state(nc, nhd)] == here - 1 {
                actions.push(action);
                cell = nc;
                h = nhd;
                advanced = true;
                break;
            }
        }
        debug_assert!(advanced, "distance labels must admit a descent");
        if !advanced {
            return Err(PlanError::Unreachable);
        }
    }
    Ok(actions)
}
