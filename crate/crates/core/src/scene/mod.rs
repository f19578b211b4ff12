//! The immutable grid world: occupancy, ground-truth regions, agent kinematics.
//!
//! Coordinates: cell `(col, row)` covers `[col·res, (col+1)·res) × [row·res, (row+1)·res)`
//! in meters. Row 0 is the first map line of the scene file, so `y` grows downward.
//! Headings are degrees counter-clockwise from `+x` as seen on screen: 0° points east,
//! 90° points north (toward row 0).

mod paths;
mod trajectory;
mod visibility;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use paths::{distance_field, geodesic_distance, plan_actions, PlanError};
pub use trajectory::{sample_trajectory, TrajectoryError, TrajectorySpec};
pub use visibility::{segment_clear, visible_cells};

/// Minimum and maximum atomic-action count of a ground-truth trajectory.
pub const MIN_TRAJECTORY_STEPS: usize = 10;
pub const MAX_TRAJECTORY_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Occupied,
}

/// Planar point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point,
    /// Degrees in `[0, 360)`, a multiple of the turn increment.
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Point, heading: f64) -> Self {
        Self {
            position,
            heading: heading.rem_euclid(360.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtomicAction {
    MoveForward,
    TurnLeft,
    TurnRight,
}

impl AtomicAction {
    /// Planner tie-break order.
    pub const ALL: [AtomicAction; 3] = [
        AtomicAction::MoveForward,
        AtomicAction::TurnLeft,
        AtomicAction::TurnRight,
    ];
}

/// Action granularity. A forward move always advances exactly one cell, toward the
/// 8-neighbour nearest to the heading, so a scene's resolution is also its forward
/// step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub turn_degrees: u32,
}

impl Default for Kinematics {
    fn default() -> Self {
        Self { turn_degrees: 30 }
    }
}

impl Kinematics {
    pub fn heading_count(&self) -> usize {
        (360 / self.turn_degrees) as usize
    }

    pub fn heading_index(&self, heading: f64) -> usize {
        let idx = (heading.rem_euclid(360.0) / self.turn_degrees as f64).round() as usize;
        idx % self.heading_count()
    }

    pub fn heading_degrees(&self, index: usize) -> f64 {
        ((index % self.heading_count()) as u32 * self.turn_degrees) as f64
    }

    /// Cell displacement `(dcol, drow)` of a forward move for a heading index.
    pub fn forward_offset(&self, index: usize) -> (i64, i64) {
        let deg = (index as u32 * self.turn_degrees) % 360;
        // deg/45 never lands on .5 for integer degrees, so rounding is unambiguous.
        let sector = ((deg as f64 / 45.0).round() as usize) % 8;
        const OFFSETS: [(i64, i64); 8] = [
            (1, 0),
            (1, -1),
            (0, -1),
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        OFFSETS[sector]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

fn parse_err(line: usize, col: usize, message: impl Into<String>) -> SceneError {
    SceneError::Parse {
        line,
        col,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    cells: Vec<Cell>,
    region_truth: Vec<Option<String>>,
}

impl Scene {
    /// Builds a scene from raw parts, checking every invariant.
    pub fn new(
        name: impl Into<String>,
        width: usize,
        height: usize,
        resolution: f64,
        cells: Vec<Cell>,
        region_truth: Vec<Option<String>>,
    ) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::Invalid("empty grid".into()));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(SceneError::Invalid("resolution must be positive".into()));
        }
        if cells.len() != width * height || region_truth.len() != width * height {
            return Err(SceneError::Invalid("cell count does not match dimensions".into()));
        }
        if !cells.contains(&Cell::Free) {
            return Err(SceneError::Invalid("no free cells".into()));
        }
        for (i, label) in region_truth.iter().enumerate() {
            if label.is_some() && cells[i] == Cell::Occupied {
                return Err(SceneError::Invalid(format!(
                    "region label on occupied cell ({}, {})",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            width,
            height,
            resolution,
            cells,
            region_truth,
        })
    }

    /// Open room of the given size with no walls at all.
    pub fn open(name: &str, width: usize, height: usize, resolution: f64) -> Self {
        Self::new(
            name,
            width,
            height,
            resolution,
            vec![Cell::Free; width * height],
            vec![None; width * height],
        )
        .expect("open scene is valid")
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn in_bounds(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    pub fn cell(&self, index: usize) -> Cell {
        self.cells[index]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_free(&self, index: usize) -> bool {
        self.cells[index] == Cell::Free
    }

    pub fn is_free_at(&self, col: i64, row: i64) -> bool {
        self.in_bounds(col, row) && self.cells[self.index(col as usize, row as usize)] == Cell::Free
    }

    pub fn region_at(&self, index: usize) -> Option<&str> {
        self.region_truth[index].as_deref()
    }

    pub fn region_truth(&self) -> &[Option<String>] {
        &self.region_truth
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Cell::Free).count()
    }

    pub fn free_area_m2(&self) -> f64 {
        self.free_count() as f64 * self.resolution * self.resolution
    }

    /// Cell containing a point, or `None` outside the grid.
    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let col = (p.x / self.resolution).floor();
        let row = (p.y / self.resolution).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some(self.index(col as usize, row as usize))
    }

    pub fn center_of(&self, index: usize) -> Point {
        let (col, row) = self.col_row(index);
        Point::new(
            (col as f64 + 0.5) * self.resolution,
            (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_valid_pose(&self, pose: &Pose) -> bool {
        self.cell_of(pose.position).is_some_and(|i| self.is_free(i))
            && (0.0..360.0).contains(&pose.heading)
    }

    /// Region type names that appear in the ground truth, sorted.
    pub fn region_types(&self) -> Vec<String> {
        let mut types: Vec<String> = self.region_truth.iter().flatten().cloned().collect();
        types.sort();
        types.dedup();
        types
    }

    /// Serializes back to the text scene format.
    pub fn to_text(&self) -> String {
        let mut out = format!("name: {}\nresolution: {}\n", self.name, self.resolution);
        let types = self.region_types();
        let letters: BTreeMap<&str, char> = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), (b'A' + i as u8) as char))
            .collect();
        if !types.is_empty() {
            let legend: Vec<String> = types
                .iter()
                .map(|t| format!("{}={}", letters[t.as_str()], t))
                .collect();
            out.push_str(&format!("legend: {}\n", legend.join(",")));
        }
        out.push_str("map:\n");
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(match self.cells[self.index(col, row)] {
                    Cell::Free => '.',
                    Cell::Occupied => '#',
                });
            }
            out.push('\n');
        }
        if !types.is_empty() {
            out.push_str("regions:\n");
            for row in 0..self.height {
                for col in 0..self.width {
                    out.push(match &self.region_truth[self.index(col, row)] {
                        Some(t) => letters[t.as_str()],
                        None => '.',
                    });
                }
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}x{} @ {} m)",
            self.name, self.width, self.height, self.resolution
        )
    }
}

/// Parses the text scene format (see `docs/FORMATS.md`).
pub fn load_scene(text: &str) -> Result<Scene, SceneError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut name: Option<String> = None;
    let mut resolution: Option<f64> = None;
    let mut legend: BTreeMap<char, String> = BTreeMap::new();
    let mut map_rows: Vec<(usize, &str)> = Vec::new();
    let mut region_rows: Vec<(usize, &str)> = Vec::new();

    enum Section {
        Header,
        Map,
        Regions,
    }
    let mut section = Section::Header;

    for (i, raw) in lines.iter().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match line.trim() {
            "map:" => {
                if !map_rows.is_empty() {
                    return Err(parse_err(line_no, 1, "duplicate map section"));
                }
                section = Section::Map;
                continue;
            }
            "regions:" => {
                if !region_rows.is_empty() {
                    return Err(parse_err(line_no, 1, "duplicate regions section"));
                }
                section = Section::Regions;
                continue;
            }
            _ => {}
        }
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim();
            let value = value.trim();
            match key {
                "name" => {
                    if value.is_empty() {
                        return Err(parse_err(line_no, 1, "empty scene name"));
                    }
                    name = Some(value.to_string());
                    continue;
                }
                "resolution" => {
                    let r: f64 = value.parse().map_err(|_| {
                        parse_err(line_no, key.len() + 2, format!("bad resolution {value:?}"))
                    })?;
                    if !(r.is_finite() && r > 0.0) {
                        return Err(parse_err(line_no, key.len() + 2, "resolution must be positive"));
                    }
                    resolution = Some(r);
                    continue;
                }
                "legend" => {
                    for entry in value.split(',') {
                        let (letter, region) = entry.split_once('=').ok_or_else(|| {
                            parse_err(line_no, 1, format!("bad legend entry {entry:?}"))
                        })?;
                        let letter = letter.trim();
                        let mut chars = letter.chars();
                        let c = match (chars.next(), chars.next()) {
                            (Some(c), None) if c.is_ascii_uppercase() => c,
                            _ => {
                                return Err(parse_err(
                                    line_no,
                                    1,
                                    format!("legend key {letter:?} is not a letter A-Z"),
                                ))
                            }
                        };
                        let region = region.trim();
                        if region.is_empty() {
                            return Err(parse_err(line_no, 1, "empty legend region name"));
                        }
                        legend.insert(c, region.to_string());
                    }
                    continue;
                }
                _ if matches!(section, Section::Header) => {
                    return Err(parse_err(line_no, 1, format!("unknown header key {key:?}")));
                }
                _ => {}
            }
        }
        match section {
            Section::Header => {
                return Err(parse_err(line_no, 1, "expected header line or 'map:'"));
            }
            Section::Map => map_rows.push((line_no, line)),
            Section::Regions => region_rows.push((line_no, line)),
        }
    }

    let name = name.ok_or_else(|| parse_err(1, 1, "missing 'name:' header"))?;
    let resolution = resolution.ok_or_else(|| parse_err(1, 1, "missing 'resolution:' header"))?;
    if map_rows.is_empty() {
        return Err(parse_err(lines.len().max(1), 1, "missing map rows"));
    }
    let width = map_rows[0].1.chars().count();
    let height = map_rows.len();
    let mut cells = Vec::with_capacity(width * height);
    for (line_no, row) in &map_rows {
        if row.chars().count() != width {
            return Err(parse_err(
                *line_no,
                row.chars().count().min(width) + 1,
                format!("ragged row: expected {width} glyphs, found {}", row.chars().count()),
            ));
        }
        for (c, glyph) in row.chars().enumerate() {
            cells.push(match glyph {
                '.' => Cell::Free,
                '#' => Cell::Occupied,
                other => {
                    return Err(parse_err(*line_no, c + 1, format!("unknown cell glyph {other:?}")))
                }
            });
        }
    }
    if !cells.contains(&Cell::Free) {
        return Err(parse_err(map_rows[0].0, 1, "map has zero free cells"));
    }

    let mut region_truth = vec![None; width * height];
    if !region_rows.is_empty() {
        if region_rows.len() != height {
            return Err(parse_err(
                region_rows.last().map(|r| r.0).unwrap_or(1),
                1,
                format!("regions section has {} rows, map has {height}", region_rows.len()),
            ));
        }
        for (r, (line_no, row)) in region_rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(parse_err(
                    *line_no,
                    row.chars().count().min(width) + 1,
                    format!("ragged region row: expected {width} glyphs, found {}", row.chars().count()),
                ));
            }
            for (c, glyph) in row.chars().enumerate() {
                if glyph == '.' {
                    continue;
                }
                let region = legend.get(&glyph).ok_or_else(|| {
                    parse_err(*line_no, c + 1, format!("region glyph {glyph:?} not in legend"))
                })?;
                let idx = r * width + c;
                if cells[idx] == Cell::Occupied {
                    return Err(parse_err(*line_no, c + 1, "region label on occupied cell"));
                }
                region_truth[idx] = Some(region.clone());
            }
        }
    }

    Scene::new(name, width, height, resolution, cells, region_truth)
}

/// Executes one atomic action. Blocked forward moves leave the pose unchanged.
pub fn apply_action(scene: &Scene, kin: &Kinematics, pose: &Pose, action: AtomicAction) -> Pose {
    let idx = kin.heading_index(pose.heading);
    match action {
        AtomicAction::TurnLeft => {
            Pose::new(pose.position, kin.heading_degrees((idx + 1) % kin.heading_count()))
        }
        AtomicAction::TurnRight => Pose::new(
            pose.position,
            kin.heading_degrees((idx + kin.heading_count() - 1) % kin.heading_count()),
        ),
        AtomicAction::MoveForward => {
            let Some(cell) = scene.cell_of(pose.position) else {
                return *pose;
            };
            let (col, row) = scene.col_row(cell);
            let (dc, dr) = kin.forward_offset(idx);
            let (nc, nr) = (col as i64 + dc, row as i64 + dr);
            if !scene.is_free_at(nc, nr) {
                return *pose;
            }
            let next = scene.index(nc as usize, nr as usize);
            Pose::new(scene.center_of(next), pose.heading)
        }
    }
}
