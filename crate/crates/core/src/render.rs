//! Raster views of a scene and an episode's final maps.

use std::fmt;
use std::str::FromStr;

use crate::controller::EpisodeResult;
use crate::scene::{Cell, Point, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Occupancy,
    Semantic,
    Regions,
    Masked,
    Trajectory,
}

impl Layer {
    pub const ALL: [Layer; 5] = [
        Layer::Occupancy,
        Layer::Semantic,
        Layer::Regions,
        Layer::Masked,
        Layer::Trajectory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Occupancy => "occupancy",
            Layer::Semantic => "semantic",
            Layer::Regions => "regions",
            Layer::Masked => "masked",
            Layer::Trajectory => "trajectory",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Layer::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown layer {s:?}; expected one of occupancy, semantic, regions, masked, trajectory"))
    }
}

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    fn put(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn fill_cell(&mut self, col: usize, row: usize, scale: usize, rgb: [u8; 3]) {
        for y in row * scale..(row + 1) * scale {
            for x in col * scale..(col + 1) * scale {
                self.put(x as i64, y as i64, rgb);
            }
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), rgb: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, rgb);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn marker(&mut self, (cx, cy): (i64, i64), half: i64, rgb: [u8; 3]) {
        for y in cy - half..=cy + half {
            for x in cx - half..=cx + half {
                self.put(x, y, rgb);
            }
        }
    }

    /// Binary portable pixmap (`P6`).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

const WALL: [u8; 3] = [40, 40, 40];
const FREE: [u8; 3] = [255, 255, 255];
const UNSEEN: [u8; 3] = [200, 200, 200];
const PATH: [u8; 3] = [0, 90, 255];
const START: [u8; 3] = [0, 170, 0];
const END: [u8; 3] = [220, 0, 0];

/// Black through red and yellow to white.
pub fn heat(v: f64) -> [u8; 3] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let ch = |t: f64| (t.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * v), ch(3.0 * v - 1.0), ch(3.0 * v - 2.0)]
}

/// Fixed palette indexed by region id.
pub fn region_color(id: u32) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 10] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 190],
    ];
    PALETTE[(id as usize + PALETTE.len() - 1) % PALETTE.len()]
}

/// Renders `layer` with each cell drawn as a `scale`×`scale` block. Without an episode
/// only the scene's occupancy is drawn.
pub fn render(scene: &Scene, episode: Option<&EpisodeResult>, layer: Layer, scale: usize) -> Image {
    let scale = scale.max(1);
    let mut img = Image::new(scene.width * scale, scene.height * scale);
    let snap = episode.map(|e| &e.snapshot);
    let explored: Option<Vec<char>> = snap.map(|s| s.explored.chars().collect());
    for i in 0..scene.len() {
        let (c, r) = scene.col_row(i);
        let base = match (scene.cell(i), &explored) {
            (Cell::Occupied, _) => WALL,
            (Cell::Free, Some(e)) if layer == Layer::Occupancy && e.get(i) == Some(&'?') => UNSEEN,
            (Cell::Free, _) => FREE,
        };
        let rgb = match (layer, snap) {
            (_, _) if base == WALL => WALL,
            (Layer::Semantic, Some(s)) => heat(s.semantic.get(i).copied().unwrap_or(0.0)),
            (Layer::Masked, Some(s)) => heat(s.masked.as_ref().and_then(|m| m.get(i).copied()).unwrap_or(0.0)),
            (Layer::Masked, None) | (Layer::Semantic, None) => heat(0.0),
            (Layer::Regions, Some(s)) => match s.regions.get(i).copied().unwrap_or(0) {
                0 => base,
                id => region_color(id),
            },
            _ => base,
        };
        img.fill_cell(c, r, scale, rgb);
    }
    if let (Layer::Trajectory, Some(e)) = (layer, episode) {
        let px = |p: Point| -> (i64, i64) {
            (
                (p.x / scene.resolution * scale as f64).floor() as i64,
                (p.y / scene.resolution * scale as f64).floor() as i64,
            )
        };
        let mut points: Vec<(i64, i64)> = Vec::new();
        if let Some(first) = e.records.first() {
            points.push(px(first.start.position));
        }
        for r in &e.records {
            points.extend(r.path.iter().map(|&c| px(scene.center_of(c))));
        }
        for w in points.windows(2) {
            img.line(w[0], w[1], PATH);
        }
        let half = (scale as i64 / 3).max(1);
        if let Some(&s) = points.first() {
            img.marker(s, half, START);
        }
        if let Some(&t) = points.last() {
            img.marker(t, half, END);
        }
    }
    img
}

/// One image per prefix of the episode's steps, from none to all of them, for
/// stepping through a trajectory.
pub fn render_frames(scene: &Scene, episode: &EpisodeResult, layer: Layer, scale: usize) -> Vec<Image> {
    (0..=episode.records.len())
        .map(|k| {
            let prefix = EpisodeResult {
                records: episode.records[..k].to_vec(),
                ..episode.clone()
            };
            render(scene, Some(&prefix), layer, scale)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_ramp_endpoints() {
        assert_eq!(heat(0.0), [0, 0, 0]);
        assert_eq!(heat(1.0), [255, 255, 255]);
        assert_eq!(heat(f64::NAN), [0, 0, 0]);
    }

    #[test]
    fn scene_only_image() {
        let s = crate::scene::load_scene("name: t\nresolution: 0.5\nmap:\n#.\n..\n").unwrap();
        let img = render(&s, None, Layer::Trajectory, 2);
        assert_eq!((img.width, img.height), (4, 4));
        assert_eq!(&img.pixels[0..3], &WALL);
        assert_eq!(&img.pixels[6..9], &FREE);
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n4 4\n255\n"));
        assert_eq!(ppm.len(), 11 + 48);
        let masked = render(&s, None, Layer::Masked, 1);
        assert_eq!(&masked.pixels[3..6], &heat(0.0));
    }

    #[test]
    fn layer_names() {
        for l in Layer::ALL {
            assert_eq!(l.name().parse::<Layer>(), Ok(l));
        }
        assert!("video".parse::<Layer>().is_err());
    }
}
