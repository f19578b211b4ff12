use std::collections::BTreeSet;

use super::{Pose, Scene};

/// True when the straight segment between the centers of `from` and `to` crosses no
/// occupied cell strictly before `to`. The walk is an exact integer grid traversal:
/// segments passing precisely through a lattice corner step diagonally.
pub fn segment_clear(scene: &Scene, from: usize, to: usize) -> bool {
    let (c0, r0) = scene.col_row(from);
    let (c1, r1) = scene.col_row(to);
    // Half-cell units keep every center on integer coordinates.
    let (x0, y0) = (2 * c0 as i64 + 1, 2 * r0 as i64 + 1);
    let dx = 2 * (c1 as i64 - c0 as i64);
    let dy = 2 * (r1 as i64 - r0 as i64);
    let (sx, sy) = (dx.signum(), dy.signum());
    let (adx, ady) = (dx.abs(), dy.abs());

    let (mut col, mut row) = (c0 as i64, r0 as i64);
    let (tc, tr) = (c1 as i64, r1 as i64);
    while (col, row) != (tc, tr) {
        let bx = if sx > 0 { 2 * (col + 1) } else { 2 * col };
        let by = if sy > 0 { 2 * (row + 1) } else { 2 * row };
        // Compare crossing parameters t_x = |bx-x0|/adx and t_y = |by-y0|/ady.
        let step_x = sx != 0;
        let step_y = sy != 0;
        let ord = match (step_x, step_y) {
            (true, false) => std::cmp::Ordering::Less,
            (false, true) => std::cmp::Ordering::Greater,
            _ => ((bx - x0).abs() * ady).cmp(&((by - y0).abs() * adx)),
        };
        match ord {
            std::cmp::Ordering::Less => col += sx,
            std::cmp::Ordering::Greater => row += sy,
            std::cmp::Ordering::Equal => {
                col += sx;
                row += sy;
            }
        }
        if (col, row) == (tc, tr) {
            return true;
        }
        if !scene.is_free_at(col, row) {
            return false;
        }
    }
    true
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Cells observed from `pose`: every cell whose center lies within `range_m` and inside
/// the field of view, with a clear sight line from the agent's cell. The first occupied
/// cell on a line is seen; anything behind it is not. The agent's own cell is always
/// included.
pub fn visible_cells(scene: &Scene, pose: &Pose, fov_degrees: f64, range_m: f64) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let Some(origin) = scene.cell_of(pose.position) else {
        return seen;
    };
    seen.insert(origin);
    if !(fov_degrees > 0.0 && range_m > 0.0) {
        return seen;
    }
    let full_circle = fov_degrees >= 360.0;
    let half_fov = fov_degrees / 2.0;
    let (oc, or) = scene.col_row(origin);
    let reach = (range_m / scene.resolution).floor() as i64;
    let range_cells_sq = (range_m / scene.resolution).powi(2);

    for row in (or as i64 - reach).max(0)..=(or as i64 + reach).min(scene.height as i64 - 1) {
        for col in (oc as i64 - reach).max(0)..=(oc as i64 + reach).min(scene.width as i64 - 1) {
            let dc = (col - oc as i64) as f64;
            let dr = (row - or as i64) as f64;
            if (dc == 0.0 && dr == 0.0) || dc * dc + dr * dr > range_cells_sq + 1e-9 {
                continue;
            }
            if !full_circle {
                let bearing = (-dr).atan2(dc).to_degrees();
                if angle_diff(bearing, pose.heading) > half_fov + 1e-9 {
                    continue;
                }
            }
            let idx = scene.index(col as usize, row as usize);
            if segment_clear(scene, origin, idx) {
                seen.insert(idx);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{load_scene, Point};

    #[test]
    fn open_room_full_circle_sees_everything() {
        let s = Scene::open("room", 21, 21, 0.25);
        let p = Pose::new(s.center_of(s.index(10, 10)), 0.0);
        let v = visible_cells(&s, &p, 360.0, 100.0);
        assert_eq!(v.len(), 21 * 21);
    }

    #[test]
    fn wall_hides_what_is_behind() {
        let s = load_scene("name: w\nresolution: 1\nmap:\n.....\n..#..\n.....\n").unwrap();
        let p = Pose::new(s.center_of(s.index(1, 1)), 0.0);
        let v = visible_cells(&s, &p, 90.0, 10.0);
        assert!(v.contains(&s.index(2, 1)));
        assert!(!v.contains(&s.index(3, 1)));
        assert!(!v.contains(&s.index(4, 1)));
        // Outside the 90 degree cone.
        assert!(!v.contains(&s.index(0, 1)));
    }

    #[test]
    fn degenerate_fov_is_own_cell_only() {
        let s = Scene::open("room", 5, 5, 1.0);
        let p = Pose::new(Point::new(2.5, 2.5), 0.0);
        let v = visible_cells(&s, &p, 0.0, 3.0);
        assert_eq!(v.into_iter().collect::<Vec<_>>(), vec![s.index(2, 2)]);
    }

    #[test]
    fn corner_crossing_passes_between_diagonal_walls() {
        let s = load_scene("name: d\nresolution: 1\nmap:\n.#.\n#..\n...\n").unwrap();
        assert!(segment_clear(&s, s.index(0, 0), s.index(2, 2)));
        assert!(segment_clear(&s, s.index(0, 0), s.index(1, 1)));
    }
}
