#![allow(dead_code)]

use eqa_core::scene::{Cell, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random grid with independent obstacles at `density`. The top-left cell is always free.
pub fn random_scene(width: usize, height: usize, density: f64, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<Cell> = (0..width * height)
        .map(|_| if rng.random_bool(density) { Cell::Occupied } else { Cell::Free })
        .collect();
    cells[0] = Cell::Free;
    Scene::new("prop", width, height, 0.25, cells, vec![None; width * height]).unwrap()
}

pub fn free_cells(scene: &Scene) -> Vec<usize> {
    (0..scene.len()).filter(|&i| scene.is_free(i)).collect()
}

pub fn with_extra_walls(scene: &Scene, walls: &[usize]) -> Scene {
    let mut cells = scene.cells().to_vec();
    for &w in walls {
        cells[w] = Cell::Occupied;
    }
    Scene::new("prop", scene.width, scene.height, scene.resolution, cells, vec![None; scene.len()]).unwrap()
}
