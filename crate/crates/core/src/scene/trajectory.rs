use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    geodesic_distance, plan_actions, AtomicAction, Kinematics, Point, Pose, Scene,
    MAX_TRAJECTORY_STEPS, MIN_TRAJECTORY_STEPS,
};

/// A ground-truth start/target pair with its shortest atomic-action path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub start: Pose,
    pub target: Point,
    pub actions: Vec<AtomicAction>,
    pub step_count: usize,
    pub geodesic_length: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("scene needs at least two free cells")]
    TooSmall,
    #[error("no start/target pair with {MIN_TRAJECTORY_STEPS}..={MAX_TRAJECTORY_STEPS} steps after {0} attempts")]
    BudgetExhausted(usize),
}

/// Rejection-samples a navigable start/target pair whose shortest action sequence has
/// between 10 and 100 actions (turns included).
pub fn sample_trajectory<R: Rng + ?Sized>(
    scene: &Scene,
    kin: &Kinematics,
    rng: &mut R,
    max_attempts: usize,
) -> Result<TrajectorySpec, TrajectoryError> {
    let free: Vec<usize> = (0..scene.len()).filter(|&i| scene.is_free(i)).collect();
    if free.len() < 2 {
        return Err(TrajectoryError::TooSmall);
    }
    for _ in 0..max_attempts {
        let s = free[rng.random_range(0..free.len())];
        let t = free[rng.random_range(0..free.len())];
        let heading = kin.heading_degrees(rng.random_range(0..kin.heading_count()));
        if s == t {
            continue;
        }
        let start = Pose::new(scene.center_of(s), heading);
        let target = scene.center_of(t);
        let Ok(actions) = plan_actions(scene, kin, &start, target) else {
            continue;
        };
        if !(MIN_TRAJECTORY_STEPS..=MAX_TRAJECTORY_STEPS).contains(&actions.len()) {
            continue;
        }
        let Some(geodesic_length) = geodesic_distance(scene, start.position, target) else {
            continue;
        };
        return Ok(TrajectorySpec {
            start,
            target,
            step_count: actions.len(),
            actions,
            geodesic_length,
        });
    }
    Err(TrajectoryError::BudgetExhausted(max_attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tiny_room_exhausts_budget() {
        let s = Scene::open("tiny", 4, 4, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_trajectory(&s, &Kinematics::default(), &mut rng, 200),
            Err(TrajectoryError::BudgetExhausted(200))
        );
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let s = Scene::open("room", 64, 64, 0.25);
        let k = Kinematics::default();
        let a = sample_trajectory(&s, &k, &mut ChaCha8Rng::seed_from_u64(7), 100).unwrap();
        let b = sample_trajectory(&s, &k, &mut ChaCha8Rng::seed_from_u64(7), 100).unwrap();
        assert_eq!(a, b);
        assert!((10..=100).contains(&a.step_count));
    }
}
