//! Procedural houses and question sets for demos and the strategy comparison suite.
//!
//! A house is a walled rectangle cut into rooms by recursive binary splits. Every split
//! wall gets one two-cell doorway, so all rooms are connected. Each room is labeled
//! with a region type; questions ask about an object placed in one room.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{QAItem, QuestionType};
use crate::scene::{geodesic_distance, load_scene, plan_actions, Kinematics, Pose, Scene};
use crate::scene::{MAX_TRAJECTORY_STEPS, MIN_TRAJECTORY_STEPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HouseParams {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Smallest room side, in cells, interior only.
    pub min_room: usize,
}

impl Default for HouseParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            resolution: 0.25,
            min_room: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub region_type: String,
    /// Interior cells, row-major order.
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct House {
    pub scene: Scene,
    pub rooms: Vec<Room>,
}

const ROOM_TYPES: [&str; 8] = [
    "bathroom",
    "bedroom",
    "kitchen",
    "living room",
    "dining room",
    "office",
    "laundry room",
    "hallway",
];

struct ObjectInfo {
    name: &'static str,
    plural: &'static str,
    use_for: &'static str,
}

fn objects(room: &str) -> &'static [ObjectInfo] {
    macro_rules! o {
        ($n:expr, $p:expr, $u:expr) => {
            ObjectInfo {
                name: $n,
                plural: $p,
                use_for: $u,
            }
        };
    }
    match room {
        "bathroom" => &[o!("towel", "towels", "drying"), o!("toothbrush", "toothbrushes", "brushing")],
        "bedroom" => &[o!("pillow", "pillows", "sleeping"), o!("wardrobe", "wardrobes", "storing")],
        "kitchen" => &[o!("kettle", "kettles", "boiling"), o!("microwave", "microwaves", "heating")],
        "living room" => &[o!("sofa", "sofas", "sitting"), o!("television", "televisions", "watching")],
        "dining room" => &[o!("chairs", "chairs", "sitting")],
        "office" => &[o!("desk", "desks", "working"), o!("printer", "printers", "printing")],
        "laundry room" => &[o!("washer", "washers", "washing"), o!("detergent", "detergents", "cleaning")],
        _ => &[o!("umbrella", "umbrellas", "staying dry"), o!("coat", "coats", "warmth")],
    }
}

const COLORS: [&str; 6] = ["red", "blue", "green", "white", "black", "yellow"];
const COUNTS: [&str; 3] = ["two", "three", "four"];
const STATES: [&str; 2] = ["open", "closed"];

/// Rectangle of interior cells, inclusive bounds.
#[derive(Debug, Clone, Copy)]
struct Rect {
    c0: usize,
    r0: usize,
    c1: usize,
    r1: usize,
}

struct Split {
    vertical: bool,
    at: usize,
    from: usize,
    to: usize,
}

fn split<R: Rng>(rect: Rect, min: usize, walls: &mut Vec<Split>, leaves: &mut Vec<Rect>, rng: &mut R) {
    let w = rect.c1 - rect.c0 + 1;
    let h = rect.r1 - rect.r0 + 1;
    let can_v = w >= 2 * min + 1;
    let can_h = h >= 2 * min + 1;
    if !can_v && !can_h {
        leaves.push(rect);
        return;
    }
    let vertical = match (can_v, can_h) {
        (true, true) => {
            if w == h {
                rng.random_bool(0.5)
            } else {
                w > h
            }
        }
        (v, _) => v,
    };
    if vertical {
        let at = rng.random_range(rect.c0 + min..=rect.c1 - min);
        walls.push(Split {
            vertical,
            at,
            from: rect.r0,
            to: rect.r1,
        });
        split(Rect { c1: at - 1, ..rect }, min, walls, leaves, rng);
        split(Rect { c0: at + 1, ..rect }, min, walls, leaves, rng);
    } else {
        let at = rng.random_range(rect.r0 + min..=rect.r1 - min);
        walls.push(Split {
            vertical,
            at,
            from: rect.c0,
            to: rect.c1,
        });
        split(Rect { r1: at - 1, ..rect }, min, walls, leaves, rng);
        split(Rect { r0: at + 1, ..rect }, min, walls, leaves, rng);
    }
}

/// Builds a house deterministically from `seed`.
pub fn generate_house(name: &str, seed: u64, params: &HouseParams) -> House {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width, params.height);
    assert!(w >= params.min_room + 2 && h >= params.min_room + 2, "house too small");
    let mut free = vec![false; w * h];
    let mut walls = Vec::new();
    let mut leaves = Vec::new();
    split(
        Rect {
            c0: 1,
            r0: 1,
            c1: w - 2,
            r1: h - 2,
        },
        params.min_room,
        &mut walls,
        &mut leaves,
        &mut rng,
    );
    for rect in &leaves {
        for r in rect.r0..=rect.r1 {
            for c in rect.c0..=rect.c1 {
                free[r * w + c] = true;
            }
        }
    }
    // Doors go in after every wall exists so later walls cannot block them.
    for s in &walls {
        let cell = |along: usize, off: i64| -> usize {
            if s.vertical {
                along * w + (s.at as i64 + off) as usize
            } else {
                (s.at as i64 + off) as usize * w + along
            }
        };
        let spots: Vec<usize> = (s.from..s.to)
            .filter(|&a| (a..a + 2).all(|b| free[cell(b, -1)] && free[cell(b, 1)]))
            .collect();
        let a = *spots.choose(&mut rng).expect("split wall borders two rooms");
        for b in a..a + 2 {
            free[cell(b, 0)] = true;
        }
    }
    let mut types: Vec<&str> = ROOM_TYPES.to_vec();
    types.shuffle(&mut rng);
    let mut rooms = Vec::new();
    let mut labels: Vec<Option<usize>> = vec![None; w * h];
    for (i, rect) in leaves.iter().enumerate() {
        let t = types[i % types.len()];
        let mut cells = Vec::new();
        for r in rect.r0..=rect.r1 {
            for c in rect.c0..=rect.c1 {
                cells.push(r * w + c);
                labels[r * w + c] = Some(ROOM_TYPES.iter().position(|x| *x == t).expect("known"));
            }
        }
        rooms.push(Room {
            region_type: t.to_string(),
            cells,
        });
    }
    let mut text = format!("name: {name}\nresolution: {}\nlegend: ", params.resolution);
    let legend: Vec<String> = ROOM_TYPES
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}={t}", (b'A' + i as u8) as char))
        .collect();
    text.push_str(&legend.join(","));
    text.push_str("\nmap:\n");
    for r in 0..h {
        text.extend((0..w).map(|c| if free[r * w + c] { '.' } else { '#' }));
        text.push('\n');
    }
    text.push_str("regions:\n");
    for r in 0..h {
        text.extend((0..w).map(|c| match labels[r * w + c] {
            Some(i) => (b'A' + i as u8) as char,
            None => '.',
        }));
        text.push('\n');
    }
    let scene = load_scene(&text).expect("generated scene is valid");
    House { scene, rooms }
}

fn question_for<R: Rng>(qt: QuestionType, room: &str, obj: &ObjectInfo, rng: &mut R) -> (String, String) {
    match qt {
        QuestionType::Attribute => (
            format!("What color is the {} in the {room}?", obj.name),
            COLORS.choose(rng).expect("nonempty").to_string(),
        ),
        QuestionType::Existence => (format!("Is there a {} in the {room}?", obj.name), "yes".into()),
        QuestionType::Counting => (
            format!("How many {} are in the {room}?", obj.plural),
            COUNTS.choose(rng).expect("nonempty").to_string(),
        ),
        QuestionType::Location => (format!("Where is the {}?", obj.name), format!("in the {room}")),
        QuestionType::State => (
            format!("Is the {} in the {room} open or closed?", obj.name),
            STATES.choose(rng).expect("nonempty").to_string(),
        ),
        QuestionType::Knowledge => (
            format!("What is the {} in the {room} used for?", obj.name),
            obj.use_for.to_string(),
        ),
        QuestionType::Object => {
            let other = COLORS.choose(rng).expect("nonempty");
            (
                format!("What object is next to the {} in the {room}?", obj.name),
                format!("{other} box"),
            )
        }
    }
}

/// Generates up to `count` questions whose target sits in a room other than the start
/// room and whose shortest action sequence has 10 to 100 steps.
pub fn generate_qa(house: &House, seed: u64, count: usize) -> Vec<QAItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0a0a);
    let scene = &house.scene;
    let kin = Kinematics::default();
    let room_of: BTreeMap<usize, usize> = house
        .rooms
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.cells.iter().map(move |&c| (c, i)))
        .collect();
    let mut items = Vec::new();
    let mut attempts = 0;
    while items.len() < count && attempts < count * 200 {
        attempts += 1;
        let ti = rng.random_range(0..house.rooms.len());
        let target_room = &house.rooms[ti];
        let target = *target_room.cells.choose(&mut rng).expect("room nonempty");
        let start = *house.rooms[rng.random_range(0..house.rooms.len())]
            .cells
            .choose(&mut rng)
            .expect("room nonempty");
        if room_of.get(&start) == Some(&ti) {
            continue;
        }
        let heading = (rng.random_range(0..kin.heading_count()) as u32 * kin.turn_degrees) as f64;
        let start_pose = Pose::new(scene.center_of(start), heading);
        let Ok(actions) = plan_actions(scene, &kin, &start_pose, scene.center_of(target)) else {
            continue;
        };
        if !(MIN_TRAJECTORY_STEPS..=MAX_TRAJECTORY_STEPS).contains(&actions.len()) {
            continue;
        }
        let geodesic = geodesic_distance(scene, scene.center_of(start), scene.center_of(target))
            .expect("reachable");
        let qt = QuestionType::ALL[items.len() % QuestionType::ALL.len()];
        let obj = objects(&target_room.region_type)
            .choose(&mut rng)
            .expect("nonempty");
        let (question, gold) = question_for(qt, &target_room.region_type, obj, &mut rng);
        items.push(QAItem {
            id: format!("{}-q{:02}", scene.name, items.len()),
            question,
            gold_answer: gold,
            question_type: qt,
            scene: scene.name.clone(),
            start: start_pose,
            target: scene.center_of(target),
            gt_step_count: actions.len(),
            gt_geodesic_m: geodesic,
            extra: BTreeMap::new(),
        });
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Rulebook;
    use crate::scene::distance_field;

    #[test]
    fn houses_are_connected_and_labeled() {
        for seed in 0..10 {
            let house = generate_house("h", seed, &HouseParams::default());
            let s = &house.scene;
            let first = (0..s.len()).find(|&i| s.is_free(i)).unwrap();
            let d = distance_field(s, first);
            assert!((0..s.len()).filter(|&i| s.is_free(i)).all(|i| d[i].is_finite()));
            assert!(house.rooms.len() >= 4, "seed {seed}: {} rooms", house.rooms.len());
            for room in &house.rooms {
                assert!(room.cells.iter().all(|&c| s.region_at(c) == Some(room.region_type.as_str())));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_house("h", 3, &HouseParams::default());
        let b = generate_house("h", 3, &HouseParams::default());
        assert_eq!(a.scene.to_text(), b.scene.to_text());
        assert_eq!(generate_qa(&a, 1, 5), generate_qa(&b, 1, 5));
    }

    #[test]
    fn questions_point_at_their_room() {
        let rb = Rulebook::default();
        let house = generate_house("h", 11, &HouseParams::default());
        let items = generate_qa(&house, 2, 14);
        assert_eq!(items.len(), 14);
        for item in &items {
            let t = house.scene.cell_of(item.target).unwrap();
            let room = house.scene.region_at(t).unwrap();
            assert_eq!(rb.priorities(&item.question).first().map(String::as_str), Some(room), "{}", item.question);
            assert!((10..=100).contains(&item.gt_step_count));
        }
    }
}
