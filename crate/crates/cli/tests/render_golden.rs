use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::Command;

use eqa_core::dataio::read_trace;
use eqa_core::render::{render, render_frames, Layer};
use eqa_core::scene::load_scene;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/render").join(name)
}

#[test]
fn layers_match_the_recorded_images() {
    let scene = load_scene(&std::fs::read_to_string(fixture("golden.scene")).unwrap()).unwrap();
    let (_, episode) = read_trace(BufReader::new(File::open(fixture("golden.trace.jsonl")).unwrap())).unwrap();
    for layer in Layer::ALL {
        let want = std::fs::read(fixture(&format!("golden.{layer}.ppm"))).unwrap();
        let got = render(&scene, Some(&episode), layer, 3).to_ppm();
        assert!(got == want, "{layer} layer differs from its golden image");
    }
}

#[test]
fn frames_step_through_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("frames");
    let status = Command::new(env!("CARGO_BIN_EXE_eqa"))
        .args(["render", "--frames", "--scale", "3", "--scene"])
        .arg(fixture("golden.scene"))
        .arg("--trace")
        .arg(fixture("golden.trace.jsonl"))
        .arg("--out")
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    let scene = load_scene(&std::fs::read_to_string(fixture("golden.scene")).unwrap()).unwrap();
    let (_, episode) = read_trace(BufReader::new(File::open(fixture("golden.trace.jsonl")).unwrap())).unwrap();
    let n = episode.records.len();
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), n + 1);
    assert_eq!(names[0], "frame_0000.ppm");
    let last = std::fs::read(dir.join(&names[n])).unwrap();
    assert_eq!(last, std::fs::read(fixture("golden.trajectory.ppm")).unwrap());
    let frames = render_frames(&scene, &episode, Layer::Trajectory, 3);
    for (k, name) in names.iter().enumerate() {
        assert_eq!(std::fs::read(dir.join(name)).unwrap(), frames[k].to_ppm(), "{name}");
    }
    assert_ne!(frames[0], frames[n]);
}
