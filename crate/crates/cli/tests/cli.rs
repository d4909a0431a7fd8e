use std::path::Path;
use std::process::{Command, Output};

fn plot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plot"))
        .args(args)
        .env_remove("PLOT_LOG")
        .output()
        .expect("spawn plot")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, scene: &str) {
    let o = plot(&["synth", scene, "-o", s(dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn label_then_eval_against_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = tmp.path().join("labels");
    synth(&scene, "static_car");
    let o = plot(&["label", s(&scene), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), 1);

    let report = tmp.path().join("report.json");
    let o = plot(&[
        "eval",
        "--pred",
        s(&out),
        "--gt",
        s(&scene.join("truth")),
        "-o",
        s(&report),
        "--mod-pi",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Car"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["mod_pi"], true);
}

#[test]
fn eval_of_truth_against_itself_has_zero_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "crossing_pair");
    let truth = scene.join("truth");
    let report = tmp.path().join("report.json");
    let o = plot(&["eval", "--pred", s(&truth), "--gt", s(&truth), "-o", s(&report)]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    for range in ["near", "mid", "far"] {
        for metric in ["ate", "ase", "aoe"] {
            if let Some(v) = json["classes"]["Car"][range][metric].as_f64() {
                assert!(v.abs() < 1e-9, "{range} {metric} = {v}");
            }
        }
    }
}

#[test]
fn scene_without_objects_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("empty.toml");
    std::fs::write(&spec, "seed = 3\nframes = 3\n").unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, s(&spec));
    let o = plot(&["label", s(&scene), "-o", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_intrinsics_exits_two_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "static_car");
    std::fs::remove_file(scene.join("intrinsics.json")).unwrap();
    let o = plot(&["label", s(&scene), "-o", s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("intrinsics.json"));
}

#[test]
fn unknown_scene_and_bad_config_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = plot(&["synth", "no_such_scene", "-o", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));

    let scene = tmp.path().join("scene");
    synth(&scene, "static_car");
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, "window = 0\n").unwrap();
    let o = plot(&["label", s(&scene), "-o", s(&tmp.path().join("out")), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_frame_and_all_frames_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "static_car");
    let single = tmp.path().join("single");
    assert!(plot(&["label", s(&scene), "-o", s(&single), "--single-frame"]).status.success());
    assert_eq!(std::fs::read_dir(&single).unwrap().count(), 1);
    let all = tmp.path().join("all");
    assert!(plot(&["label", s(&scene), "-o", s(&all), "--all-frames"]).status.success());
    assert_eq!(std::fs::read_dir(&all).unwrap().count(), 5);
}

#[test]
fn viz_writes_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "crossing_pair");
    let svg = tmp.path().join("bev.svg");
    let labels = scene.join("truth").join("000000.txt");
    let o = plot(&["viz", s(&labels), "--truth", s(&labels), "-o", s(&svg)]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}
