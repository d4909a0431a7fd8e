use plot_core::ingest::{load_scene, read_kitti_labels, read_label_dir, write_scene};
use plot_core::oracle::{emit_scene, generate, read_truth, SceneSpec, BUNDLED_SCENES};

#[test]
fn bundled_scenes_survive_write_and_load() {
    let tmp = tempfile::tempdir().unwrap();
    for name in BUNDLED_SCENES {
        let scene = generate(&SceneSpec::bundled(name).unwrap()).unwrap();
        let dir = tmp.path().join(name);
        write_scene(&scene.bundle, &dir).unwrap();
        assert_eq!(load_scene(&dir).unwrap(), scene.bundle, "{name}");
    }
}

#[test]
fn emitted_scene_carries_truth_and_label_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = generate(&SceneSpec::bundled("crossing_pair").unwrap()).unwrap();
    emit_scene(&scene, tmp.path()).unwrap();
    assert_eq!(load_scene(tmp.path()).unwrap(), scene.bundle);
    assert_eq!(read_truth(tmp.path()).unwrap(), scene.truth);
    let labels = read_label_dir(&tmp.path().join("truth")).unwrap();
    assert_eq!(labels.len(), scene.spec.frames);
    for (frame, list) in &labels {
        let truth = &scene.truth.frames[*frame].objects;
        assert!(list.len() <= truth.len());
        for l in list {
            assert!(truth.iter().any(|o| (o.box3d.center - l.box3d.center).norm() < 0.01));
        }
    }
}

#[test]
fn missing_intrinsics_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = generate(&SceneSpec::bundled("static_car").unwrap()).unwrap();
    write_scene(&scene.bundle, tmp.path()).unwrap();
    std::fs::remove_file(tmp.path().join("intrinsics.json")).unwrap();
    let err = load_scene(tmp.path()).unwrap_err().to_string();
    assert!(err.contains("intrinsics.json"), "{err}");
}

#[test]
fn malformed_label_line_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("000000.txt");
    std::fs::write(&path, "Car 0.00 0 1.0 2.0\n").unwrap();
    assert!(read_kitti_labels(&path).is_err());
}

#[test]
fn dont_care_lines_are_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("000000.txt");
    std::fs::write(
        &path,
        "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n\
         Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n",
    )
    .unwrap();
    let labels = read_kitti_labels(&path).unwrap();
    assert_eq!(labels.len(), 1);
    assert_eq!(labels[0].box3d.score, 1.0);
}
