use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use voxelaug::synth::synthetic_sample;
use voxelaug::volume::{load_nifti, save_nifti};
use voxelaug::{LabelMap, Volume};

fn voxelaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxelaug"))
        .args(args)
        .env_remove("VOXELAUG_THREADS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `n` synthetic pairs under `dir/images` and `dir/labels`.
fn write_pairs(dir: &Path, n: usize) {
    for id in 0..n {
        let s = synthetic_sample::<f32>([24, 28, 20], id as u64);
        save_nifti(&s.image, dir.join(format!("images/sub-{id:02}.nii.gz"))).unwrap();
        save_nifti(&s.labels, dir.join(format!("labels/sub-{id:02}.nii.gz"))).unwrap();
    }
}

fn prepare(dir: &Path, n: usize) {
    fs::create_dir_all(dir.join("images")).unwrap();
    fs::create_dir_all(dir.join("labels")).unwrap();
    write_pairs(dir, n);
}

#[test]
fn eval_against_itself_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path(), 3);
    let labels = tmp.path().join("labels");
    let out = tmp.path().join("eval");
    let pred = format!("self={}", path(&labels));
    let o = voxelaug(&["eval", "--pred", &pred, "--ref", path(&labels), "--out-dir", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let mut summary = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    let row = summary.records().next().unwrap().unwrap();
    assert_eq!(&row[0], "self");
    assert_eq!(&row[1], "3");
    for v in row.iter().skip(2) {
        assert_eq!(v.parse::<f64>().unwrap(), 1.0);
    }
    let per_subject = fs::read_to_string(out.join("per_subject_self.csv")).unwrap();
    assert_eq!(per_subject.lines().count(), 4);
    for metric in ["vertebra", "ivd", "canal", "global"] {
        assert!(out.join(format!("significance_{metric}.csv")).is_file());
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(voxelaug(&["--version"]).status.code(), Some(0));
    assert_eq!(voxelaug(&["transmogrify"]).status.code(), Some(1));
    assert_eq!(voxelaug(&["bench", "--patch", "0,4,4"]).status.code(), Some(1));

    let missing = tmp.path().join("missing.nii.gz");
    let out = tmp.path().join("out.nii.gz");
    let o = voxelaug(&[
        "pipeline", "--image", path(&missing), "--labels", path(&missing), "--out-image", path(&out),
        "--out-labels", path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));

    prepare(tmp.path(), 1);
    let image = tmp.path().join("images/sub-00.nii.gz");
    let labels = tmp.path().join("labels/sub-00.nii.gz");
    let o = voxelaug(&[
        "augment", "--image", path(&image), "--labels", path(&labels), "--out-image", path(&out), "--out-labels",
        path(&tmp.path().join("l.nii.gz")), "--transform", "no_such_transform",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn batch_pipeline_keeps_names_and_labels_untouched_without_spatial() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    prepare(&input, 3);
    let mut cfg = voxelaug::pipeline::PipelineConfig::default_config().with_all_probabilities(1.0);
    cfg.geometric.clear();
    let config = tmp.path().join("cfg.json");
    fs::write(&config, cfg.to_json()).unwrap();
    let output = tmp.path().join("out");
    let o = voxelaug(&[
        "pipeline", "--config", path(&config), "--input-dir", path(&input), "--output-dir", path(&output), "--workers",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for id in 0..3 {
        let name = format!("sub-{id:02}.nii.gz");
        let before: LabelMap = load_nifti(input.join("labels").join(&name)).unwrap();
        let after: LabelMap = load_nifti(output.join("labels").join(&name)).unwrap();
        assert_eq!(before, after);
        let a: Volume<f32> = load_nifti(input.join("images").join(&name)).unwrap();
        let b: Volume<f32> = load_nifti(output.join("images").join(&name)).unwrap();
        assert_eq!(a.geometry(), b.geometry());
        assert_ne!(a.data(), b.data());
    }
}

#[test]
fn preprocess_and_augment_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    prepare(tmp.path(), 1);
    let image = tmp.path().join("images/sub-00.nii.gz");
    let labels = tmp.path().join("labels/sub-00.nii.gz");
    let (pi, pl) = (tmp.path().join("pre/img.nii.gz"), tmp.path().join("pre/lab.nii.gz"));
    let o = voxelaug(&["preprocess", "--image", path(&image), "--labels", path(&labels), "--out-image", path(&pi), "--out-labels", path(&pl)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let (ai, al) = (tmp.path().join("aug/img.nii"), tmp.path().join("aug/lab.nii"));
    let o = voxelaug(&[
        "augment", "--image", path(&pi), "--labels", path(&pl), "--out-image", path(&ai), "--out-labels", path(&al),
        "--transform", "intensity_inversion",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let before: Volume<f32> = load_nifti(&pi).unwrap();
    let after: Volume<f32> = load_nifti(&ai).unwrap();
    let (lo, hi) = before.min_max();
    for (a, b) in before.data().iter().zip(after.data()) {
        assert_eq!(*b, lo + hi - a);
    }
}
