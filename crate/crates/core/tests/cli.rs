mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texmesh::pipeline::PipelineConfig;
use texmesh::volrender::RadianceModel;

const TINY: &str = r#"
seed = 11

[synth.dataset]
n_views = 6
n_test_views = 2
resolution = 20

[field]
levels = 4
base_res = 4
max_res = 16
geo_hidden = 8
app_hidden = 16
spec_hidden = 8

[stage1]
steps = 150
points_per_step = 1024
max_samples = 32
occupancy_res = 16
diffuse_warmup_steps = 5
log_every = 0

[extract]
resolution = 24
threshold = 2.0

[stage2]
steps = 10
log_every = 0

[bake]
resolution = 64
min_resolution = 32

[eval]
n_points = 2000
"#;

fn texmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texmesh"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, out: &str, args: &[&str]) -> Output {
    let config = dir.join("tiny.toml");
    if !config.exists() {
        fs::write(&config, TINY).unwrap();
    }
    let out = dir.join(out);
    let mut full = vec![
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    full.extend_from_slice(args);
    texmesh(&full)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `dir` with its path relative to `dir`, sorted.
fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    let mut v = Vec::new();
    walk(dir, dir, &mut v);
    v.sort();
    v
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_tree(&p, &dest);
        } else {
            fs::copy(&p, &dest).unwrap();
        }
    }
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(code(&texmesh(&["--help"])), 0);
    assert_eq!(code(&texmesh(&["frobnicate"])), 1);
    assert_eq!(code(&texmesh(&["synth", "--seed", "many"])), 1);
}

#[test]
fn unknown_config_keys_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "out", &["--set", "stage1.stepz=3", "synth"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("stepz"), "{}", stderr(&o));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "[stage2]\nw_smoth = 0.0\n").unwrap();
    let o = texmesh(&[
        "--config",
        typo.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "synth",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("w_smoth"), "{}", stderr(&o));

    assert_eq!(
        code(&run_in(dir.path(), "out", &["--steps", "3", "bake"])),
        1
    );
}

#[test]
fn missing_upstream_artifact_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "out", &["train1"]);
    assert_eq!(code(&o), 1);
    let msg = stderr(&o);
    assert!(
        msg.contains("transforms_train.json") && msg.contains("synth"),
        "{msg}"
    );

    assert_eq!(code(&run_in(dir.path(), "out", &["synth"])), 0);
    let o = run_in(dir.path(), "out", &["bake"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("train2"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    assert_eq!(code(&run_in(dir.path(), "blocker/out", &["synth"])), 2);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_texmesh"))
        .args(["--out", "/nonexistent", "synth"])
        .env("TEXMESH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn zero_step_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(dir.path(), "out", &["synth"])), 0);
    let o = run_in(dir.path(), "out", &["--steps", "0", "train1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let saved = RadianceModel::load(&dir.path().join("out/stage1/model.ckpt")).unwrap();

    let cfg = PipelineConfig::from_toml_str(TINY).unwrap();
    let ds = texmesh::scene::load_dataset(&dir.path().join("out/dataset")).unwrap();
    let mut init = RadianceModel::new(
        &cfg.field,
        ds.scene_bound,
        cfg.stage1.occupancy_res,
        &mut common::rng(cfg.seed),
    )
    .unwrap();
    init.occupancy.decay = cfg.stage1.occupancy_decay;
    let bytes = |m: &RadianceModel| m.to_tensors(serde_json::json!({})).to_bytes();
    assert_eq!(bytes(&saved), bytes(&init));
}

/// One full tiny pipeline, a rerun from its own config echo, and a render
/// from the asset directory alone.
#[test]
fn pipeline_is_reproducible_from_its_echo_and_asset_is_self_contained() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "a", &["pipeline"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = dir.path().join("a");
    for p in [
        "stage1/model.ckpt",
        "extract/coarse_0.obj",
        "stage2/fine.obj",
        "asset/manifest.json",
        "eval/metrics.json",
    ] {
        assert!(a.join(p).exists(), "{p} missing");
    }
    for stage in [
        "dataset", "stage1", "extract", "stage2", "asset", "render", "eval",
    ] {
        assert!(
            a.join(stage).join("config.toml").exists(),
            "{stage} has no config echo"
        );
    }

    let echo = dir.path().join("echo.toml");
    fs::copy(a.join("eval/config.toml"), &echo).unwrap();
    let b = dir.path().join("b");
    let o = texmesh(&[
        "--config",
        echo.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "pipeline",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("eval/metrics.json")).unwrap(),
        fs::read(b.join("eval/metrics.json")).unwrap()
    );
    for stage in ["dataset", "stage1", "extract", "stage2", "asset", "render"] {
        assert_eq!(
            files(&a.join(stage)),
            files(&b.join(stage)),
            "{stage} differs"
        );
    }

    let fresh = dir.path().join("fresh");
    fs::create_dir_all(&fresh).unwrap();
    for sub in ["asset", "dataset"] {
        copy_tree(&a.join(sub), &fresh.join(sub));
    }
    fs::remove_dir_all(&a).unwrap();
    let o = texmesh(&[
        "--config",
        echo.to_str().unwrap(),
        "--out",
        fresh.to_str().unwrap(),
        "render",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pngs = |d: &Path| -> Vec<_> {
        files(d)
            .into_iter()
            .filter(|(n, _)| n.extension().is_some_and(|e| e == "png"))
            .collect()
    };
    let renders = pngs(&fresh.join("render"));
    let original = pngs(&b.join("render"));
    assert_eq!(renders.len(), 2);
    assert_eq!(renders, original);
}
