use std::path::Path;
use std::process::{Command, Output};

fn longtail(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longtail"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(longtail(d, &["--help"]).status.code(), Some(0));
    assert_eq!(longtail(d, &["curate", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(
        longtail(d, &["stats", "--annotations", "nope.json", "--out", "s"]).status.code(),
        Some(4)
    );
    std::fs::write(
        d.join("dangling.json"),
        r#"{"images":[],"annotations":[{"id":1,"image_id":9,"category_id":1,"bbox":[0,0,1,1]}],"categories":[{"id":1,"name":"a"}]}"#,
    )
    .unwrap();
    let out = longtail(d, &["weights", "--annotations", "dangling.json", "--out", "w.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing image 9"));
    assert!(!d.join("w.json").exists());
}

#[test]
fn weights_and_run_meta() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("a.json"),
        r#"{"images":[{"id":1,"file_name":"1.png","width":10,"height":10}],
            "annotations":[{"id":1,"image_id":1,"category_id":1,"bbox":[0,0,2,2]},
                           {"id":2,"image_id":1,"category_id":1,"bbox":[2,2,2,2]},
                           {"id":3,"image_id":1,"category_id":2,"bbox":[4,4,2,2]}],
            "categories":[{"id":1,"name":"a"},{"id":2,"name":"b"}]}"#,
    )
    .unwrap();
    let out = longtail(d, &["weights", "--annotations", "a.json", "--out", "out/w.json", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let w: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/w.json")).unwrap()).unwrap();
    assert_eq!(w["1"], 1.5);
    assert_eq!(w["2"], 3.0);
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["command"]["weights"]["annotations"], "a.json");
    assert!(meta["rng"].as_str().unwrap().starts_with("chacha8"));
}

#[test]
fn log_env_overrides_level() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fixture = longtail(d, &["fixture", "--out", "data", "--images", "30"]);
    assert_eq!(fixture.status.code(), Some(0));
    let quiet = longtail(d, &["stats", "--annotations", "data/annotations.json", "--out", "s", "--zipf-s", "1.0"]);
    assert!(!String::from_utf8_lossy(&quiet.stderr).contains("INFO"));
    let loud = Command::new(env!("CARGO_BIN_EXE_longtail"))
        .args(["stats", "--annotations", "data/annotations.json", "--out", "s", "--log-level", "error"])
        .env("LONGTAIL_LOG", "info")
        .current_dir(d)
        .output()
        .unwrap();
    assert_eq!(loud.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&loud.stderr).contains("INFO"));
}
