use std::path::Path;
use std::process::{Command, Output};

fn primfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_primfit"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("spawn primfit")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> String {
    p.to_string_lossy().to_string()
}

fn small_batch(dir: &Path) -> String {
    let out = s(&dir.join("scenes"));
    let o = primfit(&["generate", "--count", "2", "--n", "1500", "--m", "64", "--k", "2..4", "--seed", "3", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&primfit(&["--help"])), 0);
    assert_eq!(code(&primfit(&["--version"])), 0);
    assert_eq!(code(&primfit(&[])), 1);
    assert_eq!(code(&primfit(&["frobnicate"])), 1);
    assert_eq!(code(&primfit(&["generate", "--count", "many", "--out", "x"])), 1);
}

#[test]
fn generate_writes_batch_and_rejects_bad_mix() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = small_batch(dir.path());
    for f in ["scene_000003.json", "scene_000004.json", "batch.json", "run_manifest.json"] {
        assert!(Path::new(&scenes).join(f).is_file(), "{f}");
    }
    let bad = s(&dir.path().join("bad"));
    let o = primfit(&["generate", "--mix", "0,0,0,0", "--out", &bad]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("type mix"));
    assert_eq!(code(&primfit(&["generate", "--mix", "1,0,0", "--out", &bad])), 1);
    assert_eq!(code(&primfit(&["generate", "--k", "5..2", "--out", &bad])), 1);
}

#[test]
fn fit_eval_and_missing_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = small_batch(dir.path());
    let fits = s(&dir.path().join("fits"));
    assert_eq!(code(&primfit(&["fit", "--method", "oracle", "--scenes", &scenes, "--out", &fits])), 0);
    assert_eq!(code(&primfit(&["fit", "--method", "magic", "--scenes", &scenes, "--out", &fits])), 1);
    assert_eq!(code(&primfit(&["fit", "--method", "ransac", "--inject", "q", "--scenes", &scenes, "--out", &fits])), 1);

    let report = s(&dir.path().join("report"));
    let o = primfit(&["eval", "--pred", &fits, "--gt", &scenes, "--out", &report]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(table.contains("oracle"), "{table}");
    assert!(Path::new(&report).join("report.json").is_file());

    std::fs::remove_file(Path::new(&fits).join("scene_000004.json")).unwrap();
    let o = primfit(&["eval", "--pred", &fits, "--gt", &scenes, "--out", &report]);
    assert_eq!(code(&o), 2);
    let json = std::fs::read_to_string(Path::new(&report).join("report.json")).unwrap();
    assert!(json.contains("scene_000004"));
}

#[test]
fn compare_and_gradcheck() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = small_batch(dir.path());
    let fits = s(&dir.path().join("fits"));
    let rep = s(&dir.path().join("rep"));
    assert_eq!(code(&primfit(&["fit", "--method", "oracle", "--scenes", &scenes, "--out", &fits])), 0);
    assert_eq!(code(&primfit(&["eval", "--pred", &fits, "--gt", &scenes, "--out", &rep])), 0);
    let r = format!("{rep}/report.json");
    let o = primfit(&["compare", &r, &r]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("seg_mean_iou"));
    assert_eq!(code(&primfit(&["compare", &r, "/nonexistent/report.json"])), 1);

    let o = primfit(&["gradcheck", "--estimator", "sphere", "--trials", "5"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
    assert_eq!(code(&primfit(&["gradcheck", "--estimator", "torus"])), 1);
}
