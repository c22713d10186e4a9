use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn dynhyper(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dynhyper"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = dynhyper(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const SMALL: &str = "30,8,3,0.3,0.02,0.1";

#[test]
fn generate_writes_a_full_dataset() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let stats = ok(&["generate", "--sbm", "200,8,3,0.1,0.01,0.1", "--seed", "4", "--out", a.to_str().unwrap()]);
    ok(&["generate", "--sbm", "200,8,3,0.1,0.01,0.1", "--seed", "4", "--out", b.to_str().unwrap()]);

    let files = snapshot(&a);
    let count = |prefix: &str| files.iter().filter(|(n, _)| n.starts_with(prefix)).count();
    assert_eq!(count("edges_"), 8);
    assert_eq!(count("labels_"), 8);
    assert_eq!(files, snapshot(&b), "same seed, same bytes");

    // Recount edges from the files and compare with the printed stats.
    let edges: usize = (0..8)
        .map(|t| {
            let text = fs::read_to_string(a.join(format!("edges_{t}.txt"))).unwrap();
            text.lines().filter(|l| !l.trim().is_empty()).count()
        })
        .sum();
    assert!(stats.contains(&edges.to_string()), "stats `{stats}` vs {edges} edges");
}

#[test]
fn missing_source_fails() {
    let tmp = TempDir::new().unwrap();
    let out = dynhyper(&["train", "--split-t", "5", "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let out = dynhyper(&["train", "--sbm", SMALL, "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success(), "split slice is required");

    let out = dynhyper(&["eval", "--data", tmp.path().join("nowhere").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn data_and_sbm_conflict() {
    let out = dynhyper(&["train", "--data", "x", "--sbm", SMALL]);
    assert!(!out.status.success());
}

#[test]
fn config_file_errors_name_the_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "sbm = 30,8,3,0.3,0.02,0.1\nsplit-t = 5\nepochs = 2\nepochs = 3\n").unwrap();
    let out = dynhyper(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(":4"));
}

#[test]
fn ablate_reports_three_modes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let table = ok(&["ablate", "--sbm", SMALL, "--split-t", "5", "--epochs", "3", "--hidden", "8", "--out", out]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "mode,accuracy,macro_auc");
    let modes: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["full", "individual_only", "group_only"]);
    assert_eq!(fs::read_to_string(tmp.path().join("ablation.csv")).unwrap(), table);
}

#[test]
fn train_then_eval_is_repeatable_and_leaves_data_alone() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    ok(&["generate", "--sbm", SMALL, "--seed", "2", "--out", data.to_str().unwrap()]);
    let before = snapshot(&data);

    let run = tmp.path().join("run");
    let common = [
        "--data", data.to_str().unwrap(), "--epochs", "4", "--hidden", "8", "--split-t", "5", "--out", run.to_str().unwrap(),
    ];
    ok(&[&["train"], &common[..]].concat());
    let first = ok(&[&["eval"], &common[..]].concat());
    let second = ok(&[&["eval"], &common[..]].concat());
    assert_eq!(first, second);
    assert!(first.contains("all,"));
    assert_eq!(snapshot(&data), before);

    // A different hidden width cannot load these parameters.
    let mut wider = common.to_vec();
    wider[5] = "9";
    assert!(!dynhyper(&[&["eval"], &wider[..]].concat()).status.success());
}
