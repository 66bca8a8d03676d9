use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BASE: &str = r#"
budgets = [0.1, 0.5]

[federation]
clients = 3
rounds = 4
trials = 200
seed = 7

[federation.dataset]
kind = "regression"
samples = 12
features = 1

[federation.model]
kind = "linear_regression"

[federation.universe]
candidates = 6
sigma_obs = 0.1
"#;

fn tradeoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tradeoff")).args(args).env_remove("TRADEOFF_OUT_ROOT").output().expect("spawn")
}

fn write_config(dir: &Path, name: &str, sweep: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("{BASE}\n{sweep}")).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    let out = tradeoff(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn curve(dir: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(dir.join("curve.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let mut rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    rows.insert(0, h);
    rows
}

fn col(rows: &[csv::StringRecord], name: &str) -> Vec<String> {
    let i = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].to_string()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn noop_views_are_identical_and_curve_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noop.toml", "[[sweep]]\nkind = \"no_op\"\n");
    let out = tmp.path().join("out");
    run(&["curve", "--config", s(&cfg), "--out", s(&out)]);
    let o = fs::read(out.join("points/000/dist_o.csv")).unwrap();
    let p = fs::read(out.join("points/000/dist_protected.csv")).unwrap();
    assert_eq!(o, p);
    assert_eq!(curve(&out).len(), 2);
    run(&["verify", "--out", s(&out)]);
}

#[test]
fn randomization_point_matches_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = "[[sweep]]\nkind = \"randomization\"\nsigma = 0.1\n\n[[sweep]]\nkind = \"randomization\"\nsigma = 0.5\n";
    let cfg = write_config(tmp.path(), "sweep.toml", sweep);
    let single = write_config(tmp.path(), "single.toml", "[[sweep]]\nkind = \"randomization\"\nsigma = 0.5\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&["curve", "--config", s(&cfg), "--out", s(&a)]);
    run(&["curve", "--config", s(&single), "--out", s(&b)]);
    assert_eq!(col(&curve(&a), "eps_u")[1], col(&curve(&b), "eps_u")[0]);
    assert_eq!(col(&curve(&a), "eps_p")[1], col(&curve(&b), "eps_p")[0]);
}

#[test]
fn sparsity_h_column_is_non_increasing() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep: String = (0..3).map(|d| format!("[[sweep]]\nkind = \"sparsity\"\nd = {d}\n\n")).collect();
    let cfg = write_config(tmp.path(), "sparse.toml", &sweep);
    let out = tmp.path().join("out");
    run(&["curve", "--config", s(&cfg), "--out", s(&out)]);
    let h: Vec<f64> = col(&curve(&out), "h").iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(h.len(), 3);
    assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{h:?}");
    assert_eq!(*h.last().unwrap(), 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "det.toml", "[[sweep]]\nkind = \"randomization\"\nsigma = 0.3\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&["curve", "--config", s(&cfg), "--out", s(&a)]);
    run(&["--jobs", "2", "curve", "--config", s(&cfg), "--out", s(&b)]);
    for f in ["curve.csv", "choices.json", "reports/000_protected.json", "points/000/dist_protected.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    let bad = write_config(tmp.path(), "bad.toml", "[[sweep]]\nkind = \"randomization\"\nsigma = \"loud\"\n");
    let out = tradeoff(&["simulate", "--config", s(&bad), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = tradeoff(&["verify", "--out", s(&tmp.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(1));

    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let good = write_config(tmp.path(), "good.toml", "[[sweep]]\nkind = \"randomization\"\nsigma = 0.3\n");
    let out = tradeoff(&["simulate", "--config", s(&good), "--out", s(&blocker.join("run"))]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tmp.path().join("run");
    run(&["curve", "--config", s(&good), "--out", s(&dir)]);
    let report = dir.join("reports/000_protected.json");
    let mut json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    let eps = json["eps_p"].as_f64().unwrap();
    json["eps_p"] = serde_json::json!(eps * 0.5);
    fs::write(&report, serde_json::to_vec_pretty(&json).unwrap()).unwrap();
    let out = tradeoff(&["verify", "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("consistency") && text.contains("manifest_integrity"), "{text}");
}

#[test]
fn attack_writes_rows_for_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "atk.toml",
        "[[sweep]]\nkind = \"randomization\"\nsigma = 0.3\n\n[attacks]\nsigmas = [0.0, 0.5]\ninstances = 10\n",
    );
    let dir = tmp.path().join("run");
    let out = tradeoff(&["attack", "--config", s(&cfg), "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(1), "attack needs a simulated run");
    run(&["simulate", "--config", s(&cfg), "--out", s(&dir)]);
    run(&["attack", "--config", s(&cfg), "--out", s(&dir)]);
    let n = csv::Reader::from_path(dir.join("attacks.csv")).unwrap().records().count();
    assert!(n > 0);
    run(&["verify", "--out", s(&dir)]);
}
