use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const KNOWN: &str = r#"{
    "spaces": {"x": 2, "y": 2, "yhat": 2},
    "horizon": 2,
    "init": [1.0, 0.0],
    "obs_kernels": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]],
    "mode": "known",
    "quantity": [[0.6, 0.4], [0.0, 1.0]],
    "loss": [[[0, 1], [1, 0]], [[0, 1], [1, 0]]]
}"#;

const LEARNING: &str = r#"{
    "spaces": {"x": 1, "y": 2, "yhat": 2},
    "horizon": 3,
    "init": [1.0],
    "obs_kernels": [[[1.0], [1.0]]],
    "mode": "learning",
    "family": [[[0.8, 0.2]], [[0.3, 0.7]]],
    "prior": [0.5, 0.5],
    "loss": [[[0, 1], [1, 0]]]
}"#;

const SINGLE_PARAM: &str = r#"{
    "spaces": {"x": 2, "y": 2, "yhat": 2},
    "horizon": 2,
    "init": [1.0, 0.0],
    "obs_kernels": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [0.0, 1.0]]],
    "mode": "learning",
    "family": [[[0.6, 0.4], [0.0, 1.0]]],
    "prior": [1.0],
    "loss": [[[0, 1], [1, 0]], [[0, 1], [1, 0]]]
}"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn dyninf<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_dyninf")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value_line(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("value: "))
        .expect("no value line");
    line.trim().parse().unwrap()
}

fn loss_line(o: &Output) -> f64 {
    let text = stdout(o);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("loss: "))
        .expect("no loss line");
    line.split_whitespace().next().unwrap().parse().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_accepts_a_good_config() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", KNOWN);
    let o = dyninf(["validate", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: |X|=2"));
}

#[test]
fn validate_names_the_defective_tensor() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", &KNOWN.replace("[0.6, 0.4]", "[0.6, 0.5]"));
    let o = dyninf(["validate", p(&cfg)]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("quantity"), "{msg}");
    assert!(msg.contains("sum"), "{msg}");
}

#[test]
fn malformed_json_is_a_parse_error() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", "{\"spaces\": ");
    assert_eq!(code(&dyninf(["validate", p(&cfg)])), 1);
    assert_eq!(code(&dyninf(["validate", p(&sb.path("missing.json"))])), 1);
}

#[test]
fn solve_known_writes_a_policy() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", KNOWN);
    let pol = sb.path("p.json");
    let o = dyninf(["solve", p(&cfg), "--mode", "known", "--out", p(&pol)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!((value_line(&o) - 0.6).abs() < 1e-12);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&pol).unwrap()).unwrap();
    assert_eq!(v["format"], "dyninf-policy");
    assert_eq!(v["mode"], "known");
}

#[test]
fn offline_with_no_data_solves_at_the_prior() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", LEARNING);
    let data = sb.path("d.json");
    assert_eq!(
        code(&dyninf([
            "gen-data",
            p(&cfg),
            "--w",
            "0",
            "--m",
            "0",
            "--seed",
            "1",
            "--out",
            p(&data)
        ])),
        0
    );
    let a = dyninf([
        "solve",
        p(&cfg),
        "--mode",
        "offline",
        "--dataset",
        p(&data),
        "--out",
        p(&sb.path("a.json")),
    ]);
    let b = dyninf([
        "solve",
        p(&cfg),
        "--mode",
        "offline",
        "--belief",
        "0.5,0.5",
        "--out",
        p(&sb.path("b.json")),
    ]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    assert_eq!(value_line(&a), value_line(&b));
}

#[test]
fn online_with_one_parameter_matches_known() {
    let sb = Sandbox::new();
    let known = sb.file("k.json", KNOWN);
    let single = sb.file("l.json", SINGLE_PARAM);
    let k = dyninf(["solve", p(&known), "--mode", "known", "--out", p(&sb.path("k.pol"))]);
    let o = dyninf(["solve", p(&single), "--mode", "online", "--out", p(&sb.path("o.pol"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("nodes per round: 1 1"));
    assert!((value_line(&k) - value_line(&o)).abs() < 1e-9);
}

#[test]
fn online_node_cap_is_enforced() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", LEARNING);
    let o = dyninf([
        "solve",
        p(&cfg),
        "--mode",
        "online",
        "--node-cap",
        "2",
        "--out",
        p(&sb.path("p.json")),
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn exact_evaluation_reproduces_the_solver_value() {
    let sb = Sandbox::new();
    for (cfg, mode) in [(KNOWN, "known"), (LEARNING, "online"), (LEARNING, "offline")] {
        let cfg = sb.file("s.json", cfg);
        let pol = sb.path("p.json");
        let mut args = vec!["solve", p(&cfg), "--mode", mode, "--out", p(&pol)];
        if mode == "offline" {
            args.extend(["--belief", "0.25,0.75"]);
        }
        let s = dyninf(&args);
        assert_eq!(code(&s), 0, "{}", stderr(&s));
        let e = dyninf(["evaluate", p(&cfg), p(&pol), "--exact"]);
        assert_eq!(code(&e), 0, "{}", stderr(&e));
        assert!((value_line(&s) - loss_line(&e)).abs() < 1e-9, "{mode}");
    }
}

#[test]
fn monte_carlo_reports_are_reproducible() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", LEARNING);
    let pol = sb.path("p.json");
    assert_eq!(
        code(&dyninf(["solve", p(&cfg), "--mode", "online", "--out", p(&pol)])),
        0
    );
    let run = |name: &str| {
        let out = sb.path(name);
        let o = dyninf([
            "evaluate",
            p(&cfg),
            p(&pol),
            "--mc",
            "1",
            "--seed",
            "7",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (stdout(&o), std::fs::read(out).unwrap())
    };
    assert_eq!(run("a.json"), run("b.json"));
    let missing_seed = dyninf(["evaluate", p(&cfg), p(&pol), "--mc", "10"]);
    assert_eq!(code(&missing_seed), 2);
}

#[test]
fn csv_lists_every_state() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", KNOWN);
    let pol = sb.path("p.json");
    let csv = sb.path("v.csv");
    assert_eq!(
        code(&dyninf(["solve", p(&cfg), "--mode", "known", "--out", p(&pol)])),
        0
    );
    let o = dyninf(["evaluate", p(&cfg), p(&pol), "--exact", "--csv", p(&csv)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("round,node,x,value"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn policy_for_another_scenario_is_rejected() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", KNOWN);
    let other = sb.file("t.json", &KNOWN.replace("[0.6, 0.4]", "[0.5, 0.5]"));
    let pol = sb.path("p.json");
    assert_eq!(
        code(&dyninf(["solve", p(&cfg), "--mode", "known", "--out", p(&pol)])),
        0
    );
    let o = dyninf(["evaluate", p(&other), p(&pol), "--exact"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn oracle_agrees_on_a_tiny_instance() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", KNOWN);
    let brute = |class: &str| {
        let o = dyninf(["oracle", p(&cfg), "--class", class]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = stdout(&o);
        assert!(text.lines().any(|l| l == "agree"), "{text}");
        let line = text
            .lines()
            .find_map(|l| l.strip_prefix("brute force: "))
            .unwrap()
            .to_owned();
        line.split_whitespace().next().unwrap().parse::<f64>().unwrap()
    };
    let markov = brute("markov-known");
    let history = brute("history-known");
    assert!((markov - history).abs() < 1e-12);
    assert!((markov - 0.6).abs() < 1e-12);
}

#[test]
fn oracle_respects_the_cap() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", LEARNING);
    let o = dyninf(["oracle", p(&cfg), "--class", "history-online", "--cap", "10"]);
    assert_eq!(code(&o), 4);
    let o = dyninf(["oracle", p(&cfg), "--class", "markov-offline"]);
    assert_eq!(code(&o), 2, "offline classes need data");
}

#[test]
fn gen_data_is_deterministic() {
    let sb = Sandbox::new();
    let cfg = sb.file("s.json", LEARNING);
    let gen = |name: &str, m: &str, w: &str| {
        let out = sb.path(name);
        let o = dyninf([
            "gen-data",
            p(&cfg),
            "--w",
            w,
            "--m",
            m,
            "--seed",
            "42",
            "--out",
            p(&out),
        ]);
        (code(&o), std::fs::read(out).ok())
    };
    let (c, empty) = gen("e.json", "0", "1");
    assert_eq!(c, 0);
    let v: serde_json::Value = serde_json::from_slice(&empty.unwrap()).unwrap();
    assert_eq!(v["m"], 0);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 0);

    let (_, a) = gen("a.json", "25", "1");
    let (_, b) = gen("b.json", "25", "1");
    assert_eq!(a.unwrap(), b.unwrap());

    let (c, none) = gen("bad.json", "5", "2");
    assert_eq!(c, 2);
    assert!(none.is_none());
}
