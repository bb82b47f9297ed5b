use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use binhash::data::synth_uniform;
use binhash::Dataset;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_binhash"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth_spread(dir: &Path, name: &str, spread: &str) -> PathBuf {
    ok(
        dir,
        &[
            "synth",
            "--seed",
            "7",
            "--dim",
            "4",
            "--per-cluster",
            "15",
            "--spread",
            spread,
            "--out",
            name,
        ],
    );
    dir.join(name)
}

fn synth(dir: &Path, name: &str) -> PathBuf {
    synth_spread(dir, name, "0.4")
}

const CG_TRAIN: &[&str] = &[
    "train",
    "--data",
    "d.csv",
    "--labels",
    "last",
    "--method",
    "cghash",
    "--loss",
    "squared-hinge",
    "--reg",
    "l1",
    "--bits",
    "8",
    "--k-rel",
    "5",
    "--k-irr",
    "8",
    "--seed",
    "3",
];

#[test]
fn synth_shape_determinism_and_zero_spread() {
    let t = TempDir::new().unwrap();
    let a = fs::read_to_string(synth(t.path(), "a.csv")).unwrap();
    let b = fs::read_to_string(synth(t.path(), "b.csv")).unwrap();
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 45);
    assert!(lines.iter().all(|l| l.split(',').count() == 5));
    let labels: std::collections::BTreeSet<&str> = lines
        .iter()
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(labels.into_iter().collect::<Vec<_>>(), ["0", "1", "2"]);

    let z = fs::read_to_string(synth_spread(t.path(), "z.csv", "0")).unwrap();
    let first: Vec<&str> = z.lines().take(15).collect();
    assert!(first.iter().all(|l| *l == first[0]));
}

#[test]
fn cghash_training_writes_eight_records_reproducibly() {
    let t = TempDir::new().unwrap();
    synth(t.path(), "d.csv");
    let mut args = CG_TRAIN.to_vec();
    args.extend(["--out", "m1.txt"]);
    ok(t.path(), &args);
    let mut again = CG_TRAIN.to_vec();
    again.extend(["--out", "m2.txt"]);
    ok(t.path(), &again);
    let m1 = fs::read_to_string(t.path().join("m1.txt")).unwrap();
    assert_eq!(m1, fs::read_to_string(t.path().join("m2.txt")).unwrap());
    let lines: Vec<&str> = m1.lines().collect();
    assert_eq!(lines[0], "HASHMODEL v1");
    assert_eq!(lines[1], "bits=8 dim=4 method=cghash loss=squared-hinge+l1");
    assert_eq!(lines.iter().filter(|l| l.starts_with("h ")).count(), 8);
    let stats = fs::read_to_string(t.path().join("m1.txt.stats.csv")).unwrap();
    assert!(stats.starts_with("bit,objective,cp_iterations,wall_ms\n"));
    assert_eq!(stats.lines().count(), 9);
}

#[test]
fn stagewise_sidecar_respects_iteration_cap() {
    let t = TempDir::new().unwrap();
    synth(t.path(), "d.csv");
    ok(
        t.path(),
        &[
            "train",
            "--data",
            "d.csv",
            "--labels",
            "last",
            "--method",
            "structhash",
            "--loss",
            "ndcg",
            "--mode",
            "stagewise",
            "--bits",
            "6",
            "--k-rel",
            "5",
            "--k-irr",
            "8",
            "--max-cp-iters",
            "20",
            "--out",
            "s.txt",
            "--stats",
            "s.csv",
        ],
    );
    let stats = fs::read_to_string(t.path().join("s.csv")).unwrap();
    let rows: Vec<Vec<&str>> = stats
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        let iters: usize = r[2].parse().unwrap();
        assert!((1..=20).contains(&iters));
    }
    let model = fs::read_to_string(t.path().join("s.txt")).unwrap();
    let w = model.lines().nth(2).unwrap();
    assert!(w
        .split(' ')
        .skip(1)
        .all(|v| v.parse::<f64>().unwrap() == 1.0));
}

#[test]
fn encode_lines_and_determinism() {
    let t = TempDir::new().unwrap();
    synth(t.path(), "d.csv");
    let mut args = CG_TRAIN.to_vec();
    args.extend(["--out", "m.txt"]);
    ok(t.path(), &args);
    let enc = [
        "encode", "--model", "m.txt", "--data", "d.csv", "--labels", "last",
    ];
    let a = ok(t.path(), &enc);
    assert_eq!(a, ok(t.path(), &enc));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 45);
    for (i, l) in lines.iter().enumerate() {
        let fields: Vec<&str> = l.split(' ').collect();
        assert_eq!(fields[0], i.to_string());
        assert_eq!(fields.len(), 9);
        assert!(fields[1..].iter().all(|b| *b == "0" || *b == "1"));
    }
    ok(
        t.path(),
        &[
            "encode",
            "--model",
            "m.txt",
            "--data",
            "d.csv",
            "--labels",
            "last",
            "--out",
            "codes.txt",
        ],
    );
    assert_eq!(fs::read_to_string(t.path().join("codes.txt")).unwrap(), a);
}

/// One function thresholding the first coordinate at zero, unit weight.
fn threshold_model(dir: &Path, dim: usize) {
    let zeros = vec!["0"; dim - 1].join(" ");
    fs::write(
        dir.join("t.txt"),
        format!("HASHMODEL v1\nbits=1 dim={dim} method=manual loss=none\nw 1\nh 1 {zeros} 0\n"),
    )
    .unwrap();
}

#[test]
fn search_order_ties_and_truncation() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("db.csv"), "1,0\n-1,0\n2,5\n-3,1\n4,4\n").unwrap();
    threshold_model(t.path(), 2);
    let out = ok(
        t.path(),
        &[
            "search",
            "--model",
            "t.txt",
            "--db",
            "db.csv",
            "--query-row",
            "2",
            "--top-k",
            "4",
        ],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines,
        ["rank,id,distance", "1,0,0", "2,2,0", "3,4,0", "4,1,1"]
    );
    let out = ok(
        t.path(),
        &[
            "search",
            "--model",
            "t.txt",
            "--db",
            "db.csv",
            "--query-row",
            "1",
            "--top-k",
            "2",
        ],
    );
    assert_eq!(
        out.lines().collect::<Vec<_>>(),
        ["rank,id,distance", "1,1,0", "2,3,0"]
    );
    let bad = run(
        t.path(),
        &[
            "search",
            "--model",
            "t.txt",
            "--db",
            "db.csv",
            "--query-row",
            "5",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn eval_perfect_model_and_row_count() {
    let t = TempDir::new().unwrap();
    fs::write(
        t.path().join("db.csv"),
        "1,0,0\n-1,0,1\n2,5,0\n-3,1,1\n4,4,0\n-2,2,1\n",
    )
    .unwrap();
    threshold_model(t.path(), 2);
    let out = ok(
        t.path(),
        &[
            "eval",
            "--model",
            "t.txt",
            "--queries",
            "db.csv",
            "--db",
            "db.csv",
            "--labels",
            "last",
            "--ks",
            "1,2,3",
        ],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "method,bits,metric,K,value");
    assert_eq!(lines.len(), 1 + 2 * 3 + 2);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(&f[..2], ["manual", "1"]);
        assert_eq!(f[4].parse::<f64>().unwrap(), 1.0, "{l}");
    }
    assert!(lines.contains(&"manual,1,map,,1"));
}

#[test]
fn eval_lsh_near_chance_on_uniform_data() {
    let t = TempDir::new().unwrap();
    let write = |name: &str, ds: Dataset<f64>| {
        let mut f = fs::File::create(t.path().join(name)).unwrap();
        ds.write_csv(&mut f).unwrap();
    };
    write("q.csv", synth_uniform(21, 8, 500, 3).unwrap());
    write("db.csv", synth_uniform(22, 8, 600, 3).unwrap());
    ok(
        t.path(),
        &[
            "train", "--data", "db.csv", "--labels", "last", "--method", "lsh", "--bits", "16",
            "--out", "lsh.txt",
        ],
    );
    let out = ok(
        t.path(),
        &[
            "eval",
            "--model",
            "lsh.txt",
            "--queries",
            "q.csv",
            "--db",
            "db.csv",
            "--labels",
            "last",
            "--pr-out",
            "pr.csv",
        ],
    );
    let auc: f64 = out
        .lines()
        .find(|l| l.starts_with("lsh,16,auc,,"))
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((auc - 0.5).abs() <= 0.05, "{auc}");
    let pr = fs::read_to_string(t.path().join("pr.csv")).unwrap();
    assert_eq!(pr.lines().count(), 601);
}

#[test]
fn exit_codes() {
    let t = TempDir::new().unwrap();
    synth(t.path(), "d.csv");
    let code = |args: &[&str]| run(t.path(), args).status.code();
    assert_eq!(
        code(&[
            "train",
            "--data",
            "d.csv",
            "--labels",
            "last",
            "--c-prime",
            "2",
            "--out",
            "m"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&[
            "train",
            "--data",
            "d.csv",
            "--method",
            "structhash",
            "--loss",
            "logistic",
            "--out",
            "m"
        ]),
        Some(1)
    );
    assert_eq!(
        code(&["train", "--data", "d.csv", "--method", "cghash", "--mode", "full", "--out", "m"]),
        Some(1)
    );
    assert_eq!(code(&["train", "--bogus"]), Some(1));
    assert_eq!(
        code(&["train", "--data", "missing.csv", "--out", "m"]),
        Some(2)
    );
    // label neighborhoods without a label column
    assert_eq!(
        code(&["train", "--data", "d.csv", "--bits", "2", "--out", "m"]),
        Some(2)
    );
    assert_eq!(code(&["--help"]), Some(0));
    threshold_model(t.path(), 4);
    assert_eq!(
        code(&[
            "eval",
            "--model",
            "t.txt",
            "--queries",
            "d.csv",
            "--db",
            "d.csv",
            "--ks",
            "5"
        ]),
        Some(2)
    );
    assert!(!t.path().join("m").exists());
}
