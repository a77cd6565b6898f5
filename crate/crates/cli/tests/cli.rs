use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "iterations = 12\nlangevin_train_steps = 5\nlangevin_test_steps = 10\nfilter_multiplier = 4\nmax_filters = 16\nlr_decay = 1\n";

fn hierlat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hierlat"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hierlat(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    hierlat(dir, args).status.code().expect("exit code")
}

fn small_dataset(dir: &Path) {
    fs::write(dir.join("small.cfg"), SMALL).unwrap();
    ok(
        dir,
        &[
            "synth",
            "--out",
            "ds",
            "--train-len",
            "800",
            "--test-len",
            "900",
            "--spikes",
            "2",
            "--level-shifts",
            "1",
        ],
    );
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["train", "--data", "x"]), 1);
    assert_eq!(code(d, &["synth", "--out", "o", "--set", "no_such_key=3"]), 1);
    assert_eq!(code(d, &["synth", "--out", "o", "--set", "levels=4,1"]), 1);
    assert_eq!(code(d, &["baseline", "median", "--data", "x", "--out", "y"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["train", "--data", "missing", "--out", "m"]), 2);
    fs::write(d.join("bad.csv"), "1,2\n3,x\n").unwrap();
    assert_eq!(code(d, &["train", "--data", "bad.csv", "--out", "m"]), 2);
    fs::write(
        d.join("s.scores.csv"),
        "timestamp,raw_score,normalized_score\n0,1,1\n1,2,2\n",
    )
    .unwrap();
    fs::write(d.join("l.txt"), "0\n1\n1\n").unwrap();
    assert_eq!(
        code(d, &["evaluate", "--scores", "s.scores.csv", "--labels", "l.txt"]),
        2
    );
}

#[test]
fn numeric_blowup_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    let args = [
        "--config",
        "small.cfg",
        "--set",
        "step_size=1e300",
        "train",
        "--data",
        "ds",
        "--out",
        "m",
    ];
    assert_eq!(code(d, &args), 3);
}

#[test]
fn evaluate_reports_best_f1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scores = [0.1, 0.9, 0.3, 0.2, 0.7, 0.8];
    let mut csv = String::from("timestamp,raw_score,normalized_score\n");
    for (t, s) in scores.iter().enumerate() {
        csv.push_str(&format!("{t},{s},{s}\n"));
    }
    fs::write(d.join("toy.scores.csv"), csv).unwrap();
    fs::write(d.join("toy.txt"), "0\n1\n1\n0\n0\n1\n").unwrap();

    let plain = ok(d, &["evaluate", "--scores", "toy.scores.csv", "--labels", "toy.txt"]);
    assert!(
        plain.starts_with("overall precision=0.750000 recall=1.000000 f1=0.857143 threshold=0.3 "),
        "{plain}"
    );
    assert!(plain.contains("\nentity toy precision=0.750000"), "{plain}");

    let adj = ok(
        d,
        &[
            "evaluate",
            "--scores",
            "toy.scores.csv",
            "--labels",
            "toy.txt",
            "--adjusted",
            "--out",
            "r.txt",
        ],
    );
    assert!(
        adj.starts_with("overall precision=1.000000 recall=1.000000 f1=1.000000 threshold=0.8 adjusted=true"),
        "{adj}"
    );
    assert_eq!(fs::read_to_string(d.join("r.txt")).unwrap(), adj);
}

#[test]
fn single_threshold_pools_entities() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir_all(d.join("s")).unwrap();
    fs::create_dir_all(d.join("l")).unwrap();
    let write = |id: &str, scores: &[f64], labels: &str| {
        let mut csv = String::from("timestamp,raw_score,normalized_score\n");
        for (t, s) in scores.iter().enumerate() {
            csv.push_str(&format!("{t},{},{s}\n", s * 100.0));
        }
        fs::write(d.join(format!("s/{id}.scores.csv")), csv).unwrap();
        fs::write(d.join(format!("l/{id}.csv")), labels).unwrap();
    };
    write("a", &[0.1, 0.9, 0.2], "0\n1\n0\n");
    write("b", &[0.5, 0.1, 0.6], "0\n0\n1\n");
    let out = ok(
        d,
        &[
            "evaluate",
            "--scores",
            "s",
            "--labels",
            "l",
            "--single-threshold-across-entities",
        ],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3, "{out}");
    assert!(
        lines[0].starts_with("overall precision=1.000000 recall=1.000000 f1=1.000000 threshold=0.6 "),
        "{out}"
    );
    assert!(
        lines[1].starts_with("entity a ") && lines[2].starts_with("entity b "),
        "{out}"
    );
}

#[test]
fn pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    for run in ["r1", "r2"] {
        let m = format!("{run}/m");
        let s = format!("{run}/s");
        ok(
            d,
            &[
                "--config",
                "small.cfg",
                "--seed",
                "7",
                "train",
                "--data",
                "ds",
                "--out",
                &m,
            ],
        );
        ok(
            d,
            &[
                "--config",
                "small.cfg",
                "--seed",
                "7",
                "detect",
                "--model",
                &m,
                "--data",
                "ds",
                "--out",
                &s,
            ],
        );
    }
    for f in [
        "m/synthetic.model",
        "m/synthetic.latents",
        "m/config.txt",
        "s/synthetic.scores.csv",
    ] {
        let a = fs::read(d.join("r1").join(f)).unwrap();
        let b = fs::read(d.join("r2").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
    let strip = |p: &str| -> Vec<String> {
        fs::read_to_string(d.join(p))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
            .collect()
    };
    assert_eq!(strip("r1/m/synthetic.loss.csv"), strip("r2/m/synthetic.loss.csv"));
    assert_eq!(strip("r1/m/synthetic.loss.csv").len(), 13);
}

#[test]
fn flags_override_config_file_and_resume_matches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    ok(d, &["--config", "small.cfg", "train", "--data", "ds", "--out", "full"]);
    // an interrupted run: 6 iterations with a checkpoint, then resumed to the full length
    ok(
        d,
        &[
            "--config",
            "small.cfg",
            "train",
            "--data",
            "ds",
            "--out",
            "part",
            "--iterations",
            "6",
            "--checkpoint-every",
            "6",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("part/synthetic.loss.csv"))
            .unwrap()
            .lines()
            .count(),
        7
    );
    let cfg = fs::read_to_string(d.join("part/config.txt")).unwrap();
    assert!(
        cfg.contains("iterations = 6\n") && cfg.contains("max_filters = 16\n"),
        "{cfg}"
    );
    ok(
        d,
        &[
            "--config",
            "small.cfg",
            "train",
            "--data",
            "ds",
            "--out",
            "part",
            "--resume",
        ],
    );
    let model = |p: &str| fs::read(d.join(p).join("synthetic.model")).unwrap();
    assert!(model("full") == model("part"), "resumed model differs");
}

#[test]
fn occlude_forecast_interpolate_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    ok(
        d,
        &["occlude", "--data", "ds", "--out", "occ", "--r", "4", "--p", "0.5"],
    );
    let mask = fs::read_to_string(d.join("occ/train_mask/synthetic.csv")).unwrap();
    let zeros = mask.lines().flat_map(|l| l.split(',')).filter(|v| *v == "0").count();
    assert!(zeros > 0 && zeros % 200 == 0, "segments of 800/4 steps: {zeros}");

    ok(d, &["--config", "small.cfg", "train", "--data", "occ", "--out", "m"]);
    ok(
        d,
        &[
            "--config",
            "small.cfg",
            "forecast",
            "--model",
            "m",
            "--data",
            "ds",
            "--window",
            "1",
            "--observed",
            "200",
            "--out",
            "fc.csv",
        ],
    );
    let fc = fs::read_to_string(d.join("fc.csv")).unwrap();
    assert_eq!(fc.lines().count(), 257);
    assert!(fc.lines().nth(201).unwrap().starts_with("200,0,"));

    ok(
        d,
        &[
            "--config",
            "small.cfg",
            "interpolate",
            "--model",
            "m",
            "--data",
            "ds",
            "--from",
            "0",
            "--to",
            "2",
            "--alphas=0,0.5,1",
            "--out",
            "in.csv",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("in.csv")).unwrap().lines().count(),
        1 + 3 * 256
    );

    for kind in ["mean-deviation", "knn"] {
        ok(d, &["baseline", kind, "--data", "ds", "--out", kind]);
        let report = ok(d, &["evaluate", "--scores", kind, "--labels", "ds", "--adjusted"]);
        assert!(report.starts_with("overall precision="), "{report}");
    }
}
