use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qmeas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmeas")).args(args).output().expect("binary runs")
}

fn simulate(dir: &Path, trajectories: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--init",
        "number:n=3",
        "--trajectories",
        trajectories,
        "--t-final",
        "1",
        "--seed",
        "7",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    qmeas(&args)
}

#[test]
fn simulate_writes_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "200", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let curve = fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("t,mean_n,sem_n,analytic_mean"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 21);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        for f in fields {
            let mantissa = f.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{f}");
            f.parse::<f64>().unwrap();
        }
    }

    let hist = fs::read_to_string(tmp.path().join("histogram.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("m,count,probability"));
    let (mut total, mut prob) = (0u64, 0.0);
    for row in lines {
        let f: Vec<&str> = row.split(',').collect();
        total += f[1].parse::<u64>().unwrap();
        prob += f[2].parse::<f64>().unwrap();
    }
    assert_eq!(total, 200);
    assert!((prob - 1.0).abs() < 1e-12);

    let jsonl = fs::read_to_string(tmp.path().join("trajectories.jsonl")).unwrap();
    let objs: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(objs.len(), 200);
    for (i, o) in objs.iter().enumerate() {
        assert_eq!(o["traj"].as_u64(), Some(i as u64));
        assert!(o["jumps"].as_array().unwrap().iter().all(|t| t.as_f64().unwrap() <= 1.0));
        assert!(o["final_n"].as_f64().is_some());
        assert!(o.get("dW").is_none());
    }
}

#[test]
fn dw_flag_adds_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "3", &["--dw"]);
    assert!(out.status.success());
    let jsonl = fs::read_to_string(tmp.path().join("trajectories.jsonl")).unwrap();
    for line in jsonl.lines() {
        let o: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(o["dW"].as_array().unwrap().len(), 1000);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(simulate(a.path(), "200", &[]).status.success());
    assert!(simulate(b.path(), "200", &[]).status.success());
    for f in ["curve.csv", "histogram.csv", "trajectories.jsonl", "stats.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sampled_thermal_mode_emits_the_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qmeas(&[
        "simulate",
        "--init",
        "thermal:nbar=1",
        "--thermal-mode",
        "sampled",
        "--trajectories",
        "100",
        "--t-final",
        "0.5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let draws = fs::read_to_string(tmp.path().join("sampled_n.csv")).unwrap();
    let total: u64 = draws.lines().skip(1).map(|r| r.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 100);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for args in [
        vec!["simulate", "--init", "bogus:x=1", "--out", dir],
        vec!["simulate", "--init", "coherent:alpha=zz", "--out", dir],
        vec!["simulate", "--init", "number:n=3", "--dt", "-1", "--out", dir],
        vec!["simulate", "--init", "number:n=3", "--trajectories", "0", "--out", dir],
        vec!["gf", "--init", "thermal:nbar=1", "--eta", "0", "--xi", "0", "--t", "-1"],
    ] {
        let out = qmeas(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn numerical_guards_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let truncation = qmeas(&["simulate", "--init", "number:n=3", "--dim", "3", "--out", dir]);
    assert_eq!(truncation.status.code(), Some(3));
    let step = qmeas(&["simulate", "--init", "number:n=3", "--dt", "0.1", "--trajectories", "2", "--out", dir]);
    assert_eq!(step.status.code(), Some(3), "{}", String::from_utf8_lossy(&step.stderr));
}

#[test]
fn strict_oracle_failure_exits_4() {
    let base = ["oracle", "--init", "coherent:alpha=1+0i", "--trajectories", "300", "--t-final", "1"];
    let ok = qmeas(&[&base[..], &["--strict"]].concat());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let report = String::from_utf8_lossy(&ok.stdout);
    assert!(report.lines().all(|l| l.starts_with("PASS")), "{report}");

    let forced = qmeas(&[&base[..], &["--strict", "--moment-z", "0"]].concat());
    assert_eq!(forced.status.code(), Some(4));
    let lenient = qmeas(&[&base[..], &["--moment-z", "0"]].concat());
    assert_eq!(lenient.status.code(), Some(0));
}

fn value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim_start_matches(" = ").to_string()))
        .unwrap_or_else(|| panic!("no '{key}' in {stdout}"))
}

#[test]
fn gf_prints_m_and_moments() {
    let out = qmeas(&["gf", "--init", "number:n=3", "--xi", "0", "--eta", "0", "--t", "1"]);
    assert!(out.status.success());
    let s = String::from_utf8_lossy(&out.stdout);
    assert_eq!(value(&s, "M"), "1+0i");
    // Binomial(3, 1 − e^{−t}) thinned by γ₁/Γ = 1/2.
    let p = 0.5 * (1.0 - (-2.0f64).exp());
    let mean: f64 = value(&s, "E[N]").parse().unwrap();
    let var: f64 = value(&s, "Var[N]").parse().unwrap();
    assert!((mean - 3.0 * p).abs() < 1e-6, "{mean}");
    assert!((var - 3.0 * p * (1.0 - p)).abs() < 1e-6, "{var}");

    let out = qmeas(&["gf", "--init", "coherent:alpha=1+0i", "--xi", "0.5+0i", "--eta", "0.5", "--t", "1"]);
    assert!(out.status.success());
    let s = String::from_utf8_lossy(&out.stdout);
    for key in ["M", "E[N]", "Var[N]", "E[A]", "E|A-EA|^2"] {
        value(&s, key);
    }
}

#[test]
fn pdf_prints_log_density() {
    let out = qmeas(&["pdf", "--init", "number:n=3", "--m", "2", "--t", "1", "--A", "0.1+0i"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = String::from_utf8_lossy(&out.stdout);
    let v: f64 = value(&s, "log p_m").parse().unwrap();
    assert!(v.is_finite());

    let none = qmeas(&["pdf", "--init", "number:n=1", "--m", "2", "--t", "1", "--A", "0.1+0i"]);
    assert!(none.status.success());
    let s = String::from_utf8_lossy(&none.stdout);
    assert_eq!(value(&s, "log p_m"), "-inf");

    let bad = qmeas(&["pdf", "--init", "number:n=1", "--m", "-1", "--t", "1", "--A", "0"]);
    assert_eq!(bad.status.code(), Some(2));
}
