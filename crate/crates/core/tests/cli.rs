use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ets-nash");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SOURCE_DATE_EPOCH");
    match threads {
        Some(n) => cmd.env("ETS_NASH_THREADS", n),
        None => cmd.env_remove("ETS_NASH_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn toy_solve_is_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = configs().join("toy.toml");
    let out = tmp.path().join("run");
    let mut archives = Vec::new();
    for threads in ["1", "4"] {
        let o = run(&["solve", "--config", s(&toy), "--out", s(&out)], Some(threads));
        assert!(o.status.success());
        archives.push(listing(&out));
        std::fs::remove_dir_all(&out).unwrap();
    }
    assert_eq!(archives[0], archives[1]);
    let names: Vec<&str> = archives[0].iter().map(|f| f.0.as_str()).collect();
    for f in ["config.toml", "solution.json", "trajectories.csv", "global.csv", "multipliers.csv", "convergence.csv", "manifest.json"] {
        assert!(names.contains(&f), "{f} missing");
    }
}

#[test]
fn no_ets_archive_has_no_price_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("noets");
    ok(&["solve", "--config", s(&configs().join("toy.toml")), "--no-ets", "--out", s(&out)]);
    let global = read(&out.join("global.csv"));
    assert!(!global.lines().next().unwrap().contains("price"));
    let mut rdr = csv::Reader::from_path(out.join("trajectories.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "permit_purchase").unwrap();
    for rec in rdr.records() {
        assert_eq!(rec.unwrap()[col].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn diagnose_and_compare_on_toy_archives() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = configs().join("toy.toml");
    let (a, b) = (tmp.path().join("ets"), tmp.path().join("noets"));
    ok(&["solve", "--config", s(&toy), "--out", s(&a)]);
    ok(&["solve", "--config", s(&toy), "--out", s(&b), "--no-ets"]);

    let single = tmp.path().join("d1");
    ok(&["diagnose", s(&a), "--out", s(&single)]);
    assert!(single.join("report.csv").exists() && !single.join("welfare.csv").exists());

    let pair = tmp.path().join("d2");
    ok(&["diagnose", s(&a), s(&b), "--out", s(&pair)]);
    let welfare = read(&pair.join("welfare.csv"));
    assert_eq!(welfare.lines().count(), 1 + 2);

    // Reversed roles are rejected.
    let bad = run(&["diagnose", s(&b), s(&a), "--out", s(&tmp.path().join("d3"))], None);
    assert_eq!(bad.status.code(), Some(2));

    let (c1, c2) = (tmp.path().join("c1"), tmp.path().join("c2"));
    ok(&["compare", s(&a), s(&b), "--out", s(&c1)]);
    ok(&["compare", s(&b), s(&a), "--out", s(&c2)]);
    for table in ["price.csv", "temperature.csv", "global_emissions.csv", "mac.csv", "scc.csv"] {
        let parse = |p: &Path| {
            let mut rdr = csv::Reader::from_path(p.join(table)).unwrap();
            let headers: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
            let rows: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect();
            (headers, rows)
        };
        let ((h1, r1), (h2, r2)) = (parse(&c1), parse(&c2));
        for label in ["toy", "toy_no_ets"] {
            let (i, j) = (h1.iter().position(|h| h == label).unwrap(), h2.iter().position(|h| h == label).unwrap());
            for (x, y) in r1.iter().zip(&r2) {
                assert_eq!(x[i], y[j], "{table} {label}");
            }
        }
    }
}

#[test]
fn tampered_archive_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("ets");
    ok(&["solve", "--config", s(&configs().join("toy.toml")), "--out", s(&a)]);
    let path = a.join("solution.json");
    let mut text = read(&path);
    text.push(' ');
    std::fs::write(&path, text).unwrap();
    let o = run(&["diagnose", s(&a), "--out", s(&tmp.path().join("d"))], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));
}

#[test]
fn iteration_budget_exhaustion_exits_3_and_keeps_last_iterate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = read(&configs().join("toy.toml")).replace("max_iterations = 2000", "max_iterations = 3");
    let path = tmp.path().join("short.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = tmp.path().join("run");
    let o = run(&["solve", "--config", s(&path), "--out", s(&out)], None);
    assert_eq!(o.status.code(), Some(3));
    let manifest = read(&out.join("manifest.json"));
    assert!(manifest.contains("\"converged\": false"));
    assert_eq!(read(&out.join("convergence.csv")).lines().count(), 1 + 3);
}

#[test]
fn invalid_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--config", s(&configs().join("toy.toml")), "--omega", "0", "--out", s(&tmp.path().join("x"))], None);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["solve", "--config", s(&tmp.path().join("missing.toml"))], None);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["solve", "--config", s(&configs().join("toy.toml")), "--cap-scenario", "netzero2020"], None);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["solve", "--config", s(&configs().join("toy.toml")), "--out", s(&tmp.path().join("y"))], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_reproduces_tables_and_feeds_solve() {
    let tmp = tempfile::tempdir().unwrap();
    let (c1, c2) = (tmp.path().join("c1"), tmp.path().join("c2"));
    ok(&["calibrate", "--out", s(&c1)]);
    let o = run(&["calibrate", "--out", s(&c2)], Some("2"));
    assert!(o.status.success());
    assert_eq!(listing(&c1), listing(&c2));

    let params: ets_nash::scenario::ParamsFile = toml::from_str(&read(&c1.join("params.toml"))).unwrap();
    assert!((params.zeta.unwrap() - 0.0021).abs() < 2e-4);
    let tfp = ets_nash::params::tables::tfp().unwrap();
    for (name, g0, d) in tfp {
        let r = params.regions.iter().find(|r| r.name == name).unwrap();
        assert!((r.g0.unwrap() / g0 - 1.0).abs() < 1e-3 && (r.d.unwrap() / d - 1.0).abs() < 1e-3, "{name}");
    }

    // Calibrated parameters and caps drive a short solve.
    let cfg = format!(
        "{}\n",
        read(&configs().join("baseline.toml"))
            .replace("cap_scenario = \"baseline\"", &format!("cap_scenario = \"custom:{}\"", s(&c1.join("caps.csv"))))
            .replace("regions = []", &format!("regions = []\nparams_file = \"{}\"", s(&c1.join("params.toml"))))
    );
    let path = tmp.path().join("calibrated.toml");
    std::fs::write(&path, cfg).unwrap();
    ok(&["solve", "--config", s(&path), "--out", s(&tmp.path().join("run"))]);
}

#[test]
fn calibrate_names_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    for entry in std::fs::read_dir(ets_nash::calibration::fixture::bundled_dir()).unwrap() {
        let e = entry.unwrap();
        if e.file_name() != "rcp.csv" {
            std::fs::copy(e.path(), data.join(e.file_name())).unwrap();
        }
    }
    let o = run(&["calibrate", "--data-dir", s(&data), "--out", s(&tmp.path().join("out"))], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rcp.csv"));
}
