use std::path::Path;
use std::process::Command;

use serde_json::Value;

const EXAMPLE: &str = r#"{"num": [1, 0], "den": [1, -1.8, 0.81]}"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn report(&self) -> Value {
        serde_json::from_str(&self.stdout).expect("stdout is a JSON report")
    }
}

fn lurye(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_lurye"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("plant.json"), EXAMPLE).unwrap();
    std::fs::write(dir.path().join("static.json"), r#"{"num": [1], "den": [1]}"#).unwrap();
    std::fs::write(dir.path().join("delay.json"), r#"{"num": [1], "den": [1, 0]}"#).unwrap();
    std::fs::write(dir.path().join("unstable.json"), r#"{"num": [1], "den": [1, -1.5]}"#).unwrap();
    dir
}

#[test]
fn nyquist_examples() {
    let dir = workdir();
    let run = lurye(dir.path(), &["nyquist", "plant.json"]);
    assert_eq!(run.code, 0);
    let r = run.report();
    assert!((r["results"]["k_n"].as_f64().unwrap() - 3.61).abs() < 1e-4);
    assert_eq!(r["command"], "nyquist");
    assert_eq!(r["plant"]["den"][1], -1.8);

    let delay = lurye(dir.path(), &["nyquist", "delay.json"]).report();
    assert!((delay["results"]["k_n"].as_f64().unwrap() - 1.0).abs() < 1e-4);

    let flat = lurye(dir.path(), &["nyquist", "static.json", "--kmax", "50"]);
    assert_eq!(flat.code, 0);
    assert_eq!(flat.report()["results"]["no_crossing_le_kmax"], true);
}

#[test]
fn invalid_plant_exits_2_and_names_the_pole() {
    let dir = workdir();
    for cmd in ["nyquist", "phase-sweep"] {
        let run = lurye(dir.path(), &[cmd, "unstable.json"]);
        assert_eq!(run.code, 2);
        assert!(run.stderr.contains("pole magnitude 1.5"), "{}", run.stderr);
        assert_eq!(run.report()["status"], "error");
    }
    assert_eq!(lurye(dir.path(), &["nyquist", "missing.json"]).code, 2);
    let run = lurye(dir.path(), &["construct", "plant.json", "--alpha", "2", "--beta", "4"]);
    assert_eq!(run.code, 2);
}

#[test]
fn phase_sweep_tables() {
    let dir = workdir();
    let run = lurye(dir.path(), &["phase-sweep", "plant.json", "--beta-max", "20", "--format", "csv"]);
    assert_eq!(run.code, 0);
    let lines: Vec<&str> = run.stdout.lines().collect();
    assert_eq!(lines[0], "alpha,beta,T,omega,re,im,phase,kbar,feasible");
    assert!(lines[1].starts_with("2,7,7,"));
    let kbar: Vec<f64> = lines[1..]
        .iter()
        .filter(|l| l.ends_with(",true"))
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap_or(f64::INFINITY))
        .collect();
    assert!(kbar.windows(2).all(|w| w[0] <= w[1]));
    let feasible_done = lines[1..].iter().position(|l| l.ends_with(",false")).unwrap_or(lines.len() - 1);
    assert!(lines[1 + feasible_done..].iter().all(|l| l.ends_with(",false")));

    let odd = lurye(dir.path(), &["phase-sweep", "plant.json", "--odd"]).report();
    let top = &odd["results"]["rows"][0];
    assert_eq!((top["freq"]["alpha"].as_u64(), top["freq"]["beta"].as_u64()), (Some(1), Some(3)));
    assert!((top["kbar"].as_f64().unwrap() - 1.3575410).abs() < 1e-6);

    let none = lurye(dir.path(), &["phase-sweep", "static.json"]);
    assert_eq!(none.code, 3);
    assert_eq!(lurye(dir.path(), &["phase-sweep", "plant.json", "--beta-max", "1"]).code, 2);
}

#[test]
fn construct_then_verify_round_trip() {
    let dir = workdir();
    let run = lurye(
        dir.path(),
        &["construct", "plant.json", "--alpha", "2", "--beta", "7", "--slope", &format!("{:?}", 1.3028373 * 1.000001)],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let cert = &run.report()["results"]["certificate"];
    assert_eq!(cert["variant"], "slope_k");
    assert_eq!(cert["U_T"].as_array().unwrap().len(), 7);
    let verify = lurye(dir.path(), &["verify", "plant.json", "phi.json", "sig.csv", "--trajectory", "traj.csv"]);
    assert_eq!(verify.code, 0, "{}", verify.stdout);
    let traj = std::fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert!(traj.starts_with("k,y,u\n"));
    assert_eq!(traj.lines().count(), 20 * 7 + 1);

    let odd = lurye(
        dir.path(),
        &["construct", "plant.json", "--alpha", "1", "--beta", "3", "--odd", "--slope", &format!("{:?}", 1.3575410 * 1.000001)],
    );
    assert_eq!(odd.code, 0, "{}", odd.stderr);
    assert_eq!(odd.report()["results"]["certificate"]["phi"]["odd"], true);
}

#[test]
fn construct_below_kbar_exits_4() {
    let dir = workdir();
    let run = lurye(dir.path(), &["construct", "plant.json", "--alpha", "2", "--beta", "7", "--slope", "1.0"]);
    assert_eq!(run.code, 4);
    let r = run.report();
    assert!(r["results"]["phase"]["delta"].as_f64().unwrap().abs() > r["results"]["phase"]["bound"].as_f64().unwrap());
    assert!(!dir.path().join("phi.json").exists());
}

#[test]
fn tampered_and_zero_signals_exit_6() {
    let dir = workdir();
    assert_eq!(lurye(dir.path(), &["construct", "plant.json", "--alpha", "1", "--beta", "2", "--slope", "inf"]).code, 0);
    let sig = std::fs::read_to_string(dir.path().join("sig.csv")).unwrap();
    let mut lines: Vec<String> = sig.lines().map(String::from).collect();
    let fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    let bumped: f64 = fields[1].parse::<f64>().unwrap() + 0.1;
    lines[1] = format!("{},{bumped:?},{}", fields[0], fields[2]);
    std::fs::write(dir.path().join("tampered.csv"), lines.join("\n") + "\n").unwrap();
    let run = lurye(dir.path(), &["verify", "plant.json", "phi.json", "tampered.csv"]);
    assert_eq!(run.code, 6);
    assert!(run.report()["results"]["verdict"]["residual_linear"].as_f64().unwrap() > 0.01);

    let t = lines.len() - 1;
    let zeros: String = (0..t).map(|i| format!("{i},0.0,0.0\n")).collect();
    std::fs::write(dir.path().join("zero.csv"), format!("index,u,y\n{zeros}")).unwrap();
    let run = lurye(dir.path(), &["verify", "plant.json", "phi.json", "zero.csv"]);
    assert_eq!(run.code, 6);
    assert_eq!(run.report()["results"]["verdict"]["nontrivial"], false);
}

#[test]
fn every_feasible_pair_round_trips() {
    let dir = workdir();
    for odd in [false, true] {
        let mut args = vec!["phase-sweep", "plant.json", "--beta-max", "9"];
        if odd {
            args.push("--odd");
        }
        let sweep = lurye(dir.path(), &args).report();
        for row in sweep["results"]["rows"].as_array().unwrap() {
            let slope = match &row["kbar"] {
                Value::Number(k) => format!("{:?}", k.as_f64().unwrap() * 1.0001),
                Value::String(s) if s == "inf" => "inf".into(),
                _ => continue,
            };
            let (a, b) = (row["freq"]["alpha"].to_string(), row["freq"]["beta"].to_string());
            let mut args = vec!["construct", "plant.json", "--alpha", &a, "--beta", &b, "--slope", &slope];
            if odd {
                args.push("--odd");
            }
            let built = lurye(dir.path(), &args);
            assert_eq!(built.code, 0, "({a},{b}) odd={odd}: {}", built.stderr);
            let checked = lurye(dir.path(), &["verify", "plant.json", "phi.json", "sig.csv"]);
            assert_eq!(checked.code, 0, "({a},{b}) odd={odd}: {}", checked.stdout);
        }
    }
}

#[test]
fn results_are_deterministic() {
    let dir = workdir();
    let args = ["construct", "plant.json", "--alpha", "2", "--beta", "7", "--slope", "1.31"];
    let (a, b) = (lurye(dir.path(), &args).report(), lurye(dir.path(), &args).report());
    assert_eq!(a["results"], b["results"]);
    assert_eq!(a["params"], b["params"]);
    let phi1 = std::fs::read(dir.path().join("phi.json")).unwrap();
    lurye(dir.path(), &args);
    assert_eq!(phi1, std::fs::read(dir.path().join("phi.json")).unwrap());
}

#[test]
fn figure_data_outputs() {
    let dir = workdir();
    let (pi, tilt) = (std::f64::consts::PI, std::f64::consts::PI / 25.0);
    std::fs::write(
        dir.path().join("g1.json"),
        format!(r#"{{"anchor": {{"omega": {:?}, "re": {:?}, "im": {:?}}}}}"#, pi / 5.0, -tilt.cos(), -tilt.sin()),
    )
    .unwrap();
    let run = lurye(dir.path(), &["figure-data", "g1.json", "--alpha", "1", "--beta", "5", "--which", "vt", "--out", "vt.csv"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.report()["results"]["count"], 10);
    let csv = std::fs::read_to_string(dir.path().join("vt.csv")).unwrap();
    assert!(csv.starts_with("re,im\n1.0,0.0\n"));
    let phi = lurye(dir.path(), &["figure-data", "plant.json", "--alpha", "2", "--beta", "7", "--which", "phi", "--slope", "1.31", "--out", "phi.csv"]);
    assert_eq!(phi.code, 0);
    assert!(std::fs::read_to_string(dir.path().join("phi.csv")).unwrap().starts_with("y,v_lo,v_hi\n"));
    // the anchor is only defined at its own frequency
    let other = lurye(dir.path(), &["figure-data", "g1.json", "--alpha", "1", "--beta", "3", "--which", "gvt", "--out", "x.csv"]);
    assert_eq!(other.code, 2);
}
