//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lurye_core::interp::{interpolate, loop_transform_data, odd_append, DataPairSet};
use lurye_core::lti::circulant;
use lurye_core::lurye_sim::{periodic_steady_state, simulate_open_loop};
use lurye_core::phase_cert::{coprime_pairs, lemma1_holds};
use lurye_core::{Complex64, PeriodicSignal, TransferFunction};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

const K_N: f64 = 3.61;
const KBAR: f64 = 1.3028373;
const KBAR_ODD: f64 = 1.3575410;
const XI: f64 = 1.5985e-3;
const DC_TRANSFORMED: f64 = 100.7676;
const K_ZF: f64 = 1.3028317;
const K_ZF_ODD: f64 = 1.3511322;

struct Run {
    code: i32,
    report: Value,
}

fn lurye(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_lurye"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("lurye binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        report: serde_json::from_slice(&out.stdout).unwrap_or(Value::Null),
    }
}

fn write_plant(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn anchor_json(omega: f64, g: Complex64) -> String {
    format!(r#"{{"anchor":{{"omega":{omega:?},"re":{:?},"im":{:?}}},"dc":null}}"#, g.re, g.im)
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// Minimum critical slope from `phase-sweep`, with its (alpha, beta, T, omega).
fn top_row(dir: &Path, odd: bool) -> Option<(f64, u64, u64, u64, f64)> {
    let mut args = vec!["phase-sweep", "plant.json", "--beta-max", "20"];
    if odd {
        args.push("--odd");
    }
    let run = lurye(dir, &args);
    let row = run.report["results"]["rows"].get(0)?;
    Some((
        num(&row["kbar"]),
        row["freq"]["alpha"].as_u64()?,
        row["freq"]["beta"].as_u64()?,
        row["freq"]["period"].as_u64()?,
        num(&row["freq"]["omega"]),
    ))
}

fn criterion_1(dir: &Path) -> (bool, String) {
    let run = lurye(dir, &["nyquist", "plant.json"]);
    let k_n = num(&run.report["results"]["k_n"]);
    (run.code == 0 && (k_n - K_N).abs() < 1e-4, format!("k_N = {k_n:.6}"))
}

fn criterion_2(dir: &Path) -> (bool, String) {
    match top_row(dir, false) {
        Some((k, a, b, _, _)) => (
            (k - KBAR).abs() < 1e-6 && (a, b) == (2, 7),
            format!("kbar = {k:.10} at ({a},{b})"),
        ),
        None => (false, "no rows".into()),
    }
}

fn criterion_3(dir: &Path) -> (bool, String) {
    match top_row(dir, true) {
        Some((k, a, b, t, w)) => (
            (k - KBAR_ODD).abs() < 1e-6 && (a, b, t) == (1, 3, 6) && (w - PI / 3.0).abs() < 1e-12,
            format!("kbar_odd = {k:.10} at ({a},{b}), T = {t}, omega = {w:.6}"),
        ),
        None => (false, "no rows".into()),
    }
}

fn criterion_4(dir: &Path) -> (bool, String) {
    let Some((k, ..)) = top_row(dir, false) else {
        return (false, "no rows".into());
    };
    let k = format!("{k:?}");
    let run = lurye(
        dir,
        &["construct", "plant.json", "--alpha", "2", "--beta", "7", "--slope", &k,
          "--out", "phi_kbar.json", "--signals", "sig_kbar.csv"],
    );
    let cert = &run.report["results"]["certificate"];
    let (xi, dc) = (num(&cert["xi"]), num(&cert["transformed_dc"]));
    (
        run.code == 0 && (xi - XI).abs() < 1e-6 && (dc - DC_TRANSFORMED).abs() < 1e-3,
        format!("xi = {xi:.4e}, G~(1) = {dc:.4}"),
    )
}

fn criterion_5(dir: &Path) -> (bool, String) {
    let mut ok = true;
    let mut detail = Vec::new();
    for (odd, (alpha, beta)) in [(false, ("2", "7")), (true, ("1", "3"))] {
        let Some((k, ..)) = top_row(dir, odd) else {
            return (false, "no rows".into());
        };
        let slope = format!("{:?}", k * 1.0001);
        let mut args = vec!["construct", "plant.json", "--alpha", alpha, "--beta", beta, "--slope", &slope];
        if odd {
            args.push("--odd");
        }
        let built = lurye(dir, &args);
        let checked = lurye(dir, &["verify", "plant.json", "phi.json", "sig.csv", "--periods", "20"]);
        let per = num(&checked.report["results"]["verdict"]["residual_periodicity"]);
        ok &= built.code == 0 && checked.code == 0 && per < 1e-6;
        detail.push(format!(
            "{} ({alpha},{beta}): exits {}/{}, periodicity {per:.1e}",
            if odd { "odd" } else { "non-odd" },
            built.code,
            checked.code
        ));
    }
    (ok, detail.join("; "))
}

fn criterion_6(dir: &Path) -> (bool, String) {
    let k_n = num(&lurye(dir, &["nyquist", "plant.json"]).report["results"]["k_n"]);
    let kbar = top_row(dir, false).map_or(f64::NAN, |r| r.0);
    (kbar < k_n, format!("kbar = {kbar:.4} < k_N = {k_n:.4}"))
}

fn criterion_7(dir: &Path) -> (bool, String) {
    let kbar = top_row(dir, false).map_or(f64::NAN, |r| r.0);
    let kbar_odd = top_row(dir, true).map_or(f64::NAN, |r| r.0);
    (
        kbar >= K_ZF - 1e-6 && kbar_odd >= K_ZF_ODD - 1e-6,
        format!("kbar = {kbar:.7} >= {K_ZF}, kbar_odd = {kbar_odd:.7} >= {K_ZF_ODD}"),
    )
}

fn lemma1_brute_force(delta: f64, period: usize) -> bool {
    let rot = Complex64::from_polar(1.0, delta);
    (0..2 * period).all(|k| {
        let z = Complex64::from_polar(1.0, PI / period as f64 * k as f64 + PI / 2.0);
        (rot * z).re * z.re >= -1e-12
    })
}

fn random_stable_plant(rng: &mut StdRng) -> TransferFunction {
    let mut den = vec![1.0];
    for _ in 0..rng.random_range(1..=3) {
        let r: f64 = rng.random_range(0.05..0.85);
        let theta: f64 = rng.random_range(0.0..PI);
        let quad = [1.0, -2.0 * r * theta.cos(), r * r];
        let mut next = vec![0.0; den.len() + 2];
        for (i, a) in den.iter().enumerate() {
            for (j, b) in quad.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        den = next;
    }
    let num: Vec<f64> = (0..den.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    TransferFunction::new(num, den).unwrap()
}

fn monotone_points(rng: &mut StdRng, n: usize) -> Vec<(f64, f64)> {
    let (mut y, mut v) = (-2.0, -1.0);
    (0..n)
        .map(|_| {
            y += rng.random_range(0.0..1.0);
            v += rng.random_range(0.0..1.0);
            (y, v)
        })
        .collect()
}

fn criterion_8(_: &Path) -> (bool, String) {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut failures = Vec::new();

    let mut phase_cases = 0;
    for t in 1..=16usize {
        for i in 0..=628 {
            let d = -PI + i as f64 * 1e-2;
            if (d.abs() - PI / t as f64).abs() > 1e-9 {
                phase_cases += 1;
                if lemma1_holds(d, t).unwrap() != lemma1_brute_force(d, t) {
                    failures.push(format!("phase test at T={t}, delta={d}"));
                }
            }
        }
    }

    let mut circulant_worst: f64 = 0.0;
    let mut steady_worst: f64 = 0.0;
    for _ in 0..50 {
        let g = random_stable_plant(&mut rng);
        let ss = g.realize();
        for freq in coprime_pairs(8) {
            let t = freq.period();
            let c = circulant(&ss.impulse_tail_sums(t).unwrap());
            let v = freq.phasor();
            let gw = g.freq_response(freq.omega());
            for i in 0..t {
                let cv: Complex64 = (0..t).map(|j| v[j] * c[(i, j)]).sum();
                circulant_worst = circulant_worst.max((cv - gw * v[i]).norm());
            }
        }
        let t = rng.random_range(2..10);
        let u = PeriodicSignal::new((0..t).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let x0 = periodic_steady_state(&ss, &u).unwrap();
        let mut x = &x0 * 0.0;
        for _ in 0..400 {
            for k in 0..t {
                x = &ss.a * &x + &ss.b * u.at(k);
            }
        }
        steady_worst = steady_worst.max((&x - &x0).amax());
        let y = simulate_open_loop(&ss, &x0, u.values());
        let expected = g.periodic_response(&u).unwrap();
        for (k, v) in y.iter().enumerate() {
            steady_worst = steady_worst.max((v - expected.at(k)).abs());
        }
    }
    if circulant_worst >= 1e-8 {
        failures.push(format!("circulant residual {circulant_worst:e}"));
    }
    if steady_worst >= 1e-9 {
        failures.push(format!("steady state residual {steady_worst:e}"));
    }

    for _ in 0..200 {
        let n = rng.random_range(1..10);
        let points = monotone_points(&mut rng, n);
        let data = DataPairSet::from_xy(&points);
        let phi = interpolate(&data).unwrap();
        if !points.iter().all(|&(y, v)| phi.evaluate(y).contains(v, 1e-10)) {
            failures.push("interpolation misses a data pair".into());
        }
        let (a, b) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if phi.evaluate(lo).hi > phi.evaluate(hi).lo + 1e-12 {
            failures.push("interpolant decreases".into());
        }
        let k = rng.random_range(0.1..10.0);
        let bounded = interpolate(&loop_transform_data(&data, k).unwrap()).unwrap();
        if bounded.max_slope() > k * (1.0 + 1e-9) {
            failures.push(format!("slope {} exceeds {k}", bounded.max_slope()));
        }
        let pos: Vec<(f64, f64)> = points.iter().map(|&(y, v)| (y + 2.5, v + 1.5)).collect();
        let reflected = odd_append(&DataPairSet::from_xy(&pos));
        if let Ok(odd) = interpolate(&reflected) {
            let y = rng.random_range(0.0..5.0);
            let (p, m) = (odd.evaluate(y), odd.evaluate(-y));
            if !odd.is_odd() || (p.lo + m.hi).abs() > 1e-12 || (p.hi + m.lo).abs() > 1e-12 {
                failures.push("odd interpolant is not odd".into());
            }
        }
    }

    (
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "phase test on {phase_cases} cases, circulant {circulant_worst:.1e}, steady state {steady_worst:.1e}, 200 interpolation cases"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn criterion_9(dir: &Path) -> (bool, String) {
    let mut failures = Vec::new();
    let w = PI / 5.0;
    write_plant(dir, "g1.json", &anchor_json(w, -Complex64::from_polar(1.0, PI / 25.0)));
    write_plant(dir, "g2.json", &anchor_json(w, -Complex64::from_polar(1.0, PI / 10.0)));
    write_plant(dir, "g3.json", &anchor_json(2.0 * PI / 3.0, -Complex64::from_polar(1.0, PI / 3.0)));

    let points = |run: &Run| -> Vec<Complex64> {
        run.report["results"]["points"]
            .as_array()
            .map(|rows| rows.iter().map(|p| Complex64::new(num(&p[0]), num(&p[1]))).collect())
            .unwrap_or_default()
    };
    let vt = points(&lurye(dir, &["figure-data", "g1.json", "--alpha", "1", "--beta", "5", "--which", "vt", "--out", "vt.csv"]));
    let on_circle = vt.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12);
    let equidistant = vt.len() == 10
        && (0..10).all(|k| ((vt[(k + 1) % 10] - vt[k]).norm() - 2.0 * (PI / 10.0).sin()).abs() < 1e-12);
    let symmetric = vt.iter().all(|z| {
        vt.iter().any(|w| (w - z.conj()).norm() < 1e-12) && vt.iter().any(|w| (w + z.conj()).norm() < 1e-12)
    });
    if !(on_circle && equidistant && symmetric) {
        failures.push(format!("vt: {} points, circle {on_circle}, equidistant {equidistant}, symmetric {symmetric}", vt.len()));
    }
    let gvt = points(&lurye(dir, &["figure-data", "g1.json", "--alpha", "1", "--beta", "5", "--which", "gvt", "--out", "gvt.csv"]));
    let rot = Complex64::from_polar(1.0, PI + PI / 25.0);
    if gvt.len() != 10 || !gvt.iter().zip(&vt).all(|(g, v)| (g - rot * v).norm() < 1e-12) {
        failures.push("gvt is not V_T rotated by pi + pi/25".into());
    }
    let even = points(&lurye(dir, &["figure-data", "g3.json", "--alpha", "2", "--beta", "3", "--which", "vt", "--out", "vt3.csv"]));
    let expected = [Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, 2.0 * PI / 3.0), Complex64::from_polar(1.0, -2.0 * PI / 3.0)];
    if even.len() != 3 || !even.iter().zip(&expected).all(|(a, b)| (a - b).norm() < 1e-12) {
        failures.push(format!("(2,3) vt has {} points", even.len()));
    }

    let stair = lurye(dir, &["figure-data", "g2.json", "--alpha", "1", "--beta", "5", "--which", "phi", "--out", "phi2.csv"]);
    if stair.code != 0 || stair.report["results"]["stair_step"] != Value::Bool(true) {
        failures.push(format!("boundary plant: exit {}, stair_step {}", stair.code, stair.report["results"]["stair_step"]));
    }
    let odd = lurye(dir, &["figure-data", "g3.json", "--alpha", "2", "--beta", "3", "--which", "phi", "--odd", "--out", "phi3.csv"]);
    if odd.report["results"]["lemma2_check"] != Value::Bool(false) {
        failures.push(format!("odd appended data: lemma2_check {}", odd.report["results"]["lemma2_check"]));
    }

    (
        failures.is_empty(),
        if failures.is_empty() {
            "10 equidistant points, gvt rotation, (2,3) V_T, stair-step phi, non-monotone appended data".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    write_plant(dir.path(), "plant.json", r#"{"num": [1, 0], "den": [1, -1.8, 0.81]}"#);
    type Check = fn(&Path) -> (bool, String);
    let criteria: [(u32, &str, Check, Duration); 9] = [
        (1, "Nyquist gain", criterion_1, Duration::from_secs(1)),
        (2, "non-odd slope bound", criterion_2, Duration::from_secs(1)),
        (3, "odd slope bound", criterion_3, Duration::from_secs(1)),
        (4, "shift constant", criterion_4, Duration::from_secs(1)),
        (5, "cycle existence", criterion_5, Duration::from_secs(5)),
        (6, "counterexample inequality", criterion_6, Duration::from_secs(5)),
        (7, "bound-gap sanity", criterion_7, Duration::from_secs(5)),
        (8, "property suites", criterion_8, Duration::from_secs(60)),
        (9, "figure data", criterion_9, Duration::from_secs(5)),
    ];
    let mut all = true;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let (ok, detail) = check(dir.path());
        let elapsed = start.elapsed();
        let ok = ok && elapsed < budget;
        all &= ok;
        println!(
            "{} criterion {id} ({name}): {detail} [{:.0} ms, budget {} s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64() * 1e3,
            budget.as_secs()
        );
    }
    if !all {
        std::process::exit(1);
    }
}
