//! End-to-end CLI tests: exit-code contract, CSV shape, reduce/run round
//! trips, compare verdicts, sweep bookkeeping.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_contact-reduce")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("scenarios")
}

fn tmp(name: &str) -> PathBuf {
    let dir =
        std::env::temp_dir().join(format!("contact-reduce-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn check_passes_on_kepler() {
    let cfg = scenarios().join("kepler_check.toml");
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("verdict = pass"), "{stdout}");
    assert!(stdout.contains("liouville_residual"), "{stdout}");
    assert!(
        stdout.contains("scaling_function_residual[rho]"),
        "{stdout}"
    );
}

#[test]
fn check_fails_on_wrong_degree() {
    let cfg = scenarios().join("kepler_check_wrong_degree.toml");
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 1, "{stdout}");
    assert!(stdout.contains("degree_residual"), "{stdout}");
    assert!(stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn malformed_config_exits_2() {
    let dir = tmp("schema");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "[system]\nbundle = \"kepler\"\nunknown_key = 3\n").unwrap();
    let out = run(&["check", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("schema error"), "{stderr}");
}

#[test]
fn missing_config_flag_exits_2() {
    let out = run(&["check"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn circular_run_writes_629_rows_and_closes() {
    let dir = tmp("circular");
    let cfg = scenarios().join("kepler_circular_run.toml");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("circular.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,q1,q2,p1,p2,energy");
    // round(2π/0.01) = 628 steps -> 629 data rows.
    assert_eq!(lines.len() - 1, 629, "row count");
    let last: Vec<f64> = lines
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let expect = [std::f64::consts::TAU, 1.0, 0.0, 0.0, 1.0];
    for (a, b) in last[..5].iter().zip(expect) {
        assert!((a - b).abs() < 1e-8, "{last:?}");
    }
    assert!((last[5] + 0.5).abs() < 1e-9, "energy column");
}

#[test]
fn zero_span_run_yields_header_plus_one_row() {
    let dir = tmp("zerospan");
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        r#"
[system]
bundle = "kepler"

[run]
t_span = [0.0, 0.0]
initial = [1.0, 0.0, 0.0, 1.0]

[output]
csv = "zero.csv"
"#,
    )
    .unwrap();
    let out = run(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("zero.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn reduce_emits_closed_form_and_run_reproduces_it_bit_for_bit() {
    let dir = tmp("roundtrip");
    let cfg = scenarios().join("kepler_reduce.toml");
    let out = run(&[
        "reduce",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("H0 = "), "{stdout}");
    let reduced_path = dir.join("kepler-rho-reduced.toml");
    let body = std::fs::read_to_string(&reduced_path).unwrap();
    assert!(body.contains("hamiltonian"), "{body}");
    assert!(
        body.contains("S^2.0/4.0"),
        "emitted form should be the closed form: {body}"
    );

    // Fixed-step reduced run straight from the bundle...
    let run_a = dir.join("direct.toml");
    std::fs::write(
        &run_a,
        r#"
[system]
bundle = "kepler"

[scaling]
chart = "rho"

[integrator]
method = "rk4-fixed"
step = 0.01

[run]
space = "reduced"
t_span = [0.0, 5.0]
initial = [0.0, -0.9, 0.3]

[output]
csv = "a.csv"
"#,
    )
    .unwrap();
    // ... and from the emitted description file.
    let run_b = dir.join("fromfile.toml");
    std::fs::write(
        &run_b,
        format!(
            r#"
[system]
reduced_file = "{}"

[integrator]
method = "rk4-fixed"
step = 0.01

[run]
t_span = [0.0, 5.0]
initial = [0.0, -0.9, 0.3]

[output]
csv = "b.csv"
"#,
            reduced_path.display()
        ),
    )
    .unwrap();
    for cfg in [&run_a, &run_b] {
        let out = run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.join("a.csv")).unwrap();
    let b = std::fs::read(dir.join("b.csv")).unwrap();
    assert_eq!(a, b, "reduced round trip must be bit-for-bit identical");
}

#[test]
fn lifted_reduce_emits_a_degree_one_description() {
    let dir = tmp("lifted-reduce");
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        r#"
[system]
bundle = "kepler"

[scaling]
chart = "rho"
lifted = true
"#,
    )
    .unwrap();
    let out = run(&[
        "reduce",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(dir.join("kepler-lifted-lifted-rho-reduced.toml")).unwrap();
    assert!(body.contains("degree = 1.0"), "{body}");
    assert!(body.contains("pb2"), "coupling variables present: {body}");
}

#[test]
fn compare_passes_on_kepler_ellipse() {
    let cfg = scenarios().join("kepler_compare.toml");
    let out = run(&["compare", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("sup_deviation"), "{stdout}");
    assert!(stdout.contains("verdict = pass"), "{stdout}");
}

#[test]
fn compare_fails_with_wrong_degree() {
    let dir = tmp("wrongdeg");
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        r#"
[system]
bundle = "kepler"

[scaling]
chart = "rho"
degree = 2.0

[run]
initial = [1.0, 0.2, 0.1, 1.1]
t_span = [0.0, 9.0]

[compare]
tolerance = 1e-5
"#,
    )
    .unwrap();
    let out = run(&["compare", "--config", path.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 1, "{stdout}");
    assert!(stdout.contains("verdict = fail"), "{stdout}");
}

#[test]
fn parallelism_mode_passes() {
    let cfg = scenarios().join("kepler_parallelism.toml");
    let out = run(&["compare", "--config", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("parallelism_residual"), "{stdout}");
}

#[test]
fn sweep_reproduces_the_loop_action_law() {
    let dir = tmp("sweep-action");
    let cfg = scenarios().join("kepler_sweep_loop_action.toml");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 4, "{summary}");
    let pi = std::f64::consts::PI;
    let expected = [3.0 * pi, 3.0 * pi * 2.0f64.sqrt(), 6.0 * pi];
    for (line, expect) in lines[1..].iter().zip(expected) {
        let cells: Vec<&str> = line.split(',').collect();
        // run, axis value, status, stop, loop_action, energy_drift
        assert_eq!(cells[2], "ok", "{line}");
        let action: f64 = cells[4].parse().unwrap();
        assert!(
            (action - expect).abs() < 1e-6 * expect,
            "loop action {action} vs {expect}"
        );
    }
    for i in 0..3 {
        assert!(dir.join(format!("run_00{i}.csv")).exists());
    }
}

#[test]
fn sweep_grid_records_the_collision_stop() {
    let dir = tmp("sweep-grid");
    let cfg = scenarios().join("kepler_sweep_grid.toml");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 10, "9 runs + header: {summary}");
    let events = lines[1..]
        .iter()
        .filter(|l| l.contains("event:collision"))
        .count();
    let clean = lines[1..].iter().filter(|l| l.contains("span-end")).count();
    assert_eq!(events, 1, "{summary}");
    assert_eq!(clean, 8, "{summary}");
}

#[test]
fn torus_scenario_approaches_the_fixed_point() {
    let dir = tmp("torus");
    let cfg = scenarios().join("kepler_torus_run.toml");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("torus.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let cells: Vec<f64> = last.split(',').map(|v| v.parse().unwrap()).collect();
    // Columns: t, theta, pb, S, energy(H0), Jt, Gt.
    let jt = cells[5];
    let gt = cells[6];
    assert!(
        (jt - std::f64::consts::SQRT_2).abs() < 1e-4 && gt.abs() < 1e-4,
        "final (Jt, Gt) = ({jt}, {gt})"
    );
    assert!(dir.join("torus.gp").exists(), "plot script emitted");
}

#[test]
fn verlet_runs_on_the_separable_oscillator() {
    let dir = tmp("verlet");
    let cfg = scenarios().join("oscillator_verlet.toml");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("oscillator.csv")).unwrap();
    // Energy column stays near its initial value (symplectic drift bound).
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.ends_with("energy"));
    let first: Vec<f64> = lines
        .clone()
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let e0 = *first.last().unwrap();
    for line in lines {
        let e: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((e - e0).abs() < 1e-3, "energy drifted: {e} vs {e0}");
    }
}

#[test]
fn flrw_reduce_emits_the_friction_hamiltonian() {
    let dir = tmp("flrw");
    let cfg = scenarios().join("flrw_reduce.toml");
    let out = run(&[
        "reduce",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(dir.join("flrw-v-reduced.toml")).unwrap();
    assert!(body.contains("3.0*S^2.0"), "{body}");
}
