use std::path::Path;
use std::process::{Command, Output};

fn momentprop(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_momentprop"))
        .args(args)
        .env("MOMPROP_OUT", out)
        .env_remove("CI")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn propagate_writes_csv_to_the_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = momentprop(&["propagate", "example5", "--orders", "1..5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("example5_exact.csv")).unwrap();
    assert!(csv.starts_with("k,order,monomial,value,standard_error\n"));
    let row = csv.lines().find(|l| l.starts_with("5,1,x,")).unwrap();
    let v: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((v - 0.2974).abs() < 1e-3);
}

#[test]
fn out_flag_overrides_the_environment() {
    let (env_dir, flag_dir) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let flag = flag_dir.path().to_str().unwrap();
    let o = momentprop(&["propagate", "example1", "--format", "csv,json", "--out", flag], env_dir.path());
    assert!(o.status.success());
    assert!(flag_dir.path().join("example1_exact.csv").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(flag_dir.path().join("example1_exact.json")).unwrap()).unwrap();
    assert_eq!(json["method"], "exact");
    assert!(std::fs::read_dir(env_dir.path()).unwrap().next().is_none());
}

#[test]
fn seeded_monte_carlo_output_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["propagate", "underwater", "-m", "montecarlo", "--ns", "20000", "--seed", "42", "--orders", "1..2"];
    assert!(momentprop(&args, a.path()).status.success());
    assert!(momentprop(&args, b.path()).status.success());
    let read = |d: &Path| std::fs::read(d.join("underwater_montecarlo.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn zero_horizon_reports_initial_moments() {
    let dir = tempfile::tempdir().unwrap();
    let o = momentprop(&["propagate", "rimless", "--horizon", "0"], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("rimless_exact.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("0,")));
    assert!(csv.contains("0,2,w2^2,0.00333"));
}

#[test]
fn every_method_runs() {
    let dir = tempfile::tempdir().unwrap();
    for m in ["exact", "direct", "linear", "unscented", "montecarlo"] {
        let o = momentprop(&["propagate", "table1_case2", "-m", m, "--ns", "1000", "--seed", "1"], dir.path());
        assert!(o.status.success(), "{m}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("table1_case2_{m}.csv")).exists());
    }
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "[states]\nx\n[dynamics]\nx = x +* 1\n").unwrap();
    let undeclared = dir.path().join("undeclared.scn");
    std::fs::write(&undeclared, "[states]\nx\n[dynamics]\nx = x + q\n[initial]\nx = point(0)\n[run]\nname = u\nhorizon = 1\n").unwrap();
    let cases: [(&[&str], i32); 6] = [
        (&["propagate", "example1", "--method", "nonsense"], 2),
        (&["propagate", "example1", "--orders", "3..x"], 2),
        (&["propagate", bad.to_str().unwrap()], 3),
        (&["propagate", undeclared.to_str().unwrap()], 3),
        (&["propagate", "no_such_scenario"], 3),
        (&["export-system", "example5", "--order", "0"], 2),
    ];
    for (args, code) in cases {
        let o = momentprop(args, dir.path());
        assert_eq!(o.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn validation_errors_name_the_symbol() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("undeclared.scn");
    std::fs::write(&f, "[states]\nx\n[dynamics]\nx = x + q\n[initial]\nx = point(0)\n[run]\nname = u\nhorizon = 1\n").unwrap();
    let o = momentprop(&["propagate", f.to_str().unwrap()], dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains('q'));
}

#[test]
fn ci_mode_requires_a_seed_for_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_momentprop")).args(args).env("CI", "true").env("MOMPROP_OUT", dir.path()).output().unwrap()
    };
    assert_eq!(run(&["propagate", "example1", "-m", "montecarlo", "--ns", "100"]).status.code(), Some(2));
    assert_eq!(run(&["compare", "table2", "--ns", "100"]).status.code(), Some(2));
    assert!(run(&["propagate", "example1", "-m", "montecarlo", "--ns", "100", "--seed", "3"]).status.success());
    assert!(run(&["propagate", "example1"]).status.success());
}

#[test]
fn compare_prints_a_report_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = momentprop(&["compare", "table2", "--ns", "20000", "--seed", "9"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("Var(z)") && text.contains("unscented"));
    let csv = std::fs::read_to_string(dir.path().join("compare_table2.csv")).unwrap();
    assert!(csv.starts_with("case,statistic,method,value,standard_error,reference,deviation,flag,note\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 4);

    let o = momentprop(&["compare", "example5", "--ns", "20000", "--seed", "9", "--orders", "1..2"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("compare_example5.csv").exists());
}

#[test]
fn list_and_describe() {
    let dir = tempfile::tempdir().unwrap();
    let list = stdout(&momentprop(&["list"], dir.path()));
    for name in ["example1", "example3", "table1", "underwater", "arm", "aerial3d"] {
        assert!(list.lines().any(|l| l.starts_with(name)), "{name} missing from list");
    }
    let d = stdout(&momentprop(&["describe", "aerial3d"], dir.path()));
    assert!(d.contains("augmented basis (9 functionals)"));
    assert!(d.contains("order 6: moment system 3003 x 3003 per step"));
    let src = stdout(&momentprop(&["describe", "example5", "--source"], dir.path()));
    assert!(src.contains("[dynamics]") && src.contains("gamma(1, 2)"));
}

#[test]
fn export_system_emits_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = momentprop(&["export-system", "example5", "--order", "2"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
    let file = dir.path().join("sys.json");
    let o = momentprop(&["export-system", "example5", "--order", "2", "--out", file.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert_eq!(std::fs::read(&file).unwrap(), momentprop(&["export-system", "example5", "--order", "2"], dir.path()).stdout);
}
