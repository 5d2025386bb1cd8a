//! Golden files for the built-in scenarios and one exported moment system.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the files after an intended change.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::PathBuf;

use momentprop::augmentation::{build_moment_system, close_system, MomentSystemJson};
use momentprop::distributions::Distribution;
use momentprop::scenario::{builtin_names, load_scenario};

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{} differs from the golden file", path.display());
}

#[test]
fn serialized_specs_match_golden_files() {
    for name in builtin_names() {
        let scn = load_scenario(name).unwrap();
        if scn.name == name {
            golden(&format!("{name}.scn"), &scn.source.to_string());
        }
    }
}

#[test]
fn example5_moment_system_matches_golden_file() {
    let scn = load_scenario("example5").unwrap();
    let aug = close_system(&scn.spec, &scn.targets).unwrap();
    let ms = build_moment_system(&aug, 2, &scn.spec).unwrap();
    let json = serde_json::to_string_pretty(&MomentSystemJson::new(&scn.spec, &aug, &ms)).unwrap() + "\n";
    golden("example5_order2.json", &json);
}

#[test]
fn declared_laws_match_the_scenario_descriptions() {
    let u = |a, b| Distribution::uniform(a, b).unwrap();
    let n = |m, v| Distribution::normal(m, v).unwrap();
    let beta = |a, b| Distribution::beta(a, b).unwrap();
    let expected: Vec<(&str, &str, Distribution)> = vec![
        ("example5", "w", Distribution::gamma(1.0, 2.0).unwrap()),
        ("example5", "x", u(-0.1, 0.1)),
        ("example5", "theta", n(0.0, 1.0)),
        ("underwater", "w_v", u(-0.1, 0.1)),
        ("underwater", "w_theta", u(-0.1, 0.1)),
        ("underwater", "x", u(-0.1, 0.1)),
        ("underwater", "y", u(-0.1, 0.1)),
        ("underwater", "theta", u(FRAC_PI_4 - 0.1, FRAC_PI_4 + 0.1)),
        ("ground", "w_v", n(0.0, 1.0)),
        ("ground", "w_theta", beta(1.0, 3.0)),
        ("ground", "x", u(-0.1, 0.1)),
        ("ground", "y", u(-0.5, 0.5)),
        ("ground", "v", u(0.0, 0.1)),
        ("ground", "theta", u(FRAC_PI_2 - 0.1, FRAC_PI_2 + 0.1)),
        ("rimless", "gamma", n(FRAC_PI_4, 0.5)),
        ("rimless", "w2", u(-0.1, 0.1)),
        ("planar_aerial", "w_theta", u(-0.1, 0.1)),
        ("planar_aerial", "x", u(-0.1, 0.1)),
        ("planar_aerial", "y", u(0.4, 0.5)),
        ("planar_aerial", "theta", u(-0.1, 0.1)),
        ("planar_aerial", "vx", u(-0.1, 0.1)),
        ("planar_aerial", "vy", u(-0.1, 0.1)),
        ("aerial3d", "w_v", beta(1.0, 3.0)),
        ("aerial3d", "w_theta", n(0.0, 0.3)),
        ("aerial3d", "w_psi", u(-0.1, 0.1)),
        ("aerial3d", "x", u(-0.1, 0.1)),
        ("aerial3d", "y", u(-0.1, 0.1)),
        ("aerial3d", "z", u(0.1, 0.3)),
        ("aerial3d", "theta", beta(1.0, 3.0)),
        ("aerial3d", "psi", beta(3.0, 3.0)),
        ("diffdrive", "w_l", u(-0.1, 0.1)),
        ("diffdrive", "w_r", beta(1.0, 3.0)),
        ("diffdrive", "x", u(-0.1, 0.1)),
        ("diffdrive", "y", u(-0.1, 0.1)),
        ("diffdrive", "theta", n(0.0, 0.1)),
        ("arm", "x_B", u(-0.1, 0.1)),
        ("arm", "y_B", n(0.0, 1.0)),
        ("arm", "z_B", beta(3.0, 1.0)),
        ("arm", "t1", u(-0.1, 0.1)),
        ("arm", "t2", n(FRAC_PI_4, 1.0)),
        ("arm", "t3", Distribution::gamma(1.0, 2.0).unwrap()),
    ];
    for (scenario, symbol, law) in expected {
        let scn = load_scenario(scenario).unwrap();
        let id = scn.spec.table.lookup(symbol).unwrap_or_else(|| panic!("{scenario}: no symbol {symbol}"));
        let got = scn.spec.disturbances.get(&id).or_else(|| scn.spec.initial.get(&id)).unwrap();
        assert_eq!(*got, law, "{scenario}.{symbol}");
    }
}
