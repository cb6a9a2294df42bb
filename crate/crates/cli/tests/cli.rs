//! End-to-end tests of the `lavamap` binary: pipeline round trips, sidecar
//! contents, error messages, and exit codes (0 ok, 1 usage/config, 2 run).

mod common;

use common::*;
use std::fs;

const ONE_SCENARIO: &str = "scenario.t.poisson_mean = 0\n\
                            scenario.t.repeats = 40\n\
                            scenario.t.time_years = 5\n";

#[test]
fn demo_then_build_field_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let demo_dir = dir.path().join("demo");
    let out = run(&["demo", "--out", demo_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for name in ["cone_dem.asc", "history.csv", "event_table.csv", "demo.conf"] {
        assert!(demo_dir.join(name).is_file(), "missing {name}");
    }

    let conf = demo_dir.join("demo.conf");
    let out = run(&["build-field", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("total vents:"), "{text}");
    assert!(text.contains("class 0:"), "{text}");

    // The stage-1 outputs re-load as valid artifacts.
    let out_dir = demo_dir.join("out");
    let density = lavamap::Grid::from_ascii_file(out_dir.join("density.asc")).unwrap();
    let mass: f64 = density.values().iter().filter(|v| **v >= 0.0).sum::<f64>()
        * density.cell_area();
    assert!((mass - 1.0).abs() < 1e-6, "density mass {mass}");
    lavamap::Grid::from_ascii_file(out_dir.join("classes.asc")).unwrap();
    let vents = lavamap::VentSet::read_csv(std::io::BufReader::new(
        fs::File::open(out_dir.join("vents.csv")).unwrap(),
    ))
    .unwrap();
    assert!(vents.len() > 100, "only {} vents", vents.len());

    // Rerunning stage 1 with the same config is byte-identical.
    let before: Vec<Vec<u8>> = ["density.asc", "classes.asc", "vents.csv"]
        .iter()
        .map(|n| read_bytes(&out_dir.join(n)))
        .collect();
    let out = run(&["build-field", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for (name, old) in ["density.asc", "classes.asc", "vents.csv"].iter().zip(before) {
        assert_eq!(read_bytes(&out_dir.join(name)), old, "{name} changed on rerun");
    }
}

#[test]
fn simulate_writes_all_outputs_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), ONE_SCENARIO);
    let conf = conf.to_str().unwrap();

    let out = run(&["build-field", "--config", conf]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = run(&["simulate", "t", "--config", conf]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out_dir = dir.path().join("out");
    for name in ["t_prob.asc", "t_dz.asc", "t_meta.txt", "t_prob.ppm", "t_dz.ppm"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    // Sentinel poisson_mean 0: every run has exactly one activation.
    let meta = read_sidecar(&out_dir.join("t_meta.txt"));
    assert_eq!(sidecar_value(&meta, "label"), "t");
    assert_eq!(sidecar_value(&meta, "seed"), "11");
    assert_eq!(sidecar_value(&meta, "repeats"), "40");
    assert_eq!(sidecar_value(&meta, "runs"), "40");
    assert_eq!(sidecar_value(&meta, "total_activations"), "40");
    assert_eq!(sidecar_value(&meta, "poisson_mean"), "0");
    assert_eq!(sidecar_value(&meta, "realization"), "uniform");
    assert_eq!(sidecar_value(&meta, "time_years"), "5");
    let max_prob: f64 = sidecar_value(&meta, "max_prob").parse().unwrap();
    assert!((0.0..=1.0).contains(&max_prob));

    // The probability raster re-loads with values in [0, 1].
    let prob = lavamap::Grid::from_ascii_file(out_dir.join("t_prob.asc")).unwrap();
    let mut seen_max = 0.0_f64;
    for v in prob.values() {
        if !prob.is_nodata(*v) {
            assert!((0.0..=1.0).contains(v), "probability {v}");
            seen_max = seen_max.max(*v);
        }
    }
    assert_eq!(seen_max, max_prob);

    // PPM headers are well-formed for the DEM's size.
    let ppm = read_bytes(&out_dir.join("t_prob.ppm"));
    let header = b"P6\n24 24\n255\n";
    assert!(ppm.starts_with(header));
    assert_eq!(ppm.len(), header.len() + 24 * 24 * 3);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), ONE_SCENARIO);
    let conf = conf.to_str().unwrap();
    run(&["build-field", "--config", conf]);

    let out = run(&["simulate", "t", "--config", conf, "--seed", "99"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let meta = read_sidecar(&dir.path().join("out").join("t_meta.txt"));
    assert_eq!(sidecar_value(&meta, "seed"), "99");
}

#[test]
fn exhaustive_outputs_and_rerun_identical() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), ONE_SCENARIO);
    let conf = conf.to_str().unwrap();
    run(&["build-field", "--config", conf]);

    let out = run(&["exhaustive", "--config", conf]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out_dir = dir.path().join("out");
    let meta = read_sidecar(&out_dir.join("exhaustive_meta.txt"));
    assert_eq!(sidecar_value(&meta, "mode"), "exhaustive");
    let pairs: usize = sidecar_value(&meta, "pairs").parse().unwrap();
    let vents = lavamap::VentSet::read_csv(std::io::BufReader::new(
        fs::File::open(out_dir.join("vents.csv")).unwrap(),
    ))
    .unwrap();
    assert_eq!(pairs, vents.len() * 2, "vents x 2 event classes");

    let files = ["exhaustive_prob.asc", "exhaustive_dz.asc", "exhaustive_meta.txt"];
    let before: Vec<Vec<u8>> = files.iter().map(|n| read_bytes(&out_dir.join(n))).collect();
    let out = run(&["exhaustive", "--config", conf]);
    assert_eq!(out.status.code(), Some(0));
    for (name, old) in files.iter().zip(before) {
        assert_eq!(read_bytes(&out_dir.join(name)), old, "{name} changed on rerun");
    }
}

#[test]
fn fit_round_trip_matches_library_solution() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios: String = [("a", 1), ("b", 2), ("c", 3), ("d", 4)]
        .iter()
        .map(|(label, t)| {
            format!(
                "scenario.{label}.poisson_mean = {t}\n\
                 scenario.{label}.repeats = 8\n\
                 scenario.{label}.time_years = {t}\n"
            )
        })
        .collect();
    let conf = write_fixture(dir.path(), &scenarios);
    let conf = conf.to_str().unwrap();
    run(&["build-field", "--config", conf]);
    for label in ["a", "b", "c", "d"] {
        let out = run(&["simulate", label, "--config", conf]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }

    let out = run(&["fit", "--config", conf]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);

    // Reconstruct the expected fit from the sidecars and compare the
    // printed coefficients against the library exactly.
    let out_dir = dir.path().join("out");
    let mut points: Vec<(f64, f64)> = ["a", "b", "c", "d"]
        .iter()
        .map(|label| {
            let meta = read_sidecar(&out_dir.join(format!("{label}_meta.txt")));
            (
                sidecar_value(&meta, "time_years").parse().unwrap(),
                sidecar_value(&meta, "max_prob").parse().unwrap(),
            )
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let times: Vec<f64> = points.iter().map(|p| p.0).collect();
    let probs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let expected = lavamap::fit_cubic(&times, &probs).unwrap();

    for (i, want) in expected.iter().enumerate() {
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("c{i} = ")))
            .unwrap_or_else(|| panic!("no c{i} line in:\n{text}"));
        let got: f64 = line.split(" = ").nth(1).unwrap().parse().unwrap();
        assert_eq!(got, *want, "c{i}");
    }
    for l in text.lines().filter(|l| l.starts_with("residual at")) {
        let r: f64 = l.rsplit(": ").next().unwrap().parse().unwrap();
        assert!(r < 1e-9, "{l}");
    }
}

#[test]
fn fit_with_three_scenarios_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios: String = [("a", 1), ("b", 2), ("c", 3)]
        .iter()
        .map(|(label, t)| {
            format!(
                "scenario.{label}.poisson_mean = 1\n\
                 scenario.{label}.repeats = 8\n\
                 scenario.{label}.time_years = {t}\n"
            )
        })
        .collect();
    let conf = write_fixture(dir.path(), &scenarios);
    let out = run(&["fit", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("exactly 4 horizons required"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_label_lists_known_labels() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), ONE_SCENARIO);
    let out = run(&["simulate", "nope", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("unknown scenario label 'nope'"), "{err}");
    assert!(err.contains("known labels: t"), "{err}");
}

#[test]
fn simulate_without_stage_one_says_so() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), ONE_SCENARIO);
    let out = run(&["simulate", "t", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("run build-field first"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = run(&["build-field"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--config"), "{}", stderr(&out));
}

#[test]
fn missing_dem_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), ONE_SCENARIO);
    fs::remove_file(dir.path().join("dem.asc")).unwrap();
    let out = run(&["build-field", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("dem file not found"), "{err}");
    assert!(err.contains("dem.asc"), "{err}");
}

#[test]
fn malformed_config_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), "scenario.t.poisson_mean == 0\n");
    let out = run(&["build-field", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("line 9"), "{err}");
}

#[test]
fn threads_zero_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_fixture(dir.path(), ONE_SCENARIO);
    let out = run(&[
        "build-field",
        "--config",
        conf.to_str().unwrap(),
        "--threads",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("--threads must be at least 1"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_subcommand_exits_one() {
    let out = run(&["erupt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("build-field"));
}
