//! Shared fixture for binary-level tests: a small cone DEM, a four-vent
//! history, a short two-class event table, and a config referencing them.
#![allow(dead_code)] // shared by several test binaries, none uses everything

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lavamap"))
}

/// Runs the binary with `args`, panicking on spawn failure.
pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lavamap")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub const TINY_TABLE: &str = "dur_lo,dur_hi,vol_lo,vol_hi,probability\n\
                              0.5,1,0.02,0.04,0.7\n\
                              1,2,0.04,0.08,0.3\n";

/// 24x24 cone: summit 150 m at the center, 4 cm drop per meter.
pub fn tiny_dem() -> lavamap::Grid {
    let n = 24;
    let mut dem = lavamap::Grid::filled(n, n, 0.0, 0.0, 100.0, -9999.0, 0.0).unwrap();
    let c = (n as f64 - 1.0) / 2.0;
    for row in 0..n {
        for col in 0..n {
            let d = ((row as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt() * 100.0;
            dem.set(row, col, 150.0 - 0.04 * d);
        }
    }
    dem
}

/// Writes the fixture into `dir` and returns the config path. `scenarios`
/// is appended verbatim to the config body.
pub fn write_fixture(dir: &Path, scenarios: &str) -> PathBuf {
    tiny_dem().to_ascii_file(dir.join("dem.asc"), 3).unwrap();
    fs::write(
        dir.join("history.csv"),
        "x,y\n900,900\n1500,900\n900,1500\n1500,1500\n",
    )
    .unwrap();
    fs::write(dir.join("table.csv"), TINY_TABLE).unwrap();
    let config = format!(
        "dem = dem.asc\n\
         vents = history.csv\n\
         event_table = table.csv\n\
         output_dir = out\n\
         seed = 11\n\
         field.classes = 3\n\
         field.bandwidth = 400\n\
         field.base_spacing = 200\n\
         {scenarios}"
    );
    let path = dir.join("run.conf");
    fs::write(&path, config).unwrap();
    path
}

pub fn read_bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Parses a `key=value` sidecar into pairs.
pub fn read_sidecar(path: &Path) -> Vec<(String, String)> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect()
}

pub fn sidecar_value(entries: &[(String, String)], key: &str) -> String {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("sidecar missing '{key}'"))
        .1
        .clone()
}
