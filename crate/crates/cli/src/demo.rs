//! Self-contained demo fixture: a synthetic volcanic cone, a small vent
//! history clustered on its south flank, the bundled event table, and a
//! ready-to-run config, so the whole pipeline works with no external data.

use std::fs;
use std::path::{Path, PathBuf};

use lavamap::{Error, Grid, Result, VentRecord, BUILTIN_TABLE_CSV};

pub const DEM_SIZE: usize = 101;
pub const DEM_CELLSIZE: f64 = 400.0;
/// UTM-like origin so coordinate mapping is exercised with nonzero offsets.
pub const DEM_XLL: f64 = 485_000.0;
pub const DEM_YLL: f64 = 4_160_000.0;
pub const SUMMIT_ALTITUDE: f64 = 3_300.0;
/// Meters of altitude lost per meter of horizontal distance from the summit.
pub const CONE_SLOPE: f64 = 0.22;
pub const NODATA: f64 = -9999.0;

/// Radially symmetric cone with its summit at the grid center and a flat
/// apron where the flank would drop below sea level.
pub fn cone_dem() -> Grid {
    let mut dem = Grid::filled(
        DEM_SIZE, DEM_SIZE, DEM_XLL, DEM_YLL, DEM_CELLSIZE, NODATA, 0.0,
    )
    .expect("demo grid parameters are valid");
    let center = (DEM_SIZE as f64 - 1.0) / 2.0;
    for row in 0..DEM_SIZE {
        for col in 0..DEM_SIZE {
            let dx = (col as f64 - center) * DEM_CELLSIZE;
            let dy = (row as f64 - center) * DEM_CELLSIZE;
            let dist = (dx * dx + dy * dy).sqrt();
            dem.set(row, col, (SUMMIT_ALTITUDE - CONE_SLOPE * dist).max(0.0));
        }
    }
    dem
}

/// Fourteen historical flank vents ringing the edifice at 3.5 to 11 km
/// from the summit (at (505_200, 4_180_200)), densest on the south flank;
/// the two most recent are double-weighted. Spreading vents around every
/// flank keeps single-flow footprints from piling onto one sector, so
/// per-cell invasion probabilities stay below saturation even for long
/// horizons.
pub fn history() -> Vec<VentRecord> {
    const POINTS: [(f64, f64, f64); 14] = [
        // south sector
        (503_700.0, 4_174_700.0, 2.0),
        (507_200.0, 4_172_700.0, 2.0),
        (500_700.0, 4_174_200.0, 1.0),
        (510_700.0, 4_176_200.0, 1.0),
        (505_700.0, 4_169_700.0, 1.0),
        // east
        (511_700.0, 4_181_700.0, 1.0),
        (514_200.0, 4_178_200.0, 1.0),
        // west
        (498_200.0, 4_179_200.0, 1.0),
        (495_700.0, 4_182_700.0, 1.0),
        // north
        (506_200.0, 4_186_700.0, 1.0),
        (502_200.0, 4_188_200.0, 1.0),
        (509_200.0, 4_189_200.0, 1.0),
        // diagonals
        (512_200.0, 4_185_200.0, 1.0),
        (499_200.0, 4_185_700.0, 1.0),
    ];
    POINTS
        .iter()
        .map(|&(x, y, weight)| VentRecord { x, y, weight })
        .collect()
}

/// Config spanning a forecast ladder: the next eruption (one activation
/// per run) and 25/50/100-year horizons with Poisson activation counts,
/// each horizon traded against its repeat count.
pub fn config_text(seed: u64) -> String {
    format!(
        "# Synthetic cone demo. Paths are relative to this file.\n\
         dem = cone_dem.asc\n\
         vents = history.csv\n\
         event_table = event_table.csv\n\
         output_dir = out\n\
         seed = {seed}\n\
         \n\
         field.classes = 4\n\
         field.bandwidth = auto\n\
         field.base_spacing = 750\n\
         \n\
         ca.adherence = 0.8\n\
         ca.relaxation = 0.5\n\
         ca.step_dt = 0.25\n\
         ca.halt_flux = 1e-4\n\
         ca.invasion_threshold = 0.01\n\
         ca.max_steps_factor = 20\n\
         \n\
         # poisson_mean 0 means exactly one vent activation per run.\n\
         scenario.next.poisson_mean = 0\n\
         scenario.next.repeats = 1000\n\
         scenario.next.time_years = 7.76\n\
         \n\
         scenario.y25.poisson_mean = 3\n\
         scenario.y25.repeats = 330\n\
         scenario.y25.time_years = 25\n\
         \n\
         scenario.y50.poisson_mean = 7\n\
         scenario.y50.repeats = 142\n\
         scenario.y50.time_years = 50\n\
         \n\
         scenario.y100.poisson_mean = 13\n\
         scenario.y100.repeats = 78\n\
         scenario.y100.time_years = 100\n"
    )
}

/// Writes the four demo files into `dir`, returning their paths in the
/// order written.
pub fn write_demo(dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;

    let dem_path = dir.join("cone_dem.asc");
    cone_dem().to_ascii_file(&dem_path, 3)?;

    let history_path = dir.join("history.csv");
    let mut csv = String::from("x,y,weight\n");
    for r in history() {
        csv.push_str(&format!("{},{},{}\n", r.x, r.y, r.weight));
    }
    fs::write(&history_path, csv).map_err(|e| Error::from(e).in_file(&history_path))?;

    let table_path = dir.join("event_table.csv");
    fs::write(&table_path, BUILTIN_TABLE_CSV)
        .map_err(|e| Error::from(e).in_file(&table_path))?;

    let conf_path = dir.join("demo.conf");
    fs::write(&conf_path, config_text(seed))
        .map_err(|e| Error::from(e).in_file(&conf_path))?;

    Ok(vec![dem_path, history_path, table_path, conf_path])
}
