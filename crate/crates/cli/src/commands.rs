//! Subcommand implementations. Each returns a summary for the binary to
//! print; errors carry the phase that decides the exit code (setup 1,
//! run 2). Input loading and label resolution are setup; simulation and
//! output writing are run.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use lavamap::{
    default_absolute_breaks, exhaustive_hazard, fit_cubic, load_vent_records, read_sidecar,
    render_absolute, render_log_relative, run_scenario, write_ppm, write_sidecar, Error,
    EventSampler, EventTable, Grid, HazardInputs, HazardResult, Image, Palette,
    RealizationMode, VentSet, VentSampler,
};

use crate::config::{RunConfig, ScenarioSpec};
use crate::demo;
use crate::{CliError, PhaseExt};

/// Raster precision choices: densities are tiny (1/m^2 over km-scale
/// cells), probabilities and thicknesses are human-scale.
const DENSITY_PRECISION: usize = 15;
const MAP_PRECISION: usize = 6;

pub struct BuildFieldSummary {
    pub density_path: PathBuf,
    pub classes_path: PathBuf,
    pub vents_path: PathBuf,
    pub total_vents: usize,
    pub class_counts: Vec<usize>,
}

pub struct HazardFiles {
    pub prob_asc: PathBuf,
    pub dz_asc: PathBuf,
    pub meta: PathBuf,
    pub prob_ppm: PathBuf,
    pub dz_ppm: PathBuf,
    pub result: HazardResult,
}

pub struct FitPoint {
    pub label: String,
    pub time_years: f64,
    pub max_prob: f64,
    pub residual: f64,
}

pub struct FitSummary {
    pub coeffs: [f64; 4],
    pub points: Vec<FitPoint>,
}

/// Runs `f` under a rayon pool capped at `threads` workers. The cap only
/// changes scheduling; results are bit-identical for any value.
#[cfg(feature = "parallel")]
pub fn with_thread_cap<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_thread_cap<T>(threads: Option<usize>, f: impl FnOnce() -> T) -> T {
    let _ = threads;
    f()
}

pub fn cmd_build_field(cfg: &RunConfig) -> Result<BuildFieldSummary, CliError> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::setup(Error::from(e).in_file(&cfg.output_dir)))?;
    let dem = Grid::from_ascii_file(&cfg.dem).setup_phase()?;
    let reader = File::open(&cfg.vents)
        .map_err(Error::from)
        .and_then(|f| load_vent_records(BufReader::new(f)))
        .map_err(|e| e.in_file(&cfg.vents))
        .setup_phase()?;

    let density = lavamap::estimate_pdf(&reader, &dem, cfg.field.bandwidth).run_phase()?;
    let density_path = cfg.output_dir.join("density.asc");
    density
        .grid()
        .to_ascii_file(&density_path, DENSITY_PRECISION)
        .run_phase()?;

    let classes = lavamap::classify_density(&density, cfg.field.classes).run_phase()?;
    let classes_path = cfg.output_dir.join("classes.asc");
    classes
        .grid()
        .to_ascii_file(&classes_path, MAP_PRECISION)
        .run_phase()?;

    let vents = lavamap::generate_vent_grid(&classes, cfg.field.base_spacing, &dem).run_phase()?;
    let vents_path = cfg.output_dir.join("vents.csv");
    File::create(&vents_path)
        .and_then(|f| vents.write_csv(BufWriter::new(f)))
        .map_err(|e| Error::from(e).in_file(&vents_path))
        .run_phase()?;

    Ok(BuildFieldSummary {
        density_path,
        classes_path,
        vents_path,
        total_vents: vents.len(),
        class_counts: vents.class_counts(),
    })
}

/// Loads the DEM, the stage-1 vent grid, and the event table.
fn load_sim_inputs(cfg: &RunConfig) -> Result<(Grid, VentSet, EventTable), CliError> {
    let dem = Grid::from_ascii_file(&cfg.dem).setup_phase()?;

    let vents_path = cfg.output_dir.join("vents.csv");
    if !vents_path.is_file() {
        return Err(CliError::setup(Error::invalid(format!(
            "no vent grid at {}; run build-field first",
            vents_path.display()
        ))));
    }
    let vents = File::open(&vents_path)
        .map_err(Error::from)
        .and_then(|f| VentSet::read_csv(BufReader::new(f)))
        .map_err(|e| e.in_file(&vents_path))
        .setup_phase()?;

    let table = fs::read_to_string(&cfg.event_table)
        .map_err(Error::from)
        .and_then(|text| EventTable::from_csv_str(&text))
        .map_err(|e| e.in_file(&cfg.event_table))
        .setup_phase()?;

    Ok((dem, vents, table))
}

pub fn cmd_simulate(
    cfg: &RunConfig,
    label: &str,
    threads: Option<usize>,
) -> Result<HazardFiles, CliError> {
    let spec = cfg.scenario(label).setup_phase()?.clone();
    let (dem, vents, table) = load_sim_inputs(cfg)?;
    let vent_sampler = VentSampler::new(&vents).setup_phase()?;
    let event_sampler = EventSampler::new(&table).setup_phase()?;
    let inputs = HazardInputs {
        base: &dem,
        vents: &vent_sampler,
        events: &event_sampler,
        ca: &cfg.ca,
    };

    let result =
        with_thread_cap(threads, || run_scenario(&inputs, &spec.config)).run_phase()?;

    let sidecar = scenario_sidecar(&spec, &result);
    write_hazard_outputs(&cfg.output_dir, label, result, &sidecar)
}

pub fn cmd_exhaustive(cfg: &RunConfig, threads: Option<usize>) -> Result<HazardFiles, CliError> {
    let (dem, vents, table) = load_sim_inputs(cfg)?;
    let vent_sampler = VentSampler::new(&vents).setup_phase()?;
    let event_sampler = EventSampler::new(&table).setup_phase()?;
    let inputs = HazardInputs {
        base: &dem,
        vents: &vent_sampler,
        events: &event_sampler,
        ca: &cfg.ca,
    };

    let result = with_thread_cap(threads, || exhaustive_hazard(&inputs)).run_phase()?;

    let sidecar = vec![
        ("mode", "exhaustive".to_string()),
        ("pairs", result.runs.to_string()),
        ("max_prob", result.max_prob.to_string()),
    ];
    write_hazard_outputs(&cfg.output_dir, "exhaustive", result, &sidecar)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitSummary, CliError> {
    if cfg.scenarios.len() != 4 {
        return Err(CliError::setup(Error::invalid(format!(
            "exactly 4 horizons required, config defines {}",
            cfg.scenarios.len()
        ))));
    }

    let mut points = Vec::with_capacity(4);
    for spec in &cfg.scenarios {
        let label = &spec.config.label;
        let meta = cfg.output_dir.join(format!("{label}_meta.txt"));
        if !meta.is_file() {
            return Err(CliError::setup(Error::invalid(format!(
                "no sidecar at {}; run simulate '{label}' first",
                meta.display()
            ))));
        }
        let entries = File::open(&meta)
            .map_err(Error::from)
            .and_then(|f| read_sidecar(BufReader::new(f)))
            .map_err(|e| e.in_file(&meta))
            .setup_phase()?;
        let value = |key: &str| -> Result<f64, CliError> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .ok_or_else(|| {
                    CliError::setup(Error::invalid(format!(
                        "sidecar {} is missing key '{key}'",
                        meta.display()
                    )))
                })?
                .1
                .parse::<f64>()
                .map_err(|_| {
                    CliError::setup(Error::invalid(format!(
                        "sidecar {} has a non-numeric '{key}'",
                        meta.display()
                    )))
                })
        };
        points.push(FitPoint {
            label: label.clone(),
            time_years: value("time_years")?,
            max_prob: value("max_prob")?,
            residual: 0.0,
        });
    }
    points.sort_by(|a, b| a.time_years.total_cmp(&b.time_years));

    let times: Vec<f64> = points.iter().map(|p| p.time_years).collect();
    let probs: Vec<f64> = points.iter().map(|p| p.max_prob).collect();
    let coeffs = fit_cubic(&times, &probs).run_phase()?;
    for p in &mut points {
        let t = p.time_years;
        let fitted = coeffs[0] + coeffs[1] * t + coeffs[2] * t * t + coeffs[3] * t * t * t;
        p.residual = (fitted - p.max_prob).abs();
    }

    Ok(FitSummary { coeffs, points })
}

pub fn cmd_demo(dir: &Path, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    demo::write_demo(dir, seed).run_phase()
}

fn scenario_sidecar(spec: &ScenarioSpec, result: &HazardResult) -> Vec<(&'static str, String)> {
    let c = &spec.config;
    vec![
        ("label", c.label.clone()),
        ("seed", c.seed.to_string()),
        ("repeats", c.repeats.to_string()),
        ("poisson_mean", c.poisson_mean.to_string()),
        ("realization", realization_name(c.realization).to_string()),
        ("time_years", spec.time_years.to_string()),
        ("runs", result.runs.to_string()),
        ("total_activations", result.total_activations.to_string()),
        ("max_prob", result.max_prob.to_string()),
    ]
}

fn realization_name(mode: RealizationMode) -> &'static str {
    match mode {
        RealizationMode::Uniform => "uniform",
        RealizationMode::Midpoint => "midpoint",
    }
}

/// Writes the five output files for one hazard result:
/// `<stem>_{prob,dz}.asc`, `<stem>_meta.txt`, `<stem>_{prob,dz}.ppm`.
fn write_hazard_outputs(
    output_dir: &Path,
    stem: &str,
    result: HazardResult,
    sidecar: &[(&str, String)],
) -> Result<HazardFiles, CliError> {
    let prob_asc = output_dir.join(format!("{stem}_prob.asc"));
    result
        .invasion_prob
        .to_ascii_file(&prob_asc, MAP_PRECISION)
        .run_phase()?;

    let dz_asc = output_dir.join(format!("{stem}_dz.asc"));
    result
        .mean_delta_z
        .to_ascii_file(&dz_asc, MAP_PRECISION)
        .run_phase()?;

    let meta = output_dir.join(format!("{stem}_meta.txt"));
    File::create(&meta)
        .and_then(|f| write_sidecar(sidecar, BufWriter::new(f)))
        .map_err(|e| Error::from(e).in_file(&meta))
        .run_phase()?;

    let prob_ppm = output_dir.join(format!("{stem}_prob.ppm"));
    let relative = Palette::relative_default();
    let prob_image = if result.max_prob > 0.0 {
        render_log_relative(&result.invasion_prob, &relative).run_phase()?
    } else {
        background_image(&result.invasion_prob, &relative)
    };
    write_image(&prob_ppm, &prob_image).run_phase()?;

    let dz_ppm = output_dir.join(format!("{stem}_dz.ppm"));
    let dz_image = render_absolute(
        &result.mean_delta_z,
        &default_absolute_breaks(),
        &Palette::absolute_default(),
    )
    .run_phase()?;
    write_image(&dz_ppm, &dz_image).run_phase()?;

    Ok(HazardFiles {
        prob_asc,
        dz_asc,
        meta,
        prob_ppm,
        dz_ppm,
        result,
    })
}

/// All-background image for a raster with nothing to show.
fn background_image(grid: &Grid, palette: &Palette) -> Image {
    let mut image = Image::new(grid.ncols(), grid.nrows());
    for y in 0..grid.nrows() {
        for x in 0..grid.ncols() {
            image.set_pixel(x, y, palette.background);
        }
    }
    image
}

fn write_image(path: &Path, image: &Image) -> lavamap::Result<()> {
    File::create(path)
        .and_then(|f| write_ppm(image, BufWriter::new(f)))
        .map_err(|e| Error::from(e).in_file(path))
}
