//! Monte Carlo and exhaustive hazard aggregation.
//!
//! A scenario is a batch of independent forecast runs. Each run gets its
//! own counter-based RNG stream derived from the scenario seed and the run
//! index, so the sequence of draws inside a run never depends on scheduling.
//! Runs are folded into fixed-size chunks and the chunk sums are combined
//! in ascending order, which makes the aggregate bit-identical whether the
//! chunks were computed sequentially or on any number of threads.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::event_model::{sample_poisson, EventSampler, RealizationMode};
use crate::lava_ca::{simulate_flow, CaParams};
use crate::raster::Grid;
use crate::vent_field::VentSampler;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to schedule a scenario's runs. `Parallel` uses the rayon thread pool
/// when the `parallel` feature is enabled and falls back to sequential
/// execution otherwise; results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

/// One forecast scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub label: String,
    /// Expected number of vent activations per run; the sentinel 0 means
    /// exactly one activation per run instead of a Poisson draw.
    pub poisson_mean: f64,
    pub repeats: usize,
    pub seed: u64,
    pub realization: RealizationMode,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::invalid("scenario label is empty"));
        }
        if !self.poisson_mean.is_finite() || self.poisson_mean < 0.0 {
            return Err(Error::invalid(format!(
                "scenario '{}': poisson_mean must be finite and non-negative, got {}",
                self.label, self.poisson_mean
            )));
        }
        if self.repeats == 0 {
            return Err(Error::invalid(format!(
                "scenario '{}': repeats must be at least 1",
                self.label
            )));
        }
        Ok(())
    }
}

/// Everything a scenario needs: terrain, vent die, event die, flow params.
#[derive(Debug, Clone, Copy)]
pub struct HazardInputs<'a> {
    pub base: &'a Grid,
    pub vents: &'a VentSampler<'a>,
    pub events: &'a EventSampler<'a>,
    pub ca: &'a CaParams,
}

/// Aggregated scenario output.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardResult {
    /// Per-cell invasion probability in [0, 1].
    pub invasion_prob: Grid,
    /// Per-cell expected topographic change in meters.
    pub mean_delta_z: Grid,
    /// Largest invasion probability over the grid.
    pub max_prob: f64,
    /// Number of runs (Monte Carlo) or weighted flows (exhaustive).
    pub runs: usize,
    /// Vent activations summed over all runs.
    pub total_activations: u64,
    /// The scenario that produced this, None for exhaustive sweeps.
    pub scenario: Option<ScenarioConfig>,
}

/// Outcome of a single forecast run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// 1 where any activation's flow invaded, 0 elsewhere, nodata under
    /// the DEM's nodata mask.
    pub invaded: Grid,
    /// Total thickness added by the run's activations.
    pub delta_z: Grid,
    pub activations: usize,
}

/// The RNG for one run: the scenario seed keys the cipher and the run index
/// selects its stream, so runs are independent and reproducible in any
/// execution order.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// Executes one run: draws the activation count, then for each activation
/// a vent and an event, spreading each flow over the topography left by
/// the previous ones. Topography resets to the base DEM between runs, not
/// between activations of the same run.
pub fn run_once(inputs: &HazardInputs, cfg: &ScenarioConfig, run_index: u64) -> Result<RunOutcome> {
    let mut rng = run_rng(cfg.seed, run_index);
    let activations = if cfg.poisson_mean == 0.0 {
        1
    } else {
        sample_poisson(cfg.poisson_mean, &mut rng)? as usize
    };

    let base = inputs.base;
    let mut topo = base.clone();
    let mut invaded = base.like(0.0);
    let mut delta = base.like(0.0);
    for _ in 0..activations {
        let vent = inputs.vents.sample(&mut rng);
        let event = inputs.events.sample_event(cfg.realization, &mut rng);
        let flow = simulate_flow(&topo, vent.cell, &event, inputs.ca)?;
        topo.add_assign(&flow.thickness);
        delta.add_assign(&flow.thickness);
        for (acc, v) in invaded.values_mut().iter_mut().zip(flow.invaded.values()) {
            if *v == 1.0 {
                *acc = 1.0;
            }
        }
    }

    // Stamp the nodata mask onto the outputs.
    let sentinel = base.nodata();
    for (i, z) in base.values().iter().enumerate() {
        if base.is_nodata(*z) {
            invaded.values_mut()[i] = sentinel;
            delta.values_mut()[i] = sentinel;
        }
    }
    Ok(RunOutcome {
        invaded,
        delta_z: delta,
        activations,
    })
}

/// Runs folded per chunk; chunks combined in index order.
const REDUCE_CHUNK: usize = 32;

struct Partial {
    invaded: Vec<f64>,
    delta: Vec<f64>,
    activations: u64,
}

impl Partial {
    fn zeroed(ncells: usize) -> Self {
        Partial {
            invaded: vec![0.0; ncells],
            delta: vec![0.0; ncells],
            activations: 0,
        }
    }

    fn absorb_run(&mut self, outcome: &RunOutcome) {
        let grid = &outcome.invaded;
        for (acc, v) in self.invaded.iter_mut().zip(grid.values()) {
            if *v == 1.0 {
                *acc += 1.0;
            }
        }
        for (acc, v) in self.delta.iter_mut().zip(outcome.delta_z.values()) {
            if !grid.is_nodata(*v) {
                *acc += v;
            }
        }
        self.activations += outcome.activations as u64;
    }

    fn absorb_weighted(&mut self, weight: f64, invaded: &Grid, thickness: &Grid) {
        for (acc, v) in self.invaded.iter_mut().zip(invaded.values()) {
            if *v == 1.0 {
                *acc += weight;
            }
        }
        for (acc, v) in self.delta.iter_mut().zip(thickness.values()) {
            if !thickness.is_nodata(*v) {
                *acc += weight * v;
            }
        }
        self.activations += 1;
    }

    fn merge(&mut self, other: &Partial) {
        for (a, b) in self.invaded.iter_mut().zip(&other.invaded) {
            *a += b;
        }
        for (a, b) in self.delta.iter_mut().zip(&other.delta) {
            *a += b;
        }
        self.activations += other.activations;
    }
}

fn validate_inputs(inputs: &HazardInputs) -> Result<()> {
    let base = inputs.base;
    for vent in inputs.vents.vent_set().vents() {
        if !base.contains(vent.cell) || base.is_nodata_at(vent.cell.row, vent.cell.col) {
            return Err(Error::invalid(format!(
                "vent {} at cell ({}, {}) is outside the DEM or on nodata",
                vent.id, vent.cell.row, vent.cell.col
            )));
        }
    }
    inputs.ca.validate()
}

/// Monte Carlo scenario on the default execution (parallel when available).
pub fn run_scenario(inputs: &HazardInputs, cfg: &ScenarioConfig) -> Result<HazardResult> {
    run_scenario_with(inputs, cfg, Execution::Parallel)
}

/// Monte Carlo scenario with explicit scheduling. The result is
/// bit-identical across `Sequential`, `Parallel`, and any thread count.
pub fn run_scenario_with(
    inputs: &HazardInputs,
    cfg: &ScenarioConfig,
    exec: Execution,
) -> Result<HazardResult> {
    cfg.validate()?;
    validate_inputs(inputs)?;
    let ncells = inputs.base.len();
    let repeats = cfg.repeats;
    let n_chunks = repeats.div_ceil(REDUCE_CHUNK);

    let chunk_sums = |chunk: usize| -> Result<Partial> {
        let lo = chunk * REDUCE_CHUNK;
        let hi = ((chunk + 1) * REDUCE_CHUNK).min(repeats);
        let mut part = Partial::zeroed(ncells);
        for run in lo..hi {
            let outcome = run_once(inputs, cfg, run as u64)
                .map_err(|e| Error::invalid(format!("run {run}: {e}")))?;
            part.absorb_run(&outcome);
        }
        Ok(part)
    };

    let partials: Vec<Partial> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n_chunks)
            .into_par_iter()
            .map(chunk_sums)
            .collect::<Result<_>>()?,
        _ => (0..n_chunks).map(chunk_sums).collect::<Result<_>>()?,
    };

    finalize(inputs.base, partials, repeats as f64, repeats, Some(cfg.clone()))
}

/// Deterministic weighted sweep over every (vent, event class) pair.
///
/// Every flow starts from the base DEM with the class midpoint event. A
/// pair's weight is the vent's renormalized class weight split uniformly
/// within its class, times the class's normalized event probability, so
/// the weights sum to 1.
pub fn exhaustive_hazard(inputs: &HazardInputs) -> Result<HazardResult> {
    exhaustive_hazard_with(inputs, Execution::Parallel)
}

pub fn exhaustive_hazard_with(inputs: &HazardInputs, exec: Execution) -> Result<HazardResult> {
    validate_inputs(inputs)?;
    let base = inputs.base;
    let ncells = base.len();
    let vents = inputs.vents.vent_set();
    let class_weights = inputs.vents.class_weights();
    let class_counts = vents.class_counts();
    let table = inputs.events.table();
    let total_p = table.total_probability();

    let n_vents = vents.len();
    let n_classes = table.len();
    let n_pairs = n_vents * n_classes;
    let n_chunks = n_pairs.div_ceil(REDUCE_CHUNK);

    let chunk_sums = |chunk: usize| -> Result<Partial> {
        let lo = chunk * REDUCE_CHUNK;
        let hi = ((chunk + 1) * REDUCE_CHUNK).min(n_pairs);
        let mut part = Partial::zeroed(ncells);
        for pair in lo..hi {
            let vent = &vents.vents()[pair / n_classes];
            let class_id = pair % n_classes;
            let event = table[class_id].midpoint(class_id);
            let weight = class_weights[vent.class] / class_counts[vent.class] as f64
                * (table[class_id].probability / total_p);
            let flow = simulate_flow(base, vent.cell, &event, inputs.ca).map_err(|e| {
                Error::invalid(format!("vent {} class {class_id}: {e}", vent.id))
            })?;
            part.absorb_weighted(weight, &flow.invaded, &flow.thickness);
        }
        Ok(part)
    };

    let partials: Vec<Partial> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n_chunks)
            .into_par_iter()
            .map(chunk_sums)
            .collect::<Result<_>>()?,
        _ => (0..n_chunks).map(chunk_sums).collect::<Result<_>>()?,
    };

    finalize(base, partials, 1.0, n_pairs, None)
}

fn finalize(
    base: &Grid,
    partials: Vec<Partial>,
    divisor: f64,
    runs: usize,
    scenario: Option<ScenarioConfig>,
) -> Result<HazardResult> {
    let mut total = Partial::zeroed(base.len());
    for p in &partials {
        total.merge(p);
    }

    let sentinel = base.nodata();
    let mut prob = total.invaded;
    let mut delta = total.delta;
    let mut max_prob = 0.0_f64;
    for (i, z) in base.values().iter().enumerate() {
        if base.is_nodata(*z) {
            prob[i] = sentinel;
            delta[i] = sentinel;
        } else {
            prob[i] /= divisor;
            delta[i] /= divisor;
            max_prob = max_prob.max(prob[i]);
        }
    }
    Ok(HazardResult {
        invasion_prob: base.with_values(prob)?,
        mean_delta_z: base.with_values(delta)?,
        max_prob,
        runs,
        total_activations: partials.iter().map(|p| p.activations).sum(),
        scenario,
    })
}

/// Rescales a grid by its maximum, preserving nodata: output values lie in
/// [0, 1] with at least one exact 1.
pub fn relative_scale(grid: &Grid) -> Result<Grid> {
    let max = grid
        .max_value()
        .ok_or_else(|| Error::invalid("grid is all nodata"))?;
    if max <= 0.0 {
        return Err(Error::invalid("grid has no positive values to scale by"));
    }
    let mut values = grid.values().to_vec();
    for v in &mut values {
        if !grid.is_nodata(*v) {
            *v /= max;
        }
    }
    grid.with_values(values)
}

/// Fits `value = c0 + c1 t + c2 t^2 + c3 t^3` through exactly four points
/// by Gaussian elimination with partial pivoting on the Vandermonde system.
pub fn fit_cubic(times: &[f64], values: &[f64]) -> Result<[f64; 4]> {
    if times.len() != 4 || values.len() != 4 {
        return Err(Error::invalid(format!(
            "cubic fit needs exactly 4 points, got {} times and {} values",
            times.len(),
            values.len()
        )));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::invalid("cubic fit inputs must be finite"));
    }
    for i in 0..4 {
        for j in 0..i {
            if times[i] == times[j] {
                return Err(Error::invalid(format!("duplicate time {}", times[i])));
            }
        }
    }

    let mut m = [[0.0_f64; 5]; 4];
    for (row, (&t, &v)) in times.iter().zip(values).enumerate() {
        let t2 = t * t;
        m[row] = [1.0, t, t2, t2 * t, v];
    }

    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|a, b| m[*a][col].abs().partial_cmp(&m[*b][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() == 0.0 {
            return Err(Error::invalid("times are numerically degenerate"));
        }
        m.swap(col, pivot);
        for row in col + 1..4 {
            let factor = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (x, p) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * p;
            }
        }
    }

    let mut coeffs = [0.0_f64; 4];
    for row in (0..4).rev() {
        let mut acc = m[row][4];
        for k in row + 1..4 {
            acc -= m[row][k] * coeffs[k];
        }
        coeffs[row] = acc / m[row][row];
    }
    Ok(coeffs)
}

/// Writes `key=value` metadata lines.
pub fn write_sidecar<W: Write>(entries: &[(&str, String)], mut writer: W) -> std::io::Result<()> {
    for (key, value) in entries {
        writeln!(writer, "{key}={value}")?;
    }
    writer.flush()
}

/// Reads `key=value` metadata lines; blank lines and `#` comments skipped.
pub fn read_sidecar<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed.split_once('=') {
            Some((k, v)) => entries.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                return Err(Error::parse(
                    i + 1,
                    format!("expected 'key=value', got '{trimmed}'"),
                ))
            }
        }
    }
    Ok(entries)
}
