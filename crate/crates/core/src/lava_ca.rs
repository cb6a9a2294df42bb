//! Minimization-of-differences lava flow automaton.
//!
//! Lava lives as a thickness field `h` on top of the terrain `z`. Each step,
//! every cell with more lava than its adherence runs the redistribution
//! rule: the mobile thickness plus the retained head and the neighbor heads
//! are averaged, cells at or above the running average are eliminated until
//! the average is stable, and the survivors receive `relaxation * (avg -
//! head)`. Flows only ever move toward strictly lower total head, so the
//! automaton cannot push lava uphill.
//!
//! Updates are synchronous two-buffer sweeps. All per-cell reductions (the
//! rule's average, incoming-flow sums) add their operands in ascending
//! value order, which makes results independent of neighbor enumeration
//! order; a flow on mirror-symmetric terrain stays bit-exactly symmetric.

use crate::error::{Error, Result};
use crate::event_model::EventRealization;
use crate::raster::{CellIndex, Grid};

/// Tuning parameters for [`simulate_flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct CaParams {
    /// Thickness in meters that never leaves a cell.
    pub adherence: f64,
    /// Fraction of the computed head difference actually moved, in (0, 1].
    pub relaxation: f64,
    /// Days of eruption fed to the vent per step.
    pub step_dt: f64,
    /// The run halts once every cell's per-step outflow is below this
    /// thickness (meters) and emission has finished.
    pub halt_flux: f64,
    /// A cell counts as invaded when its thickness ever exceeds this.
    pub invasion_threshold: f64,
    /// Step cap, as a multiple of the number of emission steps.
    pub max_steps_factor: usize,
}

impl Default for CaParams {
    fn default() -> Self {
        CaParams {
            adherence: 0.8,
            relaxation: 0.5,
            step_dt: 0.25,
            halt_flux: 1e-4,
            invasion_threshold: 0.01,
            max_steps_factor: 20,
        }
    }
}

impl CaParams {
    pub fn validate(&self) -> Result<()> {
        if !self.adherence.is_finite() || self.adherence < 0.0 {
            return Err(Error::invalid(format!(
                "adherence must be finite and non-negative, got {}",
                self.adherence
            )));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::invalid(format!(
                "relaxation must be in (0, 1], got {}",
                self.relaxation
            )));
        }
        if !self.step_dt.is_finite() || self.step_dt <= 0.0 {
            return Err(Error::invalid(format!(
                "step_dt must be positive, got {}",
                self.step_dt
            )));
        }
        if !self.halt_flux.is_finite() || self.halt_flux < 0.0 {
            return Err(Error::invalid(format!(
                "halt_flux must be finite and non-negative, got {}",
                self.halt_flux
            )));
        }
        if !self.invasion_threshold.is_finite() || self.invasion_threshold < 0.0 {
            return Err(Error::invalid(format!(
                "invasion_threshold must be finite and non-negative, got {}",
                self.invasion_threshold
            )));
        }
        if self.max_steps_factor == 0 {
            return Err(Error::invalid("max_steps_factor must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one simulated flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    /// 1 where the thickness ever exceeded the invasion threshold, 0
    /// elsewhere, nodata following the DEM.
    pub invaded: Grid,
    /// Final solidified thickness in meters.
    pub thickness: Grid,
    pub volume_emitted: f64,
    pub volume_on_ground: f64,
    pub steps: usize,
    /// True when stopped by the flux criterion, false when the step cap hit.
    pub halted: bool,
}

impl FlowResult {
    /// Topographic change: identical to the solidified thickness.
    pub fn delta_z(&self) -> &Grid {
        &self.thickness
    }
}

/// Redistribution rule for one cell, shared by [`outflows`] and the stepper.
///
/// `heads` holds (total head, caller slot) pairs for the reachable
/// neighbors; it is sorted in place. Flows are written to `flows` by slot
/// (untouched slots keep their previous value, so callers pre-zero).
/// Returns the total outflow, accumulated in ascending head order.
fn apply_rule(
    center_z: f64,
    center_h: f64,
    heads: &mut [(f64, usize)],
    adherence: f64,
    relaxation: f64,
    flows: &mut [f64],
) -> f64 {
    let mobile = center_h - adherence;
    if mobile <= 0.0 || heads.is_empty() {
        return 0.0;
    }
    let retained_head = center_z + center_h.min(adherence);
    heads.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("heads are finite"));

    let mut len = heads.len();
    let mut retained_active = true;
    let avg = loop {
        let count = len + usize::from(retained_active);
        let mut sum = mobile;
        if retained_active {
            sum += retained_head;
        }
        for (u, _) in &heads[..len] {
            sum += u;
        }
        let avg = sum / count as f64;

        let mut removed = false;
        while len > 0 && heads[len - 1].0 >= avg {
            len -= 1;
            removed = true;
        }
        if retained_active && retained_head >= avg {
            retained_active = false;
            removed = true;
        }
        if !removed {
            break avg;
        }
        if len == 0 && !retained_active {
            return 0.0;
        }
    };

    let center_head = center_z + center_h;
    let slack = 1e-9 * center_head.abs().max(1.0);
    let mut total = 0.0;
    for (u, slot) in &heads[..len] {
        debug_assert!(
            *u < center_head + slack,
            "uphill flow: neighbor head {u} vs center head {center_head}"
        );
        let flow = relaxation * (avg - u);
        flows[*slot] = flow;
        total += flow;
    }
    total
}

/// Runs the redistribution rule for a single cell.
///
/// Returns per-neighbor flows (aligned with `neighbor_heads`) and the
/// thickness retained in the cell. Flows sum to at most `relaxation *
/// max(center_h - adherence, 0)`; a cell at or below its adherence, or one
/// whose neighbors all sit at or above its total head, sheds nothing.
pub fn outflows(
    center_z: f64,
    center_h: f64,
    neighbor_heads: &[f64],
    params: &CaParams,
) -> (Vec<f64>, f64) {
    debug_assert!(center_z.is_finite() && center_h >= 0.0);
    let mut heads: Vec<(f64, usize)> = neighbor_heads.iter().copied().zip(0..).collect();
    let mut flows = vec![0.0; neighbor_heads.len()];
    let total = apply_rule(
        center_z,
        center_h,
        &mut heads,
        params.adherence,
        params.relaxation,
        &mut flows,
    );
    (flows, center_h - total)
}

/// Moore neighborhood, ordered so `OFFSETS[7 - d] == -OFFSETS[d]`.
const OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

#[derive(Clone, Copy)]
struct Bbox {
    rmin: usize,
    rmax: usize,
    cmin: usize,
    cmax: usize,
}

impl Bbox {
    fn single(cell: CellIndex) -> Self {
        Bbox {
            rmin: cell.row,
            rmax: cell.row,
            cmin: cell.col,
            cmax: cell.col,
        }
    }

    fn include(&mut self, row: usize, col: usize) {
        self.rmin = self.rmin.min(row);
        self.rmax = self.rmax.max(row);
        self.cmin = self.cmin.min(col);
        self.cmax = self.cmax.max(col);
    }
}

/// Erupts `event` at `vent` on `base` and runs the automaton to quiescence.
///
/// The eruption volume is fed in over `ceil(duration / step_dt)` steps as a
/// uniform thickness pulse at the vent. After emission the run halts when
/// the largest per-cell outflow of a step drops below `halt_flux`, or at
/// `max_steps_factor` times the emission steps. All lava solidifies in
/// place at halt. Total lava volume is conserved to rounding error
/// throughout; every grid and mask in the result is deterministic in all
/// inputs.
pub fn simulate_flow(
    base: &Grid,
    vent: CellIndex,
    event: &EventRealization,
    params: &CaParams,
) -> Result<FlowResult> {
    params.validate()?;
    if !base.contains(vent) {
        return Err(Error::invalid(format!(
            "vent cell ({}, {}) out of bounds for {}x{} grid",
            vent.row,
            vent.col,
            base.nrows(),
            base.ncols()
        )));
    }
    if base.is_nodata_at(vent.row, vent.col) {
        return Err(Error::invalid(format!(
            "vent cell ({}, {}) is nodata",
            vent.row, vent.col
        )));
    }
    if !event.volume_m3.is_finite() || event.volume_m3 <= 0.0 {
        return Err(Error::invalid(format!(
            "eruption volume must be positive, got {}",
            event.volume_m3
        )));
    }
    if !event.duration_days.is_finite() || event.duration_days <= 0.0 {
        return Err(Error::invalid(format!(
            "eruption duration must be positive, got {}",
            event.duration_days
        )));
    }

    let ncols = base.ncols();
    let nrows = base.nrows();
    let ncells = ncols * nrows;
    let area = base.cell_area();
    let z = base.values();
    let nodata: Vec<bool> = z.iter().map(|v| base.is_nodata(*v)).collect();

    let n_emit = (event.duration_days / params.step_dt).ceil().max(1.0) as usize;
    let max_steps = params.max_steps_factor.saturating_mul(n_emit);
    let per_step_h = event.volume_m3 / (n_emit as f64 * area);

    let mut h = vec![0.0_f64; ncells];
    let mut h_next = vec![0.0_f64; ncells];
    let mut h_peak = vec![0.0_f64; ncells];
    // Per-cell outflow by direction, plus its total, zeroed lazily per step.
    let mut out = vec![0.0_f64; ncells * 8];
    let mut out_total = vec![0.0_f64; ncells];

    let vent_i = vent.row * ncols + vent.col;
    let mut bbox = Bbox::single(vent);
    let mut emitted = 0.0_f64;
    let mut steps = 0usize;
    let mut halted = false;

    while steps < max_steps {
        steps += 1;
        if steps <= n_emit {
            h[vent_i] += per_step_h;
            emitted += per_step_h * area;
        }

        for row in bbox.rmin..=bbox.rmax {
            let lo = row * ncols + bbox.cmin;
            let hi = row * ncols + bbox.cmax + 1;
            out[lo * 8..hi * 8].fill(0.0);
            out_total[lo..hi].fill(0.0);
        }

        let mut max_out = 0.0_f64;
        let mut grow = bbox;
        for row in bbox.rmin..=bbox.rmax {
            for col in bbox.cmin..=bbox.cmax {
                let i = row * ncols + col;
                if h[i] <= params.adherence {
                    continue;
                }
                let mut heads = [(0.0_f64, 0usize); 8];
                let mut count = 0;
                for (d, (dr, dc)) in OFFSETS.iter().enumerate() {
                    let nr = row as isize + dr;
                    let nc = col as isize + dc;
                    if nr < 0 || nc < 0 || nr as usize >= nrows || nc as usize >= ncols {
                        continue;
                    }
                    let ni = nr as usize * ncols + nc as usize;
                    if nodata[ni] {
                        continue;
                    }
                    heads[count] = (z[ni] + h[ni], d);
                    count += 1;
                }
                let mut flows = [0.0_f64; 8];
                let total = apply_rule(
                    z[i],
                    h[i],
                    &mut heads[..count],
                    params.adherence,
                    params.relaxation,
                    &mut flows,
                );
                if total > 0.0 {
                    out_total[i] = total;
                    max_out = max_out.max(total);
                    for (d, (dr, dc)) in OFFSETS.iter().enumerate() {
                        if flows[d] > 0.0 {
                            out[i * 8 + d] = flows[d];
                            grow.include((row as isize + dr) as usize, (col as isize + dc) as usize);
                        }
                    }
                }
            }
        }

        // Synchronous apply: every cell of the (possibly grown) active box
        // gets h - outflow + inflow, with inflows summed ascending.
        for row in grow.rmin..=grow.rmax {
            for col in grow.cmin..=grow.cmax {
                let i = row * ncols + col;
                if nodata[i] {
                    h_next[i] = 0.0;
                    continue;
                }
                let mut incoming = [0.0_f64; 8];
                let mut count = 0;
                for (d, (dr, dc)) in OFFSETS.iter().enumerate() {
                    let nr = row as isize + dr;
                    let nc = col as isize + dc;
                    if nr < 0 || nc < 0 || nr as usize >= nrows || nc as usize >= ncols {
                        continue;
                    }
                    let ni = nr as usize * ncols + nc as usize;
                    let f = out[ni * 8 + (7 - d)];
                    if f > 0.0 {
                        incoming[count] = f;
                        count += 1;
                    }
                }
                let inflow = if count == 0 {
                    0.0
                } else {
                    incoming[..count].sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
                    incoming[..count].iter().sum::<f64>()
                };
                let next = h[i] - out_total[i] + inflow;
                debug_assert!(next > -1e-9 * h[i].max(1.0), "negative thickness {next}");
                h_next[i] = next.max(0.0);
            }
        }

        std::mem::swap(&mut h, &mut h_next);
        bbox = grow;

        let mut mass = 0.0_f64;
        for row in bbox.rmin..=bbox.rmax {
            for col in bbox.cmin..=bbox.cmax {
                let i = row * ncols + col;
                mass += h[i];
                if h[i] > h_peak[i] {
                    h_peak[i] = h[i];
                }
            }
        }
        debug_assert!(
            (mass * area - emitted).abs() <= 1e-9 * emitted.max(1.0),
            "volume drifted: {} on grid vs {} emitted",
            mass * area,
            emitted
        );

        if steps >= n_emit && max_out < params.halt_flux {
            halted = true;
            break;
        }
    }

    let volume_on_ground = h.iter().sum::<f64>() * area;
    let sentinel = base.nodata();
    let mut thickness_values = h;
    let mut invaded_values = vec![0.0_f64; ncells];
    for i in 0..ncells {
        if nodata[i] {
            thickness_values[i] = sentinel;
            invaded_values[i] = sentinel;
        } else if h_peak[i] > params.invasion_threshold {
            invaded_values[i] = 1.0;
        }
    }

    Ok(FlowResult {
        invaded: base.with_values(invaded_values)?,
        thickness: base.with_values(thickness_values)?,
        volume_emitted: emitted,
        volume_on_ground,
        steps,
        halted,
    })
}
