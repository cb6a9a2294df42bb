//! From historical vents to a field of weighted hypothetical vents.
//!
//! Stage one of the pipeline: a Gaussian kernel density estimate of vent
//! opening, cut into danger classes by successive halving of the peak
//! density, and a lattice of hypothetical vents whose areal density halves
//! with each step down in class.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{CellIndex, Grid};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One historical vent: map coordinates plus a non-negative weight
/// (weight 1 when the catalog has no weight column).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VentRecord {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

/// Parses a vent catalog CSV: header `x,y` or `x,y,weight`, one record per
/// line. Blank lines and `#` comments are skipped.
pub fn load_vent_records<R: BufRead>(reader: R) -> Result<Vec<VentRecord>> {
    let mut records = Vec::new();
    let mut columns = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if columns == 0 {
            columns = match trimmed.to_ascii_lowercase().as_str() {
                "x,y" => 2,
                "x,y,weight" => 3,
                other => {
                    return Err(Error::parse(
                        lineno,
                        format!("expected header 'x,y' or 'x,y,weight', got '{other}'"),
                    ))
                }
            };
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != columns {
            return Err(Error::parse(
                lineno,
                format!("expected {columns} comma-separated fields, got {}", fields.len()),
            ));
        }
        let mut nums = [0.0_f64; 3];
        nums[2] = 1.0;
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid number '{field}'")))?;
        }
        let record = VentRecord {
            x: nums[0],
            y: nums[1],
            weight: nums[2],
        };
        if !record.x.is_finite() || !record.y.is_finite() {
            return Err(Error::parse(lineno, "non-finite coordinate"));
        }
        if !record.weight.is_finite() || record.weight < 0.0 {
            return Err(Error::parse(
                lineno,
                format!("weight must be finite and non-negative, got {}", record.weight),
            ));
        }
        records.push(record);
    }
    if columns == 0 {
        return Err(Error::parse(1, "expected header 'x,y' or 'x,y,weight'"));
    }
    Ok(records)
}

pub fn write_vent_records<W: Write>(records: &[VentRecord], mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "x,y,weight")?;
    for r in records {
        writeln!(writer, "{},{},{}", r.x, r.y, r.weight)?;
    }
    writer.flush()
}

/// Kernel bandwidth choice for [`estimate_pdf`].
///
/// `Auto` is the normal-reference rule for two dimensions: per-axis
/// bandwidth `sigma_d * n^(-1/6)` from the weighted standard deviation of
/// the records. `Fixed` uses the given bandwidth, in map units, on both
/// axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

/// A probability density over a grid: non-negative, nodata where the
/// template DEM is nodata, and integrating to 1 over the grid
/// (sum of cells times cell area) within 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: Grid,
    bandwidth: Option<(f64, f64)>,
}

impl DensityGrid {
    /// Normalizes an arbitrary non-negative grid into a density.
    pub fn from_grid(grid: Grid) -> Result<DensityGrid> {
        if grid
            .values()
            .iter()
            .any(|v| !grid.is_nodata(*v) && *v < 0.0)
        {
            return Err(Error::invalid("density values must be non-negative"));
        }
        let mut grid = grid;
        normalize_density(&mut grid)?;
        Ok(DensityGrid { grid, bandwidth: None })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    /// The (x, y) bandwidth the estimate was built with, when it came from
    /// [`estimate_pdf`].
    pub fn bandwidth(&self) -> Option<(f64, f64)> {
        self.bandwidth
    }
}

/// Scales `grid` so its non-nodata cells integrate to 1.
fn normalize_density(grid: &mut Grid) -> Result<()> {
    let nodata = grid.nodata();
    let mass: f64 = grid
        .values()
        .iter()
        .filter(|v| **v != nodata)
        .sum::<f64>()
        * grid.cell_area();
    if !mass.is_finite() || mass <= 0.0 {
        return Err(Error::invalid(format!(
            "density mass over the grid is {mass}; cannot normalize"
        )));
    }
    let scale = 1.0 / mass;
    for v in grid.values_mut() {
        if *v != nodata {
            *v *= scale;
        }
    }
    Ok(())
}

/// Gaussian kernel density estimate of vent opening over `template`.
///
/// Direct summation over all records at every cell (no kernel truncation),
/// then renormalized so the grid integrates to 1: mass falling outside the
/// grid or on nodata cells is folded back in.
pub fn estimate_pdf(
    records: &[VentRecord],
    template: &Grid,
    bandwidth: Bandwidth,
) -> Result<DensityGrid> {
    if records.is_empty() {
        return Err(Error::invalid("need at least one vent record"));
    }
    let total_weight: f64 = records.iter().map(|r| r.weight).sum();
    if !total_weight.is_finite() || total_weight <= 0.0 {
        return Err(Error::invalid("vent record weights sum to zero"));
    }
    let (x_min, x_max) = (template.xll(), template.xll() + template.ncols() as f64 * template.cellsize());
    let (y_min, y_max) = (template.yll(), template.yll() + template.nrows() as f64 * template.cellsize());
    for (i, r) in records.iter().enumerate() {
        if r.x < x_min || r.x > x_max || r.y < y_min || r.y > y_max {
            return Err(Error::invalid(format!(
                "vent record {i} at ({}, {}) lies outside the grid extent",
                r.x, r.y
            )));
        }
    }

    let (hx, hy) = match bandwidth {
        Bandwidth::Fixed(h) => {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
            }
            (h, h)
        }
        Bandwidth::Auto => auto_bandwidth(records, total_weight)?,
    };

    let norm = 1.0 / (std::f64::consts::TAU * hx * hy * total_weight);
    let kde_cell = |row: usize, col: usize| -> f64 {
        let x = template.xll() + (col as f64 + 0.5) * template.cellsize();
        let y = template.yll() + (template.nrows() as f64 - row as f64 - 0.5) * template.cellsize();
        let mut sum = 0.0;
        for r in records {
            let dx = (x - r.x) / hx;
            let dy = (y - r.y) / hy;
            sum += r.weight * (-0.5 * (dx * dx + dy * dy)).exp();
        }
        sum * norm
    };

    let ncols = template.ncols();
    let nodata = template.nodata();
    let mut grid = template.like(0.0);

    let fill_row = |row: usize, out: &mut [f64]| {
        for (col, slot) in out.iter_mut().enumerate() {
            *slot = if template.get(row, col) == nodata {
                nodata
            } else {
                kde_cell(row, col)
            };
        }
    };

    #[cfg(feature = "parallel")]
    grid.values_mut()
        .par_chunks_mut(ncols)
        .enumerate()
        .for_each(|(row, out)| fill_row(row, out));

    #[cfg(not(feature = "parallel"))]
    grid.values_mut()
        .chunks_mut(ncols)
        .enumerate()
        .for_each(|(row, out)| fill_row(row, out));

    normalize_density(&mut grid)?;
    debug_assert!({
        let mass: f64 = grid.values().iter().filter(|v| !grid.is_nodata(**v)).sum::<f64>() * grid.cell_area();
        (mass - 1.0).abs() < 1e-6
    });
    Ok(DensityGrid {
        grid,
        bandwidth: Some((hx, hy)),
    })
}

/// Normal-reference bandwidth: weighted standard deviation per axis times
/// n^(-1/6), with n the record count.
fn auto_bandwidth(records: &[VentRecord], total_weight: f64) -> Result<(f64, f64)> {
    if records.len() < 2 {
        return Err(Error::invalid(
            "automatic bandwidth needs at least 2 records; use a fixed bandwidth",
        ));
    }
    let n_factor = (records.len() as f64).powf(-1.0 / 6.0);
    let mut bandwidths = [0.0_f64; 2];
    for (axis, h) in bandwidths.iter_mut().enumerate() {
        let coord = |r: &VentRecord| if axis == 0 { r.x } else { r.y };
        let mean: f64 = records.iter().map(|r| r.weight * coord(r)).sum::<f64>() / total_weight;
        let var: f64 = records
            .iter()
            .map(|r| {
                let d = coord(r) - mean;
                r.weight * d * d
            })
            .sum::<f64>()
            / total_weight;
        let sigma = var.sqrt();
        if sigma <= 0.0 {
            let name = if axis == 0 { "x" } else { "y" };
            return Err(Error::invalid(format!(
                "records are degenerate on the {name} axis; use a fixed bandwidth"
            )));
        }
        *h = sigma * n_factor;
    }
    Ok((bandwidths[0], bandwidths[1]))
}

/// Danger-class labels over a grid.
///
/// Class k collects cells whose density lies in
/// `(p_max * 2^-(k+1), p_max * 2^-k]`; the last class absorbs everything at
/// or below its ceiling, including zero density. Lower label means more
/// dangerous.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    grid: Grid,
    num_classes: usize,
    thresholds: Vec<f64>,
}

impl ClassMap {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Bin ceilings: `thresholds[k] = p_max * 2^-k`, strictly decreasing.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Class label at a cell, or None on nodata.
    pub fn label_at(&self, row: usize, col: usize) -> Option<usize> {
        let v = self.grid.get(row, col);
        if self.grid.is_nodata(v) {
            None
        } else {
            Some(v as usize)
        }
    }
}

/// Splits a density into `num_classes` danger classes by successive halving
/// of the peak density.
pub fn classify_density(density: &DensityGrid, num_classes: usize) -> Result<ClassMap> {
    if num_classes < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 danger classes, got {num_classes}"
        )));
    }
    if num_classes > 32 {
        return Err(Error::invalid(format!(
            "more than 32 danger classes is not meaningful, got {num_classes}"
        )));
    }
    let src = density.grid();
    let p_max = src
        .max_value()
        .ok_or_else(|| Error::invalid("density grid is all nodata"))?;
    if p_max <= 0.0 {
        return Err(Error::invalid("density grid has no positive cells"));
    }

    let thresholds: Vec<f64> = (0..num_classes).map(|k| p_max * half_pow(k)).collect();
    let mut grid = src.like(0.0);
    for i in 0..src.values().len() {
        let v = src.values()[i];
        grid.values_mut()[i] = if src.is_nodata(v) {
            src.nodata()
        } else {
            label_for(v, p_max, num_classes) as f64
        };
    }
    Ok(ClassMap {
        grid,
        num_classes,
        thresholds,
    })
}

/// Exact 2^-k for the halving thresholds.
#[inline]
fn half_pow(k: usize) -> f64 {
    debug_assert!(k < 64);
    1.0 / (1u64 << k) as f64
}

#[inline]
fn label_for(v: f64, p_max: f64, num_classes: usize) -> usize {
    for k in 0..num_classes - 1 {
        if v > p_max * half_pow(k + 1) {
            return k;
        }
    }
    num_classes - 1
}

/// One hypothetical vent, snapped to the center of a grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Vent {
    pub id: usize,
    pub cell: CellIndex,
    pub x: f64,
    pub y: f64,
    pub class: usize,
}

/// A set of hypothetical vents: unique cells, classes below `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct VentSet {
    vents: Vec<Vent>,
    num_classes: usize,
}

impl VentSet {
    pub fn new(vents: Vec<Vent>, num_classes: usize) -> Result<Self> {
        if vents.is_empty() {
            return Err(Error::invalid("vent set is empty"));
        }
        let mut cells = HashSet::new();
        let mut ids = HashSet::new();
        for v in &vents {
            if v.class >= num_classes {
                return Err(Error::invalid(format!(
                    "vent {} has class {} but there are only {num_classes} classes",
                    v.id, v.class
                )));
            }
            if !cells.insert(v.cell) {
                return Err(Error::invalid(format!(
                    "duplicate vent cell ({}, {})",
                    v.cell.row, v.cell.col
                )));
            }
            if !ids.insert(v.id) {
                return Err(Error::invalid(format!("duplicate vent id {}", v.id)));
            }
        }
        Ok(VentSet { vents, num_classes })
    }

    pub fn vents(&self) -> &[Vent] {
        &self.vents
    }

    pub fn len(&self) -> usize {
        self.vents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vents.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Vent count per class label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for v in &self.vents {
            counts[v.class] += 1;
        }
        counts
    }

    /// Writes `id,row,col,x,y,class` CSV.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "id,row,col,x,y,class")?;
        for v in &self.vents {
            writeln!(
                writer,
                "{},{},{},{},{},{}",
                v.id, v.cell.row, v.cell.col, v.x, v.y, v.class
            )?;
        }
        writer.flush()
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut vents = Vec::new();
        let mut saw_header = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if !trimmed.eq_ignore_ascii_case("id,row,col,x,y,class") {
                    return Err(Error::parse(
                        lineno,
                        format!("expected header 'id,row,col,x,y,class', got '{trimmed}'"),
                    ));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(Error::parse(
                    lineno,
                    format!("expected 6 comma-separated fields, got {}", fields.len()),
                ));
            }
            let parse_usize = |f: &str| -> Result<usize> {
                f.parse()
                    .map_err(|_| Error::parse(lineno, format!("invalid integer '{f}'")))
            };
            let parse_f64 = |f: &str| -> Result<f64> {
                f.parse()
                    .map_err(|_| Error::parse(lineno, format!("invalid number '{f}'")))
            };
            vents.push(Vent {
                id: parse_usize(fields[0])?,
                cell: CellIndex::new(parse_usize(fields[1])?, parse_usize(fields[2])?),
                x: parse_f64(fields[3])?,
                y: parse_f64(fields[4])?,
                class: parse_usize(fields[5])?,
            });
        }
        if vents.is_empty() {
            return Err(Error::invalid("vent set is empty"));
        }
        let num_classes = vents.iter().map(|v| v.class).max().unwrap() + 1;
        VentSet::new(vents, num_classes)
    }
}

/// Lays out hypothetical vents on per-class square lattices.
///
/// Class k uses spacing `base_spacing * sqrt(2)^k`, so each step down in
/// danger halves the areal vent density. Lattice points are anchored at
/// half-spacing offsets from the lower-left corner, snapped to cell
/// centers, and kept when the cell carries that class label. Classes are
/// processed from most to least dangerous; a cell already holding a vent is
/// never given a second one. The layout is fully deterministic.
pub fn generate_vent_grid(classes: &ClassMap, base_spacing: f64, dem: &Grid) -> Result<VentSet> {
    if !classes.grid().same_geometry(dem) {
        return Err(Error::invalid("class map and DEM geometries differ"));
    }
    if !base_spacing.is_finite() || base_spacing < dem.cellsize() {
        return Err(Error::invalid(format!(
            "base spacing {base_spacing} must be at least the cell size {}",
            dem.cellsize()
        )));
    }

    let width = dem.ncols() as f64 * dem.cellsize();
    let height = dem.nrows() as f64 * dem.cellsize();
    let mut taken: HashSet<CellIndex> = HashSet::new();
    let mut vents = Vec::new();

    for k in 0..classes.num_classes() {
        let spacing = base_spacing * std::f64::consts::SQRT_2.powi(k as i32);
        let nx = lattice_count(width, spacing);
        let ny = lattice_count(height, spacing);
        // North to south, west to east, matching raster order.
        for j in (0..ny).rev() {
            let y = dem.yll() + (j as f64 + 0.5) * spacing;
            for i in 0..nx {
                let x = dem.xll() + (i as f64 + 0.5) * spacing;
                let cell = match dem.cell_at(x, y) {
                    Some(c) => c,
                    None => continue,
                };
                if dem.is_nodata_at(cell.row, cell.col) {
                    continue;
                }
                if classes.label_at(cell.row, cell.col) != Some(k) {
                    continue;
                }
                if !taken.insert(cell) {
                    continue;
                }
                let (cx, cy) = dem.cell_center(cell).expect("cell from cell_at is in bounds");
                vents.push(Vent {
                    id: vents.len(),
                    cell,
                    x: cx,
                    y: cy,
                    class: k,
                });
            }
        }
    }

    if vents.is_empty() {
        return Err(Error::invalid(
            "no vents generated; base spacing is too coarse for the class map",
        ));
    }
    VentSet::new(vents, classes.num_classes())
}

/// Number of lattice points at half-spacing offsets that fit in `extent`.
fn lattice_count(extent: f64, spacing: f64) -> usize {
    let mut n = 0usize;
    while (n as f64 + 0.5) * spacing < extent {
        n += 1;
    }
    n
}

/// Renormalized halving weights over the populated classes: class k gets
/// weight proportional to 2^-(k+1) when it has at least one vent, 0
/// otherwise.
pub fn halving_class_weights(populated: &[bool]) -> Vec<f64> {
    let mut weights: Vec<f64> = populated
        .iter()
        .enumerate()
        .map(|(k, p)| if *p { half_pow(k + 1) } else { 0.0 })
        .collect();
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        for w in &mut weights {
            *w /= sum;
        }
    }
    weights
}

/// Two-stage vent die: a class is drawn by renormalized halving weights,
/// then a vent uniformly within the class.
#[derive(Debug, Clone)]
pub struct VentSampler<'a> {
    set: &'a VentSet,
    by_class: Vec<Vec<usize>>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl<'a> VentSampler<'a> {
    pub fn new(set: &'a VentSet) -> Result<Self> {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); set.num_classes()];
        for (i, v) in set.vents().iter().enumerate() {
            by_class[v.class].push(i);
        }
        let populated: Vec<bool> = by_class.iter().map(|g| !g.is_empty()).collect();
        let weights = halving_class_weights(&populated);
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(VentSampler {
            set,
            by_class,
            weights,
            cumulative,
        })
    }

    /// Per-class probabilities after renormalization; zero for empty classes.
    pub fn class_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn vent_set(&self) -> &'a VentSet {
        self.set
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &'a Vent {
        let u = rng.random::<f64>();
        let mut class = self
            .cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.set.num_classes() - 1);
        // Guard against landing on an empty class through the final bucket.
        while self.by_class[class].is_empty() {
            class -= 1;
        }
        let group = &self.by_class[class];
        let pick = rng.random_range(0..group.len());
        &self.set.vents()[group[pick]]
    }
}
