//! Regular raster grids with ESRI ASCII (.asc) serialization.
//!
//! Rows are stored north to south: row 0 is the northernmost row, matching
//! the order data rows appear in an .asc file. Columns run west to east.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// (row, col) address of one cell; row 0 is the northernmost row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub fn new(row: usize, col: usize) -> Self {
        CellIndex { row, col }
    }
}

/// A rectangular grid of f64 cells anchored at a lower-left corner.
///
/// Invariants, enforced at construction: at least one row and column,
/// positive cell size, `values.len() == ncols * nrows`, and every value is
/// either finite or exactly the nodata sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    ncols: usize,
    nrows: usize,
    xll: f64,
    yll: f64,
    cellsize: f64,
    nodata: f64,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::invalid("grid must have at least one row and column"));
        }
        if !cellsize.is_finite() || cellsize <= 0.0 {
            return Err(Error::invalid(format!("cellsize must be positive, got {cellsize}")));
        }
        if !xll.is_finite() || !yll.is_finite() || !nodata.is_finite() {
            return Err(Error::invalid("grid origin and nodata value must be finite"));
        }
        if values.len() != ncols * nrows {
            return Err(Error::invalid(format!(
                "expected {} values for a {}x{} grid, got {}",
                ncols * nrows,
                nrows,
                ncols,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() && **v != nodata) {
            return Err(Error::invalid(format!("non-finite cell value {v}")));
        }
        Ok(Grid {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
        })
    }

    /// Grid of the given shape with every cell set to `value`.
    pub fn filled(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        value: f64,
    ) -> Result<Self> {
        Grid::new(ncols, nrows, xll, yll, cellsize, nodata, vec![value; ncols * nrows])
    }

    /// Grid with the same geometry as `self` and every cell set to `value`.
    pub fn like(&self, value: f64) -> Grid {
        Grid {
            values: vec![value; self.values.len()],
            ..self.clone()
        }
    }

    /// Grid with the same geometry as `self` holding `values`.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Grid> {
        Grid::new(
            self.ncols,
            self.nrows,
            self.xll,
            self.yll,
            self.cellsize,
            self.nodata,
            values,
        )
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn xll(&self) -> f64 {
        self.xll
    }

    pub fn yll(&self) -> f64 {
        self.yll
    }

    pub fn cellsize(&self) -> f64 {
        self.cellsize
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn cell_area(&self) -> f64 {
        self.cellsize * self.cellsize
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.nrows && col < self.ncols);
        row * self.ncols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.idx(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let i = self.idx(row, col);
        self.values[i] = v;
    }

    /// Nodata test by exact sentinel equality.
    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    #[inline]
    pub fn is_nodata_at(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == self.nodata
    }

    pub fn contains(&self, index: CellIndex) -> bool {
        index.row < self.nrows && index.col < self.ncols
    }

    /// Map-space coordinates of the center of a cell.
    ///
    /// Row 0 is the northernmost row, so its centers sit `(nrows - 0.5)`
    /// cells above the lower-left corner.
    pub fn cell_center(&self, index: CellIndex) -> Result<(f64, f64)> {
        if !self.contains(index) {
            return Err(Error::invalid(format!(
                "cell index ({}, {}) out of bounds for {}x{} grid",
                index.row, index.col, self.nrows, self.ncols
            )));
        }
        let x = self.xll + (index.col as f64 + 0.5) * self.cellsize;
        let y = self.yll + (self.nrows as f64 - index.row as f64 - 0.5) * self.cellsize;
        Ok((x, y))
    }

    /// Cell containing map-space point (x, y), or None when outside the grid.
    ///
    /// Points on the west or north edge of a cell belong to that cell; the
    /// outer south and east grid edges are folded into the last row/column.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<CellIndex> {
        let fcol = (x - self.xll) / self.cellsize;
        let frow = self.nrows as f64 - (y - self.yll) / self.cellsize;
        if fcol < 0.0 || frow < 0.0 || fcol > self.ncols as f64 || frow > self.nrows as f64 {
            return None;
        }
        let col = (fcol.floor() as usize).min(self.ncols - 1);
        let row = (frow.floor() as usize).min(self.nrows - 1);
        Some(CellIndex::new(row, col))
    }

    /// True when both grids share shape, origin, cell size, and nodata value.
    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xll == other.xll
            && self.yll == other.yll
            && self.cellsize == other.cellsize
            && self.nodata == other.nodata
    }

    /// Cellwise in-place add, skipping cells that are nodata in either grid.
    pub fn add_assign(&mut self, other: &Grid) {
        debug_assert!(self.same_geometry(other));
        let nd_self = self.nodata;
        let nd_other = other.nodata;
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            if *a != nd_self && *b != nd_other {
                *a += *b;
            }
        }
    }

    /// Row-major iterator over all cell indices.
    pub fn indices(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let ncols = self.ncols;
        (0..self.nrows).flat_map(move |row| (0..ncols).map(move |col| CellIndex::new(row, col)))
    }

    /// Largest non-nodata value, or None when every cell is nodata.
    pub fn max_value(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|v| !self.is_nodata(*v))
            .fold(None, |acc, v| Some(acc.map_or(v, |m: f64| m.max(v))))
    }

    pub fn from_ascii_file(path: impl AsRef<Path>) -> Result<Grid> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::from(e).in_file(path))?;
        read_ascii_grid(BufReader::new(file)).map_err(|e| e.in_file(path))
    }

    pub fn to_ascii_file(&self, path: impl AsRef<Path>, precision: usize) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        write_ascii_grid(self, precision, BufWriter::new(file)).map_err(|e| Error::from(e).in_file(path))
    }
}

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "NODATA_value",
];

/// Parses an ESRI ASCII grid: six `key value` header lines in fixed order
/// (keys matched case-insensitively), then `nrows` lines of `ncols`
/// whitespace-separated numbers, northernmost row first.
pub fn read_ascii_grid<R: BufRead>(reader: R) -> Result<Grid> {
    let mut lines = reader.lines().enumerate();

    let mut header = [0.0_f64; 6];
    for (slot, key) in HEADER_KEYS.iter().enumerate() {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::parse(slot + 1, format!("missing header line '{key}'")))?;
        let line = line?;
        let lineno = i + 1;
        let mut tokens = line.split_whitespace();
        let (k, v) = match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(k), Some(v), None) => (k, v),
            _ => {
                return Err(Error::parse(
                    lineno,
                    format!("expected header line '{key} <value>', got '{}'", line.trim()),
                ))
            }
        };
        if !k.eq_ignore_ascii_case(key) {
            return Err(Error::parse(
                lineno,
                format!("expected header key '{key}', got '{k}'"),
            ));
        }
        header[slot] = v
            .parse::<f64>()
            .map_err(|_| Error::parse(lineno, format!("invalid number '{v}' for {key}")))?;
        if !header[slot].is_finite() {
            return Err(Error::parse(lineno, format!("non-finite value for {key}")));
        }
    }

    let [ncols_f, nrows_f, xll, yll, cellsize, nodata] = header;
    let ncols = parse_dimension(ncols_f, "ncols")?;
    let nrows = parse_dimension(nrows_f, "nrows")?;

    let mut values = Vec::with_capacity(ncols * nrows);
    for row in 0..nrows {
        let (i, line) = lines.next().ok_or_else(|| {
            Error::parse(
                HEADER_KEYS.len() + row + 1,
                format!("unexpected end of file: expected {nrows} data rows, found {row}"),
            )
        })?;
        let line = line?;
        let lineno = i + 1;
        let mut count = 0usize;
        for token in line.split_whitespace() {
            count += 1;
            if count > ncols {
                continue;
            }
            let v = token.parse::<f64>().map_err(|_| {
                Error::parse(lineno, format!("row {row}: invalid number '{token}'"))
            })?;
            values.push(v);
        }
        if count != ncols {
            // Rewind the partial row so the error is the only effect.
            values.truncate(row * ncols);
            return Err(Error::parse(
                lineno,
                format!("row {row}: expected {ncols} values, got {count}"),
            ));
        }
    }

    for (i, line) in lines {
        let line = line?;
        if !line.trim().is_empty() {
            return Err(Error::parse(
                i + 1,
                format!("expected end of file after {nrows} data rows"),
            ));
        }
    }

    Grid::new(ncols, nrows, xll, yll, cellsize, nodata, values)
}

fn parse_dimension(v: f64, key: &str) -> Result<usize> {
    if v.fract() == 0.0 && v >= 1.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::invalid(format!(
            "{key} must be a positive integer, got {v}"
        )))
    }
}

/// Writes `grid` in ESRI ASCII form. Cell values are fixed-point with
/// `precision` fractional digits, trailing zeros (and a bare trailing dot)
/// trimmed, so integral values print without a fractional part.
pub fn write_ascii_grid<W: Write>(grid: &Grid, precision: usize, mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "ncols {}", grid.ncols)?;
    writeln!(writer, "nrows {}", grid.nrows)?;
    writeln!(writer, "xllcorner {}", grid.xll)?;
    writeln!(writer, "yllcorner {}", grid.yll)?;
    writeln!(writer, "cellsize {}", grid.cellsize)?;
    writeln!(writer, "NODATA_value {}", grid.nodata)?;

    let mut line = String::new();
    let mut cell = String::new();
    for row in 0..grid.nrows {
        line.clear();
        for col in 0..grid.ncols {
            if col > 0 {
                line.push(' ');
            }
            cell.clear();
            write!(cell, "{:.*}", precision, grid.get(row, col)).expect("write to String");
            line.push_str(trim_fixed(&cell));
        }
        writeln!(writer, "{line}")?;
    }
    writer.flush()
}

/// Strips trailing zeros and a bare trailing dot from a fixed-point literal.
fn trim_fixed(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s)
}
