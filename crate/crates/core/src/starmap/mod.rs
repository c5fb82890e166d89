//! Spatial relations as per-cell parameters: occupancy probabilities and
//! distance distributions over a local grid, from static map features and
//! from moving entities.

mod dynamic;
mod features;
mod fields;

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use dynamic::{rice_moments, support_points, DistancePatch, DynamicDistance, Entity};
pub use features::{Feature, FeatureSet, Geometry};
pub use fields::{distance_field, occupancy_field, FieldOptions};

/// Standard deviation floor for distance fields, meters.
pub const SIGMA_MIN: f64 = 0.5;

/// Mean Earth radius, meters.
const EARTH_RADIUS: f64 = 6_371_008.8;

#[derive(Debug, thiserror::Error)]
pub enum StarmapError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no features of class {0}")]
    EmptyFeatureClass(String),
    #[error("invalid feature: {0}")]
    InvalidFeature(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    GeoJson(#[from] geojson::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A `cols × rows` grid centred on `(origin_lat, origin_lon)`. Row 0 is the
/// northern edge and cells are numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub cols: usize,
    pub rows: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), StarmapError> {
        if self.cols == 0 || self.rows == 0 {
            return Err(StarmapError::InvalidGrid(
                "need at least one cell per axis".into(),
            ));
        }
        if !(self.width_m > 0.0 && self.height_m > 0.0) {
            return Err(StarmapError::InvalidGrid("extent must be positive".into()));
        }
        if !(self.origin_lat.abs() < 89.0 && self.origin_lon.abs() <= 180.0) {
            return Err(StarmapError::InvalidGrid("origin out of range".into()));
        }
        // Keep well inside the hemisphere where the projection is one-to-one.
        if self.width_m.hypot(self.height_m) > 0.5 * std::f64::consts::PI * EARTH_RADIUS {
            return Err(StarmapError::InvalidGrid(
                "extent too large for a local projection".into(),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.cols * self.rows
    }

    /// Cell size in meters, `(dx, dy)`.
    pub fn resolution(&self) -> (f64, f64) {
        (
            self.width_m / self.cols as f64,
            self.height_m / self.rows as f64,
        )
    }

    pub fn diagonal(&self) -> f64 {
        self.width_m.hypot(self.height_m)
    }

    /// Local (easting, northing) of a cell center.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let (row, col) = (cell / self.cols, cell % self.cols);
        let (dx, dy) = self.resolution();
        [
            -self.width_m / 2.0 + (col as f64 + 0.5) * dx,
            self.height_m / 2.0 - (row as f64 + 0.5) * dy,
        ]
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.cells()).map(|c| self.cell_center(c)).collect()
    }

    /// The cell containing a local point, if any.
    pub fn cell_at(&self, p: [f64; 2]) -> Option<usize> {
        let (dx, dy) = self.resolution();
        let col = ((p[0] + self.width_m / 2.0) / dx).floor();
        let row = ((self.height_m / 2.0 - p[1]) / dy).floor();
        if col < 0.0 || row < 0.0 || col >= self.cols as f64 || row >= self.rows as f64 {
            return None;
        }
        Some(row as usize * self.cols + col as usize)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0].abs() <= self.width_m / 2.0 && p[1].abs() <= self.height_m / 2.0
    }

    /// Azimuthal equidistant projection about the origin.
    pub fn project(&self, lat: f64, lon: f64) -> [f64; 2] {
        let (phi0, lam0) = (self.origin_lat.to_radians(), self.origin_lon.to_radians());
        let (phi, lam) = (lat.to_radians(), lon.to_radians());
        let dl = lam - lam0;
        let cos_c = (phi0.sin() * phi.sin() + phi0.cos() * phi.cos() * dl.cos()).clamp(-1.0, 1.0);
        let c = cos_c.acos();
        let k = if c < 1e-12 { 1.0 } else { c / c.sin() };
        [
            EARTH_RADIUS * k * phi.cos() * dl.sin(),
            EARTH_RADIUS * k * (phi0.cos() * phi.sin() - phi0.sin() * phi.cos() * dl.cos()),
        ]
    }

    /// Inverse of [`GridSpec::project`], `(lat, lon)` in degrees.
    pub fn unproject(&self, p: [f64; 2]) -> (f64, f64) {
        let (phi0, lam0) = (self.origin_lat.to_radians(), self.origin_lon.to_radians());
        let rho = p[0].hypot(p[1]);
        if rho < 1e-9 {
            return (self.origin_lat, self.origin_lon);
        }
        let c = rho / EARTH_RADIUS;
        let phi = (c.cos() * phi0.sin() + p[1] * c.sin() * phi0.cos() / rho).asin();
        let lam =
            lam0 + (p[0] * c.sin()).atan2(rho * phi0.cos() * c.cos() - p[1] * phi0.sin() * c.sin());
        (phi.to_degrees(), lam.to_degrees())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    Probability(Vec<f64>),
    /// Per-cell Normal distance model, meters.
    Density {
        mu: Vec<f64>,
        sigma: Vec<f64>,
    },
}

/// One spatial relation over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationField {
    pub relation: String,
    pub values: FieldValues,
    /// Time the parameters were computed, seconds.
    pub staleness: f64,
}

impl RelationField {
    pub fn cells(&self) -> usize {
        match &self.values {
            FieldValues::Probability(p) => p.len(),
            FieldValues::Density { mu, .. } => mu.len(),
        }
    }

    /// Cell-major weight vectors: `[1-p, p]` for probabilities, interval
    /// weights over `cuts` for densities.
    pub fn weights(&self, cuts: &[f64]) -> Vec<f64> {
        match &self.values {
            FieldValues::Probability(p) => p.iter().flat_map(|&p| [1.0 - p, p]).collect(),
            FieldValues::Density { mu, sigma } => mu
                .iter()
                .zip(sigma)
                .flat_map(|(&m, &s)| interval_weights(m, s, cuts))
                .collect(),
        }
    }

    /// The scalar to visualize: `p`, or the mean distance.
    pub fn scalar(&self) -> &[f64] {
        match &self.values {
            FieldValues::Probability(p) => p,
            FieldValues::Density { mu, .. } => mu,
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability mass of `N(mu, sigma²)` on `(-inf, c0), [c0, c1), …,
/// [c_last, inf)`. `cuts` must be ascending.
pub fn interval_weights(mu: f64, sigma: f64, cuts: &[f64]) -> Vec<f64> {
    debug_assert!(cuts.windows(2).all(|w| w[0] <= w[1]));
    let sigma = sigma.max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut below = 0.0;
    for &c in cuts {
        let cdf = normal_cdf((c - mu) / sigma);
        out.push((cdf - below).max(0.0));
        below = cdf;
    }
    match cuts.last() {
        // The upper tail directly, so it keeps precision far above the mean.
        Some(&c) => out.push(0.5 * erfc((c - mu) / (sigma * std::f64::consts::SQRT_2))),
        None => out.push(1.0),
    }
    out
}

/// CSV snapshot: a comment line with the grid, then one row of values per
/// grid row, northern row first.
pub fn write_csv<W: Write>(mut w: W, grid: &GridSpec, values: &[f64]) -> io::Result<()> {
    writeln!(
        w,
        "# origin_lat={} origin_lon={} width_m={} height_m={} cols={} rows={}",
        grid.origin_lat, grid.origin_lon, grid.width_m, grid.height_m, grid.cols, grid.rows
    )?;
    let mut line = String::new();
    for row in values.chunks(grid.cols) {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parses a snapshot written by [`write_csv`].
pub fn read_csv<R: BufRead>(mut r: R) -> Result<(GridSpec, Vec<f64>), StarmapError> {
    let bad = |m: &str| StarmapError::Snapshot(m.to_string());
    let mut header = String::new();
    r.read_line(&mut header)?;
    let header = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| bad("missing grid header"))?;
    let mut kv = std::collections::HashMap::new();
    for part in header.split_whitespace() {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| bad("malformed grid header"))?;
        kv.insert(k, v);
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| bad(&format!("header lacks {k}")))
    };
    let num = |k: &str| -> Result<f64, StarmapError> { get(k)?.parse().map_err(|_| bad(k)) };
    let int = |k: &str| -> Result<usize, StarmapError> { get(k)?.parse().map_err(|_| bad(k)) };
    let grid = GridSpec {
        origin_lat: num("origin_lat")?,
        origin_lon: num("origin_lon")?,
        width_m: num("width_m")?,
        height_m: num("height_m")?,
        cols: int("cols")?,
        rows: int("rows")?,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut values = Vec::with_capacity(grid.cells());
    for record in reader.records() {
        let record = record.map_err(|e| bad(&e.to_string()))?;
        if record.len() != grid.cols {
            return Err(bad("row width differs from cols"));
        }
        for field in &record {
            values.push(field.parse::<f64>().map_err(|_| bad(field))?);
        }
    }
    if values.len() != grid.cells() {
        return Err(bad("row count differs from rows"));
    }
    Ok((grid, values))
}

/// 16-bit binary PGM of values clamped to `[0, 1]`.
pub fn write_pgm<W: Write>(mut w: W, grid: &GridSpec, values: &[f64]) -> io::Result<()> {
    write!(w, "P5\n{} {}\n65535\n", grid.cols, grid.rows)?;
    let mut buf = Vec::with_capacity(values.len() * 2);
    for v in values {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&buf)
}
