//! Grid geometry and the core field types shared by every other module.
//!
//! All fields are row-major `n x n` arrays over a square grid of points
//! spaced `spacing_m` apart. Physical coordinates follow
//! `(x, y) = (row * spacing, col * spacing)`. Cells whose building reaches
//! the flight altitude are "indoor"; signal fields carry an absent sentinel
//! (NaN) there and no metric or loss ever reads those entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in 3D space: horizontal coordinates in meters plus altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, h: f64) -> Self {
        Self { x, y, h }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dh = self.h - other.h;
        (dx * dx + dy * dy + dh * dh).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Square area of interest discretized into `cells_per_side`^2 grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    size_m: f64,
    spacing_m: f64,
    cells_per_side: usize,
}

impl Grid {
    /// Build a square grid. The side length must be an integer multiple of
    /// the spacing. Whether the cell count also suits a given network depth
    /// is checked where the network is configured, not here, so that
    /// generator-scale maps (e.g. 100 cells/side) use the same type.
    pub fn new(size_m: f64, spacing_m: f64) -> Result<Self> {
        if !(spacing_m > 0.0) || !spacing_m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing_m}"
            )));
        }
        if !(size_m > 0.0) || !size_m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid size must be positive, got {size_m}"
            )));
        }
        let ratio = size_m / spacing_m;
        let cells = ratio.round();
        if (ratio - cells).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid size {size_m} m is not a multiple of spacing {spacing_m} m"
            )));
        }
        Ok(Self { size_m, spacing_m, cells_per_side: cells as usize })
    }

    pub fn size_m(&self) -> f64 {
        self.size_m
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    /// Physical location of the grid point at (row, col).
    pub fn cell_to_coords(&self, row: usize, col: usize) -> Result<(f64, f64)> {
        if row >= self.cells_per_side || col >= self.cells_per_side {
            return Err(Error::IndexOutOfRange(format!(
                "cell ({row}, {col}) outside {n}x{n} grid",
                n = self.cells_per_side
            )));
        }
        Ok((row as f64 * self.spacing_m, col as f64 * self.spacing_m))
    }

    /// Nearest grid cell to a physical location, clamped to the grid.
    pub fn coords_to_cell(&self, x: f64, y: f64) -> (usize, usize) {
        let max = self.cells_per_side - 1;
        let r = (x / self.spacing_m).round().clamp(0.0, max as f64) as usize;
        let c = (y / self.spacing_m).round().clamp(0.0, max as f64) as usize;
        (r, c)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cells_per_side + col
    }

    /// True when four 2x downsamplings (and their inverses) stay integral.
    pub fn supports_pool_depth(&self, depth: usize) -> bool {
        self.cells_per_side % (1usize << depth) == 0
    }
}

/// Per-cell building height in meters; zero means open ground.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    grid: Grid,
    heights: Vec<f64>,
}

impl HeightMap {
    pub fn new(grid: Grid, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != grid.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "height map has {} entries for a {}-cell grid",
                heights.len(),
                grid.cell_count()
            )));
        }
        if let Some(bad) = heights.iter().find(|h| !h.is_finite() || **h < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "building heights must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Self { grid, heights })
    }

    pub fn flat(grid: Grid) -> Self {
        let heights = vec![0.0; grid.cell_count()];
        Self { grid, heights }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.heights[self.grid.index(row, col)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.heights
    }

    /// Extract a square window with origin (row0, col0).
    pub fn crop(&self, row0: usize, col0: usize, out: Grid) -> Result<HeightMap> {
        let n = out.cells_per_side();
        let src = self.grid.cells_per_side();
        if (out.spacing_m() - self.grid.spacing_m()).abs() > 1e-12 {
            return Err(Error::ShapeMismatch("crop spacing differs from source".into()));
        }
        if row0 + n > src || col0 + n > src {
            return Err(Error::IndexOutOfRange(format!(
                "crop ({row0}, {col0})+{n} exceeds {src}x{src} map"
            )));
        }
        let mut heights = Vec::with_capacity(n * n);
        for r in 0..n {
            let base = (row0 + r) * src + col0;
            heights.extend_from_slice(&self.heights[base..base + n]);
        }
        Ok(HeightMap { grid: out, heights })
    }
}

/// Binary outdoor indicator at flight altitude (1 = outdoor).
#[derive(Debug, Clone, PartialEq)]
pub struct OutdoorMask {
    grid: Grid,
    mask: Vec<bool>,
}

impl OutdoorMask {
    pub fn new(grid: Grid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries for a {}-cell grid",
                mask.len(),
                grid.cell_count()
            )));
        }
        Ok(Self { grid, mask })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_outdoor(&self, row: usize, col: usize) -> bool {
        self.mask[self.grid.index(row, col)]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    /// Number of outdoor cells, |z|.
    pub fn outdoor_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Row-major indices of outdoor cells.
    pub fn outdoor_indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|i| self.mask[*i]).collect()
    }
}

/// Classify cells as outdoor at the given flight altitude. A building whose
/// height equals the altitude exactly counts as obstructed.
pub fn outdoor_mask(heights: &HeightMap, h_uav: f64) -> Result<OutdoorMask> {
    if !(h_uav > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "flight altitude must be positive, got {h_uav}"
        )));
    }
    let mask = heights.as_slice().iter().map(|h| *h < h_uav).collect();
    OutdoorMask::new(*heights.grid(), mask)
}

/// Sentinel stored at indoor cells of a [`SignalField`].
pub const ABSENT: f64 = f64::NAN;

/// Per-cell signal strength in dBm at flight altitude. Indoor cells carry
/// the absent sentinel and must never feed a metric or loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalField {
    grid: Grid,
    values: Vec<f64>,
}

impl SignalField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} entries for a {}-cell grid",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(bad) = values.iter().find(|v| v.is_infinite()) {
            return Err(Error::InvalidParameter(format!(
                "field values must be finite or absent, got {bad}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.index(row, col)]
    }

    pub fn is_absent(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_nan()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Outdoor entries in row-major order.
    pub fn masked_values(&self, mask: &OutdoorMask) -> Result<Vec<f64>> {
        masked_values(self.as_slice(), mask)
    }

    /// Check that every outdoor entry is finite.
    pub fn validate_against(&self, mask: &OutdoorMask) -> Result<()> {
        if mask.grid() != &self.grid {
            return Err(Error::ShapeMismatch("mask grid differs from field grid".into()));
        }
        for (v, m) in self.values.iter().zip(mask.as_slice()) {
            if *m && !v.is_finite() {
                return Err(Error::Contract("outdoor cell carries a non-finite value".into()));
            }
        }
        Ok(())
    }

    pub fn crop(&self, row0: usize, col0: usize, out: Grid) -> Result<SignalField> {
        let n = out.cells_per_side();
        let src = self.grid.cells_per_side();
        if (out.spacing_m() - self.grid.spacing_m()).abs() > 1e-12 {
            return Err(Error::ShapeMismatch("crop spacing differs from source".into()));
        }
        if row0 + n > src || col0 + n > src {
            return Err(Error::IndexOutOfRange(format!(
                "crop ({row0}, {col0})+{n} exceeds {src}x{src} field"
            )));
        }
        let mut values = Vec::with_capacity(n * n);
        for r in 0..n {
            let base = (row0 + r) * src + col0;
            values.extend_from_slice(&self.values[base..base + n]);
        }
        Ok(SignalField { grid: out, values })
    }
}

/// Row-major extraction of the entries selected by the mask.
pub fn masked_values(values: &[f64], mask: &OutdoorMask) -> Result<Vec<f64>> {
    if values.len() != mask.as_slice().len() {
        return Err(Error::ShapeMismatch(format!(
            "{} values vs {} mask entries",
            values.len(),
            mask.as_slice().len()
        )));
    }
    Ok(values
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .collect())
}

/// One signal-strength measurement at a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub row: usize,
    pub col: usize,
    pub value_dbm: f64,
}

/// A set of measurements at distinct grid cells.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementSet {
    entries: Vec<Measurement>,
}

impl MeasurementSet {
    /// Build from entries, rejecting duplicate cells.
    pub fn new(entries: Vec<Measurement>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for m in &entries {
            if !seen.insert((m.row, m.col)) {
                return Err(Error::Contract(format!(
                    "duplicate measurement cell ({}, {})",
                    m.row, m.col
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Measurement> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[Measurement] {
        &self.entries
    }

    /// Check that every measurement lies on an outdoor cell of the mask.
    pub fn validate_outdoor(&self, mask: &OutdoorMask) -> Result<()> {
        let n = mask.grid().cells_per_side();
        for m in &self.entries {
            if m.row >= n || m.col >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "measurement at ({}, {}) outside {n}x{n} grid",
                    m.row, m.col
                )));
            }
            if !mask.is_outdoor(m.row, m.col) {
                return Err(Error::Contract(format!(
                    "measurement at ({}, {}) lies on an indoor cell",
                    m.row, m.col
                )));
            }
        }
        Ok(())
    }
}

/// Gaussian prediction of a signal field: per-cell mean (dBm) and, for
/// methods that model it, per-cell variance (dB^2).
///
/// The least-squares benchmark only predicts the mean, so the variance is
/// optional; when present it is finite and strictly positive everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedField {
    grid: Grid,
    mean: Vec<f64>,
    variance: Option<Vec<f64>>,
}

impl PredictedField {
    pub fn new(grid: Grid, mean: Vec<f64>, variance: Option<Vec<f64>>) -> Result<Self> {
        if mean.len() != grid.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "prediction mean has {} entries for a {}-cell grid",
                mean.len(),
                grid.cell_count()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("prediction mean must be finite everywhere".into()));
        }
        if let Some(var) = &variance {
            if var.len() != mean.len() {
                return Err(Error::ShapeMismatch("variance length differs from mean".into()));
            }
            if var.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::Contract(
                    "prediction variance must be finite and positive everywhere".into(),
                ));
            }
        }
        Ok(Self { grid, mean, variance })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> Option<&[f64]> {
        self.variance.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid64() -> Grid {
        Grid::new(256.0, 4.0).unwrap()
    }

    #[test]
    fn cell_to_coords_examples() {
        let g = grid64();
        assert_eq!(g.cell_to_coords(0, 0).unwrap(), (0.0, 0.0));
        assert_eq!(g.cell_to_coords(1, 2).unwrap(), (4.0, 8.0));
        assert_eq!(g.cell_to_coords(63, 63).unwrap(), (252.0, 252.0));
        assert!(matches!(g.cell_to_coords(64, 0), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(256.0, 0.0).is_err());
        assert!(Grid::new(-10.0, 4.0).is_err());
        assert!(Grid::new(250.0, 4.0).is_err(), "250/4 is not integral");
    }

    #[test]
    fn pool_depth_support() {
        assert!(grid64().supports_pool_depth(4));
        let g100 = Grid::new(400.0, 4.0).unwrap();
        assert!(!g100.supports_pool_depth(4));
        assert!(g100.supports_pool_depth(2));
    }

    #[test]
    fn outdoor_mask_examples() {
        let g = grid64();
        let flat = HeightMap::flat(g);
        let mask = outdoor_mask(&flat, 60.0).unwrap();
        assert_eq!(mask.outdoor_count(), g.cell_count());

        let mut heights = vec![0.0; g.cell_count()];
        heights[g.index(5, 6)] = 80.0;
        let hm = HeightMap::new(g, heights).unwrap();
        let mask = outdoor_mask(&hm, 60.0).unwrap();
        assert_eq!(mask.outdoor_count(), g.cell_count() - 1);
        assert!(!mask.is_outdoor(5, 6));

        // boundary: a building exactly at the flight altitude is obstructed
        let mut heights = vec![0.0; g.cell_count()];
        heights[g.index(0, 0)] = 60.0;
        let hm = HeightMap::new(g, heights).unwrap();
        let mask = outdoor_mask(&hm, 60.0).unwrap();
        assert!(!mask.is_outdoor(0, 0));
    }

    #[test]
    fn masked_values_examples() {
        let g = Grid::new(8.0, 4.0).unwrap();
        let field = SignalField::new(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();

        let all = OutdoorMask::new(g, vec![true; 4]).unwrap();
        assert_eq!(field.masked_values(&all).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);

        let none = OutdoorMask::new(g, vec![false; 4]).unwrap();
        assert!(field.masked_values(&none).unwrap().is_empty());

        // checkerboard [[a, b], [c, d]] with mask [[1, 0], [0, 1]] -> [a, d]
        let checker = OutdoorMask::new(g, vec![true, false, false, true]).unwrap();
        assert_eq!(field.masked_values(&checker).unwrap(), vec![1.0, 4.0]);
    }

    #[test]
    fn measurement_set_rejects_duplicates() {
        let dup = vec![
            Measurement { row: 1, col: 2, value_dbm: -60.0 },
            Measurement { row: 1, col: 2, value_dbm: -61.0 },
        ];
        assert!(matches!(MeasurementSet::new(dup), Err(Error::Contract(_))));
    }

    #[test]
    fn predicted_field_rejects_nonpositive_variance() {
        let g = Grid::new(8.0, 4.0).unwrap();
        let mean = vec![0.0; 4];
        assert!(PredictedField::new(g, mean.clone(), Some(vec![1.0, 1.0, 0.0, 1.0])).is_err());
        assert!(PredictedField::new(g, mean, Some(vec![1.0; 4])).is_ok());
    }

    proptest! {
        #[test]
        fn cell_to_coords_is_injective(pairs in proptest::collection::hash_set((0usize..64, 0usize..64), 2..50)) {
            let g = grid64();
            let coords: std::collections::HashSet<_> = pairs
                .iter()
                .map(|(r, c)| {
                    let (x, y) = g.cell_to_coords(*r, *c).unwrap();
                    (x.to_bits(), y.to_bits())
                })
                .collect();
            prop_assert_eq!(coords.len(), pairs.len());
        }

        #[test]
        fn raising_altitude_never_closes_cells(heights in proptest::collection::vec(0.0f64..100.0, 16), lo in 1.0f64..50.0, extra in 0.0f64..50.0) {
            let g = Grid::new(16.0, 4.0).unwrap();
            let hm = HeightMap::new(g, heights).unwrap();
            let low = outdoor_mask(&hm, lo).unwrap();
            let high = outdoor_mask(&hm, lo + extra).unwrap();
            for (a, b) in low.as_slice().iter().zip(high.as_slice()) {
                prop_assert!(!a | b, "raising h_uav turned an outdoor cell indoor");
            }
        }

        #[test]
        fn masked_values_len_matches_mask(mask in proptest::collection::vec(any::<bool>(), 16)) {
            let g = Grid::new(16.0, 4.0).unwrap();
            let mask = OutdoorMask::new(g, mask).unwrap();
            let field = SignalField::new(g, (0..16).map(|i| i as f64).collect()).unwrap();
            prop_assert_eq!(field.masked_values(&mask).unwrap().len(), mask.outdoor_count());
        }
    }
}
