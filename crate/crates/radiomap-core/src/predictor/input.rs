//! Input rasterization and normalization.

use crate::error::{Error, Result};
use crate::grid::{Grid, HeightMap, MeasurementSet};
use crate::nn::Tensor;
use crate::predictor::{Normalization, Variant};

/// Rasterize measurements and heights into a raw `[2, n, n]` tensor:
/// channel 0 holds measured dBm values with the padding constant
/// elsewhere, channel 1 copies the building heights in meters.
pub fn tensorize(
    meas: &MeasurementSet,
    heights: &HeightMap,
    grid: &Grid,
    norm: &Normalization,
) -> Result<Tensor<f64>> {
    if heights.grid() != grid {
        return Err(Error::ShapeMismatch("height map grid differs from target grid".into()));
    }
    let n = grid.cells_per_side();
    let mut data = vec![norm.c_l_dbm; 2 * n * n];
    for m in meas.iter() {
        if m.row >= n || m.col >= n {
            return Err(Error::IndexOutOfRange(format!(
                "measurement at ({}, {}) outside {n}x{n} grid",
                m.row, m.col
            )));
        }
        data[m.row * n + m.col] = m.value_dbm;
    }
    data[n * n..].copy_from_slice(heights.as_slice());
    Tensor::from_vec(&[2, n, n], data)
}

/// Normalize a raw `[2, n, n]` tensor so every entry lands in [-1, 1]:
/// channel 0 via the fixed signal range (the padding value clamps to -1
/// exactly), channel 1 via the fixed height range.
pub fn normalize(raw: &Tensor<f64>, norm: &Normalization) -> Result<Tensor<f64>> {
    let shape = raw.shape();
    if shape.len() != 3 || shape[0] != 2 {
        return Err(Error::ShapeMismatch(format!("expected [2, n, n] input, got {shape:?}")));
    }
    let hw = shape[1] * shape[2];
    let mut out = raw.clone();
    let data = out.data_mut();
    for v in &mut data[..hw] {
        *v = norm.normalize_signal(*v);
    }
    for v in &mut data[hw..] {
        *v = norm.normalize_height(*v);
    }
    Ok(out)
}

/// Tensorize, normalize, and restrict to the channels the variant reads.
pub fn build_input(
    meas: &MeasurementSet,
    heights: &HeightMap,
    grid: &Grid,
    norm: &Normalization,
    variant: Variant,
) -> Result<Tensor<f64>> {
    let normalized = normalize(&tensorize(meas, heights, grid, norm)?, norm)?;
    match variant {
        Variant::MapBlind => {
            let n = grid.cells_per_side();
            let hw = n * n;
            Tensor::from_vec(&[1, n, n], normalized.data()[..hw].to_vec())
        }
        _ => Ok(normalized),
    }
}
