//! Reproducible low-frequency bias fields.
//!
//! Each of the eight fields is a fixed linear combination of 2-D Legendre
//! polynomials of total order <= 2 over normalized coordinates `[-1, 1]^2`,
//! affinely rescaled so the multiplicative gain spans `[1 - a, 1 + a]`
//! (default amplitude `a = 0.3`, i.e. `[0.7, 1.3]`). The coefficient table is
//! frozen so regenerating a field for a given `(field_id, shape)` is
//! bit-identical.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of built-in fields.
pub const FIELD_COUNT: u32 = 8;

/// Default inhomogeneity amplitude: gains span `[0.7, 1.3]`.
pub const DEFAULT_AMPLITUDE: f64 = 0.3;

/// Basis layout: `[1, P1(u), P1(v), P2(u), P2(v), P1(u)P1(v)]` where
/// `u` spans columns and `v` spans rows.
pub const BASIS_SIZE: usize = 6;

/// Frozen coefficient vectors for the eight built-in fields, chosen to give
/// distinct orientations (ramps, a saddle, bowls, tilted parabolas) while
/// keeping the per-pixel gain change inside the smoothness bound.
pub const COEFF_TABLE: [[f64; BASIS_SIZE]; FIELD_COUNT as usize] = [
    [0.0, 1.0, 0.0, 0.15, 0.0, 0.0],   // 1: left-right ramp
    [0.0, 0.0, 1.0, 0.0, 0.15, 0.0],   // 2: top-bottom ramp
    [0.0, 0.7, 0.7, 0.0, 0.0, 0.3],    // 3: diagonal ramp
    [0.0, 0.2, 0.2, 0.0, 0.0, 1.0],    // 4: saddle
    [0.0, 0.1, 0.0, -0.8, -0.8, 0.0],  // 5: center-bright bowl
    [0.0, 0.6, -0.6, 0.25, 0.25, 0.5], // 6: corner vignette
    [0.0, 0.35, 0.0, 0.9, 0.0, 0.2],   // 7: horizontal parabola with tilt
    [0.0, 0.0, 0.35, 0.2, 0.9, 0.0],   // 8: vertical parabola with tilt
];

/// How a field perturbs a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMode {
    /// `out = clip(slice * field, 0, 255)` — the physical MRI reading.
    Multiplicative,
    /// `out = clip(slice + 255 * (field - 1), 0, 255)`.
    Additive,
}

/// One generated multiplicative gain field.
#[derive(Debug, Clone)]
pub struct BiasField {
    pub field_id: u32,
    pub values: Array2<f64>,
    /// Generating coefficients in the [`COEFF_TABLE`] basis.
    pub coeffs: [f64; BASIS_SIZE],
}

fn legendre_basis(u: f64, v: f64) -> [f64; BASIS_SIZE] {
    let p2 = |t: f64| (3.0 * t * t - 1.0) / 2.0;
    [1.0, u, v, p2(u), p2(v), u * v]
}

/// Normalized coordinate of index `i` in an axis of length `n`, endpoints at
/// exactly -1 and 1 (single-pixel axes sit at 0).
fn norm_coord(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Evaluates the raw (unscaled) polynomial for `coeffs` at pixel `(row, col)`.
pub fn raw_poly(coeffs: &[f64; BASIS_SIZE], row: usize, col: usize, height: usize, width: usize) -> f64 {
    let u = norm_coord(col, width);
    let v = norm_coord(row, height);
    legendre_basis(u, v)
        .iter()
        .zip(coeffs)
        .map(|(b, c)| b * c)
        .sum()
}

/// Generates field `field_id` (1-based) at the given shape with the frozen
/// coefficient table and default amplitude.
pub fn generate_bias_field(field_id: u32, height: usize, width: usize) -> Result<BiasField> {
    generate_with(field_id, height, width, &COEFF_TABLE, DEFAULT_AMPLITUDE)
}

/// Generates a field from an explicit coefficient table and amplitude.
pub fn generate_with(
    field_id: u32,
    height: usize,
    width: usize,
    table: &[[f64; BASIS_SIZE]],
    amplitude: f64,
) -> Result<BiasField> {
    if field_id == 0 || field_id as usize > table.len() {
        return Err(Error::FieldIdOutOfRange {
            id: field_id,
            max: table.len() as u32,
        });
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("bias field dims must be positive".into()));
    }
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::InvalidArgument(format!(
            "bias amplitude must be in [0, 1), got {amplitude}"
        )));
    }
    let coeffs = table[(field_id - 1) as usize];
    let mut raw = Array2::from_shape_fn((height, width), |(r, c)| {
        raw_poly(&coeffs, r, c, height, width)
    });
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in raw.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let half = (hi - lo) / 2.0;
    if half < 1e-12 {
        raw.fill(1.0); // constant basis centers to a uniform unit gain
    } else {
        let center = (hi + lo) / 2.0;
        raw.mapv_inplace(|v| 1.0 + amplitude * (v - center) / half);
    }
    Ok(BiasField {
        field_id,
        values: raw,
        coeffs,
    })
}

/// Applies a field to a `[0, 255]` slice.
pub fn contaminate(slice: &Array2<f64>, field: &BiasField, mode: BiasMode) -> Result<Array2<f64>> {
    if slice.dim() != field.values.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", field.values.dim()),
            actual: format!("{:?}", slice.dim()),
        });
    }
    let out = match mode {
        BiasMode::Multiplicative => (slice * &field.values).mapv(|v| v.clamp(0.0, 255.0)),
        BiasMode::Additive => ndarray::Zip::from(slice)
            .and(&field.values)
            .map_collect(|&s, &f| (s + 255.0 * (f - 1.0)).clamp(0.0, 255.0)),
    };
    Ok(out)
}

/// Largest gain difference between horizontally or vertically adjacent
/// pixels; the smoothness contract bounds this by `2.4 / max(H, W)`.
pub fn max_adjacent_diff(values: &Array2<f64>) -> f64 {
    let (h, w) = values.dim();
    let mut m: f64 = 0.0;
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                m = m.max((values[[r, c + 1]] - values[[r, c]]).abs());
            }
            if r + 1 < h {
                m = m.max((values[[r + 1, c]] - values[[r, c]]).abs());
            }
        }
    }
    m
}

/// The smoothness bound for a given shape.
pub fn smoothness_bound(height: usize, width: usize) -> f64 {
    0.6 / height.max(width) as f64 * 4.0
}
