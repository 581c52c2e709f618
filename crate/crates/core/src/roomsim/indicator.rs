use ndarray::{Array1, Array2};

use crate::error::{invalid_input, Result};

/// Bins whose louder component is further than this below the utterance
/// maximum get zero weight in the clustering loss.
pub const DEFAULT_FLOOR_DB: f64 = -40.0;

/// One-hot dominance labels per T-F bin. Row `t * F + f` corresponds to
/// frame `t`, bin `f`; column 0 is the anechoic speech, column 1 the residual
/// reverberation.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    pub values: Array2<f32>,
    pub weights: Array1<f32>,
}

impl IndicatorMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn active_rows(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }
}

pub fn make_indicator(
    anechoic_mag: &Array2<f32>,
    residual_mag: &Array2<f32>,
    floor_db: f64,
) -> Result<IndicatorMatrix> {
    if anechoic_mag.dim() != residual_mag.dim() {
        return Err(invalid_input(format!(
            "anechoic shape {:?} does not match residual shape {:?}",
            anechoic_mag.dim(),
            residual_mag.dim()
        )));
    }
    let rows = anechoic_mag.len();
    let peak = anechoic_mag
        .iter()
        .chain(residual_mag.iter())
        .fold(0.0f64, |m, &v| m.max(v as f64));
    let threshold = peak * 10f64.powf(floor_db / 20.0);
    let mut values = Array2::<f32>::zeros((rows, 2));
    let mut weights = Array1::<f32>::zeros(rows);
    for (i, (&a, &r)) in anechoic_mag.iter().zip(residual_mag.iter()).enumerate() {
        if a >= r {
            values[[i, 0]] = 1.0;
        } else {
            values[[i, 1]] = 1.0;
        }
        let loudest = a.max(r) as f64;
        if peak > 0.0 && loudest >= threshold {
            weights[i] = 1.0;
        }
    }
    Ok(IndicatorMatrix { values, weights })
}
