use ndarray::{Array1, Array2, Zip};

use crate::error::{invalid_input, Result};
use crate::real::Real;

/// Scalar objective together with its gradient.
#[derive(Debug, Clone)]
pub struct LossValue<G> {
    pub scalar: f64,
    pub gradients: G,
}

/// Deep-clustering affinity loss `|V'V|^2 - 2|V'B|^2 + |B'B|^2` with rows of
/// zero weight removed, and its gradient w.r.t. `v`.
///
/// This equals `|VV' - BB'|^2_F` over the weighted rows but only forms D x D,
/// D x C and C x C products.
pub fn dc_loss<T: Real>(v: &Array2<T>, b: &Array2<T>, weights: &Array1<T>) -> Result<LossValue<Array2<T>>> {
    if v.nrows() != b.nrows() || v.nrows() != weights.len() {
        return Err(invalid_input(format!(
            "dc loss needs matching rows: V {}, B {}, weights {}",
            v.nrows(),
            b.nrows(),
            weights.len()
        )));
    }
    let vw = v * &weights.view().insert_axis(ndarray::Axis(1));
    let bw = b * &weights.view().insert_axis(ndarray::Axis(1));
    let vtv = vw.t().dot(&vw);
    let vtb = vw.t().dot(&bw);
    let btb = bw.t().dot(&bw);
    let sq = |m: &Array2<T>| m.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>();
    let scalar = sq(&vtv) - 2.0 * sq(&vtb) + sq(&btb);
    // dJ/dVw = 4 (Vw VwᵀVw - Bw BwᵀVw); chain through the row weights.
    let four = T::of(4.0);
    let mut grad = (vw.dot(&vtv) - bw.dot(&vtb.t())) * four;
    Zip::from(grad.rows_mut()).and(weights).for_each(|mut r, &w| r *= w);
    Ok(LossValue {
        scalar: scalar.max(0.0),
        gradients: grad,
    })
}

/// Magnitude MSE `(1/TF) sum (|Y| M - |X|)^2` and its gradient w.r.t. the mask.
pub fn joint_loss<T: Real>(
    mask: &Array2<T>,
    noisy_mag: &Array2<T>,
    clean_mag: &Array2<T>,
) -> Result<LossValue<Array2<T>>> {
    if mask.dim() != noisy_mag.dim() || mask.dim() != clean_mag.dim() {
        return Err(invalid_input(format!(
            "joint loss shapes differ: mask {:?}, noisy {:?}, clean {:?}",
            mask.dim(),
            noisy_mag.dim(),
            clean_mag.dim()
        )));
    }
    let n = mask.len().max(1) as f64;
    let mut scalar = 0.0f64;
    let scale = T::of(2.0 / n);
    let mut grad = Array2::<T>::zeros(mask.dim());
    Zip::from(&mut grad)
        .and(mask)
        .and(noisy_mag)
        .and(clean_mag)
        .for_each(|g, &m, &y, &x| {
            let r = y * m - x;
            scalar += r.as_f64() * r.as_f64();
            *g = scale * y * r;
        });
    Ok(LossValue {
        scalar: scalar / n,
        gradients: grad,
    })
}
