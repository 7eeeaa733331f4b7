//! Range-mask loss: squared error (or BCE) plus half the soft Dice loss.

use ndarray::Array2;

use crate::depth::BinaryMask;
use crate::geometry::DistortionMap;
use crate::{Error, Result};

use super::{check_weight_shape, weight_at, MaskLossVariant, TermResult};

/// Stabilizer in the Dice ratio.
const DICE_EPS: f64 = 1e-6;
/// Clamp bound keeping the BCE logs finite.
const BCE_CLAMP: f64 = 1e-7;

/// Mask loss between a soft prediction and a hard reference.
///
/// The default variant is `mean((M − M_gt)²) + 0.5·Dice` with the soft Dice
/// loss `1 − (2ΣM·M_gt + ε)/(ΣM + ΣM_gt + ε)`; the BCE variant swaps the
/// squared-error term for clamped binary cross-entropy. Distortion weights,
/// when given, weight both the pixel mean and the Dice sums. The gradient is
/// taken with respect to the soft prediction.
pub fn mask_loss(
    pred: &BinaryMask,
    gt: &BinaryMask,
    weights: Option<&DistortionMap>,
    variant: MaskLossVariant,
) -> Result<TermResult> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::dims(
            "mask_loss pred vs gt",
            (gt.width(), gt.height()),
            (pred.width(), pred.height()),
        ));
    }
    check_weight_shape(weights, pred.width(), pred.height())?;
    let (h, w) = (pred.height(), pred.width());

    let mut sum_w = 0.0;
    let mut inter = 0.0;
    let mut sum_m = 0.0;
    let mut sum_g = 0.0;
    let mut pixel_term = 0.0;
    for r in 0..h {
        for c in 0..w {
            let wt = weight_at(weights, r, c);
            let m = pred.value(r, c) as f64;
            let g = gt.value(r, c) as f64;
            sum_w += wt;
            inter += wt * m * g;
            sum_m += wt * m;
            sum_g += wt * g;
            pixel_term += wt
                * match variant {
                    MaskLossVariant::MseDice => (m - g) * (m - g),
                    MaskLossVariant::BceDice => {
                        let mc = m.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                        -(g * mc.ln() + (1.0 - g) * (1.0 - mc).ln())
                    }
                };
        }
    }
    let den = sum_m + sum_g + DICE_EPS;
    let dice = 1.0 - (2.0 * inter + DICE_EPS) / den;
    let value = pixel_term / sum_w + 0.5 * dice;

    let mut gradient = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let wt = weight_at(weights, r, c);
            let m = pred.value(r, c) as f64;
            let g = gt.value(r, c) as f64;
            let pixel_grad = match variant {
                MaskLossVariant::MseDice => 2.0 * wt * (m - g) / sum_w,
                MaskLossVariant::BceDice => {
                    if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&m) {
                        wt * (-g / m + (1.0 - g) / (1.0 - m)) / sum_w
                    } else {
                        0.0
                    }
                }
            };
            let dice_grad = -wt * (2.0 * g * den - (2.0 * inter + DICE_EPS)) / (den * den);
            gradient[(r, c)] = pixel_grad + 0.5 * dice_grad;
        }
    }
    Ok(TermResult {
        value,
        gradient,
        pixels: h * w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn mask(vals: Vec<f32>) -> BinaryMask {
        let n = vals.len();
        BinaryMask::new(Array2::from_shape_vec((1, n), vals).unwrap()).unwrap()
    }

    #[test]
    fn equal_hard_masks_score_zero() {
        let m = mask(vec![1.0, 0.0, 1.0, 1.0]);
        let r = mask_loss(&m, &m, None, MaskLossVariant::MseDice).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn dice_hand_value_four_pixels() {
        // Overlap 1, sums 2 and 1: Dice coefficient 2/3, Dice loss 1/3.
        let m = mask(vec![1.0, 1.0, 0.0, 0.0]);
        let g = mask(vec![1.0, 0.0, 0.0, 0.0]);
        let r = mask_loss(&m, &g, None, MaskLossVariant::MseDice).unwrap();
        let dice_part = r.value - 0.25; // MSE is 1/4 here
        assert_abs_diff_eq!(dice_part, 0.5 * (1.0 / 3.0), epsilon = 1e-4);
    }

    #[test]
    fn mse_plus_dice_hand_value_two_pixels() {
        let m = mask(vec![1.0, 0.0]);
        let g = mask(vec![1.0, 1.0]);
        let r = mask_loss(&m, &g, None, MaskLossVariant::MseDice).unwrap();
        assert_abs_diff_eq!(r.value, 0.5 + 0.5 * (1.0 / 3.0), epsilon = 1e-4);
    }

    #[test]
    fn soft_prediction_gradient_signs() {
        let m = mask(vec![0.8, 0.3]);
        let g = mask(vec![1.0, 0.0]);
        let r = mask_loss(&m, &g, None, MaskLossVariant::MseDice).unwrap();
        // Pushing 0.8 toward 1 lowers the loss; pushing 0.3 higher raises it.
        assert!(r.gradient[(0, 0)] < 0.0);
        assert!(r.gradient[(0, 1)] > 0.0);
    }

    #[test]
    fn bce_variant_also_zero_at_equality() {
        let m = mask(vec![1.0, 0.0, 1.0]);
        let r = mask_loss(&m, &m, None, MaskLossVariant::BceDice).unwrap();
        // Clamping turns ln(1) into ln(1 − 1e-7); only ε-sized residue remains.
        assert!(r.value.abs() < 1e-5, "value {}", r.value);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = mask(vec![1.0, 0.0]);
        let b = BinaryMask::new(array![[1.0], [0.0]]).unwrap();
        assert!(mask_loss(&a, &b, None, MaskLossVariant::MseDice).is_err());
    }
}
