use crate::error::{Error, Result};
use crate::nn::ParameterVector;

/// APFL mixing-weight step: `α ← clamp(α − lr·⟨v − w, ∇L(mixed)⟩, 0, 1)`
/// where `v` is the personal twin and `w` the global twin.
pub fn apfl_alpha_update(
    alpha: f64,
    mixed_grad: &ParameterVector,
    global: &ParameterVector,
    personal: &ParameterVector,
    alpha_lr: f64,
) -> Result<f64> {
    if mixed_grad.len() != global.len() || personal.len() != global.len() {
        return Err(Error::dim(
            "apfl twins",
            global.len(),
            personal.len().max(mixed_grad.len()),
        ));
    }
    let inner: f64 = personal
        .values()
        .iter()
        .zip(global.values())
        .zip(mixed_grad.values())
        .map(|((v, w), g)| (v - w) * g)
        .sum();
    let next = alpha - alpha_lr * inner;
    Ok(if next.is_nan() { alpha } else { next.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Role;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::uniform(v.to_vec(), Role::Global)
    }

    #[test]
    fn examples() {
        assert_eq!(
            apfl_alpha_update(0.3, &pv(&[5.0]), &pv(&[1.0]), &pv(&[1.0]), 0.1).unwrap(),
            0.3
        );
        let a = apfl_alpha_update(0.5, &pv(&[2.0]), &pv(&[0.0]), &pv(&[2.0]), 0.1).unwrap();
        assert!((a - 0.1).abs() < 1e-15);
        assert_eq!(
            apfl_alpha_update(0.5, &pv(&[0.0]), &pv(&[0.0]), &pv(&[2.0]), 0.1).unwrap(),
            0.5
        );
    }

    proptest! {
        #[test]
        fn stays_in_unit_interval(a in 0.0f64..=1.0, g in -1e6f64..1e6, w in -1e3f64..1e3, v in -1e3f64..1e3, lr in 0.0f64..10.0) {
            let out = apfl_alpha_update(a, &pv(&[g]), &pv(&[w]), &pv(&[v]), lr).unwrap();
            prop_assert!((0.0..=1.0).contains(&out));
        }
    }
}
