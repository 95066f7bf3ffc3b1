//! Cauchy-Schwarz test on second-order correlation functions.

use crate::error::{Error, Result};

/// `R = g12^2 / (g11 g22)`; classical light satisfies `R <= 1`.
pub fn cauchy_schwarz_r(g12: f64, g11: f64, g22: f64) -> Result<f64> {
    if !(g11 > 0.0 && g22 > 0.0) {
        return Err(Error::estimation("autocorrelations must be positive"));
    }
    if !(g12 >= 0.0) || !g12.is_finite() {
        return Err(Error::validation(
            "cross-correlation must be non-negative and finite",
        ));
    }
    Ok(g12 * g12 / (g11 * g22))
}

pub fn is_nonclassical(r: f64) -> bool {
    r > 1.0
}

/// Autocorrelation `g(0)` of thermal light from a single spontaneous mode.
pub const THERMAL_AUTOCORRELATION: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_anchor_values() {
        let pre = cauchy_schwarz_r(150.0, 1.2, 1.38).unwrap();
        assert_eq!(pre.round(), 13587.0);
        let post = cauchy_schwarz_r(14.0, 1.2, 2.0).unwrap();
        assert_eq!(post.round(), 82.0);
        assert_eq!(cauchy_schwarz_r(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(!is_nonclassical(1.0));
    }

    #[test]
    fn nonpositive_autocorrelation_rejected() {
        assert!(matches!(
            cauchy_schwarz_r(2.0, 0.0, 1.0),
            Err(Error::Estimation(_))
        ));
        assert!(matches!(
            cauchy_schwarz_r(2.0, 1.0, -1.0),
            Err(Error::Estimation(_))
        ));
    }

    proptest! {
        // Coherent or thermal fields with g12 bounded by sqrt(g11 g22) never
        // register as nonclassical.
        #[test]
        fn classical_fields_stay_at_or_below_one(g11 in 1.0f64..2.0, g22 in 1.0f64..2.0, f in 0.0f64..=1.0) {
            let g12 = f * (g11 * g22).sqrt();
            let r = cauchy_schwarz_r(g12, g11, g22).unwrap();
            prop_assert!(r <= 1.0 + 1e-12);
        }
    }
}
