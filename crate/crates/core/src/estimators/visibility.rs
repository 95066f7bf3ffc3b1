//! Two-photon interference fringes: `C(theta) = B [1 + V cos(4 theta - phi0)]`
//! with `theta` the half-wave-plate angle on Signal 2.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

use crate::detection::{CountRecord, MeasurementSetting};
use crate::error::{Error, Result};
use crate::qstate::PolarizationKet;

/// Visibility above which a fringe cannot come from classical fields.
pub const CLASSICAL_VISIBILITY_THRESHOLD: f64 = 0.707;
pub const MIN_FRINGE_POINTS: usize = 8;
pub const FRINGE_PERIOD: f64 = core::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum FitWeighting {
    #[default]
    Unweighted,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FringeFit {
    pub visibility: f64,
    pub phase: f64,
    pub offset: f64,
    /// Linearized standard errors of `(visibility, phase, offset)`.
    pub sigma: [f64; 3],
    pub nonclassical: bool,
}

/// `n` wave-plate angles evenly covering `[0, pi/2]`.
pub fn fringe_sweep(n: usize) -> Vec<f64> {
    if n < 2 {
        return alloc::vec![0.0; n];
    }
    (0..n)
        .map(|k| FRINGE_PERIOD * k as f64 / (n - 1) as f64)
        .collect()
}

/// Signal 1 analyzed in `arm1`; Signal 2 analyzed at `2 theta` behind the
/// half-wave plate. Labels are `{prefix}:NN`.
pub fn fringe_settings(
    prefix: &str,
    arm1: PolarizationKet,
    thetas: &[f64],
) -> Vec<MeasurementSetting> {
    thetas
        .iter()
        .enumerate()
        .map(|(k, t)| MeasurementSetting {
            label: format!("{prefix}:{k:02}"),
            arm1_projector: arm1,
            arm2_projector: PolarizationKet::linear(2.0 * t),
        })
        .collect()
}

/// `(theta, coincidences)` pairs matched to `{prefix}:NN` labels. Counts
/// are rescaled to the integration time of the first point, so with equal
/// times they are the raw counts.
pub fn fringe_points(
    records: &[CountRecord],
    prefix: &str,
    thetas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut t0 = None;
    thetas
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let label = format!("{prefix}:{k:02}");
            let r = records
                .iter()
                .find(|r| r.setting_label == label)
                .ok_or_else(|| Error::Configuration(format!("missing fringe record '{label}'")))?;
            let t0 = *t0.get_or_insert(r.acquisition_s);
            Ok((*t, r.coincidences as f64 * t0 / r.acquisition_s))
        })
        .collect()
}

pub fn visibility_fit(points: &[(f64, f64)], weighting: FitWeighting) -> Result<FringeFit> {
    if points.len() < MIN_FRINGE_POINTS {
        return Err(Error::validation(format!(
            "fringe fit needs at least {MIN_FRINGE_POINTS} points, got {}",
            points.len()
        )));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (t, _)| {
            (lo.min(*t), hi.max(*t))
        });
    if hi - lo < FRINGE_PERIOD - 1e-9 {
        return Err(Error::validation("fringe points must span a full period"));
    }
    if points.iter().any(|(t, c)| !t.is_finite() || !(*c >= 0.0)) {
        return Err(Error::validation(
            "fringe points must be finite with non-negative counts",
        ));
    }
    let row = |t: f64| Vector3::new(1.0, (4.0 * t).cos(), (4.0 * t).sin());
    let weight = |c: f64| match weighting {
        FitWeighting::Unweighted => 1.0,
        FitWeighting::Poisson => 1.0 / c.max(1.0),
    };
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (t, c) in points {
        let x = row(*t);
        let w = weight(*c);
        normal += (x * x.transpose()).scale(w);
        rhs += x.scale(w * c);
    }
    let inv = normal
        .try_inverse()
        .ok_or_else(|| Error::estimation("fringe design is singular"))?;
    let p = inv * rhs;
    let (a, b, c) = (p[0], p[1], p[2]);
    let amp = b.hypot(c);
    if !(a > 0.0) || !(amp > 1e-12 * a) {
        return Err(Error::estimation("flat or empty fringe"));
    }
    // Sandwich covariance with Poisson variance equal to the count.
    let mut meat = Matrix3::zeros();
    for (t, cnt) in points {
        let x = row(*t);
        let w = weight(*cnt);
        meat += (x * x.transpose()).scale(w * w * cnt.max(1.0));
    }
    let cov = inv * meat * inv;
    let v = amp / a;
    // Gradients of V = amp/a and phi = atan2(c, b).
    let dv = Vector3::new(-v / a, b / (amp * a), c / (amp * a));
    let dphi = Vector3::new(0.0, -c / (amp * amp), b / (amp * amp));
    let var = |g: &Vector3<f64>| (g.transpose() * cov * g)[(0, 0)].max(0.0).sqrt();
    let visibility = v.min(1.0);
    Ok(FringeFit {
        visibility,
        phase: c.atan2(b),
        offset: a,
        sigma: [var(&dv), var(&dphi), cov[(0, 0)].max(0.0).sqrt()],
        nonclassical: visibility > CLASSICAL_VISIBILITY_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::poisson;
    use crate::qstate::TwoQubitState;
    use crate::rng::rng_from_seed;

    fn model(b: f64, v: f64, phi: f64, t: f64) -> f64 {
        b * (1.0 + v * (4.0 * t - phi).cos())
    }

    #[test]
    fn exact_unit_visibility() {
        let pts: Vec<(f64, f64)> = fringe_sweep(17)
            .iter()
            .map(|t| (*t, model(100.0, 1.0, 0.3, *t)))
            .collect();
        let f = visibility_fit(&pts, FitWeighting::Unweighted).unwrap();
        assert!((f.visibility - 1.0).abs() < 1e-6);
        assert!((f.phase - 0.3).abs() < 1e-9);
        assert!(f.nonclassical);
    }

    #[test]
    fn psi_plus_fringe_from_settings() {
        let psi = TwoQubitState::psi_plus();
        let thetas = fringe_sweep(17);
        let pts: Vec<(f64, f64)> = fringe_settings("fringe", PolarizationKet::a(), &thetas)
            .iter()
            .zip(&thetas)
            .map(|(s, t)| {
                (
                    *t,
                    psi.product_probability(&s.arm1_projector, &s.arm2_projector),
                )
            })
            .collect();
        let f = visibility_fit(&pts, FitWeighting::Poisson).unwrap();
        assert!((f.visibility - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let flat: Vec<(f64, f64)> = fringe_sweep(17).iter().map(|t| (*t, 5.0)).collect();
        assert!(matches!(
            visibility_fit(&flat, FitWeighting::Unweighted),
            Err(Error::Estimation(_))
        ));
        let few: Vec<(f64, f64)> = fringe_sweep(5).iter().map(|t| (*t, 5.0)).collect();
        assert!(matches!(
            visibility_fit(&few, FitWeighting::Unweighted),
            Err(Error::Validation(_))
        ));
        let narrow: Vec<(f64, f64)> = (0..10).map(|k| (0.1 * k as f64, 1.0 + k as f64)).collect();
        assert!(visibility_fit(&narrow, FitWeighting::Unweighted).is_err());
    }

    #[test]
    fn planted_parameters_are_covered() {
        let (b, v, phi) = (200.0, 0.8, 0.4);
        let thetas = fringe_sweep(17);
        let mut covered = 0;
        let trials = 500;
        for seed in 0..trials {
            let mut rng = rng_from_seed(seed);
            let pts: Vec<(f64, f64)> = thetas
                .iter()
                .map(|t| (*t, poisson(&mut rng, model(b, v, phi, *t)) as f64))
                .collect();
            let f = visibility_fit(&pts, FitWeighting::Unweighted).unwrap();
            let ok = (f.visibility - v).abs() < 3.0 * f.sigma[0]
                && (f.phase - phi).abs() < 3.0 * f.sigma[1]
                && (f.offset - b).abs() < 3.0 * f.sigma[2];
            covered += ok as usize;
        }
        assert!(
            covered as f64 >= 0.95 * trials as f64,
            "coverage {covered}/{trials}"
        );
    }
}
