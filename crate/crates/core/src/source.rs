//! Cascade-emission pair source: polarization state, detuning calibration and
//! Gaussian wavepacket descriptors.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector4;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::qstate::{Mat4, TwoQubitState, C64};

/// `FWHM / sigma` for a Gaussian, `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct SourceParams {
    /// Mixing angle in radians; `tan^2 eta_f` is the VH/HV intensity ratio.
    pub eta_f: f64,
    /// Relative phase of the `VH` term in radians.
    pub phi_f: f64,
    /// Two-photon detuning of the pumps, MHz.
    pub two_photon_detuning: f64,
    /// White-noise admixture fraction.
    pub p_white: f64,
    /// Pair-generation probability per pump pulse.
    pub pair_prob: f64,
    /// Signal-2 spectral FWHM, MHz.
    pub s2_spectral_fwhm: f64,
    /// Two-photon (Signal-2 relative to Signal-1) temporal FWHM, ns.
    pub s2_temporal_fwhm: f64,
    /// Signal-1 arrival-time spread, ns.
    pub s1_temporal_fwhm: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            eta_f: eta_from_tan2(1.5),
            phi_f: 0.0,
            two_photon_detuning: -20.0,
            p_white: 0.0,
            pair_prob: 0.007,
            s2_spectral_fwhm: 150.0,
            s2_temporal_fwhm: 7.0,
            s1_temporal_fwhm: 50.0,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.eta_f,
            self.phi_f,
            self.two_photon_detuning,
            self.p_white,
            self.pair_prob,
            self.s2_spectral_fwhm,
            self.s2_temporal_fwhm,
            self.s1_temporal_fwhm,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("source parameters must be finite"));
        }
        if !(self.eta_f > 0.0 && self.eta_f < FRAC_PI_2) {
            return Err(Error::validation(alloc::format!(
                "eta_f = {} must lie in (0, pi/2)",
                self.eta_f
            )));
        }
        if !(0.0..=1.0).contains(&self.p_white) {
            return Err(Error::validation(alloc::format!(
                "p_white = {} must lie in [0, 1]",
                self.p_white
            )));
        }
        if !(self.pair_prob > 0.0 && self.pair_prob < 0.5) {
            return Err(Error::validation(alloc::format!(
                "pair_prob = {} must lie in (0, 0.5)",
                self.pair_prob
            )));
        }
        if !(self.s2_spectral_fwhm > 0.0
            && self.s2_temporal_fwhm > 0.0
            && self.s1_temporal_fwhm > 0.0)
        {
            return Err(Error::validation("wavepacket widths must be positive"));
        }
        Ok(())
    }

    pub fn tan2_eta(&self) -> f64 {
        let t = self.eta_f.tan();
        t * t
    }
}

/// Fixed atomic-level constants of the source ensemble. Descriptive only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelMetadata {
    /// MHz
    pub single_photon_detuning: f64,
    /// ns
    pub pump1_fwhm: f64,
    pub levels: [(&'static str, &'static str); 5],
    pub transitions: [(&'static str, &'static str); 4],
    /// mW: pump 1, pump 2, coupling
    pub powers_mw: [(&'static str, f64); 3],
}

pub const LEVELS: LevelMetadata = LevelMetadata {
    single_photon_detuning: 130.0,
    pump1_fwhm: 20.0,
    levels: [
        ("|1>", "5S1/2 F=2"),
        ("|2>", "5S1/2 F=3"),
        ("|3>", "5P3/2 F=3"),
        ("|4>", "4D3/2 F=2"),
        ("|5>", "5P1/2 F=3"),
    ],
    transitions: [
        ("pump 1 (780 nm)", "|1> -> |3>"),
        ("pump 2 (1530 nm)", "|3> -> |4>"),
        ("signal 1 (1475 nm)", "|4> -> |5>"),
        ("signal 2 (795 nm)", "|5> -> |1>"),
    ],
    powers_mw: [("pump 1", 0.1), ("pump 2", 8.0), ("coupling", 20.0)],
};

/// Mixing angle whose squared tangent is `tan2`.
pub fn eta_from_tan2(tan2: f64) -> f64 {
    tan2.sqrt().atan()
}

/// Piecewise-linear interpolation of `tan^2 eta_f` through `(detuning_mhz, tan2)`
/// anchors. No extrapolation.
pub fn tan2_eta_from_detuning(detuning: f64, anchors: &[(f64, f64)]) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::validation("tan^2 eta anchor table is empty"));
    }
    for w in anchors.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::validation(
                "anchor detunings must be strictly increasing",
            ));
        }
    }
    if anchors
        .iter()
        .any(|&(d, v)| !d.is_finite() || !(v > 0.0) || !v.is_finite())
    {
        return Err(Error::validation(
            "anchor values must be finite and tan^2 eta > 0",
        ));
    }
    let (lo, hi) = (anchors[0].0, anchors[anchors.len() - 1].0);
    if !(detuning >= lo && detuning <= hi) {
        return Err(Error::OutOfRange {
            value: detuning,
            min: lo,
            max: hi,
        });
    }
    if let Some(&(_, v)) = anchors.iter().find(|&&(d, _)| d == detuning) {
        return Ok(v);
    }
    let k = anchors.partition_point(|&(d, _)| d < detuning);
    let (d0, v0) = anchors[k - 1];
    let (d1, v1) = anchors[k];
    Ok(v0 + (v1 - v0) * (detuning - d0) / (d1 - d0))
}

/// `(1 - p_white)|psi1><psi1| + p_white I/4` with
/// `psi1 = cos(eta)|HV> + e^{i phi} sin(eta)|VH>`.
pub fn two_photon_state(params: &SourceParams) -> Result<TwoQubitState> {
    params.validate()?;
    let (s, c) = params.eta_f.sin_cos();
    let psi = Vector4::new(
        C64::new(0.0, 0.0),
        C64::new(c, 0.0),
        C64::from_polar(s, params.phi_f),
        C64::new(0.0, 0.0),
    );
    let pure = psi * psi.adjoint();
    let p = params.p_white;
    let mut rho: Mat4 = pure.scale(1.0 - p) + Mat4::identity().scale(p / 4.0);
    // Keep the HH/VV populations at exactly p/4.
    rho[(0, 0)] = C64::new(p / 4.0, 0.0);
    rho[(3, 3)] = C64::new(p / 4.0, 0.0);
    Ok(TwoQubitState::from_exact(rho))
}

/// Gaussian spectral density sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub detuning_mhz: Vec<f64>,
    pub density: Vec<f64>,
}

impl SpectralDensity {
    /// Trapezoid-rule integral of `density * f(detuning)`.
    pub fn integrate_with(&self, f: impl Fn(usize, f64) -> f64) -> f64 {
        trapezoid(&self.detuning_mhz, |i| {
            self.density[i] * f(i, self.detuning_mhz[i])
        })
    }
}

pub(crate) fn trapezoid(x: &[f64], y: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y(i) + y(i - 1));
    }
    acc
}

/// Evenly spaced grid on `[-half_span, half_span]`.
pub fn symmetric_grid(half_span: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| -half_span + 2.0 * half_span * i as f64 / (n - 1) as f64)
        .collect()
}

/// Gaussian spectrum of the given FWHM centred on zero detuning, normalized
/// to unit trapezoid integral on `grid`.
pub fn wavepacket_spectrum(fwhm: f64, grid: &[f64]) -> Result<SpectralDensity> {
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::validation("spectral FWHM must be positive"));
    }
    if grid.len() < 200 {
        return Err(Error::validation(alloc::format!(
            "frequency grid has {} points, need at least 200",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation(
            "frequency grid must be strictly increasing",
        ));
    }
    let span = grid[grid.len() - 1] - grid[0];
    if span < 4.0 * fwhm {
        return Err(Error::validation(alloc::format!(
            "frequency grid spans {span} MHz, need at least 4 x FWHM = {}",
            4.0 * fwhm
        )));
    }
    let sigma = fwhm_to_sigma(fwhm);
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let raw: Vec<f64> = grid
        .iter()
        .map(|&d| norm * (-0.5 * (d / sigma).powi(2)).exp())
        .collect();
    let total = trapezoid(grid, |i| raw[i]);
    Ok(SpectralDensity {
        detuning_mhz: grid.to_vec(),
        density: raw.into_iter().map(|v| v / total).collect(),
    })
}
