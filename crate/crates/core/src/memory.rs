//! EIT storage of the Signal-2 qubit.
//!
//! Frequencies are ordinary (not angular) MHz, times are ns.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::qstate::{kron, partial_trace_signal2, Mat2, TwoQubitState};
use crate::source::SpectralDensity;

/// Rb D1 excited-state half-linewidth, `Gamma / 2` with `Gamma / 2pi = 5.75 MHz`.
pub const RB_D1_HALF_LINEWIDTH_MHZ: f64 = 2.875;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct EitParams {
    pub optical_depth: f64,
    /// Coupling Rabi frequency, MHz.
    pub rabi_coupling: f64,
    /// Excited-state half-linewidth, MHz.
    pub gamma_e: f64,
    /// Ground-state decoherence rate, MHz.
    pub gamma_g: f64,
    /// Probe detunings at which spectra are reported, MHz.
    pub probe_detuning_grid: Vec<f64>,
}

impl Default for EitParams {
    fn default() -> Self {
        EitParams {
            optical_depth: 50.0,
            rabi_coupling: 30.0,
            gamma_e: RB_D1_HALF_LINEWIDTH_MHZ,
            gamma_g: 0.01,
            probe_detuning_grid: crate::source::symmetric_grid(60.0, 1201),
        }
    }
}

impl EitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.optical_depth > 0.0 && self.optical_depth.is_finite()) {
            return Err(Error::validation("optical depth must be positive"));
        }
        if !(self.rabi_coupling > 0.0 && self.rabi_coupling.is_finite()) {
            return Err(Error::validation(
                "coupling Rabi frequency must be positive",
            ));
        }
        if !(self.gamma_e > 0.0 && self.gamma_e.is_finite()) {
            return Err(Error::validation("gamma_e must be positive"));
        }
        if !(self.gamma_g >= 0.0 && self.gamma_g.is_finite()) {
            return Err(Error::validation("gamma_g must be non-negative"));
        }
        if self.probe_detuning_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "probe detuning grid must be strictly increasing",
            ));
        }
        Ok(())
    }

    /// Normalized susceptibility `i ge (gg - i d) / ((ge - i d)(gg - i d) + Wc^2/4)`.
    pub fn susceptibility(&self, delta: f64) -> Complex64 {
        let i = Complex64::i();
        let g = Complex64::new(self.gamma_g, -delta);
        let e = Complex64::new(self.gamma_e, -delta);
        let coupling = 0.25 * self.rabi_coupling * self.rabi_coupling;
        if coupling == 0.0 {
            // Two-level limit with the (gg - i d) factor cancelled.
            return i * self.gamma_e / e;
        }
        i * self.gamma_e * g / (e * g + coupling)
    }

    /// Probe intensity transmission with the coupling field on.
    pub fn transmission_at(&self, delta: f64) -> f64 {
        (-self.optical_depth * self.susceptibility(delta).im)
            .exp()
            .clamp(0.0, 1.0)
    }

    /// Transmission with the coupling field off (two-level Lorentzian).
    pub fn background_transmission_at(&self, delta: f64) -> f64 {
        let ge2 = self.gamma_e * self.gamma_e;
        (-self.optical_depth * ge2 / (ge2 + delta * delta)).exp()
    }

    /// Acceptance `T [T - T_bg]_+ / (1 - T_bg)` of the transparency window.
    pub fn window_acceptance(&self, delta: f64) -> f64 {
        let t = self.transmission_at(delta);
        let bg = self.background_transmission_at(delta);
        let open = 1.0 - bg;
        if open < 1e-12 {
            return 0.0;
        }
        (t * (t - bg).max(0.0) / open).clamp(0.0, 1.0)
    }
}

/// `(detuning, transmission)` on the configured probe grid.
pub fn eit_transmission(params: &EitParams) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    Ok(params
        .probe_detuning_grid
        .iter()
        .map(|&d| (d, params.transmission_at(d)))
        .collect())
}

/// Coupling-off spectrum on the same grid.
pub fn background_transmission(params: &EitParams) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    Ok(params
        .probe_detuning_grid
        .iter()
        .map(|&d| (d, params.background_transmission_at(d)))
        .collect())
}

/// Full width at half maximum of the central transparency peak, MHz.
///
/// Steps outward from line centre until the transmission falls below half
/// of `T(0)`, then bisects the crossing.
pub fn transparency_fwhm(params: &EitParams) -> Result<f64> {
    params.validate()?;
    let t0 = params.transmission_at(0.0);
    let half = 0.5 * t0;
    let step = 0.01 * params.gamma_e.min(params.rabi_coupling).max(1e-3);
    let limit = 100.0 * (params.gamma_e + params.rabi_coupling);
    if !(t0 > 0.0) || params.transmission_at(step) > t0 {
        return Err(Error::validation("no transparency peak at line centre"));
    }
    let mut lo = 0.0;
    let mut hi = step;
    while params.transmission_at(hi) > half {
        lo = hi;
        hi += step;
        if hi > limit {
            return Err(Error::validation(
                "transparency peak never falls to half maximum",
            ));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if params.transmission_at(mid) > half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + hi)
}

/// Finds the coupling Rabi frequency giving a transparency window of
/// `target_fwhm` MHz.
pub fn calibrate_rabi_coupling(params: &EitParams, target_fwhm: f64) -> Result<f64> {
    params.validate()?;
    if !(target_fwhm > 0.0 && target_fwhm.is_finite()) {
        return Err(Error::calibration(
            "rabi_coupling",
            "window width must be positive",
        ));
    }
    let width = |omega: f64| {
        let p = EitParams {
            rabi_coupling: omega,
            ..params.clone()
        };
        transparency_fwhm(&p).unwrap_or(0.0)
    };
    let (mut lo, mut hi) = (1e-3, 1e4);
    if width(hi) < target_fwhm {
        return Err(Error::calibration(
            "rabi_coupling",
            alloc::format!("window of {target_fwhm} MHz not reachable below {hi} MHz"),
        ));
    }
    if width(lo) > target_fwhm {
        return Err(Error::calibration(
            "rabi_coupling",
            alloc::format!("window of {target_fwhm} MHz narrower than the minimum"),
        ));
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if width(mid) < target_fwhm {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum DecayModel {
    Gaussian,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct MemoryDecayParams {
    pub model: DecayModel,
    /// ns
    pub tau_mem: f64,
    pub eta_peak: f64,
}

impl Default for MemoryDecayParams {
    fn default() -> Self {
        MemoryDecayParams {
            model: DecayModel::Gaussian,
            tau_mem: 300.0,
            eta_peak: 0.7,
        }
    }
}

impl MemoryDecayParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_mem > 0.0 && self.tau_mem.is_finite()) {
            return Err(Error::validation("tau_mem must be positive"));
        }
        if !(self.eta_peak > 0.0 && self.eta_peak <= 1.0) {
            return Err(Error::validation(alloc::format!(
                "eta_peak = {} must lie in (0, 1]",
                self.eta_peak
            )));
        }
        Ok(())
    }

    pub fn decay(&self, t_storage: f64) -> f64 {
        let x = t_storage / self.tau_mem;
        match self.model {
            DecayModel::Gaussian => (-x * x).exp(),
            DecayModel::Exponential => (-x).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct MemoryNoiseParams {
    /// Depolarizing probability on the retrieved Signal-2 qubit.
    pub p_depol: f64,
    /// Unpolarized background detections in arm 2 per gate.
    pub background_flux: f64,
}

impl MemoryNoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_depol) {
            return Err(Error::validation(alloc::format!(
                "p_depol = {} must lie in [0, 1]",
                self.p_depol
            )));
        }
        if !(self.background_flux >= 0.0 && self.background_flux.is_finite()) {
            return Err(Error::validation("background_flux must be non-negative"));
        }
        Ok(())
    }
}

/// `∫ s(d) w(d) dd`, the fraction of the photon spectrum accepted by the window.
pub fn spectral_overlap(spectrum: &SpectralDensity, eit: &EitParams) -> Result<f64> {
    eit.validate()?;
    Ok(spectrum
        .integrate_with(|_, d| eit.window_acceptance(d))
        .clamp(0.0, 1.0))
}

/// End-to-end write/read efficiency after `t_storage` ns.
pub fn storage_efficiency(
    spectrum: &SpectralDensity,
    eit: &EitParams,
    decay: &MemoryDecayParams,
    t_storage: f64,
) -> Result<f64> {
    decay.validate()?;
    if !(t_storage >= 0.0 && t_storage.is_finite()) {
        return Err(Error::validation("storage time must be non-negative"));
    }
    let overlap = spectral_overlap(spectrum, eit)?;
    Ok((decay.eta_peak * overlap * decay.decay(t_storage)).clamp(0.0, 1.0))
}

/// Memory time constant such that `eta_peak * overlap * d(t_storage) = target`.
pub fn calibrate_tau_mem(
    overlap: f64,
    eta_peak: f64,
    model: DecayModel,
    t_storage: f64,
    target: f64,
) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::calibration(
            "tau_mem",
            alloc::format!("target efficiency {target} outside (0, 1]"),
        ));
    }
    let ceiling = eta_peak * overlap;
    if !(t_storage > 0.0) {
        return Err(Error::calibration(
            "tau_mem",
            "storage time must be positive",
        ));
    }
    if target >= ceiling {
        return Err(Error::calibration(
            "tau_mem",
            alloc::format!("target efficiency {target} not below the overlap ceiling {ceiling:.4}"),
        ));
    }
    let ln = (ceiling / target).ln();
    Ok(match model {
        DecayModel::Gaussian => t_storage / ln.sqrt(),
        DecayModel::Exponential => t_storage / ln,
    })
}

/// Post-selected retrieval channel on the Signal-2 slot:
/// `(1 - p) rho + p Tr_2(rho) ⊗ I/2`, retrieved with probability `eta`.
pub fn apply_memory(
    rho: &TwoQubitState,
    eta: f64,
    noise: &MemoryNoiseParams,
) -> Result<(TwoQubitState, f64)> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::validation(alloc::format!(
            "memory efficiency {eta} outside [0, 1]"
        )));
    }
    noise.validate()?;
    let p = noise.p_depol;
    let reduced = partial_trace_signal2(rho.matrix());
    let mixed = kron(&reduced, &Mat2::identity().scale(0.5));
    let out = rho.matrix().scale(1.0 - p) + mixed.scale(p);
    Ok((TwoQubitState::from_trusted(out), eta))
}

/// Closed-form cross-correlation after storage with efficiency `eta` against
/// a background fraction.
pub fn g2_after_storage(g2_initial: f64, eta: f64, background: f64) -> Result<f64> {
    if !(g2_initial > 1.0) {
        return Err(Error::validation("initial g2 must exceed 1"));
    }
    if !(background >= 0.0) {
        return Err(Error::validation("background must be non-negative"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::validation("efficiency outside [0, 1]"));
    }
    let denom = eta + background * (1.0 - eta);
    if denom <= 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 + (g2_initial - 1.0) * eta / denom)
}

/// `g2(t)` over a set of storage times.
pub fn g2_vs_storage_time(
    g2_initial: f64,
    eta_curve: impl Fn(f64) -> f64,
    background: f64,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| Ok((t, g2_after_storage(g2_initial, eta_curve(t), background)?)))
        .collect()
}

/// Background level that maps `g2_initial` to `g2_target` at efficiency `eta`.
pub fn background_for_g2(g2_initial: f64, g2_target: f64, eta: f64) -> Result<f64> {
    if !(g2_initial > g2_target && g2_target > 1.0) {
        return Err(Error::calibration(
            "background",
            "target g2 must lie between 1 and the initial value",
        ));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::calibration(
            "background",
            "efficiency must lie in (0, 1)",
        ));
    }
    let ratio = (g2_initial - 1.0) / (g2_target - 1.0);
    Ok(eta * (ratio - 1.0) / (1.0 - eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{fidelity, tensor_product, Mat4, PolarizationKet, C64};
    use crate::source::{symmetric_grid, wavepacket_spectrum};
    use proptest::prelude::*;

    fn calibrated_eit() -> EitParams {
        let mut p = EitParams::default();
        p.rabi_coupling = calibrate_rabi_coupling(&p, 20.0).unwrap();
        p
    }

    fn spectrum(fwhm: f64) -> SpectralDensity {
        let half = (3.0 * fwhm).max(200.0);
        wavepacket_spectrum(fwhm, &symmetric_grid(half, 6001)).unwrap()
    }

    #[test]
    fn two_level_limit() {
        let p = EitParams {
            rabi_coupling: 0.0,
            gamma_g: 0.0,
            ..EitParams::default()
        };
        let t = p.transmission_at(0.0);
        assert!((t / (-50.0f64).exp() - 1.0).abs() < 1e-9, "{t:e}");
    }

    #[test]
    fn perfect_transparency_without_ground_decoherence() {
        for omega in [0.5, 5.0, 40.0] {
            let p = EitParams {
                rabi_coupling: omega,
                gamma_g: 0.0,
                ..EitParams::default()
            };
            assert!((p.transmission_at(0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn window_calibrates_to_twenty_mhz() {
        let p = calibrated_eit();
        let w = transparency_fwhm(&p).unwrap();
        assert!((w - 20.0).abs() < 0.01, "{w}");
        assert!((15.0..=25.0).contains(&w));
    }

    #[test]
    fn spectra_bounded_and_symmetric() {
        let p = calibrated_eit();
        let t = eit_transmission(&p).unwrap();
        let n = t.len();
        for (k, &(_, v)) in t.iter().enumerate() {
            assert!((0.0..=1.0).contains(&v));
            assert!((v - t[n - 1 - k].1).abs() < 1e-9);
        }
        assert!(background_transmission(&p)
            .unwrap()
            .iter()
            .all(|&(_, v)| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn narrow_line_is_fully_accepted() {
        let p = calibrated_eit();
        let decay = MemoryDecayParams {
            eta_peak: 1.0,
            ..MemoryDecayParams::default()
        };
        let line = wavepacket_spectrum(2.0, &symmetric_grid(10.0, 2001)).unwrap();
        let eta = storage_efficiency(&line, &p, &decay, 0.0).unwrap();
        assert!(eta > 0.98, "{eta}");
    }

    #[test]
    fn doubling_bandwidth_roughly_halves_efficiency() {
        let p = calibrated_eit();
        let decay = MemoryDecayParams::default();
        let e100 = storage_efficiency(&spectrum(100.0), &p, &decay, 0.0).unwrap();
        let e200 = storage_efficiency(&spectrum(200.0), &p, &decay, 0.0).unwrap();
        let ratio = e100 / e200;
        assert!((1.6..=2.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn hundred_ns_point_calibrates() {
        let p = calibrated_eit();
        let s = spectrum(150.0);
        let overlap = spectral_overlap(&s, &p).unwrap();
        let tau = calibrate_tau_mem(overlap, 0.7, DecayModel::Gaussian, 100.0, 0.06).unwrap();
        let decay = MemoryDecayParams {
            model: DecayModel::Gaussian,
            tau_mem: tau,
            eta_peak: 0.7,
        };
        let eta = storage_efficiency(&s, &p, &decay, 100.0).unwrap();
        assert!((eta - 0.06).abs() < 1e-9);
        assert!(matches!(
            calibrate_tau_mem(overlap, 0.7, DecayModel::Gaussian, 100.0, 1.5),
            Err(Error::Calibration {
                parameter: "tau_mem",
                ..
            })
        ));
    }

    #[test]
    fn memory_channel_examples() {
        let psi = TwoQubitState::psi_plus();
        let (out, r) = apply_memory(&psi, 0.3, &MemoryNoiseParams::default()).unwrap();
        assert_eq!(r, 0.3);
        assert!((out.matrix() - psi.matrix())
            .iter()
            .all(|z| z.norm() < 1e-15));

        let full = MemoryNoiseParams {
            p_depol: 1.0,
            background_flux: 0.0,
        };
        let (out, _) = apply_memory(&psi, 1.0, &full).unwrap();
        assert!((out.matrix() - TwoQubitState::maximally_mixed().matrix())
            .iter()
            .all(|z| z.norm() < 1e-15));

        let tenth = MemoryNoiseParams {
            p_depol: 0.1,
            background_flux: 0.0,
        };
        let (out, _) = apply_memory(&psi, 1.0, &tenth).unwrap();
        assert!((fidelity(&out, &psi) - 0.925).abs() < 1e-12);
        assert!(apply_memory(&psi, 1.1, &tenth).is_err());
    }

    #[test]
    fn retrieval_independent_of_polarization() {
        let noise = MemoryNoiseParams {
            p_depol: 0.2,
            background_flux: 0.0,
        };
        let probs: [f64; 4] = [
            PolarizationKet::h(),
            PolarizationKet::v(),
            PolarizationKet::d(),
            PolarizationKet::r(),
        ]
        .map(|k| {
            let rho = tensor_product(&PolarizationKet::h(), &k).unwrap();
            apply_memory(&rho, 0.06, &noise).unwrap().1
        });
        assert!(probs.iter().all(|&p| p == probs[0]));
    }

    #[test]
    fn g2_model_examples() {
        assert_eq!(g2_after_storage(150.0, 1.0, 0.0).unwrap(), 150.0);
        assert!((g2_after_storage(150.0, 1e-12, 0.5).unwrap() - 1.0).abs() < 1e-9);
        let b = background_for_g2(150.0, 14.0, 0.06).unwrap();
        let g = g2_after_storage(150.0, 0.06, b).unwrap();
        assert!((g - 14.0).abs() < 1e-9);
        let curve = g2_vs_storage_time(
            150.0,
            |t| 0.1 * (-(t / 300.0) * (t / 300.0)).exp(),
            b,
            &[0.0, 100.0, 200.0, 400.0],
        )
        .unwrap();
        assert!(curve.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(g2_after_storage(1.0, 0.5, 0.1).is_err());
    }

    fn state_from(v: &[f64]) -> TwoQubitState {
        let g = Mat4::from_fn(|i, j| C64::new(v[2 * (4 * i + j)], v[2 * (4 * i + j) + 1]));
        let m = g * g.adjoint();
        let tr = m.trace().re;
        TwoQubitState::from_matrix(m.unscale(tr)).unwrap()
    }

    proptest! {
        #[test]
        fn efficiency_monotone_in_time(t1 in 0.0f64..1000.0, dt in 0.0f64..1000.0, tau in 10.0f64..2000.0, exp in proptest::bool::ANY) {
            let p = EitParams { rabi_coupling: 35.0, ..EitParams::default() };
            let s = spectrum(150.0);
            let decay = MemoryDecayParams {
                model: if exp { DecayModel::Exponential } else { DecayModel::Gaussian },
                tau_mem: tau,
                eta_peak: 0.8,
            };
            let a = storage_efficiency(&s, &p, &decay, t1).unwrap();
            let b = storage_efficiency(&s, &p, &decay, t1 + dt).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a);
        }

        #[test]
        fn memory_preserves_state_invariants(v in proptest::collection::vec(-1.0f64..1.0, 32), p in 0.0f64..1.0) {
            let rho = state_from(&v);
            let (out, _) = apply_memory(&rho, 0.5, &MemoryNoiseParams { p_depol: p, background_flux: 0.0 }).unwrap();
            prop_assert!(TwoQubitState::from_matrix(*out.matrix()).is_ok());
        }

        #[test]
        fn memory_composition(v in proptest::collection::vec(-1.0f64..1.0, 32), p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
            let rho = state_from(&v);
            let n = |p| MemoryNoiseParams { p_depol: p, background_flux: 0.0 };
            let (mid, _) = apply_memory(&rho, 1.0, &n(p1)).unwrap();
            let (seq, _) = apply_memory(&mid, 1.0, &n(p2)).unwrap();
            let (once, _) = apply_memory(&rho, 1.0, &n(1.0 - (1.0 - p1) * (1.0 - p2))).unwrap();
            prop_assert!((seq.matrix() - once.matrix()).iter().all(|z| z.norm() < 1e-10));
        }

        #[test]
        fn memory_commutes_with_signal2_unitaries(v in proptest::collection::vec(-1.0f64..1.0, 32), p in 0.0f64..1.0,
                                                  a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let rho = state_from(&v);
            let u2 = Mat2::new(
                C64::from_polar(a.cos(), b), C64::from_polar(-a.sin(), c),
                C64::from_polar(a.sin(), -c), C64::from_polar(a.cos(), -b),
            );
            let u = kron(&Mat2::identity(), &u2);
            let rot = |r: &TwoQubitState| TwoQubitState::from_matrix(u * r.matrix() * u.adjoint()).unwrap();
            let noise = MemoryNoiseParams { p_depol: p, background_flux: 0.0 };
            let (x, _) = apply_memory(&rot(&rho), 1.0, &noise).unwrap();
            let (y, _) = apply_memory(&rho, 1.0, &noise).unwrap();
            prop_assert!((x.matrix() - rot(&y).matrix()).iter().all(|z| z.norm() < 1e-10));
        }
    }
}
