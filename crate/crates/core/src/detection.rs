//! Counting model: Born probabilities, loss budget, per-gate click
//! probabilities, Poisson sampling and time-resolved correlation histograms.
//!
//! Each pump pulse opens one detection gate. With pair probability `p` per
//! gate, arm efficiencies `eta1`, `eta2` and noise click probabilities
//! `n1`, `n2` per gate, the leading-order click probabilities are
//! `P1 = p eta1 m1 + n1`, `P2 = p eta2 m2 + n2` and the true coincidence
//! probability is `p eta1 eta2 J` (`m` marginal and `J` joint analyzer pass
//! probabilities). Uncorrelated clicks coincide with probability `P1 P2`
//! spread uniformly across the gate.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::qstate::{PolarizationKet, TwoQubitState};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct MeasurementSetting {
    pub label: String,
    /// Analysis state for Signal 1.
    pub arm1_projector: PolarizationKet,
    /// Analysis state for Signal 2.
    pub arm2_projector: PolarizationKet,
}

impl MeasurementSetting {
    pub fn new(
        label: impl Into<String>,
        arm1: PolarizationKet,
        arm2: PolarizationKet,
    ) -> Result<Self> {
        let s = MeasurementSetting {
            label: label.into(),
            arm1_projector: arm1,
            arm2_projector: arm2,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.arm1_projector.check_normalized()?;
        self.arm2_projector.check_normalized()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// counts/s
    pub dark_rate: f64,
    /// ns
    pub dead_time: f64,
    /// ns
    pub gate_width: f64,
    /// Unpolarized stray light reaching the detector, counts/s.
    #[cfg_attr(feature = "serde", serde(default))]
    pub stray_light_rate: f64,
}

impl DetectorParams {
    /// Free-running InGaAs detector on the telecom arm.
    pub fn telecom_default() -> Self {
        DetectorParams {
            efficiency: 0.10,
            dark_rate: 100.0,
            dead_time: 1000.0,
            gate_width: 18.0,
            stray_light_rate: 0.0,
        }
    }

    /// Silicon avalanche diode on the 795 nm arm.
    pub fn visible_default() -> Self {
        DetectorParams {
            efficiency: 0.50,
            dark_rate: 50.0,
            dead_time: 50.0,
            gate_width: 18.0,
            stray_light_rate: 7.5e4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::validation("detector efficiency must lie in [0, 1]"));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::validation("dark rate must be non-negative"));
        }
        if !(self.stray_light_rate >= 0.0 && self.stray_light_rate.is_finite()) {
            return Err(Error::validation("stray light rate must be non-negative"));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(Error::validation("dead time must be non-negative"));
        }
        if !(self.gate_width > 0.0 && self.gate_width.is_finite()) {
            return Err(Error::validation("gate width must be positive"));
        }
        Ok(())
    }

    /// Rate reduction `1 / (1 + r tau_dead)`.
    pub fn dead_time_factor(&self, rate: f64) -> f64 {
        1.0 / (1.0 + rate * self.dead_time * 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct LossBudget {
    pub s2_path: f64,
    pub s1_fiber_coupling: f64,
    pub s1_detector_coupling: f64,
    pub s1_filters: f64,
    pub s2_filters: f64,
}

impl Default for LossBudget {
    fn default() -> Self {
        LossBudget {
            s2_path: 0.75,
            s1_fiber_coupling: 0.82,
            s1_detector_coupling: 0.80,
            // dichroic 99 % x fibre gratings 95 %
            s1_filters: 0.99 * 0.95,
            // three Fabry-Perot cavities
            s2_filters: 0.40,
        }
    }
}

impl LossBudget {
    pub const LOSSLESS: LossBudget = LossBudget {
        s2_path: 1.0,
        s1_fiber_coupling: 1.0,
        s1_detector_coupling: 1.0,
        s1_filters: 1.0,
        s2_filters: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.s2_path,
            self.s1_fiber_coupling,
            self.s1_detector_coupling,
            self.s1_filters,
            self.s2_filters,
        ];
        if all.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::validation("loss budget entries must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Signal-1 transmission up to the detector.
    pub fn s1_total(&self) -> f64 {
        self.s1_fiber_coupling * self.s1_detector_coupling * self.s1_filters
    }

    /// Signal-2 transmission up to the detector.
    pub fn s2_total(&self) -> f64 {
        self.s2_path * self.s2_filters
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct TimingConfig {
    /// Hz
    pub rep_rate: f64,
    /// ms
    pub duty_window: f64,
    pub cycles_per_duty: u32,
    /// ns
    pub cycle_period: f64,
    /// ns
    pub pump1_fwhm: f64,
    /// ns
    pub fiber_delay: f64,
    /// ns
    pub storage_time: f64,
    /// Coincidence window used for polarization-analysis counts, ns.
    pub coincidence_window: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            rep_rate: 100.0,
            duty_window: 1.3,
            cycles_per_duty: 2600,
            cycle_period: 500.0,
            pump1_fwhm: 20.0,
            fiber_delay: 1000.0,
            storage_time: 100.0,
            coincidence_window: 4.0,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate > 0.0
            && self.cycle_period > 0.0
            && self.duty_window > 0.0
            && self.cycles_per_duty > 0)
        {
            return Err(Error::validation(
                "timing rates and periods must be positive",
            ));
        }
        if self.cycles_per_duty as f64 * self.cycle_period > self.duty_window * 1e6 + 1e-9 {
            return Err(Error::validation(alloc::format!(
                "{} cycles of {} ns do not fit in a {} ms duty window",
                self.cycles_per_duty,
                self.cycle_period,
                self.duty_window
            )));
        }
        if !(self.storage_time >= 0.0) {
            return Err(Error::validation("storage time must be non-negative"));
        }
        if !(self.storage_time < self.fiber_delay) {
            return Err(Error::validation(alloc::format!(
                "storage time {} ns must be shorter than the Signal-1 fibre delay {} ns",
                self.storage_time,
                self.fiber_delay
            )));
        }
        if !(self.coincidence_window > 0.0) {
            return Err(Error::validation("coincidence window must be positive"));
        }
        Ok(())
    }

    /// Pump pulses (and detection gates) per second.
    pub fn pulse_rate(&self) -> f64 {
        self.rep_rate * self.cycles_per_duty as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct CountRecord {
    pub setting_label: String,
    pub singles_1: u64,
    pub singles_2: u64,
    pub coincidences: u64,
    pub triples: u64,
    pub acquisition_s: f64,
    pub seed: u64,
}

impl CountRecord {
    pub fn new(
        setting_label: impl Into<String>,
        singles_1: u64,
        singles_2: u64,
        coincidences: u64,
        triples: u64,
        acquisition_s: f64,
        seed: u64,
    ) -> Result<Self> {
        let r = CountRecord {
            setting_label: setting_label.into(),
            singles_1,
            singles_2,
            coincidences,
            triples,
            acquisition_s,
            seed,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coincidences > self.singles_1.min(self.singles_2) {
            return Err(Error::validation(alloc::format!(
                "record '{}': coincidences {} exceed singles ({}, {})",
                self.setting_label,
                self.coincidences,
                self.singles_1,
                self.singles_2
            )));
        }
        if self.triples > self.coincidences {
            return Err(Error::validation(alloc::format!(
                "record '{}': triples {} exceed coincidences {}",
                self.setting_label,
                self.triples,
                self.coincidences
            )));
        }
        let t = self.acquisition_s;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::validation(alloc::format!(
                "record '{}': acquisition time must be positive",
                self.setting_label
            )));
        }
        Ok(())
    }

    /// Same record with every count replaced.
    pub fn with_counts(
        &self,
        singles_1: u64,
        singles_2: u64,
        coincidences: u64,
        triples: u64,
    ) -> Self {
        let c = coincidences.min(singles_1).min(singles_2);
        CountRecord {
            singles_1,
            singles_2,
            coincidences: c,
            triples: triples.min(c),
            ..self.clone()
        }
    }
}

/// Born probability `<a b| rho |a b>`.
pub fn projection_probability(rho: &TwoQubitState, setting: &MeasurementSetting) -> Result<f64> {
    setting.validate()?;
    Ok(rho
        .product_probability(&setting.arm1_projector, &setting.arm2_projector)
        .clamp(0.0, 1.0))
}

/// Analyzer pass probabilities for one setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettingProbabilities {
    pub joint: f64,
    pub arm1: f64,
    pub arm2: f64,
    /// Whether polarizers sit in front of the detectors; unpolarized noise
    /// then passes with probability one half.
    pub analyzed: bool,
}

impl SettingProbabilities {
    pub fn for_setting(rho: &TwoQubitState, setting: &MeasurementSetting) -> Result<Self> {
        let joint = projection_probability(rho, setting)?;
        let a = setting.arm1_projector.vector();
        let b = setting.arm2_projector.vector();
        let arm1 = (a.adjoint() * rho.signal1_marginal() * a)[(0, 0)]
            .re
            .clamp(0.0, 1.0);
        let arm2 = (b.adjoint() * rho.signal2_marginal() * b)[(0, 0)]
            .re
            .clamp(0.0, 1.0);
        Ok(SettingProbabilities {
            joint,
            arm1,
            arm2,
            analyzed: true,
        })
    }

    /// No analyzers: every pair photon reaches the detector.
    pub fn unpolarized() -> Self {
        SettingProbabilities {
            joint: 1.0,
            arm1: 1.0,
            arm2: 1.0,
            analyzed: false,
        }
    }

    /// Only the joint probability is known; singles see every photon.
    pub fn joint_only(joint: f64) -> Self {
        SettingProbabilities {
            joint,
            arm1: 1.0,
            arm2: 1.0,
            analyzed: false,
        }
    }
}

/// Which time window coincidences are counted in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// The whole detection gate.
    Gate,
    /// The narrow analysis window centred on the correlation peak.
    Analysis,
}

/// Expected counts per second.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rates {
    pub r1: f64,
    pub r2: f64,
    pub r12: f64,
    pub r12_true: f64,
    pub r12_accidental: f64,
    pub r123: f64,
}

/// Click probabilities per gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateProbabilities {
    pub p1: f64,
    pub p2: f64,
    pub true12: f64,
    pub accidental12: f64,
}

/// Per-gate probabilities for the heralded autocorrelation measurement,
/// with arm 2 split 50/50 onto detectors 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldedProbabilities {
    pub p1: f64,
    pub p12: f64,
    pub p13: f64,
    pub p123: f64,
}

impl HeraldedProbabilities {
    pub fn alpha(&self) -> Result<f64> {
        heralded_alpha(self.p1, self.p12, self.p13, self.p123)
    }
}

/// Everything needed to turn analyzer probabilities into click statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingModel {
    pub pair_prob: f64,
    pub losses: LossBudget,
    pub detectors: [DetectorParams; 2],
    pub timing: TimingConfig,
    /// Retrieval efficiency (1 when the memory is bypassed).
    pub memory_eta: f64,
    /// Pass probability of the balancing plate.
    pub filter_success: f64,
    /// Unpolarized memory background clicks in arm 2 per gate.
    pub memory_background: f64,
    /// rms width of the Signal-1/Signal-2 arrival-time difference, ns.
    pub pair_sigma_ns: f64,
}

impl CountingModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pair_prob) {
            return Err(Error::validation("pair probability must lie in [0, 1]"));
        }
        self.losses.validate()?;
        for d in &self.detectors {
            d.validate()?;
        }
        self.timing.validate()?;
        if !(0.0..=1.0).contains(&self.memory_eta) || !(0.0..=1.0).contains(&self.filter_success) {
            return Err(Error::validation("efficiencies must lie in [0, 1]"));
        }
        if !(self.memory_background >= 0.0) {
            return Err(Error::validation("memory background must be non-negative"));
        }
        if !(self.pair_sigma_ns > 0.0) {
            return Err(Error::validation("pair timing width must be positive"));
        }
        Ok(())
    }

    /// Detection gate, ns; set by the 795 nm detector.
    pub fn gate_ns(&self) -> f64 {
        self.detectors[1].gate_width
    }

    pub fn eta1(&self) -> f64 {
        self.losses.s1_total() * self.detectors[0].efficiency
    }

    pub fn eta2(&self) -> f64 {
        self.losses.s2_total()
            * self.detectors[1].efficiency
            * self.filter_success
            * self.memory_eta
    }

    /// Noise click probability per gate in arm 1.
    pub fn noise1(&self, analyzed: bool) -> f64 {
        let d = &self.detectors[0];
        let pass = if analyzed { 0.5 } else { 1.0 };
        (d.dark_rate + pass * d.stray_light_rate) * self.gate_ns() * 1e-9
    }

    /// Noise click probability per gate in arm 2.
    pub fn noise2(&self, analyzed: bool) -> f64 {
        let d = &self.detectors[1];
        let pass = if analyzed { 0.5 } else { 1.0 };
        d.dark_rate * self.gate_ns() * 1e-9
            + pass * (d.stray_light_rate * self.gate_ns() * 1e-9 + self.memory_background)
    }

    /// Fraction of true coincidences inside the analysis window, relative to
    /// the whole gate.
    pub fn window_capture(&self, window: Window) -> f64 {
        match window {
            Window::Gate => 1.0,
            Window::Analysis => {
                let w = self.timing.coincidence_window.min(self.gate_ns());
                let k = core::f64::consts::SQRT_2 * 2.0 * self.pair_sigma_ns;
                libm::erf(w / k) / libm::erf(self.gate_ns() / k)
            }
        }
    }

    fn window_fraction(&self, window: Window) -> f64 {
        match window {
            Window::Gate => 1.0,
            Window::Analysis => self.timing.coincidence_window.min(self.gate_ns()) / self.gate_ns(),
        }
    }

    pub fn per_gate(&self, probs: &SettingProbabilities, window: Window) -> GateProbabilities {
        let p = self.pair_prob;
        let p1 = p * self.eta1() * probs.arm1 + self.noise1(probs.analyzed);
        let p2 = p * self.eta2() * probs.arm2 + self.noise2(probs.analyzed);
        GateProbabilities {
            p1: p1.min(1.0),
            p2: p2.min(1.0),
            true12: p * self.eta1() * self.eta2() * probs.joint * self.window_capture(window),
            accidental12: p1 * p2 * self.window_fraction(window),
        }
    }

    pub fn rates(&self, probs: &SettingProbabilities, window: Window) -> Rates {
        let g = self.per_gate(probs, window);
        let pr = self.timing.pulse_rate();
        let (raw1, raw2) = (pr * g.p1, pr * g.p2);
        let f1 = self.detectors[0].dead_time_factor(raw1);
        let f2 = self.detectors[1].dead_time_factor(raw2);
        let t = pr * g.true12 * f1 * f2;
        let a = pr * g.accidental12 * f1 * f2;
        Rates {
            r1: raw1 * f1,
            r2: raw2 * f2,
            r12: t + a,
            r12_true: t,
            r12_accidental: a,
            r123: 0.0,
        }
    }

    /// Heralded autocorrelation click probabilities (gate window, no analyzers).
    pub fn heralded(&self) -> HeraldedProbabilities {
        let p = self.pair_prob;
        let (e1, e2) = (self.eta1(), self.eta2());
        let n1 = self.noise1(false);
        let n2 = self.noise2(false);
        let p1 = p * e1 + n1;
        let p2 = p * e2 + n2;
        let t = p * e1 * e2;
        let p12 = 0.5 * t + 0.5 * p1 * p2;
        let p123 = p * p * e1 * e2 * e2
            + 0.5 * t * n2
            + 0.25 * p * e1 * n2 * n2
            + n1 * (0.5 * p * e2 * n2 + 0.25 * n2 * n2);
        HeraldedProbabilities {
            p1,
            p12,
            p13: p12,
            p123,
        }
    }

    /// Event model for the cross-correlation histogram over `acquisition_s`.
    pub fn g2_events(&self, acquisition_s: f64, delay_ns: f64) -> G2EventParams {
        let g = self.per_gate(&SettingProbabilities::unpolarized(), Window::Gate);
        G2EventParams {
            gates: self.timing.pulse_rate() * acquisition_s,
            true_prob: g.true12,
            p1: g.p1,
            p2: g.p2,
            accidental_prob: g.accidental12,
            sigma_ns: self.pair_sigma_ns,
            delay_ns,
            gate_ns: self.gate_ns(),
        }
    }
}

/// Gate-integrated rates for one joint analyzer probability.
pub fn expected_rates(
    pair_prob: f64,
    prob: f64,
    losses: &LossBudget,
    detectors: &[DetectorParams; 2],
    timing: &TimingConfig,
    memory_eta: f64,
) -> Result<Rates> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::validation("probability must lie in [0, 1]"));
    }
    let model = CountingModel {
        pair_prob,
        losses: *losses,
        detectors: *detectors,
        timing: *timing,
        memory_eta,
        filter_success: 1.0,
        memory_background: 0.0,
        pair_sigma_ns: 1.0,
    };
    model.validate()?;
    Ok(model.rates(&SettingProbabilities::joint_only(prob), Window::Gate))
}

/// `alpha = P1 P123 / (P12 P13)`.
pub fn heralded_alpha(p1: f64, p12: f64, p13: f64, p123: f64) -> Result<f64> {
    if !(p12 > 0.0 && p13 > 0.0) {
        return Err(Error::estimation(alloc::format!(
            "heralded autocorrelation undefined: P12 = {p12}, P13 = {p13}"
        )));
    }
    Ok((p1 * p123 / (p12 * p13)).max(0.0))
}

/// Below this the heralded field is single-photon-like.
pub const ALPHA_SINGLE_PHOTON_THRESHOLD: f64 = 0.5;

/// `alpha` from the two records of a split-arm measurement; both records
/// share the herald singles and the triple count.
pub fn alpha_from_records(arm2: &CountRecord, arm3: &CountRecord) -> Result<f64> {
    heralded_alpha(
        arm2.singles_1 as f64,
        arm2.coincidences as f64,
        arm3.coincidences as f64,
        arm2.triples as f64,
    )
}

pub(crate) fn poisson(rng: &mut Rng, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => {
            let x: f64 = d.sample(rng);
            x as u64
        }
        Err(_) => mean.round() as u64,
    }
}

/// Independent Poisson draws for each count, then clamped so that
/// `triples <= coincidences <= min(singles)`.
pub fn sample_counts(
    label: &str,
    rates: &Rates,
    acquisition_s: f64,
    seed: u64,
) -> Result<CountRecord> {
    if !(acquisition_s > 0.0 && acquisition_s.is_finite()) {
        return Err(Error::validation("acquisition time must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let s1 = poisson(&mut rng, rates.r1 * acquisition_s);
    let s2 = poisson(&mut rng, rates.r2 * acquisition_s);
    let c = poisson(&mut rng, rates.r12 * acquisition_s).min(s1).min(s2);
    let t = poisson(&mut rng, rates.r123 * acquisition_s).min(c);
    CountRecord::new(label, s1, s2, c, t, acquisition_s, seed)
}

/// Simulated split-arm measurement: records for detector pairs (1, 2) and
/// (1, 3), sharing herald singles and triples.
pub fn sample_heralded(
    model: &CountingModel,
    acquisition_s: f64,
    seed: u64,
) -> Result<(CountRecord, CountRecord)> {
    model.validate()?;
    if !(acquisition_s > 0.0) {
        return Err(Error::validation("acquisition time must be positive"));
    }
    let h = model.heralded();
    let gates = model.timing.pulse_rate() * acquisition_s;
    let p2_half = 0.5
        * model
            .per_gate(&SettingProbabilities::unpolarized(), Window::Gate)
            .p2;
    let mut rng = rng_from_seed(seed);
    let n1 = poisson(&mut rng, gates * h.p1);
    let n2 = poisson(&mut rng, gates * p2_half);
    let n3 = poisson(&mut rng, gates * p2_half);
    let n12 = poisson(&mut rng, gates * h.p12).min(n1).min(n2);
    let n13 = poisson(&mut rng, gates * h.p13).min(n1).min(n3);
    let n123 = poisson(&mut rng, gates * h.p123).min(n12).min(n13);
    Ok((
        CountRecord::new("alpha:12", n1, n2, n12, n123, acquisition_s, seed)?,
        CountRecord::new("alpha:13", n1, n3, n13, n123, acquisition_s, seed)?,
    ))
}

/// Event-level description of a cross-correlation measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2EventParams {
    /// Number of detection gates.
    pub gates: f64,
    /// True coincidence probability per gate.
    pub true_prob: f64,
    pub p1: f64,
    pub p2: f64,
    /// Accidental coincidence probability per gate, spread over the gate.
    pub accidental_prob: f64,
    pub sigma_ns: f64,
    /// Centre of the correlation peak, ns.
    pub delay_ns: f64,
    pub gate_ns: f64,
}

impl G2EventParams {
    /// Expected normalized peak for bins of width `bin_ns` centred on the delay.
    pub fn expected_peak(&self, bin_ns: f64) -> f64 {
        let k = core::f64::consts::SQRT_2 * 2.0 * self.sigma_ns;
        let frac = libm::erf(bin_ns / k) / libm::erf(self.gate_ns / k);
        let acc = self.p1 * self.p2 * bin_ns / self.gate_ns;
        if acc <= 0.0 {
            return f64::INFINITY;
        }
        (self.true_prob * frac + self.accidental_prob * bin_ns / self.gate_ns) / acc
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct G2Histogram {
    pub tau_ns: Vec<f64>,
    pub g2: Vec<f64>,
    pub counts: Vec<u64>,
    /// Bins with no coincidences (reported as g2 = 1).
    pub zero_count: Vec<bool>,
    pub singles_1: u64,
    pub singles_2: u64,
    pub gates: u64,
}

impl G2Histogram {
    /// `(tau, g2)` of the highest bin.
    pub fn peak(&self) -> (f64, f64) {
        let mut best = 0;
        for (i, g) in self.g2.iter().enumerate() {
            if *g > self.g2[best] {
                best = i;
            }
        }
        (self.tau_ns[best], self.g2[best])
    }
}

/// Uniform bin centres spanning `delay ± half_span`.
pub fn centred_tau_grid(delay_ns: f64, half_span_ns: f64, bin_ns: f64) -> Vec<f64> {
    let n = (half_span_ns / bin_ns).round() as i64;
    (-n..=n).map(|k| delay_ns + k as f64 * bin_ns).collect()
}

/// Time-tagged cross-correlation histogram.
///
/// True pairs arrive at `delay + N(0, sigma)` (truncated to the gate);
/// accidentals fall uniformly within the gate. The histogram is normalized
/// by the singles product `N1 N2 bin / (N_gates gate)`.
pub fn g2_histogram(params: &G2EventParams, tau_grid: &[f64], seed: u64) -> Result<G2Histogram> {
    if tau_grid.len() < 2 {
        return Err(Error::validation("tau grid needs at least two bins"));
    }
    let bin = tau_grid[1] - tau_grid[0];
    if !(bin > 0.0)
        || tau_grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - bin).abs() > 1e-9 * bin.max(1.0))
    {
        return Err(Error::validation("tau grid must be uniformly increasing"));
    }
    if !(params.sigma_ns > 0.0 && params.gate_ns > 0.0 && params.gates >= 0.0) {
        return Err(Error::validation("invalid event-stream parameters"));
    }
    let lo_edge = tau_grid[0] - 0.5 * bin;
    let hi_edge = tau_grid[tau_grid.len() - 1] + 0.5 * bin;
    let support = 3.0 * params.sigma_ns;
    if params.delay_ns - support < lo_edge || params.delay_ns + support > hi_edge {
        return Err(Error::validation(alloc::format!(
            "tau grid [{lo_edge}, {hi_edge}] ns does not cover the wavepacket around {} ns",
            params.delay_ns
        )));
    }
    let mut rng = rng_from_seed(seed);
    let gates = params.gates.round() as u64;
    let n1 = poisson(&mut rng, params.gates * params.p1);
    let n2 = poisson(&mut rng, params.gates * params.p2);
    let n_true = poisson(&mut rng, params.gates * params.true_prob);
    let mut counts = alloc::vec![0u64; tau_grid.len()];
    let half_gate = 0.5 * params.gate_ns;
    let shape =
        Normal::new(0.0, params.sigma_ns).map_err(|_| Error::validation("invalid timing width"))?;
    for _ in 0..n_true {
        let dt = loop {
            let x: f64 = shape.sample(&mut rng);
            if x.abs() <= half_gate {
                break x;
            }
        };
        let k = ((params.delay_ns + dt - lo_edge) / bin).floor();
        if k >= 0.0 && (k as usize) < counts.len() {
            counts[k as usize] += 1;
        }
    }
    let acc_mean = params.gates * params.accidental_prob * bin / params.gate_ns;
    for (k, &tau) in tau_grid.iter().enumerate() {
        if (tau - params.delay_ns).abs() <= half_gate {
            counts[k] += poisson(&mut rng, acc_mean);
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 && n1 == 0 && n2 == 0 {
        return Err(Error::estimation(alloc::format!(
            "empty event stream: {gates} gates, 0 singles, 0 coincidences"
        )));
    }
    let norm = n1 as f64 * n2 as f64 * bin / (params.gates * params.gate_ns);
    let mut g2 = Vec::with_capacity(counts.len());
    let mut zero = Vec::with_capacity(counts.len());
    for &c in &counts {
        if c == 0 || !(norm > 0.0) {
            g2.push(1.0);
            zero.push(true);
        } else {
            g2.push(c as f64 / norm);
            zero.push(false);
        }
    }
    Ok(G2Histogram {
        tau_ns: tau_grid.to_vec(),
        g2,
        counts,
        zero_count: zero,
        singles_1: n1,
        singles_2: n2,
        gates,
    })
}
