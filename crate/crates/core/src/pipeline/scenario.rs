//! Complete description of one simulated experiment.

use alloc::string::String;
use alloc::vec::Vec;

use crate::detection::{DetectorParams, LossBudget, TimingConfig};
use crate::error::{Error, Result};
use crate::estimators::chsh::CHSH_ANGLES;
use crate::estimators::visibility::{fringe_sweep, FitWeighting, MIN_FRINGE_POINTS};
use crate::interferometer::{balance_attenuation, AttenuatorSetting};
use crate::memory::{EitParams, MemoryDecayParams, MemoryNoiseParams};
use crate::source::{eta_from_tan2, fwhm_to_sigma, tan2_eta_from_detuning, SourceParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Either a fixed plate or `"auto"`, resolved from the source imbalance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttenuatorChoice {
    Auto,
    Fixed(AttenuatorSetting),
}

impl AttenuatorChoice {
    pub fn resolve(&self, source: &SourceParams) -> Result<AttenuatorSetting> {
        match self {
            AttenuatorChoice::Auto => Ok(balance_attenuation(source.eta_f)?.setting),
            AttenuatorChoice::Fixed(s) => {
                s.validate()?;
                Ok(*s)
            }
        }
    }
}

#[cfg(feature = "serde")]
mod attenuator_serde {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Keyword(String),
        Setting(AttenuatorSetting),
    }

    impl Serialize for AttenuatorChoice {
        fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
            match self {
                AttenuatorChoice::Auto => Repr::Keyword("auto".into()).serialize(s),
                AttenuatorChoice::Fixed(a) => Repr::Setting(*a).serialize(s),
            }
        }
    }

    impl<'de> Deserialize<'de> for AttenuatorChoice {
        fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
            match Repr::deserialize(d)? {
                Repr::Keyword(k) if k == "auto" => Ok(AttenuatorChoice::Auto),
                Repr::Keyword(k) => Err(serde::de::Error::custom(alloc::format!(
                    "attenuator must be \"auto\" or {{\"t_h\": ...}}, got \"{k}\""
                ))),
                Repr::Setting(a) => Ok(AttenuatorChoice::Fixed(a)),
            }
        }
    }
}

/// Integration time of each measurement, seconds per setting.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct StageAcquisition {
    pub tomography: f64,
    pub chsh: f64,
    pub fringe: f64,
    pub g2: f64,
    pub alpha: f64,
}

impl StageAcquisition {
    fn validate(&self) -> Result<()> {
        for t in [self.tomography, self.chsh, self.fringe, self.g2, self.alpha] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::validation("acquisition times must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Acquisition {
    pub pre_storage: StageAcquisition,
    pub post_storage: StageAcquisition,
}

impl Default for Acquisition {
    fn default() -> Self {
        Acquisition {
            pre_storage: StageAcquisition {
                tomography: 70.0,
                chsh: 160.0,
                fringe: 70.0,
                g2: 1000.0,
                alpha: 1.0e6,
            },
            post_storage: StageAcquisition {
                tomography: 300.0,
                chsh: 700.0,
                fringe: 500.0,
                g2: 1.0e4,
                alpha: 1.0e6,
            },
        }
    }
}

/// Measurement settings and analysis choices.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct AnalysisConfig {
    /// `[[theta1, theta1'], [theta2, theta2']]`, analyzer angles in radians.
    pub chsh_angles: [[f64; 2]; 2],
    /// Half-wave-plate angles for the Signal-2 fringe, radians.
    pub fringe_angles: Vec<f64>,
    pub fringe_weighting: FitWeighting,
    pub g2_bin_ns: f64,
    pub g2_half_span_ns: f64,
    pub g2_delay_pre_ns: f64,
    pub g2_delay_post_ns: f64,
    /// Unheralded autocorrelations entering the Cauchy-Schwarz ratio.
    pub g11: f64,
    pub g22_pre: f64,
    pub g22_post: f64,
    /// Monte-Carlo resamples per error bar; 0 disables error bars.
    pub mc_resamples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            chsh_angles: CHSH_ANGLES,
            fringe_angles: fringe_sweep(17),
            fringe_weighting: FitWeighting::Unweighted,
            g2_bin_ns: 1.0,
            g2_half_span_ns: 30.0,
            g2_delay_pre_ns: 202.0,
            g2_delay_post_ns: 325.0,
            g11: 1.2,
            g22_pre: 1.38,
            g22_post: 2.0,
            mc_resamples: 200,
        }
    }
}

impl AnalysisConfig {
    fn validate(&self) -> Result<()> {
        if self.fringe_angles.len() < MIN_FRINGE_POINTS {
            return Err(Error::validation("fringe sweep needs at least 8 angles"));
        }
        if !(self.g2_bin_ns > 0.0 && self.g2_half_span_ns > self.g2_bin_ns) {
            return Err(Error::validation(
                "g2 binning must be positive with span above one bin",
            ));
        }
        if !(self.g11 > 0.0 && self.g22_pre > 0.0 && self.g22_post > 0.0) {
            return Err(Error::validation("autocorrelations must be positive"));
        }
        if self.mc_resamples != 0
            && self.mc_resamples < crate::estimators::montecarlo::MIN_RESAMPLES
        {
            return Err(Error::validation("mc_resamples must be 0 or at least 100"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Scenario {
    pub schema_version: u32,
    #[cfg_attr(feature = "serde", serde(default))]
    pub name: String,
    pub source: SourceParams,
    /// `[detuning_mhz, tan2_eta]` pairs; when present, `source.eta_f` is
    /// interpolated at `source.two_photon_detuning`.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub tan2_anchors: Option<Vec<[f64; 2]>>,
    pub attenuator: AttenuatorChoice,
    pub eit: EitParams,
    pub decay: MemoryDecayParams,
    pub mem_noise: MemoryNoiseParams,
    pub losses: LossBudget,
    /// Telecom (Signal 1) then visible (Signal 2).
    pub detectors: [DetectorParams; 2],
    pub timing: TimingConfig,
    pub analysis: AnalysisConfig,
    pub acquisition: Acquisition,
    pub master_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: String::from("default"),
            source: SourceParams::default(),
            tan2_anchors: None,
            attenuator: AttenuatorChoice::Auto,
            eit: EitParams::default(),
            decay: MemoryDecayParams::default(),
            mem_noise: MemoryNoiseParams::default(),
            losses: LossBudget::default(),
            detectors: [
                DetectorParams::telecom_default(),
                DetectorParams::visible_default(),
            ],
            timing: TimingConfig::default(),
            analysis: AnalysisConfig::default(),
            acquisition: Acquisition::default(),
            master_seed: 2017,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(alloc::format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.source.validate()?;
        if let Some(a) = &self.tan2_anchors {
            if a.len() < 2 {
                return Err(Error::validation("tan2_anchors needs at least two points"));
            }
        }
        self.attenuator.resolve(&self.source)?;
        self.eit.validate()?;
        self.decay.validate()?;
        self.mem_noise.validate()?;
        self.losses.validate()?;
        for d in &self.detectors {
            d.validate()?;
        }
        self.timing.validate()?;
        self.analysis.validate()?;
        self.acquisition.pre_storage.validate()?;
        self.acquisition.post_storage.validate()?;
        Ok(())
    }

    /// Applies the tan^2 anchors and replaces `"auto"` with the balancing plate.
    pub fn resolved(&self) -> Result<Scenario> {
        let mut s = self.clone();
        if let Some(anchors) = s.tan2_anchors.take() {
            let pairs: Vec<(f64, f64)> = anchors.iter().map(|a| (a[0], a[1])).collect();
            let tan2 = tan2_eta_from_detuning(s.source.two_photon_detuning, &pairs)?;
            s.source.eta_f = eta_from_tan2(tan2);
        }
        s.attenuator = AttenuatorChoice::Fixed(s.attenuator.resolve(&s.source)?);
        s.validate()?;
        Ok(s)
    }

    /// rms spread of the Signal-1/Signal-2 delay, ns.
    pub fn pair_sigma_ns(&self) -> f64 {
        fwhm_to_sigma(self.source.s2_temporal_fwhm)
    }
}
