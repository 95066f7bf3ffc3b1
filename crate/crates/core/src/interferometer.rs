//! Self-locked Mach-Zehnder with an attenuation plate on the H component of
//! Signal 2.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::qstate::{Mat4, PolarizationKet, TwoQubitState, C64};

/// Success probabilities below this are treated as a blocked filter.
pub const MIN_SUCCESS_PROB: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct AttenuatorSetting {
    /// Amplitude transmittance for horizontally polarized Signal 2.
    pub t_h: f64,
}

impl AttenuatorSetting {
    pub const IDENTITY: AttenuatorSetting = AttenuatorSetting { t_h: 1.0 };

    pub fn new(t_h: f64) -> Result<Self> {
        let s = AttenuatorSetting { t_h };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_h > 0.0 && self.t_h <= 1.0) {
            return Err(Error::validation(alloc::format!(
                "attenuator transmittance t_h = {} must lie in (0, 1]",
                self.t_h
            )));
        }
        Ok(())
    }

    /// `K = I ⊗ diag(t_h, 1)`
    pub fn kraus(&self) -> Mat4 {
        let t = C64::new(self.t_h, 0.0);
        let one = C64::new(1.0, 0.0);
        Mat4::from_diagonal(&nalgebra::Vector4::new(t, one, t, one))
    }

    /// Sequential plates multiply their transmittances.
    pub fn then(&self, other: &AttenuatorSetting) -> AttenuatorSetting {
        AttenuatorSetting {
            t_h: self.t_h * other.t_h,
        }
    }
}

/// Result of [`balance_attenuation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Balance {
    pub setting: AttenuatorSetting,
    /// Set when `tan eta_f < 1`: the plate only attenuates H, so the state
    /// cannot be balanced and the identity setting is returned instead.
    pub imbalanced: bool,
}

/// Plate setting that equalizes the `HV` and `VH` amplitudes of the source.
pub fn balance_attenuation(eta_f: f64) -> Result<Balance> {
    if !(eta_f > 0.0 && eta_f < core::f64::consts::FRAC_PI_2) {
        return Err(Error::validation(alloc::format!(
            "eta_f = {eta_f} must lie in (0, pi/2)"
        )));
    }
    let t = eta_f.tan();
    if t >= 1.0 {
        Ok(Balance {
            setting: AttenuatorSetting {
                t_h: (1.0 / t).min(1.0),
            },
            imbalanced: false,
        })
    } else {
        Ok(Balance {
            setting: AttenuatorSetting::IDENTITY,
            imbalanced: true,
        })
    }
}

/// Applies the plate as a post-selected filter; returns the normalized output
/// state and the pass probability `Tr(K rho K^dag)`.
pub fn apply_attenuator(
    rho: &TwoQubitState,
    setting: &AttenuatorSetting,
) -> Result<(TwoQubitState, f64)> {
    setting.validate()?;
    let k = setting.kraus();
    let out = k * rho.matrix() * k.adjoint();
    let p = out.trace().re;
    if !(p >= MIN_SUCCESS_PROB) {
        return Err(Error::DegenerateFilter(p));
    }
    Ok((TwoQubitState::from_trusted(out.unscale(p)), p))
}

/// The storage path of Signal 2: both polarization components travel
/// separate but equal arms, so the qubit is untouched and every input sees
/// the same scalar efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoragePath {
    pub efficiency: f64,
}

impl StoragePath {
    pub fn transmit(&self, ket: &PolarizationKet) -> (PolarizationKet, f64) {
        (*ket, self.efficiency)
    }
}
