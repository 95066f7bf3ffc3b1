//! CHSH correlation functions and the S parameter.
//!
//! Angles are linear-analyzer angles: `+` transmits `cos t |H> + sin t |V>`,
//! `-` its orthogonal complement at `t + pi/2`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use core::f64::consts::FRAC_PI_2;
#[allow(unused_imports)]
use num_traits::Float;

use crate::detection::{CountRecord, MeasurementSetting};
use crate::error::{Error, Result};
use crate::qstate::{PolarizationKet, TwoQubitState};

/// `[theta1, theta1']` and `[theta2, theta2']`.
pub const CHSH_ANGLES: [[f64; 2]; 2] = [
    [0.0, core::f64::consts::FRAC_PI_4],
    [
        core::f64::consts::FRAC_PI_8,
        3.0 * core::f64::consts::FRAC_PI_8,
    ],
];

pub const CLASSICAL_BOUND: f64 = 2.0;
pub const TSIRELSON_BOUND: f64 = 2.0 * core::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PortCounts {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl PortCounts {
    pub fn total(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChshValue {
    /// Largest of the four single-minus sign placements.
    pub s: f64,
    /// `|E11 - E12 + E21 + E22|` exactly as written.
    pub literal: f64,
    pub e: [[f64; 2]; 2],
}

impl ChshValue {
    pub fn violates_local_bound(&self) -> bool {
        self.s > CLASSICAL_BOUND
    }
}

pub fn chsh_e(c: &PortCounts) -> Result<f64> {
    if [c.pp, c.pm, c.mp, c.mm].iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::validation("port counts must be non-negative"));
    }
    let total = c.total();
    if !(total > 0.0) {
        return Err(Error::estimation("no coincidences at this analyzer pair"));
    }
    Ok((c.pp + c.mm - c.pm - c.mp) / total)
}

pub fn chsh_s(e: &[[f64; 2]; 2]) -> Result<ChshValue> {
    for v in e.iter().flatten() {
        if !(v.abs() <= 1.0 + 1e-12) {
            return Err(Error::validation(format!(
                "correlation {v} outside [-1, 1]"
            )));
        }
    }
    let flat = [e[0][0], e[0][1], e[1][0], e[1][1]];
    let sum: f64 = flat.iter().sum();
    let s = flat
        .iter()
        .map(|x| (sum - 2.0 * x).abs())
        .fold(0.0, f64::max);
    let literal = (e[0][0] - e[0][1] + e[1][0] + e[1][1]).abs();
    Ok(ChshValue { s, literal, e: *e })
}

/// Exact correlation `<(P+ - P-) ⊗ (P+ - P-)>` of a state.
pub fn analytic_e(rho: &TwoQubitState, theta1: f64, theta2: f64) -> f64 {
    let mut e = 0.0;
    for (s1, a) in [(1.0, theta1), (-1.0, theta1 + FRAC_PI_2)] {
        for (s2, b) in [(1.0, theta2), (-1.0, theta2 + FRAC_PI_2)] {
            e += s1
                * s2
                * rho.product_probability(&PolarizationKet::linear(a), &PolarizationKet::linear(b));
        }
    }
    e
}

pub fn analytic_s(rho: &TwoQubitState, angles: &[[f64; 2]; 2]) -> Result<ChshValue> {
    let e = core::array::from_fn(|i| {
        core::array::from_fn(|j| analytic_e(rho, angles[0][i], angles[1][j]))
    });
    chsh_s(&e)
}

fn port_label(i: usize, j: usize, p1: bool, p2: bool) -> String {
    let s = |p: bool| if p { '+' } else { '-' };
    format!("chsh:{i}{j}:{}{}", s(p1), s(p2))
}

/// The 16 analyzer settings, four ports for each of the four angle pairs.
pub fn chsh_settings(angles: &[[f64; 2]; 2]) -> Vec<MeasurementSetting> {
    let mut out = Vec::with_capacity(16);
    for i in 0..2 {
        for j in 0..2 {
            for p1 in [true, false] {
                for p2 in [true, false] {
                    let a = angles[0][i] + if p1 { 0.0 } else { FRAC_PI_2 };
                    let b = angles[1][j] + if p2 { 0.0 } else { FRAC_PI_2 };
                    out.push(MeasurementSetting {
                        label: port_label(i, j, p1, p2),
                        arm1_projector: PolarizationKet::linear(a),
                        arm2_projector: PolarizationKet::linear(b),
                    });
                }
            }
        }
    }
    out
}

fn find<'a>(records: &'a [CountRecord], label: &str) -> Result<&'a CountRecord> {
    records
        .iter()
        .find(|r| r.setting_label == label)
        .ok_or_else(|| Error::Configuration(format!("missing CHSH record '{label}'")))
}

/// Coincidence rates at the four ports of angle pair `(i, j)`.
pub fn port_counts(records: &[CountRecord], i: usize, j: usize) -> Result<PortCounts> {
    let rate = |p1, p2| -> Result<f64> {
        let r = find(records, &port_label(i, j, p1, p2))?;
        Ok(r.coincidences as f64 / r.acquisition_s)
    };
    Ok(PortCounts {
        pp: rate(true, true)?,
        pm: rate(true, false)?,
        mp: rate(false, true)?,
        mm: rate(false, false)?,
    })
}

pub fn chsh_from_records(records: &[CountRecord]) -> Result<ChshValue> {
    let mut e = [[0.0; 2]; 2];
    for (i, row) in e.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = chsh_e(&port_counts(records, i, j)?)?;
        }
    }
    chsh_s(&e)
}
