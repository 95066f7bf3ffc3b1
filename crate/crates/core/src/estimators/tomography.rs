//! Two-qubit state tomography from the 16 product settings
//! `{H, V, D, R} x {H, V, D, R}`.
//!
//! Linear inversion expands `rho` in the Pauli-product basis and solves the
//! 16x16 real system `Tr(rho P_i) = f_i`. The maximum-likelihood estimate
//! uses `rho = T^dag T / Tr(T^dag T)` with `T` lower triangular and a real
//! diagonal, and maximizes the Poisson likelihood with the overall count
//! scale profiled out.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector, Vector4};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;

use crate::detection::{CountRecord, MeasurementSetting};
use crate::error::{Error, Result};
use crate::qstate::{
    hermitian_part, kron, pauli_x, pauli_y, pauli_z, product_vector, Mat2, Mat4, PolarizationKet,
    TwoQubitState, C64,
};
use crate::rng::rng_from_seed;

type Mat16 = SMatrix<f64, 16, 16>;
type Vec16 = SVector<f64, 16>;

/// The four single-qubit analysis states, in label order.
pub fn tomography_kets() -> [(char, PolarizationKet); 4] {
    [
        ('H', PolarizationKet::h()),
        ('V', PolarizationKet::v()),
        ('D', PolarizationKet::d()),
        ('R', PolarizationKet::r()),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographySettingSet {
    pub settings: Vec<MeasurementSetting>,
}

impl TomographySettingSet {
    /// All 16 pairs; labels are two letters, Signal 1 first (`"HD"`, `"RV"`, ...).
    pub fn standard() -> Self {
        let mut settings = Vec::with_capacity(16);
        for (la, a) in tomography_kets() {
            for (lb, b) in tomography_kets() {
                let mut label = String::new();
                label.push(la);
                label.push(lb);
                settings.push(MeasurementSetting {
                    label,
                    arm1_projector: a,
                    arm2_projector: b,
                });
            }
        }
        TomographySettingSet { settings }
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.len() != 16 {
            return Err(Error::Configuration(alloc::format!(
                "tomography needs exactly 16 settings, got {}",
                self.settings.len()
            )));
        }
        for s in &self.settings {
            s.validate()?;
        }
        let b = design_matrix(&self.vectors());
        let sv = b.singular_values();
        let max = sv.max();
        let min = sv.min();
        if !(min > 1e-10 * max) {
            return Err(Error::Configuration(
                "tomography settings do not span the operator space (duplicate settings?)".into(),
            ));
        }
        Ok(())
    }

    fn vectors(&self) -> Vec<Vector4<C64>> {
        self.settings
            .iter()
            .map(|s| product_vector(&s.arm1_projector, &s.arm2_projector))
            .collect()
    }

    /// Orders `records` to match the settings by label.
    pub fn match_records<'a>(&self, records: &'a [CountRecord]) -> Result<Vec<&'a CountRecord>> {
        let mut out = Vec::with_capacity(self.settings.len());
        for s in &self.settings {
            let mut hits = records.iter().filter(|r| r.setting_label == s.label);
            let first = hits.next().ok_or_else(|| {
                Error::Configuration(alloc::format!(
                    "no count record for tomography setting '{}'",
                    s.label
                ))
            })?;
            if hits.next().is_some() {
                return Err(Error::Configuration(alloc::format!(
                    "duplicate count records for tomography setting '{}'",
                    s.label
                )));
            }
            out.push(first);
        }
        Ok(out)
    }
}

/// Hermitian basis `sigma_j ⊗ sigma_k`, `j, k = 0..3`.
fn pauli_basis() -> [Mat4; 16] {
    let s: [Mat2; 4] = [Mat2::identity(), pauli_x(), pauli_y(), pauli_z()];
    core::array::from_fn(|m| kron(&s[m / 4], &s[m % 4]))
}

fn design_matrix(vectors: &[Vector4<C64>]) -> Mat16 {
    let basis = pauli_basis();
    Mat16::from_fn(|i, m| (vectors[i].adjoint() * basis[m] * vectors[i])[(0, 0)].re)
}

/// Ket equality up to a global phase.
fn same_ray(a: &PolarizationKet, b: &PolarizationKet) -> bool {
    (a.inner(b).norm() - 1.0).abs() < 1e-9
}

fn orthogonal(a: &PolarizationKet, b: &PolarizationKet) -> bool {
    a.inner(b).norm() < 1e-9
}

/// Normalized frequencies. Settings whose four orthogonal-complement
/// partners are all present are normalized by their own group total; the
/// rest use the mean total of the complete groups. Rates (counts per second)
/// are used so that unequal acquisition times are accounted for.
pub fn normalized_frequencies(settings: &[MeasurementSetting], rates: &[f64]) -> Result<Vec<f64>> {
    let n = settings.len();
    let mut group_total: Vec<Option<f64>> = alloc::vec![None; n];
    let mut complete_totals = Vec::new();
    for i in 0..n {
        let (a, b) = (&settings[i].arm1_projector, &settings[i].arm2_projector);
        let members: Vec<usize> = (0..n)
            .filter(|&j| {
                let (x, y) = (&settings[j].arm1_projector, &settings[j].arm2_projector);
                (same_ray(a, x) || orthogonal(a, x)) && (same_ray(b, y) || orthogonal(b, y))
            })
            .collect();
        if members.len() == 4 {
            let t: f64 = members.iter().map(|&j| rates[j]).sum();
            group_total[i] = Some(t);
            if members[0] == i {
                complete_totals.push(t);
            }
        }
    }
    if complete_totals.is_empty() {
        return Err(Error::Configuration(
            "no complete orthogonal basis group among the tomography settings".into(),
        ));
    }
    let mean = complete_totals.iter().sum::<f64>() / complete_totals.len() as f64;
    if !(mean > 0.0) || group_total.iter().flatten().any(|t| !(*t > 0.0)) {
        return Err(Error::estimation(
            "tomography basis group has zero total counts",
        ));
    }
    Ok((0..n)
        .map(|i| rates[i] / group_total[i].unwrap_or(mean))
        .collect())
}

/// Solves the linear system for exact or estimated frequencies; the result
/// is Hermitian with unit trace but may have negative eigenvalues.
pub fn linear_inversion(settings: &TomographySettingSet, freqs: &[f64]) -> Result<Mat4> {
    settings.validate()?;
    if freqs.len() != 16 {
        return Err(Error::validation("need 16 frequencies"));
    }
    let b = design_matrix(&settings.vectors());
    let f = Vec16::from_iterator(freqs.iter().cloned());
    let x = b
        .lu()
        .solve(&f)
        .ok_or_else(|| Error::Configuration("tomography design matrix is singular".into()))?;
    let basis = pauli_basis();
    let mut rho = Mat4::zeros();
    for (m, g) in basis.iter().enumerate() {
        rho += g.scale(x[m]);
    }
    // Tr(sigma_j ⊗ sigma_k) = 4 delta_j0 delta_k0, so rho = sum x_m Gamma_m
    // already has Tr(rho P_i) = f_i; fix the trace to one.
    let rho = hermitian_part(&rho);
    let tr = rho.trace().re;
    if !(tr.abs() > 1e-300) {
        return Err(Error::estimation(
            "linear inversion produced a traceless matrix",
        ));
    }
    Ok(rho.unscale(tr))
}

/// Linear-inversion estimate from the 16 standard records (matched by label).
pub fn tomo_linear(records: &[CountRecord]) -> Result<Mat4> {
    let set = TomographySettingSet::standard();
    tomo_linear_with(&set, records)
}

pub fn tomo_linear_with(set: &TomographySettingSet, records: &[CountRecord]) -> Result<Mat4> {
    set.validate()?;
    let recs = set.match_records(records)?;
    let rates: Vec<f64> = recs
        .iter()
        .map(|r| r.coincidences as f64 / r.acquisition_s)
        .collect();
    let freqs = normalized_frequencies(&set.settings, &rates)?;
    linear_inversion(set, &freqs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Stop when the largest gradient component, relative to the total
    /// count, falls below this.
    pub tolerance: f64,
    pub max_evaluations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            tolerance: 1e-12,
            max_evaluations: 100_000,
            restarts: 3,
            seed: 0x7f4a_7c15,
        }
    }
}

/// Counts, relative exposure and analysis vector for each setting.
#[derive(Debug, Clone)]
pub struct LikelihoodData {
    vectors: Vec<Vector4<C64>>,
    counts: Vec<f64>,
    exposure: Vec<f64>,
    total: f64,
}

impl LikelihoodData {
    pub fn new(settings: &TomographySettingSet, counts: &[f64], exposure: &[f64]) -> Result<Self> {
        settings.validate()?;
        if counts.len() != 16 || exposure.len() != 16 {
            return Err(Error::validation("need 16 counts and exposures"));
        }
        if counts.iter().any(|c| !(*c >= 0.0)) || exposure.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::validation(
                "counts must be non-negative and exposures positive",
            ));
        }
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::estimation("no coincidences recorded"));
        }
        Ok(LikelihoodData {
            vectors: settings.vectors(),
            counts: counts.to_vec(),
            exposure: exposure.to_vec(),
            total,
        })
    }

    pub fn from_records(settings: &TomographySettingSet, records: &[CountRecord]) -> Result<Self> {
        let recs = settings.match_records(records)?;
        let counts: Vec<f64> = recs.iter().map(|r| r.coincidences as f64).collect();
        let t0 = recs[0].acquisition_s;
        let exposure: Vec<f64> = recs.iter().map(|r| r.acquisition_s / t0).collect();
        Self::new(settings, &counts, &exposure)
    }

    /// Profile Poisson log-likelihood (up to a constant) of a state.
    pub fn log_likelihood(&self, rho: &Mat4) -> f64 {
        let lambdas: Vec<f64> = self
            .vectors
            .iter()
            .zip(&self.exposure)
            .map(|(v, t)| (v.adjoint() * rho * v)[(0, 0)].re.max(0.0) * t)
            .collect();
        self.profile(&lambdas)
    }

    fn profile(&self, lambdas: &[f64]) -> f64 {
        let sum: f64 = lambdas.iter().sum();
        if !(sum > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut f = -self.total * sum.ln();
        for (n, l) in self.counts.iter().zip(lambdas) {
            if *n > 0.0 {
                if !(*l > 0.0) {
                    return f64::NEG_INFINITY;
                }
                f += n * l.ln();
            }
        }
        f
    }

    /// Log-likelihood and its gradient with respect to the 16 parameters.
    fn value_and_gradient(&self, x: &Vec16) -> (f64, Vec16) {
        let t = t_from_params(x);
        let ws: Vec<Vector4<C64>> = self.vectors.iter().map(|v| t * v).collect();
        let lambdas: Vec<f64> = ws
            .iter()
            .zip(&self.exposure)
            .map(|(w, e)| w.norm_squared() * e)
            .collect();
        let f = self.profile(&lambdas);
        let mut g = Vec16::zeros();
        if !f.is_finite() {
            return (f, g);
        }
        let sum: f64 = lambdas.iter().sum();
        for i in 0..self.vectors.len() {
            let coeff = if self.counts[i] > 0.0 {
                self.counts[i] / lambdas[i]
            } else {
                0.0
            } - self.total / sum;
            let c = coeff * self.exposure[i];
            if c == 0.0 {
                continue;
            }
            let (w, v) = (&ws[i], &self.vectors[i]);
            for (p, (j, k, imag)) in PARAM_LAYOUT.iter().enumerate() {
                let z = w[*j].conj() * v[*k];
                let d = if *imag { -2.0 * z.im } else { 2.0 * z.re };
                g[p] += c * d;
            }
        }
        (f, g)
    }
}

/// Parameter `p` sets `Re` (or `Im`) of `T[j][k]`, `j >= k`; diagonals are real.
const PARAM_LAYOUT: [(usize, usize, bool); 16] = [
    (0, 0, false),
    (1, 1, false),
    (2, 2, false),
    (3, 3, false),
    (1, 0, false),
    (1, 0, true),
    (2, 0, false),
    (2, 0, true),
    (2, 1, false),
    (2, 1, true),
    (3, 0, false),
    (3, 0, true),
    (3, 1, false),
    (3, 1, true),
    (3, 2, false),
    (3, 2, true),
];

fn t_from_params(x: &Vec16) -> Mat4 {
    let mut t = Mat4::zeros();
    for (p, (j, k, imag)) in PARAM_LAYOUT.iter().enumerate() {
        if *imag {
            t[(*j, *k)].im = x[p];
        } else {
            t[(*j, *k)].re = x[p];
        }
    }
    t
}

fn params_from_t(t: &Mat4) -> Vec16 {
    Vec16::from_fn(|p, _| {
        let (j, k, imag) = PARAM_LAYOUT[p];
        if imag {
            t[(j, k)].im
        } else {
            t[(j, k)].re
        }
    })
}

fn rho_from_params(x: &Vec16) -> Mat4 {
    let t = t_from_params(x);
    let m = t.adjoint() * t;
    let tr = m.trace().re;
    hermitian_part(&m).unscale(tr)
}

/// Lower-triangular `T` with `T^dag T = rho` for a positive-definite `rho`.
fn cholesky_params(rho: &Mat4) -> Option<Vec16> {
    // Reverse the basis, take the usual L L^dag factorization, and reverse
    // back: J L J is upper triangular U with U U^dag = rho, so T = U^dag.
    let rev = Mat4::from_fn(|i, j| rho[(3 - i, 3 - j)]);
    let l = rev.cholesky()?.unpack();
    let u = Mat4::from_fn(|i, j| l[(3 - i, 3 - j)]);
    let mut t = u.adjoint();
    // Make the diagonal real and non-negative by rephasing rows.
    for j in 0..4 {
        let d = t[(j, j)];
        if d.norm() > 0.0 {
            let phase = d.conj() / d.norm();
            for k in 0..4 {
                t[(j, k)] *= phase;
            }
        }
    }
    Some(params_from_t(&t))
}

struct Outcome {
    x: Vec16,
    value: f64,
    evaluations: usize,
    converged: bool,
}

/// Quasi-Newton ascent with Armijo backtracking.
fn bfgs(data: &LikelihoodData, x0: Vec16, opts: &MleOptions, budget: usize) -> Outcome {
    let mut x = x0.unscale(x0.norm());
    let (mut f, mut g) = data.value_and_gradient(&x);
    let mut evals = 1;
    let mut h = Mat16::identity();
    let mut reset = false;
    let noise = 1e-13 * (f.abs() + data.total);
    while evals < budget {
        if !f.is_finite() {
            return Outcome {
                x,
                value: f,
                evaluations: evals,
                converged: false,
            };
        }
        // Ascent direction.
        let mut d = h * g;
        if d.dot(&g) <= 0.0 {
            h = Mat16::identity();
            d = g;
        }
        let slope = d.dot(&g);
        if slope <= 0.0 || g.amax() <= opts.tolerance * data.total.max(1.0) {
            // Zero gradient: stationary.
            return Outcome {
                x,
                value: f,
                evaluations: evals,
                converged: true,
            };
        }
        let mut step = 1.0;
        let mut accepted = None;
        while evals < budget && step > 1e-20 {
            let xn = x + d.scale(step);
            let (fnew, gnew) = data.value_and_gradient(&xn);
            evals += 1;
            if fnew.is_finite() && fnew >= f + 1e-4 * step * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            // Near the optimum the change in f drowns in rounding of the
            // large count sums; the directional derivative stays accurate.
            if fnew.is_finite() && (fnew - f).abs() <= noise && gnew.dot(&d).abs() <= 0.9 * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if reset {
                // No ascent possible even along the gradient: numerically stationary.
                return Outcome {
                    x,
                    value: f,
                    evaluations: evals,
                    converged: evals < budget,
                };
            }
            h = Mat16::identity();
            reset = true;
            continue;
        };
        reset = false;
        // The likelihood is invariant under rescaling T; keep |x| = 1 and
        // carry the gradient along (it scales as 1/|x|).
        let scale = xn.norm();
        let xn = xn.unscale(scale);
        let gnew = gnew.scale(scale);
        let s = xn - x;
        let y = g - gnew; // gradient of the negated objective
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = Mat16::identity();
            let a = i - (s * y.transpose()).scale(rho);
            h = a * h * a.transpose() + (s * s.transpose()).scale(rho);
        }
        x = xn;
        f = fnew;
        g = gnew;
    }
    Outcome {
        x,
        value: f,
        evaluations: evals,
        converged: false,
    }
}

fn best_iterate(x: &Vec16) -> alloc::boxed::Box<[[f64; 2]; 16]> {
    let rho = rho_from_params(x);
    let mut out = [[0.0; 2]; 16];
    for i in 0..4 {
        for j in 0..4 {
            out[4 * i + j] = [rho[(i, j)].re, rho[(i, j)].im];
        }
    }
    alloc::boxed::Box::new(out)
}

/// Maximum-likelihood estimate seeded from `init` (typically the linear
/// inversion), projected onto the physical set.
pub fn mle_from_data(
    data: &LikelihoodData,
    init: &Mat4,
    opts: &MleOptions,
) -> Result<TwoQubitState> {
    let seed_state =
        TwoQubitState::project_physical(init).unwrap_or_else(|_| TwoQubitState::maximally_mixed());
    // A small admixture of I/4 keeps the Cholesky factor well defined.
    let seed_rho = seed_state.matrix().scale(1.0 - 1e-3) + Mat4::identity().scale(0.25e-3);
    let x0 = cholesky_params(&seed_rho).unwrap_or_else(|| params_from_t(&Mat4::identity()));
    let mut total_evals = 0;
    let mut best: Option<Outcome> = None;
    let mut rng = rng_from_seed(opts.seed);
    for attempt in 0..=opts.restarts {
        let start = if attempt == 0 {
            x0
        } else {
            Vec16::from_fn(|p, _| {
                let r: f64 = rng.random_range(-1.0..1.0);
                if p < 4 {
                    r.abs() + 0.1
                } else {
                    r
                }
            })
        };
        let remaining = opts.max_evaluations.saturating_sub(total_evals);
        if remaining == 0 {
            break;
        }
        let out = bfgs(data, start, opts, remaining);
        total_evals += out.evaluations;
        let converged = out.converged;
        if best
            .as_ref()
            .map_or(true, |b| out.value > b.value || !b.value.is_finite())
        {
            best = Some(out);
        }
        if converged {
            break;
        }
    }
    let best = best.ok_or_else(|| Error::estimation("maximum-likelihood search did not run"))?;
    if !best.converged {
        return Err(Error::NotConverged {
            evaluations: total_evals,
            best: best_iterate(&best.x),
        });
    }
    TwoQubitState::from_matrix(rho_from_params(&best.x))
}

/// Maximum-likelihood estimate from the 16 standard records.
pub fn tomo_mle(records: &[CountRecord], init: &Mat4) -> Result<TwoQubitState> {
    tomo_mle_with(
        &TomographySettingSet::standard(),
        records,
        init,
        &MleOptions::default(),
    )
}

pub fn tomo_mle_with(
    set: &TomographySettingSet,
    records: &[CountRecord],
    init: &Mat4,
    opts: &MleOptions,
) -> Result<TwoQubitState> {
    let data = LikelihoodData::from_records(set, records)?;
    mle_from_data(&data, init, opts)
}

/// Linear then maximum-likelihood reconstruction.
pub fn reconstruct(records: &[CountRecord]) -> Result<(Mat4, TwoQubitState)> {
    let lin = tomo_linear(records)?;
    let mle = tomo_mle(records, &lin)?;
    Ok((lin, mle))
}

/// Exact Born-rule probabilities of `rho` for each setting.
pub fn born_frequencies(set: &TomographySettingSet, rho: &TwoQubitState) -> Vec<f64> {
    set.vectors()
        .iter()
        .map(|v| (v.adjoint() * rho.matrix() * v)[(0, 0)].re)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::poisson;
    use crate::qstate::{fidelity, trace_distance};
    use proptest::prelude::*;

    fn max_abs(m: &Mat4) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn random_state(seed: u64) -> TwoQubitState {
        let mut rng = rng_from_seed(seed);
        let g = Mat4::from_fn(|_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = g * g.adjoint();
        let tr = m.trace().re;
        TwoQubitState::from_matrix(m.unscale(tr)).unwrap()
    }

    fn exact_records(rho: &TwoQubitState, scale: f64) -> Vec<CountRecord> {
        let set = TomographySettingSet::standard();
        born_frequencies(&set, rho)
            .iter()
            .zip(&set.settings)
            .map(|(p, s)| {
                let c = (p * scale).round() as u64;
                CountRecord::new(s.label.clone(), c, c, c, 0, 1.0, 0).unwrap()
            })
            .collect()
    }

    fn exact_mle(rho: &TwoQubitState) -> TwoQubitState {
        let set = TomographySettingSet::standard();
        let f = born_frequencies(&set, rho);
        let data = LikelihoodData::new(
            &set,
            &f.iter().map(|p| p * 1e6).collect::<Vec<_>>(),
            &[1.0; 16],
        )
        .unwrap();
        let lin = linear_inversion(&set, &f).unwrap();
        mle_from_data(&data, &lin, &MleOptions::default()).unwrap()
    }

    #[test]
    fn standard_set_spans_operator_space() {
        let set = TomographySettingSet::standard();
        assert!(set.validate().is_ok());
        assert_eq!(set.settings[1].label, "HV");
        assert_eq!(set.settings[15].label, "RR");
    }

    #[test]
    fn duplicate_settings_are_singular() {
        let mut set = TomographySettingSet::standard();
        set.settings[15] = set.settings[14].clone();
        set.settings[15].label = "dup".into();
        assert!(matches!(set.validate(), Err(Error::Configuration(_))));
    }

    #[test]
    fn linear_inversion_of_exact_frequencies() {
        let set = TomographySettingSet::standard();
        for rho in [
            TwoQubitState::basis_state(1),
            TwoQubitState::psi_plus(),
            TwoQubitState::maximally_mixed(),
        ] {
            let f = born_frequencies(&set, &rho);
            let est = linear_inversion(&set, &f).unwrap();
            assert!(max_abs(&(est - rho.matrix())) < 1e-10);
        }
    }

    #[test]
    fn linear_from_records_uses_acquisition_time() {
        let rho = TwoQubitState::psi_plus();
        let mut recs = exact_records(&rho, 1e6);
        // Doubling one exposure (and its counts) must not change the estimate.
        recs[6] = recs[6].with_counts(
            recs[6].singles_1 * 2,
            recs[6].singles_2 * 2,
            recs[6].coincidences * 2,
            0,
        );
        recs[6].acquisition_s = 2.0;
        let est = tomo_linear(&recs).unwrap();
        assert!(max_abs(&(est - rho.matrix())) < 1e-5);
        assert!((est.trace().re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_totals_and_missing_records() {
        let recs: Vec<CountRecord> = TomographySettingSet::standard()
            .settings
            .iter()
            .map(|s| CountRecord::new(s.label.clone(), 0, 0, 0, 0, 1.0, 0).unwrap())
            .collect();
        assert!(matches!(tomo_linear(&recs), Err(Error::Estimation(_))));
        assert!(matches!(
            tomo_linear(&recs[..15]),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rho = random_state(3);
        let set = TomographySettingSet::standard();
        let f = born_frequencies(&set, &rho);
        let data = LikelihoodData::new(
            &set,
            &f.iter().map(|p| p * 1000.0).collect::<Vec<_>>(),
            &[1.0; 16],
        )
        .unwrap();
        let x = cholesky_params(random_state(4).matrix()).unwrap();
        let (_, g) = data.value_and_gradient(&x);
        for p in 0..16 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[p] += h;
            xm[p] -= h;
            let fd = (data.value_and_gradient(&xp).0 - data.value_and_gradient(&xm).0) / (2.0 * h);
            assert!(
                (fd - g[p]).abs() < 1e-5 * (1.0 + g[p].abs()),
                "param {p}: {fd} vs {}",
                g[p]
            );
        }
    }

    #[test]
    fn cholesky_roundtrip() {
        let rho = random_state(11);
        let x = cholesky_params(rho.matrix()).unwrap();
        assert!(max_abs(&(rho_from_params(&x) - rho.matrix())) < 1e-12);
    }

    #[test]
    fn mle_noiseless_psi_plus() {
        let psi = TwoQubitState::psi_plus();
        let recs = exact_records(&psi, 1e6);
        let (_, est) = reconstruct(&recs).unwrap();
        assert!(fidelity(&est, &psi) > 0.9999);
    }

    #[test]
    fn mle_maximally_mixed_purity() {
        let recs = exact_records(&TwoQubitState::maximally_mixed(), 1e6);
        let (_, est) = reconstruct(&recs).unwrap();
        assert!(est.purity() < 0.26);
    }

    #[test]
    fn mle_recovers_exact_frequencies() {
        for seed in 0..20 {
            let rho = random_state(100 + seed);
            let est = exact_mle(&rho);
            let d = trace_distance(&est, &rho);
            assert!(d < 1e-6, "seed {seed}: {d:e}");
        }
    }

    #[test]
    fn mle_beats_projected_linear() {
        let rho = crate::source::two_photon_state(&crate::source::SourceParams {
            p_white: 0.05,
            ..Default::default()
        })
        .unwrap();
        let set = TomographySettingSet::standard();
        let f = born_frequencies(&set, &rho);
        for seed in 0..10u64 {
            let mut rng = rng_from_seed(seed);
            let counts: Vec<f64> = f
                .iter()
                .map(|p| poisson(&mut rng, 200.0 * p) as f64)
                .collect();
            let data = LikelihoodData::new(&set, &counts, &[1.0; 16]).unwrap();
            let rates: Vec<f64> = counts.clone();
            let lin = linear_inversion(
                &set,
                &normalized_frequencies(&set.settings, &rates).unwrap(),
            )
            .unwrap();
            let proj = TwoQubitState::project_physical(&lin).unwrap();
            let mle = mle_from_data(&data, &lin, &MleOptions::default()).unwrap();
            assert!(data.log_likelihood(mle.matrix()) >= data.log_likelihood(proj.matrix()) - 1e-9);
            assert!(TwoQubitState::from_matrix(*mle.matrix()).is_ok());
        }
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let rho = random_state(9);
        let set = TomographySettingSet::standard();
        let f = born_frequencies(&set, &rho);
        let data = LikelihoodData::new(
            &set,
            &f.iter().map(|p| p * 1e4).collect::<Vec<_>>(),
            &[1.0; 16],
        )
        .unwrap();
        let opts = MleOptions {
            max_evaluations: 3,
            restarts: 0,
            ..MleOptions::default()
        };
        match mle_from_data(&data, &Mat4::identity().scale(0.25), &opts) {
            Err(Error::NotConverged { evaluations, best }) => {
                assert!(evaluations <= 3);
                let tr: f64 = (0..4).map(|i| best[5 * i][0]).sum();
                assert!((tr - 1.0).abs() < 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn mle_output_is_physical(seed in 0u64..1_000_000) {
            let rho = random_state(seed);
            let set = TomographySettingSet::standard();
            let f = born_frequencies(&set, &rho);
            let mut rng = rng_from_seed(seed ^ 0xabc);
            let counts: Vec<f64> = f.iter().map(|p| poisson(&mut rng, 100.0 * p) as f64).collect();
            prop_assume!(counts.iter().sum::<f64>() > 0.0);
            let data = LikelihoodData::new(&set, &counts, &[1.0; 16]).unwrap();
            let lin = linear_inversion(&set, &normalized_frequencies(&set.settings, &counts).unwrap_or(f.clone())).unwrap_or(Mat4::identity().scale(0.25));
            let est = mle_from_data(&data, &lin, &MleOptions::default()).unwrap();
            prop_assert!(est.eigenvalues().iter().all(|e| *e >= -1e-12));
            prop_assert!((est.matrix().trace().re - 1.0).abs() < 1e-10);
        }
    }
}
