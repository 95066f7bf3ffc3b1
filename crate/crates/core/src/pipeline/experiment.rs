//! Source -> plate -> memory -> detectors -> estimators, for one stage.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::detection::{
    alpha_from_records, centred_tau_grid, g2_histogram, sample_counts, sample_heralded,
    CountRecord, CountingModel, G2Histogram, MeasurementSetting, Rates, SettingProbabilities,
    Window,
};
use crate::error::{Error, Result};
use crate::estimators::chsh::{
    chsh_e, chsh_from_records, chsh_s, chsh_settings, ChshValue, PortCounts, CLASSICAL_BOUND,
};
use crate::estimators::correlation::{cauchy_schwarz_r, is_nonclassical};
use crate::estimators::montecarlo::{resample, summarize};
use crate::estimators::tomography::{
    linear_inversion, normalized_frequencies, tomo_linear, tomo_mle, TomographySettingSet,
};
use crate::estimators::visibility::{fringe_points, fringe_settings, visibility_fit, FringeFit};
use crate::interferometer::apply_attenuator;
use crate::memory::{apply_memory, background_transmission, eit_transmission, storage_efficiency};
use crate::pipeline::scenario::{Scenario, StageAcquisition, SCHEMA_VERSION};
use crate::qstate::{fidelity, Mat4, PolarizationKet, TwoQubitState, C64};
use crate::rng::derive_path;
use crate::source::{
    symmetric_grid, two_photon_state, wavepacket_spectrum, SourceParams, SpectralDensity,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Stage {
    PreStorage,
    PostStorage,
}

impl Stage {
    fn code(self) -> u64 {
        match self {
            Stage::PreStorage => 0,
            Stage::PostStorage => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::PreStorage => "pre_storage",
            Stage::PostStorage => "post_storage",
        }
    }
}

const KIND_TOMOGRAPHY: u64 = 0;
const KIND_CHSH: u64 = 1;
const KIND_FRINGE: u64 = 2;
const KIND_FRINGE_H: u64 = 3;
const KIND_ALPHA: u64 = 4;
const KIND_G2: u64 = 5;
const KIND_MC: u64 = 6;

pub const FRINGE_PREFIX: &str = "fringe";
pub const FRINGE_H_PREFIX: &str = "fringe_h";

/// Gaussian Signal-2 spectrum on a grid wide enough for the overlap integral.
pub fn signal2_spectrum(source: &SourceParams) -> Result<SpectralDensity> {
    let f = source.s2_spectral_fwhm;
    wavepacket_spectrum(f, &symmetric_grid(3.0 * f, 2001))
}

/// Retrieval efficiency after `t_storage` ns.
pub fn memory_efficiency(scenario: &Scenario, t_storage: f64) -> Result<f64> {
    let spectrum = signal2_spectrum(&scenario.source)?;
    storage_efficiency(&spectrum, &scenario.eit, &scenario.decay, t_storage)
}

/// Physical state and counting model of one stage.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub stage: Stage,
    pub source_state: TwoQubitState,
    /// State of the detected pair (after the plate and, post storage, the memory).
    pub state: TwoQubitState,
    pub counting: CountingModel,
}

impl StageModel {
    pub fn build(scenario: &Scenario, stage: Stage) -> Result<Self> {
        scenario.validate()?;
        let source_state = two_photon_state(&scenario.source)?;
        let plate = scenario.attenuator.resolve(&scenario.source)?;
        let (filtered, success) = apply_attenuator(&source_state, &plate)?;
        let (state, eta, background) = match stage {
            Stage::PreStorage => (filtered, 1.0, 0.0),
            Stage::PostStorage => {
                let eta = memory_efficiency(scenario, scenario.timing.storage_time)?;
                let (s, _) = apply_memory(&filtered, eta, &scenario.mem_noise)?;
                (s, eta, scenario.mem_noise.background_flux)
            }
        };
        let counting = CountingModel {
            pair_prob: scenario.source.pair_prob,
            losses: scenario.losses,
            detectors: scenario.detectors,
            timing: scenario.timing,
            memory_eta: eta,
            filter_success: success,
            memory_background: background,
            pair_sigma_ns: scenario.pair_sigma_ns(),
        };
        counting.validate()?;
        Ok(StageModel {
            stage,
            source_state,
            state,
            counting,
        })
    }

    /// Analyzer probabilities; Signal-1 singles do not depend on whether
    /// its partner passed the plate, so they follow the source marginal.
    pub fn probabilities(&self, setting: &MeasurementSetting) -> Result<SettingProbabilities> {
        let mut p = SettingProbabilities::for_setting(&self.state, setting)?;
        let a = setting.arm1_projector.vector();
        p.arm1 = (a.adjoint() * self.source_state.signal1_marginal() * a)[(0, 0)]
            .re
            .clamp(0.0, 1.0);
        Ok(p)
    }

    pub fn rates(&self, setting: &MeasurementSetting) -> Result<Rates> {
        Ok(self
            .counting
            .rates(&self.probabilities(setting)?, Window::Analysis))
    }

    pub fn g2_delay(&self, scenario: &Scenario) -> f64 {
        match self.stage {
            Stage::PreStorage => scenario.analysis.g2_delay_pre_ns,
            Stage::PostStorage => scenario.analysis.g2_delay_post_ns,
        }
    }

    pub fn expected_g2_peak(&self, scenario: &Scenario) -> f64 {
        self.counting
            .g2_events(1.0, self.g2_delay(scenario))
            .expected_peak(scenario.analysis.g2_bin_ns)
    }
}

pub fn tomography_settings() -> Vec<MeasurementSetting> {
    TomographySettingSet::standard().settings
}

pub fn fringe_a_settings(scenario: &Scenario) -> Vec<MeasurementSetting> {
    fringe_settings(
        FRINGE_PREFIX,
        PolarizationKet::a(),
        &scenario.analysis.fringe_angles,
    )
}

pub fn fringe_h_settings(scenario: &Scenario) -> Vec<MeasurementSetting> {
    fringe_settings(
        FRINGE_H_PREFIX,
        PolarizationKet::h(),
        &scenario.analysis.fringe_angles,
    )
}

/// Simulated raw data of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub stage: Stage,
    pub tomography: Vec<CountRecord>,
    pub chsh: Vec<CountRecord>,
    pub fringe: Vec<CountRecord>,
    pub fringe_h: Vec<CountRecord>,
    pub alpha: Vec<CountRecord>,
    pub g2: G2Histogram,
}

impl DataSet {
    pub fn records(&self) -> Vec<CountRecord> {
        let mut out = Vec::new();
        for group in [
            &self.tomography,
            &self.chsh,
            &self.fringe,
            &self.fringe_h,
            &self.alpha,
        ] {
            out.extend(group.iter().cloned());
        }
        out
    }
}

fn acquisition(scenario: &Scenario, stage: Stage) -> StageAcquisition {
    match stage {
        Stage::PreStorage => scenario.acquisition.pre_storage,
        Stage::PostStorage => scenario.acquisition.post_storage,
    }
}

fn sample_group(
    model: &StageModel,
    settings: &[MeasurementSetting],
    acq: f64,
    master: u64,
    kind: u64,
) -> Result<Vec<CountRecord>> {
    settings
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let seed = derive_path(master, &[model.stage.code(), kind, k as u64]);
            sample_counts(&s.label, &model.rates(s)?, acq, seed)
        })
        .collect()
}

/// Draws every record of a stage. Seeds depend only on the master seed, the
/// stage and the setting, so a stage is reproduced exactly wherever it is run.
pub fn simulate_dataset(scenario: &Scenario, stage: Stage) -> Result<DataSet> {
    let model = StageModel::build(scenario, stage)?;
    let acq = acquisition(scenario, stage);
    let m = scenario.master_seed;
    let tomography = sample_group(
        &model,
        &tomography_settings(),
        acq.tomography,
        m,
        KIND_TOMOGRAPHY,
    )?;
    let chsh = sample_group(
        &model,
        &chsh_settings(&scenario.analysis.chsh_angles),
        acq.chsh,
        m,
        KIND_CHSH,
    )?;
    let fringe = sample_group(
        &model,
        &fringe_a_settings(scenario),
        acq.fringe,
        m,
        KIND_FRINGE,
    )?;
    let fringe_h = sample_group(
        &model,
        &fringe_h_settings(scenario),
        acq.fringe,
        m,
        KIND_FRINGE_H,
    )?;
    let (a12, a13) = sample_heralded(
        &model.counting,
        acq.alpha,
        derive_path(m, &[stage.code(), KIND_ALPHA, 0]),
    )?;
    let delay = model.g2_delay(scenario);
    let grid = centred_tau_grid(
        delay,
        scenario.analysis.g2_half_span_ns,
        scenario.analysis.g2_bin_ns,
    );
    let g2 = g2_histogram(
        &model.counting.g2_events(acq.g2, delay),
        &grid,
        derive_path(m, &[stage.code(), KIND_G2, 0]),
    )?;
    Ok(DataSet {
        stage,
        tomography,
        chsh,
        fringe,
        fringe_h,
        alpha: alloc::vec![a12, a13],
        g2,
    })
}

/// Real and imaginary parts of a density matrix, row-major in the
/// `HH, HV, VH, VV` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct DensityMatrix {
    pub real: [[f64; 4]; 4],
    pub imag: [[f64; 4]; 4],
}

impl DensityMatrix {
    pub fn from_matrix(m: &Mat4) -> Self {
        DensityMatrix {
            real: core::array::from_fn(|i| core::array::from_fn(|j| m[(i, j)].re)),
            imag: core::array::from_fn(|i| core::array::from_fn(|j| m[(i, j)].im)),
        }
    }

    pub fn to_matrix(&self) -> Mat4 {
        Mat4::from_fn(|i, j| C64::new(self.real[i][j], self.imag[i][j]))
    }
}

/// Point estimate with an optional Monte-Carlo standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct ReportedValue {
    pub value: f64,
    pub sigma: Option<f64>,
    pub n_resamples: usize,
}

impl ReportedValue {
    pub fn bare(value: f64) -> Self {
        ReportedValue {
            value,
            sigma: None,
            n_resamples: 0,
        }
    }
}

/// Parameters in force for a run, after calibration and plate resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct ResolvedParameters {
    pub tan2_eta: f64,
    pub attenuator_t_h: f64,
    pub filter_success: f64,
    pub rabi_coupling: f64,
    pub tau_mem: f64,
    pub eta_peak: f64,
    pub memory_efficiency: f64,
    pub pair_prob: f64,
    pub stray_light_s1: f64,
    pub stray_light_s2: f64,
    pub memory_background: f64,
    pub p_white: f64,
    pub p_depol: f64,
}

impl ResolvedParameters {
    pub fn of(scenario: &Scenario, model: &StageModel) -> Result<Self> {
        Ok(ResolvedParameters {
            tan2_eta: scenario.source.tan2_eta(),
            attenuator_t_h: scenario.attenuator.resolve(&scenario.source)?.t_h,
            filter_success: model.counting.filter_success,
            rabi_coupling: scenario.eit.rabi_coupling,
            tau_mem: scenario.decay.tau_mem,
            eta_peak: scenario.decay.eta_peak,
            memory_efficiency: model.counting.memory_eta,
            pair_prob: scenario.source.pair_prob,
            stray_light_s1: scenario.detectors[0].stray_light_rate,
            stray_light_s2: scenario.detectors[1].stray_light_rate,
            memory_background: model.counting.memory_background,
            p_white: scenario.source.p_white,
            p_depol: scenario.mem_noise.p_depol,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct Nonclassicality {
    pub chsh: bool,
    pub visibility: bool,
    pub cauchy_schwarz: bool,
    pub single_photon: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields)
)]
pub struct StageReport {
    pub schema_version: u32,
    pub scenario: String,
    pub stage: Stage,
    pub master_seed: u64,
    pub parameters: ResolvedParameters,
    pub rho_linear: DensityMatrix,
    pub rho_mle: DensityMatrix,
    /// Pre-storage reconstruction used as the reference for `fidelity`
    /// after storage.
    pub rho_input_mle: Option<DensityMatrix>,
    /// Before storage: against the ideal `(|HV> + |VH>)/sqrt 2`. After
    /// storage: against the reconstructed input state.
    pub fidelity: ReportedValue,
    pub fidelity_to_ideal: f64,
    pub chsh_s: ReportedValue,
    pub chsh: ChshValue,
    pub visibility: ReportedValue,
    pub fringe: FringeFit,
    pub fringe_h: Option<FringeFit>,
    pub g2_peak: f64,
    pub g2_peak_tau_ns: f64,
    pub cauchy_schwarz_r: ReportedValue,
    pub alpha: f64,
    pub nonclassical: Nonclassicality,
}

/// Runs Monte-Carlo trials; the std companion supplies a parallel runner.
pub trait TrialRunner {
    fn run(&self, n: usize, trial: &(dyn Fn(usize) -> Result<f64> + Sync)) -> Vec<Result<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl TrialRunner for Sequential {
    fn run(&self, n: usize, trial: &(dyn Fn(usize) -> Result<f64> + Sync)) -> Vec<Result<f64>> {
        (0..n).map(trial).collect()
    }
}

fn with_error(
    value: f64,
    n: usize,
    runner: &dyn TrialRunner,
    trial: &(dyn Fn(usize) -> Result<f64> + Sync),
) -> Result<ReportedValue> {
    if n == 0 {
        return Ok(ReportedValue::bare(value));
    }
    let est = summarize(&runner.run(n, trial))?;
    Ok(ReportedValue {
        value,
        sigma: Some(est.sigma),
        n_resamples: est.n_resamples,
    })
}

fn reconstruct(records: &[CountRecord]) -> Result<(Mat4, TwoQubitState)> {
    let lin = tomo_linear(records)?;
    let mle = tomo_mle(records, &lin)?;
    Ok((lin, mle))
}

/// Runs every estimator on a stage's data. After storage `input` must hold
/// the pre-storage data set, which provides the reference state.
pub fn analyze(
    scenario: &Scenario,
    data: &DataSet,
    input: Option<&DataSet>,
    runner: &dyn TrialRunner,
) -> Result<StageReport> {
    let stage = data.stage;
    let model = StageModel::build(scenario, stage)?;
    let n_mc = scenario.analysis.mc_resamples;
    let mc_seed = |q: u64| derive_path(scenario.master_seed, &[stage.code(), KIND_MC, q]);
    let ideal = TwoQubitState::psi_plus();

    let (lin, mle) = reconstruct(&data.tomography)?;
    let fidelity_to_ideal = fidelity(&mle, &ideal);
    let (fid, rho_input) = match stage {
        Stage::PreStorage => {
            let seed = mc_seed(0);
            let trial = |k: usize| -> Result<f64> {
                let (_, m) = reconstruct(&resample(&data.tomography, seed, k))?;
                Ok(fidelity(&m, &ideal))
            };
            (with_error(fidelity_to_ideal, n_mc, runner, &trial)?, None)
        }
        Stage::PostStorage => {
            let input = input.ok_or_else(|| {
                Error::Configuration("post-storage analysis needs the pre-storage data set".into())
            })?;
            let (_, rho_in) = reconstruct(&input.tomography)?;
            let f2 = fidelity(&mle, &rho_in);
            let (s_out, s_in) = (mc_seed(0), mc_seed(1));
            let trial = |k: usize| -> Result<f64> {
                let (_, out) = reconstruct(&resample(&data.tomography, s_out, k))?;
                let (_, inp) = reconstruct(&resample(&input.tomography, s_in, k))?;
                Ok(fidelity(&out, &inp))
            };
            (
                with_error(f2, n_mc, runner, &trial)?,
                Some(DensityMatrix::from_matrix(rho_in.matrix())),
            )
        }
    };

    let chsh = chsh_from_records(&data.chsh)?;
    let seed = mc_seed(2);
    let chsh_trial =
        |k: usize| -> Result<f64> { Ok(chsh_from_records(&resample(&data.chsh, seed, k))?.s) };
    let chsh_s_rep = with_error(chsh.s, n_mc, runner, &chsh_trial)?;

    let thetas = &scenario.analysis.fringe_angles;
    let weighting = scenario.analysis.fringe_weighting;
    let fringe = visibility_fit(
        &fringe_points(&data.fringe, FRINGE_PREFIX, thetas)?,
        weighting,
    )?;
    let seed = mc_seed(3);
    let vis_trial = |k: usize| -> Result<f64> {
        let pts = fringe_points(&resample(&data.fringe, seed, k), FRINGE_PREFIX, thetas)?;
        Ok(visibility_fit(&pts, weighting)?.visibility)
    };
    let visibility = with_error(fringe.visibility, n_mc, runner, &vis_trial)?;
    let fringe_h = fringe_points(&data.fringe_h, FRINGE_H_PREFIX, thetas)
        .and_then(|p| visibility_fit(&p, weighting))
        .ok();

    // Cross-correlation at the nominal delay; its Poisson error carries to R.
    let delay = model.g2_delay(scenario);
    let k = nearest_bin(&data.g2.tau_ns, delay);
    let g12 = data.g2.g2[k];
    let g22 = match stage {
        Stage::PreStorage => scenario.analysis.g22_pre,
        Stage::PostStorage => scenario.analysis.g22_post,
    };
    let r = cauchy_schwarz_r(g12, scenario.analysis.g11, g22)?;
    let bin_counts = data.g2.counts[k] as f64;
    let r_sigma = if bin_counts > 0.0 {
        Some(2.0 * r / bin_counts.sqrt())
    } else {
        None
    };
    let alpha = alpha_from_records(&data.alpha[0], &data.alpha[1])?;

    Ok(StageReport {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        stage,
        master_seed: scenario.master_seed,
        parameters: ResolvedParameters::of(scenario, &model)?,
        rho_linear: DensityMatrix::from_matrix(&lin),
        rho_mle: DensityMatrix::from_matrix(mle.matrix()),
        rho_input_mle: rho_input,
        fidelity: fid,
        fidelity_to_ideal,
        chsh_s: chsh_s_rep,
        chsh,
        visibility,
        fringe,
        fringe_h,
        g2_peak: g12,
        g2_peak_tau_ns: data.g2.tau_ns[k],
        cauchy_schwarz_r: ReportedValue {
            value: r,
            sigma: r_sigma,
            n_resamples: 0,
        },
        alpha,
        nonclassical: Nonclassicality {
            chsh: chsh.s > CLASSICAL_BOUND,
            visibility: fringe.nonclassical,
            cauchy_schwarz: is_nonclassical(r),
            single_photon: alpha < crate::detection::ALPHA_SINGLE_PHOTON_THRESHOLD,
        },
    })
}

fn nearest_bin(tau: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, x) in tau.iter().enumerate() {
        if (x - t).abs() < (tau[best] - t).abs() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EitPoint {
    pub detuning_mhz: f64,
    pub transmission: f64,
    pub background: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FringePoint {
    pub theta: f64,
    pub counts: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EfficiencyPoint {
    pub storage_ns: f64,
    pub efficiency: f64,
    pub g2_peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlotData {
    pub g2: G2Histogram,
    pub eit: Vec<EitPoint>,
    pub fringe: Vec<FringePoint>,
    pub fringe_h: Vec<FringePoint>,
    pub efficiency: Vec<EfficiencyPoint>,
}

pub fn eit_spectrum(scenario: &Scenario) -> Result<Vec<EitPoint>> {
    let t = eit_transmission(&scenario.eit)?;
    let b = background_transmission(&scenario.eit)?;
    Ok(t.iter()
        .zip(&b)
        .map(|((d, t), (_, b))| EitPoint {
            detuning_mhz: *d,
            transmission: *t,
            background: *b,
        })
        .collect())
}

/// Efficiency and expected peak cross-correlation versus storage time.
pub fn efficiency_curve(scenario: &Scenario, times: &[f64]) -> Result<Vec<EfficiencyPoint>> {
    let mut model = StageModel::build(scenario, Stage::PostStorage)?;
    let spectrum = signal2_spectrum(&scenario.source)?;
    times
        .iter()
        .map(|&t| {
            let eta = storage_efficiency(&spectrum, &scenario.eit, &scenario.decay, t)?;
            model.counting.memory_eta = eta;
            Ok(EfficiencyPoint {
                storage_ns: t,
                efficiency: eta,
                g2_peak: model.expected_g2_peak(scenario),
            })
        })
        .collect()
}

fn fringe_plot(
    model: &StageModel,
    settings: &[MeasurementSetting],
    records: &[CountRecord],
    thetas: &[f64],
) -> Result<Vec<FringePoint>> {
    settings
        .iter()
        .zip(records)
        .zip(thetas)
        .map(|((s, r), t)| {
            Ok(FringePoint {
                theta: *t,
                counts: r.coincidences,
                expected: model.rates(s)?.r12 * r.acquisition_s,
            })
        })
        .collect()
}

pub fn plot_data(scenario: &Scenario, data: &DataSet) -> Result<PlotData> {
    let model = StageModel::build(scenario, data.stage)?;
    let thetas = &scenario.analysis.fringe_angles;
    let times: Vec<f64> = (0..=32)
        .map(|k| 25.0 * k as f64)
        .filter(|t| *t < scenario.timing.fiber_delay)
        .collect();
    Ok(PlotData {
        g2: data.g2.clone(),
        eit: eit_spectrum(scenario)?,
        fringe: fringe_plot(&model, &fringe_a_settings(scenario), &data.fringe, thetas)?,
        fringe_h: fringe_plot(&model, &fringe_h_settings(scenario), &data.fringe_h, thetas)?,
        efficiency: efficiency_curve(scenario, &times)?,
    })
}

/// Everything produced by one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub report: StageReport,
    pub data: DataSet,
    pub input: Option<DataSet>,
    pub plots: PlotData,
}

fn stage_context(stage: Stage, e: Error) -> Error {
    let ctx = |m: String| alloc::format!("{}: {m}", stage.name());
    match e {
        Error::Validation(m) => Error::Validation(ctx(m)),
        Error::Configuration(m) => Error::Configuration(ctx(m)),
        Error::Estimation(m) => Error::Estimation(ctx(m)),
        Error::Calibration { parameter, reason } => Error::Calibration {
            parameter,
            reason: ctx(reason),
        },
        other => other,
    }
}

/// Simulates and analyzes one stage. After storage the pre-storage data are
/// regenerated with their own seeds to serve as the reference state.
pub fn run_experiment(
    scenario: &Scenario,
    stage: Stage,
    runner: &dyn TrialRunner,
) -> Result<StageOutput> {
    let go = || -> Result<StageOutput> {
        let scenario = scenario.resolved()?;
        let data = simulate_dataset(&scenario, stage)?;
        let input = match stage {
            Stage::PreStorage => None,
            Stage::PostStorage => Some(simulate_dataset(&scenario, Stage::PreStorage)?),
        };
        let report = analyze(&scenario, &data, input.as_ref(), runner)?;
        let plots = plot_data(&scenario, &data)?;
        Ok(StageOutput {
            report,
            data,
            input,
            plots,
        })
    };
    go().map_err(|e| stage_context(stage, e))
}

/// Noise-free figures of merit of a stage, from expected rates.
#[derive(Debug, Clone)]
pub struct ExpectedFigures {
    /// Normalized coincidence operator seen by tomography.
    pub effective_state: TwoQubitState,
    pub fidelity: f64,
    pub chsh: ChshValue,
    pub visibility: f64,
    pub g2_peak: f64,
    pub alpha: f64,
}

pub fn expected_figures(scenario: &Scenario, stage: Stage) -> Result<ExpectedFigures> {
    let model = StageModel::build(scenario, stage)?;
    let set = TomographySettingSet::standard();
    let rates: Vec<f64> = set
        .settings
        .iter()
        .map(|s| Ok(model.rates(s)?.r12))
        .collect::<Result<_>>()?;
    let freqs = normalized_frequencies(&set.settings, &rates)?;
    let effective_state = TwoQubitState::project_physical(&linear_inversion(&set, &freqs)?)?;
    let fidelity = crate::qstate::fidelity(&effective_state, &TwoQubitState::psi_plus());

    let settings = chsh_settings(&scenario.analysis.chsh_angles);
    let mut e = [[0.0; 2]; 2];
    for (i, row) in e.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let base = 4 * (2 * i + j);
            let r = |k: usize| -> Result<f64> { Ok(model.rates(&settings[base + k])?.r12) };
            *v = chsh_e(&PortCounts {
                pp: r(0)?,
                pm: r(1)?,
                mp: r(2)?,
                mm: r(3)?,
            })?;
        }
    }
    let chsh = chsh_s(&e)?;

    let pts: Vec<(f64, f64)> = fringe_a_settings(scenario)
        .iter()
        .zip(&scenario.analysis.fringe_angles)
        .map(|(s, t)| Ok((*t, model.rates(s)?.r12)))
        .collect::<Result<_>>()?;
    let visibility = visibility_fit(&pts, scenario.analysis.fringe_weighting)?.visibility;

    Ok(ExpectedFigures {
        effective_state,
        fidelity,
        chsh,
        visibility,
        g2_peak: model.expected_g2_peak(scenario),
        alpha: model.counting.heralded().alpha()?,
    })
}
