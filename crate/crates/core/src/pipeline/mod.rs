//! Scenario-driven orchestration: calibration, simulation and analysis.

pub mod calibrate;
pub mod experiment;
pub mod scenario;

pub use calibrate::{calibrate, Calibration, CalibrationEntry, CalibrationTargets};
pub use experiment::{
    analyze, efficiency_curve, eit_spectrum, expected_figures, memory_efficiency, run_experiment,
    simulate_dataset, DataSet, EfficiencyPoint, EitPoint, FringePoint, PlotData, Sequential, Stage,
    StageModel, StageOutput, StageReport, TrialRunner,
};
pub use scenario::{AttenuatorChoice, Scenario, SCHEMA_VERSION};
