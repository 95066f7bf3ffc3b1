//! Scenario, record, report and plot-data files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qmem_core::detection::CountRecord;
use qmem_core::pipeline::{
    CalibrationEntry, Scenario, Stage, StageOutput, StageReport, SCHEMA_VERSION,
};
use qmem_core::qstate::{Mat4, TwoQubitState};
use qmem_core::Error;

use crate::error::{AppError, AppResult};

/// Top-level report file: one entry per simulated stage plus the
/// calibration that produced the scenario, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    #[serde(default)]
    pub calibration: Vec<CalibrationEntry>,
    pub stages: Vec<StageReport>,
}

impl RunReport {
    pub fn new(
        scenario: Scenario,
        calibration: Vec<CalibrationEntry>,
        stages: Vec<StageReport>,
    ) -> AppResult<Self> {
        if stages.is_empty() {
            return Err(Error::Validation("report has no stages".into()).into());
        }
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            scenario,
            calibration,
            stages,
        })
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> AppResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| AppError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| AppError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

/// Parses a scenario and checks every invariant, so a bad file is rejected
/// before anything runs.
pub fn parse_scenario(text: &str) -> AppResult<Scenario> {
    let s: Scenario = serde_json::from_str(text).map_err(|source| AppError::Json {
        path: PathBuf::from("<scenario>"),
        source,
    })?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> AppResult<Scenario> {
    let s: Scenario = read_json(path)?;
    s.validate()?;
    Ok(s)
}

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 3] = [
    (
        "reproduce-paper",
        include_str!("../scenarios/reproduce-paper.json"),
    ),
    ("noiseless", include_str!("../scenarios/noiseless.json")),
    ("classical", include_str!("../scenarios/classical.json")),
];

pub fn bundled_scenario(name: &str) -> AppResult<Scenario> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Configuration(format!("no bundled scenario named '{name}'")))?;
    parse_scenario(text)
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> AppResult<()> {
    write_json(path, scenario)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> AppError + '_ {
    move |source| AppError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_writer(path: &Path) -> AppResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_records(path: &Path, records: &[CountRecord]) -> AppResult<()> {
    let mut w = csv_writer(path)?;
    if records.is_empty() {
        w.write_record([
            "setting_label",
            "singles_1",
            "singles_2",
            "coincidences",
            "triples",
            "acquisition_s",
            "seed",
        ])
        .map_err(csv_err(path))?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Reads and validates a record CSV.
pub fn read_records(path: &Path) -> AppResult<Vec<CountRecord>> {
    let file = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: CountRecord = row.map_err(csv_err(path))?;
        r.validate()?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("{}: no records", path.display())).into());
    }
    Ok(out)
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> AppResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

const BASIS: [&str; 4] = ["HH", "HV", "VH", "VV"];

/// Real or imaginary part of a density matrix as a labelled 4x4 grid.
pub fn write_matrix_part(path: &Path, m: &Mat4, imaginary: bool) -> AppResult<()> {
    write_rows(
        path,
        &["row", "HH", "HV", "VH", "VV"],
        (0..4).map(|i| {
            std::iter::once(BASIS[i].to_string())
                .chain((0..4).map(move |j| {
                    let z = m[(i, j)];
                    format!("{}", if imaginary { z.im } else { z.re })
                }))
                .collect::<Vec<_>>()
        }),
    )
}

fn write_state(dir: &Path, stem: &str, m: &Mat4) -> AppResult<Vec<PathBuf>> {
    let re = dir.join(format!("{stem}_real.csv"));
    let im = dir.join(format!("{stem}_imag.csv"));
    write_matrix_part(&re, m, false)?;
    write_matrix_part(&im, m, true)?;
    Ok(vec![re, im])
}

fn write_stage(dir: &Path, out: &StageOutput, with_input: bool) -> AppResult<Vec<PathBuf>> {
    let name = out.report.stage.name();
    let mut files = Vec::new();
    let records = dir.join(format!("records_{name}.csv"));
    write_records(&records, &out.data.records())?;
    files.push(records);
    if let (true, Some(input)) = (with_input, &out.input) {
        let p = dir.join(format!("records_{name}_input.csv"));
        write_records(&p, &input.records())?;
        files.push(p);
    }

    let mle = out.report.rho_mle.to_matrix();
    let json = dir.join(format!("rho_{name}_mle.json"));
    write_json(&json, &TwoQubitState::from_matrix(mle)?)?;
    files.push(json);
    files.extend(write_state(dir, &format!("rho_{name}_mle"), &mle)?);
    files.extend(write_state(
        dir,
        &format!("rho_{name}_linear"),
        &out.report.rho_linear.to_matrix(),
    )?);

    let g2 = &out.plots.g2;
    let p = dir.join(format!("g2_{name}.csv"));
    write_rows(
        &p,
        &["schema_version", "tau_ns", "g2", "counts", "zero_count"],
        (0..g2.tau_ns.len()).map(|i| {
            vec![
                SCHEMA_VERSION.to_string(),
                g2.tau_ns[i].to_string(),
                g2.g2[i].to_string(),
                g2.counts[i].to_string(),
                g2.zero_count[i].to_string(),
            ]
        }),
    )?;
    files.push(p);

    let p = dir.join(format!("fringe_{name}.csv"));
    let rows: Vec<Vec<String>> = [("A", &out.plots.fringe), ("H", &out.plots.fringe_h)]
        .into_iter()
        .flat_map(|(b, pts)| {
            pts.iter().map(move |f| {
                vec![
                    SCHEMA_VERSION.to_string(),
                    b.to_string(),
                    f.theta.to_string(),
                    f.counts.to_string(),
                    f.expected.to_string(),
                ]
            })
        })
        .collect();
    write_rows(
        &p,
        &[
            "schema_version",
            "signal1_basis",
            "theta_rad",
            "coincidences",
            "expected",
        ],
        rows,
    )?;
    files.push(p);
    Ok(files)
}

/// Writes the full file set for a run into `dir` (created if needed) and
/// returns the paths written.
pub fn emit(dir: &Path, report: &RunReport, outputs: &[StageOutput]) -> AppResult<Vec<PathBuf>> {
    if outputs.is_empty() || report.stages.is_empty() {
        return Err(Error::Validation("nothing to emit: report has no stages".into()).into());
    }
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let mut files = Vec::new();
    let p = dir.join("report.json");
    write_json(&p, report)?;
    files.push(p);

    let has_pre = outputs.iter().any(|o| o.report.stage == Stage::PreStorage);
    for out in outputs {
        files.extend(write_stage(dir, out, !has_pre)?);
    }

    let plots = &outputs[0].plots;
    let p = dir.join("eit_spectrum.csv");
    write_eit(&p, &plots.eit)?;
    files.push(p);
    let p = dir.join("efficiency.csv");
    write_rows(
        &p,
        &["schema_version", "storage_ns", "efficiency", "g2_peak"],
        plots.efficiency.iter().map(|e| {
            vec![
                SCHEMA_VERSION.to_string(),
                e.storage_ns.to_string(),
                e.efficiency.to_string(),
                e.g2_peak.to_string(),
            ]
        }),
    )?;
    files.push(p);
    Ok(files)
}

pub fn write_eit(path: &Path, points: &[qmem_core::pipeline::EitPoint]) -> AppResult<()> {
    write_rows(
        path,
        &[
            "schema_version",
            "detuning_mhz",
            "transmission",
            "background",
        ],
        points.iter().map(|e| {
            vec![
                SCHEMA_VERSION.to_string(),
                e.detuning_mhz.to_string(),
                e.transmission.to_string(),
                e.background.to_string(),
            ]
        }),
    )
}
