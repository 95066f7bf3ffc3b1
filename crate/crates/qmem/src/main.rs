use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qmem::io::{self, RunReport};
use qmem::{AppError, AppResult, Parallel};
use qmem_core::estimators::chsh::{analytic_s, chsh_from_records};
use qmem_core::estimators::montecarlo::EstimateWithError;
use qmem_core::estimators::tomography::reconstruct;
use qmem_core::memory::transparency_fwhm;
use qmem_core::pipeline::{
    calibrate, eit_spectrum, expected_figures, memory_efficiency, run_experiment,
    CalibrationTargets, Scenario, Stage,
};
use qmem_core::qstate::{fidelity, TwoQubitState};

#[derive(Parser)]
#[command(
    name = "qmem",
    version,
    about = "Simulate and analyze polarization entanglement stored in an EIT memory"
)]
struct Cli {
    /// Overrides the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario JSON, or the name of a bundled scenario (reproduce-paper,
    /// noiseless, classical). Uncalibrated defaults when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Pre,
    Post,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or both stages and write records, report and plot data.
    Simulate {
        #[arg(long, value_enum, default_value = "both")]
        stage: StageArg,
    },
    /// Fit free parameters to targets and write the calibrated scenario.
    Calibrate {
        /// Targets JSON; the published 100 ns storage figures when omitted.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Reconstruct a state from a tomography record CSV.
    Tomo {
        #[arg(long)]
        records: PathBuf,
        /// Monte-Carlo resamples for the fidelity error (0 disables).
        #[arg(long, default_value_t = 200)]
        resamples: usize,
    },
    /// CHSH S from a record CSV, or the noise-free expectation of the scenario.
    Chsh {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        resamples: usize,
    },
    /// Write the EIT transmission spectrum and print window and efficiency.
    Eit,
    /// Print a summary of a report file.
    Report {
        /// Defaults to `<out>/report.json`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> AppResult<Scenario> {
    let mut s = match &cli.scenario {
        Some(p) if !p.exists() && io::BUNDLED.iter().any(|(n, _)| p.as_os_str() == *n) => {
            io::bundled_scenario(&p.to_string_lossy())?
        }
        Some(p) => io::load_scenario(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        s.master_seed = seed;
    }
    Ok(s)
}

fn mkdir(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| AppError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn show(label: &str, e: &EstimateWithError, value: f64) {
    println!(
        "{label:<12} {value:.4} ± {:.4}  ({} resamples)",
        e.sigma, e.n_resamples
    );
}

fn simulate(cli: &Cli, stage: StageArg) -> AppResult<()> {
    let scenario = load(cli)?;
    let stages: &[Stage] = match stage {
        StageArg::Pre => &[Stage::PreStorage],
        StageArg::Post => &[Stage::PostStorage],
        StageArg::Both => &[Stage::PreStorage, Stage::PostStorage],
    };
    let outputs = stages
        .iter()
        .map(|s| run_experiment(&scenario, *s, &Parallel))
        .collect::<Result<Vec<_>, _>>()?;
    let report = RunReport::new(
        scenario,
        vec![],
        outputs.iter().map(|o| o.report.clone()).collect(),
    )?;
    let files = io::emit(&cli.out, &report, &outputs)?;
    print_report(&report);
    println!("wrote {} files to {}", files.len(), cli.out.display());
    Ok(())
}

fn run_calibration(cli: &Cli, targets: Option<&Path>) -> AppResult<()> {
    let scenario = load(cli)?;
    let targets = match targets {
        Some(p) => io::read_json(p)?,
        None => CalibrationTargets::published(),
    };
    let cal = calibrate(&scenario, &targets)?;
    mkdir(&cli.out)?;
    io::save_scenario(&cli.out.join("scenario.json"), &cal.scenario)?;
    io::write_json(&cli.out.join("calibration.json"), &cal.entries)?;
    println!(
        "{:<20} {:>14} {:<16} {:>10} {:>10} {:>9}",
        "parameter", "value", "quantity", "target", "achieved", "residual"
    );
    for e in &cal.entries {
        println!(
            "{:<20} {:>14.6e} {:<16} {:>10.4} {:>10.4} {:>8.2}%{}",
            e.parameter,
            e.value,
            e.quantity,
            e.target,
            e.achieved,
            100.0 * e.relative_residual,
            if e.flagged { "  FLAGGED" } else { "" }
        );
    }
    println!("wrote {}", cli.out.join("scenario.json").display());
    Ok(())
}

fn tomo(cli: &Cli, records: &Path, resamples: usize) -> AppResult<()> {
    let recs = io::read_records(records)?;
    let (lin, mle) = reconstruct(&recs)?;
    let ideal = TwoQubitState::psi_plus();
    let f = fidelity(&mle, &ideal);
    mkdir(&cli.out)?;
    io::write_json(&cli.out.join("rho_mle.json"), &mle)?;
    io::write_matrix_part(&cli.out.join("rho_mle_real.csv"), mle.matrix(), false)?;
    io::write_matrix_part(&cli.out.join("rho_mle_imag.csv"), mle.matrix(), true)?;
    io::write_matrix_part(&cli.out.join("rho_linear_real.csv"), &lin, false)?;
    io::write_matrix_part(&cli.out.join("rho_linear_imag.csv"), &lin, true)?;
    if resamples > 0 {
        let seed = cli.seed.unwrap_or(0);
        let est = qmem::runner::mc_error(
            |r| Ok(fidelity(&reconstruct(r)?.1, &ideal)),
            &recs,
            resamples,
            seed,
        )?;
        show("fidelity", &est, f);
    } else {
        println!("{:<12} {f:.4}", "fidelity");
    }
    println!("{:<12} {:.4}", "purity", mle.purity());
    Ok(())
}

fn chsh(cli: &Cli, records: Option<&Path>, resamples: usize) -> AppResult<()> {
    match records {
        Some(p) => {
            let recs = io::read_records(p)?;
            let v = chsh_from_records(&recs)?;
            if resamples > 0 {
                let est = qmem::runner::mc_error(
                    |r| Ok(chsh_from_records(r)?.s),
                    &recs,
                    resamples,
                    cli.seed.unwrap_or(0),
                )?;
                show("S", &est, v.s);
            } else {
                println!("{:<12} {:.4}", "S", v.s);
            }
            println!("{:<12} {:.4}", "S literal", v.literal);
        }
        None => {
            let scenario = load(cli)?.resolved()?;
            let ideal = analytic_s(&TwoQubitState::psi_plus(), &scenario.analysis.chsh_angles)?;
            println!("{:<12} {:.6}", "ideal", ideal.s);
            for stage in [Stage::PreStorage, Stage::PostStorage] {
                let f = expected_figures(&scenario, stage)?;
                println!(
                    "{:<12} {:.6}  (literal {:.6})",
                    stage.name(),
                    f.chsh.s,
                    f.chsh.literal
                );
            }
        }
    }
    Ok(())
}

fn eit(cli: &Cli) -> AppResult<()> {
    let scenario = load(cli)?.resolved()?;
    mkdir(&cli.out)?;
    let path = cli.out.join("eit_spectrum.csv");
    io::write_eit(&path, &eit_spectrum(&scenario)?)?;
    println!(
        "{:<24} {:.3} MHz",
        "transparency FWHM",
        transparency_fwhm(&scenario.eit)?
    );
    println!(
        "{:<24} {:.4}",
        format!("efficiency at {} ns", scenario.timing.storage_time),
        memory_efficiency(&scenario, scenario.timing.storage_time)?
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn fmt_value(v: &qmem_core::pipeline::experiment::ReportedValue) -> String {
    match v.sigma {
        Some(s) => format!("{:.4} ± {:.4}", v.value, s),
        None => format!("{:.4}", v.value),
    }
}

fn print_report(report: &RunReport) {
    println!(
        "scenario '{}' (seed {})",
        report.scenario.name, report.scenario.master_seed
    );
    for s in &report.stages {
        println!("[{}]", s.stage.name());
        println!("  {:<10} {}", "F", fmt_value(&s.fidelity));
        println!("  {:<10} {}", "S", fmt_value(&s.chsh_s));
        println!("  {:<10} {}", "V", fmt_value(&s.visibility));
        println!(
            "  {:<10} {:.2} at {:.0} ns",
            "g2 peak", s.g2_peak, s.g2_peak_tau_ns
        );
        println!("  {:<10} {}", "R", fmt_value(&s.cauchy_schwarz_r));
        println!("  {:<10} {:.4}", "alpha", s.alpha);
        let n = &s.nonclassical;
        println!(
            "  nonclassical: chsh {} visibility {} cauchy-schwarz {} single-photon {}",
            n.chsh, n.visibility, n.cauchy_schwarz, n.single_photon
        );
    }
}

fn run(cli: &Cli) -> AppResult<()> {
    match &cli.command {
        Command::Simulate { stage } => simulate(cli, *stage),
        Command::Calibrate { targets } => run_calibration(cli, targets.as_deref()),
        Command::Tomo { records, resamples } => tomo(cli, records, *resamples),
        Command::Chsh { records, resamples } => chsh(cli, records.as_deref(), *resamples),
        Command::Eit => eit(cli),
        Command::Report { input } => {
            let path = input.clone().unwrap_or_else(|| cli.out.join("report.json"));
            let report: RunReport = io::read_json(&path)?;
            if report.stages.is_empty() {
                return Err(qmem_core::Error::Validation("report has no stages".into()).into());
            }
            print_report(&report);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
