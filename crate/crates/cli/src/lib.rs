//! Command-line front end: spectrum synthesis, fitting, model evaluation and sweeps.

pub mod config;
pub mod io;
pub mod report;

use anyhow::{anyhow, Context, Result};
use clap::{error::ErrorKind, Parser, Subcommand};
use config::{RunConfig, SweepTable};
use io::fmt_g9;
use nanocavity::cavity::{cross_pol_spectrum, sweep_peak_reflectivity};
use nanocavity::experiment::{build_sweep_dataset, fabricated_lattice_grid, q_theo, resonant_wavelength, HoleShift};
use nanocavity::fit::analyze_spectrum;
use nanocavity::lineshape::synthesize_spectrum;
use report::FitReport;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Exit status for a fit with a rejected or non-converged peak.
pub const EXIT_PEAK_REJECTED: u8 = 2;
/// Exit status for configuration and input errors.
pub const EXIT_INPUT_ERROR: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "nanocavity", version, about = "Cross-polarized reflectance model and Q-factor fitting for slab nanocavities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic reflectance spectrum (cavity peak, interference background, floor, noise).
    Synth {
        /// Run configuration (`key = value` lines); defaults apply to absent keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output spectrum; falls back to `output.out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect, fit and score every peak of a spectrum file.
    Fit {
        /// Input spectrum.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report table; falls back to `output.report`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Cross-polarized reflectance of the layered cavity over the model grid.
    Model {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Peak reflectivity against resonance wavelength, or the per-lattice dataset.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the theoretical Q and the resonant wavelength for a lattice constant.
    Qtheo {
        /// Hole shift: none, 0.1a or 0.2a.
        #[arg(long)]
        shift: HoleShift,
        /// Lattice constant, nm.
        #[arg(long)]
        a: f64,
    },
}

/// Parses `args` (program name first), runs the command and maps the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    ExitCode::from(EXIT_INPUT_ERROR)
                }
                _ => {
                    let rendered = e.render().to_string();
                    let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
                    eprintln!("{first}");
                    ExitCode::from(EXIT_INPUT_ERROR)
                }
            };
        }
    };
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

fn load(config: &Option<PathBuf>) -> Result<RunConfig> {
    match config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn output_path(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| anyhow!("no {what} path: pass the flag or set it in the config"))
}

/// Runs one command; returns the exit status for non-error outcomes.
pub fn run(command: &Command) -> Result<u8> {
    match command {
        Command::Synth { config, out } => {
            let cfg = load(config)?;
            let out = output_path(out, &cfg.output.out, "--out")?;
            synth(&cfg, &out)?;
            Ok(0)
        }
        Command::Fit { input, config, report } => {
            let cfg = load(config)?;
            let report = output_path(report, &cfg.output.report, "--report")?;
            fit(&cfg, input, &report)
        }
        Command::Model { config, out } => {
            let cfg = load(config)?;
            let out = output_path(out, &cfg.output.out, "--out")?;
            model(&cfg, &out)?;
            Ok(0)
        }
        Command::Sweep { config, out } => {
            let cfg = load(config)?;
            let out = output_path(out, &cfg.output.out, "--out")?;
            sweep(&cfg, &out)?;
            Ok(0)
        }
        Command::Qtheo { shift, a } => {
            println!("{}", qtheo_text(*shift, *a)?);
            Ok(0)
        }
    }
}

pub fn qtheo_text(shift: HoleShift, a_nm: f64) -> Result<String> {
    let q = q_theo(a_nm, shift)?;
    let lambda = resonant_wavelength(a_nm)?;
    Ok(format!("q_theo = {}\nresonant_wavelength_nm = {}", fmt_g9(q), fmt_g9(lambda)))
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = &cfg.synth;
    let model = cfg.synth_model()?;
    let sigma = cfg.synth_sigma()?;
    let spectrum = synthesize_spectrum(&model, &s.grid.values(), sigma, &s.dips, s.seed)?.with_meta(format!(
        "model: kappa={} lambda0_nm={} q={} fano_re={} fano_im={} fp_scale={} floor={}",
        fmt_g9(s.kappa),
        fmt_g9(s.lambda0_nm),
        fmt_g9(s.q),
        fmt_g9(s.fano_re),
        fmt_g9(s.fano_im),
        fmt_g9(s.fp_scale),
        fmt_g9(s.floor)
    ));
    io::write_spectrum(out, &spectrum)
}

/// Fits `input` and writes the report; status 2 when any peak is rejected or unconverged.
pub fn fit(cfg: &RunConfig, input: &Path, report_path: &Path) -> Result<u8> {
    let spectrum = io::read_spectrum(input)?;
    let options = cfg.pipeline_options()?;
    let source = input.file_name().map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned());
    let report = match analyze_spectrum(&spectrum, &options) {
        Ok(fits) => FitReport::new(source, &fits),
        Err(e @ nanocavity::Error::NoSignificantPeak { .. }) => FitReport::rejected(source, e.to_string()),
        Err(e) => return Err(e).with_context(|| format!("{}", input.display())),
    };
    io::write_text(report_path, &report.to_csv())?;
    if let Some(reason) = &report.rejection {
        println!("spectrum rejected: {reason}");
    }
    for (i, p) in report.peaks.iter().enumerate() {
        match (p.lambda0_nm, p.q_exp) {
            (Some(l), Some(q)) => println!(
                "peak {i}: lambda0 = {} nm, Q = {}, SNR = {}, {}",
                fmt_g9(l.value),
                fmt_g9(q.value),
                p.snr.map_or_else(|| "n/a".into(), fmt_g9),
                p.status.as_str()
            ),
            _ => println!("peak {i} at {} nm: rejected ({})", fmt_g9(p.candidate_nm), p.notes.join("; ")),
        }
    }
    Ok(if report.all_converged() { 0 } else { EXIT_PEAK_REJECTED })
}

pub fn model(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = &cfg.geometry;
    let c = &cfg.coupling;
    let spectrum = cross_pol_spectrum(g, &c.coupling()?, &cfg.model_grid().values())?.with_meta(format!(
        "cross-polarized reflectance: n0={} n1_eff={} t1={} t2={} n3={} lambda0_nm={} q_cav_x={} q_cav_y={} q_loss={}",
        fmt_g9(g.n0),
        fmt_g9(g.n1_eff),
        fmt_g9(g.t1),
        fmt_g9(g.t2),
        fmt_g9(g.n3),
        fmt_g9(c.lambda0_nm),
        fmt_g9(c.q_cav_x),
        fmt_g9(c.q_cav_y),
        fmt_g9(c.q_loss)
    ));
    io::write_spectrum(out, &spectrum)
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = &cfg.geometry;
    let meta = vec![format!(
        "geometry: n0={} n1_eff={} t1={} t2={} n3={}",
        fmt_g9(g.n0),
        fmt_g9(g.n1_eff),
        fmt_g9(g.t1),
        fmt_g9(g.t2),
        fmt_g9(g.n3)
    )];
    match cfg.sweep.table {
        SweepTable::Curve => {
            let curve = sweep_peak_reflectivity(g, &cfg.coupling.coupling()?, &cfg.sweep.grid.values())?;
            let rows: Vec<Vec<f64>> = curve.into_iter().map(|(l, r)| vec![l, r]).collect();
            io::write_table(out, &meta, &["resonance_nm", "peak_reflectivity"], &rows)
        }
        SweepTable::Dataset => {
            let table = build_sweep_dataset(cfg.sweep.shift, &fabricated_lattice_grid(), g, &cfg.sweep_policy())?;
            let rows: Vec<Vec<f64>> = table
                .iter()
                .map(|r| vec![r.a_nm, r.resonance_nm, r.relative_thickness, r.q_theo, r.peak_reflectivity])
                .collect();
            let mut meta = meta;
            meta.push(format!("hole shift: {}", cfg.sweep.shift));
            io::write_table(
                out,
                &meta,
                &["a_nm", "resonance_nm", "relative_thickness", "q_theo", "peak_reflectivity"],
                &rows,
            )
        }
    }
}
