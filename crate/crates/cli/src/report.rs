//! Per-peak fit report, written as a CSV table with one record per detected peak.

use crate::io::fmt_g9;
use nanocavity::fit::{FitResult, PeakFit};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakStatus {
    Converged,
    NotConverged,
    Rejected,
}

impl PeakStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PeakStatus::Converged => "converged",
            PeakStatus::NotConverged => "not_converged",
            PeakStatus::Rejected => "rejected",
        }
    }
}

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakRecord {
    pub candidate_nm: f64,
    pub status: PeakStatus,
    pub iterations: usize,
    pub lambda0_nm: Option<Estimate>,
    pub fwhm_nm: Option<Estimate>,
    pub q_exp: Option<Estimate>,
    pub snr: Option<f64>,
    pub kappa: Option<Estimate>,
    pub fano_re: Option<Estimate>,
    pub fano_im: Option<Estimate>,
    pub floor: Option<Estimate>,
    pub fp_scale: Option<Estimate>,
    pub fp_thickness_nm: Vec<Estimate>,
    pub residual_rms: Option<f64>,
    /// Rejection reason, quality flags and undetermined parameters.
    pub notes: Vec<String>,
}

impl PeakRecord {
    pub fn from_peak(p: &PeakFit) -> Self {
        match &p.outcome {
            Ok(fit) => Self::from_fit(p.candidate.wavelength_nm, fit),
            Err(e) => Self {
                candidate_nm: p.candidate.wavelength_nm,
                status: PeakStatus::Rejected,
                iterations: 0,
                lambda0_nm: None,
                fwhm_nm: None,
                q_exp: None,
                snr: None,
                kappa: None,
                fano_re: None,
                fano_im: None,
                floor: None,
                fp_scale: None,
                fp_thickness_nm: Vec::new(),
                residual_rms: None,
                notes: vec![e.to_string()],
            },
        }
    }

    fn from_fit(candidate_nm: f64, fit: &FitResult) -> Self {
        let est = |name: &str| {
            fit.value_of(name).map(|value| Estimate {
                value,
                stderr: fit.stderr_of(name).unwrap_or(f64::NAN),
            })
        };
        // Resonance and width errors are nearly uncorrelated for a sampled peak, so
        // the derived quantities propagate them in quadrature.
        let rel_omega = est("peak0.omega_c").map_or(f64::NAN, |e| e.stderr / e.value);
        let rel_gamma = est("peak0.gamma_c").map_or(f64::NAN, |e| e.stderr / e.value);
        let thickness = (0..)
            .map_while(|l| est(&format!("fp.thickness{l}")))
            .collect();
        let mut notes = fit.meta.clone();
        if !fit.singular_parameters.is_empty() {
            notes.push(format!("undetermined: {}", fit.singular_parameters.join(" ")));
        }
        Self {
            candidate_nm,
            status: if fit.converged { PeakStatus::Converged } else { PeakStatus::NotConverged },
            iterations: fit.iterations,
            lambda0_nm: Some(Estimate {
                value: fit.lambda0,
                stderr: fit.lambda0 * rel_omega,
            }),
            fwhm_nm: Some(Estimate {
                value: fit.fwhm,
                stderr: fit.fwhm * rel_gamma,
            }),
            q_exp: Some(Estimate {
                value: fit.q_exp,
                stderr: fit.q_exp * rel_omega.hypot(rel_gamma),
            }),
            snr: fit.snr,
            kappa: est("peak0.kappa"),
            fano_re: est("peak0.fano_re"),
            fano_im: est("peak0.fano_im"),
            floor: est("floor"),
            fp_scale: est("fp.scale"),
            fp_thickness_nm: thickness,
            residual_rms: Some(fit.residual_rms),
            notes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub source: String,
    pub peaks: Vec<PeakRecord>,
    /// Set when the spectrum as a whole held no significant peak.
    pub rejection: Option<String>,
}

impl FitReport {
    pub fn new(source: impl Into<String>, fits: &[PeakFit]) -> Self {
        Self {
            source: source.into(),
            peaks: fits.iter().map(PeakRecord::from_peak).collect(),
            rejection: None,
        }
    }

    pub fn rejected(source: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            peaks: Vec::new(),
            rejection: Some(reason.into()),
        }
    }

    pub fn all_converged(&self) -> bool {
        self.rejection.is_none() && self.peaks.iter().all(|p| p.status == PeakStatus::Converged)
    }

    pub fn header(&self) -> Vec<String> {
        let layers = self.peaks.iter().map(|p| p.fp_thickness_nm.len()).max().unwrap_or(0);
        let mut h: Vec<String> = ["peak", "candidate_nm", "status", "iterations"].map(String::from).to_vec();
        for name in ["lambda0_nm", "fwhm_nm", "q_exp"] {
            h.push(name.into());
            h.push(format!("{name}_stderr"));
        }
        h.push("snr".into());
        let mut fields: Vec<String> = ["kappa", "fano_re", "fano_im", "floor", "fp_scale"].map(String::from).to_vec();
        fields.extend((0..layers).map(|l| format!("fp_thickness{l}_nm")));
        for name in fields {
            let err = format!("{name}_stderr");
            h.extend([name, err]);
        }
        h.push("residual_rms".into());
        h.push("notes".into());
        h
    }

    pub fn to_csv(&self) -> String {
        let header = self.header();
        let layers = header.iter().filter(|h| h.starts_with("fp_thickness") && !h.ends_with("_stderr")).count();
        let mut out = format!("# fit report for {}\n", self.source);
        if let Some(reason) = &self.rejection {
            let _ = writeln!(out, "# spectrum rejected: {reason}");
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for (i, p) in self.peaks.iter().enumerate() {
            let mut cells = vec![
                i.to_string(),
                fmt_g9(p.candidate_nm),
                p.status.as_str().to_string(),
                p.iterations.to_string(),
            ];
            let pair = |cells: &mut Vec<String>, e: Option<Estimate>| match e {
                Some(e) => {
                    cells.push(fmt_g9(e.value));
                    cells.push(fmt_g9(e.stderr));
                }
                None => cells.extend([String::new(), String::new()]),
            };
            for e in [p.lambda0_nm, p.fwhm_nm, p.q_exp] {
                pair(&mut cells, e);
            }
            cells.push(p.snr.map(fmt_g9).unwrap_or_default());
            for e in [p.kappa, p.fano_re, p.fano_im, p.floor, p.fp_scale] {
                pair(&mut cells, e);
            }
            for l in 0..layers {
                pair(&mut cells, p.fp_thickness_nm.get(l).copied());
            }
            cells.push(p.residual_rms.map(fmt_g9).unwrap_or_default());
            // Commas and newlines would split the record.
            cells.push(p.notes.join("; ").replace([',', '\n'], ";"));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_pairs_values_with_errors() {
        let r = FitReport::default();
        let h = r.header();
        let i = h.iter().position(|s| s == "kappa").unwrap();
        assert_eq!(h[i + 1], "kappa_stderr");
        assert_eq!(h.last().unwrap(), "notes");
        assert!(r.all_converged());
        assert!(!FitReport::rejected("x", "flat").all_converged());
    }
}
