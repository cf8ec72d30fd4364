//! Run configuration: flat `key = value` lines with dotted section prefixes.
//! Blank lines and lines starting with `#` are ignored; unknown or repeated keys are errors.

use anyhow::{anyhow, bail, Context, Result};
use nanocavity::cavity::{CavityCoupling, SlabGeometry};
use nanocavity::experiment::HoleShift;
use nanocavity::fit::{fano_peak_height, slab_gap_template, FitOptions, PipelineOptions};
use nanocavity::lineshape::{AbsorptionDip, CompositeModel, FabryPerotBackground, FanoPeak, LorentzianPeak};
use nanocavity::spectrum::linspace;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.points)
    }

    fn validate(&self, section: &str) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.start > 0.0 && self.stop > self.start) {
            bail!("{section}: grid needs 0 < start < stop, got start = {}, stop = {}", self.start, self.stop);
        }
        if self.points < 2 {
            bail!("{section}.points = {} must be at least 2", self.points);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConfig {
    pub lambda0_nm: f64,
    pub q_cav_x: f64,
    pub q_cav_y: f64,
    pub q_loss: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            lambda0_nm: 1370.0,
            q_cav_x: 1e4,
            q_cav_y: 1e4,
            q_loss: 1e8,
        }
    }
}

impl CouplingConfig {
    pub fn coupling(&self) -> Result<CavityCoupling> {
        Ok(CavityCoupling::new(self.lambda0_nm, self.q_cav_x, self.q_cav_y, self.q_loss)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Sigma(f64),
    /// Sigma is the clean peak height divided by this ratio.
    Snr(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub kappa: f64,
    pub lambda0_nm: f64,
    pub q: f64,
    pub fano_re: f64,
    pub fano_im: f64,
    /// Zero drops the interference background.
    pub fp_scale: f64,
    pub floor: f64,
    pub grid: GridSpec,
    pub noise: Noise,
    pub seed: u64,
    pub dips: Vec<AbsorptionDip>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            kappa: 0.1,
            lambda0_nm: 1390.0,
            q: 58_000.0,
            fano_re: 0.1,
            fano_im: 0.0,
            fp_scale: 0.08,
            floor: 0.005,
            grid: GridSpec {
                start: 1388.8,
                stop: 1391.2,
                points: 1601,
            },
            noise: Noise::Snr(20.0),
            seed: 0,
            dips: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub window_halfwidths: f64,
    pub exclusion_halfwidths: f64,
    pub min_prominence: Option<f64>,
    pub significance: f64,
    pub fano: bool,
    /// Fit an interference background built from the geometry section.
    pub fp_background: bool,
    pub fit_fp_thickness: bool,
    pub max_peaks: usize,
    pub max_iterations: usize,
    pub cost_tolerance: f64,
    /// Linewidth multipliers for the restarts.
    pub restarts: Vec<f64>,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let p = PipelineOptions::default();
        Self {
            window_halfwidths: p.window_halfwidths,
            exclusion_halfwidths: p.exclusion_halfwidths,
            min_prominence: p.min_prominence,
            significance: p.significance,
            fano: p.fano,
            fp_background: true,
            fit_fp_thickness: p.fit_fp_thickness,
            max_peaks: p.max_peaks,
            max_iterations: p.fit.max_iterations,
            cost_tolerance: p.fit.cost_tolerance,
            restarts: p.fit.gamma_jitter.clone(),
            q_min: None,
            q_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepTable {
    /// Peak reflectivity against resonance wavelength.
    #[default]
    Curve,
    /// One row per fabricated lattice constant.
    Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: GridSpec,
    pub table: SweepTable,
    pub shift: HoleShift,
    pub x_factor: f64,
    pub y_factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec {
                start: 1280.0,
                stop: 1620.0,
                points: 341,
            },
            table: SweepTable::Curve,
            shift: HoleShift::Fifth,
            x_factor: 2.0,
            y_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputConfig {
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub geometry: SlabGeometry,
    pub coupling: CouplingConfig,
    /// Defaults to ±20 total linewidths around the coupling resonance, 2001 points.
    pub model_grid: Option<GridSpec>,
    pub sweep: SweepConfig,
    pub synth: SynthConfig,
    pub fit: FitConfig,
    pub output: OutputConfig,
}


fn number(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| anyhow!("{key}: '{value}' is not a number"))?;
    if !v.is_finite() {
        bail!("{key}: value must be finite");
    }
    Ok(v)
}

fn integer(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| anyhow!("{key}: '{value}' is not a non-negative integer"))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => bail!("{key}: '{value}' is not a boolean (true/false)"),
    }
}

fn number_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| number(key, s))
        .collect()
}

/// `center:depth:width` triples separated by commas.
fn dip_list(key: &str, value: &str) -> Result<Vec<AbsorptionDip>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                bail!("{key}: dip '{item}' must be center:depth:width");
            }
            let (c, d, w) = (number(key, parts[0])?, number(key, parts[1])?, number(key, parts[2])?);
            AbsorptionDip::new(c, d, w).map_err(|e| anyhow!("{key}: {e}"))
        })
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let (mut sigma, mut snr) = (None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| anyhow!("line {lineno}: expected 'key = value'"))?;
            if !seen.insert(key.to_string()) {
                bail!("line {lineno}: key '{key}' set twice");
            }
            cfg.assign(key, value, &mut sigma, &mut snr)
                .with_context(|| format!("line {lineno}"))?;
        }
        cfg.synth.noise = match (sigma, snr) {
            (Some(_), Some(_)) => bail!("synth.noise_sigma and synth.snr are mutually exclusive"),
            (Some(s), None) => Noise::Sigma(s),
            (None, Some(r)) => Noise::Snr(r),
            (None, None) => cfg.synth.noise,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn assign(&mut self, key: &str, v: &str, sigma: &mut Option<f64>, snr: &mut Option<f64>) -> Result<()> {
        let g = &mut self.geometry;
        let c = &mut self.coupling;
        let s = &mut self.synth;
        let f = &mut self.fit;
        let w = &mut self.sweep;
        match key {
            "geometry.n0" => g.n0 = number(key, v)?,
            "geometry.n1_eff" => g.n1_eff = number(key, v)?,
            "geometry.t1" => g.t1 = number(key, v)?,
            "geometry.t2" => g.t2 = number(key, v)?,
            "geometry.n3" => g.n3 = number(key, v)?,
            "coupling.lambda0_nm" => c.lambda0_nm = number(key, v)?,
            "coupling.q_cav_x" => c.q_cav_x = number(key, v)?,
            "coupling.q_cav_y" => c.q_cav_y = number(key, v)?,
            "coupling.q_loss" => c.q_loss = number(key, v)?,
            "model.start" => self.model_grid.get_or_insert_with(incomplete_grid).start = number(key, v)?,
            "model.stop" => self.model_grid.get_or_insert_with(incomplete_grid).stop = number(key, v)?,
            "model.points" => self.model_grid.get_or_insert_with(incomplete_grid).points = integer(key, v)? as usize,
            "sweep.start" => w.grid.start = number(key, v)?,
            "sweep.stop" => w.grid.stop = number(key, v)?,
            "sweep.points" => w.grid.points = integer(key, v)? as usize,
            "sweep.table" => {
                w.table = match v {
                    "curve" => SweepTable::Curve,
                    "dataset" => SweepTable::Dataset,
                    _ => bail!("{key}: '{v}' must be curve or dataset"),
                }
            }
            "sweep.shift" => w.shift = v.parse()?,
            "sweep.x_factor" => w.x_factor = number(key, v)?,
            "sweep.y_factor" => w.y_factor = number(key, v)?,
            "synth.kappa" => s.kappa = number(key, v)?,
            "synth.lambda0_nm" => s.lambda0_nm = number(key, v)?,
            "synth.q" => s.q = number(key, v)?,
            "synth.fano_re" => s.fano_re = number(key, v)?,
            "synth.fano_im" => s.fano_im = number(key, v)?,
            "synth.fp_scale" => s.fp_scale = number(key, v)?,
            "synth.floor" => s.floor = number(key, v)?,
            "synth.start" => s.grid.start = number(key, v)?,
            "synth.stop" => s.grid.stop = number(key, v)?,
            "synth.points" => s.grid.points = integer(key, v)? as usize,
            "synth.noise_sigma" => *sigma = Some(number(key, v)?),
            "synth.snr" => *snr = Some(number(key, v)?),
            "synth.seed" => s.seed = integer(key, v)?,
            "synth.dips" => s.dips = dip_list(key, v)?,
            "fit.window_halfwidths" => f.window_halfwidths = number(key, v)?,
            "fit.exclusion_halfwidths" => f.exclusion_halfwidths = number(key, v)?,
            "fit.min_prominence" => f.min_prominence = Some(number(key, v)?),
            "fit.significance" => f.significance = number(key, v)?,
            "fit.fano" => f.fano = boolean(key, v)?,
            "fit.fp_background" => f.fp_background = boolean(key, v)?,
            "fit.fit_fp_thickness" => f.fit_fp_thickness = boolean(key, v)?,
            "fit.max_peaks" => f.max_peaks = integer(key, v)? as usize,
            "fit.max_iterations" => f.max_iterations = integer(key, v)? as usize,
            "fit.cost_tolerance" => f.cost_tolerance = number(key, v)?,
            "fit.restarts" => f.restarts = number_list(key, v)?,
            "fit.q_min" => f.q_min = Some(number(key, v)?),
            "fit.q_max" => f.q_max = Some(number(key, v)?),
            "output.out" => self.output.out = Some(PathBuf::from(v)),
            "output.report" => self.output.report = Some(PathBuf::from(v)),
            _ => bail!("unknown key '{key}'"),
        }
        Ok(())
    }

    /// Checks every section against the invariants of the types it feeds.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.coupling.coupling()?;
        if let Some(g) = &self.model_grid {
            g.validate("model")?;
        }
        self.sweep.grid.validate("sweep")?;
        self.sweep_policy().coupling(1370.0, 1e4)?;
        self.synth.grid.validate("synth")?;
        self.synth_model()?;
        match self.synth.noise {
            Noise::Sigma(s) if s < 0.0 => bail!("synth.noise_sigma = {s} must be >= 0"),
            Noise::Snr(r) if !(r > 0.0) => bail!("synth.snr = {r} must be > 0"),
            _ => {}
        }
        let f = &self.fit;
        if !(f.window_halfwidths > 0.0 && f.exclusion_halfwidths >= 0.0 && f.significance >= 0.0) {
            bail!("fit: window_halfwidths must be > 0, exclusion_halfwidths and significance >= 0");
        }
        if f.min_prominence.is_some_and(|p| p < 0.0) {
            bail!("fit.min_prominence must be >= 0");
        }
        if f.max_peaks == 0 || f.max_iterations == 0 {
            bail!("fit.max_peaks and fit.max_iterations must be >= 1");
        }
        if !(f.cost_tolerance > 0.0) {
            bail!("fit.cost_tolerance must be > 0");
        }
        if f.restarts.is_empty() || f.restarts.iter().any(|&r| !(r > 0.0)) {
            bail!("fit.restarts must list positive linewidth multipliers");
        }
        let (lo, hi) = self.q_range_or_open();
        if !(lo > 1.0 && lo <= hi) {
            bail!("fit.q_min/q_max must satisfy 1 < q_min <= q_max");
        }
        Ok(())
    }

    fn q_range_or_open(&self) -> (f64, f64) {
        (self.fit.q_min.unwrap_or(1.0 + 1e-9), self.fit.q_max.unwrap_or(f64::INFINITY))
    }

    pub fn model_grid(&self) -> GridSpec {
        self.model_grid.unwrap_or_else(|| {
            let c = &self.coupling;
            let q_total = 1.0 / (1.0 / c.q_cav_x + 1.0 / c.q_cav_y + 1.0 / c.q_loss);
            let half = 20.0 * c.lambda0_nm / q_total;
            GridSpec {
                start: c.lambda0_nm - half,
                stop: c.lambda0_nm + half,
                points: 2001,
            }
        })
    }

    pub fn sweep_policy(&self) -> nanocavity::experiment::CouplingPolicy {
        nanocavity::experiment::CouplingPolicy {
            x_factor: self.sweep.x_factor,
            y_factor: self.sweep.y_factor,
            q_loss: self.coupling.q_loss,
        }
    }

    /// Interference template shared by `synth` and `fit`: slab and gap of the geometry section.
    pub fn fp_template(&self) -> Result<FabryPerotBackground> {
        let g = &self.geometry;
        Ok(slab_gap_template(g.n0, g.n1_eff, g.t1, g.t2, g.n3)?)
    }

    pub fn synth_model(&self) -> Result<CompositeModel> {
        let s = &self.synth;
        let base = LorentzianPeak::from_wavelength(s.kappa, s.lambda0_nm, s.q).context("synth")?;
        let peak = FanoPeak::new(base, s.fano_re, s.fano_im).context("synth")?;
        let fp = if s.fp_scale > 0.0 {
            let mut t = self.fp_template()?;
            t.scale = s.fp_scale;
            Some(t)
        } else if s.fp_scale == 0.0 {
            None
        } else {
            bail!("synth.fp_scale = {} must be >= 0", s.fp_scale);
        };
        CompositeModel::new(vec![peak], fp, s.floor).context("synth")
    }

    pub fn synth_sigma(&self) -> Result<f64> {
        Ok(match self.synth.noise {
            Noise::Sigma(s) => s,
            Noise::Snr(r) => fano_peak_height(&self.synth_model()?.peaks[0]) / r,
        })
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions> {
        let f = &self.fit;
        let q_range = (f.q_min.is_some() || f.q_max.is_some()).then(|| self.q_range_or_open());
        Ok(PipelineOptions {
            fit: FitOptions {
                max_iterations: f.max_iterations,
                cost_tolerance: f.cost_tolerance,
                gamma_jitter: f.restarts.clone(),
            },
            window_halfwidths: f.window_halfwidths,
            exclusion_halfwidths: f.exclusion_halfwidths,
            min_prominence: f.min_prominence,
            significance: f.significance,
            fano: f.fano,
            fp_background: if f.fp_background { Some(self.fp_template()?) } else { None },
            fit_fp_thickness: f.fit_fp_thickness,
            max_peaks: f.max_peaks,
            q_range,
        })
    }
}

/// Filled in key by key; validation rejects it until start and stop are both set.
fn incomplete_grid() -> GridSpec {
    GridSpec {
        start: f64::NAN,
        stop: f64::NAN,
        points: 2001,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let g = cfg.model_grid();
        assert!(g.start < 1370.0 && g.stop > 1370.0);
    }

    #[test]
    fn dotted_keys_and_comments() {
        let cfg = RunConfig::parse("# lab run\ngeometry.n1_eff = 2.85\n\n  synth.dips = 1389.5:0.2:0.05, 1390.5:0.1:0.01\nfit.restarts = 1\n").unwrap();
        assert_eq!(cfg.geometry.n1_eff, 2.85);
        assert_eq!(cfg.synth.dips.len(), 2);
        assert_eq!(cfg.fit.restarts, vec![1.0]);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        let e = format!("{:#}", RunConfig::parse("geometry.n1 = 2\n").unwrap_err());
        assert!(e.contains("line 1") && e.contains("unknown key 'geometry.n1'"), "{e}");
        assert!(RunConfig::parse("synth.q = 1\nsynth.q = 2\n").is_err());
        assert!(RunConfig::parse("geometry.t1 = -3\n").is_err());
        assert!(RunConfig::parse("synth.kappa = 1.5\n").is_err());
        assert!(RunConfig::parse("synth.snr = 5\nsynth.noise_sigma = 0.1\n").is_err());
        assert!(RunConfig::parse("just text\n").is_err());
        assert!(RunConfig::parse("fit.q_min = 5000\nfit.q_max = 100\n").is_err());
    }

    #[test]
    fn partial_model_grid_must_be_complete() {
        assert!(RunConfig::parse("model.start = 1300\n").is_err());
        assert!(RunConfig::parse("model.start = 1300\nmodel.stop = 1400\n").is_ok());
    }
}
