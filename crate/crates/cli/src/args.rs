use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pulsecancel_core::harness::ScenarioFamily;
use pulsecancel_core::{FrequencyGrid, Method, PipelineConfig};

#[derive(Debug, Parser)]
#[command(
    name = "pulsecancel",
    version,
    about = "Radar heart-rate estimation with respiration cancellation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a radar cube from a scenario file.
    Synth(SynthArgs),
    /// Estimate a heart-rate trace.
    Run(RunArgs),
    /// RMSE of every method against a reference trace.
    Compare(CompareArgs),
    /// Per-window spectra before and after cancellation.
    Spectra(SpectraArgs),
    /// Monte Carlo benchmark over a scenario family.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Cube path; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the constant-rate reference trace.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Window length of the reference trace, s.
    #[arg(long, default_value_t = 20.0)]
    pub cpi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct Source {
    /// Raw cube written by `synth` or an equivalent recorder.
    #[arg(
        long = "in",
        conflicts_with = "scenario",
        required_unless_present = "scenario"
    )]
    pub input: Option<PathBuf>,
    /// Scenario file simulated in memory.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, requires = "scenario", conflicts_with = "input")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value = "ahet", value_parser = parse_method)]
    pub method: Method,
    #[command(flatten)]
    pub stages: StageArgs,
    /// Trace CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub truth: PathBuf,
    #[command(flatten)]
    pub stages: StageArgs,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub stages: StageArgs,
    /// Highest frequency written, Hz.
    #[arg(long, default_value_t = 4.0)]
    pub max_hz: f64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "masking", value_parser = parse_family)]
    pub family: ScenarioFamily,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, value_delimiter = ',', default_value = "15,20,30")]
    pub cpis: Vec<f64>,
    /// Record length of every scenario, s.
    #[arg(long, default_value_t = 280.0)]
    pub duration: f64,
    /// Timed passes per method; 0 skips timing.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Applied only to ill-conditioned lag matrices.
    Auto,
    Fixed(f64),
}

/// Stage settings shared by every subcommand that runs the pipeline.
#[derive(Debug, Args)]
pub struct StageArgs {
    /// Coherent processing interval, s.
    #[arg(long, default_value_t = 20.0)]
    pub cpi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Zero-padding factor of the slow-time FFT.
    #[arg(long, default_value_t = 8)]
    pub pad: usize,
    /// Range gate `lo:hi` in m.
    #[arg(long, default_value = "0.3:3.0", value_parser = parse_gate)]
    pub gate: (f64, f64),
    #[arg(long, default_value_t = 2)]
    pub enhance_width: usize,
    #[arg(long, default_value_t = 0.7)]
    pub min_corr: f64,
    /// Breathing harmonics in the reconstruction.
    #[arg(long, default_value_t = 3)]
    pub kb: usize,
    #[arg(long, default_value_t = 5.0)]
    pub anls_window: f64,
    #[arg(long, default_value_t = 1.0)]
    pub anls_step: f64,
    /// Breathing grid `lo:hi:step` in Hz.
    #[arg(long, default_value = "0.1:0.5:1/600", value_parser = parse_grid)]
    pub rr_grid: FrequencyGrid,
    #[arg(long, default_value_t = 5)]
    pub eca_order: usize,
    /// `auto` or a ridge scale relative to the mean diagonal.
    #[arg(long, default_value = "auto", value_parser = parse_ridge)]
    pub eca_ridge: Ridge,
    /// Harmonic credibility threshold, Hz.
    #[arg(long, default_value_t = 0.1)]
    pub ve: f64,
    /// Consecutive-estimate threshold, Hz.
    #[arg(long, default_value_t = 0.1)]
    pub va: f64,
}

impl StageArgs {
    pub fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            cpi_s: self.cpi,
            step_s: self.step,
            zero_pad_factor: self.pad,
            ..PipelineConfig::default()
        };
        cfg.preprocess.min_range = self.gate.0;
        cfg.preprocess.max_range = self.gate.1;
        cfg.preprocess.enhance_width = self.enhance_width;
        cfg.preprocess.min_corr = self.min_corr;
        cfg.anls.order = self.kb;
        cfg.anls.window_s = self.anls_window;
        cfg.anls.step_s = self.anls_step;
        cfg.anls.grid = self.rr_grid;
        cfg.eca.order = self.eca_order;
        if let Ridge::Fixed(r) = self.eca_ridge {
            cfg.eca.ridge = r;
            // an explicit ridge is applied unless X is perfectly conditioned
            cfg.eca.max_condition = 1.0;
        }
        cfg.ahet.v_e = self.ve;
        cfg.ahet.v_a = self.va;
        if !(cfg.cpi_s > 0.0 && cfg.step_s > 0.0 && cfg.zero_pad_factor >= 1) {
            anyhow::bail!("--cpi and --step must be positive and --pad at least 1");
        }
        if !(0.0..=1.0).contains(&cfg.preprocess.min_corr) {
            anyhow::bail!("--min-corr must lie in [0, 1]");
        }
        if !(cfg.anls.order >= 1 && cfg.anls.window_s > 0.0 && cfg.anls.step_s > 0.0) {
            anyhow::bail!("--kb must be at least 1 and the ANLS window and step positive");
        }
        cfg.eca.validate()?;
        cfg.ahet.validate()?;
        Ok(cfg)
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
        .map_err(|e: pulsecancel_core::Error| e.to_string())
}

fn parse_family(s: &str) -> Result<ScenarioFamily, String> {
    s.parse()
        .map_err(|e: pulsecancel_core::Error| e.to_string())
}

/// A decimal or a ratio such as `1/600`.
fn number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.parse().ok(),
    }
}

fn numbers(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| number(p.trim()).ok_or_else(|| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} values separated by `:`"));
    }
    Ok(v)
}

fn parse_gate(s: &str) -> Result<(f64, f64), String> {
    let v = numbers(s, 2)?;
    if !(v[0] >= 0.0 && v[1] > v[0]) {
        return Err("gate needs 0 <= lo < hi".into());
    }
    Ok((v[0], v[1]))
}

fn parse_grid(s: &str) -> Result<FrequencyGrid, String> {
    let v = numbers(s, 3)?;
    FrequencyGrid::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
}

fn parse_ridge(s: &str) -> Result<Ridge, String> {
    if s == "auto" {
        return Ok(Ridge::Auto);
    }
    match s.parse::<f64>() {
        Ok(r) if r >= 0.0 && r.is_finite() => Ok(Ridge::Fixed(r)),
        _ => Err("expected `auto` or a non-negative number".into()),
    }
}
