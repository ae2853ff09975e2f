//! Trace accuracy metrics, seeded Monte Carlo runs and timing profiles.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::pipeline::{run_cube, track, Method, PipelineConfig};
use crate::preprocess::preprocess;
use crate::radar::RadarCube;
use crate::scenario::{
    reference_trace, synthesize_radar_cube, Gate, Harmonic, IntermodTone, Scenario, ToneRule,
};
use crate::trace::HrTrace;

/// `(time, estimate - reference)` for every trace entry whose nearest
/// reference entry lies within half the reference step.
pub fn paired_errors(trace: &HrTrace, reference: &HrTrace) -> Result<Vec<(f64, f64)>> {
    if trace.is_empty() || reference.is_empty() {
        return Err(Error::NoOverlap);
    }
    let tol = reference.median_step().map_or(f64::INFINITY, |s| 0.5 * s) + 1e-9;
    let refs = &reference.entries;
    let mut out = Vec::with_capacity(trace.len());
    for e in &trace.entries {
        let i = refs.partition_point(|r| r.time_s < e.time_s);
        let nearest = [i.checked_sub(1), (i < refs.len()).then_some(i)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (refs[a].time_s - e.time_s)
                    .abs()
                    .total_cmp(&(refs[b].time_s - e.time_s).abs())
            })
            .expect("reference is non-empty");
        if (refs[nearest].time_s - e.time_s).abs() <= tol {
            out.push((e.time_s, e.hr_bpm - refs[nearest].hr_bpm));
        }
    }
    if out.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(out)
}

fn root_mean_square(errors: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        sum += e * e;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Root mean squared error in BPM over nearest-time pairs.
pub fn rmse(trace: &HrTrace, reference: &HrTrace) -> Result<f64> {
    let pairs = paired_errors(trace, reference)?;
    Ok(root_mean_square(pairs.iter().map(|p| p.1)).expect("pairs are non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRow {
    pub start_s: f64,
    pub end_s: f64,
    pub count: usize,
    pub rmse_bpm: Option<f64>,
    pub note: Option<String>,
}

/// RMSE over consecutive `[start, start + interval)` spans beginning at
/// `start_s`, up to the last paired entry.
pub fn interval_rmse(
    trace: &HrTrace,
    reference: &HrTrace,
    interval_s: f64,
    start_s: f64,
) -> Result<Vec<IntervalRow>> {
    if !(interval_s > 0.0) {
        return Err(invalid("interval", "must be positive"));
    }
    let pairs = paired_errors(trace, reference)?;
    Ok(interval_rows(&pairs, interval_s, start_s))
}

fn interval_rows(pairs: &[(f64, f64)], interval_s: f64, start_s: f64) -> Vec<IntervalRow> {
    let last = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut rows = Vec::new();
    let mut k = 0;
    loop {
        let lo = start_s + k as f64 * interval_s;
        if lo > last {
            break;
        }
        let hi = lo + interval_s;
        let inside: Vec<f64> = pairs
            .iter()
            .filter(|p| p.0 >= lo && p.0 < hi)
            .map(|p| p.1)
            .collect();
        let rmse_bpm = root_mean_square(inside.iter().copied());
        rows.push(IntervalRow {
            start_s: lo,
            end_s: hi,
            count: inside.len(),
            rmse_bpm,
            note: rmse_bpm
                .is_none()
                .then(|| "no paired estimates".to_string()),
        });
        k += 1;
    }
    rows
}

/// Seeded synthetic subject populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioFamily {
    /// Third respiration harmonic comparable to the heartbeat, no
    /// intermodulation.
    Respiration,
    /// Respiration harmonic and HR−RR masker above the heartbeat. Odd seeds
    /// also switch on strong HR+RR and HR+2RR tones part-way through.
    Masking,
    /// Heartbeat dominant in its band.
    Unmasked,
}

impl ScenarioFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioFamily::Respiration => "respiration",
            ScenarioFamily::Masking => "masking",
            ScenarioFamily::Unmasked => "unmasked",
        }
    }

    pub fn scenario(self, seed: u64, duration: f64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
        let mut phase = || rng.gen_range(0.0..std::f64::consts::TAU);
        let mut s = Scenario::baseline(0.26, 1.2767, duration);
        s.seed = seed;
        s.complex_noise_std = 0.05;
        s.phase_noise_std = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.heartbeat_fundamental = 1.2767 + rng.gen_range(-0.03..0.03);

        let (alpha, beta) = match self {
            ScenarioFamily::Respiration => (
                rng.gen_range(0.8e-3..1.2e-3),
                rng.gen_range(0.15e-3..0.25e-3),
            ),
            ScenarioFamily::Masking => (
                rng.gen_range(1.0e-3..1.4e-3),
                rng.gen_range(0.06e-3..0.08e-3),
            ),
            ScenarioFamily::Unmasked => (
                rng.gen_range(0.8e-3..1.2e-3),
                rng.gen_range(0.3e-3..0.45e-3),
            ),
        };
        s.breathing_harmonics = (0..4)
            .map(|k| Harmonic::new(alpha * 0.5f64.powi(k), phase()))
            .collect();
        s.heartbeat_harmonics = vec![
            Harmonic::new(beta, phase()),
            Harmonic::new(0.5 * beta, phase()),
        ];

        if self == ScenarioFamily::Masking {
            s.intermod_tones.push(IntermodTone::new(
                ToneRule::HrMinusRr,
                beta * rng.gen_range(1.2..1.5),
                phase(),
            ));
            let strong = seed % 2 == 1;
            let level = if strong {
                rng.gen_range(1.2..1.5)
            } else {
                rng.gen_range(0.2..0.4)
            };
            let gate = Gate {
                start_s: if strong {
                    rng.gen_range(40.0..80.0)
                } else {
                    0.0
                },
                end_s: None,
                ramp_s: if strong { 5.0 } else { 0.0 },
            };
            for rule in [ToneRule::HrPlusRr, ToneRule::HrPlus2Rr] {
                s.intermod_tones
                    .push(IntermodTone::new(rule, beta * level, phase()).gated(gate));
            }
        }
        s
    }
}

impl fmt::Display for ScenarioFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ScenarioFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ScenarioFamily::Respiration,
            ScenarioFamily::Masking,
            ScenarioFamily::Unmasked,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| invalid("family", format!("unknown scenario family `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    pub family: ScenarioFamily,
    pub seeds: Vec<u64>,
    pub cpis: Vec<f64>,
    pub methods: Vec<Method>,
    pub duration_s: f64,
    pub interval_s: f64,
    pub interval_start_s: f64,
    pub pipeline: PipelineConfig,
}

impl MonteCarloConfig {
    pub fn new(family: ScenarioFamily, seeds: usize) -> Self {
        Self {
            family,
            seeds: (0..seeds as u64).collect(),
            cpis: vec![15.0, 20.0, 30.0],
            methods: Method::ALL.to_vec(),
            duration_s: 280.0,
            interval_s: 40.0,
            interval_start_s: 10.0,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRecord {
    pub cpi_s: f64,
    pub seed: u64,
    pub method: Method,
    pub rmse_bpm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRow {
    pub cpi_s: f64,
    pub method: Method,
    pub median_bpm: Option<f64>,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    pub method: Method,
    pub row: IntervalRow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub method: Method,
    pub wall_s: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub family: ScenarioFamily,
    pub duration_s: f64,
    pub seeds: Vec<u64>,
    pub records: Vec<RmseRecord>,
    pub medians: Vec<MedianRow>,
    /// Errors pooled over seeds at the interval CPI.
    pub interval_cpi_s: f64,
    pub intervals: Vec<IntervalRecord>,
    pub timing: Vec<TimingRow>,
}

impl BenchReport {
    pub fn record(&self, cpi_s: f64, seed: u64, method: Method) -> Option<&RmseRecord> {
        self.records
            .iter()
            .find(|r| r.cpi_s == cpi_s && r.seed == seed && r.method == method)
    }

    pub fn median(&self, cpi_s: f64, method: Method) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.cpi_s == cpi_s && m.method == method)
            .and_then(|m| m.median_bpm)
    }

    /// Writes `rmse.csv`, `intervals.csv`, `timing.csv` and `report.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut rmse = Vec::new();
        self.write_rmse_csv(&mut rmse)?;
        fs::write(dir.join("rmse.csv"), rmse)?;
        let mut intervals = Vec::new();
        self.write_intervals_csv(&mut intervals)?;
        fs::write(dir.join("intervals.csv"), intervals)?;
        let mut timing = Vec::new();
        self.write_timing_csv(&mut timing)?;
        fs::write(dir.join("timing.csv"), timing)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn write_rmse_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cpi_s,seed,method,rmse_bpm,error")?;
        for r in &self.records {
            let value = r.rmse_bpm.map(|v| format!("{v:.6}")).unwrap_or_default();
            let error = r.error.as_deref().unwrap_or("").replace(',', ";");
            writeln!(
                out,
                "{},{},{},{},{}",
                r.cpi_s, r.seed, r.method, value, error
            )?;
        }
        Ok(())
    }

    pub fn write_intervals_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "interval,method,rmse_bpm,count,note")?;
        for r in &self.intervals {
            let value = r
                .row
                .rmse_bpm
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default();
            writeln!(
                out,
                "{}-{}s,{},{},{},{}",
                r.row.start_s,
                r.row.end_s,
                r.method,
                value,
                r.row.count,
                r.row.note.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "method,wall_s,ratio")?;
        for t in &self.timing {
            writeln!(out, "{},{:.6},{:.3}", t.method, t.wall_s, t.ratio)?;
        }
        Ok(())
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    crate::anls::median(values)
}

struct SeedRun {
    records: Vec<RmseRecord>,
    pairs: Vec<(Method, Vec<(f64, f64)>)>,
}

fn run_seed(config: &MonteCarloConfig, seed: u64, interval_cpi: f64) -> SeedRun {
    let fail = |e: &Error| -> SeedRun {
        SeedRun {
            records: config
                .cpis
                .iter()
                .flat_map(|&cpi_s| {
                    config.methods.iter().map(move |&method| RmseRecord {
                        cpi_s,
                        seed,
                        method,
                        rmse_bpm: None,
                        error: Some(e.to_string()),
                    })
                })
                .collect(),
            pairs: Vec::new(),
        }
    };
    let scenario = config.family.scenario(seed, config.duration_s);
    let phase = match synthesize_radar_cube(&scenario)
        .and_then(|cube| preprocess(&cube, &config.pipeline.preprocess))
    {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };

    let mut records = Vec::new();
    let mut pairs = Vec::new();
    for &cpi_s in &config.cpis {
        let pipeline = config.pipeline.with_cpi(cpi_s);
        for &method in &config.methods {
            let outcome = reference_trace(&scenario, cpi_s, pipeline.step_s).and_then(|truth| {
                let trace = track(&phase, method, &pipeline)?;
                let errors = paired_errors(&trace, &truth)?;
                Ok(errors)
            });
            match outcome {
                Ok(errors) => {
                    records.push(RmseRecord {
                        cpi_s,
                        seed,
                        method,
                        rmse_bpm: root_mean_square(errors.iter().map(|p| p.1)),
                        error: None,
                    });
                    if cpi_s == interval_cpi {
                        pairs.push((method, errors));
                    }
                }
                Err(e) => records.push(RmseRecord {
                    cpi_s,
                    seed,
                    method,
                    rmse_bpm: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    SeedRun { records, pairs }
}

/// Every (seed, CPI, method) combination of a family. Individual failures
/// are recorded in the report rather than aborting the run.
pub fn monte_carlo(config: &MonteCarloConfig) -> Result<BenchReport> {
    if config.seeds.len() < 2 {
        return Err(invalid("seeds", "need at least two seeds"));
    }
    if config.cpis.is_empty() || config.methods.is_empty() {
        return Err(invalid(
            "monte carlo",
            "need at least one CPI and one method",
        ));
    }
    let interval_cpi = if config.cpis.contains(&config.pipeline.cpi_s) {
        config.pipeline.cpi_s
    } else {
        config.cpis[0]
    };
    let runs: Vec<SeedRun> = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed, interval_cpi))
        .collect();

    let mut records: Vec<RmseRecord> = runs.iter().flat_map(|r| r.records.clone()).collect();
    let cpi_rank = |c: f64| config.cpis.iter().position(|&x| x == c);
    let method_rank = |m: Method| config.methods.iter().position(|&x| x == m);
    records.sort_by_key(|r| (cpi_rank(r.cpi_s), method_rank(r.method), r.seed));

    let mut medians = Vec::new();
    for &cpi_s in &config.cpis {
        for &method in &config.methods {
            let group: Vec<&RmseRecord> = records
                .iter()
                .filter(|r| r.cpi_s == cpi_s && r.method == method)
                .collect();
            let values: Vec<f64> = group.iter().filter_map(|r| r.rmse_bpm).collect();
            medians.push(MedianRow {
                cpi_s,
                method,
                median_bpm: median(&values),
                runs: group.len(),
                failures: group.len() - values.len(),
            });
        }
    }

    let mut intervals = Vec::new();
    for &method in &config.methods {
        let pooled: Vec<(f64, f64)> = runs
            .iter()
            .flat_map(|r| r.pairs.iter().filter(|p| p.0 == method))
            .flat_map(|p| p.1.iter().copied())
            .collect();
        if pooled.is_empty() {
            continue;
        }
        for row in interval_rows(&pooled, config.interval_s, config.interval_start_s) {
            intervals.push(IntervalRecord { method, row });
        }
    }

    Ok(BenchReport {
        family: config.family,
        duration_s: config.duration_s,
        seeds: config.seeds.clone(),
        records,
        medians,
        interval_cpi_s: interval_cpi,
        intervals,
        timing: Vec::new(),
    })
}

/// Wall time of each method from cube to trace, normalized to the
/// conventional baseline. Each method gets one untimed warm-up pass; the
/// fastest of `repeats` timed passes is kept.
pub fn time_profile(
    cube: &RadarCube,
    methods: &[Method],
    config: &PipelineConfig,
    repeats: usize,
) -> Result<Vec<TimingRow>> {
    if cube.duration() < 60.0 {
        return Err(invalid("record", "timing needs at least 60 s"));
    }
    let mut all = vec![Method::Conventional];
    all.extend(
        methods
            .iter()
            .copied()
            .filter(|&m| m != Method::Conventional),
    );
    let mut walls = Vec::new();
    for &method in &all {
        run_cube(cube, method, config)?;
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let t0 = Instant::now();
            run_cube(cube, method, config)?;
            best = best.min(t0.elapsed().as_secs_f64());
        }
        walls.push((method, best));
    }
    let base = walls[0].1;
    Ok(walls
        .into_iter()
        .filter(|(m, _)| methods.contains(m))
        .map(|(method, wall_s)| TimingRow {
            method,
            wall_s,
            ratio: if method == Method::Conventional {
                1.0
            } else {
                wall_s / base
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Tag, TraceEntry};

    fn trace(values: &[(f64, f64)]) -> HrTrace {
        HrTrace::new(
            values
                .iter()
                .map(|&(time_s, hr_bpm)| TraceEntry {
                    time_s,
                    hr_bpm,
                    tag: Tag::Peak,
                    delta_hz: None,
                })
                .collect(),
        )
    }

    fn constant(n: usize, start: f64, value: f64) -> HrTrace {
        trace(
            &(0..n)
                .map(|k| (start + k as f64, value))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn identical_traces_have_zero_rmse() {
        let r = constant(20, 10.0, 72.0);
        assert_eq!(rmse(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let r = constant(20, 10.0, 72.0);
        let t = constant(20, 10.0, 74.0);
        assert_eq!(rmse(&t, &r).unwrap(), 2.0);
    }

    #[test]
    fn alternating_errors() {
        let r = constant(10, 0.0, 70.0);
        let t = trace(
            &(0..10)
                .map(|k| (k as f64, if k % 2 == 0 { 73.0 } else { 67.0 }))
                .collect::<Vec<_>>(),
        );
        assert_eq!(rmse(&t, &r).unwrap(), 3.0);
    }

    #[test]
    fn pairing_tolerates_different_steps() {
        let r = constant(10, 0.0, 70.0);
        let t = trace(&[(0.4, 71.0), (3.6, 71.0), (20.0, 90.0)]);
        let pairs = paired_errors(&t, &r).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(matches!(
            rmse(&trace(&[(50.0, 70.0)]), &r),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn table_layout_has_seven_rows() {
        let r = constant(261, 10.0, 76.6);
        let rows = interval_rmse(&r, &r, 40.0, 10.0).unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!((rows[0].start_s, rows[0].end_s), (10.0, 50.0));
        assert_eq!(rows[6].start_s, 250.0);
        assert!(rows.iter().all(|r| r.rmse_bpm == Some(0.0)));
    }

    #[test]
    fn error_confined_to_one_interval() {
        let r = constant(261, 10.0, 76.6);
        let mut t = r.clone();
        for e in &mut t.entries[100..120] {
            e.hr_bpm += 5.0;
        }
        let rows = interval_rmse(&t, &r, 40.0, 10.0).unwrap();
        let nonzero: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].rmse_bpm.unwrap() > 0.0)
            .collect();
        assert_eq!(nonzero, vec![2]);
    }

    #[test]
    fn empty_interval_is_noted() {
        let r = constant(100, 0.0, 70.0);
        let t = trace(&[(1.0, 71.0), (95.0, 72.0)]);
        let rows = interval_rmse(&t, &r, 40.0, 0.0).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].rmse_bpm.is_none() && rows[1].note.is_some());
    }

    #[test]
    fn rmse_decomposes_over_intervals() {
        let r = constant(261, 10.0, 76.6);
        let t = trace(
            &(0..261)
                .map(|k| (10.0 + k as f64, 76.6 + ((k * 7919) % 13) as f64 * 0.3 - 1.5))
                .collect::<Vec<_>>(),
        );
        let total = rmse(&t, &r).unwrap();
        let rows = interval_rmse(&t, &r, 40.0, 10.0).unwrap();
        let n: usize = rows.iter().map(|r| r.count).sum();
        let weighted: f64 = rows
            .iter()
            .map(|r| r.count as f64 * r.rmse_bpm.unwrap().powi(2))
            .sum::<f64>()
            / n as f64;
        assert_eq!(n, 261);
        assert!((total * total - weighted).abs() < 1e-9);
    }

    #[test]
    fn family_names_round_trip() {
        for f in [
            ScenarioFamily::Respiration,
            ScenarioFamily::Masking,
            ScenarioFamily::Unmasked,
        ] {
            assert_eq!(f.as_str().parse::<ScenarioFamily>().unwrap(), f);
            f.scenario(3, 60.0).validate().unwrap();
        }
    }

    #[test]
    fn masking_classes_alternate() {
        let even = ScenarioFamily::Masking.scenario(4, 280.0);
        let odd = ScenarioFamily::Masking.scenario(5, 280.0);
        let beta = |s: &Scenario| s.heartbeat_harmonics[0].amplitude;
        assert!(even.intermod_tones[1].amplitude < beta(&even));
        assert!(odd.intermod_tones[1].amplitude > beta(&odd));
        assert!(odd.intermod_tones[1].gate.unwrap().start_s >= 40.0);
        assert!(even.intermod_tones[0].amplitude > beta(&even));
    }

    #[test]
    fn needs_two_seeds() {
        let mut cfg = MonteCarloConfig::new(ScenarioFamily::Unmasked, 1);
        cfg.duration_s = 40.0;
        assert!(monte_carlo(&cfg).is_err());
    }

    #[test]
    fn small_run_counts_and_is_deterministic() {
        let mut cfg = MonteCarloConfig::new(ScenarioFamily::Unmasked, 2);
        cfg.duration_s = 45.0;
        cfg.methods = vec![Method::Conventional, Method::Ahet];
        let a = monte_carlo(&cfg).unwrap();
        assert_eq!(a.records.len(), 2 * 3 * 2);
        assert!(a.records.iter().all(|r| r.rmse_bpm.is_some()));
        let b = monte_carlo(&cfg).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_rmse_csv(&mut x).unwrap();
        b.write_rmse_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.intervals, b.intervals);
    }
}
