mod args;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::error::ErrorKind;
use clap::Parser;
use pulsecancel_core::harness::{monte_carlo, rmse, time_profile, MonteCarloConfig};
use pulsecancel_core::ingest::{
    read_cube, read_reference_trace, write_raw_cube, write_reference_trace, Quantization,
};
use pulsecancel_core::pipeline::{run_cube, window_spectra};
use pulsecancel_core::preprocess::preprocess;
use pulsecancel_core::scenario::{reference_trace, synthesize_radar_cube};
use pulsecancel_core::{Method, RadarCube, Scenario};

use crate::args::{BenchArgs, Cli, Command, CompareArgs, RunArgs, Source, SpectraArgs, SynthArgs};

/// Default output directory when `--out` is absent.
const OUT_DIR_VAR: &str = "PULSECANCEL_OUT_DIR";

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

trait DataContext<T> {
    fn data(self, what: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> DataContext<T> for Result<T, E> {
    fn data(self, what: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into().context(what())))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Spectra(a) => spectra(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn output_path(given: Option<PathBuf>, default_name: &str) -> PathBuf {
    given.unwrap_or_else(|| out_dir().join(default_name))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).data(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).data(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Outcome<Scenario> {
    let text = fs::read_to_string(path).data(|| format!("reading {}", path.display()))?;
    let mut s = Scenario::from_json(&text).data(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn load_cube(source: &Source) -> Outcome<RadarCube> {
    match (&source.input, &source.scenario) {
        (Some(path), None) => {
            let (cube, _) = read_cube(path).data(|| format!("reading {}", path.display()))?;
            Ok(cube)
        }
        (None, Some(path)) => {
            let s = load_scenario(path, source.seed)?;
            synthesize_radar_cube(&s).data(|| "simulating the scenario".into())
        }
        _ => Err(Failure::Usage(anyhow!(
            "give exactly one of --in and --scenario"
        ))),
    }
}

fn synth(a: SynthArgs) -> Outcome<()> {
    let s = load_scenario(&a.scenario, a.seed)?;
    let cube = synthesize_radar_cube(&s).data(|| "simulating the scenario".into())?;
    let out = output_path(a.out, "cube.bin");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).data(|| format!("creating {}", parent.display()))?;
    }
    let header = write_raw_cube(&out, &cube, Quantization::FullScale90)
        .data(|| format!("writing {}", out.display()))?;
    eprintln!(
        "wrote {} frames x {} samples to {}",
        header.frames,
        header.fast_time,
        out.display()
    );
    if let Some(path) = a.truth {
        let truth = reference_trace(&s, a.cpi, a.step).map_err(|e| Failure::Usage(e.into()))?;
        write_reference_trace(&truth, create(&path)?)
            .data(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {} reference rows to {}", truth.len(), path.display());
    }
    Ok(())
}

fn run(a: RunArgs) -> Outcome<()> {
    let cfg = a.stages.pipeline().map_err(Failure::Usage)?;
    let cube = load_cube(&a.source)?;
    let trace = run_cube(&cube, a.method, &cfg).data(|| format!("running {}", a.method))?;
    let out = output_path(a.out, "trace.csv");
    trace
        .write_csv(create(&out)?)
        .data(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} estimates to {}", trace.len(), out.display());
    Ok(())
}

fn compare(a: CompareArgs) -> Outcome<()> {
    let cfg = a.stages.pipeline().map_err(Failure::Usage)?;
    let truth = read_reference_trace(&a.truth).data(|| format!("reading {}", a.truth.display()))?;
    let cube = load_cube(&a.source)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for method in Method::ALL {
        let trace = run_cube(&cube, method, &cfg).data(|| format!("running {method}"))?;
        let e = rmse(&trace, &truth).data(|| format!("scoring {method}"))?;
        writeln!(
            out,
            "{method:<17} rmse {e:.3} BPM over {} windows",
            trace.len()
        )
        .data(|| "writing to stdout".into())?;
    }
    Ok(())
}

fn spectra(a: SpectraArgs) -> Outcome<()> {
    let cfg = a.stages.pipeline().map_err(Failure::Usage)?;
    let cube = load_cube(&a.source)?;
    let phase = preprocess(&cube, &cfg.preprocess).data(|| "preprocessing".into())?;
    let windows = window_spectra(&phase, &cfg).data(|| "computing spectra".into())?;
    let dir = output_path(a.out, "spectra");
    let mut index = create(&dir.join("windows.csv"))?;
    let w = |r: io::Result<()>| r.data(|| format!("writing {}", dir.display()));
    w(writeln!(index, "window,time_s,breathing_hz"))?;
    for (k, ws) in windows.iter().enumerate() {
        let rr = ws
            .breathing_hz
            .map(|f| format!("{f:.6}"))
            .unwrap_or_default();
        w(writeln!(index, "{k},{:.3},{rr}", ws.time_s))?;
        for (name, spectrum) in [("raw", &ws.raw), ("cleaned", &ws.cleaned)] {
            if let Some(s) = spectrum {
                let path = dir.join(format!("window_{k:04}_{name}.csv"));
                s.write_csv(create(&path)?, a.max_hz)
                    .data(|| format!("writing {}", path.display()))?;
            }
        }
    }
    w(index.flush())?;
    eprintln!(
        "wrote spectra of {} windows to {}",
        windows.len(),
        dir.display()
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Outcome<()> {
    if a.seeds == 0 || a.cpis.is_empty() {
        return Err(Failure::Usage(anyhow!(
            "need at least one seed and one CPI"
        )));
    }
    let mut cfg = MonteCarloConfig::new(a.family, a.seeds);
    cfg.cpis = a.cpis;
    cfg.duration_s = a.duration;
    let mut report = monte_carlo(&cfg).data(|| format!("running the {} family", a.family))?;
    if a.repeats > 0 {
        let scenario = a.family.scenario(cfg.seeds[0], cfg.duration_s);
        let cube =
            synthesize_radar_cube(&scenario).data(|| "simulating the timing record".into())?;
        match time_profile(&cube, &cfg.methods, &cfg.pipeline, a.repeats) {
            Ok(rows) => report.timing = rows,
            Err(e) => eprintln!("timing skipped: {e}"),
        }
    }
    let dir = output_path(a.out, "report");
    fs::create_dir_all(&dir).data(|| format!("creating {}", dir.display()))?;
    report
        .write_dir(&dir)
        .data(|| format!("writing {}", dir.display()))?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for m in &report.medians {
        let median = m
            .median_bpm
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "cpi {:>4} s  {:<17} median rmse {median} BPM  ({} runs, {} failed)",
            m.cpi_s, m.method, m.runs, m.failures
        )
        .data(|| "writing to stdout".into())?;
    }
    for t in &report.timing {
        writeln!(
            out,
            "timing {:<17} {:.3} s  x{:.2}",
            t.method, t.wall_s, t.ratio
        )
        .data(|| "writing to stdout".into())?;
    }
    Ok(())
}
