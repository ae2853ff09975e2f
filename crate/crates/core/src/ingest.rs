//! Raw cube and reference-trace files.
//!
//! A cube is stored as interleaved signed 16-bit little-endian I/Q pairs,
//! frame-major, next to a JSON sidecar (`cube.bin` + `cube.json`) that
//! records the dimensions and radar parameters.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::{RadarConfig, RadarCube};
use crate::trace::{HrTrace, Tag, TraceEntry};

const BYTES_PER_SAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCubeHeader {
    pub frames: usize,
    pub fast_time: usize,
    pub sample_format: String,
    pub endianness: String,
    /// Factor applied to the float samples before rounding.
    #[serde(default = "unit")]
    pub scale: f64,
    pub config: RadarConfig,
}

fn unit() -> f64 {
    1.0
}

impl RawCubeHeader {
    pub fn payload_bytes(&self) -> u64 {
        (self.frames * self.fast_time * BYTES_PER_SAMPLE) as u64
    }
}

/// Float to integer mapping used on write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantization {
    /// Largest component magnitude maps to 90% of `i16::MAX`.
    FullScale90,
    /// Values are rounded as-is; for cubes that already hold integers.
    Identity,
}

/// `cube.bin` → `cube.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn to_i16(v: f64) -> i16 {
    v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes the payload and its sidecar; returns the header.
pub fn write_raw_cube(
    path: &Path,
    cube: &RadarCube,
    quantization: Quantization,
) -> Result<RawCubeHeader> {
    let scale = match quantization {
        Quantization::Identity => 1.0,
        Quantization::FullScale90 => {
            let peak = cube
                .iq
                .iter()
                .map(|z| z.re.abs().max(z.im.abs()))
                .fold(0.0, f64::max);
            if peak > 0.0 {
                0.9 * i16::MAX as f64 / peak
            } else {
                1.0
            }
        }
    };
    let mut out = BufWriter::new(fs::File::create(path)?);
    for z in &cube.iq {
        out.write_all(&to_i16(z.re * scale).to_le_bytes())?;
        out.write_all(&to_i16(z.im * scale).to_le_bytes())?;
    }
    out.flush()?;

    let header = RawCubeHeader {
        frames: cube.frames,
        fast_time: cube.fast_time,
        sample_format: "i16".into(),
        endianness: "little".into(),
        scale,
        config: cube.config,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&header)?)?;
    Ok(header)
}

fn decode(path: &Path, bytes: &[u8], fast_time: usize, config: RadarConfig) -> Result<RadarCube> {
    let frame_bytes = fast_time * BYTES_PER_SAMPLE;
    if bytes.is_empty() {
        return Err(Error::MalformedCube {
            path: path.into(),
            reason: "empty file".into(),
        });
    }
    if !bytes.len().is_multiple_of(frame_bytes) {
        let frames = bytes.len().div_ceil(frame_bytes);
        return Err(Error::Truncated {
            path: path.into(),
            expected: (frames * frame_bytes) as u64,
            actual: bytes.len() as u64,
        });
    }
    let iq = bytes
        .chunks_exact(BYTES_PER_SAMPLE)
        .map(|c| {
            Complex64::new(
                i16::from_le_bytes([c[0], c[1]]) as f64,
                i16::from_le_bytes([c[2], c[3]]) as f64,
            )
        })
        .collect();
    RadarCube::new(bytes.len() / frame_bytes, fast_time, iq, config)
}

/// Reads a payload whose frame size comes from `config`. When a sidecar is
/// present its frame count is checked against the file length.
pub fn read_raw_cube(path: &Path, config: RadarConfig) -> Result<RadarCube> {
    let bytes = fs::read(path)?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let header: RawCubeHeader = serde_json::from_str(&fs::read_to_string(&sidecar)?)?;
        check_header(path, &header, bytes.len())?;
    }
    decode(path, &bytes, config.adc_samples_per_chirp, config)
}

fn check_header(path: &Path, header: &RawCubeHeader, actual: usize) -> Result<()> {
    if header.sample_format != "i16" || header.endianness != "little" {
        return Err(Error::MalformedCube {
            path: path.into(),
            reason: format!(
                "unsupported sample format {} {}",
                header.endianness, header.sample_format
            ),
        });
    }
    if header.payload_bytes() != actual as u64 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: header.payload_bytes(),
            actual: actual as u64,
        });
    }
    Ok(())
}

/// Reads a payload using the dimensions and radar settings of its sidecar.
pub fn read_cube(path: &Path) -> Result<(RadarCube, RawCubeHeader)> {
    let sidecar = sidecar_path(path);
    let header: RawCubeHeader = serde_json::from_str(&fs::read_to_string(&sidecar).map_err(
        |e| Error::MalformedCube {
            path: sidecar.clone(),
            reason: format!("cannot read sidecar: {e}"),
        },
    )?)?;
    let bytes = fs::read(path)?;
    check_header(path, &header, bytes.len())?;
    let cube = decode(path, &bytes, header.fast_time, header.config)?;
    Ok((cube, header))
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    time_s: f64,
    hr_bpm: f64,
}

/// Reads a `time_s,hr_bpm` CSV. Extra columns are ignored.
pub fn read_reference_trace(path: &Path) -> Result<HrTrace> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut entries: Vec<TraceEntry> = Vec::new();
    for (i, row) in reader.deserialize::<TruthRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::BadRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        if !(row.hr_bpm > 20.0 && row.hr_bpm < 250.0) {
            return Err(Error::BadRow {
                row: row_no,
                reason: format!("hr_bpm {} outside (20, 250)", row.hr_bpm),
            });
        }
        if !row.time_s.is_finite() {
            return Err(Error::BadRow {
                row: row_no,
                reason: "non-finite time".into(),
            });
        }
        if let Some(prev) = entries.last() {
            if row.time_s <= prev.time_s {
                return Err(Error::BadRow {
                    row: row_no,
                    reason: format!("time {} does not follow {}", row.time_s, prev.time_s),
                });
            }
        }
        entries.push(TraceEntry {
            time_s: row.time_s,
            hr_bpm: row.hr_bpm,
            tag: Tag::Reference,
            delta_hz: None,
        });
    }
    Ok(HrTrace::new(entries))
}

/// Writes `time_s,hr_bpm` with shortest round-trip formatting.
pub fn write_reference_trace<W: Write>(trace: &HrTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "hr_bpm"])?;
    for e in &trace.entries {
        w.write_record([e.time_s.to_string(), e.hr_bpm.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RadarConfig {
        RadarConfig {
            adc_samples_per_chirp: 4,
            bandwidth: 70e12 * 4.0 / 4e6,
            ..RadarConfig::default()
        }
    }

    #[test]
    fn hand_packed_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.bin");
        let values: [i16; 16] = [
            1, -1, 2, -2, 3, -3, 4, -4, 100, 200, -300, 400, 32767, -32768, 0, 7,
        ];
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, &bytes).unwrap();
        let cube = read_raw_cube(&path, small_config()).unwrap();
        assert_eq!((cube.frames, cube.fast_time), (2, 4));
        assert_eq!(cube.iq[0], Complex64::new(1.0, -1.0));
        assert_eq!(cube.iq[3], Complex64::new(4.0, -4.0));
        assert_eq!(cube.frame(1)[2], Complex64::new(32767.0, -32768.0));
        assert_eq!(cube.iq[7], Complex64::new(0.0, 7.0));
    }

    #[test]
    fn byte_exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("a.bin");
        let bytes: Vec<u8> = (0..4 * 4 * 5).map(|i| (i * 37 % 256) as u8).collect();
        fs::write(&src, &bytes).unwrap();
        let cube = read_raw_cube(&src, small_config()).unwrap();
        let dst = dir.path().join("b.bin");
        write_raw_cube(&dst, &cube, Quantization::Identity).unwrap();
        assert_eq!(fs::read(&dst).unwrap(), bytes);
        let (again, header) = read_cube(&dst).unwrap();
        assert_eq!(again, cube);
        assert_eq!(header.frames, 5);
    }

    #[test]
    fn full_scale_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let iq = vec![Complex64::new(0.5, -0.25); 8];
        let cube = RadarCube::new(2, 4, iq, small_config()).unwrap();
        let header = write_raw_cube(&path, &cube, Quantization::FullScale90).unwrap();
        let (back, _) = read_cube(&path).unwrap();
        assert_eq!(back.iq[0].re, (0.9 * 32767.0f64).round());
        assert!((back.iq[0].im / header.scale + 0.25).abs() < 1e-4);
    }

    #[test]
    fn empty_and_ragged_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        fs::write(&path, []).unwrap();
        assert!(matches!(
            read_raw_cube(&path, small_config()),
            Err(Error::MalformedCube { .. })
        ));
        fs::write(&path, [0u8; 20]).unwrap();
        match read_raw_cube(&path, small_config()) {
            Err(Error::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!((expected, actual), (32, 20));
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn sidecar_detects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let cube =
            RadarCube::new(3, 4, vec![Complex64::new(1.0, 2.0); 12], small_config()).unwrap();
        write_raw_cube(&path, &cube, Quantization::Identity).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..32]).unwrap();
        match read_cube(&path) {
            Err(Error::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!((expected, actual), (48, 32));
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    fn write_text(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("truth.csv");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn two_row_trace() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(dir.path(), "time_s,hr_bpm\n0.0,70.0\n1.0,71.0\n");
        let t = read_reference_trace(&p).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.entries[1].hr_bpm, 71.0);
    }

    #[test]
    fn out_of_range_bpm_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(dir.path(), "time_s,hr_bpm\n0,70\n1,400\n");
        match read_reference_trace(&p) {
            Err(Error::BadRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_time_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(dir.path(), "time_s,hr_bpm\n0,70\n2,71\n1,72\n");
        assert!(matches!(
            read_reference_trace(&p),
            Err(Error::BadRow { row: 3, .. })
        ));
    }

    #[test]
    fn trace_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let trace = HrTrace::new(
            (0..50)
                .map(|k| TraceEntry {
                    time_s: 10.0 + k as f64 * 0.1,
                    hr_bpm: 60.0 + (k as f64).sqrt() * 1.2767,
                    tag: Tag::Reference,
                    delta_hz: None,
                })
                .collect(),
        );
        let p = dir.path().join("r.csv");
        write_reference_trace(&trace, fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(read_reference_trace(&p).unwrap(), trace);
    }
}
