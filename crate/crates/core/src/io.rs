//! On-disk formats: TOML system descriptions (versioned), delimited-text and
//! compact binary signal files, peak tables, xyz conformations, and pulse
//! timing tables.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{TimeSignal1D, TimeSignal2D};
use crate::geometry::Conformation;
use crate::sequence::PulseSchedule;
use crate::spectra::{Peak, PeakTable};
use crate::system::SpinSystem;

/// Version of the TOML system schema; bumped on breaking layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SystemFile {
    schema_version: u32,
    system: SpinSystem,
}

pub fn system_to_toml(system: &SpinSystem) -> Result<String> {
    let file = SystemFile { schema_version: SCHEMA_VERSION, system: system.clone() };
    toml::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
}

pub fn system_from_toml(text: &str) -> Result<SpinSystem> {
    let file: SystemFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    file.system.validate()?;
    Ok(file.system)
}

pub fn save_system(system: &SpinSystem, path: &Path) -> Result<()> {
    fs::write(path, system_to_toml(system)?)?;
    Ok(())
}

pub fn load_system(path: &Path) -> Result<SpinSystem> {
    system_from_toml(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// signals: tab-delimited text, and a compact little-endian binary format

pub fn write_signal_1d_text(signal: &TimeSignal1D, path: &Path) -> Result<()> {
    let mut out = String::from("# time_s\tsignal\n");
    for (t, v) in signal.axis.iter().zip(&signal.values) {
        out.push_str(&format!("{t:.17e}\t{v:.17e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_signal_2d_text(signal: &TimeSignal2D, path: &Path) -> Result<()> {
    let mut out = String::from("# t1_s\tt2_s\tsignal\n");
    for (i, t1) in signal.axis1.iter().enumerate() {
        for (j, t2) in signal.axis2.iter().enumerate() {
            out.push_str(&format!("{t1:.17e}\t{t2:.17e}\t{:.17e}\n", signal.at(i, j)));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

const SIGNAL_MAGIC: &[u8; 4] = b"NVSG";
const SIGNAL_VERSION: u8 = 1;

fn push_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct BinReader<'a>(&'a [u8]);

impl BinReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::Format("truncated signal file".into()));
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn signal_header(rank: u8, lens: &[u64]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SIGNAL_MAGIC);
    buf.push(SIGNAL_VERSION);
    buf.push(rank);
    for l in lens {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    buf
}

fn read_signal_header(r: &mut BinReader, expect_rank: u8) -> Result<()> {
    if r.take(4)? != SIGNAL_MAGIC {
        return Err(Error::Format("not a signal file (bad magic)".into()));
    }
    let ver = r.take(1)?[0];
    if ver != SIGNAL_VERSION {
        return Err(Error::Format(format!("unsupported signal version {ver}")));
    }
    let rank = r.take(1)?[0];
    if rank != expect_rank {
        return Err(Error::Format(format!("expected rank {expect_rank}, got {rank}")));
    }
    Ok(())
}

pub fn write_signal_1d_binary(signal: &TimeSignal1D, path: &Path) -> Result<()> {
    let mut buf = signal_header(1, &[signal.axis.len() as u64]);
    push_f64s(&mut buf, &signal.axis);
    push_f64s(&mut buf, &signal.values);
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_signal_1d_binary(path: &Path) -> Result<TimeSignal1D> {
    let mut raw = Vec::new();
    fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut r = BinReader(&raw);
    read_signal_header(&mut r, 1)?;
    let n = r.u64()? as usize;
    let signal = TimeSignal1D { axis: r.f64s(n)?, values: r.f64s(n)? };
    signal.validate()?;
    Ok(signal)
}

pub fn write_signal_2d_binary(signal: &TimeSignal2D, path: &Path) -> Result<()> {
    let mut buf = signal_header(2, &[signal.axis1.len() as u64, signal.axis2.len() as u64]);
    push_f64s(&mut buf, &signal.axis1);
    push_f64s(&mut buf, &signal.axis2);
    push_f64s(&mut buf, &signal.values);
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_signal_2d_binary(path: &Path) -> Result<TimeSignal2D> {
    let mut raw = Vec::new();
    fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut r = BinReader(&raw);
    read_signal_header(&mut r, 2)?;
    let n1 = r.u64()? as usize;
    let n2 = r.u64()? as usize;
    let signal = TimeSignal2D {
        axis1: r.f64s(n1)?,
        axis2: r.f64s(n2)?,
        values: r.f64s(n1 * n2)?,
    };
    signal.validate()?;
    Ok(signal)
}

// ---------------------------------------------------------------------------
// peak tables

/// Tab-delimited peak table. `frequency2_hz` is "-" for 1D peaks; `kind` is
/// "diagonal" or "cross".
pub fn peak_table_to_text(table: &PeakTable) -> String {
    let mut out = String::from("# frequency_hz\tfrequency2_hz\tamplitude\twidth_hz\tkind\n");
    for p in &table.peaks {
        let f2 = match p.frequency2_hz {
            Some(f) => format!("{f:.17e}"),
            None => "-".into(),
        };
        let kind = if p.is_cross_peak { "cross" } else { "diagonal" };
        out.push_str(&format!(
            "{:.17e}\t{f2}\t{:.17e}\t{:.17e}\t{kind}\n",
            p.frequency_hz, p.amplitude, p.width_hz
        ));
    }
    out
}

pub fn peak_table_from_text(text: &str) -> Result<PeakTable> {
    let mut peaks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Format(format!(
                "peak table line {}: expected 5 columns, got {}",
                lineno + 1,
                cols.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("peak table line {}: bad number {s:?}", lineno + 1)))
        };
        let frequency2_hz = if cols[1] == "-" { None } else { Some(num(cols[1])?) };
        let is_cross_peak = match cols[4] {
            "cross" => true,
            "diagonal" => false,
            other => {
                return Err(Error::Format(format!(
                    "peak table line {}: unknown kind {other:?}",
                    lineno + 1
                )))
            }
        };
        peaks.push(Peak {
            frequency_hz: num(cols[0])?,
            frequency2_hz,
            amplitude: num(cols[2])?,
            width_hz: num(cols[3])?,
            is_cross_peak,
        });
    }
    Ok(PeakTable { peaks })
}

pub fn save_peak_table(table: &PeakTable, path: &Path) -> Result<()> {
    fs::write(path, peak_table_to_text(table))?;
    Ok(())
}

pub fn load_peak_table(path: &Path) -> Result<PeakTable> {
    peak_table_from_text(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// conformations and timing tables

/// xyz-format conformations: positions in angstroms, one frame per
/// conformation, element symbol per vertex.
pub fn conformations_to_xyz(
    conformations: &[Conformation],
    symbols: &[&str],
    comment: &str,
) -> Result<String> {
    let mut out = String::new();
    for (k, conf) in conformations.iter().enumerate() {
        if conf.positions.len() != symbols.len() {
            return Err(Error::DimensionMismatch {
                expected: symbols.len(),
                got: conf.positions.len(),
            });
        }
        out.push_str(&format!("{}\n", symbols.len()));
        let mirror = if conf.mirror_degenerate { " mirror-degenerate" } else { "" };
        out.push_str(&format!("{comment} conformation {k}{mirror}\n"));
        for (sym, p) in symbols.iter().zip(&conf.positions) {
            out.push_str(&format!(
                "{sym} {:.6} {:.6} {:.6}\n",
                p.x * 1e10,
                p.y * 1e10,
                p.z * 1e10
            ));
        }
    }
    Ok(out)
}

pub fn save_conformations_xyz(
    conformations: &[Conformation],
    symbols: &[&str],
    comment: &str,
    path: &Path,
) -> Result<()> {
    fs::write(path, conformations_to_xyz(conformations, symbols, comment)?)?;
    Ok(())
}

pub fn save_timing_table(schedule: &PulseSchedule, path: &Path) -> Result<()> {
    fs::write(path, schedule.timing_table())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::SpinSpecies;
    use crate::system::NuclearSpin;
    use nalgebra::Vector3;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("nv2d-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn sample_system() -> SpinSystem {
        let n0 = NuclearSpin::from_position(
            SpinSpecies::c13(),
            Vector3::new(0.2e-9, 0.0, 0.9e-9),
            0,
        )
        .unwrap();
        let n1 = NuclearSpin::from_position(
            SpinSpecies::c13(),
            Vector3::new(0.2e-9, 0.154e-9, 0.9e-9),
            1,
        )
        .unwrap();
        SpinSystem::new(0.18, vec![n0, n1]).unwrap().with_field_angle(0.1)
    }

    #[test]
    fn system_toml_round_trip() {
        let sys = sample_system();
        let text = system_to_toml(&sys).unwrap();
        assert!(text.contains("schema_version = 1"));
        let back = system_from_toml(&text).unwrap();
        assert_eq!(back.nuclei.len(), 2);
        assert_eq!(back.field_magnitude, sys.field_magnitude);
        assert_eq!(back.field_polar_angle, sys.field_polar_angle);
        assert_eq!(
            back.nuclei[1].hyperfine.a_parallel(),
            sys.nuclei[1].hyperfine.a_parallel()
        );
        assert_eq!(back.coupling(0, 1).unwrap().j_zz(), sys.coupling(0, 1).unwrap().j_zz());
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let sys = sample_system();
        let text = system_to_toml(&sys).unwrap().replace("schema_version = 1", "schema_version = 99");
        assert!(matches!(system_from_toml(&text), Err(Error::Format(_))));
    }

    #[test]
    fn signal_1d_binary_round_trip_exact() {
        let dir = tmpdir("sig1");
        let sig = TimeSignal1D {
            axis: (0..64).map(|i| i as f64 * 2.5e-7).collect(),
            values: (0..64).map(|i| (i as f64 * 0.1).sin() / 3.0).collect(),
        };
        let path = dir.join("sig.bin");
        write_signal_1d_binary(&sig, &path).unwrap();
        let back = read_signal_1d_binary(&path).unwrap();
        assert_eq!(back.axis, sig.axis);
        assert_eq!(back.values, sig.values);
    }

    #[test]
    fn signal_2d_binary_round_trip_exact() {
        let dir = tmpdir("sig2");
        let sig = TimeSignal2D {
            axis1: (0..8).map(|i| i as f64 * 1e-6).collect(),
            axis2: (0..12).map(|i| i as f64 * 2e-6).collect(),
            values: (0..96).map(|i| (i as f64).cos()).collect(),
        };
        let path = dir.join("sig2.bin");
        write_signal_2d_binary(&sig, &path).unwrap();
        let back = read_signal_2d_binary(&path).unwrap();
        assert_eq!(back.axis1, sig.axis1);
        assert_eq!(back.axis2, sig.axis2);
        assert_eq!(back.values, sig.values);
    }

    #[test]
    fn truncated_binary_rejected() {
        let dir = tmpdir("trunc");
        let sig = TimeSignal1D {
            axis: vec![0.0, 1e-6, 2e-6],
            values: vec![0.5, -0.5, 0.25],
        };
        let path = dir.join("sig.bin");
        write_signal_1d_binary(&sig, &path).unwrap();
        let raw = fs::read(&path).unwrap();
        fs::write(&path, &raw[..raw.len() - 4]).unwrap();
        assert!(matches!(read_signal_1d_binary(&path), Err(Error::Format(_))));
    }

    #[test]
    fn signal_text_has_header_and_rows() {
        let dir = tmpdir("text");
        let sig = TimeSignal1D { axis: vec![0.0, 1e-6], values: vec![0.5, -0.5] };
        let path = dir.join("sig.tsv");
        write_signal_1d_text(&sig, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# time_s\tsignal\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn peak_table_text_round_trip() {
        let table = PeakTable {
            peaks: vec![
                Peak {
                    frequency_hz: 1.9275e6,
                    frequency2_hz: None,
                    amplitude: 1.0,
                    width_hz: 120.0,
                    is_cross_peak: false,
                },
                Peak {
                    frequency_hz: 1.86e6,
                    frequency2_hz: Some(1.9275e6),
                    amplitude: 0.4,
                    width_hz: 150.0,
                    is_cross_peak: true,
                },
            ],
        };
        let back = peak_table_from_text(&peak_table_to_text(&table)).unwrap();
        assert_eq!(back.peaks.len(), 2);
        assert_eq!(back.peaks[0].frequency_hz, table.peaks[0].frequency_hz);
        assert_eq!(back.peaks[0].frequency2_hz, None);
        assert_eq!(back.peaks[1].frequency2_hz, table.peaks[1].frequency2_hz);
        assert!(back.peaks[1].is_cross_peak);
    }

    #[test]
    fn malformed_peak_table_rejected() {
        assert!(peak_table_from_text("1.0\t-\t2.0\t3.0\n").is_err());
        assert!(peak_table_from_text("1.0\t-\t2.0\t3.0\tweird\n").is_err());
    }

    #[test]
    fn xyz_export_format() {
        let conf = Conformation {
            positions: vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.52e-10, 0.0, 0.0),
            ],
            mirror_degenerate: true,
        };
        let text = conformations_to_xyz(&[conf], &["C", "C"], "pair").unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "2");
        assert!(lines[1].contains("mirror-degenerate"));
        assert!(lines[3].starts_with("C 1.52"));
    }
}
