//! `nv2d`: batch runner for the simulation / inversion pipeline.
//!
//! Subcommands:
//!   run <config.toml>   simulate, process, inver t and write artifacts
//!   verify <dir>        re-run bundled configs and compare peak tables
//!                       against their goldens
//!   schema              print the annotated config template
//!
//! Every text artifact starts with a `# config_hash=... schema_version=...`
//! header so outputs can be traced back to the exact configuration. Peak
//! tables and reports are byte-identical regardless of worker count; wall
//! time therefore lives in its own file, not in the report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use nalgebra::Vector3;
use serde::Deserialize;
use serde_json::json;

use nv2d_core::constants::{larmor_frequency, SpeciesTable};
use nv2d_core::experiment::{
    correlation_scan, cosy_2d, dd_scan, hetero_2d, DdBlockParams, HeteroParams, Noise, Sweep,
    TimeSignal1D, TimeSignal2D,
};
use nv2d_core::geometry::{branch_and_prune, couplings_to_distances, BranchPruneParams};
use nv2d_core::inversion::lattice::{lattice_search, LatticeSearchParams, MeasuredCouplings};
use nv2d_core::inversion::estimate_hyperfine;
use nv2d_core::io::{self, SCHEMA_VERSION};
use nv2d_core::sequence::{compile_dd, PhasePattern};
use nv2d_core::spectra::{
    fft_1d, fft_2d, folded_quadrant, pick_peaks_1d, pick_peaks_2d, Part, PeakPickParams,
    PeakTable, Spectrum1D, Spectrum2D, Window,
};
use nv2d_core::system::{NuclearSpin, SpinSystem};
use nv2d_core::tensor::DipolarTensor;

const ENV_MAX_THREADS: &str = "NV2D_MAX_THREADS";

// ---------------------------------------------------------------------------
// configuration schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    schema_version: u32,
    /// Seed for the measurement-noise stream.
    #[serde(default)]
    seed: u64,
    system: SystemConfig,
    experiment: ExperimentConfig,
    #[serde(default)]
    processing: ProcessingConfig,
    #[serde(default)]
    inversion: InversionConfig,
    #[serde(default)]
    geometry: GeometryConfig,
    #[serde(default)]
    output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemConfig {
    field_tesla: f64,
    #[serde(default)]
    field_polar_angle_deg: f64,
    /// NV gradient field along z, Tesla/meter.
    #[serde(default)]
    gradient_t_per_m: f64,
    nuclei: Vec<NucleusConfig>,
    /// Optional explicit secular pair couplings; pairs not listed derive
    /// their tensor from the positions.
    #[serde(default)]
    pair_couplings: Vec<PairCouplingConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NucleusConfig {
    species: String,
    position_nm: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairCouplingConfig {
    i: usize,
    j: usize,
    j_zz_hz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    /// "ddscan" | "corr" | "cosy2d" | "hetero2d"
    kind: String,
    #[serde(default = "default_n_pulses")]
    n_pulses: usize,
    /// "xy8" | "cpmg"
    #[serde(default = "default_pattern")]
    pattern: String,
    /// Interpulse spacing, seconds. Omit to lock onto the resonance of the
    /// first nucleus: tau = 1 / (2 (omega_L - A_par / 2)).
    spacing_s: Option<f64>,
    /// Swept axis: interpulse spacing for ddscan, evolution time otherwise.
    sweep: SweepConfig,
    /// Second (t2) axis for 2D experiments; defaults to `sweep`.
    sweep2: Option<SweepConfig>,
    /// Pulses in the COSY mixing block.
    mixing_pulses: Option<usize>,
    /// Heteronuclear init/readout train duration, seconds.
    block_time_s: Option<f64>,
    /// The two species addressed by the heteronuclear trains.
    species_pair: Option<[String; 2]>,
    /// Additive Gaussian read-noise level.
    #[serde(default)]
    noise_sigma: f64,
    /// "present" | "absent": assert cross peaks in the report.
    expect_cross_peaks: Option<String>,
}

fn default_n_pulses() -> usize {
    8
}

fn default_pattern() -> String {
    "xy8".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    start: f64,
    stop: f64,
    n: usize,
}

impl SweepConfig {
    fn build(&self) -> Result<Sweep, String> {
        Sweep::new(self.start, self.stop, self.n)
            .map_err(|e| format!("experiment.sweep: {e}"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ProcessingConfig {
    /// "none" | "hann"
    window: String,
    zero_pad: usize,
    threshold_rel: f64,
    min_separation: usize,
    /// "magnitude" | "real"
    part: String,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        Self {
            window: "hann".into(),
            zero_pad: 4,
            threshold_rel: 0.1,
            min_separation: 2,
            part: "magnitude".into(),
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct InversionConfig {
    enabled: bool,
    lattice_radius_nm: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct GeometryConfig {
    enabled: bool,
    /// Measured dipolar strengths (angular factors removed) per vertex pair.
    couplings: Vec<GeometryCoupling>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryCoupling {
    i: usize,
    j: usize,
    strength_hz: f64,
    sigma_hz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OutputConfig {
    dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "runs".into() }
    }
}

// ---------------------------------------------------------------------------
// CLI surface

#[derive(Parser)]
#[command(name = "nv2d", version, about = "NV-center 2D NMR simulation and inversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a TOML config.
    Run {
        /// Path to the configuration file.
        config: PathBuf,
    },
    /// Re-run every config in a directory and compare its peak table
    /// against the sibling `<name>.golden.peaks.txt`.
    Verify {
        /// Directory holding config/golden pairs.
        dir: PathBuf,
    },
    /// Print the annotated configuration template.
    Schema,
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var(ENV_MAX_THREADS) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // failure to rebuild an existing pool only affects sizing
                let _ = nv2d_core::par::limit_threads(n);
            }
            _ => {
                return fail(2, "env", &format!("{ENV_MAX_THREADS} must be a positive integer"));
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { dir } => cmd_verify(&dir),
        Command::Schema => {
            print!("{}", schema_text());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.exit_code, &e.stage, &e.message),
    }
}

struct CliError {
    exit_code: u8,
    stage: String,
    message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self { exit_code: 2, stage: "config".into(), message: msg.into() }
    }

    fn stage(stage: &str, msg: impl Into<String>) -> Self {
        Self { exit_code: 1, stage: stage.into(), message: msg.into() }
    }
}

/// Structured error record on stderr, nonzero exit.
fn fail(code: u8, stage: &str, message: &str) -> ExitCode {
    let record = json!({ "error": { "stage": stage, "message": message } });
    eprintln!("{record}");
    ExitCode::from(code)
}

// ---------------------------------------------------------------------------
// config loading and resolution

/// FNV-1a 64-bit over the raw config bytes; stable across platforms.
fn config_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

struct Loaded {
    config: Config,
    raw: String,
    hash: u64,
}

fn load_config(path: &Path) -> Result<Loaded, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let config: Config = toml::from_str(&raw)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::config(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            config.schema_version
        )));
    }
    let hash = config_hash(raw.as_bytes());
    Ok(Loaded { config, raw, hash })
}

fn build_system(cfg: &SystemConfig) -> Result<SpinSystem, CliError> {
    if cfg.nuclei.is_empty() {
        return Err(CliError::config("system.nuclei: at least one nucleus required"));
    }
    let table = SpeciesTable::default();
    let mut nuclei = Vec::with_capacity(cfg.nuclei.len());
    for (k, n) in cfg.nuclei.iter().enumerate() {
        let species = table
            .get(&n.species)
            .map_err(|e| CliError::config(format!("system.nuclei[{k}].species: {e}")))?;
        let p = Vector3::new(n.position_nm[0], n.position_nm[1], n.position_nm[2]) * 1e-9;
        let spin = NuclearSpin::from_position(species, p, k)
            .map_err(|e| CliError::config(format!("system.nuclei[{k}].position_nm: {e}")))?;
        nuclei.push(spin);
    }
    let mut sys = SpinSystem::new(cfg.field_tesla, nuclei)
        .map_err(|e| CliError::config(format!("system: {e}")))?
        .with_field_angle(cfg.field_polar_angle_deg.to_radians())
        .with_gradient(cfg.gradient_t_per_m);
    for (k, pc) in cfg.pair_couplings.iter().enumerate() {
        // secular traceless tensor with the requested zz component
        let j = pc.j_zz_hz;
        let m = nalgebra::Matrix3::from_diagonal(&Vector3::new(-j / 2.0, -j / 2.0, j));
        let t = DipolarTensor::new(m)
            .map_err(|e| CliError::config(format!("system.pair_couplings[{k}]: {e}")))?;
        sys.set_pair_coupling(pc.i, pc.j, t)
            .map_err(|e| CliError::config(format!("system.pair_couplings[{k}]: {e}")))?;
    }
    sys.validate().map_err(|e| CliError::config(format!("system: {e}")))?;
    Ok(sys)
}

fn parse_pattern(s: &str) -> Result<PhasePattern, CliError> {
    match s {
        "xy8" => Ok(PhasePattern::Xy8),
        "cpmg" => Ok(PhasePattern::Cpmg),
        other => Err(CliError::config(format!(
            "experiment.pattern: expected \"xy8\" or \"cpmg\", got \"{other}\""
        ))),
    }
}

fn parse_window(s: &str) -> Result<Window, CliError> {
    match s {
        "none" => Ok(Window::None),
        "hann" => Ok(Window::Hann),
        other => Err(CliError::config(format!(
            "processing.window: expected \"none\" or \"hann\", got \"{other}\""
        ))),
    }
}

fn parse_part(s: &str) -> Result<Part, CliError> {
    match s {
        "magnitude" => Ok(Part::Magnitude),
        "real" => Ok(Part::Real),
        other => Err(CliError::config(format!(
            "processing.part: expected \"magnitude\" or \"real\", got \"{other}\""
        ))),
    }
}

/// Resonant interpulse spacing of nucleus 0, tau = 1 / (2 (omega_L - A_par/2)).
fn resonance_spacing(sys: &SpinSystem) -> Result<f64, CliError> {
    let n = &sys.nuclei[0];
    let omega_l = larmor_frequency(&n.species, sys.field_magnitude)
        .map_err(|e| CliError::config(format!("system.field_tesla: {e}")))?;
    let f = omega_l.abs() - n.hyperfine.a_parallel() / 2.0 * omega_l.signum();
    if f <= 0.0 {
        return Err(CliError::config(
            "experiment.spacing_s: no positive resonance for nucleus 0; set spacing_s explicitly",
        ));
    }
    Ok(1.0 / (2.0 * f))
}

// ---------------------------------------------------------------------------
// pipeline

enum SignalData {
    One(TimeSignal1D),
    Two(TimeSignal2D),
}

enum SpectrumData {
    None,
    One(Spectrum1D),
    Two(Spectrum2D),
}

/// Everything `run` writes and `verify` compares, produced deterministically.
struct PipelineOutput {
    system: SpinSystem,
    signal: SignalData,
    spectrum: SpectrumData,
    /// Compiled DD train (resolved spacing), for the timing table.
    schedule: nv2d_core::sequence::PulseSchedule,
    peaks: PeakTable,
    /// (bin1, bin2) in Hz; bin2 = 0 for 1D spectra, both 0 for ddscan.
    bins: (f64, f64),
    report: serde_json::Value,
    hypotheses: Option<Vec<nv2d_core::inversion::lattice::StructureHypothesis>>,
    conformations_xyz: Option<String>,
}

fn run_pipeline(loaded: &Loaded) -> Result<PipelineOutput, CliError> {
    let cfg = &loaded.config;
    let sys = build_system(&cfg.system)?;
    let exp = &cfg.experiment;
    let pattern = parse_pattern(&exp.pattern)?;
    let sweep = exp.sweep.build().map_err(CliError::config)?;
    let noise = (exp.noise_sigma > 0.0)
        .then_some(Noise { sigma: exp.noise_sigma, seed: cfg.seed });
    let spacing = match exp.spacing_s {
        Some(s) if s > 0.0 => s,
        Some(_) => return Err(CliError::config("experiment.spacing_s: must be > 0")),
        None => resonance_spacing(&sys)?,
    };
    let dd = DdBlockParams { n_pulses: exp.n_pulses, spacing, pattern: pattern.clone() };
    let schedule = compile_dd(exp.n_pulses, spacing, pattern)
        .map_err(|e| CliError::config(format!("experiment: {e}")))?;

    let signal = match exp.kind.as_str() {
        "ddscan" => SignalData::One(
            dd_scan(&sys, exp.n_pulses, dd.pattern.clone(), &sweep, noise.as_ref())
                .map_err(|e| CliError::stage("simulate", e.to_string()))?,
        ),
        "corr" => SignalData::One(
            correlation_scan(&sys, &dd, &sweep, noise.as_ref())
                .map_err(|e| CliError::stage("simulate", e.to_string()))?,
        ),
        "cosy2d" => {
            let mixing = exp.mixing_pulses.ok_or_else(|| {
                CliError::config("experiment.mixing_pulses: required for kind=\"cosy2d\"")
            })?;
            let sweep2 = match &exp.sweep2 {
                Some(s) => s.build().map_err(CliError::config)?,
                None => sweep,
            };
            SignalData::Two(
                cosy_2d(&sys, &dd, mixing, &sweep, &sweep2, noise.as_ref())
                    .map_err(|e| CliError::stage("simulate", e.to_string()))?,
            )
        }
        "hetero2d" => {
            let block_time = exp.block_time_s.ok_or_else(|| {
                CliError::config("experiment.block_time_s: required for kind=\"hetero2d\"")
            })?;
            let pair = exp.species_pair.as_ref().ok_or_else(|| {
                CliError::config("experiment.species_pair: required for kind=\"hetero2d\"")
            })?;
            let params = HeteroParams {
                species: (pair[0].clone(), pair[1].clone()),
                block_time,
            };
            let sweep2 = match &exp.sweep2 {
                Some(s) => s.build().map_err(CliError::config)?,
                None => sweep,
            };
            SignalData::Two(
                hetero_2d(&sys, &params, &sweep, &sweep2, noise.as_ref())
                    .map_err(|e| CliError::stage("simulate", e.to_string()))?,
            )
        }
        other => {
            return Err(CliError::config(format!(
                "experiment.kind: expected ddscan|corr|cosy2d|hetero2d, got \"{other}\""
            )));
        }
    };

    // spectral processing and peak picking
    let proc = &cfg.processing;
    let window = parse_window(&proc.window)?;
    let pick = PeakPickParams {
        threshold_rel: proc.threshold_rel,
        min_separation: proc.min_separation,
        part: parse_part(&proc.part)?,
    };
    let (spectrum, peaks, bins) = match &signal {
        SignalData::One(_) if exp.kind == "ddscan" => {
            // a spacing scan is a dip trace, not a time series
            (SpectrumData::None, PeakTable::default(), (0.0, 0.0))
        }
        SignalData::One(sig) => {
            let spec = fft_1d(sig, window, proc.zero_pad)
                .map_err(|e| CliError::stage("process", e.to_string()))?;
            let mut table = pick_peaks_1d(&spec, &pick)
                .map_err(|e| CliError::stage("process", e.to_string()))?;
            // drop the conjugate mirror half
            let fs = *spec.frequencies.last().unwrap();
            table.peaks.retain(|p| p.frequency_hz <= fs / 2.0 + spec.bin_width() / 2.0);
            let bin = spec.bin_width();
            (SpectrumData::One(spec), table, (bin, 0.0))
        }
        SignalData::Two(sig) => {
            let spec = fft_2d(sig, window, proc.zero_pad)
                .map_err(|e| CliError::stage("process", e.to_string()))?;
            let table = pick_peaks_2d(&spec, &pick)
                .map_err(|e| CliError::stage("process", e.to_string()))?;
            let bins = (spec.bin_width1(), spec.bin_width2());
            (SpectrumData::Two(spec), table, bins)
        }
    };

    // cross-peak assertion
    let n_cross = peaks.cross().count();
    let n_diag = peaks.diagonal().count();
    let cross_check = match exp.expect_cross_peaks.as_deref() {
        None => None,
        Some("present") => Some(("present", n_cross >= 2)),
        Some("absent") => Some(("absent", n_cross == 0)),
        Some(other) => {
            return Err(CliError::config(format!(
                "experiment.expect_cross_peaks: expected \"present\" or \"absent\", got \"{other}\""
            )));
        }
    };

    // lattice inversion from the diagonal lines
    let mut inversion_report = json!(null);
    let mut hypotheses = None;
    if cfg.inversion.enabled {
        let omega_l = larmor_frequency(&sys.nuclei[0].species, sys.field_magnitude)
            .map_err(|e| CliError::stage("invert", e.to_string()))?
            .abs();
        let diag = PeakTable { peaks: peaks.diagonal().cloned().collect() };
        let bin = bins.0.max(bins.1);
        match invert_lattice(&cfg.inversion, &sys, &diag, omega_l, bin) {
            Ok((hyps, summary)) => {
                inversion_report = summary;
                hypotheses = Some(hyps);
            }
            // inversion failure is reported, not fatal: the spectrum may
            // simply not constrain a two-spin lattice model
            Err(msg) => inversion_report = json!({ "error": msg }),
        }
    }

    // distance-geometry reconstruction from explicit couplings
    let mut geometry_report = json!(null);
    let mut conformations_xyz = None;
    if cfg.geometry.enabled {
        let (xyz, summary) = solve_geometry(&cfg.geometry, &sys, loaded.hash)?;
        geometry_report = summary;
        conformations_xyz = Some(xyz);
    }

    let mut report = json!({
        "config_hash": format!("{:016x}", loaded.hash),
        "schema_version": SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "experiment": exp.kind,
        "seed": cfg.seed,
        "n_nuclei": sys.nuclei.len(),
        "bin_hz": [bins.0, bins.1],
        "n_peaks": peaks.peaks.len(),
        "n_diagonal": n_diag,
        "n_cross": n_cross,
        "inversion": inversion_report,
        "geometry": geometry_report,
    });
    if exp.kind == "ddscan" {
        if let SignalData::One(sig) = &signal {
            let k = sig
                .values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            report["dip_spacing_s"] = json!(sig.axis[k]);
        }
    }
    if let Some((expected, pass)) = cross_check {
        report["cross_peak_check"] =
            json!({ "expected": expected, "observed_cross": n_cross, "pass": pass });
        if !pass {
            // still emit the report so the failure can be inspected
            return Err(CliError {
                exit_code: 1,
                stage: "assert".into(),
                message: format!(
                    "cross-peak check failed: expected {expected}, found {n_cross} cross peaks"
                ),
            });
        }
    }

    Ok(PipelineOutput {
        system: sys,
        signal,
        spectrum,
        schedule,
        peaks,
        bins,
        report,
        hypotheses,
        conformations_xyz,
    })
}

fn invert_lattice(
    cfg: &InversionConfig,
    sys: &SpinSystem,
    diag: &PeakTable,
    omega_l: f64,
    bin: f64,
) -> Result<
    (Vec<nv2d_core::inversion::lattice::StructureHypothesis>, serde_json::Value),
    String,
> {
    let est = estimate_hyperfine(diag, omega_l, bin).map_err(|e| e.to_string())?;
    if est.a_parallel.len() != 2 {
        return Err(format!(
            "lattice search needs two hyperfine clusters, found {}",
            est.a_parallel.len()
        ));
    }
    let j = est.j_zz.as_ref().ok_or("no resolvable J_zz splitting")?;
    let measured = MeasuredCouplings {
        a_parallel: [
            (est.a_parallel[0].value, est.a_parallel[0].sigma.max(bin)),
            (est.a_parallel[1].value, est.a_parallel[1].sigma.max(bin)),
        ],
        j_zz: (j.value, j.sigma.max(bin)),
    };
    let mut params = LatticeSearchParams {
        field_polar_angle: sys.field_polar_angle,
        ..LatticeSearchParams::default()
    };
    if let Some(r) = cfg.lattice_radius_nm {
        params.radius = r * 1e-9;
    }
    let hyps = lattice_search(&measured, &sys.nuclei[0].species, &params)
        .map_err(|e| e.to_string())?;
    let summary = json!({
        "measured": {
            "a_parallel_hz": [measured.a_parallel[0].0, measured.a_parallel[1].0],
            "j_zz_hz": measured.j_zz.0,
        },
        "n_hypotheses": hyps.len(),
        "best_class": hyps.first().map(|h| h.symmetry_class.clone()),
        "best_residual": hyps.first().map(|h| h.residual),
    });
    Ok((hyps, summary))
}

fn solve_geometry(
    cfg: &GeometryConfig,
    sys: &SpinSystem,
    hash: u64,
) -> Result<(String, serde_json::Value), CliError> {
    if cfg.couplings.is_empty() {
        return Err(CliError::config(
            "geometry.couplings: required when geometry.enabled = true",
        ));
    }
    let species: Vec<_> = sys.nuclei.iter().map(|n| n.species.clone()).collect();
    let pairs: Vec<_> = cfg
        .couplings
        .iter()
        .map(|c| ((c.i, c.j), (c.strength_hz, c.sigma_hz)))
        .collect();
    let constraints = couplings_to_distances(&pairs, &species)
        .map_err(|e| CliError::config(format!("geometry.couplings: {e}")))?;
    let confs = branch_and_prune(sys.nuclei.len(), &constraints, &BranchPruneParams::default())
        .map_err(|e| CliError::stage("geometry", e.to_string()))?;
    // element symbol = trailing alphabetic part of the species name
    let symbols: Vec<String> = species
        .iter()
        .map(|s| s.name.trim_start_matches(|c: char| c.is_ascii_digit()).to_string())
        .collect();
    let symbol_refs: Vec<&str> = symbols.iter().map(String::as_str).collect();
    let comment = format!("config_hash={hash:016x} schema_version={SCHEMA_VERSION}");
    let xyz = io::conformations_to_xyz(&confs, &symbol_refs, &comment)
        .map_err(|e| CliError::stage("geometry", e.to_string()))?;
    let summary = json!({
        "n_constraints": constraints.len(),
        "n_conformations": confs.len(),
        "mirror_degenerate": confs.iter().filter(|c| c.mirror_degenerate).count(),
    });
    Ok((xyz, summary))
}

// ---------------------------------------------------------------------------
// run: write artifacts

fn header(hash: u64) -> String {
    format!("# config_hash={hash:016x} schema_version={SCHEMA_VERSION}\n")
}

fn write_with_header(path: &Path, hash: u64, body: &str) -> Result<(), CliError> {
    fs::write(path, format!("{}{}", header(hash), body))
        .map_err(|e| CliError::stage("write", format!("{}: {e}", path.display())))
}

/// UTC timestamp `YYYYMMDDTHHMMSSZ` from the system clock (civil-from-days).
fn utc_stamp() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = (secs / 86_400) as i64;
    let (h, m, s) = {
        let t = secs % 86_400;
        (t / 3600, (t / 60) % 60, t % 60)
    };
    // Gregorian civil date from day count (era decomposition)
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let mo = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = if mo <= 2 { y + 1 } else { y };
    format!("{y:04}{mo:02}{d:02}T{h:02}{m:02}{s:02}Z")
}

fn make_run_dir(base: &str) -> Result<PathBuf, CliError> {
    let stamp = utc_stamp();
    for k in 0.. {
        let name = if k == 0 {
            format!("run-{stamp}")
        } else {
            format!("run-{stamp}-{k}")
        };
        let dir = Path::new(base).join(name);
        match fs::create_dir_all(dir.parent().unwrap())
            .and_then(|_| fs::create_dir(&dir))
        {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => {
                return Err(CliError::stage("write", format!("{}: {e}", dir.display())));
            }
        }
    }
    unreachable!()
}

fn signal_1d_text(sig: &TimeSignal1D) -> String {
    let mut out = String::from("# time_s\tsignal\n");
    for (t, v) in sig.axis.iter().zip(&sig.values) {
        out.push_str(&format!("{t:.17e}\t{v:.17e}\n"));
    }
    out
}

fn signal_2d_text(sig: &TimeSignal2D) -> String {
    let mut out = String::from("# t1_s\tt2_s\tsignal\n");
    for (i, t1) in sig.axis1.iter().enumerate() {
        for (j, t2) in sig.axis2.iter().enumerate() {
            out.push_str(&format!("{t1:.17e}\t{t2:.17e}\t{:.17e}\n", sig.at(i, j)));
        }
    }
    out
}

fn spectrum_1d_text(spec: &Spectrum1D) -> String {
    let mut out = String::from("# frequency_hz\tmagnitude\n");
    let fs = *spec.frequencies.last().unwrap();
    for (f, v) in spec.frequencies.iter().zip(&spec.values) {
        if *f > fs / 2.0 {
            break;
        }
        out.push_str(&format!("{f:.17e}\t{:.17e}\n", v.norm()));
    }
    out
}

fn spectrum_2d_text(spec: &Spectrum2D, part: Part) -> String {
    let (vals, n1, n2) = folded_quadrant(spec, part);
    let (b1, b2) = (spec.bin_width1(), spec.bin_width2());
    let mut out = String::from("# f1_hz\tf2_hz\tvalue\n");
    for i in 0..n1 {
        for j in 0..n2 {
            out.push_str(&format!(
                "{:.17e}\t{:.17e}\t{:.17e}\n",
                i as f64 * b1,
                j as f64 * b2,
                vals[i * n2 + j]
            ));
        }
    }
    out
}

fn cmd_run(config_path: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_config(config_path)?;
    let out = run_pipeline(&loaded)?;
    let dir = make_run_dir(&loaded.config.output.dir)?;
    let hash = loaded.hash;

    fs::write(dir.join("config.toml"), &loaded.raw)
        .map_err(|e| CliError::stage("write", e.to_string()))?;
    let sys_toml = io::system_to_toml(&out.system)
        .map_err(|e| CliError::stage("write", e.to_string()))?;
    write_with_header(&dir.join("system.toml"), hash, &sys_toml)?;

    match &out.signal {
        SignalData::One(sig) => {
            write_with_header(&dir.join("signal.txt"), hash, &signal_1d_text(sig))?;
        }
        SignalData::Two(sig) => {
            write_with_header(&dir.join("signal.txt"), hash, &signal_2d_text(sig))?;
        }
    }
    let part = parse_part(&loaded.config.processing.part)?;
    match &out.spectrum {
        SpectrumData::None => {}
        SpectrumData::One(spec) => {
            write_with_header(&dir.join("spectrum.txt"), hash, &spectrum_1d_text(spec))?;
        }
        SpectrumData::Two(spec) => {
            write_with_header(&dir.join("spectrum.txt"), hash, &spectrum_2d_text(spec, part))?;
        }
    }
    write_with_header(&dir.join("peaks.txt"), hash, &io::peak_table_to_text(&out.peaks))?;
    write_with_header(&dir.join("timing.txt"), hash, &out.schedule.timing_table())?;
    if let Some(hyps) = &out.hypotheses {
        let body = serde_json::to_string_pretty(&json!({
            "config_hash": format!("{hash:016x}"),
            "schema_version": SCHEMA_VERSION,
            "hypotheses": hyps,
        }))
        .map_err(|e| CliError::stage("write", e.to_string()))?;
        fs::write(dir.join("hypotheses.json"), body + "\n")
            .map_err(|e| CliError::stage("write", e.to_string()))?;
    }
    if let Some(xyz) = &out.conformations_xyz {
        fs::write(dir.join("conformations.xyz"), xyz)
            .map_err(|e| CliError::stage("write", e.to_string()))?;
    }
    let report = serde_json::to_string_pretty(&out.report)
        .map_err(|e| CliError::stage("write", e.to_string()))?;
    fs::write(dir.join("report.json"), report + "\n")
        .map_err(|e| CliError::stage("write", e.to_string()))?;
    // wall time is machine-dependent and deliberately kept out of the report
    let wall = started.elapsed().as_secs_f64();
    fs::write(dir.join("walltime.txt"), format!("{}wall_s\t{wall:.3}\n", header(hash)))
        .map_err(|e| CliError::stage("write", e.to_string()))?;

    println!("{}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// verify: golden comparison

const GOLDEN_FREQ_BINS: f64 = 1.0;
const GOLDEN_AMP_REL: f64 = 0.05;

fn peak_kind(p: &nv2d_core::spectra::Peak) -> &'static str {
    if p.is_cross_peak {
        "cross"
    } else {
        "diagonal"
    }
}

fn describe(p: &nv2d_core::spectra::Peak) -> String {
    match p.frequency2_hz {
        Some(f2) => format!(
            "{} ({:.1}, {:.1}) Hz amp {:.4e}",
            peak_kind(p),
            p.frequency_hz,
            f2,
            p.amplitude
        ),
        None => format!("{} {:.1} Hz amp {:.4e}", peak_kind(p), p.frequency_hz, p.amplitude),
    }
}

/// Match every golden peak to a fresh peak of the same kind within one bin
/// per axis and 5% relative amplitude; peak counts must agree.
fn compare_tables(
    golden: &PeakTable,
    fresh: &PeakTable,
    bins: (f64, f64),
) -> Vec<String> {
    let mut problems = Vec::new();
    if golden.peaks.len() != fresh.peaks.len() {
        problems.push(format!(
            "peak count: golden {}, fresh {}",
            golden.peaks.len(),
            fresh.peaks.len()
        ));
    }
    let ftol1 = GOLDEN_FREQ_BINS * bins.0;
    let ftol2 = GOLDEN_FREQ_BINS * if bins.1 > 0.0 { bins.1 } else { bins.0 };
    let mut used = vec![false; fresh.peaks.len()];
    for g in &golden.peaks {
        let candidate = fresh
            .peaks
            .iter()
            .enumerate()
            .filter(|(k, p)| {
                !used[*k]
                    && p.is_cross_peak == g.is_cross_peak
                    && (p.frequency_hz - g.frequency_hz).abs() <= ftol1
                    && match (p.frequency2_hz, g.frequency2_hz) {
                        (Some(a), Some(b)) => (a - b).abs() <= ftol2,
                        (None, None) => true,
                        _ => false,
                    }
            })
            .min_by(|a, b| {
                let da = (a.1.frequency_hz - g.frequency_hz).abs();
                let db = (b.1.frequency_hz - g.frequency_hz).abs();
                da.total_cmp(&db)
            });
        match candidate {
            None => problems.push(format!("no match for golden {}", describe(g))),
            Some((k, p)) => {
                used[k] = true;
                let rel = (p.amplitude - g.amplitude).abs() / g.amplitude.abs().max(1e-300);
                if rel > GOLDEN_AMP_REL {
                    problems.push(format!(
                        "amplitude off by {:.1}% for golden {}",
                        rel * 100.0,
                        describe(g)
                    ));
                }
            }
        }
    }
    problems
}

fn cmd_verify(dir: &Path) -> Result<(), CliError> {
    let mut configs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|r| r.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        return Err(CliError::config(format!(
            "no .toml configs found in {}",
            dir.display()
        )));
    }
    let mut failures = 0usize;
    for path in &configs {
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let golden_path = path.with_file_name(format!("{stem}.golden.peaks.txt"));
        let golden_text = fs::read_to_string(&golden_path).map_err(|e| {
            CliError::config(format!("missing golden {}: {e}", golden_path.display()))
        })?;
        let golden = io::peak_table_from_text(&golden_text)
            .map_err(|e| CliError::config(format!("{}: {e}", golden_path.display())))?;
        let loaded = load_config(path)?;
        let out = run_pipeline(&loaded)?;
        let problems = compare_tables(&golden, &out.peaks, out.bins);
        if problems.is_empty() {
            println!("verify {stem}: PASS ({} peaks)", golden.peaks.len());
        } else {
            failures += 1;
            println!("verify {stem}: FAIL");
            for p in &problems {
                println!("  {p}");
            }
        }
    }
    if failures > 0 {
        return Err(CliError::stage(
            "verify",
            format!("{failures} of {} configs mismatched", configs.len()),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn schema_text() -> &'static str {
    r#"# nv2d configuration template (TOML). Units are noted per key.

schema_version = 1     # must match the tool's schema version
seed = 0               # noise stream seed (used when noise_sigma > 0)

[system]
field_tesla = 0.18           # external field magnitude, Tesla
field_polar_angle_deg = 0.0  # field tilt from the NV axis, degrees
gradient_t_per_m = 0.0       # NV gradient field along z, Tesla/meter

[[system.nuclei]]            # one block per nucleus
species = "13C"              # "13C" | "1H" | "15N"
position_nm = [0.35, 0.0, 0.8]

# Optional explicit secular couplings; unlisted pairs derive their tensor
# from the positions.
# [[system.pair_couplings]]
# i = 0
# j = 1
# j_zz_hz = 0.0

[experiment]
kind = "cosy2d"              # "ddscan" | "corr" | "cosy2d" | "hetero2d"
n_pulses = 8                 # pulses per decoupling block
pattern = "xy8"              # "xy8" | "cpmg"
# spacing_s = 2.56e-7        # interpulse spacing; omit to lock onto the
                             # resonance of the first nucleus
sweep = { start = 4e-6, stop = 0.9e-3, n = 50 }   # seconds
# sweep2 = { ... }           # t2 axis for 2D kinds; defaults to sweep
mixing_pulses = 40           # cosy2d only
# block_time_s = 30e-6       # hetero2d only
# species_pair = ["13C", "15N"]  # hetero2d only
noise_sigma = 0.0            # additive Gaussian read noise
# expect_cross_peaks = "present"  # "present" | "absent": checked in report

[processing]
window = "hann"              # "none" | "hann"
zero_pad = 4                 # zero-padding factor (1 = none)
threshold_rel = 0.1          # peak threshold, fraction of spectrum maximum
min_separation = 2           # minimum peak separation, bins
part = "magnitude"           # "magnitude" | "real"

[inversion]
enabled = false              # lattice search from the diagonal lines
# lattice_radius_nm = 1.5    # candidate-site enumeration radius

[geometry]
enabled = false              # distance-geometry reconstruction
# [[geometry.couplings]]     # measured dipolar strengths per vertex pair
# i = 0
# j = 1
# strength_hz = 1000.0
# sigma_hz = 20.0

[output]
dir = "runs"                 # run directories are created under this path
"#
}
