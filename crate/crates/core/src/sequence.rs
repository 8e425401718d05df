//! Pulse schedules: timed lists of ideal control events that every
//! experiment compiles to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default minimum inter-event gap, seconds.
pub const DEFAULT_GAP_FLOOR: f64 = 10e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rotation {
    Pi,
    HalfPi,
}

impl Rotation {
    pub fn angle(self) -> f64 {
        match self {
            Rotation::Pi => std::f64::consts::PI,
            Rotation::HalfPi => std::f64::consts::FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Target of a pulse: the electron sensor, every nucleus of one species,
/// or all nuclei at once (broadband RF).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Electron,
    NuclearSpecies(String),
    AllNuclear,
}

/// An ideal delta pulse (duration 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    pub time: f64,
    pub channel: Channel,
    pub rotation: Rotation,
    pub axis: Axis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhasePattern {
    Xy8,
    Cpmg,
}

/// Ordered, timed event list. Times are strictly increasing and separated by
/// at least the gap floor after compilation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub events: Vec<PulseEvent>,
    pub total_time: f64,
    pub metadata: String,
}

impl PulseSchedule {
    pub fn new(events: Vec<PulseEvent>, total_time: f64, metadata: impl Into<String>) -> Result<Self> {
        let s = Self { events, total_time, metadata: metadata.into() };
        s.validate(DEFAULT_GAP_FLOOR)?;
        Ok(s)
    }

    pub fn empty(total_time: f64) -> Self {
        Self { events: Vec::new(), total_time, metadata: "empty".into() }
    }

    pub fn validate(&self, gap_floor: f64) -> Result<()> {
        if self.total_time < 0.0 {
            return Err(Error::InvalidSchedule("negative total time".into()));
        }
        for w in self.events.windows(2) {
            if w[1].time - w[0].time < gap_floor {
                return Err(Error::InvalidSchedule(format!(
                    "events at {} and {} closer than the gap floor {gap_floor}",
                    w[0].time, w[1].time
                )));
            }
        }
        if let Some(last) = self.events.last() {
            if self.total_time < last.time {
                return Err(Error::InvalidSchedule(
                    "total_time precedes the last event".into(),
                ));
            }
        }
        if let Some(first) = self.events.first() {
            if first.time < 0.0 {
                return Err(Error::InvalidSchedule("negative event time".into()));
            }
        }
        Ok(())
    }

    /// Plain-text timing table: time_s, channel, rotation, axis.
    pub fn timing_table(&self) -> String {
        let mut out = String::from("# time_s\tchannel\trotation\taxis\n");
        for e in &self.events {
            let channel = match &e.channel {
                Channel::Electron => "electron".to_string(),
                Channel::NuclearSpecies(s) => format!("nuclear:{s}"),
                Channel::AllNuclear => "all-nuclear".to_string(),
            };
            let rot = match e.rotation {
                Rotation::Pi => "pi",
                Rotation::HalfPi => "pi/2",
            };
            let axis = match e.axis {
                Axis::X => "x",
                Axis::Y => "y",
            };
            out.push_str(&format!("{:.12e}\t{channel}\t{rot}\t{axis}\n", e.time));
        }
        out
    }
}

/// Incremental schedule builder with a time cursor.
#[derive(Debug, Clone)]
pub struct ScheduleBuilder {
    events: Vec<PulseEvent>,
    cursor: f64,
    metadata: String,
}

impl ScheduleBuilder {
    pub fn new(metadata: impl Into<String>) -> Self {
        Self { events: Vec::new(), cursor: 0.0, metadata: metadata.into() }
    }

    /// Free evolution: advance the cursor.
    pub fn wait(&mut self, dt: f64) -> &mut Self {
        self.cursor += dt;
        self
    }

    pub fn pulse(&mut self, channel: Channel, rotation: Rotation, axis: Axis) -> &mut Self {
        self.events.push(PulseEvent { time: self.cursor, channel, rotation, axis });
        self
    }

    /// Append all events of `block` shifted to the cursor, then advance the
    /// cursor by the block's total time.
    pub fn block(&mut self, block: &PulseSchedule) -> &mut Self {
        for e in &block.events {
            self.events.push(PulseEvent { time: self.cursor + e.time, ..e.clone() });
        }
        self.cursor += block.total_time;
        self
    }

    pub fn cursor(&self) -> f64 {
        self.cursor
    }

    pub fn finish(self) -> Result<PulseSchedule> {
        // back-to-back pulses at the same instant are kept in insertion order
        let mut events = self.events;
        events.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        Ok(PulseSchedule { events, total_time: self.cursor, metadata: self.metadata })
    }
}

fn xy8_axis(k: usize) -> Axis {
    // x y x y y x y x
    match k % 8 {
        0 | 2 | 5 | 7 => Axis::X,
        _ => Axis::Y,
    }
}

/// Symmetric DD train: N electron π pulses at (k − 1/2)·spacing,
/// total time N·spacing.
pub fn compile_dd(n_pulses: usize, spacing: f64, pattern: PhasePattern) -> Result<PulseSchedule> {
    if n_pulses == 0 {
        return Err(Error::InvalidSchedule("n_pulses must be >= 1".into()));
    }
    if spacing < DEFAULT_GAP_FLOOR {
        return Err(Error::InvalidSchedule(format!(
            "spacing {spacing} below the gap floor {DEFAULT_GAP_FLOOR}"
        )));
    }
    let events = (0..n_pulses)
        .map(|k| PulseEvent {
            time: (k as f64 + 0.5) * spacing,
            channel: Channel::Electron,
            rotation: Rotation::Pi,
            axis: match pattern {
                PhasePattern::Xy8 => xy8_axis(k),
                PhasePattern::Cpmg => Axis::X,
            },
        })
        .collect();
    PulseSchedule::new(
        events,
        n_pulses as f64 * spacing,
        format!("dd(n={n_pulses}, spacing={spacing:.3e}, {pattern:?})"),
    )
}

/// Non-periodic multi-species train: electron π pulses at the union of the
/// zeros of cos(2π f_i t), i.e. (2k+1)/(4 f_i), over (0, total_time).
/// Zeros closer than the gap floor are merged to their midpoint. The caller
/// brackets the schedule with its own π/2 pulses.
pub fn compile_nonperiodic(frequencies: &[f64], total_time: f64) -> Result<PulseSchedule> {
    if frequencies.is_empty() {
        return Err(Error::InvalidSchedule("at least one frequency required".into()));
    }
    if frequencies.iter().any(|f| *f <= 0.0) {
        return Err(Error::InvalidSchedule("frequencies must be positive".into()));
    }
    if total_time <= 0.0 {
        return Err(Error::InvalidSchedule("total_time must be positive".into()));
    }
    let mut zeros: Vec<f64> = Vec::new();
    for &f in frequencies {
        let mut k = 0u64;
        loop {
            let t = (2 * k + 1) as f64 / (4.0 * f);
            if t >= total_time {
                break;
            }
            zeros.push(t);
            k += 1;
        }
    }
    zeros.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // merge clusters of near-coincident zeros to their midpoint
    let mut merged: Vec<f64> = Vec::new();
    let mut cluster: Vec<f64> = Vec::new();
    for t in zeros {
        match cluster.last() {
            Some(&last) if t - last < DEFAULT_GAP_FLOOR => cluster.push(t),
            Some(_) => {
                merged.push(cluster.iter().sum::<f64>() / cluster.len() as f64);
                cluster = vec![t];
            }
            None => cluster.push(t),
        }
    }
    if !cluster.is_empty() {
        merged.push(cluster.iter().sum::<f64>() / cluster.len() as f64);
    }
    if merged.is_empty() {
        return Err(Error::InvalidSchedule(
            "non-periodic schedule empty after merging".into(),
        ));
    }
    let events = merged
        .into_iter()
        .map(|t| PulseEvent {
            time: t,
            channel: Channel::Electron,
            rotation: Rotation::Pi,
            axis: Axis::X,
        })
        .collect();
    PulseSchedule::new(
        events,
        total_time,
        format!("nonperiodic(f={frequencies:?}, T={total_time:.3e})"),
    )
}
