//! Time-signal to spectrum conversion (1D/2D FFT) and peak detection.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{TimeSignal1D, TimeSignal2D};
use crate::par::map_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    None,
    Hann,
}

/// Magnitude or real-part display mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Magnitude,
    Real,
}

/// Full complex DFT with axis in Hz, natural bin order (0 .. fs).
#[derive(Debug, Clone)]
pub struct Spectrum1D {
    pub frequencies: Vec<f64>,
    pub values: Vec<C64>,
}

impl Spectrum1D {
    pub fn bin_width(&self) -> f64 {
        self.frequencies[1] - self.frequencies[0]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }
}

/// Full complex 2D DFT, row-major (axis1 x axis2).
#[derive(Debug, Clone)]
pub struct Spectrum2D {
    pub frequencies1: Vec<f64>,
    pub frequencies2: Vec<f64>,
    pub values: Vec<C64>,
}

impl Spectrum2D {
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.frequencies2.len() + j]
    }

    pub fn bin_width1(&self) -> f64 {
        self.frequencies1[1] - self.frequencies1[0]
    }

    pub fn bin_width2(&self) -> f64 {
        self.frequencies2[1] - self.frequencies2[0]
    }
}

fn check_uniform(axis: &[f64]) -> Result<f64> {
    if axis.len() < 8 {
        return Err(Error::InvalidInput("need >= 8 samples".into()));
    }
    let dt = axis[1] - axis[0];
    let mut worst = 0.0f64;
    for w in axis.windows(2) {
        worst = worst.max(((w[1] - w[0]) - dt).abs() / dt);
    }
    if worst > 1e-9 {
        return Err(Error::NonUniformSampling(worst));
    }
    Ok(dt)
}

fn window_coeffs(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::None => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|k| {
                0.5 * (1.0 - (std::f64::consts::TAU * k as f64 / (n - 1) as f64).cos())
            })
            .collect(),
    }
}

/// Mean-subtracted, windowed, zero-padded DFT. `zero_pad_factor` >= 1
/// multiplies the length; frequency resolution is 1/(padded span).
pub fn fft_1d(signal: &TimeSignal1D, window: Window, zero_pad_factor: usize) -> Result<Spectrum1D> {
    signal.validate()?;
    let dt = check_uniform(&signal.axis)?;
    if zero_pad_factor == 0 {
        return Err(Error::InvalidInput("zero_pad_factor must be >= 1".into()));
    }
    let n = signal.values.len();
    let mean = signal.values.iter().sum::<f64>() / n as f64;
    let w = window_coeffs(window, n);
    let n_pad = n * zero_pad_factor;
    let mut buf: Vec<C64> = (0..n_pad)
        .map(|k| {
            if k < n {
                C64::new((signal.values[k] - mean) * w[k], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n_pad).process(&mut buf);
    let df = 1.0 / (n_pad as f64 * dt);
    Ok(Spectrum1D {
        frequencies: (0..n_pad).map(|k| k as f64 * df).collect(),
        values: buf,
    })
}

/// 2D DFT of a rectangular grid. Row and column means are subtracted first
/// (suppresses the DC term and axial ridges), then both axes are windowed,
/// zero-padded and transformed. Rows and columns are processed in parallel.
pub fn fft_2d(signal: &TimeSignal2D, window: Window, zero_pad_factor: usize) -> Result<Spectrum2D> {
    signal.validate()?;
    let dt1 = check_uniform(&signal.axis1)?;
    let dt2 = check_uniform(&signal.axis2)?;
    if zero_pad_factor == 0 {
        return Err(Error::InvalidInput("zero_pad_factor must be >= 1".into()));
    }
    let (n1, n2) = (signal.axis1.len(), signal.axis2.len());
    let mut data: Vec<f64> = signal.values.clone();
    // double centering: remove row means, then column means
    for i in 0..n1 {
        let m = data[i * n2..(i + 1) * n2].iter().sum::<f64>() / n2 as f64;
        for j in 0..n2 {
            data[i * n2 + j] -= m;
        }
    }
    for j in 0..n2 {
        let m = (0..n1).map(|i| data[i * n2 + j]).sum::<f64>() / n1 as f64;
        for i in 0..n1 {
            data[i * n2 + j] -= m;
        }
    }
    let w1 = window_coeffs(window, n1);
    let w2 = window_coeffs(window, n2);
    let (p1, p2) = (n1 * zero_pad_factor, n2 * zero_pad_factor);

    let mut planner = FftPlanner::new();
    let fft_rows = planner.plan_fft_forward(p2);
    let fft_cols = planner.plan_fft_forward(p1);

    // row transforms
    let rows: Vec<Vec<C64>> = map_indexed(n1, |i| {
        let mut buf: Vec<C64> = (0..p2)
            .map(|j| {
                if j < n2 {
                    C64::new(data[i * n2 + j] * w1[i] * w2[j], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        fft_rows.process(&mut buf);
        buf
    });
    // column transforms
    let cols: Vec<Vec<C64>> = map_indexed(p2, |j| {
        let mut buf: Vec<C64> = (0..p1)
            .map(|i| if i < n1 { rows[i][j] } else { C64::new(0.0, 0.0) })
            .collect();
        fft_cols.process(&mut buf);
        buf
    });
    let mut values = vec![C64::new(0.0, 0.0); p1 * p2];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * p2 + j] = *v;
        }
    }
    let df1 = 1.0 / (p1 as f64 * dt1);
    let df2 = 1.0 / (p2 as f64 * dt2);
    Ok(Spectrum2D {
        frequencies1: (0..p1).map(|k| k as f64 * df1).collect(),
        frequencies2: (0..p2).map(|k| k as f64 * df2).collect(),
        values,
    })
}

/// One detected spectral feature. 1D peaks carry `freq2 = None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Peak {
    pub frequency_hz: f64,
    pub frequency2_hz: Option<f64>,
    pub amplitude: f64,
    pub width_hz: f64,
    pub is_cross_peak: bool,
}

/// Peaks sorted descending by amplitude.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PeakTable {
    pub peaks: Vec<Peak>,
}

impl PeakTable {
    pub fn diagonal(&self) -> impl Iterator<Item = &Peak> {
        self.peaks.iter().filter(|p| !p.is_cross_peak)
    }

    pub fn cross(&self) -> impl Iterator<Item = &Peak> {
        self.peaks.iter().filter(|p| p.is_cross_peak)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PeakPickParams {
    /// Fraction of the spectrum maximum, in (0, 1).
    pub threshold_rel: f64,
    /// Minimum peak separation, bins.
    pub min_separation: usize,
    pub part: Part,
}

impl Default for PeakPickParams {
    fn default() -> Self {
        Self { threshold_rel: 0.1, min_separation: 2, part: Part::Magnitude }
    }
}

/// Tolerance (bins) for matching cross-peak coordinates to diagonal lines.
/// Wide enough to absorb the antiphase J/2 offset of scalar-coupled pairs.
pub const CROSS_MATCH_BINS: f64 = 3.0;

fn check_threshold(p: &PeakPickParams) -> Result<()> {
    if !(p.threshold_rel > 0.0 && p.threshold_rel < 1.0) {
        return Err(Error::InvalidInput("threshold must be in (0,1)".into()));
    }
    Ok(())
}

fn part_values_1d(s: &Spectrum1D, part: Part) -> Vec<f64> {
    match part {
        Part::Magnitude => s.values.iter().map(|c| c.norm()).collect(),
        Part::Real => s.values.iter().map(|c| c.re.max(0.0)).collect(),
    }
}

/// 3-point parabolic refinement: returns (sub-bin offset, refined amplitude,
/// curvature-based half width in bins).
fn parabolic(ym: f64, y0: f64, yp: f64) -> (f64, f64, f64) {
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < 1e-300 {
        return (0.0, y0, 1.0);
    }
    let delta = 0.5 * (ym - yp) / denom;
    let amp = y0 - 0.25 * (ym - yp) * delta;
    let width = (2.0 * amp / denom.abs()).sqrt();
    (delta.clamp(-0.5, 0.5), amp, width)
}

/// Local maxima above threshold in the positive-frequency half, merged
/// within `min_separation` bins, sub-bin refined.
pub fn pick_peaks_1d(spectrum: &Spectrum1D, params: &PeakPickParams) -> Result<PeakTable> {
    check_threshold(params)?;
    let mag = part_values_1d(spectrum, params.part);
    let half = mag.len() / 2;
    let max = mag[1..=half].iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(PeakTable::default());
    }
    let df = spectrum.bin_width();
    let mut candidates: Vec<(usize, f64)> = (1..half)
        .filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] && mag[k] >= params.threshold_rel * max)
        .map(|k| (k, mag[k]))
        .collect();
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let mut kept: Vec<usize> = Vec::new();
    for (k, _) in candidates {
        if kept.iter().all(|&j| k.abs_diff(j) > params.min_separation) {
            kept.push(k);
        }
    }
    let mut peaks: Vec<Peak> = kept
        .into_iter()
        .map(|k| {
            let (delta, amp, w) = parabolic(mag[k - 1], mag[k], mag[k + 1]);
            Peak {
                frequency_hz: (k as f64 + delta) * df,
                frequency2_hz: None,
                amplitude: amp,
                width_hz: w * df,
                is_cross_peak: false,
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.amplitude.partial_cmp(&a.amplitude).unwrap());
    Ok(PeakTable { peaks })
}

/// Fold the four quadrant images onto the displayed (f1 >= 0, f2 >= 0)
/// quadrant by taking the maximum image.
pub fn folded_quadrant(s: &Spectrum2D, part: Part) -> (Vec<f64>, usize, usize) {
    let (p1, p2) = (s.frequencies1.len(), s.frequencies2.len());
    let (h1, h2) = (p1 / 2 + 1, p2 / 2 + 1);
    let val = |i: usize, j: usize| -> f64 {
        let c = s.at(i, j);
        match part {
            Part::Magnitude => c.norm(),
            Part::Real => c.re.max(0.0),
        }
    };
    let mut out = vec![0.0; h1 * h2];
    for i in 0..h1 {
        for j in 0..h2 {
            let i_neg = if i == 0 { 0 } else { p1 - i };
            let j_neg = if j == 0 { 0 } else { p2 - j };
            out[i * h2 + j] = val(i, j)
                .max(val(i_neg, j))
                .max(val(i, j_neg))
                .max(val(i_neg, j_neg));
        }
    }
    (out, h1, h2)
}

/// 2D peak picking on the folded quadrant. A peak is classified as a cross
/// peak when its two coordinates match two distinct diagonal peaks within
/// [`CROSS_MATCH_BINS`] bins.
pub fn pick_peaks_2d(spectrum: &Spectrum2D, params: &PeakPickParams) -> Result<PeakTable> {
    check_threshold(params)?;
    let (mag, h1, h2) = folded_quadrant(spectrum, params.part);
    let at = |i: usize, j: usize| mag[i * h2 + j];
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(PeakTable::default());
    }
    let (df1, df2) = (spectrum.bin_width1(), spectrum.bin_width2());

    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for i in 1..h1 - 1 {
        for j in 1..h2 - 1 {
            let v = at(i, j);
            if v < params.threshold_rel * max {
                continue;
            }
            let mut is_max = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if at(ni, nj) > v || (at(ni, nj) == v && (ni, nj) < (i, j)) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((i, j, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for (i, j, _) in candidates {
        if kept
            .iter()
            .all(|&(a, b)| i.abs_diff(a).max(j.abs_diff(b)) > params.min_separation)
        {
            kept.push((i, j));
        }
    }
    let mut peaks: Vec<Peak> = kept
        .into_iter()
        .map(|(i, j)| {
            let (d1, a1, w1) = parabolic(at(i - 1, j), at(i, j), at(i + 1, j));
            let (d2, a2, w2) = parabolic(at(i, j - 1), at(i, j), at(i, j + 1));
            Peak {
                frequency_hz: (i as f64 + d1) * df1,
                frequency2_hz: Some((j as f64 + d2) * df2),
                amplitude: 0.5 * (a1 + a2),
                width_hz: 0.5 * (w1 * df1 + w2 * df2),
                is_cross_peak: false,
            }
        })
        .collect();

    // classify: diagonal peaks first, then cross peaks matching two distinct
    // diagonal frequencies
    let tol1 = CROSS_MATCH_BINS * df1;
    let tol2 = CROSS_MATCH_BINS * df2;
    let diag_freqs: Vec<f64> = peaks
        .iter()
        .filter(|p| (p.frequency_hz - p.frequency2_hz.unwrap()).abs() <= tol1.max(tol2))
        .map(|p| 0.5 * (p.frequency_hz + p.frequency2_hz.unwrap()))
        .collect();
    for p in &mut peaks {
        let f1 = p.frequency_hz;
        let f2 = p.frequency2_hz.unwrap();
        if (f1 - f2).abs() <= tol1.max(tol2) {
            continue; // diagonal
        }
        let m1 = diag_freqs.iter().position(|&d| (d - f1).abs() <= tol1);
        let m2 = diag_freqs.iter().position(|&d| (d - f2).abs() <= tol2);
        if let (Some(a), Some(b)) = (m1, m2) {
            if a != b {
                p.is_cross_peak = true;
            }
        }
    }
    peaks.sort_by(|a, b| b.amplitude.partial_cmp(&a.amplitude).unwrap());
    Ok(PeakTable { peaks })
}
