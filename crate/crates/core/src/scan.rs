//! Reduction of raw PLE scans to a centred population spectrum.
//!
//! The chain is: correlate each scan's timestamps with the wavemeter log,
//! bin all scans on a uniform grid spanning the reference scan, drop
//! contributions below the count-rate threshold, average, centre on a
//! Gaussian pre-fit of the dip, and convert counts to excited-state
//! population.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::{CptError, CptSpectrum, SpectrumKind};
use crate::curvefit::{fit_gaussian_prefit, Curve1D, FitError};

/// Contributions below this rate (counts/s) are treated as spectral jumps.
pub const DEFAULT_MIN_RATE: f64 = 2000.0;
/// Dark-count background (counts/s).
pub const DEFAULT_BACKGROUND: f64 = 500.0;
/// Wavemeter gaps longer than this (s) are reported.
pub const MAX_LOG_GAP_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("sample at t = {timestamp} s lies outside the frequency log span [{start}, {end}] s")]
    OutOfRange { timestamp: f64, start: f64, end: f64 },
    #[error("scan {0} shares no frequency range with the reference scan")]
    EmptyOverlap(usize),
    #[error("every bin is empty after thresholding at {min_rate} counts/s")]
    AllRejected { min_rate: f64 },
    #[error("scans run in both directions; select one or merge explicitly")]
    MixedDirections,
    #[error("scan {0} is not in the frequency domain; correlate it first")]
    NotFrequencyDomain(usize),
    #[error("invalid scan data: {0}")]
    Invalid(String),
    #[error("centering failed: {0}")]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spectrum(#[from] CptError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveUnit {
    V,
    Hz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    /// s
    pub timestamp: f64,
    /// Voltage or frequency (Hz), see [`ScanRecord::drive_unit`].
    pub drive: f64,
    /// counts/s
    pub counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub samples: Vec<ScanSample>,
    pub direction: ScanDirection,
    pub drive_unit: DriveUnit,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScanRow {
    timestamp_s: f64,
    drive: f64,
    counts_per_s: f64,
}

fn parse_metadata(line: &str) -> Result<(ScanDirection, DriveUnit), ScanError> {
    let body = line.trim_start_matches('#');
    let mut direction = None;
    let mut unit = None;
    for item in body.split(',') {
        let Some((key, value)) = item.split_once('=') else {
            continue;
        };
        match (key.trim(), value.trim()) {
            ("direction", "up") => direction = Some(ScanDirection::Up),
            ("direction", "down") => direction = Some(ScanDirection::Down),
            ("drive_unit", "V") => unit = Some(DriveUnit::V),
            ("drive_unit", "Hz") => unit = Some(DriveUnit::Hz),
            (k, v) => {
                return Err(ScanError::Invalid(format!("unknown metadata {k}={v}")));
            }
        }
    }
    match (direction, unit) {
        (Some(d), Some(u)) => Ok((d, u)),
        _ => Err(ScanError::Invalid(
            "metadata line must set direction and drive_unit".into(),
        )),
    }
}

impl ScanRecord {
    pub fn new(samples: Vec<ScanSample>, direction: ScanDirection, drive_unit: DriveUnit) -> Result<Self, ScanError> {
        if samples.is_empty() {
            return Err(ScanError::Invalid("scan has no samples".into()));
        }
        if samples.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(ScanError::Invalid("timestamps must be non-decreasing".into()));
        }
        if samples
            .iter()
            .any(|s| !(s.timestamp.is_finite() && s.drive.is_finite() && s.counts.is_finite()))
        {
            return Err(ScanError::Invalid("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            direction,
            drive_unit,
        })
    }

    /// Parses a scan file: a `# direction=..., drive_unit=...` line followed
    /// by `timestamp_s,drive,counts_per_s` rows.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ScanError> {
        let mut buf = BufReader::new(reader);
        let mut first = String::new();
        buf.read_line(&mut first)?;
        if !first.trim_start().starts_with('#') {
            return Err(ScanError::Invalid("missing '# direction=..., drive_unit=...' line".into()));
        }
        let (direction, drive_unit) = parse_metadata(first.trim())?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(buf);
        let samples = rdr
            .deserialize()
            .map(|row| {
                let row: ScanRow = row?;
                Ok(ScanSample {
                    timestamp: row.timestamp_s,
                    drive: row.drive,
                    counts: row.counts_per_s,
                })
            })
            .collect::<Result<Vec<_>, ScanError>>()?;
        Self::new(samples, direction, drive_unit)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScanError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ScanError> {
        let dir = match self.direction {
            ScanDirection::Up => "up",
            ScanDirection::Down => "down",
        };
        let unit = match self.drive_unit {
            DriveUnit::V => "V",
            DriveUnit::Hz => "Hz",
        };
        writeln!(w, "# direction={dir}, drive_unit={unit}")?;
        let mut wtr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wtr.serialize(ScanRow {
                timestamp_s: s.timestamp,
                drive: s.drive,
                counts_per_s: s.counts,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLog {
    /// `(timestamp s, frequency Hz)`, timestamps non-decreasing.
    pub entries: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogRow {
    timestamp_s: f64,
    frequency_hz: f64,
}

impl FrequencyLog {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self, ScanError> {
        if entries.is_empty() {
            return Err(ScanError::Invalid("frequency log is empty".into()));
        }
        if entries.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(ScanError::Invalid("log timestamps must be non-decreasing".into()));
        }
        if entries.iter().any(|(t, f)| !(t.is_finite() && f.is_finite())) {
            return Err(ScanError::Invalid("non-finite log entry".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ScanError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let entries = rdr
            .deserialize()
            .map(|row| {
                let row: LogRow = row?;
                Ok((row.timestamp_s, row.frequency_hz))
            })
            .collect::<Result<Vec<_>, ScanError>>()?;
        Self::new(entries)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScanError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), ScanError> {
        let mut wtr = csv::Writer::from_writer(w);
        for &(t, f) in &self.entries {
            wtr.serialize(LogRow {
                timestamp_s: t,
                frequency_hz: f,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Linear interpolation at `t`.
    pub fn frequency_at(&self, t: f64) -> Result<f64, ScanError> {
        let e = &self.entries;
        let (start, end) = (e[0].0, e[e.len() - 1].0);
        if !(t >= start && t <= end) {
            return Err(ScanError::OutOfRange {
                timestamp: t,
                start,
                end,
            });
        }
        // First entry with timestamp >= t.
        let j = e.partition_point(|(ts, _)| *ts < t);
        if e[j].0 == t || j == 0 {
            return Ok(e[j].1);
        }
        let (t0, f0) = e[j - 1];
        let (t1, f1) = e[j];
        Ok(f0 + (t - t0) / (t1 - t0) * (f1 - f0))
    }

    /// Gaps longer than [`MAX_LOG_GAP_S`] inside `[start, end]`.
    pub fn gaps_within(&self, start: f64, end: f64) -> Vec<(f64, f64)> {
        self.entries
            .windows(2)
            .filter(|w| w[1].0 - w[0].0 > MAX_LOG_GAP_S && w[1].0 > start && w[0].0 < end)
            .map(|w| (w[0].0, w[1].0))
            .collect()
    }
}

/// Replaces each sample's drive by the interpolated wavemeter frequency.
pub fn correlate_frequency(scan: &ScanRecord, log: &FrequencyLog) -> Result<ScanRecord, ScanError> {
    let start = scan.samples[0].timestamp;
    let end = scan.samples[scan.samples.len() - 1].timestamp;
    for (a, b) in log.gaps_within(start, end) {
        log::warn!("wavemeter log has a {:.3} s gap between t = {a} s and t = {b} s", b - a);
    }
    let samples = scan
        .samples
        .iter()
        .map(|s| {
            Ok(ScanSample {
                drive: log.frequency_at(s.timestamp)?,
                ..*s
            })
        })
        .collect::<Result<Vec<_>, ScanError>>()?;
    Ok(ScanRecord {
        samples,
        direction: scan.direction,
        drive_unit: DriveUnit::Hz,
    })
}

/// One sample assigned to a bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub scan: usize,
    pub counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedScans {
    /// Hz, uniform.
    pub bin_centers: Vec<f64>,
    pub contributions: Vec<Vec<Contribution>>,
    /// `None` when directions were merged.
    pub direction: Option<ScanDirection>,
    pub n_scans: usize,
    /// Samples that fell outside the binned range.
    pub n_outside: usize,
}

/// Bins frequency-domain scans on a uniform grid spanning the reference
/// scan's frequency range, with as many bins as it has samples. Each sample
/// goes to the nearest bin centre; samples more than half a bin outside
/// the range are dropped.
pub fn bin_scans(scans: &[ScanRecord], reference: usize, merge_directions: bool) -> Result<BinnedScans, ScanError> {
    let reference_scan = scans
        .get(reference)
        .ok_or_else(|| ScanError::Invalid(format!("reference index {reference} out of range")))?;
    if let Some(i) = scans.iter().position(|s| s.drive_unit != DriveUnit::Hz) {
        return Err(ScanError::NotFrequencyDomain(i));
    }
    let direction = reference_scan.direction;
    if !merge_directions && scans.iter().any(|s| s.direction != direction) {
        return Err(ScanError::MixedDirections);
    }
    let freqs = reference_scan.samples.iter().map(|s| s.drive);
    let lo = freqs.clone().fold(f64::INFINITY, f64::min);
    let hi = freqs.fold(f64::NEG_INFINITY, f64::max);
    let n = reference_scan.samples.len();
    let (centers, step) = if n < 2 || hi <= lo {
        (vec![lo], 0.0)
    } else {
        let step = (hi - lo) / (n - 1) as f64;
        ((0..n).map(|i| lo + step * i as f64).collect::<Vec<_>>(), step)
    };
    let mut contributions = vec![Vec::new(); centers.len()];
    let mut n_outside = 0;
    for (si, scan) in scans.iter().enumerate() {
        let mut inside = 0;
        for s in &scan.samples {
            let k = if step == 0.0 {
                (s.drive == lo).then_some(0)
            } else {
                let pos = ((s.drive - lo) / step).round();
                (pos >= 0.0 && pos <= (centers.len() - 1) as f64).then_some(pos as usize)
            };
            match k {
                Some(k) => {
                    contributions[k].push(Contribution {
                        scan: si,
                        counts: s.counts,
                    });
                    inside += 1;
                }
                None => n_outside += 1,
            }
        }
        if inside == 0 {
            return Err(ScanError::EmptyOverlap(si));
        }
    }
    Ok(BinnedScans {
        bin_centers: centers,
        contributions,
        direction: (!merge_directions).then_some(direction),
        n_scans: scans.len(),
        n_outside,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSpectrum {
    /// Hz; relative to `center_frequency` once centred.
    pub bin_centers: Vec<f64>,
    /// counts/s; `None` for bins with no surviving contribution.
    pub mean_counts: Vec<Option<f64>>,
    /// Number of distinct scans contributing to each bin.
    pub n_contributing: Vec<usize>,
    /// Hz; set by [`center_spectrum`].
    pub center_frequency: Option<f64>,
    pub direction: Option<ScanDirection>,
    pub min_rate: f64,
    /// Indices of bins left empty after thresholding.
    pub rejected_bins: Vec<usize>,
    pub n_rejected_samples: usize,
}

impl ReducedSpectrum {
    /// `(bin centre, mean counts)` for populated bins.
    pub fn populated(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.bin_centers
            .iter()
            .zip(&self.mean_counts)
            .filter_map(|(x, m)| m.map(|m| (*x, m)))
    }
}

/// Drops every contribution below `min_rate` and averages the rest per bin.
pub fn threshold_and_average(binned: &BinnedScans, min_rate: f64) -> Result<ReducedSpectrum, ScanError> {
    let mut mean_counts = Vec::with_capacity(binned.bin_centers.len());
    let mut n_contributing = Vec::with_capacity(binned.bin_centers.len());
    let mut rejected_bins = Vec::new();
    let mut n_rejected_samples = 0;
    for (k, bin) in binned.contributions.iter().enumerate() {
        let kept: Vec<&Contribution> = bin.iter().filter(|c| c.counts >= min_rate).collect();
        n_rejected_samples += bin.len() - kept.len();
        if kept.is_empty() {
            rejected_bins.push(k);
            mean_counts.push(None);
            n_contributing.push(0);
            continue;
        }
        // Summing in sorted order makes the mean independent of scan order.
        let mut values: Vec<f64> = kept.iter().map(|c| c.counts).collect();
        values.sort_by(f64::total_cmp);
        let sum: f64 = values.iter().sum();
        mean_counts.push(Some(sum / kept.len() as f64));
        let mut scans: Vec<usize> = kept.iter().map(|c| c.scan).collect();
        scans.sort_unstable();
        scans.dedup();
        n_contributing.push(scans.len());
    }
    if rejected_bins.len() == binned.bin_centers.len() {
        return Err(ScanError::AllRejected { min_rate });
    }
    Ok(ReducedSpectrum {
        bin_centers: binned.bin_centers.clone(),
        mean_counts,
        n_contributing,
        center_frequency: None,
        direction: binned.direction,
        min_rate,
        rejected_bins,
        n_rejected_samples,
    })
}

/// Shifts the bins so that the Gaussian pre-fit dip centre sits at zero.
pub fn center_spectrum(spec: &ReducedSpectrum) -> Result<ReducedSpectrum, ScanError> {
    let (x, y): (Vec<f64>, Vec<f64>) = spec.populated().unzip();
    let curve = Curve1D::new(x, y, None)?;
    let center = fit_gaussian_prefit(&curve)?;
    let base = spec.center_frequency.unwrap_or(0.0);
    Ok(ReducedSpectrum {
        bin_centers: spec.bin_centers.iter().map(|f| f - center).collect(),
        center_frequency: Some(base + center),
        ..spec.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PopulationFlags {
    /// Bins whose population was negative and clipped to zero.
    pub clipped: Vec<usize>,
    /// Bins whose population exceeds one.
    pub above_one: Vec<usize>,
}

/// `ρ = 0.5 (counts − background) / f_sat` on populated bins.
pub fn counts_to_population(
    spec: &ReducedSpectrum,
    f_sat: f64,
    background: f64,
) -> Result<(CptSpectrum, PopulationFlags), ScanError> {
    if !(f_sat > 0.0 && f_sat.is_finite()) {
        return Err(ScanError::Invalid(format!("f_sat must be positive, got {f_sat}")));
    }
    let mut flags = PopulationFlags::default();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (k, (center, counts)) in spec
        .bin_centers
        .iter()
        .zip(&spec.mean_counts)
        .enumerate()
        .filter_map(|(k, (c, m))| m.map(|m| (k, (*c, m))))
    {
        let mut p = 0.5 * (counts - background) / f_sat;
        if p < 0.0 {
            flags.clipped.push(k);
            p = 0.0;
        }
        if p > 1.0 {
            flags.above_one.push(k);
        }
        x.push(center);
        y.push(p);
    }
    Ok((CptSpectrum::new(x, y, SpectrumKind::Population)?, flags))
}

/// Inverse of [`counts_to_population`].
pub fn population_to_counts(population: f64, f_sat: f64, background: f64) -> f64 {
    2.0 * population * f_sat + background
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSettings {
    /// Index of the scan whose frequencies define the bins.
    pub reference: usize,
    pub min_rate: f64,
    pub background: f64,
    /// Saturation count rate; population conversion is skipped when absent.
    pub f_sat: Option<f64>,
    pub merge_directions: bool,
}

impl Default for ReductionSettings {
    fn default() -> Self {
        Self {
            reference: 0,
            min_rate: DEFAULT_MIN_RATE,
            background: DEFAULT_BACKGROUND,
            f_sat: None,
            merge_directions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub spectrum: ReducedSpectrum,
    pub population: Option<(CptSpectrum, PopulationFlags)>,
    /// Wavemeter gaps longer than a second seen during correlation.
    pub log_gaps: Vec<(f64, f64)>,
}

/// Correlate, bin, threshold, centre and (optionally) convert.
pub fn reduce_scans(
    scans: &[ScanRecord],
    log: &FrequencyLog,
    settings: &ReductionSettings,
) -> Result<Reduction, ScanError> {
    let correlate = |s: &ScanRecord| match s.drive_unit {
        DriveUnit::Hz => Ok(s.clone()),
        DriveUnit::V => correlate_frequency(s, log),
    };
    #[cfg(feature = "parallel")]
    let correlated: Vec<ScanRecord> = {
        use rayon::prelude::*;
        scans.par_iter().map(correlate).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let correlated: Vec<ScanRecord> = scans.iter().map(correlate).collect::<Result<_, _>>()?;

    let mut log_gaps = Vec::new();
    for s in scans.iter().filter(|s| s.drive_unit == DriveUnit::V) {
        let start = s.samples[0].timestamp;
        let end = s.samples[s.samples.len() - 1].timestamp;
        for g in log.gaps_within(start, end) {
            if !log_gaps.contains(&g) {
                log_gaps.push(g);
            }
        }
    }
    let binned = bin_scans(&correlated, settings.reference, settings.merge_directions)?;
    let averaged = threshold_and_average(&binned, settings.min_rate)?;
    let spectrum = center_spectrum(&averaged)?;
    let population = settings
        .f_sat
        .map(|f| counts_to_population(&spectrum, f, settings.background))
        .transpose()?;
    Ok(Reduction {
        spectrum,
        population,
        log_gaps,
    })
}

/// Writes `detuning_hz,population` rows.
pub fn write_population_csv<W: Write>(spectrum: &CptSpectrum, w: W) -> Result<(), ScanError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["detuning_hz", "population"])?;
    for (x, y) in spectrum.detunings_d.iter().zip(&spectrum.values) {
        wtr.write_record([x.to_string(), y.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `detuning_hz,population` rows (or any two numeric columns).
pub fn read_population_csv<R: Read>(r: R) -> Result<CptSpectrum, ScanError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(ScanError::Invalid("expected two columns".into()));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| ScanError::Invalid(format!("not a number: '{s}'")))
        };
        x.push(parse(&rec[0])?);
        y.push(parse(&rec[1])?);
    }
    Ok(CptSpectrum::new(x, y, SpectrumKind::Population)?)
}
