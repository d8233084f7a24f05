//! Regional PPE demand: bed-occupancy ingestion, beds→kits extrapolation,
//! the synthetic second wave, horizon clipping and storage capacities.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::DemandError;
use crate::model::DemandProfile;
use crate::region::Region;
use crate::rng::SplitMix64;

/// Bed-occupancy snapshot for the seven regions, 2020-03-20..=2020-08-01.
pub const BUNDLED_BED_OCCUPANCY_CSV: &str = include_str!("../data/bed_occupancy_england_2020.csv");

/// Last day of observed bed data; the second wave is appended after it.
pub fn data_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 8, 1).expect("valid date")
}

fn days_between(from: NaiveDate, to: NaiveDate) -> i64 {
    (to - from).num_days()
}

/// Dense daily bed counts, `beds[region][day]`, over a contiguous date range.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BedOccupancyTable {
    pub start: Option<NaiveDate>,
    pub beds: Vec<Vec<u64>>,
    /// Cells absent from the source, filled with zero beds.
    pub warnings: Vec<String>,
}

impl BedOccupancyTable {
    pub fn days(&self) -> usize {
        self.beds.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.days() == 0
    }

    pub fn end(&self) -> Option<NaiveDate> {
        self.start.map(|s| s + Days::new(self.days() as u64 - 1))
    }

    pub fn beds_on(&self, region: Region, date: NaiveDate) -> Option<u64> {
        let start = self.start?;
        let offset = usize::try_from(days_between(start, date)).ok()?;
        self.beds[region.index()].get(offset).copied()
    }

    /// `(date, region, beds)` rows in date-then-region order.
    pub fn rows(&self) -> impl Iterator<Item = (NaiveDate, Region, u64)> + '_ {
        let start = self.start.unwrap_or_default();
        (0..self.days()).flat_map(move |t| {
            Region::ALL.into_iter().map(move |r| (start + Days::new(t as u64), r, self.beds[r.index()][t]))
        })
    }
}

/// The bundled snapshot, parsed.
pub fn bundled_bed_occupancy() -> BedOccupancyTable {
    load_bed_occupancy(BUNDLED_BED_OCCUPANCY_CSV.as_bytes()).expect("bundled snapshot is valid")
}

/// Parses `date,region,beds` CSV. Region names are canonicalized; cells
/// missing inside the covered date range are filled with zero and listed
/// in `warnings`. Row numbers in errors count the header as row 1.
pub fn load_bed_occupancy(source: impl Read) -> Result<BedOccupancyTable, DemandError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let wanted = ["date", "region", "beds"];
    if !headers.is_empty() && headers.iter().collect::<Vec<_>>() != wanted {
        return Err(DemandError::Parse { row: 1, message: format!("expected header date,region,beds, got {headers:?}") });
    }

    let mut cells: BTreeMap<(NaiveDate, Region), u64> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DemandError::Parse { row, message: e.to_string() })?;
        if record.len() != 3 {
            return Err(DemandError::Parse { row, message: format!("expected 3 fields, got {}", record.len()) });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| DemandError::Parse { row, message: format!("bad date {:?}: {e}", &record[0]) })?;
        let region: Region = record[1]
            .parse()
            .map_err(|_| DemandError::UnknownRegion { row, name: record[1].to_string() })?;
        let raw = &record[2];
        let beds: i64 = raw
            .parse()
            .map_err(|_| DemandError::Parse { row, message: format!("beds must be an integer, got {raw:?}") })?;
        if beds < 0 {
            return Err(DemandError::Parse { row, message: format!("negative bed count {beds}") });
        }
        if cells.insert((date, region), beds as u64).is_some() {
            return Err(DemandError::Duplicate { row, date, region: region.name().to_string() });
        }
    }

    let Some((first, last)) = cells.keys().next().zip(cells.keys().next_back()).map(|(a, b)| (a.0, b.0)) else {
        return Ok(BedOccupancyTable::default());
    };
    let days = days_between(first, last) as usize + 1;
    let mut beds = vec![vec![0u64; days]; Region::ALL.len()];
    let mut warnings = Vec::new();
    for region in Region::ALL {
        for t in 0..days {
            let date = first + Days::new(t as u64);
            match cells.get(&(date, region)) {
                Some(&b) => beds[region.index()][t] = b,
                None => warnings.push(format!("missing {date} / {region}: filled with 0 beds")),
            }
        }
    }
    Ok(BedOccupancyTable { start: Some(first), beds, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorMode {
    /// One SplitMix64 draw per (region, day).
    SeededUniform,
    /// Range midpoints: 225 kits/bed early, 165 late with default ranges.
    Midpoint,
}

impl std::str::FromStr for FactorMode {
    type Err = DemandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seeded-uniform" | "seeded" | "uniform" => Ok(Self::SeededUniform),
            "midpoint" | "midpoint-deterministic" => Ok(Self::Midpoint),
            other => Err(DemandError::Config(format!("unknown factor mode {other:?}"))),
        }
    }
}

/// Kits-per-bed conversion rule. Days up to and including the cutover use
/// the early range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationRule {
    pub cutover_date: NaiveDate,
    pub early_range: (f64, f64),
    pub late_range: (f64, f64),
    pub seed: u64,
    pub mode: FactorMode,
}

impl Default for ExtrapolationRule {
    fn default() -> Self {
        Self {
            cutover_date: NaiveDate::from_ymd_opt(2020, 4, 2).expect("valid date"),
            early_range: (210.0, 240.0),
            late_range: (150.0, 180.0),
            seed: 2020,
            mode: FactorMode::SeededUniform,
        }
    }
}

impl ExtrapolationRule {
    pub fn midpoint() -> Self {
        Self { mode: FactorMode::Midpoint, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        for (name, (lo, hi)) in [("early_range", self.early_range), ("late_range", self.late_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(DemandError::Config(format!("{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn range_for(&self, date: NaiveDate) -> (f64, f64) {
        if date <= self.cutover_date {
            self.early_range
        } else {
            self.late_range
        }
    }
}

/// Per-day kits-per-bed factors, `factors[region][day]`, drawn region by
/// region in canonical order and day by day within a region.
pub fn conversion_factors(table: &BedOccupancyTable, rule: &ExtrapolationRule) -> Result<Vec<Vec<f64>>, DemandError> {
    rule.validate()?;
    let start = table.start.unwrap_or_default();
    let mut rng = SplitMix64::new(rule.seed);
    let factors = Region::ALL
        .iter()
        .map(|_| {
            (0..table.days())
                .map(|t| {
                    let (lo, hi) = rule.range_for(start + Days::new(t as u64));
                    match rule.mode {
                        FactorMode::Midpoint => 0.5 * (lo + hi),
                        FactorMode::SeededUniform => rng.uniform(lo, hi),
                    }
                })
                .collect()
        })
        .collect();
    Ok(factors)
}

/// Converts bed counts into daily PPE kits, one profile per region in
/// canonical order.
pub fn beds_to_ppe(table: &BedOccupancyTable, rule: &ExtrapolationRule) -> Result<Vec<DemandProfile>, DemandError> {
    let Some(start) = table.start else {
        return Err(DemandError::Config("bed-occupancy table is empty".into()));
    };
    let factors = conversion_factors(table, rule)?;
    Region::ALL
        .iter()
        .map(|r| {
            let kits = table.beds[r.index()]
                .iter()
                .zip(&factors[r.index()])
                .map(|(&b, f)| b as f64 * f)
                .collect();
            Ok(DemandProfile::new(r.name(), start, kits)?)
        })
        .collect()
}

/// Shape of the synthetic second wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondWaveSpec {
    pub peak_date: NaiveDate,
    /// Peak height as a fraction of the region's first-wave maximum.
    pub peak_scale: f64,
    /// Length of the rising flank; onset is clamped to the data cutoff.
    pub rise_days: u32,
    /// Days from the peak until demand returns to zero.
    pub fall_days: u32,
}

impl SecondWaveSpec {
    pub fn peaking(peak_date: NaiveDate) -> Self {
        Self { peak_date, ..Self::default() }
    }

    /// Mid-month peaks from October 2020 to February 2021.
    pub fn standard_peaks() -> [NaiveDate; 5] {
        [(2020, 10), (2020, 11), (2020, 12), (2021, 1), (2021, 2)]
            .map(|(y, m)| NaiveDate::from_ymd_opt(y, m, 15).expect("valid date"))
    }

    /// Last day of the horizon: the peak plus the falling flank.
    pub fn end_date(&self) -> NaiveDate {
        self.peak_date + Days::new(self.fall_days as u64)
    }

    pub fn onset(&self) -> NaiveDate {
        let raw = self.peak_date - Days::new(self.rise_days as u64);
        raw.max(data_cutoff())
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        if self.peak_date <= data_cutoff() {
            return Err(DemandError::Config(format!("second-wave peak {} must fall after {}", self.peak_date, data_cutoff())));
        }
        if !(self.peak_scale > 0.0 && self.peak_scale <= 1.0) {
            return Err(DemandError::Config(format!("peak_scale must be in (0, 1], got {}", self.peak_scale)));
        }
        if self.rise_days == 0 || self.fall_days == 0 {
            return Err(DemandError::Config("rise_days and fall_days must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SecondWaveSpec {
    fn default() -> Self {
        Self {
            peak_date: NaiveDate::from_ymd_opt(2020, 10, 15).expect("valid date"),
            peak_scale: 0.75,
            rise_days: 90,
            fall_days: 100,
        }
    }
}

fn raised_cosine_rise(from: f64, to: f64, u: f64) -> f64 {
    from + (to - from) * 0.5 * (1.0 - (std::f64::consts::PI * u).cos())
}

/// Appends the synthetic second wave after the data cutoff.
///
/// The observed level on the cutoff day tapers linearly to zero at
/// onset, then a raised-cosine pulse climbs to `peak_scale × max` at the
/// peak and falls back to zero `fall_days` later. If the onset is clamped
/// to the cutoff the pulse starts from the observed level instead of zero.
pub fn synthesize_second_wave(first_wave: &DemandProfile, spec: &SecondWaveSpec) -> Result<DemandProfile, DemandError> {
    spec.validate()?;
    let cutoff = data_cutoff();
    if first_wave.start_date > cutoff || first_wave.end_date() < cutoff {
        return Err(DemandError::InsufficientCoverage { last: first_wave.end_date(), required: cutoff });
    }
    let keep = days_between(first_wave.start_date, cutoff) as usize + 1;
    let mut kits: Vec<f64> = first_wave.daily_kits[..keep].to_vec();
    let cutoff_level = kits[keep - 1];
    let peak_level = spec.peak_scale * kits.iter().copied().fold(0.0, f64::max);

    let onset = spec.onset();
    let bridge_days = days_between(cutoff, onset) as f64;
    let rise_days = days_between(onset, spec.peak_date) as f64;
    let rise_from = if onset == cutoff { cutoff_level } else { 0.0 };
    let mut date = cutoff + Days::new(1);
    while date <= spec.end_date() {
        let value = if date < onset {
            cutoff_level * days_between(date, onset) as f64 / bridge_days
        } else if date <= spec.peak_date {
            raised_cosine_rise(rise_from, peak_level, days_between(onset, date) as f64 / rise_days)
        } else {
            let v = days_between(spec.peak_date, date) as f64 / spec.fall_days as f64;
            peak_level * 0.5 * (1.0 + (std::f64::consts::PI * v).cos())
        };
        // cos(π) is -1 only up to rounding.
        kits.push(if date == spec.end_date() { 0.0 } else { value.max(0.0) });
        date = date + Days::new(1);
    }
    Ok(DemandProfile::new(first_wave.region.clone(), first_wave.start_date, kits)?)
}

/// Restricts a profile to `[start, end]`. Days before the profile starts
/// carry zero demand (the stockpiling lead-in).
pub fn clip_horizon(profile: &DemandProfile, start: NaiveDate, end: NaiveDate) -> Result<DemandProfile, DemandError> {
    if start > end || start > profile.end_date() || end < profile.start_date {
        return Err(DemandError::EmptyHorizon { start, end });
    }
    if end > profile.end_date() {
        return Err(DemandError::InsufficientCoverage { last: profile.end_date(), required: end });
    }
    let kits = (0..=days_between(start, end))
        .map(|k| {
            let offset = days_between(profile.start_date, start) + k;
            if offset < 0 {
                0.0
            } else {
                profile.daily_kits[offset as usize]
            }
        })
        .collect();
    Ok(DemandProfile::new(profile.region.clone(), start, kits)?)
}

/// Baseline storage of a region times the scenario multiplier.
pub fn storage_capacity(region: &str, multiplier: f64) -> Result<f64, DemandError> {
    let region: Region = region.parse()?;
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(DemandError::Config(format!("multiplier must be positive, got {multiplier}")));
    }
    Ok(region.base_storage_kits() * multiplier)
}

/// Sum of all profiles' demand over `[from, to]` (inclusive).
pub fn total_between(profiles: &[DemandProfile], from: NaiveDate, to: NaiveDate) -> f64 {
    profiles
        .iter()
        .flat_map(|p| {
            p.daily_kits
                .iter()
                .enumerate()
                .filter(move |(t, _)| (from..=to).contains(&p.date_at(*t)))
                .map(|(_, k)| *k)
        })
        .sum()
}

/// Writes `date,region,kits` rows (date-major, canonical region order) with
/// two fractional digits.
pub fn write_demand_csv(profiles: &[DemandProfile], out: impl Write) -> Result<(), DemandError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["date", "region", "kits"])?;
    let horizon = profiles.iter().map(DemandProfile::len).max().unwrap_or(0);
    for t in 0..horizon {
        for p in profiles {
            if let Some(k) = p.daily_kits.get(t) {
                writer.write_record([p.date_at(t).to_string(), p.region.clone(), format!("{k:.2}")])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}
