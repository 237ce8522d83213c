//! Tabulated satellite positions, nearest-epoch lookup, time slots and
//! local look angles.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{EcefPoint, EnuPoint, GeodeticPoint, LocalFrame};
use crate::io;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const DEFAULT_SLOT_LENGTH: f64 = 300.0;

/// Orbit radius sanity band (m): anything outside is not a MEO/GEO
/// navigation satellite.
const MIN_SAT_RADIUS: f64 = 2.0e7;
const MAX_SAT_RADIUS: f64 = 5.0e7;

pub const EPHEMERIS_HEADER: [&str; 5] = ["epoch_s", "sat_id", "x_m", "y_m", "z_m"];

#[derive(Clone, Debug, PartialEq)]
pub struct SatelliteEpoch {
    /// Seconds of GPS day.
    pub epoch: f64,
    pub sat_id: String,
    pub position: EcefPoint,
}

impl SatelliteEpoch {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..SECONDS_PER_DAY).contains(&self.epoch) {
            return Err(Error::Validation(format!(
                "satellite {}: epoch {} outside [0, 86400)",
                self.sat_id, self.epoch
            )));
        }
        let r = self.position.norm();
        if !self.position.is_finite() || !(MIN_SAT_RADIUS..=MAX_SAT_RADIUS).contains(&r) {
            return Err(Error::Validation(format!(
                "satellite {} at epoch {}: position norm {r:.1} m outside the [2e7, 5e7] m sanity band",
                self.sat_id, self.epoch
            )));
        }
        Ok(())
    }
}

/// Validated satellite positions sorted by `(epoch, sat_id)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EphemerisTable {
    records: Vec<SatelliteEpoch>,
    // distinct epochs with the start offset of their records
    epochs: Vec<(f64, usize)>,
    step: f64,
}

impl EphemerisTable {
    /// Validate and sort. The epoch step is the smallest gap between
    /// distinct epochs (zero for a single-epoch table, which then only
    /// answers exact queries).
    pub fn new(mut records: Vec<SatelliteEpoch>) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        records.sort_by(|a, b| a.epoch.total_cmp(&b.epoch).then_with(|| a.sat_id.cmp(&b.sat_id)));
        for pair in records.windows(2) {
            if pair[0].epoch == pair[1].epoch && pair[0].sat_id == pair[1].sat_id {
                return Err(Error::Validation(format!(
                    "duplicate record for satellite {} at epoch {}",
                    pair[0].sat_id, pair[0].epoch
                )));
            }
        }
        let mut epochs: Vec<(f64, usize)> = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if epochs.last().map_or(true, |&(e, _)| e != r.epoch) {
                epochs.push((r.epoch, i));
            }
        }
        let step = epochs
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .fold(f64::INFINITY, f64::min);
        Ok(EphemerisTable {
            records,
            epochs,
            step: if step.is_finite() { step } else { 0.0 },
        })
    }

    pub fn records(&self) -> &[SatelliteEpoch] {
        &self.records
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn epochs(&self) -> impl Iterator<Item = f64> + '_ {
        self.epochs.iter().map(|&(e, _)| e)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn satellite_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.sat_id.as_str()).collect()
    }

    /// Records of the tabulated epoch nearest to `epoch`, provided it lies
    /// within half a step. Ties go to the earlier epoch.
    pub fn satellites_at(&self, epoch: f64) -> Result<&[SatelliteEpoch]> {
        let i = self.epochs.partition_point(|&(e, _)| e < epoch);
        let mut best: Option<usize> = None;
        for j in [i.wrapping_sub(1), i] {
            if j < self.epochs.len() {
                let better = match best {
                    None => true,
                    Some(b) => (self.epochs[j].0 - epoch).abs() < (self.epochs[b].0 - epoch).abs(),
                };
                if better {
                    best = Some(j);
                }
            }
        }
        let j = best.ok_or(Error::Coverage { epoch })?;
        if (self.epochs[j].0 - epoch).abs() > self.step / 2.0 {
            return Err(Error::Coverage { epoch });
        }
        let start = self.epochs[j].1;
        let end = self.epochs.get(j + 1).map_or(self.records.len(), |&(_, s)| s);
        Ok(&self.records[start..end])
    }

    /// Canonical text encoding (also the input to [`Self::content_hash`]).
    pub fn to_csv_string(&self) -> String {
        let mut out = EPHEMERIS_HEADER.join(",");
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.sat_id, r.position.x, r.position.y, r.position.z
            ));
        }
        out
    }

    pub fn content_hash(&self) -> String {
        io::sha256_hex(self.to_csv_string().as_bytes())
    }
}

pub fn parse_ephemeris(text: &str, source: &str) -> Result<EphemerisTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(format!("{source} header"), e))?
        .clone();
    if header.iter().collect::<Vec<_>>() != EPHEMERIS_HEADER {
        return Err(Error::parse(
            format!("{source} header"),
            format!("expected `{}`, found `{}`", EPHEMERIS_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(format!("{source} row {line}"), e))?;
        if row.len() != 5 {
            return Err(Error::parse(
                format!("{source} row {line}"),
                format!("expected 5 fields, found {}", row.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            row[k].parse::<f64>().map_err(|e| {
                Error::parse(format!("{source} row {line} field {}", EPHEMERIS_HEADER[k]), e)
            })
        };
        let sat_id = row[1].to_string();
        if sat_id.is_empty() {
            return Err(Error::parse(format!("{source} row {line} field sat_id"), "empty satellite id"));
        }
        records.push(SatelliteEpoch {
            epoch: num(0)?,
            sat_id,
            position: EcefPoint::new(num(2)?, num(3)?, num(4)?),
        });
    }
    EphemerisTable::new(records)
}

pub fn load_ephemeris(path: &Path) -> Result<EphemerisTable> {
    let text = io::read_to_string(path)?;
    parse_ephemeris(&text, &path.display().to_string())
}

pub fn save_ephemeris(table: &EphemerisTable, path: &Path) -> Result<()> {
    io::write_atomic(path, table.to_csv_string().as_bytes())
}

/// A time slot of the day.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotIndex {
    pub slot: u32,
    pub length: f64,
}

impl SlotIndex {
    /// Number of slots in a day for the given slot length.
    pub fn slots_per_day(length: f64) -> u32 {
        (SECONDS_PER_DAY / length).ceil() as u32
    }

    pub fn start(&self) -> f64 {
        self.slot as f64 * self.length
    }

    pub fn end(&self) -> f64 {
        (self.slot + 1) as f64 * self.length
    }
}

/// `floor(epoch / length)`, or `None` when `epoch` is outside the day or the
/// slot length is not positive.
pub fn slot_of_epoch(epoch: f64, length: f64) -> Option<SlotIndex> {
    if !(length > 0.0) || !(0.0..SECONDS_PER_DAY).contains(&epoch) {
        return None;
    }
    Some(SlotIndex {
        slot: (epoch / length).floor() as u32,
        length,
    })
}

/// Look angles in degrees of the receiver→satellite vector, both expressed
/// in the same local frame. Azimuth is clockwise from north in `[0, 360)`.
pub fn look_angles(sat: &EnuPoint, receiver: &EnuPoint) -> (f64, f64) {
    let v = *sat - *receiver;
    let elevation = v.z.atan2(v.x.hypot(v.y)).to_degrees();
    let mut azimuth = v.x.atan2(v.y).to_degrees();
    if azimuth < 0.0 {
        azimuth += 360.0;
    }
    if azimuth >= 360.0 {
        azimuth -= 360.0;
    }
    (elevation, azimuth)
}

/// Elevation and azimuth (degrees) of an ECEF satellite seen from a receiver
/// given in the ENU frame anchored at `origin`.
pub fn elevation_azimuth(sat: &EcefPoint, receiver: &EnuPoint, origin: &GeodeticPoint) -> (f64, f64) {
    let frame = LocalFrame::new(*origin);
    look_angles(&frame.to_enu(sat), receiver)
}
