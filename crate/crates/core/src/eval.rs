//! Evaluation harness: synthetic scenes and constellations, receiver tracks,
//! the uncorrected-vs-corrected pipeline and its 2D error statistics.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::correction::{correct_position, default_initial_state, CorrectionDatabase};
use crate::ephemeris::{look_angles, EphemerisTable, SatelliteEpoch};
use crate::error::{Error, Result};
use crate::estimator::{elevation_weights, solve_with, SolverSettings};
use crate::geo::{geodetic_to_ecef, EcefPoint, EnuPoint, GeodeticPoint, LocalFrame};
use crate::io;
use crate::measurement::{simulate_at, NoiseModel, SimulatedMeasurement, Site};
use crate::scene::{snap_to_cell, terrain_altitude, Building, CellIndex, GridSpec, Scene, SceneFile, Terrain};

/// 2D distance; the up component is ignored.
pub fn horizontal_error(a: &EnuPoint, b: &EnuPoint) -> f64 {
    (a.east - b.east).hypot(a.north - b.north)
}

/// Summary of a series of 2D errors. `std` is the population deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub rms: f64,
    pub max: f64,
    pub min: f64,
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ErrorStats {
        mean,
        std: var.sqrt(),
        rms,
        max,
        min,
    })
}

/// Fixed-width table with one row per method and the columns
/// Mean, STD, RMS, Max, Min, one decimal each.
pub fn format_stats_table(rows: &[(&str, ErrorStats)]) -> String {
    let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
        "Method", "Mean", "STD", "RMS", "Max", "Min"
    );
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.1}  {:>8.1}  {:>8.1}  {:>8.1}  {:>8.1}",
            name, s.mean, s.std, s.rms, s.max, s.min
        );
    }
    out
}

/// Same rows as delimited text at full precision.
pub fn stats_csv(rows: &[(&str, ErrorStats)]) -> String {
    let mut out = String::from("method,mean_m,std_m,rms_m,max_m,min_m\n");
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "{name},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.mean, s.std, s.rms, s.max, s.min
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    OpenSky,
    Canyon,
    Street,
}

impl std::str::FromStr for ScenePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open_sky" | "open-sky" => Ok(ScenePreset::OpenSky),
            "canyon" => Ok(ScenePreset::Canyon),
            "street" => Ok(ScenePreset::Street),
            other => Err(Error::Validation(format!(
                "unknown scene preset `{other}` (expected open_sky, canyon or street)"
            ))),
        }
    }
}

/// Hong Kong, Tsim Sha Tsui.
pub const DEFAULT_ORIGIN: GeodeticPoint = GeodeticPoint {
    latitude: 22.2988,
    longitude: 114.1722,
    height: 5.0,
};

/// Layout of the generated streets. The street runs north-south through the
/// scene origin with one row of buildings on each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub street_width: f64,
    pub building_height: f64,
    pub block_length: f64,
    pub building_depth: f64,
    /// Buildings per row; the street preset varies their heights.
    pub blocks_per_row: u32,
    /// Open ground kept inside the grid beyond each end of the block.
    pub end_margin: f64,
    pub resolution: f64,
    pub receiver_height: f64,
    pub origin: GeodeticPoint,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            street_width: 20.0,
            building_height: 40.0,
            block_length: 120.0,
            building_depth: 20.0,
            blocks_per_row: 1,
            end_margin: 15.0,
            resolution: crate::scene::DEFAULT_RESOLUTION,
            receiver_height: crate::scene::DEFAULT_RECEIVER_HEIGHT,
            origin: DEFAULT_ORIGIN,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("street width", self.street_width),
            ("building height", self.building_height),
            ("block length", self.block_length),
            ("building depth", self.building_depth),
            ("resolution", self.resolution),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.end_margin >= 0.0) || !(self.receiver_height >= 0.0) {
            return Err(Error::Validation("end margin and receiver height must be non-negative".into()));
        }
        if self.blocks_per_row == 0 {
            return Err(Error::Validation("blocks per row must be at least 1".into()));
        }
        self.origin.validate()
    }
}

const STREET_HEIGHT_FACTORS: [f64; 3] = [1.0, 0.7, 1.3];

pub fn gen_scene(preset: ScenePreset, params: &SceneParams) -> Result<Scene> {
    params.validate()?;
    let half_w = params.street_width / 2.0;
    let outer = half_w + params.building_depth;
    let half_l = params.block_length / 2.0;
    let mut buildings = Vec::new();
    if preset != ScenePreset::OpenSky {
        let blocks = params.blocks_per_row;
        let seg = params.block_length / blocks as f64;
        for (side, (e0, e1)) in [(-outer, -half_w), (half_w, outer)].into_iter().enumerate() {
            for b in 0..blocks {
                let n0 = -half_l + seg * b as f64;
                let n1 = n0 + seg;
                let factor = match preset {
                    ScenePreset::Street => STREET_HEIGHT_FACTORS[(b as usize + side) % STREET_HEIGHT_FACTORS.len()],
                    _ => 1.0,
                };
                buildings.push(Building {
                    id: buildings.len() as u32 + 1,
                    base_alt: 0.0,
                    height: params.building_height * factor,
                    footprint: vec![[e0, n0], [e1, n0], [e1, n1], [e0, n1]],
                });
            }
        }
    }
    Scene::new(SceneFile {
        origin: params.origin,
        terrain: Terrain::Constant(0.0),
        buildings,
        grid: GridSpec {
            east: [-outer, outer],
            north: [-half_l - params.end_margin, half_l + params.end_margin],
            resolution: params.resolution,
            receiver_height: params.receiver_height,
        },
    })
}

const EARTH_GM: f64 = 3.986_004_418e14;
pub const ORBIT_RADIUS: f64 = 26_560_000.0;
/// Largest geocentric angle between a satellite and the site zenith that
/// still keeps it above 15° elevation, with a little slack.
const MAX_ZENITH_ANGLE_DEG: f64 = 58.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationParams {
    pub count: u32,
    pub epochs: u32,
    pub step: f64,
    pub start: f64,
    pub min_elevation_deg: f64,
}

impl Default for ConstellationParams {
    fn default() -> Self {
        ConstellationParams {
            count: 10,
            epochs: 240,
            step: 30.0,
            start: 0.0,
            min_elevation_deg: 15.0,
        }
    }
}

/// Circular orbits of radius [`ORBIT_RADIUS`], one plane per satellite,
/// arranged so every satellite stays above the elevation mask at `origin`
/// for the whole tabulated span. Orbits are laid out in the Earth-fixed
/// frame; Earth rotation is not modeled.
pub fn gen_constellation(origin: &GeodeticPoint, params: &ConstellationParams) -> Result<EphemerisTable> {
    origin.validate()?;
    if params.count < 4 {
        return Err(Error::InfeasibleParameters(format!(
            "at least 4 satellites are needed, got {}",
            params.count
        )));
    }
    if params.epochs == 0 || !(params.step > 0.0) || !params.start.is_finite() {
        return Err(Error::InfeasibleParameters("need at least one epoch and a positive step".into()));
    }
    let span = params.step * (params.epochs - 1) as f64;
    let omega = (EARTH_GM / ORBIT_RADIUS.powi(3)).sqrt();
    let half_arc = (omega * span / 2.0).to_degrees();
    let max_zenith = MAX_ZENITH_ANGLE_DEG - half_arc;
    if max_zenith < 3.0 {
        return Err(Error::InfeasibleParameters(format!(
            "a {span} s span moves satellites {:.1}° along their orbits; too long to keep them all visible",
            2.0 * half_arc
        )));
    }
    let site = geodetic_to_ecef(origin).vector();
    let zenith = site.normalize();
    let east = {
        let e = Vector3::z().cross(&zenith);
        if e.norm() < 1e-9 {
            Vector3::y()
        } else {
            e.normalize()
        }
    };
    let north = zenith.cross(&east);
    let mid = params.start + span / 2.0;
    let golden = 0.618_033_988_749_895_f64;

    let mut records = Vec::with_capacity((params.count * params.epochs) as usize);
    for i in 0..params.count {
        let azimuth = std::f64::consts::TAU * i as f64 / params.count as f64;
        let spread = 0.35 + 0.65 * ((i as f64 + 1.0) * golden).fract();
        let gamma = (max_zenith * spread).to_radians();
        let horizontal = north * azimuth.cos() + east * azimuth.sin();
        let u = zenith * gamma.cos() + horizontal * gamma.sin();
        let across = {
            let a = u.cross(&zenith);
            if a.norm() < 1e-9 {
                east
            } else {
                a.normalize()
            }
        };
        let along = u.cross(&across);
        let beta = 2.4 * i as f64;
        let v = across * beta.cos() + along * beta.sin();
        let sat_id = format!("G{:02}", i + 1);
        for k in 0..params.epochs {
            let epoch = params.start + params.step * k as f64;
            let theta = omega * (epoch - mid);
            let p = (u * theta.cos() + v * theta.sin()) * ORBIT_RADIUS;
            records.push(SatelliteEpoch {
                epoch,
                sat_id: sat_id.clone(),
                position: EcefPoint::new(p.x, p.y, p.z),
            });
        }
    }

    let frame = LocalFrame::new(*origin);
    let at_origin = EnuPoint::new(0.0, 0.0, 0.0);
    for r in &records {
        let (el, _) = look_angles(&frame.to_enu(&r.position), &at_origin);
        if el <= params.min_elevation_deg {
            return Err(Error::InfeasibleParameters(format!(
                "satellite {} drops to {el:.1}° at epoch {} s",
                r.sat_id, r.epoch
            )));
        }
    }
    EphemerisTable::new(records)
}

/// One truth position of a receiver track.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackPoint {
    pub epoch: f64,
    pub position: EnuPoint,
}

pub const TRACK_HEADER: &str = "epoch_s,east_m,north_m,up_m";

fn check_track(points: &[TrackPoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Validation("track has no points".into()));
    }
    for w in points.windows(2) {
        if !(w[1].epoch > w[0].epoch) {
            return Err(Error::Validation(format!(
                "track epochs must be strictly increasing ({} s follows {} s)",
                w[1].epoch, w[0].epoch
            )));
        }
    }
    Ok(())
}

/// Evenly spaced points from `start` to `end` (east, north), at receiver
/// height above the terrain.
pub fn straight_track(
    scene: &Scene,
    start: [f64; 2],
    end: [f64; 2],
    first_epoch: f64,
    step: f64,
    count: u32,
) -> Result<Vec<TrackPoint>> {
    if count == 0 || !(step > 0.0) {
        return Err(Error::Validation("track needs at least one point and a positive step".into()));
    }
    let h = scene.grid().receiver_height;
    let points: Vec<TrackPoint> = (0..count)
        .map(|k| {
            let f = if count == 1 {
                0.0
            } else {
                k as f64 / (count - 1) as f64
            };
            let e = start[0] + (end[0] - start[0]) * f;
            let n = start[1] + (end[1] - start[1]) * f;
            TrackPoint {
                epoch: first_epoch + step * k as f64,
                position: EnuPoint::new(e, n, terrain_altitude(scene.terrain(), e, n) + h),
            }
        })
        .collect();
    check_track(&points)?;
    Ok(points)
}

/// Walking track along the west sidewalk of a generated street, 2 m from
/// the building faces, sampled at the constellation epochs.
pub fn sidewalk_track(scene: &Scene, params: &SceneParams, constellation: &ConstellationParams) -> Result<Vec<TrackPoint>> {
    let e = -params.street_width / 2.0 + 2.0_f64.min(params.street_width / 2.0);
    let half = params.block_length / 2.0;
    straight_track(
        scene,
        [e, -half + 5.0_f64.min(half)],
        [e, half - 5.0_f64.min(half)],
        constellation.start,
        constellation.step,
        constellation.epochs,
    )
}

pub fn parse_track(text: &str, source: &str) -> Result<Vec<TrackPoint>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(format!("{source} header"), e))?;
    if headers.iter().collect::<Vec<_>>() != TRACK_HEADER.split(',').collect::<Vec<_>>() {
        return Err(Error::parse(
            format!("{source} header"),
            format!("expected `{TRACK_HEADER}`"),
        ));
    }
    let mut points = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let ctx = format!("{source} row {}", i + 2);
        let row = row.map_err(|e| Error::parse(ctx.clone(), e))?;
        let v = row
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::parse(ctx.clone(), e)))
            .collect::<Result<Vec<_>>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(ctx, "non-finite value"));
        }
        points.push(TrackPoint {
            epoch: v[0],
            position: EnuPoint::new(v[1], v[2], v[3]),
        });
    }
    check_track(&points)?;
    Ok(points)
}

pub fn track_to_csv(points: &[TrackPoint]) -> String {
    let mut out = format!("{TRACK_HEADER}\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.epoch, p.position.east, p.position.north, p.position.up
        );
    }
    out
}

pub fn load_track(path: &Path) -> Result<Vec<TrackPoint>> {
    parse_track(&io::read_to_string(path)?, &path.display().to_string())
}

pub fn save_track(points: &[TrackPoint], path: &Path) -> Result<()> {
    io::write_atomic(path, track_to_csv(points).as_bytes())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Elevation-weighted least squares.
    #[default]
    Wls,
    Ols,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wls" => Ok(Baseline::Wls),
            "ols" => Ok(Baseline::Ols),
            other => Err(Error::Validation(format!("unknown solver `{other}` (expected wls or ols)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PipelineOptions {
    pub baseline: Baseline,
    pub noise: NoiseModel,
    pub solver: SolverSettings,
}

/// One evaluated epoch. `raw` and `corrected` are absent when the epoch
/// could not be solved.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub epoch: f64,
    pub truth: Option<EnuPoint>,
    pub raw: Option<EnuPoint>,
    pub corrected: Option<EnuPoint>,
    pub applied: bool,
    pub satellites: usize,
    /// Result cell of the raw fix and the support of the entry used.
    pub result_cell: Option<CellIndex>,
    pub support: Option<usize>,
}

impl TrajectoryRecord {
    pub fn raw_error(&self) -> Option<f64> {
        Some(horizontal_error(self.raw.as_ref()?, self.truth.as_ref()?))
    }

    pub fn corrected_error(&self) -> Option<f64> {
        Some(horizontal_error(self.corrected.as_ref()?, self.truth.as_ref()?))
    }
}

/// Solve one epoch's measurements with the baseline solver and apply the
/// database.
pub fn correct_epoch(
    scene: &Scene,
    db: &CorrectionDatabase,
    epoch: f64,
    truth: Option<EnuPoint>,
    meas: &[SimulatedMeasurement],
    options: &PipelineOptions,
) -> TrajectoryRecord {
    let init = default_initial_state(scene, scene.grid());
    let solution = match options.baseline {
        Baseline::Ols => solve_with(meas, None, &init, &options.solver),
        Baseline::Wls => {
            let w = elevation_weights(meas, &init.position);
            solve_with(meas, Some(&w), &init, &options.solver)
        }
    };
    let mut record = TrajectoryRecord {
        epoch,
        truth,
        raw: None,
        corrected: None,
        applied: false,
        satellites: meas.len(),
        result_cell: None,
        support: None,
    };
    if let Ok(sol) = solution {
        let applied = correct_position(&sol.position, epoch, db);
        record.raw = Some(sol.position);
        record.corrected = Some(applied.corrected);
        record.applied = applied.applied;
        record.result_cell = snap_to_cell(&sol.position, &db.grid);
        record.support = applied.entry.map(|e| e.support);
    }
    record
}

/// Measurements simulated at the truth position of each track point.
pub fn simulate_track(
    scene: &Scene,
    table: &EphemerisTable,
    track: &[TrackPoint],
    noise: &NoiseModel,
) -> Result<Vec<Vec<SimulatedMeasurement>>> {
    noise.validate()?;
    track
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sats = table.satellites_at(p.epoch)?;
            Ok(simulate_at(&p.position, Site::Track(i as u32), sats, scene, noise))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineReport {
    pub records: Vec<TrajectoryRecord>,
    pub raw_stats: Option<ErrorStats>,
    pub corrected_stats: Option<ErrorStats>,
}

impl PipelineReport {
    pub fn from_records(records: Vec<TrajectoryRecord>) -> Self {
        let raw: Vec<f64> = records.iter().filter_map(|r| r.raw_error()).collect();
        let corrected: Vec<f64> = records.iter().filter_map(|r| r.corrected_error()).collect();
        PipelineReport {
            raw_stats: error_stats(&raw).ok(),
            corrected_stats: error_stats(&corrected).ok(),
            records,
        }
    }

    pub fn applied_count(&self) -> usize {
        self.records.iter().filter(|r| r.applied).count()
    }

    pub fn unsolved_count(&self) -> usize {
        self.records.iter().filter(|r| r.raw.is_none()).count()
    }

    pub fn stats_rows(&self, baseline: Baseline) -> Vec<(&'static str, ErrorStats)> {
        let name = match baseline {
            Baseline::Wls => "WLS",
            Baseline::Ols => "OLS",
        };
        let mut rows = Vec::new();
        if let Some(s) = self.raw_stats {
            rows.push((name, s));
        }
        if let Some(s) = self.corrected_stats {
            rows.push(("DT-aided", s));
        }
        rows
    }
}

/// Simulate measurements along the track, solve, correct and summarize.
pub fn run_pipeline(
    scene: &Scene,
    table: &EphemerisTable,
    track: &[TrackPoint],
    db: &CorrectionDatabase,
    options: &PipelineOptions,
) -> Result<PipelineReport> {
    check_track(track)?;
    let measurements = simulate_track(scene, table, track, &options.noise)?;
    let records = track
        .iter()
        .zip(&measurements)
        .map(|(p, m)| correct_epoch(scene, db, p.epoch, Some(p.position), m, options))
        .collect();
    Ok(PipelineReport::from_records(records))
}

pub const REPORT_HEADER: &str = "epoch_s,truth_e,truth_n,raw_e,raw_n,raw_err2d,corr_e,corr_n,corr_err2d,applied,sats";

fn opt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-epoch report. Missing values are left empty.
pub fn report_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            opt6(r.truth.map(|p| p.east)),
            opt6(r.truth.map(|p| p.north)),
            opt6(r.raw.map(|p| p.east)),
            opt6(r.raw.map(|p| p.north)),
            opt6(r.raw_error()),
            opt6(r.corrected.map(|p| p.east)),
            opt6(r.corrected.map(|p| p.north)),
            opt6(r.corrected_error()),
            u8::from(r.applied),
            r.satellites
        );
    }
    out
}

/// Errors read back from a report: `(raw, corrected)` per solved epoch with
/// a truth position.
pub fn parse_report_errors(text: &str, source: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == REPORT_HEADER => {}
        _ => return Err(Error::parse(format!("{source} line 1"), "missing report header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::parse(format!("{source} line {}", i + 1), "expected 11 fields"));
        }
        if f[5].is_empty() || f[8].is_empty() {
            continue;
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(format!("{source} line {}", i + 1), e))
        };
        out.push((num(f[5])?, num(f[8])?));
    }
    Ok(out)
}

/// Error time series for plotting: `epoch_s,raw_err2d,corr_err2d,applied`.
pub fn error_series_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::from("epoch_s,raw_err2d,corr_err2d,applied\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.epoch,
            opt6(r.raw_error()),
            opt6(r.corrected_error()),
            u8::from(r.applied)
        );
    }
    out
}

/// Database support counts per cell for plotting:
/// `slot,col,row,east_m,north_m,support,dx,dy`.
pub fn support_map_csv(db: &CorrectionDatabase) -> String {
    let mut out = String::from("slot,col,row,east_m,north_m,support,dx,dy\n");
    for e in db.entries() {
        let (east, north) = db.grid.cell_center_2d(e.cell);
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:.3},{},{:.6},{:.6}",
            e.slot, e.cell.col, e.cell.row, east, north, e.support, e.correction.x, e.correction.y
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn horizontal_error_ignores_up() {
        let a = EnuPoint::new(3.0, 4.0, 100.0);
        assert_eq!(horizontal_error(&a, &a), 0.0);
        assert_eq!(horizontal_error(&a, &EnuPoint::new(0.0, 0.0, -7.0)), 5.0);
        // (1.5 − (−2))² + (−2 − 10)² = 12.25 + 144
        let v = horizontal_error(&EnuPoint::new(1.5, -2.0, 0.0), &EnuPoint::new(-2.0, 10.0, 3.0));
        assert_abs_diff_eq!(v, 156.25_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 12.5, epsilon = 1e-12);
    }

    #[test]
    fn hand_checked_stats() {
        let s = error_stats(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(
            s,
            ErrorStats {
                mean: 5.0,
                std: 0.0,
                rms: 5.0,
                max: 5.0,
                min: 5.0
            }
        );
        let s = error_stats(&[3.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.std, s.max, s.min), (3.5, 0.5, 4.0, 3.0));
        assert_abs_diff_eq!(s.rms, 12.5_f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(error_stats(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn table_layout() {
        let wls = ErrorStats {
            mean: 41.2,
            std: 9.1,
            rms: 42.1,
            max: 63.1,
            min: 17.3,
        };
        let table = format_stats_table(&[("WLS", wls)]);
        let lines: Vec<&str> = table.lines().collect();
        let head: Vec<&str> = lines[0].split_whitespace().collect();
        assert_eq!(head, ["Method", "Mean", "STD", "RMS", "Max", "Min"]);
        let row: Vec<&str> = lines[1].split_whitespace().collect();
        assert_eq!(row, ["WLS", "41.2", "9.1", "42.1", "63.1", "17.3"]);
    }

    proptest! {
        #[test]
        fn rms_mean_std_identity(v in prop::collection::vec(0.0..200.0f64, 1..60)) {
            let s = error_stats(&v).unwrap();
            prop_assert!((s.rms.powi(2) - (s.mean.powi(2) + s.std.powi(2))).abs() <= 1e-9 * (1.0 + s.rms.powi(2)));
            prop_assert!(s.min <= s.mean + 1e-12 && s.mean <= s.max + 1e-12);
            prop_assert!(s.rms + 1e-12 >= s.mean.abs());
        }
    }

    #[test]
    fn presets() {
        let p = SceneParams::default();
        let open = gen_scene(ScenePreset::OpenSky, &p).unwrap();
        assert!(open.buildings().is_empty());
        let canyon = gen_scene(ScenePreset::Canyon, &p).unwrap();
        assert_eq!(canyon.buildings().len(), 2);
        assert!(canyon.buildings().iter().all(|b| b.height == 40.0));
        let g = canyon.grid();
        assert!(g.east[0] <= -10.0 && g.east[1] >= 10.0);
        assert!(g.north[0] <= -60.0 && g.north[1] >= 60.0);
        let street = gen_scene(
            ScenePreset::Street,
            &SceneParams {
                blocks_per_row: 3,
                ..p.clone()
            },
        )
        .unwrap();
        assert_eq!(street.buildings().len(), 6);
        let bad = SceneParams {
            street_width: -20.0,
            ..p
        };
        assert!(gen_scene(ScenePreset::Canyon, &bad).unwrap_err().is_validation());
    }

    #[test]
    fn constellation_rows_and_mask() {
        let one = gen_constellation(
            &DEFAULT_ORIGIN,
            &ConstellationParams {
                count: 8,
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(one.records().len(), 8);

        let params = ConstellationParams::default();
        let table = gen_constellation(&DEFAULT_ORIGIN, &params).unwrap();
        assert_eq!(table.records().len(), 2400);
        let frame = LocalFrame::new(DEFAULT_ORIGIN);
        let origin = EnuPoint::new(0.0, 0.0, 0.0);
        for r in table.records() {
            let (el, _) = look_angles(&frame.to_enu(&r.position), &origin);
            assert!(el > 15.0, "{} at {}: {el}", r.sat_id, r.epoch);
            assert_abs_diff_eq!(r.position.vector().norm(), ORBIT_RADIUS, epsilon = 1e-3);
        }
        let again = gen_constellation(&DEFAULT_ORIGIN, &params).unwrap();
        assert_eq!(table.to_csv_string(), again.to_csv_string());
    }

    #[test]
    fn infeasible_constellations() {
        let few = ConstellationParams {
            count: 3,
            ..Default::default()
        };
        assert!(matches!(gen_constellation(&DEFAULT_ORIGIN, &few), Err(Error::InfeasibleParameters(_))));
        let long = ConstellationParams {
            epochs: 24 * 120,
            ..Default::default()
        };
        assert!(matches!(gen_constellation(&DEFAULT_ORIGIN, &long), Err(Error::InfeasibleParameters(_))));
    }

    #[test]
    fn track_round_trip_and_order() {
        let scene = gen_scene(ScenePreset::Canyon, &SceneParams::default()).unwrap();
        let track = straight_track(&scene, [-8.0, -50.0], [-8.0, 50.0], 0.0, 30.0, 11).unwrap();
        assert_eq!(track[5].position, EnuPoint::new(-8.0, 0.0, 1.0));
        let text = track_to_csv(&track);
        assert_eq!(parse_track(&text, "t").unwrap(), track);
        let unordered = format!("{TRACK_HEADER}\n30,0,0,1\n0,0,0,1\n");
        assert!(parse_track(&unordered, "t").is_err());
    }
}
