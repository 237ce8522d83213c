//! The correction database.
//!
//! Every candidate cell `k` is simulated at every sampled epoch of a time
//! slot and solved with OLS, giving a biased fix `x̂ = x_k + ε`. Fixes are
//! then grouped by the cell `n` their solution lands in; the correction
//! stored for `(slot, n)` is the negated mean bias of that group. A receiver
//! whose own fix lands in `n` during that slot adds the stored correction.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::ephemeris::{slot_of_epoch, EphemerisTable, SlotIndex, DEFAULT_SLOT_LENGTH};
use crate::error::{Error, Result};
use crate::estimator::{solve_with, PositionSolution, SolverSettings};
use crate::geo::EnuPoint;
use crate::io;
use crate::measurement::{simulate_cell_epoch, NoiseModel};
use crate::scene::{build_grid, snap_to_cell, terrain_altitude, CellIndex, GridCell, GridSpec, Scene};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_STEP: f64 = 30.0;
const MAGIC: &str = "dtgnss-correction-db";
const RECORD_HEADER: &str = "slot,col,row,dx,dy,dz,support,contributors";

/// One simulated (possibly biased) fix of a candidate receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulatedFix {
    pub origin: CellIndex,
    pub origin_center: EnuPoint,
    pub epoch: f64,
    pub solution: EnuPoint,
    /// `solution − origin_center`.
    pub bias: Vector3<f64>,
    pub converged: bool,
}

/// Fixes for one slot plus the candidates that produced no fix at all.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSolutions {
    pub slot: SlotIndex,
    pub sampled_epochs: Vec<f64>,
    pub candidate_cells: usize,
    pub fixes: Vec<SimulatedFix>,
    /// (cell, epoch) pairs with fewer than four satellites or singular
    /// geometry.
    pub unsolvable: usize,
}

/// An `(origin cell, epoch)` pair whose fix contributed to an entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contributor {
    pub cell: CellIndex,
    pub epoch: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionEntry {
    pub slot: u32,
    /// The result cell the biased fixes landed in.
    pub cell: CellIndex,
    pub correction: Vector3<f64>,
    /// Number of contributing fixes.
    pub support: usize,
    pub contributors: Vec<Contributor>,
}

/// Bookkeeping for one slot: every `(candidate, sampled epoch)` pair ends up
/// in exactly one of the three buckets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotAccounting {
    pub slot: u32,
    pub sampled_epochs: usize,
    pub contributing: usize,
    /// Fixes that landed outside the grid.
    pub dropped: usize,
    /// Unsolvable or non-converged candidates.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Accumulation {
    pub entries: Vec<CorrectionEntry>,
    pub dropped: usize,
    pub skipped: usize,
}

/// Knobs for [`build_database`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildSettings {
    pub slot_length: f64,
    /// Epoch sampling step inside each slot; must divide `slot_length`.
    pub step: f64,
    pub solver: SolverSettings,
}

impl Default for BuildSettings {
    fn default() -> Self {
        BuildSettings {
            slot_length: DEFAULT_SLOT_LENGTH,
            step: DEFAULT_STEP,
            solver: SolverSettings::default(),
        }
    }
}

impl BuildSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_length > 0.0) || !(self.step > 0.0) {
            return Err(Error::Validation("slot length and step must be positive".into()));
        }
        let ratio = self.slot_length / self.step;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::Validation(format!(
                "step {} s does not divide slot length {} s",
                self.step, self.slot_length
            )));
        }
        Ok(())
    }

    fn samples_per_slot(&self) -> usize {
        (self.slot_length / self.step).round() as usize
    }
}

/// Solver starting point: the grid-bounds centroid at receiver height.
pub fn default_initial_state(scene: &Scene, grid: &GridSpec) -> PositionSolution {
    let e = (grid.east[0] + grid.east[1]) / 2.0;
    let n = (grid.north[0] + grid.north[1]) / 2.0;
    let up = terrain_altitude(scene.terrain(), e, n) + grid.receiver_height;
    PositionSolution::initial(EnuPoint::new(e, n, up), 0.0)
}

/// Simulate and solve every candidate cell at every sampled epoch of
/// `slot` that the ephemeris covers. Measurements are noise-free.
pub fn simulate_slot_solutions(
    scene: &Scene,
    cells: &[GridCell],
    table: &EphemerisTable,
    slot: SlotIndex,
    settings: &BuildSettings,
) -> Result<SlotSolutions> {
    settings.validate()?;
    let init = default_initial_state(scene, scene.grid());
    let mut sampled = Vec::new();
    let mut sats_per_epoch = Vec::new();
    for i in 0..settings.samples_per_slot() {
        let epoch = slot.start() + i as f64 * settings.step;
        if let Ok(sats) = table.satellites_at(epoch) {
            sampled.push(epoch);
            sats_per_epoch.push(sats);
        }
    }
    if sampled.is_empty() {
        return Err(Error::Coverage { epoch: slot.start() });
    }

    let noise = NoiseModel::none();
    let tasks: Vec<(usize, &GridCell)> = (0..sampled.len())
        .flat_map(|e| cells.iter().map(move |c| (e, c)))
        .collect();
    let results: Vec<Option<SimulatedFix>> = tasks
        .par_iter()
        .map(|&(e, cell)| {
            let meas = simulate_cell_epoch(cell, sats_per_epoch[e], scene, &noise);
            let sol = solve_with(&meas, None, &init, &settings.solver).ok()?;
            Some(SimulatedFix {
                origin: cell.index,
                origin_center: cell.center,
                epoch: sampled[e],
                solution: sol.position,
                bias: sol.position - cell.center,
                converged: sol.converged,
            })
        })
        .collect();
    let unsolvable = results.iter().filter(|r| r.is_none()).count();
    Ok(SlotSolutions {
        slot,
        sampled_epochs: sampled,
        candidate_cells: cells.len(),
        fixes: results.into_iter().flatten().collect(),
        unsolvable,
    })
}

/// Group converged fixes by the cell their solution snaps to and average
/// the biases. Non-converged fixes count as skipped; fixes landing outside
/// the grid count as dropped.
pub fn accumulate_corrections(fixes: &[SimulatedFix], grid: &GridSpec, slot: SlotIndex) -> Accumulation {
    let mut groups: BTreeMap<CellIndex, Vec<&SimulatedFix>> = BTreeMap::new();
    let mut dropped = 0;
    let mut skipped = 0;
    for fix in fixes {
        if !fix.converged {
            skipped += 1;
            continue;
        }
        match snap_to_cell(&fix.solution, grid) {
            Some(cell) => groups.entry(cell).or_default().push(fix),
            None => dropped += 1,
        }
    }
    let entries = groups
        .into_iter()
        .map(|(cell, members)| CorrectionEntry {
            slot: slot.slot,
            cell,
            correction: negated_mean_bias(members.iter().map(|f| &f.bias)),
            support: members.len(),
            contributors: members
                .iter()
                .map(|f| Contributor {
                    cell: f.origin,
                    epoch: f.epoch,
                })
                .collect(),
        })
        .collect();
    Accumulation {
        entries,
        dropped,
        skipped,
    }
}

/// `−(Σ ε) / K'`, summed in iteration order.
pub fn negated_mean_bias<'a>(biases: impl Iterator<Item = &'a Vector3<f64>>) -> Vector3<f64> {
    let mut sum = Vector3::zeros();
    let mut count = 0usize;
    for b in biases {
        sum += b;
        count += 1;
    }
    -(sum / count as f64)
}

/// Provenance recorded alongside the entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DatabaseMetadata {
    pub scene_hash: String,
    pub ephemeris_hash: String,
    pub tool_version: String,
    pub candidate_cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionDatabase {
    pub grid: GridSpec,
    pub slot_length: f64,
    pub step: f64,
    pub metadata: DatabaseMetadata,
    pub slots: Vec<SlotAccounting>,
    entries: BTreeMap<(u32, CellIndex), CorrectionEntry>,
}

impl CorrectionDatabase {
    pub fn new(
        grid: GridSpec,
        slot_length: f64,
        step: f64,
        metadata: DatabaseMetadata,
        slots: Vec<SlotAccounting>,
        entries: impl IntoIterator<Item = CorrectionEntry>,
    ) -> Result<Self> {
        grid.validate()?;
        let total_slots = SlotIndex::slots_per_day(slot_length);
        let mut map = BTreeMap::new();
        for e in entries {
            if e.slot >= total_slots {
                return Err(Error::Validation(format!(
                    "entry slot {} exceeds the {total_slots} slots of a day",
                    e.slot
                )));
            }
            if e.cell.col >= grid.cols() || e.cell.row >= grid.rows() {
                return Err(Error::Validation(format!("entry cell {} outside the grid", e.cell)));
            }
            if e.support == 0 || e.support != e.contributors.len() {
                return Err(Error::Validation(format!(
                    "entry ({}, {}) support {} does not match {} contributors",
                    e.slot,
                    e.cell,
                    e.support,
                    e.contributors.len()
                )));
            }
            if map.insert((e.slot, e.cell), e).is_some() {
                return Err(Error::Validation("duplicate database entry".into()));
            }
        }
        Ok(CorrectionDatabase {
            grid,
            slot_length,
            step,
            metadata,
            slots,
            entries: map,
        })
    }

    pub fn entry(&self, slot: u32, cell: CellIndex) -> Option<&CorrectionEntry> {
        self.entries.get(&(slot, cell))
    }

    /// Entries in canonical `(slot, col, row)` order.
    pub fn entries(&self) -> impl Iterator<Item = &CorrectionEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn covers_slot(&self, slot: u32) -> bool {
        self.slots.iter().any(|s| s.slot == slot)
    }
}

/// Build the database for every slot that contains at least one tabulated
/// epoch.
pub fn build_database(scene: &Scene, table: &EphemerisTable, settings: &BuildSettings) -> Result<CorrectionDatabase> {
    settings.validate()?;
    let grid = scene.grid();
    let cells = build_grid(scene, grid);
    let mut slot_ids: Vec<u32> = table
        .epochs()
        .filter_map(|e| slot_of_epoch(e, settings.slot_length))
        .map(|s| s.slot)
        .collect();
    slot_ids.dedup();

    let mut accounting = Vec::with_capacity(slot_ids.len());
    let mut entries = Vec::new();
    for slot in slot_ids {
        let slot = SlotIndex {
            slot,
            length: settings.slot_length,
        };
        let sim = simulate_slot_solutions(scene, &cells, table, slot, settings)?;
        let acc = accumulate_corrections(&sim.fixes, grid, slot);
        accounting.push(SlotAccounting {
            slot: slot.slot,
            sampled_epochs: sim.sampled_epochs.len(),
            contributing: acc.entries.iter().map(|e| e.support).sum(),
            dropped: acc.dropped,
            skipped: acc.skipped + sim.unsolvable,
        });
        entries.extend(acc.entries);
    }
    CorrectionDatabase::new(
        grid.clone(),
        settings.slot_length,
        settings.step,
        DatabaseMetadata {
            scene_hash: scene.content_hash(),
            ephemeris_hash: table.content_hash(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            candidate_cells: cells.len(),
        },
        accounting,
        entries,
    )
}

/// Result of applying the database to one fix.
#[derive(Clone, Debug, PartialEq)]
pub struct AppliedCorrection<'a> {
    pub corrected: EnuPoint,
    pub applied: bool,
    pub entry: Option<&'a CorrectionEntry>,
}

/// Add the stored correction for the fix's cell and slot, or return the fix
/// unchanged when the database has nothing for it.
pub fn correct_position<'a>(measured: &EnuPoint, epoch: f64, db: &'a CorrectionDatabase) -> AppliedCorrection<'a> {
    let entry = slot_of_epoch(epoch, db.slot_length)
        .zip(snap_to_cell(measured, &db.grid))
        .and_then(|(slot, cell)| db.entry(slot.slot, cell));
    match entry {
        Some(e) => AppliedCorrection {
            corrected: *measured + e.correction,
            applied: true,
            entry: Some(e),
        },
        None => AppliedCorrection {
            corrected: *measured,
            applied: false,
            entry: None,
        },
    }
}

fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Canonical text encoding. Header values are written losslessly;
/// corrections are written with six decimals (micrometers).
pub fn serialize_database(db: &CorrectionDatabase) -> String {
    let mut out = String::new();
    let g = &db.grid;
    let m = &db.metadata;
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version: {FORMAT_VERSION}");
    let _ = writeln!(out, "tool_version: {}", m.tool_version);
    let _ = writeln!(out, "scene_hash: {}", m.scene_hash);
    let _ = writeln!(out, "ephemeris_hash: {}", m.ephemeris_hash);
    let _ = writeln!(out, "grid_east: {} {}", g.east[0], g.east[1]);
    let _ = writeln!(out, "grid_north: {} {}", g.north[0], g.north[1]);
    let _ = writeln!(out, "grid_resolution: {}", g.resolution);
    let _ = writeln!(out, "receiver_height: {}", g.receiver_height);
    let _ = writeln!(out, "slot_length: {}", db.slot_length);
    let _ = writeln!(out, "step: {}", db.step);
    let _ = writeln!(out, "candidate_cells: {}", m.candidate_cells);
    let _ = writeln!(out, "slots: {}", db.slots.len());
    for s in &db.slots {
        let _ = writeln!(
            out,
            "slot {} epochs={} contributing={} dropped={} skipped={}",
            s.slot, s.sampled_epochs, s.contributing, s.dropped, s.skipped
        );
    }
    let _ = writeln!(out, "entries: {}", db.len());
    let _ = writeln!(out, "{RECORD_HEADER}");
    for e in db.entries() {
        let contributors = e
            .contributors
            .iter()
            .map(|c| format!("{}:{}@{}", c.cell.col, c.cell.row, c.epoch))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.slot,
            e.cell.col,
            e.cell.row,
            fixed6(e.correction.x),
            fixed6(e.correction.y),
            fixed6(e.correction.z),
            e.support,
            contributors
        );
    }
    let checksum = io::sha256_hex(out.as_bytes());
    let _ = writeln!(out, "checksum: {checksum}");
    out
}

pub fn save_database(db: &CorrectionDatabase, path: &Path) -> Result<()> {
    io::write_atomic(path, serialize_database(db).as_bytes())
}

pub fn load_database(path: &Path) -> Result<CorrectionDatabase> {
    let text = io::read_to_string(path)?;
    parse_database(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Corruption("unexpected end of file".into()))
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line()?;
        let value = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(": "))
            .ok_or_else(|| Error::parse(format!("database line {n}"), format!("expected `{key}: ...`")))?;
        Ok((n, value))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let (n, v) = self.field(key)?;
        v.parse()
            .map_err(|e: T::Err| Error::parse(format!("database line {n} field {key}"), e))
    }

    fn pair(&mut self, key: &str) -> Result<[f64; 2]> {
        let (n, v) = self.field(key)?;
        let parts: Vec<&str> = v.split(' ').collect();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(format!("database line {n} field {key}"), e))
        };
        match parts.as_slice() {
            [a, b] => Ok([num(a)?, num(b)?]),
            _ => Err(Error::parse(format!("database line {n} field {key}"), "expected two numbers")),
        }
    }
}

fn parse_kv<T: std::str::FromStr>(part: Option<&str>, key: &str, n: usize) -> Result<T> {
    part.and_then(|p| p.strip_prefix(key))
        .and_then(|p| p.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(format!("database line {n}"), format!("bad `{key}=` field")))
}

pub fn parse_database(text: &str) -> Result<CorrectionDatabase> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, magic) = lines.next_line()?;
    if magic != MAGIC {
        return Err(Error::Corruption("not a correction database file".into()));
    }
    let (_, version) = lines.field("format_version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::VersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }

    let body_end = text
        .rfind("checksum: ")
        .ok_or_else(|| Error::Corruption("missing checksum line".into()))?;
    if body_end > 0 && !text[..body_end].ends_with('\n') {
        return Err(Error::Corruption("missing checksum line".into()));
    }
    let stored = text[body_end + "checksum: ".len()..].trim_end_matches('\n');
    if stored != io::sha256_hex(&text.as_bytes()[..body_end]) {
        return Err(Error::Corruption("checksum mismatch".into()));
    }

    let tool_version = lines.field("tool_version")?.1.to_string();
    let scene_hash = lines.field("scene_hash")?.1.to_string();
    let ephemeris_hash = lines.field("ephemeris_hash")?.1.to_string();
    let east = lines.pair("grid_east")?;
    let north = lines.pair("grid_north")?;
    let resolution: f64 = lines.parsed("grid_resolution")?;
    let receiver_height: f64 = lines.parsed("receiver_height")?;
    let slot_length: f64 = lines.parsed("slot_length")?;
    let step: f64 = lines.parsed("step")?;
    let candidate_cells: usize = lines.parsed("candidate_cells")?;
    let slot_count: usize = lines.parsed("slots")?;
    let mut slots = Vec::with_capacity(slot_count);
    for _ in 0..slot_count {
        let (n, line) = lines.next_line()?;
        let mut parts = line.split(' ');
        if parts.next() != Some("slot") {
            return Err(Error::parse(format!("database line {n}"), "expected slot accounting"));
        }
        let slot = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(format!("database line {n}"), "bad slot number"))?;
        slots.push(SlotAccounting {
            slot,
            sampled_epochs: parse_kv(parts.next(), "epochs", n)?,
            contributing: parse_kv(parts.next(), "contributing", n)?,
            dropped: parse_kv(parts.next(), "dropped", n)?,
            skipped: parse_kv(parts.next(), "skipped", n)?,
        });
    }
    let entry_count: usize = lines.parsed("entries")?;
    let (n, header) = lines.next_line()?;
    if header != RECORD_HEADER {
        return Err(Error::parse(format!("database line {n}"), "expected record header"));
    }
    let mut entries = Vec::with_capacity(entry_count);
    for _ in 0..entry_count {
        let (n, line) = lines.next_line()?;
        let ctx = || format!("database line {n}");
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(ctx(), format!("expected 8 fields, found {}", fields.len())));
        }
        let int = |s: &str| s.parse::<u32>().map_err(|e| Error::parse(ctx(), e));
        let float = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(ctx(), e));
        let contributors = if fields[7].is_empty() {
            Vec::new()
        } else {
            fields[7]
                .split(';')
                .map(|c| {
                    let (cell, epoch) = c.split_once('@').ok_or_else(|| Error::parse(ctx(), "bad contributor"))?;
                    let (col, row) = cell.split_once(':').ok_or_else(|| Error::parse(ctx(), "bad contributor"))?;
                    Ok(Contributor {
                        cell: CellIndex::new(int(col)?, int(row)?),
                        epoch: float(epoch)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        entries.push(CorrectionEntry {
            slot: int(fields[0])?,
            cell: CellIndex::new(int(fields[1])?, int(fields[2])?),
            correction: Vector3::new(float(fields[3])?, float(fields[4])?, float(fields[5])?),
            support: fields[6].parse().map_err(|e| Error::parse(ctx(), e))?,
            contributors,
        });
    }
    let (n, last) = lines.next_line()?;
    if !last.starts_with("checksum: ") {
        return Err(Error::parse(format!("database line {n}"), "trailing data before checksum"));
    }
    CorrectionDatabase::new(
        GridSpec {
            east,
            north,
            resolution,
            receiver_height,
        },
        slot_length,
        step,
        DatabaseMetadata {
            scene_hash,
            ephemeris_hash,
            tool_version,
            candidate_cells,
        },
        slots,
        entries,
    )
}
