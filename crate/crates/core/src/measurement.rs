//! Simulated pseudoranges: geometric range, plus the reflection delay for
//! NLOS receptions, plus an optional noise draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ephemeris::SatelliteEpoch;
use crate::error::{Error, Result};
use crate::geo::{EcefPoint, EnuPoint};
use crate::raytrace::{simulate_reception, PathKind, ReceptionPath};
use crate::scene::{CellIndex, GridCell, Scene};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    None,
    Gaussian,
}

/// Zero-mean noise added to every pseudorange.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default)]
    pub mode: NoiseMode,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Where a measurement was taken, for keying the noise stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    Cell(CellIndex),
    /// A track receiver, by record number.
    Track(u32),
}

/// Identifies one noise draw. Draws depend only on the key, never on the
/// order in which measurements are simulated.
#[derive(Clone, Copy, Debug)]
pub struct NoiseKey<'a> {
    pub site: Site,
    pub epoch: f64,
    pub sat_id: &'a str,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseModel {
            mode: NoiseMode::Gaussian,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Validation(format!(
                "noise sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn draw(&self, key: &NoiseKey<'_>) -> f64 {
        match self.mode {
            NoiseMode::None => 0.0,
            NoiseMode::Gaussian if self.sigma == 0.0 => 0.0,
            NoiseMode::Gaussian => {
                let mut h = Sha256::new();
                h.update(self.seed.to_le_bytes());
                match key.site {
                    Site::Cell(c) => {
                        h.update([0u8]);
                        h.update(c.col.to_le_bytes());
                        h.update(c.row.to_le_bytes());
                    }
                    Site::Track(i) => {
                        h.update([1u8]);
                        h.update(i.to_le_bytes());
                    }
                }
                h.update(key.epoch.to_bits().to_le_bytes());
                h.update(key.sat_id.as_bytes());
                let seed: [u8; 32] = h.finalize().into();
                let mut rng = ChaCha8Rng::from_seed(seed);
                Normal::new(0.0, self.sigma)
                    .expect("sigma validated as finite and non-negative")
                    .sample(&mut rng)
            }
        }
    }
}

/// One simulated observation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedMeasurement {
    pub sat_id: String,
    pub sat_position: EcefPoint,
    /// Satellite position in the scene's ENU frame.
    pub sat_enu: EnuPoint,
    pub pseudorange: f64,
    pub path: ReceptionPath,
}

/// `range + extra_delay + noise` for one reception path.
pub fn simulate_pseudorange(path: &ReceptionPath, noise: &NoiseModel, key: &NoiseKey<'_>) -> f64 {
    path.range + path.extra_delay + noise.draw(key)
}

/// Measurements at an arbitrary receiver position, one per received
/// satellite, sorted by satellite id.
pub fn simulate_at(
    receiver: &EnuPoint,
    site: Site,
    sats: &[SatelliteEpoch],
    scene: &Scene,
    noise: &NoiseModel,
) -> Vec<SimulatedMeasurement> {
    let frame = scene.frame();
    let mut out: Vec<SimulatedMeasurement> = sats
        .iter()
        .filter_map(|sat| {
            let sat_enu = frame.to_enu(&sat.position);
            let path = simulate_reception(receiver, &sat_enu, scene)?;
            let key = NoiseKey {
                site,
                epoch: sat.epoch,
                sat_id: &sat.sat_id,
            };
            Some(SimulatedMeasurement {
                sat_id: sat.sat_id.clone(),
                sat_position: sat.position,
                sat_enu,
                pseudorange: simulate_pseudorange(&path, noise, &key),
                path,
            })
        })
        .collect();
    out.sort_by(|a, b| a.sat_id.cmp(&b.sat_id));
    out
}

/// Measurements of the virtual receiver at a grid cell center.
pub fn simulate_cell_epoch(
    cell: &GridCell,
    sats: &[SatelliteEpoch],
    scene: &Scene,
    noise: &NoiseModel,
) -> Vec<SimulatedMeasurement> {
    simulate_at(&cell.center, Site::Cell(cell.index), sats, scene, noise)
}

pub const MEASUREMENT_LOG_HEADER: &str = "epoch_s,cell_col,cell_row,sat_id,rho_m,kind,d_m";

/// Accumulates the optional measurement log. Receivers outside the grid get
/// empty cell columns.
#[derive(Debug, Default)]
pub struct MeasurementLog {
    text: String,
}

impl MeasurementLog {
    pub fn new() -> Self {
        MeasurementLog {
            text: format!("{MEASUREMENT_LOG_HEADER}\n"),
        }
    }

    pub fn push(&mut self, epoch: f64, cell: Option<CellIndex>, measurements: &[SimulatedMeasurement]) {
        let (col, row) = cell.map_or((String::new(), String::new()), |c| (c.col.to_string(), c.row.to_string()));
        for m in measurements {
            self.text.push_str(&format!(
                "{epoch},{col},{row},{},{:.6},{},{:.6}\n",
                m.sat_id,
                m.pseudorange,
                m.path.kind.as_str(),
                m.path.extra_delay
            ));
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// One row of a measurement log.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedMeasurement {
    pub epoch: f64,
    pub cell: Option<CellIndex>,
    pub sat_id: String,
    pub pseudorange: f64,
    pub kind: PathKind,
    pub extra_delay: f64,
}

pub fn parse_measurement_log(text: &str, source: &str) -> Result<Vec<LoggedMeasurement>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == MEASUREMENT_LOG_HEADER => {}
        _ => return Err(Error::parse(format!("{source} line 1"), "missing measurement log header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("{source} line {}", i + 1);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(ctx(), format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(ctx(), e));
        let cell = match (f[1], f[2]) {
            ("", "") => None,
            (c, r) => Some(CellIndex::new(
                c.parse().map_err(|e| Error::parse(ctx(), e))?,
                r.parse().map_err(|e| Error::parse(ctx(), e))?,
            )),
        };
        let kind = match f[5] {
            "LOS" => PathKind::Los,
            "NLOS" => PathKind::Nlos,
            other => return Err(Error::parse(ctx(), format!("unknown path kind `{other}`"))),
        };
        out.push(LoggedMeasurement {
            epoch: num(f[0])?,
            cell,
            sat_id: f[3].to_string(),
            pseudorange: num(f[4])?,
            kind,
            extra_delay: num(f[6])?,
        });
    }
    Ok(out)
}
