//! The digital twin: extruded buildings over a terrain model in a local ENU
//! frame, and the lattice of virtual receivers laid over it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{EnuPoint, GeodeticPoint, LocalFrame, SurfacePolygon};
use crate::io;

pub const DEFAULT_RESOLUTION: f64 = 3.0;
pub const DEFAULT_RECEIVER_HEIGHT: f64 = 1.0;

/// A building as a vertical extrusion of a counter-clockwise footprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Building {
    pub id: u32,
    pub base_alt: f64,
    pub height: f64,
    /// `[east, north]` vertices, counter-clockwise, not repeated at the end.
    pub footprint: Vec<[f64; 2]>,
}

impl Building {
    pub fn validate(&self) -> Result<()> {
        let id = self.id;
        if self.footprint.len() < 3 {
            return Err(Error::Validation(format!(
                "building {id}: footprint needs at least 3 vertices, got {}",
                self.footprint.len()
            )));
        }
        if !(self.height > 0.0) || !self.height.is_finite() {
            return Err(Error::Validation(format!(
                "building {id}: height must be positive, got {}",
                self.height
            )));
        }
        if !self.base_alt.is_finite() || self.footprint.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Validation(format!(
                "building {id}: non-finite coordinate"
            )));
        }
        let area = signed_area(&self.footprint);
        if area.abs() < 1e-9 {
            return Err(Error::Validation(format!(
                "building {id}: footprint has zero area"
            )));
        }
        if area < 0.0 {
            return Err(Error::Validation(format!(
                "building {id}: footprint must be counter-clockwise"
            )));
        }
        if !is_simple(&self.footprint) {
            return Err(Error::Validation(format!(
                "building {id}: footprint is self-intersecting"
            )));
        }
        Ok(())
    }

    pub fn top(&self) -> f64 {
        self.base_alt + self.height
    }

    /// Whether a horizontal position lies strictly inside the footprint.
    pub fn footprint_contains(&self, east: f64, north: f64) -> bool {
        point_strictly_in_polygon(&self.footprint, east, north)
    }
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let on_segment = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 1..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Even-odd test that treats boundary points as outside.
fn point_strictly_in_polygon(poly: &[[f64; 2]], e: f64, n: f64) -> bool {
    let len = poly.len();
    for i in 0..len {
        let a = poly[i];
        let b = poly[(i + 1) % len];
        let cross = orient(a, b, [e, n]);
        let within = e >= a[0].min(b[0]) - 1e-12
            && e <= a[0].max(b[0]) + 1e-12
            && n >= a[1].min(b[1]) - 1e-12
            && n <= a[1].max(b[1]) + 1e-12;
        let scale = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if within && cross.abs() <= 1e-12 * scale.max(1.0) {
            return false;
        }
    }
    let mut inside = false;
    let mut j = len - 1;
    for i in 0..len {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > n) != (yj > n) && e < (xj - xi) * (n - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Split a simple counter-clockwise polygon into convex pieces. Convex
/// input is returned whole; otherwise ear clipping yields triangles.
fn convex_pieces(poly: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
    let n = poly.len();
    let convex = (0..n).all(|i| orient(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) >= 0.0);
    if convex {
        return vec![poly.to_vec()];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&i| {
            let a = poly[idx[(i + m - 1) % m]];
            let b = poly[idx[i]];
            let c = poly[idx[(i + 1) % m]];
            if orient(a, b, c) <= 0.0 {
                return false;
            }
            idx.iter().all(|&k| {
                let p = poly[k];
                p == a || p == b || p == c || !(orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0)
            })
        });
        // a simple polygon always has an ear; bail out on numerical trouble
        let Some(i) = ear else { break };
        out.push(vec![poly[idx[(i + m - 1) % m]], poly[idx[i]], poly[idx[(i + 1) % m]]]);
        idx.remove(i);
    }
    if idx.len() == 3 {
        out.push(idx.iter().map(|&k| poly[k]).collect());
    }
    out
}

/// Raster altitude grid: `altitudes[row * cols + col]` is the node at
/// `(origin_east + col * cell_size, origin_north + row * cell_size)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainRaster {
    pub origin_east: f64,
    pub origin_north: f64,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    pub altitudes: Vec<f64>,
}

/// Ground altitude source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Terrain {
    Constant(f64),
    Raster(TerrainRaster),
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain::Constant(0.0)
    }
}

impl Terrain {
    pub fn validate(&self) -> Result<()> {
        match self {
            Terrain::Constant(h) if !h.is_finite() => {
                Err(Error::Validation("terrain altitude must be finite".into()))
            }
            Terrain::Constant(_) => Ok(()),
            Terrain::Raster(r) => {
                if !(r.cell_size > 0.0) {
                    return Err(Error::Validation("terrain raster cell size must be positive".into()));
                }
                if r.rows == 0 || r.cols == 0 {
                    return Err(Error::Validation("terrain raster must have at least one node".into()));
                }
                if r.altitudes.len() != r.rows * r.cols {
                    return Err(Error::Validation(format!(
                        "terrain raster has {} altitudes, expected rows*cols = {}",
                        r.altitudes.len(),
                        r.rows * r.cols
                    )));
                }
                if r.altitudes.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Validation("terrain raster altitudes must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

/// Ground altitude at a horizontal position. Raster terrain is bilinearly
/// interpolated and clamped to the raster edge outside its coverage.
pub fn terrain_altitude(terrain: &Terrain, east: f64, north: f64) -> f64 {
    match terrain {
        Terrain::Constant(h) => *h,
        Terrain::Raster(r) => {
            let fc = ((east - r.origin_east) / r.cell_size).clamp(0.0, (r.cols - 1) as f64);
            let fr = ((north - r.origin_north) / r.cell_size).clamp(0.0, (r.rows - 1) as f64);
            let c0 = (fc.floor() as usize).min(r.cols.saturating_sub(2));
            let r0 = (fr.floor() as usize).min(r.rows.saturating_sub(2));
            let c1 = (c0 + 1).min(r.cols - 1);
            let r1 = (r0 + 1).min(r.rows - 1);
            let tc = fc - c0 as f64;
            let tr = fr - r0 as f64;
            let at = |row: usize, col: usize| r.altitudes[row * r.cols + col];
            let south = at(r0, c0) * (1.0 - tc) + at(r0, c1) * tc;
            let north_edge = at(r1, c0) * (1.0 - tc) + at(r1, c1) * tc;
            south * (1.0 - tr) + north_edge * tr
        }
    }
}

/// Extent and spacing of the virtual receiver lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub east: [f64; 2],
    pub north: [f64; 2],
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default = "default_receiver_height")]
    pub receiver_height: f64,
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

fn default_receiver_height() -> f64 {
    DEFAULT_RECEIVER_HEIGHT
}

impl GridSpec {
    pub fn new(east: [f64; 2], north: [f64; 2]) -> Self {
        GridSpec {
            east,
            north,
            resolution: DEFAULT_RESOLUTION,
            receiver_height: DEFAULT_RECEIVER_HEIGHT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.east.iter().chain(&self.north).all(|v| v.is_finite());
        if !finite || !(self.east[1] > self.east[0]) || !(self.north[1] > self.north[0]) {
            return Err(Error::Validation(format!(
                "grid bounds are degenerate: east {:?}, north {:?}",
                self.east, self.north
            )));
        }
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::Validation(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        if !self.receiver_height.is_finite() {
            return Err(Error::Validation("receiver height must be finite".into()));
        }
        Ok(())
    }

    pub fn cols(&self) -> u32 {
        ((self.east[1] - self.east[0]) / self.resolution).ceil() as u32
    }

    pub fn rows(&self) -> u32 {
        ((self.north[1] - self.north[0]) / self.resolution).ceil() as u32
    }

    /// Horizontal center of a cell (which may lie outside the nominal bounds
    /// only if the bounds are not a whole number of cells).
    pub fn cell_center_2d(&self, index: CellIndex) -> (f64, f64) {
        (
            self.east[0] + (index.col as f64 + 0.5) * self.resolution,
            self.north[0] + (index.row as f64 + 0.5) * self.resolution,
        )
    }

    /// Diagonal of one cell; twice the worst-case snapping error.
    pub fn cell_diagonal(&self) -> f64 {
        self.resolution * std::f64::consts::SQRT_2
    }
}

/// Column/row address of a grid cell. Ordered column-major, matching the
/// database's canonical `(slot, col, row)` key order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub col: u32,
    pub row: u32,
}

impl CellIndex {
    pub const fn new(col: u32, row: u32) -> Self {
        CellIndex { col, row }
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.col, self.row)
    }
}

/// A candidate receiver location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub index: CellIndex,
    pub center: EnuPoint,
}

/// On-disk scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub origin: GeodeticPoint,
    #[serde(default)]
    pub terrain: Terrain,
    #[serde(default)]
    pub buildings: Vec<Building>,
    pub grid: GridSpec,
}

/// A validated scene with its surfaces generated.
#[derive(Clone, Debug)]
pub struct Scene {
    file: SceneFile,
    frame: LocalFrame,
    surfaces: Vec<SurfacePolygon>,
    surface_building: Vec<u32>,
    wall_count: usize,
    max_top: f64,
}

impl Scene {
    pub fn new(file: SceneFile) -> Result<Self> {
        file.origin.validate()?;
        file.terrain.validate()?;
        file.grid.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for b in &file.buildings {
            b.validate()?;
            if !ids.insert(b.id) {
                return Err(Error::Validation(format!("duplicate building id {}", b.id)));
            }
        }

        let mut walls = Vec::new();
        let mut roofs = Vec::new();
        for b in &file.buildings {
            let n = b.footprint.len();
            for i in 0..n {
                let a = b.footprint[i];
                let c = b.footprint[(i + 1) % n];
                walls.push((
                    b.id,
                    vec![
                        EnuPoint::new(a[0], a[1], b.base_alt),
                        EnuPoint::new(c[0], c[1], b.base_alt),
                        EnuPoint::new(c[0], c[1], b.top()),
                        EnuPoint::new(a[0], a[1], b.top()),
                    ],
                ));
            }
            for piece in convex_pieces(&b.footprint) {
                roofs.push((
                    b.id,
                    piece.iter().map(|v| EnuPoint::new(v[0], v[1], b.top())).collect::<Vec<_>>(),
                ));
            }
        }
        let wall_count = walls.len();
        let mut surfaces = Vec::with_capacity(walls.len() + roofs.len());
        let mut surface_building = Vec::with_capacity(walls.len() + roofs.len());
        for (i, (building, vertices)) in walls.into_iter().chain(roofs).enumerate() {
            surfaces.push(SurfacePolygon::from_vertices(vertices, i as u32)?);
            surface_building.push(building);
        }
        let max_top = file
            .buildings
            .iter()
            .map(Building::top)
            .fold(f64::NEG_INFINITY, f64::max);

        Ok(Scene {
            frame: LocalFrame::new(file.origin),
            file,
            surfaces,
            surface_building,
            wall_count,
            max_top,
        })
    }

    pub fn file(&self) -> &SceneFile {
        &self.file
    }

    pub fn origin(&self) -> &GeodeticPoint {
        &self.file.origin
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    pub fn buildings(&self) -> &[Building] {
        &self.file.buildings
    }

    pub fn terrain(&self) -> &Terrain {
        &self.file.terrain
    }

    pub fn grid(&self) -> &GridSpec {
        &self.file.grid
    }

    /// Every blocking/reflecting surface: walls first, then roofs. A
    /// surface's id is its position in this list.
    pub fn surfaces(&self) -> &[SurfacePolygon] {
        &self.surfaces
    }

    pub fn walls(&self) -> &[SurfacePolygon] {
        &self.surfaces[..self.wall_count]
    }

    pub fn roofs(&self) -> &[SurfacePolygon] {
        &self.surfaces[self.wall_count..]
    }

    pub fn surface(&self, id: u32) -> Option<&SurfacePolygon> {
        self.surfaces.get(id as usize)
    }

    pub fn building_of_surface(&self, id: u32) -> Option<u32> {
        self.surface_building.get(id as usize).copied()
    }

    /// Highest roof altitude, or `-inf` for an empty scene.
    pub fn max_building_top(&self) -> f64 {
        self.max_top
    }

    pub fn inside_building(&self, east: f64, north: f64) -> bool {
        self.file.buildings.iter().any(|b| b.footprint_contains(east, north))
    }

    /// SHA-256 over the canonical JSON encoding, independent of the source
    /// file's formatting.
    pub fn content_hash(&self) -> String {
        io::sha256_hex(self.to_json().as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("scene serialization is infallible")
    }
}

pub fn parse_scene(text: &str, source: &str) -> Result<Scene> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("{source} line {} column {}", e.line(), e.column()),
            e,
        )
    })?;
    Scene::new(file)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = io::read_to_string(path)?;
    parse_scene(&text, &path.display().to_string())
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    let mut text = scene.to_json();
    text.push('\n');
    io::write_atomic(path, text.as_bytes())
}

/// Lay the candidate lattice over the scene. Cells tile the bounds (rounded
/// up to whole cells) in half-open squares; cells whose center is strictly
/// inside a building are not candidates.
pub fn build_grid(scene: &Scene, spec: &GridSpec) -> Vec<GridCell> {
    let mut cells = Vec::with_capacity((spec.cols() * spec.rows()) as usize);
    for col in 0..spec.cols() {
        for row in 0..spec.rows() {
            let index = CellIndex::new(col, row);
            let (e, n) = spec.cell_center_2d(index);
            if scene.inside_building(e, n) {
                continue;
            }
            let up = terrain_altitude(scene.terrain(), e, n) + spec.receiver_height;
            cells.push(GridCell {
                index,
                center: EnuPoint::new(e, n, up),
            });
        }
    }
    cells
}

/// The cell whose horizontal square contains `p`; `None` outside the grid.
/// A point on a shared edge belongs to the cell whose lower edge it lies on
/// (floor convention, half-open cells).
pub fn snap_to_cell(p: &EnuPoint, spec: &GridSpec) -> Option<CellIndex> {
    let fc = ((p.east - spec.east[0]) / spec.resolution).floor();
    let fr = ((p.north - spec.north[0]) / spec.resolution).floor();
    if !(fc >= 0.0 && fr >= 0.0) || fc >= spec.cols() as f64 || fr >= spec.rows() as f64 {
        return None;
    }
    Some(CellIndex::new(fc as u32, fr as u32))
}
