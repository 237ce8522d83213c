//! Coordinate frames and the small amount of computational geometry the
//! simulator needs: WGS-84 geodetic/ECEF/ENU conversion, planar convex
//! polygons, mirroring across a plane and ray/polygon intersection.

use std::ops::{Add, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// WGS-84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis (m).
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Hits closer than this to the ray origin are ignored, so a ray leaving a
/// reflection point does not re-hit the surface it left.
pub const MIN_HIT_DISTANCE: f64 = 1e-9;

/// Points within this distance of a polygon edge count as inside.
const BOUNDARY_TOLERANCE: f64 = 1e-9;

const COPLANAR_TOLERANCE: f64 = 1e-6;

/// Latitude/longitude in degrees, height in meters above the ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodeticPoint {
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "lon")]
    pub longitude: f64,
    pub height: f64,
}

impl GeodeticPoint {
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Result<Self> {
        let p = GeodeticPoint {
            latitude,
            longitude,
            height,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Validation(format!(
                "latitude {} outside [-90, 90]",
                self.latitude
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Validation(format!(
                "longitude {} outside [-180, 180]",
                self.longitude
            )));
        }
        if !self.height.is_finite() {
            return Err(Error::Validation("height must be finite".into()));
        }
        Ok(())
    }
}

/// Earth-centered Earth-fixed Cartesian coordinates in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcefPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        EcefPoint { x, y, z }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        EcefPoint::new(v.x, v.y, v.z)
    }

    pub fn norm(&self) -> f64 {
        self.vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Local east/north/up coordinates in meters relative to a scene origin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnuPoint {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuPoint {
    pub const fn new(east: f64, north: f64, up: f64) -> Self {
        EnuPoint { east, north, up }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.east, self.north, self.up)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        EnuPoint::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &EnuPoint) -> f64 {
        (self.vector() - other.vector()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.east.is_finite() && self.north.is_finite() && self.up.is_finite()
    }
}

impl Add<Vector3<f64>> for EnuPoint {
    type Output = EnuPoint;

    fn add(self, rhs: Vector3<f64>) -> EnuPoint {
        EnuPoint::new(self.east + rhs.x, self.north + rhs.y, self.up + rhs.z)
    }
}

impl Sub for EnuPoint {
    type Output = Vector3<f64>;

    fn sub(self, rhs: EnuPoint) -> Vector3<f64> {
        Vector3::new(self.east - rhs.east, self.north - rhs.north, self.up - rhs.up)
    }
}

/// Closed-form WGS-84 geodetic to ECEF conversion.
pub fn geodetic_to_ecef(p: &GeodeticPoint) -> EcefPoint {
    let (sin_lat, cos_lat) = p.latitude.to_radians().sin_cos();
    let (sin_lon, cos_lon) = p.longitude.to_radians().sin_cos();
    // prime vertical radius of curvature
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    EcefPoint::new(
        (n + p.height) * cos_lat * cos_lon,
        (n + p.height) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + p.height) * sin_lat,
    )
}

/// Iterative ECEF to geodetic conversion, converged to well below a
/// micrometer for terrestrial and orbital points.
pub fn ecef_to_geodetic(p: &EcefPoint) -> GeodeticPoint {
    let rho = p.x.hypot(p.y);
    let longitude = p.y.atan2(p.x).to_degrees();
    if rho < 1e-9 {
        let latitude = if p.z >= 0.0 { 90.0 } else { -90.0 };
        return GeodeticPoint {
            latitude,
            longitude: 0.0,
            height: p.z.abs() - WGS84_B,
        };
    }
    let mut lat = (p.z / (rho * (1.0 - WGS84_E2))).atan();
    let mut height = 0.0;
    for _ in 0..10 {
        let sin_lat = lat.sin();
        let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        height = rho / lat.cos() - n;
        let next = (p.z / (rho * (1.0 - WGS84_E2 * n / (n + height)))).atan();
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    GeodeticPoint {
        latitude: lat.to_degrees(),
        longitude,
        height,
    }
}

/// A local tangent frame anchored at a geodetic origin. Precomputes the
/// ECEF origin and the ECEF→ENU rotation so repeated conversions are cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFrame {
    origin: GeodeticPoint,
    origin_ecef: Vector3<f64>,
    // rows: east, north, up unit vectors in ECEF
    rotation: Matrix3<f64>,
}

impl LocalFrame {
    pub fn new(origin: GeodeticPoint) -> Self {
        let (sin_lat, cos_lat) = origin.latitude.to_radians().sin_cos();
        let (sin_lon, cos_lon) = origin.longitude.to_radians().sin_cos();
        let rotation = Matrix3::new(
            -sin_lon,
            cos_lon,
            0.0,
            -sin_lat * cos_lon,
            -sin_lat * sin_lon,
            cos_lat,
            cos_lat * cos_lon,
            cos_lat * sin_lon,
            sin_lat,
        );
        LocalFrame {
            origin,
            origin_ecef: geodetic_to_ecef(&origin).vector(),
            rotation,
        }
    }

    pub fn origin(&self) -> &GeodeticPoint {
        &self.origin
    }

    pub fn to_enu(&self, p: &EcefPoint) -> EnuPoint {
        EnuPoint::from_vector(&(self.rotation * (p.vector() - self.origin_ecef)))
    }

    pub fn to_ecef(&self, p: &EnuPoint) -> EcefPoint {
        EcefPoint::from_vector(&(self.rotation.transpose() * p.vector() + self.origin_ecef))
    }

    /// Ellipsoid normal at the origin, in ECEF.
    pub fn up_ecef(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }
}

/// Rotate `p − ecef(origin)` into the local tangent frame at `origin`.
pub fn ecef_to_enu(p: &EcefPoint, origin: &GeodeticPoint) -> EnuPoint {
    LocalFrame::new(*origin).to_enu(p)
}

/// A planar convex polygon with an outward unit normal: one building wall
/// or roof.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePolygon {
    vertices: Vec<EnuPoint>,
    normal: Vector3<f64>,
    id: u32,
    // plane offset: n · x = offset for points on the plane
    offset: f64,
    bbox_min: Vector3<f64>,
    bbox_max: Vector3<f64>,
}

impl SurfacePolygon {
    /// Build a polygon whose normal follows the vertex winding (right-hand
    /// rule). Fails on fewer than three vertices, degenerate or non-planar
    /// input, or a non-convex outline.
    pub fn from_vertices(vertices: Vec<EnuPoint>, id: u32) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Validation(format!(
                "surface {id}: polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        // Newell's method
        let mut normal = Vector3::<f64>::zeros();
        for (i, a) in vertices.iter().enumerate() {
            let b = vertices[(i + 1) % vertices.len()];
            normal.x += (a.north - b.north) * (a.up + b.up);
            normal.y += (a.up - b.up) * (a.east + b.east);
            normal.z += (a.east - b.east) * (a.north + b.north);
        }
        let len = normal.norm();
        if !(len > 1e-12) {
            return Err(Error::Validation(format!(
                "surface {id}: degenerate polygon (zero area)"
            )));
        }
        Self::new(vertices, normal / len, id)
    }

    /// Build a polygon with an explicit unit normal, which must agree with
    /// the vertex winding.
    pub fn new(vertices: Vec<EnuPoint>, normal: Vector3<f64>, id: u32) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Validation(format!(
                "surface {id}: polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "surface {id}: non-finite vertex"
            )));
        }
        if (normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "surface {id}: normal is not unit length"
            )));
        }
        let offset = normal.dot(&vertices[0].vector());
        for v in &vertices {
            if (normal.dot(&v.vector()) - offset).abs() > COPLANAR_TOLERANCE {
                return Err(Error::Validation(format!(
                    "surface {id}: vertices are not coplanar"
                )));
            }
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i].vector();
            let b = vertices[(i + 1) % n].vector();
            let c = vertices[(i + 2) % n].vector();
            if (b - a).cross(&(c - b)).dot(&normal) < -1e-12 {
                return Err(Error::Validation(format!(
                    "surface {id}: polygon is not convex or winding disagrees with normal"
                )));
            }
        }
        let mut bbox_min = Vector3::repeat(f64::INFINITY);
        let mut bbox_max = Vector3::repeat(f64::NEG_INFINITY);
        for v in &vertices {
            bbox_min = bbox_min.inf(&v.vector());
            bbox_max = bbox_max.sup(&v.vector());
        }
        Ok(SurfacePolygon {
            vertices,
            normal,
            id,
            offset,
            bbox_min,
            bbox_max,
        })
    }

    pub fn vertices(&self) -> &[EnuPoint] {
        &self.vertices
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    /// Signed distance from `p` to the polygon's plane; positive on the
    /// normal side.
    pub fn signed_distance(&self, p: &EnuPoint) -> f64 {
        self.normal.dot(&p.vector()) - self.offset
    }

    /// Whether `p`, assumed to lie on the plane, is inside the polygon or on
    /// its boundary.
    pub fn contains_coplanar(&self, p: &Vector3<f64>) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i].vector();
            let b = self.vertices[(i + 1) % n].vector();
            let edge = b - a;
            let side = edge.cross(&(p - a)).dot(&self.normal) / edge.norm();
            if side < -BOUNDARY_TOLERANCE {
                return false;
            }
        }
        true
    }

    /// Quick rejection: whether the segment between two points can touch
    /// the polygon's bounding box at all.
    pub(crate) fn segment_may_hit(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        const PAD: f64 = 1e-6;
        let lo = a.inf(b);
        let hi = a.sup(b);
        (0..3).all(|k| hi[k] >= self.bbox_min[k] - PAD && lo[k] <= self.bbox_max[k] + PAD)
    }
}

/// Reflect `p` across the plane of `surface`.
pub fn mirror_across_plane(p: &EnuPoint, surface: &SurfacePolygon) -> EnuPoint {
    let n = surface.normal();
    let q = surface.vertices()[0];
    let dist = (*p - q).dot(n);
    *p + n * (-2.0 * dist)
}

/// Intersection of a ray with a polygon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub point: EnuPoint,
    pub distance: f64,
}

/// Intersect a ray with a convex polygon. Returns `None` when the ray is
/// parallel to the plane, the plane lies behind (or within
/// [`MIN_HIT_DISTANCE`] of) the origin, or the crossing falls outside the
/// polygon. Boundary points count as inside.
pub fn ray_intersect_polygon(
    origin: &EnuPoint,
    direction: &Vector3<f64>,
    surface: &SurfacePolygon,
) -> Option<RayHit> {
    let denom = surface.normal().dot(direction);
    if denom.abs() < 1e-12 {
        return None;
    }
    let distance = -surface.signed_distance(origin) / denom;
    if !(distance > MIN_HIT_DISTANCE) {
        return None;
    }
    let hit = origin.vector() + direction * distance;
    if !surface.contains_coplanar(&hit) {
        return None;
    }
    Some(RayHit {
        point: EnuPoint::from_vector(&hit),
        distance,
    })
}
