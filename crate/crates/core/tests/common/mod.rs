//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's geometry or solver code; scenes are described as plain
//! boxes and handed to the library only for comparison.

#![allow(dead_code)]

use dtgnss::geo::{EnuPoint, GeodeticPoint};
use dtgnss::scene::{Building, GridSpec, Scene, SceneFile, Terrain};

pub type V3 = [f64; 3];

pub fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
pub fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
pub fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
pub fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
pub fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
pub fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}
pub fn v3(p: &EnuPoint) -> V3 {
    [p.east, p.north, p.up]
}

/// Minimize a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_min(mut lo: f64, mut hi: f64, iterations: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let r = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iterations {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

// ---------------------------------------------------------------------------
// Nonlinear least squares

/// Solve `min Σ w_j (ρ_j − |s_j − x| − c)²` by Gauss-Newton with a central
/// difference Jacobian and Gaussian elimination. Returns `[e, n, u, c]`.
pub fn gn_oracle(sats: &[V3], rho: &[f64], weights: Option<&[f64]>, init: [f64; 4]) -> [f64; 4] {
    let model = |x: &[f64; 4], s: V3| norm(sub(s, [x[0], x[1], x[2]])) + x[3];
    let mut x = init;
    for _ in 0..100 {
        let mut ata = [[0.0; 4]; 4];
        let mut atb = [0.0; 4];
        for (j, s) in sats.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[j]);
            let r = rho[j] - model(&x, *s);
            let mut row = [0.0; 4];
            for (k, slot) in row.iter_mut().enumerate() {
                // ranges are ~2e7 m, so a short step would lose the
                // derivative to rounding; curvature over 10 m is ~1e-12
                let h = 10.0;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                *slot = (model(&xp, *s) - model(&xm, *s)) / (2.0 * h);
            }
            for a in 0..4 {
                atb[a] += w * row[a] * r;
                for b in 0..4 {
                    ata[a][b] += w * row[a] * row[b];
                }
            }
        }
        let dx = solve4(ata, atb);
        for k in 0..4 {
            x[k] += dx[k];
        }
        if dx.iter().map(|d| d * d).sum::<f64>().sqrt() < 1e-9 {
            break;
        }
    }
    x
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> [f64; 4] {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[r].iter_mut().zip(pivot_row).skip(col) {
                *x -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

// ---------------------------------------------------------------------------
// Box scenes

/// A rotated rectangular building standing on the ground.
#[derive(Clone, Copy, Debug)]
pub struct BoxBuilding {
    pub center: [f64; 2],
    pub half: [f64; 2],
    pub angle: f64,
    pub height: f64,
}

impl BoxBuilding {
    fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.angle.sin_cos();
        ([c, s], [-s, c])
    }

    /// Counter-clockwise corners.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (u, v) = self.axes();
        let [cx, cy] = self.center;
        let [hu, hv] = self.half;
        let corner = |a: f64, b: f64| [cx + u[0] * a * hu + v[0] * b * hv, cy + u[1] * a * hu + v[1] * b * hv];
        [corner(-1.0, -1.0), corner(1.0, -1.0), corner(1.0, 1.0), corner(-1.0, 1.0)]
    }

    /// Largest signed distance to the six bounding planes; negative inside.
    pub fn depth(&self, p: V3) -> f64 {
        let (u, v) = self.axes();
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let a = (d[0] * u[0] + d[1] * u[1]).abs() - self.half[0];
        let b = (d[0] * v[0] + d[1] * v[1]).abs() - self.half[1];
        a.max(b).max(p[2] - self.height).max(-p[2])
    }

    pub fn contains_2d(&self, e: f64, n: f64) -> bool {
        self.depth([e, n, self.height / 2.0]) < 0.0
    }

    /// The four walls and the roof as `(point on plane, outward normal,
    /// corners)`.
    pub fn faces(&self) -> Vec<Face> {
        let c = self.corners();
        let h = self.height;
        let mut faces = Vec::new();
        for i in 0..4 {
            let a = c[i];
            let b = c[(i + 1) % 4];
            let along = [b[0] - a[0], b[1] - a[1], 0.0];
            let normal = scale([along[1], -along[0], 0.0], 1.0 / norm(along));
            faces.push(Face {
                corners: vec![[a[0], a[1], 0.0], [b[0], b[1], 0.0], [b[0], b[1], h], [a[0], a[1], h]],
                normal,
            });
        }
        faces.push(Face {
            corners: c.iter().map(|p| [p[0], p[1], h]).collect(),
            normal: [0.0, 0.0, 1.0],
        });
        faces
    }
}

/// A planar convex face with counter-clockwise corners seen from outside.
#[derive(Clone, Debug)]
pub struct Face {
    pub corners: Vec<V3>,
    pub normal: V3,
}

impl Face {
    /// Signed in-plane distance from `p` to the face boundary, positive
    /// inside.
    pub fn inside_distance(&self, p: V3) -> f64 {
        let n = self.corners.len();
        (0..n)
            .map(|i| {
                let a = self.corners[i];
                let b = self.corners[(i + 1) % n];
                let edge = sub(b, a);
                let inward = cross(self.normal, edge);
                dot(sub(p, a), inward) / norm(inward)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Smallest box depth along the segment `a → b`, restricted to the part
/// below `ceiling`. Dense sampling brackets the minimum of the convex depth
/// profile; golden-section search refines it.
pub fn segment_min_depth(bx: &BoxBuilding, a: V3, b: V3, ceiling: f64) -> f64 {
    let mut end = 1.0;
    if b[2] > ceiling && a[2] < ceiling {
        end = (ceiling - a[2]) / (b[2] - a[2]);
    } else if a[2] >= ceiling && b[2] >= ceiling {
        return f64::INFINITY;
    }
    let at = |t: f64| bx.depth(add(a, scale(sub(b, a), t)));
    let samples = 400;
    let (mut best_t, mut best) = (0.0, at(0.0));
    for k in 1..=samples {
        let t = end * k as f64 / samples as f64;
        let v = at(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let h = end / samples as f64;
    let (_, refined) = golden_min((best_t - h).max(0.0), (best_t + h).min(end), 120, at);
    best.min(refined)
}

pub const BOUNDARY_TOL: f64 = 1e-6;

/// Outcome of a segment test against all boxes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clearance {
    pub blocked: bool,
    /// Some box comes within the boundary tolerance of the segment.
    pub ambiguous: bool,
}

pub fn segment_clearance(boxes: &[BoxBuilding], a: V3, b: V3, skip: Option<usize>) -> Clearance {
    let mut out = Clearance {
        blocked: false,
        ambiguous: false,
    };
    for (i, bx) in boxes.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let d = segment_min_depth(bx, a, b, bx.height + 1.0);
        if d < -BOUNDARY_TOL {
            out.blocked = true;
        } else if d <= BOUNDARY_TOL {
            out.ambiguous = true;
        }
    }
    out
}

/// `|sat − p| + |p − rx| − |sat − rx|` without cancelling the large ranges.
pub fn path_excess(sat: V3, p: V3, rx: V3) -> f64 {
    let a = norm(sub(sat, p));
    let b = norm(sub(sat, rx));
    // |sat−p|² − |sat−rx|² = (rx − p)·(2 sat − p − rx)
    dot(sub(rx, p), sub(sub(scale(sat, 2.0), p), rx)) / (a + b) + norm(sub(p, rx))
}

/// Independent mirror-formula delay for the plane through `q` with unit
/// normal `n`.
pub fn mirror_delay(sat: V3, rx: V3, q: V3, n: V3) -> f64 {
    let m = sub(rx, scale(n, 2.0 * dot(sub(rx, q), n)));
    let a = norm(sub(sat, m));
    let b = norm(sub(sat, rx));
    dot(sub(rx, m), sub(sub(scale(sat, 2.0), m), rx)) / (a + b)
}

/// Fermat-principle evaluation of one face.
#[derive(Clone, Debug)]
pub struct FaceReflection {
    pub box_index: usize,
    pub point: V3,
    pub delay: f64,
    pub valid: bool,
    pub ambiguous: bool,
}

/// Shortest `sat → face plane → rx` path found by nested golden-section
/// search over plane coordinates, then checked against the face extent and
/// the other boxes.
pub fn reflect_oracle(boxes: &[BoxBuilding], box_index: usize, face: &Face, rx: V3, sat: V3) -> Option<FaceReflection> {
    let q = face.corners[0];
    let n = face.normal;
    if dot(sub(rx, q), n) <= 0.0 || dot(sub(sat, q), n) <= 0.0 {
        return None;
    }
    let e1 = {
        let t = sub(face.corners[1], face.corners[0]);
        scale(t, 1.0 / norm(t))
    };
    let e2 = cross(n, e1);
    let coords: Vec<[f64; 2]> = face
        .corners
        .iter()
        .map(|c| [dot(sub(*c, q), e1), dot(sub(*c, q), e2)])
        .collect();
    let margin = 400.0;
    let lo_u = coords.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min) - margin;
    let hi_u = coords.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max) + margin;
    let lo_v = coords.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min) - margin;
    let hi_v = coords.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max) + margin;
    let point = |u: f64, v: f64| add(q, add(scale(e1, u), scale(e2, v)));
    let inner = |u: f64| golden_min(lo_v, hi_v, 90, |v| path_excess(sat, point(u, v), rx));
    let (u, _) = golden_min(lo_u, hi_u, 90, |u| inner(u).1);
    let (v, _) = inner(u);
    let near_edge = |x: f64, lo: f64, hi: f64| (x - lo).abs() < 1.0 || (hi - x).abs() < 1.0;
    if near_edge(u, lo_u, hi_u) || near_edge(v, lo_v, hi_v) {
        // the minimizer ran off the search window: no specular point nearby
        return None;
    }
    let p = point(u, v);
    let inside = face.inside_distance(p);
    let mut ambiguous = inside.abs() <= BOUNDARY_TOL;
    let mut valid = inside > BOUNDARY_TOL;
    if inside > -BOUNDARY_TOL {
        for leg_end in [sat, rx] {
            let c = segment_clearance(boxes, p, leg_end, Some(box_index));
            if c.blocked {
                valid = false;
            }
            ambiguous |= c.ambiguous;
        }
    }
    if ambiguous {
        valid = false;
    }
    Some(FaceReflection {
        box_index,
        point: p,
        delay: path_excess(sat, p, rx),
        valid,
        ambiguous,
    })
}

pub fn box_scene(boxes: &[BoxBuilding]) -> Scene {
    Scene::new(SceneFile {
        origin: GeodeticPoint::new(22.3, 114.17, 0.0).unwrap(),
        terrain: Terrain::Constant(0.0),
        buildings: boxes
            .iter()
            .enumerate()
            .map(|(i, b)| Building {
                id: i as u32 + 1,
                base_alt: 0.0,
                height: b.height,
                footprint: b.corners().to_vec(),
            })
            .collect(),
        grid: GridSpec::new([-100.0, 100.0], [-100.0, 100.0]),
    })
    .expect("valid box scene")
}

// ---------------------------------------------------------------------------
// Randomized geometry comparison

use rand::Rng;

pub fn random_boxes(rng: &mut impl Rng) -> Vec<BoxBuilding> {
    let count = rng.random_range(1..=5);
    (0..count)
        .map(|_| BoxBuilding {
            center: [rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)],
            half: [rng.random_range(2.0..15.0), rng.random_range(2.0..15.0)],
            angle: rng.random_range(0.0..std::f64::consts::PI),
            height: rng.random_range(4.0..60.0),
        })
        .collect()
}

/// Receiver outside every box and a satellite ~20 000 km away above the
/// horizon.
pub fn random_geometry(rng: &mut impl Rng, boxes: &[BoxBuilding]) -> (V3, V3) {
    let rx = loop {
        let e = rng.random_range(-30.0..30.0);
        let n = rng.random_range(-30.0..30.0);
        let u = rng.random_range(0.5..15.0);
        if boxes.iter().all(|b| b.depth([e, n, u]) > 0.05) {
            break [e, n, u];
        }
    };
    let el = rng.random_range(3.0_f64..70.0).to_radians();
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let r = rng.random_range(2.0e7..2.6e7);
    let sat = [r * el.cos() * az.sin(), r * el.cos() * az.cos(), r * el.sin()];
    (rx, add(rx, sat))
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CaseOutcome {
    /// Disagreements explained by a box edge within the boundary tolerance.
    pub boundary: usize,
    /// Disagreements with no such explanation.
    pub hard: usize,
    pub max_delay_error: f64,
    pub reflections: usize,
    pub blocked: bool,
}

impl CaseOutcome {
    pub fn agrees(&self) -> bool {
        self.boundary == 0 && self.hard == 0
    }
}

/// Compare `classify_los` and `trace_single_reflection` with the oracles on
/// one scene and geometry.
pub fn compare_case(boxes: &[BoxBuilding], rx: V3, sat: V3) -> CaseOutcome {
    use dtgnss::raytrace::{classify_los, trace_single_reflection};

    let scene = box_scene(boxes);
    let rx_p = EnuPoint::new(rx[0], rx[1], rx[2]);
    let sat_p = EnuPoint::new(sat[0], sat[1], sat[2]);
    let mut out = CaseOutcome::default();

    let clearance = segment_clearance(boxes, rx, sat, None);
    let los = classify_los(&rx_p, &sat_p, &scene);
    out.blocked = !los;
    if los == clearance.blocked {
        if clearance.ambiguous {
            out.boundary += 1;
        } else {
            out.hard += 1;
        }
    }

    let oracle: Vec<FaceReflection> = boxes
        .iter()
        .enumerate()
        .flat_map(|(i, b)| b.faces().into_iter().map(move |f| (i, f)))
        .filter_map(|(i, f)| reflect_oracle(boxes, i, &f, rx, sat))
        .collect();
    let paths = trace_single_reflection(&rx_p, &sat_p, &scene);
    out.reflections = paths.len();
    let mut matched = vec![false; oracle.len()];
    for path in &paths {
        let p = v3(&path.reflection_point.expect("reflection point"));
        let surface = scene.surface(path.surface_id.expect("surface id")).expect("surface");
        let verts: Vec<V3> = surface.vertices().iter().map(v3).collect();
        let n = {
            let c = cross(sub(verts[1], verts[0]), sub(verts[2], verts[0]));
            scale(c, 1.0 / norm(c))
        };
        let independent = mirror_delay(sat, rx, verts[0], n);
        out.max_delay_error = out.max_delay_error.max((path.extra_delay - independent).abs());

        let hit = oracle
            .iter()
            .position(|o| norm(sub(o.point, p)) < 1e-4 && dot(sub(p, o.point), n).abs() < 1e-6);
        match hit {
            Some(k) if oracle[k].valid && (oracle[k].delay - path.extra_delay).abs() < 1e-6 => matched[k] = true,
            Some(k) if oracle[k].ambiguous => {
                matched[k] = true;
                out.boundary += 1;
            }
            _ => out.hard += 1,
        }
    }
    for (o, m) in oracle.iter().zip(&matched) {
        if !m && o.valid {
            out.hard += 1;
        }
    }
    out
}
