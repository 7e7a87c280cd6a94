//! Closed triangulated surfaces: construction, validation, I/O and basic
//! geometric queries.
//!
//! Panels are flat triangles whose vertex order is counter-clockwise when
//! seen from outside, so `(b - a) x (c - a)` points out of the obstacle.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A flat triangle given by its three corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

impl Triangle {
    pub const fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Self { a, b, c }
    }

    /// Non-normalized normal with length twice the area.
    #[inline]
    pub fn area_vector(&self) -> Vec3 {
        (self.b - self.a).cross(self.c - self.a)
    }

    pub fn area(&self) -> f64 {
        0.5 * self.area_vector().norm()
    }

    pub fn normal(&self) -> Vec3 {
        self.area_vector().normalized()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.a + self.b + self.c) / 3.0
    }

    pub fn diameter(&self) -> f64 {
        (self.b - self.a)
            .norm()
            .max((self.c - self.b).norm())
            .max((self.a - self.c).norm())
    }

    /// Point with barycentric coordinates `(l0, l1, l2)` relative to `(a, b, c)`.
    #[inline]
    pub fn point(&self, l: [f64; 3]) -> Vec3 {
        self.a * l[0] + self.b * l[1] + self.c * l[2]
    }

    /// Four congruent children obtained by joining edge midpoints.
    pub fn subdivide(&self) -> [Triangle; 4] {
        let ab = (self.a + self.b) * 0.5;
        let bc = (self.b + self.c) * 0.5;
        let ca = (self.c + self.a) * 0.5;
        [
            Triangle::new(self.a, ab, ca),
            Triangle::new(ab, self.b, bc),
            Triangle::new(ca, bc, self.c),
            Triangle::new(bc, ca, ab),
        ]
    }

    /// Euclidean distance from `p` to the closed triangle.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        (closest_point(self, p) - p).norm()
    }

    pub fn scaled(&self, s: f64) -> Triangle {
        Triangle::new(self.a * s, self.b * s, self.c * s)
    }
}

/// Closest point of a triangle to `p` (Ericson, Real-Time Collision Detection).
fn closest_point(t: &Triangle, p: Vec3) -> Vec3 {
    let (a, b, c) = (t.a, t.b, t.c);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh has no panels")]
    Empty,
    #[error("panel {panel} references vertex {index} but only {n_vertices} vertices exist")]
    IndexOutOfRange {
        panel: usize,
        index: usize,
        n_vertices: usize,
    },
    #[error("panel {panel} repeats a vertex index")]
    DuplicateIndex { panel: usize },
    #[error("panel {panel} has zero area")]
    DegeneratePanel { panel: usize },
    #[error("surface is open: edge ({0}, {1}) has no opposite partner")]
    OpenSurface(usize, usize),
    #[error("inconsistent orientation: directed edge ({0}, {1}) occurs more than once")]
    InconsistentOrientation(usize, usize),
    #[error("panels are oriented inward (signed volume {0})")]
    InwardOrientation(f64),
}

/// Closed, consistently outward-oriented triangulated surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    panels: Vec<[usize; 3]>,
    centroids: Vec<Vec3>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    diameter: f64,
}

impl SurfaceMesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(vertices: Vec<Vec3>, panels: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if panels.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        for (k, p) in panels.iter().enumerate() {
            for &i in p {
                if i >= nv {
                    return Err(MeshError::IndexOutOfRange {
                        panel: k,
                        index: i,
                        n_vertices: nv,
                    });
                }
            }
            if p[0] == p[1] || p[1] == p[2] || p[0] == p[2] {
                return Err(MeshError::DuplicateIndex { panel: k });
            }
        }

        let mut centroids = Vec::with_capacity(panels.len());
        let mut normals = Vec::with_capacity(panels.len());
        let mut areas = Vec::with_capacity(panels.len());
        for (k, p) in panels.iter().enumerate() {
            let t = Triangle::new(vertices[p[0]], vertices[p[1]], vertices[p[2]]);
            let av = t.area_vector();
            let len = av.norm();
            let scale = t.diameter().powi(2);
            if !(len > 1e-14 * scale) || !len.is_finite() {
                return Err(MeshError::DegeneratePanel { panel: k });
            }
            centroids.push(t.centroid());
            normals.push(av / len);
            areas.push(0.5 * len);
        }

        check_closed(&panels)?;

        let volume: f64 = (0..panels.len())
            .map(|k| centroids[k].dot(normals[k]) * areas[k])
            .sum::<f64>()
            / 3.0;
        if !(volume > 0.0) {
            return Err(MeshError::InwardOrientation(volume));
        }

        let diameter = vertex_diameter(&vertices);
        Ok(Self {
            vertices,
            panels,
            centroids,
            normals,
            areas,
            diameter,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn panels(&self) -> &[[usize; 3]] {
        &self.panels
    }

    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn n_panels(&self) -> usize {
        self.panels.len()
    }

    pub fn triangle(&self, k: usize) -> Triangle {
        let p = self.panels[k];
        Triangle::new(self.vertices[p[0]], self.vertices[p[1]], self.vertices[p[2]])
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// `(1/3) sum centroid . normal * area`, the enclosed volume.
    pub fn signed_volume(&self) -> f64 {
        (0..self.n_panels())
            .map(|k| self.centroids[k].dot(self.normals[k]) * self.areas[k])
            .sum::<f64>()
            / 3.0
    }

    /// Largest panel diameter (mesh size h).
    pub fn max_panel_diameter(&self) -> f64 {
        (0..self.n_panels())
            .map(|k| self.triangle(k).diameter())
            .fold(0.0, f64::max)
    }

    /// Largest distance of a vertex from the origin.
    pub fn max_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Generalized winding number of the surface around `p`: ~1 inside, ~0 outside.
    pub fn winding_number(&self, p: Vec3) -> f64 {
        let mut total = 0.0;
        for tri in &self.panels {
            let a = self.vertices[tri[0]] - p;
            let b = self.vertices[tri[1]] - p;
            let c = self.vertices[tri[2]] - p;
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(b.cross(c));
            let den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    /// Point-in-solid test based on the winding number.
    pub fn contains(&self, p: Vec3) -> bool {
        self.winding_number(p) > 0.5
    }

    /// Distance from `p` to the nearest panel.
    pub fn distance_to_surface(&self, p: Vec3) -> f64 {
        (0..self.n_panels())
            .map(|k| self.triangle(k).distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// SHA-256 over vertex coordinates and panel indices (little endian).
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"mesh v1");
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for x in v.to_array() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        h.update((self.panels.len() as u64).to_le_bytes());
        for p in &self.panels {
            for &i in p {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn content_hash_hex(&self) -> String {
        hex_string(&self.content_hash())
    }

    /// Serializes to the `mesh v1` text format. Coordinates use the shortest
    /// representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.panels.len()));
        s.push_str("mesh v1\n");
        for v in &self.vertices {
            let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for p in &self.panels {
            let _ = writeln!(s, "f {} {} {}", p[0], p[1], p[2]);
        }
        s
    }

    /// Parses the `mesh v1` text format and validates the result.
    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut vertices = Vec::new();
        let mut panels = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: &str| MeshError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            if !seen_header {
                if line != "mesh v1" {
                    return Err(perr("expected header `mesh v1`"));
                }
                seen_header = true;
                continue;
            }
            let mut it = line.split_whitespace();
            let tag = it.next().unwrap_or_default();
            let fields: Vec<&str> = it.collect();
            if fields.len() != 3 {
                return Err(perr("expected exactly three fields"));
            }
            match tag {
                "v" => {
                    if !panels.is_empty() {
                        return Err(perr("vertex line after face lines"));
                    }
                    let mut xyz = [0.0; 3];
                    for (slot, f) in xyz.iter_mut().zip(&fields) {
                        *slot = f.parse::<f64>().map_err(|e| perr(&e.to_string()))?;
                        if !slot.is_finite() {
                            return Err(perr("non-finite coordinate"));
                        }
                    }
                    vertices.push(Vec3::from(xyz));
                }
                "f" => {
                    let mut ijk = [0usize; 3];
                    for (slot, f) in ijk.iter_mut().zip(&fields) {
                        *slot = f.parse::<usize>().map_err(|e| perr(&e.to_string()))?;
                    }
                    panels.push(ijk);
                }
                other => return Err(perr(&format!("unknown record `{other}`"))),
            }
        }
        if !seen_header {
            return Err(MeshError::Parse {
                line: 1,
                msg: "missing header".into(),
            });
        }
        SurfaceMesh::new(vertices, panels)
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_closed(panels: &[[usize; 3]]) -> Result<(), MeshError> {
    let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(3 * panels.len());
    for p in panels {
        for e in 0..3 {
            let key = (p[e], p[(e + 1) % 3]);
            let n = directed.entry(key).or_insert(0);
            *n += 1;
            if *n > 1 {
                return Err(MeshError::InconsistentOrientation(key.0, key.1));
            }
        }
    }
    // Deterministic error reporting: scan panels in order.
    for p in panels {
        for e in 0..3 {
            let (i, j) = (p[e], p[(e + 1) % 3]);
            if !directed.contains_key(&(j, i)) {
                return Err(MeshError::OpenSurface(i, j));
            }
        }
    }
    Ok(())
}

fn vertex_diameter(vertices: &[Vec3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            best = best.max((*a - *b).norm_sq());
        }
    }
    best.sqrt()
}

/// Icosphere of `20 * 4^level` panels with vertices on the sphere of `radius`.
pub fn build_sphere(radius: f64, refinement_level: u32) -> SurfaceMesh {
    assert!(radius > 0.0, "sphere radius must be positive");
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|&p| Vec3::from(p).normalized())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for f in faces.iter_mut() {
        let t = Triangle::new(verts[f[0]], verts[f[1]], verts[f[2]]);
        if t.area_vector().dot(t.centroid()) < 0.0 {
            f.swap(1, 2);
        }
    }
    for _ in 0..refinement_level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |i: usize, j: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (i.min(j), i.max(j));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[i] + verts[j]) * 0.5).normalized());
                verts.len() - 1
            })
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    SurfaceMesh::new(verts, faces).expect("icosphere construction is valid")
}

/// Boundary of `[-1,1]^3` with the block `[-1/2,1/2]^2 x [0,1]` removed.
///
/// Every face is tiled by axis-aligned squares of side `0.5 / 2^level`, each
/// split into two triangles, so all corners and edges are meshed exactly.
pub fn build_cavity_cube(refinement_level: u32) -> SurfaceMesh {
    let n_sub = 1usize << refinement_level;
    let h = 0.5 / n_sub as f64;
    // Coordinates are multiples of h; key vertices by integer lattice index.
    let scale = 2.0 * n_sub as f64;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut verts: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut vid = |p: Vec3, verts: &mut Vec<Vec3>| -> usize {
        let key = [
            (p.x * scale).round() as i64,
            (p.y * scale).round() as i64,
            (p.z * scale).round() as i64,
        ];
        *index.entry(key).or_insert_with(|| {
            verts.push(Vec3::new(
                key[0] as f64 / scale,
                key[1] as f64 / scale,
                key[2] as f64 / scale,
            ));
            verts.len() - 1
        })
    };

    // A rectangle on an axis-aligned plane: `axis` is the normal direction,
    // `sign` the outward sign; (u0,u1)x(v0,v1) span the other two axes in
    // cyclic order (axis+1, axis+2).
    struct Rect {
        axis: usize,
        level: f64,
        sign: f64,
        u: (f64, f64),
        v: (f64, f64),
    }
    let mut rects: Vec<Rect> = Vec::new();
    let outer = (-1.0, 1.0);
    for axis in 0..3 {
        rects.push(Rect { axis, level: -1.0, sign: -1.0, u: outer, v: outer });
        if axis != 2 {
            rects.push(Rect { axis, level: 1.0, sign: 1.0, u: outer, v: outer });
        }
    }
    // Top face z = 1 with the central opening removed: axis 2 uses (u,v)=(x,y).
    let top_parts = [
        ((-1.0, 1.0), (-1.0, -0.5)),
        ((-1.0, 1.0), (0.5, 1.0)),
        ((-1.0, -0.5), (-0.5, 0.5)),
        ((0.5, 1.0), (-0.5, 0.5)),
    ];
    for (u, v) in top_parts {
        rects.push(Rect { axis: 2, level: 1.0, sign: 1.0, u, v });
    }
    // Cavity walls; the solid lies on the far side so normals point into the hole.
    // axis 0 -> (u,v) = (y,z); axis 1 -> (u,v) = (z,x).
    rects.push(Rect { axis: 0, level: -0.5, sign: 1.0, u: (-0.5, 0.5), v: (0.0, 1.0) });
    rects.push(Rect { axis: 0, level: 0.5, sign: -1.0, u: (-0.5, 0.5), v: (0.0, 1.0) });
    rects.push(Rect { axis: 1, level: -0.5, sign: 1.0, u: (0.0, 1.0), v: (-0.5, 0.5) });
    rects.push(Rect { axis: 1, level: 0.5, sign: -1.0, u: (0.0, 1.0), v: (-0.5, 0.5) });
    // Cavity floor z = 0, facing up into the hole.
    rects.push(Rect { axis: 2, level: 0.0, sign: 1.0, u: (-0.5, 0.5), v: (-0.5, 0.5) });

    for r in &rects {
        let nu = ((r.u.1 - r.u.0) / h).round() as usize;
        let nv = ((r.v.1 - r.v.0) / h).round() as usize;
        let place = |u: f64, v: f64| -> Vec3 {
            let mut c = [0.0; 3];
            c[r.axis] = r.level;
            c[(r.axis + 1) % 3] = u;
            c[(r.axis + 2) % 3] = v;
            Vec3::from(c)
        };
        for i in 0..nu {
            for j in 0..nv {
                let u0 = r.u.0 + i as f64 * h;
                let v0 = r.v.0 + j as f64 * h;
                let p00 = vid(place(u0, v0), &mut verts);
                let p10 = vid(place(u0 + h, v0), &mut verts);
                let p11 = vid(place(u0 + h, v0 + h), &mut verts);
                let p01 = vid(place(u0, v0 + h), &mut verts);
                // (u, v, axis) is right-handed, so u x v = +axis.
                if r.sign > 0.0 {
                    faces.push([p00, p10, p11]);
                    faces.push([p00, p11, p01]);
                } else {
                    faces.push([p00, p11, p10]);
                    faces.push([p00, p01, p11]);
                }
            }
        }
    }
    SurfaceMesh::new(verts, faces).expect("cavity cube construction is valid")
}

/// Writes `mesh` in the `mesh v1` text format.
pub fn save_mesh(path: impl AsRef<Path>, mesh: &SurfaceMesh) -> Result<(), MeshError> {
    std::fs::write(path, mesh.to_text())?;
    Ok(())
}

/// Reads and validates a `mesh v1` file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<SurfaceMesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    SurfaceMesh::from_text(&text)
}

/// Domain-of-dependence time `diam / c`.
pub fn t_star(mesh: &SurfaceMesh, c: f64) -> f64 {
    assert!(c > 0.0, "wavespeed must be positive");
    mesh.diameter() / c
}
