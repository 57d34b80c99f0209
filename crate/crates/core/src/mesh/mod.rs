//! Triangle meshes: validated container, text format and generators.

mod format;
mod mesher;

pub use format::{parse_mesh, write_mesh, MESH_HEADER};
pub use mesher::{rectangle_mesh, triangulate};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Largest vertex or triangle count accepted from external input.
pub const MAX_ENTITIES: usize = 20_000_000;

/// Conforming P1 triangulation with an ordered boundary loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_indices: Vec<usize>,
    pub interior_indices: Vec<usize>,
}

impl Mesh {
    /// Validates orientation, index ranges and that `boundary` walks the
    /// triangulation's boundary edges in order.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Vec<usize>) -> Result<Self> {
        let nv = vertices.len();
        if nv > MAX_ENTITIES || triangles.len() > MAX_ENTITIES {
            return Err(Error::SizeLimit(format!("mesh exceeds {MAX_ENTITIES} entities")));
        }
        if triangles.is_empty() {
            return Err(Error::Config("mesh has no triangles".into()));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Invariant("non-finite mesh vertex".into()));
        }
        for (k, t) in triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= nv) {
                return Err(Error::Invariant(format!("triangle {k} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Invariant(format!("triangle {k} repeats a vertex")));
            }
            let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if (b - a).cross(c - a) <= 0.0 {
                return Err(Error::Invariant(format!("triangle {k} is not positively oriented")));
            }
        }
        let mut is_boundary = vec![false; nv];
        for &b in &boundary {
            if b >= nv {
                return Err(Error::Invariant(format!("boundary index {b} out of range")));
            }
            if std::mem::replace(&mut is_boundary[b], true) {
                return Err(Error::Invariant(format!("boundary index {b} repeated")));
            }
        }
        check_boundary_loop(&triangles, &boundary)?;
        let interior_indices = (0..nv).filter(|&i| !is_boundary[i]).collect();
        Ok(Mesh {
            vertices,
            triangles,
            boundary_indices: boundary,
            interior_indices,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_indices.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [i, j, k] = self.triangles[t];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(c - a)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    /// Constant gradients of the three P1 hat functions on triangle `t`.
    pub fn hat_gradients(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.corners(t);
        let twice = (b - a).cross(c - a);
        let perp = |e: Point| Point::new(-e.y / twice, e.x / twice);
        [perp(c - b), perp(a - c), perp(b - a)]
    }

    /// Gradient of the P1 interpolant of `u` on triangle `t`.
    pub fn gradient(&self, t: usize, u: &[f64]) -> Point {
        let g = self.hat_gradients(t);
        let tri = self.triangles[t];
        (0..3).fold(Point::default(), |acc, k| acc + u[tri[k]] * g[k])
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        a.dist(b).max(b.dist(c)).max(c.dist(a))
    }

    /// Smallest interior angle of triangle `t`, in degrees.
    pub fn min_angle_deg(&self, t: usize) -> f64 {
        let p = self.corners(t);
        (0..3)
            .map(|k| {
                let (u, v) = (p[(k + 1) % 3] - p[k], p[(k + 2) % 3] - p[k]);
                u.cross(v).abs().atan2(u.dot(v)).to_degrees()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Position of each vertex in `boundary_indices`, if it is a boundary vertex.
    pub fn boundary_slots(&self) -> Vec<Option<usize>> {
        let mut slots = vec![None; self.n_vertices()];
        for (k, &i) in self.boundary_indices.iter().enumerate() {
            slots[i] = Some(k);
        }
        slots
    }

    /// Evaluates `f` at every vertex.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.vertices.iter().map(|&p| f(p)).collect()
    }

    /// Evaluates `f` at the boundary vertices, in boundary order.
    pub fn boundary_trace(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.boundary_indices.iter().map(|&i| f(self.vertices[i])).collect()
    }

    /// Restriction of a vertex field to the boundary, in boundary order.
    pub fn trace_of(&self, u: &[f64]) -> Vec<f64> {
        self.boundary_indices.iter().map(|&i| u[i]).collect()
    }
}

/// Boundary edges are those used by exactly one triangle; they must form a
/// single counter-clockwise cycle matching `boundary` (empty `boundary`
/// means the mesh is closed, e.g. periodic).
fn check_boundary_loop(triangles: &[[usize; 3]], boundary: &[usize]) -> Result<()> {
    let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a, b)).or_default() += 1;
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for (&(a, b), &count) in &edges {
        if count > 1 {
            return Err(Error::Invariant(format!("edge ({a},{b}) used twice with the same orientation")));
        }
        if !edges.contains_key(&(b, a)) && next.insert(a, b).is_some() {
            return Err(Error::Invariant(format!("vertex {a} starts two boundary edges")));
        }
    }
    if next.len() != boundary.len() {
        return Err(Error::Invariant(format!(
            "{} boundary edges but {} boundary indices",
            next.len(),
            boundary.len()
        )));
    }
    let n = boundary.len();
    for k in 0..n {
        if next.get(&boundary[k]) != Some(&boundary[(k + 1) % n]) {
            return Err(Error::Invariant(format!(
                "boundary indices are not ordered along the boundary at position {k}"
            )));
        }
    }
    Ok(())
}
