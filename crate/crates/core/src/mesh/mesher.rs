use std::collections::{HashMap, HashSet};

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters,
    Triangulation,
};

use super::Mesh;
use crate::error::{Error, Result};
use crate::geometry::{segment_distance, PlanarDomain, Point};

/// Structured mesh of the rectangle `[lo, hi]` with `nx * ny` cells, each
/// split along its rising diagonal. Boundary runs counter-clockwise from `lo`.
pub fn rectangle_mesh(lo: Point, hi: Point, nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 || !(hi.x > lo.x && hi.y > lo.y) {
        return Err(Error::Precondition("rectangle mesh needs positive extent and cell counts".into()));
    }
    let idx = |i: usize, j: usize| i + j * (nx + 1);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point::new(
                lo.x + (hi.x - lo.x) * i as f64 / nx as f64,
                lo.y + (hi.y - lo.y) * j as f64 / ny as f64,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    boundary.extend((0..nx).map(|i| idx(i, 0)));
    boundary.extend((0..ny).map(|j| idx(nx, j)));
    boundary.extend((1..=nx).rev().map(|i| idx(i, ny)));
    boundary.extend((1..=ny).rev().map(|j| idx(0, j)));
    Mesh::new(vertices, triangles, boundary)
}

const MIN_ANGLE_DEG: f64 = 20.0;
const MAX_ATTEMPTS: usize = 12;

/// Quality triangulation of `domain` with every triangle diameter at most
/// `h_max` and every angle at least 20 degrees. All polygon corners are mesh
/// vertices and the boundary loop starts at the first polygon vertex.
pub fn triangulate(domain: &PlanarDomain, h_max: f64) -> Result<Mesh> {
    if !(h_max > 0.0 && h_max < domain.wid / 4.0) {
        return Err(Error::Precondition(format!(
            "h_max = {h_max} must lie in (0, wid/4 = {})",
            domain.wid / 4.0
        )));
    }
    let mut target = 0.7 * h_max;
    let mut last_issue = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let mesh = build(domain, target)?;
        let worst_diam = mesh.h_max();
        let worst_angle = (0..mesh.triangles.len())
            .map(|t| mesh.min_angle_deg(t))
            .fold(f64::INFINITY, f64::min);
        if worst_diam <= h_max && worst_angle >= MIN_ANGLE_DEG {
            check_conformity(domain, &mesh)?;
            log::debug!(
                "triangulated with {} vertices, {} triangles after {} attempt(s)",
                mesh.n_vertices(),
                mesh.triangles.len(),
                attempt + 1
            );
            return Ok(mesh);
        }
        last_issue = format!("diameter {worst_diam:.3e}, min angle {worst_angle:.2} deg");
        target *= 0.85;
    }
    Err(Error::Meshing(format!(
        "quality targets not reached after {MAX_ATTEMPTS} attempts ({last_issue})"
    )))
}

fn build(domain: &PlanarDomain, ht: f64) -> Result<Mesh> {
    // Boundary polyline with spacing at most ht; polygon vertices come first
    // in each segment so the loop can be anchored at vertex 0.
    let mut outline = Vec::new();
    for (a, b) in domain.segments() {
        let pieces = (a.dist(b) / ht).ceil().max(1.0) as usize;
        for k in 0..pieces {
            outline.push(a + (k as f64 / pieces as f64) * (b - a));
        }
    }

    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mesh_err = |e: spade::InsertionError| Error::Meshing(format!("vertex insertion failed: {e:?}"));
    let handles = outline
        .iter()
        .map(|p| cdt.insert(Point2::new(p.x, p.y)).map_err(mesh_err))
        .collect::<Result<Vec<_>>>()?;
    for k in 0..handles.len() {
        let (a, b) = (handles[k], handles[(k + 1) % handles.len()]);
        if !cdt.can_add_constraint(a, b) {
            return Err(Error::Meshing("boundary constraint crosses another".into()));
        }
        cdt.add_constraint(a, b);
    }
    for p in interior_lattice(domain, &outline, ht) {
        cdt.insert(Point2::new(p.x, p.y)).map_err(mesh_err)?;
    }

    let max_area = 1.5 * 3f64.sqrt() / 4.0 * ht * ht;
    let budget = (50.0 * domain.area() / max_area) as usize + 10 * cdt.num_vertices() + 1000;
    let result = cdt.refine(
        RefinementParameters::new()
            .with_angle_limit(AngleLimit::from_deg(25.0))
            .with_max_allowed_area(max_area)
            .with_max_additional_vertices(budget)
            .exclude_outer_faces(true),
    );
    if !result.refinement_complete {
        log::warn!("mesh refinement stopped at the vertex budget");
    }
    let excluded: HashSet<_> = result.excluded_faces.into_iter().collect();

    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let mut tri = [0usize; 3];
        for (slot, v) in tri.iter_mut().zip(face.vertices()) {
            let key = v.fix().index();
            *slot = *remap.entry(key).or_insert_with(|| {
                let p = v.position();
                vertices.push(Point::new(p.x, p.y));
                vertices.len() - 1
            });
        }
        let (a, b, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
        if (b - a).cross(c - a) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }
    let start = *remap
        .get(&handles[0].index())
        .ok_or_else(|| Error::Meshing("first polygon vertex missing from mesh".into()))?;
    let boundary = boundary_loop(&triangles, start)?;
    Mesh::new(vertices, triangles, boundary).map_err(|e| Error::Meshing(e.to_string()))
}

/// Triangular lattice of interior points kept at least `ht / 2` away from
/// the boundary polyline.
fn interior_lattice(domain: &PlanarDomain, outline: &[Point], ht: f64) -> Vec<Point> {
    let (lo, hi) = domain.bounding_box();
    let cell = ht;
    let key = |p: Point| (((p.x - lo.x) / cell).floor() as i64, ((p.y - lo.y) / cell).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for k in 0..outline.len() {
        let (ka, kb) = (key(outline[k]), key(outline[(k + 1) % outline.len()]));
        for cx in ka.0.min(kb.0)..=ka.0.max(kb.0) {
            for cy in ka.1.min(kb.1)..=ka.1.max(kb.1) {
                buckets.entry((cx, cy)).or_default().push(k);
            }
        }
    }
    let near_boundary = |p: Point| {
        let (cx, cy) = key(p);
        (cx - 1..=cx + 1).any(|x| {
            (cy - 1..=cy + 1).any(|y| {
                buckets.get(&(x, y)).is_some_and(|segs| {
                    segs.iter().any(|&k| {
                        segment_distance(p, outline[k], outline[(k + 1) % outline.len()]) < 0.5 * ht
                    })
                })
            })
        })
    };
    let dy = 0.5 * 3f64.sqrt() * ht;
    let mut out = Vec::new();
    let rows = ((hi.y - lo.y) / dy).ceil() as usize;
    let cols = ((hi.x - lo.x) / ht).ceil() as usize + 1;
    for j in 1..rows {
        let y = lo.y + j as f64 * dy;
        let shift = if j % 2 == 1 { 0.5 * ht } else { 0.0 };
        for i in 0..cols {
            let p = Point::new(lo.x + shift + i as f64 * ht, y);
            if domain.contains(p) && !near_boundary(p) {
                out.push(p);
            }
        }
    }
    out
}

/// Walks the edges owned by exactly one triangle starting at `start`.
fn boundary_loop(triangles: &[[usize; 3]], start: usize) -> Result<Vec<usize>> {
    let mut directed = HashSet::new();
    for t in triangles {
        for k in 0..3 {
            directed.insert((t[k], t[(k + 1) % 3]));
        }
    }
    let mut next = HashMap::new();
    for &(a, b) in &directed {
        if !directed.contains(&(b, a)) && next.insert(a, b).is_some() {
            return Err(Error::Meshing(format!("boundary is pinched at vertex {a}")));
        }
    }
    let mut loop_ = vec![start];
    let mut cur = start;
    loop {
        cur = *next
            .get(&cur)
            .ok_or_else(|| Error::Meshing("boundary loop is open".into()))?;
        if cur == start {
            break;
        }
        if loop_.len() > next.len() {
            return Err(Error::Meshing("boundary loop does not close".into()));
        }
        loop_.push(cur);
    }
    if loop_.len() != next.len() {
        return Err(Error::Meshing("mesh boundary has more than one component".into()));
    }
    Ok(loop_)
}

/// Every polygon corner is a mesh vertex and the covered area matches the
/// polygon's shoelace area.
fn check_conformity(domain: &PlanarDomain, mesh: &Mesh) -> Result<()> {
    let present: HashSet<(u64, u64)> = mesh
        .boundary_indices
        .iter()
        .map(|&i| (mesh.vertices[i].x.to_bits(), mesh.vertices[i].y.to_bits()))
        .collect();
    if let Some(p) = domain
        .vertices
        .iter()
        .find(|p| !present.contains(&(p.x.to_bits(), p.y.to_bits())))
    {
        return Err(Error::Meshing(format!("polygon corner ({}, {}) is not on the mesh boundary", p.x, p.y)));
    }
    let (a, b) = (mesh.total_area(), domain.area());
    if (a - b).abs() > 1e-10 * b {
        return Err(Error::Meshing(format!("mesh area {a} differs from polygon area {b}")));
    }
    Ok(())
}
