//! Prefractal planar domains and the measure-geometric checks run on them.

mod corkscrew;
mod nset;

pub use corkscrew::{find_corkscrew_point, CorkscrewCertificate};
pub use nset::{ball_intersection_area, n_set_ratio, verify_n_set, NSetReport};

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest prefractal generation accepted by [`generate_prefractal`].
pub const MAX_LEVEL: u32 = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Rotation by `angle` radians, counter-clockwise.
    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    fn mul(self, p: Point) -> Point {
        Point::new(self * p.x, self * p.y)
    }
}

/// Closest point on the segment `[a, b]` to `p`, with its parameter in `[0, 1]`.
pub fn project_on_segment(p: Point, a: Point, b: Point) -> (Point, f64) {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    (a + t * d, t)
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    p.dist(project_on_segment(p, a, b).0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Generator {
    KochSnowflake,
    KochAntiSnowflake,
    Square,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::KochSnowflake => "koch",
            Generator::KochAntiSnowflake => "antikoch",
            Generator::Square => "square",
        }
    }
}

/// Constructive description of a prefractal domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrefractalSpec {
    pub generator: Generator,
    pub level: u32,
    pub scale: f64,
}

impl PrefractalSpec {
    pub fn new(generator: Generator, level: u32, scale: f64) -> Self {
        PrefractalSpec {
            generator,
            level,
            scale,
        }
    }

    pub fn snowflake(level: u32) -> Self {
        Self::new(Generator::KochSnowflake, level, 1.0)
    }

    pub fn unit_square() -> Self {
        Self::new(Generator::Square, 0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.level > MAX_LEVEL {
            return Err(Error::SizeLimit(format!(
                "prefractal level {} exceeds the cap {MAX_LEVEL}",
                self.level
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Precondition(format!(
                "scale must be positive and finite, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

impl fmt::Display for PrefractalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.generator.name(), self.level, self.scale)
    }
}

/// Parses `koch:<level>:<scale>`, `antikoch:<level>:<scale>` or
/// `square:<level>:<scale>`. The scale may be omitted and defaults to 1.
impl FromStr for PrefractalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let gen = match parts.next().unwrap_or("") {
            "koch" | "snowflake" => Generator::KochSnowflake,
            "antikoch" | "antisnowflake" => Generator::KochAntiSnowflake,
            "square" => Generator::Square,
            other => return Err(Error::parse(0, format!("unknown domain generator '{other}'"))),
        };
        let level = match parts.next() {
            Some(l) => l
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::parse(1, format!("bad level '{l}'")))?,
            None => 0,
        };
        let scale = match parts.next() {
            Some(v) => v
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(2, format!("bad scale '{v}'")))?,
            None => 1.0,
        };
        if parts.next().is_some() {
            return Err(Error::parse(3, "too many ':'-separated fields in domain spec"));
        }
        let spec = PrefractalSpec::new(gen, level, scale);
        spec.validate()?;
        Ok(spec)
    }
}

/// Simple counter-clockwise polygon together with its width and diameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarDomain {
    pub vertices: Vec<Point>,
    pub diam: f64,
    pub wid: f64,
    pub boundary_arclength: f64,
    pub spec: Option<PrefractalSpec>,
}

pub fn generate_prefractal(spec: &PrefractalSpec) -> Result<PlanarDomain> {
    spec.validate()?;
    let s = spec.scale;
    let (mut poly, sign) = match spec.generator {
        Generator::KochSnowflake => (
            vec![
                Point::new(0.0, 0.0),
                Point::new(s, 0.0),
                Point::new(0.5 * s, 0.5 * 3f64.sqrt() * s),
            ],
            1.0,
        ),
        Generator::KochAntiSnowflake => (
            vec![
                Point::new(0.0, 0.0),
                Point::new(s, 0.0),
                Point::new(0.5 * s, 0.5 * 3f64.sqrt() * s),
            ],
            -1.0,
        ),
        Generator::Square => (
            vec![
                Point::new(0.0, 0.0),
                Point::new(s, 0.0),
                Point::new(s, s),
                Point::new(0.0, s),
            ],
            1.0,
        ),
    };
    for _ in 0..spec.level {
        poly = koch_substitution(&poly, sign);
    }
    let mut dom = PlanarDomain::from_vertices(poly)?;
    dom.spec = Some(*spec);
    Ok(dom)
}

/// Replaces every edge by the four-segment Koch generator. `sign > 0` puts
/// the bump outside a counter-clockwise polygon, `sign < 0` inside.
fn koch_substitution(poly: &[Point], sign: f64) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(4 * n);
    let angle = -sign * std::f64::consts::FRAC_PI_3;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let third = (1.0 / 3.0) * (b - a);
        let p1 = a + third;
        let p3 = a + 2.0 * third;
        let peak = p1 + third.rotate(angle);
        out.extend_from_slice(&[a, p1, peak, p3]);
    }
    out
}

impl PlanarDomain {
    /// Builds a domain from a polygon, reorienting it counter-clockwise and
    /// rejecting self-intersecting or degenerate input.
    pub fn from_vertices(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry("a polygon needs at least three vertices".into()));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Geometry("non-finite polygon vertex".into()));
        }
        let area = signed_area(&vertices);
        if area == 0.0 {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        check_simple(&vertices)?;
        let hull = convex_hull(&vertices);
        let (diam, wid) = hull_diameter_width(&hull);
        let boundary_arclength = (0..vertices.len())
            .map(|i| vertices[i].dist(vertices[(i + 1) % vertices.len()]))
            .sum();
        Ok(PlanarDomain {
            vertices,
            diam,
            wid,
            boundary_arclength,
            spec: None,
        })
    }

    pub fn segment(&self, i: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        (0..self.vertices.len()).map(move |i| self.segment(i))
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    /// Even-odd test; points exactly on the boundary may go either way.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let xint = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < xint {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.segments()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closest boundary point: `(point, segment index, parameter on segment)`.
    pub fn closest_boundary_point(&self, p: Point) -> (Point, usize, f64) {
        let mut best = (self.vertices[0], 0, 0.0);
        let mut best_d = f64::INFINITY;
        for (i, (a, b)) in self.segments().enumerate() {
            let (q, t) = project_on_segment(p, a, b);
            let d = p.dist(q);
            if d < best_d {
                best_d = d;
                best = (q, i, t);
            }
        }
        best
    }

    /// Outward unit normal of segment `i`.
    pub fn outward_normal(&self, i: usize) -> Point {
        let (a, b) = self.segment(i);
        let d = b - a;
        let len = d.norm();
        Point::new(d.y / len, -d.x / len)
    }

    /// Boundary point at arclength `s` measured from the first vertex.
    pub fn point_at_arclength(&self, s: f64) -> Point {
        let mut s = s.rem_euclid(self.boundary_arclength);
        for (a, b) in self.segments() {
            let len = a.dist(b);
            if s <= len {
                return a + (s / len) * (b - a);
            }
            s -= len;
        }
        self.vertices[0]
    }

    /// Arclength coordinate of a point lying on segment `seg` at parameter `t`.
    pub fn arclength_of(&self, seg: usize, t: f64) -> f64 {
        let before: f64 = (0..seg).map(|i| {
            let (a, b) = self.segment(i);
            a.dist(b)
        })
        .sum();
        let (a, b) = self.segment(seg);
        before + t * a.dist(b)
    }

    /// Vertices whose interior angle is below 180 degrees.
    pub fn convex_corners(&self) -> Vec<usize> {
        let n = self.vertices.len();
        (0..n)
            .filter(|&i| {
                let prev = self.vertices[(i + n - 1) % n];
                let cur = self.vertices[i];
                let next = self.vertices[(i + 1) % n];
                (cur - prev).cross(next - cur) > 0.0
            })
            .collect()
    }
}

pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| poly[i].cross(poly[(i + 1) % n]))
        .sum::<f64>()
}

/// Rejects polygons whose non-adjacent edges intersect or come closer than a
/// relative tolerance. Segments are bucketed on a uniform grid so that large
/// prefractals stay tractable.
fn check_simple(poly: &[Point]) -> Result<()> {
    let n = poly.len();
    let seg = |i: usize| (poly[i], poly[(i + 1) % n]);
    let mean_len = (0..n).map(|i| poly[i].dist(poly[(i + 1) % n])).sum::<f64>() / n as f64;
    if mean_len == 0.0 {
        return Err(Error::Geometry("degenerate polygon".into()));
    }
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for p in poly {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let extent = (hi.x - lo.x).max(hi.y - lo.y);
    let tol = 1e-9 * extent;
    let cell = 2.0 * mean_len;
    let key = |p: Point| -> (i64, i64) {
        (((p.x - lo.x) / cell).floor() as i64, ((p.y - lo.y) / cell).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for i in 0..n {
        let (a, b) = seg(i);
        let (ka, kb) = (key(a), key(b));
        for cx in ka.0.min(kb.0) - 1..=ka.0.max(kb.0) + 1 {
            for cy in ka.1.min(kb.1) - 1..=ka.1.max(kb.1) + 1 {
                grid.entry((cx, cy)).or_default().push(i);
            }
        }
    }
    for bucket in grid.values() {
        for (k, &i) in bucket.iter().enumerate() {
            for &j in &bucket[k + 1..] {
                let adjacent = j == (i + 1) % n || i == (j + 1) % n;
                if adjacent || i == j {
                    continue;
                }
                let (a, b) = seg(i);
                let (c, d) = seg(j);
                if segments_distance(a, b, c, d) <= tol {
                    return Err(Error::Geometry(format!(
                        "polygon is not simple: edges {i} and {j} touch or cross"
                    )));
                }
            }
        }
    }
    // Adjacent edges folding back onto each other.
    for i in 0..n {
        let (a, b) = seg(i);
        let c = poly[(i + 2) % n];
        let (u, v) = (b - a, c - b);
        if u.cross(v).abs() <= 1e-12 * u.norm() * v.norm() && u.dot(v) < 0.0 {
            return Err(Error::Geometry(format!("polygon folds back at vertex {}", (i + 1) % n)));
        }
    }
    Ok(())
}

fn segments_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return 0.0;
    }
    segment_distance(a, c, d)
        .min(segment_distance(b, c, d))
        .min(segment_distance(c, a, b))
        .min(segment_distance(d, a, b))
}

/// Andrew's monotone chain; returns the hull counter-clockwise without
/// (nearly) collinear vertices.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                // Relative tolerance: nearly collinear points would stall
                // the calipers on rounding noise.
                if (b - a).cross(p - b) <= 1e-12 * (b - a).norm() * (p - b).norm() {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Diameter and minimal width of a convex polygon by rotating calipers.
pub fn hull_diameter_width(hull: &[Point]) -> (f64, f64) {
    let n = hull.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    if n == 2 {
        return (hull[0].dist(hull[1]), 0.0);
    }
    let mut diam: f64 = 0.0;
    let mut wid = f64::INFINITY;
    let mut j = 1;
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let e = b - a;
        let len = e.norm();
        // Advance the antipodal pointer while the area (height) grows.
        while e.cross(hull[(j + 1) % n] - a) > e.cross(hull[j] - a) {
            j = (j + 1) % n;
        }
        wid = wid.min(e.cross(hull[j] - a) / len);
        diam = diam.max(a.dist(hull[j])).max(b.dist(hull[j]));
    }
    (diam, wid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_matches_brute_force_on_level_three() {
        let d = generate_prefractal(&PrefractalSpec::snowflake(3)).unwrap();
        // Oracle: the width is the smallest extent across any line through
        // two vertices, so scan all vertex pairs.
        let v = &d.vertices;
        let mut wid = f64::INFINITY;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let e = v[j] - v[i];
                let n = Point::new(-e.y / e.norm(), e.x / e.norm());
                let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.dot(n)), hi.max(p.dot(n))));
                wid = wid.min(hi - lo);
            }
        }
        assert!((d.wid - wid).abs() < 1e-12, "{} vs {wid}", d.wid);
        assert!(d.wid > 0.9);
    }

    #[test]
    fn unit_square() {
        let d = generate_prefractal(&PrefractalSpec::unit_square()).unwrap();
        assert_eq!(d.vertices.len(), 4);
        assert!((d.diam - 2f64.sqrt()).abs() < 1e-15);
        assert!((d.wid - 1.0).abs() < 1e-15);
        assert!((d.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn snowflake_base_and_level_two() {
        let d0 = generate_prefractal(&PrefractalSpec::snowflake(0)).unwrap();
        assert_eq!(d0.vertices.len(), 3);
        assert!((d0.boundary_arclength - 3.0).abs() < 1e-15);

        let d2 = generate_prefractal(&PrefractalSpec::snowflake(2)).unwrap();
        // Oracle: direct enumeration of the substitution, edge by edge.
        let mut edges = vec![1.0f64; 3];
        for _ in 0..2 {
            edges = edges.iter().flat_map(|&l| [l / 3.0; 4]).collect();
        }
        assert_eq!(d2.vertices.len(), edges.len());
        assert_eq!(d2.vertices.len(), 48);
        let total: f64 = edges.iter().sum();
        assert!((d2.boundary_arclength - total).abs() < 1e-12);
        assert!((d2.boundary_arclength - 3.0 * (4.0f64 / 3.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn snowflake_area_matches_series() {
        // Level k adds 3*4^(k-1) bumps, each an equilateral triangle of side 3^-k.
        let tri = |side: f64| 3f64.sqrt() / 4.0 * side * side;
        let mut series = tri(1.0);
        for k in 1..=5u32 {
            series += 3.0 * 4f64.powi(k as i32 - 1) * tri(3f64.powi(-(k as i32)));
            let d = generate_prefractal(&PrefractalSpec::snowflake(k)).unwrap();
            assert!((d.area() - series).abs() < 1e-12 * series, "level {k}");
        }
        // Remaining bumps beyond level 5 sum to (27/20)(4/9)^6 of the base,
        // closing the gap to the 8/5 limit.
        let tail = 27.0 / 20.0 * (4.0f64 / 9.0).powi(6) * tri(1.0);
        assert!((series + tail - 1.6 * tri(1.0)).abs() < 1e-14);
    }

    #[test]
    fn deterministic_generation() {
        let s = PrefractalSpec::snowflake(4);
        let a = generate_prefractal(&s).unwrap();
        let b = generate_prefractal(&s).unwrap();
        let bits = |d: &PlanarDomain| -> Vec<(u64, u64)> {
            d.vertices.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn level_cap_and_scale() {
        let err = generate_prefractal(&PrefractalSpec::snowflake(9)).unwrap_err();
        assert!(matches!(err, Error::SizeLimit(_)));
        let err = generate_prefractal(&PrefractalSpec::new(Generator::Square, 0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn antisnowflake_pinches() {
        // The three inward bumps of the first generation meet at the centroid.
        assert!(generate_prefractal(&PrefractalSpec::new(Generator::KochAntiSnowflake, 0, 1.0)).is_ok());
        let err = generate_prefractal(&PrefractalSpec::new(Generator::KochAntiSnowflake, 1, 1.0))
            .unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn domain_spec_parsing() {
        let s: PrefractalSpec = "koch:2:1.5".parse().unwrap();
        assert_eq!(s, PrefractalSpec::new(Generator::KochSnowflake, 2, 1.5));
        let s: PrefractalSpec = "square".parse().unwrap();
        assert_eq!(s, PrefractalSpec::unit_square());
        assert!("koch:x:1".parse::<PrefractalSpec>().is_err());
        assert!("blob:1:1".parse::<PrefractalSpec>().is_err());
        assert!("koch:1:1:1".parse::<PrefractalSpec>().is_err());
        assert!(matches!("koch:12:1".parse::<PrefractalSpec>(), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn width_of_level_one_snowflake() {
        // Hull is the regular hexagon through the six star tips.
        let d = generate_prefractal(&PrefractalSpec::snowflake(1)).unwrap();
        let circumradius = 1.0 / 3f64.sqrt();
        assert!((d.wid - 3f64.sqrt() * circumradius).abs() < 1e-12);
        assert!((d.diam - 2.0 * circumradius).abs() < 1e-12);
    }

    #[test]
    fn rejects_bowtie() {
        let bow = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(PlanarDomain::from_vertices(bow).is_err());
    }
}
