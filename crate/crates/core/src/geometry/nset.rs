use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{PlanarDomain, Point};
use crate::error::{Error, Result};

/// Worst observed n-set ratio and where it occurred.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NSetReport {
    pub min_ratio: f64,
    pub x: Point,
    pub r: f64,
}

/// Exact area of `Ω ∩ B_r(c)`, summing signed circle–triangle intersections
/// over the polygon's edges.
pub fn ball_intersection_area(domain: &PlanarDomain, c: Point, r: f64) -> f64 {
    domain
        .segments()
        .map(|(a, b)| circle_triangle_signed(a - c, b - c, r))
        .sum::<f64>()
        .max(0.0)
}

/// `|Ω ∩ B_r(x)| / r²`.
pub fn n_set_ratio(domain: &PlanarDomain, x: Point, r: f64) -> f64 {
    ball_intersection_area(domain, x, r) / (r * r)
}

/// Signed area of the disk of radius `r` at the origin intersected with the
/// triangle `(0, a, b)`.
fn circle_triangle_signed(a: Point, b: Point, r: f64) -> f64 {
    let d = b - a;
    let (qa, qb, qc) = (d.dot(d), 2.0 * a.dot(d), a.dot(a) - r * r);
    let mut cuts = vec![0.0];
    if qa > 0.0 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc > 0.0 {
            let s = disc.sqrt();
            for t in [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)] {
                if t > 0.0 && t < 1.0 {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.push(1.0);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let p = a + w[0] * d;
        let q = a + w[1] * d;
        let mid = a + (0.5 * (w[0] + w[1])) * d;
        if mid.dot(mid) <= r * r {
            area += 0.5 * p.cross(q);
        } else {
            area += 0.5 * r * r * p.cross(q).atan2(p.dot(q));
        }
    }
    area
}

/// Smallest `|Ω ∩ B_r(x)| / r²` over seeded uniform interior samples, all
/// polygon vertices, and every radius in `radii`.
pub fn verify_n_set(domain: &PlanarDomain, sample_count: usize, radii: &[f64], seed: u64) -> Result<NSetReport> {
    if sample_count == 0 {
        return Err(Error::Precondition("sample_count must be at least 1".into()));
    }
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::Precondition("radii must be a nonempty list in (0, 1]".into()));
    }
    let (lo, hi) = domain.bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sample_count + domain.vertices.len());
    let mut attempts = 0usize;
    while points.len() < sample_count {
        attempts += 1;
        if attempts > 1000 * sample_count {
            return Err(Error::Precondition("could not sample interior points".into()));
        }
        let p = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if domain.contains(p) {
            points.push(p);
        }
    }
    points.extend_from_slice(&domain.vertices);

    let best = points
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, &x)| {
            radii
                .iter()
                .enumerate()
                .map(move |(k, &r)| (n_set_ratio(domain, x, r), i, k))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))))
        .expect("nonempty sample set");
    Ok(NSetReport {
        min_ratio: best.0,
        x: points[best.1],
        r: radii[best.2],
    })
}
