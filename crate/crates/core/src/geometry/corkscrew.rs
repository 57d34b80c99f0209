use super::{segment_distance, PlanarDomain, Point};
use crate::error::{Error, Result};

/// Exterior point `z` near the boundary point `x0` certifying
/// `delta * r < d(z, ∂Ω) <= |z - x0| < r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorkscrewCertificate {
    pub x0: Point,
    pub r: f64,
    pub z: Point,
    pub delta: f64,
}

impl CorkscrewCertificate {
    /// Recomputes the three inequalities from scratch against `domain`.
    pub fn verify(&self, domain: &PlanarDomain) -> bool {
        let d = domain.distance_to_boundary(self.z);
        let dz = self.z.dist(self.x0);
        !domain.contains(self.z)
            && self.delta * self.r < d
            && d <= dz * (1.0 + 4.0 * f64::EPSILON)
            && dz < self.r
    }

    /// Distance from `z` to the boundary.
    pub fn rho(&self, domain: &PlanarDomain) -> f64 {
        domain.distance_to_boundary(self.z)
    }
}

const GRID: usize = 33;

/// Grid search over `B_r(x0)` outside the polygon for the point maximizing
/// `min(d(z, ∂Ω), r - |z - x0|)`, i.e. the centre of the largest exterior
/// disk that fits in the ball; refined once around the best cell.
pub fn find_corkscrew_point(domain: &PlanarDomain, x0: Point, r: f64) -> Result<CorkscrewCertificate> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Precondition(format!("radius must be positive, got {r}")));
    }
    if r >= domain.diam / 2.0 {
        return Err(Error::Precondition(format!(
            "radius {r} must be smaller than diam/2 = {}",
            domain.diam / 2.0
        )));
    }
    let scale = domain.diam.max(1.0);
    if domain.distance_to_boundary(x0) > 1e-12 * scale {
        return Err(Error::Precondition(format!(
            "x0 = ({}, {}) is not on the boundary",
            x0.x, x0.y
        )));
    }
    let x0 = domain.closest_boundary_point(x0).0;

    // Only segments within 2r of x0 can realize d(z, ∂Ω) for z in B_r(x0).
    let local: Vec<(Point, Point)> = domain
        .segments()
        .filter(|&(a, b)| segment_distance(x0, a, b) < 2.0 * r)
        .collect();
    let dist = |z: Point| {
        local
            .iter()
            .map(|&(a, b)| segment_distance(z, a, b))
            .fold(f64::INFINITY, f64::min)
    };
    let score = |z: Point| -> Option<(f64, f64)> {
        let dz = z.dist(x0);
        if dz >= r || domain.contains(z) {
            return None;
        }
        let d = dist(z);
        if d <= 0.0 {
            return None;
        }
        Some((d.min(r - dz), d))
    };

    let mut best: Option<(f64, Point)> = None;
    let search = |center: Point, half: f64, best: &mut Option<(f64, Point)>| {
        let step = 2.0 * half / (GRID - 1) as f64;
        for i in 0..GRID {
            for j in 0..GRID {
                let z = Point::new(center.x - half + i as f64 * step, center.y - half + j as f64 * step);
                if let Some((s, _)) = score(z) {
                    if best.map_or(true, |(b, _)| s > b) {
                        *best = Some((s, z));
                    }
                }
            }
        }
        step
    };
    let step = search(x0, r, &mut best);
    if let Some((_, z)) = best {
        search(z, step, &mut best);
    }

    let Some((_, z)) = best else {
        return Err(Error::CorkscrewFailure(format!(
            "no exterior point in B_r(x0) for r = {r}"
        )));
    };
    let d = domain.distance_to_boundary(z);
    if d <= 1e-3 * r {
        return Err(Error::CorkscrewFailure(format!(
            "best exterior distance {d} does not exceed 1e-3·r"
        )));
    }
    let cert = CorkscrewCertificate {
        x0,
        r,
        z,
        delta: d / r * (1.0 - 1e-12),
    };
    if !cert.verify(domain) {
        return Err(Error::CorkscrewFailure(format!(
            "certificate at z = ({}, {}) failed re-verification",
            z.x, z.y
        )));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_prefractal, PrefractalSpec};

    #[test]
    fn flat_edge_of_square() {
        let d = generate_prefractal(&PrefractalSpec::unit_square()).unwrap();
        let c = find_corkscrew_point(&d, Point::new(0.5, 0.0), 0.1).unwrap();
        assert!((c.z.x - 0.5).abs() < 1e-12);
        assert!((c.z.y + 0.05).abs() < 1e-12);
        assert!((c.delta - 0.5).abs() < 1e-9);
        assert!(c.verify(&d));
    }

    #[test]
    fn snowflake_convex_corner() {
        let d = generate_prefractal(&PrefractalSpec::snowflake(2)).unwrap();
        for &i in &d.convex_corners() {
            let c = find_corkscrew_point(&d, d.vertices[i], 0.05).unwrap();
            assert!(c.delta >= 0.1, "corner {i}: delta {}", c.delta);
            assert!(c.verify(&d));
        }
    }

    #[test]
    fn preconditions() {
        let d = generate_prefractal(&PrefractalSpec::unit_square()).unwrap();
        assert!(matches!(
            find_corkscrew_point(&d, Point::new(0.5, 0.0), 2.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            find_corkscrew_point(&d, Point::new(0.5, 0.5), 0.1),
            Err(Error::Precondition(_))
        ));
    }
}
