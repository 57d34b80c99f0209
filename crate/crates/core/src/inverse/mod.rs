//! Inverse-problem experiments: singular probes at exterior corkscrew
//! points, pointwise recovery of boundary conductivity differences, and the
//! stability curves.

mod stability;

pub use stability::{
    boundary_stability_curve, direct_stability_constant, direct_stability_experiment, domain_stability_experiment,
    log_quotient_solve, potential_difference_norm, sampled_bounds, schrodinger_dtn_gap, sup_difference,
    ConductivityPair, DtnGap, LogQuotient,
};

use rayon::prelude::*;

use crate::conductivity::ConductivityField;
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness_values, solve_with_boundary};
use crate::fit::{fit_line, LineFit};
use crate::geometry::{find_corkscrew_point, CorkscrewCertificate, PlanarDomain, Point};
use crate::mesh::Mesh;
use crate::report::ExperimentReport;
use crate::trace::{quad, DtnOperator};

/// Discretely γ-harmonic function with a dipole singularity at an exterior
/// point `z`.
#[derive(Clone, Debug)]
pub struct SingularProbe {
    pub z: Point,
    /// Unit dipole direction, pointing from `z` towards its nearest
    /// boundary point.
    pub direction: Point,
    pub u: Vec<f64>,
    /// `‖(A_γ u)_I‖∞ / (‖A_γ‖∞ ‖u‖∞)`.
    pub residual: f64,
    /// Mean `|∇u|` on `Ω ∩ B_{2d}(z)` divided by its mean on `Ω ∖ B_{4d}(z)`
    /// (infinite when the far region is empty).
    pub concentration: f64,
}

/// Dipole potential `((x − z)·d) / (2π|x − z|²)`, the directional
/// derivative of the fundamental solution; harmonic away from `z`. Its
/// gradient decays like `|x − z|^{-2}`, the rate the recovery quotient is
/// normalized for.
pub fn dipole(z: Point, d: Point, x: Point) -> f64 {
    let v = x - z;
    v.dot(d) / (2.0 * std::f64::consts::PI * v.dot(v))
}

/// `u = Φ/γ(x0*) + w`, where `Φ` is the dipole at `z`, `x0*` the boundary
/// point nearest to `z`, and `w ∈ H¹₀` removes the discrete γ-harmonicity
/// defect of the first term.
pub fn build_singular_probe(mesh: &Mesh, domain: &PlanarDomain, gamma: &ConductivityField, z: Point) -> Result<SingularProbe> {
    if domain.contains(z) {
        return Err(Error::Geometry(format!("singularity ({}, {}) lies inside the domain", z.x, z.y)));
    }
    let d = domain.distance_to_boundary(z);
    let h = mesh.h_max();
    if d < 2.0 * h {
        return Err(Error::Geometry(format!(
            "singularity at distance {d:.3e} from the boundary is not resolved by h = {h:.3e}"
        )));
    }
    let (x0, _, _) = domain.closest_boundary_point(z);
    let direction = (1.0 / (x0 - z).norm()) * (x0 - z);
    let scale = 1.0 / gamma.eval(x0);
    let phi = mesh.interpolate(|x| scale * dipole(z, direction, x));

    let coeff = gamma.centroid_values(mesh)?;
    let a = assemble_stiffness_values(mesh, &coeff);
    let aphi = a.mul_vec(&phi);
    let rhs: Vec<f64> = mesh.interior_indices.iter().map(|&i| -aphi[i]).collect();
    let w = solve_with_boundary(mesh, &a, &vec![0.0; mesh.n_boundary()], Some(&rhs))?;
    let u: Vec<f64> = phi.iter().zip(&w).map(|(p, w)| p + w).collect();

    let au = a.mul_vec(&u);
    let defect = mesh.interior_indices.iter().map(|&i| au[i].abs()).fold(0.0, f64::max);
    let a_norm = (0..a.nrows()).map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let u_norm = u.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let residual = if defect == 0.0 { 0.0 } else { defect / (a_norm * u_norm) };

    let (mut near, mut far) = ((0.0, 0usize), (0.0, 0usize));
    for t in 0..mesh.triangles.len() {
        let r = mesh.centroid(t).dist(z);
        let g = mesh.gradient(t, &u).norm();
        if r < 2.0 * d {
            near = (near.0 + g, near.1 + 1);
        } else if r > 4.0 * d {
            far = (far.0 + g, far.1 + 1);
        }
    }
    if near.1 == 0 {
        return Err(Error::Geometry("no element lies within twice the singularity distance".into()));
    }
    let concentration = if far.1 == 0 {
        f64::INFINITY
    } else {
        (near.0 / near.1 as f64) / (far.0 / far.1 as f64)
    };
    if !(concentration > 1.0) {
        return Err(Error::Invariant(format!("probe gradient does not concentrate near z (ratio {concentration})")));
    }
    Ok(SingularProbe {
        z,
        direction,
        u,
        residual,
        concentration,
    })
}

/// Exterior points `z_k` approaching the boundary point `x0`, one per
/// scale `2^{-k}`, with `σ_k = |z_k − x0|` strictly decreasing.
#[derive(Clone, Debug)]
pub struct RecoverySchedule {
    pub x0: Point,
    pub k_range: Vec<i32>,
    pub sigma: Vec<f64>,
    pub certificates: Vec<CorkscrewCertificate>,
}

impl RecoverySchedule {
    /// Scales `r = 2^{-k}` for `k` in `k_range`; each yields a corkscrew
    /// certificate in `B_r(x0)`.
    pub fn new(domain: &PlanarDomain, x0: Point, k_range: &[i32]) -> Result<Self> {
        if k_range.is_empty() || k_range.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("k range must be nonempty and increasing".into()));
        }
        let certificates = k_range
            .iter()
            .map(|&k| find_corkscrew_point(domain, x0, 2f64.powi(-k)))
            .collect::<Result<Vec<_>>>()?;
        let sigma: Vec<f64> = certificates.iter().map(|c| c.z.dist(c.x0)).collect();
        let schedule = RecoverySchedule {
            x0: certificates[0].x0,
            k_range: k_range.to_vec(),
            sigma,
            certificates,
        };
        schedule.validate(domain)?;
        Ok(schedule)
    }

    /// Every integer scale from the largest admissible one (`2^{-k} <
    /// diam/2`) down to the last with `σ_k ≥ 4h`.
    pub fn for_resolution(domain: &PlanarDomain, x0: Point, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Config("resolution must be positive".into()));
        }
        let mut k = (2.0 / domain.diam).log2().floor() as i32 + 1;
        while 2f64.powi(-k) >= domain.diam / 2.0 {
            k += 1;
        }
        let mut ks = Vec::new();
        loop {
            let c = find_corkscrew_point(domain, x0, 2f64.powi(-k))?;
            if c.z.dist(c.x0) < 4.0 * h {
                break;
            }
            ks.push(k);
            k += 1;
        }
        if ks.is_empty() {
            return Err(Error::Config(format!("no scale admits σ ≥ 4h with h = {h}")));
        }
        Self::new(domain, x0, &ks)
    }

    pub fn validate(&self, domain: &PlanarDomain) -> Result<()> {
        if self.sigma.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Invariant("σ_k must be strictly decreasing".into()));
        }
        if let Some(c) = self.certificates.iter().find(|c| !c.verify(domain)) {
            return Err(Error::Invariant(format!("corkscrew certificate at r = {} does not verify", c.r)));
        }
        Ok(())
    }
}

/// One schedule entry of a recovery run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryRow {
    pub k: i32,
    pub sigma: f64,
    /// `d(z_k, ∂Ω)`.
    pub rho: f64,
    /// `⟨(Λ1 − Λ2) Tr u1, Tr u2⟩`.
    pub numerator: f64,
    /// `Σ_T ∇u1·∇u2 |T|`.
    pub denominator: f64,
    pub quotient: f64,
}

#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub x0: Point,
    pub estimate: f64,
    pub fit: Option<LineFit>,
    pub rows: Vec<RecoveryRow>,
    /// Schedule entries whose probes could not be built, with the reason.
    pub skipped: Vec<(i32, String)>,
}

impl RecoveryResult {
    pub fn to_report(&self, h: f64) -> ExperimentReport {
        let mut r = ExperimentReport::new("boundary-recover", &["k", "sigma", "rho", "numerator", "denominator", "quotient"]);
        r.set_meta("x0", format!("{:?},{:?}", self.x0.x, self.x0.y));
        r.set_meta("h", h);
        for row in &self.rows {
            r.push_row(vec![row.k as f64, row.sigma, row.rho, row.numerator, row.denominator, row.quotient]);
        }
        r.set_scalar("estimate", self.estimate);
        let sig = self.rows.iter().map(|r| r.sigma);
        r.set_scalar("sigma_min", sig.clone().fold(f64::INFINITY, f64::min));
        r.set_scalar("sigma_max", sig.fold(0.0, f64::max));
        if let Some(f) = self.fit {
            r.set_scalar("fit_slope", f.slope);
        }
        if !self.skipped.is_empty() {
            let ks: Vec<String> = self.skipped.iter().map(|(k, _)| k.to_string()).collect();
            r.set_meta("skipped_k", ks.join(" "));
        }
        r
    }
}

/// Estimates `(γ1 − γ2)(x0)` from the two DtN maps. For each schedule
/// entry the probes `u_i` (γ_i-harmonic, singular at `z_k`) give
/// `Q_k = ⟨(Λ1 − Λ2) Tr u1, Tr u2⟩ / Σ_T ∇u1·∇u2 |T|`; by the discrete
/// Alessandrini identity this is an average of `γ1 − γ2` weighted towards
/// `z_k`. The estimate is the intercept of a least-squares line through
/// `(σ_k, Q_k)`.
#[allow(clippy::too_many_arguments)]
pub fn boundary_recovery(
    mesh: &Mesh,
    domain: &PlanarDomain,
    l1: &DtnOperator,
    l2: &DtnOperator,
    gamma1: &ConductivityField,
    gamma2: &ConductivityField,
    schedule: &RecoverySchedule,
) -> Result<RecoveryResult> {
    schedule.validate(domain)?;
    if l1.dim() != mesh.n_boundary() || l2.dim() != mesh.n_boundary() {
        return Err(Error::Precondition("DtN operators do not match the mesh".into()));
    }
    let diff = &l1.matrix - &l2.matrix;
    let outcomes: Vec<(i32, Result<RecoveryRow>)> = schedule
        .certificates
        .par_iter()
        .zip(&schedule.k_range)
        .zip(&schedule.sigma)
        .map(|((cert, &k), &sigma)| {
            let row = (|| {
                let p1 = build_singular_probe(mesh, domain, gamma1, cert.z)?;
                let p2 = build_singular_probe(mesh, domain, gamma2, cert.z)?;
                let numerator = quad(&diff, &mesh.trace_of(&p2.u), &mesh.trace_of(&p1.u));
                let denominator: f64 = (0..mesh.triangles.len())
                    .map(|t| mesh.gradient(t, &p1.u).dot(mesh.gradient(t, &p2.u)) * mesh.area(t))
                    .sum();
                if !(denominator > 0.0) {
                    return Err(Error::Invariant("probe energy pairing is not positive".into()));
                }
                Ok(RecoveryRow {
                    k,
                    sigma,
                    rho: cert.rho(domain),
                    numerator,
                    denominator,
                    quotient: numerator / denominator,
                })
            })();
            (k, row)
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (k, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e @ (Error::Geometry(_) | Error::Solver(_))) => {
                log::warn!("recovery scale k = {k} skipped: {e}");
                skipped.push((k, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let (estimate, fit) = match rows.len() {
        0 => return Err(Error::Geometry("no schedule entry admits a resolvable probe".into())),
        1 => (rows[0].quotient, None),
        _ => {
            let s: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
            let q: Vec<f64> = rows.iter().map(|r| r.quotient).collect();
            let f = fit_line(&s, &q)?;
            (f.intercept, Some(f))
        }
    };
    Ok(RecoveryResult {
        x0: schedule.x0,
        estimate,
        fit,
        rows,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conductivity::Bump;
    use crate::geometry::{generate_prefractal, PrefractalSpec};
    use crate::mesh::triangulate;
    use crate::trace::assemble_dtn;

    fn square(h: f64) -> (PlanarDomain, Mesh) {
        let d = generate_prefractal(&PrefractalSpec::unit_square()).unwrap();
        let m = triangulate(&d, h).unwrap();
        (d, m)
    }

    #[test]
    fn dipole_is_harmonic() {
        let (z, d) = (Point::new(0.3, -0.2), Point::new(0.6, 0.8));
        let x = Point::new(0.7, 0.4);
        let e = 1e-3;
        let f = |dx: f64, dy: f64| dipole(z, d, Point::new(x.x + dx, x.y + dy));
        let lap = (f(e, 0.0) + f(-e, 0.0) + f(0.0, e) + f(0.0, -e) - 4.0 * f(0.0, 0.0)) / (e * e);
        assert!(lap.abs() < 1e-4 * f(0.0, 0.0).abs());
    }

    #[test]
    fn probe_homogeneity_and_residual() {
        let (d, m) = square(0.08);
        let z = Point::new(0.5, -0.3);
        let one = build_singular_probe(&m, &d, &ConductivityField::constant(1.0).unwrap(), z).unwrap();
        let three = build_singular_probe(&m, &d, &ConductivityField::constant(3.0).unwrap(), z).unwrap();
        let scale = one.u.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in one.u.iter().zip(&three.u) {
            assert!((a / 3.0 - b).abs() <= 1e-12 * scale);
        }
        assert!(one.residual <= 1e-9);
        assert!(one.concentration > 1.0);
        assert!((one.direction.y - 1.0).abs() < 1e-12);
        assert!(matches!(
            build_singular_probe(&m, &d, &ConductivityField::constant(1.0).unwrap(), Point::new(0.5, 0.5)),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            build_singular_probe(&m, &d, &ConductivityField::constant(1.0).unwrap(), Point::new(0.5, -0.01)),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn bump_probe_is_harmonic() {
        let (d, m) = square(0.08);
        let g = ConductivityField::bumps(1.0, vec![Bump::new(Point::new(0.5, 0.1), 0.3, 0.5)]).unwrap();
        let p = build_singular_probe(&m, &d, &g, Point::new(0.5, -0.3)).unwrap();
        assert!(p.residual <= 1e-8);
    }

    #[test]
    fn schedule_is_decreasing_and_certified() {
        let (d, _) = square(0.1);
        let s = RecoverySchedule::for_resolution(&d, Point::new(0.5, 0.0), 0.01).unwrap();
        assert_eq!(s.k_range, vec![1, 2, 3]);
        assert!(s.sigma.windows(2).all(|w| w[1] < w[0]));
        assert!(*s.sigma.last().unwrap() >= 0.04);
        assert!(s.certificates.iter().all(|c| c.verify(&d)));
        assert!(RecoverySchedule::new(&d, Point::new(0.5, 0.0), &[2, 1]).is_err());
    }

    #[test]
    fn identical_and_constant_pairs() {
        let (d, m) = square(0.05);
        let g1 = ConductivityField::constant(1.0).unwrap();
        let g2 = ConductivityField::constant(1.1).unwrap();
        let l1 = assemble_dtn(&m, &g1).unwrap();
        let l2 = assemble_dtn(&m, &g2).unwrap();
        let s = RecoverySchedule::for_resolution(&d, Point::new(0.5, 0.0), 0.05).unwrap();
        let same = boundary_recovery(&m, &d, &l1, &l1, &g1, &g1, &s).unwrap();
        assert_eq!(same.estimate, 0.0);
        let r = boundary_recovery(&m, &d, &l2, &l1, &g2, &g1, &s).unwrap();
        assert!((r.estimate - 0.1).abs() < 1e-9, "{}", r.estimate);
    }
}
