//! Remainders `R` of CGO solutions `e^{ξ·x}(1 + R)` of `−Δv + qv = 0`.
//!
//! `R` solves `−ΔR − 2ξ·∇R + qR = −q`, posed on a box aligned with `ω1`
//! that is antiperiodic along `ω1` and periodic across it. With ξ·ξ = 0 the
//! operator's Fourier symbol `|k|² − 2iξ·k` then never vanishes (its
//! imaginary part is `2τ k·ω1 ≠ 0` on the antiperiodic lattice), so the box
//! problem inherits the free-space `1/|ξ|` decay. Zero Dirichlet conditions
//! do not: the exponential weight turns the truncation into a boundary
//! layer whose size grows with τ.

use faer::c64;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;

use super::PotentialField;
use crate::error::{Error, Result};
use crate::fit::fit_loglog;
use crate::geometry::{PlanarDomain, Point};
use crate::report::ExperimentReport;

/// `ξ = τ(ω1 + iω2)` with orthonormal real `ω1`, `ω2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexFrequency {
    pub tau: f64,
    pub omega1: Point,
    pub omega2: Point,
}

impl ComplexFrequency {
    pub fn new(tau: f64, omega1: Point, omega2: Point) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Precondition(format!("τ must be positive, got {tau}")));
        }
        let ok = (omega1.norm() - 1.0).abs() < 1e-12
            && (omega2.norm() - 1.0).abs() < 1e-12
            && omega1.dot(omega2).abs() < 1e-12;
        if !ok {
            return Err(Error::Precondition("ω1, ω2 must be orthonormal".into()));
        }
        Ok(ComplexFrequency { tau, omega1, omega2 })
    }

    /// `ω1 = (cos θ, sin θ)`, `ω2 = ω1` rotated by +90°.
    pub fn from_angle(tau: f64, theta: f64) -> Result<Self> {
        let (s, c) = theta.sin_cos();
        Self::new(tau, Point::new(c, s), Point::new(-s, c))
    }

    pub fn xi(&self) -> [c64; 2] {
        [
            c64::new(self.tau * self.omega1.x, self.tau * self.omega2.x),
            c64::new(self.tau * self.omega1.y, self.tau * self.omega2.y),
        ]
    }

    /// Bilinear `ξ·ξ`, zero up to rounding.
    pub fn dot_self(&self) -> c64 {
        let [a, b] = self.xi();
        a * a + b * b
    }

    /// `|ξ| = τ√2`.
    pub fn abs(&self) -> f64 {
        let [a, b] = self.xi();
        (a.norm_sqr() + b.norm_sqr()).sqrt()
    }

    pub fn conj(&self) -> Self {
        ComplexFrequency {
            omega2: -1.0 * self.omega2,
            ..*self
        }
    }
}

/// Structured box in the frame `(e1, e2) = (ω1, ω1 rotated by 90°)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CgoBox {
    pub center: Point,
    pub e1: Point,
    pub e2: Point,
    pub half: [f64; 2],
    pub cells: [usize; 2],
}

impl CgoBox {
    /// Bounding box of `domain` in the frame, inflated by 50%, with cell
    /// size at most `h`.
    pub fn around(domain: &PlanarDomain, omega1: Point, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Precondition("box spacing must be positive".into()));
        }
        let e1 = omega1;
        let e2 = Point::new(-omega1.y, omega1.x);
        let proj = |e: Point| {
            domain
                .vertices
                .iter()
                .map(|p| p.dot(e))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (s0, s1) = proj(e1);
        let (t0, t1) = proj(e2);
        let half = [0.75 * (s1 - s0), 0.75 * (t1 - t0)];
        let center = (0.5 * (s0 + s1)) * e1 + (0.5 * (t0 + t1)) * e2;
        let cells = [(2.0 * half[0] / h).ceil() as usize, (2.0 * half[1] / h).ceil() as usize];
        if cells[0] * cells[1] > 4_000_000 {
            return Err(Error::SizeLimit(format!("CGO box with {cells:?} cells")));
        }
        Ok(CgoBox {
            center,
            e1,
            e2,
            half,
            cells,
        })
    }

    pub fn spacing(&self) -> [f64; 2] {
        [2.0 * self.half[0] / self.cells[0] as f64, 2.0 * self.half[1] / self.cells[1] as f64]
    }

    pub fn n_dofs(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Physical position of lattice point `(i, j)` (unwrapped).
    pub fn position(&self, i: usize, j: usize) -> Point {
        let [hs, ht] = self.spacing();
        let s = -self.half[0] + i as f64 * hs;
        let t = -self.half[1] + j as f64 * ht;
        self.center + s * self.e1 + t * self.e2
    }

    /// Degree of freedom of lattice point `(i, j)` and the sign picked up by
    /// wrapping across the antiperiodic seam.
    fn dof(&self, i: usize, j: usize) -> (usize, f64) {
        let [ns, nt] = self.cells;
        let sign = if i >= ns { -1.0 } else { 1.0 };
        ((i % ns) + (j % nt) * ns, sign)
    }
}

/// Remainder on the box lattice, with diagnostics.
#[derive(Clone, Debug)]
pub struct CgoSolution {
    pub xi: ComplexFrequency,
    pub grid: CgoBox,
    /// Values at lattice points `i + j·ns`.
    pub r: Vec<c64>,
    /// `‖K R − b‖ / ‖b‖` of the assembled system.
    pub residual: f64,
    /// `‖R‖_{L²(Ω)}` by lumped quadrature over triangles centred in Ω.
    pub norm_r: f64,
}

/// Solves the remainder equation for `q` (extended by zero outside
/// `domain`) on a quasi-periodic box of spacing at most `h`.
pub fn solve_cgo_remainder(domain: &PlanarDomain, q: &PotentialField, xi: &ComplexFrequency, h: f64) -> Result<CgoSolution> {
    let grid = CgoBox::around(domain, xi.omega1, h)?;
    let [ns, nt] = grid.cells;
    let [hs, ht] = grid.spacing();
    let n = grid.n_dofs();
    let sigma = xi.omega2.dot(grid.e2).signum();

    let mut qv = vec![0.0; n];
    for j in 0..nt {
        for i in 0..ns {
            qv[i + j * ns] = q.eval_extended(domain, grid.position(i, j))?;
        }
    }
    let mass = hs * ht;
    let b: Vec<c64> = qv.iter().map(|&q| c64::new(-q * mass, 0.0)).collect();
    let bnorm = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok(CgoSolution {
            xi: *xi,
            grid,
            r: vec![c64::new(0.0, 0.0); n],
            residual: 0.0,
            norm_r: 0.0,
        });
    }

    // Two triangles per cell in local (s, t) coordinates; ξ·∇ = τ(∂s + iσ∂t).
    let area = 0.5 * hs * ht;
    let local: [[(usize, usize); 3]; 2] = [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]];
    let grads = local.map(|tri| {
        let p = tri.map(|(a, b)| Point::new(a as f64 * hs, b as f64 * ht));
        let twice = (p[1] - p[0]).cross(p[2] - p[0]);
        let perp = |e: Point| Point::new(-e.y / twice, e.x / twice);
        [perp(p[2] - p[1]), perp(p[0] - p[2]), perp(p[1] - p[0])]
    });
    let mut kloc = [[[c64::new(0.0, 0.0); 3]; 3]; 2];
    for k in 0..2 {
        for a in 0..3 {
            for bb in 0..3 {
                let g = grads[k][bb];
                let conv = c64::new(xi.tau * g.x, xi.tau * sigma * g.y);
                kloc[k][a][bb] = c64::new(area * grads[k][a].dot(g), 0.0) - conv * (2.0 * area / 3.0);
            }
        }
    }
    let mut trips: Vec<Triplet<usize, usize, c64>> = Vec::with_capacity(18 * ns * nt + n);
    for j in 0..nt {
        for i in 0..ns {
            for k in 0..2 {
                let dofs = local[k].map(|(di, dj)| grid.dof(i + di, j + dj));
                for a in 0..3 {
                    for bb in 0..3 {
                        let s = dofs[a].1 * dofs[bb].1;
                        trips.push(Triplet::new(dofs[a].0, dofs[bb].0, kloc[k][a][bb] * s));
                    }
                }
            }
        }
    }
    for (i, &q) in qv.iter().enumerate() {
        if q != 0.0 {
            trips.push(Triplet::new(i, i, c64::new(q * mass, 0.0)));
        }
    }
    let k = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| Error::Solver(format!("CGO assembly failed: {e:?}")))?;
    let lu = k.sp_lu().map_err(|e| Error::Solver(format!("CGO factorization failed: {e:?}")))?;
    let mut x = Mat::<c64>::from_fn(n, 1, |i, _| b[i]);
    lu.solve_in_place(x.as_mut());
    let mut r: Vec<c64> = (0..n).map(|i| x[(i, 0)]).collect();

    let residual_of = |r: &[c64]| -> Vec<c64> {
        let mut res = b.clone();
        for t in &trips {
            res[t.row] -= t.val * r[t.col];
        }
        res
    };
    let mut res = residual_of(&r);
    let mut rel = res.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / bnorm;
    if rel > 1e-10 {
        // One step of iterative refinement.
        let mut d = Mat::<c64>::from_fn(n, 1, |i, _| res[i]);
        lu.solve_in_place(d.as_mut());
        r.iter_mut().enumerate().for_each(|(i, v)| *v += d[(i, 0)]);
        res = residual_of(&r);
        rel = res.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / bnorm;
    }
    if !(rel <= 1e-10) {
        return Err(Error::Solver(format!("CGO solve reached relative residual {rel:.3e} only")));
    }

    let mut norm2 = 0.0;
    for j in 0..nt {
        for i in 0..ns {
            for tri in &local {
                let pts = tri.map(|(di, dj)| grid.position(i + di, j + dj));
                let c = Point::new((pts[0].x + pts[1].x + pts[2].x) / 3.0, (pts[0].y + pts[1].y + pts[2].y) / 3.0);
                if domain.contains(c) {
                    norm2 += area / 3.0
                        * tri.iter().map(|&(di, dj)| r[grid.dof(i + di, j + dj).0].norm_sqr()).sum::<f64>();
                }
            }
        }
    }
    Ok(CgoSolution {
        xi: *xi,
        grid,
        r,
        residual: rel,
        norm_r: norm2.sqrt(),
    })
}

/// Sweep over `taus` reporting `tau, abs_xi, norm_R, residual`. The decay
/// slope is fitted over rows with `|ξ| > ‖q‖∞`; rows with `|ξ| ≤ ‖q‖∞`
/// give the small-frequency plateau constant `max ‖R‖ / ‖q‖∞`.
pub fn cgo_decay_experiment(domain: &PlanarDomain, q: &PotentialField, taus: &[f64], h: f64, theta: f64) -> Result<ExperimentReport> {
    if taus.len() < 4 || taus.windows(2).any(|w| !(w[1] > w[0])) || taus[0] <= 0.0 {
        return Err(Error::Config("τ list must be positive, increasing and have at least 4 entries".into()));
    }
    let tau_max = *taus.last().expect("nonempty");
    if h * tau_max > 0.5 {
        return Err(Error::Config(format!(
            "resolution h·τ_max = {} exceeds 0.5",
            h * tau_max
        )));
    }
    let rows: Vec<(f64, CgoSolution)> = taus
        .par_iter()
        .map(|&tau| {
            let xi = ComplexFrequency::from_angle(tau, theta)?;
            Ok((tau, solve_cgo_remainder(domain, q, &xi, h)?))
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new("cgo-decay", &["tau", "abs_xi", "norm_R", "residual"]);
    report.set_meta("h", h);
    report.set_meta("direction_angle", theta);
    report.set_scalar("q_sup", q.sup_bound);
    for (tau, sol) in &rows {
        report.push_row(vec![*tau, sol.xi.abs(), sol.norm_r, sol.residual]);
    }
    if q.is_zero() {
        report.set_meta("degenerate", "true");
        report.set_scalar("slope", f64::NAN);
        return Ok(report);
    }
    let large: Vec<&(f64, CgoSolution)> = rows.iter().filter(|(_, s)| s.xi.abs() > q.sup_bound).collect();
    let fit_rows: Vec<&(f64, CgoSolution)> = if large.len() >= 2 { large } else { rows.iter().collect() };
    let xs: Vec<f64> = fit_rows.iter().map(|(_, s)| s.xi.abs()).collect();
    let ys: Vec<f64> = fit_rows.iter().map(|(_, s)| s.norm_r).collect();
    let fit = fit_loglog(&xs, &ys)?;
    report.set_scalar("slope", fit.slope);
    report.set_scalar("r_squared", fit.r_squared);
    report.set_scalar("fit_rows", xs.len() as f64);
    let plateau = rows
        .iter()
        .filter(|(_, s)| s.xi.abs() <= q.sup_bound)
        .map(|(_, s)| s.norm_r / q.sup_bound)
        .fold(f64::NAN, f64::max);
    report.set_scalar("plateau_constant", plateau);
    let decay_constant = rows
        .iter()
        .map(|(_, s)| s.norm_r * s.xi.abs() / q.sup_bound)
        .fold(0.0, f64::max);
    report.set_scalar("decay_constant", decay_constant);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conductivity::{Bump, ConductivityField};
    use crate::geometry::{generate_prefractal, PrefractalSpec};
    use crate::mesh::rectangle_mesh;
    use crate::schrodinger::{compute_q, PotentialSource};

    fn setup(amplitude: f64) -> (PlanarDomain, PotentialField) {
        let sq = generate_prefractal(&PrefractalSpec::unit_square()).unwrap();
        let g = ConductivityField::collar(1.0, vec![Bump::new(Point::new(0.5, 0.5), 0.3, amplitude)], &sq).unwrap();
        let m = rectangle_mesh(Point::new(0.0, 0.0), Point::new(1.0, 1.0), 8, 8).unwrap();
        (sq, compute_q(&m, &g, PotentialSource::Analytic).unwrap())
    }

    #[test]
    fn frequency_invariants() {
        let xi = ComplexFrequency::from_angle(7.0, 0.3).unwrap();
        assert!(xi.dot_self().norm() <= 1e-14 * xi.abs().powi(2));
        assert!((xi.abs() - 7.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(ComplexFrequency::new(1.0, Point::new(1.0, 0.0), Point::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn zero_potential_gives_zero_remainder() {
        let (sq, q) = setup(0.0);
        let xi = ComplexFrequency::from_angle(5.0, 0.0).unwrap();
        let sol = solve_cgo_remainder(&sq, &q, &xi, 0.05).unwrap();
        assert!(sol.r.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn conjugate_frequency_conjugates_remainder() {
        let (sq, q) = setup(0.1);
        let xi = ComplexFrequency::from_angle(4.0, 0.0).unwrap();
        let a = solve_cgo_remainder(&sq, &q, &xi, 0.05).unwrap();
        let b = solve_cgo_remainder(&sq, &q, &xi.conj(), 0.05).unwrap();
        let scale = a.r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        for (x, y) in a.r.iter().zip(&b.r) {
            assert!((x.conj() - y).norm() <= 1e-12 * scale);
        }
        assert!(a.residual <= 1e-10);
    }

    #[test]
    fn decay_sweep_rejects_bad_configs() {
        let (sq, q) = setup(0.1);
        assert!(matches!(cgo_decay_experiment(&sq, &q, &[1.0, 2.0, 3.0], 0.05, 0.0), Err(Error::Config(_))));
        assert!(matches!(
            cgo_decay_experiment(&sq, &q, &[1.0, 2.0, 3.0, 40.0], 0.05, 0.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(cgo_decay_experiment(&sq, &q, &[1.0, 3.0, 2.0, 4.0], 0.05, 0.0), Err(Error::Config(_))));
    }
}
