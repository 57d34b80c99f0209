//! Scalar conductivities γ with the bounds and derivatives the experiments need.

use std::fmt;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geometry::{PlanarDomain, Point};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConductivityKind {
    AnalyticExpression,
    RadialBump,
    PiecewiseSmoothCollar,
}

/// `amplitude * (1 - |x - center|² / radius²)⁴` inside the disk, zero outside.
/// The profile is C³ across the support boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

/// `sup_s 8 s (1 - s²)³`, the peak of |∇ψ| for a unit bump of unit radius
/// (attained at s² = 1/7).
fn bump_slope_peak() -> f64 {
    let s = (1.0f64 / 7.0).sqrt();
    8.0 * s * (1.0 - s * s).powi(3)
}

impl Bump {
    pub fn new(center: Point, radius: f64, amplitude: f64) -> Self {
        Bump {
            center,
            radius,
            amplitude,
        }
    }

    /// Value, gradient and Laplacian at `p`.
    fn jet(&self, p: Point) -> (f64, Point, f64) {
        let d = p - self.center;
        let rho2 = self.radius * self.radius;
        let w = d.dot(d) / rho2;
        if w >= 1.0 {
            return (0.0, Point::default(), 0.0);
        }
        let a = self.amplitude;
        let one = 1.0 - w;
        let f = one.powi(4);
        let f1 = -4.0 * one.powi(3);
        let f2 = 12.0 * one * one;
        let grad_w = (2.0 / rho2) * d;
        let lap_w = 4.0 / rho2;
        let grad_w2 = 4.0 * w / rho2;
        (a * f, (a * f1) * grad_w, a * (f2 * grad_w2 + f1 * lap_w))
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Expr {
        gamma: Expression,
        grad: [Expression; 2],
        lap_sqrt: Expression,
    },
    Bumps {
        base: f64,
        bumps: Vec<Bump>,
    },
}

/// Positive conductivity with lower bound ℓ, Lipschitz bound L and sup
/// bound, plus the width of a boundary collar on which it is constant.
#[derive(Clone, Debug)]
pub struct ConductivityField {
    pub kind: ConductivityKind,
    repr: Repr,
    pub inf_bound: f64,
    pub lip_bound: f64,
    pub sup_bound: f64,
    pub collar_width: f64,
}

impl ConductivityField {
    pub fn constant(value: f64) -> Result<Self> {
        Self::bumps(value, Vec::new())
    }

    /// `base + Σ bumps`; bounds are computed in closed form.
    pub fn bumps(base: f64, bumps: Vec<Bump>) -> Result<Self> {
        if !base.is_finite() || bumps.iter().any(|b| !(b.radius > 0.0) || !b.amplitude.is_finite()) {
            return Err(Error::Precondition("bump parameters must be finite with positive radius".into()));
        }
        let inf_bound = base + bumps.iter().map(|b| b.amplitude.min(0.0)).sum::<f64>();
        let sup_bound = base + bumps.iter().map(|b| b.amplitude.max(0.0)).sum::<f64>();
        if !(inf_bound > 0.0) {
            return Err(Error::Ellipticity(format!("lower bound {inf_bound} is not positive")));
        }
        let lip_bound = bumps
            .iter()
            .map(|b| b.amplitude.abs() / b.radius * bump_slope_peak())
            .sum();
        Ok(ConductivityField {
            kind: ConductivityKind::RadialBump,
            repr: Repr::Bumps { base, bumps },
            inf_bound,
            lip_bound,
            sup_bound,
            collar_width: 0.0,
        })
    }

    /// Bumps whose supports stay inside `domain`, so γ equals `base` on a
    /// boundary collar whose width is recorded.
    pub fn collar(base: f64, bumps: Vec<Bump>, domain: &PlanarDomain) -> Result<Self> {
        let mut field = Self::bumps(base, bumps)?;
        let Repr::Bumps { bumps, .. } = &field.repr else {
            unreachable!()
        };
        let mut width = f64::INFINITY;
        for b in bumps {
            if !domain.contains(b.center) {
                return Err(Error::Precondition("collar bump centred outside the domain".into()));
            }
            width = width.min(domain.distance_to_boundary(b.center) - b.radius);
        }
        if !(width > 0.0) {
            return Err(Error::Precondition("bump support reaches the boundary; no collar".into()));
        }
        if width.is_infinite() {
            width = domain.diam;
        }
        field.kind = ConductivityKind::PiecewiseSmoothCollar;
        field.collar_width = width;
        Ok(field)
    }

    /// Conductivity given by a formula. Bounds are estimated by sampling a
    /// 201×201 grid over `domain` together with its vertices.
    pub fn expression(gamma: Expression, domain: &PlanarDomain) -> Result<Self> {
        let grad = gamma.gradient();
        let lap_sqrt = gamma.sqrt().laplacian();
        let (lo, hi) = domain.bounding_box();
        let mut samples: Vec<Point> = domain.vertices.clone();
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let p = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / n as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / n as f64,
                );
                if domain.contains(p) {
                    samples.push(p);
                }
            }
        }
        let (mut inf, mut sup, mut lip) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for p in &samples {
            let v = gamma.eval(p.x, p.y);
            let g = Point::new(grad[0].eval(p.x, p.y), grad[1].eval(p.x, p.y)).norm();
            if !v.is_finite() || !g.is_finite() {
                return Err(Error::Ellipticity(format!("γ is not finite at ({}, {})", p.x, p.y)));
            }
            inf = inf.min(v);
            sup = sup.max(v);
            lip = lip.max(g);
        }
        if !(inf > 0.0) {
            return Err(Error::Ellipticity(format!("γ reaches {inf} ≤ 0 on the domain")));
        }
        Ok(ConductivityField {
            kind: ConductivityKind::AnalyticExpression,
            repr: Repr::Expr {
                gamma,
                grad,
                lap_sqrt,
            },
            inf_bound: inf,
            lip_bound: lip,
            sup_bound: sup,
            collar_width: 0.0,
        })
    }

    pub fn eval(&self, p: Point) -> f64 {
        match &self.repr {
            Repr::Expr { gamma, .. } => gamma.eval(p.x, p.y),
            Repr::Bumps { base, bumps } => base + bumps.iter().map(|b| b.jet(p).0).sum::<f64>(),
        }
    }

    pub fn grad(&self, p: Point) -> Point {
        match &self.repr {
            Repr::Expr { grad, .. } => Point::new(grad[0].eval(p.x, p.y), grad[1].eval(p.x, p.y)),
            Repr::Bumps { bumps, .. } => bumps.iter().fold(Point::default(), |acc, b| acc + b.jet(p).1),
        }
    }

    /// `Δ√γ` at `p`.
    pub fn lap_sqrt(&self, p: Point) -> f64 {
        match &self.repr {
            Repr::Expr { lap_sqrt, .. } => lap_sqrt.eval(p.x, p.y),
            Repr::Bumps { base, bumps } => {
                let (mut g, mut dg, mut lg) = (*base, Point::default(), 0.0);
                for b in bumps {
                    let (v, d, l) = b.jet(p);
                    g += v;
                    dg = dg + d;
                    lg += l;
                }
                let s = g.sqrt();
                lg / (2.0 * s) - dg.dot(dg) / (4.0 * g * s)
            }
        }
    }

    /// Schrödinger potential `q = Δ√γ / √γ`.
    pub fn potential(&self, p: Point) -> f64 {
        self.lap_sqrt(p) / self.eval(p).sqrt()
    }

    /// True when γ is a constant function.
    pub fn is_constant(&self) -> bool {
        match &self.repr {
            Repr::Expr { gamma, .. } => gamma.is_constant(),
            Repr::Bumps { bumps, .. } => bumps.iter().all(|b| b.amplitude == 0.0),
        }
    }

    /// Values at triangle centroids, as used by the stiffness assembly.
    pub fn centroid_values(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        let vals: Vec<f64> = (0..mesh.triangles.len()).map(|t| self.eval(mesh.centroid(t))).collect();
        if let Some((t, v)) = vals.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Ellipticity(format!("γ = {v} at the centroid of triangle {t}")));
        }
        Ok(vals)
    }

    /// Checks ℓ on vertices and, for collar fields, constancy on vertices
    /// within the collar.
    pub fn spot_check(&self, mesh: &Mesh, domain: &PlanarDomain) -> Result<()> {
        let tol = 1e-12 * self.sup_bound.max(1.0);
        let collar_value = match &self.repr {
            Repr::Bumps { base, .. } => *base,
            Repr::Expr { .. } => f64::NAN,
        };
        for &p in &mesh.vertices {
            let v = self.eval(p);
            if v < self.inf_bound - tol {
                return Err(Error::Ellipticity(format!("γ = {v} below ℓ = {}", self.inf_bound)));
            }
            if self.collar_width > 0.0
                && domain.distance_to_boundary(p) < self.collar_width
                && (v - collar_value).abs() > tol
            {
                return Err(Error::Invariant(format!("γ not constant in the collar at ({}, {})", p.x, p.y)));
            }
        }
        Ok(())
    }

    /// Value on the boundary collar, if this field has one.
    pub fn collar_value(&self) -> Option<f64> {
        match (&self.repr, self.collar_width > 0.0) {
            (Repr::Bumps { base, .. }, true) => Some(*base),
            _ => None,
        }
    }
}

impl fmt::Display for ConductivityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Expr { gamma, .. } => write!(f, "{gamma}"),
            Repr::Bumps { base, bumps } => {
                write!(f, "{base}")?;
                for b in bumps {
                    write!(
                        f,
                        " + bump(c=({}, {}), r={}, a={})",
                        b.center.x, b.center.y, b.radius, b.amplitude
                    )?;
                }
                Ok(())
            }
        }
    }
}
