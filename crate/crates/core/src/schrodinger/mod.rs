//! Conductivity-to-Schrödinger reduction `q = Δ√γ/√γ`, the conjugated DtN
//! map and complex-geometrical-optics remainders.

mod cgo;

pub use cgo::{cgo_decay_experiment, solve_cgo_remainder, CgoBox, CgoSolution, ComplexFrequency};

use faer::Mat;

use crate::conductivity::ConductivityField;
use crate::error::{Error, Result};
use crate::fem::{assemble_laplacian, lumped_masses, schur_complement, solve_dirichlet, CsrMatrix, FemSpace, SpdSolver};
use crate::geometry::{PlanarDomain, Point};
use crate::mesh::Mesh;
use crate::trace::{assemble_trace_gram, operator_norm, BoundaryGram, DtnOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialSource {
    /// `Δ√γ/√γ` from closed-form or symbolic derivatives.
    Analytic,
    /// `−(A₁ s)_k / (m_k s_k)` with `s = √γ` at vertices; boundary vertices
    /// get zero, which is exact for conductivities constant near ∂Ω.
    Discrete,
}

/// Potential `q` sampled on a mesh, with the analytic source kept when
/// available so it can be evaluated anywhere.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub vertex_values: Vec<f64>,
    pub sup_bound: f64,
    pub collar_width: f64,
    pub source: PotentialSource,
    gamma: Option<ConductivityField>,
}

impl PotentialField {
    /// Pointwise value; requires the analytic source.
    pub fn eval(&self, p: Point) -> Result<f64> {
        match &self.gamma {
            Some(g) => Ok(g.potential(p)),
            None => Err(Error::Capability("a discrete potential cannot be evaluated off its mesh".into())),
        }
    }

    /// `q` extended by zero outside `domain`.
    pub fn eval_extended(&self, domain: &PlanarDomain, p: Point) -> Result<f64> {
        if domain.contains(p) {
            self.eval(p)
        } else {
            self.eval(p).map(|_| 0.0)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_bound == 0.0
    }
}

pub fn compute_q(mesh: &Mesh, gamma: &ConductivityField, source: PotentialSource) -> Result<PotentialField> {
    let vertex_values: Vec<f64> = match source {
        PotentialSource::Analytic => mesh.vertices.iter().map(|&p| gamma.potential(p)).collect(),
        PotentialSource::Discrete => {
            let s = mesh.interpolate(|p| gamma.eval(p).sqrt());
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Ellipticity("γ must be positive at every vertex".into()));
            }
            let r = assemble_laplacian(mesh).mul_vec(&s);
            let m = lumped_masses(mesh);
            let mut q = vec![0.0; mesh.n_vertices()];
            for &k in &mesh.interior_indices {
                q[k] = -r[k] / (m[k] * s[k]);
            }
            q
        }
    };
    if vertex_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Capability("potential is not finite on the mesh".into()));
    }
    let mut sup = vertex_values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if source == PotentialSource::Analytic {
        for t in 0..mesh.triangles.len() {
            sup = sup.max(gamma.potential(mesh.centroid(t)).abs());
        }
    }
    Ok(PotentialField {
        vertex_values,
        sup_bound: sup,
        collar_width: gamma.collar_width,
        source,
        gamma: (source == PotentialSource::Analytic).then(|| gamma.clone()),
    })
}

/// `A₁ + diag(q_k m_k)`, the matrix of `∫∇v·∇w + q v w` with lumped mass.
pub fn schrodinger_matrix(mesh: &Mesh, q: &[f64]) -> CsrMatrix {
    let m = lumped_masses(mesh);
    let qm: Vec<f64> = q.iter().zip(&m).map(|(q, m)| q * m).collect();
    assemble_laplacian(mesh).combine(1.0, &CsrMatrix::diagonal(&qm), 1.0)
}

/// Weak residual of `−Δv + qv = 0` for `v = √γ u`, `u` the γ-harmonic
/// extension of `f`: the dual norm of the interior residual against the H¹₀
/// Gram.
pub fn schrodinger_equivalence_residual(mesh: &Mesh, gamma: &ConductivityField, q: &PotentialField, f: &[f64]) -> Result<f64> {
    let u = solve_dirichlet(mesh, gamma, f)?;
    let v: Vec<f64> = u.iter().zip(&mesh.vertices).map(|(u, &p)| gamma.eval(p).sqrt() * u).collect();
    let r = schrodinger_matrix(mesh, &q.vertex_values).mul_vec(&v);
    interior_dual_norm(mesh, &r)
}

/// `√(r_Iᵀ K_II⁻¹ r_I)` with `K = A₁ + M` and `I` the interior vertices:
/// the norm of the functional `w ↦ Σ r_k w_k` over `w` vanishing on ∂Ω.
pub fn interior_dual_norm(mesh: &Mesh, r: &[f64]) -> Result<f64> {
    let int = &mesh.interior_indices;
    if int.is_empty() {
        return Ok(0.0);
    }
    let k = FemSpace::new(mesh).h1_matrix().block(int, int);
    let ri: Vec<f64> = int.iter().map(|&i| r[i]).collect();
    let x = SpdSolver::new(&k)?.solve(&ri)?;
    Ok(ri.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

/// Schur complement of the Schrödinger form onto the boundary. Fails with a
/// coercivity error when the interior block is not positive definite.
pub fn assemble_dtn_schrodinger(mesh: &Mesh, q: &PotentialField) -> Result<DtnOperator> {
    let a = schrodinger_matrix(mesh, &q.vertex_values);
    let m = schur_complement(mesh, &a, false).map_err(|e| match e {
        Error::Solver(msg) => Error::Coercivity(format!("Schrödinger form is not coercive: {msg}")),
        other => other,
    })?;
    let n = m.nrows();
    Ok(DtnOperator {
        matrix: Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])),
        gamma: format!("schrodinger(sup|q|={})", q.sup_bound),
    })
}

/// `D_{1/√γ} Λ^γ D_{1/√γ}` with `D` the diagonal of boundary values.
pub fn conjugated_dtn(mesh: &Mesh, gamma: &ConductivityField, dtn: &DtnOperator) -> Mat<f64> {
    let d: Vec<f64> = mesh.boundary_trace(|p| 1.0 / gamma.eval(p).sqrt());
    let n = dtn.dim();
    Mat::from_fn(n, n, |i, j| d[i] * dtn.matrix[(i, j)] * d[j])
}

/// `‖Λ̃^q − D Λ^γ D‖ / ‖Λ̃^q‖` in the trace-to-dual operator norm.
pub fn conjugation_check(mesh: &Mesh, gamma: &ConductivityField) -> Result<f64> {
    let gram = assemble_trace_gram(mesh)?;
    conjugation_check_with(mesh, gamma, &gram)
}

pub fn conjugation_check_with(mesh: &Mesh, gamma: &ConductivityField, gram: &BoundaryGram) -> Result<f64> {
    let q = compute_q(mesh, gamma, PotentialSource::Analytic)?;
    let tilde = assemble_dtn_schrodinger(mesh, &q)?;
    let dtn = crate::trace::assemble_dtn(mesh, gamma)?;
    let conj = conjugated_dtn(mesh, gamma, &dtn);
    let num = operator_norm(&(&tilde.matrix - &conj), gram)?;
    let den = operator_norm(&tilde.matrix, gram)?;
    Ok(if den == 0.0 { num } else { num / den })
}
