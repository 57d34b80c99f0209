//! P1 finite elements: assembly, Dirichlet solves and discrete norms.
//!
//! Stiffness matrices use one-point (centroid) quadrature for the
//! coefficient; the mass matrix is lumped (vertex quadrature, `|T|/3` per
//! vertex). Both choices keep every Schur-complement identity downstream
//! exact at the discrete level.

mod solver;
mod sparse;

pub use solver::{SolverStrategy, SpdSolver, CG_TOLERANCE, DIRECT_SOLVER_LIMIT};
pub use sparse::CsrMatrix;

use rayon::prelude::*;

use crate::conductivity::ConductivityField;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// `Σ_T c_T ∇φ_i·∇φ_j |T|` for per-triangle coefficients `c_T` of any sign.
pub fn assemble_stiffness_values(mesh: &Mesh, coeff: &[f64]) -> CsrMatrix {
    assert_eq!(coeff.len(), mesh.triangles.len());
    let local: Vec<[[f64; 3]; 3]> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let g = mesh.hat_gradients(t);
            let w = coeff[t] * mesh.area(t);
            let mut k = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in a..3 {
                    k[a][b] = w * g[a].dot(g[b]);
                    k[b][a] = k[a][b];
                }
            }
            k
        })
        .collect();
    let mut trips = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, k) in local.iter().enumerate() {
        let tri = mesh.triangles[t];
        for a in 0..3 {
            for b in 0..3 {
                trips.push((tri[a], tri[b], k[a][b]));
            }
        }
    }
    let n = mesh.n_vertices();
    CsrMatrix::from_triplets(n, n, trips)
}

/// Stiffness matrix `A_γ` with γ sampled at centroids.
pub fn assemble_stiffness(mesh: &Mesh, gamma: &ConductivityField) -> Result<CsrMatrix> {
    Ok(assemble_stiffness_values(mesh, &gamma.centroid_values(mesh)?))
}

/// Stiffness matrix of the Laplacian (`γ ≡ 1`).
pub fn assemble_laplacian(mesh: &Mesh) -> CsrMatrix {
    assemble_stiffness_values(mesh, &vec![1.0; mesh.triangles.len()])
}

/// Lumped masses `m_k = Σ_{T ∋ k} |T| / 3`.
pub fn lumped_masses(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.area(t) / 3.0;
        for &i in tri {
            m[i] += a;
        }
    }
    m
}

/// Lumped (vertex-quadrature) mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    CsrMatrix::diagonal(&lumped_masses(mesh))
}

/// Dense-free helper binding a mesh to its Laplacian and mass matrices.
pub struct FemSpace<'a> {
    pub mesh: &'a Mesh,
    pub laplacian: CsrMatrix,
    pub mass: CsrMatrix,
}

impl<'a> FemSpace<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        FemSpace {
            mesh,
            laplacian: assemble_laplacian(mesh),
            mass: assemble_mass(mesh),
        }
    }

    /// `A₁ + M`, the matrix of the H¹ inner product.
    pub fn h1_matrix(&self) -> CsrMatrix {
        self.laplacian.combine(1.0, &self.mass, 1.0)
    }

    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        (self.laplacian.bilinear(u, u) + self.mass.bilinear(u, u)).max(0.0).sqrt()
    }

    pub fn h10_seminorm(&self, u: &[f64]) -> f64 {
        self.laplacian.bilinear(u, u).max(0.0).sqrt()
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.mass.bilinear(u, u).max(0.0).sqrt()
    }
}

pub fn h1_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    FemSpace::new(mesh).h1_norm(u)
}

pub fn h10_seminorm(mesh: &Mesh, u: &[f64]) -> f64 {
    FemSpace::new(mesh).h10_seminorm(u)
}

pub fn l2_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    FemSpace::new(mesh).l2_norm(u)
}

/// Solves `A u = rhs` on interior vertices with `u = f` on the boundary.
/// `rhs` (interior-ordered) defaults to zero.
pub fn solve_with_boundary(mesh: &Mesh, a: &CsrMatrix, f: &[f64], rhs: Option<&[f64]>) -> Result<Vec<f64>> {
    if f.len() != mesh.n_boundary() {
        return Err(Error::Precondition(format!(
            "trace has {} values for {} boundary vertices",
            f.len(),
            mesh.n_boundary()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("non-finite boundary data".into()));
    }
    let (int, bnd) = (&mesh.interior_indices, &mesh.boundary_indices);
    let a_ii = a.block(int, int);
    let a_ib = a.block(int, bnd);
    let mut b: Vec<f64> = a_ib.mul_vec(f).into_iter().map(|v| -v).collect();
    if let Some(r) = rhs {
        assert_eq!(r.len(), int.len());
        b.iter_mut().zip(r).for_each(|(b, r)| *b += r);
    }
    let ui = SpdSolver::new(&a_ii)?.solve(&b)?;
    let mut u = vec![0.0; mesh.n_vertices()];
    for (k, &i) in bnd.iter().enumerate() {
        u[i] = f[k];
    }
    for (k, &i) in int.iter().enumerate() {
        u[i] = ui[k];
    }
    Ok(u)
}

/// γ-harmonic extension of the trace `f`.
pub fn solve_dirichlet(mesh: &Mesh, gamma: &ConductivityField, f: &[f64]) -> Result<Vec<f64>> {
    solve_with_boundary(mesh, &assemble_stiffness(mesh, gamma)?, f, None)
}

/// Discrete minimal-H¹-norm extension of `f`, i.e. `(-Δ + 1) v = 0`.
pub fn solve_one_harmonic(mesh: &Mesh, f: &[f64]) -> Result<Vec<f64>> {
    solve_with_boundary(mesh, &FemSpace::new(mesh).h1_matrix(), f, None)
}

/// Solution of the lifted problem together with its a priori bound check.
#[derive(Clone, Debug)]
pub struct LiftedSolution {
    pub u: Vec<f64>,
    /// `‖∇u‖ / ((‖η‖∞ / ℓ) ‖∇φ‖)`; at most one by coercivity.
    pub bound_ratio: f64,
}

/// `u ∈ H¹₀` with `A_γ u = A_η φ` on interior vertices, where `eta` holds
/// centroid values of the (possibly signed) coefficient η.
pub fn solve_lifted(mesh: &Mesh, gamma: &ConductivityField, eta: &[f64], phi: &[f64]) -> Result<LiftedSolution> {
    if phi.len() != mesh.n_vertices() || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("φ must be finite and sized to the mesh".into()));
    }
    let gamma_c = gamma.centroid_values(mesh)?;
    let a_gamma = assemble_stiffness_values(mesh, &gamma_c);
    let a_eta = assemble_stiffness_values(mesh, eta);
    let full = a_eta.mul_vec(phi);
    let rhs: Vec<f64> = mesh.interior_indices.iter().map(|&i| full[i]).collect();
    let u = solve_with_boundary(mesh, &a_gamma, &vec![0.0; mesh.n_boundary()], Some(&rhs))?;

    let ell = gamma_c.iter().copied().fold(f64::INFINITY, f64::min);
    let eta_sup = eta.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let space = FemSpace::new(mesh);
    let bound = eta_sup / ell * space.h10_seminorm(phi);
    let grad_u = space.h10_seminorm(&u);
    let bound_ratio = if bound > 0.0 { grad_u / bound } else if grad_u == 0.0 { 0.0 } else { f64::INFINITY };
    if bound_ratio > 1.0 + 1e-8 {
        return Err(Error::Invariant(format!("lifted solution violates its energy bound (ratio {bound_ratio})")));
    }
    Ok(LiftedSolution { u, bound_ratio })
}

/// Dense Schur complement `A_bb − A_bi A_ii⁻¹ A_ib` onto the boundary
/// vertices, in boundary order. With `flip_sign` the correction term is
/// added instead of subtracted; this exists only so the validation harness
/// can confirm that it detects a corrupted operator.
pub fn schur_complement(mesh: &Mesh, a: &CsrMatrix, flip_sign: bool) -> Result<faer::Mat<f64>> {
    let (int, bnd) = (&mesh.interior_indices, &mesh.boundary_indices);
    let nb = bnd.len();
    let mut s = a.block(bnd, bnd).to_dense();
    if !int.is_empty() {
        let a_ii = a.block(int, int);
        let a_ib = a.block(int, bnd).to_dense();
        let a_bi = a.block(bnd, int);
        let x = SpdSolver::new(&a_ii)?.solve_mat(&a_ib)?;
        let corr = a_bi.mul_mat(&x);
        let sign = if flip_sign { 1.0 } else { -1.0 };
        for i in 0..nb {
            for j in 0..nb {
                s[(i, j)] += sign * corr[(i, j)];
            }
        }
    }
    Ok(s)
}
