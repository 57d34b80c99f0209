//! Discrete trace space: minimal-extension norm, dual norm, weak normal
//! derivative, the Dirichlet-to-Neumann map and operator norms between them.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conductivity::ConductivityField;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_stiffness, assemble_stiffness_values, lumped_masses, schur_complement, solve_with_boundary,
    FemSpace,
};
use crate::geometry::Point;
use crate::mesh::Mesh;

/// Relative tolerance of the operator-norm power iteration.
pub const POWER_TOLERANCE: f64 = 1e-8;
/// Iteration cap of the operator-norm power iteration.
pub const POWER_MAX_ITER: usize = 10_000;
const POWER_SEED: u64 = 0x5eed_0f_d7a;

/// Gram matrix `S` of the trace norm: the Schur complement of the H¹ form,
/// so `fᵀ S f` is the squared H¹ norm of the minimal extension of `f`.
pub struct BoundaryGram {
    pub matrix: Mat<f64>,
    lower: Mat<f64>,
}

impl BoundaryGram {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖f‖_B = √(fᵀ S f)`.
    pub fn norm(&self, f: &[f64]) -> f64 {
        quad(&self.matrix, f, f).max(0.0).sqrt()
    }

    /// `S⁻¹ g`.
    pub fn solve(&self, g: &[f64]) -> Vec<f64> {
        let mut x = col(g);
        self.lower.solve_lower_triangular_in_place(x.as_mut());
        self.lower.transpose().solve_upper_triangular_in_place(x.as_mut());
        (0..g.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Cholesky factor `L` with `S = L Lᵀ`.
    pub fn cholesky_factor(&self) -> &Mat<f64> {
        &self.lower
    }
}

pub fn assemble_trace_gram(mesh: &Mesh) -> Result<BoundaryGram> {
    let s = symmetrized(schur_complement(mesh, &FemSpace::new(mesh).h1_matrix(), false)?, "trace Gram", 1e-12)?;
    let llt = s
        .llt(Side::Lower)
        .map_err(|e| Error::Solver(format!("trace Gram is not positive definite: {e:?}")))?;
    let lower = llt.L().to_owned();
    Ok(BoundaryGram { matrix: s, lower })
}

/// `√(gᵀ S⁻¹ g)`, the norm of `g` as a functional on traces.
pub fn dual_norm(g: &[f64], gram: &BoundaryGram) -> f64 {
    if g.len() != gram.dim() {
        panic!("functional has {} entries, Gram has {}", g.len(), gram.dim());
    }
    let x = gram.solve(g);
    g.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Dense Dirichlet-to-Neumann matrix on the boundary vertices.
#[derive(Clone, Debug)]
pub struct DtnOperator {
    pub matrix: Mat<f64>,
    pub gamma: String,
}

impl DtnOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)] * f[j]).sum()).collect()
    }

    /// Symmetry (checked at assembly), annihilation of constants and
    /// positive semidefiniteness.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.dim();
        let scale = max_abs(&self.matrix).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (self.matrix[(i, j)] - self.matrix[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::Invariant("DtN matrix is not symmetric".into()));
                }
            }
        }
        let row_sum = (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if row_sum > 1e-9 * scale {
            return Err(Error::Invariant(format!("DtN does not annihilate constants (row sum {row_sum:.3e})")));
        }
        let eig = self
            .matrix
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("eigenvalue solver failed: {e:?}")))?;
        if let Some(&lo) = eig.first() {
            if lo < -1e-9 * scale {
                return Err(Error::Invariant(format!("DtN has negative eigenvalue {lo:.3e}")));
            }
        }
        Ok(())
    }
}

/// `Λ = A_bb − A_bi A_ii⁻¹ A_ib` for `A = A_γ`, with its invariants checked.
pub fn assemble_dtn(mesh: &Mesh, gamma: &ConductivityField) -> Result<DtnOperator> {
    let op = assemble_dtn_unchecked(mesh, gamma, false)?;
    op.check_invariants()?;
    Ok(op)
}

/// Assembly without the invariant checks; `flip_sign` corrupts the Schur
/// complement on purpose (validation harness mutation test).
pub fn assemble_dtn_unchecked(mesh: &Mesh, gamma: &ConductivityField, flip_sign: bool) -> Result<DtnOperator> {
    let a = assemble_stiffness(mesh, gamma)?;
    let m = schur_complement(mesh, &a, flip_sign)?;
    Ok(DtnOperator {
        matrix: symmetrized(m, "DtN", 1e-10)?,
        gamma: gamma.to_string(),
    })
}

/// Boundary functional `(A_γ u + M s)|_∂Ω` representing `γ ∂u/∂n` by
/// Green's formula, where `source` holds vertex values of `∇·(γ∇u)`
/// (zero for γ-harmonic `u`).
pub fn weak_normal_derivative(mesh: &Mesh, u: &[f64], gamma: &ConductivityField, source: Option<&[f64]>) -> Result<Vec<f64>> {
    let a = assemble_stiffness(mesh, gamma)?;
    let mut r = a.mul_vec(u);
    if let Some(s) = source {
        let m = lumped_masses(mesh);
        r.iter_mut().zip(m.iter().zip(s)).for_each(|(r, (m, s))| *r += m * s);
    }
    Ok(mesh.trace_of(&r))
}

/// Boundary dimension up to which operator norms are computed by a dense
/// eigen- or singular-value decomposition instead of power iteration.
pub const DENSE_NORM_LIMIT: usize = 4000;

/// `‖D‖_{L(B, B′)} = ‖L⁻¹ D L⁻ᵀ‖₂` with `S = L Lᵀ`. Up to
/// [`DENSE_NORM_LIMIT`] boundary unknowns the spectral norm is taken from a
/// dense decomposition: the generalized eigenvalues of DtN maps accumulate
/// just below their supremum (high-frequency modes have `Λ ≈ γS`), where
/// power iteration stalls. Larger problems use power iteration on `CᵀC`.
pub fn operator_norm(d: &Mat<f64>, gram: &BoundaryGram) -> Result<f64> {
    let n = gram.dim();
    if d.nrows() != n || d.ncols() != n {
        return Err(Error::Precondition("operator and Gram sizes differ".into()));
    }
    if n == 0 || max_abs(d) == 0.0 {
        return Ok(0.0);
    }
    let l = gram.cholesky_factor();
    let mut x = d.to_owned();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut c = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(c.as_mut());
    // c now holds (L⁻¹ D L⁻ᵀ)ᵀ; the singular values are the same.
    if n > DENSE_NORM_LIMIT {
        return power_iteration_singular(&c);
    }
    let asym = max_abs(&(&c - c.transpose()));
    let values = if asym <= 1e-12 * max_abs(&c) {
        let sym = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
        sym.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver(format!("symmetric eigensolver failed: {e:?}")))?
    } else {
        c.singular_values()
            .map_err(|e| Error::Solver(format!("singular value decomposition failed: {e:?}")))?
    };
    Ok(values.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// Largest singular value of a dense matrix via power iteration on `CᵀC`.
pub fn power_iteration_singular(c: &Mat<f64>) -> Result<f64> {
    let n = c.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let apply = |v: &[f64]| -> Vec<f64> {
        let cv = matvec(c, v, false);
        matvec(c, &cv, true)
    };
    let mut rho_prev = 0.0;
    let mut stagnant = 0;
    for _ in 0..POWER_MAX_ITER {
        let w = apply(&v);
        let rho: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        if rho <= 0.0 {
            return Ok(0.0);
        }
        let resid = w.iter().zip(&v).map(|(w, v)| (w - rho * v).powi(2)).sum::<f64>().sqrt();
        if resid <= POWER_TOLERANCE * rho {
            return Ok(rho.sqrt());
        }
        // Rayleigh quotients of power iterates increase monotonically; a long
        // stall means a cluster of top eigenvalues with the value converged.
        if (rho - rho_prev).abs() <= 1e-14 * rho {
            stagnant += 1;
            if stagnant >= 5 {
                return Ok(rho.sqrt());
            }
        } else {
            stagnant = 0;
        }
        rho_prev = rho;
        v = w;
        normalize(&mut v);
    }
    Err(Error::Iteration(format!(
        "power iteration did not reach relative tolerance {POWER_TOLERANCE} in {POWER_MAX_ITER} steps"
    )))
}

/// Norm of `Λ1 − Λ2` as a map from traces to functionals.
pub fn operator_norm_diff(l1: &DtnOperator, l2: &DtnOperator, gram: &BoundaryGram) -> Result<f64> {
    operator_norm(&(&l1.matrix - &l2.matrix), gram)
}

/// Both sides of Alessandrini's identity computed from operators already
/// assembled for `γ1`, `γ2`.
pub fn alessandrini_identity_with(
    mesh: &Mesh,
    gamma1: &ConductivityField,
    gamma2: &ConductivityField,
    l1: &DtnOperator,
    l2: &DtnOperator,
    f1: &[f64],
    f2: &[f64],
) -> Result<(f64, f64)> {
    let d = &l1.matrix - &l2.matrix;
    let lhs = quad(&d, f2, f1);
    let c1 = gamma1.centroid_values(mesh)?;
    let c2 = gamma2.centroid_values(mesh)?;
    let u1 = solve_with_boundary(mesh, &assemble_stiffness_values(mesh, &c1), f1, None)?;
    let u2 = solve_with_boundary(mesh, &assemble_stiffness_values(mesh, &c2), f2, None)?;
    let rhs = (0..mesh.triangles.len())
        .map(|t| (c1[t] - c2[t]) * mesh.gradient(t, &u1).dot(mesh.gradient(t, &u2)) * mesh.area(t))
        .sum();
    Ok((lhs, rhs))
}

/// `(f2ᵀ(Λ1 − Λ2)f1, Σ_T (γ1 − γ2)(c_T) ∇u1·∇u2 |T|)`.
pub fn alessandrini_identity(
    mesh: &Mesh,
    gamma1: &ConductivityField,
    gamma2: &ConductivityField,
    f1: &[f64],
    f2: &[f64],
) -> Result<(f64, f64)> {
    let l1 = assemble_dtn(mesh, gamma1)?;
    let l2 = assemble_dtn(mesh, gamma2)?;
    alessandrini_identity_with(mesh, gamma1, gamma2, &l1, &l2, f1, f2)
}

/// Multiplier with its gradient, used for the modulation estimates.
pub trait Multiplier {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> Point;
}

impl<F, G> Multiplier for (F, G)
where
    F: Fn(Point) -> f64,
    G: Fn(Point) -> Point,
{
    fn value(&self, p: Point) -> f64 {
        (self.0)(p)
    }
    fn gradient(&self, p: Point) -> Point {
        (self.1)(p)
    }
}

impl Multiplier for crate::expr::Expression {
    fn value(&self, p: Point) -> f64 {
        self.eval(p.x, p.y)
    }
    fn gradient(&self, p: Point) -> Point {
        let [gx, gy] = crate::expr::Expression::gradient(self);
        Point::new(gx.eval(p.x, p.y), gy.eval(p.x, p.y))
    }
}

/// `sup (φ² + |∇φ|²)^{1/2}` sampled at vertices and centroids.
pub fn w1inf_estimate(mesh: &Mesh, phi: &dyn Multiplier) -> f64 {
    let centroids = (0..mesh.triangles.len()).map(|t| mesh.centroid(t));
    mesh.vertices
        .iter()
        .copied()
        .chain(centroids)
        .map(|p| {
            let g = phi.gradient(p);
            (phi.value(p).powi(2) + g.dot(g)).sqrt()
        })
        .fold(0.0, f64::max)
}

/// `(‖φ f‖_B, √2 ‖φ‖_{W^{1,∞}} ‖f‖_B)`; the first never exceeds the second.
pub fn modulated_trace_norm_check(mesh: &Mesh, gram: &BoundaryGram, phi: &dyn Multiplier, f: &[f64]) -> (f64, f64) {
    let phif: Vec<f64> = mesh
        .boundary_indices
        .iter()
        .zip(f)
        .map(|(&i, v)| phi.value(mesh.vertices[i]) * v)
        .collect();
    (gram.norm(&phif), 2f64.sqrt() * w1inf_estimate(mesh, phi) * gram.norm(f))
}

/// Dual counterpart: `(‖φ g‖_{B′}, √2 ‖φ‖_{W^{1,∞}} ‖g‖_{B′})` where
/// `⟨φ g, f⟩ = ⟨g, φ f⟩`.
pub fn modulated_dual_norm_check(mesh: &Mesh, gram: &BoundaryGram, phi: &dyn Multiplier, g: &[f64]) -> (f64, f64) {
    let phig: Vec<f64> = mesh
        .boundary_indices
        .iter()
        .zip(g)
        .map(|(&i, v)| phi.value(mesh.vertices[i]) * v)
        .collect();
    (dual_norm(&phig, gram), 2f64.sqrt() * w1inf_estimate(mesh, phi) * dual_norm(g, gram))
}

/// `diag(γ on boundary vertices) · Λ¹`, the pointwise product of γ with the
/// Laplace DtN map.
pub fn modulate_rows(mesh: &Mesh, gamma: &ConductivityField, lambda_one: &DtnOperator) -> Mat<f64> {
    let g: Vec<f64> = mesh.boundary_trace(|p| gamma.eval(p));
    let n = lambda_one.dim();
    Mat::from_fn(n, n, |i, j| g[i] * lambda_one.matrix[(i, j)])
}

fn symmetrized(m: Mat<f64>, what: &str, tol: f64) -> Result<Mat<f64>> {
    let n = m.nrows();
    let scale = max_abs(&m).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > tol * scale {
        return Err(Error::Invariant(format!("{what} asymmetry {worst:.3e} exceeds tolerance")));
    }
    Ok(Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
}

pub(crate) fn max_abs(m: &Mat<f64>) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].abs());
        }
    }
    best
}

/// `xᵀ M y`.
pub(crate) fn quad(m: &Mat<f64>, x: &[f64], y: &[f64]) -> f64 {
    let my = matvec(m, y, false);
    x.iter().zip(&my).map(|(a, b)| a * b).sum()
}

pub(crate) fn matvec(m: &Mat<f64>, v: &[f64], transpose: bool) -> Vec<f64> {
    if transpose {
        (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)] * v[i]).sum()).collect()
    } else {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
    }
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
