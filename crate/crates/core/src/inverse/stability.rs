//! Stability experiments for the direct and inverse problems.

use rayon::prelude::*;

use crate::conductivity::ConductivityField;
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness_values, l2_norm, lumped_masses, solve_with_boundary};
use crate::fit::{fit_line, fit_loglog};
use crate::mesh::Mesh;
use crate::report::ExperimentReport;
use crate::schrodinger::{assemble_dtn_schrodinger, compute_q, interior_dual_norm, PotentialSource};
use crate::trace::{assemble_dtn, operator_norm, operator_norm_diff, BoundaryGram};

/// Two conductivities compared in one experiment row; `label` is the
/// row's control parameter (e.g. the perturbation size `t`).
#[derive(Clone, Debug)]
pub struct ConductivityPair {
    pub label: f64,
    pub gamma1: ConductivityField,
    pub gamma2: ConductivityField,
}

/// `(min, max)` of γ sampled at vertices and triangle centroids.
pub fn sampled_bounds(mesh: &Mesh, gamma: &ConductivityField) -> (f64, f64) {
    sample_points(mesh).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = gamma.eval(p);
        (lo.min(v), hi.max(v))
    })
}

fn sample_points(mesh: &Mesh) -> impl Iterator<Item = crate::geometry::Point> + Clone + '_ {
    mesh.vertices.iter().copied().chain((0..mesh.triangles.len()).map(|t| mesh.centroid(t)))
}

/// Sampled `‖γ1 − γ2‖∞`, over boundary vertices only when `boundary_only`.
pub fn sup_difference(mesh: &Mesh, gamma1: &ConductivityField, gamma2: &ConductivityField, boundary_only: bool) -> f64 {
    let diff = |p| (gamma1.eval(p) - gamma2.eval(p)).abs();
    if boundary_only {
        mesh.boundary_indices.iter().map(|&i| diff(mesh.vertices[i])).fold(0.0, f64::max)
    } else {
        sample_points(mesh).map(diff).fold(0.0, f64::max)
    }
}

/// Constant factor of the direct stability estimate,
/// `(1 + ‖γ2‖/ℓ1)(1 + ‖γ1‖/ℓ1 + ‖γ2‖/ℓ2)`, minimized over both orderings of
/// the pair. Arguments are `(ℓ, ‖γ‖∞)` for each conductivity.
pub fn direct_stability_constant(b1: (f64, f64), b2: (f64, f64)) -> f64 {
    let one_way = |(l1, s1): (f64, f64), (l2, s2): (f64, f64)| (1.0 + s2 / l1) * (1.0 + s1 / l1 + s2 / l2);
    one_way(b1, b2).min(one_way(b2, b1))
}

fn dtn_pair(mesh: &Mesh, pair: &ConductivityPair) -> Result<(crate::trace::DtnOperator, crate::trace::DtnOperator)> {
    let (a, b) = rayon::join(|| assemble_dtn(mesh, &pair.gamma1), || assemble_dtn(mesh, &pair.gamma2));
    Ok((a?, b?))
}

/// Rows `label, gamma_diff, dtn_diff, measured_constant, formula_constant,
/// ratio` with `measured_constant = ‖Λ1 − Λ2‖ / ‖γ1 − γ2‖∞`. Scalars: the
/// log-log slope of `dtn_diff` against `gamma_diff` and the largest ratio
/// of measured to formula constant.
pub fn direct_stability_experiment(mesh: &Mesh, gram: &BoundaryGram, pairs: &[ConductivityPair]) -> Result<ExperimentReport> {
    let rows = pairs
        .par_iter()
        .map(|pair| {
            let (l1, l2) = dtn_pair(mesh, pair)?;
            let dtn_diff = operator_norm_diff(&l1, &l2, gram)?;
            let gamma_diff = sup_difference(mesh, &pair.gamma1, &pair.gamma2, false);
            let formula = direct_stability_constant(sampled_bounds(mesh, &pair.gamma1), sampled_bounds(mesh, &pair.gamma2));
            let measured = if gamma_diff > 0.0 { dtn_diff / gamma_diff } else { 0.0 };
            Ok(vec![pair.label, gamma_diff, dtn_diff, measured, formula, measured / formula])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ExperimentReport::new(
        "direct-stability",
        &["label", "gamma_diff", "dtn_diff", "measured_constant", "formula_constant", "ratio"],
    );
    for r in &rows {
        report.push_row(r.clone());
    }
    report.set_scalar("max_ratio", rows.iter().map(|r| r[5]).fold(0.0, f64::max));
    let usable: Vec<&Vec<f64>> = rows.iter().filter(|r| r[1] > 0.0 && r[2] > 0.0).collect();
    if usable.len() >= 2 {
        let x: Vec<f64> = usable.iter().map(|r| r[1]).collect();
        let y: Vec<f64> = usable.iter().map(|r| r[2]).collect();
        let fit = fit_loglog(&x, &y)?;
        report.set_scalar("slope", fit.slope);
        report.set_scalar("r_squared", fit.r_squared);
    }
    Ok(report)
}

/// Rows `label, gamma_diff_boundary, dtn_diff, ratio` with `ratio =
/// ‖γ1 − γ2‖_{L∞(∂Ω)} / ‖Λ1 − Λ2‖` (zero for identical pairs); the scalar
/// `empirical_constant` is the largest ratio.
pub fn boundary_stability_curve(mesh: &Mesh, gram: &BoundaryGram, pairs: &[ConductivityPair]) -> Result<ExperimentReport> {
    let rows = pairs
        .par_iter()
        .map(|pair| {
            let (l1, l2) = dtn_pair(mesh, pair)?;
            let dtn_diff = operator_norm_diff(&l1, &l2, gram)?;
            let lhs = sup_difference(mesh, &pair.gamma1, &pair.gamma2, true);
            let ratio = if dtn_diff > 0.0 {
                lhs / dtn_diff
            } else if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(vec![pair.label, lhs, dtn_diff, ratio])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ExperimentReport::new("boundary-stability", &["label", "gamma_diff_boundary", "dtn_diff", "ratio"]);
    report.set_meta("boundary_dofs", mesh.n_boundary());
    for r in &rows {
        report.push_row(r.clone());
    }
    report.set_scalar("empirical_constant", rows.iter().map(|r| r[3]).fold(0.0, f64::max));
    Ok(report)
}

/// Solution `w` of `∇·(√(γ1γ2)∇w) = 2√(γ1γ2)(q1 − q2)` with trace
/// `ln(γ1/γ2)`, and its L² distance to `ln(γ1/γ2)`.
#[derive(Clone, Debug)]
pub struct LogQuotient {
    pub w: Vec<f64>,
    pub deviation_l2: f64,
}

pub fn log_quotient_solve(mesh: &Mesh, gamma1: &ConductivityField, gamma2: &ConductivityField) -> Result<LogQuotient> {
    let q1 = compute_q(mesh, gamma1, PotentialSource::Analytic)?;
    let q2 = compute_q(mesh, gamma2, PotentialSource::Analytic)?;
    let c1 = gamma1.centroid_values(mesh)?;
    let c2 = gamma2.centroid_values(mesh)?;
    let coeff: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| (a * b).sqrt()).collect();
    if coeff.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Coercivity("√(γ1γ2) is not elliptic".into()));
    }
    let a = assemble_stiffness_values(mesh, &coeff);
    let m = lumped_masses(mesh);
    // Weak form: ∫ a∇w·∇v = −∫ 2a(q1 − q2) v for v ∈ H¹₀.
    let rhs: Vec<f64> = mesh
        .interior_indices
        .iter()
        .map(|&i| {
            let p = mesh.vertices[i];
            let ak = (gamma1.eval(p) * gamma2.eval(p)).sqrt();
            -2.0 * ak * (q1.vertex_values[i] - q2.vertex_values[i]) * m[i]
        })
        .collect();
    let log_ratio = |p| (gamma1.eval(p) / gamma2.eval(p)).ln();
    let w = solve_with_boundary(mesh, &a, &mesh.boundary_trace(log_ratio), Some(&rhs))?;
    let exact = mesh.interpolate(log_ratio);
    let err: Vec<f64> = w.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(LogQuotient {
        deviation_l2: l2_norm(mesh, &err),
        w,
    })
}

/// `‖q1 − q2‖_{H⁻¹}`: the interior dual norm of the lumped load of `q1 − q2`.
pub fn potential_difference_norm(mesh: &Mesh, q1: &[f64], q2: &[f64]) -> Result<f64> {
    let m = lumped_masses(mesh);
    let load: Vec<f64> = q1.iter().zip(q2).zip(&m).map(|((a, b), m)| (a - b) * m).collect();
    interior_dual_norm(mesh, &load)
}

/// Gap between conjugated Schrödinger DtN maps and its bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtnGap {
    /// `‖Λ̃^{q1} − Λ̃^{q2}‖`.
    pub lhs: f64,
    /// `c·(‖Λ1 − Λ2‖ + ‖γ1 − γ2‖_{L∞(∂Ω)})`.
    pub rhs: f64,
    /// `c = max(1/ℓ1, ‖γ2‖∞^{3/2} / (ℓ1 ℓ2^{3/2}))`, from writing
    /// `Λ̃^{qi} = Λi / γi|∂Ω` and `‖Λ2‖ ≤ ‖γ2‖∞^{3/2} / ℓ2^{1/2}`.
    pub constant: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
}

pub fn schrodinger_dtn_gap(
    mesh: &Mesh,
    gram: &BoundaryGram,
    gamma1: &ConductivityField,
    gamma2: &ConductivityField,
) -> Result<DtnGap> {
    for g in [gamma1, gamma2] {
        let tr = mesh.boundary_trace(|p| g.eval(p));
        let spread = tr.iter().fold(0.0f64, |m, v| m.max((v - tr[0]).abs()));
        if spread > 1e-12 * tr[0].abs().max(1.0) {
            return Err(Error::Precondition("conductivities must be constant on the boundary".into()));
        }
    }
    let pair = ConductivityPair {
        label: 0.0,
        gamma1: gamma1.clone(),
        gamma2: gamma2.clone(),
    };
    let (l1, l2) = dtn_pair(mesh, &pair)?;
    let q1 = compute_q(mesh, gamma1, PotentialSource::Analytic)?;
    let q2 = compute_q(mesh, gamma2, PotentialSource::Analytic)?;
    let t1 = assemble_dtn_schrodinger(mesh, &q1)?;
    let t2 = assemble_dtn_schrodinger(mesh, &q2)?;
    let lhs = operator_norm(&(&t1.matrix - &t2.matrix), gram)?;
    let (ell1, _) = sampled_bounds(mesh, gamma1);
    let (ell2, sup2) = sampled_bounds(mesh, gamma2);
    let constant = (1.0 / ell1).max(sup2.powf(1.5) / (ell1 * ell2.powf(1.5)));
    let rhs = constant * (operator_norm_diff(&l1, &l2, gram)? + sup_difference(mesh, gamma1, gamma2, true));
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    log::info!("Schrödinger DtN gap: lhs {lhs:.6e}, rhs {rhs:.6e}, ratio {ratio:.4}");
    Ok(DtnGap {
        lhs,
        rhs,
        constant,
        ratio,
    })
}

/// Rows `t, gamma_diff, dtn_diff, q_diff_hminus1, schrodinger_dtn_diff`,
/// followed by the fit `‖γ1 − γ2‖∞ ≈ c |ln ‖Λ1 − Λ2‖|^{-δ}` (scalars
/// `delta`, `c`, `r_squared`). Rows whose solves fail are dropped and
/// listed in the metadata.
pub fn domain_stability_experiment(mesh: &Mesh, gram: &BoundaryGram, pairs: &[ConductivityPair]) -> Result<ExperimentReport> {
    let outcomes: Vec<Result<Vec<f64>>> = pairs
        .par_iter()
        .map(|pair| {
            let (l1, l2) = dtn_pair(mesh, pair)?;
            let dtn_diff = operator_norm_diff(&l1, &l2, gram)?;
            let q1 = compute_q(mesh, &pair.gamma1, PotentialSource::Analytic)?;
            let q2 = compute_q(mesh, &pair.gamma2, PotentialSource::Analytic)?;
            let q_diff = potential_difference_norm(mesh, &q1.vertex_values, &q2.vertex_values)?;
            let t1 = assemble_dtn_schrodinger(mesh, &q1)?;
            let t2 = assemble_dtn_schrodinger(mesh, &q2)?;
            let tilde_diff = operator_norm(&(&t1.matrix - &t2.matrix), gram)?;
            let gamma_diff = sup_difference(mesh, &pair.gamma1, &pair.gamma2, false);
            Ok(vec![pair.label, gamma_diff, dtn_diff, q_diff, tilde_diff])
        })
        .collect();
    let mut report = ExperimentReport::new(
        "domain-stability",
        &["t", "gamma_diff", "dtn_diff", "q_diff_hminus1", "schrodinger_dtn_diff"],
    );
    let mut failed = Vec::new();
    for (pair, outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(row) => report.push_row(row),
            Err(e) => {
                log::warn!("domain-stability row t = {} aborted: {e}", pair.label);
                failed.push(pair.label.to_string());
            }
        }
    }
    if !failed.is_empty() {
        report.set_meta("failed_rows", failed.join(" "));
    }
    let usable: Vec<&Vec<f64>> = report
        .rows
        .iter()
        .filter(|r| r[1] > 0.0 && r[2] > 0.0 && r[2].ln() != 0.0)
        .collect();
    if usable.len() >= 2 {
        let x: Vec<f64> = usable.iter().map(|r| r[2].ln().abs().ln()).collect();
        let y: Vec<f64> = usable.iter().map(|r| r[1].ln()).collect();
        let fit = fit_line(&x, &y)?;
        report.set_scalar("delta", -fit.slope);
        report.set_scalar("c", fit.intercept.exp());
        report.set_scalar("r_squared", fit.r_squared);
    }
    Ok(report)
}
