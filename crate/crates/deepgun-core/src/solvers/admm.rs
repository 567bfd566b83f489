//! ADMM solver for the abundance subproblem: simplex-constrained least
//! squares with pixel-dependent endmember matrices and spatial group-sparse
//! (L2,1) regularization of the horizontal and vertical gradients.
//!
//! Splitting: `V1 = H_h(A)`, `V2 = H_v(A)`, `V3 = A`, with scaled duals.
//! The A-update solves the coupled normal equations
//! `(M_n' M_n + rho (H_h' H_h + H_v' H_v + I)) A = rhs` by conjugate
//! gradient; the V1/V2 updates are per-column group soft-thresholds with
//! threshold `lambda_A / rho`; the V3 update projects each column onto the
//! unit simplex.

use ndarray::{s, Array2, Array3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solvers::simplex::project_simplex;
use crate::solvers::spatial::{grad_h, grad_h_adjoint, grad_v, grad_v_adjoint};
use crate::solvers::l21_norm;
use crate::types::{AbundanceMatrix, EndmemberTensor, HyperCube};

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    /// Penalty parameter rho.
    pub penalty: f64,
    pub max_iterations: usize,
    /// Primal stopping tolerance (per entry; scaled by sqrt of the residual
    /// dimension).
    pub primal_tol: f64,
    /// Dual stopping tolerance (same normalization).
    pub dual_tol: f64,
    /// Spatial regularization weight.
    pub lambda_a: f64,
    /// Relative residual target for the inner conjugate-gradient solves.
    pub cg_tol: f64,
    pub cg_max_iterations: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            max_iterations: 200,
            primal_tol: 1e-5,
            dual_tol: 1e-5,
            lambda_a: 0.01,
            cg_tol: 1e-8,
            cg_max_iterations: 2000,
        }
    }
}

impl AdmmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0) {
            return Err(Error::Invalid("ADMM penalty must be positive".into()));
        }
        if !(self.primal_tol > 0.0 && self.dual_tol > 0.0 && self.cg_tol > 0.0) {
            return Err(Error::Invalid("ADMM tolerances must be positive".into()));
        }
        if self.lambda_a < 0.0 {
            return Err(Error::Invalid("lambda_a must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics of one ADMM run.
#[derive(Debug, Clone)]
pub struct AdmmDiagnostics {
    pub iterations: usize,
    /// Scaled augmented Lagrangian checkpoints per iteration, all evaluated
    /// with that iteration's (pre-ascent) duals: at the iteration start,
    /// after the A minimization, and after the V minimizations. Each
    /// checkpoint chain is non-increasing; the dual ascent between
    /// iterations deliberately pushes the value back up.
    pub al_checkpoints: Vec<[f64; 3]>,
    pub final_primal_residual: f64,
    pub final_dual_residual: f64,
}

/// Group soft-threshold of each column: `col <- col * max(0, 1 - t/|col|)`.
fn group_soft_threshold(x: &Array2<f64>, threshold: f64) -> Array2<f64> {
    let mut out = x.clone();
    if threshold <= 0.0 {
        return out;
    }
    for mut col in out.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm <= threshold {
            col.fill(0.0);
        } else {
            let scale = 1.0 - threshold / norm;
            col.mapv_inplace(|v| v * scale);
        }
    }
    out
}

fn frob(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solve the abundance subproblem; see the module docs. `a_init` warm-starts
/// the solve and must be simplex-feasible.
pub fn solve_a_step(
    cube: &HyperCube,
    em: &EndmemberTensor,
    a_init: &AbundanceMatrix,
    config: &AdmmConfig,
    height: usize,
    width: usize,
) -> Result<AbundanceMatrix> {
    solve_a_step_diag(cube, em, a_init, config, height, width).map(|(a, _)| a)
}

/// [`solve_a_step`] returning per-iteration diagnostics.
pub fn solve_a_step_diag(
    cube: &HyperCube,
    em: &EndmemberTensor,
    a_init: &AbundanceMatrix,
    config: &AdmmConfig,
    height: usize,
    width: usize,
) -> Result<(AbundanceMatrix, AdmmDiagnostics)> {
    config.validate()?;
    let n = cube.num_pixels();
    let bands = cube.bands();
    let p = em.materials();
    if height * width != n || em.pixels() != n || em.bands() != bands {
        return Err(Error::dims(
            "solve_a_step",
            format!("cube {height}x{width}x{bands}"),
            format!(
                "em tensor {}x{}x{} / {} pixels",
                em.bands(),
                em.materials(),
                em.pixels(),
                n
            ),
        ));
    }
    if a_init.materials() != p || a_init.pixels() != n {
        return Err(Error::dims(
            "solve_a_step a_init",
            format!("{p}x{n}"),
            format!("{}x{}", a_init.materials(), a_init.pixels()),
        ));
    }

    let rho = config.penalty;
    let threshold = config.lambda_a / rho;

    // Per-pixel Gram matrices M_n' M_n and correlations M_n' y_n.
    let mut gram = Array3::<f64>::zeros((p, p, n));
    let mut corr = Array2::<f64>::zeros((p, n));
    for pix in 0..n {
        let m_n = em.pixel_matrix(pix);
        let y_n = cube.pixel(pix);
        for i in 0..p {
            for j in i..p {
                let v = m_n.column(i).dot(&m_n.column(j));
                gram[[i, j, pix]] = v;
                gram[[j, i, pix]] = v;
            }
            corr[[i, pix]] = m_n
                .column(i)
                .iter()
                .zip(y_n.iter())
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    // Data term 0.5 sum_n |y_n - M_n a_n|^2 up to the constant 0.5 |Y|^2.
    let y_sq: f64 = cube.data().iter().map(|v| v * v).sum();
    let data_term = |a: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for pix in 0..n {
            let a_n = a.column(pix);
            let g = gram.slice(s![.., .., pix]);
            acc += a_n.dot(&g.dot(&a_n)) - 2.0 * a_n.dot(&corr.column(pix));
        }
        0.5 * (acc + y_sq)
    };

    // A |-> (M'M + rho (Hh'Hh + Hv'Hv + I)) A, the SPD operator of the
    // A-update normal equations.
    let apply = |a: &Array2<f64>| -> Result<Array2<f64>> {
        let mut out = Array2::<f64>::zeros((p, n));
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|pix| {
                let g = gram.slice(s![.., .., pix]);
                g.dot(&a.column(pix)).to_vec()
            })
            .collect();
        for (pix, col) in cols.into_iter().enumerate() {
            for i in 0..p {
                out[[i, pix]] = col[i];
            }
        }
        let hh = grad_h_adjoint(&grad_h(a, height, width)?, height, width)?;
        let vv = grad_v_adjoint(&grad_v(a, height, width)?, height, width)?;
        out = out + rho * (&hh + &vv + a);
        Ok(out)
    };

    let mut a = a_init.as_array().clone();
    let mut v1 = grad_h(&a, height, width)?;
    let mut v2 = grad_v(&a, height, width)?;
    let mut v3 = a.clone();
    let mut u1 = Array2::<f64>::zeros((p, n));
    let mut u2 = Array2::<f64>::zeros((p, n));
    let mut u3 = Array2::<f64>::zeros((p, n));

    let primal_scale = ((3 * p * n) as f64).sqrt();
    let dual_scale = ((p * n) as f64).sqrt();

    // Scaled augmented Lagrangian at (A, V1, V2, V3) under the given duals.
    let lagrangian = |a: &Array2<f64>,
                      v1: &Array2<f64>,
                      v2: &Array2<f64>,
                      v3: &Array2<f64>,
                      u1: &Array2<f64>,
                      u2: &Array2<f64>,
                      u3: &Array2<f64>|
     -> Result<f64> {
        let r1 = &grad_h(a, height, width)? - v1;
        let r2 = &grad_v(a, height, width)? - v2;
        let r3 = a - v3;
        Ok(data_term(a)
            + config.lambda_a * (l21_norm(v1) + l21_norm(v2))
            + 0.5
                * rho
                * ((frob(&(&r1 + u1)).powi(2) - frob(u1).powi(2))
                    + (frob(&(&r2 + u2)).powi(2) - frob(u2).powi(2))
                    + (frob(&(&r3 + u3)).powi(2) - frob(u3).powi(2))))
    };

    let mut al_checkpoints = Vec::new();
    let mut iterations = 0;
    let mut primal_res = f64::INFINITY;
    let mut dual_res = f64::INFINITY;

    for _iter in 0..config.max_iterations {
        iterations += 1;
        let al_start = lagrangian(&a, &v1, &v2, &v3, &u1, &u2, &u3)?;

        // A-update by warm-started CG on the normal equations.
        let rhs = &corr
            + &(rho
                * (&grad_h_adjoint(&(&v1 - &u1), height, width)?
                    + &grad_v_adjoint(&(&v2 - &u2), height, width)?
                    + &(&v3 - &u3)));
        a = cg_solve(&apply, &rhs, a, config.cg_tol, config.cg_max_iterations)?;
        let al_after_a = lagrangian(&a, &v1, &v2, &v3, &u1, &u2, &u3)?;

        let ga_h = grad_h(&a, height, width)?;
        let ga_v = grad_v(&a, height, width)?;

        // V-updates (prox steps).
        let v1_new = group_soft_threshold(&(&ga_h + &u1), threshold);
        let v2_new = group_soft_threshold(&(&ga_v + &u2), threshold);
        let mut v3_new = &a + &u3;
        for mut col in v3_new.columns_mut() {
            let projected = project_simplex(col.view());
            col.assign(&projected);
        }

        // Dual residual before overwriting the V blocks.
        let s_norm = rho
            * (frob(&grad_h_adjoint(&(&v1_new - &v1), height, width)?)
                .hypot(frob(&grad_v_adjoint(&(&v2_new - &v2), height, width)?))
                .hypot(frob(&(&v3_new - &v3))));
        v1 = v1_new;
        v2 = v2_new;
        v3 = v3_new;
        let al_after_v = lagrangian(&a, &v1, &v2, &v3, &u1, &u2, &u3)?;
        al_checkpoints.push([al_start, al_after_a, al_after_v]);

        // Dual ascent.
        let r1 = &ga_h - &v1;
        let r2 = &ga_v - &v2;
        let r3 = &a - &v3;
        u1 = &u1 + &r1;
        u2 = &u2 + &r2;
        u3 = &u3 + &r3;

        let r_norm = frob(&r1).hypot(frob(&r2)).hypot(frob(&r3));
        primal_res = r_norm / primal_scale;
        dual_res = s_norm / dual_scale;

        if primal_res <= config.primal_tol && dual_res <= config.dual_tol {
            break;
        }
    }

    // Exact feasibility for the returned estimate.
    let mut out = a;
    for mut col in out.columns_mut() {
        let projected = project_simplex(col.view());
        col.assign(&projected);
    }
    Ok((
        AbundanceMatrix::new(out)?,
        AdmmDiagnostics {
            iterations,
            al_checkpoints,
            final_primal_residual: primal_res,
            final_dual_residual: dual_res,
        },
    ))
}

/// Matrix-free conjugate gradient for SPD operators on `P x N` unknowns.
fn cg_solve(
    apply: &dyn Fn(&Array2<f64>) -> Result<Array2<f64>>,
    rhs: &Array2<f64>,
    x0: Array2<f64>,
    tol: f64,
    max_iterations: usize,
) -> Result<Array2<f64>> {
    let rhs_norm = frob(rhs).max(1e-300);
    let mut x = x0;
    let mut r = rhs - &apply(&x)?;
    let mut rr = r.iter().map(|v| v * v).sum::<f64>();
    if rr.sqrt() <= tol * rhs_norm {
        return Ok(x);
    }
    let mut p = r.clone();
    for _ in 0..max_iterations {
        let ap = apply(&p)?;
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::CgDiverged(format!(
                "operator lost positive definiteness (p'Ap = {pap})"
            )));
        }
        let alpha = rr / pap;
        x = &x + &(alpha * &p);
        r = &r - &(alpha * &ap);
        let rr_new = r.iter().map(|v| v * v).sum::<f64>();
        if rr_new.sqrt() <= tol * rhs_norm {
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        p = &r + &(beta * &p);
    }
    Err(Error::CgDiverged(format!(
        "no convergence in {max_iterations} iterations (residual {:.3e}, target {:.3e})",
        rr.sqrt(),
        tol * rhs_norm
    )))
}
