//! Per-pixel latent estimation: regularized nonlinear least squares over
//! the stacked latent codes of one pixel, solved with BFGS.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::neural::vae::VaeModel;
use crate::solvers::bfgs::{bfgs_minimize, BfgsOutcome};
use crate::types::LatentReference;

/// Minimize, over the `P x K` latent matrix `Z` of one pixel,
///
/// `0.5 |y - G(Z) a|^2 + (lambda_z / 2) |Z - Z0|_F^2`
///
/// where column `p` of `G(Z)` is `decode_p(z_p)`. The variable is flattened
/// material-major and warm-started from `z_init`. Returns the solution and
/// whether the line search degraded.
pub fn solve_z_step(
    y: ArrayView1<'_, f64>,
    a: ArrayView1<'_, f64>,
    models: &[VaeModel],
    z_init: ArrayView2<'_, f64>,
    z0: &LatentReference,
    lambda_z: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Array2<f64>, bool)> {
    let p = models.len();
    if p == 0 {
        return Err(Error::Invalid("solve_z_step needs at least one model".into()));
    }
    let k = models[0].latent_dim();
    let bands = y.len();
    for (i, m) in models.iter().enumerate() {
        if m.bands() != bands || m.latent_dim() != k {
            return Err(Error::dims(
                format!("solve_z_step model {i}"),
                format!("bands {bands}, K {k}"),
                format!("bands {}, K {}", m.bands(), m.latent_dim()),
            ));
        }
    }
    if a.len() != p || z_init.nrows() != p || z_init.ncols() != k {
        return Err(Error::dims(
            "solve_z_step inputs",
            format!("a: {p}, z_init: {p}x{k}"),
            format!("a: {}, z_init: {}x{}", a.len(), z_init.nrows(), z_init.ncols()),
        ));
    }
    if z0.materials() != p || z0.latent_dim() != k {
        return Err(Error::dims(
            "solve_z_step latent reference",
            format!("{k}x{p}"),
            format!("{}x{}", z0.latent_dim(), z0.materials()),
        ));
    }

    let mut flat = Array1::<f64>::zeros(p * k);
    for i in 0..p {
        for j in 0..k {
            flat[i * k + j] = z_init[[i, j]];
        }
    }

    let objective = |z: &Array1<f64>| -> (f64, Array1<f64>) {
        objective_and_grad(z, y, a, models, z0, lambda_z, p, k)
    };

    let BfgsOutcome {
        point, degraded, ..
    } = bfgs_minimize(objective, flat, tol, max_iter);

    let mut out = Array2::<f64>::zeros((p, k));
    for i in 0..p {
        for j in 0..k {
            out[[i, j]] = point[i * k + j];
        }
    }
    Ok((out, degraded))
}

fn objective_and_grad(
    z: &Array1<f64>,
    y: ArrayView1<'_, f64>,
    a: ArrayView1<'_, f64>,
    models: &[VaeModel],
    z0: &LatentReference,
    lambda_z: f64,
    p: usize,
    k: usize,
) -> (f64, Array1<f64>) {
    let bands = y.len();
    // Decode every material, keeping caches for the pullback.
    let mut residual = -&y.to_owned();
    let mut caches = Vec::with_capacity(p);
    for i in 0..p {
        let z_i = z.slice(ndarray::s![i * k..(i + 1) * k]);
        let (out, cache) = models[i]
            .decode_with_cache(z_i)
            .expect("dimensions validated by solve_z_step");
        for l in 0..bands {
            residual[l] += a[i] * out[l];
        }
        caches.push(cache);
    }

    let mut value = 0.5 * residual.dot(&residual);
    let mut grad = Array1::<f64>::zeros(p * k);
    for i in 0..p {
        let z_i = z.slice(ndarray::s![i * k..(i + 1) * k]);
        let pullback = models[i].decode_pullback(&caches[i], residual.view());
        let ref_i = z0.column(i);
        for j in 0..k {
            let dev = z_i[j] - ref_i[j];
            grad[i * k + j] = a[i] * pullback[j] + lambda_z * dev;
            value += 0.5 * lambda_z * dev * dev;
        }
    }
    (value, grad)
}
