//! Fully constrained least squares: simplex-constrained abundance fitting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm_sym;
use crate::solvers::simplex::project_simplex;
use crate::types::{AbundanceMatrix, EndmemberMatrix, HyperCube};

const MAX_ITERATIONS: usize = 5000;
const REL_OBJECTIVE_TOL: f64 = 1e-10;

/// Minimize `|y - M a|^2` over the unit simplex by projected gradient with
/// step `1 / |M^T M|_2`, stopping on a relative objective change below
/// `1e-10` or 5000 iterations.
pub fn fcls(y: ArrayView1<'_, f64>, m: &EndmemberMatrix) -> Result<Array1<f64>> {
    fcls_view(y, m.as_array().view())
}

/// [`fcls`] on a raw matrix view (used with per-pixel endmember slices).
pub fn fcls_view(y: ArrayView1<'_, f64>, m: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let (bands, materials) = (m.nrows(), m.ncols());
    if y.len() != bands {
        return Err(Error::dims(
            "fcls spectrum",
            format!("{bands}"),
            format!("{}", y.len()),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "fcls inputs".into(),
        });
    }

    // Gram matrix and correlation vector; the problem is quadratic so the
    // objective can be tracked without touching the spectrum again.
    let mut gram = Array2::<f64>::zeros((materials, materials));
    for i in 0..materials {
        for j in i..materials {
            let v = m.column(i).dot(&m.column(j));
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
    }
    let corr = m.t().dot(&y);
    let y_sq = y.dot(&y);

    let lips = spectral_norm_sym(&gram);
    if lips <= 0.0 {
        return Err(Error::ZeroNorm {
            context: "fcls endmember matrix".into(),
        });
    }
    let step = 1.0 / lips;

    let mut a = Array1::from_elem(materials, 1.0 / materials as f64);
    let objective = |a: &Array1<f64>| -> f64 {
        0.5 * (a.dot(&gram.dot(a)) - 2.0 * a.dot(&corr) + y_sq)
    };
    let mut f_prev = objective(&a);
    for _ in 0..MAX_ITERATIONS {
        let grad = gram.dot(&a) - &corr;
        let candidate = project_simplex((&a - &(step * &grad)).view());
        let f = objective(&candidate);
        a = candidate;
        if (f_prev - f).abs() <= REL_OBJECTIVE_TOL * f_prev.max(1e-30) {
            break;
        }
        f_prev = f;
    }
    Ok(a)
}

/// FCLS applied independently to every pixel of a cube with a shared
/// endmember matrix. Pixel solves run in parallel; the result is assembled
/// in pixel order and therefore deterministic.
pub fn fcls_image(cube: &HyperCube, m: &EndmemberMatrix) -> Result<AbundanceMatrix> {
    if cube.bands() != m.bands() {
        return Err(Error::dims(
            "fcls_image bands",
            format!("{}", m.bands()),
            format!("{}", cube.bands()),
        ));
    }
    let n = cube.num_pixels();
    let columns: Vec<Array1<f64>> = (0..n)
        .into_par_iter()
        .map(|i| fcls(ArrayView1::from(cube.pixel(i)), m))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Array2::<f64>::zeros((m.materials(), n));
    for (i, col) in columns.into_iter().enumerate() {
        data.column_mut(i).assign(&col);
    }
    AbundanceMatrix::new(data)
}
