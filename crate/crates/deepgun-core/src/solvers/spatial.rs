//! First-order spatial gradient operators on per-material abundance maps.
//!
//! A `P x N` matrix is interpreted as `P` images of shape `height x width`
//! with pixels flattened row-major (`n = row * width + col`). Gradients are
//! forward differences with replicate boundary handling: the difference at
//! the last column (or row) is zero. The `*_adjoint` functions are the exact
//! transposes.

use ndarray::Array2;

use crate::error::{Error, Result};

fn check_dims(a: &Array2<f64>, height: usize, width: usize, context: &str) -> Result<()> {
    if a.ncols() != height * width {
        return Err(Error::dims(
            context,
            format!("{} pixels ({height}x{width})", height * width),
            format!("{}", a.ncols()),
        ));
    }
    Ok(())
}

/// Horizontal forward differences: `out[p, (i, j)] = a[p, (i, j+1)] - a[p, (i, j)]`.
pub fn grad_h(a: &Array2<f64>, height: usize, width: usize) -> Result<Array2<f64>> {
    check_dims(a, height, width, "grad_h")?;
    let mut out = Array2::<f64>::zeros(a.raw_dim());
    for p in 0..a.nrows() {
        for i in 0..height {
            for j in 0..width.saturating_sub(1) {
                let n = i * width + j;
                out[[p, n]] = a[[p, n + 1]] - a[[p, n]];
            }
        }
    }
    Ok(out)
}

/// Vertical forward differences: `out[p, (i, j)] = a[p, (i+1, j)] - a[p, (i, j)]`.
pub fn grad_v(a: &Array2<f64>, height: usize, width: usize) -> Result<Array2<f64>> {
    check_dims(a, height, width, "grad_v")?;
    let mut out = Array2::<f64>::zeros(a.raw_dim());
    for p in 0..a.nrows() {
        for i in 0..height.saturating_sub(1) {
            for j in 0..width {
                let n = i * width + j;
                out[[p, n]] = a[[p, n + width]] - a[[p, n]];
            }
        }
    }
    Ok(out)
}

/// Transpose of [`grad_h`].
pub fn grad_h_adjoint(g: &Array2<f64>, height: usize, width: usize) -> Result<Array2<f64>> {
    check_dims(g, height, width, "grad_h_adjoint")?;
    let mut out = Array2::<f64>::zeros(g.raw_dim());
    for p in 0..g.nrows() {
        for i in 0..height {
            for j in 0..width {
                let n = i * width + j;
                let mut v = 0.0;
                if j > 0 {
                    v += g[[p, n - 1]];
                }
                if j < width - 1 {
                    v -= g[[p, n]];
                }
                out[[p, n]] = v;
            }
        }
    }
    Ok(out)
}

/// Transpose of [`grad_v`].
pub fn grad_v_adjoint(g: &Array2<f64>, height: usize, width: usize) -> Result<Array2<f64>> {
    check_dims(g, height, width, "grad_v_adjoint")?;
    let mut out = Array2::<f64>::zeros(g.raw_dim());
    for p in 0..g.nrows() {
        for i in 0..height {
            for j in 0..width {
                let n = i * width + j;
                let mut v = 0.0;
                if i > 0 {
                    v += g[[p, n - width]];
                }
                if i < height - 1 {
                    v -= g[[p, n]];
                }
                out[[p, n]] = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn constant_map_has_zero_gradients() {
        let a = Array2::from_elem((2, 12), 0.7);
        assert!(grad_h(&a, 3, 4).unwrap().iter().all(|&v| v == 0.0));
        assert!(grad_v(&a, 3, 4).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_two_horizontal_difference() {
        let a = array![[0.0, 1.0]];
        let g = grad_h(&a, 1, 2).unwrap();
        assert_eq!(g, array![[1.0, 0.0]]);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let a = Array2::<f64>::zeros((1, 5));
        assert!(grad_h(&a, 2, 3).is_err());
    }

    #[test]
    fn adjoint_dot_product_test() {
        let mut rng = seeded_rng(23);
        for _ in 0..100 {
            let (h, w, p) = (
                rng.random_range(1..6),
                rng.random_range(1..6),
                rng.random_range(1..4),
            );
            let x = Array2::from_shape_fn((p, h * w), |_| rng.random_range(-1.0..1.0));
            let y = Array2::from_shape_fn((p, h * w), |_| rng.random_range(-1.0..1.0));
            for (fwd, adj) in [
                (grad_h as fn(&Array2<f64>, usize, usize) -> Result<Array2<f64>>, grad_h_adjoint as fn(&Array2<f64>, usize, usize) -> Result<Array2<f64>>),
                (grad_v, grad_v_adjoint),
            ] {
                let lhs: f64 = fwd(&x, h, w)
                    .unwrap()
                    .iter()
                    .zip(y.iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let rhs: f64 = x
                    .iter()
                    .zip(adj(&y, h, w).unwrap().iter())
                    .map(|(a, b)| a * b)
                    .sum();
                assert!(
                    (lhs - rhs).abs() < 1e-10,
                    "adjoint mismatch: {lhs} vs {rhs} ({h}x{w}, P={p})"
                );
            }
        }
    }
}
