//! Evaluation metrics: spectral angle, NRMSE, SAM, image reconstruction,
//! and material-permutation resolution.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::types::{AbundanceMatrix, EndmemberTensor, HyperCube};

fn angle_impl<'a, I, J>(a: I, b: J) -> Option<f64>
where
    I: Iterator<Item = &'a f64>,
    J: Iterator<Item = &'a f64>,
{
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Some(cos.acos())
}

/// Angle in radians between two spectra, in `[0, pi]`.
///
/// The cosine argument is clamped to `[-1, 1]` before `acos` since rounding
/// can push it slightly out of range.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims(
            "spectral_angle",
            format!("{}", a.len()),
            format!("{}", b.len()),
        ));
    }
    angle_impl(a.iter(), b.iter()).ok_or_else(|| Error::ZeroNorm {
        context: "spectral_angle input".into(),
    })
}

/// Frobenius-normalized root mean squared error between two same-shape
/// tensors passed as flat slices: `sqrt(|truth - estimate|_F^2 / |truth|_F^2)`.
pub fn nrmse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::dims(
            "nrmse",
            format!("{}", truth.len()),
            format!("{}", estimate.len()),
        ));
    }
    let mut err = 0.0;
    let mut norm = 0.0;
    for (&t, &e) in truth.iter().zip(estimate.iter()) {
        let d = t - e;
        err += d * d;
        norm += t * t;
    }
    if norm == 0.0 {
        return Err(Error::ZeroNorm {
            context: "nrmse truth tensor".into(),
        });
    }
    Ok((err / norm).sqrt())
}

/// Spectral angle mapper between two endmember tensors: the mean over pixels
/// of the *sum* over materials of the per-signature angles. The sum over
/// materials is deliberately not divided by P.
pub fn sam_metric(truth: &EndmemberTensor, estimate: &EndmemberTensor) -> Result<f64> {
    if truth.as_array().shape() != estimate.as_array().shape() {
        return Err(Error::dims(
            "sam_metric",
            format!("{:?}", truth.as_array().shape()),
            format!("{:?}", estimate.as_array().shape()),
        ));
    }
    let (p_count, n_count) = (truth.materials(), truth.pixels());
    let mut total = 0.0;
    for n in 0..n_count {
        for p in 0..p_count {
            let t = truth.signature(p, n);
            let e = estimate.signature(p, n);
            let angle = angle_impl(t.iter(), e.iter()).ok_or_else(|| Error::ZeroNorm {
                context: format!("sam_metric signature (material {p}, pixel {n})"),
            })?;
            total += angle;
        }
    }
    Ok(total / n_count as f64)
}

/// Mix each pixel's endmember matrix with its abundance column:
/// pixel `n` of the result is `M_n a_n`.
pub fn reconstruct_image(
    em: &EndmemberTensor,
    a: &AbundanceMatrix,
    height: usize,
    width: usize,
) -> Result<HyperCube> {
    let n_count = em.pixels();
    if a.pixels() != n_count || height * width != n_count {
        return Err(Error::dims(
            "reconstruct_image pixels",
            format!("{n_count}"),
            format!("{} ({}x{})", a.pixels(), height, width),
        ));
    }
    if a.materials() != em.materials() {
        return Err(Error::dims(
            "reconstruct_image materials",
            format!("{}", em.materials()),
            format!("{}", a.materials()),
        ));
    }
    let bands = em.bands();
    let mut data = vec![0.0f64; n_count * bands];
    for n in 0..n_count {
        let m_n = em.pixel_matrix(n);
        let a_n = a.column(n);
        let out = &mut data[n * bands..(n + 1) * bands];
        for p in 0..em.materials() {
            let ap = a_n[p];
            for l in 0..bands {
                out[l] += m_n[[l, p]] * ap;
            }
        }
    }
    HyperCube::new(height, width, bands, data)
}

/// Resolve the material permutation between two endmember matrices by
/// greedy spectral-angle matching: repeatedly pair the globally closest
/// unmatched (estimate, truth) columns. Returns `perm` with
/// `perm[est_index] = truth_index`.
pub fn greedy_material_matching(
    estimate: ndarray::ArrayView2<'_, f64>,
    truth: ndarray::ArrayView2<'_, f64>,
) -> Result<Vec<usize>> {
    if estimate.nrows() != truth.nrows() || estimate.ncols() != truth.ncols() {
        return Err(Error::dims(
            "greedy_material_matching",
            format!("{}x{}", truth.nrows(), truth.ncols()),
            format!("{}x{}", estimate.nrows(), estimate.ncols()),
        ));
    }
    let p = estimate.ncols();
    let mut angles = vec![vec![0.0f64; p]; p];
    for (i, row) in angles.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = angle_impl(estimate.column(i).iter(), truth.column(j).iter()).ok_or_else(
                || Error::ZeroNorm {
                    context: format!("material matching column ({i}, {j})"),
                },
            )?;
        }
    }
    let mut perm = vec![usize::MAX; p];
    let mut est_used = vec![false; p];
    let mut truth_used = vec![false; p];
    for _ in 0..p {
        let mut best = (0usize, 0usize, f64::INFINITY);
        for i in 0..p {
            if est_used[i] {
                continue;
            }
            for j in 0..p {
                if truth_used[j] {
                    continue;
                }
                if angles[i][j] < best.2 {
                    best = (i, j, angles[i][j]);
                }
            }
        }
        perm[best.0] = best.1;
        est_used[best.0] = true;
        truth_used[best.1] = true;
    }
    Ok(perm)
}

/// Reorder abundance rows by a permutation from
/// [`greedy_material_matching`]: row `p` of the input becomes row
/// `perm[p]` of the output.
pub fn permute_abundance_rows(a: &AbundanceMatrix, perm: &[usize]) -> Result<AbundanceMatrix> {
    if perm.len() != a.materials() {
        return Err(Error::dims(
            "permute_abundance_rows",
            format!("{}", a.materials()),
            format!("{}", perm.len()),
        ));
    }
    let mut out = ndarray::Array2::<f64>::zeros((a.materials(), a.pixels()));
    for (src, &dst) in perm.iter().enumerate() {
        for n in 0..a.pixels() {
            out[[dst, n]] = a.as_array()[[src, n]];
        }
    }
    AbundanceMatrix::new(out)
}

/// Reorder the material axis of an endmember tensor by a permutation.
pub fn permute_tensor_materials(
    em: &EndmemberTensor,
    perm: &[usize],
) -> Result<EndmemberTensor> {
    if perm.len() != em.materials() {
        return Err(Error::dims(
            "permute_tensor_materials",
            format!("{}", em.materials()),
            format!("{}", perm.len()),
        ));
    }
    let mut out = Array3::<f64>::zeros((em.bands(), em.materials(), em.pixels()));
    for (src, &dst) in perm.iter().enumerate() {
        for n in 0..em.pixels() {
            for l in 0..em.bands() {
                out[[l, dst, n]] = em.as_array()[[l, src, n]];
            }
        }
    }
    EndmemberTensor::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::EndmemberMatrix;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array3};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn angle_identical_is_zero() {
        assert_abs_diff_eq!(spectral_angle(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn angle_orthogonal_is_half_pi() {
        assert_abs_diff_eq!(
            spectral_angle(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            FRAC_PI_2
        );
    }

    #[test]
    fn angle_45_degrees() {
        assert_abs_diff_eq!(
            spectral_angle(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            FRAC_PI_4,
            epsilon = 1e-15
        );
    }

    #[test]
    fn angle_zero_norm_errors() {
        assert!(spectral_angle(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn angle_scale_invariant() {
        let a = [0.3, 0.8, 0.1];
        let b = [0.5, 0.2, 0.9];
        let scaled: Vec<f64> = a.iter().map(|v| v * 7.25).collect();
        assert_abs_diff_eq!(
            spectral_angle(&a, &b).unwrap(),
            spectral_angle(&scaled, &b).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn nrmse_identity_and_zero() {
        let x = [1.0, -2.0, 3.0];
        assert_abs_diff_eq!(nrmse(&x, &x).unwrap(), 0.0);
        assert_abs_diff_eq!(nrmse(&x, &[0.0; 3]).unwrap(), 1.0);
    }

    #[test]
    fn nrmse_three_four_five() {
        assert_abs_diff_eq!(nrmse(&[3.0, 4.0], &[3.0, 0.0]).unwrap(), 0.8);
    }

    #[test]
    fn nrmse_rejects_zero_truth() {
        assert!(nrmse(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sam_identical_is_zero() {
        let m = EndmemberMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let t = EndmemberTensor::replicate(&m, 3);
        assert_abs_diff_eq!(sam_metric(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn sam_sums_over_materials() {
        // N=1, P=2: pairs at 45 and 90 degrees -> 3*pi/4.
        let mut truth = Array3::<f64>::zeros((2, 2, 1));
        let mut est = Array3::<f64>::zeros((2, 2, 1));
        truth[[0, 0, 0]] = 1.0; // material 0: e_x
        truth[[0, 1, 0]] = 1.0; // material 1: e_x
        est[[0, 0, 0]] = 1.0; // 45 degrees from e_x
        est[[1, 0, 0]] = 1.0;
        est[[1, 1, 0]] = 1.0; // 90 degrees from e_x
        let truth = EndmemberTensor::new(truth).unwrap();
        let est = EndmemberTensor::new(est).unwrap();
        assert_abs_diff_eq!(
            sam_metric(&truth, &est).unwrap(),
            3.0 * PI / 4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sam_averages_over_pixels() {
        // N=2, P=1: angles pi/4 and pi/2 -> 3*pi/8.
        let mut truth = Array3::<f64>::zeros((2, 1, 2));
        let mut est = Array3::<f64>::zeros((2, 1, 2));
        truth[[0, 0, 0]] = 1.0;
        truth[[0, 0, 1]] = 1.0;
        est[[0, 0, 0]] = 1.0;
        est[[1, 0, 0]] = 1.0;
        est[[1, 0, 1]] = 1.0;
        let truth = EndmemberTensor::new(truth).unwrap();
        let est = EndmemberTensor::new(est).unwrap();
        assert_abs_diff_eq!(
            sam_metric(&truth, &est).unwrap(),
            3.0 * PI / 8.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn reconstruct_single_material_returns_endmember() {
        let m = EndmemberMatrix::new(array![[0.3], [0.7], [0.5]]).unwrap();
        let em = EndmemberTensor::replicate(&m, 4);
        let a = AbundanceMatrix::new(array![[1.0, 1.0, 1.0, 1.0]]).unwrap();
        let cube = reconstruct_image(&em, &a, 2, 2).unwrap();
        for n in 0..4 {
            assert_eq!(cube.pixel(n), &[0.3, 0.7, 0.5]);
        }
    }

    #[test]
    fn reconstruct_is_linear_in_abundances() {
        let m = EndmemberMatrix::new(array![[0.9, 0.1], [0.2, 0.8], [0.4, 0.3]]).unwrap();
        let em = EndmemberTensor::replicate(&m, 2);
        let a1 = AbundanceMatrix::new(array![[1.0, 0.25], [0.0, 0.75]]).unwrap();
        let a2 = AbundanceMatrix::new(array![[0.5, 0.6], [0.5, 0.4]]).unwrap();
        let alpha = 0.3;
        let blended = AbundanceMatrix::new(
            alpha * a1.as_array() + (1.0 - alpha) * a2.as_array(),
        )
        .unwrap();
        let y1 = reconstruct_image(&em, &a1, 1, 2).unwrap();
        let y2 = reconstruct_image(&em, &a2, 1, 2).unwrap();
        let yb = reconstruct_image(&em, &blended, 1, 2).unwrap();
        for i in 0..y1.data().len() {
            assert_abs_diff_eq!(
                yb.data()[i],
                alpha * y1.data()[i] + (1.0 - alpha) * y2.data()[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn reconstruct_rejects_mismatched_dims() {
        let m = EndmemberMatrix::new(array![[0.9, 0.1], [0.2, 0.8]]).unwrap();
        let em = EndmemberTensor::replicate(&m, 2);
        let a = AbundanceMatrix::new(array![[1.0], [0.0]]).unwrap();
        assert!(reconstruct_image(&em, &a, 1, 2).is_err());
    }

    #[test]
    fn matching_resolves_permutation() {
        let truth = array![[1.0, 0.0, 0.2], [0.0, 1.0, 0.2], [0.1, 0.1, 1.0]];
        // Estimate columns are truth columns in order (2, 0, 1).
        let est = array![[0.2, 1.0, 0.0], [0.2, 0.0, 1.0], [1.0, 0.1, 0.1]];
        let perm = greedy_material_matching(est.view(), truth.view()).unwrap();
        assert_eq!(perm, vec![2, 0, 1]);

        let a = AbundanceMatrix::new(array![
            [0.5, 0.2],
            [0.25, 0.3],
            [0.25, 0.5]
        ])
        .unwrap();
        let permuted = permute_abundance_rows(&a, &perm).unwrap();
        // Row 0 (truth material 2) came from estimate row 0.
        assert_eq!(permuted.as_array()[[2, 0]], 0.5);
        assert_eq!(permuted.as_array()[[0, 0]], 0.25);
        assert_eq!(permuted.as_array()[[1, 0]], 0.25);
    }
}
