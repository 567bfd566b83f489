//! Reference endmember extraction and pure-pixel bundle selection.
//!
//! The extractor is vertex component analysis: the data are projected onto a
//! signal subspace chosen by an SNR estimate (an affine projective lift when
//! the estimate is low, a projective normalization of the raw subspace
//! coordinates otherwise), then endmembers are picked one at a time as the
//! pixels with the largest projection onto random directions orthogonal to
//! the span of the already-selected ones.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::metrics::spectral_angle;
use crate::neural::vae::VaeModel;
use crate::rng::seeded_rng;
use crate::types::{EndmemberMatrix, HyperCube, LatentReference};

/// The pure-pixel bundle selected for one material.
#[derive(Debug, Clone)]
pub struct PurePixelSet {
    pub material: usize,
    /// Flat pixel indices into the cube, unique within the set.
    pub pixel_indices: Vec<usize>,
    /// The selected spectra, one row per pixel (`S_p x L`).
    pub spectra: Array2<f64>,
}

/// Vertex component analysis. Returns `materials` observed-pixel spectra.
pub fn vca(cube: &HyperCube, materials: usize, seed: u64) -> Result<EndmemberMatrix> {
    let bands = cube.bands();
    let n = cube.num_pixels();
    if materials == 0 || materials > bands {
        return Err(Error::Invalid(format!(
            "materials must be in 1..={bands}, got {materials}"
        )));
    }
    if n < materials {
        return Err(Error::Invalid(format!(
            "need at least {materials} pixels, got {n}"
        )));
    }

    // Data matrix R (L x N) statistics.
    let mut mean = vec![0.0f64; bands];
    for pix in cube.pixels() {
        for (m, v) in mean.iter_mut().zip(pix.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Correlation of the mean-removed data: R0 R0' / N.
    let mut cov = Array2::<f64>::zeros((bands, bands));
    for pix in cube.pixels() {
        for i in 0..bands {
            let ci = pix[i] - mean[i];
            for j in i..bands {
                cov[[i, j]] += ci * (pix[j] - mean[j]);
            }
        }
    }
    for i in 0..bands {
        for j in i..bands {
            cov[[i, j]] /= n as f64;
            cov[[j, i]] = cov[[i, j]];
        }
    }
    let (cov_vals, cov_vecs) = symmetric_eigen(&cov);

    // Rank check: the signal subspace of the mean-removed data must span at
    // least materials - 1 dimensions (a P-vertex simplex is (P-1)-dimensional
    // around its mean).
    let val_floor = cov_vals[0].max(0.0) * 1e-12 + 1e-30;
    let rank = cov_vals.iter().filter(|&&v| v > val_floor).count();
    if rank + 1 < materials {
        return Err(Error::Invalid(format!(
            "data subspace dimension {rank} too small for {materials} materials"
        )));
    }

    // SNR estimate from the energy captured by the P-dimensional projection
    // of the mean-removed data.
    let p_y: f64 = cube.data().iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
    let captured: f64 = cov_vals.iter().take(materials).map(|v| v.max(0.0)).sum();
    let p_x = captured + mean_sq;
    let snr_db = if p_y - p_x <= f64::EPSILON * p_y {
        f64::INFINITY
    } else {
        10.0 * ((p_x - (materials as f64 / bands as f64) * p_y) / (p_y - p_x)).log10()
    };
    let snr_threshold = 15.0 + 10.0 * (materials as f64).log10();

    let mut rng = seeded_rng(seed);

    if materials == 1 {
        // Single vertex: the pixel with the largest projection onto the
        // dominant direction of the raw data.
        let (_, vecs) = principal_directions(cube, 1);
        let dir = vecs.column(0);
        let mut best = (0usize, f64::NEG_INFINITY);
        for (idx, pix) in cube.pixels().enumerate() {
            let proj: f64 = pix.iter().zip(dir.iter()).map(|(a, b)| a * b).sum();
            if proj.abs() > best.1 {
                best = (idx, proj.abs());
            }
        }
        let column = Array2::from_shape_vec((bands, 1), cube.pixel(best.0).to_vec())
            .expect("shape by construction");
        return EndmemberMatrix::new(column);
    }

    // Projected coordinates y (d x N) on which the simplex geometry runs.
    let (projected, dim) = if snr_db < snr_threshold {
        // Low SNR: project the mean-removed data onto (P-1) principal axes
        // and lift with a constant coordinate.
        let d = materials - 1;
        let mut x = Array2::<f64>::zeros((d, n));
        for (idx, pix) in cube.pixels().enumerate() {
            for k in 0..d {
                let mut acc = 0.0;
                for l in 0..bands {
                    acc += cov_vecs[[l, k]] * (pix[l] - mean[l]);
                }
                x[[k, idx]] = acc;
            }
        }
        let c = x
            .columns()
            .into_iter()
            .map(|col| col.dot(&col))
            .fold(0.0f64, f64::max)
            .sqrt();
        let mut y = Array2::<f64>::zeros((materials, n));
        for idx in 0..n {
            for k in 0..d {
                y[[k, idx]] = x[[k, idx]];
            }
            y[[d, idx]] = c;
        }
        (y, materials)
    } else {
        // High SNR: project the raw data onto P principal axes and apply a
        // projective normalization.
        let (_, vecs) = principal_directions(cube, materials);
        let mut x = Array2::<f64>::zeros((materials, n));
        for (idx, pix) in cube.pixels().enumerate() {
            for k in 0..materials {
                let mut acc = 0.0;
                for l in 0..bands {
                    acc += vecs[[l, k]] * pix[l];
                }
                x[[k, idx]] = acc;
            }
        }
        let u = x.sum_axis(ndarray::Axis(1)) * (materials as f64 / n as f64);
        let mut y = x.clone();
        for idx in 0..n {
            let denom = x.column(idx).dot(&u);
            let denom = if denom.abs() < 1e-12 {
                1e-12f64.copysign(denom)
            } else {
                denom
            };
            for k in 0..materials {
                y[[k, idx]] /= denom;
            }
        }
        (y, materials)
    };

    // Iterative selection: project onto random directions orthogonal to the
    // span of the vertices selected so far. The first iteration projects
    // orthogonally to e_P only; that placeholder is replaced by the first
    // selected vertex.
    let mut selected: Vec<Array1<f64>> = Vec::with_capacity(materials);
    let mut indices = Vec::with_capacity(materials);
    for _ in 0..materials {
        let basis: Vec<Array1<f64>> = if selected.is_empty() {
            let mut e = Array1::<f64>::zeros(dim);
            e[dim - 1] = 1.0;
            vec![e]
        } else {
            orthonormalize(&selected)
        };
        // Random direction minus its projection onto the current span.
        let f;
        let mut tries = 0;
        loop {
            let mut candidate =
                Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
            for b in &basis {
                let c = candidate.dot(b);
                candidate = &candidate - &(c * b);
            }
            let norm = candidate.dot(&candidate).sqrt();
            if norm > 1e-9 {
                f = candidate / norm;
                break;
            }
            tries += 1;
            if tries > 50 {
                return Err(Error::Invalid(
                    "VCA could not find an orthogonal direction (degenerate subspace)".into(),
                ));
            }
        }
        let mut best = (0usize, f64::NEG_INFINITY);
        for idx in 0..n {
            let v: f64 = projected.column(idx).dot(&f).abs();
            if v > best.1 {
                best = (idx, v);
            }
        }
        indices.push(best.0);
        selected.push(projected.column(best.0).to_owned());
    }

    let mut columns = Array2::<f64>::zeros((bands, materials));
    for (k, &idx) in indices.iter().enumerate() {
        for (l, v) in cube.pixel(idx).iter().enumerate() {
            columns[[l, k]] = *v;
        }
    }
    EndmemberMatrix::new(columns)
}

/// Gram-Schmidt orthonormal basis of a span (near-dependent vectors are
/// dropped).
fn orthonormalize(vectors: &[Array1<f64>]) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut residual = v.clone();
        for b in &basis {
            let c = residual.dot(b);
            residual = &residual - &(c * b);
        }
        let norm = residual.dot(&residual).sqrt();
        if norm > 1e-12 {
            basis.push(residual / norm);
        }
    }
    basis
}

/// Top eigenpairs of the raw correlation matrix `R R' / N`.
fn principal_directions(cube: &HyperCube, count: usize) -> (Array1<f64>, Array2<f64>) {
    let bands = cube.bands();
    let n = cube.num_pixels();
    let mut corr = Array2::<f64>::zeros((bands, bands));
    for pix in cube.pixels() {
        for i in 0..bands {
            for j in i..bands {
                corr[[i, j]] += pix[i] * pix[j];
            }
        }
    }
    for i in 0..bands {
        for j in i..bands {
            corr[[i, j]] /= n as f64;
            corr[[j, i]] = corr[[i, j]];
        }
    }
    let (vals, vecs) = symmetric_eigen(&corr);
    (
        vals.slice(ndarray::s![..count]).to_owned(),
        vecs.slice(ndarray::s![.., ..count]).to_owned(),
    )
}

/// For each material, the `count` pixels with the smallest spectral angle to
/// the reference signature. Ties break toward the lower pixel index; sets
/// for different materials may overlap. Zero-norm pixels are skipped with a
/// warning.
pub fn extract_pure_pixels(
    cube: &HyperCube,
    m0: &EndmemberMatrix,
    count: usize,
) -> Result<Vec<PurePixelSet>> {
    if cube.bands() != m0.bands() {
        return Err(Error::dims(
            "extract_pure_pixels bands",
            format!("{}", m0.bands()),
            format!("{}", cube.bands()),
        ));
    }
    let n = cube.num_pixels();
    if count > n {
        return Err(Error::Invalid(format!(
            "requested {count} pure pixels but the cube has only {n}"
        )));
    }
    let bands = cube.bands();
    let mut sets = Vec::with_capacity(m0.materials());
    for p in 0..m0.materials() {
        let reference = m0.column(p).to_vec();
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(n);
        for (idx, pix) in cube.pixels().enumerate() {
            match spectral_angle(pix, &reference) {
                Ok(angle) => scored.push((angle, idx)),
                Err(_) => {
                    log::warn!("skipping zero-norm pixel {idx} during bundle extraction");
                }
            }
        }
        if scored.len() < count {
            return Err(Error::Invalid(format!(
                "material {p}: only {} valid pixels, need {count}",
                scored.len()
            )));
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut indices = Vec::with_capacity(count);
        let mut spectra = Array2::<f64>::zeros((count, bands));
        for (row, &(_, idx)) in scored.iter().take(count).enumerate() {
            indices.push(idx);
            for (l, v) in cube.pixel(idx).iter().enumerate() {
                spectra[[row, l]] = *v;
            }
        }
        sets.push(PurePixelSet {
            material: p,
            pixel_indices: indices,
            spectra,
        });
    }
    Ok(sets)
}

/// Encode each reference signature with its material's model:
/// column `p` is `encode_mean(model_p, m0[:, p])`.
pub fn latent_reference(models: &[VaeModel], m0: &EndmemberMatrix) -> Result<LatentReference> {
    if models.len() != m0.materials() {
        return Err(Error::dims(
            "latent_reference models",
            format!("{}", m0.materials()),
            format!("{}", models.len()),
        ));
    }
    let k = models
        .first()
        .map(|m| m.latent_dim())
        .ok_or_else(|| Error::Invalid("latent_reference needs at least one model".into()))?;
    let mut codes = Array2::<f64>::zeros((k, models.len()));
    for (p, model) in models.iter().enumerate() {
        if model.bands() != m0.bands() || model.latent_dim() != k {
            return Err(Error::dims(
                format!("latent_reference model {p}"),
                format!("bands {}, K {k}", m0.bands()),
                format!("bands {}, K {}", model.bands(), model.latent_dim()),
            ));
        }
        let code = model.encode_mean(m0.column(p))?;
        codes.column_mut(p).assign(&code);
    }
    LatentReference::new(codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::synth::gen_procedural_endmembers;
    use rand::Rng;

    /// A cube whose pixels are the P vertices plus interior mixtures.
    fn simplex_cube(bands: usize, materials: usize, seed: u64, noise: f64) -> (HyperCube, EndmemberMatrix) {
        let m = gen_procedural_endmembers(bands, materials, seed).unwrap();
        let mut rng = seeded_rng(seed + 1);
        let n_side = 8;
        let n = n_side * n_side;
        let mut data = Vec::with_capacity(n * bands);
        for idx in 0..n {
            let mut weights = vec![0.0; materials];
            if idx < materials {
                weights[idx] = 1.0; // exact vertices present
            } else {
                let mut sum = 0.0;
                for w in weights.iter_mut() {
                    *w = rng.random_range(0.05..1.0);
                    sum += *w;
                }
                for w in weights.iter_mut() {
                    *w /= sum;
                }
            }
            for l in 0..bands {
                let mut v = 0.0;
                for (p, w) in weights.iter().enumerate() {
                    v += w * m.as_array()[[l, p]];
                }
                data.push(v + noise * rng.random_range(-1.0..1.0));
            }
        }
        (HyperCube::new(n_side, n_side, bands, data).unwrap(), m)
    }

    fn best_angle_to(column: &[f64], m: &EndmemberMatrix) -> f64 {
        (0..m.materials())
            .map(|p| spectral_angle(column, &m.column(p).to_vec()).unwrap())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn vca_recovers_noiseless_vertices() {
        let (cube, m) = simplex_cube(24, 3, 81, 0.0);
        let est = vca(&cube, 3, 5).unwrap();
        for p in 0..3 {
            let angle = best_angle_to(&est.column(p).to_vec(), &m);
            assert!(angle < 1e-6, "vertex {p} off by {angle} rad");
        }
    }

    #[test]
    fn vca_handles_noisy_data() {
        let (cube, m) = simplex_cube(24, 3, 82, 0.005);
        let est = vca(&cube, 3, 6).unwrap();
        for p in 0..3 {
            let angle = best_angle_to(&est.column(p).to_vec(), &m);
            assert!(angle < 0.05, "vertex {p} off by {angle} rad");
        }
    }

    #[test]
    fn vca_single_material_returns_a_pixel() {
        let (cube, _) = simplex_cube(16, 1, 83, 0.0);
        let est = vca(&cube, 1, 7).unwrap();
        let found = cube
            .pixels()
            .any(|pix| pix.iter().zip(est.column(0).iter()).all(|(a, b)| a == b));
        assert!(found, "VCA output must be an observed pixel");
    }

    #[test]
    fn vca_outputs_are_observed_pixels() {
        let (cube, _) = simplex_cube(20, 3, 84, 0.002);
        let est = vca(&cube, 3, 8).unwrap();
        for p in 0..3 {
            let col: Vec<f64> = est.column(p).to_vec();
            let found = cube
                .pixels()
                .any(|pix| pix.iter().zip(col.iter()).all(|(a, b)| a == b));
            assert!(found, "column {p} is not an observed pixel");
        }
    }

    #[test]
    fn vca_rejects_rank_deficient_data() {
        // All pixels identical: the simplex has no extent.
        let cube = HyperCube::new(4, 4, 10, vec![0.5; 160]).unwrap();
        assert!(vca(&cube, 3, 0).is_err());
    }

    #[test]
    fn pure_pixel_selection_matches_brute_force() {
        let (cube, m) = simplex_cube(18, 3, 85, 0.01);
        let count = 12;
        let sets = extract_pure_pixels(&cube, &m, count).unwrap();
        for set in &sets {
            assert_eq!(set.pixel_indices.len(), count);
            let reference = m.column(set.material).to_vec();
            let mut all: Vec<(f64, usize)> = cube
                .pixels()
                .enumerate()
                .map(|(i, pix)| (spectral_angle(pix, &reference).unwrap(), i))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = all.iter().take(count).map(|&(_, i)| i).collect();
            assert_eq!(set.pixel_indices, expected);
            // Spectra rows match the indexed pixels.
            for (row, &idx) in set.pixel_indices.iter().enumerate() {
                for (l, v) in cube.pixel(idx).iter().enumerate() {
                    assert_eq!(set.spectra[[row, l]], *v);
                }
            }
        }
    }

    #[test]
    fn pure_pixel_selection_scale_invariant() {
        let (cube, m) = simplex_cube(18, 3, 86, 0.01);
        let mut rng = seeded_rng(87);
        let scaled: Vec<f64> = cube
            .pixels()
            .flat_map(|pix| {
                let s = rng.random_range(0.5..2.0);
                pix.iter().map(move |v| v * s).collect::<Vec<_>>()
            })
            .collect();
        let scaled_cube = HyperCube::new(cube.height(), cube.width(), 18, scaled).unwrap();
        let a = extract_pure_pixels(&cube, &m, 10).unwrap();
        let b = extract_pure_pixels(&scaled_cube, &m, 10).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.pixel_indices, y.pixel_indices);
        }
    }

    #[test]
    fn reference_pixel_selected_first() {
        let (cube, _) = simplex_cube(16, 2, 88, 0.0);
        // Use an actual pixel as the reference: it has angle zero to itself.
        let reference = cube.pixel(5).to_vec();
        let m = EndmemberMatrix::new(
            Array2::from_shape_vec((16, 1), reference).unwrap(),
        )
        .unwrap();
        let sets = extract_pure_pixels(&cube, &m, 3).unwrap();
        assert_eq!(sets[0].pixel_indices[0], 5);
    }

    #[test]
    fn select_all_pixels_when_count_is_n() {
        let (cube, m) = simplex_cube(16, 2, 89, 0.0);
        let n = cube.num_pixels();
        let sets = extract_pure_pixels(&cube, &m, n).unwrap();
        for set in sets {
            let mut sorted = set.pixel_indices.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
        assert!(extract_pure_pixels(&cube, &m, n + 1).is_err());
    }

    #[test]
    fn latent_reference_shape_and_determinism() {
        let mut rng = seeded_rng(90);
        let m = gen_procedural_endmembers(20, 3, 91).unwrap();
        let models: Vec<VaeModel> = (0..3).map(|_| VaeModel::standard(20, 2, &mut rng)).collect();
        let a = latent_reference(&models, &m).unwrap();
        let b = latent_reference(&models, &m).unwrap();
        assert_eq!((a.latent_dim(), a.materials()), (2, 3));
        assert_eq!(a, b);
        for p in 0..3 {
            let direct = models[p].encode_mean(m.column(p)).unwrap();
            for k in 0..2 {
                assert_eq!(a.column(p)[k], direct[k]);
            }
        }
    }

    #[test]
    fn latent_reference_rejects_band_mismatch() {
        let mut rng = seeded_rng(92);
        let m = gen_procedural_endmembers(20, 2, 93).unwrap();
        let models = vec![
            VaeModel::standard(20, 2, &mut rng),
            VaeModel::standard(18, 2, &mut rng),
        ];
        assert!(latent_reference(&models, &m).is_err());
    }
}
