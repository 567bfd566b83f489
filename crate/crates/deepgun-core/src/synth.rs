//! Synthetic scene generation: procedural endmember spectra, spatially
//! correlated abundance maps with guaranteed near-pure pixels, per-pixel
//! endmember variability fields, and SNR-calibrated additive noise.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{seeded_rng, subseed, tags};
use crate::types::{AbundanceMatrix, EndmemberMatrix, EndmemberTensor, HyperCube};

/// Additive white Gaussian noise calibrated to a target SNR.
///
/// `snr_db = f64::INFINITY` disables noise entirely.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::Invalid(
                "snr_db must be finite or +inf (noise disabled)".into(),
            ));
        }
        Ok(Self { snr_db, seed })
    }
}

/// Endmember variability imposed on a reference matrix.
///
/// Every variant produces a strictly positive multiplicative factor field
/// `psi` with `M_n = psi_n .* M0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariabilityModel {
    /// No variability; the reference matrix is replicated.
    None,
    /// Per pixel and material, a random piecewise-linear multiplicative
    /// curve over the bands with values in `[1 - amplitude, 1 + amplitude]`.
    PiecewiseLinear { amplitude: f64 },
    /// Band-dependent scaling that varies smoothly in both the spatial and
    /// spectral dimensions: `psi = 1 + amplitude * g`, `g` a smoothed
    /// unit-variance field, clipped so `psi >= 0.5`.
    SmoothSpatialSpectral { amplitude: f64 },
    /// Illumination-geometry proxy: `psi = (d cos(theta_n) + s) / (d + s)`
    /// with a smooth per-pixel angle field over `[0, max_angle]`.
    AtmosphericGeometry {
        direct: f64,
        diffuse: f64,
        max_angle: f64,
    },
}

impl VariabilityModel {
    /// DC1-style defaults.
    pub fn dc1() -> Self {
        VariabilityModel::PiecewiseLinear { amplitude: 0.2 }
    }

    /// DC2-style defaults.
    pub fn dc2() -> Self {
        VariabilityModel::SmoothSpatialSpectral { amplitude: 0.15 }
    }

    /// DC3-style defaults.
    pub fn dc3() -> Self {
        VariabilityModel::AtmosphericGeometry {
            direct: 0.8,
            diffuse: 0.2,
            max_angle: std::f64::consts::FRAC_PI_6,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            VariabilityModel::None => Ok(()),
            VariabilityModel::PiecewiseLinear { amplitude } => {
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::Invalid(format!(
                        "piecewise-linear amplitude must be in [0, 1), got {amplitude}"
                    )));
                }
                Ok(())
            }
            VariabilityModel::SmoothSpatialSpectral { amplitude } => {
                if !amplitude.is_finite() || amplitude < 0.0 {
                    return Err(Error::Invalid(format!(
                        "smooth-field amplitude must be non-negative, got {amplitude}"
                    )));
                }
                Ok(())
            }
            VariabilityModel::AtmosphericGeometry {
                direct,
                diffuse,
                max_angle,
            } => {
                if direct < 0.0 || diffuse <= 0.0 || !(0.0..std::f64::consts::FRAC_PI_2).contains(&max_angle) {
                    return Err(Error::Invalid(
                        "atmospheric-geometry parameters out of range".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// A generated scene: abundances, the per-pixel endmember tensor, and the
/// variability-free reference matrix.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub abundances: AbundanceMatrix,
    pub endmembers: EndmemberTensor,
    pub base_endmembers: EndmemberMatrix,
    pub height: usize,
    pub width: usize,
}

/// Generate `materials` smooth, distinct spectra with values in
/// `[0.05, 0.95]` and pairwise spectral angles of at least 0.1 rad.
pub fn gen_procedural_endmembers(
    bands: usize,
    materials: usize,
    seed: u64,
) -> Result<EndmemberMatrix> {
    if bands < 8 {
        return Err(Error::Invalid(format!(
            "need at least 8 bands, got {bands}"
        )));
    }
    if materials == 0 || materials > bands {
        return Err(Error::Invalid(format!(
            "materials must be in 1..={bands}, got {materials}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut columns: Vec<Array1<f64>> = Vec::with_capacity(materials);
    let min_angle = 0.1;

    for p in 0..materials {
        let mut accepted = false;
        for _attempt in 0..100 {
            let candidate = random_smooth_spectrum(bands, &mut rng);
            let separated = columns.iter().all(|existing| {
                crate::metrics::spectral_angle(
                    candidate.as_slice().unwrap(),
                    existing.as_slice().unwrap(),
                )
                .map(|a| a >= min_angle)
                .unwrap_or(false)
            });
            if separated {
                columns.push(candidate);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Invalid(format!(
                "could not generate a spectrum for material {p} separated by {min_angle} rad within 100 attempts"
            )));
        }
    }

    let mut data = Array2::<f64>::zeros((bands, materials));
    for (p, col) in columns.iter().enumerate() {
        data.column_mut(p).assign(col);
    }
    EndmemberMatrix::new(data)
}

/// One spectrum: 3..=6 Gaussian bumps plus a gentle linear trend, min-max
/// normalized into `[0.05, 0.95]`.
fn random_smooth_spectrum(bands: usize, rng: &mut ChaCha20Rng) -> Array1<f64> {
    let l = bands as f64;
    let n_bumps = rng.random_range(3..=6);
    let mut centers = Vec::with_capacity(n_bumps);
    let mut widths = Vec::with_capacity(n_bumps);
    let mut amps = Vec::with_capacity(n_bumps);
    for _ in 0..n_bumps {
        centers.push(rng.random_range(0.0..l));
        widths.push(rng.random_range(l / 20.0..l / 5.0));
        amps.push(rng.random_range(0.3..1.0));
    }
    let slope = rng.random_range(-0.3..0.3);
    let mut spectrum = Array1::<f64>::zeros(bands);
    for (i, v) in spectrum.iter_mut().enumerate() {
        let x = i as f64;
        let mut acc = slope * (x / (l - 1.0) - 0.5);
        for b in 0..n_bumps {
            let d = (x - centers[b]) / widths[b];
            acc += amps[b] * (-0.5 * d * d).exp();
        }
        *v = acc;
    }
    let min = spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = spectrum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = (max - min).max(1e-12);
    spectrum.mapv(|v| (0.05 + 0.9 * (v - min) / range).clamp(0.05, 0.95))
}

/// Gaussian blur of a 1-D signal with replicate boundary handling.
fn blur_1d(values: &[f64], std: f64) -> Vec<f64> {
    if std <= 0.0 {
        return values.to_vec();
    }
    let radius = (3.0 * std).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for k in -radius..=radius {
        let w = (-0.5 * (k as f64 / std).powi(2)).exp();
        kernel.push(w);
        sum += w;
    }
    for w in &mut kernel {
        *w /= sum;
    }
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(ki, &w)| {
                    let j = (i + ki as isize - radius).clamp(0, n - 1);
                    w * values[j as usize]
                })
                .sum()
        })
        .collect()
}

/// White noise on an `h x w` grid smoothed by a separable Gaussian kernel.
fn gaussian_random_field(
    height: usize,
    width: usize,
    kernel_std: f64,
    rng: &mut ChaCha20Rng,
) -> Array2<f64> {
    let mut field = Array2::from_shape_fn((height, width), |_| {
        rng.sample::<f64, _>(StandardNormal)
    });
    // rows
    for i in 0..height {
        let row: Vec<f64> = field.row(i).to_vec();
        let blurred = blur_1d(&row, kernel_std);
        for (j, v) in blurred.into_iter().enumerate() {
            field[[i, j]] = v;
        }
    }
    // columns
    for j in 0..width {
        let col: Vec<f64> = field.column(j).to_vec();
        let blurred = blur_1d(&col, kernel_std);
        for (i, v) in blurred.into_iter().enumerate() {
            field[[i, j]] = v;
        }
    }
    field
}

/// Spatially correlated abundance maps on the unit simplex.
///
/// Per-material Gaussian random fields (kernel std `min(h, w) / 8`) are
/// shifted non-negative and column-normalized. Before normalization, the top
/// 2% of each material's field is forced high enough that the normalized
/// abundance reaches at least 0.95, guaranteeing near-pure pixels; pixels
/// already claimed by an earlier material are skipped so every material
/// keeps its full quota.
pub fn gen_abundance_maps(
    height: usize,
    width: usize,
    materials: usize,
    seed: u64,
) -> Result<AbundanceMatrix> {
    if materials == 0 {
        return Err(Error::Invalid("materials must be >= 1".into()));
    }
    if height == 0 || width == 0 {
        return Err(Error::Invalid("image dimensions must be positive".into()));
    }
    let n = height * width;
    let mut rng = seeded_rng(seed);
    let kernel_std = height.min(width) as f64 / 8.0;

    let mut fields = Array2::<f64>::zeros((materials, n));
    for p in 0..materials {
        let grf = gaussian_random_field(height, width, kernel_std, &mut rng);
        let min = grf.iter().cloned().fold(f64::INFINITY, f64::min);
        for (idx, v) in grf.iter().enumerate() {
            // Cubing the shifted field sharpens the maps so that each
            // material dominates sizable regions; without it the simplex
            // normalization of overlapping random fields yields a scene of
            // near-uniform mixtures with almost no pure support.
            fields[[p, idx]] = (v - min).powi(3);
        }
    }

    if materials > 1 {
        let quota = ((0.02 * n as f64).ceil() as usize).max(1);
        let mut claimed = vec![false; n];
        for p in 0..materials {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| fields[[p, b]].partial_cmp(&fields[[p, a]]).unwrap());
            let mut taken = 0;
            for &idx in &order {
                if taken == quota {
                    break;
                }
                if claimed[idx] {
                    continue;
                }
                claimed[idx] = true;
                taken += 1;
                let others: f64 = (0..materials)
                    .filter(|&q| q != p)
                    .map(|q| fields[[q, idx]])
                    .sum();
                let target = if others > 0.0 { 19.0 * others } else { 1.0 };
                if fields[[p, idx]] < target {
                    fields[[p, idx]] = target;
                }
            }
        }
    }

    for idx in 0..n {
        let sum: f64 = (0..materials).map(|p| fields[[p, idx]]).sum();
        if sum > 0.0 {
            for p in 0..materials {
                fields[[p, idx]] /= sum;
            }
        } else {
            for p in 0..materials {
                fields[[p, idx]] = 1.0 / materials as f64;
            }
        }
    }

    AbundanceMatrix::new(fields)
}

/// Apply a variability model to a reference endmember matrix, producing one
/// endmember matrix per pixel.
pub fn apply_variability(
    m0: &EndmemberMatrix,
    model: &VariabilityModel,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<EndmemberTensor> {
    model.validate()?;
    let n = height * width;
    if n == 0 {
        return Err(Error::Invalid("image dimensions must be positive".into()));
    }
    let (l, p_count) = (m0.bands(), m0.materials());
    let mut rng = seeded_rng(seed);
    let mut data = Array3::<f64>::zeros((l, p_count, n));

    match *model {
        VariabilityModel::None => {
            for n_idx in 0..n {
                data.slice_mut(ndarray::s![.., .., n_idx]).assign(m0.as_array());
            }
        }
        VariabilityModel::PiecewiseLinear { amplitude } => {
            // Breakpoint positions are drawn once per material, so each
            // material's factor curves form a low-dimensional family (one
            // random value per node and pixel) as the variability model
            // intends; positions drawn per pixel would make the family
            // dimensionality explode with the band count.
            let nodes: Vec<[f64; PIECEWISE_BREAKPOINTS]> = (0..p_count)
                .map(|_| {
                    let mut xs = [0.0f64; PIECEWISE_BREAKPOINTS];
                    for x in xs.iter_mut() {
                        *x = rng.random_range(0.0..l as f64 - 1.0);
                    }
                    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    xs
                })
                .collect();
            for n_idx in 0..n {
                for p in 0..p_count {
                    let curve = piecewise_linear_curve(l, &nodes[p], amplitude, &mut rng);
                    for band in 0..l {
                        data[[band, p, n_idx]] = curve[band] * m0.as_array()[[band, p]];
                    }
                }
            }
        }
        VariabilityModel::SmoothSpatialSpectral { amplitude } => {
            let spatial_std = height.min(width) as f64 / 6.0;
            let spectral_std = l as f64 / 10.0;
            for p in 0..p_count {
                // 3-D field: spatially smoothed per band, then smoothed
                // along the spectral axis, normalized to unit variance.
                let mut field = Array2::<f64>::zeros((n, l));
                for band in 0..l {
                    let grf = gaussian_random_field(height, width, spatial_std, &mut rng);
                    for (idx, v) in grf.iter().enumerate() {
                        field[[idx, band]] = *v;
                    }
                }
                for idx in 0..n {
                    let spectrum: Vec<f64> = field.row(idx).to_vec();
                    let blurred = blur_1d(&spectrum, spectral_std);
                    for (band, v) in blurred.into_iter().enumerate() {
                        field[[idx, band]] = v;
                    }
                }
                let mean = field.iter().sum::<f64>() / field.len() as f64;
                let var = field.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / field.len() as f64;
                let std = var.sqrt().max(1e-12);
                for n_idx in 0..n {
                    for band in 0..l {
                        let g = (field[[n_idx, band]] - mean) / std;
                        let psi = (1.0 + amplitude * g).max(0.5);
                        data[[band, p, n_idx]] = psi * m0.as_array()[[band, p]];
                    }
                }
            }
        }
        VariabilityModel::AtmosphericGeometry {
            direct,
            diffuse,
            max_angle,
        } => {
            let spatial_std = height.min(width) as f64 / 6.0;
            let grf = gaussian_random_field(height, width, spatial_std, &mut rng);
            let min = grf.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = grf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let range = (max - min).max(1e-12);
            let denom = direct + diffuse; // theta_0 = 0
            for (n_idx, g) in grf.iter().enumerate() {
                let theta = max_angle * (g - min) / range;
                let psi = (direct * theta.cos() + diffuse) / denom;
                for p in 0..p_count {
                    for band in 0..l {
                        data[[band, p, n_idx]] = psi * m0.as_array()[[band, p]];
                    }
                }
            }
        }
    }

    EndmemberTensor::new(data)
}

const PIECEWISE_BREAKPOINTS: usize = 4;

/// Random multiplicative curve over the bands: node values in
/// `[1 - a, 1 + a]` at the given sorted breakpoint positions, linearly
/// interpolated, held constant beyond the outermost breakpoints.
///
/// The node values come from a two-parameter level + tilt draw, so each
/// material's factor curves form a two-dimensional family. Independent
/// values per node would put the variability far outside any
/// low-dimensional manifold, which is the regime the whole approach (and
/// this data generator) is meant to model.
fn piecewise_linear_curve(
    bands: usize,
    xs: &[f64; PIECEWISE_BREAKPOINTS],
    amplitude: f64,
    rng: &mut ChaCha20Rng,
) -> Vec<f64> {
    let level = rng.random_range(-0.25..=0.25);
    let tilt = rng.random_range(-0.75..=0.75);
    let first = xs[0];
    let span = (xs[PIECEWISE_BREAKPOINTS - 1] - first).max(1e-12);
    let mut ys = [0.0f64; PIECEWISE_BREAKPOINTS];
    for (y, &x) in ys.iter_mut().zip(xs.iter()) {
        let t = 2.0 * (x - first) / span - 1.0;
        *y = 1.0 + amplitude * (level + tilt * t);
    }

    (0..bands)
        .map(|band| {
            let x = band as f64;
            if x <= xs[0] {
                ys[0]
            } else if x >= xs[PIECEWISE_BREAKPOINTS - 1] {
                ys[PIECEWISE_BREAKPOINTS - 1]
            } else {
                let mut seg = 0;
                while x > xs[seg + 1] {
                    seg += 1;
                }
                let span = (xs[seg + 1] - xs[seg]).max(1e-12);
                let t = (x - xs[seg]) / span;
                ys[seg] + t * (ys[seg + 1] - ys[seg])
            }
        })
        .collect()
}

/// Mix the scene and add SNR-calibrated white Gaussian noise. The drawn
/// noise is rescaled so the empirical SNR matches `noise.snr_db` exactly.
pub fn gen_cube(gt: &GroundTruth, noise: &NoiseSpec) -> Result<HyperCube> {
    let signal = crate::metrics::reconstruct_image(
        &gt.endmembers,
        &gt.abundances,
        gt.height,
        gt.width,
    )?;
    if noise.snr_db == f64::INFINITY {
        return Ok(signal);
    }
    let mut rng = seeded_rng(noise.seed);
    let raw: Vec<f64> = (0..signal.data().len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let signal_power: f64 = signal.data().iter().map(|v| v * v).sum();
    let noise_power: f64 = raw.iter().map(|v| v * v).sum();
    if noise_power == 0.0 {
        return Err(Error::Invalid("degenerate noise draw".into()));
    }
    let factor = (signal_power / (noise_power * 10f64.powf(noise.snr_db / 10.0))).sqrt();
    let data: Vec<f64> = signal
        .data()
        .iter()
        .zip(raw.iter())
        .map(|(s, e)| s + factor * e)
        .collect();
    HyperCube::new(gt.height, gt.width, signal.bands(), data)
}

/// Empirical SNR in dB between a clean signal and its noisy observation.
pub fn measured_snr_db(signal: &HyperCube, noisy: &HyperCube) -> Result<f64> {
    if signal.data().len() != noisy.data().len() {
        return Err(Error::dims(
            "measured_snr_db",
            format!("{}", signal.data().len()),
            format!("{}", noisy.data().len()),
        ));
    }
    let sp: f64 = signal.data().iter().map(|v| v * v).sum();
    let np: f64 = signal
        .data()
        .iter()
        .zip(noisy.data().iter())
        .map(|(s, y)| (y - s) * (y - s))
        .sum();
    Ok(10.0 * (sp / np).log10())
}

/// Convenience: full scene generation with deterministic per-stage seeds.
pub fn gen_ground_truth(
    height: usize,
    width: usize,
    bands: usize,
    materials: usize,
    model: &VariabilityModel,
    seed: u64,
) -> Result<GroundTruth> {
    let m0 = gen_procedural_endmembers(bands, materials, subseed(seed, tags::SYNTH_ENDMEMBERS))?;
    let abundances =
        gen_abundance_maps(height, width, materials, subseed(seed, tags::SYNTH_ABUNDANCES))?;
    let endmembers = apply_variability(
        &m0,
        model,
        height,
        width,
        subseed(seed, tags::SYNTH_VARIABILITY),
    )?;
    Ok(GroundTruth {
        abundances,
        endmembers,
        base_endmembers: m0,
        height,
        width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{reconstruct_image, spectral_angle};

    #[test]
    fn procedural_endmembers_in_bounds_and_separated() {
        let m = gen_procedural_endmembers(50, 3, 1).unwrap();
        assert_eq!((m.bands(), m.materials()), (50, 3));
        for v in m.as_array().iter() {
            assert!((0.05..=0.95).contains(v), "value out of range: {v}");
        }
        for p in 0..3 {
            for q in (p + 1)..3 {
                let angle =
                    spectral_angle(&m.column(p).to_vec(), &m.column(q).to_vec()).unwrap();
                assert!(angle >= 0.1, "materials {p},{q} too close: {angle}");
            }
        }
    }

    #[test]
    fn procedural_endmembers_validates_dims() {
        assert!(gen_procedural_endmembers(8, 9, 0).is_err());
        assert!(gen_procedural_endmembers(7, 2, 0).is_err());
    }

    #[test]
    fn abundance_maps_on_simplex_with_pure_quota() {
        let a = gen_abundance_maps(20, 20, 3, 7).unwrap();
        assert_eq!((a.materials(), a.pixels()), (3, 400));
        for n in 0..400 {
            let col = a.column(n);
            let sum: f64 = col.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "column {n} sums to {sum}");
            assert!(col.iter().all(|&v| v >= 0.0));
        }
        let quota = (0.02f64 * 400.0).ceil() as usize;
        for p in 0..3 {
            let pure = (0..400).filter(|&n| a.as_array()[[p, n]] >= 0.95).count();
            assert!(
                pure >= quota,
                "material {p}: only {pure} near-pure pixels, need {quota}"
            );
        }
    }

    #[test]
    fn single_material_abundances_are_ones() {
        let a = gen_abundance_maps(5, 4, 1, 3).unwrap();
        assert!(a.as_array().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn variability_none_replicates_reference() {
        let m0 = gen_procedural_endmembers(30, 2, 5).unwrap();
        let t = apply_variability(&m0, &VariabilityModel::None, 4, 4, 9).unwrap();
        for n in 0..16 {
            assert_eq!(t.pixel_matrix(n), m0.as_array().view());
        }
    }

    #[test]
    fn dc1_zero_amplitude_is_identity() {
        let m0 = gen_procedural_endmembers(30, 2, 5).unwrap();
        let t = apply_variability(
            &m0,
            &VariabilityModel::PiecewiseLinear { amplitude: 0.0 },
            3,
            3,
            11,
        )
        .unwrap();
        for n in 0..9 {
            for p in 0..2 {
                for l in 0..30 {
                    let expected = m0.as_array()[[l, p]];
                    assert!((t.as_array()[[l, p, n]] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dc1_factors_stay_within_amplitude() {
        let m0 = gen_procedural_endmembers(40, 3, 6).unwrap();
        let t = apply_variability(&m0, &VariabilityModel::dc1(), 6, 6, 12).unwrap();
        for n in 0..36 {
            for p in 0..3 {
                for l in 0..40 {
                    let ratio = t.as_array()[[l, p, n]] / m0.as_array()[[l, p]];
                    assert!(
                        (0.8..=1.2).contains(&ratio),
                        "scaling factor out of range: {ratio}"
                    );
                }
            }
        }
    }

    #[test]
    fn dc2_and_dc3_factors_positive() {
        let m0 = gen_procedural_endmembers(25, 2, 8).unwrap();
        for model in [VariabilityModel::dc2(), VariabilityModel::dc3()] {
            let t = apply_variability(&m0, &model, 5, 5, 13).unwrap();
            for v in t.as_array().iter() {
                assert!(*v > 0.0);
            }
        }
    }

    #[test]
    fn noiseless_cube_equals_mixture() {
        let gt = gen_ground_truth(6, 5, 20, 3, &VariabilityModel::dc1(), 21).unwrap();
        let cube = gen_cube(&gt, &NoiseSpec::new(f64::INFINITY, 0).unwrap()).unwrap();
        let mixture = reconstruct_image(&gt.endmembers, &gt.abundances, 6, 5).unwrap();
        assert_eq!(cube, mixture);
    }

    #[test]
    fn snr_calibration_is_exact() {
        let gt = gen_ground_truth(8, 8, 30, 3, &VariabilityModel::dc1(), 22).unwrap();
        let clean = gen_cube(&gt, &NoiseSpec::new(f64::INFINITY, 0).unwrap()).unwrap();
        let noisy = gen_cube(&gt, &NoiseSpec::new(30.0, 5).unwrap()).unwrap();
        let snr = measured_snr_db(&clean, &noisy).unwrap();
        assert!(
            (29.99..=30.01).contains(&snr),
            "measured SNR {snr} outside [29.99, 30.01]"
        );
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let a = gen_ground_truth(7, 7, 24, 3, &VariabilityModel::dc2(), 77).unwrap();
        let b = gen_ground_truth(7, 7, 24, 3, &VariabilityModel::dc2(), 77).unwrap();
        assert_eq!(a.abundances, b.abundances);
        assert_eq!(a.endmembers, b.endmembers);
        assert_eq!(a.base_endmembers, b.base_endmembers);
        let na = gen_cube(&a, &NoiseSpec::new(25.0, 4).unwrap()).unwrap();
        let nb = gen_cube(&b, &NoiseSpec::new(25.0, 4).unwrap()).unwrap();
        assert_eq!(na, nb);
    }

    #[test]
    fn noise_spec_rejects_nan() {
        assert!(NoiseSpec::new(f64::NAN, 0).is_err());
        assert!(NoiseSpec::new(f64::NEG_INFINITY, 0).is_err());
        assert!(NoiseSpec::new(f64::INFINITY, 0).is_ok());
    }
}
