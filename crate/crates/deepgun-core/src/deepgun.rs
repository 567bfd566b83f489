//! The alternating unmixing pipeline.
//!
//! Given an observed cube, the pipeline (1) extracts a reference endmember
//! matrix with VCA, (2) initializes abundances with per-pixel FCLS,
//! (3) collects per-material pure-pixel bundles and trains one VAE per
//! material, (4) encodes the reference signatures into latent anchors, and
//! (5) alternates per-pixel latent estimation (BFGS) with the spatially
//! regularized abundance step (ADMM) until the relative change of both
//! blocks falls below a tolerance or an iteration cap is hit. The per-pixel
//! endmember tensor is finally decoded from the latent codes.
//!
//! Cubes whose values leave `[0, 1]` are min-max normalized once up front
//! (the sum-to-one constraint makes the linear mixing model equivariant to
//! that affine change), and all returned endmembers are mapped back to the
//! original reflectance units. The objective history is reported in the
//! normalized space the optimization actually ran in.

use ndarray::{s, Array2, Array3, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extraction::{extract_pure_pixels, latent_reference, vca};
use crate::metrics::{greedy_material_matching, nrmse, permute_abundance_rows};
use crate::neural::vae::{train_vae, TrainConfig, VaeModel};
use crate::rng::{subseed, tags};
use crate::solvers::admm::{solve_a_step, AdmmConfig};
use crate::solvers::fcls::fcls_image;
use crate::solvers::l21_norm;
use crate::solvers::spatial::{grad_h, grad_v};
use crate::solvers::zstep::solve_z_step;
use crate::synth::GroundTruth;
use crate::types::{
    AbundanceMatrix, EndmemberMatrix, EndmemberTensor, HyperCube, LatentReference, LatentTensor,
};

/// Pipeline configuration. `lambda_a` is authoritative for the spatial
/// regularizer; the embedded [`AdmmConfig`]'s own `lambda_a` is overwritten.
#[derive(Debug, Clone)]
pub struct UnmixConfig {
    pub materials: usize,
    /// Spatial (L2,1 gradient) regularization weight.
    pub lambda_a: f64,
    /// Latent anchoring weight toward the reference codes.
    pub lambda_z: f64,
    pub max_outer_iterations: usize,
    /// Stop when both blocks change by less than this relative amount.
    pub outer_rel_tol: f64,
    /// Relative iterate tolerance of the per-pixel BFGS solves.
    pub z_tol: f64,
    pub z_max_iterations: usize,
    /// Inner ADMM settings for the abundance step.
    pub admm: AdmmConfig,
    /// Pure pixels per material; `None` selects 100, or
    /// `max(10, ceil(N/10))` for cubes with fewer than 200 pixels.
    pub pure_count: Option<usize>,
    pub latent_dim: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl UnmixConfig {
    pub fn new(materials: usize) -> Self {
        Self {
            materials,
            lambda_a: 0.01,
            lambda_z: 0.1,
            max_outer_iterations: 10,
            outer_rel_tol: 1e-3,
            z_tol: 1e-3,
            z_max_iterations: 200,
            admm: AdmmConfig {
                max_iterations: 300,
                primal_tol: 1e-6,
                dual_tol: 1e-6,
                ..AdmmConfig::default()
            },
            pure_count: None,
            latent_dim: 2,
            train: TrainConfig::default(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.materials == 0 {
            return Err(Error::Invalid("materials must be >= 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Invalid("latent_dim must be >= 1".into()));
        }
        if self.lambda_a < 0.0 || self.lambda_z < 0.0 {
            return Err(Error::Invalid("regularization weights must be >= 0".into()));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::Invalid("max_outer_iterations must be >= 1".into()));
        }
        if !(self.outer_rel_tol > 0.0 && self.z_tol > 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn resolve_pure_count(&self, n: usize) -> usize {
        let default = if n < 200 {
            (n.div_ceil(10)).max(10)
        } else {
            100
        };
        self.pure_count.unwrap_or(default).min(n)
    }
}

/// Optional precomputed stages.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    /// Reference endmember matrix in observed reflectance units; extracted
    /// with VCA when absent.
    pub m0: Option<EndmemberMatrix>,
    /// Trained per-material models (normalized-space); training is skipped
    /// when present.
    pub models: Option<Vec<VaeModel>>,
    /// Per-material training libraries (rows = spectra, observed units);
    /// replaces pure-pixel extraction when present.
    pub library: Option<Vec<Array2<f64>>>,
}

/// Pipeline output.
#[derive(Debug, Clone)]
pub struct UnmixResult {
    pub abundances: AbundanceMatrix,
    pub latents: LatentTensor,
    /// Per-pixel endmembers in the observed reflectance units.
    pub endmembers: EndmemberTensor,
    /// Objective values in normalized space: the initial value followed by
    /// one entry after every half-step (Z, then A) of each outer iteration.
    pub objective_history: Vec<f64>,
    pub iterations_run: usize,
    /// Reference endmember matrix in observed units (columns follow the
    /// estimated material order).
    pub m0: Array2<f64>,
    /// Latent anchors of the reference signatures.
    pub z0: LatentReference,
    /// Trained (or supplied) per-material models, normalized-space.
    pub models: Vec<VaeModel>,
    /// `(offset, scale)` of the internal normalization; `(0, 1)` when the
    /// cube was already within `[0, 1]`.
    pub normalization: (f64, f64),
    /// Pixels whose latent line search degraded at least once.
    pub degraded_pixels: usize,
}

/// The unmixing objective
/// `J = 0.5 sum_n |y_n - G(Z_n) a_n|^2 + lambda_a (|H_h A|_{2,1} + |H_v A|_{2,1})
///    + (lambda_z / 2) sum_n |Z_n - Z0|_F^2`.
///
/// Simplex feasibility of `a` is guaranteed by its type; `cube`, `models`,
/// `z` and `z0` must share one normalization.
pub fn objective(
    cube: &HyperCube,
    models: &[VaeModel],
    a: &AbundanceMatrix,
    z: &LatentTensor,
    z0: &LatentReference,
    lambda_a: f64,
    lambda_z: f64,
    height: usize,
    width: usize,
) -> Result<f64> {
    let n = cube.num_pixels();
    let p = models.len();
    let k = z.latent_dim();
    if a.pixels() != n || z.pixels() != n || height * width != n {
        return Err(Error::dims(
            "objective pixels",
            format!("{n}"),
            format!("a: {}, z: {}, {height}x{width}", a.pixels(), z.pixels()),
        ));
    }
    if a.materials() != p || z.materials() != p || z0.materials() != p {
        return Err(Error::dims(
            "objective materials",
            format!("{p}"),
            format!(
                "a: {}, z: {}, z0: {}",
                a.materials(),
                z.materials(),
                z0.materials()
            ),
        ));
    }

    let data_term: f64 = (0..n)
        .into_par_iter()
        .map(|pix| {
            let codes = z.pixel_codes(pix);
            let a_n = a.column(pix);
            let y_n = cube.pixel(pix);
            let mut residual = vec![0.0f64; cube.bands()];
            for (l, r) in residual.iter_mut().enumerate() {
                *r = -y_n[l];
            }
            for (i, model) in models.iter().enumerate() {
                let decoded = model
                    .decode(codes.row(i))
                    .expect("dimensions validated above");
                for (l, r) in residual.iter_mut().enumerate() {
                    *r += a_n[i] * decoded[l];
                }
            }
            0.5 * residual.iter().map(|v| v * v).sum::<f64>()
        })
        .sum();

    let spatial = if lambda_a > 0.0 {
        lambda_a
            * (l21_norm(&grad_h(a.as_array(), height, width)?)
                + l21_norm(&grad_v(a.as_array(), height, width)?))
    } else {
        0.0
    };

    let mut latent = 0.0;
    for pix in 0..n {
        let codes = z.pixel_codes(pix);
        for i in 0..p {
            for j in 0..k {
                let d = codes[[i, j]] - z0.as_array()[[j, i]];
                latent += d * d;
            }
        }
    }
    Ok(data_term + spatial + 0.5 * lambda_z * latent)
}

/// Run the full pipeline on an observed cube.
pub fn run_deepgun(
    cube: &HyperCube,
    config: &UnmixConfig,
    inputs: RunInputs,
) -> Result<UnmixResult> {
    config.validate()?;
    let (height, width) = (cube.height(), cube.width());
    let n = cube.num_pixels();
    let p = config.materials;
    let k = config.latent_dim;

    // Normalize into [0, 1] when the data leave it; the simplex constraint
    // makes the mixing model equivariant to this affine map.
    let data_min = cube.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let data_max = cube.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (offset, scale) = if data_min < 0.0 || data_max > 1.0 {
        (data_min, (data_max - data_min).max(1e-12))
    } else {
        (0.0, 1.0)
    };
    let work = cube.affine(offset, scale)?;

    // Reference endmembers.
    let m0 = match &inputs.m0 {
        Some(m) => {
            let normalized = m.as_array().mapv(|v| ((v - offset) / scale).max(0.0));
            EndmemberMatrix::new(normalized).map_err(|e| Error::in_stage("vca", e))?
        }
        None => vca(&work, p, subseed(config.seed, tags::VCA))
            .map_err(|e| Error::in_stage("vca", e))?,
    };
    if m0.materials() != p || m0.bands() != work.bands() {
        return Err(Error::dims(
            "run_deepgun m0",
            format!("{}x{p}", work.bands()),
            format!("{}x{}", m0.bands(), m0.materials()),
        ));
    }

    // FCLS initialization of the abundances.
    let mut abundances =
        fcls_image(&work, &m0).map_err(|e| Error::in_stage("fcls-init", e))?;

    // Per-material training data.
    let models = match inputs.models {
        Some(models) => {
            if models.len() != p {
                return Err(Error::dims(
                    "run_deepgun models",
                    format!("{p}"),
                    format!("{}", models.len()),
                ));
            }
            for (i, m) in models.iter().enumerate() {
                if m.bands() != work.bands() || m.latent_dim() != k {
                    return Err(Error::dims(
                        format!("run_deepgun model {i}"),
                        format!("bands {}, K {k}", work.bands()),
                        format!("bands {}, K {}", m.bands(), m.latent_dim()),
                    ));
                }
            }
            models
        }
        None => {
            let bundles: Vec<Array2<f64>> = match &inputs.library {
                Some(library) => {
                    if library.len() != p {
                        return Err(Error::dims(
                            "run_deepgun library",
                            format!("{p} matrices"),
                            format!("{}", library.len()),
                        ));
                    }
                    library
                        .iter()
                        .map(|m| m.mapv(|v| (v - offset) / scale))
                        .collect()
                }
                None => {
                    let count = config.resolve_pure_count(n);
                    extract_pure_pixels(&work, &m0, count)
                        .map_err(|e| Error::in_stage("bundle-extraction", e))?
                        .into_iter()
                        .map(|set| set.spectra)
                        .collect()
                }
            };
            let mut models = Vec::with_capacity(p);
            for (i, bundle) in bundles.iter().enumerate() {
                let train_config = TrainConfig {
                    seed: subseed(config.seed, tags::VAE_BASE + i as u64),
                    ..config.train.clone()
                };
                let mut trained = train_vae(bundle, &train_config, k)
                    .map_err(|e| Error::in_stage("vae-training", e))?;
                // Keep in-memory evaluation identical to a model that has
                // been round-tripped through the f32 on-disk format.
                trained.model.quantize_f32();
                models.push(trained.model);
            }
            models
        }
    };

    // Latent anchors.
    let z0 = latent_reference(&models, &m0)
        .map_err(|e| Error::in_stage("latent-reference", e))?;

    // Z^(0): the anchors replicated per pixel.
    let mut latents = Array3::<f64>::zeros((n, p, k));
    for pix in 0..n {
        for i in 0..p {
            for j in 0..k {
                latents[[pix, i, j]] = z0.as_array()[[j, i]];
            }
        }
    }

    let mut history = Vec::with_capacity(1 + 2 * config.max_outer_iterations);
    let eval_objective = |a: &AbundanceMatrix, z: &Array3<f64>| -> Result<f64> {
        objective(
            &work,
            &models,
            a,
            &LatentTensor::new(z.clone())?,
            &z0,
            config.lambda_a,
            config.lambda_z,
            height,
            width,
        )
    };
    history.push(eval_objective(&abundances, &latents)?);

    let mut iterations_run = 0;
    let mut degraded_pixels = 0usize;

    for iter in 1..=config.max_outer_iterations {
        // Z-step: independent per-pixel BFGS solves, warm-started from the
        // previous codes.
        let solved: Vec<(Array2<f64>, bool)> = (0..n)
            .into_par_iter()
            .map(|pix| {
                solve_z_step(
                    ArrayView1::from(work.pixel(pix)),
                    abundances.column(pix),
                    &models,
                    latents.slice(s![pix, .., ..]),
                    &z0,
                    config.lambda_z,
                    config.z_tol,
                    config.z_max_iterations,
                )
                .map_err(|e| Error::in_stage("z-step", e))
            })
            .collect::<Result<_>>()?;
        let mut new_latents = Array3::<f64>::zeros((n, p, k));
        for (pix, (codes, degraded)) in solved.into_iter().enumerate() {
            if degraded {
                degraded_pixels += 1;
            }
            new_latents.slice_mut(s![pix, .., ..]).assign(&codes);
        }
        let dz = rel_change(new_latents.as_slice().unwrap(), latents.as_slice().unwrap());
        latents = new_latents;
        history.push(eval_objective(&abundances, &latents)?);

        // A-step: ADMM with the decoded per-pixel endmembers.
        let em = decode_tensor(&models, &latents, 0.0, 1.0)?;
        let admm_config = AdmmConfig {
            lambda_a: config.lambda_a,
            ..config.admm.clone()
        };
        let new_abundances =
            solve_a_step(&work, &em, &abundances, &admm_config, height, width)
                .map_err(|e| Error::in_stage("a-step", e))?;
        let da = rel_change(
            new_abundances.as_array().as_slice().unwrap(),
            abundances.as_array().as_slice().unwrap(),
        );
        abundances = new_abundances;
        let j = eval_objective(&abundances, &latents)?;
        history.push(j);

        iterations_run = iter;
        eprintln!("iter={iter} J={j:.6e} dA={da:.6e} dZ={dz:.6e}");
        if da.max(dz) < config.outer_rel_tol {
            break;
        }
    }

    let endmembers = decode_tensor(&models, &latents, offset, scale)?;
    let m0_observed = m0.as_array().mapv(|v| v * scale + offset);

    Ok(UnmixResult {
        abundances,
        latents: LatentTensor::new(latents)?,
        endmembers,
        objective_history: history,
        iterations_run,
        m0: m0_observed,
        z0,
        models,
        normalization: (offset, scale),
        degraded_pixels,
    })
}

/// Decode every pixel's latent codes into an endmember tensor, mapping the
/// sigmoid outputs back to observed units via `v * scale + offset`.
fn decode_tensor(
    models: &[VaeModel],
    latents: &Array3<f64>,
    offset: f64,
    scale: f64,
) -> Result<EndmemberTensor> {
    let (n, p, _) = (
        latents.shape()[0],
        latents.shape()[1],
        latents.shape()[2],
    );
    let bands = models[0].bands();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|pix| {
            let mut block = vec![0.0f64; p * bands];
            for (i, model) in models.iter().enumerate() {
                let decoded = model
                    .decode(latents.slice(s![pix, i, ..]))
                    .expect("dimensions validated upstream");
                for l in 0..bands {
                    block[i * bands + l] = decoded[l] * scale + offset;
                }
            }
            block
        })
        .collect();
    let mut data = Array3::<f64>::zeros((bands, p, n));
    for (pix, block) in columns.into_iter().enumerate() {
        for i in 0..p {
            for l in 0..bands {
                data[[l, i, pix]] = block[i * bands + l];
            }
        }
    }
    EndmemberTensor::new(data)
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in new.iter().zip(old.iter()) {
        diff += (a - b) * (a - b);
        norm += b * b;
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

/// Run the pipeline for each latent dimension in `k_values` and measure the
/// abundance NRMSE against the ground truth (materials matched greedily by
/// spectral angle between the estimated reference endmembers and the true
/// base endmembers). Optionally writes `K,NRMSE` rows to a CSV file.
pub fn latent_dim_sweep(
    cube: &HyperCube,
    gt: &GroundTruth,
    config: &UnmixConfig,
    k_values: &[usize],
    csv_path: Option<&std::path::Path>,
) -> Result<Vec<(usize, f64)>> {
    let mut table = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let mut config_k = config.clone();
        config_k.latent_dim = k;
        let result = run_deepgun(cube, &config_k, RunInputs::default())?;
        let error = abundance_nrmse_vs_truth(&result, gt)?;
        table.push((k, error));
    }
    if let Some(path) = csv_path {
        let mut text = String::new();
        for (k, err) in &table {
            text.push_str(&format!("{k},{err:.16e}\n"));
        }
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(table)
}

/// Abundance NRMSE of a pipeline result against ground truth, after
/// resolving the material permutation via the reference endmembers.
pub fn abundance_nrmse_vs_truth(result: &UnmixResult, gt: &GroundTruth) -> Result<f64> {
    let perm = greedy_material_matching(
        result.m0.view(),
        gt.base_endmembers.as_array().view(),
    )?;
    let permuted = permute_abundance_rows(&result.abundances, &perm)?;
    nrmse(
        gt.abundances.as_array().as_slice().unwrap(),
        permuted.as_array().as_slice().unwrap(),
    )
}
