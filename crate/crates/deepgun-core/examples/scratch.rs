// Development scratch: desk-scale DC1 pipeline run with error reporting.
use deepgun_core::deepgun::{abundance_nrmse_vs_truth, run_deepgun, RunInputs, UnmixConfig};
use deepgun_core::metrics::{greedy_material_matching, nrmse, permute_abundance_rows};
use deepgun_core::solvers::fcls::fcls_image;
use deepgun_core::synth::{gen_cube, gen_ground_truth, NoiseSpec, VariabilityModel};
use deepgun_core::types::EndmemberMatrix;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let variability = args.get(2).map(|s| s.as_str()).unwrap_or("dc1");
    let amplitude: Option<f64> = args.get(6).and_then(|s| s.parse().ok());
    let model = match variability {
        "none" => VariabilityModel::None,
        "dc2" => VariabilityModel::SmoothSpatialSpectral {
            amplitude: amplitude.unwrap_or(0.15),
        },
        "dc3" => VariabilityModel::dc3(),
        _ => VariabilityModel::PiecewiseLinear {
            amplitude: amplitude.unwrap_or(0.2),
        },
    };
    let t0 = std::time::Instant::now();
    let gt = gen_ground_truth(20, 20, 50, 3, &model, seed).unwrap();
    let noise = if variability == "none" {
        NoiseSpec::new(f64::INFINITY, seed + 1).unwrap()
    } else {
        NoiseSpec::new(30.0, seed + 1).unwrap()
    };
    let cube = gen_cube(&gt, &noise).unwrap();
    eprintln!("cube generated in {:.2?}", t0.elapsed());

    let mut config = UnmixConfig::new(3);
    config.seed = seed;
    if variability == "none" {
        config.lambda_a = 0.0;
    }
    if let Some(s) = args.get(3).and_then(|s| s.parse().ok()) {
        config.pure_count = Some(s);
    }
    if let Some(lz) = args.get(4).and_then(|s| s.parse().ok()) {
        config.lambda_z = lz;
    }
    if let Some(la) = args.get(5).and_then(|s| s.parse().ok()) {
        config.lambda_a = la;
    }
    if let Some(e) = args.get(7).and_then(|s| s.parse().ok()) {
        config.train.epochs = e;
    }

    // Bundle purity diagnostic: true max-abundance of selected pixels.
    {
        use deepgun_core::extraction::{extract_pure_pixels, vca};
        let dmin = cube.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let dmax = cube.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let work = cube.affine(dmin, dmax - dmin).unwrap();
        let m0 = vca(&work, 3, deepgun_core::rng::subseed(seed, deepgun_core::rng::tags::VCA)).unwrap();
        let s = config.pure_count.unwrap_or(100);
        let sets = extract_pure_pixels(&work, &m0, s).unwrap();
        for set in &sets {
            let purities: Vec<f64> = set
                .pixel_indices
                .iter()
                .map(|&idx| {
                    (0..3)
                        .map(|p| gt.abundances.as_array()[[p, idx]])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let mean = purities.iter().sum::<f64>() / purities.len() as f64;
            let min = purities.iter().cloned().fold(f64::INFINITY, f64::min);
            eprintln!(
                "bundle {}: purity mean {mean:.3}, min {min:.3}",
                set.material
            );
        }
    }

    let mut inputs = RunInputs::default();
    if args.get(8).map(|s| s == "oracle").unwrap_or(false) {
        // Oracle stage-1: true reference endmembers and clean per-material
        // variability realizations as the training library.
        use deepgun_core::synth::apply_variability;
        inputs.m0 = Some(gt.base_endmembers.clone());
        let realizations =
            apply_variability(&gt.base_endmembers, &model, 8, 8, seed + 99).unwrap();
        let mut library = Vec::new();
        for p in 0..3 {
            let mut mat = ndarray::Array2::<f64>::zeros((64, 50));
            for n in 0..64 {
                for l in 0..50 {
                    mat[[n, l]] = realizations.as_array()[[l, p, n]];
                }
            }
            library.push(mat);
        }
        inputs.library = Some(library);
        eprintln!("using oracle bundles + true m0");
    }

    let t1 = std::time::Instant::now();
    let result = run_deepgun(&cube, &config, inputs).unwrap();
    eprintln!("pipeline in {:.2?}, {} outer iterations, {} degraded pixels",
        t1.elapsed(), result.iterations_run, result.degraded_pixels);

    // FCLS baseline with the same VCA reference.
    let m0 = EndmemberMatrix::new(result.m0.clone()).unwrap();
    let fcls_a = fcls_image(&cube, &m0).unwrap();
    let perm = greedy_material_matching(result.m0.view(), gt.base_endmembers.as_array().view())
        .unwrap();
    let fcls_perm = permute_abundance_rows(&fcls_a, &perm).unwrap();
    let fcls_err = nrmse(
        gt.abundances.as_array().as_slice().unwrap(),
        fcls_perm.as_array().as_slice().unwrap(),
    )
    .unwrap();
    let deep_err = abundance_nrmse_vs_truth(&result, &gt).unwrap();

    println!("seed={seed} variability={variability}");
    println!("FCLS    NRMSE_A = {fcls_err:.4}");
    println!("DeepGUn NRMSE_A = {deep_err:.4}  (ratio {:.3})", deep_err / fcls_err);
    println!("objective history: {:?}",
        result.objective_history.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());

    // Diagnostics: how well do the models reproduce the reference columns?
    let (offset, scale) = result.normalization;
    for p in 0..3 {
        let m0_norm: ndarray::Array1<f64> =
            result.m0.column(p).mapv(|v| (v - offset) / scale);
        let code = result.models[p].encode_mean(m0_norm.view()).unwrap();
        let decoded = result.models[p].decode(code.view()).unwrap();
        let rec_err = nrmse(m0_norm.as_slice().unwrap(), decoded.as_slice().unwrap()).unwrap();
        println!(
            "material {p}: z0 = {:?}, decode(z0) vs m0 NRMSE = {rec_err:.4}",
            code.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        );
    }
    // FCLS against the decoded anchors (what lambda_z -> inf would give).
    let mut anchors = ndarray::Array2::<f64>::zeros((50, 3));
    for p in 0..3 {
        let decoded = result.models[p]
            .decode(result.z0.column(p))
            .unwrap()
            .mapv(|v| v * scale + offset);
        anchors.column_mut(p).assign(&decoded);
    }
    let anchor_m = EndmemberMatrix::new(anchors).unwrap();
    let anchor_a = fcls_image(&cube, &anchor_m).unwrap();
    let anchor_perm = permute_abundance_rows(&anchor_a, &perm).unwrap();
    let anchor_err = nrmse(
        gt.abundances.as_array().as_slice().unwrap(),
        anchor_perm.as_array().as_slice().unwrap(),
    )
    .unwrap();
    println!("FCLS with decoded anchors NRMSE_A = {anchor_err:.4}");
    // How far the per-pixel codes moved from the anchors.
    let mut total_dist = 0.0;
    for n in 0..result.latents.pixels() {
        let codes = result.latents.pixel_codes(n);
        for p in 0..3 {
            let mut d = 0.0;
            for kx in 0..result.latents.latent_dim() {
                let diff = codes[[p, kx]] - result.z0.as_array()[[kx, p]];
                d += diff * diff;
            }
            total_dist += d.sqrt();
        }
    }
    println!(
        "mean |z - z0| = {:.4}",
        total_dist / (result.latents.pixels() * 3) as f64
    );
    // Endmember tensor accuracy (after permutation).
    let em_perm = deepgun_core::metrics::permute_tensor_materials(&result.endmembers, &perm).unwrap();
    let m_err = nrmse(
        gt.endmembers.as_array().as_slice().unwrap(),
        em_perm.as_array().as_slice().unwrap(),
    )
    .unwrap();
    let sam = deepgun_core::metrics::sam_metric(&gt.endmembers, &em_perm).unwrap();
    println!("NRMSE_M = {m_err:.4}, SAM_M = {sam:.4}");
    // Average angle between VCA m0 and the true base endmembers.
    for p in 0..3 {
        let angle = deepgun_core::metrics::spectral_angle(
            &result.m0.column(p).to_vec(),
            &gt.base_endmembers.column(perm[p]).to_vec(),
        )
        .unwrap();
        println!("material {p}: VCA-vs-truth angle = {angle:.4} rad");
    }

    // TV-only baseline: the abundance step with the reference endmembers
    // replicated (no latent adaptation at all).
    {
        use deepgun_core::solvers::{solve_a_step, AdmmConfig};
        use deepgun_core::types::EndmemberTensor;
        let work = cube.affine(offset, scale).unwrap();
        let m0_norm = EndmemberMatrix::new(result.m0.mapv(|v| ((v - offset) / scale).max(0.0)))
            .unwrap();
        let em = EndmemberTensor::replicate(&m0_norm, cube.num_pixels());
        let a_init = fcls_image(&work, &m0_norm).unwrap();
        let admm = AdmmConfig {
            lambda_a: config.lambda_a,
            max_iterations: 300,
            primal_tol: 1e-6,
            dual_tol: 1e-6,
            ..AdmmConfig::default()
        };
        let a_tv = solve_a_step(&work, &em, &a_init, &admm, 20, 20).unwrap();
        let tv_perm = permute_abundance_rows(&a_tv, &perm).unwrap();
        let tv_err = nrmse(
            gt.abundances.as_array().as_slice().unwrap(),
            tv_perm.as_array().as_slice().unwrap(),
        )
        .unwrap();
        println!("TV-only (M0 fixed) NRMSE_A = {tv_err:.4}");
    }

    // Oracle Z-step: fit codes with the TRUE abundances, then re-fit
    // abundances per pixel against the decoded endmembers.
    {
        use deepgun_core::solvers::{fcls_view, solve_z_step};
        use ndarray::{Array1, Array2, ArrayView1};
        let n = cube.num_pixels();
        // gt rows are in truth order; bring them into estimated order.
        let mut inv = vec![0usize; 3];
        for (est_i, &true_i) in perm.iter().enumerate() {
            inv[true_i] = est_i;
        }
        let mut a_true_est = Array2::<f64>::zeros((3, n));
        for t in 0..3 {
            for pix in 0..n {
                a_true_est[[inv[t], pix]] = gt.abundances.as_array()[[t, pix]];
            }
        }
        let work = cube.affine(offset, scale).unwrap();
        let lambda_z = 0.1;
        let mut a_refit = Array2::<f64>::zeros((3, n));
        let mut m_err_sum = 0.0;
        for pix in 0..n {
            let y = ArrayView1::from(work.pixel(pix));
            let mut z_init = Array2::<f64>::zeros((3, 2));
            for p in 0..3 {
                for kx in 0..2 {
                    z_init[[p, kx]] = result.z0.as_array()[[kx, p]];
                }
            }
            let (z, _) = solve_z_step(
                y,
                a_true_est.column(pix),
                &result.models,
                z_init.view(),
                &result.z0,
                lambda_z,
                1e-3,
                200,
            )
            .unwrap();
            let mut m_fit = Array2::<f64>::zeros((50, 3));
            for p in 0..3 {
                let dec = result.models[p].decode(z.row(p)).unwrap();
                m_fit.column_mut(p).assign(&dec);
                // error vs true per-pixel endmember (normalized space)
                let mut err = 0.0;
                let mut norm = 0.0;
                for l in 0..50 {
                    let truth_v =
                        (gt.endmembers.as_array()[[l, perm[p], pix]] - offset) / scale;
                    let d = dec[l] - truth_v;
                    err += d * d;
                    norm += truth_v * truth_v;
                }
                m_err_sum += (err / norm).sqrt();
            }
            let a = fcls_view(y, m_fit.view()).unwrap();
            a_refit.column_mut(pix).assign(&a);
        }
        let refit_perm: Array2<f64> = {
            let mut out = Array2::<f64>::zeros((3, n));
            for (src, &dst) in perm.iter().enumerate() {
                for pix in 0..n {
                    out[[dst, pix]] = a_refit[[src, pix]];
                }
            }
            out
        };
        let refit_err = nrmse(
            gt.abundances.as_array().as_slice().unwrap(),
            refit_perm.as_slice().unwrap(),
        )
        .unwrap();
        println!(
            "oracle z-step (true A): refit NRMSE_A = {refit_err:.4}, mean per-signature decode-vs-truth NRMSE = {:.4}",
            m_err_sum / (3 * n) as f64
        );
        let _ = Array1::<f64>::zeros(1);
    }
}
