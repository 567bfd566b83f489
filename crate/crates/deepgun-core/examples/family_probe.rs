// Development scratch: can the VAE represent a clean 2-D tilt family?
use deepgun_core::metrics::nrmse;
use deepgun_core::neural::vae::{train_vae, TrainConfig};
use deepgun_core::solvers::bfgs_minimize;
use deepgun_core::synth::{apply_variability, gen_procedural_endmembers, VariabilityModel};
use ndarray::{Array1, Array2};

fn main() {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let train_n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let bands = 50;
    let m0 = gen_procedural_endmembers(bands, 1, 7).unwrap();
    let model_spec = VariabilityModel::PiecewiseLinear { amplitude: 0.3 };
    // 100 realizations: first train_n for training, rest held out.
    let total = apply_variability(&m0, &model_spec, 10, 10, 55).unwrap();
    let as_rows = |lo: usize, hi: usize| -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((hi - lo, bands));
        for n in lo..hi {
            for l in 0..bands {
                out[[n - lo, l]] = total.as_array()[[l, 0, n]];
            }
        }
        out
    };
    let train = as_rows(0, train_n);
    let holdout = as_rows(train_n, 100.min(train_n + 30));

    let cfg = TrainConfig { epochs, seed: 3, ..TrainConfig::default() };
    let trained = train_vae(&train, &cfg, 2).unwrap();
    let model = &trained.model;

    let recon_of = |rows: &Array2<f64>| -> f64 {
        let mut total_err = 0.0;
        for i in 0..rows.nrows() {
            let x = rows.row(i);
            let z = model.encode_mean(x).unwrap();
            let xhat = model.decode(z.view()).unwrap();
            total_err += nrmse(&x.to_vec(), xhat.as_slice().unwrap()).unwrap();
        }
        total_err / rows.nrows() as f64
    };
    println!("train recon NRMSE  = {:.4}", recon_of(&train));
    println!("holdout recon NRMSE = {:.4}", recon_of(&holdout));

    // BFGS z-fit on holdout samples, lambda = 0, init from the encoder.
    let mut fit_err = 0.0;
    for i in 0..holdout.nrows() {
        let x = holdout.row(i).to_owned();
        let x2 = x.clone();
        let objective = move |z: &Array1<f64>| {
            let (out, cache) = model.decode_with_cache(z.view()).unwrap();
            let diff = &out - &x2;
            let grad = model.decode_pullback(&cache, diff.view());
            (0.5 * diff.dot(&diff), grad)
        };
        let z0 = model.encode_mean(x.view()).unwrap();
        let outcome = bfgs_minimize(objective, z0, 1e-6, 300);
        let xhat = model.decode(outcome.point.view()).unwrap();
        fit_err += nrmse(&x.to_vec(), xhat.as_slice().unwrap()).unwrap();
    }
    println!("holdout z-fit NRMSE = {:.4}", fit_err / holdout.nrows() as f64);

    let z_m0 = model.encode_mean(m0.column(0)).unwrap();
    let dec = model.decode(z_m0.view()).unwrap();
    println!(
        "decode(encode(m0)) NRMSE = {:.4}",
        nrmse(&m0.column(0).to_vec(), dec.as_slice().unwrap()).unwrap()
    );
}
