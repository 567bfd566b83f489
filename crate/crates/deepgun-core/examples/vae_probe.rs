// Development scratch: VAE quality on one DC1 pure-pixel bundle.
use deepgun_core::extraction::{extract_pure_pixels, vca};
use deepgun_core::metrics::nrmse;
use deepgun_core::neural::vae::{train_vae, TrainConfig};
use deepgun_core::synth::{gen_cube, gen_ground_truth, NoiseSpec, VariabilityModel};

fn main() {
    let seed = 1;
    let gt = gen_ground_truth(20, 20, 50, 3, &VariabilityModel::dc1(), seed).unwrap();
    let cube = gen_cube(&gt, &NoiseSpec::new(30.0, seed + 1).unwrap()).unwrap();
    let min = cube.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = cube.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let work = cube.affine(min, max - min).unwrap();
    let m0 = vca(&work, 3, 99).unwrap();
    let bundles = extract_pure_pixels(&work, &m0, 16).unwrap();

    for (p, bundle) in bundles.iter().enumerate() {
        let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
        let cfg = TrainConfig { seed: 10 + p as u64, epochs, ..TrainConfig::default() };
        let trained = train_vae(&bundle.spectra, &cfg, 2).unwrap();
        let model = &trained.model;
        println!(
            "material {p}: loss epoch1 {:.4} -> epoch50 {:.4}",
            trained.loss_history[0],
            trained.loss_history.last().unwrap()
        );
        // Reconstruction over the bundle.
        let mut errs = Vec::new();
        let mut codes = Vec::new();
        for i in 0..bundle.spectra.nrows() {
            let x = bundle.spectra.row(i);
            let z = model.encode_mean(x).unwrap();
            let xhat = model.decode(z.view()).unwrap();
            errs.push(nrmse(x.to_vec().as_slice(), xhat.as_slice().unwrap()).unwrap());
            codes.push(z);
        }
        let mean_err = errs.iter().sum::<f64>() / errs.len() as f64;
        let spread_k0: f64 = {
            let vals: Vec<f64> = codes.iter().map(|z| z[0]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64).sqrt()
        };
        // Reference reconstruction.
        let z0 = model.encode_mean(m0.column(p)).unwrap();
        let dec0 = model.decode(z0.view()).unwrap();
        let m0_err = nrmse(&m0.column(p).to_vec(), dec0.as_slice().unwrap()).unwrap();
        println!(
            "  bundle recon NRMSE (mean) = {mean_err:.4}, z spread(k=0) = {spread_k0:.4}, z0 = [{:.3}, {:.3}], decode(z0) vs m0 NRMSE = {m0_err:.4}",
            z0[0], z0[1]
        );
    }
}
