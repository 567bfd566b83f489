//! Euclidean projection onto the unit simplex.

use ndarray::{Array1, ArrayView1};

/// Project `v` onto `{ a : a >= 0, sum(a) = 1 }` by the sort-and-threshold
/// method. The result is renormalized so its sum is exactly 1.
///
/// Panics on non-finite input.
pub fn project_simplex(v: ArrayView1<'_, f64>) -> Array1<f64> {
    assert!(
        v.iter().all(|x| x.is_finite()),
        "project_simplex requires finite input"
    );
    let n = v.len();
    assert!(n > 0, "project_simplex needs a non-empty vector");

    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut cumsum = 0.0;
    let mut rho = 0;
    let mut rho_cumsum = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        if u + (1.0 - cumsum) / (j + 1) as f64 > 0.0 {
            rho = j + 1;
            rho_cumsum = cumsum;
        }
    }
    let tau = (1.0 - rho_cumsum) / rho as f64;

    let mut out = v.mapv(|x| (x + tau).max(0.0));
    let sum: f64 = out.iter().sum();
    out.mapv_inplace(|x| x / sum);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    /// Brute-force oracle: for every support set, solve the equality-
    /// constrained projection in closed form and keep the feasible candidate
    /// closest to `v`.
    fn project_by_enumeration(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let s: f64 = support.iter().map(|&i| v[i]).sum();
            let shift = (1.0 - s) / support.len() as f64;
            let mut candidate = vec![0.0; n];
            let mut feasible = true;
            for &i in &support {
                let x = v[i] + shift;
                if x < -1e-12 {
                    feasible = false;
                    break;
                }
                candidate[i] = x.max(0.0);
            }
            if !feasible {
                continue;
            }
            let dist: f64 = candidate
                .iter()
                .zip(v.iter())
                .map(|(c, o)| (c - o) * (c - o))
                .sum();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, candidate));
            }
        }
        best.expect("at least the full support is always evaluated").1
    }

    #[test]
    fn feasible_point_is_fixed() {
        let v = array![0.2, 0.3, 0.5];
        let p = project_simplex(v.view());
        for i in 0..3 {
            assert_abs_diff_eq!(p[i], v[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn projects_to_vertex() {
        let p = project_simplex(array![2.0, 0.0].view());
        assert_abs_diff_eq!(p[0], 1.0);
        assert_abs_diff_eq!(p[1], 0.0);
    }

    #[test]
    fn uniform_shift_case() {
        let p = project_simplex(array![0.5, 0.5, 1.0].view());
        assert_abs_diff_eq!(p[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut rng = seeded_rng(17);
        for _ in 0..300 {
            let n = rng.random_range(2..=5);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fast = project_simplex(ArrayView1::from(&v));
            let slow = project_by_enumeration(&v);
            for i in 0..n {
                assert!(
                    (fast[i] - slow[i]).abs() < 1e-8,
                    "mismatch at {i}: {} vs {} for {v:?}",
                    fast[i],
                    slow[i]
                );
            }
        }
    }

    #[test]
    fn output_is_exactly_feasible() {
        let mut rng = seeded_rng(18);
        for _ in 0..100 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = project_simplex(ArrayView1::from(&v));
            let sum: f64 = p.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-15);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }
}
