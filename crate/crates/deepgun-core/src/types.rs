//! Core data containers for hyperspectral unmixing.
//!
//! Conventions used throughout the crate:
//!
//! - Pixels are indexed flat, row-major over the image grid: pixel `n`
//!   corresponds to `(row, col) = (n / width, n % width)`.
//! - Cube data is pixel-major: the `bands` reflectance values of one pixel
//!   are contiguous.
//! - A latent tensor slice `[n, :, :]` is the `materials x latent_dim`
//!   matrix of latent codes for pixel `n` (one row per material).

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, s};

use crate::error::{Error, Result};

/// An H x W x L reflectance raster stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
}

impl HyperCube {
    /// Build a cube from pixel-major data (`height * width * bands` values).
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Invalid(
                "cube dimensions must all be positive".into(),
            ));
        }
        let expected = height * width * bands;
        if data.len() != expected {
            return Err(Error::dims(
                "HyperCube::new",
                format!("{expected} values"),
                format!("{}", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("cube data at flat index {i}"),
            });
        }
        Ok(Self {
            height,
            width,
            bands,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Number of pixels `N = height * width`.
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    /// The spectrum of flat pixel `n`.
    pub fn pixel(&self, n: usize) -> &[f64] {
        &self.data[n * self.bands..(n + 1) * self.bands]
    }

    /// All values, pixel-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Iterator over pixel spectra in flat order.
    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.bands)
    }

    /// Apply an affine transform `x -> (x - offset) / scale` to every value.
    pub fn affine(&self, offset: f64, scale: f64) -> Result<HyperCube> {
        let data = self.data.iter().map(|v| (v - offset) / scale).collect();
        HyperCube::new(self.height, self.width, self.bands, data)
    }
}

/// An L x P matrix whose columns are endmember spectral signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    data: Array2<f64>,
}

impl EndmemberMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Invalid("endmember matrix must be non-empty".into()));
        }
        for (p, col) in data.columns().into_iter().enumerate() {
            let mut norm_sq = 0.0;
            for &v in col.iter() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("endmember column {p}"),
                    });
                }
                if v < 0.0 {
                    return Err(Error::Invalid(format!(
                        "endmember column {p} has a negative reflectance ({v})"
                    )));
                }
                norm_sq += v * v;
            }
            if norm_sq == 0.0 {
                return Err(Error::ZeroNorm {
                    context: format!("endmember column {p}"),
                });
            }
        }
        Ok(Self { data })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn materials(&self) -> usize {
        self.data.ncols()
    }

    /// Signature of material `p`.
    pub fn column(&self, p: usize) -> ArrayView1<'_, f64> {
        self.data.column(p)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }
}

/// Non-negativity slack tolerated on abundance entries.
pub const ABUNDANCE_NONNEG_TOL: f64 = 1e-9;
/// Tolerance on each abundance column's deviation from unit sum.
pub const ABUNDANCE_SUM_TOL: f64 = 1e-6;

/// A P x N matrix of fractional abundances, column-wise on the unit simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    data: Array2<f64>,
}

impl AbundanceMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Invalid("abundance matrix must be non-empty".into()));
        }
        for (n, col) in data.columns().into_iter().enumerate() {
            let mut sum = 0.0;
            for &v in col.iter() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("abundance column {n}"),
                    });
                }
                if v < -ABUNDANCE_NONNEG_TOL {
                    return Err(Error::Infeasible {
                        pixel: n,
                        constraint: format!("entry {v} < -{ABUNDANCE_NONNEG_TOL}"),
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ABUNDANCE_SUM_TOL {
                return Err(Error::Infeasible {
                    pixel: n,
                    constraint: format!("column sum {sum} not within {ABUNDANCE_SUM_TOL} of 1"),
                });
            }
        }
        Ok(Self { data })
    }

    pub fn materials(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    /// Abundance vector of pixel `n`.
    pub fn column(&self, n: usize) -> ArrayView1<'_, f64> {
        self.data.column(n)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }
}

/// An N x P x K stack of per-pixel latent endmember codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    data: Array3<f64>,
}

impl LatentTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "latent tensor".into(),
            });
        }
        Ok(Self { data })
    }

    pub fn pixels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn materials(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn latent_dim(&self) -> usize {
        self.data.shape()[2]
    }

    /// The P x K latent matrix of pixel `n` (row p = code of material p).
    pub fn pixel_codes(&self, n: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![n, .., ..])
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.data
    }
}

/// Reference latent codes, one K-vector column per material (K x P).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentReference {
    data: Array2<f64>,
}

impl LatentReference {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "latent reference".into(),
            });
        }
        Ok(Self { data })
    }

    pub fn latent_dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn materials(&self) -> usize {
        self.data.ncols()
    }

    /// Reference code of material `p`.
    pub fn column(&self, p: usize) -> ArrayView1<'_, f64> {
        self.data.column(p)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }
}

/// An L x P x N stack of per-pixel endmember matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberTensor {
    data: Array3<f64>,
}

impl EndmemberTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "endmember tensor".into(),
            });
        }
        Ok(Self { data })
    }

    pub fn bands(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn materials(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn pixels(&self) -> usize {
        self.data.shape()[2]
    }

    /// The L x P endmember matrix of pixel `n`.
    pub fn pixel_matrix(&self, n: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![.., .., n])
    }

    /// Signature of material `p` at pixel `n`.
    pub fn signature(&self, p: usize, n: usize) -> ArrayView1<'_, f64> {
        self.data.slice(s![.., p, n])
    }

    /// Replicate one endmember matrix across `pixels` identical slices.
    pub fn replicate(m: &EndmemberMatrix, pixels: usize) -> Self {
        let (l, p) = (m.bands(), m.materials());
        let mut data = Array3::<f64>::zeros((l, p, pixels));
        for n in 0..pixels {
            data.slice_mut(s![.., .., n]).assign(m.as_array());
        }
        Self { data }
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cube_rejects_wrong_length() {
        let err = HyperCube::new(2, 2, 3, vec![0.0; 11]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn cube_rejects_non_finite() {
        let mut data = vec![0.1; 12];
        data[5] = f64::NAN;
        assert!(HyperCube::new(2, 2, 3, data).is_err());
    }

    #[test]
    fn cube_pixel_layout_is_pixel_major() {
        let data: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let cube = HyperCube::new(2, 2, 3, data).unwrap();
        assert_eq!(cube.pixel(0), &[0.0, 1.0, 2.0]);
        assert_eq!(cube.pixel(3), &[9.0, 10.0, 11.0]);
        assert_eq!(cube.num_pixels(), 4);
    }

    #[test]
    fn endmember_matrix_rejects_zero_column() {
        let m = array![[1.0, 0.0], [0.5, 0.0]];
        let err = EndmemberMatrix::new(m).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { .. }));
    }

    #[test]
    fn abundance_requires_unit_columns() {
        let good = array![[0.25, 1.0], [0.75, 0.0]];
        assert!(AbundanceMatrix::new(good).is_ok());
        let bad_sum = array![[0.25, 1.0], [0.70, 0.0]];
        assert!(AbundanceMatrix::new(bad_sum).is_err());
        let negative = array![[1.2, 1.0], [-0.2, 0.0]];
        assert!(AbundanceMatrix::new(negative).is_err());
    }

    #[test]
    fn replicated_tensor_slices_equal_source() {
        let m = EndmemberMatrix::new(array![[1.0, 0.2], [0.1, 0.9], [0.4, 0.3]]).unwrap();
        let t = EndmemberTensor::replicate(&m, 5);
        assert_eq!(t.bands(), 3);
        assert_eq!(t.materials(), 2);
        assert_eq!(t.pixels(), 5);
        for n in 0..5 {
            assert_eq!(t.pixel_matrix(n), m.as_array().view());
        }
    }
}
