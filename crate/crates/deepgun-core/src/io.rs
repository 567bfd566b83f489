//! File formats: `.hcube` rasters, `.vaem` models, and CSV matrices.
//!
//! `.hcube`: magic `HCUB`, little-endian u32 version (=1), u32 height,
//! u32 width, u32 bands, then `height*width*bands` little-endian f32 values,
//! pixel-major. Endmember tensors reuse the container with
//! `bands = L * materials`; within a pixel the `L` values of material 0 come
//! first, then material 1, and so on.
//!
//! `.vaem`: magic `VAEM`, u32 version (=1), u32 latent_dim, u32 bands, then
//! the encoder followed by the decoder, each as a u32 layer count and per
//! layer u32 input_dim, u32 output_dim, u8 activation code (0 = ReLU,
//! 1 = sigmoid, 2 = linear), the row-major f32 weights, then the f32 biases.
//!
//! CSV matrices are header-less rows of comma-separated values with `\n`
//! line endings. Values are written with 17 significant digits so a
//! save/load round-trip is exact for finite `f64` data.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::neural::mlp::{Activation, Layer, MlpParams};
use crate::neural::vae::VaeModel;
use crate::types::{EndmemberTensor, HyperCube};

const CUBE_MAGIC: &[u8; 4] = b"HCUB";
const MODEL_MAGIC: &[u8; 4] = b"VAEM";
const FORMAT_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sequential reader over a byte buffer that reports offsets in errors.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    fn fail(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.display().to_string(),
            offset: at as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.fail(
                self.pos,
                format!(
                    "truncated file: needed {n} bytes for {what}, {} left",
                    self.buf.len() - self.pos
                ),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(self.fail(
                at,
                format!(
                    "bad magic: expected {:?}, got {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        Ok(())
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let bytes = self.take(4, what)?;
        Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn f32_values(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(4 * count, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.fail(
                self.pos,
                format!("{} unexpected trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_f32s(out: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serialize a cube to `.hcube` bytes.
pub fn cube_to_bytes(cube: &HyperCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * cube.data().len());
    out.extend_from_slice(CUBE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cube.height() as u32).to_le_bytes());
    out.extend_from_slice(&(cube.width() as u32).to_le_bytes());
    out.extend_from_slice(&(cube.bands() as u32).to_le_bytes());
    push_f32s(&mut out, cube.data().iter().copied());
    out
}

pub fn save_cube(path: impl AsRef<Path>, cube: &HyperCube) -> Result<()> {
    fs::write(path.as_ref(), cube_to_bytes(cube)).map_err(|e| io_err(path.as_ref(), e))
}

/// Parse `.hcube` bytes.
pub fn cube_from_bytes(buf: &[u8], path: &Path) -> Result<HyperCube> {
    let mut r = Reader::new(buf, path);
    r.magic(CUBE_MAGIC)?;
    let at_version = r.pos;
    let version = r.u32_le("version")?;
    if version != FORMAT_VERSION {
        return Err(r.fail(at_version, format!("unsupported version {version}")));
    }
    let at_dims = r.pos;
    let height = r.u32_le("height")? as usize;
    let width = r.u32_le("width")? as usize;
    let bands = r.u32_le("bands")? as usize;
    if height == 0 || width == 0 || bands == 0 {
        return Err(r.fail(at_dims, "all dimensions must be positive"));
    }
    let count = height * width * bands;
    let data = r.f32_values(count, "cube data")?;
    r.expect_end()?;
    HyperCube::new(height, width, bands, data)
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HyperCube> {
    let buf = fs::read(path.as_ref()).map_err(|e| io_err(path.as_ref(), e))?;
    cube_from_bytes(&buf, path.as_ref())
}

/// Store an endmember tensor in an `.hcube` container (`bands = L * P`).
pub fn save_em_tensor(
    path: impl AsRef<Path>,
    tensor: &EndmemberTensor,
    height: usize,
    width: usize,
) -> Result<()> {
    let (l, p, n) = (tensor.bands(), tensor.materials(), tensor.pixels());
    if height * width != n {
        return Err(Error::dims(
            "save_em_tensor",
            format!("{n} pixels"),
            format!("{height}x{width}"),
        ));
    }
    let mut data = Vec::with_capacity(n * l * p);
    for pix in 0..n {
        for mat in 0..p {
            data.extend(tensor.signature(mat, pix).iter().copied());
        }
    }
    let cube = HyperCube::new(height, width, l * p, data)?;
    save_cube(path, &cube)
}

/// Load an endmember tensor from an `.hcube` container, splitting the band
/// axis into `materials` blocks.
pub fn load_em_tensor(
    path: impl AsRef<Path>,
    materials: usize,
) -> Result<(EndmemberTensor, usize, usize)> {
    let cube = load_cube(path.as_ref())?;
    if materials == 0 || cube.bands() % materials != 0 {
        return Err(Error::dims(
            "load_em_tensor bands",
            format!("a multiple of {materials}"),
            format!("{}", cube.bands()),
        ));
    }
    let l = cube.bands() / materials;
    let n = cube.num_pixels();
    let mut data = Array3::<f64>::zeros((l, materials, n));
    for pix in 0..n {
        let values = cube.pixel(pix);
        for mat in 0..materials {
            for band in 0..l {
                data[[band, mat, pix]] = values[mat * l + band];
            }
        }
    }
    Ok((EndmemberTensor::new(data)?, cube.height(), cube.width()))
}

/// Write a matrix as header-less CSV (17 significant digits).
pub fn save_matrix_csv(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<()> {
    let mut out = String::with_capacity(matrix.len() * 25);
    for row in matrix.rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    fs::write(path.as_ref(), out).map_err(|e| io_err(path.as_ref(), e))
}

/// Read a header-less CSV matrix. Rows must all have the same number of
/// fields; errors carry 1-based row/column positions.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let csv_err = |row: usize, column: usize, message: String| Error::Csv {
        path: path.display().to_string(),
        row,
        column,
        message,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(cols.max(4));
        for (j, field) in line.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| csv_err(i + 1, j + 1, format!("not a number: {field:?}")))?;
            row.push(v);
        }
        if rows.is_empty() {
            cols = row.len();
        } else if row.len() != cols {
            return Err(csv_err(
                i + 1,
                row.len(),
                format!("expected {cols} fields, got {}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(csv_err(1, 1, "empty CSV matrix".into()));
    }
    let nrows = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, cols), flat)
        .map_err(|e| Error::Invalid(format!("CSV shape: {e}")))
}

fn mlp_to_bytes(out: &mut Vec<u8>, mlp: &MlpParams) {
    out.extend_from_slice(&(mlp.layers().len() as u32).to_le_bytes());
    for layer in mlp.layers() {
        out.extend_from_slice(&(layer.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.output_dim() as u32).to_le_bytes());
        out.push(layer.activation.code());
        push_f32s(out, layer.weight.iter().copied());
        push_f32s(out, layer.bias.iter().copied());
    }
}

fn mlp_from_reader(r: &mut Reader<'_>, what: &str) -> Result<MlpParams> {
    let at = r.pos;
    let n_layers = r.u32_le("layer count")? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(r.fail(at, format!("{what}: implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let input_dim = r.u32_le("layer input dim")? as usize;
        let output_dim = r.u32_le("layer output dim")? as usize;
        let at_act = r.pos;
        let code = r.u8("activation code")?;
        let activation = Activation::from_code(code)
            .map_err(|_| r.fail(at_act, format!("{what} layer {i}: bad activation {code}")))?;
        let weights = r.f32_values(input_dim * output_dim, "weights")?;
        let biases = r.f32_values(output_dim, "biases")?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((output_dim, input_dim), weights)
                .map_err(|e| r.fail(r.pos, format!("{what} layer {i}: {e}")))?,
            bias: Array1::from_vec(biases),
            activation,
        });
    }
    MlpParams::new(layers)
}

/// Serialize a VAE model to `.vaem` bytes.
pub fn model_to_bytes(model: &VaeModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.latent_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.bands() as u32).to_le_bytes());
    mlp_to_bytes(&mut out, model.encoder());
    mlp_to_bytes(&mut out, model.decoder());
    out
}

pub fn save_vae_model(path: impl AsRef<Path>, model: &VaeModel) -> Result<()> {
    fs::write(path.as_ref(), model_to_bytes(model)).map_err(|e| io_err(path.as_ref(), e))
}

pub fn model_from_bytes(buf: &[u8], path: &Path) -> Result<VaeModel> {
    let mut r = Reader::new(buf, path);
    r.magic(MODEL_MAGIC)?;
    let at_version = r.pos;
    let version = r.u32_le("version")?;
    if version != FORMAT_VERSION {
        return Err(r.fail(at_version, format!("unsupported version {version}")));
    }
    let latent_dim = r.u32_le("latent dim")? as usize;
    let bands = r.u32_le("bands")? as usize;
    let encoder = mlp_from_reader(&mut r, "encoder")?;
    let decoder = mlp_from_reader(&mut r, "decoder")?;
    r.expect_end()?;
    VaeModel::new(encoder, decoder, latent_dim, bands)
}

pub fn load_vae_model(path: impl AsRef<Path>) -> Result<VaeModel> {
    let buf = fs::read(path.as_ref()).map_err(|e| io_err(path.as_ref(), e))?;
    model_from_bytes(&buf, path.as_ref())
}
