//! Header/raw-binary file pair storing complex single-precision tensors.
//!
//! `<stem>.hdr` is text: line 1 exactly `# Dimensions`, line 2 the
//! space-separated dimension sizes (up to 5; trailing 1s allowed).
//! `<stem>.cfl` is raw little-endian 32-bit float pairs (real, imaginary),
//! column-major: the first dimension varies fastest.
//!
//! Writes go through a temp file plus rename so a failed run leaves no
//! partial outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;
use crate::warp::DisplacementField;

pub const MAX_DIMS: usize = 5;

/// A complex tensor in file order (first dimension fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct CflTensor {
    dims: [usize; MAX_DIMS],
    data: Vec<Complex64>,
}

impl CflTensor {
    pub fn new(dims: &[usize], data: Vec<Complex64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(Error::InvalidConfig(format!(
                "tensor rank {} outside 1..={MAX_DIMS}",
                dims.len()
            )));
        }
        let mut padded = [1usize; MAX_DIMS];
        padded[..dims.len()].copy_from_slice(dims);
        let expect: usize = padded.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{expect} entries for dims {padded:?}"),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self { dims: padded, data })
    }

    pub fn dims(&self) -> &[usize; MAX_DIMS] {
        &self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Write the `.hdr`/`.cfl` pair for `stem` (extensions appended here).
    pub fn write(&self, stem: &Path) -> Result<()> {
        let hdr_path = with_ext(stem, "hdr");
        let cfl_path = with_ext(stem, "cfl");
        if let Some(parent) = stem.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }

        let mut header = String::from("# Dimensions\n");
        let dims_line: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        header.push_str(&dims_line.join(" "));
        header.push('\n');

        let mut payload = Vec::with_capacity(self.data.len() * 8);
        for z in &self.data {
            payload.extend_from_slice(&(z.re as f32).to_le_bytes());
            payload.extend_from_slice(&(z.im as f32).to_le_bytes());
        }

        atomic_write(&hdr_path, header.as_bytes())?;
        atomic_write(&cfl_path, &payload)?;
        Ok(())
    }

    /// Read the `.hdr`/`.cfl` pair at `stem`.
    pub fn read(stem: &Path) -> Result<Self> {
        let hdr_path = with_ext(stem, "hdr");
        let cfl_path = with_ext(stem, "cfl");

        let header = fs::read_to_string(&hdr_path).map_err(|e| Error::FileFormat {
            path: hdr_path.clone(),
            msg: format!("cannot read header: {e}"),
        })?;
        let mut lines = header.lines();
        match lines.next() {
            Some(line) if line.trim_end() == "# Dimensions" => {}
            other => {
                return Err(Error::FileFormat {
                    path: hdr_path.clone(),
                    msg: format!("first line must be '# Dimensions', got {other:?}"),
                })
            }
        }
        let dims_line = lines.next().ok_or_else(|| Error::FileFormat {
            path: hdr_path.clone(),
            msg: "missing dimensions line".into(),
        })?;
        let dims: Vec<usize> = dims_line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| Error::FileFormat {
                    path: hdr_path.clone(),
                    msg: format!("bad dimension token '{tok}'"),
                })
            })
            .collect::<Result<_>>()?;
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(Error::FileFormat {
                path: hdr_path.clone(),
                msg: format!("{} dimensions outside 1..={MAX_DIMS}", dims.len()),
            });
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::FileFormat { path: hdr_path, msg: "zero-sized dimension".into() });
        }

        let payload = fs::read(&cfl_path).map_err(|e| Error::FileFormat {
            path: cfl_path.clone(),
            msg: format!("cannot read payload: {e}"),
        })?;
        let count: usize = dims.iter().product();
        if payload.len() != count * 8 {
            return Err(Error::FileFormat {
                path: cfl_path,
                msg: format!(
                    "payload is {} bytes but header implies {} complex entries ({} bytes)",
                    payload.len(),
                    count,
                    count * 8
                ),
            });
        }
        let mut data = Vec::with_capacity(count);
        for chunk in payload.chunks_exact(8) {
            let re = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            let im = f32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]);
            data.push(Complex64::new(re as f64, im as f64));
        }
        Self::new(&dims, data)
    }

    /// Image -> tensor with dims [H, W]: H varies fastest in the payload.
    pub fn from_image(img: &ComplexImage) -> Self {
        let (h, w) = img.shape();
        let mut data = vec![Complex64::ZERO; h * w];
        for r in 0..h {
            for c in 0..w {
                data[r + c * h] = img.at(r, c);
            }
        }
        Self::new(&[h, w], data).expect("sized by construction")
    }

    /// Tensor with dims [H, W, 1, 1, 1] -> image.
    pub fn to_image(&self) -> Result<ComplexImage> {
        if self.dims[2..].iter().any(|&d| d != 1) {
            return Err(Error::InvalidConfig(format!(
                "expected a 2D tensor, got dims {:?}",
                self.dims
            )));
        }
        let (h, w) = (self.dims[0], self.dims[1]);
        let mut img = ComplexImage::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                img.set(r, c, self.data[r + c * h]);
            }
        }
        Ok(img)
    }

    /// Stack of same-shape images -> dims [H, W, N].
    pub fn from_images(images: &[ComplexImage]) -> Result<Self> {
        let first = images.first().ok_or(Error::EmptyCorpus)?;
        let (h, w) = first.shape();
        let mut data = vec![Complex64::ZERO; h * w * images.len()];
        for (k, img) in images.iter().enumerate() {
            if img.shape() != (h, w) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{h}x{w}"),
                    got: format!("{}x{}", img.shape().0, img.shape().1),
                });
            }
            for r in 0..h {
                for c in 0..w {
                    data[r + c * h + k * h * w] = img.at(r, c);
                }
            }
        }
        Self::new(&[h, w, images.len()], data)
    }

    /// Tensor with dims [H, W, N, 1, 1] -> N images.
    pub fn to_images(&self) -> Result<Vec<ComplexImage>> {
        if self.dims[3..].iter().any(|&d| d != 1) {
            return Err(Error::InvalidConfig(format!(
                "expected a 3D tensor, got dims {:?}",
                self.dims
            )));
        }
        let (h, w, n) = (self.dims[0], self.dims[1], self.dims[2]);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut img = ComplexImage::zeros(h, w);
            for r in 0..h {
                for c in 0..w {
                    img.set(r, c, self.data[r + c * h + k * h * w]);
                }
            }
            out.push(img);
        }
        Ok(out)
    }

    /// Displacement fields -> dims [H, W, 2, N]: component index 0 is the row
    /// displacement, stored as complex with zero imaginary part.
    pub fn from_fields(fields: &[DisplacementField]) -> Result<Self> {
        let first = fields.first().ok_or(Error::EmptyCorpus)?;
        let (h, w) = first.shape();
        let mut data = vec![Complex64::ZERO; h * w * 2 * fields.len()];
        for (k, f) in fields.iter().enumerate() {
            if f.shape() != (h, w) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{h}x{w}"),
                    got: format!("{}x{}", f.shape().0, f.shape().1),
                });
            }
            for r in 0..h {
                for c in 0..w {
                    let (dr, dc) = f.at(r, c);
                    data[r + c * h + k * 2 * h * w] = Complex64::new(dr, 0.0);
                    data[r + c * h + h * w + k * 2 * h * w] = Complex64::new(dc, 0.0);
                }
            }
        }
        Self::new(&[h, w, 2, fields.len()], data)
    }

    /// Tensor with dims [H, W, 2, N] -> N displacement fields.
    pub fn to_fields(&self) -> Result<Vec<DisplacementField>> {
        if self.dims[2] != 2 || self.dims[4] != 1 {
            return Err(Error::InvalidConfig(format!(
                "expected dims [H, W, 2, N], got {:?}",
                self.dims
            )));
        }
        let (h, w, n) = (self.dims[0], self.dims[1], self.dims[3]);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut rows = vec![0.0; h * w];
            let mut cols = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    rows[r * w + c] = self.data[r + c * h + k * 2 * h * w].re;
                    cols[r * w + c] = self.data[r + c * h + h * w + k * 2 * h * w].re;
                }
            }
            out.push(DisplacementField::from_components(h, w, rows, cols)?);
        }
        Ok(out)
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

/// Write bytes to `path` via a temp file in the same directory plus rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = {
        let mut t = path.as_os_str().to_owned();
        t.push(".tmp");
        PathBuf::from(t)
    };
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
