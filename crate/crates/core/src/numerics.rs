//! Complex image/k-space containers, centered unitary 2D FFTs, and the
//! complex-Gaussian noise convention shared by every other module.
//!
//! Conventions fixed here for the whole crate:
//! - row-major storage, `data[r * width + c]`
//! - DC component of a k-space grid at `(height / 2, width / 2)` (floor for odd sizes)
//! - unitary transforms: `1/sqrt(H*W)` scaling in both directions
//! - a unit-variance complex Gaussian sample has independent real and
//!   imaginary parts, each `N(0, 1/2)`

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// H x W complex image-domain array.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

/// H x W complex frequency-domain array, DC at `(H/2, W/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

macro_rules! grid_impl {
    ($ty:ident) => {
        impl $ty {
            pub fn zeros(height: usize, width: usize) -> Self {
                Self { height, width, data: vec![Complex64::ZERO; height * width] }
            }

            pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
                if data.len() != height * width {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{}x{} = {} entries", height, width, height * width),
                        got: format!("{} entries", data.len()),
                    });
                }
                Ok(Self { height, width, data })
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn shape(&self) -> (usize, usize) {
                (self.height, self.width)
            }

            pub fn data(&self) -> &[Complex64] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [Complex64] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<Complex64> {
                self.data
            }

            #[inline]
            pub fn at(&self, r: usize, c: usize) -> Complex64 {
                self.data[r * self.width + c]
            }

            #[inline]
            pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
                self.data[r * self.width + c] = v;
            }

            /// Euclidean norm over all complex entries.
            pub fn norm(&self) -> f64 {
                self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            }

            pub fn check_finite(&self, ctx: &'static str) -> Result<()> {
                if self.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite(ctx))
                }
            }

            pub fn same_shape<O: Shaped>(&self, other: &O) -> Result<()> {
                if (self.height, self.width) == other.dims() {
                    Ok(())
                } else {
                    Err(Error::ShapeMismatch {
                        expected: format!("{}x{}", self.height, self.width),
                        got: format!("{}x{}", other.dims().0, other.dims().1),
                    })
                }
            }
        }

        impl Shaped for $ty {
            fn dims(&self) -> (usize, usize) {
                (self.height, self.width)
            }
        }
    };
}

grid_impl!(ComplexImage);
grid_impl!(KSpaceGrid);

/// Anything with a (height, width) shape.
pub trait Shaped {
    fn dims(&self) -> (usize, usize);
}

impl ComplexImage {
    /// a*x + b*y elementwise.
    pub fn lin_comb(a: Complex64, x: &ComplexImage, b: Complex64, y: &ComplexImage) -> Result<ComplexImage> {
        x.same_shape(y)?;
        let data = x
            .data
            .iter()
            .zip(&y.data)
            .map(|(&u, &v)| a * u + b * v)
            .collect();
        ComplexImage::from_vec(x.height, x.width, data)
    }

    pub fn add_scaled(&mut self, s: Complex64, other: &ComplexImage) {
        debug_assert_eq!(self.shape(), other.shape());
        for (d, o) in self.data.iter_mut().zip(&other.data) {
            *d += s * o;
        }
    }

    pub fn sub(&self, other: &ComplexImage) -> ComplexImage {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        ComplexImage { height: self.height, width: self.width, data }
    }

    pub fn scale(&mut self, s: f64) {
        for d in &mut self.data {
            *d *= s;
        }
    }
}

/// Complex inner product `sum conj(a) * b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x.conj() * y).sum()
}

// ---------------------------------------------------------------------------
// Centered unitary FFT
// ---------------------------------------------------------------------------

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().unwrap();
    if inverse {
        p.plan_fft_inverse(len)
    } else {
        p.plan_fft_forward(len)
    }
}

/// In-place unnormalized 2D FFT, rows then columns.
fn fft2_raw(data: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    let row_plan = plan(width, inverse);
    let mut scratch = vec![Complex64::ZERO; row_plan.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(width) {
        row_plan.process_with_scratch(row, &mut scratch);
    }

    let col_plan = plan(height, inverse);
    let mut scratch = vec![Complex64::ZERO; col_plan.get_inplace_scratch_len()];
    let mut col = vec![Complex64::ZERO; height];
    for c in 0..width {
        for r in 0..height {
            col[r] = data[r * width + c];
        }
        col_plan.process_with_scratch(&mut col, &mut scratch);
        for r in 0..height {
            data[r * width + c] = col[r];
        }
    }
}

/// out[(i + n/2) % n] = in[i]: moves DC (index 0) to the grid center.
fn fftshift2(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::ZERO; data.len()];
    let (sr, sc) = (height / 2, width / 2);
    for r in 0..height {
        let rr = (r + sr) % height;
        for c in 0..width {
            out[rr * width + (c + sc) % width] = data[r * width + c];
        }
    }
    out
}

/// Inverse of `fftshift2` (differs from it for odd sizes).
fn ifftshift2(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::ZERO; data.len()];
    let (sr, sc) = (height.div_ceil(2), width.div_ceil(2));
    for r in 0..height {
        let rr = (r + sr) % height;
        for c in 0..width {
            out[rr * width + (c + sc) % width] = data[r * width + c];
        }
    }
    out
}

/// Centered unitary 2D DFT. Preserves the Euclidean norm.
pub fn fft2c(img: &ComplexImage) -> Result<KSpaceGrid> {
    img.check_finite("fft2c input")?;
    let (h, w) = img.shape();
    let mut data = ifftshift2(img.data(), h, w);
    fft2_raw(&mut data, h, w, false);
    let mut data = fftshift2(&data, h, w);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for z in &mut data {
        *z *= scale;
    }
    KSpaceGrid::from_vec(h, w, data)
}

/// Exact inverse of [`fft2c`].
pub fn ifft2c(grid: &KSpaceGrid) -> Result<ComplexImage> {
    grid.check_finite("ifft2c input")?;
    let (h, w) = grid.shape();
    let mut data = ifftshift2(grid.data(), h, w);
    fft2_raw(&mut data, h, w, true);
    let mut data = fftshift2(&data, h, w);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for z in &mut data {
        *z *= scale;
    }
    ComplexImage::from_vec(h, w, data)
}

// ---------------------------------------------------------------------------
// RNG conventions
// ---------------------------------------------------------------------------

/// One unit-variance complex Gaussian sample: re, im independent N(0, 1/2).
pub fn complex_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// H x W image of i.i.d. unit-variance complex Gaussian entries.
pub fn noise_image<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> ComplexImage {
    let data = (0..height * width).map(|_| complex_standard_normal(rng)).collect();
    ComplexImage::from_vec(height, width, data).expect("sized by construction")
}
