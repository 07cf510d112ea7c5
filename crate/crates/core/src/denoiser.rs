//! Denoiser interface `D(x, t)` approximating the posterior mean of the clean
//! image, with an analytic stationary-Gaussian-prior (Wiener) implementation.
//!
//! For a prior with per-frequency power `P` and corruption scale `G_t`, the
//! exact posterior mean applies the gain `P / (P + G_t^2)` per frequency.
//! The same interface (denoise + vector-Jacobian product) is what an external
//! learned backend would implement.


use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{fft2c, ifft2c, ComplexImage};
use crate::schedule::ShellSchedule;

/// Per-frequency prior variances. Non-negative with at least one positive entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl PowerSpectrum {
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}"),
                got: format!("{} entries", values.len()),
            });
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::NonFinite("power spectrum"));
        }
        if !values.iter().any(|&v| v > 0.0) {
            return Err(Error::InvalidConfig("power spectrum must have a positive entry".into()));
        }
        Ok(Self { height, width, values })
    }

    /// Flat spectrum of the given level.
    pub fn flat(height: usize, width: usize, level: f64) -> Result<Self> {
        Self::from_values(height, width, vec![level; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }
}

/// Mean squared k-space magnitude over a corpus of same-shape images, floored
/// at 1e-8 of the spectral peak so the induced score stays finite. A corpus of
/// zeros degenerates to the all-floor spectrum.
pub fn estimate_spectrum(corpus: &[ComplexImage]) -> Result<PowerSpectrum> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let (h, w) = first.shape();
    let mut acc = vec![0.0; h * w];
    for img in corpus {
        if img.shape() != (h, w) {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w}"),
                got: format!("{}x{}", img.height(), img.width()),
            });
        }
        let f = fft2c(img)?;
        for (a, z) in acc.iter_mut().zip(f.data()) {
            *a += z.norm_sqr();
        }
    }
    let n = corpus.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    let peak = acc.iter().cloned().fold(0.0, f64::max);
    let floor = if peak > 0.0 { 1e-8 * peak } else { 1e-8 };
    for a in &mut acc {
        *a = a.max(floor);
    }
    PowerSpectrum::from_values(h, w, acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    /// Analytic Wiener gain under a hand-specified stationary Gaussian prior.
    Wiener,
    /// Same gain driven by a spectrum estimated from a corpus.
    Empirical,
}

/// A denoiser bound to a spectrum and a corruption schedule.
#[derive(Debug, Clone)]
pub struct DenoiserHandle {
    kind: DenoiserKind,
    spectrum: PowerSpectrum,
    schedule: ShellSchedule,
}

impl DenoiserHandle {
    pub fn new(kind: DenoiserKind, spectrum: PowerSpectrum, schedule: ShellSchedule) -> Self {
        Self { kind, spectrum, schedule }
    }

    pub fn kind(&self) -> DenoiserKind {
        self.kind
    }

    pub fn spectrum(&self) -> &PowerSpectrum {
        &self.spectrum
    }

    pub fn schedule(&self) -> &ShellSchedule {
        &self.schedule
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.spectrum.height, self.spectrum.width)
    }

    fn check_shape(&self, x: &ComplexImage) -> Result<()> {
        if x.shape() == self.shape() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.spectrum.height, self.spectrum.width),
                got: format!("{}x{}", x.height(), x.width()),
            })
        }
    }

    /// Per-frequency Wiener gains `P / (P + G_t^2)`, all in [0, 1].
    pub fn gains(&self, t: usize) -> Result<Vec<f64>> {
        let (h, w) = self.shape();
        let g = self.schedule.effective_weights(t, h, w)?;
        Ok(self
            .spectrum
            .values
            .iter()
            .zip(g.values())
            .map(|(&p, &gv)| p / (p + gv * gv))
            .collect())
    }

    /// Posterior-mean estimate of the clean image from `x_t`.
    pub fn denoise(&self, x_t: &ComplexImage, t: usize) -> Result<ComplexImage> {
        self.check_shape(x_t)?;
        let gains = self.gains(t)?;
        let mut f = fft2c(x_t)?;
        for (z, g) in f.data_mut().iter_mut().zip(&gains) {
            *z *= g;
        }
        ifft2c(&f)
    }

    /// Exact vector-Jacobian product of [`Self::denoise`]. The Wiener Jacobian
    /// is Hermitian and diagonal in frequency, so the vjp applies the same gains.
    pub fn denoise_vjp(&self, _x_t: &ComplexImage, t: usize, v: &ComplexImage) -> Result<ComplexImage> {
        self.check_shape(v)?;
        let gains = self.gains(t)?;
        let mut f = fft2c(v)?;
        for (z, g) in f.data_mut().iter_mut().zip(&gains) {
            *z *= g;
        }
        ifft2c(&f)
    }
}

/// Draw one sample from the stationary Gaussian prior with spectrum `P`:
/// per-frequency complex Gaussian with variance `P`, transformed to image space.
pub fn sample_prior<R: Rng + ?Sized>(spectrum: &PowerSpectrum, rng: &mut R) -> Result<ComplexImage> {
    let (h, w) = (spectrum.height, spectrum.width);
    let z = crate::numerics::noise_image(h, w, rng);
    let mut f = fft2c(&z)?;
    for (zf, &p) in f.data_mut().iter_mut().zip(&spectrum.values) {
        *zf *= p.sqrt();
    }
    ifft2c(&f)
}
