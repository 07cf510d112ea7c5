//! Inverted-Gaussian-shell frequency weighting and the forward corruption
//! process it shapes.
//!
//! The per-timestep corruption operator factors as a scalar noise scale times
//! a frequency weighting: `G_t = sigma_noise(t) * H_t`, where
//! `H_t(x,y) = 1 - a_t * exp(-((x-H/2)^2 + (y-W/2)^2) / (2*sigma_shell(t)^2))`
//! suppresses noise near DC early in the reverse process. Amplitudes are
//! clamped strictly below 1 so every `G_t` is invertible.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{fft2c, ifft2c, noise_image, ComplexImage, KSpaceGrid};

/// Schedule parameters. `t` runs from `t_max` (most corrupted) down to 0 (clean).
#[derive(Debug, Clone, PartialEq)]
pub struct ShellSchedule {
    t_max: usize,
    a_clamp: f64,
    sigma_max: f64,
    sigma_min: f64,
}

/// H x W grid of per-frequency weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellWeights {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ShellWeights {
    /// Build weights directly from values (used for hand-crafted step tests
    /// and frozen-schedule checks).
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}"),
                got: format!("{} entries", values.len()),
            });
        }
        Ok(Self { height, width, values })
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

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Frobenius norm of the weight grid.
    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiply a k-space grid elementwise by these weights.
    pub fn apply(&self, grid: &mut KSpaceGrid) {
        debug_assert_eq!((self.height, self.width), grid.shape());
        for (z, &w) in grid.data_mut().iter_mut().zip(&self.values) {
            *z *= w;
        }
    }
}

impl Default for ShellSchedule {
    fn default() -> Self {
        // a_clamp must stay below 1 - 1.1/ln(sigma_max/sigma_min): past that
        // point the amplitude kink makes total noise non-monotone in t.
        Self { t_max: 100, a_clamp: 0.85, sigma_max: 80.0, sigma_min: 0.002 }
    }
}

impl ShellSchedule {
    pub fn new(t_max: usize, a_clamp: f64, sigma_max: f64, sigma_min: f64) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::InvalidSchedule("t_max must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&a_clamp) {
            return Err(Error::InvalidSchedule(format!("a_clamp {a_clamp} must be in [0, 1)")));
        }
        if !(sigma_max > 0.0 && sigma_min > 0.0 && sigma_min <= sigma_max) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < sigma_min <= sigma_max, got ({sigma_min}, {sigma_max})"
            )));
        }
        if sigma_min > 0.01 * sigma_max {
            return Err(Error::InvalidSchedule(
                "sigma_min must be at most 1% of sigma_max for terminal cleanliness".into(),
            ));
        }
        Ok(Self { t_max, a_clamp, sigma_max, sigma_min })
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn a_clamp(&self) -> f64 {
        self.a_clamp
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t > self.t_max {
            Err(Error::TimestepOutOfRange { t, t_max: self.t_max })
        } else {
            Ok(())
        }
    }

    /// Shell amplitude `min(1.1 t / T, a_clamp)`.
    pub fn amplitude(&self, t: usize) -> f64 {
        (1.1 * t as f64 / self.t_max as f64).min(self.a_clamp)
    }

    /// Shell width in frequency bins, `5 exp(5 t / T)`.
    pub fn shell_width(&self, t: usize) -> f64 {
        5.0 * (5.0 * t as f64 / self.t_max as f64).exp()
    }

    /// Scalar noise scale, geometric from `sigma_min` at t=0 to `sigma_max` at t=T.
    pub fn noise_scale(&self, t: usize) -> f64 {
        let frac = t as f64 / self.t_max as f64;
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(frac)
    }

    /// The inverted-Gaussian-shell weighting `H_t` on an H x W grid.
    pub fn shell(&self, t: usize, height: usize, width: usize) -> Result<ShellWeights> {
        self.check_t(t)?;
        let a = self.amplitude(t);
        let two_sigma_sq = 2.0 * self.shell_width(t).powi(2);
        let cr = (height / 2) as f64;
        let cc = (width / 2) as f64;
        let mut values = vec![0.0; height * width];
        for r in 0..height {
            let dr = r as f64 - cr;
            for c in 0..width {
                let dc = c as f64 - cc;
                values[r * width + c] = 1.0 - a * (-(dr * dr + dc * dc) / two_sigma_sq).exp();
            }
        }
        Ok(ShellWeights { height, width, values })
    }

    /// The full per-frequency noise scale `G_t = sigma_noise(t) * H_t`.
    /// Strictly positive everywhere.
    pub fn effective_weights(&self, t: usize, height: usize, width: usize) -> Result<ShellWeights> {
        let mut w = self.shell(t, height, width)?;
        let s = self.noise_scale(t);
        for v in &mut w.values {
            *v *= s;
        }
        Ok(w)
    }

    /// Forward corruption: `x_t = x_0 + ifft2c(G_t .* fft2c(z))` with z a
    /// unit complex Gaussian image.
    pub fn corrupt<R: Rng + ?Sized>(
        &self,
        x0: &ComplexImage,
        t: usize,
        rng: &mut R,
    ) -> Result<ComplexImage> {
        let (h, w) = x0.shape();
        let weights = self.effective_weights(t, h, w)?;
        let z = noise_image(h, w, rng);
        let mut zf = fft2c(&z)?;
        weights.apply(&mut zf);
        let shaped = ifft2c(&zf)?;
        let mut out = x0.clone();
        out.add_scaled(num_complex::Complex64::new(1.0, 0.0), &shaped);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn center_value_is_one_minus_amplitude() {
        let sched = ShellSchedule::default();
        for t in [0, 13, 50, 77, 100] {
            let h = sched.shell(t, 32, 32).unwrap();
            let a = sched.amplitude(t);
            assert!((h.at(16, 16) - (1.0 - a)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_amplitude_gives_all_ones() {
        let sched = ShellSchedule::new(10, 0.0, 1.0, 0.005).unwrap();
        let h = sched.shell(7, 12, 9).unwrap();
        assert!(h.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn corner_value_matches_direct_formula() {
        // 256x256, a=0.5, shell width 5: corner at squared radius 128^2+128^2.
        // Direct evaluation: 1 - 0.5*exp(-32768/50) = 1 to double precision.
        let sched = ShellSchedule::new(100, 0.5, 1.0, 0.005).unwrap();
        // find a t with amplitude exactly 0.5 and width 5: t=0 has width 5 but a=0;
        // instead evaluate the formula shape via a t where a is clamped to 0.5.
        let t = 100; // amplitude = min(1.1, 0.5) = 0.5, width = 5*e^5
        let h = sched.shell(t, 256, 256).unwrap();
        let two_sigma_sq = 2.0 * sched.shell_width(t).powi(2);
        let expect = 1.0 - 0.5 * (-(128.0f64.powi(2) * 2.0) / two_sigma_sq).exp();
        assert!((h.at(0, 0) - expect).abs() < 1e-14);
        // and the width-5 corner value from the formula itself
        let narrow = 1.0 - 0.5 * (-(128.0f64.powi(2) * 2.0) / 50.0).exp();
        assert!((narrow - 1.0).abs() < 1e-14);
    }

    #[test]
    fn timestep_out_of_range_rejected() {
        let sched = ShellSchedule::default();
        assert!(sched.shell(101, 8, 8).is_err());
        assert!(sched.effective_weights(101, 8, 8).is_err());
    }

    #[test]
    fn effective_weights_scale_by_noise() {
        let sched = ShellSchedule::default();
        let t = 40;
        let h = sched.shell(t, 16, 16).unwrap();
        let g = sched.effective_weights(t, 16, 16).unwrap();
        let s = sched.noise_scale(t);
        for (a, b) in h.values().iter().zip(g.values()) {
            assert!((a * s - b).abs() < 1e-14);
        }
    }

    #[test]
    fn terminal_weights_near_zero() {
        let sched = ShellSchedule::default();
        let g = sched.effective_weights(0, 32, 32).unwrap();
        assert!(g.values().iter().all(|&v| v > 0.0 && v <= sched.sigma_min() * 1.0 + 1e-12));
    }

    #[test]
    fn positivity_and_band_ordering_all_t() {
        let sched = ShellSchedule::default();
        for t in 0..=sched.t_max() {
            let g = sched.effective_weights(t, 64, 64).unwrap();
            assert!(g.min() > 0.0, "t={t}");
            // low-frequency band mean <= high-frequency band mean
            let (mut lo, mut nlo, mut hi, mut nhi) = (0.0, 0usize, 0.0, 0usize);
            let band = 64.0 / 8.0;
            for r in 0..64 {
                for c in 0..64 {
                    let dr = r as f64 - 32.0;
                    let dc = c as f64 - 32.0;
                    let rad = (dr * dr + dc * dc).sqrt();
                    if rad < band {
                        lo += g.at(r, c);
                        nlo += 1;
                    } else {
                        hi += g.at(r, c);
                        nhi += 1;
                    }
                }
            }
            assert!(lo / nlo as f64 <= hi / nhi as f64 + 1e-15, "t={t}");
        }
    }

    #[test]
    fn total_noise_monotone_in_t() {
        let sched = ShellSchedule::default();
        for (h, w) in [(64, 64), (96, 80)] {
            let mut prev = f64::INFINITY;
            for t in (0..=sched.t_max()).rev() {
                let g = sched.effective_weights(t, h, w).unwrap();
                let f = g.frobenius();
                assert!(
                    f <= prev * (1.0 + 1e-12),
                    "Frobenius norm grew from {prev} to {f} at t={t} on {h}x{w}"
                );
                prev = f;
            }
        }
    }

    #[test]
    fn noise_scale_monotone_and_terminal() {
        let sched = ShellSchedule::default();
        let mut prev = 0.0;
        for t in 0..=sched.t_max() {
            let s = sched.noise_scale(t);
            assert!(s > prev);
            prev = s;
        }
        assert!(sched.noise_scale(0) <= 0.01 * sched.noise_scale(sched.t_max()));
    }

    #[test]
    fn corrupt_with_vanishing_scale_is_identity_like() {
        // sigma_noise -> 0 limit: use the smallest legal scale and check the
        // perturbation is bounded by the scale itself.
        let sched = ShellSchedule::new(10, 0.5, 1e-6, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = noise_image(12, 12, &mut rng);
        let xt = sched.corrupt(&x0, 10, &mut rng).unwrap();
        assert!(xt.sub(&x0).norm() <= 1e-6 * 12.0 * 10.0);
    }

    #[test]
    fn corrupt_per_frequency_variance_matches_weights() {
        // Monte Carlo oracle: empirical variance of fft2c(x_t - x0) per bin
        // must match G_t^2 within 15% over 1000 draws.
        let sched = ShellSchedule::new(20, 0.8, 4.0, 0.02).unwrap();
        let t = 15;
        let (h, w) = (8, 8);
        let g = sched.effective_weights(t, h, w).unwrap();
        let x0 = ComplexImage::zeros(h, w);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1000;
        let mut acc = vec![0.0; h * w];
        for _ in 0..n {
            let xt = sched.corrupt(&x0, t, &mut rng).unwrap();
            let f = fft2c(&xt).unwrap();
            for (a, z) in acc.iter_mut().zip(f.data()) {
                *a += z.norm_sqr();
            }
        }
        for (i, a) in acc.iter().enumerate() {
            let var = a / n as f64;
            let expect = g.values()[i] * g.values()[i];
            let rel = (var - expect).abs() / expect;
            assert!(rel < 0.15, "bin {i}: var {var} vs {expect} (rel {rel})");
        }
    }

    #[test]
    fn corrupt_dc_variance_far_below_corner_at_high_amplitude() {
        // With amplitude near 1 the center of k-space receives far less noise
        // than the corners: coarse-to-fine ordering of the forward process.
        let sched = ShellSchedule::new(100, 0.99, 1.0, 0.005).unwrap();
        let t = 90;
        let (h, w) = (128, 128);
        let g = sched.effective_weights(t, h, w).unwrap();
        let dc = g.at(h / 2, w / 2);
        let corner = g.at(0, 0);
        assert!(dc * dc * 5.0 < corner * corner, "dc {dc} corner {corner}");

        // confirm on draws as well
        let x0 = ComplexImage::zeros(h, w);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 300;
        let (mut vdc, mut vcr) = (0.0, 0.0);
        for _ in 0..n {
            let xt = sched.corrupt(&x0, t, &mut rng).unwrap();
            let f = fft2c(&xt).unwrap();
            vdc += f.at(h / 2, w / 2).norm_sqr();
            vcr += f.at(0, 0).norm_sqr();
        }
        assert!(vdc * 3.0 < vcr, "empirical dc {vdc} corner {vcr}");
    }
}
