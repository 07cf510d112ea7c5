//! Retrospective corruption generators: smooth random displacement fields,
//! rigid motion draws, variable-density Cartesian masks, and their partition
//! across motion states.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::forward::SamplingMask;
use crate::numerics::{fft2c, ifft2c, ComplexImage};
use crate::warp::{DisplacementField, RigidParams};

/// Reference radius of the variable-density law, in frequency bins.
const DENSITY_RADIUS: f64 = 8.0;

/// Side of the always-sampled central block of a variable-density mask.
const FORCED_CENTER: usize = 8;

/// Smooth random field: per component, white Gaussian noise is damped
/// exponentially with distance from DC in the Fourier domain, brought back to
/// image space (real part), then the whole field is rescaled so the maximum
/// displacement magnitude equals `max_disp`.
pub fn random_smooth_field<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    max_disp: f64,
    damping: f64,
    rng: &mut R,
) -> Result<DisplacementField> {
    if max_disp < 0.0 {
        return Err(Error::InvalidConfig(format!("max_disp {max_disp} must be >= 0")));
    }
    let component = |rng: &mut R| -> Result<Vec<f64>> {
        let mut img = ComplexImage::zeros(height, width);
        for v in img.data_mut() {
            *v = Complex64::new(rng.sample(rand_distr::StandardNormal), 0.0);
        }
        let mut f = fft2c(&img)?;
        let cr = (height / 2) as f64;
        let cc = (width / 2) as f64;
        for r in 0..height {
            for c in 0..width {
                let rad = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt();
                let w = (-damping * rad).exp();
                let i = r * width + c;
                f.data_mut()[i] *= w;
            }
        }
        Ok(ifft2c(&f)?.data().iter().map(|z| z.re).collect())
    };
    let rows = component(rng)?;
    let cols = component(rng)?;
    let mut field = DisplacementField::from_components(height, width, rows, cols)?;
    let max_mag = field.max_magnitude();
    if max_mag > 0.0 {
        field.scale(max_disp / max_mag);
    } else {
        field.scale(0.0);
    }
    Ok(field)
}

/// Uniform rigid parameters in symmetric ranges.
pub fn random_rigid<R: Rng + ?Sized>(range_deg: f64, range_px: f64, rng: &mut R) -> Result<RigidParams> {
    if range_deg < 0.0 || range_px < 0.0 {
        return Err(Error::InvalidConfig("rigid ranges must be >= 0".into()));
    }
    let draw = |rng: &mut R, range: f64| if range == 0.0 { 0.0 } else { rng.random_range(-range..=range) };
    Ok(RigidParams {
        theta_deg: draw(rng, range_deg),
        d_row: draw(rng, range_px),
        d_col: draw(rng, range_px),
    })
}

/// Variable-density Bernoulli mask with sampling probability proportional to
/// `(1 + r / r0)^(-decay)`, normalized so the expected sampled fraction is
/// `1 / accel`. The central 8x8 block is always sampled.
pub fn variable_density_mask<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    accel: f64,
    decay: f64,
    rng: &mut R,
) -> Result<SamplingMask> {
    if accel < 1.0 {
        return Err(Error::InvalidConfig(format!("acceleration {accel} must be >= 1")));
    }
    let total = height * width;
    let target = total as f64 / accel;

    let cr = height / 2;
    let cc = width / 2;
    let half = FORCED_CENTER / 2;
    let in_center = |r: usize, c: usize| -> bool {
        let rlo = cr.saturating_sub(half);
        let clo = cc.saturating_sub(half);
        r >= rlo && r < (rlo + FORCED_CENTER).min(height) && c >= clo && c < (clo + FORCED_CENTER).min(width)
    };
    let n_center: usize = (0..height)
        .map(|r| (0..width).filter(|&c| in_center(r, c)).count())
        .sum();
    if (n_center as f64) > target {
        return Err(Error::InvalidMask(format!(
            "acceleration {accel} incompatible with the forced {FORCED_CENTER}x{FORCED_CENTER} center \
             ({n_center} samples exceed the budget {target:.1})"
        )));
    }

    // density weight per location outside the forced center
    let weight = |r: usize, c: usize| -> f64 {
        let dr = r as f64 - cr as f64;
        let dc = c as f64 - cc as f64;
        let rad = (dr * dr + dc * dc).sqrt();
        (1.0 + rad / DENSITY_RADIUS).powf(-decay)
    };

    // bisection on the scale so sum of min(1, scale * weight) hits the budget
    let budget = target - n_center as f64;
    let expected = |scale: f64| -> f64 {
        let mut sum = 0.0;
        for r in 0..height {
            for c in 0..width {
                if !in_center(r, c) {
                    sum += (scale * weight(r, c)).min(1.0);
                }
            }
        }
        sum
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while expected(hi) < budget && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = 0.5 * (lo + hi);

    let mut keep = vec![false; total];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if in_center(r, c) {
                keep[i] = true;
            } else {
                let p = (scale * weight(r, c)).min(1.0);
                keep[i] = rng.random_range(0.0..1.0) < p;
            }
        }
    }
    SamplingMask::from_keep(height, width, keep)
}

/// How the central auto-calibration block is treated when partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcsMode {
    /// Sampled locations are split into disjoint near-equal subsets.
    Disjoint,
    /// Central `acs_width` x `acs_width` locations are copied to every state;
    /// the remainder is split disjointly.
    Shared,
}

/// Partition a mask across motion states.
pub fn partition_mask<R: Rng + ?Sized>(
    mask: &SamplingMask,
    n_states: usize,
    acs_mode: AcsMode,
    acs_width: usize,
    rng: &mut R,
) -> Result<Vec<SamplingMask>> {
    if n_states == 0 {
        return Err(Error::InvalidConfig("n_states must be >= 1".into()));
    }
    if n_states == 1 {
        return Ok(vec![mask.clone()]);
    }
    let (h, w) = mask.shape();
    let cr = h / 2;
    let cc = w / 2;
    let half = acs_width / 2;
    let in_acs = |r: usize, c: usize| -> bool {
        acs_mode == AcsMode::Shared
            && acs_width > 0
            && r >= cr.saturating_sub(half)
            && r < (cr.saturating_sub(half) + acs_width).min(h)
            && c >= cc.saturating_sub(half)
            && c < (cc.saturating_sub(half) + acs_width).min(w)
    };

    let mut shared = Vec::new();
    let mut split: Vec<usize> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask.at(r, c) {
                if in_acs(r, c) {
                    shared.push(r * w + c);
                } else {
                    split.push(r * w + c);
                }
            }
        }
    }
    if split.len() < n_states && shared.is_empty() {
        return Err(Error::InvalidMask(format!(
            "cannot split {} sampled locations into {n_states} states",
            split.len()
        )));
    }

    split.shuffle(rng);
    let mut keeps = vec![vec![false; h * w]; n_states];
    for (i, &loc) in split.iter().enumerate() {
        keeps[i % n_states][loc] = true;
    }
    for keep in &mut keeps {
        for &loc in &shared {
            keep[loc] = true;
        }
    }
    keeps
        .into_iter()
        .map(|k| SamplingMask::from_keep(h, w, k))
        .collect()
}
