//! 8-bit grayscale PNG rendering of complex images: magnitude maps and
//! 10x-amplified error maps normalized by the reference maximum so error
//! images are comparable across methods.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::numerics::ComplexImage;

fn to_gray(values: &[f64], height: usize, width: usize, max: f64) -> GrayImage {
    let mut img = GrayImage::new(width as u32, height as u32);
    for r in 0..height {
        for c in 0..width {
            let v = if max > 0.0 {
                (values[r * width + c] / max).clamp(0.0, 1.0)
            } else {
                0.0
            };
            img.put_pixel(c as u32, r as u32, Luma([(v * 255.0).round() as u8]));
        }
    }
    img
}

fn save(img: GrayImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    img.save(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Magnitude image, linearly mapped from [0, max|x|] to [0, 255].
pub fn render_magnitude(x: &ComplexImage, path: &Path) -> Result<()> {
    x.check_finite("render input")?;
    let (h, w) = x.shape();
    let mags: Vec<f64> = x.data().iter().map(|z| z.norm()).collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    save(to_gray(&mags, h, w, max), path)
}

/// Error map `10 |estimate - reference|`, clipped at the reference maximum
/// before mapping to [0, 255].
pub fn render_error(estimate: &ComplexImage, reference: &ComplexImage, path: &Path) -> Result<()> {
    estimate.check_finite("render input")?;
    reference.check_finite("render reference")?;
    if estimate.shape() != reference.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", reference.shape().0, reference.shape().1),
            got: format!("{}x{}", estimate.shape().0, estimate.shape().1),
        });
    }
    let (h, w) = estimate.shape();
    let ref_max = reference.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let errs: Vec<f64> = estimate
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (10.0 * (a - b).norm()).min(ref_max))
        .collect();
    save(to_gray(&errs, h, w, ref_max), path)
}
