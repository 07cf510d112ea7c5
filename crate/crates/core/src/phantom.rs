//! Piecewise-smooth synthetic test images: a soft-edged body ellipse with
//! random interior ellipses and a low-order smooth phase. Used as ground
//! truth for simulation studies and as a corpus for spectrum estimation.

use num_complex::Complex64;
use rand::Rng;

use crate::numerics::ComplexImage;

struct Ellipse {
    cr: f64,
    cc: f64,
    a: f64,
    b: f64,
    phi: f64,
    intensity: f64,
}

impl Ellipse {
    /// Soft indicator: 1 well inside, 0 outside, ~2 px transition band.
    fn eval(&self, r: f64, c: f64) -> f64 {
        let dr = r - self.cr;
        let dc = c - self.cc;
        let (sin_p, cos_p) = self.phi.sin_cos();
        let u = (dr * cos_p + dc * sin_p) / self.a;
        let v = (-dr * sin_p + dc * cos_p) / self.b;
        let d = (u * u + v * v).sqrt();
        // edge width ~2 px expressed in normalized radius
        let edge = 2.0 / self.a.min(self.b);
        let s = (1.0 - d) / edge;
        s.clamp(0.0, 1.0)
    }
}

/// Random piecewise-smooth phantom: one body ellipse of unit intensity plus
/// `n_blobs` interior ellipses, under a smooth spatial phase.
pub fn smooth_phantom<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    n_blobs: usize,
    rng: &mut R,
) -> ComplexImage {
    let h = height as f64;
    let w = width as f64;
    let body = Ellipse {
        cr: h / 2.0 + rng.random_range(-0.02..0.02) * h,
        cc: w / 2.0 + rng.random_range(-0.02..0.02) * w,
        a: rng.random_range(0.32..0.40) * h,
        b: rng.random_range(0.32..0.40) * w,
        phi: rng.random_range(-0.3..0.3),
        intensity: 1.0,
    };
    let mut blobs = Vec::with_capacity(n_blobs);
    for _ in 0..n_blobs {
        blobs.push(Ellipse {
            cr: body.cr + rng.random_range(-0.4..0.4) * body.a,
            cc: body.cc + rng.random_range(-0.4..0.4) * body.b,
            a: rng.random_range(0.06..0.2) * h,
            b: rng.random_range(0.06..0.2) * w,
            phi: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            intensity: rng.random_range(-0.5..0.8),
        });
    }
    // low-order smooth phase ramp
    let pr = rng.random_range(-1.5..1.5) / h;
    let pc = rng.random_range(-1.5..1.5) / w;
    let p0 = rng.random_range(-0.5..0.5);

    let mut img = ComplexImage::zeros(height, width);
    for r in 0..height {
        for c in 0..width {
            let rf = r as f64;
            let cf = c as f64;
            let inside = body.eval(rf, cf);
            let mut mag = body.intensity * inside;
            if inside > 0.0 {
                for blob in &blobs {
                    mag += blob.intensity * blob.eval(rf, cf) * inside;
                }
            }
            let mag = mag.max(0.0);
            let phase = p0 + pr * (rf - h / 2.0) + pc * (cf - w / 2.0);
            img.set(r, c, Complex64::from_polar(mag, phase));
        }
    }
    img
}

/// A deterministic corpus of phantoms for spectrum estimation.
pub fn phantom_corpus(height: usize, width: usize, count: usize, seed: u64) -> Vec<ComplexImage> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| smooth_phantom(height, width, 3 + (i % 4), &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phantom_is_bounded_and_supported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = smooth_phantom(64, 64, 4, &mut rng);
        assert!(p.is_finite());
        let max = p.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(max > 0.5 && max < 3.0, "peak magnitude {max}");
        // corners are background
        for (r, c) in [(0, 0), (0, 63), (63, 0), (63, 63)] {
            assert_eq!(p.at(r, c), Complex64::ZERO);
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = phantom_corpus(32, 32, 5, 7);
        let b = phantom_corpus(32, 32, 5, 7);
        assert_eq!(a, b);
    }
}
