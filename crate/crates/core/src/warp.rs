//! Dense displacement fields: pull-style bilinear warping, its exact adjoint,
//! rigid-parameter conversion, and the smoothness energy used to regularize
//! field estimation.
//!
//! Warp convention: `out(p) = x(p + u(p))` with bilinear interpolation and
//! zero fill outside the grid. Zero fill keeps the warp strictly linear in x.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{ComplexImage, Shaped};

/// Per-pixel (row, col) displacement in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    height: usize,
    width: usize,
    /// Row-displacement component, row-major.
    rows: Vec<f64>,
    /// Column-displacement component, row-major.
    cols: Vec<f64>,
}

/// Rigid motion as rotation about the image center plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidParams {
    pub theta_deg: f64,
    pub d_row: f64,
    pub d_col: f64,
}

impl DisplacementField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, rows: vec![0.0; height * width], cols: vec![0.0; height * width] }
    }

    pub fn from_components(height: usize, width: usize, rows: Vec<f64>, cols: Vec<f64>) -> Result<Self> {
        if rows.len() != height * width || cols.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("2x{height}x{width}"),
                got: format!("2x{}|{}", rows.len(), cols.len()),
            });
        }
        let f = Self { height, width, rows, cols };
        f.check_finite()?;
        Ok(f)
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

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn cols(&self) -> &[f64] {
        &self.cols
    }

    pub fn rows_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn cols_mut(&mut self) -> &mut [f64] {
        &mut self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> (f64, f64) {
        let i = r * self.width + c;
        (self.rows[i], self.cols[i])
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, d_row: f64, d_col: f64) {
        let i = r * self.width + c;
        self.rows[i] = d_row;
        self.cols[i] = d_col;
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().chain(&self.cols).all(|&v| v == 0.0)
    }

    /// Largest per-pixel displacement magnitude.
    pub fn max_magnitude(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.cols)
            .map(|(&r, &c)| (r * r + c * c).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.rows.iter().chain(&self.cols).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("displacement field"))
        }
    }

    pub fn add_scaled(&mut self, s: f64, other: &DisplacementField) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            *a += s * b;
        }
        for (a, b) in self.cols.iter_mut().zip(&other.cols) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.rows.iter_mut().chain(self.cols.iter_mut()) {
            *v *= s;
        }
    }

    /// Euclidean norm over both components.
    pub fn norm(&self) -> f64 {
        self.rows
            .iter()
            .chain(&self.cols)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Shaped for DisplacementField {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

#[inline]
fn shapes_match(img: &ComplexImage, field: &DisplacementField) -> Result<()> {
    if img.shape() == field.shape() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: format!("{}x{}", img.height(), img.width()),
            got: format!("{}x{}", field.height, field.width),
        })
    }
}

/// Bilinear sample of `x` at fractional position (fr, fc); zero outside.
/// Real and imaginary parts interpolate independently (weights are real).
#[inline]
pub(crate) fn bilinear_sample(x: &ComplexImage, fr: f64, fc: f64) -> Complex64 {
    let (h, w) = x.shape();
    let r0 = fr.floor();
    let c0 = fc.floor();
    let a = fr - r0;
    let b = fc - c0;
    let r0 = r0 as i64;
    let c0 = c0 as i64;

    let mut acc = Complex64::ZERO;
    for (dr, wr) in [(0i64, 1.0 - a), (1, a)] {
        let r = r0 + dr;
        if r < 0 || r >= h as i64 || wr == 0.0 {
            continue;
        }
        for (dc, wc) in [(0i64, 1.0 - b), (1, b)] {
            let c = c0 + dc;
            if c < 0 || c >= w as i64 || wc == 0.0 {
                continue;
            }
            acc += x.at(r as usize, c as usize) * (wr * wc);
        }
    }
    acc
}

/// Spatial derivative of the bilinear interpolant of `x` at (fr, fc),
/// with respect to (fr, fc). Piecewise constant within each cell.
#[inline]
pub(crate) fn bilinear_grad(x: &ComplexImage, fr: f64, fc: f64) -> (Complex64, Complex64) {
    let (h, w) = x.shape();
    let r0 = fr.floor();
    let c0 = fc.floor();
    let a = fr - r0;
    let b = fc - c0;
    let r0 = r0 as i64;
    let c0 = c0 as i64;

    let sample = |dr: i64, dc: i64| -> Complex64 {
        let r = r0 + dr;
        let c = c0 + dc;
        if r < 0 || r >= h as i64 || c < 0 || c >= w as i64 {
            Complex64::ZERO
        } else {
            x.at(r as usize, c as usize)
        }
    };

    let x00 = sample(0, 0);
    let x01 = sample(0, 1);
    let x10 = sample(1, 0);
    let x11 = sample(1, 1);

    let d_row = (x10 - x00) * (1.0 - b) + (x11 - x01) * b;
    let d_col = (x01 - x00) * (1.0 - a) + (x11 - x10) * a;
    (d_row, d_col)
}

/// Pull-style warp: `out(p) = x(p + u(p))`, bilinear, zero fill.
pub fn warp(x: &ComplexImage, u: &DisplacementField) -> Result<ComplexImage> {
    shapes_match(x, u)?;
    if u.is_zero() {
        // identity warp is bit-for-bit the input
        return Ok(x.clone());
    }
    let (h, w) = x.shape();
    let mut out = ComplexImage::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let (dr, dc) = u.at(r, c);
            out.set(r, c, bilinear_sample(x, r as f64 + dr, c as f64 + dc));
        }
    }
    Ok(out)
}

/// Exact adjoint of `warp(., u)` as a linear map on images: the transpose of
/// the bilinear interpolation matrix (scatter with the same real weights).
pub fn warp_adjoint(v: &ComplexImage, u: &DisplacementField) -> Result<ComplexImage> {
    shapes_match(v, u)?;
    if u.is_zero() {
        return Ok(v.clone());
    }
    let (h, w) = v.shape();
    let mut out = ComplexImage::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let (dr, dc) = u.at(r, c);
            let fr = r as f64 + dr;
            let fc = c as f64 + dc;
            let r0 = fr.floor();
            let c0 = fc.floor();
            let a = fr - r0;
            let b = fc - c0;
            let r0 = r0 as i64;
            let c0 = c0 as i64;
            let val = v.at(r, c);
            for (drr, wr) in [(0i64, 1.0 - a), (1, a)] {
                let rr = r0 + drr;
                if rr < 0 || rr >= h as i64 || wr == 0.0 {
                    continue;
                }
                for (dcc, wc) in [(0i64, 1.0 - b), (1, b)] {
                    let cc = c0 + dcc;
                    if cc < 0 || cc >= w as i64 || wc == 0.0 {
                        continue;
                    }
                    let i = (rr as usize) * w + cc as usize;
                    out.data_mut()[i] += val * (wr * wc);
                }
            }
        }
    }
    Ok(out)
}

/// Dense field realizing rotation by `theta_deg` about the image center
/// plus translation: `u(p) = R(p - center) + center + d - p`.
///
/// Center is `(H/2, W/2)`, matching the FFT center.
pub fn rigid_to_field(params: RigidParams, height: usize, width: usize) -> DisplacementField {
    let theta = params.theta_deg.to_radians();
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    let cr = (height / 2) as f64;
    let cc = (width / 2) as f64;
    let mut field = DisplacementField::zeros(height, width);
    for r in 0..height {
        for c in 0..width {
            let pr = r as f64 - cr;
            let pc = c as f64 - cc;
            let qr = cos_t * pr - sin_t * pc;
            let qc = sin_t * pr + cos_t * pc;
            field.set(r, c, qr - pr + params.d_row, qc - pc + params.d_col);
        }
    }
    field
}

/// Squared forward-difference smoothness energy over both components, and
/// its exact gradient with respect to the field.
pub fn grad_energy(u: &DisplacementField) -> (f64, DisplacementField) {
    let (h, w) = u.shape();
    let mut energy = 0.0;
    let mut grad = DisplacementField::zeros(h, w);

    let mut accumulate = |comp: &[f64], g: &mut [f64]| {
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if r + 1 < h {
                    let d = comp[i + w] - comp[i];
                    energy += d * d;
                    g[i + w] += 2.0 * d;
                    g[i] -= 2.0 * d;
                }
                if c + 1 < w {
                    let d = comp[i + 1] - comp[i];
                    energy += d * d;
                    g[i + 1] += 2.0 * d;
                    g[i] -= 2.0 * d;
                }
            }
        }
    };

    accumulate(&u.rows, &mut grad.rows);
    accumulate(&u.cols, &mut grad.cols);
    (energy, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{inner, noise_image};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(h: usize, w: usize, amp: f64, seed: u64) -> DisplacementField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = DisplacementField::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                f.set(r, c, amp * rng.random_range(-1.0..1.0), amp * rng.random_range(-1.0..1.0));
            }
        }
        f
    }

    #[test]
    fn zero_field_is_identity_bit_for_bit() {
        let x = noise_image(6, 5, &mut ChaCha8Rng::seed_from_u64(1));
        let u = DisplacementField::zeros(6, 5);
        assert_eq!(warp(&x, &u).unwrap(), x);
        assert_eq!(warp_adjoint(&x, &u).unwrap(), x);
    }

    #[test]
    fn half_pixel_shift_on_column_ramp() {
        // f(r,c) = c, constant displacement (0, 0.5): interior pixels read c + 0.5.
        let h = 16;
        let w = 16;
        let mut x = ComplexImage::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                x.set(r, c, Complex64::new(c as f64, 0.0));
            }
        }
        let mut u = DisplacementField::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                u.set(r, c, 0.0, 0.5);
            }
        }
        let out = warp(&x, &u).unwrap();
        for r in 0..h {
            for c in 0..w - 1 {
                // hand-evaluated bilinear: 0.5*c + 0.5*(c+1) = c + 0.5
                let expect = c as f64 + 0.5;
                assert!((out.at(r, c).re - expect).abs() < 1e-12, "at ({r},{c})");
                assert!(out.at(r, c).im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integer_shift_with_zero_fill() {
        let x = noise_image(5, 4, &mut ChaCha8Rng::seed_from_u64(2));
        let mut u = DisplacementField::zeros(5, 4);
        for r in 0..5 {
            for c in 0..4 {
                u.set(r, c, 1.0, 0.0);
            }
        }
        let out = warp(&x, &u).unwrap();
        for r in 0..5 {
            for c in 0..4 {
                let expect = if r + 1 < 5 { x.at(r + 1, c) } else { Complex64::ZERO };
                assert_eq!(out.at(r, c), expect);
            }
        }
        // adjoint of the shift permutation is the inverse shift
        let back = warp_adjoint(&out, &u).unwrap();
        for r in 1..5 {
            for c in 0..4 {
                assert_eq!(back.at(r, c), out.at(r - 1, c));
            }
        }
        for c in 0..4 {
            assert_eq!(back.at(0, c), Complex64::ZERO);
        }
    }

    #[test]
    fn rigid_pure_translation() {
        let f = rigid_to_field(RigidParams { theta_deg: 0.0, d_row: 3.0, d_col: -2.0 }, 8, 8);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(f.at(r, c), (3.0, -2.0));
            }
        }
        let zero = rigid_to_field(RigidParams { theta_deg: 0.0, d_row: 0.0, d_col: 0.0 }, 8, 8);
        assert!(zero.is_zero());
    }

    #[test]
    fn rigid_quarter_turn_matches_rotation_matrix() {
        // Oracle: R_90 = [[0,-1],[1,0]] on (row, col) offsets about center (4,4).
        let f = rigid_to_field(RigidParams { theta_deg: 90.0, d_row: 0.0, d_col: 0.0 }, 9, 9);
        // point one pixel right of center: offset (0, 1) -> rotated (-1, 0)
        let (dr, dc) = f.at(4, 5);
        assert!((dr - (-1.0)).abs() < 1e-12 && (dc - (-1.0)).abs() < 1e-12);
        // generic point: offset (2, -3) -> rotated (3, 2), displacement (1, 5)
        let (dr, dc) = f.at(6, 1);
        assert!((dr - 1.0).abs() < 1e-12 && (dc - 5.0).abs() < 1e-12);
    }

    #[test]
    fn grad_energy_constant_field_is_zero() {
        let mut u = DisplacementField::zeros(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                u.set(r, c, 1.5, -0.7);
            }
        }
        let (e, g) = grad_energy(&u);
        assert_eq!(e, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn grad_energy_row_ramp_counts_terms() {
        // u_row(r,c) = r on 8x8: unit forward differences along rows only.
        // Brute-force oracle: 7 interior steps per column x 8 columns = 56.
        let mut u = DisplacementField::zeros(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                u.set(r, c, r as f64, 0.0);
            }
        }
        let mut oracle = 0.0;
        for r in 0..7 {
            for c in 0..8 {
                let d = u.at(r + 1, c).0 - u.at(r, c).0;
                oracle += d * d;
            }
        }
        assert_eq!(oracle, 56.0);
        let (e, _) = grad_energy(&u);
        assert!((e - 56.0).abs() < 1e-12);
    }

    #[test]
    fn grad_energy_matches_finite_differences() {
        let u = random_field(8, 8, 1.0, 9);
        let (_, g) = grad_energy(&u);
        let h = 1e-4;
        let mut max_rel = 0.0f64;
        for idx in [(0usize, 0usize, true), (3, 4, true), (7, 7, false), (2, 6, false)] {
            let (r, c, row_comp) = idx;
            let mut up = u.clone();
            let mut dn = u.clone();
            if row_comp {
                let (dr, dc) = u.at(r, c);
                up.set(r, c, dr + h, dc);
                dn.set(r, c, dr - h, dc);
            } else {
                let (dr, dc) = u.at(r, c);
                up.set(r, c, dr, dc + h);
                dn.set(r, c, dr, dc - h);
            }
            let fd = (grad_energy(&up).0 - grad_energy(&dn).0) / (2.0 * h);
            let an = if row_comp { g.at(r, c).0 } else { g.at(r, c).1 };
            let rel = (fd - an).abs() / an.abs().max(1e-12);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel <= 1e-5, "max relative error {max_rel}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = ComplexImage::zeros(4, 4);
        let u = DisplacementField::zeros(4, 5);
        assert!(warp(&x, &u).is_err());
        assert!(warp_adjoint(&x, &u).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn warp_adjointness(seed in 0u64..1000, amp in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = noise_image(7, 9, &mut rng);
            let v = noise_image(7, 9, &mut rng);
            let u = random_field(7, 9, amp, seed.wrapping_add(17));
            let wx = warp(&x, &u).unwrap();
            let wtv = warp_adjoint(&v, &u).unwrap();
            let lhs = inner(wx.data(), v.data());
            let rhs = inner(x.data(), wtv.data());
            let scale = x.norm() * v.norm();
            prop_assert!((lhs - rhs).norm() <= 1e-6 * scale.max(1e-30));
        }

        #[test]
        fn warp_linearity(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = noise_image(6, 6, &mut rng);
            let y = noise_image(6, 6, &mut rng);
            let u = random_field(6, 6, 1.2, seed.wrapping_add(3));
            let a = Complex64::new(0.7, -1.1);
            let b = Complex64::new(-0.3, 0.2);
            let lhs = warp(&ComplexImage::lin_comb(a, &x, b, &y).unwrap(), &u).unwrap();
            let rhs = ComplexImage::lin_comb(a, &warp(&x, &u).unwrap(), b, &warp(&y, &u).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).norm() <= 1e-10 * lhs.norm().max(1e-30));
        }
    }
}
