//! Motion-corrupted multi-coil measurement operator, its adjoint, and
//! measurement simulation.
//!
//! Per motion state the forward map is `y_i = M . F . S_i . warp(x, u)` for
//! each coil i; the adjoint (identity warp) is `sum_i conj(S_i) . ifft2c . M`.
//! Sensitivity maps are constant across states.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{complex_standard_normal, fft2c, ifft2c, ComplexImage, KSpaceGrid};
use crate::warp::{warp, DisplacementField};

/// Binary k-space sampling pattern. At least one location must be kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    keep: Vec<bool>,
}

impl SamplingMask {
    pub fn full(height: usize, width: usize) -> Self {
        Self { height, width, keep: vec![true; height * width] }
    }

    pub fn from_keep(height: usize, width: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", height, width),
                got: format!("{} entries", keep.len()),
            });
        }
        if !keep.iter().any(|&k| k) {
            return Err(Error::InvalidMask("mask has no sampled locations".into()));
        }
        Ok(Self { height, width, keep })
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

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> bool {
        self.keep[r * self.width + c]
    }

    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Full size divided by sampled count.
    pub fn acceleration(&self) -> f64 {
        (self.height * self.width) as f64 / self.count() as f64
    }

    pub fn apply(&self, grid: &mut KSpaceGrid) {
        debug_assert_eq!(self.shape(), grid.shape());
        for (z, &k) in grid.data_mut().iter_mut().zip(&self.keep) {
            if !k {
                *z = Complex64::ZERO;
            }
        }
    }
}

/// Per-coil complex sensitivity profiles, normalized to unit root-sum-of-squares.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMaps {
    n_coils: usize,
    height: usize,
    width: usize,
    /// coil-major: `maps[coil * H * W + r * W + c]`
    maps: Vec<Complex64>,
}

impl SensitivityMaps {
    pub fn from_vec(n_coils: usize, height: usize, width: usize, maps: Vec<Complex64>) -> Result<Self> {
        if n_coils == 0 {
            return Err(Error::InvalidMaps("need at least one coil".into()));
        }
        if maps.len() != n_coils * height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_coils}x{height}x{width}"),
                got: format!("{} entries", maps.len()),
            });
        }
        let hw = height * width;
        for p in 0..hw {
            let rss: f64 = (0..n_coils).map(|i| maps[i * hw + p].norm_sqr()).sum::<f64>().sqrt();
            if rss > 1.0 + 1e-6 {
                return Err(Error::InvalidMaps(format!("root-sum-of-squares {rss} > 1 at pixel {p}")));
            }
        }
        Ok(Self { n_coils, height, width, maps })
    }

    pub fn n_coils(&self) -> usize {
        self.n_coils
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn coil(&self, i: usize) -> &[Complex64] {
        let hw = self.height * self.width;
        &self.maps[i * hw..(i + 1) * hw]
    }
}

/// Simulated smooth coil profiles: complex Gaussian blobs centered at equally
/// spaced angles around the field of view, normalized so the per-pixel
/// root-sum-of-squares is exactly 1. A single coil degenerates to the flat map.
pub fn make_coil_profiles(height: usize, width: usize, n_coils: usize) -> Result<SensitivityMaps> {
    if n_coils == 0 {
        return Err(Error::InvalidMaps("need at least one coil".into()));
    }
    if n_coils == 1 {
        return SensitivityMaps::from_vec(1, height, width, vec![Complex64::new(1.0, 0.0); height * width]);
    }
    let hw = height * width;
    let cr = (height as f64 - 1.0) / 2.0;
    let cc = (width as f64 - 1.0) / 2.0;
    let ring = 0.45 * height.min(width) as f64;
    let blob_sigma = 0.6 * height.max(width) as f64;
    let phase_rate = 0.7 / height.max(width) as f64;
    let mut maps = vec![Complex64::ZERO; n_coils * hw];
    for i in 0..n_coils {
        let angle = 2.0 * std::f64::consts::PI * i as f64 / n_coils as f64;
        let (br, bc) = (cr + ring * angle.sin(), cc + ring * angle.cos());
        for r in 0..height {
            for c in 0..width {
                let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                let mag = (-d2 / (2.0 * blob_sigma * blob_sigma)).exp();
                // gentle coil-specific linear phase
                let phase = phase_rate * ((r as f64 - cr) * angle.cos() - (c as f64 - cc) * angle.sin());
                maps[i * hw + r * width + c] = Complex64::from_polar(mag, phase);
            }
        }
    }
    // normalize per-pixel RSS to 1
    for p in 0..hw {
        let rss: f64 = (0..n_coils).map(|i| maps[i * hw + p].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n_coils {
            maps[i * hw + p] /= rss;
        }
    }
    SensitivityMaps::from_vec(n_coils, height, width, maps)
}

/// Masked multi-coil k-space for one motion state. Entries outside the mask
/// are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCoilKSpace {
    n_coils: usize,
    height: usize,
    width: usize,
    /// coil-major: `data[coil * H * W + r * W + c]`
    data: Vec<Complex64>,
    mask: SamplingMask,
}

impl MultiCoilKSpace {
    pub fn zeros(n_coils: usize, mask: SamplingMask) -> Self {
        let (h, w) = mask.shape();
        Self { n_coils, height: h, width: w, data: vec![Complex64::ZERO; n_coils * h * w], mask }
    }

    /// Build from raw per-coil grids; masked-out entries are forced to zero.
    pub fn from_coil_grids(grids: Vec<KSpaceGrid>, mask: SamplingMask) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::InvalidMaps("need at least one coil grid".into()));
        }
        let (h, w) = mask.shape();
        let n_coils = grids.len();
        let mut data = Vec::with_capacity(n_coils * h * w);
        for g in &grids {
            if g.shape() != (h, w) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{h}x{w}"),
                    got: format!("{}x{}", g.height(), g.width()),
                });
            }
            for (i, &z) in g.data().iter().enumerate() {
                data.push(if mask.keep()[i] { z } else { Complex64::ZERO });
            }
        }
        Ok(Self { n_coils, height: h, width: w, data, mask })
    }

    pub fn n_coils(&self) -> usize {
        self.n_coils
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn coil(&self, i: usize) -> &[Complex64] {
        let hw = self.height * self.width;
        &self.data[i * hw..(i + 1) * hw]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Sum of squared residual magnitudes against another stack.
    pub fn dist_sqr(&self, other: &MultiCoilKSpace) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum()
    }
}

/// Bundle of everything fixed about a measurement setup: per-state masks and
/// measurements, shared coil maps, image shape, and the noise level used to
/// simulate. State 0 is the motion-free reference.
#[derive(Debug, Clone)]
pub struct MotionProblem {
    n_states: usize,
    height: usize,
    width: usize,
    masks: Vec<SamplingMask>,
    measurements: Vec<MultiCoilKSpace>,
    maps: SensitivityMaps,
    sigma_meas: f64,
}

impl MotionProblem {
    pub fn new(
        masks: Vec<SamplingMask>,
        measurements: Vec<MultiCoilKSpace>,
        maps: SensitivityMaps,
        sigma_meas: f64,
    ) -> Result<Self> {
        if masks.is_empty() || masks.len() != measurements.len() {
            return Err(Error::InvalidConfig(format!(
                "need matching per-state masks and measurements, got {} masks / {} measurements",
                masks.len(),
                measurements.len()
            )));
        }
        let (h, w) = maps.shape();
        let n_coils = maps.n_coils();
        for (m, y) in masks.iter().zip(&measurements) {
            if m.shape() != (h, w) || y.shape() != (h, w) || y.n_coils() != n_coils {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n_coils}x{h}x{w}"),
                    got: format!("{}x{}x{}", y.n_coils(), y.shape().0, y.shape().1),
                });
            }
        }
        Ok(Self {
            n_states: masks.len(),
            height: h,
            width: w,
            masks,
            measurements,
            maps,
            sigma_meas,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn n_coils(&self) -> usize {
        self.maps.n_coils()
    }

    pub fn mask(&self, state: usize) -> &SamplingMask {
        &self.masks[state]
    }

    pub fn measurement(&self, state: usize) -> &MultiCoilKSpace {
        &self.measurements[state]
    }

    pub fn measurements(&self) -> &[MultiCoilKSpace] {
        &self.measurements
    }

    pub fn maps(&self) -> &SensitivityMaps {
        &self.maps
    }

    pub fn sigma_meas(&self) -> f64 {
        self.sigma_meas
    }
}

/// Coil encoding without warping: `M . F . S_i . x` per coil.
pub fn encode(x: &ComplexImage, state: usize, prob: &MotionProblem) -> Result<MultiCoilKSpace> {
    if x.shape() != prob.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", prob.height, prob.width),
            got: format!("{}x{}", x.height(), x.width()),
        });
    }
    let mask = &prob.masks[state];
    let grids: Vec<KSpaceGrid> = (0..prob.n_coils())
        .into_par_iter()
        .map(|i| {
            let (h, w) = x.shape();
            let mut coil_img = ComplexImage::zeros(h, w);
            for (d, (&xv, &sv)) in coil_img
                .data_mut()
                .iter_mut()
                .zip(x.data().iter().zip(prob.maps.coil(i)))
            {
                *d = xv * sv;
            }
            fft2c(&coil_img)
        })
        .collect::<Result<_>>()?;
    MultiCoilKSpace::from_coil_grids(grids, mask.clone())
}

/// Adjoint of [`encode`]: `sum_i conj(S_i) . ifft2c . M . y_i`.
pub fn encode_adjoint(y: &MultiCoilKSpace, state: usize, prob: &MotionProblem) -> Result<ComplexImage> {
    if y.shape() != prob.shape() || y.n_coils() != prob.n_coils() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}x{}", prob.n_coils(), prob.height, prob.width),
            got: format!("{}x{}x{}", y.n_coils(), y.shape().0, y.shape().1),
        });
    }
    let mask = &prob.masks[state];
    let (h, w) = prob.shape();
    let per_coil: Vec<ComplexImage> = (0..prob.n_coils())
        .into_par_iter()
        .map(|i| {
            let mut grid = KSpaceGrid::from_vec(h, w, y.coil(i).to_vec())?;
            mask.apply(&mut grid);
            let img = ifft2c(&grid)?;
            let mut weighted = ComplexImage::zeros(h, w);
            for (d, (&v, &s)) in weighted
                .data_mut()
                .iter_mut()
                .zip(img.data().iter().zip(prob.maps.coil(i)))
            {
                *d = v * s.conj();
            }
            Ok(weighted)
        })
        .collect::<Result<_>>()?;
    let mut out = ComplexImage::zeros(h, w);
    for img in &per_coil {
        out.add_scaled(Complex64::new(1.0, 0.0), img);
    }
    Ok(out)
}

/// Full forward operator for one motion state (noise excluded):
/// `M . F . S_i . warp(x, field)` per coil.
pub fn apply_forward(
    x: &ComplexImage,
    field: &DisplacementField,
    state: usize,
    prob: &MotionProblem,
) -> Result<MultiCoilKSpace> {
    let warped = warp(x, field)?;
    encode(&warped, state, prob)
}

/// Coil-combination adjoint of [`apply_forward`] with identity field.
/// The warp adjoint is applied separately by callers that need the full chain.
pub fn apply_adjoint(y: &MultiCoilKSpace, state: usize, prob: &MotionProblem) -> Result<ComplexImage> {
    encode_adjoint(y, state, prob)
}

/// Simulate measurements for all states: forward model plus complex Gaussian
/// noise of std `sigma_meas` on sampled locations only. `fields[0]` must be
/// the zero field (state 0 is motion-free by convention).
pub fn simulate_measurements<R: Rng + ?Sized>(
    x: &ComplexImage,
    fields: &[DisplacementField],
    masks: &[SamplingMask],
    maps: &SensitivityMaps,
    sigma_meas: f64,
    rng: &mut R,
) -> Result<MotionProblem> {
    if fields.len() != masks.len() || fields.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "need matching per-state fields and masks, got {} fields / {} masks",
            fields.len(),
            masks.len()
        )));
    }
    if !fields[0].is_zero() {
        return Err(Error::InvalidConfig(
            "fields[0] must be zero: state 0 is the motion-free reference".into(),
        ));
    }
    // empty problem shell used to run the forward model
    let shell = MotionProblem::new(
        masks.to_vec(),
        masks.iter().map(|m| MultiCoilKSpace::zeros(maps.n_coils(), m.clone())).collect(),
        maps.clone(),
        sigma_meas,
    )?;
    let mut measurements = Vec::with_capacity(masks.len());
    for (state, field) in fields.iter().enumerate() {
        let mut y = apply_forward(x, field, state, &shell)?;
        if sigma_meas > 0.0 {
            let hw = y.height * y.width;
            for i in 0..y.n_coils {
                for p in 0..hw {
                    if y.mask.keep()[p] {
                        y.data[i * hw + p] += complex_standard_normal(rng) * sigma_meas;
                    }
                }
            }
        }
        measurements.push(y);
    }
    MotionProblem::new(masks.to_vec(), measurements, maps.clone(), sigma_meas)
}
