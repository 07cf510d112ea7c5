//! Displacement-field estimation against undersampled k-space, in two stages:
//! a cubic B-spline fit for a smooth approximate solution, then pixel-wise
//! refinement under a smoothness penalty. Both stages run plain gradient
//! descent with backtracking line search, so the recorded loss sequence is
//! non-increasing by construction.
//!
//! The motion-update routine completes the reverse diffusion process from the
//! current iterate (guided by the motion-free state only) and registers the
//! completed image against every other state's measurements.

use rand::SeedableRng;
use rayon::prelude::*;

use crate::denoiser::DenoiserHandle;
use crate::error::{Error, Result};
use crate::forward::{encode, encode_adjoint, MotionProblem, MultiCoilKSpace};
use crate::numerics::ComplexImage;
use crate::sampler::{sample, GuidanceSpec};
use crate::schedule::ShellSchedule;
use crate::warp::{bilinear_grad, grad_energy, warp, DisplacementField};

/// Knobs for both estimation stages.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    /// Control-point spacing of the B-spline grid, in pixels (>= 2).
    pub grid_spacing: usize,
    /// Gradient-descent iterations for the B-spline stage.
    pub bspline_iters: usize,
    /// Gradient-descent iterations for the pixel-wise stage.
    pub pixel_iters: usize,
    /// Regularization weight relative to the measurement scale:
    /// `lambda = lambda_rel * ||y||^2 / (H * W)`.
    pub lambda_rel: f64,
    /// Stop when the relative loss decrease falls below this.
    pub tol: f64,
    /// Initial line-search step for the B-spline stage.
    pub bspline_step: f64,
    /// Initial line-search step for the pixel-wise stage.
    pub pixel_step: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            grid_spacing: 16,
            bspline_iters: 50,
            pixel_iters: 100,
            lambda_rel: 0.1,
            tol: 1e-6,
            bspline_step: 1.0,
            pixel_step: 1.0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_spacing < 2 {
            return Err(Error::InvalidConfig("grid_spacing must be >= 2".into()));
        }
        if self.bspline_iters == 0 || self.pixel_iters == 0 {
            return Err(Error::InvalidConfig("iteration counts must be >= 1".into()));
        }
        if self.lambda_rel < 0.0 {
            return Err(Error::InvalidConfig("lambda_rel must be >= 0".into()));
        }
        Ok(())
    }

    /// Absolute regularization weight for a given measurement.
    pub fn lambda_abs(&self, y: &MultiCoilKSpace) -> f64 {
        let (h, w) = y.shape();
        self.lambda_rel * y.norm().powi(2) / (h * w) as f64
    }
}

/// Data-consistency loss `||y - A warp(x, u)||^2 + lambda ||grad u||^2` and
/// its exact gradient with respect to the field.
///
/// The chain rule runs the residual back through the coil encoding and
/// multiplies pointwise by the spatial derivatives of the warped image.
pub fn registration_loss(
    u: &DisplacementField,
    x_ref: &ComplexImage,
    y: &MultiCoilKSpace,
    state: usize,
    prob: &MotionProblem,
    lambda: f64,
) -> Result<(f64, DisplacementField)> {
    let (h, w) = x_ref.shape();
    if u.shape() != (h, w) {
        return Err(Error::ShapeMismatch {
            expected: format!("{h}x{w}"),
            got: format!("{}x{}", u.shape().0, u.shape().1),
        });
    }
    let warped = warp(x_ref, u)?;
    let predicted = encode(&warped, state, prob)?;
    let mut resid = MultiCoilKSpace::zeros(y.n_coils(), y.mask().clone());
    for (r, (&yv, &pv)) in resid
        .data_mut()
        .iter_mut()
        .zip(y.data().iter().zip(predicted.data()))
    {
        *r = yv - pv;
    }
    let data_loss = resid.norm().powi(2);

    // dL/d(warped image), packed as a complex image: -2 E^H (y - E warped)
    let back = encode_adjoint(&resid, state, prob)?;

    let mut grad = DisplacementField::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let (dr, dc) = u.at(r, c);
            let (g_row, g_col) = bilinear_grad(x_ref, r as f64 + dr, c as f64 + dc);
            // dL/d u_comp(p) = Re[ conj(-2 rho(p)) * dS/d comp ]
            let rho = back.at(r, c);
            let gr = -2.0 * (rho.conj() * g_row).re;
            let gc = -2.0 * (rho.conj() * g_col).re;
            grad.set(r, c, gr, gc);
        }
    }

    let mut loss = data_loss;
    if lambda > 0.0 {
        let (e, ge) = grad_energy(u);
        loss += lambda * e;
        grad.add_scaled(lambda, &ge);
    }
    Ok((loss, grad))
}

/// Loss only (no gradient), for line searches.
fn registration_loss_only(
    u: &DisplacementField,
    x_ref: &ComplexImage,
    y: &MultiCoilKSpace,
    state: usize,
    prob: &MotionProblem,
    lambda: f64,
) -> Result<f64> {
    let warped = warp(x_ref, u)?;
    let predicted = encode(&warped, state, prob)?;
    let mut loss = y.dist_sqr(&predicted);
    if lambda > 0.0 {
        loss += lambda * grad_energy(u).0;
    }
    Ok(loss)
}

// ---------------------------------------------------------------------------
// Cubic B-spline free-form deformation
// ---------------------------------------------------------------------------

/// Uniform cubic B-spline basis with support (-2, 2).
#[inline]
fn bspline(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        let t = 2.0 - a;
        t * t * t / 6.0
    } else {
        0.0
    }
}

/// Control lattice for one spatial dimension: control k sits at `(k - 1) * spacing`.
struct BsplineAxis {
    n_ctrl: usize,
    /// per pixel: first contributing control index and the 4 basis weights
    base: Vec<usize>,
    weights: Vec<[f64; 4]>,
}

impl BsplineAxis {
    fn new(dim: usize, spacing: usize) -> Self {
        let n_ctrl = (dim - 1) / spacing + 4;
        let mut base = Vec::with_capacity(dim);
        let mut weights = Vec::with_capacity(dim);
        for p in 0..dim {
            let s = p as f64 / spacing as f64 + 1.0;
            let i0 = s.floor() as usize; // contributions from i0-1 ..= i0+2
            debug_assert!(i0 >= 1 && i0 + 2 < n_ctrl + 1);
            let first = i0 - 1;
            let mut wts = [0.0; 4];
            for (j, wt) in wts.iter_mut().enumerate() {
                *wt = bspline(s - (first + j) as f64);
            }
            base.push(first);
            weights.push(wts);
        }
        Self { n_ctrl, base, weights }
    }
}

/// Dense field evaluation from control-point values (one component).
fn eval_component(
    ctrl: &[f64],
    rows: &BsplineAxis,
    cols: &BsplineAxis,
    height: usize,
    width: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        let rb = rows.base[r];
        let rw = &rows.weights[r];
        for c in 0..width {
            let cb = cols.base[c];
            let cw = &cols.weights[c];
            let mut acc = 0.0;
            for (jr, &wr) in rw.iter().enumerate() {
                let row_off = (rb + jr) * cols.n_ctrl;
                for (jc, &wc) in cw.iter().enumerate() {
                    acc += wr * wc * ctrl[row_off + cb + jc];
                }
            }
            out[r * width + c] = acc;
        }
    }
    out
}

/// Transpose of [`eval_component`]: scatter a dense gradient to control points.
fn pullback_component(
    dense: &[f64],
    rows: &BsplineAxis,
    cols: &BsplineAxis,
    height: usize,
    width: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; rows.n_ctrl * cols.n_ctrl];
    for r in 0..height {
        let rb = rows.base[r];
        let rw = &rows.weights[r];
        for c in 0..width {
            let cb = cols.base[c];
            let cw = &cols.weights[c];
            let g = dense[r * width + c];
            for (jr, &wr) in rw.iter().enumerate() {
                let row_off = (rb + jr) * cols.n_ctrl;
                for (jc, &wc) in cw.iter().enumerate() {
                    out[row_off + cb + jc] += wr * wc * g;
                }
            }
        }
    }
    out
}

fn field_from_controls(
    ctrl_rows: &[f64],
    ctrl_cols: &[f64],
    rows: &BsplineAxis,
    cols: &BsplineAxis,
    height: usize,
    width: usize,
) -> DisplacementField {
    let r = eval_component(ctrl_rows, rows, cols, height, width);
    let c = eval_component(ctrl_cols, rows, cols, height, width);
    DisplacementField::from_components(height, width, r, c).expect("sized by construction")
}

/// Stage 1: fit a cubic B-spline control grid by first-order descent with
/// per-control step scaling, starting from zero motion. Returns the dense
/// field evaluated from the final control points.
pub fn fit_bspline(
    x_ref: &ComplexImage,
    y: &MultiCoilKSpace,
    state: usize,
    prob: &MotionProblem,
    cfg: &RegistrationConfig,
) -> Result<DisplacementField> {
    cfg.validate()?;
    let (h, w) = x_ref.shape();
    let rows = BsplineAxis::new(h, cfg.grid_spacing);
    let cols = BsplineAxis::new(w, cfg.grid_spacing);
    let n = rows.n_ctrl * cols.n_ctrl;
    let lambda = cfg.lambda_abs(y);

    // Jacobi-style preconditioner: footprint mass per control point
    let mass = {
        let ones = vec![1.0; h * w];
        let mut m = pullback_component(&ones, &rows, &cols, h, w);
        let floor = 1e-8 * m.iter().cloned().fold(0.0, f64::max).max(1e-30);
        for v in &mut m {
            *v = v.max(floor);
        }
        m
    };

    let mut ctrl_r = vec![0.0; n];
    let mut ctrl_c = vec![0.0; n];
    let mut step = cfg.bspline_step;
    let field0 = field_from_controls(&ctrl_r, &ctrl_c, &rows, &cols, h, w);
    let (mut loss, mut grad) = registration_loss(&field0, x_ref, y, state, prob, lambda)?;

    for _ in 0..cfg.bspline_iters {
        let gr = pullback_component(grad.rows(), &rows, &cols, h, w);
        let gc = pullback_component(grad.cols(), &rows, &cols, h, w);
        // preconditioned descent direction
        let dir_r: Vec<f64> = gr.iter().zip(&mass).map(|(g, m)| g / m).collect();
        let dir_c: Vec<f64> = gc.iter().zip(&mass).map(|(g, m)| g / m).collect();
        let dir_norm = dir_r
            .iter()
            .chain(&dir_c)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if dir_norm == 0.0 {
            break;
        }

        let mut accepted = false;
        for _ in 0..40 {
            let cand_r: Vec<f64> = ctrl_r.iter().zip(&dir_r).map(|(x, d)| x - step * d).collect();
            let cand_c: Vec<f64> = ctrl_c.iter().zip(&dir_c).map(|(x, d)| x - step * d).collect();
            let cand_field = field_from_controls(&cand_r, &cand_c, &rows, &cols, h, w);
            let cand_loss = registration_loss_only(&cand_field, x_ref, y, state, prob, lambda)?;
            if cand_loss < loss {
                let rel_drop = (loss - cand_loss) / loss.max(1e-30);
                ctrl_r = cand_r;
                ctrl_c = cand_c;
                let (l, g) = registration_loss(&cand_field, x_ref, y, state, prob, lambda)?;
                loss = l;
                grad = g;
                step *= 2.0;
                accepted = true;
                if rel_drop < cfg.tol {
                    return Ok(field_from_controls(&ctrl_r, &ctrl_c, &rows, &cols, h, w));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(field_from_controls(&ctrl_r, &ctrl_c, &rows, &cols, h, w))
}

/// Stage 2: dense per-pixel descent on the regularized loss, warm-started at
/// `u0`. Stops at `pixel_iters` or when the relative loss decrease drops
/// below tolerance.
pub fn refine_pixelwise(
    u0: &DisplacementField,
    x_ref: &ComplexImage,
    y: &MultiCoilKSpace,
    state: usize,
    prob: &MotionProblem,
    cfg: &RegistrationConfig,
) -> Result<DisplacementField> {
    cfg.validate()?;
    u0.check_finite()?;
    let lambda = cfg.lambda_abs(y);
    let mut u = u0.clone();
    let (mut loss, mut grad) = registration_loss(&u, x_ref, y, state, prob, lambda)?;
    // scale-free initial step: normalize by the gradient's largest entry
    let gmax = grad.max_magnitude();
    if gmax == 0.0 {
        return Ok(u);
    }
    let mut step = cfg.pixel_step / gmax;

    for _ in 0..cfg.pixel_iters {
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = u.clone();
            cand.add_scaled(-step, &grad);
            let cand_loss = registration_loss_only(&cand, x_ref, y, state, prob, lambda)?;
            if cand_loss < loss {
                let rel_drop = (loss - cand_loss) / loss.max(1e-30);
                u = cand;
                let (l, g) = registration_loss(&u, x_ref, y, state, prob, lambda)?;
                loss = l;
                grad = g;
                step *= 2.0;
                accepted = true;
                if rel_drop < cfg.tol {
                    return Ok(u);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if grad.max_magnitude() == 0.0 {
            break;
        }
    }
    Ok(u)
}

/// Both stages in sequence.
pub fn estimate_field(
    x_ref: &ComplexImage,
    y: &MultiCoilKSpace,
    state: usize,
    prob: &MotionProblem,
    cfg: &RegistrationConfig,
) -> Result<DisplacementField> {
    let coarse = fit_bspline(x_ref, y, state, prob, cfg)?;
    refine_pixelwise(&coarse, x_ref, y, state, prob, cfg)
}

/// Motion update: complete the reverse process from `x_bar_t` at timestep `t`
/// guided by the motion-free state only, then re-estimate every non-reference
/// field against the completed image. State 0 keeps the zero field.
pub fn update_motion(
    x_bar_t: &ComplexImage,
    prob: &MotionProblem,
    t: usize,
    d: &DenoiserHandle,
    sched: &ShellSchedule,
    cfg: &RegistrationConfig,
    gamma: f64,
) -> Result<Vec<DisplacementField>> {
    let (h, w) = prob.shape();
    let zero = vec![DisplacementField::zeros(h, w)];
    let x_clean = if t == 0 {
        x_bar_t.clone()
    } else {
        let spec = GuidanceSpec::new(
            std::slice::from_ref(prob.measurement(0)),
            &zero,
            gamma,
            vec![0],
        )?;
        // the completion is deterministic given its start point; the rng is
        // never drawn from because the initial iterate is supplied
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        sample(d, sched, Some(&spec), Some(prob), &mut rng, Some(t), Some(x_bar_t.clone()))?.0
    };

    let mut fields = vec![DisplacementField::zeros(h, w)];
    let rest: Vec<DisplacementField> = (1..prob.n_states())
        .into_par_iter()
        .map(|state| estimate_field(&x_clean, prob.measurement(state), state, prob, cfg))
        .collect::<Result<_>>()?;
    fields.extend(rest);
    Ok(fields)
}
