use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use c2f_reco::cfl::CflTensor;
use c2f_reco::config::KvConfig;
use c2f_reco::denoiser::{estimate_spectrum, DenoiserHandle, DenoiserKind, PowerSpectrum};
use c2f_reco::error::{Error, Result};
use c2f_reco::forward::{
    make_coil_profiles, simulate_measurements, MotionProblem, MultiCoilKSpace, SamplingMask,
    SensitivityMaps,
};
use c2f_reco::numerics::ComplexImage;
use c2f_reco::pipeline::{nrmse, nrmse_magnitude, reconstruct, zero_filled_adjoint, ReconConfig};
use c2f_reco::registration::{estimate_field, RegistrationConfig};
use c2f_reco::render::{render_error, render_magnitude};
use c2f_reco::schedule::ShellSchedule;
use c2f_reco::sim::{partition_mask, random_rigid, random_smooth_field, variable_density_mask, AcsMode};
use c2f_reco::warp::{rigid_to_field, DisplacementField};

#[derive(Parser)]
#[command(
    name = "c2f-reco",
    version,
    about = "Joint MRI reconstruction and non-rigid motion estimation from undersampled multi-coil k-space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate motion-corrupted, undersampled measurements from a ground-truth image
    Simulate {
        /// CFL stem of the ground-truth complex image
        #[arg(long)]
        input: PathBuf,
        /// key=value config file (all keys optional)
        #[arg(long)]
        config: Option<PathBuf>,
        /// output directory for the problem files and manifest
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a prior power spectrum from a directory of CFL images
    Spectrum {
        /// directory containing .hdr/.cfl image pairs
        #[arg(long)]
        dir: PathBuf,
        /// CFL stem for the spectrum output
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the image and per-state fields from a problem directory
    Reconstruct {
        /// problem directory written by `simulate` (or compatible)
        #[arg(long)]
        problem: PathBuf,
        /// CFL stem of the prior power spectrum
        #[arg(long)]
        spectrum: PathBuf,
        /// key=value reconstruction config (all keys optional)
        #[arg(long)]
        config: Option<PathBuf>,
        /// output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the displacement field mapping a reference image onto a deformed one
    Register {
        /// CFL stem of the reference image
        #[arg(long)]
        reference: PathBuf,
        /// CFL stem of the deformed image
        #[arg(long)]
        deformed: PathBuf,
        /// optional CFL stem of a sampling mask (defaults to fully sampled)
        #[arg(long)]
        mask: Option<PathBuf>,
        /// optional CFL stem of coil sensitivities (defaults to a flat single coil)
        #[arg(long)]
        maps: Option<PathBuf>,
        /// key=value registration config (all keys optional)
        #[arg(long)]
        config: Option<PathBuf>,
        /// CFL stem for the estimated field
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the NRMSE between two image CFLs
    Metrics {
        /// CFL stem of the estimate
        estimate: PathBuf,
        /// CFL stem of the reference
        reference: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { input, config, out } => simulate_cmd(&input, config.as_deref(), &out),
        Command::Spectrum { dir, out } => spectrum_cmd(&dir, &out),
        Command::Reconstruct { problem, spectrum, config, out } => {
            reconstruct_cmd(&problem, &spectrum, config.as_deref(), &out)
        }
        Command::Register { reference, deformed, mask, maps, config, out } => {
            register_cmd(&reference, &deformed, mask.as_deref(), maps.as_deref(), config.as_deref(), &out)
        }
        Command::Metrics { estimate, reference } => metrics_cmd(&estimate, &reference),
    }
}

fn load_config(path: Option<&Path>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::load(p),
        None => Ok(KvConfig::new()),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn simulate_cmd(input: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let truth = CflTensor::read(input)?.to_image()?;
    let (h, w) = truth.shape();

    let seed = cfg.u64_or("seed", 0)?;
    let n_states = cfg.usize_or("n_states", 4)?;
    let n_coils = cfg.usize_or("n_coils", 4)?;
    let accel = cfg.f64_or("accel", 8.0)?;
    let mask_decay = cfg.f64_or("mask_decay", 2.0)?;
    let acs_width = cfg.usize_or("acs_width", 8)?;
    let acs_mode = match cfg.str_or("acs_mode", "disjoint") {
        "disjoint" => AcsMode::Disjoint,
        "shared" => AcsMode::Shared,
        other => return Err(Error::InvalidConfig(format!("acs_mode '{other}'"))),
    };
    let motion = cfg.str_or("motion", "smooth").to_string();
    let max_disp = cfg.f64_or("max_disp", 8.0)?;
    let damping = cfg.f64_or("damping", 1.5)?;
    let rigid_deg = cfg.f64_or("rigid_deg", 5.0)?;
    let rigid_px = cfg.f64_or("rigid_px", 5.0)?;
    let sigma_meas = cfg.f64_or("sigma_meas", 0.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parent = variable_density_mask(h, w, accel, mask_decay, &mut rng)?;
    let masks = partition_mask(&parent, n_states, acs_mode, acs_width, &mut rng)?;

    let mut fields = vec![DisplacementField::zeros(h, w)];
    for _ in 1..n_states {
        let f = match motion.as_str() {
            "none" => DisplacementField::zeros(h, w),
            "smooth" => random_smooth_field(h, w, max_disp, damping, &mut rng)?,
            "rigid" => rigid_to_field(random_rigid(rigid_deg, rigid_px, &mut rng)?, h, w),
            other => return Err(Error::InvalidConfig(format!("motion '{other}'"))),
        };
        fields.push(f);
    }

    let maps = make_coil_profiles(h, w, n_coils)?;
    let prob = simulate_measurements(&truth, &fields, &masks, &maps, sigma_meas, &mut rng)?;

    std::fs::create_dir_all(out)?;
    CflTensor::from_image(&truth).write(&out.join("ground_truth"))?;
    write_maps(&maps, &out.join("maps"))?;
    write_masks(&masks, &out.join("masks"))?;
    CflTensor::from_fields(&fields)?.write(&out.join("fields"))?;
    write_measurements(&prob, &out.join("measurements"))?;

    let mut manifest = KvConfig::new();
    manifest.set("kind", "simulate");
    manifest.set("height", h);
    manifest.set("width", w);
    manifest.set("seed", seed);
    manifest.set("n_states", n_states);
    manifest.set("n_coils", n_coils);
    manifest.set("accel", accel);
    manifest.set("mask_decay", mask_decay);
    manifest.set("acs_width", acs_width);
    manifest.set("acs_mode", cfg.str_or("acs_mode", "disjoint"));
    manifest.set("motion", &motion);
    manifest.set("max_disp", max_disp);
    manifest.set("damping", damping);
    manifest.set("rigid_deg", rigid_deg);
    manifest.set("rigid_px", rigid_px);
    manifest.set("sigma_meas", sigma_meas);
    manifest.save(&out.join("manifest.txt"))?;
    println!("simulated {n_states} states, {n_coils} coils at {h}x{w} into {}", out.display());
    Ok(())
}

fn write_maps(maps: &SensitivityMaps, stem: &Path) -> Result<()> {
    let (h, w) = maps.shape();
    let images: Vec<ComplexImage> = (0..maps.n_coils())
        .map(|i| ComplexImage::from_vec(h, w, maps.coil(i).to_vec()))
        .collect::<Result<_>>()?;
    CflTensor::from_images(&images)?.write(stem)
}

fn read_maps(stem: &Path) -> Result<SensitivityMaps> {
    let images = CflTensor::read(stem)?.to_images()?;
    let (h, w) = images[0].shape();
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in &images {
        data.extend_from_slice(img.data());
    }
    SensitivityMaps::from_vec(images.len(), h, w, data)
}

fn write_masks(masks: &[SamplingMask], stem: &Path) -> Result<()> {
    let images: Vec<ComplexImage> = masks
        .iter()
        .map(|m| {
            let (h, w) = m.shape();
            let data = m
                .keep()
                .iter()
                .map(|&k| Complex64::new(if k { 1.0 } else { 0.0 }, 0.0))
                .collect();
            ComplexImage::from_vec(h, w, data)
        })
        .collect::<Result<_>>()?;
    CflTensor::from_images(&images)?.write(stem)
}

fn read_masks(stem: &Path) -> Result<Vec<SamplingMask>> {
    CflTensor::read(stem)?
        .to_images()?
        .iter()
        .map(|img| {
            let (h, w) = img.shape();
            SamplingMask::from_keep(h, w, img.data().iter().map(|z| z.re > 0.5).collect())
        })
        .collect()
}

fn write_measurements(prob: &MotionProblem, stem: &Path) -> Result<()> {
    let (h, w) = prob.shape();
    let (n_coils, n_states) = (prob.n_coils(), prob.n_states());
    let mut data = vec![Complex64::ZERO; h * w * n_coils * n_states];
    for s in 0..n_states {
        let y = prob.measurement(s);
        for i in 0..n_coils {
            let coil = y.coil(i);
            for r in 0..h {
                for c in 0..w {
                    data[r + c * h + i * h * w + s * h * w * n_coils] = coil[r * w + c];
                }
            }
        }
    }
    CflTensor::new(&[h, w, n_coils, n_states], data)?.write(stem)
}

fn read_measurements(stem: &Path, masks: &[SamplingMask]) -> Result<Vec<MultiCoilKSpace>> {
    let t = CflTensor::read(stem)?;
    let [h, w, n_coils, n_states, rest] = *t.dims();
    if rest != 1 {
        return Err(Error::InvalidConfig(format!("expected dims [H,W,C,S], got {:?}", t.dims())));
    }
    if n_states != masks.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} states", masks.len()),
            got: format!("{n_states} states"),
        });
    }
    let data = t.data();
    let mut out = Vec::with_capacity(n_states);
    for (s, mask) in masks.iter().enumerate() {
        let mut grids = Vec::with_capacity(n_coils);
        for i in 0..n_coils {
            let mut grid = vec![Complex64::ZERO; h * w];
            for r in 0..h {
                for c in 0..w {
                    grid[r * w + c] = data[r + c * h + i * h * w + s * h * w * n_coils];
                }
            }
            grids.push(c2f_reco::numerics::KSpaceGrid::from_vec(h, w, grid)?);
        }
        out.push(MultiCoilKSpace::from_coil_grids(grids, mask.clone())?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

fn spectrum_cmd(dir: &Path, out: &Path) -> Result<()> {
    let mut stems: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "hdr"))
        .map(|p| p.with_extension(""))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::InvalidConfig(format!("no .hdr files in {}", dir.display())));
    }
    let corpus: Vec<ComplexImage> = stems
        .iter()
        .map(|s| CflTensor::read(s)?.to_image())
        .collect::<Result<_>>()?;
    let spectrum = estimate_spectrum(&corpus)?;
    let (h, w) = (spectrum.height(), spectrum.width());
    let img = ComplexImage::from_vec(
        h,
        w,
        spectrum.values().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    )?;
    CflTensor::from_image(&img).write(out)?;
    println!("spectrum over {} images written to {}", corpus.len(), out.display());
    Ok(())
}

fn read_spectrum(stem: &Path) -> Result<PowerSpectrum> {
    let img = CflTensor::read(stem)?.to_image()?;
    let (h, w) = img.shape();
    PowerSpectrum::from_values(h, w, img.data().iter().map(|z| z.re.max(0.0)).collect())
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

fn parse_recon_config(cfg: &KvConfig) -> Result<ReconConfig> {
    let steps = cfg.usize_or("steps", 100)?;
    let schedule = ShellSchedule::new(
        steps,
        cfg.f64_or("a_clamp", 0.85)?,
        cfg.f64_or("sigma_max", 80.0)?,
        cfg.f64_or("sigma_min", 0.002)?,
    )?;
    let motion_updates = match cfg.get_str("motion_update_times") {
        Some(list) => list
            .split(',')
            .map(|tok| {
                tok.trim().parse::<usize>().map_err(|_| {
                    Error::InvalidConfig(format!("motion_update_times: bad entry '{tok}'"))
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => ReconConfig::default_motion_updates(steps, cfg.usize_or("motion_updates", 10)?),
    };
    let registration = RegistrationConfig {
        grid_spacing: cfg.usize_or("grid_spacing", 16)?,
        bspline_iters: cfg.usize_or("bspline_iters", 50)?,
        pixel_iters: cfg.usize_or("pixel_iters", 100)?,
        lambda_rel: cfg.f64_or("lambda_rel", 0.1)?,
        tol: cfg.f64_or("tol", 1e-6)?,
        bspline_step: cfg.f64_or("bspline_step", 1.0)?,
        pixel_step: cfg.f64_or("pixel_step", 1.0)?,
    };
    let gamma = cfg.f64_or("gamma", 0.05)?;
    let recon = ReconConfig {
        schedule,
        gamma,
        completion_gamma: cfg.f64_or("completion_gamma", 0.5)?,
        motion_updates,
        registration,
        seed: cfg.u64_or("seed", 0)?,
    };
    recon.validate()?;
    Ok(recon)
}

fn load_problem(problem: &Path) -> Result<(MotionProblem, KvConfig)> {
    let manifest = KvConfig::load(&problem.join("manifest.txt"))?;
    let sigma_meas = manifest.f64_or("sigma_meas", 0.0)?;
    let masks = read_masks(&problem.join("masks"))?;
    let measurements = read_measurements(&problem.join("measurements"), &masks)?;
    let maps = read_maps(&problem.join("maps"))?;
    Ok((MotionProblem::new(masks, measurements, maps, sigma_meas)?, manifest))
}

fn reconstruct_cmd(problem: &Path, spectrum: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg_file = load_config(config)?;
    let recon_cfg = parse_recon_config(&cfg_file)?;
    let (prob, _manifest) = load_problem(problem)?;
    let (h, w) = prob.shape();
    let spec = read_spectrum(spectrum)?;
    if (spec.height(), spec.width()) != (h, w) {
        return Err(Error::ShapeMismatch {
            expected: format!("{h}x{w} spectrum"),
            got: format!("{}x{}", spec.height(), spec.width()),
        });
    }
    let denoiser = DenoiserHandle::new(DenoiserKind::Empirical, spec, recon_cfg.schedule.clone());

    let result = reconstruct(&prob, &denoiser, &recon_cfg)?;

    // metrics against ground truth when available, plus the naive baseline
    let gt_stem = problem.join("ground_truth");
    let mut metrics = String::new();
    let truth = if gt_stem.with_extension("hdr").exists() {
        let truth = CflTensor::read(&gt_stem)?.to_image()?;
        let e_complex = nrmse(&result.image, &truth)?;
        let e_mag = nrmse_magnitude(&result.image, &truth)?;
        let zf = zero_filled_adjoint(&prob, 0)?;
        let e_zf = nrmse(&zf, &truth)?;
        metrics.push_str(&format!("nrmse={e_complex:.6}\n"));
        metrics.push_str(&format!("nrmse_magnitude={e_mag:.6}\n"));
        metrics.push_str(&format!("nrmse_zero_filled={e_zf:.6}\n"));
        Some(truth)
    } else {
        None
    };
    metrics.push_str(&format!(
        "final_residual={:.6e}\n",
        result.residual_trace.last().copied().unwrap_or(0.0)
    ));
    metrics.push_str(&format!("duration_s={:.3}\n", result.duration.as_secs_f64()));

    // all outputs are computed; write them out
    std::fs::create_dir_all(out)?;
    CflTensor::from_image(&result.image).write(&out.join("recon"))?;
    CflTensor::from_fields(&result.fields)?.write(&out.join("fields"))?;
    c2f_reco::cfl::atomic_write(&out.join("metrics.txt"), metrics.as_bytes())?;
    render_magnitude(&result.image, &out.join("recon.png"))?;
    if let Some(truth) = &truth {
        render_error(&result.image, truth, &out.join("error.png"))?;
    }

    let mut manifest = KvConfig::new();
    manifest.set("kind", "reconstruct");
    manifest.set("problem", problem.display());
    manifest.set("spectrum", spectrum.display());
    manifest.set("seed", recon_cfg.seed);
    manifest.set("gamma", recon_cfg.gamma);
    manifest.set("completion_gamma", recon_cfg.completion_gamma);
    manifest.set("steps", recon_cfg.schedule.t_max());
    manifest.set("a_clamp", recon_cfg.schedule.a_clamp());
    manifest.set("sigma_max", recon_cfg.schedule.sigma_max());
    manifest.set("sigma_min", recon_cfg.schedule.sigma_min());
    manifest.set(
        "motion_update_times",
        recon_cfg
            .motion_updates
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.set("grid_spacing", recon_cfg.registration.grid_spacing);
    manifest.set("bspline_iters", recon_cfg.registration.bspline_iters);
    manifest.set("pixel_iters", recon_cfg.registration.pixel_iters);
    manifest.set("lambda_rel", recon_cfg.registration.lambda_rel);
    manifest.set("tol", recon_cfg.registration.tol);
    manifest.set("bspline_step", recon_cfg.registration.bspline_step);
    manifest.set("pixel_step", recon_cfg.registration.pixel_step);
    manifest.save(&out.join("manifest.txt"))?;

    print!("{metrics}");
    Ok(())
}

// ---------------------------------------------------------------------------
// register
// ---------------------------------------------------------------------------

fn register_cmd(
    reference: &Path,
    deformed: &Path,
    mask: Option<&Path>,
    maps: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cfg_file = load_config(config)?;
    let reg_cfg = RegistrationConfig {
        grid_spacing: cfg_file.usize_or("grid_spacing", 16)?,
        bspline_iters: cfg_file.usize_or("bspline_iters", 50)?,
        pixel_iters: cfg_file.usize_or("pixel_iters", 100)?,
        lambda_rel: cfg_file.f64_or("lambda_rel", 0.1)?,
        tol: cfg_file.f64_or("tol", 1e-6)?,
        bspline_step: cfg_file.f64_or("bspline_step", 1.0)?,
        pixel_step: cfg_file.f64_or("pixel_step", 1.0)?,
    };
    let ref_img = CflTensor::read(reference)?.to_image()?;
    let def_img = CflTensor::read(deformed)?.to_image()?;
    if ref_img.shape() != def_img.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", ref_img.shape().0, ref_img.shape().1),
            got: format!("{}x{}", def_img.shape().0, def_img.shape().1),
        });
    }
    let (h, w) = ref_img.shape();
    let mask = match mask {
        Some(stem) => {
            let img = CflTensor::read(stem)?.to_image()?;
            SamplingMask::from_keep(h, w, img.data().iter().map(|z| z.re > 0.5).collect())?
        }
        None => SamplingMask::full(h, w),
    };
    let maps = match maps {
        Some(stem) => read_maps(stem)?,
        None => make_coil_profiles(h, w, 1)?,
    };
    // measure the deformed image through the coil model, then solve for the
    // field that maps the reference onto those measurements
    let shell = MotionProblem::new(
        vec![mask.clone()],
        vec![MultiCoilKSpace::zeros(maps.n_coils(), mask.clone())],
        maps,
        0.0,
    )?;
    let y = c2f_reco::forward::encode(&def_img, 0, &shell)?;
    let field = estimate_field(&ref_img, &y, 0, &shell, &reg_cfg)?;
    CflTensor::from_fields(std::slice::from_ref(&field))?.write(out)?;
    println!(
        "estimated field written to {} (max displacement {:.3} px)",
        out.display(),
        field.max_magnitude()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

fn metrics_cmd(estimate: &Path, reference: &Path) -> Result<()> {
    let est = CflTensor::read(estimate)?.to_image()?;
    let refi = CflTensor::read(reference)?.to_image()?;
    println!("{:.6}", nrmse(&est, &refi)?);
    Ok(())
}
