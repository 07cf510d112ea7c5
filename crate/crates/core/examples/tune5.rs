// Tuning harness for the standalone registration oracle (128x128).
use std::time::Instant;
use c2f_reco::forward::{make_coil_profiles, simulate_measurements, SamplingMask};
use c2f_reco::phantom::smooth_phantom;
use c2f_reco::registration::{estimate_field, RegistrationConfig};
use c2f_reco::sim::{random_rigid, random_smooth_field};
use c2f_reco::warp::{rigid_to_field, DisplacementField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_epe(u: &DisplacementField, truth_field: &DisplacementField, support: &c2f_reco::ComplexImage) -> f64 {
    let (h, w) = u.shape();
    let (mut err, mut n) = (0.0, 0usize);
    for r in 0..h {
        for c in 0..w {
            if support.at(r, c).norm() > 0.1 {
                let (dr, dc) = u.at(r, c);
                let (tr, tc) = truth_field.at(r, c);
                err += ((dr - tr).powi(2) + (dc - tc).powi(2)).sqrt();
                n += 1;
            }
        }
    }
    err / n as f64
}

fn main() {
    let (h, w) = (128, 128);
    let t0 = Instant::now();

    // smooth-field case
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let truth = smooth_phantom(h, w, 4, &mut rng);
    let field = random_smooth_field(h, w, 5.0, 1.5, &mut rng).unwrap();
    let maps = make_coil_profiles(h, w, 1).unwrap();
    let masks = vec![SamplingMask::full(h, w), SamplingMask::full(h, w)];
    let fields = vec![DisplacementField::zeros(h, w), field.clone()];
    let prob = simulate_measurements(&truth, &fields, &masks, &maps, 0.0, &mut rng).unwrap();
    for (sp, bi, pi, lam, tol) in [(24usize, 150usize, 300usize, 0.1f64, 1e-9f64), (24, 200, 400, 0.05, 1e-10), (32, 150, 300, 0.1, 1e-9)] {
        let cfg = RegistrationConfig { grid_spacing: sp, bspline_iters: bi, pixel_iters: pi, lambda_rel: lam, tol, ..Default::default() };
        let t = Instant::now();
        let u = estimate_field(&truth, prob.measurement(1), 1, &prob, &cfg).unwrap();
        println!("smooth sp{sp} bi{bi} pi{pi} lam{lam} tol{tol:.0e}: EPE {:.3} px ({:.1}s)", mean_epe(&u, &field, &truth), t.elapsed().as_secs_f64());
    }

    // rigid case
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let truth = smooth_phantom(h, w, 4, &mut rng);
    let params = random_rigid(5.0, 5.0, &mut rng).unwrap();
    println!("rigid params: {params:?}");
    let rfield = rigid_to_field(params, h, w);
    println!("rigid max disp: {:.2}", rfield.max_magnitude());
    let fields = vec![DisplacementField::zeros(h, w), rfield.clone()];
    let prob = simulate_measurements(&truth, &fields, &masks, &maps, 0.0, &mut rng).unwrap();
    for (sp, bi, pi, lam, tol) in [(32usize, 200usize, 300usize, 0.1f64, 1e-9f64), (32, 300, 400, 0.05, 1e-10), (48, 200, 300, 0.1, 1e-9)] {
        let cfg = RegistrationConfig { grid_spacing: sp, bspline_iters: bi, pixel_iters: pi, lambda_rel: lam, tol, ..Default::default() };
        let t = Instant::now();
        let u = estimate_field(&truth, prob.measurement(1), 1, &prob, &cfg).unwrap();
        println!("rigid sp{sp} bi{bi} pi{pi} lam{lam} tol{tol:.0e}: EPE {:.3} px ({:.1}s)", mean_epe(&u, &rfield, &truth), t.elapsed().as_secs_f64());
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
