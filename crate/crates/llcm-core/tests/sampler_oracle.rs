//! Solver-quality checks against the analytic oracle: golden Fréchet runs,
//! the Euler order study, marginal preservation along the PF-ODE, and the
//! jumping-interval target against fine integration.

use llcm_core::codec::LatentCodec;
use llcm_core::distill::distill_target;
use llcm_core::metrics::{frechet_distance, mean_and_cov};
use llcm_core::model::NoisePredictor;
use llcm_core::rng::Prng;
use llcm_core::sampler::{
    ddim_step, euler_ode_step, predict_x0_eps, sample, SamplerConfig, SolverKind, TERMINAL_SIGMA,
};
use llcm_core::schedule::ScheduleSpec;
use llcm_core::world::ToyWorld;
use llcm_core::{Cond, NULL_TOKEN};

fn oracle_gmm() -> (NoisePredictor, ToyWorld, ScheduleSpec) {
    let world = ToyWorld::gmm_grid(4, 2, 0.15);
    let model = NoisePredictor::oracle(world.clone()).unwrap();
    (model, world, ScheduleSpec::default_linear())
}

#[test]
fn ddim_20_steps_lands_on_the_data_distribution() {
    let (model, world, sch) = oracle_gmm();
    let codec = LatentCodec::identity(2);
    let cfg = SamplerConfig::new(SolverKind::Ddim, 20, 0.0, NULL_TOKEN, 101);
    let generated = sample(&model, &codec, &sch, &cfg, 10_000).unwrap();
    let real = world.sample(10_000, 202).unwrap();
    let fd = frechet_distance(&generated, &real).unwrap();
    assert!(fd < 0.05, "ddim-20 Fréchet distance {fd}");
}

#[test]
fn euler_100_steps_lands_on_the_data_distribution() {
    let (model, world, sch) = oracle_gmm();
    let codec = LatentCodec::identity(2);
    let cfg = SamplerConfig::new(SolverKind::EulerOde, 100, 0.0, NULL_TOKEN, 103);
    let generated = sample(&model, &codec, &sch, &cfg, 10_000).unwrap();
    let real = world.sample(10_000, 204).unwrap();
    let fd = frechet_distance(&generated, &real).unwrap();
    assert!(fd < 0.05, "euler-100 Fréchet distance {fd}");
}

#[test]
fn euler_terminal_error_scales_first_order() {
    // Same seed => identical z_T draws, so the only difference between runs
    // is the step count. Reference: 2560 steps.
    let world = ToyWorld::single_gaussian(vec![0.3, -0.2], 0.04).unwrap();
    let model = NoisePredictor::oracle(world).unwrap();
    let sch = ScheduleSpec::default_linear();
    let codec = LatentCodec::identity(2);
    let run = |steps: usize| {
        let cfg = SamplerConfig::new(SolverKind::EulerOde, steps, 0.0, Cond::Class(0), 55);
        sample(&model, &codec, &sch, &cfg, 256).unwrap().points
    };
    let reference = run(2560);
    let steps = [10usize, 20, 40, 80];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &n in &steps {
        let got = run(n);
        let mut err = 0.0;
        for i in 0..256 {
            let dx = got.at(i, 0) - reference.at(i, 0);
            let dy = got.at(i, 1) - reference.at(i, 1);
            err += (dx * dx + dy * dy).sqrt();
        }
        err /= 256.0;
        xs.push((n as f64).ln());
        ys.push(err.ln());
    }
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let slope = num / den;
    assert!(
        (slope + 1.0).abs() < 0.2,
        "terminal error slope {slope}, errors {ys:?}"
    );
}

#[test]
fn euler_preserves_intermediate_marginals() {
    // Integrate the PF-ODE halfway down and compare the particle cloud's
    // moments with the analytic q_t of a single-Gaussian world.
    let mu0 = [0.4, -0.6];
    let var0 = 0.04;
    let world = ToyWorld::single_gaussian(mu0.to_vec(), var0).unwrap();
    let model = NoisePredictor::oracle(world).unwrap();
    let sch = ScheduleSpec::default_linear();
    let n = 10_000;
    let mut rng = Prng::new(77);
    let mut z = rng.normal_tensor(vec![n, 2]).scale(TERMINAL_SIGMA).unwrap();
    let pairs = sch.step_pairs(100).unwrap();
    let mut t_now = 1.0;
    for (t, s) in &pairs[..50] {
        z = euler_ode_step(&model, &sch, &z, Cond::Class(0), 0.0, *t, *s).unwrap();
        t_now = *s;
    }
    let (alpha, sigma) = sch.alpha_sigma(t_now).unwrap();
    let (mean, cov) = mean_and_cov(&z).unwrap();
    let want_var = alpha * alpha * var0 + sigma * sigma;
    for j in 0..2 {
        let want_mean = alpha * mu0[j];
        assert!(
            (mean[j] - want_mean).abs() < 0.05,
            "dim {j}: mean {} vs {want_mean}",
            mean[j]
        );
        let rel = (cov.at(j, j) - want_var).abs() / want_var;
        assert!(rel < 0.05, "dim {j}: var {} vs {want_var}", cov.at(j, j));
        // prior is isotropic and the flow preserves that
        let off = cov.at(0, 1).abs();
        assert!(off < 0.05 * want_var, "off-diagonal {off}");
    }
}

#[test]
fn jumping_target_close_to_fine_integration() {
    // One guided-solver call across k = 20 grid intervals vs k single-index
    // DDIM substeps, on latents drawn from the forward process.
    let (model, world, sch) = oracle_gmm();
    let n_grid = 1000usize;
    let k = 20usize;
    let idx_low = 430usize;
    let (t_low, t_high) = (
        sch.index_time(idx_low),
        sch.index_time(idx_low + k),
    );
    let c = Cond::Class(1);

    let mut rng = Prng::new(88);
    let x0 = world.sample(64, 99).unwrap().points;
    let eps = rng.normal_tensor(vec![64, 2]);
    let z_high = sch.perturb(&x0, t_high, &eps).unwrap();

    let target = distill_target(
        &model,
        &sch,
        &z_high,
        t_high,
        t_low,
        c,
        0.0,
        SolverKind::Leapfrog,
    )
    .unwrap();

    let mut fine = z_high.clone();
    for j in (idx_low..idx_low + k).rev() {
        let (t, s) = (sch.index_time(j + 1), sch.index_time(j));
        let (x0_hat, eps_hat) = predict_x0_eps(&model, &sch, &fine, c, 0.0, t).unwrap();
        fine = ddim_step(&sch, &fine, &x0_hat, &eps_hat, t, s).unwrap();
    }

    let mut gap = 0.0;
    for i in 0..64 {
        let dx = target.at(i, 0) - fine.at(i, 0);
        let dy = target.at(i, 1) - fine.at(i, 1);
        gap += (dx * dx + dy * dy).sqrt();
    }
    gap /= 64.0;
    assert!(gap < 0.05, "k-step target vs fine integration gap {gap}");
    assert_eq!(n_grid, sch.n_discrete());
}

#[test]
fn guidance_pushes_samples_away_from_the_pooled_bulk() {
    // The guided noise eps_c + omega(eps_c - eps_u) adds a score correction
    // pointing from the pooled mixture toward the conditional class. Class 0
    // of the grid world sits at x = -1.5, left of the global center, so
    // guidance must drag the class-conditional mean further left.
    let (model, _, sch) = oracle_gmm();
    let codec = LatentCodec::identity(2);
    let mean_x = |omega: f64| {
        let cfg = SamplerConfig::new(SolverKind::Ddim, 40, omega, Cond::Class(0), 31);
        let batch = sample(&model, &codec, &sch, &cfg, 2000).unwrap();
        (0..batch.n()).map(|i| batch.points.at(i, 0)).sum::<f64>() / batch.n() as f64
    };
    let plain = mean_x(0.0);
    let guided = mean_x(3.0);
    // Unguided conditional mean is the class mean, x = -1.5.
    assert!((plain + 1.5).abs() < 0.05, "unguided mean x {plain}");
    assert!(
        guided < plain - 0.03,
        "no outward push: omega=0 mean x {plain}, omega=3 mean x {guided}"
    );
}
