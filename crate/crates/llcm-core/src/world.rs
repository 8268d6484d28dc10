//! Ground-truth toy distributions with class labels.
//!
//! Mixture worlds (`gmm_grid` and friends) admit a closed-form score at any
//! diffusion time: an isotropic Gaussian mixture convolved with the Gaussian
//! forward kernel stays a Gaussian mixture, with component `j` becoming
//! `N(α_t μ_j, (α_t² σ_j² + σ_t²) I)`. That score powers the oracle teacher.
//! The remaining worlds are sampling-only shapes for qualitative runs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::{BatchMeta, SampleBatch};
use crate::error::{CoreError, Result};
use crate::nn::embed::Cond;
use crate::rng::Prng;
use crate::schedule::ScheduleSpec;
use crate::tensor::Tensor;

/// Stream tag for world sampling draws.
const WORLD_STREAM: u64 = 0x776F_726C;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub mean: Vec<f64>,
    /// Isotropic variance σ₀².
    pub var: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum WorldShape {
    /// Per-class isotropic Gaussian mixtures; the only shape with a
    /// closed-form time-t score.
    Mixture { classes: Vec<Vec<GmmComponent>> },
    TwoMoons { noise: f64 },
    Checkerboard { cells: usize, extent: f64 },
    Rings { radii: Vec<f64>, noise: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorld {
    name: String,
    dim: usize,
    n_classes: usize,
    shape: WorldShape,
}

impl ToyWorld {
    /// Looks up a world by its CLI name.
    pub fn parse(name: &str) -> Result<ToyWorld> {
        match name {
            "gmm_grid" => Ok(ToyWorld::gmm_grid(4, 2, 0.15)),
            "two_moons" => Ok(ToyWorld::two_moons()),
            "checkerboard" => Ok(ToyWorld::checkerboard()),
            "rings" => Ok(ToyWorld::rings()),
            other => Err(CoreError::config(format!("unknown world `{other}`"))),
        }
    }

    /// 2-D benchmark mixture: `n_classes` columns of `comps` components each,
    /// class c centered at x = c − (n_classes − 1)/2, components stacked
    /// vertically at unit spacing around y = 0.
    pub fn gmm_grid(n_classes: usize, comps: usize, sigma0: f64) -> ToyWorld {
        let var = sigma0 * sigma0;
        let x_off = (n_classes as f64 - 1.0) / 2.0;
        let y_off = (comps as f64 - 1.0) / 2.0;
        let classes = (0..n_classes)
            .map(|c| {
                (0..comps)
                    .map(|k| GmmComponent {
                        mean: vec![c as f64 - x_off, k as f64 - y_off],
                        var,
                        weight: 1.0 / comps as f64,
                    })
                    .collect()
            })
            .collect();
        ToyWorld {
            name: String::from("gmm_grid"),
            dim: 2,
            n_classes,
            shape: WorldShape::Mixture { classes },
        }
    }

    /// Arbitrary mixture world (used by tests and the latent codec mapping).
    pub fn mixture(name: &str, dim: usize, classes: Vec<Vec<GmmComponent>>) -> Result<ToyWorld> {
        if classes.is_empty() {
            return Err(CoreError::config("mixture world needs at least one class"));
        }
        for (c, comps) in classes.iter().enumerate() {
            if comps.is_empty() {
                return Err(CoreError::config(format!("class {c} has no components")));
            }
            let wsum: f64 = comps.iter().map(|k| k.weight).sum();
            if (wsum - 1.0).abs() > 1e-9 {
                return Err(CoreError::config(format!(
                    "class {c} weights sum to {wsum}, expected 1"
                )));
            }
            for k in comps {
                if k.var <= 0.0 {
                    return Err(CoreError::config(format!(
                        "class {c} has non-positive variance {}",
                        k.var
                    )));
                }
                if k.mean.len() != dim {
                    return Err(CoreError::shape(format!(
                        "class {c} mean has dim {}, world dim {dim}",
                        k.mean.len()
                    )));
                }
            }
        }
        Ok(ToyWorld {
            name: String::from(name),
            dim,
            n_classes: classes.len(),
            shape: WorldShape::Mixture { classes },
        })
    }

    /// Single standard-normal-like component; handy for exact-math tests.
    pub fn single_gaussian(mean: Vec<f64>, var: f64) -> Result<ToyWorld> {
        let dim = mean.len();
        ToyWorld::mixture(
            "single_gaussian",
            dim,
            vec![vec![GmmComponent {
                mean,
                var,
                weight: 1.0,
            }]],
        )
    }

    pub fn two_moons() -> ToyWorld {
        ToyWorld {
            name: String::from("two_moons"),
            dim: 2,
            n_classes: 2,
            shape: WorldShape::TwoMoons { noise: 0.05 },
        }
    }

    pub fn checkerboard() -> ToyWorld {
        ToyWorld {
            name: String::from("checkerboard"),
            dim: 2,
            n_classes: 2,
            shape: WorldShape::Checkerboard {
                cells: 4,
                extent: 2.0,
            },
        }
    }

    pub fn rings() -> ToyWorld {
        ToyWorld {
            name: String::from("rings"),
            dim: 2,
            n_classes: 3,
            shape: WorldShape::Rings {
                radii: vec![0.5, 1.0, 1.5],
                noise: 0.05,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self.shape, WorldShape::Mixture { .. })
    }

    /// Mixture components of class `c`, or the uniformly pooled mixture over
    /// all classes for the unconditional token.
    pub fn components(&self, c: Cond) -> Result<Vec<GmmComponent>> {
        let classes = match &self.shape {
            WorldShape::Mixture { classes } => classes,
            _ => {
                return Err(CoreError::unsupported(format!(
                    "world `{}` has no closed-form mixture",
                    self.name
                )))
            }
        };
        match c {
            Cond::Class(id) => {
                let id = id as usize;
                if id >= classes.len() {
                    return Err(CoreError::domain(format!(
                        "class {id} out of range for {} classes",
                        classes.len()
                    )));
                }
                Ok(classes[id].clone())
            }
            Cond::Null => {
                let scale = 1.0 / classes.len() as f64;
                Ok(classes
                    .iter()
                    .flatten()
                    .map(|k| GmmComponent {
                        mean: k.mean.clone(),
                        var: k.var,
                        weight: k.weight * scale,
                    })
                    .collect())
            }
        }
    }

    /// Draws `n` labeled points, labels uniform over classes.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        let mut rng = Prng::derive(seed, WORLD_STREAM);
        let mut batch = self.sample_with(n, &mut rng)?;
        batch.meta.seed = seed;
        Ok(batch)
    }

    /// Like [`sample`](Self::sample) but drawing from a live stream, so a
    /// training loop can pull successive batches without reseeding.
    pub fn sample_with(&self, n: usize, rng: &mut Prng) -> Result<SampleBatch> {
        if n == 0 {
            return Err(CoreError::config("sample_world: n must be >= 1"));
        }
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = rng.uniform_usize(self.n_classes) as u32;
            rows.push(self.sample_point(class, rng)?);
            labels.push(Some(class));
        }
        SampleBatch::new(
            Tensor::from_rows(&rows)?,
            labels,
            BatchMeta {
                world: self.name.clone(),
                seed: 0,
                ..BatchMeta::default()
            },
        )
    }

    /// Draws `n` points all from one class.
    pub fn sample_class(&self, class: u32, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(CoreError::config("sample_world: n must be >= 1"));
        }
        if class as usize >= self.n_classes {
            return Err(CoreError::domain(format!(
                "class {class} out of range for {} classes",
                self.n_classes
            )));
        }
        let mut rng = Prng::derive(seed, WORLD_STREAM ^ (1 + class as u64));
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(self.sample_point(class, &mut rng)?);
        }
        SampleBatch::new(
            Tensor::from_rows(&rows)?,
            vec![Some(class); n],
            BatchMeta {
                world: self.name.clone(),
                seed,
                ..BatchMeta::default()
            },
        )
    }

    fn sample_point(&self, class: u32, rng: &mut Prng) -> Result<Vec<f64>> {
        match &self.shape {
            WorldShape::Mixture { classes } => {
                let comps = &classes[class as usize];
                let weights: Vec<f64> = comps.iter().map(|k| k.weight).collect();
                let j = rng.categorical(&weights);
                let sd = libm::sqrt(comps[j].var);
                Ok(comps[j]
                    .mean
                    .iter()
                    .map(|m| m + sd * rng.normal())
                    .collect())
            }
            WorldShape::TwoMoons { noise } => {
                let theta = rng.uniform_in(0.0, core::f64::consts::PI);
                let (mut x, mut y) = if class == 0 {
                    (libm::cos(theta), libm::sin(theta))
                } else {
                    (1.0 - libm::cos(theta), 0.5 - libm::sin(theta))
                };
                x += noise * rng.normal();
                y += noise * rng.normal();
                // Center the pair of moons roughly on the origin.
                Ok(vec![x - 0.5, y - 0.25])
            }
            WorldShape::Checkerboard { cells, extent } => {
                // Cells of one color parity per class on a cells x cells board.
                let parity = class as usize % 2;
                let mut own = Vec::new();
                for i in 0..*cells {
                    for j in 0..*cells {
                        if (i + j) % 2 == parity {
                            own.push((i, j));
                        }
                    }
                }
                let (i, j) = own[rng.uniform_usize(own.len())];
                let w = 2.0 * extent / *cells as f64;
                let x = -extent + (i as f64 + rng.uniform()) * w;
                let y = -extent + (j as f64 + rng.uniform()) * w;
                Ok(vec![x, y])
            }
            WorldShape::Rings { radii, noise } => {
                let r0 = radii[class as usize % radii.len()];
                let theta = rng.uniform_in(0.0, 2.0 * core::f64::consts::PI);
                let r = r0 + noise * rng.normal();
                Ok(vec![r * libm::cos(theta), r * libm::sin(theta)])
            }
        }
    }

    /// Exact score `∇_x log q_t(x | c)` of the time-t marginal for mixture
    /// worlds, one row per input row (single shared `t` and condition).
    pub fn analytic_score(
        &self,
        sch: &ScheduleSpec,
        x: &Tensor,
        c: Cond,
        t: f64,
    ) -> Result<Tensor> {
        if t < sch.t_min() || t > 1.0 {
            return Err(CoreError::domain(format!(
                "analytic_score: t = {t} outside [{}, 1]",
                sch.t_min()
            )));
        }
        let comps = self.components(c)?;
        if x.rank() != 2 || x.n_cols() != self.dim {
            return Err(CoreError::shape(format!(
                "analytic_score: points shape {:?}, expected [n, {}]",
                x.shape(),
                self.dim
            )));
        }
        let (alpha, sigma) = sch.alpha_sigma(t)?;
        let mut out = Tensor::zeros(vec![x.n_rows(), self.dim]);
        for i in 0..x.n_rows() {
            let row = score_of_row(&comps, x.row(i), alpha, sigma);
            for (j, v) in row.into_iter().enumerate() {
                out.set(i, j, v);
            }
        }
        out.ensure_finite("analytic_score")?;
        Ok(out)
    }

    /// Log-density of the time-t marginal (mixture worlds), used as the
    /// independent check target for the score and by the heatmap renderer.
    pub fn log_density(
        &self,
        sch: &ScheduleSpec,
        point: &[f64],
        c: Cond,
        t: f64,
    ) -> Result<f64> {
        let comps = self.components(c)?;
        let (alpha, sigma) = sch.alpha_sigma(t)?;
        Ok(log_density_of_row(&comps, point, alpha, sigma))
    }
}

/// Mixture score at one point under the time-t convolved mixture.
fn score_of_row(comps: &[GmmComponent], x: &[f64], alpha: f64, sigma: f64) -> Vec<f64> {
    let d = x.len();
    // Responsibilities via logsumexp over components.
    let mut logs = Vec::with_capacity(comps.len());
    for k in comps {
        let v = alpha * alpha * k.var + sigma * sigma;
        let mut sq = 0.0;
        for j in 0..d {
            let diff = x[j] - alpha * k.mean[j];
            sq += diff * diff;
        }
        logs.push(libm::log(k.weight) - 0.5 * sq / v - 0.5 * d as f64 * libm::log(v));
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logs.iter().map(|l| libm::exp(l - m)).sum();
    let mut score = vec![0.0; d];
    for (k, l) in comps.iter().zip(&logs) {
        let r = libm::exp(l - m) / denom;
        let v = alpha * alpha * k.var + sigma * sigma;
        for j in 0..d {
            score[j] += r * (alpha * k.mean[j] - x[j]) / v;
        }
    }
    score
}

fn log_density_of_row(comps: &[GmmComponent], x: &[f64], alpha: f64, sigma: f64) -> f64 {
    let d = x.len();
    let mut logs = Vec::with_capacity(comps.len());
    for k in comps {
        let v = alpha * alpha * k.var + sigma * sigma;
        let mut sq = 0.0;
        for j in 0..d {
            let diff = x[j] - alpha * k.mean[j];
            sq += diff * diff;
        }
        logs.push(
            libm::log(k.weight)
                - 0.5 * sq / v
                - 0.5 * d as f64 * (libm::log(v) + libm::log(2.0 * core::f64::consts::PI)),
        );
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + libm::log(logs.iter().map(|l| libm::exp(l - m)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::embed::NULL_TOKEN;

    #[test]
    fn unknown_world_is_error() {
        assert!(ToyWorld::parse("not_a_world").is_err());
        for ok in ["gmm_grid", "two_moons", "checkerboard", "rings"] {
            assert!(ToyWorld::parse(ok).is_ok(), "{ok}");
        }
    }

    #[test]
    fn zero_draws_rejected() {
        let w = ToyWorld::parse("gmm_grid").unwrap();
        assert!(w.sample(0, 1).is_err());
    }

    #[test]
    fn same_seed_identical_batches() {
        let w = ToyWorld::parse("two_moons").unwrap();
        let a = w.sample(64, 9).unwrap();
        let b = w.sample(64, 9).unwrap();
        assert_eq!(a, b);
        let c = w.sample(64, 10).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn standard_normal_world_mean_near_zero() {
        // Monte-Carlo oracle: mean of N(0, I) draws within 4/sqrt(n) per coord.
        let w = ToyWorld::single_gaussian(vec![0.0, 0.0], 1.0).unwrap();
        let n = 20_000;
        let batch = w.sample(n, 123).unwrap();
        let tol = 4.0 / (n as f64).sqrt();
        for j in 0..2 {
            let mean: f64 = (0..n).map(|i| batch.points.at(i, j)).sum::<f64>() / n as f64;
            assert!(mean.abs() < tol, "coord {j} mean {mean}");
        }
    }

    #[test]
    fn single_component_score_matches_closed_form() {
        let w = ToyWorld::single_gaussian(vec![0.7, -0.2], 0.04).unwrap();
        let sch = ScheduleSpec::default_linear();
        let t = 0.37;
        let (a, s) = sch.alpha_sigma(t).unwrap();
        let x = Tensor::from_rows(&[vec![0.3, 0.5], vec![-1.0, 0.0]]).unwrap();
        let got = w.analytic_score(&sch, &x, Cond::Class(0), t).unwrap();
        let v = a * a * 0.04 + s * s;
        for i in 0..2 {
            for (j, mu) in [0.7, -0.2].iter().enumerate() {
                let want = (a * mu - x.at(i, j)) / v;
                assert!((got.at(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_score_matches_log_density_gradient() {
        // Independent oracle: central finite differences of log q_t.
        let w = ToyWorld::parse("gmm_grid").unwrap();
        let sch = ScheduleSpec::default_linear();
        for (t, c) in [(0.05, Cond::Class(1)), (0.5, NULL_TOKEN), (1.0, Cond::Class(3))] {
            let pts = [[0.3, 0.4], [-1.2, 0.1], [0.0, -0.6]];
            let x = Tensor::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
            let score = w.analytic_score(&sch, &x, c, t).unwrap();
            let h = 1e-6;
            for (i, p) in pts.iter().enumerate() {
                for j in 0..2 {
                    let mut pp = p.to_vec();
                    let mut pm = p.to_vec();
                    pp[j] += h;
                    pm[j] -= h;
                    let fd = (w.log_density(&sch, &pp, c, t).unwrap()
                        - w.log_density(&sch, &pm, c, t).unwrap())
                        / (2.0 * h);
                    let rel = (score.at(i, j) - fd).abs() / fd.abs().max(1e-8);
                    assert!(rel < 1e-5, "t {t} row {i} coord {j}: {} vs {fd}", score.at(i, j));
                }
            }
        }
    }

    #[test]
    fn near_zero_time_score_approaches_sharp_gaussian() {
        // With sigma0 -> 0 the convolved component tends to N(alpha*mu, sigma_t^2).
        let w = ToyWorld::single_gaussian(vec![1.0, 1.0], 1e-12).unwrap();
        let sch = ScheduleSpec::default_linear();
        let t = sch.t_min();
        let (a, s) = sch.alpha_sigma(t).unwrap();
        let x = Tensor::from_rows(&[vec![1.1, 0.9]]).unwrap();
        let score = w.analytic_score(&sch, &x, Cond::Class(0), t).unwrap();
        for j in 0..2 {
            let want = (a * 1.0 - x.at(0, j)) / (s * s);
            let rel = (score.at(0, j) - want).abs() / want.abs();
            assert!(rel < 1e-3, "{} vs {want}", score.at(0, j));
        }
    }

    #[test]
    fn score_unsupported_for_shape_worlds() {
        let w = ToyWorld::parse("checkerboard").unwrap();
        let sch = ScheduleSpec::default_linear();
        let x = Tensor::zeros(vec![1, 2]);
        assert!(matches!(
            w.analytic_score(&sch, &x, NULL_TOKEN, 0.5),
            Err(CoreError::Unsupported(_))
        ));
    }

    #[test]
    fn pooled_unconditional_weights_sum_to_one() {
        let w = ToyWorld::parse("gmm_grid").unwrap();
        let pooled = w.components(NULL_TOKEN).unwrap();
        assert_eq!(pooled.len(), 8);
        let total: f64 = pooled.iter().map(|k| k.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_finite_across_time_range() {
        let w = ToyWorld::parse("gmm_grid").unwrap();
        let sch = ScheduleSpec::default_linear();
        let x = Tensor::from_rows(&[vec![3.0, -3.0], vec![0.0, 0.0]]).unwrap();
        let mut t = sch.t_min();
        while t <= 1.0 {
            w.analytic_score(&sch, &x, NULL_TOKEN, t).unwrap();
            t += 0.083;
        }
    }

    #[test]
    fn gmm_grid_means_are_unit_spaced_columns() {
        let w = ToyWorld::gmm_grid(4, 2, 0.15);
        let c0 = w.components(Cond::Class(0)).unwrap();
        let c1 = w.components(Cond::Class(1)).unwrap();
        assert_eq!(c0[0].mean[0], -1.5);
        assert_eq!(c1[0].mean[0], -0.5);
        assert_eq!(c0[0].mean[1], -0.5);
        assert_eq!(c0[1].mean[1], 0.5);
    }
}
