//! Throwaway measurement harness (not part of the suite; will be deleted).

use std::time::Instant;

use llcm_core::batch::{BatchMeta, SampleBatch};
use llcm_core::codec::LatentCodec;
use llcm_core::distill::{
    consistency_sample, self_consistency_gap, train_llcm, ConsistencyHead, DistillConfig,
};
use llcm_core::metrics::{frechet_distance, mean_and_cov};
use llcm_core::model::{EpsArch, NoisePredictor};
use llcm_core::rng::Prng;
use llcm_core::sampler::{sample, SamplerConfig, SolverKind};
use llcm_core::schedule::ScheduleSpec;
use llcm_core::world::ToyWorld;
use llcm_core::{Cond, Tensor};

fn pooled_student(
    head: &ConsistencyHead,
    codec: &LatentCodec,
    sch: &ScheduleSpec,
    steps: usize,
    omega: f64,
    n_per_class: usize,
    seed: u64,
) -> SampleBatch {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..4u32 {
        let b = consistency_sample(
            head,
            codec,
            sch,
            steps,
            omega,
            Cond::Class(class),
            n_per_class,
            seed + class as u64,
        )
        .unwrap();
        for i in 0..b.n() {
            rows.push(b.points.row(i).to_vec());
            labels.push(Some(class));
        }
    }
    SampleBatch::new(
        Tensor::from_rows(&rows).unwrap(),
        labels,
        BatchMeta::default(),
    )
    .unwrap()
}

fn pooled_teacher(
    model: &NoisePredictor,
    codec: &LatentCodec,
    sch: &ScheduleSpec,
    steps: usize,
    omega: f64,
    n_per_class: usize,
    seed: u64,
) -> SampleBatch {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..4u32 {
        let cfg = SamplerConfig::new(
            SolverKind::Ddim,
            steps,
            omega,
            Cond::Class(class),
            seed + class as u64,
        );
        let b = sample(model, codec, sch, &cfg, n_per_class).unwrap();
        for i in 0..b.n() {
            rows.push(b.points.row(i).to_vec());
            labels.push(Some(class));
        }
    }
    SampleBatch::new(
        Tensor::from_rows(&rows).unwrap(),
        labels,
        BatchMeta::default(),
    )
    .unwrap()
}

#[test]
fn scratch_distill_benchmark() {
    use llcm_core::distill::MetricKind;
    let world = ToyWorld::gmm_grid(4, 2, 0.15);
    let teacher = NoisePredictor::oracle(world.clone()).unwrap();
    let codec = LatentCodec::identity(2);
    let sch = ScheduleSpec::default_linear();

    let t0 = Instant::now();
    let real = world.sample(8000, 9001).unwrap();
    let tb = pooled_teacher(&teacher, &codec, &sch, 50, 2.0, 2000, 500);
    let fd_teacher = frechet_distance(&tb, &real).unwrap();
    println!("teacher ddim-50 omega=2 pooled FD = {fd_teacher:.5}");

    let mut variants: Vec<(String, u64, DistillConfig)> = Vec::new();
    for (tag, decay) in [("d0.3", 0.3), ("d0.1", 0.1)] {
        for seed in [1u64, 2, 3] {
            variants.push((
                format!("ph-mu0.99-{tag} seed{seed}"),
                seed,
                DistillConfig {
                    metric: MetricKind::PseudoHuber { c: 0.03 },
                    iters: 6000,
                    mu: 0.99,
                    lr_decay: decay,
                    ..DistillConfig::default()
                },
            ));
        }
    }

    for (name, seed, cfg) in &variants {
        let t1 = Instant::now();
        let out = train_llcm(&teacher, &world, &codec, &sch, cfg, *seed).unwrap();
        let train_time = t1.elapsed();
        let first = out.loss_trace[0];
        let last10: f64 = out.loss_trace[out.loss_trace.len() - 10..]
            .iter()
            .sum::<f64>()
            / 10.0;
        println!(
            "{name}: train {train_time:.1?}  loss {first:.4}->{last10:.5}",
        );
        for (tag, head) in [("ema", &out.ema), ("online", &out.head)] {
            for steps in [1usize, 4] {
                let s = pooled_student(head, &codec, &sch, steps, 2.0, 2000, 600);
                let fd = frechet_distance(&s, &real).unwrap();
                let (m, c) = mean_and_cov(&s.points).unwrap();
                println!(
                    "  {tag} omega=2 steps={steps} FD={fd:.4}  mean=({:.3},{:.3}) var=({:.3},{:.3})",
                    m[0],
                    m[1],
                    c.at(0, 0),
                    c.at(1, 1),
                );
            }
        }
        let arch = EpsArch::teacher_default(2, 4).with_omega(cfg.omega_embed);
        let fresh = ConsistencyHead::init(arch, &sch, 12345).unwrap();
        let gap_untrained =
            self_consistency_gap(&fresh, &teacher, &sch, 0.0, Cond::Class(0), 32, 8, 800).unwrap();
        let gap_trained =
            self_consistency_gap(&out.ema, &teacher, &sch, 0.0, Cond::Class(0), 32, 8, 800)
                .unwrap();
        println!(
            "  gap {gap_untrained:.4}->{gap_trained:.4} ({:.1}x)",
            gap_untrained / gap_trained
        );
    }
    println!("total {:.1?}", t0.elapsed());
}
