//! Finite-difference verification of the autodiff pipeline.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Tape;
use crate::error::Result;
use crate::nn::mlp::{MlpConfig, MlpParams};
use crate::rng::Prng;

pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub n_checked: usize,
    pub threshold: f64,
    /// Where the worst disagreement sits, e.g. "layer 1 weight".
    pub worst_param: String,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.threshold
    }
}

/// Locates a flat parameter index inside the layer/weight/bias layout.
fn param_label(cfg: &MlpConfig, index: usize) -> String {
    let mut rest = index;
    for (l, (fi, fo)) in cfg.layer_dims().into_iter().enumerate() {
        if rest < fi * fo {
            return format!("layer {l} weight");
        }
        rest -= fi * fo;
        if rest < fo {
            return format!("layer {l} bias");
        }
        rest -= fo;
    }
    format!("index {index}")
}

/// Squared-error loss of a random MLP, differentiated two ways: the tape vs
/// central finite differences at h = 1e-5 on every parameter. Passes when the
/// worst relative error stays under 1e-4.
pub fn gradcheck_mlp(seed: u64) -> Result<GradCheckReport> {
    let cfg = MlpConfig::new(5, alloc::vec![8, 8], 3)?;
    let params = MlpParams::init(cfg.clone(), seed, false)?;
    let mut rng = Prng::derive(seed, 0x6763_6B31);
    let x = rng.normal_tensor(alloc::vec![4, 5]);
    let y = rng.normal_tensor(alloc::vec![4, 3]);

    let loss_of = |flat: &[f64]| -> Result<f64> {
        let p = MlpParams::from_flat(cfg.clone(), flat)?;
        let out = p.forward(&x)?;
        let diff = out.sub(&y)?;
        Ok(diff.mul(&diff)?.mean())
    };

    // Autodiff gradient.
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let yv = tape.leaf(y.clone());
    let (out, param_ids) = params.forward_tape(&mut tape, xv)?;
    let diff = tape.sub(out, yv)?;
    let sq = tape.mul(diff, diff)?;
    let root = tape.mean(sq)?;
    let grads = tape.backward(root)?;
    let ad: Vec<f64> = params.collect_grads(&tape, &grads, &param_ids)?;

    // Finite differences.
    let flat = params.flat();
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    let mut worst = 0usize;
    for i in 0..flat.len() {
        let mut fp = flat.clone();
        let mut fm = flat.clone();
        fp[i] += h;
        fm[i] -= h;
        let fd = (loss_of(&fp)? - loss_of(&fm)?) / (2.0 * h);
        let denom = ad[i].abs().max(fd.abs()).max(1e-6);
        let rel = (ad[i] - fd).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        n_checked: flat.len(),
        threshold: 1e-4,
        worst_param: param_label(&cfg, worst),
    })
}
