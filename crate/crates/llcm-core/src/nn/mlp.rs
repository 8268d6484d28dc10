//! A small dense MLP over concatenated `[x, cond, time, ...]` inputs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{gelu_tensor, Grads, Tape, VarId};
use crate::error::{CoreError, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpConfig {
    pub in_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
}

impl MlpConfig {
    pub fn new(in_dim: usize, hidden: Vec<usize>, out_dim: usize) -> Result<Self> {
        let cfg = MlpConfig {
            in_dim,
            hidden,
            out_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 || self.hidden.iter().any(|w| *w == 0) {
            return Err(CoreError::config(format!(
                "mlp dims must be positive: in {}, hidden {:?}, out {}",
                self.in_dim, self.hidden, self.out_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.in_dim;
        for &w in &self.hidden {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, self.out_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }

    /// Named flat-parameter spans, in checkpoint order
    /// (`layer{i}.weight`, `layer{i}.bias`, ...).
    pub fn spans(&self) -> Vec<(String, core::ops::Range<usize>)> {
        let mut spans = Vec::new();
        let mut off = 0;
        for (l, (fi, fo)) in self.layer_dims().into_iter().enumerate() {
            spans.push((format!("layer{l}.weight"), off..off + fi * fo));
            off += fi * fo;
            spans.push((format!("layer{l}.bias"), off..off + fo));
            off += fo;
        }
        spans
    }
}

/// MLP parameters: per-layer `[in, out]` weights and `[out]` biases, GELU on
/// every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    config: MlpConfig,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl MlpParams {
    /// Glorot-style scaled-uniform init from a seeded stream; biases start at
    /// zero. With `zero_final` the last layer is zeroed so the fresh network
    /// is the constant-zero function (stabilizes early denoising training).
    pub fn init(config: MlpConfig, seed: u64, zero_final: bool) -> Result<Self> {
        config.validate()?;
        let mut rng = Prng::derive(seed, 0x696E_6974);
        let dims = config.layer_dims();
        let last = dims.len() - 1;
        let mut weights = Vec::with_capacity(dims.len());
        let mut biases = Vec::with_capacity(dims.len());
        for (l, (fi, fo)) in dims.into_iter().enumerate() {
            let w = if zero_final && l == last {
                Tensor::zeros(alloc::vec![fi, fo])
            } else {
                let limit = libm::sqrt(6.0 / (fi + fo) as f64);
                let data = (0..fi * fo).map(|_| rng.uniform_in(-limit, limit)).collect();
                Tensor::new(alloc::vec![fi, fo], data)?
            };
            weights.push(w);
            biases.push(Tensor::zeros(alloc::vec![fo]));
        }
        Ok(MlpParams {
            config,
            weights,
            biases,
        })
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        let weights = dims
            .iter()
            .map(|(fi, fo)| Tensor::zeros(alloc::vec![*fi, *fo]))
            .collect();
        let biases = dims
            .iter()
            .map(|(_, fo)| Tensor::zeros(alloc::vec![*fo]))
            .collect();
        Ok(MlpParams {
            config,
            weights,
            biases,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.config.param_count()
    }

    /// Pure forward pass on a `[n, in_dim]` batch.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.n_cols() != self.config.in_dim {
            return Err(CoreError::shape(format!(
                "mlp forward: input shape {:?}, expected [n, {}]",
                x.shape(),
                self.config.in_dim
            )));
        }
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for l in 0..=last {
            h = h.matmul(&self.weights[l])?.add_row_bias(&self.biases[l])?;
            if l != last {
                h = gelu_tensor(&h);
            }
        }
        Ok(h)
    }

    /// Tape forward pass. Returns the output node plus the parameter nodes in
    /// flat/checkpoint order (`w0, b0, w1, b1, ...`) for gradient collection.
    pub fn forward_tape(&self, tape: &mut Tape, x: VarId) -> Result<(VarId, Vec<VarId>)> {
        if tape.value(x).n_cols() != self.config.in_dim {
            return Err(CoreError::shape(format!(
                "mlp forward: input shape {:?}, expected [n, {}]",
                tape.value(x).shape(),
                self.config.in_dim
            )));
        }
        let last = self.weights.len() - 1;
        let mut param_ids = Vec::with_capacity(2 * self.weights.len());
        let mut h = x;
        for l in 0..=last {
            let w = tape.leaf(self.weights[l].clone());
            let b = tape.leaf(self.biases[l].clone());
            param_ids.push(w);
            param_ids.push(b);
            h = tape.matmul(h, w)?;
            h = tape.add_row_bias(h, b)?;
            if l != last {
                h = tape.gelu(h)?;
            }
        }
        Ok((h, param_ids))
    }

    /// Concatenates gradients for `param_ids` (as returned by
    /// [`forward_tape`](Self::forward_tape)) into flat order.
    pub fn collect_grads(&self, tape: &Tape, grads: &Grads, param_ids: &[VarId]) -> Result<Vec<f64>> {
        if param_ids.len() != 2 * self.weights.len() {
            return Err(CoreError::shape(format!(
                "collect_grads: {} ids for {} parameter tensors",
                param_ids.len(),
                2 * self.weights.len()
            )));
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for &id in param_ids {
            flat.extend_from_slice(grads.get(id, tape).data());
        }
        Ok(flat)
    }

    /// All parameters concatenated in checkpoint order.
    pub fn flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend_from_slice(w.data());
            flat.extend_from_slice(b.data());
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::shape(format!(
                "set_flat: {} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.data_mut() {
                *v = flat[off];
                off += 1;
            }
            for v in b.data_mut() {
                *v = flat[off];
                off += 1;
            }
        }
        for w in &self.weights {
            w.ensure_finite("set_flat weights")?;
        }
        Ok(())
    }

    pub fn from_flat(config: MlpConfig, flat: &[f64]) -> Result<Self> {
        let mut p = MlpParams::zeros(config)?;
        p.set_flat(flat)?;
        Ok(p)
    }

    /// Zeroes the weight rows feeding from input coordinates
    /// `[start, start+len)`, so those inputs initially have no effect.
    pub fn zero_input_rows(&mut self, start: usize, len: usize) -> Result<()> {
        if start + len > self.config.in_dim {
            return Err(CoreError::shape(format!(
                "zero_input_rows: rows {start}..{} exceed input dim {}",
                start + len,
                self.config.in_dim
            )));
        }
        let cols = self.weights[0].n_cols();
        for r in start..start + len {
            for c in 0..cols {
                self.weights[0].set(r, c, 0.0);
            }
        }
        Ok(())
    }

    /// Grows the input dimension to `new_in_dim`; new rows are zero so the
    /// function computed on old inputs is unchanged.
    pub fn widen_input(&self, new_in_dim: usize) -> Result<MlpParams> {
        if new_in_dim < self.config.in_dim {
            return Err(CoreError::shape(format!(
                "widen_input: new dim {new_in_dim} below current {}",
                self.config.in_dim
            )));
        }
        let mut cfg = self.config.clone();
        cfg.in_dim = new_in_dim;
        let cols = self.weights[0].n_cols();
        let mut w0 = Tensor::zeros(alloc::vec![new_in_dim, cols]);
        for r in 0..self.config.in_dim {
            for c in 0..cols {
                w0.set(r, c, self.weights[0].at(r, c));
            }
        }
        let mut weights = self.weights.clone();
        weights[0] = w0;
        Ok(MlpParams {
            config: cfg,
            weights,
            biases: self.biases.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MlpConfig {
        MlpConfig::new(4, alloc::vec![8, 8], 3).unwrap()
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::zeros(cfg()).unwrap();
        let x = Tensor::filled(alloc::vec![5, 4], 1.7).unwrap();
        let y = p.forward(&x).unwrap();
        assert_eq!(y.shape(), &[5, 3]);
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_final_layer_gives_zero_output_from_random_hidden() {
        let p = MlpParams::init(cfg(), 3, true).unwrap();
        let x = Tensor::filled(alloc::vec![2, 4], -0.3).unwrap();
        let y = p.forward(&x).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn seeded_init_reproducible() {
        let a = MlpParams::init(cfg(), 7, false).unwrap();
        let b = MlpParams::init(cfg(), 7, false).unwrap();
        assert_eq!(a, b);
        let c = MlpParams::init(cfg(), 8, false).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn output_shape_follows_config() {
        // Hand-composed dims: 4 -> 8 -> 8 -> 3, batch 5.
        let p = MlpParams::init(cfg(), 1, false).unwrap();
        let x = Tensor::zeros(alloc::vec![5, 4]);
        assert_eq!(p.forward(&x).unwrap().shape(), &[5, 3]);
        assert_eq!(p.param_count(), 4 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let p = MlpParams::zeros(cfg()).unwrap();
        let x = Tensor::zeros(alloc::vec![5, 3]);
        assert!(matches!(p.forward(&x), Err(CoreError::Shape(_))));
    }

    #[test]
    fn flat_round_trip() {
        let p = MlpParams::init(cfg(), 11, false).unwrap();
        let flat = p.flat();
        assert_eq!(flat.len(), p.param_count());
        let q = MlpParams::from_flat(cfg(), &flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn tape_forward_matches_pure_forward() {
        let p = MlpParams::init(cfg(), 5, false).unwrap();
        let mut rng = crate::rng::Prng::new(2);
        let x = rng.normal_tensor(alloc::vec![6, 4]);
        let pure = p.forward(&x).unwrap();
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let (out, _) = p.forward_tape(&mut tape, xv).unwrap();
        assert_eq!(tape.value(out), &pure);
    }

    #[test]
    fn widen_input_preserves_function_on_old_inputs() {
        let p = MlpParams::init(cfg(), 9, false).unwrap();
        let wide = p.widen_input(6).unwrap();
        let mut rng = crate::rng::Prng::new(4);
        let x = rng.normal_tensor(alloc::vec![3, 4]);
        let mut padded_rows = Vec::new();
        for i in 0..3 {
            let mut row = x.row(i).to_vec();
            row.push(0.42); // values on new coords are ignored only if rows are zero
            row.push(-1.0);
            padded_rows.push(row);
        }
        let xp = Tensor::from_rows(&padded_rows).unwrap();
        let a = p.forward(&x).unwrap();
        let b = wide.forward(&xp).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
    }

    #[test]
    fn spans_cover_flat_params_exactly() {
        let spans = cfg().spans();
        let mut expect = 0;
        for (_, r) in &spans {
            assert_eq!(r.start, expect);
            expect = r.end;
        }
        assert_eq!(expect, cfg().param_count());
    }
}
