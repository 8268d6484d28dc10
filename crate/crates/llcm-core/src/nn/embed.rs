//! Time, condition, and scalar embeddings for the conditional MLP.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// Conditioning token: a class id or the unconditional token φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cond {
    Class(u32),
    Null,
}

/// The unconditional token φ.
pub const NULL_TOKEN: Cond = Cond::Null;

impl Cond {
    pub fn from_label(label: Option<u32>) -> Cond {
        match label {
            Some(c) => Cond::Class(c),
            None => Cond::Null,
        }
    }

    pub fn label(self) -> Option<u32> {
        match self {
            Cond::Class(c) => Some(c),
            Cond::Null => None,
        }
    }
}

/// Stream tag for condition-projection draws ("cond" in ASCII); embeddings
/// are a pure function of (class, n_classes, dim), independent of run seeds.
const COND_STREAM: u64 = 0x636F_6E64;

/// Interleaved `[sin(π 2^k x), cos(π 2^k x)]` pairs, k = 0 .. dim/2.
pub fn fourier_features(x: f64, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(CoreError::config(format!(
            "fourier embedding dim must be even and positive, got {dim}"
        )));
    }
    if !x.is_finite() {
        return Err(CoreError::non_finite(format!("fourier input {x}")));
    }
    let mut data = Vec::with_capacity(dim);
    let mut freq = core::f64::consts::PI;
    for _ in 0..dim / 2 {
        data.push(libm::sin(freq * x));
        data.push(libm::cos(freq * x));
        freq *= 2.0;
    }
    Tensor::new(alloc::vec![dim], data)
}

/// Fourier time embedding; `t` must lie in [0, 1].
pub fn embed_time(t: f64, dim: usize) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CoreError::domain(format!(
            "embed_time: t = {t} outside [0, 1]"
        )));
    }
    fourier_features(t, dim)
}

/// Fixed (non-learned) condition embedding: class `c` maps to a seeded
/// Gaussian projection row; the unconditional token maps to the zero vector.
pub fn embed_condition(c: Cond, n_classes: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 {
        return Err(CoreError::config("embed_condition: dim must be positive"));
    }
    match c {
        Cond::Null => Ok(Tensor::zeros(alloc::vec![dim])),
        Cond::Class(id) => {
            if (id as usize) >= n_classes {
                return Err(CoreError::domain(format!(
                    "class id {id} out of range for {n_classes} classes"
                )));
            }
            let key = ((id as u64) << 40) | ((n_classes as u64) << 20) | dim as u64;
            let mut rng = Prng::derive(COND_STREAM, key);
            Tensor::new(alloc::vec![dim], rng.normal_vec(dim))
        }
    }
}
