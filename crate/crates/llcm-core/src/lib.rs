//! Deterministic generative-diffusion math at desk scale.
//!
//! Everything needed to train a tiny noise-prediction teacher on an
//! analytically tractable toy distribution, distill a few-step consistency
//! student from it with a jumping-step leapfrog solver, sample from either,
//! and score the result with an exact Fréchet distance — all in pure `f64`
//! with seeded, bitwise-reproducible randomness.
//!
//! The crate is `no_std`-compatible (with `alloc`); file formats, the CLI,
//! and everything that touches the filesystem live in the companion
//! `llcm-lab` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod batch;
pub mod codec;
pub mod distill;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod tensor;
pub mod world;

pub use batch::{BatchMeta, SampleBatch};
pub use codec::LatentCodec;
pub use distill::{ConsistencyHead, DistillConfig, MetricKind, TeacherKind};
pub use error::{CoreError, Result};
pub use model::{EpsArch, MlpEps, NoisePredictor, OMEGA_SCALE};
pub use nn::embed::{Cond, NULL_TOKEN};
pub use rng::Prng;
pub use sampler::{SamplerConfig, SolverKind};
pub use schedule::{ScheduleKind, ScheduleSpec};
pub use tensor::Tensor;
pub use world::ToyWorld;
