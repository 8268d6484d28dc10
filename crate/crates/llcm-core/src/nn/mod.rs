//! Networks and training state: embeddings, a small conditional MLP, Adam,
//! EMA shadows, and a finite-difference gradient check.

pub mod adam;
pub mod embed;
pub mod ema;
pub mod gradcheck;
pub mod mlp;

pub use adam::{AdamConfig, OptState};
pub use embed::{embed_condition, embed_time, fourier_features, Cond, NULL_TOKEN};
pub use ema::EmaParams;
pub use gradcheck::{gradcheck_mlp, GradCheckReport};
pub use mlp::{MlpConfig, MlpParams};
