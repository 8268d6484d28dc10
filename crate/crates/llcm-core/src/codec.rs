//! Latent codec: a fixed seeded rotation + shift standing in for a VAE.
//!
//! `encode(x) = (x − shift)·Q`, `decode(z) = z·Qᵀ + shift` with `Q` square
//! orthonormal, so the round trip is exact and an isotropic Gaussian mixture
//! maps to another isotropic Gaussian mixture — which keeps closed-form
//! scores available in latent space.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;
use crate::world::{GmmComponent, ToyWorld};

/// Stream tag for codec construction draws.
const CODEC_STREAM: u64 = 0x636F_6465;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodec {
    /// Orthonormal `[dim, dim]` matrix (columns orthonormal).
    q: Tensor,
    shift: Vec<f64>,
}

impl LatentCodec {
    pub fn identity(dim: usize) -> LatentCodec {
        let mut q = Tensor::zeros(alloc::vec![dim, dim]);
        for i in 0..dim {
            q.set(i, i, 1.0);
        }
        LatentCodec {
            q,
            shift: alloc::vec![0.0; dim],
        }
    }

    /// Seeded random rotation + shift. The rotation comes from double-pass
    /// Gram-Schmidt on a Gaussian matrix; the shift is a modest offset.
    pub fn seeded(dim: usize, seed: u64) -> Result<LatentCodec> {
        if dim == 0 {
            return Err(CoreError::config("codec dim must be positive"));
        }
        let mut rng = Prng::derive(seed, CODEC_STREAM);
        // Columns of a raw Gaussian matrix, orthonormalized in order.
        let mut cols: Vec<Vec<f64>> = (0..dim).map(|_| rng.normal_vec(dim)).collect();
        for j in 0..dim {
            let (done, rest) = cols.split_at_mut(j);
            let col = &mut rest[0];
            // Two projection passes for numerical orthogonality.
            for _ in 0..2 {
                for prev in done.iter() {
                    let dot: f64 = col.iter().zip(prev).map(|(a, b)| a * b).sum();
                    for (a, b) in col.iter_mut().zip(prev) {
                        *a -= dot * b;
                    }
                }
            }
            let norm = libm::sqrt(col.iter().map(|v| v * v).sum());
            if norm < 1e-9 {
                return Err(CoreError::config(
                    "codec construction produced a degenerate column",
                ));
            }
            for v in col.iter_mut() {
                *v /= norm;
            }
        }
        let mut q = Tensor::zeros(alloc::vec![dim, dim]);
        for (j, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                q.set(r, j, *v);
            }
        }
        let shift = (0..dim).map(|_| 0.5 * rng.normal()).collect();
        Ok(LatentCodec { q, shift })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    fn check_dim(&self, x: &Tensor, op: &str) -> Result<()> {
        if x.rank() != 2 || x.n_cols() != self.dim() {
            return Err(CoreError::shape(format!(
                "{op}: points shape {:?}, expected [n, {}]",
                x.shape(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `z = (x − shift)·Q`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_dim(x, "encode")?;
        let mut centered = x.clone();
        let d = self.dim();
        for i in 0..x.n_rows() {
            for j in 0..d {
                let v = centered.at(i, j) - self.shift[j];
                centered.set(i, j, v);
            }
        }
        centered.matmul(&self.q)
    }

    /// `x = z·Qᵀ + shift`.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.check_dim(z, "decode")?;
        let mut x = z.matmul_nt(&self.q)?;
        let d = self.dim();
        for i in 0..x.n_rows() {
            for j in 0..d {
                let v = x.at(i, j) + self.shift[j];
                x.set(i, j, v);
            }
        }
        Ok(x)
    }

    /// Pushes a mixture world through the codec: component means are encoded,
    /// isotropic variances survive the rotation unchanged. This is what makes
    /// the oracle teacher exact in latent space.
    pub fn map_world(&self, world: &ToyWorld) -> Result<ToyWorld> {
        if world.dim() != self.dim() {
            return Err(CoreError::shape(format!(
                "codec dim {} does not match world dim {}",
                self.dim(),
                world.dim()
            )));
        }
        let mut classes = Vec::with_capacity(world.n_classes());
        for c in 0..world.n_classes() {
            let comps = world.components(crate::nn::embed::Cond::Class(c as u32))?;
            let mapped = comps
                .into_iter()
                .map(|k| {
                    let m = Tensor::from_rows(&[k.mean])?;
                    let z = self.encode(&m)?;
                    Ok(GmmComponent {
                        mean: z.row(0).to_vec(),
                        var: k.var,
                        weight: k.weight,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            classes.push(mapped);
        }
        ToyWorld::mixture(world.name(), world.dim(), classes)
    }
}
