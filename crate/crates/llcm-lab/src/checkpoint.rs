//! Checkpoint container: an 8-byte magic, a little-endian u32 header length,
//! a JSON header (model kind, architecture, head constants, schedule, codec,
//! parameter count, blob hash), then the parameters as little-endian f64s.
//! A checkpoint fully describes its generative pipeline, so `sample` needs
//! nothing but the file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use llcm_core::distill::ConsistencyHead;
use llcm_core::model::{EpsArch, MlpEps};
use llcm_core::nn::mlp::MlpParams;
use llcm_core::{LatentCodec, ScheduleKind, ScheduleSpec};

use crate::error::{LabError, Result};

const MAGIC: &[u8; 8] = b"LLCMCKP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchHeader {
    point_dim: usize,
    n_classes: usize,
    cond_embed: usize,
    time_embed: usize,
    omega_embed: usize,
    hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleHeader {
    kind: String,
    n: usize,
    beta_min: f64,
    beta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodecHeader {
    kind: String,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CkptHeader {
    kind: String,
    arch: ArchHeader,
    schedule: ScheduleHeader,
    codec: CodecHeader,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_data: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_floor: Option<f64>,
    param_count: usize,
    params_sha256: String,
}

/// The model inside a checkpoint.
#[derive(Debug, Clone)]
pub enum CkptModel {
    Teacher(MlpEps),
    Consistency(ConsistencyHead),
}

impl CkptModel {
    pub fn kind(&self) -> &'static str {
        match self {
            CkptModel::Teacher(_) => "teacher",
            CkptModel::Consistency(_) => "consistency",
        }
    }
}

/// Everything a sampling run needs, reconstructed from one file.
#[derive(Debug, Clone)]
pub struct Ckpt {
    pub model: CkptModel,
    pub schedule: ScheduleSpec,
    pub codec: LatentCodec,
}

/// Codec identity for serialization: kind name plus seed (unused for
/// `identity`).
#[derive(Debug, Clone, PartialEq)]
pub struct CodecDesc {
    pub kind: String,
    pub seed: u64,
}

impl CodecDesc {
    pub fn identity() -> CodecDesc {
        CodecDesc {
            kind: "identity".into(),
            seed: 0,
        }
    }

    pub fn build(&self, dim: usize) -> Result<LatentCodec> {
        match self.kind.as_str() {
            "identity" => Ok(LatentCodec::identity(dim)),
            "seeded" => Ok(LatentCodec::seeded(dim, self.seed)?),
            other => Err(LabError::usage(format!(
                "unknown codec kind `{other}`; valid kinds: identity, seeded"
            ))),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn params_blob(flat: &[f64]) -> Vec<u8> {
    let mut blob = Vec::with_capacity(flat.len() * 8);
    for v in flat {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    blob
}

fn arch_header(arch: &EpsArch) -> ArchHeader {
    ArchHeader {
        point_dim: arch.point_dim,
        n_classes: arch.n_classes,
        cond_embed: arch.cond_embed,
        time_embed: arch.time_embed,
        omega_embed: arch.omega_embed,
        hidden: arch.hidden.clone(),
    }
}

fn schedule_header(sch: &ScheduleSpec) -> ScheduleHeader {
    let (beta_min, beta_max) = sch.betas();
    ScheduleHeader {
        kind: sch.kind().name().into(),
        n: sch.n_discrete(),
        beta_min,
        beta_max,
    }
}

fn encode(header: &CkptHeader, blob: &[u8]) -> Result<Vec<u8>> {
    let header_json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header_json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(blob);
    Ok(out)
}

pub fn save_teacher(
    path: &Path,
    net: &MlpEps,
    sch: &ScheduleSpec,
    codec: &CodecDesc,
) -> Result<()> {
    let flat = net.params.flat();
    let blob = params_blob(&flat);
    let header = CkptHeader {
        kind: "teacher".into(),
        arch: arch_header(&net.arch),
        schedule: schedule_header(sch),
        codec: CodecHeader {
            kind: codec.kind.clone(),
            seed: codec.seed,
        },
        sigma_data: None,
        time_scale: None,
        t_floor: None,
        param_count: flat.len(),
        params_sha256: sha256_hex(&blob),
    };
    std::fs::write(path, encode(&header, &blob)?)?;
    Ok(())
}

pub fn save_consistency(
    path: &Path,
    head: &ConsistencyHead,
    sch: &ScheduleSpec,
    codec: &CodecDesc,
) -> Result<()> {
    let flat = head.eps.params.flat();
    let blob = params_blob(&flat);
    let header = CkptHeader {
        kind: "consistency".into(),
        arch: arch_header(&head.eps.arch),
        schedule: schedule_header(sch),
        codec: CodecHeader {
            kind: codec.kind.clone(),
            seed: codec.seed,
        },
        sigma_data: Some(head.sigma_data),
        time_scale: Some(head.time_scale),
        t_floor: Some(head.t_floor()),
        param_count: flat.len(),
        params_sha256: sha256_hex(&blob),
    };
    std::fs::write(path, encode(&header, &blob)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Ckpt> {
    let bytes = std::fs::read(path)
        .map_err(|e| LabError::usage(format!("cannot read checkpoint `{}`: {e}", path.display())))?;
    let fail = |msg: &str| LabError::usage(format!("checkpoint `{}`: {msg}", path.display()));
    if bytes.len() < MAGIC.len() + 4 || &bytes[..8] != MAGIC {
        return Err(fail("not an LLCM checkpoint (bad magic)"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let blob_start = 12 + header_len;
    if bytes.len() < blob_start {
        return Err(fail("truncated header"));
    }
    let header: CkptHeader = serde_json::from_slice(&bytes[12..blob_start])
        .map_err(|e| fail(&format!("bad header: {e}")))?;
    let blob = &bytes[blob_start..];
    if blob.len() != header.param_count * 8 {
        return Err(fail(&format!(
            "blob holds {} bytes, header promises {} parameters",
            blob.len(),
            header.param_count
        )));
    }
    if sha256_hex(blob) != header.params_sha256 {
        return Err(fail("parameter blob hash mismatch"));
    }
    let flat: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(fail("parameter blob contains non-finite values"));
    }

    let arch = EpsArch {
        point_dim: header.arch.point_dim,
        n_classes: header.arch.n_classes,
        cond_embed: header.arch.cond_embed,
        time_embed: header.arch.time_embed,
        omega_embed: header.arch.omega_embed,
        hidden: header.arch.hidden.clone(),
    };
    let params = MlpParams::from_flat(arch.mlp_config()?, &flat)?;
    let net = MlpEps { arch, params };

    let schedule = ScheduleSpec::new(
        ScheduleKind::parse(&header.schedule.kind)?,
        header.schedule.n,
        header.schedule.beta_min,
        header.schedule.beta_max,
    )?;
    let codec = CodecDesc {
        kind: header.codec.kind.clone(),
        seed: header.codec.seed,
    }
    .build(net.arch.point_dim)?;

    let model = match header.kind.as_str() {
        "teacher" => CkptModel::Teacher(net),
        "consistency" => {
            let missing = |f: &str| fail(&format!("consistency header lacks `{f}`"));
            let sigma_data = header.sigma_data.ok_or_else(|| missing("sigma_data"))?;
            let time_scale = header.time_scale.ok_or_else(|| missing("time_scale"))?;
            let t_floor = header.t_floor.ok_or_else(|| missing("t_floor"))?;
            CkptModel::Consistency(ConsistencyHead::new(net, sigma_data, time_scale, t_floor)?)
        }
        other => return Err(fail(&format!("unknown checkpoint kind `{other}`"))),
    };
    Ok(Ckpt {
        model,
        schedule,
        codec,
    })
}
