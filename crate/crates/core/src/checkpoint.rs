//! Versioned binary checkpoints.
//!
//! Layout: magic `MATL`, format version (u16 LE), a UTF-8 metadata block of
//! `key=value` lines (u32 length prefix), a tensor count, then per-tensor
//! records of (name length, name, rank, dims, little-endian f64 payload),
//! and finally a CRC32 of every preceding byte. Save → load → save is
//! byte-identical.

use crate::nn::{ActorParams, CriticParams, GraphConvParams, Mlp, MlpSpec, NetworkConfig};
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MATL";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes: expected MATL, found {found:02x?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u16),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Metadata lines plus named tensors, in a fixed serialization order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn meta_get(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

        let mut meta_text = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(meta_text, "{k}={v}");
        }
        buf.extend_from_slice(&(meta_text.len() as u32).to_le_bytes());
        buf.extend_from_slice(meta_text.as_bytes());

        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(t.rank() as u8);
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }

        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(magic);
            return Err(CheckpointError::BadMagic { found });
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }

        if bytes.len() < 4 {
            return Err(CheckpointError::Truncated("checksum"));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed });
        }

        let meta_len = r.u32("metadata length")? as usize;
        let meta_bytes = r.take(meta_len, "metadata")?;
        let meta_text = std::str::from_utf8(meta_bytes)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let mut meta = Vec::new();
        for line in meta_text.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Metadata(format!("bad line {line:?}")))?;
            meta.push((k.to_string(), v.to_string()));
        }

        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|e| CheckpointError::Metadata(e.to_string()))?
                .to_string();
            let rank = r.take(1, "tensor rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("tensor dim")? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * 8, "tensor payload")?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::new(shape, data)));
        }

        Ok(Checkpoint { meta, tensors })
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(what));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

// ---- trained-model wrapper ----------------------------------------------------

/// Everything needed to reload and run a trained actor/critic pair.
#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub env_name: String,
    pub train_agents: usize,
    pub train_seed: u64,
    pub epoch: usize,
    pub net: NetworkConfig,
    pub actor: ActorParams,
    pub critic: CriticParams,
}

fn fmt_sizes(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, CheckpointError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| CheckpointError::Metadata(format!("size list {s:?}: {e}")))
        })
        .collect()
}

fn meta_req<'c>(ck: &'c Checkpoint, key: &str) -> Result<&'c str, CheckpointError> {
    ck.meta_get(key)
        .ok_or_else(|| CheckpointError::Metadata(format!("missing key {key}")))
}

fn meta_parse<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T, CheckpointError>
where
    T::Err: std::fmt::Display,
{
    meta_req(ck, key)?
        .parse::<T>()
        .map_err(|e| CheckpointError::Metadata(format!("key {key}: {e}")))
}

fn mlp_names(prefix: &str, mlp: &Mlp) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    for (i, l) in mlp.layers.iter().enumerate() {
        out.push((format!("{prefix}.l{i}.w"), l.w.clone()));
        out.push((format!("{prefix}.l{i}.b"), l.b.clone()));
    }
    out
}

fn gc_names(prefix: &str, gc: &GraphConvParams) -> Vec<(String, Tensor)> {
    vec![
        (format!("{prefix}.wq"), gc.w_q.clone()),
        (format!("{prefix}.wk"), gc.w_k.clone()),
        (format!("{prefix}.wv"), gc.w_v.clone()),
        (format!("{prefix}.sw"), gc.sigma_w.clone()),
        (format!("{prefix}.sb"), gc.sigma_b.clone()),
    ]
}

fn fill_mlp(ck: &Checkpoint, prefix: &str, mlp: &mut Mlp) -> Result<(), CheckpointError> {
    for (i, l) in mlp.layers.iter_mut().enumerate() {
        for (suffix, slot) in [("w", &mut l.w), ("b", &mut l.b)] {
            let name = format!("{prefix}.l{i}.{suffix}");
            fill_tensor(ck, &name, slot)?;
        }
    }
    Ok(())
}

fn fill_gc(ck: &Checkpoint, prefix: &str, gc: &mut GraphConvParams) -> Result<(), CheckpointError> {
    for (suffix, slot) in [
        ("wq", &mut gc.w_q),
        ("wk", &mut gc.w_k),
        ("wv", &mut gc.w_v),
        ("sw", &mut gc.sigma_w),
        ("sb", &mut gc.sigma_b),
    ] {
        fill_tensor(ck, &format!("{prefix}.{suffix}"), slot)?;
    }
    Ok(())
}

fn fill_tensor(ck: &Checkpoint, name: &str, slot: &mut Tensor) -> Result<(), CheckpointError> {
    let found = ck
        .tensor(name)
        .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
    if found.shape() != slot.shape() {
        return Err(CheckpointError::TensorShape {
            name: name.to_string(),
            found: found.shape().to_vec(),
            expected: slot.shape().to_vec(),
        });
    }
    *slot = found.clone();
    Ok(())
}

impl ModelCheckpoint {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = vec![
            ("env".to_string(), self.env_name.clone()),
            ("train_agents".to_string(), self.train_agents.to_string()),
            ("train_seed".to_string(), self.train_seed.to_string()),
            ("epoch".to_string(), self.epoch.to_string()),
            ("obs_dim".to_string(), self.net.obs_dim.to_string()),
            ("n_actions".to_string(), self.net.n_actions.to_string()),
            ("actor_hidden".to_string(), fmt_sizes(&self.net.actor_hidden)),
            ("embed_hidden".to_string(), fmt_sizes(&self.net.embed_hidden)),
            ("embed_dim".to_string(), self.net.embed_dim.to_string()),
            ("attn_dim".to_string(), self.net.attn_dim.to_string()),
            ("head_hidden".to_string(), fmt_sizes(&self.net.head_hidden)),
        ];
        let mut tensors = mlp_names("actor", &self.actor.mlp);
        tensors.extend(mlp_names("critic.embed", &self.critic.embed));
        tensors.extend(gc_names("critic.gc1", &self.critic.gc1));
        tensors.extend(gc_names("critic.gc2", &self.critic.gc2));
        tensors.extend(mlp_names("critic.head", &self.critic.head));
        Checkpoint { meta, tensors }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CheckpointError> {
        let net = NetworkConfig {
            obs_dim: meta_parse(ck, "obs_dim")?,
            n_actions: meta_parse(ck, "n_actions")?,
            actor_hidden: parse_sizes(meta_req(ck, "actor_hidden")?)?,
            embed_hidden: parse_sizes(meta_req(ck, "embed_hidden")?)?,
            embed_dim: meta_parse(ck, "embed_dim")?,
            attn_dim: meta_parse(ck, "attn_dim")?,
            head_hidden: parse_sizes(meta_req(ck, "head_hidden")?)?,
        };

        let mut actor = ActorParams::zeros(net.obs_dim, &net.actor_hidden, net.n_actions);
        fill_mlp(ck, "actor", &mut actor.mlp)?;

        let mut embed_sizes = vec![net.obs_dim];
        embed_sizes.extend_from_slice(&net.embed_hidden);
        embed_sizes.push(net.embed_dim);
        let mut head_sizes = vec![net.embed_dim];
        head_sizes.extend_from_slice(&net.head_hidden);
        head_sizes.push(1);
        let mut critic = CriticParams {
            embed: Mlp::zeros(MlpSpec::new(embed_sizes)),
            gc1: GraphConvParams::zeros(net.embed_dim, net.attn_dim, net.attn_dim, net.embed_dim),
            gc2: GraphConvParams::zeros(net.embed_dim, net.attn_dim, net.attn_dim, net.embed_dim),
            head: Mlp::zeros(MlpSpec::new(head_sizes)),
        };
        fill_mlp(ck, "critic.embed", &mut critic.embed)?;
        fill_gc(ck, "critic.gc1", &mut critic.gc1)?;
        fill_gc(ck, "critic.gc2", &mut critic.gc2)?;
        fill_mlp(ck, "critic.head", &mut critic.head)?;

        Ok(ModelCheckpoint {
            env_name: meta_req(ck, "env")?.to_string(),
            train_agents: meta_parse(ck, "train_agents")?,
            train_seed: meta_parse(ck, "train_seed")?,
            epoch: meta_parse(ck, "epoch")?,
            net,
            actor,
            critic,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
