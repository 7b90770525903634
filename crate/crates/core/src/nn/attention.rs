//! Scaled dot-product self-attention over agents and the graph-conv layer
//! built on it. Attention weights form an `[n×n]` row-stochastic matrix, so
//! the layer evaluates for any agent count with one fixed parameter set.

use crate::nn::init::orthogonal;
use crate::nn::mlp::affine;
use crate::tape::{NodeId, Tape};
use crate::tensor::{Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

/// Query/key/value projections plus the one-layer feed-forward map applied
/// to the attended-and-residual concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvParams {
    /// `[d×d_k]` query projection.
    pub w_q: Tensor,
    /// `[d×d_k]` key projection.
    pub w_k: Tensor,
    /// `[d×d_v]` value projection.
    pub w_v: Tensor,
    /// Attention scaling dimension; scores divide by `sqrt(d_k)`.
    pub d_k: usize,
    /// `[(d_v+d)×d_out]` feed-forward weights.
    pub sigma_w: Tensor,
    /// `[1×d_out]` feed-forward bias.
    pub sigma_b: Tensor,
}

impl GraphConvParams {
    pub fn init(d: usize, d_k: usize, d_v: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        GraphConvParams {
            w_q: orthogonal(rng, d, d_k, 1.0),
            w_k: orthogonal(rng, d, d_k, 1.0),
            w_v: orthogonal(rng, d, d_v, 1.0),
            d_k,
            sigma_w: orthogonal(rng, d_v + d, d_out, 1.0),
            sigma_b: Tensor::zeros(vec![1, d_out]),
        }
    }

    pub fn zeros(d: usize, d_k: usize, d_v: usize, d_out: usize) -> Self {
        GraphConvParams {
            w_q: Tensor::zeros(vec![d, d_k]),
            w_k: Tensor::zeros(vec![d, d_k]),
            w_v: Tensor::zeros(vec![d, d_v]),
            d_k,
            sigma_w: Tensor::zeros(vec![d_v + d, d_out]),
            sigma_b: Tensor::zeros(vec![1, d_out]),
        }
    }

    /// Assemble from explicit parts (tests and deserialization).
    pub fn from_parts(
        w_q: Tensor,
        w_k: Tensor,
        w_v: Tensor,
        d_k: usize,
        sigma_w: Tensor,
        sigma_b: Tensor,
    ) -> Self {
        assert!(d_k > 0, "attention scaling dimension must be positive");
        GraphConvParams {
            w_q,
            w_k,
            w_v,
            d_k,
            sigma_w,
            sigma_b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sigma_w.shape()[1]
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_q, &self.w_k, &self.w_v, &self.sigma_w, &self.sigma_b]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.sigma_w,
            &mut self.sigma_b,
        ]
    }
}

/// Tape handles for one graph-conv layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct GraphConvNodes {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
    pub d_k: usize,
    pub sigma_w: NodeId,
    pub sigma_b: NodeId,
}

impl GraphConvParams {
    pub fn params_on(&self, tape: &mut Tape) -> GraphConvNodes {
        GraphConvNodes {
            w_q: tape.param(&self.w_q),
            w_k: tape.param(&self.w_k),
            w_v: tape.param(&self.w_v),
            d_k: self.d_k,
            sigma_w: tape.param(&self.sigma_w),
            sigma_b: tape.param(&self.sigma_b),
        }
    }

    pub fn constants_on(&self, tape: &mut Tape) -> GraphConvNodes {
        GraphConvNodes {
            w_q: tape.constant(self.w_q.clone()),
            w_k: tape.constant(self.w_k.clone()),
            w_v: tape.constant(self.w_v.clone()),
            d_k: self.d_k,
            sigma_w: tape.constant(self.sigma_w.clone()),
            sigma_b: tape.constant(self.sigma_b.clone()),
        }
    }
}

impl GraphConvNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        vec![self.w_q, self.w_k, self.w_v, self.sigma_w, self.sigma_b]
    }
}

/// `softmax((h·W_Q)(h·W_K)ᵀ / sqrt(d_k)) · (h·W_V)` for `h: [n×d]`.
///
/// Returns `(attention_weights, output)`; the weights matrix is `[n×n]`
/// row-stochastic.
pub fn self_attention_with_weights(
    tape: &mut Tape,
    p: &GraphConvNodes,
    h: NodeId,
) -> Result<(NodeId, NodeId), TensorError> {
    let q = tape.matmul(h, p.w_q)?;
    let k = tape.matmul(h, p.w_k)?;
    let v = tape.matmul(h, p.w_v)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (p.d_k as f64).sqrt());
    let weights = tape.softmax_rows(scaled)?;
    let out = tape.matmul(weights, v)?;
    Ok((weights, out))
}

pub fn self_attention(
    tape: &mut Tape,
    p: &GraphConvNodes,
    h: NodeId,
) -> Result<NodeId, TensorError> {
    self_attention_with_weights(tape, p, h).map(|(_, out)| out)
}

/// One graph convolution: feed-forward over `[Self-Attention(h), h]`.
pub fn graph_conv(tape: &mut Tape, p: &GraphConvNodes, h: NodeId) -> Result<NodeId, TensorError> {
    let attended = self_attention(tape, p, h)?;
    let cat = tape.concat_cols(attended, h)?;
    let pre = affine(tape, cat, p.sigma_w, p.sigma_b)?;
    Ok(tape.relu(pre))
}
