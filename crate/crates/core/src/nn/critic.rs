//! Centralized critic: observation embeddings flow through two graph
//! convolutions; each agent's embedding and both conv outputs are summed
//! per agent and mapped by a shared head MLP to that agent's value.

use crate::nn::attention::{graph_conv, GraphConvNodes, GraphConvParams};
use crate::nn::mlp::{mlp_forward, Mlp, MlpNodes, MlpSpec};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

/// Weights for the embed → graph-conv ×2 → head pipeline. The embed output,
/// both conv outputs, and the head input all share one width so the
/// per-agent sum is well-formed.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    pub embed: Mlp,
    pub gc1: GraphConvParams,
    pub gc2: GraphConvParams,
    pub head: Mlp,
}

impl CriticParams {
    pub fn init(
        obs_dim: usize,
        embed_hidden: &[usize],
        embed_dim: usize,
        attn_dim: usize,
        head_hidden: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut embed_sizes = vec![obs_dim];
        embed_sizes.extend_from_slice(embed_hidden);
        embed_sizes.push(embed_dim);
        let mut head_sizes = vec![embed_dim];
        head_sizes.extend_from_slice(head_hidden);
        head_sizes.push(1);
        CriticParams {
            embed: Mlp::init(MlpSpec::new(embed_sizes), rng, 1.0),
            gc1: GraphConvParams::init(embed_dim, attn_dim, attn_dim, embed_dim, rng),
            gc2: GraphConvParams::init(embed_dim, attn_dim, attn_dim, embed_dim, rng),
            head: Mlp::init(MlpSpec::new(head_sizes), rng, 1.0),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.embed.spec.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.spec.output_dim()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut ts = self.embed.tensors();
        ts.extend(self.gc1.tensors());
        ts.extend(self.gc2.tensors());
        ts.extend(self.head.tensors());
        ts
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ts = self.embed.tensors_mut();
        ts.extend(self.gc1.tensors_mut());
        ts.extend(self.gc2.tensors_mut());
        ts.extend(self.head.tensors_mut());
        ts
    }
}

/// Tape handles for every critic parameter.
#[derive(Debug, Clone)]
pub struct CriticNodes {
    pub embed: MlpNodes,
    pub gc1: GraphConvNodes,
    pub gc2: GraphConvNodes,
    pub head: MlpNodes,
}

impl CriticParams {
    pub fn params_on(&self, tape: &mut Tape) -> CriticNodes {
        CriticNodes {
            embed: self.embed.params_on(tape),
            gc1: self.gc1.params_on(tape),
            gc2: self.gc2.params_on(tape),
            head: self.head.params_on(tape),
        }
    }

    pub fn constants_on(&self, tape: &mut Tape) -> CriticNodes {
        CriticNodes {
            embed: self.embed.constants_on(tape),
            gc1: self.gc1.constants_on(tape),
            gc2: self.gc2.constants_on(tape),
            head: self.head.constants_on(tape),
        }
    }
}

impl CriticNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        let mut ids = self.embed.ids();
        ids.extend(self.gc1.ids());
        ids.extend(self.gc2.ids());
        ids.extend(self.head.ids());
        ids
    }
}

/// Intermediate activations of one critic pass, all with one row per agent.
#[derive(Debug, Clone)]
pub struct CriticTrace {
    /// `[n×d_e]` observation embeddings.
    pub embeddings: Tensor,
    /// `[n×d_e]` first graph-conv outputs.
    pub conv1: Tensor,
    /// `[n×d_e]` second graph-conv outputs.
    pub conv2: Tensor,
    /// `[n]` per-agent values.
    pub values: Tensor,
}

/// Critic forward on an existing tape; returns node ids for
/// (embeddings, conv1, conv2, values-as-[n×1]).
pub fn critic_forward_on(
    tape: &mut Tape,
    nodes: &CriticNodes,
    obs: NodeId,
) -> Result<(NodeId, NodeId, NodeId, NodeId), TensorError> {
    let e = mlp_forward(tape, &nodes.embed, obs)?;
    let h = graph_conv(tape, &nodes.gc1, e)?;
    let hp = graph_conv(tape, &nodes.gc2, h)?;
    let eh = tape.add(e, h)?;
    let features = tape.add(eh, hp)?;
    let values = mlp_forward(tape, &nodes.head, features)?;
    Ok((e, h, hp, values))
}

/// Standalone critic evaluation for `[n×d_obs]` observations.
pub fn critic_forward(
    params: &CriticParams,
    observations: &Tensor,
) -> Result<CriticTrace, TensorError> {
    if observations.rank() != 2 || observations.shape()[1] != params.obs_dim() {
        return Err(TensorError::Shape {
            op: "critic_forward",
            lhs: observations.shape().to_vec(),
            rhs: vec![observations.rows(), params.obs_dim()],
        });
    }
    let mut tape = Tape::new();
    let nodes = params.constants_on(&mut tape);
    let obs = tape.constant(observations.clone());
    let (e, h, hp, v) = critic_forward_on(&mut tape, &nodes, obs)?;
    Ok(CriticTrace {
        embeddings: tape.value(e).clone(),
        conv1: tape.value(h).clone(),
        conv2: tape.value(hp).clone(),
        values: Tensor::vector(tape.value(v).data().to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn zero_critic(obs_dim: usize, d_e: usize) -> CriticParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = CriticParams::init(obs_dim, &[4], d_e, 3, &[4], &mut rng);
        for t in c.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        c
    }

    #[test]
    fn zero_weights_values_equal_head_bias() {
        let mut c = zero_critic(3, 4);
        // bias on the head output layer
        let last = c.head.layers.len() - 1;
        c.head.layers[last].b.data_mut()[0] = 0.75;
        let obs = Tensor::matrix(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 4.0]]);
        let tr = critic_forward(&c, &obs).unwrap();
        for &v in tr.values.data() {
            assert!((v - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn swapping_agents_swaps_values_and_leaves_third_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c = CriticParams::init(4, &[6], 5, 4, &[6], &mut rng);
        let rows = [
            vec![0.3, -0.1, 0.7, 0.2],
            vec![-0.6, 0.4, 0.0, 1.0],
            vec![0.9, 0.9, -0.9, 0.1],
        ];
        let base = critic_forward(&c, &Tensor::matrix(&rows)).unwrap();
        let swapped = critic_forward(
            &c,
            &Tensor::matrix(&[rows[1].clone(), rows[0].clone(), rows[2].clone()]),
        )
        .unwrap();
        let b = base.values.data();
        let s = swapped.values.data();
        assert!((s[0] - b[1]).abs() < 1e-12);
        assert!((s[1] - b[0]).abs() < 1e-12);
        assert_eq!(s[2].to_bits(), b[2].to_bits());
    }

    #[test]
    fn trace_rows_match_agent_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let c = CriticParams::init(3, &[4], 4, 3, &[4], &mut rng);
        for n in [1usize, 2, 7] {
            let obs = Tensor::new(vec![n, 3], vec![0.1; n * 3]);
            let tr = critic_forward(&c, &obs).unwrap();
            assert_eq!(tr.embeddings.shape(), &[n, 4]);
            assert_eq!(tr.conv1.shape(), &[n, 4]);
            assert_eq!(tr.conv2.shape(), &[n, 4]);
            assert_eq!(tr.values.len(), n);
        }
    }

    #[test]
    fn values_match_straight_line_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        // single hidden-free MLPs keep the oracle short
        let c = CriticParams {
            embed: Mlp::init(MlpSpec::new(vec![3, 4]), &mut rng, 1.0),
            gc1: GraphConvParams::init(4, 2, 2, 4, &mut rng),
            gc2: GraphConvParams::init(4, 2, 2, 4, &mut rng),
            head: Mlp::init(MlpSpec::new(vec![4, 1]), &mut rng, 1.0),
        };
        let obs = Tensor::matrix(&[vec![0.4, -0.3, 0.8], vec![-0.2, 0.6, 0.0]]);
        let tr = critic_forward(&c, &obs).unwrap();

        let matmul = |a: &Tensor, b: &Tensor| -> Tensor {
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for kk in 0..k {
                    for j in 0..n {
                        out[i * n + j] += a.at(i, kk) * b.at(kk, j);
                    }
                }
            }
            Tensor::new(vec![m, n], out)
        };
        let add_bias = |x: &Tensor, b: &Tensor| -> Tensor {
            let mut out = x.clone();
            let cols = x.cols();
            for r in 0..x.rows() {
                for j in 0..cols {
                    out.data_mut()[r * cols + j] += b.at(0, j);
                }
            }
            out
        };
        let gconv = |p: &GraphConvParams, h: &Tensor| -> Tensor {
            let q = matmul(h, &p.w_q);
            let k = matmul(h, &p.w_k);
            let v = matmul(h, &p.w_v);
            let n = h.rows();
            let mut att = vec![0.0; n * n];
            let scale = 1.0 / (p.d_k as f64).sqrt();
            for r in 0..n {
                let logits: Vec<f64> = (0..n)
                    .map(|cc| {
                        q.row(r).iter().zip(k.row(cc)).map(|(a, b)| a * b).sum::<f64>() * scale
                    })
                    .collect();
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
                let z: f64 = exps.iter().sum();
                for cc in 0..n {
                    att[r * n + cc] = exps[cc] / z;
                }
            }
            let sa = matmul(&Tensor::new(vec![n, n], att), &v);
            let mut cat = Vec::new();
            for r in 0..n {
                cat.push(sa.row(r).iter().chain(h.row(r)).cloned().collect::<Vec<_>>());
            }
            let cat = Tensor::matrix(&cat);
            let mut out = add_bias(&matmul(&cat, &p.sigma_w), &p.sigma_b);
            for v in out.data_mut() {
                *v = v.max(0.0);
            }
            out
        };

        let e = add_bias(&matmul(&obs, &c.embed.layers[0].w), &c.embed.layers[0].b);
        let h = gconv(&c.gc1, &e);
        let hp = gconv(&c.gc2, &h);
        for r in 0..2 {
            let f: Vec<f64> = (0..4).map(|j| e.at(r, j) + h.at(r, j) + hp.at(r, j)).collect();
            let v: f64 = c.head.layers[0].b.at(0, 0)
                + (0..4).map(|i| f[i] * c.head.layers[0].w.at(i, 0)).sum::<f64>();
            assert!(
                (tr.values.data()[r] - v).abs() < 1e-12,
                "agent {r}: {} vs {v}",
                tr.values.data()[r]
            );
        }
    }
}
