//! Plain feed-forward blocks shared by the actor and the critic pieces.

use crate::nn::init::orthogonal;
use crate::tape::{NodeId, Tape};
use crate::tensor::{Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

/// Layer-size description of an MLP: input dim first, output dim last,
/// tanh on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Self {
        assert!(layer_sizes.len() >= 2, "MlpSpec needs at least input and output sizes");
        assert!(layer_sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        MlpSpec { layer_sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// One affine layer: `w` is `[in×out]`, `b` is `[1×out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

/// MLP weights matching an [`MlpSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Orthogonal-init weights; `out_gain` applies to the final layer only.
    pub fn init(spec: MlpSpec, rng: &mut ChaCha8Rng, out_gain: f64) -> Self {
        let mut layers = Vec::new();
        let n = spec.layer_sizes.len() - 1;
        for i in 0..n {
            let (fan_in, fan_out) = (spec.layer_sizes[i], spec.layer_sizes[i + 1]);
            let gain = if i + 1 == n { out_gain } else { 1.0 };
            layers.push(Dense {
                w: orthogonal(rng, fan_in, fan_out, gain),
                b: Tensor::zeros(vec![1, fan_out]),
            });
        }
        Mlp { spec, layers }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let mut layers = Vec::new();
        for w in spec.layer_sizes.windows(2) {
            layers.push(Dense {
                w: Tensor::zeros(vec![w[0], w[1]]),
                b: Tensor::zeros(vec![1, w[1]]),
            });
        }
        Mlp { spec, layers }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}

/// Tape handles for one MLP's parameters.
#[derive(Debug, Clone)]
pub struct MlpNodes {
    pub layers: Vec<(NodeId, NodeId)>,
}

impl MlpNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

impl Mlp {
    /// Record this MLP's parameters as differentiable leaves.
    pub fn params_on(&self, tape: &mut Tape) -> MlpNodes {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.param(&l.w), tape.param(&l.b)))
            .collect();
        MlpNodes { layers }
    }

    /// Record this MLP's parameters as frozen constants (evaluation path).
    pub fn constants_on(&self, tape: &mut Tape) -> MlpNodes {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.constant(l.w.clone()), tape.constant(l.b.clone())))
            .collect();
        MlpNodes { layers }
    }
}

/// `x·w + 1·b` — the bias row is broadcast through a ones matmul so only
/// primitive ops appear on the tape.
pub fn affine(tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
    let xw = tape.matmul(x, w)?;
    let rows = tape.value(xw).shape()[0];
    let ones = tape.constant(Tensor::new(vec![rows, 1], vec![1.0; rows]));
    let bias = tape.matmul(ones, b)?;
    tape.add(xw, bias)
}

/// Forward through the MLP: tanh between layers, linear output.
pub fn mlp_forward(tape: &mut Tape, nodes: &MlpNodes, x: NodeId) -> Result<NodeId, TensorError> {
    let mut cur = x;
    let last = nodes.layers.len() - 1;
    for (i, &(w, b)) in nodes.layers.iter().enumerate() {
        cur = affine(tape, cur, w, b)?;
        if i != last {
            cur = tape.tanh(cur);
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn forward_matches_straight_line_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = Mlp::init(MlpSpec::new(vec![3, 4, 2]), &mut rng, 1.0);
        let x = Tensor::matrix(&[vec![0.3, -0.7, 1.1], vec![0.0, 0.5, -0.2]]);

        let mut tape = Tape::new();
        let nodes = mlp.constants_on(&mut tape);
        let xid = tape.constant(x.clone());
        let y = mlp_forward(&mut tape, &nodes, xid).unwrap();
        let got = tape.value(y).clone();

        // independent recomputation with plain loops
        for r in 0..2 {
            let mut h: Vec<f64> = (0..4)
                .map(|j| {
                    let mut s = mlp.layers[0].b.at(0, j);
                    for i in 0..3 {
                        s += x.at(r, i) * mlp.layers[0].w.at(i, j);
                    }
                    s.tanh()
                })
                .collect();
            let out: Vec<f64> = (0..2)
                .map(|j| {
                    let mut s = mlp.layers[1].b.at(0, j);
                    for (i, hv) in h.iter().enumerate() {
                        s += hv * mlp.layers[1].w.at(i, j);
                    }
                    s
                })
                .collect();
            h.clear();
            for (c, &o) in out.iter().enumerate() {
                assert!((got.at(r, c) - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[should_panic]
    fn spec_requires_two_entries() {
        let _ = MlpSpec::new(vec![5]);
    }
}
