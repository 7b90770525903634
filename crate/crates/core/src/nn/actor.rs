//! The decentralized actor: one MLP shared by every agent, mapping each
//! local observation row to a categorical action distribution.

use crate::nn::mlp::{mlp_forward, Mlp, MlpNodes, MlpSpec};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Tensor, TensorError};
use rand_chacha::ChaCha8Rng;

/// Gain applied to the actor's output layer so the initial policy starts
/// near uniform.
pub const ACTOR_OUT_GAIN: f64 = 0.01;

/// Shared-policy weights: one parameter set executes for any agent count.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorParams {
    pub mlp: Mlp,
}

impl ActorParams {
    pub fn init(obs_dim: usize, hidden: &[usize], n_actions: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions);
        ActorParams {
            mlp: Mlp::init(MlpSpec::new(sizes), rng, ACTOR_OUT_GAIN),
        }
    }

    pub fn zeros(obs_dim: usize, hidden: &[usize], n_actions: usize) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions);
        ActorParams {
            mlp: Mlp::zeros(MlpSpec::new(sizes)),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.spec.input_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.mlp.spec.output_dim()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.mlp.tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.tensors_mut()
    }
}

/// Action logits for a batch of observation rows (training path).
pub fn actor_logits_on(
    tape: &mut Tape,
    nodes: &MlpNodes,
    obs: NodeId,
) -> Result<NodeId, TensorError> {
    mlp_forward(tape, nodes, obs)
}

/// Per-agent action probabilities: softmax over each observation row's
/// logits. Rows are independent, so permuting observations permutes outputs.
pub fn actor_forward(params: &ActorParams, observations: &Tensor) -> Result<Tensor, TensorError> {
    if observations.rank() != 2 || observations.shape()[1] != params.obs_dim() {
        return Err(TensorError::Shape {
            op: "actor_forward",
            lhs: observations.shape().to_vec(),
            rhs: vec![observations.rows(), params.obs_dim()],
        });
    }
    let mut tape = Tape::new();
    let nodes = params.mlp.constants_on(&mut tape);
    let obs = tape.constant(observations.clone());
    let logits = actor_logits_on(&mut tape, &nodes, obs)?;
    let probs = tape.softmax_rows(logits)?;
    Ok(tape.value(probs).clone())
}
