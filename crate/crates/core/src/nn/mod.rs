//! Actor and critic networks. No parameter shape depends on the agent
//! count, which is what lets one trained model execute at any team size.

pub mod actor;
pub mod attention;
pub mod critic;
pub mod init;
pub mod mlp;

pub use actor::{actor_forward, actor_logits_on, ActorParams};
pub use attention::{graph_conv, self_attention, self_attention_with_weights, GraphConvParams};
pub use critic::{critic_forward, critic_forward_on, CriticParams, CriticTrace};
pub use mlp::{affine, mlp_forward, Mlp, MlpNodes, MlpSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Hidden-layer sizing for a fresh actor/critic pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub actor_hidden: Vec<usize>,
    pub embed_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub head_hidden: Vec<usize>,
}

impl NetworkConfig {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        NetworkConfig {
            obs_dim,
            n_actions,
            actor_hidden: vec![64, 64],
            embed_hidden: vec![64],
            embed_dim: 64,
            attn_dim: 64,
            head_hidden: vec![64],
        }
    }

    /// Deterministically initialize both networks from one seed.
    pub fn init(&self, seed: u64) -> (ActorParams, CriticParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = ActorParams::init(self.obs_dim, &self.actor_hidden, self.n_actions, &mut rng);
        let critic = CriticParams::init(
            self.obs_dim,
            &self.embed_hidden,
            self.embed_dim,
            self.attn_dim,
            &self.head_hidden,
            &mut rng,
        );
        (actor, critic)
    }
}
