//! Gridworld environments behind one multi-agent surface.
//!
//! Both environments are fully deterministic given (config, seed, actions):
//! entity placement, prey movement, and car arrivals all draw from one
//! seeded stream, and every loop runs in fixed agent order.

mod predator_prey;
mod traffic_junction;

pub use predator_prey::PredatorPreyEnv;
pub use traffic_junction::TrafficJunctionEnv;

use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("{kind:?} supports at most {capacity} agents, requested {requested}")]
    Capacity {
        kind: EnvKind,
        capacity: usize,
        requested: usize,
    },
    #[error("invalid action {action} for agent {agent} (actions 0..{n_actions})")]
    InvalidAction {
        agent: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("episode already finished; reset before stepping")]
    EpisodeFinished,
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    PredatorPrey,
    TrafficJunction,
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::PredatorPrey => "predator_prey",
            EnvKind::TrafficJunction => "traffic_junction",
        }
    }

    pub fn parse(s: &str) -> Option<EnvKind> {
        match s {
            "predator_prey" => Some(EnvKind::PredatorPrey),
            "traffic_junction" => Some(EnvKind::TrafficJunction),
            _ => None,
        }
    }
}

/// Full environment configuration; kind-specific constants are plain fields
/// so a config file can override any of them.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub n_agents: usize,
    pub grid_dim: usize,
    pub episode_length: usize,
    pub seed: u64,
    pub vision: usize,

    // predator-prey constants
    pub n_prey: usize,
    pub capture_reward: f64,
    pub lone_capture_penalty: f64,
    pub step_penalty: f64,
    pub prey_flee_prob: f64,

    // traffic-junction constants
    pub collision_penalty: f64,
    pub time_penalty_coef: f64,
    pub add_rate_max: f64,
    pub add_rate_min: f64,
}

impl EnvConfig {
    pub fn predator_prey(n_agents: usize, grid_dim: usize) -> Self {
        EnvConfig {
            kind: EnvKind::PredatorPrey,
            n_agents,
            grid_dim,
            episode_length: 100,
            seed: 0,
            vision: 2,
            n_prey: n_agents,
            capture_reward: 10.0,
            lone_capture_penalty: -0.5,
            step_penalty: -0.05,
            prey_flee_prob: 0.7,
            collision_penalty: -10.0,
            time_penalty_coef: -0.01,
            add_rate_max: 0.05,
            add_rate_min: 0.02,
        }
    }

    pub fn traffic_junction(n_agents: usize, grid_dim: usize) -> Self {
        EnvConfig {
            kind: EnvKind::TrafficJunction,
            n_agents,
            grid_dim,
            episode_length: 80,
            seed: 0,
            vision: 1,
            n_prey: 0,
            capture_reward: 10.0,
            lone_capture_penalty: -0.5,
            step_penalty: -0.05,
            prey_flee_prob: 0.7,
            collision_penalty: -10.0,
            time_penalty_coef: -0.01,
            add_rate_max: 0.05,
            add_rate_min: 0.02,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_agents(mut self, n: usize) -> Self {
        if self.kind == EnvKind::PredatorPrey && self.n_prey == self.n_agents {
            self.n_prey = n;
        }
        self.n_agents = n;
        self
    }

    /// Largest supported agent count for this kind and grid.
    pub fn capacity(&self) -> usize {
        match self.kind {
            EnvKind::PredatorPrey => (self.grid_dim * self.grid_dim) / 5,
            EnvKind::TrafficJunction => 20,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_agents == 0 {
            return Err(EnvError::Config("n_agents must be positive".into()));
        }
        if self.grid_dim < 5 {
            return Err(EnvError::Config("grid_dim must be at least 5".into()));
        }
        if self.episode_length == 0 {
            return Err(EnvError::Config("episode_length must be positive".into()));
        }
        let cap = self.capacity();
        if self.n_agents > cap {
            return Err(EnvError::Capacity {
                kind: self.kind,
                capacity: cap,
                requested: self.n_agents,
            });
        }
        match self.kind {
            EnvKind::PredatorPrey => {
                let cells = self.grid_dim * self.grid_dim;
                if self.n_agents + self.n_prey > cells {
                    return Err(EnvError::Config(format!(
                        "{} predators + {} prey exceed {} grid cells",
                        self.n_agents, self.n_prey, cells
                    )));
                }
                if !(0.0..=1.0).contains(&self.prey_flee_prob) {
                    return Err(EnvError::Config("prey_flee_prob must be in [0,1]".into()));
                }
            }
            EnvKind::TrafficJunction => {
                if !(0.0..=1.0).contains(&self.add_rate_max)
                    || !(0.0..=1.0).contains(&self.add_rate_min)
                    || self.add_rate_min > self.add_rate_max
                {
                    return Err(EnvError::Config(
                        "add rates must satisfy 0 <= min <= max <= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-step bookkeeping surfaced alongside rewards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    /// Prey captured this step.
    pub captures: usize,
    /// Lone-predator capture attempts this step.
    pub lone_attempts: usize,
    /// Cars standing on a shared cell this step.
    pub collisions: usize,
    /// Set on the final step: episode-level success.
    pub success: Option<bool>,
}

/// One transition: observations for every agent, per-agent rewards, and a
/// terminal flag. Observation row count always equals the agent count.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub observations: Tensor,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
}

/// The two environments behind one dispatch surface.
pub enum Env {
    PredatorPrey(PredatorPreyEnv),
    TrafficJunction(TrafficJunctionEnv),
}

impl Env {
    /// Validate the config and build a fresh environment. The first episode
    /// starts only after [`Env::reset`].
    pub fn new(config: &EnvConfig) -> Result<Env, EnvError> {
        config.validate()?;
        Ok(match config.kind {
            EnvKind::PredatorPrey => Env::PredatorPrey(PredatorPreyEnv::new(config)),
            EnvKind::TrafficJunction => Env::TrafficJunction(TrafficJunctionEnv::new(config)),
        })
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            Env::PredatorPrey(_) => EnvKind::PredatorPrey,
            Env::TrafficJunction(_) => EnvKind::TrafficJunction,
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            Env::PredatorPrey(e) => e.n_agents(),
            Env::TrafficJunction(e) => e.n_agents(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::PredatorPrey(e) => e.obs_dim(),
            Env::TrafficJunction(e) => e.obs_dim(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Env::PredatorPrey(_) => predator_prey::N_ACTIONS,
            Env::TrafficJunction(_) => traffic_junction::N_ACTIONS,
        }
    }

    /// Start a new episode, drawing placements from the env's seed stream.
    pub fn reset(&mut self) -> Tensor {
        match self {
            Env::PredatorPrey(e) => e.reset(),
            Env::TrafficJunction(e) => e.reset(),
        }
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        match self {
            Env::PredatorPrey(e) => e.step(actions),
            Env::TrafficJunction(e) => e.step(actions),
        }
    }

    pub fn observe(&self) -> Tensor {
        match self {
            Env::PredatorPrey(e) => e.observe(),
            Env::TrafficJunction(e) => e.observe(),
        }
    }

    /// Override the car arrival probability (training curriculum); no-op for
    /// predator-prey.
    pub fn set_add_rate(&mut self, p: f64) {
        if let Env::TrafficJunction(e) = self {
            e.set_add_rate(p);
        }
    }

    /// One line of debug trace: agent positions this step.
    pub fn position_line(&self) -> String {
        match self {
            Env::PredatorPrey(e) => e.position_line(),
            Env::TrafficJunction(e) => e.position_line(),
        }
    }
}

/// Obs dimensionality for a config without building the env.
pub fn observation_dim(config: &EnvConfig) -> usize {
    match config.kind {
        EnvKind::PredatorPrey => predator_prey::obs_dim(config.vision),
        EnvKind::TrafficJunction => traffic_junction::obs_dim_for(config),
    }
}

pub(crate) fn action_count(kind: EnvKind) -> usize {
    match kind {
        EnvKind::PredatorPrey => predator_prey::N_ACTIONS,
        EnvKind::TrafficJunction => traffic_junction::N_ACTIONS,
    }
}
