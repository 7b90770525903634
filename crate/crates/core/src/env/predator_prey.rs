//! Predators hunt scripted prey on a square grid. A prey is captured when at
//! least two predators stand on its cell in the same step; a predator alone
//! on a live prey's cell is penalized for the solo attempt.

use super::{EnvConfig, EnvError, StepInfo, StepResult};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N_ACTIONS: usize = 5;

/// Action deltas in index order: up, down, left, right, stay.
const MOVES: [(i32, i32); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

/// Candidate order for prey decisions: stay first, then the four moves.
const PREY_CANDIDATES: [(i32, i32); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

pub fn obs_dim(vision: usize) -> usize {
    let window = 2 * vision + 1;
    3 * window * window + 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Prey {
    row: i32,
    col: i32,
    alive: bool,
}

pub struct PredatorPreyEnv {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    predators: Vec<(i32, i32)>,
    prey: Vec<Prey>,
    step_index: usize,
    done: bool,
}

impl PredatorPreyEnv {
    pub(super) fn new(cfg: &EnvConfig) -> Self {
        PredatorPreyEnv {
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            predators: Vec::new(),
            prey: Vec::new(),
            step_index: 0,
            done: true,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    pub fn obs_dim(&self) -> usize {
        obs_dim(self.cfg.vision)
    }

    pub fn predators(&self) -> &[(i32, i32)] {
        &self.predators
    }

    pub fn prey_states(&self) -> Vec<(i32, i32, bool)> {
        self.prey.iter().map(|p| (p.row, p.col, p.alive)).collect()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Place predators and prey on distinct cells uniformly at random.
    pub fn reset(&mut self) -> Tensor {
        let g = self.cfg.grid_dim;
        let total = self.cfg.n_agents + self.cfg.n_prey;
        let mut cells: Vec<usize> = (0..g * g).collect();
        // partial Fisher-Yates: the first `total` entries become the draw
        for i in 0..total {
            let j = self.rng.gen_range(i..cells.len());
            cells.swap(i, j);
        }
        self.predators = cells[..self.cfg.n_agents]
            .iter()
            .map(|&c| ((c / g) as i32, (c % g) as i32))
            .collect();
        self.prey = cells[self.cfg.n_agents..total]
            .iter()
            .map(|&c| Prey {
                row: (c / g) as i32,
                col: (c % g) as i32,
                alive: true,
            })
            .collect();
        self.step_index = 0;
        self.done = false;
        self.observe()
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        if actions.len() != self.cfg.n_agents {
            return Err(EnvError::ActionCount {
                expected: self.cfg.n_agents,
                got: actions.len(),
            });
        }
        for (agent, &a) in actions.iter().enumerate() {
            if a >= N_ACTIONS {
                return Err(EnvError::InvalidAction {
                    agent,
                    action: a,
                    n_actions: N_ACTIONS,
                });
            }
        }

        let g = self.cfg.grid_dim as i32;

        // predators move simultaneously; off-grid moves become stay
        for (i, &a) in actions.iter().enumerate() {
            let (dr, dc) = MOVES[a];
            let (r, c) = self.predators[i];
            let (nr, nc) = (r + dr, c + dc);
            if nr >= 0 && nr < g && nc >= 0 && nc < g {
                self.predators[i] = (nr, nc);
            }
        }

        // prey move by script: mostly flee the nearest predator, else wander
        for pi in 0..self.prey.len() {
            if !self.prey[pi].alive {
                continue;
            }
            let (r, c) = (self.prey[pi].row, self.prey[pi].col);
            let flee: f64 = self.rng.gen();
            let (nr, nc) = if flee < self.cfg.prey_flee_prob {
                let mut best = (r, c);
                let mut best_dist = -1i32;
                for (dr, dc) in PREY_CANDIDATES {
                    let (tr, tc) = (r + dr, c + dc);
                    if tr < 0 || tr >= g || tc < 0 || tc >= g {
                        continue;
                    }
                    let dist = self
                        .predators
                        .iter()
                        .map(|&(pr, pc)| (pr - tr).abs() + (pc - tc).abs())
                        .min()
                        .unwrap_or(0);
                    if dist > best_dist {
                        best_dist = dist;
                        best = (tr, tc);
                    }
                }
                best
            } else {
                let legal: Vec<(i32, i32)> = PREY_CANDIDATES
                    .iter()
                    .map(|&(dr, dc)| (r + dr, c + dc))
                    .filter(|&(tr, tc)| tr >= 0 && tr < g && tc >= 0 && tc < g)
                    .collect();
                legal[self.rng.gen_range(0..legal.len())]
            };
            self.prey[pi].row = nr;
            self.prey[pi].col = nc;
        }

        // capture resolution on post-move positions
        let mut rewards = vec![self.cfg.step_penalty; self.cfg.n_agents];
        let mut info = StepInfo::default();
        for prey in &mut self.prey {
            if !prey.alive {
                continue;
            }
            let here: Vec<usize> = self
                .predators
                .iter()
                .enumerate()
                .filter(|(_, &(r, c))| r == prey.row && c == prey.col)
                .map(|(i, _)| i)
                .collect();
            match here.len() {
                0 => {}
                1 => {
                    rewards[here[0]] += self.cfg.lone_capture_penalty;
                    info.lone_attempts += 1;
                }
                _ => {
                    prey.alive = false;
                    info.captures += 1;
                    for &i in &here {
                        rewards[i] += self.cfg.capture_reward;
                    }
                }
            }
        }

        self.step_index += 1;
        let all_captured = self.prey.iter().all(|p| !p.alive);
        self.done = self.step_index >= self.cfg.episode_length || all_captured;
        if self.done {
            info.success = Some(all_captured);
        }

        Ok(StepResult {
            observations: self.observe(),
            rewards,
            done: self.done,
            info,
        })
    }

    /// Egocentric window with predator/prey/wall planes plus normalized
    /// own coordinates. Cells outside the grid read as wall.
    pub fn observe(&self) -> Tensor {
        let v = self.cfg.vision as i32;
        let window = (2 * v + 1) as usize;
        let plane = window * window;
        let d = self.obs_dim();
        let g = self.cfg.grid_dim as i32;
        let denom = (self.cfg.grid_dim - 1).max(1) as f64;

        let mut data = vec![0.0; self.cfg.n_agents * d];
        for (i, &(r, c)) in self.predators.iter().enumerate() {
            let row = &mut data[i * d..(i + 1) * d];
            for dr in -v..=v {
                for dc in -v..=v {
                    let (tr, tc) = (r + dr, c + dc);
                    let w = ((dr + v) as usize) * window + (dc + v) as usize;
                    if tr < 0 || tr >= g || tc < 0 || tc >= g {
                        row[2 * plane + w] = 1.0;
                        continue;
                    }
                    let preds = self
                        .predators
                        .iter()
                        .enumerate()
                        .filter(|&(j, &(pr, pc))| j != i && pr == tr && pc == tc)
                        .count();
                    row[w] = preds as f64;
                    let prey = self
                        .prey
                        .iter()
                        .filter(|p| p.alive && p.row == tr && p.col == tc)
                        .count();
                    row[plane + w] = prey as f64;
                }
            }
            row[3 * plane] = r as f64 / denom;
            row[3 * plane + 1] = c as f64 / denom;
        }
        Tensor::new(vec![self.cfg.n_agents, d], data)
    }

    pub fn position_line(&self) -> String {
        let preds: Vec<String> = self
            .predators
            .iter()
            .map(|&(r, c)| format!("{r}:{c}"))
            .collect();
        let prey: Vec<String> = self
            .prey
            .iter()
            .map(|p| format!("{}:{}:{}", p.row, p.col, u8::from(p.alive)))
            .collect();
        format!("pred={} prey={}", preds.join(";"), prey.join(";"))
    }
}
