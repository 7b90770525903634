//! Cars on fixed routes through shared junctions. Each car either advances
//! one cell along its route (gas) or holds (brake); two cars on one cell is
//! a collision, which penalizes both and marks the episode failed but does
//! not end it.
//!
//! Geometry: two-way roads two cells wide. Grids of 12+ cells get two roads
//! per axis (four junctions, eight entry points); smaller grids get one road
//! per axis (one junction, four entries). Routes go straight except for at
//! most one turn, chosen when the car spawns.

use super::{EnvConfig, EnvError, StepInfo, StepResult};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N_ACTIONS: usize = 2;
pub const GAS: usize = 0;
pub const BRAKE: usize = 1;

const OCCUPANCY_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    East,
    West,
    South,
    North,
}

impl Dir {
    fn delta(self) -> (i32, i32) {
        match self {
            Dir::East => (0, 1),
            Dir::West => (0, -1),
            Dir::South => (1, 0),
            Dir::North => (-1, 0),
        }
    }

    fn left(self) -> Dir {
        match self {
            Dir::East => Dir::North,
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
        }
    }

    fn right(self) -> Dir {
        match self {
            Dir::East => Dir::South,
            Dir::South => Dir::West,
            Dir::West => Dir::North,
            Dir::North => Dir::East,
        }
    }
}

#[derive(Debug, Clone)]
struct Route {
    cells: Vec<(i32, i32)>,
}

#[derive(Debug)]
struct Geometry {
    dim: usize,
    /// Top row of each horizontal road pair (rows r, r+1).
    row_roads: Vec<usize>,
    /// Left column of each vertical road pair (cols c, c+1).
    col_roads: Vec<usize>,
    routes: Vec<Route>,
    /// Route ids grouped by entry point, in entry order.
    per_entry: Vec<Vec<usize>>,
    /// Entry cell of each entry point.
    entry_cells: Vec<(i32, i32)>,
}

/// Lane assignment within a two-cell road pair: the first row/column carries
/// east/south traffic, the second west/north.
fn lane_of(dir: Dir, pair_top: usize) -> usize {
    match dir {
        Dir::East | Dir::South => pair_top,
        Dir::West | Dir::North => pair_top + 1,
    }
}

fn build_geometry(dim: usize) -> Geometry {
    let roads_per_axis = if dim >= 12 { 2 } else { 1 };
    let positions: Vec<usize> = if roads_per_axis == 2 {
        vec![dim / 3, (2 * dim) / 3]
    } else {
        vec![(dim - 1) / 2]
    };
    let row_roads = positions.clone();
    let col_roads = positions;

    // entry points: one per lane per road, at the edge the lane enters from
    let mut entries: Vec<((i32, i32), Dir, usize)> = Vec::new(); // (cell, dir, own pair top)
    for &r in &row_roads {
        entries.push(((lane_of(Dir::East, r) as i32, 0), Dir::East, r));
        entries.push((
            (lane_of(Dir::West, r) as i32, dim as i32 - 1),
            Dir::West,
            r,
        ));
    }
    for &c in &col_roads {
        entries.push(((0, lane_of(Dir::South, c) as i32), Dir::South, c));
        entries.push((
            (dim as i32 - 1, lane_of(Dir::North, c) as i32),
            Dir::North,
            c,
        ));
    }

    let crossing_pairs = |dir: Dir| -> Vec<usize> {
        // road pairs perpendicular to the travel direction, in travel order
        let mut pairs = match dir {
            Dir::East | Dir::West => col_roads.clone(),
            Dir::South | Dir::North => row_roads.clone(),
        };
        if matches!(dir, Dir::West | Dir::North) {
            pairs.reverse();
        }
        pairs
    };

    let walk = |start: (i32, i32), dir: Dir, turn: Option<(usize, Dir)>| -> Vec<(i32, i32)> {
        let mut cells = vec![start];
        let mut pos = start;
        let mut d = dir;
        // the turn happens where the current lane meets the target lane
        let switch = turn.map(|(pair_top, nd)| {
            let cur_lane = match dir {
                Dir::East | Dir::West => start.0,
                Dir::South | Dir::North => start.1,
            };
            match dir {
                Dir::East | Dir::West => (cur_lane, lane_of(nd, pair_top) as i32),
                Dir::South | Dir::North => (lane_of(nd, pair_top) as i32, cur_lane),
            }
        });
        loop {
            if Some(pos) == switch {
                d = turn.unwrap().1;
            }
            let (dr, dc) = d.delta();
            let next = (pos.0 + dr, pos.1 + dc);
            if next.0 < 0 || next.0 >= dim as i32 || next.1 < 0 || next.1 >= dim as i32 {
                break;
            }
            pos = next;
            cells.push(pos);
        }
        cells
    };

    let mut routes = Vec::new();
    let mut per_entry = Vec::new();
    let mut entry_cells = Vec::new();
    for &(cell, dir, _own_pair) in &entries {
        let mut ids = Vec::new();
        // straight through
        ids.push(routes.len());
        routes.push(Route {
            cells: walk(cell, dir, None),
        });
        // one turn at each crossing road pair
        for &pair_top in &crossing_pairs(dir) {
            for nd in [dir.left(), dir.right()] {
                ids.push(routes.len());
                routes.push(Route {
                    cells: walk(cell, dir, Some((pair_top, nd))),
                });
            }
        }
        per_entry.push(ids);
        entry_cells.push(cell);
    }

    Geometry {
        dim,
        row_roads,
        col_roads,
        routes,
        per_entry,
        entry_cells,
    }
}

pub fn obs_dim_for(cfg: &EnvConfig) -> usize {
    let g = build_geometry(cfg.grid_dim);
    2 + g.routes.len() + OCCUPANCY_WINDOW * OCCUPANCY_WINDOW + 1
}

#[derive(Debug, Clone, Copy, Default)]
struct Car {
    active: bool,
    route: usize,
    pos: usize,
    time_in_system: u32,
}

pub struct TrafficJunctionEnv {
    cfg: EnvConfig,
    geo: Geometry,
    rng: ChaCha8Rng,
    cars: Vec<Car>,
    step_index: usize,
    add_rate: f64,
    collision_happened: bool,
    done: bool,
}

impl TrafficJunctionEnv {
    pub(super) fn new(cfg: &EnvConfig) -> Self {
        TrafficJunctionEnv {
            cfg: cfg.clone(),
            geo: build_geometry(cfg.grid_dim),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cars: vec![Car::default(); cfg.n_agents],
            step_index: 0,
            add_rate: cfg.add_rate_min,
            collision_happened: false,
            done: true,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.cfg.n_agents
    }

    pub fn obs_dim(&self) -> usize {
        2 + self.geo.routes.len() + OCCUPANCY_WINDOW * OCCUPANCY_WINDOW + 1
    }

    pub fn n_routes(&self) -> usize {
        self.geo.routes.len()
    }

    pub fn set_add_rate(&mut self, p: f64) {
        self.add_rate = p.clamp(0.0, 1.0);
    }

    pub fn add_rate(&self) -> f64 {
        self.add_rate
    }

    pub fn active_cars(&self) -> usize {
        self.cars.iter().filter(|c| c.active).count()
    }

    pub fn collision_happened(&self) -> bool {
        self.collision_happened
    }

    pub fn car_states(&self) -> Vec<(bool, (i32, i32), u32)> {
        self.cars
            .iter()
            .map(|c| {
                let pos = if c.active {
                    self.geo.routes[c.route].cells[c.pos]
                } else {
                    (-1, -1)
                };
                (c.active, pos, c.time_in_system)
            })
            .collect()
    }

    /// Empty roads: no active cars, no collision recorded. Cars start
    /// arriving from the first step.
    pub fn reset(&mut self) -> Tensor {
        self.cars = vec![Car::default(); self.cfg.n_agents];
        self.step_index = 0;
        self.collision_happened = false;
        self.done = false;
        self.observe()
    }

    fn spawn_cars(&mut self) {
        for entry in 0..self.geo.entry_cells.len() {
            if self.active_cars() >= self.cfg.n_agents {
                break;
            }
            let cell = self.geo.entry_cells[entry];
            let occupied = self.cars.iter().any(|c| {
                c.active && self.geo.routes[c.route].cells[c.pos] == cell
            });
            if occupied {
                continue;
            }
            if self.rng.gen::<f64>() < self.add_rate {
                let options = &self.geo.per_entry[entry];
                let route = options[self.rng.gen_range(0..options.len())];
                if let Some(slot) = self.cars.iter_mut().find(|c| !c.active) {
                    *slot = Car {
                        active: true,
                        route,
                        pos: 0,
                        time_in_system: 0,
                    };
                }
            }
        }
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

        let mut rewards = vec![0.0; self.cfg.n_agents];
        let mut info = StepInfo::default();

        // advance cars; reaching the route end leaves the system
        for (i, car) in self.cars.iter_mut().enumerate() {
            if !car.active {
                continue;
            }
            car.time_in_system += 1;
            if actions[i] == GAS {
                car.pos += 1;
                if car.pos >= self.geo.routes[car.route].cells.len() {
                    *car = Car::default();
                    continue;
                }
            }
        }

        // collision: any two active cars sharing a cell
        let mut occupancy: Vec<((i32, i32), usize)> = Vec::new();
        for car in self.cars.iter().filter(|c| c.active) {
            let cell = self.geo.routes[car.route].cells[car.pos];
            match occupancy.iter_mut().find(|(c, _)| *c == cell) {
                Some((_, k)) => *k += 1,
                None => occupancy.push((cell, 1)),
            }
        }
        for (i, car) in self.cars.iter().enumerate() {
            if !car.active {
                continue;
            }
            let cell = self.geo.routes[car.route].cells[car.pos];
            let k = occupancy.iter().find(|(c, _)| *c == cell).unwrap().1;
            if k >= 2 {
                rewards[i] += self.cfg.collision_penalty;
                info.collisions += 1;
                self.collision_happened = true;
            }
            rewards[i] += self.cfg.time_penalty_coef * car.time_in_system as f64;
        }

        self.step_index += 1;
        self.done = self.step_index >= self.cfg.episode_length;
        if self.done {
            info.success = Some(!self.collision_happened);
        } else {
            self.spawn_cars();
        }

        Ok(StepResult {
            observations: self.observe(),
            rewards,
            done: self.done,
            info,
        })
    }

    /// Row per car: normalized position, route one-hot, 3x3 occupancy of
    /// other cars, active flag. Inactive cars observe all zeros.
    pub fn observe(&self) -> Tensor {
        let d = self.obs_dim();
        let n_routes = self.geo.routes.len();
        let denom = (self.geo.dim - 1).max(1) as f64;
        let mut data = vec![0.0; self.cfg.n_agents * d];

        let positions: Vec<Option<(i32, i32)>> = self
            .cars
            .iter()
            .map(|c| c.active.then(|| self.geo.routes[c.route].cells[c.pos]))
            .collect();

        for (i, car) in self.cars.iter().enumerate() {
            if !car.active {
                continue;
            }
            let row = &mut data[i * d..(i + 1) * d];
            let (r, c) = positions[i].unwrap();
            row[0] = r as f64 / denom;
            row[1] = c as f64 / denom;
            row[2 + car.route] = 1.0;
            let base = 2 + n_routes;
            for (j, pos) in positions.iter().enumerate() {
                if j == i {
                    continue;
                }
                if let Some((orow, ocol)) = pos {
                    let (dr, dc) = (orow - r, ocol - c);
                    if dr.abs() <= 1 && dc.abs() <= 1 {
                        let w = ((dr + 1) as usize) * OCCUPANCY_WINDOW + (dc + 1) as usize;
                        row[base + w] += 1.0;
                    }
                }
            }
            row[d - 1] = 1.0;
        }
        Tensor::new(vec![self.cfg.n_agents, d], data)
    }

    pub fn position_line(&self) -> String {
        let cars: Vec<String> = self
            .cars
            .iter()
            .map(|c| {
                if c.active {
                    let (r, col) = self.geo.routes[c.route].cells[c.pos];
                    format!("{r}:{col}:t{}", c.time_in_system)
                } else {
                    "-".to_string()
                }
            })
            .collect();
        format!("cars={}", cars.join(";"))
    }
}
