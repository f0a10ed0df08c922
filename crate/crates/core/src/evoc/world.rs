use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{chain_fitness_in, extend_or_mutate, top_k, Chain};
use crate::focus::{self, update_reactivity, CfMode};
use crate::gesture::{Action, Fitness, Landscape, OPTIMUM};

use super::agent::{Agent, InventMode, QTable};
use super::config::{Cell, ConfigError, WorldConfig};
use super::metrics::MetricsRecord;

/// Notable occurrences during a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldEvent {
    /// An imitating agent had nobody to look at.
    Isolated { iteration: u64, agent: usize },
    LandscapeShift { iteration: u64 },
}

/// Seed salt for the landscape permutation stream, so that shifts are the
/// same for every mode run on one seed.
const SHIFT_SALT: u64 = 0x5eed_0f_1a4d;

/// A toroidal lattice of agents.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    agents: Vec<Agent>,
    occupancy: Vec<Option<usize>>,
    blocked: HashSet<(usize, usize)>,
    /// Precomputed visible agents (lattice neighbours plus leaders).
    visible: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
    shift_rng: ChaCha8Rng,
    landscape: Landscape,
    iteration: u64,
    events: Vec<WorldEvent>,
}

fn edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl World {
    /// Places agents by seed; everyone starts at rest with baseline α.
    pub fn new(config: WorldConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<usize> = (0..config.cells()).collect();
        cells.shuffle(&mut rng);
        let mut chosen: Vec<usize> = cells[..config.population()].to_vec();
        chosen.sort_unstable();
        let placements: Vec<(Cell, Chain)> = chosen
            .into_iter()
            .map(|c| ([c % config.width, c / config.width], Chain::single(Action::REST)))
            .collect();
        Self::assemble(config, rng, seed, placements)
    }

    /// Builds a world with agents at explicit cells holding explicit ideas.
    /// Agent ids follow the order of `placements`.
    pub fn scripted(config: WorldConfig, seed: u64, placements: Vec<(Cell, Chain)>) -> Result<Self, ConfigError> {
        let mut probe = config.clone();
        probe.density = 1.0;
        probe.validate()?;
        let mut seen = HashSet::new();
        for (cell, _) in &placements {
            if cell[0] >= config.width || cell[1] >= config.height || !seen.insert(*cell) {
                return Err(ConfigError::invalid("placements", format!("bad or duplicate cell {cell:?}")));
            }
        }
        if let Some(&bad) = config.leaders.iter().find(|&&id| id >= placements.len()) {
            return Err(ConfigError::invalid("world.leaders", format!("agent id {bad} out of range")));
        }
        let rng = ChaCha8Rng::seed_from_u64(seed);
        Self::assemble(config, rng, seed, placements)
    }

    fn assemble(config: WorldConfig, mut rng: ChaCha8Rng, seed: u64, placements: Vec<(Cell, Chain)>) -> Result<Self, ConfigError> {
        let n = placements.len();
        let creators: BTreeSet<usize> = match config.creator_fraction {
            Some(f) => {
                let mut ids: Vec<usize> = (0..n).collect();
                ids.shuffle(&mut rng);
                let k = (f * n as f64).round() as usize;
                ids.into_iter().take(k).collect()
            }
            None => BTreeSet::new(),
        };
        let mut occupancy = vec![None; config.cells()];
        let agents: Vec<Agent> = placements
            .into_iter()
            .enumerate()
            .map(|(id, (cell, chain))| {
                occupancy[cell[1] * config.width + cell[0]] = Some(id);
                let is_creator = creators.contains(&id);
                let p_create = match config.creator_fraction {
                    Some(_) => {
                        if is_creator {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    None => config.p_create,
                };
                Agent {
                    id,
                    cell,
                    current: chain,
                    q: QTable::default(),
                    alpha: config.cf.alpha0,
                    p_create,
                    is_creator,
                    is_leader: config.leaders.contains(&id),
                }
            })
            .collect();

        let w = config.width;
        let h = config.height;
        let idx = |x: usize, y: usize| y * w + x;
        let mut blocked = HashSet::new();
        for [a, b] in &config.borders {
            blocked.insert(edge(idx(a[0], a[1]), idx(b[0], b[1])));
        }
        for &col in &config.wall_columns {
            let west = (col + w - 1) % w;
            for y in 0..h {
                blocked.insert(edge(idx(west, y), idx(col, y)));
            }
        }
        for &row in &config.wall_rows {
            let north = (row + h - 1) % h;
            for x in 0..w {
                blocked.insert(edge(idx(x, north), idx(x, row)));
            }
        }

        let mut world = World {
            shift_rng: ChaCha8Rng::seed_from_u64(seed ^ SHIFT_SALT),
            config,
            agents,
            occupancy,
            blocked,
            visible: Vec::new(),
            rng,
            landscape: Landscape::default(),
            iteration: 0,
            events: Vec::new(),
        };
        world.visible = (0..world.agents.len()).map(|id| world.compute_visible(id)).collect();
        Ok(world)
    }

    fn cell_index(&self, c: Cell) -> usize {
        c[1] * self.config.width + c[0]
    }

    /// The von Neumann neighbour cells of `c` on the torus.
    pub fn neighbour_cells(&self, c: Cell) -> [Cell; 4] {
        let w = self.config.width;
        let h = self.config.height;
        [
            [(c[0] + w - 1) % w, c[1]],
            [(c[0] + 1) % w, c[1]],
            [c[0], (c[1] + h - 1) % h],
            [c[0], (c[1] + 1) % h],
        ]
    }

    /// Whether a border separates two adjacent cells.
    pub fn is_blocked(&self, a: Cell, b: Cell) -> bool {
        self.blocked.contains(&edge(self.cell_index(a), self.cell_index(b)))
    }

    fn compute_visible(&self, id: usize) -> Vec<usize> {
        let cell = self.agents[id].cell;
        let mut out = BTreeSet::new();
        for n in self.neighbour_cells(cell) {
            if n == cell || self.is_blocked(cell, n) {
                continue;
            }
            if let Some(other) = self.occupancy[self.cell_index(n)] {
                if other != id {
                    out.insert(other);
                }
            }
        }
        for &leader in &self.config.leaders {
            if leader != id {
                out.insert(leader);
            }
        }
        out.into_iter().collect()
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent_mut(&mut self, id: usize) -> &mut Agent {
        &mut self.agents[id]
    }

    /// Agents an agent can see, in id order.
    pub fn visible(&self, id: usize) -> &[usize] {
        &self.visible[id]
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn landscape(&self) -> &Landscape {
        &self.landscape
    }

    pub fn set_landscape(&mut self, l: Landscape) {
        self.landscape = l;
    }

    pub fn drain_events(&mut self) -> Vec<WorldEvent> {
        std::mem::take(&mut self.events)
    }

    /// Composes the landscape with a fresh permutation from the shift stream.
    pub fn shift_landscape(&mut self) {
        self.landscape = focus::random_shift(&self.landscape, &mut self.shift_rng);
        self.events.push(WorldEvent::LandscapeShift { iteration: self.iteration });
    }

    pub fn fitness_of(&self, c: &Chain) -> Fitness {
        chain_fitness_in(c, &self.landscape)
    }

    fn fitness_table(&self) -> Vec<f64> {
        self.agents.iter().map(|a| self.fitness_of(&a.current).0).collect()
    }

    /// The idea an agent would adopt by imitation, given everyone's current
    /// fitness. Returns `None` when the agent sees nobody.
    fn imitation_candidate(&self, id: usize, fitness: &[f64]) -> Option<Chain> {
        let visible = &self.visible[id];
        if visible.is_empty() {
            return None;
        }
        let mut best = visible[0];
        for &other in &visible[1..] {
            if fitness[other] > fitness[best] {
                best = other;
            }
        }
        Some(if fitness[best] > fitness[id] {
            self.agents[best].current.clone()
        } else {
            self.agents[id].current.clone()
        })
    }

    /// Best strictly-fitter visible idea, or the agent's own.
    pub fn imitate(&self, id: usize) -> Chain {
        let fitness = self.fitness_table();
        self.imitation_candidate(id, &fitness)
            .unwrap_or_else(|| self.agents[id].current.clone())
    }

    fn shifted(&self, agent: &Agent) -> bool {
        self.config.cf.mode != CfMode::Off && agent.alpha > self.config.cf.alpha0
    }

    /// Outside a focus shift agents invent associatively with the world's
    /// sharpness; a shifted agent uses the focus mode and its sharpness.
    fn invent_mode(&self, agent: &Agent) -> (InventMode, f64) {
        if !self.shifted(agent) {
            return (InventMode::Associative, self.config.beta);
        }
        match self.config.cf.mode {
            CfMode::Divergent => (InventMode::Divergent, self.config.cf.beta),
            _ => (InventMode::Associative, self.config.cf.beta),
        }
    }

    fn invention_candidate(&self, id: usize, rng: &mut ChaCha8Rng) -> Chain {
        let agent = &self.agents[id];
        let (mode, beta) = self.invent_mode(agent);
        if self.config.rr.enabled {
            extend_or_mutate(&agent.current, &self.config.rr, rng, |a, r| agent.invent(a, mode, beta, r))
        } else {
            Chain::single(agent.invent(agent.current.first(), mode, beta, rng))
        }
    }

    /// One synchronous iteration: every agent chooses from the pre-step
    /// state, then all adopt at once; learning and reactivity follow.
    pub fn step(&mut self) {
        let schedule = std::mem::take(&mut self.config.cf.shift_schedule);
        focus::landscape_shift(self, &schedule);
        self.config.cf.shift_schedule = schedule;

        let fitness = self.fitness_table();
        let mut rng = self.rng.clone();
        let mut next: Vec<Chain> = Vec::with_capacity(self.agents.len());
        for id in 0..self.agents.len() {
            let create = rng.random_bool(self.agents[id].p_create);
            let candidate = if create {
                let idea = self.invention_candidate(id, &mut rng);
                if self.config.mental_simulation && self.fitness_of(&idea).0 <= fitness[id] {
                    self.agents[id].current.clone()
                } else {
                    idea
                }
            } else {
                match self.imitation_candidate(id, &fitness) {
                    Some(c) => c,
                    None => {
                        self.events.push(WorldEvent::Isolated {
                            iteration: self.iteration + 1,
                            agent: id,
                        });
                        self.agents[id].current.clone()
                    }
                }
            };
            next.push(candidate);
        }
        self.rng = rng;

        if self.config.learning {
            let memory = self.config.learn_memory;
            let observed: Vec<Vec<(Action, Fitness)>> = (0..self.agents.len())
                .map(|id| {
                    std::iter::once(id)
                        .chain(self.visible[id].iter().copied())
                        .flat_map(|j| self.agents[j].current.steps().iter())
                        .map(|a| (*a, self.landscape.fitness(a)))
                        .collect()
                })
                .collect();
            for (agent, obs) in self.agents.iter_mut().zip(observed) {
                agent.learn(&obs, memory);
            }
        }

        for (agent, chain) in self.agents.iter_mut().zip(next) {
            agent.current = chain;
        }

        if self.config.cf.mode != CfMode::Off {
            let after = self.fitness_table();
            let mean = after.iter().sum::<f64>() / after.len() as f64;
            let policy = self.config.cf.clone();
            for (agent, f) in self.agents.iter_mut().zip(after) {
                agent.alpha = update_reactivity(agent.alpha, f, mean, &policy);
            }
        }
        self.iteration += 1;
    }

    /// Population summary of the current state.
    pub fn metrics(&self) -> MetricsRecord {
        let n = self.agents.len() as f64;
        let fitness = self.fitness_table();
        let distinct: HashSet<&Chain> = self.agents.iter().map(|a| &a.current).collect();
        MetricsRecord {
            iteration: self.iteration,
            mean_fitness: fitness.iter().sum::<f64>() / n,
            max_fitness: fitness.iter().copied().fold(0.0, f64::max),
            diversity: distinct.len(),
            complexity: self.agents.iter().map(|a| a.current.len() as f64).sum::<f64>() / n,
            mean_alpha: self.agents.iter().map(|a| a.alpha).sum::<f64>() / n,
            at_optimum: fitness.iter().filter(|&&f| f >= OPTIMUM).count() as f64 / n,
        }
    }

    /// The `k` fittest distinct ideas currently held.
    pub fn top_set(&self, k: usize) -> BTreeSet<Chain> {
        top_k(self.agents.iter().map(|a| &a.current), k, &self.landscape)
    }

    /// A serializable snapshot of every agent.
    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            iteration: self.iteration,
            landscape: self.landscape.clone(),
            agents: self.agents.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub iteration: u64,
    pub landscape: Landscape,
    pub agents: Vec<Agent>,
}

/// Builds a world from a config and seed.
pub fn init_world(config: WorldConfig, seed: u64) -> Result<World, ConfigError> {
    World::new(config, seed)
}

/// Advances a world by one iteration.
pub fn step(mut w: World) -> World {
    w.step();
    w
}

/// Metrics of the current state.
pub fn compute_metrics(w: &World) -> MetricsRecord {
    w.metrics()
}

/// Runs `config.iterations` steps and records metrics after each.
pub fn run(config: &WorldConfig, seed: u64) -> Result<Vec<MetricsRecord>, ConfigError> {
    let mut world = World::new(config.clone(), seed)?;
    let mut out = Vec::with_capacity(config.iterations as usize);
    for _ in 0..config.iterations {
        world.step();
        out.push(world.metrics());
    }
    Ok(out)
}

/// A run that also snapshots the top-k set at checkpoint intervals.
pub struct TrackedRun {
    pub metrics: Vec<MetricsRecord>,
    pub snapshots: Vec<(u64, BTreeSet<Chain>)>,
}

pub fn run_tracked(config: &WorldConfig, seed: u64) -> Result<TrackedRun, ConfigError> {
    let mut world = World::new(config.clone(), seed)?;
    let mut metrics = Vec::with_capacity(config.iterations as usize);
    let mut snapshots = Vec::new();
    for _ in 0..config.iterations {
        world.step();
        metrics.push(world.metrics());
        if world.iteration() % config.rr.checkpoint_interval == 0 {
            snapshots.push((world.iteration(), world.top_set(config.rr.top_k)));
        }
    }
    Ok(TrackedRun { metrics, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::optimal_set;

    fn cfg(w: usize, h: usize) -> WorldConfig {
        WorldConfig { width: w, height: h, ..Default::default() }
    }

    #[test]
    fn occupancy_matches_density() {
        let w = World::new(cfg(10, 10), 7).unwrap();
        assert_eq!(w.agents().len(), 100);
        assert_eq!(w.iteration(), 0);
        let half = World::new(WorldConfig { density: 0.5, ..cfg(10, 10) }, 7).unwrap();
        assert_eq!(half.agents().len(), 50);
        for a in half.agents() {
            assert_eq!(a.current, Chain::single(Action::REST));
            assert_eq!(a.alpha, 1.0 / 6.0);
            assert_eq!(a.q, QTable::default());
        }
    }

    #[test]
    fn neighbours_wrap_and_respect_walls() {
        let w = World::new(WorldConfig { wall_columns: vec![0], ..cfg(4, 4) }, 1).unwrap();
        // agent at x=0 cannot see x=3 across the wrap-around wall
        let id = w.agents().iter().find(|a| a.cell == [0, 1]).unwrap().id;
        let seen: Vec<Cell> = w.visible(id).iter().map(|&j| w.agents()[j].cell).collect();
        assert!(seen.contains(&[1, 1]));
        assert!(seen.contains(&[0, 0]));
        assert!(seen.contains(&[0, 2]));
        assert!(!seen.contains(&[3, 1]));
    }

    #[test]
    fn converged_population_is_stable_without_invention() {
        let opt = optimal_set()[0];
        let config = WorldConfig { p_create: 0.0, ..cfg(5, 5) };
        let placements = (0..25).map(|c| ([c % 5, c / 5], Chain::single(opt))).collect();
        let mut w = World::scripted(config, 3, placements).unwrap();
        for _ in 0..5 {
            w.step();
        }
        assert!(w.agents().iter().all(|a| a.current == Chain::single(opt)));
    }

    #[test]
    fn imitation_picks_lowest_id_among_ties() {
        let opt = optimal_set();
        let config = WorldConfig { p_create: 0.0, density: 3.0 / 9.0, ..cfg(3, 3) };
        // agent 0 and agent 2 both neighbour agent 1 and tie at 11
        let placements = vec![
            ([0, 0], Chain::single(opt[0])),
            ([1, 0], Chain::single(Action::REST)),
            ([2, 0], Chain::single(opt[1])),
        ];
        let w = World::scripted(config, 1, placements).unwrap();
        assert_eq!(w.imitate(1), Chain::single(opt[0]));
    }

    #[test]
    fn isolated_agent_keeps_its_idea() {
        let config = WorldConfig { p_create: 0.0, density: 1.0 / 9.0, ..cfg(3, 3) };
        let mut w = World::scripted(config, 1, vec![([1, 1], Chain::single(Action::REST))]).unwrap();
        w.step();
        assert_eq!(w.agents()[0].current, Chain::single(Action::REST));
        assert!(matches!(w.drain_events()[..], [WorldEvent::Isolated { agent: 0, .. }]));
    }
}
