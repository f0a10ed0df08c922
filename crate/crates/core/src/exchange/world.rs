use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evoc::{Cell, ConfigError};
use crate::scop::{candidate_contexts, waste_amplitude, Concept, ConceptNetwork};

use super::evaluate::{check_rating, evaluate_objects, rating_factor, Evaluator, RatingsReport};
use super::log::{state_cause, ExchangeEvent};
use super::object::{
    adjacent, extract, initial_state, join, validate_resources, web_edges, Bundle, IdSource, ObjectId, Resource,
    WorldObject,
};
use super::perspective::{assimilate, register_combination, restructure, utility_or_zero, Perspective};
use super::ExchangeError;

const WORLD_FIXTURE: &str = include_str!("../../fixtures/world.json");

/// Parameters of an exchange run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExchangeConfig {
    pub iterations: u64,
    /// Usefulness cut: an object is waste when `1 - U > threshold`.
    pub threshold: f64,
    pub max_iter: usize,
    pub window: usize,
    /// Activation added to a context per exposure.
    pub exposure_gain: f64,
    pub p_extract: f64,
    pub p_join: f64,
    pub p_transmit: f64,
    pub inventory_cap: usize,
    /// Maximum number of loose wastes; the oldest go first.
    pub waste_cap: usize,
    pub alpha0: f64,
    pub alpha_gain: f64,
    pub alpha_decay: f64,
    /// World fixture; the shipped one when unset.
    pub world: Option<String>,
    /// Concept seed file; the shipped one when unset.
    pub concepts: Option<String>,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        ExchangeConfig {
            iterations: 200,
            threshold: 0.5,
            max_iter: 20,
            window: 6,
            exposure_gain: 0.25,
            p_extract: 0.2,
            p_join: 0.05,
            p_transmit: 0.3,
            inventory_cap: 8,
            waste_cap: 200,
            alpha0: 0.1,
            alpha_gain: 0.2,
            alpha_decay: 0.9,
            world: None,
            concepts: None,
        }
    }
}

impl ExchangeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, "must lie in [0, 1]"))
            }
        };
        unit("exchange.threshold", self.threshold)?;
        unit("exchange.p_extract", self.p_extract)?;
        unit("exchange.p_join", self.p_join)?;
        unit("exchange.p_transmit", self.p_transmit)?;
        unit("exchange.alpha0", self.alpha0)?;
        unit("exchange.alpha_decay", self.alpha_decay)?;
        if self.max_iter == 0 {
            return Err(ConfigError::invalid("exchange.max_iter", "must be at least 1"));
        }
        if self.window < 2 {
            return Err(ConfigError::invalid("exchange.window", "must be at least 2"));
        }
        if !(self.exposure_gain > 0.0 && self.exposure_gain.is_finite()) {
            return Err(ConfigError::invalid("exchange.exposure_gain", "must be positive"));
        }
        if !(self.alpha_gain >= 0.0 && self.alpha_gain.is_finite()) {
            return Err(ConfigError::invalid("exchange.alpha_gain", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub cell: Cell,
    pub concepts: Vec<String>,
    #[serde(default)]
    pub contexts: Vec<String>,
}

/// Resources, agents and borders of an exchange world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFixture {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub resources: Vec<Resource>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub borders: Vec<[Cell; 2]>,
}

impl WorldFixture {
    pub fn from_json(text: &str) -> Result<Self, ExchangeError> {
        let f: WorldFixture = serde_json::from_str(text).map_err(|e| ExchangeError::Fixture(e.to_string()))?;
        if f.schema_version != 1 {
            return Err(ExchangeError::Fixture(format!("unsupported schema_version {}", f.schema_version)));
        }
        if f.width == 0 || f.height == 0 {
            return Err(ExchangeError::Fixture("grid must be at least 1x1".into()));
        }
        let on_grid = |c: &Cell| c[0] < f.width && c[1] < f.height;
        if !f.resources.iter().all(|r| on_grid(&r.cell)) || !f.agents.iter().all(|a| on_grid(&a.cell)) {
            return Err(ExchangeError::Fixture("a resource or agent is off the grid".into()));
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, ExchangeError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExchangeError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn shipped() -> Self {
        Self::from_json(WORLD_FIXTURE).expect("shipped world fixture is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeAgent {
    pub id: usize,
    pub cell: Cell,
    pub perspective: Perspective,
    pub inventory: Vec<ObjectId>,
    pub alpha: f64,
}

/// Population summary after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeMetrics {
    pub iteration: u64,
    pub objects: usize,
    pub loose_wastes: usize,
    pub waste_flagged: usize,
    pub mean_utility: f64,
    pub wastefulness: f64,
    pub diversity: usize,
    pub web_edges: usize,
    pub mean_alpha: f64,
    pub mean_active_contexts: f64,
    pub registrations: usize,
}

/// Where an object is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Held(usize),
    Loose(Cell),
}

/// An object as seen by the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: ObjectId,
    pub place: Place,
    pub concept: String,
    pub attributes: BTreeSet<String>,
    pub modal: String,
    pub utility: f64,
    pub waste_flag: bool,
}

/// The exchange network: agents with perspectives, resources, and the
/// objects and wastes moving between them.
#[derive(Debug, Clone)]
pub struct ExchangeWorld {
    config: ExchangeConfig,
    network: ConceptNetwork,
    width: usize,
    height: usize,
    resources: Vec<Resource>,
    blocked: BTreeSet<(Cell, Cell)>,
    agents: Vec<ExchangeAgent>,
    objects: BTreeMap<ObjectId, WorldObject>,
    places: BTreeMap<ObjectId, Place>,
    loose: VecDeque<ObjectId>,
    /// Judges loose wastes: knows every concept, activates nothing.
    public: Perspective,
    ids: IdSource,
    rng: ChaCha8Rng,
    iteration: u64,
    events: Vec<ExchangeEvent>,
    registrations: usize,
}

fn edge(a: Cell, b: Cell) -> (Cell, Cell) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl ExchangeWorld {
    /// Builds a world from the configured (or shipped) fixtures.
    pub fn from_config(config: ExchangeConfig, seed: u64) -> Result<Self, ExchangeError> {
        let network = match &config.concepts {
            Some(p) => ConceptNetwork::load(Path::new(p))?,
            None => ConceptNetwork::fixture(),
        };
        let fixture = match &config.world {
            Some(p) => WorldFixture::load(Path::new(p))?,
            None => WorldFixture::shipped(),
        };
        Self::new(config, network, fixture, seed)
    }

    pub fn new(
        config: ExchangeConfig,
        network: ConceptNetwork,
        fixture: WorldFixture,
        seed: u64,
    ) -> Result<Self, ExchangeError> {
        config.validate().map_err(|e| ExchangeError::Config(e.to_string()))?;
        let all: BTreeMap<String, Concept> = network.concepts.iter().map(|c| (c.name().to_string(), c.clone())).collect();
        validate_resources(&fixture.resources, &all)?;
        let mut agents = Vec::new();
        for (id, a) in fixture.agents.iter().enumerate() {
            let mut p = Perspective::new(id);
            for name in &a.concepts {
                let c = network
                    .get(name)
                    .ok_or_else(|| ExchangeError::Fixture(format!("agent {id} knows unknown concept `{name}`")))?;
                p.concepts.insert(name.clone(), c.clone());
            }
            for e in &a.contexts {
                p = p.activate(e);
            }
            agents.push(ExchangeAgent {
                id,
                cell: a.cell,
                perspective: p,
                inventory: Vec::new(),
                alpha: config.alpha0,
            });
        }
        let public = Perspective::new(usize::MAX).with_concepts(all.values());
        let events = vec![ExchangeEvent::RunStart {
            seed,
            agents: agents.len(),
            threshold: config.threshold,
        }];
        Ok(ExchangeWorld {
            network,
            width: fixture.width,
            height: fixture.height,
            resources: fixture.resources,
            blocked: fixture.borders.iter().map(|e| edge(e[0], e[1])).collect(),
            agents,
            objects: BTreeMap::new(),
            places: BTreeMap::new(),
            loose: VecDeque::new(),
            public,
            ids: IdSource::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            iteration: 0,
            events,
            registrations: 0,
            config,
        })
    }

    pub fn config(&self) -> &ExchangeConfig {
        &self.config
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn agents(&self) -> &[ExchangeAgent] {
        &self.agents
    }

    pub fn network(&self) -> &ConceptNetwork {
        &self.network
    }

    pub fn object(&self, id: ObjectId) -> Option<&WorldObject> {
        self.objects.get(&id)
    }

    pub fn place(&self, id: ObjectId) -> Option<Place> {
        self.places.get(&id).copied()
    }

    pub fn events(&self) -> &[ExchangeEvent] {
        &self.events
    }

    pub fn drain_events(&mut self) -> Vec<ExchangeEvent> {
        std::mem::take(&mut self.events)
    }

    fn judge(&self, id: ObjectId) -> &Perspective {
        match self.places.get(&id) {
            Some(Place::Held(a)) => &self.agents[*a].perspective,
            _ => &self.public,
        }
    }

    pub fn utility_of(&self, id: ObjectId) -> f64 {
        utility_or_zero(&self.objects[&id], self.judge(id))
    }

    fn refresh_flag(&mut self, id: ObjectId) {
        let u = self.utility_of(id);
        let t = self.config.threshold;
        if let Some(o) = self.objects.get_mut(&id) {
            o.waste_flag = 1.0 - u > t;
        }
    }

    /// Places an object in an agent's inventory, for scripted scenarios.
    pub fn give(&mut self, agent: usize, concept: &str, bundle: &Bundle) -> Result<ObjectId, ExchangeError> {
        let c = self
            .network
            .get(concept)
            .ok_or_else(|| ExchangeError::Fixture(format!("unknown concept `{concept}`")))?;
        let o = WorldObject {
            id: self.ids.next_id(),
            attributes: bundle.attributes.clone(),
            origin: super::object::Origin::Resource("scripted".into()),
            concept: concept.to_string(),
            state: initial_state(c, bundle)?,
            contexts_used: Vec::new(),
            waste_flag: false,
        };
        let id = o.id;
        self.objects.insert(id, o);
        self.places.insert(id, Place::Held(agent));
        self.agents[agent].inventory.push(id);
        self.refresh_flag(id);
        Ok(id)
    }

    fn held_utilities(&self, agent: usize) -> Vec<(ObjectId, f64)> {
        self.agents[agent]
            .inventory
            .iter()
            .map(|&id| (id, self.utility_of(id)))
            .collect()
    }

    /// Logs threshold crossings caused by a perspective change.
    fn crossings(&mut self, agent: usize, before: &[(ObjectId, f64)], cause: &str) {
        let t = self.config.threshold;
        for &(id, b) in before {
            if !self.objects.contains_key(&id) || self.places.get(&id) != Some(&Place::Held(agent)) {
                continue;
            }
            let a = self.utility_of(id);
            if b < t && a >= t {
                self.events.push(ExchangeEvent::UtilityCrossed {
                    iteration: self.iteration,
                    agent,
                    object: id,
                    before: b,
                    after: a,
                    cause: cause.to_string(),
                });
            }
            self.refresh_flag(id);
        }
    }

    /// Activates a context for an agent, bringing in the concepts that make
    /// it up.
    pub fn activate_context(&mut self, agent: usize, context: &str, cause: &str) {
        let before = self.held_utilities(agent);
        let members: Vec<String> = self
            .network
            .contexts
            .iter()
            .filter(|g| g.name == context)
            .flat_map(|g| g.members.iter().cloned())
            .collect();
        let a = self.agents[agent].perspective.activations.entry(context.to_string()).or_insert(0.0);
        *a = a.max(super::perspective::ACTIVE);
        self.events.push(ExchangeEvent::ContextActivated {
            iteration: self.iteration,
            agent,
            context: context.to_string(),
            cause: cause.to_string(),
        });
        self.bring_in(agent, &members);
        self.crossings(agent, &before, &format!("context:{context}"));
    }

    fn bring_in(&mut self, agent: usize, members: &[String]) {
        for m in members {
            if self.agents[agent].perspective.concepts.contains_key(m) {
                continue;
            }
            if let Some(c) = self.network.get(m) {
                self.agents[agent].perspective.concepts.insert(m.clone(), c.clone());
                self.events.push(ExchangeEvent::ConceptEntered {
                    iteration: self.iteration,
                    agent,
                    concept: m.clone(),
                });
            }
        }
    }

    fn expose(&mut self, agent: usize, context: &str, cause: &str) {
        let gain = self.config.exposure_gain;
        let before = self.held_utilities(agent);
        if self.agents[agent].perspective.expose(context, gain) {
            self.events.push(ExchangeEvent::ContextActivated {
                iteration: self.iteration,
                agent,
                context: context.to_string(),
                cause: cause.to_string(),
            });
            let members: Vec<String> = self
                .network
                .contexts
                .iter()
                .filter(|g| g.name == context)
                .flat_map(|g| g.members.iter().cloned())
                .collect();
            self.bring_in(agent, &members);
            self.crossings(agent, &before, &format!("context:{context}"));
        }
    }

    /// Restructures one object under its holder's (or the given agent's)
    /// perspective and handles any new-state registration.
    pub fn restructure_object(&mut self, agent: usize, id: ObjectId) -> Result<(), ExchangeError> {
        let o = self.objects.get(&id).ok_or(ExchangeError::UnknownObject { id })?.clone();
        let p = &self.agents[agent].perspective;
        if p.concept(&o.concept).is_none() {
            self.events.push(ExchangeEvent::Unconceptualized {
                iteration: self.iteration,
                agent,
                object: id,
                concept: o.concept.clone(),
            });
            return Ok(());
        }
        let (next, outcome) = restructure(&o, p, self.config.max_iter, self.config.window)?;
        self.events.push(ExchangeEvent::Restructure {
            iteration: self.iteration,
            agent,
            object: id,
            outcome: outcome.kind,
            steps: outcome.iterations,
            trajectory: outcome.trajectory.clone(),
        });
        let label = next.modal().to_string();
        let concept = next.concept.clone();
        self.objects.insert(id, next);
        self.refresh_flag(id);
        if outcome.kind == super::perspective::OutcomeKind::FixedPoint {
            if let Some(ctx) = outcome.contexts.last() {
                self.register(agent, &concept, &label, ctx)?;
            }
        }
        Ok(())
    }

    fn register(&mut self, agent: usize, concept: &str, label: &str, context: &str) -> Result<(), ExchangeError> {
        let before = self.held_utilities(agent);
        let regs = register_combination(&mut self.agents[agent].perspective, &self.network, concept, label, context)?;
        for r in regs {
            self.registrations += 1;
            let cause = state_cause(&r.concept, &r.label);
            self.events.push(ExchangeEvent::StateRegistered {
                iteration: self.iteration,
                agent,
                concept: r.concept.clone(),
                label: r.label.clone(),
            });
            let p = &mut self.agents[agent].perspective;
            let opens = p.concepts.values().any(|c| c.has_context(&r.label)) && !p.is_active(&r.label);
            if opens {
                p.activations.insert(r.label.clone(), super::perspective::ACTIVE);
                self.events.push(ExchangeEvent::ContextActivated {
                    iteration: self.iteration,
                    agent,
                    context: r.label.clone(),
                    cause: cause.clone(),
                });
            }
            self.crossings(agent, &before, &cause);
        }
        Ok(())
    }

    fn add_loose(&mut self, o: WorldObject, cell: Cell) {
        let id = o.id;
        self.objects.insert(id, o);
        self.places.insert(id, Place::Loose(cell));
        self.loose.push_back(id);
        self.refresh_flag(id);
        while self.loose.len() > self.config.waste_cap {
            let old = self.loose.pop_front().expect("non-empty");
            self.objects.remove(&old);
            self.places.remove(&old);
            self.events.push(ExchangeEvent::Evicted {
                iteration: self.iteration,
                object: old,
            });
        }
    }

    fn pick_up(&mut self, agent: usize, id: ObjectId) {
        self.loose.retain(|&x| x != id);
        self.places.insert(id, Place::Held(agent));
        self.agents[agent].inventory.push(id);
        self.refresh_flag(id);
    }

    fn neighbours(&self, agent: usize) -> Vec<usize> {
        let cell = self.agents[agent].cell;
        self.agents
            .iter()
            .filter(|b| b.id != agent && adjacent(cell, b.cell, self.width, self.height))
            .map(|b| b.id)
            .collect()
    }

    fn blocked(&self, a: Cell, b: Cell) -> bool {
        self.blocked.contains(&edge(a, b))
    }

    /// Passes an object from one agent to a neighbour, who assimilates and
    /// restructures it.
    pub fn transmit(&mut self, from: usize, to: usize, id: ObjectId) -> Result<bool, ExchangeError> {
        let (ca, cb) = (self.agents[from].cell, self.agents[to].cell);
        if ca != cb && self.blocked(ca, cb) {
            self.events.push(ExchangeEvent::TransmissionBlocked {
                iteration: self.iteration,
                from,
                to,
                cells: [ca, cb],
            });
            return Ok(false);
        }
        self.agents[from].inventory.retain(|&x| x != id);
        self.places.insert(id, Place::Held(to));
        self.agents[to].inventory.push(id);
        self.agents[to].perspective.log.push(super::perspective::Assimilation {
            iteration: self.iteration,
            object: id,
            from,
        });
        self.events.push(ExchangeEvent::Transmit {
            iteration: self.iteration,
            from,
            to,
            object: id,
        });
        let used = self.objects[&id].contexts_used.clone();
        for e in &used {
            self.expose(to, e, &format!("exposure:{from}"));
        }
        match assimilate(&self.objects[&id], &self.agents[to].perspective) {
            Ok(o) => {
                self.objects.insert(id, o);
                self.restructure_object(to, id)?;
            }
            Err(ExchangeError::Unconceptualized { concept, .. }) => {
                self.events.push(ExchangeEvent::Unconceptualized {
                    iteration: self.iteration,
                    agent: to,
                    object: id,
                    concept,
                });
            }
            Err(e) => return Err(e),
        }
        self.refresh_flag(id);
        Ok(true)
    }

    fn most_wasteful_near(&self, agent: usize) -> Option<ObjectId> {
        let cell = self.agents[agent].cell;
        let t = self.config.threshold;
        let mut best: Option<(ObjectId, f64)> = None;
        let held = self.agents[agent].inventory.iter().copied();
        let loose = self
            .loose
            .iter()
            .copied()
            .filter(|id| self.places.get(id) == Some(&Place::Loose(cell)));
        for id in held.chain(loose) {
            let o = &self.objects[&id];
            let u = utility_or_zero(o, &self.agents[agent].perspective);
            if u < t && best.is_none_or(|b| u < b.1) {
                best = Some((id, u));
            }
        }
        best.map(|b| b.0)
    }

    fn invent(&mut self, agent: usize) -> Result<(), ExchangeError> {
        let cell = self.agents[agent].cell;
        if self.agents[agent].inventory.len() < self.config.inventory_cap && self.rng.random_bool(self.config.p_extract) {
            let near: Vec<usize> = (0..self.resources.len())
                .filter(|&r| adjacent(cell, self.resources[r].cell, self.width, self.height))
                .collect();
            if let Some(&r) = near.choose(&mut self.rng) {
                let res = self.resources[r].clone();
                let c = self.network.get(&res.concept).expect("validated").clone();
                let (o, wastes) = extract(&res, &c, cell, (self.width, self.height), &mut self.ids, &mut self.rng)?;
                let oid = o.id;
                let wids: Vec<ObjectId> = wastes.iter().map(|w| w.id).collect();
                self.objects.insert(oid, o);
                self.places.insert(oid, Place::Held(agent));
                self.agents[agent].inventory.push(oid);
                self.refresh_flag(oid);
                for w in wastes {
                    self.add_loose(w, cell);
                }
                self.events.push(ExchangeEvent::Extract {
                    iteration: self.iteration,
                    agent,
                    resource: res.id,
                    object: oid,
                    wastes: wids,
                });
                return Ok(());
            }
        }
        if self.agents[agent].inventory.len() >= 2 && self.rng.random_bool(self.config.p_join) {
            let inv = self.agents[agent].inventory.clone();
            let pair: Vec<ObjectId> = inv.choose_multiple(&mut self.rng, 2).copied().collect();
            let j = join(&self.objects[&pair[0]], &self.objects[&pair[1]], &mut self.ids)?;
            let jid = j.id;
            for p in &pair {
                self.objects.remove(p);
                self.places.remove(p);
            }
            self.agents[agent].inventory.retain(|x| !pair.contains(x));
            self.objects.insert(jid, j);
            self.places.insert(jid, Place::Held(agent));
            self.agents[agent].inventory.push(jid);
            self.refresh_flag(jid);
            self.events.push(ExchangeEvent::Join {
                iteration: self.iteration,
                agent,
                parents: [pair[0], pair[1]],
                object: jid,
            });
        }
        Ok(())
    }

    fn focus(&mut self, agent: usize, target: Option<ObjectId>) {
        let high = target.is_some_and(|id| {
            let o = &self.objects[&id];
            let p = &self.agents[agent].perspective;
            p.concept(&o.concept)
                .and_then(|c| waste_amplitude(&o.state, &c.partition()).ok())
                .is_some_and(|w| w > self.config.threshold)
        });
        let a = &mut self.agents[agent];
        a.alpha = if high {
            (a.alpha + self.config.alpha_gain).min(1.0)
        } else {
            self.config.alpha0 + (a.alpha - self.config.alpha0) * self.config.alpha_decay
        };
        if !high || !self.rng.random_bool(self.agents[agent].alpha) {
            return;
        }
        let id = target.expect("high implies a target");
        let concept = self.objects[&id].concept.clone();
        let Some(c) = self.agents[agent].perspective.concept(&concept).cloned() else {
            return;
        };
        let next = candidate_contexts(&c, &self.network)
            .into_iter()
            .find(|r| c.has_context(&r.name) && !self.agents[agent].perspective.is_active(&r.name));
        if let Some(r) = next {
            self.events.push(ExchangeEvent::Focus {
                iteration: self.iteration,
                agent,
                alpha: self.agents[agent].alpha,
                context: r.name.clone(),
            });
            self.expose(agent, &r.name, "focus");
        }
    }

    /// One iteration of the six-step procedure for every agent in id order:
    /// invent, detect and actualize, focus, transmit with restructuring,
    /// then evaluate.
    pub fn step(&mut self) -> Result<ExchangeMetrics, ExchangeError> {
        self.iteration += 1;
        for agent in 0..self.agents.len() {
            self.invent(agent)?;
            let target = self.most_wasteful_near(agent);
            if let Some(id) = target {
                self.restructure_object(agent, id)?;
                let cell = self.agents[agent].cell;
                if self.places.get(&id) == Some(&Place::Loose(cell))
                    && utility_or_zero(&self.objects[&id], &self.agents[agent].perspective) >= self.config.threshold
                    && self.agents[agent].inventory.len() < self.config.inventory_cap
                {
                    self.pick_up(agent, id);
                    self.events.push(ExchangeEvent::Actualize {
                        iteration: self.iteration,
                        agent,
                        object: id,
                    });
                }
            }
            self.focus(agent, target);
            if !self.agents[agent].inventory.is_empty() && self.rng.random_bool(self.config.p_transmit) {
                let ns = self.neighbours(agent);
                if let Some(&to) = ns.choose(&mut self.rng) {
                    let id = *self.agents[agent].inventory.last().expect("non-empty");
                    self.transmit(agent, to, id)?;
                }
            }
        }
        Ok(self.metrics())
    }

    pub fn finish(&mut self) {
        self.events.push(ExchangeEvent::RunEnd {
            iteration: self.iteration,
        });
    }

    /// Validates a context definition without applying it.
    pub fn check_define_context(
        &self,
        concept: &str,
        context: &str,
        rows: &BTreeMap<String, BTreeMap<String, f64>>,
    ) -> Result<(), ExchangeError> {
        let base = self
            .network
            .get(concept)
            .ok_or_else(|| ExchangeError::Fixture(format!("unknown concept `{concept}`")))?;
        base.with_context(context, rows)?;
        for a in &self.agents {
            if let Some(c) = a.perspective.concept(concept) {
                c.with_context(context, rows)?;
            }
        }
        Ok(())
    }

    /// Validates a rating without applying it.
    pub fn check_rating(&self, id: ObjectId, rating: f64) -> Result<(), ExchangeError> {
        check_rating(rating)?;
        if !self.objects.contains_key(&id) {
            return Err(ExchangeError::UnknownObject { id });
        }
        Ok(())
    }

    /// Applies a human-defined context to every copy of the concept and
    /// activates it everywhere.
    pub fn define_context(
        &mut self,
        concept: &str,
        context: &str,
        rows: &BTreeMap<String, BTreeMap<String, f64>>,
    ) -> Result<(), ExchangeError> {
        let base = self
            .network
            .get(concept)
            .ok_or_else(|| ExchangeError::Fixture(format!("unknown concept `{concept}`")))?;
        let updated = base.with_context(context, rows)?;
        let mut copies = Vec::new();
        for a in &self.agents {
            if let Some(c) = a.perspective.concept(concept) {
                copies.push((a.id, c.with_context(context, rows)?));
            }
        }
        self.network.replace(updated.clone());
        self.public.concepts.insert(concept.to_string(), updated);
        self.events.push(ExchangeEvent::ContextDefined {
            iteration: self.iteration,
            concept: concept.to_string(),
            context: context.to_string(),
        });
        for (id, c) in copies {
            self.agents[id].perspective.concepts.insert(concept.to_string(), c);
        }
        for id in 0..self.agents.len() {
            if self.agents[id].perspective.concept(concept).is_some() {
                self.activate_context(id, context, "defined");
            }
        }
        for id in self.objects.keys().copied().collect::<Vec<_>>() {
            self.refresh_flag(id);
        }
        Ok(())
    }

    /// Folds a human rating into every perspective's view of the object.
    pub fn rate_object(&mut self, id: ObjectId, rating: f64) -> Result<(), ExchangeError> {
        self.check_rating(id, rating)?;
        let f = rating_factor(rating);
        for a in &mut self.agents {
            a.perspective.rating_factors.insert(id, f);
        }
        self.public.rating_factors.insert(id, f);
        self.refresh_flag(id);
        self.events.push(ExchangeEvent::Rated {
            iteration: self.iteration,
            object: id,
            rating,
        });
        Ok(())
    }

    pub fn objects_view(&self) -> Vec<ObjectView> {
        self.objects
            .values()
            .map(|o| ObjectView {
                id: o.id,
                place: self.places[&o.id],
                concept: o.concept.clone(),
                attributes: o.attributes.clone(),
                modal: o.modal().to_string(),
                utility: self.utility_of(o.id),
                waste_flag: o.waste_flag,
            })
            .collect()
    }

    pub fn evaluate(&self, evaluator: &Evaluator) -> Result<RatingsReport, ExchangeError> {
        let pairs: Vec<(&Perspective, &WorldObject)> = self.objects.values().map(|o| (self.judge(o.id), o)).collect();
        evaluate_objects(&pairs, evaluator, self.config.threshold)
    }

    pub fn metrics(&self) -> ExchangeMetrics {
        let n = self.objects.len();
        let report = self.evaluate(&Evaluator::Automated).expect("automated evaluation cannot fail");
        let mean_utility = if n == 0 {
            0.0
        } else {
            report.objects.iter().map(|s| s.usefulness).sum::<f64>() / n as f64
        };
        let na = self.agents.len().max(1) as f64;
        ExchangeMetrics {
            iteration: self.iteration,
            objects: n,
            loose_wastes: self.loose.len(),
            waste_flagged: report.objects.iter().filter(|s| s.waste_flag).count(),
            mean_utility,
            wastefulness: report.wastefulness,
            diversity: report.diversity,
            web_edges: web_edges(self.objects.values()),
            mean_alpha: self.agents.iter().map(|a| a.alpha).sum::<f64>() / na,
            mean_active_contexts: self
                .agents
                .iter()
                .map(|a| a.perspective.active_contexts().len() as f64)
                .sum::<f64>()
                / na,
            registrations: self.registrations,
        }
    }

    /// Final state for snapshots.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "iteration": self.iteration,
            "agents": self.agents,
            "objects": self.objects_view(),
        })
    }
}

/// Runs a full exchange simulation and returns metrics and the event log.
pub fn run_exchange(
    config: &ExchangeConfig,
    seed: u64,
) -> Result<(Vec<ExchangeMetrics>, Vec<ExchangeEvent>), ExchangeError> {
    let mut w = ExchangeWorld::from_config(config.clone(), seed)?;
    let mut metrics = Vec::with_capacity(config.iterations as usize);
    for _ in 0..config.iterations {
        metrics.push(w.step()?);
    }
    w.finish();
    Ok((metrics, w.drain_events()))
}

fn bundle(attrs: &[&str], state: Option<&str>) -> Bundle {
    Bundle {
        attributes: attrs.iter().map(|s| s.to_string()).collect(),
        state: state.map(String::from),
    }
}

/// The tire-swing story on one agent: it holds a worn tire and a frayed
/// rope under a transport view, playground equipment comes into view, the
/// tire restructures into a swing, and that new state opens a niche for
/// the rope.
pub fn tire_swing_scenario() -> Result<ExchangeWorld, ExchangeError> {
    let fixture = WorldFixture {
        schema_version: 1,
        width: 1,
        height: 1,
        resources: Vec::new(),
        agents: vec![AgentSpec {
            cell: [0, 0],
            concepts: vec!["TIRE".into(), "ROPE".into()],
            contexts: vec!["transport".into()],
        }],
        borders: Vec::new(),
    };
    let mut w = ExchangeWorld::new(ExchangeConfig::default(), ConceptNetwork::fixture(), fixture, 0)?;
    w.iteration = 1;
    let tire = w.give(0, "TIRE", &bundle(&["round", "rubber", "weather_resistant", "holds_weight"], None))?;
    w.give(0, "ROPE", &bundle(&["rope", "flexible"], None))?;
    w.iteration = 2;
    w.activate_context(0, "playground_equipment", "scripted");
    w.iteration = 3;
    w.restructure_object(0, tire)?;
    w.finish();
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_world_runs() {
        let cfg = ExchangeConfig {
            iterations: 30,
            ..Default::default()
        };
        let (m, log) = run_exchange(&cfg, 1).unwrap();
        assert_eq!(m.len(), 30);
        assert!(m.last().unwrap().objects > 0);
        assert!(matches!(log.last(), Some(ExchangeEvent::RunEnd { iteration: 30 })));
    }

    #[test]
    fn config_errors_name_the_key() {
        let bad = ExchangeConfig {
            window: 1,
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().key(), "exchange.window");
    }
}
