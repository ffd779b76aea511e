//! Agent-based ASIR simulation.
//!
//! Each timestamp runs three phases over the whole population:
//!
//! 1. **Move**: every agent resamples its position from the map, one draw per
//!    agent in ascending id order.
//! 2. **Snapshot**: infected neighbours are counted from post-move positions
//!    and *pre-step* health.
//! 3. **Transition**: each pre-step susceptible agent with `k` infected
//!    neighbours draws once and becomes infected with probability
//!    `min(1, α′·k)`. Then each pre-step infected agent draws once and
//!    recovers with probability `β′`. Both passes go in ascending id order,
//!    and new health takes effect only after every draw.
//!
//! A draw with `α′·k > 1` is clamped and counted in
//! [`StepRecord::clamp_events`].

use std::sync::Arc;
use thiserror::Error;

use crate::markov::{
    sample_next, stationary_distribution, MarkovError, StationaryDistribution, TransitionMatrix,
};
use crate::rng::{UniformSource, UniformStream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("compartments {s0} + {i0} + {r0} do not add up to n_agents = {n_agents}")]
    BadCompartmentSplit {
        s0: usize,
        i0: usize,
        r0: usize,
        n_agents: usize,
    },
    #[error("{name} = {value} is not a probability in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("invalid ASIR configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Health {
    Susceptible,
    Infected,
    Recovered,
}

impl Health {
    pub fn symbol(self) -> char {
        match self {
            Health::Susceptible => 'S',
            Health::Infected => 'I',
            Health::Recovered => 'R',
        }
    }

    /// Whether `self → next` is a legal (possibly trivial) health change.
    pub fn can_become(self, next: Health) -> bool {
        matches!(
            (self, next),
            (Health::Susceptible, Health::Susceptible | Health::Infected)
                | (Health::Infected, Health::Infected | Health::Recovered)
                | (Health::Recovered, Health::Recovered)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentState {
    pub agent_id: usize,
    pub health: Health,
    pub position: usize,
}

/// How agent positions are drawn at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// iid from the map's stationary distribution.
    Stationary,
    /// Everyone starts at one location.
    PointMass(usize),
    /// iid uniform over locations.
    Uniform,
    /// Infected agents at `infected`; everyone else at `susceptible`.
    SplitPointMass { susceptible: usize, infected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsirConfig {
    /// Infection probability per infected neighbour.
    pub alpha_prime: f64,
    /// Per-step recovery probability.
    pub beta_prime: f64,
    pub map: Arc<TransitionMatrix>,
    pub n_agents: usize,
    pub s0: usize,
    pub i0: usize,
    pub r0: usize,
    pub horizon: usize,
    pub init_mode: InitMode,
    pub seed: u64,
}

impl AsirConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        for (name, value) in [
            ("alpha_prime", self.alpha_prime),
            ("beta_prime", self.beta_prime),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EngineError::InvalidProbability { name, value });
            }
        }
        if self.n_agents == 0 {
            return Err(EngineError::InvalidConfig(
                "n_agents must be positive".into(),
            ));
        }
        if self.s0 + self.i0 + self.r0 != self.n_agents {
            return Err(EngineError::BadCompartmentSplit {
                s0: self.s0,
                i0: self.i0,
                r0: self.r0,
                n_agents: self.n_agents,
            });
        }
        if self.horizon == 0 {
            return Err(EngineError::InvalidConfig(
                "horizon must be at least 1".into(),
            ));
        }
        let n = self.map.n_locations();
        let check = |loc: usize| {
            if loc >= n {
                Err(EngineError::InvalidConfig(format!(
                    "initial location {loc} is outside the map ({n} locations)"
                )))
            } else {
                Ok(())
            }
        };
        match self.init_mode {
            InitMode::PointMass(loc) => check(loc)?,
            InitMode::SplitPointMass {
                susceptible,
                infected,
            } => {
                check(susceptible)?;
                check(infected)?;
            }
            InitMode::Stationary | InitMode::Uniform => {}
        }
        Ok(())
    }

    fn health_of(&self, agent_id: usize) -> Health {
        if agent_id < self.s0 {
            Health::Susceptible
        } else if agent_id < self.s0 + self.i0 {
            Health::Infected
        } else {
            Health::Recovered
        }
    }
}

/// Compartment counts and event tallies after one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRecord {
    pub timestamp: usize,
    pub susceptible: usize,
    pub infected: usize,
    pub recovered: usize,
    pub new_infections: usize,
    pub new_recoveries: usize,
    /// Infection draws where `α′·k` exceeded 1 and was truncated.
    pub clamp_events: usize,
}

impl StepRecord {
    pub fn counts(&self) -> [usize; 3] {
        [self.susceptible, self.infected, self.recovered]
    }

    fn initial(agents: &[AgentState]) -> Self {
        let [s, i, r] = count_health(agents);
        Self {
            timestamp: 0,
            susceptible: s,
            infected: i,
            recovered: r,
            new_infections: 0,
            new_recoveries: 0,
            clamp_events: 0,
        }
    }
}

pub fn count_health(agents: &[AgentState]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for a in agents {
        counts[a.health as usize] += 1;
    }
    counts
}

fn init_with<R: UniformSource + ?Sized>(
    config: &AsirConfig,
    stationary: Option<&StationaryDistribution>,
    rng: &mut R,
) -> Vec<AgentState> {
    let n_loc = config.map.n_locations();
    (0..config.n_agents)
        .map(|agent_id| {
            let health = config.health_of(agent_id);
            let position = match config.init_mode {
                InitMode::Stationary => stationary
                    .expect("stationary init requires a stationary distribution")
                    .sample(rng),
                InitMode::PointMass(loc) => loc,
                InitMode::Uniform => ((rng.next_uniform() * n_loc as f64) as usize).min(n_loc - 1),
                InitMode::SplitPointMass {
                    susceptible,
                    infected,
                } => {
                    if health == Health::Infected {
                        infected
                    } else {
                        susceptible
                    }
                }
            };
            AgentState {
                agent_id,
                health,
                position,
            }
        })
        .collect()
}

/// Builds the t = 0 population: ids `0..s0` susceptible, the next `i0`
/// infected, the rest recovered; positions per `init_mode`.
pub fn init_population<R: UniformSource + ?Sized>(
    config: &AsirConfig,
    rng: &mut R,
) -> Result<Vec<AgentState>, EngineError> {
    config.validate()?;
    let pi = match config.init_mode {
        InitMode::Stationary => Some(stationary_distribution(&config.map)?),
        _ => None,
    };
    Ok(init_with(config, pi.as_ref(), rng))
}

/// Reusable per-location scratch for [`step_with`].
#[derive(Debug, Clone, Default)]
pub struct StepScratch {
    infected_at: Vec<u32>,
    newly_infected: Vec<usize>,
}

/// Advances every agent by one timestamp. `timestamp` labels the returned record.
pub fn step<R: UniformSource + ?Sized>(
    agents: &mut [AgentState],
    config: &AsirConfig,
    rng: &mut R,
    timestamp: usize,
) -> StepRecord {
    step_with(agents, config, rng, timestamp, &mut StepScratch::default())
}

pub fn step_with<R: UniformSource + ?Sized>(
    agents: &mut [AgentState],
    config: &AsirConfig,
    rng: &mut R,
    timestamp: usize,
    scratch: &mut StepScratch,
) -> StepRecord {
    let map = &*config.map;
    if scratch.infected_at.len() != map.n_locations() {
        scratch.infected_at = vec![0; map.n_locations()];
    }

    for agent in agents.iter_mut() {
        agent.position = sample_next(map, agent.position, rng);
    }

    for agent in agents.iter() {
        if agent.health == Health::Infected {
            scratch.infected_at[agent.position] += 1;
        }
    }

    let mut clamp_events = 0;
    scratch.newly_infected.clear();
    for agent in agents.iter() {
        if agent.health != Health::Susceptible {
            continue;
        }
        let k = scratch.infected_at[agent.position];
        let p = config.alpha_prime * f64::from(k);
        if p > 1.0 {
            clamp_events += 1;
        }
        if rng.next_uniform() < p.min(1.0) {
            scratch.newly_infected.push(agent.agent_id);
        }
    }

    let mut new_recoveries = 0;
    for agent in agents.iter_mut() {
        if agent.health != Health::Infected {
            continue;
        }
        scratch.infected_at[agent.position] = 0;
        if rng.next_uniform() < config.beta_prime {
            agent.health = Health::Recovered;
            new_recoveries += 1;
        }
    }

    // agent_id doubles as the slice index
    for &id in &scratch.newly_infected {
        agents[id].health = Health::Infected;
    }

    let [s, i, r] = count_health(agents);
    StepRecord {
        timestamp,
        susceptible: s,
        infected: i,
        recovered: r,
        new_infections: scratch.newly_infected.len(),
        new_recoveries,
        clamp_events,
    }
}

/// A validated configuration with its stationary distribution cached, able
/// to run any replicate of the ensemble.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: AsirConfig,
    stationary: Option<StationaryDistribution>,
}

impl Simulator {
    pub fn new(config: AsirConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let stationary = match config.init_mode {
            InitMode::Stationary => Some(stationary_distribution(&config.map)?),
            _ => None,
        };
        Ok(Self { config, stationary })
    }

    pub fn config(&self) -> &AsirConfig {
        &self.config
    }

    /// Random stream for replicate `index`: `(seed, index)`.
    pub fn stream(&self, index: u64) -> UniformStream {
        UniformStream::new(self.config.seed, index)
    }

    pub fn run(&self, replicate: u64) -> Vec<StepRecord> {
        self.run_observed(replicate, |_, _| {})
    }

    /// Runs one replicate, calling `observe(t, agents)` at t = 0 and after each step.
    pub fn run_observed<F>(&self, replicate: u64, mut observe: F) -> Vec<StepRecord>
    where
        F: FnMut(usize, &[AgentState]),
    {
        let mut rng = self.stream(replicate);
        let mut agents = init_with(&self.config, self.stationary.as_ref(), &mut rng);
        let mut scratch = StepScratch::default();
        let mut records = Vec::with_capacity(self.config.horizon + 1);
        records.push(StepRecord::initial(&agents));
        observe(0, &agents);
        for t in 1..=self.config.horizon {
            records.push(step_with(
                &mut agents,
                &self.config,
                &mut rng,
                t,
                &mut scratch,
            ));
            observe(t, &agents);
        }
        records
    }
}

/// One sample path: stream `(seed, 0)`, initial population, `horizon` steps.
pub fn run_replicate(config: &AsirConfig) -> Result<Vec<StepRecord>, EngineError> {
    Ok(Simulator::new(config.clone())?.run(0))
}

pub const TRAJECTORY_HEADER: &str = "replicate,t,S,I,R,new_inf,new_rec,clamps";
pub const AGENT_TRACE_HEADER: &str = "replicate,t,agent_id,health,position";

pub fn write_trajectory_rows(out: &mut String, replicate: u64, records: &[StepRecord]) {
    use std::fmt::Write;
    for r in records {
        let _ = writeln!(
            out,
            "{replicate},{},{},{},{},{},{},{}",
            r.timestamp,
            r.susceptible,
            r.infected,
            r.recovered,
            r.new_infections,
            r.new_recoveries,
            r.clamp_events
        );
    }
}

pub fn write_agent_rows(out: &mut String, replicate: u64, t: usize, agents: &[AgentState]) {
    use std::fmt::Write;
    for a in agents {
        let _ = writeln!(
            out,
            "{replicate},{t},{},{},{}",
            a.agent_id,
            a.health.symbol(),
            a.position
        );
    }
}
