//! Parameter correspondence between SIR and ASIR.
//!
//! With `P = Σπ²` the meetup probability of the map, the agent model matches
//! the compartmental one in expectation when
//! `α = α′ · P · N`, `β = β′`, and the initial compartments agree.

use std::sync::Arc;
use thiserror::Error;

use crate::engine::{AsirConfig, InitMode};
use crate::markov::{
    stationary_distribution, MarkovError, StationaryDistribution, TransitionMatrix,
};
use crate::sir::{simulate_sir_euler, SirError, SirParams};

const INTEGRALITY_TOLERANCE: f64 = 1e-9;

/// `α′ · (plausible peak crowd of infected at one location)` at or above
/// this value triggers a low-density warning.
pub const CROWDING_WARNING_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Sir(#[from] SirError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("{name} = {value} is not an integer; agent compartments must be whole agents")]
    NonIntegerCompartments { name: &'static str, value: f64 },
    #[error(
        "deduced alpha' = {alpha_prime} exceeds 1 (meetup probability {meetup}); \
         need at least {min_agents} agents or a map with lower meetup probability"
    )]
    AlphaPrimeOutOfRange {
        alpha_prime: f64,
        meetup: f64,
        min_agents: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeResult {
    /// Deduced agent configuration. `seed` is 0, `init_mode` is stationary,
    /// and `horizon` is copied from the SIR parameters; callers override them.
    pub config: AsirConfig,
    pub meetup: f64,
    pub stationary: StationaryDistribution,
    pub warnings: Vec<String>,
}

fn as_count(name: &'static str, value: f64) -> Result<usize, BridgeError> {
    let rounded = value.round();
    if (value - rounded).abs() > INTEGRALITY_TOLERANCE || rounded < 0.0 {
        return Err(BridgeError::NonIntegerCompartments { name, value });
    }
    Ok(rounded as usize)
}

/// Deduces `α′ = α / (Σπ² · N)` and `β′ = β` for the given map.
pub fn deduce_asir(
    params: &SirParams,
    map: impl Into<Arc<TransitionMatrix>>,
) -> Result<BridgeResult, BridgeError> {
    params.validate()?;
    let map = map.into();
    let n_agents = as_count("n_total", params.n_total)?;
    let s0 = as_count("s0", params.s0)?;
    let i0 = as_count("i0", params.i0)?;
    let r0 = as_count("r0", params.r0)?;
    if s0 + i0 + r0 != n_agents {
        return Err(BridgeError::NonIntegerCompartments {
            name: "s0 + i0 + r0",
            value: (s0 + i0 + r0) as f64,
        });
    }

    let stationary = stationary_distribution(&map)?;
    let meetup = stationary.meetup_probability();
    let alpha_prime = params.alpha / (meetup * n_agents as f64);
    if alpha_prime > 1.0 {
        return Err(BridgeError::AlphaPrimeOutOfRange {
            alpha_prime,
            meetup,
            min_agents: (params.alpha / meetup).ceil() as u64,
        });
    }

    let mut warnings = Vec::new();
    let peak_infected = match simulate_sir_euler(params) {
        Ok(curve) => curve.peak_infected().1,
        Err(_) => {
            warnings.push(
                "unit-step SIR curve leaves the simplex; crowding check uses s0 + i0".to_string(),
            );
            params.s0 + params.i0
        }
    };
    let max_pi = stationary
        .probabilities()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let expected = peak_infected * max_pi;
    let crowd = expected + 3.0 * (expected * (1.0 - max_pi)).sqrt();
    if alpha_prime * crowd >= CROWDING_WARNING_LEVEL {
        warnings.push(format!(
            "low-density regime at risk: alpha' * plausible co-located infected = {:.3} \
             (alpha' = {alpha_prime:.6}, crowd = {crowd:.1}); expect clamp events",
            alpha_prime * crowd
        ));
    }

    Ok(BridgeResult {
        config: AsirConfig {
            alpha_prime,
            beta_prime: params.beta,
            map,
            n_agents,
            s0,
            i0,
            r0,
            horizon: params.horizon,
            init_mode: InitMode::Stationary,
            seed: 0,
        },
        meetup,
        stationary,
        warnings,
    })
}

/// SIR parameters implied by an agent configuration: `α = α′ · Σπ² · N`, `β = β′`.
pub fn implied_sir(config: &AsirConfig) -> Result<SirParams, BridgeError> {
    let meetup = stationary_distribution(&config.map)?.meetup_probability();
    Ok(SirParams {
        alpha: config.alpha_prime * meetup * config.n_agents as f64,
        beta: config.beta_prime,
        n_total: config.n_agents as f64,
        s0: config.s0 as f64,
        i0: config.i0 as f64,
        r0: config.r0 as f64,
        horizon: config.horizon,
    })
}
