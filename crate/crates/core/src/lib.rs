//! Compartmental SIR and agent-based ASIR epidemic engines.
//!
//! Agents move over a finite map according to a shared Markov kernel
//! ([`markov::TransitionMatrix`]). Parameters for the agent model are deduced
//! from SIR rates through the map's meetup probability Σπ²
//! ([`bridge::deduce_asir`]), and replicate ensembles are checked against the
//! unit-step SIR curve ([`ensemble::equivalence_report`]).

pub mod bridge;
pub mod engine;
pub mod ensemble;
pub mod experiment;
pub mod markov;
pub mod rng;
pub mod sir;

pub use bridge::{deduce_asir, implied_sir, BridgeError, BridgeResult};
pub use engine::{
    init_population, run_replicate, step, AgentState, AsirConfig, EngineError, Health, InitMode,
    Simulator, StepRecord,
};
pub use ensemble::{
    equivalence_report, run_ensemble, Ensemble, EnsembleError, EnsembleReport, Moments,
};
pub use experiment::{failure_mode_experiment, FailureModeOutcome, FailureModeSpec};
pub use markov::{
    ergodicity, grid_walk_map, meetup_probability, sample_next, sample_stationary,
    stationary_distribution, ErgodicityReport, MarkovError, StationaryDistribution,
    TransitionMatrix,
};
pub use rng::{UniformSource, UniformStream, STREAM_ALGORITHM};
pub use sir::{
    euler_unit_step, simulate_sir_euler, simulate_sir_rk4, SirCurve, SirError, SirParams, SirState,
};

/// 17 significant digits, scientific notation. Infinities print as `inf`/`-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}
