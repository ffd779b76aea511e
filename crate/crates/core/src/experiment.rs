//! Sparse-grid failure regime.
//!
//! Agent parameters deduced for a small, well-mixed reference map are reused
//! on a large lazy grid. Infected and susceptible agents start in opposite
//! corners, far out of reach of each other within the horizon, so the
//! initial cases recover without transmitting. The same parameters on the
//! reference map with stationary initialization provide the contrast.

use std::sync::Arc;
use thiserror::Error;

use crate::bridge::{deduce_asir, BridgeError};
use crate::engine::{AsirConfig, EngineError, InitMode, Simulator};
use crate::ensemble::{equivalence_report, run_ensemble, EnsembleError, EnsembleReport};
use crate::markov::{grid_walk_map, stationary_distribution, MarkovError, TransitionMatrix};
use crate::sir::{simulate_sir_euler, SirError, SirParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Sir(#[from] SirError),
    #[error("grid population needs 0 < i0 <= n_agents, got i0 = {i0}, n_agents = {n_agents}")]
    BadGridPopulation { i0: usize, n_agents: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureModeSpec {
    /// SIR model the agent parameters are deduced from.
    pub reference_sir: SirParams,
    /// Map used for deduction and for the stationary contrast run.
    pub reference_map: TransitionMatrix,
    pub side: usize,
    pub stay_prob: f64,
    pub grid_agents: usize,
    pub grid_infected: usize,
    pub replicates: usize,
    pub seed: u64,
    pub z_threshold: f64,
    pub coverage_threshold: f64,
    /// Skip computing the grid's stationary distribution (slow for large grids).
    pub skip_grid_meetup: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureModeSummary {
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub grid_locations: usize,
    pub grid_infected: usize,
    pub peak_mean_infected: f64,
    pub final_mean_recovered: f64,
    /// Σπ² of the grid, when computed.
    pub grid_meetup: Option<f64>,
    /// α′ the grid itself would need for the reference α.
    pub grid_alpha_prime_required: Option<f64>,
    pub grid_pass: bool,
    pub contrast_pass: bool,
}

impl FailureModeSummary {
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("not computed".to_string(), |x| format!("{x:.6e}"));
        format!(
            "alpha_prime: {}\nbeta_prime: {}\ngrid_locations: {}\ngrid_initial_infected: {}\n\
             grid_peak_mean_I: {:.4}\ngrid_final_mean_R: {:.4}\ngrid_meetup: {}\n\
             grid_alpha_prime_required: {}\ngrid_pass: {}\ncontrast_pass: {}\n",
            self.alpha_prime,
            self.beta_prime,
            self.grid_locations,
            self.grid_infected,
            self.peak_mean_infected,
            self.final_mean_recovered,
            opt(self.grid_meetup),
            opt(self.grid_alpha_prime_required),
            self.grid_pass,
            self.contrast_pass
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureModeOutcome {
    pub grid_report: EnsembleReport,
    pub contrast_report: EnsembleReport,
    pub summary: FailureModeSummary,
}

pub fn failure_mode_experiment(
    spec: &FailureModeSpec,
) -> Result<FailureModeOutcome, ExperimentError> {
    if spec.grid_infected == 0 || spec.grid_infected > spec.grid_agents {
        return Err(ExperimentError::BadGridPopulation {
            i0: spec.grid_infected,
            n_agents: spec.grid_agents,
        });
    }
    let deduced = deduce_asir(&spec.reference_sir, spec.reference_map.clone())?;
    let alpha_prime = deduced.config.alpha_prime;
    let beta_prime = deduced.config.beta_prime;

    let grid = grid_walk_map(spec.side, spec.stay_prob)?;
    let n_cells = grid.n_locations();
    let (grid_meetup, grid_alpha_prime_required) = if spec.skip_grid_meetup {
        (None, None)
    } else {
        let meetup = stationary_distribution(&grid)?.meetup_probability();
        (
            Some(meetup),
            Some(spec.reference_sir.alpha / (meetup * spec.grid_agents as f64)),
        )
    };

    let horizon = spec.reference_sir.horizon;
    let grid_config = AsirConfig {
        alpha_prime,
        beta_prime,
        map: Arc::new(grid),
        n_agents: spec.grid_agents,
        s0: spec.grid_agents - spec.grid_infected,
        i0: spec.grid_infected,
        r0: 0,
        horizon,
        init_mode: InitMode::SplitPointMass {
            susceptible: n_cells - 1,
            infected: 0,
        },
        seed: spec.seed,
    };
    let grid_ensemble = run_ensemble(&Simulator::new(grid_config)?, spec.replicates)?;
    let grid_reference = simulate_sir_euler(&SirParams {
        alpha: spec.reference_sir.alpha,
        beta: spec.reference_sir.beta,
        n_total: spec.grid_agents as f64,
        s0: (spec.grid_agents - spec.grid_infected) as f64,
        i0: spec.grid_infected as f64,
        r0: 0.0,
        horizon,
    })?;
    let grid_report = equivalence_report(
        &grid_ensemble,
        &grid_reference,
        spec.z_threshold,
        spec.coverage_threshold,
    )?;

    let contrast_config = AsirConfig {
        seed: spec.seed,
        ..deduced.config
    };
    let contrast_ensemble = run_ensemble(&Simulator::new(contrast_config)?, spec.replicates)?;
    let contrast_reference = simulate_sir_euler(&spec.reference_sir)?;
    let contrast_report = equivalence_report(
        &contrast_ensemble,
        &contrast_reference,
        spec.z_threshold,
        spec.coverage_threshold,
    )?;

    let mean_i = grid_report.mean_series(1);
    let summary = FailureModeSummary {
        alpha_prime,
        beta_prime,
        grid_locations: n_cells,
        grid_infected: spec.grid_infected,
        peak_mean_infected: mean_i.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        final_mean_recovered: grid_report.rows.last().map_or(0.0, |r| r.mean[2]),
        grid_meetup,
        grid_alpha_prime_required,
        grid_pass: grid_report.pass,
        contrast_pass: contrast_report.pass,
    };
    Ok(FailureModeOutcome {
        grid_report,
        contrast_report,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(side: usize) -> FailureModeSpec {
        FailureModeSpec {
            reference_sir: SirParams {
                alpha: 0.4,
                beta: 0.1,
                n_total: 300.0,
                s0: 297.0,
                i0: 3.0,
                r0: 0.0,
                horizon: 30,
            },
            reference_map: TransitionMatrix::new(&[
                vec![0.5, 0.3, 0.2],
                vec![0.3, 0.3, 0.4],
                vec![0.2, 0.4, 0.4],
            ])
            .unwrap(),
            side,
            stay_prob: 0.2,
            grid_agents: 100,
            grid_infected: 3,
            replicates: 20,
            seed: 5,
            z_threshold: 3.0,
            coverage_threshold: 0.95,
            skip_grid_meetup: false,
        }
    }

    #[test]
    fn single_cell_grid_spreads_infection() {
        let out = failure_mode_experiment(&spec(1)).unwrap();
        assert_eq!(out.summary.grid_meetup, Some(1.0));
        // everyone shares the cell: α′·I = 0.012 per S per step at the start
        assert!(
            out.summary.final_mean_recovered > 10.0,
            "{}",
            out.summary.render()
        );
    }

    #[test]
    fn far_corners_stay_flat() {
        let out = failure_mode_experiment(&spec(30)).unwrap();
        assert!(out.summary.peak_mean_infected <= 3.0);
        assert!(out.summary.final_mean_recovered <= 3.0);
        assert!(!out.summary.grid_pass);
        assert!(out.summary.grid_alpha_prime_required.unwrap() > 1.0);
    }

    #[test]
    fn rejects_empty_seed() {
        let mut s = spec(3);
        s.grid_infected = 0;
        assert!(matches!(
            failure_mode_experiment(&s),
            Err(ExperimentError::BadGridPopulation { .. })
        ));
    }
}
