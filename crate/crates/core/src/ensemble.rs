//! Replicate ensembles and the equivalence verdict against the SIR curve.
//!
//! Aggregation keeps exact integer sums and sums of squares per timestamp,
//! so merging replicates is commutative and associative and the report does
//! not depend on which replicate finished first.

use rayon::prelude::*;
use std::fmt::Write;
use thiserror::Error;

use crate::engine::{EngineError, Simulator, StepRecord};
use crate::sir::SirCurve;

pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;
pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.95;

/// `|mean − reference|` at or below this counts as agreement when `se = 0`.
const DETERMINISTIC_AGREEMENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: EngineError,
    },
    #[error("ensemble has {ensemble} timestamps but the reference has {reference}")]
    HorizonMismatch { ensemble: usize, reference: usize },
    #[error("ensemble population {ensemble} differs from reference population {reference}")]
    PopulationMismatch { ensemble: usize, reference: f64 },
    #[error("invalid thresholds: z = {z_threshold}, coverage = {coverage_threshold}")]
    InvalidThreshold {
        z_threshold: f64,
        coverage_threshold: f64,
    },
    #[error("could not build worker pool: {0}")]
    WorkerPool(String),
}

/// All replicate trajectories of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub n_agents: usize,
    pub master_seed: u64,
    /// `replicates[r]` came from stream `(master_seed, r)`.
    pub replicates: Vec<Vec<StepRecord>>,
}

impl Ensemble {
    pub fn n_replicates(&self) -> usize {
        self.replicates.len()
    }

    pub fn timestamps(&self) -> usize {
        self.replicates.first().map_or(0, Vec::len)
    }

    pub fn total_clamp_events(&self) -> u64 {
        self.replicates
            .iter()
            .flatten()
            .map(|r| r.clamp_events as u64)
            .sum()
    }

    pub fn moments(&self) -> Moments {
        let mut acc = Moments::new(self.timestamps());
        for rep in &self.replicates {
            acc.add(rep);
        }
        acc
    }

    /// Trajectory CSV for every replicate, in replicate order.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from(crate::engine::TRAJECTORY_HEADER);
        out.push('\n');
        for (r, rep) in self.replicates.iter().enumerate() {
            crate::engine::write_trajectory_rows(&mut out, r as u64, rep);
        }
        out
    }
}

/// Runs `n_replicates` replicates on the current rayon pool.
pub fn run_ensemble(simulator: &Simulator, n_replicates: usize) -> Result<Ensemble, EnsembleError> {
    if n_replicates < 2 {
        return Err(EnsembleError::TooFewReplicates(n_replicates));
    }
    let replicates = (0..n_replicates as u64)
        .into_par_iter()
        .map(|r| simulator.run(r))
        .collect();
    Ok(Ensemble {
        n_agents: simulator.config().n_agents,
        master_seed: simulator.config().seed,
        replicates,
    })
}

/// [`run_ensemble`] on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(
    simulator: &Simulator,
    n_replicates: usize,
    workers: usize,
) -> Result<Ensemble, EnsembleError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EnsembleError::WorkerPool(e.to_string()))?;
    pool.install(|| run_ensemble(simulator, n_replicates))
}

/// Validates the configuration and runs the ensemble.
pub fn run_ensemble_for(
    config: crate::engine::AsirConfig,
    n_replicates: usize,
) -> Result<Ensemble, EnsembleError> {
    let sim =
        Simulator::new(config).map_err(|source| EnsembleError::Replicate { index: 0, source })?;
    run_ensemble(&sim, n_replicates)
}

/// Per-timestamp exact sums over replicates, for `S`, `I`, `R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Moments {
    pub count: u64,
    sum: Vec<[u64; 3]>,
    sum_sq: Vec<[u128; 3]>,
}

impl Moments {
    pub fn new(timestamps: usize) -> Self {
        Self {
            count: 0,
            sum: vec![[0; 3]; timestamps],
            sum_sq: vec![[0; 3]; timestamps],
        }
    }

    pub fn add(&mut self, replicate: &[StepRecord]) {
        assert_eq!(replicate.len(), self.sum.len(), "replicate length mismatch");
        for (t, rec) in replicate.iter().enumerate() {
            for (x, c) in rec.counts().into_iter().enumerate() {
                self.sum[t][x] += c as u64;
                self.sum_sq[t][x] += (c as u128) * (c as u128);
            }
        }
        self.count += 1;
    }

    pub fn merge(mut self, other: &Moments) -> Self {
        assert_eq!(self.sum.len(), other.sum.len(), "timestamp count mismatch");
        for t in 0..self.sum.len() {
            for x in 0..3 {
                self.sum[t][x] += other.sum[t][x];
                self.sum_sq[t][x] += other.sum_sq[t][x];
            }
        }
        self.count += other.count;
        self
    }

    pub fn timestamps(&self) -> usize {
        self.sum.len()
    }

    pub fn mean(&self, t: usize, compartment: usize) -> f64 {
        self.sum[t][compartment] as f64 / self.count as f64
    }

    /// Sample standard deviation / √n.
    pub fn standard_error(&self, t: usize, compartment: usize) -> f64 {
        let n = self.count as i128;
        if n < 2 {
            return 0.0;
        }
        let s = self.sum[t][compartment] as i128;
        let ss = self.sum_sq[t][compartment] as i128;
        // n²·var·(n−1)/n = n·Σx² − (Σx)², exact in integers
        let scaled = (n * ss - s * s).max(0) as f64;
        let variance = scaled / (n as f64 * (n - 1) as f64);
        (variance / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    /// Indexed S, I, R.
    pub mean: [f64; 3],
    pub se: [f64; 3],
    pub reference: [f64; 3],
    /// `±∞` marks se = 0 with mean ≠ reference.
    pub z: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub n_replicates: usize,
    pub n_agents: usize,
    pub master_seed: u64,
    pub rows: Vec<SummaryRow>,
    /// Fraction of timestamps with `|z| ≤ z_threshold`, per compartment.
    pub coverage: [f64; 3],
    pub total_clamp_events: u64,
    pub z_threshold: f64,
    pub coverage_threshold: f64,
    pub pass: bool,
}

pub const SUMMARY_HEADER: &str =
    "t,mean_S,se_S,mean_I,se_I,mean_R,se_R,ref_S,ref_I,ref_R,z_S,z_I,z_R";

impl EnsembleReport {
    pub fn mean_series(&self, compartment: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean[compartment]).collect()
    }

    pub fn summary_csv(&self) -> String {
        use crate::fmt_f64 as f;
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                f(r.mean[0]),
                f(r.se[0]),
                f(r.mean[1]),
                f(r.se[1]),
                f(r.mean[2]),
                f(r.se[2]),
                f(r.reference[0]),
                f(r.reference[1]),
                f(r.reference[2]),
                f(r.z[0]),
                f(r.z[1]),
                f(r.z[2])
            );
        }
        out
    }

    pub fn footer(&self) -> String {
        format!(
            "result: {}\ncoverage_S: {:.4}\ncoverage_I: {:.4}\ncoverage_R: {:.4}\n\
             z_threshold: {}\ncoverage_threshold: {}\ntotal_clamps: {}\nreplicates: {}\nmaster_seed: {}\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.coverage[0],
            self.coverage[1],
            self.coverage[2],
            self.z_threshold,
            self.coverage_threshold,
            self.total_clamp_events,
            self.n_replicates,
            self.master_seed
        )
    }
}

fn z_score(mean: f64, se: f64, reference: f64) -> f64 {
    let diff = mean - reference;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= DETERMINISTIC_AGREEMENT {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Compares ensemble means against `reference` with a z-band rule.
///
/// Passes when, for each of S, I, R, at least `coverage_threshold` of the
/// timestamps have `|z| ≤ z_threshold`, and no infection draw was clamped.
pub fn equivalence_report(
    ensemble: &Ensemble,
    reference: &SirCurve,
    z_threshold: f64,
    coverage_threshold: f64,
) -> Result<EnsembleReport, EnsembleError> {
    report_from_moments(
        &ensemble.moments(),
        ensemble.n_agents,
        ensemble.master_seed,
        ensemble.total_clamp_events(),
        reference,
        z_threshold,
        coverage_threshold,
    )
}

pub fn report_from_moments(
    moments: &Moments,
    n_agents: usize,
    master_seed: u64,
    total_clamp_events: u64,
    reference: &SirCurve,
    z_threshold: f64,
    coverage_threshold: f64,
) -> Result<EnsembleReport, EnsembleError> {
    if z_threshold.is_nan()
        || z_threshold <= 0.0
        || !(coverage_threshold > 0.0 && coverage_threshold <= 1.0)
    {
        return Err(EnsembleError::InvalidThreshold {
            z_threshold,
            coverage_threshold,
        });
    }
    if moments.timestamps() != reference.len() {
        return Err(EnsembleError::HorizonMismatch {
            ensemble: moments.timestamps(),
            reference: reference.len(),
        });
    }
    let ref_total = reference.state(0).total();
    if (ref_total - n_agents as f64).abs() > crate::sir::CONSERVATION_TOLERANCE {
        return Err(EnsembleError::PopulationMismatch {
            ensemble: n_agents,
            reference: ref_total,
        });
    }

    let mut within = [0usize; 3];
    let rows: Vec<SummaryRow> = (0..moments.timestamps())
        .map(|t| {
            let st = reference.state(t);
            let reference = [st.s, st.i, st.r];
            let mean = [0, 1, 2].map(|x| moments.mean(t, x));
            let se = [0, 1, 2].map(|x| moments.standard_error(t, x));
            let z = [0, 1, 2].map(|x| z_score(mean[x], se[x], reference[x]));
            for x in 0..3 {
                if z[x].abs() <= z_threshold {
                    within[x] += 1;
                }
            }
            SummaryRow {
                t,
                mean,
                se,
                reference,
                z,
            }
        })
        .collect();

    let n_t = rows.len() as f64;
    let coverage = within.map(|w| w as f64 / n_t);
    let pass = coverage.iter().all(|&c| c >= coverage_threshold) && total_clamp_events == 0;
    Ok(EnsembleReport {
        n_replicates: moments.count as usize,
        n_agents,
        master_seed,
        rows,
        coverage,
        total_clamp_events,
        z_threshold,
        coverage_threshold,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AsirConfig, InitMode};
    use crate::markov::TransitionMatrix;
    use crate::sir::{simulate_sir_euler, SirParams};
    use std::sync::Arc;

    fn pure_recovery(n_reps: usize, beta_prime: f64) -> (Ensemble, SirCurve) {
        let map = TransitionMatrix::new(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let cfg = AsirConfig {
            alpha_prime: 0.0,
            beta_prime,
            map: Arc::new(map),
            n_agents: 30,
            s0: 0,
            i0: 30,
            r0: 0,
            horizon: 20,
            init_mode: InitMode::Stationary,
            seed: 99,
        };
        let ens = run_ensemble_for(cfg, n_reps).unwrap();
        let curve = simulate_sir_euler(&SirParams {
            alpha: 0.0,
            beta: 0.2,
            n_total: 30.0,
            s0: 0.0,
            i0: 30.0,
            r0: 0.0,
            horizon: 20,
        })
        .unwrap();
        (ens, curve)
    }

    #[test]
    fn needs_two_replicates() {
        let sim = Simulator::new(run_cfg()).unwrap();
        assert_eq!(
            run_ensemble(&sim, 1),
            Err(EnsembleError::TooFewReplicates(1))
        );
    }

    fn run_cfg() -> AsirConfig {
        AsirConfig {
            alpha_prime: 0.0,
            beta_prime: 0.0,
            map: Arc::new(TransitionMatrix::new(&[vec![1.0]]).unwrap()),
            n_agents: 5,
            s0: 5,
            i0: 0,
            r0: 0,
            horizon: 3,
            init_mode: InitMode::Stationary,
            seed: 1,
        }
    }

    #[test]
    fn degenerate_ensemble_has_zero_se() {
        let ens = run_ensemble_for(run_cfg(), 2).unwrap();
        let m = ens.moments();
        for t in 0..4 {
            assert_eq!(m.mean(t, 0), 5.0);
            assert_eq!(m.standard_error(t, 0), 0.0);
        }
        let curve = simulate_sir_euler(&SirParams {
            alpha: 0.3,
            beta: 0.1,
            n_total: 5.0,
            s0: 5.0,
            i0: 0.0,
            r0: 0.0,
            horizon: 3,
        })
        .unwrap();
        let report = equivalence_report(&ens, &curve, 3.0, 0.95).unwrap();
        assert!(report.pass);
        assert!(report.rows.iter().all(|r| r.z == [0.0; 3]));
    }

    #[test]
    fn pure_recovery_matches_and_doubled_beta_fails() {
        let (ens, curve) = pure_recovery(400, 0.2);
        let report = equivalence_report(&ens, &curve, 3.0, 0.95).unwrap();
        assert!(report.pass, "{}", report.footer());

        let (ens, curve) = pure_recovery(400, 0.4);
        let report = equivalence_report(&ens, &curve, 3.0, 0.95).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn shape_checks() {
        let (ens, curve) = pure_recovery(3, 0.2);
        let mut short = curve.clone();
        short.s.pop();
        short.i.pop();
        short.r.pop();
        assert!(matches!(
            equivalence_report(&ens, &short, 3.0, 0.95),
            Err(EnsembleError::HorizonMismatch { .. })
        ));
        let mut bigger = curve.clone();
        bigger.s[0] += 1.0;
        assert!(matches!(
            equivalence_report(&ens, &bigger, 3.0, 0.95),
            Err(EnsembleError::PopulationMismatch { .. })
        ));
        assert!(equivalence_report(&ens, &curve, 3.0, 0.0).is_err());
    }

    #[test]
    fn deterministic_disagreement_is_flagged() {
        assert_eq!(z_score(5.0, 0.0, 5.0), 0.0);
        assert_eq!(z_score(5.0, 0.0, 4.0), f64::INFINITY);
        assert_eq!(z_score(3.0, 0.0, 4.0), f64::NEG_INFINITY);
        assert_eq!(z_score(5.0, 0.5, 4.0), 2.0);
    }

    #[test]
    fn standard_error_matches_two_pass_formula() {
        let (ens, _) = pure_recovery(50, 0.2);
        let m = ens.moments();
        for t in [1, 5, 10] {
            let xs: Vec<f64> = ens
                .replicates
                .iter()
                .map(|r| r[t].infected as f64)
                .collect();
            let mean = xs.iter().sum::<f64>() / 50.0;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 49.0;
            assert!((m.mean(t, 1) - mean).abs() < 1e-12);
            assert!((m.standard_error(t, 1) - (var / 50.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let (ens, _) = pure_recovery(64, 0.2);
        let map = TransitionMatrix::new(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let sim = Simulator::new(AsirConfig {
            alpha_prime: 0.0,
            beta_prime: 0.2,
            map: Arc::new(map),
            n_agents: 30,
            s0: 0,
            i0: 30,
            r0: 0,
            horizon: 20,
            init_mode: InitMode::Stationary,
            seed: 99,
        })
        .unwrap();
        assert_eq!(run_ensemble_with_workers(&sim, 64, 1).unwrap(), ens);
        assert_eq!(run_ensemble_with_workers(&sim, 64, 3).unwrap(), ens);
    }
}
