use std::sync::Arc;

use asir_core::engine::{AsirConfig, InitMode, Simulator};
use asir_core::ensemble::{equivalence_report, report_from_moments, run_ensemble, Moments};
use asir_core::markov::TransitionMatrix;
use asir_core::sir::{simulate_sir_euler, SirParams};
use proptest::prelude::*;

fn config(seed: u64) -> AsirConfig {
    AsirConfig {
        alpha_prime: 0.01,
        beta_prime: 0.15,
        map: Arc::new(
            TransitionMatrix::new(&[
                vec![0.5, 0.3, 0.2],
                vec![0.3, 0.3, 0.4],
                vec![0.2, 0.4, 0.4],
            ])
            .unwrap(),
        ),
        n_agents: 60,
        s0: 50,
        i0: 10,
        r0: 0,
        horizon: 15,
        init_mode: InitMode::Stationary,
        seed,
    }
}

fn reference() -> asir_core::SirCurve {
    simulate_sir_euler(&SirParams {
        alpha: 0.01 * 60.0 / 3.0,
        beta: 0.15,
        n_total: 60.0,
        s0: 50.0,
        i0: 10.0,
        r0: 0.0,
        horizon: 15,
    })
    .unwrap()
}

#[test]
fn se_shrinks_like_inverse_root_n() {
    let sim = Simulator::new(config(1)).unwrap();
    let small = run_ensemble(&sim, 200).unwrap().moments();
    let big = run_ensemble(&sim, 400).unwrap().moments();
    // average the ratio over the stochastic timestamps of the infected curve
    let ratios: Vec<f64> = (1..=15)
        .map(|t| big.standard_error(t, 1) / small.standard_error(t, 1))
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((0.6..=0.82).contains(&mean_ratio), "ratio {mean_ratio}");
}

#[test]
fn means_are_conserved() {
    let ens = run_ensemble(&Simulator::new(config(2)).unwrap(), 50).unwrap();
    let report = equivalence_report(&ens, &reference(), 3.0, 0.95).unwrap();
    for row in &report.rows {
        assert!((row.mean.iter().sum::<f64>() - 60.0).abs() <= 1e-9);
        assert!(row.se.iter().all(|s| *s >= 0.0));
    }
}

#[test]
fn same_master_seed_gives_same_ensemble() {
    let sim = Simulator::new(config(3)).unwrap();
    assert_eq!(
        run_ensemble(&sim, 20).unwrap(),
        run_ensemble(&sim, 20).unwrap()
    );
}

#[test]
fn summary_csv_shape() {
    let ens = run_ensemble(&Simulator::new(config(4)).unwrap(), 10).unwrap();
    let report = equivalence_report(&ens, &reference(), 3.0, 0.95).unwrap();
    let csv = report.summary_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,mean_S,se_S,mean_I,se_I,mean_R,se_R,ref_S,ref_I,ref_R,z_S,z_I,z_R")
    );
    assert_eq!(lines.clone().count(), 16);
    for line in lines {
        assert_eq!(line.split(',').count(), 13);
    }
    assert!(report.footer().contains("replicates: 10"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn reduction_order_does_not_matter(perm in Just((0..30usize).collect::<Vec<_>>()).prop_shuffle()) {
        let ens = run_ensemble(&Simulator::new(config(5)).unwrap(), 30).unwrap();
        let in_order = equivalence_report(&ens, &reference(), 3.0, 0.95).unwrap();

        // fold permuted replicates into two partial accumulators, merge in reverse
        let (left, right) = perm.split_at(perm.len() / 3);
        let mut a = Moments::new(ens.timestamps());
        let mut b = Moments::new(ens.timestamps());
        for &r in left { a.add(&ens.replicates[r]); }
        for &r in right { b.add(&ens.replicates[r]); }
        let merged = b.merge(&a);
        let shuffled = report_from_moments(
            &merged, ens.n_agents, ens.master_seed, ens.total_clamp_events(),
            &reference(), 3.0, 0.95,
        ).unwrap();
        prop_assert_eq!(in_order, shuffled);
    }
}
