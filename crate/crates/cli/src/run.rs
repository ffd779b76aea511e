//! Mode dispatch and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use asir_core::bridge::{deduce_asir, BridgeError};
use asir_core::engine::{
    write_agent_rows, write_trajectory_rows, AsirConfig, Simulator, AGENT_TRACE_HEADER,
    TRAJECTORY_HEADER,
};
use asir_core::ensemble::{equivalence_report, run_ensemble};
use asir_core::experiment::{failure_mode_experiment, ExperimentError, FailureModeSpec};
use asir_core::markov::{ergodicity, stationary_distribution, MarkovError, TransitionMatrix};
use asir_core::sir::{simulate_sir_euler, simulate_sir_rk4};
use asir_core::{fmt_f64, STREAM_ALGORITHM};
use sha2::{Digest, Sha256};

use crate::config::{build_map, parse_config, ExperimentConfig, Mode};
use crate::error::{CliError, EXIT_OK, EXIT_VERIFY_FAIL};

pub const DEFAULT_OUT_DIR: &str = "out";
pub const METADATA_FILE: &str = "metadata.txt";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.directory`.
    pub out_dir: Option<PathBuf>,
    /// Overrides `ensemble.workers`.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
}

/// Reads, parses and executes the config at `path`.
pub fn run_file(mode: Mode, path: &Path, options: &RunOptions) -> Result<Outcome, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Parse {
        location: format!("byte {}", e.utf8_error().valid_up_to()),
        message: "config is not valid UTF-8".into(),
    })?;
    let config = parse_config(&text, mode)?;
    execute(mode, &config, &config_hash(&text), options)
}

pub fn config_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

pub fn execute(
    mode: Mode,
    config: &ExperimentConfig,
    config_hash: &str,
    options: &RunOptions,
) -> Result<Outcome, CliError> {
    let out_dir = options
        .out_dir
        .clone()
        .or_else(|| {
            config
                .output
                .as_ref()
                .and_then(|o| o.directory.as_ref())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&out_dir).map_err(|source| CliError::Write {
        path: out_dir.clone(),
        source,
    })?;

    let workers = options
        .workers
        .or_else(|| config.ensemble.as_ref().and_then(|e| e.workers));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(CliError::runtime)?;

    let out = Output { dir: &out_dir };
    let (exit_code, seed) = pool.install(|| match mode {
        Mode::Sir => sir_mode(config, &out).map(|c| (c, None)),
        Mode::Stationary => stationary_mode(config, &out).map(|c| (c, None)),
        Mode::Deduce => deduce_mode(config, &out).map(|c| (c, None)),
        Mode::Asir => asir_mode(config, &out),
        Mode::Verify => verify_mode(config, &out),
        Mode::FailureMode => failure_mode(config, &out),
    })?;
    out.write(METADATA_FILE, &metadata(mode, config_hash, seed))?;
    Ok(Outcome { exit_code, out_dir })
}

fn metadata(mode: Mode, config_hash: &str, seed: Option<u64>) -> String {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!(
        "tool: asir\ntool_version: {}\nmode: {mode}\nconfig_sha256: {config_hash}\n\
         master_seed: {}\nrandom_stream: {STREAM_ALGORITHM}\ntimestamp_unix: {timestamp}\n",
        env!("CARGO_PKG_VERSION"),
        seed.map_or("none".to_string(), |s| s.to_string()),
    )
}

struct Output<'a> {
    dir: &'a Path,
}

impl Output<'_> {
    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Write { path, source })
    }
}

fn bridge_error(e: BridgeError) -> CliError {
    match e {
        BridgeError::NonIntegerCompartments { name, .. } => {
            let key = match name {
                "n_total" => "sir.n".to_string(),
                "s0" | "i0" | "r0" => format!("sir.{name}"),
                _ => "sir".to_string(),
            };
            CliError::invalid(key, e)
        }
        BridgeError::AlphaPrimeOutOfRange { .. } => CliError::invalid("sir.alpha", e),
        BridgeError::Sir(_) => CliError::invalid("sir", e),
        BridgeError::Markov(_) => CliError::invalid("map", e),
    }
}

fn sir_mode(config: &ExperimentConfig, out: &Output) -> Result<i32, CliError> {
    let sir = config.sir();
    let params = sir.params();
    let euler = simulate_sir_euler(&params).map_err(|e| CliError::invalid("sir", e))?;
    let rk4 = simulate_sir_rk4(&params, sir.substeps).map_err(|e| CliError::invalid("sir", e))?;
    out.write("sir_euler.csv", &euler.to_csv())?;
    out.write("sir_rk4.csv", &rk4.to_csv())?;

    let gap = (0..euler.len())
        .map(|t| (euler.state(t).i - rk4.state(t).i).abs())
        .fold(0.0, f64::max);
    let (peak_t, peak_i) = euler.peak_infected();
    let last = euler.state(euler.horizon());
    println!("euler peak I: {peak_i:.4} at t = {peak_t}");
    println!(
        "euler final: S {:.4} I {:.4} R {:.4}",
        last.s, last.i, last.r
    );
    println!("max |I_euler - I_rk4|: {gap:.4}");
    Ok(EXIT_OK)
}

fn stationary_mode(config: &ExperimentConfig, out: &Output) -> Result<i32, CliError> {
    let map = build_map(config)?;
    let report = ergodicity(&map);
    let mut text = format!(
        "locations: {}\nirreducible: {}\naperiodic: {}\ncommunicating_classes: {}\nperiod: {}\n",
        map.n_locations(),
        report.irreducible,
        report.aperiodic,
        report.communicating_class_count,
        report.period
    );
    if !report.is_ergodic() {
        print!("{text}");
        out.write("stationary.txt", &text)?;
        return Err(CliError::invalid(
            "map",
            MarkovError::NotErgodic {
                communicating_class_count: report.communicating_class_count,
                period: report.period,
            },
        ));
    }
    let pi = stationary_distribution(&map).map_err(CliError::runtime)?;
    let _ = write!(
        text,
        "meetup_probability: {}\nresidual: {}\n",
        fmt_f64(pi.meetup_probability()),
        fmt_f64(pi.residual(&map))
    );
    let mut csv = String::from("location,pi\n");
    for (k, p) in pi.probabilities().iter().enumerate() {
        let _ = writeln!(csv, "{k},{}", fmt_f64(*p));
    }
    print!("{text}");
    out.write("stationary.txt", &text)?;
    out.write("stationary.csv", &csv)?;
    Ok(EXIT_OK)
}

/// Agent configuration: deduced from the SIR block, then overridden by `[asir]`.
fn agent_config(
    config: &ExperimentConfig,
    map: Arc<TransitionMatrix>,
) -> Result<(AsirConfig, Vec<String>), CliError> {
    let asir = config.asir_or_default();
    let mut params = config.sir().params();
    // An explicit alpha' must not be rejected because the deduced one would be.
    if asir.alpha_prime.is_some() {
        params.alpha = 0.0;
    }
    let deduced = deduce_asir(&params, map).map_err(bridge_error)?;
    let mut cfg = deduced.config;
    if let Some(a) = asir.alpha_prime {
        cfg.alpha_prime = a;
    }
    if let Some(b) = asir.beta_prime {
        cfg.beta_prime = b;
    }
    cfg.init_mode = asir.init_mode.into();
    cfg.seed = asir.seed;
    cfg.validate().map_err(|e| CliError::invalid("asir", e))?;
    Ok((cfg, deduced.warnings))
}

fn deduce_mode(config: &ExperimentConfig, out: &Output) -> Result<i32, CliError> {
    let map = build_map(config)?;
    let deduced = deduce_asir(&config.sir().params(), map).map_err(bridge_error)?;
    let cfg = &deduced.config;
    let mut text = format!(
        "alpha_prime: {}\nbeta_prime: {}\nmeetup_probability: {}\nn_agents: {}\ns0: {}\ni0: {}\nr0: {}\n",
        fmt_f64(cfg.alpha_prime),
        fmt_f64(cfg.beta_prime),
        fmt_f64(deduced.meetup),
        cfg.n_agents,
        cfg.s0,
        cfg.i0,
        cfg.r0
    );
    for w in &deduced.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    print!("{text}");
    out.write("deduce.txt", &text)?;

    let mut generated = config.clone();
    generated.mode = Some(Mode::Asir);
    let mut asir = generated.asir.take().unwrap_or_default();
    asir.alpha_prime = Some(cfg.alpha_prime);
    asir.beta_prime = Some(cfg.beta_prime);
    generated.asir = Some(asir);
    let body = toml::to_string(&generated).map_err(CliError::runtime)?;
    out.write(
        "asir.toml",
        &format!("# generated by `asir deduce`; run with `asir asir --config asir.toml`\n{body}"),
    )?;
    Ok(EXIT_OK)
}

fn asir_mode(config: &ExperimentConfig, out: &Output) -> Result<(i32, Option<u64>), CliError> {
    let map = build_map(config)?;
    let (cfg, warnings) = agent_config(config, map)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let seed = cfg.seed;
    let replicates = config.ensemble.as_ref().map_or(1, |e| e.replicates);
    let trace = config.output.as_ref().is_some_and(|o| o.trace);
    let sim = Simulator::new(cfg).map_err(|e| CliError::invalid("asir", e))?;

    let trajectory = if trace {
        let mut trajectory = format!("{TRAJECTORY_HEADER}\n");
        let mut agents = format!("{AGENT_TRACE_HEADER}\n");
        for r in 0..replicates as u64 {
            let records =
                sim.run_observed(r, |t, state| write_agent_rows(&mut agents, r, t, state));
            write_trajectory_rows(&mut trajectory, r, &records);
        }
        out.write("agent_trace.csv", &agents)?;
        trajectory
    } else if replicates >= 2 {
        run_ensemble(&sim, replicates)
            .map_err(CliError::runtime)?
            .trajectory_csv()
    } else {
        let mut trajectory = format!("{TRAJECTORY_HEADER}\n");
        write_trajectory_rows(&mut trajectory, 0, &sim.run(0));
        trajectory
    };
    out.write("trajectory.csv", &trajectory)?;
    println!("replicates: {replicates}\nmaster_seed: {seed}");
    Ok((EXIT_OK, Some(seed)))
}

fn verify_mode(config: &ExperimentConfig, out: &Output) -> Result<(i32, Option<u64>), CliError> {
    let map = build_map(config)?;
    let (cfg, warnings) = agent_config(config, map)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let ens_block = config.ensemble();
    let header = format!(
        "alpha_prime: {}\nbeta_prime: {}\n",
        fmt_f64(cfg.alpha_prime),
        fmt_f64(cfg.beta_prime)
    );
    let seed = cfg.seed;
    let sim = Simulator::new(cfg).map_err(|e| CliError::invalid("asir", e))?;
    let ensemble = run_ensemble(&sim, ens_block.replicates).map_err(CliError::runtime)?;
    let reference =
        simulate_sir_euler(&config.sir().params()).map_err(|e| CliError::invalid("sir", e))?;
    let report = equivalence_report(
        &ensemble,
        &reference,
        ens_block.z_threshold,
        ens_block.coverage_threshold,
    )
    .map_err(CliError::runtime)?;

    let text = format!("{header}{}", report.footer());
    out.write("summary.csv", &report.summary_csv())?;
    out.write("report.txt", &text)?;
    print!("{text}");
    let code = if report.pass {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAIL
    };
    Ok((code, Some(seed)))
}

fn failure_mode(config: &ExperimentConfig, out: &Output) -> Result<(i32, Option<u64>), CliError> {
    let reference_map = build_map(config)?;
    let f = config.failure();
    let ens = config.ensemble();
    let spec = FailureModeSpec {
        reference_sir: config.sir().params(),
        reference_map: (*reference_map).clone(),
        side: f.side,
        stay_prob: f.stay_prob,
        grid_agents: f.agents,
        grid_infected: f.infected,
        replicates: ens.replicates,
        seed: f.seed,
        z_threshold: ens.z_threshold,
        coverage_threshold: ens.coverage_threshold,
        skip_grid_meetup: f.skip_grid_meetup,
    };
    let outcome = failure_mode_experiment(&spec).map_err(|e| match e {
        ExperimentError::Bridge(b) => bridge_error(b),
        ExperimentError::Markov(_) => CliError::invalid("failure", e),
        ExperimentError::BadGridPopulation { .. } => CliError::invalid("failure.infected", e),
        other => CliError::runtime(other),
    })?;

    let summary = outcome.summary.render();
    out.write("grid_summary.csv", &outcome.grid_report.summary_csv())?;
    out.write("grid_report.txt", &outcome.grid_report.footer())?;
    out.write(
        "contrast_summary.csv",
        &outcome.contrast_report.summary_csv(),
    )?;
    out.write("contrast_report.txt", &outcome.contrast_report.footer())?;
    out.write("failure_mode.txt", &summary)?;
    print!("{summary}");
    Ok((EXIT_OK, Some(f.seed)))
}
