//! Experiment runners behind the command-line subcommands. Each returns the
//! artifacts to write instead of touching the filesystem.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, DecayStart, ExperimentConfig, TauCorr};
use crate::exec::Exec;
use crate::io::{csv, envelope, events_csv, float, parse_events_csv, SchemaError};
use crate::parrep::{
    calibration_report, direct_run, parrep_run, speedup_report, ParRepConfig, ParRepError, SpeedProfile,
    StateTrajectory, WellModels,
};
use crate::potential::StateMap;
use crate::qsd::{fleming_viot, restart_dephasing, single_walker_redistribution, tv_to_density, QsdError};
use crate::rng::RngStream;
use crate::sde::{run_until_exit_with, ExitEvent, ExitFace, ExitOutcome, SdeError, WalkerState};
use crate::spectral::{build_spectral_model, InitialMeasure, SpectralError, SpectralModel};
use crate::stats::{self, StatsError, TestResult};

/// Significance level of `compare`.
pub const COMPARE_ALPHA: f64 = 0.01;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl RunError {
    /// Process exit code: 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Schema(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Numerical(e.to_string())
            }
        }
    )*};
}
numerical!(SpectralError, QsdError, ParRepError, SdeError, StatsError);

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Verdict of the statistical comparison, for commands that make one.
    pub verdict: Option<bool>,
}

impl Outcome {
    fn files(files: Vec<(&str, String)>) -> Self {
        Self {
            artifacts: files
                .into_iter()
                .map(|(name, contents)| Artifact {
                    name: name.into(),
                    contents,
                })
                .collect(),
            verdict: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitSource {
    QsdExact,
    FlemingViot,
    Restart,
    Point,
}

impl FromStr for ExitSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qsd_exact" => Ok(ExitSource::QsdExact),
            "fv" => Ok(ExitSource::FlemingViot),
            "restart" => Ok(ExitSource::Restart),
            "point" => Ok(ExitSource::Point),
            other => Err(format!("unknown source `{other}` (expected qsd_exact, fv, restart or point)")),
        }
    }
}

impl fmt::Display for ExitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExitSource::QsdExact => "qsd_exact",
            ExitSource::FlemingViot => "fv",
            ExitSource::Restart => "restart",
            ExitSource::Point => "point",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMethod {
    FlemingViot,
    Restart,
    Redistribution,
}

impl FromStr for SampleMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fv" => Ok(SampleMethod::FlemingViot),
            "restart" => Ok(SampleMethod::Restart),
            "redistribution" => Ok(SampleMethod::Redistribution),
            other => Err(format!("unknown method `{other}` (expected fv, restart or redistribution)")),
        }
    }
}

impl fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMethod::FlemingViot => "fv",
            SampleMethod::Restart => "restart",
            SampleMethod::Redistribution => "redistribution",
        })
    }
}

fn root_stream(cfg: &ExperimentConfig) -> RngStream {
    RngStream::new(cfg.seed, 0)
}

fn well_model(cfg: &ExperimentConfig) -> Result<SpectralModel, RunError> {
    let w = cfg.require_well()?;
    Ok(build_spectral_model(&cfg.potential, w.a, w.b, w.n, w.k)?)
}

fn test_value(r: Result<TestResult, StatsError>) -> Value {
    match r {
        Ok(t) => json!(t),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

/// Finite floats as numbers; everything else as `null`.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn positions_csv(positions: &[Vec<f64>]) -> String {
    let dim = positions.first().map_or(1, Vec::len);
    let header: Vec<&str> = ["x", "y"].into_iter().take(dim.min(2)).collect();
    csv(&header, positions.iter().map(|p| p.iter().map(|v| float(*v)).collect()))
}

/// Eigenvalues, QSD, exit side probabilities and mean exit time of the
/// configured well.
pub fn spectrum(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let model = well_model(cfg)?;
    let g = model.grid();
    let hitting = model.hitting_measure()?;
    let l = model.eigenvalues();
    let nodes = g.nodes();
    let u2 = (model.mode_count() >= 2).then(|| model.eigenfunction(1));
    let mut header = vec!["x", "V", "nu", "u1"];
    if u2.is_some() {
        header.push("u2");
    }
    let table = csv(
        &header,
        (0..g.n).map(|i| {
            let mut row = vec![
                float(nodes[i]),
                float(model.potential_values()[i]),
                float(model.qsd_density()[i]),
                float(model.eigenfunction(0)[i]),
            ];
            if let Some(u) = u2 {
                row.push(float(u[i]));
            }
            row
        }),
    );
    let result = json!({
        "a": g.a,
        "b": g.b,
        "n": g.n,
        "beta": model.beta(),
        "eigenvalues": l,
        "gap": model.gap(),
        "mean_exit_qsd": 1.0 / l[0],
        "hitting": { "left": hitting.left, "right": hitting.right, "raw_sum": hitting.raw_sum },
    });
    Ok(Outcome::files(vec![
        ("spectrum.json", envelope("spectrum", &cfg.hash(), Some(cfg.seed), result)),
        ("spectrum.csv", table),
    ]))
}

fn initial_positions(
    cfg: &ExperimentConfig,
    source: ExitSource,
    model: &SpectralModel,
    statemap: &StateMap,
    rng: &RngStream,
) -> Result<(Vec<Vec<f64>>, Value), RunError> {
    let s = &cfg.sampling;
    let exec = Exec::default();
    Ok(match source {
        ExitSource::QsdExact => {
            let xs = model.sample_qsd(&mut rng.clone(), s.count);
            (xs.into_iter().map(|x| vec![x]).collect(), Value::Null)
        }
        ExitSource::Point => (vec![cfg.require_start()?; s.count], Value::Null),
        ExitSource::FlemingViot => {
            let start = WalkerState::at(cfg.require_start()?, statemap);
            let t_end = cfg.require_t_end()?;
            let e = fleming_viot(&start, s.count, t_end, cfg.dt, &cfg.potential, statemap, rng, exec)?;
            (e.positions, json!({ "branch_count": e.branch_count, "t_end": t_end }))
        }
        ExitSource::Restart => {
            let start = WalkerState::at(cfg.require_start()?, statemap);
            let tau = s
                .tau_dephase
                .ok_or_else(|| ConfigError::Missing("sampling.tau_dephase".into()))?;
            let e = restart_dephasing(
                &start,
                s.count,
                tau,
                cfg.dt,
                &cfg.potential,
                statemap,
                rng,
                s.max_restarts,
                exec,
            )?;
            (e.positions, json!({ "restarts": e.restarts.iter().sum::<u64>(), "tau_dephase": tau }))
        }
    })
}

/// Exit events from `sampling.count` walkers started from `source`, tested
/// against the spectral prediction of the well.
pub fn exit_stats(cfg: &ExperimentConfig, source: ExitSource) -> Result<Outcome, RunError> {
    let model = well_model(cfg)?;
    let statemap = cfg.build_state_map()?;
    let root = root_stream(cfg);
    let (starts, source_info) = initial_positions(cfg, source, &model, &statemap, &root.child(1))?;
    let s = &cfg.sampling;
    let exits = Exec::default().map_range(starts.len(), |i| {
        let start = WalkerState::at(starts[i].clone(), &statemap);
        let mut rng = root.child(2).child(i as u64);
        run_until_exit_with(&start, &cfg.potential, &statemap, cfg.dt, &mut rng, s.censor, s.detection)
            .map(|o| match o {
                ExitOutcome::Exited(e) => Some(ExitEvent { replica_id: i, ..e }),
                ExitOutcome::Timeout(_) => None,
            })
    });
    let mut events = Vec::with_capacity(exits.len());
    let mut censored = 0usize;
    for e in exits {
        match e? {
            Some(e) => events.push(e),
            None => censored += 1,
        }
    }

    let lambda = model.eigenvalues()[0];
    let times: Vec<f64> = events.iter().map(|e| e.exit_time).collect();
    let ks = if s.censor.is_finite() {
        let norm = -(-lambda * s.censor).exp_m1();
        stats::ks_one_sample(
            &times,
            |t| -(-lambda * t).exp_m1() / norm,
            format!("Exp(rate = {lambda}) truncated at {}", s.censor),
        )
    } else {
        stats::ks_exponential(&times, lambda)
    };
    let faces: Vec<i32> = events.iter().map(|e| e.exit_face.code()).collect();
    let chi2 = stats::chi2_independence(&faces, &stats::quartile_labels(&times));
    let (mean, se) = if times.len() >= 2 {
        stats::mean_and_se(&times)
    } else {
        (f64::NAN, f64::NAN)
    };
    let oracle_mean = match source {
        ExitSource::Point => {
            let x0 = cfg.require_start()?[0];
            model.mean_exit_time(&InitialMeasure::PointMass(x0), model.mode_count())?.value
        }
        _ => 1.0 / lambda,
    };
    let left = events.iter().filter(|e| e.exit_face == ExitFace::Left).count();
    let hitting = model.hitting_measure().ok();

    let table = csv(
        &["replica_id", "exit_time", "hitting_point", "exit_face", "next_label"],
        events.iter().map(|e| {
            vec![
                e.replica_id.to_string(),
                float(e.exit_time),
                float(e.hitting_point[0]),
                e.exit_face.code().to_string(),
                e.next_label.map_or(-1, |l| l as i64).to_string(),
            ]
        }),
    );
    let result = json!({
        "source": source.to_string(),
        "source_info": source_info,
        "detection": format!("{:?}", s.detection).to_lowercase(),
        "count": starts.len(),
        "exits": events.len(),
        "censored": censored,
        "censor": num(s.censor),
        "lambda1": lambda,
        "ks_exponential": test_value(ks),
        "chi2_face_vs_time_quartile": test_value(chi2),
        "mean_exit": num(mean),
        "mean_exit_se": num(se),
        "oracle_mean_exit": oracle_mean,
        "mean_ratio": num(mean / oracle_mean),
        "left_fraction": num(left as f64 / events.len() as f64),
        "oracle_left": hitting.map(|h| h.left),
    });
    Ok(Outcome::files(vec![
        ("exit_stats.json", envelope("exit-stats", &cfg.hash(), Some(cfg.seed), result)),
        ("exits.csv", table),
    ]))
}

/// Approximate QSD samples by the chosen method, with their distance to the
/// spectral QSD when a well is configured.
pub fn qsd_sample(cfg: &ExperimentConfig, method: SampleMethod) -> Result<Outcome, RunError> {
    let statemap = cfg.build_state_map()?;
    let start = WalkerState::at(cfg.require_start()?, &statemap);
    let rng = root_stream(cfg).child(1);
    let s = &cfg.sampling;
    let exec = Exec::default();
    let (positions, info) = match method {
        SampleMethod::FlemingViot => {
            let t_end = cfg.require_t_end()?;
            let e = fleming_viot(&start, s.count, t_end, cfg.dt, &cfg.potential, &statemap, &rng, exec)?;
            let info = json!({ "branch_count": e.branch_count, "t_end": t_end, "replicas": s.count });
            (e.positions, info)
        }
        SampleMethod::Restart => {
            let tau = s
                .tau_dephase
                .ok_or_else(|| ConfigError::Missing("sampling.tau_dephase".into()))?;
            let e = restart_dephasing(
                &start,
                s.count,
                tau,
                cfg.dt,
                &cfg.potential,
                &statemap,
                &rng,
                s.max_restarts,
                exec,
            )?;
            let info = json!({
                "restarts": e.restarts.iter().sum::<u64>(),
                "max_restarts_per_replica": e.restarts.iter().max(),
                "work": e.work.iter().sum::<f64>(),
                "tau_dephase": tau,
                "replicas": s.count,
            });
            (e.positions, info)
        }
        SampleMethod::Redistribution => {
            let t_end = cfg.require_t_end()?;
            let r = single_walker_redistribution(&start, t_end, cfg.dt, &cfg.potential, &statemap, &rng)?;
            let info = json!({ "redistributions": r.redistributions, "t_end": r.elapsed });
            (r.occupation, info)
        }
    };
    let tv = match cfg.well {
        Some(_) if cfg.potential.dimension() == 1 => {
            let model = well_model(cfg)?;
            let xs: Vec<f64> = positions.iter().map(|p| p[0]).collect();
            let g = model.grid();
            Some(tv_to_density(&xs, &g.nodes(), model.qsd_density(), (g.a, g.b), s.bins)?)
        }
        _ => None,
    };
    let result = json!({
        "method": method.to_string(),
        "samples": positions.len(),
        "bins": s.bins,
        "tv_to_oracle": tv,
        "details": info,
    });
    Ok(Outcome::files(vec![
        ("qsd_sample.json", envelope("qsd-sample", &cfg.hash(), Some(cfg.seed), result)),
        ("qsd_positions.csv", positions_csv(&positions)),
    ]))
}

/// Distance of the conditioned law to the QSD over time, and its fitted
/// exponential rate against the spectral gap.
pub fn decay(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let model = well_model(cfg)?;
    let d = cfg.require_decay()?;
    let mu0 = match d.start {
        DecayStart::Point(x) => InitialMeasure::PointMass(x),
        DecayStart::Qsd => InitialMeasure::Qsd,
    };
    let times = d.times();
    let mut rows = Vec::with_capacity(times.len());
    for &t in &times {
        let c = model.conditioned_density(&mu0, t)?;
        let survival = model.survival_probability(&mu0, t, model.mode_count())?.value;
        rows.push(vec![float(t), float(model.tv_to_qsd(&c.density)), float(survival)]);
    }
    let gap = model.gap();
    let (status, rate, r_squared) = match model.decay_rate_fit(&mu0, &times) {
        Ok(f) => ("fitted", Some(f.rate), Some(f.r_squared)),
        Err(SpectralError::AlreadyConverged) => ("already_converged", None, None),
        Err(e) => return Err(e.into()),
    };
    let result = json!({
        "start": d.start.to_string(),
        "status": status,
        "rate": rate,
        "r_squared": r_squared,
        "gap": gap,
        "rate_over_gap": rate.zip(gap).map(|(r, g)| r / g),
    });
    Ok(Outcome::files(vec![
        ("decay.json", envelope("decay", &cfg.hash(), Some(cfg.seed), result)),
        ("decay.csv", csv(&["t", "tv", "survival"], rows)),
    ]))
}

fn config_echo(cfg: &ExperimentConfig) -> Value {
    let m: Map<String, Value> = cfg
        .raw
        .pairs()
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect();
    Value::Object(m)
}

fn per_state_summary(traj: &StateTrajectory) -> Value {
    let mut by_state: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for e in &traj.events {
        let key = e.state.map_or("unknown".to_string(), |s| s.to_string());
        let entry = by_state.entry(key).or_default();
        entry.0 += 1;
        entry.1 += e.hold;
    }
    by_state
        .into_iter()
        .map(|(k, (n, total))| (k, json!({ "visits": n, "mean_hold": total / n as f64 })))
        .collect::<Map<String, Value>>()
        .into()
}

/// Resolves `parrep.tau_corr` against the well models.
fn resolve_tau_corr(tau: TauCorr, dt: f64, wells: &WellModels) -> Result<f64, RunError> {
    match tau {
        TauCorr::Fixed(v) => Ok(v),
        TauCorr::GapMultiple(m) => {
            let g = wells.gap_reciprocal_max().ok_or(ConfigError::MissingBlock {
                block: "well",
                hint: "tau_corr = gap:M needs bounded one-dimensional interval wells",
            })?;
            Ok((m * g / dt).ceil() * dt)
        }
    }
}

pub fn parrep(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let block = cfg.require_parrep()?;
    let statemap = cfg.build_state_map()?;
    let start = WalkerState::at(cfg.require_start()?, &statemap);
    let wells = WellModels::for_state_map(&cfg.potential, &statemap, cfg.well_n, cfg.well_k)?;
    let tau_corr = resolve_tau_corr(block.tau_corr, cfg.dt, &wells)?;
    let mut pc = ParRepConfig::new(block.replicas, cfg.dt, tau_corr, block.method);
    if let Some(t) = block.tau_dephase {
        pc.tau_dephase = t;
    }
    if let Some(r) = block.relaxation_time {
        pc.relaxation_time = r;
    }
    pc.max_events = block.max_events;
    pc.max_restarts = block.max_restarts;
    if let Some(speeds) = &block.speeds {
        pc.speeds = Some(
            speeds
                .iter()
                .map(|&s| SpeedProfile::constant(s))
                .collect::<Result<_, _>>()?,
        );
    }
    let wells_ref = (!wells.is_empty()).then_some(&wells);
    let run = parrep_run(&start, &pc, &cfg.potential, &statemap, wells_ref, &root_stream(cfg))?;
    let report = speedup_report(&run.trajectory, &run.ledger, pc.replicas);
    let result = json!({
        "tau_corr": num(tau_corr),
        "method": pc.method.to_string(),
        "replicas": pc.replicas,
        "events": run.trajectory.events.len(),
        "t_simu": run.trajectory.total_t_simu,
        "clock": run.ledger,
        "speedup": report,
        "calibration": (!wells.is_empty()).then(|| calibration_report(tau_corr, &wells)),
        "states": per_state_summary(&run.trajectory),
        "config": config_echo(cfg),
    });
    Ok(Outcome::files(vec![
        ("parrep_summary.json", envelope("parrep-run", &cfg.hash(), Some(cfg.seed), result)),
        ("parrep_events.csv", events_csv(&run.trajectory)),
    ]))
}

pub fn direct(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let statemap = cfg.build_state_map()?;
    let start = WalkerState::at(cfg.require_start()?, &statemap);
    let max_events = cfg.parrep.as_ref().map_or(1000, |p| p.max_events);
    let traj = direct_run(&start, cfg.dt, &cfg.potential, &statemap, &root_stream(cfg), max_events)?;
    let result = json!({
        "events": traj.events.len(),
        "t_simu": traj.total_t_simu,
        "dt": cfg.dt,
        "states": per_state_summary(&traj),
        "config": config_echo(cfg),
    });
    Ok(Outcome::files(vec![
        ("direct_summary.json", envelope("direct-run", &cfg.hash(), Some(cfg.seed), result)),
        ("direct_events.csv", events_csv(&traj)),
    ]))
}

fn state_name(s: Option<usize>) -> String {
    s.map_or("unknown".into(), |s| s.to_string())
}

/// Per-state two-sample KS on hold times and a χ² test of the transition
/// counts between two events tables.
pub fn compare(a: (&str, &str), b: (&str, &str)) -> Result<Outcome, RunError> {
    let ta = parse_events_csv(a.1, a.0)?;
    let tb = parse_events_csv(b.1, b.0)?;
    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    let mut record = |name: String, state: Option<String>, r: Result<TestResult, StatsError>| match r {
        Ok(t) => tests.push(json!({
            "test": name,
            "state": state,
            "statistic": t.statistic,
            "p_value": t.p_value,
            "n": t.n,
            "verdict": if t.passes(COMPARE_ALPHA) { "pass" } else { "fail" },
        })),
        Err(e) => skipped.push(json!({ "test": name, "state": state, "reason": e.to_string() })),
    };
    let mut states = ta.states();
    states.extend(tb.states());
    states.sort();
    states.dedup();
    for s in states {
        record(
            "two_sample_ks_hold".into(),
            Some(state_name(s)),
            stats::two_sample_ks(&ta.holds_in(s), &tb.holds_in(s)),
        );
    }
    let label = |(f, t): (Option<usize>, Option<usize>)| format!("{}->{}", state_name(f), state_name(t));
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for (run, traj) in [&ta, &tb].into_iter().enumerate() {
        for tr in traj.transitions() {
            rows.push(run);
            cols.push(label(tr));
        }
    }
    record("chi2_transitions".into(), None, stats::chi2_independence(&rows, &cols));
    let verdict = tests.iter().all(|t| t["verdict"] == "pass");
    let mut h = Sha256::new();
    for text in [a.1, b.1] {
        h.update(Sha256::digest(text.as_bytes()));
    }
    let hash: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let result = json!({
        "a": a.0,
        "b": b.0,
        "alpha": COMPARE_ALPHA,
        "events": [ta.events.len(), tb.events.len()],
        "tests": tests,
        "skipped": skipped,
        "verdict": if verdict { "pass" } else { "fail" },
    });
    Ok(Outcome {
        artifacts: vec![Artifact {
            name: "compare.json".into(),
            contents: envelope("compare", &hash, None, result),
        }],
        verdict: Some(verdict),
    })
}
