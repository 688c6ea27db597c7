//! Parallel replica dynamics.
//!
//! A run repeats three steps. The reference walker first evolves for
//! `tau_corr`; every label change in that window is recorded at its
//! observed time and the clock advances by the window. A window without a
//! label change licenses the QSD approximation: the walker is replicated
//! into `N` approximate QSD samples (dephasing, which does not advance the
//! clock), and the replicas evolve independently until the first of them
//! leaves the well. The clock then advances by `N T` (or by the sum of the
//! per-processor physical times when processors run at different speeds),
//! the exiting replica becomes the reference walker, and it evolves for a
//! short relaxation time before the next decorrelation window.

mod clock;
mod stub;
mod trajectory;
mod wells;

pub use clock::{speedup_report, ClockLedger, SpeedProfile, SpeedupReport};
pub use stub::{stub_parallel_step, StubCoupling, StubDynamics, StubExit, StubOutcome};
pub use trajectory::{StateEvent, StateTrajectory, TrajectoryBuilder};
pub use wells::{calibration_report, CalibrationEntry, CalibrationReport, CalibrationStatus, WellModels};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::exec::Exec;
use crate::potential::{PotentialModel, StateMap};
use crate::qsd::{fleming_viot, restart_dephasing, QsdError, DEFAULT_MAX_RESTARTS};
use crate::rng::{RngStream, REFERENCE_SLOT};
use crate::sde::{steps_in, ExitEvent, ExitFace, Integrator, SdeError, WalkerState};

/// Replica steps per synchronization block in the parallel step.
const BLOCK_STEPS: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParRepError {
    #[error("invalid parallel replica configuration: {0}")]
    InvalidConfig(String),
    #[error("speed profiles need positive durations and speeds")]
    InvalidSpeedProfile,
    #[error("stub dynamics need a positive rate and category probabilities summing to 1")]
    InvalidStub,
    #[error("initial walker is not inside a labeled well")]
    StartOutsideWell,
    #[error("exact QSD dephasing needs a spectral model of state {0}")]
    ExactQsdUnavailable(usize),
    #[error("no replica left state {state} within wall time {wall}")]
    Timeout { state: usize, wall: f64 },
    #[error("dephasing in state {state} at t_simu = {t_simu}: {source}")]
    Dephasing {
        state: usize,
        t_simu: f64,
        source: QsdError,
    },
    #[error(transparent)]
    Sde(#[from] SdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DephasingMethod {
    FlemingViot,
    Restart,
    ExactQsd,
}

impl DephasingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DephasingMethod::FlemingViot => "fv",
            DephasingMethod::Restart => "restart",
            DephasingMethod::ExactQsd => "exact_qsd",
        }
    }
}

impl fmt::Display for DephasingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DephasingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fv" => Ok(DephasingMethod::FlemingViot),
            "restart" => Ok(DephasingMethod::Restart),
            "exact_qsd" => Ok(DephasingMethod::ExactQsd),
            other => Err(format!(
                "unknown dephasing method `{other}` (expected fv, restart or exact_qsd)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParRepConfig {
    pub replicas: usize,
    /// `f64::INFINITY` disables the parallel step altogether.
    pub tau_corr: f64,
    pub tau_dephase: f64,
    pub dt: f64,
    pub method: DephasingMethod,
    pub relaxation_time: f64,
    pub max_events: usize,
    pub max_restarts: u64,
    /// Wall-time guard for a single parallel step.
    pub guard_time: f64,
    /// One profile per replica; `None` means unit speed everywhere.
    pub speeds: Option<Vec<SpeedProfile>>,
    pub exec: Exec,
}

impl ParRepConfig {
    /// Defaults: relaxation over ten steps, restart guard of 10⁴, and a
    /// parallel-step guard of 10⁹ steps.
    pub fn new(replicas: usize, dt: f64, tau_corr: f64, method: DephasingMethod) -> Self {
        Self {
            replicas,
            tau_corr,
            tau_dephase: tau_corr,
            dt,
            method,
            relaxation_time: 10.0 * dt,
            max_events: 1000,
            max_restarts: DEFAULT_MAX_RESTARTS,
            guard_time: 1e9 * dt,
            speeds: None,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ParRepError> {
        let bad = |m: String| Err(ParRepError::InvalidConfig(m));
        if self.replicas == 0 {
            return bad("replica count must be positive".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.tau_corr == 0.0 || self.tau_corr == f64::INFINITY) {
            steps_in(self.tau_corr, self.dt)
                .map_err(|_| ParRepError::InvalidConfig("tau_corr must be 0, inf or a multiple of dt".into()))?;
        }
        // an infinite window never dephases
        if self.method != DephasingMethod::ExactQsd && self.tau_corr.is_finite() {
            steps_in(self.tau_dephase, self.dt)
                .map_err(|_| ParRepError::InvalidConfig("tau_dephase must be a positive multiple of dt".into()))?;
        }
        if self.method == DephasingMethod::FlemingViot && self.replicas < 2 {
            return bad("Fleming–Viot dephasing needs at least 2 replicas".into());
        }
        if self.relaxation_time != 0.0 {
            steps_in(self.relaxation_time, self.dt).map_err(|_| {
                ParRepError::InvalidConfig("relaxation_time must be 0 or a multiple of dt".into())
            })?;
        }
        if let Some(s) = &self.speeds {
            if s.len() != self.replicas {
                return bad(format!("{} speed profiles for {} replicas", s.len(), self.replicas));
            }
        }
        if !(self.guard_time > 0.0) {
            return bad("guard_time must be positive".into());
        }
        Ok(())
    }

    fn uniform_speeds(&self) -> bool {
        self.speeds
            .as_ref()
            .is_none_or(|s| s.iter().all(SpeedProfile::is_uniform))
    }
}

/// The reference walker with its integrator and its own stream.
pub struct ReferenceWalker<'a> {
    pub state: WalkerState,
    integ: Integrator<'a>,
    rng: RngStream,
}

impl<'a> ReferenceWalker<'a> {
    pub fn new(
        state: WalkerState,
        potential: &'a PotentialModel,
        dt: f64,
        rng: RngStream,
    ) -> Result<Self, SdeError> {
        Ok(Self {
            state,
            integ: Integrator::new(potential, dt)?,
            rng,
        })
    }

    /// Plain evolution for `steps` steps (forever if `None`) starting at
    /// simulation time `t0`, recording every label change. Stops early when
    /// the trajectory is full. Returns the steps taken and whether the label
    /// changed.
    fn evolve(
        &mut self,
        steps: Option<u64>,
        t0: f64,
        statemap: &StateMap,
        traj: &mut TrajectoryBuilder,
    ) -> Result<(u64, bool), SdeError> {
        let dt = self.integ.dt();
        let mut changed = false;
        let mut k = 0u64;
        while !traj.is_full() && steps.is_none_or(|n| k < n) {
            let x = &mut self.state.position;
            self.integ.step(x, &mut self.rng).map_err(|_| SdeError::NonFinite {
                last: self.state.clone(),
            })?;
            k += 1;
            self.state.physical_time += dt;
            let now = statemap.label(&self.state.position);
            if now != self.state.state_label {
                let face = match self.state.state_label {
                    Some(l) => ExitFace::classify(statemap.well_of(l), &self.state.position),
                    None => ExitFace::Unknown,
                };
                changed = true;
                self.state.state_label = now;
                traj.transition(t0 + k as f64 * dt, now, face);
            }
        }
        Ok((k, changed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decorrelation {
    /// The label changed during the window (or the walker is unlabeled).
    Exited,
    /// A full window in one labeled well.
    Decorrelated,
    /// The trajectory reached `max_events` inside the window.
    Stopped,
}

/// Evolves the reference walker for `tau_corr`, recording transitions at
/// their observed times; the clock advances by the full window.
pub fn decorrelation_step(
    walker: &mut ReferenceWalker<'_>,
    cfg: &ParRepConfig,
    statemap: &StateMap,
    ledger: &mut ClockLedger,
    traj: &mut TrajectoryBuilder,
) -> Result<Decorrelation, ParRepError> {
    if traj.is_full() {
        return Ok(Decorrelation::Stopped);
    }
    let steps = if cfg.tau_corr == f64::INFINITY {
        None
    } else if cfg.tau_corr == 0.0 {
        if walker.state.state_label.is_some() {
            return Ok(Decorrelation::Decorrelated);
        }
        Some(1)
    } else {
        Some(steps_in(cfg.tau_corr, cfg.dt)?)
    };
    ledger.decorrelation_windows += 1;
    let (k, changed) = walker.evolve(steps, ledger.t_simu, statemap, traj)?;
    let elapsed = k as f64 * cfg.dt;
    ledger.t_simu += elapsed;
    ledger.serial_wall += elapsed;
    Ok(if traj.is_full() {
        Decorrelation::Stopped
    } else if changed || walker.state.state_label.is_none() {
        Decorrelation::Exited
    } else {
        Decorrelation::Decorrelated
    })
}

/// Produces `cfg.replicas` positions in the walker's well, approximately
/// QSD distributed. Charges the modeled wall time to the ledger.
pub fn dephase(
    walker: &WalkerState,
    cfg: &ParRepConfig,
    potential: &PotentialModel,
    statemap: &StateMap,
    wells: Option<&WellModels>,
    rng: &RngStream,
    ledger: &mut ClockLedger,
) -> Result<Vec<Vec<f64>>, ParRepError> {
    let state = walker.state_label.ok_or(ParRepError::StartOutsideWell)?;
    let wrap = |source| ParRepError::Dephasing {
        state,
        t_simu: ledger.t_simu,
        source,
    };
    match cfg.method {
        DephasingMethod::ExactQsd => {
            let model = wells
                .and_then(|w| w.get(state))
                .ok_or(ParRepError::ExactQsdUnavailable(state))?;
            let xs = model.sample_qsd(&mut rng.clone(), cfg.replicas);
            Ok(xs.into_iter().map(|x| vec![x]).collect())
        }
        DephasingMethod::FlemingViot => {
            let e = fleming_viot(
                walker,
                cfg.replicas,
                cfg.tau_dephase,
                cfg.dt,
                potential,
                statemap,
                rng,
                cfg.exec,
            )
            .map_err(wrap)?;
            ledger.dephasing_wall += e.elapsed;
            Ok(e.positions)
        }
        DephasingMethod::Restart => {
            let e = restart_dephasing(
                walker,
                cfg.replicas,
                cfg.tau_dephase,
                cfg.dt,
                potential,
                statemap,
                rng,
                cfg.max_restarts,
                cfg.exec,
            )
            .map_err(wrap)?;
            ledger.dephasing_wall += e.work.iter().cloned().fold(0.0, f64::max);
            Ok(e.positions)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelOutcome {
    /// Exit of the winning replica; `exit_time` is its own physical time.
    pub event: ExitEvent,
    /// Simulation-clock advance.
    pub advance: f64,
    pub wall: f64,
}

struct Replica<'a> {
    x: Vec<f64>,
    integ: Integrator<'a>,
    rng: RngStream,
    steps: u64,
    exit: Option<(u64, Option<usize>)>,
    failed: bool,
}

/// Runs the replicas in `state` until the first exit. Replica `n` uses child
/// stream `n` of `rng` and processor speed profile `n`.
#[allow(clippy::too_many_arguments)]
pub fn parallel_step(
    positions: &[Vec<f64>],
    state: usize,
    cfg: &ParRepConfig,
    potential: &PotentialModel,
    statemap: &StateMap,
    rng: &RngStream,
    ledger: &mut ClockLedger,
) -> Result<ParallelOutcome, ParRepError> {
    let dt = cfg.dt;
    let uniform = cfg.uniform_speeds();
    let unit = SpeedProfile::uniform();
    let profile = |n: usize| cfg.speeds.as_ref().map_or(&unit, |s| &s[n]);
    let mut replicas: Vec<Replica> = positions
        .iter()
        .enumerate()
        .map(|(n, x)| {
            Ok(Replica {
                x: x.clone(),
                integ: Integrator::new(potential, dt)?,
                rng: rng.child(n as u64),
                steps: 0,
                exit: None,
                failed: false,
            })
        })
        .collect::<Result<_, SdeError>>()?;

    let mut block = 0u64;
    let (winner, k, wall) = loop {
        block += 1;
        let wall_end = (block * BLOCK_STEPS) as f64 * dt;
        if wall_end > cfg.guard_time + BLOCK_STEPS as f64 * dt {
            return Err(ParRepError::Timeout {
                state,
                wall: wall_end,
            });
        }
        cfg.exec.for_each_mut(&mut replicas, |n, r| {
            let target = if uniform {
                block * BLOCK_STEPS
            } else {
                (profile(n).physical_at(wall_end) / dt + 1e-9).floor() as u64
            };
            while r.steps < target {
                if r.integ.step(&mut r.x, &mut r.rng).is_err() {
                    r.failed = true;
                    return;
                }
                r.steps += 1;
                let now = statemap.label(&r.x);
                if now != Some(state) {
                    r.exit = Some((r.steps, now));
                    return;
                }
            }
        });
        if let Some(r) = replicas.iter().find(|r| r.failed) {
            return Err(SdeError::NonFinite {
                last: WalkerState {
                    position: r.x.clone(),
                    physical_time: r.steps as f64 * dt,
                    state_label: Some(state),
                },
            }
            .into());
        }
        // earliest wall time wins, lowest index on ties
        let mut best: Option<(usize, u64, f64)> = None;
        for (n, r) in replicas.iter().enumerate() {
            if let Some((k, _)) = r.exit {
                let w = if uniform {
                    k as f64 * dt
                } else {
                    profile(n).wall_at(k as f64 * dt)
                };
                if best.is_none_or(|(_, _, bw)| w < bw) {
                    best = Some((n, k, w));
                }
            }
        }
        if let Some(b) = best {
            break b;
        }
    };

    let advance = if uniform {
        cfg.replicas as f64 * k as f64 * dt
    } else {
        let mut total = 0.0;
        for n in 0..cfg.replicas {
            let counted = if n == winner {
                k as f64 * dt
            } else {
                profile(n).physical_at(wall)
            };
            ledger.processor_time[n] += counted;
            total += counted;
        }
        total
    };
    if uniform {
        ledger.processor_time.iter_mut().for_each(|p| *p += k as f64 * dt);
    }
    ledger.t_simu += advance;
    ledger.t_parallel += advance;
    ledger.parallel_wall += wall;
    ledger.parallel_steps += 1;

    let w = &replicas[winner];
    let next_label = w.exit.expect("winner exited").1;
    Ok(ParallelOutcome {
        event: ExitEvent {
            exit_time: k as f64 * dt,
            exit_face: ExitFace::classify(statemap.well_of(state), &w.x),
            hitting_point: w.x.clone(),
            next_label,
            replica_id: winner,
        },
        advance,
        wall,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParRepRun {
    pub trajectory: StateTrajectory,
    pub ledger: ClockLedger,
}

fn checked_initial(initial: &WalkerState, statemap: &StateMap) -> Result<WalkerState, ParRepError> {
    let label = statemap.label(&initial.position);
    if label.is_none() || initial.state_label != label {
        return Err(ParRepError::StartOutsideWell);
    }
    Ok(WalkerState {
        position: initial.position.clone(),
        physical_time: 0.0,
        state_label: label,
    })
}

/// Full parallel replica run, stopping at the `cfg.max_events`-th transition.
///
/// The reference walker uses child stream `REFERENCE_SLOT` of `rng`, the
/// same stream as [`direct_run`], so that with `tau_corr = ∞` both produce
/// the same trajectory.
pub fn parrep_run(
    initial: &WalkerState,
    cfg: &ParRepConfig,
    potential: &PotentialModel,
    statemap: &StateMap,
    wells: Option<&WellModels>,
    rng: &RngStream,
) -> Result<ParRepRun, ParRepError> {
    cfg.validate()?;
    let start = checked_initial(initial, statemap)?;
    let mut ledger = ClockLedger::new(cfg.replicas);
    let mut traj = TrajectoryBuilder::new(start.state_label, 0.0, cfg.max_events);
    let mut walker = ReferenceWalker::new(start, potential, cfg.dt, rng.child(REFERENCE_SLOT))?;
    let relax_steps = if cfg.relaxation_time > 0.0 {
        Some(steps_in(cfg.relaxation_time, cfg.dt)?)
    } else {
        None
    };

    let mut cycle = 0u64;
    while !traj.is_full() {
        match decorrelation_step(&mut walker, cfg, statemap, &mut ledger, &mut traj)? {
            Decorrelation::Stopped => break,
            Decorrelation::Exited => continue,
            Decorrelation::Decorrelated => {}
        }
        let state = walker.state.state_label.expect("decorrelated in a labeled well");
        let cycle_rng = rng.child(cycle);
        cycle += 1;
        let positions = dephase(
            &walker.state,
            cfg,
            potential,
            statemap,
            wells,
            &cycle_rng.child(1),
            &mut ledger,
        )?;
        let out = parallel_step(
            &positions,
            state,
            cfg,
            potential,
            statemap,
            &cycle_rng.child(2),
            &mut ledger,
        )?;
        walker.state = WalkerState {
            position: out.event.hitting_point.clone(),
            physical_time: ledger.t_simu,
            state_label: out.event.next_label,
        };
        if traj.transition(ledger.t_simu, out.event.next_label, out.event.exit_face) {
            break;
        }
        if let Some(steps) = relax_steps {
            let (k, _) = walker.evolve(Some(steps), ledger.t_simu, statemap, &mut traj)?;
            ledger.t_simu += k as f64 * cfg.dt;
            ledger.serial_wall += k as f64 * cfg.dt;
        }
    }
    Ok(ParRepRun {
        trajectory: traj.finish(),
        ledger,
    })
}

/// Plain simulation of the dynamics until `max_events` transitions.
pub fn direct_run(
    initial: &WalkerState,
    dt: f64,
    potential: &PotentialModel,
    statemap: &StateMap,
    rng: &RngStream,
    max_events: usize,
) -> Result<StateTrajectory, ParRepError> {
    let start = checked_initial(initial, statemap)?;
    let mut traj = TrajectoryBuilder::new(start.state_label, 0.0, max_events);
    let mut walker = ReferenceWalker::new(start, potential, dt, rng.child(REFERENCE_SLOT))?;
    walker.evolve(None, 0.0, statemap, &mut traj)?;
    Ok(traj.finish())
}
