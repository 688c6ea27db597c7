//! Euler–Maruyama integration of `dX = -∇V(X) dt + sqrt(2/β) dW` with exit
//! detection against a state map.
//!
//! By default exits are detected at grid times only: a step that ends
//! outside the current well counts as the exit, and the exit time is the
//! number of steps taken times `dt`. Grid detection misses excursions
//! between grid points and overestimates exit times by `O(sqrt(dt))`;
//! [`ExitDetection::Bridge`] corrects this for one-dimensional interval wells.

use thiserror::Error;

use crate::potential::{PotentialModel, Region, StateMap};
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("non-finite position after step at t = {}", last.physical_time)]
    NonFinite { last: WalkerState },
    #[error("start position is not inside a labeled well")]
    StartOutsideWell,
    #[error("horizon {horizon} is not a positive multiple of dt = {dt}")]
    HorizonNotMultiple { horizon: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkerState {
    pub position: Vec<f64>,
    pub physical_time: f64,
    pub state_label: Option<usize>,
}

impl WalkerState {
    /// Walker at `position`, time zero, labeled by `statemap`.
    pub fn at(position: Vec<f64>, statemap: &StateMap) -> Self {
        let state_label = statemap.label(&position);
        Self {
            position,
            physical_time: 0.0,
            state_label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitFace {
    Left,
    Right,
    Unknown,
}

impl ExitFace {
    pub fn code(self) -> i32 {
        match self {
            ExitFace::Left => 0,
            ExitFace::Right => 1,
            ExitFace::Unknown => -1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(ExitFace::Left),
            1 => Some(ExitFace::Right),
            -1 => Some(ExitFace::Unknown),
            _ => None,
        }
    }

    /// Which side of `region` the point `x` left through.
    pub fn classify(region: Option<Region>, x: &[f64]) -> Self {
        match region {
            Some(Region::Interval { a, b }) if x.len() == 1 => {
                if x[0] <= a {
                    ExitFace::Left
                } else if x[0] >= b {
                    ExitFace::Right
                } else {
                    ExitFace::Unknown
                }
            }
            _ => ExitFace::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitEvent {
    /// Time spent in the well before the exit was observed.
    pub exit_time: f64,
    /// First grid position outside the well.
    pub hitting_point: Vec<f64>,
    pub exit_face: ExitFace,
    pub next_label: Option<usize>,
    pub replica_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExitOutcome {
    Exited(ExitEvent),
    /// No exit before the time limit; the walker where it stopped.
    Timeout(WalkerState),
}

/// Euler–Maruyama stepper with its scratch space.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    potential: &'a PotentialModel,
    dt: f64,
    noise: f64,
    grad: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(potential: &'a PotentialModel, dt: f64) -> Result<Self, SdeError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SdeError::InvalidTimeStep(dt));
        }
        Ok(Self {
            potential,
            dt,
            noise: (2.0 * dt / potential.beta()).sqrt(),
            grad: vec![0.0; potential.dimension()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `x` by one step; on a non-finite result `x` is left untouched.
    pub fn step(&mut self, x: &mut [f64], rng: &mut RngStream) -> Result<(), NonFiniteStep> {
        self.potential.gradient(x, &mut self.grad);
        let mut finite = true;
        for g in self.grad.iter_mut() {
            // reuse the buffer for the proposed increment
            *g = -*g * self.dt + self.noise * rng.draw_normal();
        }
        for (xi, inc) in x.iter().zip(&self.grad) {
            finite &= (xi + inc).is_finite();
        }
        if !finite {
            return Err(NonFiniteStep);
        }
        for (xi, inc) in x.iter_mut().zip(&self.grad) {
            *xi += inc;
        }
        Ok(())
    }
}

/// Marker for a step that produced a non-finite position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteStep;

/// Number of `dt` steps in `horizon`, which must be a positive multiple of `dt`.
pub fn steps_in(horizon: f64, dt: f64) -> Result<u64, SdeError> {
    let ratio = horizon / dt;
    let steps = ratio.round();
    if !(ratio.is_finite() && steps >= 1.0 && (ratio - steps).abs() <= 1e-9 * steps.max(1.0)) {
        return Err(SdeError::HorizonNotMultiple { horizon, dt });
    }
    Ok(steps as u64)
}

/// One Euler–Maruyama step of the overdamped Langevin dynamics.
pub fn em_step(
    walker: &WalkerState,
    potential: &PotentialModel,
    dt: f64,
    rng: &mut RngStream,
) -> Result<WalkerState, SdeError> {
    let mut integ = Integrator::new(potential, dt)?;
    let mut position = walker.position.clone();
    integ
        .step(&mut position, rng)
        .map_err(|_| SdeError::NonFinite {
            last: walker.clone(),
        })?;
    Ok(WalkerState {
        position,
        physical_time: walker.physical_time + dt,
        state_label: walker.state_label,
    })
}

fn checked_start(start: &WalkerState, statemap: &StateMap) -> Result<usize, SdeError> {
    match (start.state_label, statemap.label(&start.position)) {
        (Some(l), Some(m)) if l == m => Ok(l),
        _ => Err(SdeError::StartOutsideWell),
    }
}

fn non_finite(position: &[f64], t0: f64, steps: u64, dt: f64, label: Option<usize>) -> SdeError {
    SdeError::NonFinite {
        last: WalkerState {
            position: position.to_vec(),
            physical_time: t0 + steps as f64 * dt,
            state_label: label,
        },
    }
}

/// Exit detection rule for [`run_until_exit_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExitDetection {
    /// Only grid positions are tested.
    #[default]
    Grid,
    /// Grid test plus a Brownian-bridge crossing test inside each step for
    /// one-dimensional interval wells: a bridge of variance `2 dt / β` whose
    /// endpoints lie at distances `d0`, `d1` from a boundary touches it with
    /// probability `exp(-β d0 d1 / dt)`. Other wells fall back to `Grid`.
    Bridge,
}

/// Probability that the bridge from `x0` to `x1` touches level `c` on the
/// same side as both endpoints.
fn bridge_crossing(x0: f64, x1: f64, c: f64, beta: f64, dt: f64) -> f64 {
    let (d0, d1) = ((x0 - c).abs(), (x1 - c).abs());
    if !(d0 * d1).is_finite() {
        return 0.0;
    }
    (-beta * d0 * d1 / dt).exp()
}

/// Steps until the label differs from the starting one, or until `max_time`.
pub fn run_until_exit(
    start: &WalkerState,
    potential: &PotentialModel,
    statemap: &StateMap,
    dt: f64,
    rng: &mut RngStream,
    max_time: f64,
) -> Result<ExitOutcome, SdeError> {
    run_until_exit_with(start, potential, statemap, dt, rng, max_time, ExitDetection::Grid)
}

/// [`run_until_exit`] with an explicit detection rule. With
/// [`ExitDetection::Bridge`] a crossing found inside step `k` is reported at
/// time `k dt` with the crossed boundary point as the hitting point.
pub fn run_until_exit_with(
    start: &WalkerState,
    potential: &PotentialModel,
    statemap: &StateMap,
    dt: f64,
    rng: &mut RngStream,
    max_time: f64,
    detection: ExitDetection,
) -> Result<ExitOutcome, SdeError> {
    let label = checked_start(start, statemap)?;
    let mut integ = Integrator::new(potential, dt)?;
    let max_steps = (max_time / dt - 1e-9).ceil().max(0.0) as u64;
    let bounds = match (detection, statemap.well_of(label)) {
        (ExitDetection::Bridge, Some(Region::Interval { a, b })) if start.position.len() == 1 => {
            Some((a, b))
        }
        _ => None,
    };
    let beta = potential.beta();
    let mut x = start.position.clone();
    for k in 1..=max_steps {
        let before = x[0];
        integ
            .step(&mut x, rng)
            .map_err(|_| non_finite(&x, start.physical_time, k - 1, dt, Some(label)))?;
        let now = statemap.label(&x);
        if now != Some(label) {
            return Ok(ExitOutcome::Exited(ExitEvent {
                exit_time: k as f64 * dt,
                exit_face: ExitFace::classify(statemap.well_of(label), &x),
                hitting_point: x,
                next_label: now,
                replica_id: 0,
            }));
        }
        if let Some((a, b)) = bounds {
            let p_left = bridge_crossing(before, x[0], a, beta, dt);
            let p_right = bridge_crossing(before, x[0], b, beta, dt);
            if p_left + p_right > 1e-300 {
                let u = rng.draw_uniform();
                let crossed = if u < p_left {
                    Some((a, a.next_down(), ExitFace::Left))
                } else if u < p_left + p_right {
                    Some((b, b.next_up(), ExitFace::Right))
                } else {
                    None
                };
                if let Some((point, outside, face)) = crossed {
                    return Ok(ExitOutcome::Exited(ExitEvent {
                        exit_time: k as f64 * dt,
                        exit_face: face,
                        hitting_point: vec![point],
                        next_label: statemap.label(&[outside]),
                        replica_id: 0,
                    }));
                }
            }
        }
    }
    Ok(ExitOutcome::Timeout(WalkerState {
        position: x,
        physical_time: start.physical_time + max_steps as f64 * dt,
        state_label: Some(label),
    }))
}

/// Evolves exactly `horizon / dt` steps and reports the elapsed time at the
/// first step whose label differs from the starting label.
pub fn run_fixed_horizon(
    start: &WalkerState,
    potential: &PotentialModel,
    statemap: &StateMap,
    dt: f64,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<(WalkerState, Option<f64>), SdeError> {
    let mut integ = Integrator::new(potential, dt)?;
    let steps = steps_in(horizon, dt)?;
    let mut x = start.position.clone();
    let mut label = start.state_label;
    let mut first_change = None;
    for k in 1..=steps {
        integ
            .step(&mut x, rng)
            .map_err(|_| non_finite(&x, start.physical_time, k - 1, dt, label))?;
        label = statemap.label(&x);
        if first_change.is_none() && label != start.state_label {
            first_change = Some(k as f64 * dt);
        }
    }
    Ok((
        WalkerState {
            position: x,
            physical_time: start.physical_time + steps as f64 * dt,
            state_label: label,
        },
        first_change,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{builtin_potential, interval_state_map, PotentialName};

    fn flat(beta: f64) -> PotentialModel {
        builtin_potential(PotentialName::Flat, &[], beta).unwrap()
    }

    #[test]
    fn zero_noise_flat_step_is_identity() {
        let w = WalkerState {
            position: vec![0.3],
            physical_time: 0.0,
            state_label: Some(0),
        };
        let next = em_step(&w, &flat(1.0), 1.0, &mut RngStream::zero()).unwrap();
        assert_eq!(next.position, vec![0.3]);
        assert_eq!(next.physical_time, 1.0);
    }

    #[test]
    fn zero_noise_drift_step() {
        let v = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 1.0).unwrap();
        let w = WalkerState {
            position: vec![0.5],
            physical_time: 0.0,
            state_label: None,
        };
        let next = em_step(&w, &v, 0.01, &mut RngStream::zero()).unwrap();
        assert!((next.position[0] - 0.515).abs() < 1e-15);
    }

    #[test]
    fn increment_variance_matches_diffusion() {
        // Var(x' - x) = 2 dt / β
        let v = flat(2.0);
        let mut rng = RngStream::new(3, 0);
        let w = WalkerState {
            position: vec![0.0],
            physical_time: 0.0,
            state_label: None,
        };
        let n = 100_000;
        let incs: Vec<f64> = (0..n)
            .map(|_| em_step(&w, &v, 0.01, &mut rng).unwrap().position[0])
            .collect();
        let mean = incs.iter().sum::<f64>() / n as f64;
        let var = incs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of a normal sample variance: σ² sqrt(2/(n-1))
        let se = 0.01 * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - 0.01).abs() < 3.0 * se, "var = {var}");
    }

    #[test]
    fn multi_step_increments_are_centered_brownian() {
        let v = flat(1.0);
        let dt = 1e-3;
        let n_steps = 10;
        let n = 100_000;
        let mut integ = Integrator::new(&v, dt).unwrap();
        let mut rng = RngStream::new(8, 1);
        let incs: Vec<f64> = (0..n)
            .map(|_| {
                let mut x = [0.0];
                for _ in 0..n_steps {
                    integ.step(&mut x, &mut rng).unwrap();
                }
                x[0]
            })
            .collect();
        let target = 2.0 * n_steps as f64 * dt;
        let mean = incs.iter().sum::<f64>() / n as f64;
        let var = incs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (target / n as f64).sqrt());
        assert!((var - target).abs() < 4.0 * target * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn blow_up_is_reported_with_last_state() {
        let v = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 1.0).unwrap();
        let w = WalkerState {
            position: vec![1e200],
            physical_time: 2.0,
            state_label: None,
        };
        match em_step(&w, &v, 0.1, &mut RngStream::zero()) {
            Err(SdeError::NonFinite { last }) => assert_eq!(last, w),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn start_outside_is_rejected() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let w = WalkerState::at(vec![1.5], &map);
        let err = run_until_exit(&w, &flat(1.0), &map, 1e-3, &mut RngStream::new(1, 1), 1.0);
        assert_eq!(err, Err(SdeError::StartOutsideWell));
    }

    #[test]
    fn exit_times_are_grid_multiples() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let v = flat(1.0);
        let dt = 1e-3;
        let start = WalkerState::at(vec![0.5], &map);
        for s in 0..50 {
            let mut rng = RngStream::new(9, s);
            match run_until_exit(&start, &v, &map, dt, &mut rng, 100.0).unwrap() {
                ExitOutcome::Exited(e) => {
                    let k = e.exit_time / dt;
                    assert!((k - k.round()).abs() < 1e-9);
                    assert_eq!(e.next_label, None);
                    let x = e.hitting_point[0];
                    let face = if x <= 0.0 { ExitFace::Left } else { ExitFace::Right };
                    assert_eq!(e.exit_face, face);
                }
                ExitOutcome::Timeout(_) => panic!("no exit in 100 time units"),
            }
        }
    }

    #[test]
    fn timeout_is_a_value() {
        let map = interval_state_map(&[-100.0, 100.0]).unwrap();
        let start = WalkerState::at(vec![0.0], &map);
        let out =
            run_until_exit(&start, &flat(1.0), &map, 1e-2, &mut RngStream::new(1, 2), 0.5).unwrap();
        match out {
            ExitOutcome::Timeout(w) => assert!((w.physical_time - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fixed_horizon_without_change() {
        let map = interval_state_map(&[-100.0, 100.0]).unwrap();
        let start = WalkerState::at(vec![0.0], &map);
        let dt = 0.01;
        let (w, change) =
            run_fixed_horizon(&start, &flat(1.0), &map, dt, 5.0 * dt, &mut RngStream::new(2, 2))
                .unwrap();
        assert_eq!(change, None);
        assert!((w.physical_time - 0.05).abs() < 1e-15);
        assert_eq!(w.state_label, Some(0));
    }

    #[test]
    fn fixed_horizon_forced_crossing() {
        // strong tilt pushes the walker left across 0 deterministically
        let v = builtin_potential(PotentialName::TiltedDoubleWell1d, &[0.0, 10.0], 1.0).unwrap();
        let map = interval_state_map(&[-10.0, 0.0, 10.0]).unwrap();
        let start = WalkerState::at(vec![0.25], &map);
        let dt = 0.01;
        // x_k = 0.25 - 0.1 k first drops below zero at k = 3
        let (w, change) =
            run_fixed_horizon(&start, &v, &map, dt, 10.0 * dt, &mut RngStream::zero()).unwrap();
        assert_eq!(change, Some(3.0 * dt));
        assert_eq!(w.state_label, Some(0));
    }

    #[test]
    fn horizon_must_be_multiple_of_dt() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.5], &map);
        let r = run_fixed_horizon(&start, &flat(1.0), &map, 0.01, 0.015, &mut RngStream::zero());
        assert!(matches!(r, Err(SdeError::HorizonNotMultiple { .. })));
    }

    #[test]
    fn nested_wells_exit_no_later() {
        let v = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 2.0).unwrap();
        let outer = interval_state_map(&[0.2, 1.8]).unwrap();
        let inner = interval_state_map(&[0.5, 1.4]).unwrap();
        let dt = 1e-3;
        for s in 0..100 {
            let a = WalkerState::at(vec![1.0], &outer);
            let b = WalkerState::at(vec![1.0], &inner);
            let t_outer = match run_until_exit(&a, &v, &outer, dt, &mut RngStream::new(4, s), 1e3)
                .unwrap()
            {
                ExitOutcome::Exited(e) => e.exit_time,
                ExitOutcome::Timeout(_) => f64::INFINITY,
            };
            let t_inner = match run_until_exit(&b, &v, &inner, dt, &mut RngStream::new(4, s), 1e3)
                .unwrap()
            {
                ExitOutcome::Exited(e) => e.exit_time,
                ExitOutcome::Timeout(_) => f64::INFINITY,
            };
            assert!(t_inner <= t_outer);
        }
    }
}
