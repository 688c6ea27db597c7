//! Monte Carlo samplers of the quasi-stationary distribution of a well.
//!
//! All samplers take a parent stream and derive one child stream per
//! replica (and one control stream for resampling decisions), so results do
//! not depend on the number of worker threads.

use thiserror::Error;

use crate::exec::Exec;
use crate::potential::{PotentialModel, StateMap};
use crate::rng::{RngStream, CONTROL_SLOT};
use crate::sde::{run_until_exit, steps_in, ExitOutcome, Integrator, SdeError, WalkerState};
use crate::stats::{binned_tv, Binned, StatsError};

pub const DEFAULT_MAX_RESTARTS: u64 = 10_000;
/// Redistribution keeps every `HISTORY_STRIDE`-th position.
pub const HISTORY_STRIDE: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsdError {
    #[error("Fleming–Viot needs at least 2 replicas, got {0}")]
    TooFewReplicas(usize),
    #[error("start position is not inside a labeled well")]
    StartOutsideWell,
    #[error("extinction: every replica left the well during step {step} (t = {elapsed})")]
    Extinction { step: u64, elapsed: f64 },
    #[error("replica {replica} did not complete an exit-free window in {restarts} restarts")]
    NonTermination { replica: usize, restarts: u64 },
    #[error("time span must be nonnegative and finite, got {0}")]
    InvalidSpan(f64),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaEnsemble {
    pub positions: Vec<Vec<f64>>,
    pub well_label: usize,
    /// Fleming–Viot resurrections so far.
    pub branch_count: u64,
    pub elapsed: f64,
    /// Restart dephasing: rejected attempts per replica.
    pub restarts: Vec<u64>,
    /// Physical time simulated per replica, including rejected attempts.
    pub work: Vec<f64>,
}

impl ReplicaEnsemble {
    /// First coordinate of every replica.
    pub fn first_coordinates(&self) -> Vec<f64> {
        self.positions.iter().map(|p| p[0]).collect()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn start_label(start: &WalkerState, statemap: &StateMap) -> Result<usize, QsdError> {
    match (start.state_label, statemap.label(&start.position)) {
        (Some(l), Some(m)) if l == m => Ok(l),
        _ => Err(QsdError::StartOutsideWell),
    }
}

fn check_span(t: f64) -> Result<(), QsdError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(QsdError::InvalidSpan(t));
    }
    Ok(())
}

struct Particle<'a> {
    x: Vec<f64>,
    integ: Integrator<'a>,
    rng: RngStream,
    inside: bool,
    failed: bool,
}

/// Fleming–Viot particle system run for `t_end`.
///
/// After every step, replicas that left the well are handled in index order:
/// each is moved onto a replica drawn uniformly from those currently inside,
/// which includes replicas already moved during the same step.
#[allow(clippy::too_many_arguments)]
pub fn fleming_viot(
    start: &WalkerState,
    replicas: usize,
    t_end: f64,
    dt: f64,
    potential: &PotentialModel,
    statemap: &StateMap,
    rng: &RngStream,
    exec: Exec,
) -> Result<ReplicaEnsemble, QsdError> {
    if replicas < 2 {
        return Err(QsdError::TooFewReplicas(replicas));
    }
    check_span(t_end)?;
    let label = start_label(start, statemap)?;
    let steps = if t_end == 0.0 { 0 } else { steps_in(t_end, dt)? };
    let mut particles: Vec<Particle> = (0..replicas)
        .map(|i| {
            Ok(Particle {
                x: start.position.clone(),
                integ: Integrator::new(potential, dt)?,
                rng: rng.child(i as u64),
                inside: true,
                failed: false,
            })
        })
        .collect::<Result<_, SdeError>>()?;
    let mut control = rng.child(CONTROL_SLOT);
    let mut branch_count = 0u64;
    let mut pool: Vec<usize> = Vec::with_capacity(replicas);

    for step in 1..=steps {
        exec.for_each_mut(&mut particles, |_, p| {
            p.failed = p.integ.step(&mut p.x, &mut p.rng).is_err();
            p.inside = !p.failed && statemap.label(&p.x) == Some(label);
        });
        if let Some(p) = particles.iter().find(|p| p.failed) {
            return Err(SdeError::NonFinite {
                last: WalkerState {
                    position: p.x.clone(),
                    physical_time: start.physical_time + (step - 1) as f64 * dt,
                    state_label: Some(label),
                },
            }
            .into());
        }
        if particles.iter().all(|p| p.inside) {
            continue;
        }
        pool.clear();
        pool.extend((0..replicas).filter(|&i| particles[i].inside));
        for i in 0..replicas {
            if particles[i].inside {
                continue;
            }
            if pool.is_empty() {
                return Err(QsdError::Extinction {
                    step,
                    elapsed: step as f64 * dt,
                });
            }
            let donor = pool[control.draw_index(pool.len())];
            let x = particles[donor].x.clone();
            particles[i].x = x;
            particles[i].inside = true;
            pool.push(i);
            branch_count += 1;
        }
    }

    let elapsed = steps as f64 * dt;
    Ok(ReplicaEnsemble {
        positions: particles.into_iter().map(|p| p.x).collect(),
        well_label: label,
        branch_count,
        elapsed,
        restarts: vec![0; replicas],
        work: vec![elapsed; replicas],
    })
}

/// Every replica repeatedly runs a window of length `tau_dephase` from
/// `start`, with a fresh stream per attempt, until one window ends without an
/// exit; its end point is the replica's sample.
#[allow(clippy::too_many_arguments)]
pub fn restart_dephasing(
    start: &WalkerState,
    replicas: usize,
    tau_dephase: f64,
    dt: f64,
    potential: &PotentialModel,
    statemap: &StateMap,
    rng: &RngStream,
    max_restarts: u64,
    exec: Exec,
) -> Result<ReplicaEnsemble, QsdError> {
    let label = start_label(start, statemap)?;
    let steps = steps_in(tau_dephase, dt)?;
    let window = steps as f64 * dt;
    let results = exec.map_range(replicas, |i| {
        let parent = rng.child(i as u64);
        let mut work = 0.0;
        for attempt in 0..=max_restarts {
            let mut stream = parent.child(attempt);
            match run_until_exit(start, potential, statemap, dt, &mut stream, window)? {
                ExitOutcome::Timeout(w) => return Ok((w.position, attempt, work + window)),
                ExitOutcome::Exited(e) => work += e.exit_time,
            }
        }
        Err(QsdError::NonTermination {
            replica: i,
            restarts: max_restarts,
        })
    });
    let mut positions = Vec::with_capacity(replicas);
    let mut restarts = Vec::with_capacity(replicas);
    let mut work = Vec::with_capacity(replicas);
    for r in results {
        let (x, n, w) = r?;
        positions.push(x);
        restarts.push(n);
        work.push(w);
    }
    Ok(ReplicaEnsemble {
        positions,
        well_label: label,
        branch_count: 0,
        elapsed: window,
        restarts,
        work,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Redistribution {
    pub final_position: Vec<f64>,
    /// Positions recorded every [`HISTORY_STRIDE`] steps, starting with the
    /// start position.
    pub occupation: Vec<Vec<f64>>,
    pub redistributions: u64,
    pub elapsed: f64,
}

impl Redistribution {
    /// Occupation histogram of the first coordinate, normalized to unit
    /// mass over the recorded positions.
    pub fn histogram(&self, bins: usize, range: (f64, f64)) -> Vec<f64> {
        let (lo, hi) = range;
        let width = (hi - lo) / bins as f64;
        let mut h = vec![0.0; bins];
        for p in &self.occupation {
            if p[0] >= lo && p[0] <= hi {
                h[(((p[0] - lo) / width) as usize).min(bins - 1)] += 1.0;
            }
        }
        let n = self.occupation.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }

    pub fn occupation_first_coordinates(&self) -> Vec<f64> {
        self.occupation.iter().map(|p| p[0]).collect()
    }
}

/// One walker that, on leaving the well, jumps to a position drawn
/// uniformly from its own recorded in-well history.
pub fn single_walker_redistribution(
    start: &WalkerState,
    t_end: f64,
    dt: f64,
    potential: &PotentialModel,
    statemap: &StateMap,
    rng: &RngStream,
) -> Result<Redistribution, QsdError> {
    check_span(t_end)?;
    let label = start_label(start, statemap)?;
    let mut integ = Integrator::new(potential, dt)?;
    let steps = (t_end / dt + 1e-9).floor() as u64;
    let mut walker = rng.child(0);
    let mut control = rng.child(CONTROL_SLOT);
    let mut x = start.position.clone();
    // the start position is always recorded, so the history is never empty
    let mut occupation = vec![x.clone()];
    let mut redistributions = 0;
    for k in 1..=steps {
        let before = x.clone();
        integ.step(&mut x, &mut walker).map_err(|_| SdeError::NonFinite {
            last: WalkerState {
                position: before,
                physical_time: start.physical_time + (k - 1) as f64 * dt,
                state_label: Some(label),
            },
        })?;
        if statemap.label(&x) != Some(label) {
            x = occupation[control.draw_index(occupation.len())].clone();
            redistributions += 1;
        }
        if k % HISTORY_STRIDE == 0 {
            occupation.push(x.clone());
        }
    }
    Ok(Redistribution {
        final_position: x,
        occupation,
        redistributions,
        elapsed: steps as f64 * dt,
    })
}

/// Binned TV distance between samples and a nodal density on `(a, b)`,
/// with the density taken as zero at both endpoints.
pub fn tv_to_density(
    samples: &[f64],
    nodes: &[f64],
    density: &[f64],
    (a, b): (f64, f64),
    bins: usize,
) -> Result<f64, StatsError> {
    let mut xs = Vec::with_capacity(nodes.len() + 2);
    let mut vs = Vec::with_capacity(nodes.len() + 2);
    xs.push(a);
    vs.push(0.0);
    xs.extend_from_slice(nodes);
    vs.extend_from_slice(density);
    xs.push(b);
    vs.push(0.0);
    binned_tv(
        Binned::Samples(samples),
        Binned::GridDensity { xs: &xs, values: &vs },
        bins,
        (a, b),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{builtin_potential, interval_state_map, PotentialName};

    fn flat() -> PotentialModel {
        builtin_potential(PotentialName::Flat, &[], 1.0).unwrap()
    }

    #[test]
    fn zero_span_keeps_start() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.3], &map);
        let e = fleming_viot(&start, 5, 0.0, 1e-3, &flat(), &map, &RngStream::new(1, 0), Exec::Sequential)
            .unwrap();
        assert!(e.positions.iter().all(|p| p == &vec![0.3]));
        assert_eq!(e.branch_count, 0);
    }

    #[test]
    fn simultaneous_exit_is_extinction() {
        // zero noise and a strong tilt push both replicas out on the same step
        let v = builtin_potential(PotentialName::TiltedDoubleWell1d, &[0.0, 10.0], 1.0).unwrap();
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.05], &map);
        let r = fleming_viot(&start, 2, 0.1, 0.01, &v, &map, &RngStream::zero(), Exec::Sequential);
        assert_eq!(r, Err(QsdError::Extinction { step: 1, elapsed: 0.01 }));
    }

    #[test]
    fn fleming_viot_rejects_single_replica() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.5], &map);
        let r = fleming_viot(&start, 1, 0.1, 0.01, &flat(), &map, &RngStream::new(1, 1), Exec::Sequential);
        assert_eq!(r, Err(QsdError::TooFewReplicas(1)));
    }

    #[test]
    fn samplers_stay_inside() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.5], &map);
        let rng = RngStream::new(4, 0);
        let fv = fleming_viot(&start, 50, 0.2, 1e-3, &flat(), &map, &rng, Exec::default()).unwrap();
        assert!(fv.branch_count > 0);
        let rs = restart_dephasing(&start, 50, 0.05, 1e-3, &flat(), &map, &rng, 1000, Exec::default())
            .unwrap();
        let rd = single_walker_redistribution(&start, 2.0, 1e-3, &flat(), &map, &rng).unwrap();
        assert!(rd.redistributions > 0);
        for p in fv.positions.iter().chain(&rs.positions).chain(&rd.occupation) {
            assert_eq!(map.label(p), Some(0));
        }
    }

    #[test]
    fn results_independent_of_execution_policy() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.5], &map);
        let rng = RngStream::new(12, 3);
        let run = |exec| fleming_viot(&start, 64, 0.1, 1e-3, &flat(), &map, &rng, exec).unwrap();
        assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
        let rs = |exec| {
            restart_dephasing(&start, 32, 0.05, 1e-3, &flat(), &map, &rng, 100, exec).unwrap()
        };
        assert_eq!(rs(Exec::Sequential), rs(Exec::Parallel));
    }

    #[test]
    fn restart_guard_reports_replica() {
        // the window is far longer than any plausible stay
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.5], &map);
        let r = restart_dephasing(
            &start,
            3,
            5.0,
            1e-2,
            &flat(),
            &map,
            &RngStream::new(1, 1),
            2,
            Exec::Sequential,
        );
        assert!(matches!(r, Err(QsdError::NonTermination { restarts: 2, .. })));
    }

    #[test]
    fn one_step_window_is_one_step_diffusion() {
        let map = interval_state_map(&[-100.0, 100.0]).unwrap();
        let start = WalkerState::at(vec![0.0], &map);
        let dt = 0.01;
        let e = restart_dephasing(&start, 20_000, dt, dt, &flat(), &map, &RngStream::new(3, 3), 10, Exec::default())
            .unwrap();
        let xs = e.first_coordinates();
        let (mean, se) = crate::stats::mean_and_se(&xs);
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 4.0 * se);
        // Var = 2 dt / β
        assert!((var / 0.02 - 1.0).abs() < 4.0 * (2.0 / xs.len() as f64).sqrt());
        assert!(e.restarts.iter().all(|&r| r == 0));
    }

    #[test]
    fn short_redistribution_is_point_mass() {
        let map = interval_state_map(&[0.0, 1.0]).unwrap();
        let start = WalkerState::at(vec![0.37], &map);
        let r = single_walker_redistribution(&start, 5e-4, 1e-3, &flat(), &map, &RngStream::new(1, 1))
            .unwrap();
        assert_eq!(r.occupation, vec![vec![0.37]]);
        let h = r.histogram(50, (0.0, 1.0));
        assert_eq!(h[18], 1.0);
    }

    #[test]
    fn redistribution_without_exits_is_plain_occupation() {
        let map = interval_state_map(&[-1e3, 1e3]).unwrap();
        let start = WalkerState::at(vec![0.0], &map);
        let rng = RngStream::new(8, 8);
        let r = single_walker_redistribution(&start, 1.0, 1e-3, &flat(), &map, &rng).unwrap();
        assert_eq!(r.redistributions, 0);
        // replay the same walker stream by hand
        let v = flat();
        let mut integ = Integrator::new(&v, 1e-3).unwrap();
        let mut s = rng.child(0);
        let mut x = vec![0.0];
        let mut expect = vec![x.clone()];
        for k in 1..=1000u64 {
            integ.step(&mut x, &mut s).unwrap();
            if k % HISTORY_STRIDE == 0 {
                expect.push(x.clone());
            }
        }
        assert_eq!(r.occupation, expect);
    }
}
