use serde::Serialize;

use super::ParRepError;

/// Piecewise-constant processor speed `ρ(τ)` as a function of wall time,
/// with its cumulative physical time `R(τ) = ∫₀^τ ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    /// `(wall duration, speed)` segments, in order.
    segments: Vec<(f64, f64)>,
    /// Repeat the segments forever; otherwise the last speed persists.
    periodic: bool,
    period: f64,
    cycle_physical: f64,
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Result<Self, ParRepError> {
        Self::piecewise(vec![(1.0, speed)], true)
    }

    pub fn uniform() -> Self {
        Self::constant(1.0).expect("unit speed is valid")
    }

    pub fn piecewise(segments: Vec<(f64, f64)>, periodic: bool) -> Result<Self, ParRepError> {
        if segments.is_empty()
            || segments
                .iter()
                .any(|&(d, r)| !(d.is_finite() && d > 0.0 && r.is_finite() && r > 0.0))
        {
            return Err(ParRepError::InvalidSpeedProfile);
        }
        let period = segments.iter().map(|s| s.0).sum();
        let cycle_physical = segments.iter().map(|s| s.0 * s.1).sum();
        Ok(Self {
            segments,
            periodic,
            period,
            cycle_physical,
        })
    }

    pub fn is_uniform(&self) -> bool {
        self.segments.iter().all(|s| s.1 == 1.0)
    }

    /// `R(τ)`: physical time accumulated by wall time `wall`.
    pub fn physical_at(&self, wall: f64) -> f64 {
        if self.is_uniform() {
            return wall;
        }
        let (base, mut rest) = if self.periodic {
            let cycles = (wall / self.period).floor();
            (cycles * self.cycle_physical, wall - cycles * self.period)
        } else {
            (0.0, wall)
        };
        let mut acc = base;
        for (i, &(d, r)) in self.segments.iter().enumerate() {
            let last = i + 1 == self.segments.len();
            if rest <= d || (last && !self.periodic) {
                return acc + rest * r;
            }
            acc += d * r;
            rest -= d;
        }
        acc
    }

    /// `R⁻¹(s)`: wall time at which `physical` units have accumulated.
    pub fn wall_at(&self, physical: f64) -> f64 {
        if self.is_uniform() {
            return physical;
        }
        let (base, mut rest) = if self.periodic {
            let cycles = (physical / self.cycle_physical).floor();
            (cycles * self.period, physical - cycles * self.cycle_physical)
        } else {
            (0.0, physical)
        };
        let mut acc = base;
        for (i, &(d, r)) in self.segments.iter().enumerate() {
            let last = i + 1 == self.segments.len();
            if rest <= d * r || (last && !self.periodic) {
                return acc + rest / r;
            }
            acc += d;
            rest -= d * r;
        }
        acc
    }
}

/// Accounting of simulated time against modeled wall-clock time.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ClockLedger {
    /// Simulation clock of the reconstructed state trajectory.
    pub t_simu: f64,
    /// Wall time of the reference walker (decorrelation and relaxation).
    pub serial_wall: f64,
    /// Wall time spent dephasing; not part of `t_simu`.
    pub dephasing_wall: f64,
    /// Wall time of the parallel steps.
    pub parallel_wall: f64,
    /// Part of `t_simu` produced by parallel steps.
    pub t_parallel: f64,
    /// Physical time counted on each processor during parallel steps.
    pub processor_time: Vec<f64>,
    pub parallel_steps: u64,
    pub decorrelation_windows: u64,
}

impl ClockLedger {
    pub fn new(processors: usize) -> Self {
        Self {
            processor_time: vec![0.0; processors],
            ..Self::default()
        }
    }

    pub fn wall_clock(&self) -> f64 {
        self.serial_wall + self.dephasing_wall + self.parallel_wall
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupReport {
    pub replicas: usize,
    pub t_simu: f64,
    pub wall_clock: f64,
    /// `t_simu / wall_clock`; 1 for an empty run.
    pub speedup: f64,
    pub parallel_fraction: f64,
    pub dephasing_overhead: f64,
    pub events: usize,
}

pub fn speedup_report(
    traj: &super::StateTrajectory,
    ledger: &ClockLedger,
    replicas: usize,
) -> SpeedupReport {
    let wall = ledger.wall_clock();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    SpeedupReport {
        replicas,
        t_simu: ledger.t_simu,
        wall_clock: wall,
        speedup: if wall > 0.0 { ledger.t_simu / wall } else { 1.0 },
        parallel_fraction: ratio(ledger.t_parallel, ledger.t_simu),
        dephasing_overhead: ratio(ledger.dephasing_wall, wall),
        events: traj.events.len(),
    }
}
