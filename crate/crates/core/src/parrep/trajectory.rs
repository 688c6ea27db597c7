use crate::sde::ExitFace;

/// One visit to a state: entered at `entry_t`, left after `hold` through
/// `exit_face`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEvent {
    /// `None` is the unknown state outside every labeled well.
    pub state: Option<usize>,
    pub entry_t: f64,
    pub hold: f64,
    pub exit_face: ExitFace,
}

/// Coarse-grained trajectory. Every event is a completed visit: runs stop
/// exactly at their last recorded transition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateTrajectory {
    pub events: Vec<StateEvent>,
    pub total_t_simu: f64,
}

impl StateTrajectory {
    /// Hold times of the visits to `state`.
    pub fn holds_in(&self, state: Option<usize>) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.state == state)
            .map(|e| e.hold)
            .collect()
    }

    /// `(from, to)` for each consecutive pair of visits.
    pub fn transitions(&self) -> Vec<(Option<usize>, Option<usize>)> {
        self.events.windows(2).map(|w| (w[0].state, w[1].state)).collect()
    }

    /// Distinct states visited, in increasing order (`None` first).
    pub fn states(&self) -> Vec<Option<usize>> {
        let mut s: Vec<Option<usize>> = self.events.iter().map(|e| e.state).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn hold_sum(&self) -> f64 {
        self.events.iter().map(|e| e.hold).sum()
    }
}

/// Builds a trajectory transition by transition.
#[derive(Debug, Clone)]
pub struct TrajectoryBuilder {
    events: Vec<StateEvent>,
    current: Option<usize>,
    entry_t: f64,
    max_events: usize,
}

impl TrajectoryBuilder {
    pub fn new(initial: Option<usize>, t0: f64, max_events: usize) -> Self {
        Self {
            events: Vec::new(),
            current: initial,
            entry_t: t0,
            max_events,
        }
    }

    pub fn current(&self) -> Option<usize> {
        self.current
    }

    pub fn is_full(&self) -> bool {
        self.events.len() >= self.max_events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Closes the current visit at time `t` and enters `next`. Returns
    /// `true` once `max_events` visits are recorded.
    pub fn transition(&mut self, t: f64, next: Option<usize>, face: ExitFace) -> bool {
        debug_assert!(next != self.current && t > self.entry_t);
        self.events.push(StateEvent {
            state: self.current,
            entry_t: self.entry_t,
            hold: t - self.entry_t,
            exit_face: face,
        });
        self.current = next;
        self.entry_t = t;
        self.is_full()
    }

    pub fn finish(self) -> StateTrajectory {
        let total_t_simu = self.events.last().map_or(0.0, |e| e.entry_t + e.hold);
        StateTrajectory {
            events: self.events,
            total_t_simu,
        }
    }
}
