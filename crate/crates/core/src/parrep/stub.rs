//! Synthetic exit dynamics: every replica leaves after an `Exp(rate)`
//! physical time through one of several exit categories. Replaces the SDE
//! when only the laws of the parallel step are under test.

use super::clock::SpeedProfile;
use super::ParRepError;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubCoupling {
    /// Category drawn independently of the exit time.
    Independent,
    /// Category read off the exit-time quantile, so that it has the same
    /// marginal law but is a function of the exit time.
    Coupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubDynamics {
    rate: f64,
    cumulative: Vec<f64>,
    coupling: StubCoupling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubExit {
    pub time: f64,
    pub category: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubOutcome {
    /// Simulation-clock advance: the sum over processors of the physical
    /// time each had counted when the first exit was detected.
    pub advance: f64,
    pub wall: f64,
    pub winner: usize,
    pub category: usize,
}

impl StubDynamics {
    pub fn new(rate: f64, probabilities: &[f64], coupling: StubCoupling) -> Result<Self, ParRepError> {
        let total: f64 = probabilities.iter().sum();
        if !(rate.is_finite() && rate > 0.0)
            || probabilities.is_empty()
            || probabilities.iter().any(|p| !(*p >= 0.0))
            || (total - 1.0).abs() > 1e-12
        {
            return Err(ParRepError::InvalidStub);
        }
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            rate,
            cumulative,
            coupling,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn category_of(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1)
    }

    /// One replica's exit.
    pub fn sample(&self, rng: &mut RngStream) -> StubExit {
        let u = rng.draw_uniform();
        let time = -u.ln() / self.rate;
        let category = match self.coupling {
            StubCoupling::Independent => self.category_of(rng.draw_uniform()),
            // P(T ≤ t) = 1 - u
            StubCoupling::Coupled => self.category_of(1.0 - u),
        };
        StubExit { time, category }
    }
}

/// A parallel step over stub replicas running on processors with the given
/// speed profiles, one replica per profile; replica `n` draws from child
/// stream `n` of `rng`. Ties in wall time go to the lowest index.
pub fn stub_parallel_step(stub: &StubDynamics, profiles: &[SpeedProfile], rng: &RngStream) -> StubOutcome {
    let mut best: Option<(f64, usize, usize)> = None;
    for (n, profile) in profiles.iter().enumerate() {
        let exit = stub.sample(&mut rng.child(n as u64));
        let wall = profile.wall_at(exit.time);
        if best.is_none_or(|(w, _, _)| wall < w) {
            best = Some((wall, n, exit.category));
        }
    }
    let (wall, winner, category) = best.expect("at least one processor");
    let advance = profiles.iter().map(|p| p.physical_at(wall)).sum();
    StubOutcome {
        advance,
        wall,
        winner,
        category,
    }
}
