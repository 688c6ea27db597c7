use std::sync::Mutex;

use super::{PotentialError, PotentialModel};

pub const DEFAULT_MATCH_RADIUS: f64 = 1e-3;

/// Gradient-norm threshold at which descent is considered converged.
const DESCENT_TOLERANCE: f64 = 1e-8;

/// Geometry of a well, as far as the state map knows it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// One-dimensional open interval `(a, b)`; either end may be infinite.
    Interval { a: f64, b: f64 },
    /// Only membership tests are available.
    Predicate,
}

/// Minima discovered so far, numbered in order of discovery.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaRegistry {
    minima: Vec<Vec<f64>>,
    match_radius: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl MinimaRegistry {
    pub fn new(match_radius: f64) -> Result<Self, PotentialError> {
        if !(match_radius.is_finite() && match_radius > 0.0) {
            return Err(PotentialError::InvalidMatchRadius(match_radius));
        }
        Ok(Self {
            minima: Vec::new(),
            match_radius,
        })
    }

    /// Registry pre-seeded with known minima; labels follow list order.
    pub fn with_minima(match_radius: f64, minima: Vec<Vec<f64>>) -> Result<Self, PotentialError> {
        let mut reg = Self::new(match_radius)?;
        for m in minima {
            if reg.nearest_within(&m, 2.0 * match_radius).is_some() {
                return Err(PotentialError::CrowdedMinima);
            }
            reg.minima.push(m);
        }
        Ok(reg)
    }

    pub fn len(&self) -> usize {
        self.minima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minima.is_empty()
    }

    pub fn match_radius(&self) -> f64 {
        self.match_radius
    }

    pub fn minimum(&self, label: usize) -> Option<&[f64]> {
        self.minima.get(label).map(Vec::as_slice)
    }

    fn nearest_within(&self, x: &[f64], radius: f64) -> Option<usize> {
        self.minima
            .iter()
            .enumerate()
            .map(|(i, m)| (i, distance(m, x)))
            .filter(|&(_, d)| d <= radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Label of the minimum at `x`, registering it if it is new.
    ///
    /// Points in the annulus between one and two match radii are attributed
    /// to the existing minimum so that stored minima stay separated.
    fn label_or_insert(&mut self, x: &[f64]) -> usize {
        if let Some(i) = self.nearest_within(x, 2.0 * self.match_radius) {
            return i;
        }
        self.minima.push(x.to_vec());
        self.minima.len() - 1
    }
}

#[derive(Debug)]
pub struct GradientDescentMap {
    potential: PotentialModel,
    registry: Mutex<MinimaRegistry>,
    step: f64,
    max_iters: usize,
}

impl GradientDescentMap {
    /// Explicit Euler on `y' = -∇V(y)` until `|∇V(y)| < 1e-8`. Returns `None`
    /// when descent diverges, runs out of iterations, or stalls on a point
    /// that is not a strict local minimum.
    fn descend(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut y = x.to_vec();
        let mut g = vec![0.0; y.len()];
        for _ in 0..=self.max_iters {
            self.potential.gradient(&y, &mut g);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return None;
            }
            if norm < DESCENT_TOLERANCE {
                return self.is_strict_minimum(&y).then_some(y);
            }
            for (yi, gi) in y.iter_mut().zip(&g) {
                *yi -= self.step * gi;
            }
        }
        None
    }

    fn is_strict_minimum(&self, y: &[f64]) -> bool {
        let v0 = self.potential.evaluate(y);
        let mut probe = y.to_vec();
        (0..y.len()).all(|i| {
            let delta = 1e-4 * y[i].abs().max(1.0);
            [delta, -delta].iter().all(|d| {
                probe[i] = y[i] + d;
                let higher = self.potential.evaluate(&probe) > v0;
                probe[i] = y[i];
                higher
            })
        })
    }

    pub fn registry(&self) -> MinimaRegistry {
        self.registry.lock().expect("registry lock poisoned").clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMap {
    boundaries: Vec<f64>,
}

impl IntervalMap {
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    fn label(&self, x: f64) -> Option<usize> {
        let b = &self.boundaries;
        // first boundary strictly greater than x
        let upper = b.partition_point(|&v| v <= x);
        if upper == 0 || upper == b.len() || b[upper - 1] == x {
            return None;
        }
        Some(upper - 1)
    }
}

/// Map from positions to discrete state labels; `None` is the unknown state.
#[derive(Debug)]
pub enum StateMap {
    Intervals(IntervalMap),
    GradientDescent(GradientDescentMap),
}

impl StateMap {
    pub fn label(&self, x: &[f64]) -> Option<usize> {
        match self {
            StateMap::Intervals(m) => m.label(x[0]),
            StateMap::GradientDescent(m) => {
                let y = m.descend(x)?;
                Some(m.registry.lock().expect("registry lock poisoned").label_or_insert(&y))
            }
        }
    }

    pub fn well_of(&self, label: usize) -> Option<Region> {
        match self {
            StateMap::Intervals(m) => (label + 1 < m.boundaries.len()).then(|| Region::Interval {
                a: m.boundaries[label],
                b: m.boundaries[label + 1],
            }),
            StateMap::GradientDescent(m) => {
                (label < m.registry.lock().expect("registry lock poisoned").len())
                    .then_some(Region::Predicate)
            }
        }
    }

    /// Number of labels currently known.
    pub fn label_count(&self) -> usize {
        match self {
            StateMap::Intervals(m) => m.boundaries.len() - 1,
            StateMap::GradientDescent(m) => m.registry.lock().expect("registry lock poisoned").len(),
        }
    }
}

/// Partition of the line into `(b_i, b_{i+1})`; boundary points and the
/// outside of `[b_0, b_last]` are unknown.
pub fn interval_state_map(boundaries: &[f64]) -> Result<StateMap, PotentialError> {
    if boundaries.len() < 2
        || boundaries.iter().any(|b| b.is_nan())
        || boundaries.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(PotentialError::UnsortedBoundaries);
    }
    Ok(StateMap::Intervals(IntervalMap {
        boundaries: boundaries.to_vec(),
    }))
}

/// State map sending `x` to the minimum reached by fixed-step gradient descent.
pub fn gradient_descent_state_map(
    potential: PotentialModel,
    registry: MinimaRegistry,
    step: f64,
    max_iters: usize,
) -> Result<StateMap, PotentialError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(PotentialError::InvalidStep(step));
    }
    Ok(StateMap::GradientDescent(GradientDescentMap {
        potential,
        registry: Mutex::new(registry),
        step,
        max_iters,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{builtin_potential, PotentialName};
    use crate::rng::RngStream;

    fn double_well() -> PotentialModel {
        builtin_potential(PotentialName::DoubleWell1d, &[1.0], 1.0).unwrap()
    }

    fn descent_map(registry: MinimaRegistry) -> StateMap {
        gradient_descent_state_map(double_well(), registry, 1e-2, 100_000).unwrap()
    }

    #[test]
    fn intervals_label_interiors() {
        let m = interval_state_map(&[0.0, 1.0]).unwrap();
        assert_eq!(m.label(&[0.5]), Some(0));
        assert_eq!(m.label(&[1.5]), None);
        assert_eq!(m.label(&[0.0]), None);

        let m = interval_state_map(&[-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(m.label(&[-1.0]), Some(0));
        assert_eq!(m.label(&[1.0]), Some(1));
        assert_eq!(m.well_of(1), Some(Region::Interval { a: 0.0, b: 2.0 }));
        assert_eq!(m.well_of(2), None);
    }

    #[test]
    fn intervals_reject_unsorted() {
        assert_eq!(
            interval_state_map(&[1.0, 0.0]).unwrap_err(),
            PotentialError::UnsortedBoundaries
        );
        assert!(interval_state_map(&[1.0]).is_err());
        assert!(interval_state_map(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn descent_finds_both_basins() {
        let m = descent_map(MinimaRegistry::new(DEFAULT_MATCH_RADIUS).unwrap());
        let right = m.label(&[0.7]).unwrap();
        let left = m.label(&[-0.7]).unwrap();
        assert_ne!(left, right);
        let StateMap::GradientDescent(gd) = &m else { unreachable!() };
        let reg = gd.registry();
        assert!((reg.minimum(right).unwrap()[0] - 1.0).abs() < 1e-6);
        assert!((reg.minimum(left).unwrap()[0] + 1.0).abs() < 1e-6);
        // minima get their own labels back
        assert_eq!(m.label(&[1.0]), Some(right));
        assert_eq!(m.label(&[-1.0]), Some(left));
        assert_eq!(m.well_of(right), Some(Region::Predicate));
    }

    #[test]
    fn descent_on_flat_is_unknown() {
        let flat = builtin_potential(PotentialName::Flat, &[], 1.0).unwrap();
        let m = gradient_descent_state_map(
            flat,
            MinimaRegistry::new(DEFAULT_MATCH_RADIUS).unwrap(),
            1e-2,
            1000,
        )
        .unwrap();
        assert_eq!(m.label(&[0.3]), None);
        // the barrier top is stationary but not a minimum
        assert_eq!(descent_map(MinimaRegistry::new(1e-3).unwrap()).label(&[0.0]), None);
    }

    #[test]
    fn descent_runs_out_of_iterations() {
        let m = gradient_descent_state_map(
            double_well(),
            MinimaRegistry::new(DEFAULT_MATCH_RADIUS).unwrap(),
            1e-2,
            3,
        )
        .unwrap();
        assert_eq!(m.label(&[0.7]), None);
    }

    #[test]
    fn registry_rejects_crowded_minima() {
        assert_eq!(
            MinimaRegistry::with_minima(0.1, vec![vec![0.0], vec![0.15]]).unwrap_err(),
            PotentialError::CrowdedMinima
        );
    }

    #[test]
    fn descent_agrees_with_intervals_on_double_well() {
        let seeded = MinimaRegistry::with_minima(DEFAULT_MATCH_RADIUS, vec![vec![-1.0], vec![1.0]])
            .unwrap();
        let gd = descent_map(seeded);
        let iv = interval_state_map(&[f64::NEG_INFINITY, 0.0, f64::INFINITY]).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..1000 {
            let x = -2.0 + 4.0 * rng.draw_uniform();
            assert_eq!(gd.label(&[x]), iv.label(&[x]), "x = {x}");
        }
    }
}
