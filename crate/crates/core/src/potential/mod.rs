//! Potential energy landscapes and the maps from positions to discrete states.

mod statemap;

pub use statemap::{
    gradient_descent_state_map, interval_state_map, MinimaRegistry, Region, StateMap,
    DEFAULT_MATCH_RADIUS,
};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("unknown potential `{0}` (expected flat, double_well_1d, tilted_double_well_1d or entropic_2d)")]
    UnknownName(String),
    #[error("potential `{name}` takes {expected} parameter(s), got {got}")]
    ParamCount {
        name: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("non-finite potential parameter at index {0}")]
    NonFiniteParam(usize),
    #[error("inverse temperature must be positive and finite, got {0}")]
    InvalidBeta(f64),
    #[error("flat potential dimension must be a positive integer, got {0}")]
    InvalidDimension(f64),
    #[error("state boundaries must be strictly increasing with at least two entries")]
    UnsortedBoundaries,
    #[error("match radius must be positive, got {0}")]
    InvalidMatchRadius(f64),
    #[error("minima closer than twice the match radius")]
    CrowdedMinima,
    #[error("gradient descent step must be positive, got {0}")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialName {
    Flat,
    DoubleWell1d,
    TiltedDoubleWell1d,
    Entropic2d,
}

impl PotentialName {
    pub fn as_str(self) -> &'static str {
        match self {
            PotentialName::Flat => "flat",
            PotentialName::DoubleWell1d => "double_well_1d",
            PotentialName::TiltedDoubleWell1d => "tilted_double_well_1d",
            PotentialName::Entropic2d => "entropic_2d",
        }
    }
}

impl fmt::Display for PotentialName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PotentialName {
    type Err = PotentialError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(PotentialName::Flat),
            "double_well_1d" => Ok(PotentialName::DoubleWell1d),
            "tilted_double_well_1d" => Ok(PotentialName::TiltedDoubleWell1d),
            "entropic_2d" => Ok(PotentialName::Entropic2d),
            other => Err(PotentialError::UnknownName(other.to_string())),
        }
    }
}

/// Concrete landscape, with parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Landscape {
    /// `V = 0` in `dim` dimensions.
    Flat { dim: usize },
    /// `V(x) = h (x^2 - 1)^2 + c x`; the symmetric well has `c = 0`.
    DoubleWell { h: f64, c: f64 },
    /// `V(x, y) = h (x^2 - 1)^2 + k y^2 (1 + 4 exp(-4 x^2))`: two basins joined
    /// by a channel that stiffens near the saddle at the origin.
    Entropic2d { h: f64, k: f64 },
}

/// A potential `V` together with the inverse temperature of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialModel {
    landscape: Landscape,
    beta: f64,
}

impl PotentialModel {
    pub fn new(landscape: Landscape, beta: f64) -> Result<Self, PotentialError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(PotentialError::InvalidBeta(beta));
        }
        Ok(Self { landscape, beta })
    }

    pub fn landscape(&self) -> Landscape {
        self.landscape
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dimension(&self) -> usize {
        match self.landscape {
            Landscape::Flat { dim } => dim,
            Landscape::DoubleWell { .. } => 1,
            Landscape::Entropic2d { .. } => 2,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dimension());
        match self.landscape {
            Landscape::Flat { .. } => 0.0,
            Landscape::DoubleWell { h, c } => {
                let s = x[0] * x[0] - 1.0;
                h * s * s + c * x[0]
            }
            Landscape::Entropic2d { h, k } => {
                let (px, py) = (x[0], x[1]);
                let s = px * px - 1.0;
                h * s * s + k * py * py * (1.0 + 4.0 * (-4.0 * px * px).exp())
            }
        }
    }

    /// Writes `∇V(x)` into `out`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), out.len());
        match self.landscape {
            Landscape::Flat { .. } => out.iter_mut().for_each(|g| *g = 0.0),
            Landscape::DoubleWell { h, c } => {
                out[0] = 4.0 * h * x[0] * (x[0] * x[0] - 1.0) + c;
            }
            Landscape::Entropic2d { h, k } => {
                let (px, py) = (x[0], x[1]);
                let bump = (-4.0 * px * px).exp();
                out[0] = 4.0 * h * px * (px * px - 1.0) - 32.0 * k * px * py * py * bump;
                out[1] = 2.0 * k * py * (1.0 + 4.0 * bump);
            }
        }
    }

    pub fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        g
    }
}

/// Builds one of the shipped landscapes.
///
/// Parameters: `flat` takes `[]` or `[dim]`; `double_well_1d` takes `[h]`;
/// `tilted_double_well_1d` takes `[h, c]`; `entropic_2d` takes `[h, k]`.
pub fn builtin_potential(
    name: PotentialName,
    params: &[f64],
    beta: f64,
) -> Result<PotentialModel, PotentialError> {
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(PotentialError::NonFiniteParam(i));
    }
    let count = |expected: &'static str| PotentialError::ParamCount {
        name: name.as_str(),
        expected,
        got: params.len(),
    };
    let landscape = match name {
        PotentialName::Flat => match params {
            [] => Landscape::Flat { dim: 1 },
            [d] if *d >= 1.0 && d.fract() == 0.0 => Landscape::Flat { dim: *d as usize },
            [d] => return Err(PotentialError::InvalidDimension(*d)),
            _ => return Err(count("0 or 1")),
        },
        PotentialName::DoubleWell1d => match params {
            [h] => Landscape::DoubleWell { h: *h, c: 0.0 },
            _ => return Err(count("1")),
        },
        PotentialName::TiltedDoubleWell1d => match params {
            [h, c] => Landscape::DoubleWell { h: *h, c: *c },
            _ => return Err(count("2")),
        },
        PotentialName::Entropic2d => match params {
            [h, k] => Landscape::Entropic2d { h: *h, k: *k },
            _ => return Err(count("2")),
        },
    };
    PotentialModel::new(landscape, beta)
}

/// Trapezoidal estimate of `∫ exp(-βV)` over the box `[lo, hi]` (one or two
/// dimensions), used to check that the Boltzmann weight is integrable there.
pub fn boltzmann_mass(potential: &PotentialModel, lo: &[f64], hi: &[f64], points: usize) -> f64 {
    assert!(points >= 2);
    let beta = potential.beta();
    let node = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (points - 1) as f64;
    let weight = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
    match potential.dimension() {
        1 => {
            let h = (hi[0] - lo[0]) / (points - 1) as f64;
            (0..points)
                .map(|i| weight(i) * (-beta * potential.evaluate(&[node(lo[0], hi[0], i)])).exp())
                .sum::<f64>()
                * h
        }
        2 => {
            let hx = (hi[0] - lo[0]) / (points - 1) as f64;
            let hy = (hi[1] - lo[1]) / (points - 1) as f64;
            let mut total = 0.0;
            for i in 0..points {
                for j in 0..points {
                    let p = [node(lo[0], hi[0], i), node(lo[1], hi[1], j)];
                    total += weight(i) * weight(j) * (-beta * potential.evaluate(&p)).exp();
                }
            }
            total * hx * hy
        }
        d => panic!("boltzmann_mass supports one or two dimensions, got {d}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_builtins() -> Vec<PotentialModel> {
        vec![
            builtin_potential(PotentialName::Flat, &[], 1.0).unwrap(),
            builtin_potential(PotentialName::DoubleWell1d, &[1.0], 4.0).unwrap(),
            builtin_potential(PotentialName::TiltedDoubleWell1d, &[1.0, 0.3], 2.0).unwrap(),
            builtin_potential(PotentialName::Entropic2d, &[1.0, 2.0], 3.0).unwrap(),
        ]
    }

    #[test]
    fn flat_is_zero() {
        let v = builtin_potential(PotentialName::Flat, &[], 1.0).unwrap();
        assert_eq!(v.evaluate(&[0.3]), 0.0);
        assert_eq!(v.gradient_vec(&[-7.0]), vec![0.0]);
    }

    #[test]
    fn double_well_values() {
        let v = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 1.0).unwrap();
        assert_eq!(v.evaluate(&[0.0]), 1.0);
        assert_eq!(v.evaluate(&[1.0]), 0.0);
        assert_eq!(v.evaluate(&[-1.0]), 0.0);
        assert_eq!(v.gradient_vec(&[1.0]), vec![0.0]);
        assert!((v.gradient_vec(&[0.5])[0] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn tilt_adds_linear_term() {
        let v = builtin_potential(PotentialName::TiltedDoubleWell1d, &[1.0, 0.25], 1.0).unwrap();
        assert!((v.evaluate(&[2.0]) - (9.0 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            "harmonic".parse::<PotentialName>(),
            Err(PotentialError::UnknownName("harmonic".into()))
        );
        assert_eq!(
            builtin_potential(PotentialName::DoubleWell1d, &[f64::NAN], 1.0),
            Err(PotentialError::NonFiniteParam(0))
        );
        assert!(matches!(
            builtin_potential(PotentialName::DoubleWell1d, &[], 1.0),
            Err(PotentialError::ParamCount { .. })
        ));
        assert_eq!(
            builtin_potential(PotentialName::Flat, &[], 0.0),
            Err(PotentialError::InvalidBeta(0.0))
        );
    }

    #[test]
    fn boltzmann_weight_is_integrable() {
        for v in all_builtins() {
            let (lo, hi) = match v.dimension() {
                1 => (vec![-3.0], vec![3.0]),
                _ => (vec![-3.0, -3.0], vec![3.0, 3.0]),
            };
            let m = boltzmann_mass(&v, &lo, &hi, 401);
            assert!(m.is_finite() && m > 0.0, "{:?}: {m}", v.landscape());
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            x in -2.0f64..2.0, y in -1.5f64..1.5, which in 0usize..4
        ) {
            let v = all_builtins()[which];
            let p: Vec<f64> = [x, y][..v.dimension()].to_vec();
            let g = v.gradient_vec(&p);
            let scale = p.iter().fold(1.0f64, |m, c| m.max(c.abs()));
            let step = 1e-6 * scale;
            for i in 0..p.len() {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus[i] += step;
                minus[i] -= step;
                let fd = (v.evaluate(&plus) - v.evaluate(&minus)) / (2.0 * step);
                // relative tolerance with an absolute floor for near-zero slopes
                let tol = 1e-5 * g[i].abs().max(1.0);
                prop_assert!((fd - g[i]).abs() <= tol, "dim {i}: fd {fd} vs {}", g[i]);
            }
        }
    }
}
