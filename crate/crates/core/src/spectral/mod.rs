//! Finite-difference spectral model of a one-dimensional well.
//!
//! The generator `L f = β⁻¹ e^{βV} (e^{-βV} f')'` is discretized on the
//! interior nodes of `(a, b)` with midpoint conductances and homogeneous
//! Dirichlet conditions. With `w_i = e^{-βV(x_i)}` and
//! `c_{i+1/2} = e^{-βV(x_{i+1/2})}`, the matrix of `-L` is `W⁻¹ K` with `K`
//! symmetric, so `W^{1/2} (-L) W^{-1/2}` is a symmetric tridiagonal matrix.
//! Its lowest eigenpairs give the Dirichlet eigenvalues `λ_k` and, after
//! mapping back, eigenfunctions `u_k` orthonormal in `L²(μ_W)`, where `μ_W`
//! is the Boltzmann measure restricted to the well and normalized.
//!
//! Everything downstream (exit-time survival, conditioned laws, the
//! quasi-stationary density, mean exit times and the hitting measure) is a
//! finite spectral sum on this grid.

pub mod tridiag;

use thiserror::Error;

use crate::potential::PotentialModel;
use crate::rng::RngStream;
use crate::stats::{self, StatsError};
use tridiag::SymTridiagonal;

pub const DEFAULT_EIGENPAIRS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("well endpoints must be finite with a < b, got ({a}, {b})")]
    InvalidWell { a: f64, b: f64 },
    #[error("grid needs at least 3 interior points, got {0}")]
    GridTooCoarse(usize),
    #[error("requested {requested} eigenpairs but the grid has {available} nodes")]
    TooManyEigenpairs { requested: usize, available: usize },
    #[error("spectral oracle requires a one-dimensional potential, got dimension {0}")]
    NotOneDimensional(usize),
    #[error("eigensolve failed: {0}")]
    Eigensolve(String),
    #[error("Boltzmann weight underflows on the grid")]
    WeightUnderflow,
    #[error("series uses {requested} modes but the model holds {available}")]
    ModesUnavailable { requested: usize, available: usize },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("survival probability underflows at t = {0}")]
    SurvivalUnderflow(f64),
    #[error("initial measure is invalid: {0}")]
    InvalidMeasure(String),
    #[error("conditioned law already equals the QSD on the whole time grid")]
    AlreadyConverged,
    #[error("time grid must be increasing with at least three points")]
    InvalidTimeGrid,
    #[error("boundary flux has the wrong sign; grid too coarse")]
    BoundaryFluxSign,
    #[error("hitting mass {0} differs from 1 by more than 1%")]
    HittingMass(f64),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Uniform grid of `n` interior nodes `x_i = a + i h`, `h = (b - a)/(n + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellGrid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub h: f64,
}

impl WellGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self, SpectralError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(SpectralError::InvalidWell { a, b });
        }
        if n < 3 {
            return Err(SpectralError::GridTooCoarse(n));
        }
        Ok(Self {
            a,
            b,
            n,
            h: (b - a) / (n + 1) as f64,
        })
    }

    /// Interior node `i` for `i` in `1..=n`; 0 and n + 1 are the endpoints.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n + 1 {
            self.b
        } else {
            self.a + i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.node(i)).collect()
    }
}

/// Initial law `μ₀` of the walker inside the well.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMeasure {
    /// Dirac mass at a point of the well, spread linearly over the two
    /// neighbouring nodes.
    PointMass(f64),
    /// Lebesgue density at the interior nodes.
    GridDensity(Vec<f64>),
    /// The quasi-stationary distribution of the well.
    Qsd,
}

impl InitialMeasure {
    /// Grid density from nodal values, rescaled to unit mass.
    pub fn grid_density(grid: &WellGrid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.n {
            return Err(SpectralError::InvalidMeasure(format!(
                "{} values for {} nodes",
                values.len(),
                grid.n
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SpectralError::InvalidMeasure("negative or non-finite density".into()));
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.h;
        if mass <= 0.0 {
            return Err(SpectralError::InvalidMeasure("zero mass".into()));
        }
        Ok(InitialMeasure::GridDensity(
            values.into_iter().map(|v| v / mass).collect(),
        ))
    }

    /// Grid density sampled from a function of position.
    pub fn from_fn(grid: &WellGrid, f: impl Fn(f64) -> f64) -> Result<Self, SpectralError> {
        Self::grid_density(grid, grid.nodes().into_iter().map(f).collect())
    }
}

/// Truncated spectral series with a rigorous bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Bound on the discarded modes (Cauchy–Schwarz against the residuals of
    /// `1` and `dμ₀/dμ` outside the retained eigenspace).
    pub truncation_bound: f64,
    /// Magnitude of the last retained term.
    pub last_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedDensity {
    pub density: Vec<f64>,
    /// Negative mass removed before normalization, relative to the total.
    pub clipped_mass: f64,
    pub survival: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingMeasure {
    pub left: f64,
    pub right: f64,
    pub raw_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    pub distances: Vec<f64>,
}

/// Projection of an initial measure on the retained eigenbasis.
#[derive(Debug, Clone, PartialEq)]
struct Projection {
    /// Lebesgue density of `μ₀` at the nodes (mass left on the boundary
    /// nodes by a point mass near an endpoint is dropped).
    density: Vec<f64>,
    /// `a_k = ∫ u_k dμ₀`.
    coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectralModel {
    grid: WellGrid,
    beta: f64,
    potential_values: Vec<f64>,
    matrix: SymTridiagonal,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Vec<f64>>,
    /// Lebesgue density of `μ_W` at the nodes, `Σ μ_i h = 1`.
    mu_density: Vec<f64>,
    qsd_density: Vec<f64>,
    /// `b_k = ∫ u_k dμ_W`.
    mu_coeffs: Vec<f64>,
}

pub fn build_spectral_model(
    potential: &PotentialModel,
    a: f64,
    b: f64,
    n: usize,
    k: usize,
) -> Result<SpectralModel, SpectralError> {
    if potential.dimension() != 1 {
        return Err(SpectralError::NotOneDimensional(potential.dimension()));
    }
    let grid = WellGrid::new(a, b, n)?;
    if k == 0 || k > n {
        return Err(SpectralError::TooManyEigenpairs {
            requested: k,
            available: n,
        });
    }
    let beta = potential.beta();
    let h = grid.h;
    let v_at = |x: f64| potential.evaluate(&[x]);
    let potential_values: Vec<f64> = (1..=n).map(|i| v_at(grid.node(i))).collect();
    let mid_values: Vec<f64> = (0..=n).map(|i| v_at(a + (i as f64 + 0.5) * h)).collect();
    let v_min = potential_values
        .iter()
        .chain(&mid_values)
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let weight = |v: f64| (-beta * (v - v_min)).exp();
    let w: Vec<f64> = potential_values.iter().map(|&v| weight(v)).collect();
    let c: Vec<f64> = mid_values.iter().map(|&v| weight(v)).collect();
    if w.iter().chain(&c).any(|&x| x == 0.0 || !x.is_finite()) {
        return Err(SpectralError::WeightUnderflow);
    }

    let scale = 1.0 / (beta * h * h);
    let diag: Vec<f64> = (0..n).map(|i| scale * (c[i] + c[i + 1]) / w[i]).collect();
    let off: Vec<f64> = (0..n - 1)
        .map(|i| -scale * c[i + 1] / (w[i] * w[i + 1]).sqrt())
        .collect();
    let matrix = SymTridiagonal::new(diag, off);

    let eigenvalues = matrix.smallest_eigenvalues(k);
    if eigenvalues.iter().any(|l| !l.is_finite()) || eigenvalues[0] <= 0.0 {
        return Err(SpectralError::Eigensolve(format!(
            "non-positive or non-finite eigenvalues {eigenvalues:?}"
        )));
    }
    if k > 1 && eigenvalues[1] <= eigenvalues[0] {
        return Err(SpectralError::Eigensolve("degenerate principal eigenvalue".into()));
    }
    let vectors = matrix.eigenvectors(&eigenvalues);

    let z: f64 = w.iter().sum::<f64>() * h;
    let mu_density: Vec<f64> = w.iter().map(|wi| wi / z).collect();
    // u = W^{-1/2} y, scaled so that Σ u² μ h = 1
    let eigenfunctions: Vec<Vec<f64>> = vectors
        .iter()
        .map(|y| {
            let u: Vec<f64> = y.iter().zip(&w).map(|(yi, wi)| yi / wi.sqrt()).collect();
            let norm = u
                .iter()
                .zip(&mu_density)
                .map(|(ui, mi)| ui * ui * mi)
                .sum::<f64>()
                * h;
            u.iter().map(|ui| ui / norm.sqrt()).collect()
        })
        .collect();
    if eigenfunctions[0].iter().any(|&u| u <= 0.0) {
        return Err(SpectralError::Eigensolve(
            "principal eigenfunction changes sign".into(),
        ));
    }
    let mu_coeffs: Vec<f64> = eigenfunctions
        .iter()
        .map(|u| u.iter().zip(&mu_density).map(|(ui, mi)| ui * mi).sum::<f64>() * h)
        .collect();
    let qsd_raw: Vec<f64> = eigenfunctions[0]
        .iter()
        .zip(&mu_density)
        .map(|(u, m)| u * m)
        .collect();
    let qsd_mass = qsd_raw.iter().sum::<f64>() * h;
    let qsd_density = qsd_raw.iter().map(|q| q / qsd_mass).collect();

    Ok(SpectralModel {
        grid,
        beta,
        potential_values,
        matrix,
        eigenvalues,
        eigenfunctions,
        mu_density,
        qsd_density,
        mu_coeffs,
    })
}

fn tv_on_grid(p: &[f64], q: &[f64], h: f64) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() * h
}

impl SpectralModel {
    pub fn grid(&self) -> &WellGrid {
        &self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunction(&self, k: usize) -> &[f64] {
        &self.eigenfunctions[k]
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ₂ - λ₁`, if at least two modes were computed.
    pub fn gap(&self) -> Option<f64> {
        (self.eigenvalues.len() > 1).then(|| self.eigenvalues[1] - self.eigenvalues[0])
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.potential_values
    }

    /// Lebesgue density of the QSD at the interior nodes.
    pub fn qsd_density(&self) -> &[f64] {
        &self.qsd_density
    }

    /// Lebesgue density of the normalized Boltzmann measure on the well.
    pub fn mu_density(&self) -> &[f64] {
        &self.mu_density
    }

    /// The symmetrized generator `W^{1/2} (-L) W^{-1/2}`.
    pub fn symmetric_matrix(&self) -> &SymTridiagonal {
        &self.matrix
    }

    /// `⟨u_j, u_k⟩` in `L²(μ_W)`.
    pub fn mu_inner(&self, j: usize, k: usize) -> f64 {
        let (uj, uk) = (&self.eigenfunctions[j], &self.eigenfunctions[k]);
        (0..self.grid.n)
            .map(|i| uj[i] * uk[i] * self.mu_density[i])
            .sum::<f64>()
            * self.grid.h
    }

    /// Total-variation distance between a nodal density and the QSD.
    pub fn tv_to_qsd(&self, density: &[f64]) -> f64 {
        tv_on_grid(density, &self.qsd_density, self.grid.h)
    }

    fn project(&self, mu0: &InitialMeasure) -> Result<Projection, SpectralError> {
        let g = &self.grid;
        let density = match mu0 {
            InitialMeasure::Qsd => self.qsd_density.clone(),
            InitialMeasure::GridDensity(values) => {
                if values.len() != g.n {
                    return Err(SpectralError::InvalidMeasure(format!(
                        "{} values for {} nodes",
                        values.len(),
                        g.n
                    )));
                }
                values.clone()
            }
            InitialMeasure::PointMass(x0) => {
                if !(*x0 > g.a && *x0 < g.b) {
                    return Err(SpectralError::InvalidMeasure(format!(
                        "point {x0} outside ({}, {})",
                        g.a, g.b
                    )));
                }
                let s = (x0 - g.a) / g.h;
                let i = (s.floor() as usize).min(g.n);
                let theta = s - i as f64;
                let mut d = vec![0.0; g.n];
                // node i carries 1 - θ, node i + 1 carries θ; nodes 0 and n+1 are boundary
                if (1..=g.n).contains(&i) {
                    d[i - 1] += (1.0 - theta) / g.h;
                }
                if (1..=g.n).contains(&(i + 1)) {
                    d[i] += theta / g.h;
                }
                d
            }
        };
        let coeffs = self
            .eigenfunctions
            .iter()
            .map(|u| u.iter().zip(&density).map(|(a, b)| a * b).sum::<f64>() * g.h)
            .collect();
        Ok(Projection { density, coeffs })
    }

    /// `a_k = ∫ u_k dμ₀` for every retained mode.
    pub fn coefficients(&self, mu0: &InitialMeasure) -> Result<Vec<f64>, SpectralError> {
        Ok(self.project(mu0)?.coeffs)
    }

    /// `μ_W`-norm of `f - Σ_{k<modes} ⟨f, u_k⟩ u_k` for nodal `f` with
    /// coefficients `coeffs`.
    fn residual_norm(&self, f: &[f64], coeffs: &[f64], modes: usize) -> f64 {
        let mut r = f.to_vec();
        for (u, c) in self.eigenfunctions.iter().zip(coeffs).take(modes) {
            r.iter_mut().zip(u).for_each(|(ri, ui)| *ri -= c * ui);
        }
        (r.iter()
            .zip(&self.mu_density)
            .map(|(ri, mi)| ri * ri * mi)
            .sum::<f64>()
            * self.grid.h)
            .sqrt()
    }

    fn tail_factor(&self, proj: &Projection, modes: usize) -> f64 {
        let ones = vec![1.0; self.grid.n];
        let ratio: Vec<f64> = proj
            .density
            .iter()
            .zip(&self.mu_density)
            .map(|(p, m)| p / m)
            .collect();
        self.residual_norm(&ones, &self.mu_coeffs, modes)
            * self.residual_norm(&ratio, &proj.coeffs, modes)
    }

    fn check_modes(&self, modes: usize) -> Result<(), SpectralError> {
        if modes == 0 || modes > self.mode_count() {
            return Err(SpectralError::ModesUnavailable {
                requested: modes,
                available: self.mode_count(),
            });
        }
        Ok(())
    }

    /// Lowest eigenvalue not retained when `modes` terms are summed.
    fn first_dropped_eigenvalue(&self, modes: usize) -> f64 {
        self.eigenvalues
            .get(modes)
            .copied()
            .unwrap_or(self.eigenvalues[modes - 1])
    }

    /// `P(T_W ≥ t) = Σ_k e^{-λ_k t} (∫u_k dμ)(∫u_k dμ₀)`, clamped to [0, 1].
    pub fn survival_probability(
        &self,
        mu0: &InitialMeasure,
        t: f64,
        modes: usize,
    ) -> Result<SeriesValue, SpectralError> {
        if !(t >= 0.0) {
            return Err(SpectralError::NegativeTime(t));
        }
        self.check_modes(modes)?;
        let proj = self.project(mu0)?;
        let terms: Vec<f64> = (0..modes)
            .map(|k| (-self.eigenvalues[k] * t).exp() * self.mu_coeffs[k] * proj.coeffs[k])
            .collect();
        let raw: f64 = terms.iter().sum();
        Ok(SeriesValue {
            value: raw.clamp(0.0, 1.0),
            truncation_bound: (-self.first_dropped_eigenvalue(modes) * t).exp()
                * self.tail_factor(&proj, modes),
            last_term: terms[modes - 1].abs(),
        })
    }

    /// `E(T_W) = Σ_k (1/λ_k) (∫u_k dμ)(∫u_k dμ₀)`.
    pub fn mean_exit_time(
        &self,
        mu0: &InitialMeasure,
        modes: usize,
    ) -> Result<SeriesValue, SpectralError> {
        self.check_modes(modes)?;
        let proj = self.project(mu0)?;
        let terms: Vec<f64> = (0..modes)
            .map(|k| self.mu_coeffs[k] * proj.coeffs[k] / self.eigenvalues[k])
            .collect();
        Ok(SeriesValue {
            value: terms.iter().sum(),
            truncation_bound: self.tail_factor(&proj, modes)
                / self.first_dropped_eigenvalue(modes),
            last_term: terms[modes - 1].abs(),
        })
    }

    /// Density of `X_t` given `T_W ≥ t`, from all retained modes.
    pub fn conditioned_density(
        &self,
        mu0: &InitialMeasure,
        t: f64,
    ) -> Result<ConditionedDensity, SpectralError> {
        if !(t >= 0.0) {
            return Err(SpectralError::NegativeTime(t));
        }
        let proj = self.project(mu0)?;
        let h = self.grid.h;
        if t == 0.0 {
            let mass: f64 = proj.density.iter().sum::<f64>() * h;
            return Ok(ConditionedDensity {
                density: proj.density.iter().map(|p| p / mass).collect(),
                clipped_mass: 0.0,
                survival: mass.min(1.0),
            });
        }
        let l1 = self.eigenvalues[0];
        // everything below is scaled by e^{λ₁ t}
        let damp: Vec<f64> = self
            .eigenvalues
            .iter()
            .zip(&proj.coeffs)
            .map(|(l, a)| a * (-(l - l1) * t).exp())
            .collect();
        let scaled_survival: f64 = damp.iter().zip(&self.mu_coeffs).map(|(d, b)| d * b).sum();
        let log_survival = scaled_survival.ln() - l1 * t;
        if !(scaled_survival > 0.0) || log_survival < (1e-300f64).ln() {
            return Err(SpectralError::SurvivalUnderflow(t));
        }
        let raw: Vec<f64> = (0..self.grid.n)
            .map(|i| {
                let s: f64 = damp
                    .iter()
                    .zip(&self.eigenfunctions)
                    .map(|(d, u)| d * u[i])
                    .sum();
                s * self.mu_density[i]
            })
            .collect();
        let negative: f64 = raw.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * h;
        let positive: f64 = raw.iter().filter(|v| **v > 0.0).sum::<f64>() * h;
        Ok(ConditionedDensity {
            density: raw.iter().map(|v| v.max(0.0) / positive).collect(),
            clipped_mass: negative / positive,
            survival: log_survival.exp(),
        })
    }

    /// Fits the exponential decay rate of `TV(L(X_t | T_W ≥ t), ν)` over `times`.
    pub fn decay_rate_fit(
        &self,
        mu0: &InitialMeasure,
        times: &[f64],
    ) -> Result<DecayFit, SpectralError> {
        if times.len() < 3 || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpectralError::InvalidTimeGrid);
        }
        let distances = times
            .iter()
            .map(|&t| Ok(self.tv_to_qsd(&self.conditioned_density(mu0, t)?.density)))
            .collect::<Result<Vec<f64>, SpectralError>>()?;
        if distances.iter().all(|d| *d < 1e-14) {
            return Err(SpectralError::AlreadyConverged);
        }
        let (rate, r_squared) = stats::fit_log_decay(times, &distances)?;
        Ok(DecayFit {
            rate,
            r_squared,
            distances,
        })
    }

    /// Exit-side probabilities under the QSD, from the boundary flux
    /// `ρ = -(β⁻¹/λ₁) ∇ν·n`, with second-order one-sided derivatives.
    pub fn hitting_measure(&self) -> Result<HittingMeasure, SpectralError> {
        let nu = &self.qsd_density;
        let n = self.grid.n;
        let h = self.grid.h;
        // ν vanishes on the boundary
        let slope_left = (4.0 * nu[0] - nu[1]) / (2.0 * h);
        let slope_right = (nu[n - 2] - 4.0 * nu[n - 1]) / (2.0 * h);
        let scale = 1.0 / (self.beta * self.eigenvalues[0]);
        let left = scale * slope_left;
        let right = -scale * slope_right;
        if left < 0.0 || right < 0.0 {
            return Err(SpectralError::BoundaryFluxSign);
        }
        let raw_sum = left + right;
        if (raw_sum - 1.0).abs() > 0.01 {
            return Err(SpectralError::HittingMass(raw_sum));
        }
        Ok(HittingMeasure {
            left: left / raw_sum,
            right: right / raw_sum,
            raw_sum,
        })
    }

    /// Exact draws from the piecewise-linear interpolant of the QSD density
    /// (zero at both endpoints), by inverting its piecewise-quadratic CDF.
    pub fn sample_qsd(&self, rng: &mut RngStream, count: usize) -> Vec<f64> {
        let g = &self.grid;
        let mut values = Vec::with_capacity(g.n + 2);
        values.push(0.0);
        values.extend_from_slice(&self.qsd_density);
        values.push(0.0);
        let mut cdf = Vec::with_capacity(g.n + 2);
        cdf.push(0.0);
        for j in 0..=g.n {
            let last = *cdf.last().unwrap();
            cdf.push(last + 0.5 * g.h * (values[j] + values[j + 1]));
        }
        let total = *cdf.last().unwrap();
        (0..count)
            .map(|_| {
                let target = rng.draw_uniform() * total;
                // segment j spans nodes j and j + 1
                let j = (cdf.partition_point(|&c| c <= target) - 1).min(g.n);
                let r = target - cdf[j];
                let (v0, v1) = (values[j], values[j + 1]);
                let disc = (v0 * v0 + 2.0 * (v1 - v0) * r / g.h).max(0.0);
                let denom = v0 + disc.sqrt();
                let s = if denom > 0.0 { (2.0 * r / denom).min(g.h) } else { 0.5 * g.h };
                let x = g.node(j) + s;
                x.clamp(g.a.next_up(), g.b.next_down())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{builtin_potential, PotentialName};
    use std::f64::consts::PI;

    fn flat_model(n: usize, k: usize) -> SpectralModel {
        let v = builtin_potential(PotentialName::Flat, &[], 1.0).unwrap();
        build_spectral_model(&v, 0.0, 1.0, n, k).unwrap()
    }

    #[test]
    fn flat_well_spectrum() {
        let m = flat_model(2000, 4);
        let l = m.eigenvalues();
        assert!((l[0] / (PI * PI) - 1.0).abs() < 5e-3);
        assert!((l[1] / (4.0 * PI * PI) - 1.0).abs() < 5e-3);
        // discrete Dirichlet Laplacian: (4/h²) sin²(kπh/2)
        let h = m.grid().h;
        for (k, lk) in l.iter().enumerate() {
            let exact = 4.0 / (h * h) * (((k + 1) as f64) * PI * h / 2.0).sin().powi(2);
            assert!((lk / exact - 1.0).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn flat_qsd_is_half_sine() {
        let m = flat_model(2001, 2);
        // node 1001 is exactly x = 0.5
        let mid = m.qsd_density()[1000];
        assert!((mid / (PI / 2.0) - 1.0).abs() < 5e-3);
        let mass: f64 = m.qsd_density().iter().sum::<f64>() * m.grid().h;
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn model_invariants() {
        let dw = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 4.0).unwrap();
        for m in [
            flat_model(500, 8),
            build_spectral_model(&dw, 0.0, 2.5, 800, 8).unwrap(),
        ] {
            let l = m.eigenvalues();
            assert!(l[0] > 0.0 && l[1] > l[0]);
            assert!(m.eigenfunction(0).iter().all(|u| *u > 0.0));
            let u2 = m.eigenfunction(1);
            let sign_changes = u2.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
            assert_eq!(sign_changes, 1);
            for j in 0..8 {
                for k in 0..8 {
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert!((m.mu_inner(j, k) - want).abs() < 1e-8, "({j},{k})");
                }
            }
            // ν ∝ u₁ e^{-βV}
            let ratio: Vec<f64> = m
                .qsd_density()
                .iter()
                .zip(m.eigenfunction(0))
                .zip(m.mu_density())
                .map(|((q, u), mu)| q / (u * mu))
                .collect();
            assert!(ratio.iter().all(|r| (r / ratio[0] - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn argument_errors() {
        let v = builtin_potential(PotentialName::Flat, &[], 1.0).unwrap();
        assert!(matches!(
            build_spectral_model(&v, 0.0, 1.0, 10, 11),
            Err(SpectralError::TooManyEigenpairs { .. })
        ));
        assert!(matches!(
            build_spectral_model(&v, 1.0, 0.0, 10, 2),
            Err(SpectralError::InvalidWell { .. })
        ));
        let v2 = builtin_potential(PotentialName::Entropic2d, &[1.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            build_spectral_model(&v2, 0.0, 1.0, 10, 2),
            Err(SpectralError::NotOneDimensional(2))
        ));
        let m = flat_model(100, 4);
        assert!(matches!(
            m.survival_probability(&InitialMeasure::Qsd, -1.0, 4),
            Err(SpectralError::NegativeTime(_))
        ));
        assert!(matches!(
            m.survival_probability(&InitialMeasure::Qsd, 1.0, 5),
            Err(SpectralError::ModesUnavailable { .. })
        ));
    }

    #[test]
    fn survival_at_zero_is_one() {
        let m = flat_model(400, 16);
        for mu0 in [
            InitialMeasure::Qsd,
            InitialMeasure::PointMass(0.37),
            InitialMeasure::from_fn(m.grid(), |x| x * (1.0 - x)).unwrap(),
        ] {
            let s = m.survival_probability(&mu0, 0.0, 16).unwrap();
            assert!((s.value - 1.0).abs() <= s.truncation_bound + 1e-12, "{mu0:?}: {s:?}");
        }
    }

    #[test]
    fn qsd_survival_is_exponential() {
        let m = flat_model(500, 16);
        let a = m.coefficients(&InitialMeasure::Qsd).unwrap();
        assert!(a[1..].iter().all(|ak| ak.abs() < 1e-10));
        for t in [0.0, 0.05, 0.3, 1.0] {
            let s = m.survival_probability(&InitialMeasure::Qsd, t, 16).unwrap();
            let e = (-m.eigenvalues()[0] * t).exp();
            assert!((s.value - e).abs() < 1e-10);
            let s1 = m.survival_probability(&InitialMeasure::Qsd, t, 1).unwrap();
            assert!((s1.value - e).abs() < 1e-10);
        }
        let mean = m.mean_exit_time(&InitialMeasure::Qsd, 16).unwrap();
        assert!((mean.value - 1.0 / m.eigenvalues()[0]).abs() < 1e-12);
        let mean1 = m.mean_exit_time(&InitialMeasure::Qsd, 1).unwrap();
        assert!((mean.value - mean1.value).abs() < 1e-12);
    }

    #[test]
    fn exponential_exit_without_qsd() {
        let m = flat_model(1000, 16);
        let mu0 = InitialMeasure::from_fn(m.grid(), |x| {
            (PI * x).sin() / (2.0 / PI) + 0.1 * (2.0 * PI * x).sin()
        })
        .unwrap();
        for i in 1..=20 {
            let t = 0.05 * i as f64;
            let s = m.survival_probability(&mu0, t, 16).unwrap();
            let e = (-m.eigenvalues()[0] * t).exp();
            assert!(s.truncation_bound < 1e-10);
            assert!((s.value - e).abs() < 1e-10);
        }
    }

    #[test]
    fn conditioning_the_qsd_changes_nothing() {
        let m = flat_model(600, 16);
        for t in [0.1, 1.0, 10.0] {
            let c = m.conditioned_density(&InitialMeasure::Qsd, t).unwrap();
            assert!(m.tv_to_qsd(&c.density) < 1e-8);
        }
        let mu0 = InitialMeasure::from_fn(m.grid(), |x| x * x * (1.0 - x)).unwrap();
        let c = m.conditioned_density(&mu0, 0.0).unwrap();
        let InitialMeasure::GridDensity(d) = &mu0 else { unreachable!() };
        assert_eq!(&c.density, d);
    }

    #[test]
    fn semigroup_identity() {
        let dw = builtin_potential(PotentialName::TiltedDoubleWell1d, &[1.0, 0.2], 3.0).unwrap();
        let m = build_spectral_model(&dw, -0.3, 2.0, 600, 16).unwrap();
        let mu0 = InitialMeasure::from_fn(m.grid(), |x| (x + 0.3) * (2.0 - x).powi(2)).unwrap();
        for (t, s) in [(0.1, 0.2), (0.5, 1.0), (1.0, 0.05)] {
            let whole = m.survival_probability(&mu0, t + s, 16).unwrap().value;
            let head = m.survival_probability(&mu0, t, 16).unwrap().value;
            let cond = m.conditioned_density(&mu0, t).unwrap();
            assert!(cond.clipped_mass < 1e-12);
            let mid = InitialMeasure::grid_density(m.grid(), cond.density).unwrap();
            let tail = m.survival_probability(&mid, s, 16).unwrap().value;
            assert!((whole - head * tail).abs() < 1e-8, "{whole} vs {}", head * tail);
        }
    }

    #[test]
    fn mean_exit_from_center() {
        // m(x) = β x (1 - x) / 2
        let m = flat_model(2000, 16);
        let e = m.mean_exit_time(&InitialMeasure::PointMass(0.5), 16).unwrap();
        assert!((e.value / 0.125 - 1.0).abs() < 0.01, "{e:?}");
    }

    #[test]
    fn decay_rates() {
        let m = flat_model(1000, 16);
        let times: Vec<f64> = (0..9).map(|i| 0.1 + 0.025 * i as f64).collect();
        let fit = m.decay_rate_fit(&InitialMeasure::PointMass(0.3), &times).unwrap();
        let gap = m.eigenvalues()[1] - m.eigenvalues()[0];
        assert!((fit.rate / gap - 1.0).abs() < 0.05, "{}", fit.rate);
        let times: Vec<f64> = (0..9).map(|i| 0.05 + 0.02 * i as f64).collect();
        let fit = m.decay_rate_fit(&InitialMeasure::PointMass(0.5), &times).unwrap();
        let gap3 = m.eigenvalues()[2] - m.eigenvalues()[0];
        assert!((fit.rate / gap3 - 1.0).abs() < 0.05, "{}", fit.rate);
        assert_eq!(
            m.decay_rate_fit(&InitialMeasure::Qsd, &times),
            Err(SpectralError::AlreadyConverged)
        );
    }

    #[test]
    fn flat_hitting_is_symmetric() {
        let m = flat_model(2000, 2);
        let hm = m.hitting_measure().unwrap();
        assert!((hm.left - 0.5).abs() < 1e-9);
        assert!((hm.raw_sum - 1.0).abs() < 0.01);
    }

    #[test]
    fn qsd_samples_stay_inside() {
        let dw = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 4.0).unwrap();
        let m = build_spectral_model(&dw, 0.0, 2.5, 300, 2).unwrap();
        let xs = m.sample_qsd(&mut RngStream::new(1, 1), 20_000);
        assert!(xs.iter().all(|x| *x > 0.0 && *x < 2.5));
    }
}
