use std::collections::BTreeMap;

use serde::Serialize;

use crate::potential::{PotentialModel, Region, StateMap};
use crate::spectral::{build_spectral_model, SpectralError, SpectralModel};

/// Spectral models of the bounded one-dimensional wells of a state map,
/// keyed by state label.
#[derive(Debug, Clone, Default)]
pub struct WellModels {
    models: BTreeMap<usize, SpectralModel>,
}

impl WellModels {
    /// One model per finite interval of an interval state map; unbounded
    /// wells and gradient-descent maps yield no models.
    pub fn for_state_map(
        potential: &PotentialModel,
        statemap: &StateMap,
        n: usize,
        k: usize,
    ) -> Result<Self, SpectralError> {
        let mut models = BTreeMap::new();
        if potential.dimension() != 1 {
            return Ok(Self { models });
        }
        for label in 0..statemap.label_count() {
            if let Some(Region::Interval { a, b }) = statemap.well_of(label) {
                if a.is_finite() && b.is_finite() {
                    models.insert(label, build_spectral_model(potential, a, b, n, k)?);
                }
            }
        }
        Ok(Self { models })
    }

    pub fn get(&self, label: usize) -> Option<&SpectralModel> {
        self.models.get(&label)
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &SpectralModel)> {
        self.models.iter().map(|(l, m)| (*l, m))
    }

    /// Largest `1 / (λ₂ - λ₁)` over the wells.
    pub fn gap_reciprocal_max(&self) -> Option<f64> {
        self.models
            .values()
            .filter_map(|m| m.gap())
            .map(|g| 1.0 / g)
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    Within,
    BelowGapReciprocal,
    AboveMeanExit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationEntry {
    pub state: usize,
    pub a: f64,
    pub b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gap_reciprocal: f64,
    /// Mean exit time from the QSD, `1/λ₁`.
    pub mean_exit: f64,
    pub status: CalibrationStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub tau_corr: Option<f64>,
    pub flagged: bool,
    pub wells: Vec<CalibrationEntry>,
}

/// Checks `1/(λ₂ - λ₁) ≤ τ_corr ≤ 1/λ₁` in every well with a model.
pub fn calibration_report(tau_corr: f64, wells: &WellModels) -> CalibrationReport {
    let entries: Vec<CalibrationEntry> = wells
        .iter()
        .filter(|(_, m)| m.mode_count() >= 2)
        .map(|(state, m)| {
            let l = m.eigenvalues();
            let gap_reciprocal = 1.0 / (l[1] - l[0]);
            let mean_exit = 1.0 / l[0];
            let status = if tau_corr < gap_reciprocal {
                CalibrationStatus::BelowGapReciprocal
            } else if tau_corr > mean_exit {
                CalibrationStatus::AboveMeanExit
            } else {
                CalibrationStatus::Within
            };
            CalibrationEntry {
                state,
                a: m.grid().a,
                b: m.grid().b,
                lambda1: l[0],
                lambda2: l[1],
                gap_reciprocal,
                mean_exit,
                status,
            }
        })
        .collect();
    CalibrationReport {
        // JSON has no infinity
        tau_corr: tau_corr.is_finite().then_some(tau_corr),
        flagged: entries.iter().any(|e| e.status != CalibrationStatus::Within),
        wells: entries,
    }
}
