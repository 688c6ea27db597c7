//! Experiment configuration: UTF-8 text of `section.key = value` lines,
//! `#` comments and blank lines.
//!
//! ```text
//! seed = 7
//! potential.name = double_well_1d
//! potential.params = 1.0
//! potential.beta = 4
//! statemap.boundaries = -2.5, 0, 2.5
//! sde.dt = 1e-4
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parrep::DephasingMethod;
use crate::potential::{
    builtin_potential, gradient_descent_state_map, interval_state_map, MinimaRegistry,
    PotentialModel, PotentialName, StateMap, DEFAULT_MATCH_RADIUS,
};
use crate::qsd::DEFAULT_MAX_RESTARTS;
use crate::sde::{steps_in, ExitDetection};
use crate::spectral::DEFAULT_EIGENPAIRS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: `{key}` is set twice (first on line {first})")]
    Duplicate { key: String, line: usize, first: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: `{key}`: {message}")]
    Invalid { key: String, line: usize, message: String },
    #[error("missing `{0}`")]
    Missing(String),
    #[error("missing {block} block ({hint})")]
    MissingBlock { block: &'static str, hint: &'static str },
    #[error("configuration is empty")]
    Empty,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "output_dir",
    "potential.name",
    "potential.params",
    "potential.beta",
    "statemap.kind",
    "statemap.boundaries",
    "statemap.minima",
    "statemap.match_radius",
    "statemap.step",
    "statemap.max_iters",
    "well.a",
    "well.b",
    "well.n",
    "well.k",
    "sde.dt",
    "parrep.replicas",
    "parrep.tau_corr",
    "parrep.tau_dephase",
    "parrep.method",
    "parrep.relaxation_time",
    "parrep.max_events",
    "parrep.max_restarts",
    "parrep.speeds",
    "sampling.count",
    "sampling.t_end",
    "sampling.start",
    "sampling.censor",
    "sampling.bins",
    "sampling.tau_dephase",
    "sampling.detection",
    "sampling.max_restarts",
    "decay.start",
    "decay.t_start",
    "decay.t_end",
    "decay.points",
];

/// Parsed key-value pairs with the line each came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

pub fn parse_config(text: &str) -> Result<RawConfig, ConfigError> {
    let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line,
                message: format!("malformed key `{key}`"),
            });
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                key: key.into(),
                line,
            });
        }
        if let Some((_, first)) = entries.get(key) {
            return Err(ConfigError::Duplicate {
                key: key.into(),
                line,
                first: *first,
            });
        }
        entries.insert(key.into(), (value.into(), line));
    }
    if entries.is_empty() {
        return Err(ConfigError::Empty);
    }
    Ok(RawConfig { entries })
}

fn parse_float(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{t}` is not a number")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_float).collect()
}

impl RawConfig {
    pub fn is_set(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn has_block(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => parse(v).map(Some).map_err(|message| ConfigError::Invalid {
                key: key.into(),
                line: *line,
                message,
            }),
        }
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            key: key.into(),
            line: self.entries.get(key).map_or(0, |e| e.1),
            message: message.into(),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key, parse_float)
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.float(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(self.invalid(key, "must be positive and finite")),
            v => Ok(v),
        }
    }

    fn nonnegative(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.float(key)? {
            Some(v) if !(v >= 0.0 && v.is_finite()) => Err(self.invalid(key, "must be nonnegative and finite")),
            v => Ok(v),
        }
    }

    fn integer<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(key, |s| s.parse::<T>().map_err(|_| format!("`{s}` is not a valid integer")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key, parse_list)
    }

    fn text(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.0.as_str())
    }

    /// SHA-256 of the canonical `key=value` listing, in hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, (v, _)) in &self.entries {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Key-value pairs in key order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (v, _))| (k.as_str(), v.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateMapSpec {
    Intervals(Vec<f64>),
    GradientDescent {
        minima: Vec<Vec<f64>>,
        match_radius: f64,
        step: f64,
        max_iters: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellBlock {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub k: usize,
}

/// Decorrelation time: a number, `inf`, or a multiple of the largest
/// `1/(λ₂ - λ₁)` over the wells (`gap:5`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauCorr {
    Fixed(f64),
    GapMultiple(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParRepBlock {
    pub replicas: usize,
    pub tau_corr: TauCorr,
    pub tau_dephase: Option<f64>,
    pub method: DephasingMethod,
    pub relaxation_time: Option<f64>,
    pub max_events: usize,
    pub max_restarts: u64,
    pub speeds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingBlock {
    pub count: usize,
    pub t_end: Option<f64>,
    pub start: Option<Vec<f64>>,
    pub censor: f64,
    pub bins: usize,
    pub tau_dephase: Option<f64>,
    pub detection: ExitDetection,
    pub max_restarts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayStart {
    Point(f64),
    Qsd,
}

impl fmt::Display for DecayStart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecayStart::Point(x) => write!(f, "point:{x}"),
            DecayStart::Qsd => f.write_str("qsd"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBlock {
    pub start: DecayStart,
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
}

impl DecayBlock {
    pub fn times(&self) -> Vec<f64> {
        let span = self.t_end - self.t_start;
        (0..self.points)
            .map(|i| self.t_start + span * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub potential: PotentialModel,
    pub potential_name: PotentialName,
    pub potential_params: Vec<f64>,
    pub statemap: Option<StateMapSpec>,
    pub well: Option<WellBlock>,
    pub well_n: usize,
    pub well_k: usize,
    pub dt: f64,
    pub parrep: Option<ParRepBlock>,
    pub sampling: SamplingBlock,
    pub decay: Option<DecayBlock>,
    pub raw: RawConfig,
}

fn points(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_list).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(parse_config(text)?)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let seed = raw.integer::<u64>("seed")?.unwrap_or(0);
        let output_dir = raw.text("output_dir").map(PathBuf::from);

        let name_text = raw.text("potential.name").ok_or(ConfigError::MissingBlock {
            block: "potential",
            hint: "potential.name is required",
        })?;
        let potential_name: PotentialName = name_text
            .parse()
            .map_err(|e: crate::potential::PotentialError| raw.invalid("potential.name", e.to_string()))?;
        let potential_params = raw.list("potential.params")?.unwrap_or_default();
        let beta = raw.positive("potential.beta")?.unwrap_or(1.0);
        let potential = builtin_potential(potential_name, &potential_params, beta)
            .map_err(|e| raw.invalid("potential.params", e.to_string()))?;

        let statemap = if raw.has_block("statemap.") {
            match raw.text("statemap.kind").unwrap_or("intervals") {
                "intervals" => {
                    let b = raw
                        .list("statemap.boundaries")?
                        .ok_or_else(|| ConfigError::Missing("statemap.boundaries".into()))?;
                    interval_state_map(&b).map_err(|e| raw.invalid("statemap.boundaries", e.to_string()))?;
                    Some(StateMapSpec::Intervals(b))
                }
                "gradient_descent" => Some(StateMapSpec::GradientDescent {
                    minima: raw.get("statemap.minima", points)?.unwrap_or_default(),
                    match_radius: raw.positive("statemap.match_radius")?.unwrap_or(DEFAULT_MATCH_RADIUS),
                    step: raw.positive("statemap.step")?.unwrap_or(1e-2),
                    max_iters: raw.integer("statemap.max_iters")?.unwrap_or(100_000),
                }),
                other => {
                    return Err(raw.invalid(
                        "statemap.kind",
                        format!("unknown kind `{other}` (expected intervals or gradient_descent)"),
                    ))
                }
            }
        } else {
            None
        };

        let well_n = raw.integer::<usize>("well.n")?.unwrap_or(2000);
        let well_k = raw.integer::<usize>("well.k")?.unwrap_or(DEFAULT_EIGENPAIRS);
        let well = match (raw.float("well.a")?, raw.float("well.b")?) {
            (Some(a), Some(b)) => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(raw.invalid("well.b", "well needs finite a < b"));
                }
                Some(WellBlock { a, b, n: well_n, k: well_k })
            }
            (None, None) => None,
            (Some(_), None) => return Err(ConfigError::Missing("well.b".into())),
            (None, Some(_)) => return Err(ConfigError::Missing("well.a".into())),
        };
        if well_n < 3 {
            return Err(raw.invalid("well.n", "needs at least 3 interior points"));
        }
        if well_k == 0 || well_k > well_n {
            return Err(raw.invalid("well.k", "must lie in 1..=well.n"));
        }

        let dt = raw.positive("sde.dt")?.unwrap_or(1e-4);
        let multiple_of_dt = |key: &str, v: Option<f64>| -> Result<Option<f64>, ConfigError> {
            if let Some(t) = v {
                steps_in(t, dt).map_err(|_| raw.invalid(key, format!("must be a positive multiple of sde.dt = {dt}")))?;
            }
            Ok(v)
        };

        let parrep = if raw.has_block("parrep.") {
            let tau_corr = match raw.text("parrep.tau_corr") {
                None => return Err(ConfigError::Missing("parrep.tau_corr".into())),
                Some(t) if t.trim().starts_with("gap:") => {
                    let m = raw.get("parrep.tau_corr", |s| parse_float(&s.trim()[4..]))?.unwrap();
                    if !(m > 0.0 && m.is_finite()) {
                        return Err(raw.invalid("parrep.tau_corr", "gap multiple must be positive"));
                    }
                    TauCorr::GapMultiple(m)
                }
                Some(_) => {
                    let v = raw.float("parrep.tau_corr")?.unwrap();
                    if v < 0.0 {
                        return Err(raw.invalid("parrep.tau_corr", "must be nonnegative"));
                    }
                    if v.is_finite() && v > 0.0 {
                        multiple_of_dt("parrep.tau_corr", Some(v))?;
                    }
                    TauCorr::Fixed(v)
                }
            };
            let method = match raw.text("parrep.method") {
                None => DephasingMethod::ExactQsd,
                Some(m) => m.parse().map_err(|e: String| raw.invalid("parrep.method", e))?,
            };
            let replicas = raw.integer::<usize>("parrep.replicas")?.unwrap_or(8);
            if replicas == 0 {
                return Err(raw.invalid("parrep.replicas", "must be positive"));
            }
            let speeds = raw.list("parrep.speeds")?;
            if let Some(s) = &speeds {
                if s.len() != replicas || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(raw.invalid("parrep.speeds", "needs one positive speed per replica"));
                }
            }
            let tau_dephase = multiple_of_dt("parrep.tau_dephase", raw.positive("parrep.tau_dephase")?)?;
            if method != DephasingMethod::ExactQsd && tau_dephase.is_none() {
                return Err(ConfigError::Missing("parrep.tau_dephase".into()));
            }
            let relaxation_time = raw.nonnegative("parrep.relaxation_time")?;
            if let Some(r) = relaxation_time.filter(|r| *r > 0.0) {
                multiple_of_dt("parrep.relaxation_time", Some(r))?;
            }
            Some(ParRepBlock {
                replicas,
                tau_corr,
                tau_dephase,
                method,
                relaxation_time,
                max_events: raw.integer("parrep.max_events")?.unwrap_or(1000),
                max_restarts: raw.integer("parrep.max_restarts")?.unwrap_or(DEFAULT_MAX_RESTARTS),
                speeds,
            })
        } else {
            None
        };

        let detection = match raw.text("sampling.detection").unwrap_or("grid") {
            "grid" => ExitDetection::Grid,
            "bridge" => ExitDetection::Bridge,
            other => {
                return Err(raw.invalid(
                    "sampling.detection",
                    format!("unknown rule `{other}` (expected grid or bridge)"),
                ))
            }
        };
        let bins = raw.integer::<usize>("sampling.bins")?.unwrap_or(50);
        if bins < 2 {
            return Err(raw.invalid("sampling.bins", "needs at least 2 bins"));
        }
        let start = raw.list("sampling.start")?;
        if let Some(s) = &start {
            if s.len() != potential.dimension() {
                return Err(raw.invalid(
                    "sampling.start",
                    format!("needs {} coordinate(s)", potential.dimension()),
                ));
            }
        }
        let sampling = SamplingBlock {
            count: raw.integer("sampling.count")?.unwrap_or(10_000),
            t_end: raw.nonnegative("sampling.t_end")?,
            start,
            censor: raw
                .float("sampling.censor")?
                .map(|c| {
                    if c > 0.0 {
                        Ok(c)
                    } else {
                        Err(raw.invalid("sampling.censor", "must be positive"))
                    }
                })
                .transpose()?
                .unwrap_or(f64::INFINITY),
            bins,
            tau_dephase: multiple_of_dt("sampling.tau_dephase", raw.positive("sampling.tau_dephase")?)?,
            detection,
            max_restarts: raw.integer("sampling.max_restarts")?.unwrap_or(DEFAULT_MAX_RESTARTS),
        };

        let decay = if raw.has_block("decay.") {
            let start = match raw.text("decay.start") {
                None => return Err(ConfigError::Missing("decay.start".into())),
                Some("qsd") => DecayStart::Qsd,
                Some(s) => DecayStart::Point(raw.get("decay.start", |v| {
                    v.strip_prefix("point:")
                        .ok_or_else(|| format!("expected `qsd` or `point:X`, got `{v}`"))
                        .and_then(parse_float)
                })?
                .unwrap_or_else(|| unreachable!("{s}"))),
            };
            let t_start = raw.positive("decay.t_start")?.ok_or_else(|| ConfigError::Missing("decay.t_start".into()))?;
            let t_end = raw.positive("decay.t_end")?.ok_or_else(|| ConfigError::Missing("decay.t_end".into()))?;
            if t_end <= t_start {
                return Err(raw.invalid("decay.t_end", "must exceed decay.t_start"));
            }
            let points = raw.integer::<usize>("decay.points")?.unwrap_or(10);
            if points < 3 {
                return Err(raw.invalid("decay.points", "needs at least 3 points"));
            }
            Some(DecayBlock { start, t_start, t_end, points })
        } else {
            None
        };

        Ok(Self {
            seed,
            output_dir,
            potential,
            potential_name,
            potential_params,
            statemap,
            well,
            well_n,
            well_k,
            dt,
            parrep,
            sampling,
            decay,
            raw,
        })
    }

    pub fn require_well(&self) -> Result<WellBlock, ConfigError> {
        self.well.ok_or(ConfigError::MissingBlock {
            block: "well",
            hint: "well.a and well.b are required",
        })
    }

    pub fn require_parrep(&self) -> Result<&ParRepBlock, ConfigError> {
        self.parrep.as_ref().ok_or(ConfigError::MissingBlock {
            block: "parrep",
            hint: "parrep.tau_corr is required",
        })
    }

    pub fn require_decay(&self) -> Result<DecayBlock, ConfigError> {
        self.decay.ok_or(ConfigError::MissingBlock {
            block: "decay",
            hint: "decay.start, decay.t_start and decay.t_end are required",
        })
    }

    pub fn require_start(&self) -> Result<Vec<f64>, ConfigError> {
        self.sampling
            .start
            .clone()
            .ok_or_else(|| ConfigError::Missing("sampling.start".into()))
    }

    pub fn require_t_end(&self) -> Result<f64, ConfigError> {
        self.sampling
            .t_end
            .ok_or_else(|| ConfigError::Missing("sampling.t_end".into()))
    }

    /// The configured state map; without a statemap block, the well
    /// `(a, b)` as a single interval.
    pub fn build_state_map(&self) -> Result<StateMap, ConfigError> {
        match &self.statemap {
            Some(StateMapSpec::Intervals(b)) => {
                interval_state_map(b).map_err(|e| self.raw.invalid("statemap.boundaries", e.to_string()))
            }
            Some(StateMapSpec::GradientDescent {
                minima,
                match_radius,
                step,
                max_iters,
            }) => {
                let registry = MinimaRegistry::with_minima(*match_radius, minima.clone())
                    .map_err(|e| self.raw.invalid("statemap.minima", e.to_string()))?;
                gradient_descent_state_map(self.potential, registry, *step, *max_iters)
                    .map_err(|e| self.raw.invalid("statemap.step", e.to_string()))
            }
            None => {
                let w = self.well.ok_or(ConfigError::MissingBlock {
                    block: "statemap",
                    hint: "statemap.boundaries, or a well block to use as the only state",
                })?;
                interval_state_map(&[w.a, w.b]).map_err(|e| self.raw.invalid("well.a", e.to_string()))
            }
        }
    }

    pub fn hash(&self) -> String {
        self.raw.hash()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: &str = "\
# flat well
seed = 5
potential.name = flat
well.a = 0
well.b = 1   # trailing comment
well.n = 200
";

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::parse(FLAT).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.well, Some(WellBlock { a: 0.0, b: 1.0, n: 200, k: 16 }));
        assert_eq!(c.dt, 1e-4);
        assert!(c.parrep.is_none());
        assert_eq!(c.build_state_map().unwrap().label(&[0.5]), Some(0));
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(parse_config("# nothing\n\n").unwrap_err(), ConfigError::Empty);
    }

    #[test]
    fn errors_carry_lines() {
        let e = ExperimentConfig::parse("potential.name = flat\nwell.a = zero\nwell.b = 1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { line: 2, .. }), "{e}");
        let e = parse_config("potential.name = flat\nbogus.key = 1\n").unwrap_err();
        assert_eq!(e, ConfigError::UnknownKey { key: "bogus.key".into(), line: 2 });
        let e = parse_config("seed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(e, ConfigError::Duplicate { key: "seed".into(), line: 2, first: 1 });
        let e = parse_config("seed 1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn times_must_be_multiples_of_dt() {
        let text = format!("{FLAT}sde.dt = 0.01\nparrep.tau_corr = 0.015\n");
        let e = ExperimentConfig::parse(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { ref key, line: 8, .. } if key == "parrep.tau_corr"), "{e}");
    }

    #[test]
    fn tau_corr_forms() {
        for (v, want) in [
            ("inf", TauCorr::Fixed(f64::INFINITY)),
            ("0", TauCorr::Fixed(0.0)),
            ("gap:5", TauCorr::GapMultiple(5.0)),
            ("0.02", TauCorr::Fixed(0.02)),
        ] {
            let c = ExperimentConfig::parse(&format!("{FLAT}parrep.tau_corr = {v}\n")).unwrap();
            assert_eq!(c.parrep.unwrap().tau_corr, want);
        }
    }

    #[test]
    fn missing_blocks_are_named() {
        let c = ExperimentConfig::parse("potential.name = flat\n").unwrap();
        assert!(matches!(c.require_well(), Err(ConfigError::MissingBlock { block: "well", .. })));
        assert!(c.build_state_map().is_err());
    }

    #[test]
    fn hash_ignores_comments_and_order() {
        let a = parse_config("seed = 1\npotential.name = flat # x\n").unwrap();
        let b = parse_config("# header\npotential.name = flat\nseed = 1\n").unwrap();
        let c = parse_config("seed = 2\npotential.name = flat\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn decay_block() {
        let c = ExperimentConfig::parse(&format!(
            "{FLAT}decay.start = point:0.3\ndecay.t_start = 0.1\ndecay.t_end = 0.3\ndecay.points = 5\n"
        ))
        .unwrap();
        let d = c.require_decay().unwrap();
        assert_eq!(d.start, DecayStart::Point(0.3));
        let times = d.times();
        assert_eq!(times.len(), 5);
        for (t, want) in times.iter().zip([0.1, 0.15, 0.2, 0.25, 0.3]) {
            assert!((t - want).abs() < 1e-15, "{t} vs {want}");
        }
    }
}
