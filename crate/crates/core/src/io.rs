//! CSV and JSON artifacts written by the command-line runners.
//!
//! CSV floats are written with `{:.16e}` so that values round-trip exactly
//! and reruns are byte-identical.

use std::fmt::Write as _;

use serde_json::{json, Value};
use thiserror::Error;

use crate::parrep::{StateEvent, StateTrajectory};
use crate::sde::ExitFace;

pub const SCHEMA_VERSION: u32 = 1;

pub const EVENTS_HEADER: &str = "state,entry_t,hold,exit_face";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{source_name}: line {line}: {message}")]
pub struct SchemaError {
    pub source_name: String,
    pub line: usize,
    pub message: String,
}

pub fn build_id() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Wraps a result object with the fields every JSON artifact carries.
pub fn envelope(command: &str, config_hash: &str, master_seed: Option<u64>, result: Value) -> String {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "build": build_id(),
        "command": command,
        "config_hash": config_hash,
        "master_seed": master_seed,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Table with a header line and one line per row.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn events_csv(traj: &StateTrajectory) -> String {
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for e in &traj.events {
        let state = e.state.map_or(-1, |s| s as i64);
        let _ = writeln!(out, "{state},{},{},{}", float(e.entry_t), float(e.hold), e.exit_face.code());
    }
    out
}

/// Parses an events table written by [`events_csv`].
pub fn parse_events_csv(text: &str, source_name: &str) -> Result<StateTrajectory, SchemaError> {
    let err = |line: usize, message: String| SchemaError {
        source_name: source_name.into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == EVENTS_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header `{EVENTS_HEADER}`, got `{h}`"))),
        None => return Err(err(1, "empty file".into())),
    }
    let mut events = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(line, format!("expected 4 fields, got {}", fields.len())));
        }
        let state = match fields[0].parse::<i64>() {
            Ok(-1) => None,
            Ok(s) if s >= 0 => Some(s as usize),
            _ => return Err(err(line, format!("bad state `{}`", fields[0]))),
        };
        let time = |k: usize, name: &str| {
            fields[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| err(line, format!("bad {name} `{}`", fields[k])))
        };
        let entry_t = time(1, "entry_t")?;
        let hold = time(2, "hold")?;
        let exit_face = fields[3]
            .parse::<i64>()
            .ok()
            .and_then(ExitFace::from_code)
            .ok_or_else(|| err(line, format!("bad exit_face `{}`", fields[3])))?;
        events.push(StateEvent {
            state,
            entry_t,
            hold,
            exit_face,
        });
    }
    let total_t_simu = events.last().map_or(0.0, |e| e.entry_t + e.hold);
    Ok(StateTrajectory { events, total_t_simu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> StateTrajectory {
        StateTrajectory {
            events: vec![
                StateEvent { state: Some(0), entry_t: 0.0, hold: 0.1, exit_face: ExitFace::Right },
                StateEvent { state: None, entry_t: 0.1, hold: 1.0 / 3.0, exit_face: ExitFace::Unknown },
                StateEvent { state: Some(1), entry_t: 0.1 + 1.0 / 3.0, hold: 2.5e-7, exit_face: ExitFace::Left },
            ],
            total_t_simu: 0.1 + 1.0 / 3.0 + 2.5e-7,
        }
    }

    #[test]
    fn events_round_trip_exactly() {
        let t = sample();
        let text = events_csv(&t);
        assert!(text.starts_with("state,entry_t,hold,exit_face\n0,0.0000000000000000e0,"));
        assert_eq!(parse_events_csv(&text, "t").unwrap(), t);
    }

    #[test]
    fn schema_errors_name_the_line() {
        let e = parse_events_csv("state,hold\n", "a.csv").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_events_csv("state,entry_t,hold,exit_face\n0,0,1,1\n0,x,1,1\n", "a.csv").unwrap_err();
        assert_eq!((e.line, e.source_name.as_str()), (3, "a.csv"));
        let e = parse_events_csv("state,entry_t,hold,exit_face\n0,0,1,7\n", "a.csv").unwrap_err();
        assert!(e.message.contains("exit_face"));
        assert!(parse_events_csv("", "a.csv").is_err());
    }

    #[test]
    fn envelope_fields() {
        let s = envelope("spectrum", "abc", Some(3), json!({"x": 1.5}));
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["master_seed"], 3);
        assert_eq!(v["build"], build_id());
        assert_eq!(v["result"]["x"], 1.5);
    }

    proptest! {
        #[test]
        fn any_trajectory_round_trips(rows in prop::collection::vec(
            (prop::option::of(0usize..50), 0.0f64..1e6, 0.0f64..1e3, 0i64..3), 0..40)
        ) {
            let events: Vec<StateEvent> = rows
                .iter()
                .map(|&(state, entry_t, hold, face)| StateEvent {
                    state,
                    entry_t,
                    hold,
                    exit_face: ExitFace::from_code(face - 1).unwrap(),
                })
                .collect();
            let total_t_simu = events.last().map_or(0.0, |e| e.entry_t + e.hold);
            let t = StateTrajectory { events, total_t_simu };
            prop_assert_eq!(parse_events_csv(&events_csv(&t), "p").unwrap(), t);
        }
    }
}
