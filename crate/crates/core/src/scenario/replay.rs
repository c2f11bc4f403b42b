//! Measurement replay files.
//!
//! One record per line, fields separated by whitespace:
//!
//! ```text
//! <t> NAV  <agent> <x> <y>
//! <t> LINK <rx> <tx> <range> <bearing>
//! <t> MOT  <rx> <tx> [<range> <bearing>]
//! ```
//!
//! A `MOT` record without values declares a scan of the pair that produced
//! no measurements. Blank lines and text after `#` are ignored.

use super::{LinkMeasurement, MeasurementFrame};
use crate::models::{RangeBearing, Vec2};
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn field<T: FromStr>(tok: Option<&str>, what: &str, line: usize) -> Result<T, ReplayError> {
    let tok = tok.ok_or_else(|| ReplayError::Malformed {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| ReplayError::Malformed {
        line,
        message: format!("bad {what} '{tok}'"),
    })
}

fn finite(v: f64, what: &str, line: usize) -> Result<f64, ReplayError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ReplayError::Malformed {
            line,
            message: format!("{what} is not finite"),
        })
    }
}

fn agent_id(tok: Option<&str>, what: &str, line: usize, num_agents: usize) -> Result<usize, ReplayError> {
    let id: usize = field(tok, what, line)?;
    if id == 0 || id > num_agents {
        return Err(ReplayError::Malformed {
            line,
            message: format!("{what} {id} outside 1..={num_agents}"),
        });
    }
    Ok(id)
}

/// Parses a replay document into frames for `t = 1..=horizon`.
pub fn parse_replay(text: &str, num_agents: usize, horizon: usize) -> Result<Vec<MeasurementFrame>, ReplayError> {
    let mut frames: BTreeMap<usize, MeasurementFrame> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let t: usize = field(toks.next(), "time step", line)?;
        if t == 0 || t > horizon {
            return Err(ReplayError::Malformed {
                line,
                message: format!("time step {t} outside 1..={horizon}"),
            });
        }
        let kind = toks.next().ok_or_else(|| ReplayError::Malformed {
            line,
            message: "missing record type".into(),
        })?;
        let frame = frames.entry(t).or_insert_with(|| MeasurementFrame {
            t,
            ..Default::default()
        });
        match kind {
            "NAV" => {
                let a = agent_id(toks.next(), "agent", line, num_agents)?;
                let x = finite(field(toks.next(), "x", line)?, "x", line)?;
                let y = finite(field(toks.next(), "y", line)?, "y", line)?;
                frame.nav.insert(a, Vec2::new(x, y));
            }
            "LINK" | "MOT" => {
                let rx = agent_id(toks.next(), "receiver", line, num_agents)?;
                let tx = agent_id(toks.next(), "transmitter", line, num_agents)?;
                let first = toks.next();
                let value = match first {
                    None if kind == "MOT" => None,
                    _ => {
                        let r = finite(field(first, "range", line)?, "range", line)?;
                        let b = finite(field(toks.next(), "bearing", line)?, "bearing", line)?;
                        if r < 0.0 {
                            return Err(ReplayError::Malformed {
                                line,
                                message: "negative range".into(),
                            });
                        }
                        Some(RangeBearing::new(r, b))
                    }
                };
                if kind == "LINK" {
                    if rx == tx {
                        return Err(ReplayError::Malformed {
                            line,
                            message: "link from an agent to itself".into(),
                        });
                    }
                    frame.links.push(LinkMeasurement {
                        rx,
                        tx,
                        value: value.expect("links always carry a value"),
                    });
                } else {
                    let scan = frame.mot.entry((rx, tx)).or_default();
                    scan.extend(value);
                }
            }
            other => {
                return Err(ReplayError::Malformed {
                    line,
                    message: format!("unknown record type '{other}'"),
                })
            }
        }
        if let Some(extra) = toks.next() {
            return Err(ReplayError::Malformed {
                line,
                message: format!("unexpected trailing field '{extra}'"),
            });
        }
    }
    Ok((1..=horizon)
        .map(|t| {
            frames.remove(&t).unwrap_or(MeasurementFrame {
                t,
                ..Default::default()
            })
        })
        .collect())
}

pub fn read_replay(path: &std::path::Path, num_agents: usize, horizon: usize) -> Result<Vec<MeasurementFrame>, ReplayError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReplayError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_replay(&text, num_agents, horizon)
}

/// Writes frames in the replay format. Parsing the output yields the same
/// frames, up to float formatting.
pub fn format_replay(frames: &[MeasurementFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        for (a, g) in &f.nav {
            out += &format!("{} NAV {} {:.17e} {:.17e}\n", f.t, a, g.x, g.y);
        }
        for l in &f.links {
            out += &format!(
                "{} LINK {} {} {:.17e} {:.17e}\n",
                f.t, l.rx, l.tx, l.value.range, l.value.bearing
            );
        }
        for ((rx, tx), zs) in &f.mot {
            if zs.is_empty() {
                out += &format!("{} MOT {} {}\n", f.t, rx, tx);
            }
            for z in zs {
                out += &format!("{} MOT {} {} {:.17e} {:.17e}\n", f.t, rx, tx, z.range, z.bearing);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_paper_scenario, synthesize_frame};

    #[test]
    fn round_trip() {
        let s = build_paper_scenario(4);
        let frames: Vec<_> = (1..=6).map(|t| synthesize_frame(&s, t, 4)).collect();
        let text = format_replay(&frames);
        let parsed = parse_replay(&text, 4, 6).unwrap();
        assert_eq!(parsed, frames);
    }

    #[test]
    fn empty_scan_and_missing_steps() {
        let text = "# header\n2 MOT 1 4\n\n3 NAV 4 1.0 2.0  # trailing comment\n";
        let f = parse_replay(text, 4, 3).unwrap();
        assert_eq!(f.len(), 3);
        assert!(f[0].mot.is_empty());
        assert_eq!(f[1].mot.get(&(1, 4)), Some(&vec![]));
        assert_eq!(f[2].nav[&4], Vec2::new(1.0, 2.0));
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = |text: &str| match parse_replay(text, 4, 10) {
            Err(ReplayError::Malformed { line, .. }) => line,
            other => panic!("expected error, got {other:?}"),
        };
        assert_eq!(err("1 NAV 1 0 0\n1 NAV 9 0 0\n"), 2);
        assert_eq!(err("\n\n1 LINK 1 4 100\n"), 3);
        assert_eq!(err("11 NAV 1 0 0\n"), 1);
        assert_eq!(err("1 FOO 1 0 0\n"), 1);
        assert_eq!(err("1 MOT 1 4 1 2 3\n"), 1);
        assert_eq!(err("1 LINK 2 2 1 2\n"), 1);
        assert_eq!(err("1 MOT 1 4 -5 2\n"), 1);
        assert_eq!(err("x NAV 1 0 0\n"), 1);
    }
}
