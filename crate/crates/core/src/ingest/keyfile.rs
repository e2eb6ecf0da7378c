//! Tab-separated key, system-output, and ground-truth files.

use std::fmt::Write as _;

use crate::domain::{DistanceClass, Grain};
use crate::error::{Error, Result};
use crate::synthgen::{AngleSegment, GroundTruth};

#[derive(Clone, Debug, PartialEq)]
pub struct KeyEntry {
    pub event_id: String,
    pub reference: DistanceClass,
    pub grain: Grain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputEntry {
    pub event_id: String,
    pub predicted_m: f64,
}

fn fields(line: &str, line_no: usize, expected: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != expected {
        return Err(Error::parse(
            line_no,
            format!("expected {expected} tab-separated fields, got {}", f.len()),
        ));
    }
    if f[0].is_empty() {
        return Err(Error::parse(line_no, "empty event id"));
    }
    Ok(f)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn parse_key_file(text: &str) -> Result<Vec<KeyEntry>> {
    data_lines(text)
        .map(|(n, line)| {
            let f = fields(line, n, 3)?;
            let at = |e: Error| Error::parse(n, e.to_string());
            Ok(KeyEntry {
                event_id: f[0].to_string(),
                reference: f[1].parse().map_err(at)?,
                grain: f[2].parse().map_err(at)?,
            })
        })
        .collect()
}

pub fn render_key_file(entries: &[KeyEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        writeln!(out, "{}\t{}\t{}", e.event_id, e.reference, e.grain).unwrap();
    }
    out
}

pub fn parse_output_file(text: &str) -> Result<Vec<OutputEntry>> {
    data_lines(text)
        .map(|(n, line)| {
            let f = fields(line, n, 2)?;
            let predicted_m: f64 = f[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(n, format!("bad distance {:?}", f[1])))?;
            if !(predicted_m > 0.0) || !predicted_m.is_finite() {
                return Err(Error::parse(n, "predicted distance must be positive"));
            }
            Ok(OutputEntry {
                event_id: f[0].to_string(),
                predicted_m,
            })
        })
        .collect()
}

pub fn render_output_file(entries: &[OutputEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        match DistanceClass::ALL.iter().find(|c| c.metres() == e.predicted_m) {
            Some(class) => writeln!(out, "{}\t{class}", e.event_id),
            None => writeln!(out, "{}\t{}", e.event_id, e.predicted_m),
        }
        .unwrap();
    }
    out
}

/// One line per angle segment: `event_id, true distance, start, end, angle`.
pub fn render_ground_truth(truths: &[GroundTruth]) -> String {
    let mut out = String::new();
    for t in truths {
        for s in &t.segments {
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{}",
                t.event_id, t.true_distance, s.start, s.end, s.angle
            )
            .unwrap();
        }
    }
    out
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruth>> {
    let mut truths: Vec<GroundTruth> = Vec::new();
    for (n, line) in data_lines(text) {
        let f = fields(line, n, 5)?;
        let at = |e: Error| Error::parse(n, e.to_string());
        let true_distance: DistanceClass = f[1].parse().map_err(at)?;
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::parse(n, format!("bad number {s:?}")))
        };
        let segment = AngleSegment {
            start: num(f[2])?,
            end: num(f[3])?,
            angle: f[4]
                .parse()
                .ok()
                .filter(|a| crate::ingest::ANGLES.contains(a))
                .ok_or_else(|| Error::parse(n, format!("bad angle {:?}", f[4])))?,
        };
        match truths.last_mut() {
            Some(t) if t.event_id == f[0] => {
                if t.true_distance != true_distance {
                    return Err(Error::parse(n, "true distance changes within an event"));
                }
                t.segments.push(segment);
            }
            _ => truths.push(GroundTruth {
                event_id: f[0].to_string(),
                true_distance,
                segments: vec![segment],
            }),
        }
    }
    Ok(truths)
}
