//! Text event-file format.
//!
//! ```text
//! #event_id=train-0001
//! #grain=fine
//! #tx_power=-54
//! #carry=hand
//! #pose=sitting
//! #reference_distance=1.2
//! 0,0.000000,gyroscope,0.010000,-0.020000,0.003000
//! 0,0.050000,bluetooth,-57.123456
//! ```
//!
//! Header lines come first. Readings are grouped into looks by their leading
//! index; a look's lines must be contiguous and its timestamps non-decreasing.

use std::fmt::Write as _;

use crate::domain::{
    Channel, DistanceClass, EventFile, EventMetadata, Grain, Look, SensorReading,
};
use crate::error::{Error, Result};

pub fn parse_event_file(bytes: &[u8]) -> Result<EventFile> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        // Report the line holding the first invalid byte.
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::parse(line, "invalid UTF-8")
    })?;

    let mut event_id = None;
    let mut grain = None;
    let mut tx_power = None;
    let mut carry = None;
    let mut pose = None;
    let mut reference = None;
    let mut looks: Vec<Look> = Vec::new();
    let mut header_done = false;
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        if raw.is_empty() {
            continue;
        }
        if let Some(header) = raw.strip_prefix('#') {
            if header_done {
                return Err(Error::parse(line_no, "header line after readings"));
            }
            let (key, value) = header
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, "header must be #key=value"))?;
            let at = |e: Error| Error::parse(line_no, e.to_string());
            match key {
                "event_id" if !value.is_empty() => event_id = Some(value.to_string()),
                "event_id" => return Err(Error::parse(line_no, "empty event_id")),
                "grain" => grain = Some(value.parse::<Grain>().map_err(at)?),
                "tx_power" => {
                    tx_power = Some(value.parse::<i32>().map_err(|_| {
                        Error::parse(line_no, format!("tx_power must be an integer, got {value:?}"))
                    })?)
                }
                "carry" => carry = Some(value.parse().map_err(at)?),
                "pose" => pose = Some(value.parse().map_err(at)?),
                "reference_distance" => {
                    reference = Some(value.parse::<DistanceClass>().map_err(at)?)
                }
                other => return Err(Error::parse(line_no, format!("unknown header key {other:?}"))),
            }
            continue;
        }
        header_done = true;

        let mut fields = raw.split(',');
        let look_index: u32 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::parse(line_no, "bad look index"))?;
        let timestamp: f64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::parse(line_no, "bad timestamp"))?;
        let channel: Channel = fields
            .next()
            .ok_or_else(|| Error::parse(line_no, "missing channel"))?
            .parse()
            .map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(line_no, "bad reading value"))?;
        let reading = SensorReading::new(timestamp, channel, &values)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;

        match looks.last_mut() {
            Some(look) if look.index == look_index => {
                let prev = look.readings.last().map(SensorReading::timestamp);
                if prev.is_some_and(|p| timestamp < p) {
                    return Err(Error::parse(
                        line_no,
                        format!("timestamp {timestamp} goes backwards within look {look_index}"),
                    ));
                }
                look.readings.push(reading);
            }
            _ => {
                if looks.iter().any(|l| l.index == look_index) {
                    return Err(Error::parse(
                        line_no,
                        format!("look {look_index} is not contiguous"),
                    ));
                }
                if let Some(prev) = looks.last().and_then(Look::first_timestamp) {
                    if timestamp < prev {
                        return Err(Error::parse(line_no, "looks out of time order"));
                    }
                }
                looks.push(Look {
                    index: look_index,
                    readings: vec![reading],
                });
            }
        }
    }

    let missing = |key: &str| Error::parse(last_line.max(1), format!("missing header #{key}"));
    let metadata = EventMetadata {
        event_id: event_id.ok_or_else(|| missing("event_id"))?,
        grain: grain.ok_or_else(|| missing("grain"))?,
        tx_power: tx_power.ok_or_else(|| missing("tx_power"))?,
        carry_location: carry.ok_or_else(|| missing("carry"))?,
        pose: pose.ok_or_else(|| missing("pose"))?,
        reference_distance: reference,
    };
    Ok(EventFile { metadata, looks })
}

pub fn serialize_event_file(event: &EventFile) -> String {
    let m = &event.metadata;
    let mut out = String::with_capacity(64 * event.reading_count() + 128);
    writeln!(out, "#event_id={}", m.event_id).unwrap();
    writeln!(out, "#grain={}", m.grain).unwrap();
    writeln!(out, "#tx_power={}", m.tx_power).unwrap();
    writeln!(out, "#carry={}", m.carry_location).unwrap();
    writeln!(out, "#pose={}", m.pose).unwrap();
    if let Some(d) = m.reference_distance {
        writeln!(out, "#reference_distance={d}").unwrap();
    }
    for (look, r) in event.readings() {
        write!(out, "{look},{:.6},{}", r.timestamp(), r.channel()).unwrap();
        for v in r.components() {
            write!(out, ",{v:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "#event_id=e1\n#grain=fine\n#tx_power=-54\n#carry=hand\n#pose=sitting\n\
0,0.000000,bluetooth,-60.000000\n0,0.100000,attitude,0.000000,0.100000,0.200000\n";

    #[test]
    fn parses_minimal_file() {
        let ev = parse_event_file(MINIMAL.as_bytes()).unwrap();
        assert_eq!(ev.looks.len(), 1);
        assert_eq!(ev.reading_count(), 2);
        assert_eq!(ev.metadata.event_id, "e1");
        assert_eq!(ev.metadata.reference_distance, None);
        assert_eq!(serialize_event_file(&ev), MINIMAL);
    }

    #[test]
    fn arity_error_names_line() {
        let text = format!("{MINIMAL}0,0.200000,accelerometer,1.000000\n");
        match parse_event_file(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_channel() {
        let text = format!("{MINIMAL}0,0.200000,barometer,1.0\n");
        assert!(matches!(
            parse_event_file(text.as_bytes()),
            Err(Error::Parse { line: 8, .. })
        ));
    }

    #[test]
    fn rejects_backwards_time_within_look() {
        let text = format!("{MINIMAL}0,0.050000,bluetooth,-61.0\n");
        assert!(matches!(
            parse_event_file(text.as_bytes()),
            Err(Error::Parse { line: 8, .. })
        ));
    }

    #[test]
    fn missing_header_is_an_error() {
        let text = MINIMAL.replace("#pose=sitting\n", "");
        let err = parse_event_file(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("pose"), "{err}");
    }

    #[test]
    fn non_contiguous_look_rejected() {
        let text = format!("{MINIMAL}1,4.0,bluetooth,-61.0\n0,5.0,bluetooth,-61.0\n");
        assert!(parse_event_file(text.as_bytes()).is_err());
    }

    #[test]
    fn groups_looks() {
        let text = format!("{MINIMAL}1,15.000000,bluetooth,-61.000000\n");
        let ev = parse_event_file(text.as_bytes()).unwrap();
        assert_eq!(ev.looks.len(), 2);
        assert_eq!(ev.looks[1].index, 1);
        assert_eq!(serialize_event_file(&ev), text);
    }
}
