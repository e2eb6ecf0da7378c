use std::fmt;
use std::str::FromStr;

use crate::domain::DistanceClass;
use crate::error::{Error, Result};
use crate::ingest::FeatureRow;

/// Most frequent class; ties go to the smaller distance.
pub fn aggregate_event(predictions: &[DistanceClass]) -> Result<DistanceClass> {
    if predictions.is_empty() {
        return Err(Error::InvalidData("cannot aggregate an empty prediction list".into()));
    }
    let mut counts = [0usize; 4];
    for p in predictions {
        counts[p.index()] += 1;
    }
    let mut best = 0;
    for k in 1..counts.len() {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    Ok(DistanceClass::from_index(best).expect("four classes"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LookMode {
    First,
    Last,
    #[default]
    Full,
}

impl LookMode {
    pub const ALL: [LookMode; 3] = [LookMode::First, LookMode::Last, LookMode::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            LookMode::First => "first",
            LookMode::Last => "last",
            LookMode::Full => "full",
        }
    }
}

impl fmt::Display for LookMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LookMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "first" => Ok(LookMode::First),
            "last" => Ok(LookMode::Last),
            "full" => Ok(LookMode::Full),
            other => Err(Error::Config(format!(
                "unknown look mode {other:?} (expected first, last or full)"
            ))),
        }
    }
}

/// Rows belonging to the first look, the last look, or all of them.
///
/// Rows come out of `assemble_rows` in time order and looks are ordered in
/// time, so each look is a contiguous run.
pub fn select_look(rows: &[FeatureRow], mode: LookMode) -> &[FeatureRow] {
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return rows;
    };
    match mode {
        LookMode::Full => rows,
        LookMode::First => {
            let end = rows.partition_point(|r| r.look_index == first.look_index);
            &rows[..end]
        }
        LookMode::Last => {
            let start = rows.partition_point(|r| r.look_index != last.look_index);
            &rows[start..]
        }
    }
}
