use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Timelike, Utc};

use crate::error::{Error, Result};

/// Sums 15-minute gauge totals into 30-minute totals.
///
/// Pairs are (:15, :30) and (:45, :00 of the next hour); each output sample is
/// stamped at the later constituent and is missing if either constituent is
/// missing or absent. The output covers every half-hour mark from the first
/// pair touched by the input to the last.
pub fn aggregate_gauge_15min(readings: &[(DateTime<Utc>, Option<f64>)]) -> Result<Vec<(DateTime<Utc>, Option<f64>)>> {
    let mut by_stamp = BTreeMap::new();
    for &(stamp, value) in readings {
        if stamp.second() != 0 || stamp.nanosecond() != 0 || stamp.minute() % 15 != 0 {
            return Err(Error::Alignment { stamp: stamp.to_rfc3339(), reason: "not on the quarter-hour lattice".into() });
        }
        if let Some(v) = value {
            if !(v >= 0.0) {
                return Err(Error::InvalidTable(format!("gauge reading {v} at {stamp} is negative")));
            }
        }
        if by_stamp.insert(stamp, value).is_some() {
            return Err(Error::Alignment { stamp: stamp.to_rfc3339(), reason: "duplicate reading".into() });
        }
    }
    let (Some((&first, _)), Some((&last, _))) = (by_stamp.first_key_value(), by_stamp.last_key_value()) else {
        return Ok(Vec::new());
    };

    let quarter = Duration::minutes(15);
    let half = Duration::minutes(30);
    let mark = |t: DateTime<Utc>| if t.minute() % 30 == 0 { t } else { t + quarter };
    let mut out = Vec::new();
    let mut t = mark(first);
    let end = mark(last);
    while t <= end {
        let lead = by_stamp.get(&(t - quarter)).copied().flatten();
        let own = by_stamp.get(&t).copied().flatten();
        let total = match (lead, own) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        out.push((t, total));
        t += half;
    }
    Ok(out)
}
