//! Multi-station 30-minute records and the operations that shape them before
//! modelling: gauge aggregation, radius selection, sparse-column removal and
//! regional pooling.

mod aggregate;
mod catalog;
pub mod io;

use std::collections::HashSet;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::aggregate_gauge_15min;
pub use catalog::{GaugeCatalog, GaugeEntry, GaugeKind, NearbyGauge};

/// Sample spacing of every [`SeriesTable`].
pub const STEP_MINUTES: i64 = 30;

/// Default name of the precipitation column in canonical CSV files.
pub const TARGET_COLUMN: &str = "precipitation";

/// The five station parameters used by the `core` feature set.
pub const DEFAULT_CORE_COLUMNS: [&str; 5] =
    ["air_pressure", "relative_humidity", "air_temperature", "wind_speed", "wind_direction"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnOrigin {
    StationSensor,
    ExternalGauge,
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub origin: ColumnOrigin,
    pub values: Vec<Option<f64>>,
}

impl FeatureColumn {
    pub fn new(name: impl Into<String>, origin: ColumnOrigin, values: Vec<Option<f64>>) -> Self {
        Self { name: name.into(), origin, values }
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// Contiguous block of rows belonging to one member site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSegment {
    pub site_id: String,
    pub start: usize,
    pub len: usize,
}

/// Aligned 30-minute samples of one site (or a pooled region) with a
/// precipitation target and named feature columns.
///
/// Within each site segment timestamps are strictly increasing on a constant
/// 30-minute step; gaps are rows whose cells are missing, never skipped rows.
/// A single-site table has exactly one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    site_id: String,
    timestamps: Vec<DateTime<Utc>>,
    target: Vec<Option<f64>>,
    columns: Vec<FeatureColumn>,
    segments: Vec<SiteSegment>,
}

impl SeriesTable {
    pub fn new(
        site_id: impl Into<String>,
        timestamps: Vec<DateTime<Utc>>,
        target: Vec<Option<f64>>,
        columns: Vec<FeatureColumn>,
    ) -> Result<Self> {
        let site_id = site_id.into();
        let segments = vec![SiteSegment { site_id: site_id.clone(), start: 0, len: timestamps.len() }];
        Self::with_segments(site_id, timestamps, target, columns, segments)
    }

    pub(crate) fn with_segments(
        site_id: String,
        timestamps: Vec<DateTime<Utc>>,
        target: Vec<Option<f64>>,
        columns: Vec<FeatureColumn>,
        segments: Vec<SiteSegment>,
    ) -> Result<Self> {
        let n = timestamps.len();
        if target.len() != n {
            return Err(Error::InvalidTable(format!("target has {} rows, timestamps {n}", target.len())));
        }
        let mut names = HashSet::new();
        for col in &columns {
            if col.values.len() != n {
                return Err(Error::InvalidTable(format!(
                    "column `{}` has {} rows, expected {n}",
                    col.name,
                    col.values.len()
                )));
            }
            if col.name == TARGET_COLUMN || col.name == "timestamp" {
                return Err(Error::InvalidTable(format!("reserved column name `{}`", col.name)));
            }
            if !names.insert(col.name.as_str()) {
                return Err(Error::InvalidTable(format!("duplicate column `{}`", col.name)));
            }
        }
        if let Some((i, v)) = target.iter().enumerate().find_map(|(i, v)| v.filter(|x| !(*x >= 0.0)).map(|x| (i, x))) {
            return Err(Error::InvalidTable(format!("target at row {i} is {v}; precipitation must be >= 0")));
        }
        let mut covered = 0;
        for seg in &segments {
            if seg.start != covered {
                return Err(Error::InvalidTable("site segments must tile the table".into()));
            }
            covered += seg.len;
            let step = Duration::minutes(STEP_MINUTES);
            for w in timestamps[seg.start..seg.start + seg.len].windows(2) {
                if w[1] - w[0] != step {
                    return Err(Error::Alignment {
                        stamp: w[1].to_rfc3339(),
                        reason: format!("expected {STEP_MINUTES}-minute spacing after {}", w[0].to_rfc3339()),
                    });
                }
            }
        }
        if covered != n {
            return Err(Error::InvalidTable("site segments must tile the table".into()));
        }
        Ok(Self { site_id, timestamps, target, columns, segments })
    }

    /// Builds a gap-free table from possibly sparse rows: missing lattice
    /// steps between the first and last stamp become all-missing rows.
    pub fn from_sparse_rows(
        site_id: impl Into<String>,
        rows: Vec<(DateTime<Utc>, Option<f64>, Vec<Option<f64>>)>,
        column_names: Vec<(String, ColumnOrigin)>,
    ) -> Result<Self> {
        let mut rows = rows;
        rows.sort_by_key(|r| r.0);
        let n_cols = column_names.len();
        let mut timestamps = Vec::new();
        let mut target = Vec::new();
        let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); n_cols];
        let step = Duration::minutes(STEP_MINUTES);
        for (stamp, tgt, values) in rows {
            check_half_hour(stamp)?;
            if values.len() != n_cols {
                return Err(Error::InvalidTable(format!("row at {stamp} has {} values", values.len())));
            }
            if let Some(&last) = timestamps.last() {
                if stamp == last {
                    return Err(Error::Alignment { stamp: stamp.to_rfc3339(), reason: "duplicate timestamp".into() });
                }
                let mut t = last + step;
                while t < stamp {
                    timestamps.push(t);
                    target.push(None);
                    cols.iter_mut().for_each(|c| c.push(None));
                    t += step;
                }
            }
            timestamps.push(stamp);
            target.push(tgt);
            for (c, v) in cols.iter_mut().zip(values) {
                c.push(v);
            }
        }
        let columns = column_names
            .into_iter()
            .zip(cols)
            .map(|((name, origin), values)| FeatureColumn { name, origin, values })
            .collect();
        Self::new(site_id, timestamps, target, columns)
    }

    pub fn site_id(&self) -> &str {
        &self.site_id
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn target(&self) -> &[Option<f64>] {
        &self.target
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn segments(&self) -> &[SiteSegment] {
        &self.segments
    }

    /// Index into [`segments`](Self::segments) of the site owning `row`.
    pub fn site_index_of_row(&self, row: usize) -> usize {
        self.segments.partition_point(|s| s.start + s.len <= row)
    }

    /// Row range from the first to the last present target (inclusive start,
    /// exclusive end); `None` when the target is never observed.
    pub fn operational_span(&self) -> Option<(usize, usize)> {
        let first = self.target.iter().position(Option::is_some)?;
        let last = self.target.iter().rposition(Option::is_some)?;
        Some((first, last + 1))
    }

    /// Appends a feature column, rejecting duplicate names or wrong lengths.
    pub fn push_column(&mut self, column: FeatureColumn) -> Result<()> {
        if column.values.len() != self.len() {
            return Err(Error::InvalidTable(format!("column `{}` has wrong length", column.name)));
        }
        if self.column(&column.name).is_some() || column.name == TARGET_COLUMN {
            return Err(Error::InvalidTable(format!("duplicate column `{}`", column.name)));
        }
        self.columns.push(column);
        Ok(())
    }

    /// Keeps only the columns accepted by `keep`, preserving order.
    pub fn retain_columns(&self, mut keep: impl FnMut(&FeatureColumn) -> bool) -> Self {
        let mut out = self.clone();
        out.columns.retain(|c| keep(c));
        out
    }

    /// Restricts the table to one of the feature-set variants.
    pub fn select_features(&self, set: FeatureSet, core_columns: &[String]) -> Self {
        self.retain_columns(|c| match set {
            FeatureSet::Core => {
                c.origin == ColumnOrigin::Cyclic
                    || (c.origin == ColumnOrigin::StationSensor && core_columns.iter().any(|n| n == &c.name))
            }
            FeatureSet::AllStation => c.origin != ColumnOrigin::ExternalGauge,
            FeatureSet::ExternalGauges => c.origin != ColumnOrigin::StationSensor,
            FeatureSet::StationAndGauges => true,
        })
    }
}

pub(crate) fn check_half_hour(stamp: DateTime<Utc>) -> Result<()> {
    use chrono::Timelike;
    if stamp.second() != 0 || stamp.nanosecond() != 0 || stamp.minute() % 30 != 0 {
        return Err(Error::Alignment { stamp: stamp.to_rfc3339(), reason: "not on the 30-minute lattice".into() });
    }
    Ok(())
}

/// Feature-set variants compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "core")]
    Core,
    #[serde(rename = "cosmos")]
    AllStation,
    #[serde(rename = "ea")]
    ExternalGauges,
    #[serde(rename = "cosmos+ea")]
    StationAndGauges,
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "core" => Ok(FeatureSet::Core),
            "cosmos" | "all-station" => Ok(FeatureSet::AllStation),
            "ea" | "external-gauges" => Ok(FeatureSet::ExternalGauges),
            "cosmos+ea" | "station+gauges" => Ok(FeatureSet::StationAndGauges),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub radius_km: f64,
    pub missing_threshold: f64,
    pub feature_set: FeatureSet,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { radius_km: 30.0, missing_threshold: 0.10, feature_set: FeatureSet::StationAndGauges }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_km > 0.0) {
            return Err(Error::domain("radius_km", "must be > 0"));
        }
        if !(self.missing_threshold > 0.0 && self.missing_threshold < 1.0) {
            return Err(Error::domain("missing_threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub member_sites: Vec<String>,
    pub pooled: bool,
}

impl RegionSpec {
    pub fn new(name: impl Into<String>, member_sites: Vec<String>) -> Result<Self> {
        let spec = Self { name: name.into(), member_sites, pooled: true };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.member_sites.len() < 2 {
            return Err(Error::Pooling(format!(
                "region `{}` needs at least 2 member sites, got {}",
                self.name,
                self.member_sites.len()
            )));
        }
        let unique: HashSet<_> = self.member_sites.iter().collect();
        if unique.len() != self.member_sites.len() {
            return Err(Error::Pooling(format!("region `{}` lists a site twice", self.name)));
        }
        Ok(())
    }
}

/// Drops every feature column whose missing fraction over the site's
/// operational span exceeds `threshold`. The target is never dropped.
pub fn drop_sparse_columns(table: &SeriesTable, threshold: f64) -> Result<SeriesTable> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::domain("missing threshold", "must lie in (0, 1)"));
    }
    let (start, end) = table.operational_span().unwrap_or((0, table.len()));
    let span = (end - start).max(1) as f64;
    Ok(table.retain_columns(|c| {
        let missing = c.values[start..end].iter().filter(|v| v.is_none()).count();
        missing as f64 / span <= threshold
    }))
}

/// Pools member tables into one table holding only the feature columns common
/// to every member, restricted to the window between the latest operational
/// start and the earliest operational end. Member rows stay contiguous and are
/// tagged through [`SeriesTable::segments`].
pub fn pool_region(tables: &[SeriesTable], spec: &RegionSpec) -> Result<SeriesTable> {
    spec.validate()?;
    let mut members = Vec::with_capacity(spec.member_sites.len());
    for site in &spec.member_sites {
        let table = tables
            .iter()
            .find(|t| t.site_id() == site)
            .ok_or_else(|| Error::UnknownSite(site.clone()))?;
        members.push(table);
    }

    let common: Vec<&FeatureColumn> = members[0]
        .columns()
        .iter()
        .filter(|c| members[1..].iter().all(|t| t.column(&c.name).is_some()))
        .collect();
    if common.is_empty() {
        return Err(Error::Pooling("member tables share no feature column".into()));
    }

    let mut window_start = None::<DateTime<Utc>>;
    let mut window_end = None::<DateTime<Utc>>;
    for t in &members {
        let (s, e) = t
            .operational_span()
            .ok_or_else(|| Error::Pooling(format!("site `{}` has no observed target", t.site_id())))?;
        let (ts, te) = (t.timestamps()[s], t.timestamps()[e - 1]);
        window_start = Some(window_start.map_or(ts, |w| w.max(ts)));
        window_end = Some(window_end.map_or(te, |w| w.min(te)));
    }
    let (ws, we) = (window_start.unwrap(), window_end.unwrap());
    if ws > we {
        return Err(Error::Pooling(format!("no overlapping period ({ws} is after {we})")));
    }

    let mut timestamps = Vec::new();
    let mut target = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); common.len()];
    let mut segments = Vec::new();
    for t in &members {
        let start = timestamps.len();
        let rows: Vec<usize> = (0..t.len()).filter(|&i| t.timestamps()[i] >= ws && t.timestamps()[i] <= we).collect();
        for &i in &rows {
            timestamps.push(t.timestamps()[i]);
            target.push(t.target()[i]);
        }
        for (out, c) in values.iter_mut().zip(&common) {
            let col = t.column(&c.name).expect("column checked above");
            out.extend(rows.iter().map(|&i| col.values[i]));
        }
        segments.push(SiteSegment { site_id: t.site_id().to_string(), start, len: rows.len() });
    }
    let columns = common
        .iter()
        .zip(values)
        .map(|(c, v)| FeatureColumn { name: c.name.clone(), origin: c.origin, values: v })
        .collect();
    SeriesTable::with_segments(spec.name.clone(), timestamps, target, columns, segments)
}
