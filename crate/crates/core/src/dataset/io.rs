//! CSV/JSON persistence.
//!
//! Canonical layout of a dataset directory:
//!
//! ```text
//! <dir>/catalog.csv        gauge_id,easting_m,northing_m,kind
//! <dir>/<site>.csv         timestamp,precipitation,<feature columns...>
//! <dir>/<site>.json        sidecar: column origins, operational span, ingest config
//! ```
//!
//! Empty cells are missing values. Timestamps are ISO 8601 in UTC.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    aggregate_gauge_15min, drop_sparse_columns, ColumnOrigin, FeatureColumn, GaugeCatalog, GaugeEntry, IngestConfig,
    SeriesTable, TARGET_COLUMN,
};
use crate::error::{Error, Result};

pub const CATALOG_FILE: &str = "catalog.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub origin: ColumnOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpan {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub site_id: String,
    pub rows: usize,
    pub target_column: String,
    pub columns: Vec<ColumnMeta>,
    pub span: Option<SiteSpan>,
    pub config: Option<IngestConfig>,
}

pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(Error::Parse(format!("unrecognised timestamp `{s}`")))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn parse_cell(raw: &str, what: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse(format!("non-numeric value `{s}` in {what}")))
}

fn format_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads a 30-minute station CSV. Every non-timestamp column other than
/// `target_column` becomes a station-sensor feature.
pub fn read_station_csv(path: &Path, site_id: &str, target_column: &str) -> Result<SeriesTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("timestamp") {
        return Err(Error::Parse(format!("{}: first column must be `timestamp`", path.display())));
    }
    let target_idx = headers
        .iter()
        .position(|h| h.trim() == target_column)
        .ok_or_else(|| Error::Parse(format!("{}: no `{target_column}` column", path.display())))?;
    let feature_idx: Vec<usize> = (1..headers.len()).filter(|&i| i != target_idx).collect();
    let names = feature_idx
        .iter()
        .map(|&i| (headers[i].trim().to_string(), ColumnOrigin::StationSensor))
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let stamp = parse_timestamp(&record[0])?;
        let target = parse_cell(&record[target_idx], target_column)?;
        let values =
            feature_idx.iter().map(|&i| parse_cell(&record[i], &headers[i])).collect::<Result<Vec<_>>>()?;
        rows.push((stamp, target, values));
    }
    SeriesTable::from_sparse_rows(site_id, rows, names)
}

/// Reads a 15-minute gauge CSV: `timestamp` then one reading column.
pub fn read_gauge_csv(path: &Path) -> Result<Vec<(DateTime<Utc>, Option<f64>)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::Parse(format!("{}: expected timestamp and reading", path.display())));
        }
        out.push((parse_timestamp(&record[0])?, parse_cell(&record[1], "gauge reading")?));
    }
    Ok(out)
}

pub fn read_catalog(path: &Path) -> Result<GaugeCatalog> {
    #[derive(Deserialize)]
    struct Row {
        gauge_id: String,
        easting_m: f64,
        northing_m: f64,
        kind: String,
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut entries = Vec::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        entries.push(GaugeEntry {
            gauge_id: row.gauge_id,
            easting_m: row.easting_m,
            northing_m: row.northing_m,
            kind: row.kind.parse()?,
        });
    }
    GaugeCatalog::new(entries)
}

pub fn write_catalog(path: &Path, catalog: &GaugeCatalog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gauge_id", "easting_m", "northing_m", "kind"])?;
    for e in catalog.entries() {
        w.write_record([e.gauge_id.clone(), e.easting_m.to_string(), e.northing_m.to_string(), e.kind.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_path(dir: &Path, site: &str) -> PathBuf {
    dir.join(format!("{site}.csv"))
}

pub fn sidecar_path(dir: &Path, site: &str) -> PathBuf {
    dir.join(format!("{site}.json"))
}

pub fn write_table_csv(path: &Path, table: &SeriesTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["timestamp".to_string(), TARGET_COLUMN.to_string()];
    header.extend(table.feature_names());
    w.write_record(&header)?;
    for i in 0..table.len() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(format_timestamp(&table.timestamps()[i]));
        rec.push(format_cell(table.target()[i]));
        rec.extend(table.columns().iter().map(|c| format_cell(c.values[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sidecar_for(table: &SeriesTable, config: Option<&IngestConfig>) -> Sidecar {
    let span = table
        .operational_span()
        .map(|(s, e)| SiteSpan { start: table.timestamps()[s], end: table.timestamps()[e - 1] });
    Sidecar {
        site_id: table.site_id().to_string(),
        rows: table.len(),
        target_column: TARGET_COLUMN.to_string(),
        columns: table.columns().iter().map(|c| ColumnMeta { name: c.name.clone(), origin: c.origin }).collect(),
        span,
        config: config.cloned(),
    }
}

/// Writes `<dir>/<site>.csv` and its JSON sidecar.
pub fn write_table(dir: &Path, table: &SeriesTable, config: Option<&IngestConfig>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_table_csv(&table_path(dir, table.site_id()), table)?;
    let sidecar = sidecar_for(table, config);
    fs::write(sidecar_path(dir, table.site_id()), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a canonical site table, restoring column origins from the sidecar.
pub fn read_table(dir: &Path, site: &str) -> Result<SeriesTable> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(dir, site))?)?;
    let origins: HashMap<&str, ColumnOrigin> = sidecar.columns.iter().map(|c| (c.name.as_str(), c.origin)).collect();
    let raw = read_station_csv(&table_path(dir, site), site, &sidecar.target_column)?;
    let columns = raw
        .columns()
        .iter()
        .map(|c| {
            let origin = origins
                .get(c.name.as_str())
                .copied()
                .ok_or_else(|| Error::Parse(format!("column `{}` missing from sidecar", c.name)))?;
            Ok(FeatureColumn { name: c.name.clone(), origin, values: c.values.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    SeriesTable::new(site, raw.timestamps().to_vec(), raw.target().to_vec(), columns)
}

pub fn read_sidecar(dir: &Path, site: &str) -> Result<Sidecar> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(dir, site))?)?)
}

/// Site ids with a sidecar in `dir`, sorted.
pub fn list_sites(dir: &Path) -> Result<Vec<String>> {
    let mut sites = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if table_path(dir, stem).exists() {
                    sites.push(stem.to_string());
                }
            }
        }
    }
    sites.sort();
    Ok(sites)
}

/// Looks up each table timestamp in a 30-minute series.
pub fn align_series(timestamps: &[DateTime<Utc>], series: &[(DateTime<Utc>, Option<f64>)]) -> Vec<Option<f64>> {
    let lookup: HashMap<DateTime<Utc>, Option<f64>> = series.iter().copied().collect();
    timestamps.iter().map(|t| lookup.get(t).copied().flatten()).collect()
}

/// Builds a site table from a station CSV plus the 15-minute CSVs of every
/// external gauge inside the configured radius (`<gauge_dir>/<gauge_id>.csv`),
/// then drops columns above the missingness threshold.
pub fn ingest_site(
    station_csv: &Path,
    site_id: &str,
    target_column: &str,
    catalog: &GaugeCatalog,
    gauge_dir: Option<&Path>,
    config: &IngestConfig,
) -> Result<SeriesTable> {
    config.validate()?;
    let mut table = read_station_csv(station_csv, site_id, target_column)?;
    if let Some(dir) = gauge_dir {
        for gauge in catalog.select_gauges_in_radius(site_id, config.radius_km)? {
            let path = dir.join(format!("{gauge}.csv"));
            if !path.exists() {
                log::warn!("gauge {gauge} is within radius but {} is absent", path.display());
                continue;
            }
            let series = aggregate_gauge_15min(&read_gauge_csv(&path)?)?;
            let values = align_series(table.timestamps(), &series);
            table.push_column(FeatureColumn::new(gauge, ColumnOrigin::ExternalGauge, values))?;
        }
    }
    drop_sparse_columns(&table, config.missing_threshold)
}
