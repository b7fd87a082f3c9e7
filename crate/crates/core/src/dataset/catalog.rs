use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeKind {
    Station,
    ExternalGauge,
}

impl std::str::FromStr for GaugeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "station" => Ok(GaugeKind::Station),
            "external-gauge" | "gauge" => Ok(GaugeKind::ExternalGauge),
            other => Err(Error::InvalidCatalog(format!("unknown gauge kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for GaugeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GaugeKind::Station => "station",
            GaugeKind::ExternalGauge => "external-gauge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeEntry {
    pub gauge_id: String,
    pub easting_m: f64,
    pub northing_m: f64,
    pub kind: GaugeKind,
}

impl GaugeEntry {
    pub fn xy(&self) -> (f64, f64) {
        (self.easting_m, self.northing_m)
    }

    pub fn distance_m(&self, other: &GaugeEntry) -> f64 {
        (self.easting_m - other.easting_m).hypot(self.northing_m - other.northing_m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearbyGauge {
    pub gauge_id: String,
    pub distance_m: f64,
}

/// Station and gauge positions on a planar (easting, northing) grid in metres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaugeCatalog {
    entries: Vec<GaugeEntry>,
}

impl GaugeCatalog {
    pub fn new(entries: Vec<GaugeEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.gauge_id.as_str()) {
                return Err(Error::InvalidCatalog(format!("duplicate gauge id `{}`", e.gauge_id)));
            }
            if !e.easting_m.is_finite() || !e.northing_m.is_finite() {
                return Err(Error::InvalidCatalog(format!("non-finite coordinates for `{}`", e.gauge_id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GaugeEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&GaugeEntry> {
        self.entries.iter().find(|e| e.gauge_id == id)
    }

    pub fn require(&self, id: &str) -> Result<&GaugeEntry> {
        self.get(id).ok_or_else(|| Error::UnknownSite(id.to_string()))
    }

    /// External gauges within `radius_km` of `site` (inclusive), nearest
    /// first, ties broken by gauge id.
    pub fn gauges_in_radius(&self, site: &str, radius_km: f64) -> Result<Vec<NearbyGauge>> {
        let origin = self.require(site)?;
        let radius_m = radius_km * 1000.0;
        let mut found: Vec<NearbyGauge> = self
            .entries
            .iter()
            .filter(|e| e.kind == GaugeKind::ExternalGauge && e.gauge_id != site)
            .map(|e| NearbyGauge { gauge_id: e.gauge_id.clone(), distance_m: origin.distance_m(e) })
            .filter(|g| g.distance_m <= radius_m)
            .collect();
        found.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then_with(|| a.gauge_id.cmp(&b.gauge_id)));
        Ok(found)
    }

    /// Ids of [`gauges_in_radius`](Self::gauges_in_radius).
    pub fn select_gauges_in_radius(&self, site: &str, radius_km: f64) -> Result<Vec<String>> {
        Ok(self.gauges_in_radius(site, radius_km)?.into_iter().map(|g| g.gauge_id).collect())
    }
}
