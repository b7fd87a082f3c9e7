//! Synthetic multi-site records for end-to-end runs without the real archive.
//!
//! Site rain occurrence is a two-state Markov chain, wet amounts are gamma
//! distributed. Each external gauge runs its own chain and, sample by sample,
//! copies the site with probability `exp(-d / L)`. Station covariates respond
//! weakly to a smoothed rain state.

use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::io::{write_catalog, write_table, write_table_csv, CATALOG_FILE};
use crate::dataset::{ColumnOrigin, FeatureColumn, GaugeCatalog, GaugeEntry, GaugeKind, SeriesTable, STEP_MINUTES};
use crate::error::{Error, Result};
use crate::hurdle::derive_seed;

/// Samples per day at the 30-minute step.
pub const SAMPLES_PER_DAY: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub base: f64,
    pub scale: f64,
    /// Loading on the standardised smoothed rain state.
    pub response: f64,
    pub missing_rate: f64,
}

impl CovariateSpec {
    fn new(name: &str, base: f64, scale: f64, response: f64) -> Self {
        Self { name: name.into(), base, scale, response, missing_rate: 0.02 }
    }
}

pub fn default_covariates() -> Vec<CovariateSpec> {
    vec![
        CovariateSpec::new("air_pressure", 1010.0, 8.0, -0.6),
        CovariateSpec::new("relative_humidity", 80.0, 8.0, 0.6),
        CovariateSpec::new("air_temperature", 10.0, 4.0, -0.4),
        CovariateSpec::new("wind_speed", 4.0, 1.5, 0.5),
        CovariateSpec::new("wind_direction", 200.0, 60.0, 0.1),
        CovariateSpec::new("soil_moisture", 0.3, 0.05, 0.5),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_sites: usize,
    pub n_gauges: usize,
    pub days: usize,
    pub seed: u64,
    pub rain_fraction: f64,
    pub single_sample_fraction: f64,
    pub gamma_shape: f64,
    /// Mean wet-sample amount in mm.
    pub mean_amount: f64,
    pub correlation_length_m: f64,
    /// Gauges are placed uniformly in this distance band around their site.
    pub gauge_distance_m: (f64, f64),
    /// Multiplicative log-normal noise on amounts a gauge copies from its site.
    pub copy_noise: f64,
    /// Smoothing factor of the rain state driving the covariates.
    pub covariate_smoothing: f64,
    pub covariates: Vec<CovariateSpec>,
    pub gauge_missing_rate: f64,
    pub target_missing_rate: f64,
    pub start: DateTime<Utc>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sites: 2,
            n_gauges: 6,
            days: 365,
            seed: 0,
            rain_fraction: 0.10,
            single_sample_fraction: 0.485,
            gamma_shape: 0.7,
            mean_amount: 0.3,
            correlation_length_m: 20_000.0,
            gauge_distance_m: (2_000.0, 28_000.0),
            copy_noise: 0.2,
            covariate_smoothing: 0.9,
            covariates: default_covariates(),
            gauge_missing_rate: 0.03,
            target_missing_rate: 0.01,
            start: Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// `(p01, p11)` of the occurrence chain: `p11 = 1 - single`, and
/// `p01` solves `pi1 = p01 / (p01 + 1 - p11)`.
pub fn transition_probabilities(rain_fraction: f64, single_sample_fraction: f64) -> Result<(f64, f64)> {
    let open = |v: f64| v > 0.0 && v < 1.0;
    if !open(rain_fraction) || !open(single_sample_fraction) {
        return Err(Error::Config("rain and single-sample fractions must lie in (0, 1)".into()));
    }
    let p11 = 1.0 - single_sample_fraction;
    let p01 = rain_fraction * (1.0 - p11) / (1.0 - rain_fraction);
    if !open(p01) {
        return Err(Error::Config(format!(
            "infeasible fractions: rain {rain_fraction}, single-sample {single_sample_fraction} give p01 = {p01}"
        )));
    }
    Ok((p01, p11))
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        self.days * SAMPLES_PER_DAY
    }

    pub fn validate(&self) -> Result<()> {
        transition_probabilities(self.rain_fraction, self.single_sample_fraction)?;
        let rate_ok = |r: f64| (0.0..1.0).contains(&r);
        if self.n_sites == 0 || self.days == 0 {
            return Err(Error::Config("n_sites and days must be >= 1".into()));
        }
        if !(self.gamma_shape > 0.0 && self.mean_amount > 0.0 && self.correlation_length_m > 0.0) {
            return Err(Error::Config("gamma shape, mean amount and correlation length must be > 0".into()));
        }
        let (lo, hi) = self.gauge_distance_m;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config("gauge distance band must satisfy 0 < min <= max".into()));
        }
        if !(0.0..1.0).contains(&self.covariate_smoothing) || !(self.copy_noise >= 0.0) {
            return Err(Error::Config("covariate smoothing must be in [0, 1) and copy noise >= 0".into()));
        }
        if !rate_ok(self.gauge_missing_rate)
            || !rate_ok(self.target_missing_rate)
            || self.covariates.iter().any(|c| !rate_ok(c.missing_rate))
        {
            return Err(Error::Config("missing rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

pub fn site_name(s: usize) -> String {
    format!("site{:02}", s + 1)
}

pub fn gauge_name(s: usize, g: usize) -> String {
    format!("g{:02}_{:02}", s + 1, g + 1)
}

/// Occurrence statistics of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occurrence {
    pub n: usize,
    pub rain_fraction: f64,
    pub n_events: usize,
    /// Fraction of wet runs lasting one sample.
    pub single_sample_fraction: f64,
}

/// Missing values end a run and are not counted.
pub fn occurrence(values: &[Option<f64>]) -> Occurrence {
    let mut n = 0;
    let mut wet = 0;
    let mut events = 0;
    let mut singles = 0;
    let mut run = 0;
    let mut close = |run: &mut usize| {
        if *run > 0 {
            events += 1;
            if *run == 1 {
                singles += 1;
            }
        }
        *run = 0;
    };
    for v in values {
        match v {
            Some(x) => {
                n += 1;
                if *x > 0.0 {
                    wet += 1;
                    run += 1;
                } else {
                    close(&mut run);
                }
            }
            None => close(&mut run),
        }
    }
    close(&mut run);
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Occurrence { n, rain_fraction: frac(wet, n), n_events: events, single_sample_fraction: frac(singles, events) }
}

fn markov_chain(rng: &mut ChaCha8Rng, n: usize, p01: f64, p11: f64, amount: &Gamma<f64>) -> Vec<f64> {
    let pi1 = p01 / (p01 + 1.0 - p11);
    let mut wet = rng.gen::<f64>() < pi1;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(if wet { amount.sample(rng).max(1e-3) } else { 0.0 });
        let p = if wet { p11 } else { p01 };
        wet = rng.gen::<f64>() < p;
    }
    out
}

fn standardise(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
}

fn mask(rng: &mut ChaCha8Rng, values: &[f64], rate: f64) -> Vec<Option<f64>> {
    values.iter().map(|&v| (rng.gen::<f64>() >= rate).then_some(v)).collect()
}

/// One generated site: the observed table and its pre-masking counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSite {
    pub observed: SeriesTable,
    pub truth: SeriesTable,
    /// Distance of each gauge column from the site in metres.
    pub gauge_distances: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub catalog: GaugeCatalog,
    pub sites: Vec<SynthSite>,
}

fn generate_site(config: &SynthConfig, s: usize, origin: (f64, f64), entries: &mut Vec<GaugeEntry>) -> Result<SynthSite> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[s as u64]));
    let n = config.n_samples();
    let (p01, p11) = transition_probabilities(config.rain_fraction, config.single_sample_fraction)?;
    let amount = Gamma::new(config.gamma_shape, config.mean_amount / config.gamma_shape)
        .map_err(|e| Error::Config(format!("gamma amounts: {e}")))?;
    let noise = Normal::new(0.0, 1.0).unwrap();
    let step = Duration::minutes(STEP_MINUTES);
    let timestamps: Vec<DateTime<Utc>> = (0..n).map(|i| config.start + step * i as i32).collect();
    let site_rain = markov_chain(&mut rng, n, p01, p11, &amount);

    let mut columns = Vec::new();
    let mut smoothed = Vec::with_capacity(n);
    let mut state = 0.0;
    for &r in &site_rain {
        state = config.covariate_smoothing * state + (1.0 - config.covariate_smoothing) * f64::from(r > 0.0);
        smoothed.push(state);
    }
    standardise(&mut smoothed);
    for c in &config.covariates {
        let mut ar = 0.0;
        let values: Vec<f64> = smoothed
            .iter()
            .map(|&z| {
                ar = 0.95 * ar + (1.0 - 0.95f64 * 0.95).sqrt() * noise.sample(&mut rng);
                c.base + c.scale * (c.response * z + ar)
            })
            .collect();
        columns.push((c.name.clone(), ColumnOrigin::StationSensor, values, c.missing_rate));
    }

    let mut gauge_distances = Vec::new();
    for g in 0..config.n_gauges {
        let (lo, hi) = config.gauge_distance_m;
        let d = if config.n_gauges == 1 { lo } else { lo + (hi - lo) * g as f64 / (config.n_gauges - 1) as f64 };
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let id = gauge_name(s, g);
        entries.push(GaugeEntry {
            gauge_id: id.clone(),
            easting_m: (origin.0 + d * theta.cos()).round(),
            northing_m: (origin.1 + d * theta.sin()).round(),
            kind: GaugeKind::ExternalGauge,
        });
        let d = entries.last().unwrap().xy();
        let d = ((d.0 - origin.0).powi(2) + (d.1 - origin.1).powi(2)).sqrt();
        let own = markov_chain(&mut rng, n, p01, p11, &amount);
        let p_copy = (-d / config.correlation_length_m).exp();
        let values: Vec<f64> = site_rain
            .iter()
            .zip(&own)
            .map(|(&site, &own)| {
                if rng.gen::<f64>() < p_copy {
                    site * (config.copy_noise * noise.sample(&mut rng)).exp()
                } else {
                    own
                }
            })
            .collect();
        gauge_distances.push((id.clone(), d));
        columns.push((id, ColumnOrigin::ExternalGauge, values, config.gauge_missing_rate));
    }

    let site = site_name(s);
    let truth_cols: Vec<FeatureColumn> =
        columns.iter().map(|(name, o, v, _)| FeatureColumn::new(name.clone(), *o, v.iter().map(|&x| Some(x)).collect())).collect();
    let truth = SeriesTable::new(site.clone(), timestamps.clone(), site_rain.iter().map(|&x| Some(x)).collect(), truth_cols)?;
    let observed_cols: Vec<FeatureColumn> =
        columns.iter().map(|(name, o, v, rate)| FeatureColumn::new(name.clone(), *o, mask(&mut rng, v, *rate))).collect();
    let target = mask(&mut rng, &site_rain, config.target_missing_rate);
    let observed = SeriesTable::new(site, timestamps, target, observed_cols)?;
    Ok(SynthSite { observed, truth, gauge_distances })
}

/// Deterministic in `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut entries = Vec::new();
    let mut sites = Vec::with_capacity(config.n_sites);
    for s in 0..config.n_sites {
        let origin = (100_000.0 + 80_000.0 * s as f64, 200_000.0);
        entries.push(GaugeEntry { gauge_id: site_name(s), easting_m: origin.0, northing_m: origin.1, kind: GaugeKind::Station });
        sites.push(generate_site(config, s, origin, &mut entries)?);
    }
    Ok(SynthDataset { config: config.clone(), catalog: GaugeCatalog::new(entries)?, sites })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSummary {
    pub site_id: String,
    pub occurrence: Occurrence,
    pub gauge_distances: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub sites: Vec<SiteSummary>,
}

pub const MANIFEST_FILE: &str = "synth.json";
pub const TRUTH_DIR: &str = "truth";

impl SynthDataset {
    pub fn manifest(&self) -> SynthManifest {
        SynthManifest {
            config: self.config.clone(),
            sites: self
                .sites
                .iter()
                .map(|s| SiteSummary {
                    site_id: s.truth.site_id().to_string(),
                    occurrence: occurrence(s.truth.target()),
                    gauge_distances: s.gauge_distances.clone(),
                })
                .collect(),
        }
    }

    pub fn observed_tables(&self) -> Vec<SeriesTable> {
        self.sites.iter().map(|s| s.observed.clone()).collect()
    }

    /// Canonical dataset layout plus `truth/<site>.csv` and `synth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join(TRUTH_DIR))?;
        write_catalog(&dir.join(CATALOG_FILE), &self.catalog)?;
        for s in &self.sites {
            write_table(dir, &s.observed, None)?;
            write_table_csv(&dir.join(TRUTH_DIR).join(format!("{}.csv", s.truth.site_id())), &s.truth)?;
        }
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }
}
