use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use raingap::dataset::io::{
    ingest_site, list_sites, parse_timestamp, read_catalog, read_table, sidecar_path, table_path, write_catalog,
    write_table, CATALOG_FILE,
};
use raingap::dataset::{pool_region, FeatureSet, GaugeCatalog, IngestConfig, RegionSpec, SeriesTable};
use raingap::hurdle::{prepare_table, run_hurdle, run_regional, HurdleConfig};
use raingap::learners::{Family, Task, ALL_FAMILIES};
use raingap::preprocess::{make_folds, FoldPlan, Frame};
use raingap::report::{compare, export_series, Report, RunManifest, METRIC_KEYS};
use raingap::surface::baseline_predict;
use raingap::synth::{generate, SynthConfig};
use raingap::tuning::{grid_search, TunedEntry, TunedStore};
use raingap::{Error, Result};
use serde_json::json;

use crate::config::{load_config, load_grid, parse_on_off, FileConfig};

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Parser)]
#[command(name = "raingap", version, about = "Two-step gap filling for 30-minute precipitation records")]
pub struct Cli {
    /// Worker threads (default: RAINGAP_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a canonical site table from a station CSV and 15-minute gauge files.
    Ingest(IngestArgs),
    /// Generate a synthetic multi-site dataset.
    Synth(SynthArgs),
    /// Grid-search hyperparameters per site, family and task.
    Tune(TuneArgs),
    /// Cross-validated two-step imputation.
    Impute(ImputeArgs),
    /// Surface-fit baseline on a given fold plan.
    Baseline(BaselineArgs),
    /// Metric deltas between two reports scored on the same folds.
    Compare(CompareArgs),
    /// Plot-ready CSV of truth and prediction per timestamp.
    Export(ExportArgs),
    /// Print the JSON schema of report documents.
    Schema,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub station: PathBuf,
    #[arg(long)]
    pub site: String,
    #[arg(long)]
    pub catalog: PathBuf,
    /// Directory of `<gauge_id>.csv` 15-minute files.
    #[arg(long)]
    pub gauges: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub radius_km: f64,
    #[arg(long, default_value_t = 0.10)]
    pub missing_threshold: f64,
    #[arg(long, default_value = "precipitation")]
    pub target_column: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// SynthConfig JSON; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub gauges: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Target {
    #[arg(long, required_unless_present = "region", conflicts_with = "region")]
    pub site: Option<String>,
    /// Pool the `--members` sites under this name.
    #[arg(long, requires = "members")]
    pub region: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub members: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// core | cosmos | ea | cosmos+ea
    #[arg(long)]
    pub features: Option<String>,
    /// on | off
    #[arg(long)]
    pub cyclic: Option<String>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Sites to tune; all sites of the dataset when omitted.
    #[arg(long, value_delimiter = ',', conflicts_with = "region")]
    pub site: Vec<String>,
    #[arg(long, requires = "members")]
    pub region: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub members: Vec<String>,
    #[arg(long, default_value = "all")]
    pub family: String,
    #[arg(long, default_value = "all")]
    pub task: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// full | desk | path to a grid JSON file
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Add to an existing store at `--out` instead of replacing it.
    #[arg(long)]
    pub merge: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[command(flatten)]
    pub target: Target,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fold and model seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Defaults to the dataset's catalog.csv.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub site: String,
    /// Fold plan JSON, or a report whose plan should be reused.
    #[arg(long, conflicts_with_all = ["folds", "seed"])]
    pub foldplan: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Candidate gauge counts, e.g. 2,3,4.
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(command: Command) -> Result<()> {
    let started = Instant::now();
    let (name, timing_path) = match command {
        Command::Ingest(a) => ("ingest", ingest(a)?),
        Command::Synth(a) => ("synth", synth(a)?),
        Command::Tune(a) => ("tune", tune(a)?),
        Command::Impute(a) => ("impute", impute(a)?),
        Command::Baseline(a) => ("baseline", baseline(a)?),
        Command::Compare(a) => ("compare", compare_cmd(a)?),
        Command::Export(a) => ("export", export(a)?),
        Command::Schema => {
            print!("{REPORT_SCHEMA}");
            ("schema", None)
        }
    };
    if let Some(p) = timing_path {
        let doc = json!({ "subcommand": name, "seconds": started.elapsed().as_secs_f64() });
        std::fs::write(p, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    Ok(())
}

/// Wall-clock time goes next to the report so the report itself stays
/// reproducible.
fn timing_path(report: &Path) -> PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(".timing.json");
    PathBuf::from(s)
}

fn apply_features(cfg: &mut HurdleConfig, f: &FeatureArgs) -> Result<()> {
    if let Some(v) = &f.features {
        cfg.feature_set = v.parse::<FeatureSet>()?;
    }
    if let Some(v) = &f.cyclic {
        cfg.cyclic = parse_on_off(v)?;
    }
    Ok(())
}

fn read_site(dataset: &Path, site: &str) -> Result<SeriesTable> {
    if !sidecar_path(dataset, site).exists() || !table_path(dataset, site).exists() {
        return Err(Error::UnknownSite(format!("{site} (no {site}.csv/{site}.json in {})", dataset.display())));
    }
    read_table(dataset, site)
}

fn add_site_inputs(manifest: &mut RunManifest, dataset: &Path, site: &str) -> Result<()> {
    manifest.add_input(format!("{site}.csv"), &table_path(dataset, site))?;
    manifest.add_input(format!("{site}.json"), &sidecar_path(dataset, site))
}

fn ingest(a: IngestArgs) -> Result<Option<PathBuf>> {
    let catalog = read_catalog(&a.catalog)?;
    let config = IngestConfig {
        radius_km: a.radius_km,
        missing_threshold: a.missing_threshold,
        feature_set: FeatureSet::StationAndGauges,
    };
    let table = ingest_site(&a.station, &a.site, &a.target_column, &catalog, a.gauges.as_deref(), &config)?;
    write_table(&a.out, &table, Some(&config))?;
    let cat_out = a.out.join(CATALOG_FILE);
    if !cat_out.exists() {
        write_catalog(&cat_out, &catalog)?;
    }
    println!("{}: {} rows, {} feature columns", table.site_id(), table.len(), table.columns().len());
    Ok(None)
}

fn synth(a: SynthArgs) -> Result<Option<PathBuf>> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => SynthConfig::default(),
    };
    cfg.n_sites = a.sites.unwrap_or(cfg.n_sites);
    cfg.n_gauges = a.gauges.unwrap_or(cfg.n_gauges);
    cfg.days = a.days.unwrap_or(cfg.days);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let data = generate(&cfg)?;
    data.write(&a.out)?;
    for s in data.manifest().sites {
        println!(
            "{}: rain fraction {:.4}, single-sample events {:.4} of {}",
            s.site_id, s.occurrence.rain_fraction, s.occurrence.single_sample_fraction, s.occurrence.n_events
        );
    }
    Ok(None)
}

fn parse_families(s: &str) -> Result<Vec<Family>> {
    if s == "all" {
        return Ok(ALL_FAMILIES.to_vec());
    }
    let mut v = s.split(',').map(|f| f.trim().parse::<Family>()).collect::<Result<Vec<_>>>()?;
    v.sort();
    v.dedup();
    Ok(v)
}

fn parse_tasks(s: &str) -> Result<Vec<Task>> {
    if s == "all" {
        return Ok(vec![Task::Classify, Task::Regress]);
    }
    Ok(vec![s.parse::<Task>()?])
}

fn load_region(dataset: &Path, name: &str, members: &[String]) -> Result<(Vec<SeriesTable>, RegionSpec)> {
    let spec = RegionSpec::new(name, members.to_vec())?;
    let tables = members.iter().map(|m| read_site(dataset, m)).collect::<Result<Vec<_>>>()?;
    Ok((tables, spec))
}

fn tune(a: TuneArgs) -> Result<Option<PathBuf>> {
    let mut fc: FileConfig = load_config(a.config.as_deref())?;
    apply_features(&mut fc.hurdle, &a.features)?;
    let grid = load_grid(a.grid.as_deref().or(fc.grid.as_deref()).unwrap_or("full"))?;
    let seed = a.seed.or(fc.tune_seed).unwrap_or(0);
    let families = parse_families(&a.family)?;
    let tasks = parse_tasks(&a.task)?;
    let mut store = if a.merge && a.out.exists() {
        let s = TunedStore::load(&a.out)?;
        if s.split_seed != seed || s.grid != grid.name {
            return Err(Error::Config(format!(
                "store {} was tuned with seed {} on grid '{}'",
                a.out.display(),
                s.split_seed,
                s.grid
            )));
        }
        s
    } else {
        TunedStore::new(seed, grid.name.clone())
    };
    let mut tables = Vec::new();
    if let Some(region) = &a.region {
        let (members, spec) = load_region(&a.dataset, region, &a.members)?;
        tables.push(pool_region(&members, &spec)?);
    } else {
        let sites = if a.site.is_empty() { list_sites(&a.dataset)? } else { a.site.clone() };
        if sites.is_empty() {
            return Err(Error::EmptyData);
        }
        for s in sites {
            tables.push(read_site(&a.dataset, &s)?);
        }
    }
    for table in &tables {
        let prepared = prepare_table(table, &fc.hurdle)?;
        for &family in &families {
            for &task in &tasks {
                log::info!("tuning {} {family} {task}", prepared.site_id());
                let res = grid_search(&prepared, grid.points(family, task), task, seed)?;
                for f in &res.failures {
                    log::warn!("{} {family} {task}: {f}", prepared.site_id());
                }
                println!("{} {} {}: point {} score {:.4}", prepared.site_id(), family.short_name(), task, res.best_index, res.score);
                store.insert(TunedEntry {
                    site_id: prepared.site_id().to_string(),
                    family,
                    task,
                    params: res.best,
                    score: Some(res.score),
                });
            }
        }
    }
    store.save(&a.out)?;
    Ok(None)
}

fn print_metrics(report: &Report) {
    for k in METRIC_KEYS {
        let m = raingap::report::metric(&report.metrics, k);
        match (m.mean, m.sd) {
            (Some(mean), Some(sd)) => println!("{k:<12} {mean:>9.4} ± {sd:.4}"),
            _ => println!("{k:<12} {:>9}", "-"),
        }
    }
}

fn impute(a: ImputeArgs) -> Result<Option<PathBuf>> {
    let mut fc = load_config(a.config.as_deref())?;
    let cfg = &mut fc.hurdle;
    apply_features(cfg, &a.features)?;
    cfg.n_folds = a.folds.unwrap_or(cfg.n_folds);
    if let Some(s) = a.seed {
        cfg.fold_seed = s;
        cfg.model_seed = s;
    }
    cfg.model_seed = a.model_seed.unwrap_or(cfg.model_seed);
    let store = TunedStore::load(&a.store)?;
    if matches!(store.grid.as_str(), "full" | "desk") {
        store.check_grid(&load_grid(&store.grid)?)?;
    }
    let cfg = fc.hurdle.clone();
    let mut manifest = RunManifest::new(
        "impute",
        json!({ "hurdle": cfg, "site": a.target.site, "region": a.target.region, "members": a.target.members }),
    );
    manifest.add_input("store", &a.store)?;
    manifest.seeds.insert("fold_seed".into(), cfg.fold_seed);
    manifest.seeds.insert("model_seed".into(), cfg.model_seed);
    let report = if let Some(region) = &a.target.region {
        let (tables, spec) = load_region(&a.dataset, region, &a.target.members)?;
        for m in &a.target.members {
            add_site_inputs(&mut manifest, &a.dataset, m)?;
        }
        Report::from_regional(&run_regional(&tables, &spec, &store, &cfg)?, manifest)
    } else {
        let site = a.target.site.as_deref().expect("clap requires site or region");
        let table = read_site(&a.dataset, site)?;
        add_site_inputs(&mut manifest, &a.dataset, site)?;
        Report::from_hurdle(&run_hurdle(&table, &store, &cfg)?, manifest)
    };
    report.save(&a.report)?;
    if let Some(sel) = &report.selection {
        let name = |f: Option<Family>| f.map_or("-", |f| f.short_name());
        println!("classifier {}, regressor {}", name(sel.classification.winner), name(sel.regression.winner));
    }
    print_metrics(&report);
    for s in &report.sites {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!("{}: prec {} recall {} rmse {}", s.site_id, f(s.averaged.prec.mean), f(s.averaged.recall.mean), f(s.averaged.rmse.mean));
    }
    Ok(Some(timing_path(&a.report)))
}

/// A bare fold plan, or any report carrying one.
fn load_plan(path: &Path) -> Result<FoldPlan> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let plan = v.get("fold_plan").cloned().unwrap_or(v);
    serde_json::from_value(plan).map_err(|e| Error::Config(format!("fold plan {}: {e}", path.display())))
}

fn baseline(a: BaselineArgs) -> Result<Option<PathBuf>> {
    let table = read_site(&a.dataset, &a.site)?;
    let catalog_path = a.catalog.clone().unwrap_or_else(|| a.dataset.join(CATALOG_FILE));
    let catalog: GaugeCatalog = read_catalog(&catalog_path)?;
    let plan = match &a.foldplan {
        Some(p) => load_plan(p)?,
        None => make_folds(Frame::from_table(&table).len(), a.folds, a.seed)?,
    };
    let ks = (!a.ks.is_empty()).then_some(a.ks.as_slice());
    let mut manifest = RunManifest::new(
        "baseline",
        json!({ "site": a.site, "n_folds": plan.n_folds, "fold_seed": plan.seed, "ks": a.ks }),
    );
    manifest.add_input("catalog", &catalog_path)?;
    add_site_inputs(&mut manifest, &a.dataset, &a.site)?;
    manifest.seeds.insert("fold_seed".into(), plan.seed);
    let run = baseline_predict(&table, &catalog, &plan, ks)?;
    let report = Report::from_baseline(&run, &plan, manifest);
    report.save(&a.report)?;
    let counts: Vec<String> = report.folds.iter().map(|f| f.gauge_count.unwrap_or(0).to_string()).collect();
    println!("gauge count per fold: {}", counts.join(" "));
    print_metrics(&report);
    Ok(Some(timing_path(&a.report)))
}

fn compare_cmd(a: CompareArgs) -> Result<Option<PathBuf>> {
    let c = compare(&Report::load(&a.a)?, &Report::load(&a.b)?)?;
    print!("{}", c.to_table());
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&c)? + "\n")?;
    }
    Ok(None)
}

fn export(a: ExportArgs) -> Result<Option<PathBuf>> {
    let report = Report::load(&a.report)?;
    let table = if report.sites.is_empty() {
        read_site(&a.dataset, &report.site_id)?
    } else {
        let members: Vec<String> = report.sites.iter().map(|s| s.site_id.clone()).collect();
        let (tables, spec) = load_region(&a.dataset, &report.site_id, &members)?;
        pool_region(&tables, &spec)?
    };
    if table.is_empty() {
        return Err(Error::EmptyData);
    }
    let window = match (&a.start, &a.end) {
        (None, None) => None,
        (s, e) => Some((
            s.as_deref().map(parse_timestamp).transpose()?.unwrap_or(table.timestamps()[0]),
            e.as_deref().map(parse_timestamp).transpose()?.unwrap_or(*table.timestamps().last().unwrap()),
        )),
    };
    let mut out = BufWriter::new(File::create(&a.out)?);
    let n = export_series(&table, &report, window, &mut out)?;
    println!("{n} rows written to {}", a.out.display());
    Ok(None)
}
