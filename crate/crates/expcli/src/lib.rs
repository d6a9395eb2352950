//! Experiment sweeps over privacy budget, site size, site count and rank.
//!
//! A [`SweepConfig`] expands into grid cells; every (cell, trial) becomes one
//! [`ResultRow`]. Output CSV is byte-stable for a fixed config and seed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use cape_core::cape::{CapeRngs, ProtocolOptions};
use cape_core::datagen::{gen_otd_data, gen_pca_data, ExperimentDataSpec, Family, OtdData};
use cape_core::dp::{Privacy, PrivacySpec};
use cape_core::otd::{
    agn, cape_agn, conv_agn, decompose, q_comp, stm_postprocess, whiten_and_project, PowerConfig, StagedPrivacy,
    WhitenedTensor,
};
use cape_core::pca::{cape_pca, conv_pca, local_pca, nonprivate_pca, pooled_dp_pca, preprocess, SiteDataset};
use cape_core::rng::RngStream;
use cape_core::tensor::Matrix;
use cape_core::transcript::Role;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub const HEADER: [&str; 12] = [
    "family", "method", "epsilon", "delta", "n_s", "s", "k", "trial", "seed", "metric", "value", "wall_ms",
];

/// Written in the `value` column for cells that failed.
pub const DEGENERATE: &str = "degenerate";

#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] cape_core::Error),
}

pub type Result<T> = std::result::Result<T, ExpError>;

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ExpError::Config(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Cape,
    Conv,
    Local,
    PooledDp,
    NonPrivate,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cape, Method::Conv, Method::Local, Method::PooledDp, Method::NonPrivate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cape => "cape",
            Method::Conv => "conv",
            Method::Local => "local",
            Method::PooledDp => "pooled-dp",
            Method::NonPrivate => "non-private",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ExpError::Config(format!("unknown method `{s}`")))
    }
}

pub fn parse_family(s: &str) -> Result<Family> {
    match s {
        "pca" => Ok(Family::Pca),
        "mog" => Ok(Family::Mog),
        "stm" => Ok(Family::Stm),
        _ => config_err(format!("unknown family `{s}` (pca, mog, stm)")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    /// Captured energy, higher is better.
    QCe,
    /// Mean distance to the nearest true component, lower is better.
    QComp,
}

impl Metric {
    pub fn for_family(f: Family) -> Metric {
        match f {
            Family::Pca => Metric::QCe,
            _ => Metric::QComp,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::QCe => "q_ce",
            Metric::QComp => "q_comp",
        }
    }
}

impl FromStr for Metric {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q_ce" => Ok(Metric::QCe),
            "q_comp" => Ok(Metric::QComp),
            _ => config_err(format!("unknown metric `{s}`")),
        }
    }
}

/// How an ingested CSV lays out its samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    SamplesAsRows,
    SamplesAsColumns,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub family: Family,
    pub methods: Vec<Method>,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub ns_grid: Vec<usize>,
    pub sites_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub dim: usize,
    pub sigma_sq: f64,
    pub words_per_doc: usize,
    pub trials: usize,
    pub seed: u64,
    pub noiseless: bool,
    pub trusted_sites: bool,
    /// Record wall time per row. Off by default so output bytes are stable.
    pub timing: bool,
    /// Ingested samples, `D x N`. Replaces generated PCA data.
    pub data: Option<Matrix>,
}

impl SweepConfig {
    /// Defaults for a family; the PCA defaults mirror the desk-scale
    /// synthetic setup (D = 50, K = 10, S = 5, N_s = 1000).
    pub fn defaults(family: Family) -> Self {
        let (dim, k, ns) = match family {
            Family::Pca => (50, 10, 1000),
            Family::Mog => (10, 5, 5000),
            Family::Stm => (10, 3, 5000),
        };
        SweepConfig {
            family,
            methods: Method::ALL.to_vec(),
            eps_grid: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            delta_grid: vec![0.01],
            ns_grid: vec![ns],
            sites_grid: vec![5],
            k_grid: vec![k],
            dim,
            sigma_sq: 0.05,
            words_per_doc: 3,
            trials: 10,
            seed: 0,
            noiseless: false,
            trusted_sites: false,
            timing: false,
            data: None,
        }
    }

    /// Builds a config from flat `key = value` settings. Keys are the long
    /// flag names without dashes; unknown keys are errors. `out`, `summary`
    /// and `config` are accepted and ignored here.
    pub fn from_settings(settings: &BTreeMap<String, String>) -> Result<Self> {
        let family = match settings.get("family") {
            Some(f) => parse_family(f.trim())?,
            None => Family::Pca,
        };
        let mut cfg = SweepConfig::defaults(family);
        let mut csv_path = None;
        let mut csv_header = false;
        let mut orientation = Orientation::default();
        for (key, raw) in settings {
            let v = raw.trim();
            match key.as_str() {
                "family" | "out" | "summary" | "config" => {}
                "methods" => cfg.methods = parse_list(key, v)?,
                "eps-grid" => cfg.eps_grid = parse_list(key, v)?,
                "delta-grid" => cfg.delta_grid = parse_list(key, v)?,
                "ns-grid" => cfg.ns_grid = parse_list(key, v)?,
                "sites" => cfg.sites_grid = parse_list(key, v)?,
                "k" => cfg.k_grid = parse_list(key, v)?,
                "dim" => cfg.dim = parse_one(key, v)?,
                "sigma-sq" => cfg.sigma_sq = parse_one(key, v)?,
                "words-per-doc" => cfg.words_per_doc = parse_one(key, v)?,
                "trials" => cfg.trials = parse_one(key, v)?,
                "seed" => cfg.seed = parse_one(key, v)?,
                "noiseless" => cfg.noiseless = parse_bool(key, v)?,
                "trusted-sites" => cfg.trusted_sites = parse_bool(key, v)?,
                "timing" => cfg.timing = parse_bool(key, v)?,
                "data-csv" => csv_path = Some(v.to_string()),
                "csv-header" => csv_header = parse_bool(key, v)?,
                "csv-orientation" => {
                    orientation = match v {
                        "rows" => Orientation::SamplesAsRows,
                        "columns" => Orientation::SamplesAsColumns,
                        _ => return config_err(format!("csv-orientation must be rows or columns, got `{v}`")),
                    }
                }
                _ => return config_err(format!("unknown setting `{key}`")),
            }
        }
        if let Some(path) = csv_path {
            let raw = ingest_csv(&path, csv_header)?;
            let data = match orientation {
                Orientation::SamplesAsRows => raw.transpose(),
                Orientation::SamplesAsColumns => raw,
            };
            log::info!("ingested {path}: {} features, {} samples", data.nrows(), data.ncols());
            cfg.dim = data.nrows();
            cfg.data = Some(data);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return config_err("no methods");
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return config_err("duplicate method");
        }
        if self.eps_grid.is_empty() || self.delta_grid.is_empty() {
            return config_err("empty privacy grid");
        }
        if self.ns_grid.is_empty() || self.sites_grid.is_empty() || self.k_grid.is_empty() {
            return config_err("empty n_s, sites or k grid");
        }
        if self.trials == 0 {
            return config_err("trials must be >= 1");
        }
        if !self.noiseless {
            for &e in &self.eps_grid {
                for &d in &self.delta_grid {
                    PrivacySpec::new(e, d).map_err(|err| ExpError::Config(err.to_string()))?;
                }
            }
        }
        if self.ns_grid.contains(&0) || self.sites_grid.contains(&0) {
            return config_err("n_s and sites must be >= 1");
        }
        if self.k_grid.iter().any(|&k| k == 0 || k > self.dim) {
            return config_err(format!("every k must be in 1..={}", self.dim));
        }
        if self.trusted_sites && self.sites_grid.iter().any(|&s| s <= 2) {
            return config_err("trusted-sites needs more than two sites");
        }
        if let Some(data) = &self.data {
            if self.family != Family::Pca {
                return config_err("data-csv is only supported for the pca family");
            }
            let n = data.ncols();
            if let Some(&s) = self.sites_grid.iter().find(|&&s| s > n) {
                return config_err(format!("{n} samples cannot fill {s} sites"));
            }
        }
        if self.family == Family::Mog && !(self.sigma_sq >= 0.0) {
            return config_err("sigma-sq must be >= 0");
        }
        if self.family == Family::Stm && self.words_per_doc < 3 {
            return config_err("words-per-doc must be >= 3");
        }
        Ok(())
    }

    /// `(ε, δ)` pairs to sweep, or a single `(∞, 0)` pair in noiseless mode.
    pub fn privacy_cells(&self) -> Vec<(f64, f64)> {
        if self.noiseless {
            return vec![(f64::INFINITY, 0.0)];
        }
        self.eps_grid
            .iter()
            .flat_map(|&e| self.delta_grid.iter().map(move |&d| (e, d)))
            .collect()
    }

    fn options(&self) -> ProtocolOptions {
        ProtocolOptions {
            trusted_sites: self.trusted_sites,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse()
        .map_err(|e| ExpError::Config(format!("{key}: cannot parse `{v}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => config_err(format!("{key}: expected a boolean, got `{v}`")),
    }
}

/// Reads a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn read_config_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ExpError::Parse {
            path: path.display().to_string(),
            line: i as u64 + 1,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        out.insert(k.trim().trim_start_matches("--").to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Reads a rectangular numeric CSV as a `rows x cols` matrix, optionally
/// skipping one header row.
pub fn ingest_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Matrix> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(ExpError::Parse {
                    path: name,
                    line,
                    msg: format!("expected {c} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        for (j, field) in rec.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| ExpError::Parse {
                path: name.clone(),
                line,
                msg: format!("field {} is not numeric: `{field}`", j + 1),
            })?;
            values.push(x);
        }
        rows += 1;
    }
    let cols = cols.filter(|&c| c > 0).ok_or_else(|| ExpError::Parse {
        path: name,
        line: 0,
        msg: "no data rows".into(),
    })?;
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub family: Family,
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub n_s: usize,
    pub s: usize,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub metric: Metric,
    /// `None` marks a degenerate cell.
    pub value: Option<f64>,
    pub wall_ms: u64,
}

impl ResultRow {
    fn sort_key(&self, other: &Self) -> std::cmp::Ordering {
        self.family
            .as_str()
            .cmp(other.family.as_str())
            .then(self.method.as_str().cmp(other.method.as_str()))
            .then(self.epsilon.total_cmp(&other.epsilon))
            .then(self.delta.total_cmp(&other.delta))
            .then(self.n_s.cmp(&other.n_s))
            .then(self.s.cmp(&other.s))
            .then(self.k.cmp(&other.k))
            .then(self.trial.cmp(&other.trial))
    }
}

/// Rows in output order: family, method, ε, δ, n_s, s, k, trial (names
/// compare as strings).
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| a.sort_key(b));
}

/// Seed for one trial at one data point, shared by every method and privacy
/// level so their results are paired.
pub fn trial_seed(master: u64, n_s: usize, s: usize, k: usize, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(format!("n_s={n_s}/s={s}/k={k}/trial={trial}").as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// The protocol streams a method uses for a trial.
pub fn method_rngs(seed: u64, method: Method) -> CapeRngs {
    CapeRngs::scoped(seed, method.as_str())
}

fn power_rng(seed: u64, method: Method) -> RngStream {
    RngStream::new(seed, format!("{method}/power"))
}

pub fn data_spec(cfg: &SweepConfig, n_s: usize, s: usize, k: usize, seed: u64) -> ExperimentDataSpec {
    ExperimentDataSpec {
        family: cfg.family,
        dim: cfg.dim,
        k,
        sites: s,
        n_per_site: n_s,
        sigma_sq: cfg.sigma_sq,
        words_per_doc: cfg.words_per_doc,
        seed,
    }
}

/// Shuffles the ingested samples with the trial seed and deals `N / S`
/// consecutive samples to each site.
pub fn split_ingested(data: &Matrix, s: usize, seed: u64) -> Result<Vec<SiteDataset>> {
    let all = preprocess(data);
    let mut order: Vec<usize> = (0..all.ncols()).collect();
    order.shuffle(&mut RngStream::new(seed, "ingest/shuffle"));
    let n = all.ncols() / s;
    (0..s)
        .map(|site| {
            let cols: Vec<usize> = order[site * n..(site + 1) * n].to_vec();
            Ok(SiteDataset::new(site, all.select_columns(&cols))?)
        })
        .collect()
}

/// Captured energy of one PCA method on one trial's sites.
pub fn pca_metric(
    method: Method,
    sites: &[SiteDataset],
    privacy: &Privacy,
    k: usize,
    seed: u64,
    opts: ProtocolOptions,
) -> cape_core::Result<f64> {
    let rngs = method_rngs(seed, method);
    let r = match method {
        Method::Cape => cape_pca(sites, privacy, k, &rngs, opts)?.result,
        Method::Conv => conv_pca(sites, privacy, k, &rngs)?.result,
        Method::Local => local_pca(sites, 0, privacy, k, &mut rngs.stream(Role::Site(0), 1))?,
        Method::PooledDp => pooled_dp_pca(sites, privacy, k, &mut rngs.stream(Role::Aggregator, 1))?,
        Method::NonPrivate => nonprivate_pca(sites, k)?,
    };
    Ok(r.captured_energy)
}

/// `q_comp` of one tensor method on one trial's moments. STM estimates are
/// projected back to probability vectors first.
pub fn otd_metric(
    method: Method,
    data: &OtdData,
    privacy: &StagedPrivacy,
    k: usize,
    seed: u64,
    opts: ProtocolOptions,
) -> cape_core::Result<f64> {
    let rngs = method_rngs(seed, method);
    let whitened: WhitenedTensor = match method {
        Method::Cape => cape_agn(&data.sites, k, privacy, &rngs, opts)?.whitened,
        Method::Conv => conv_agn(&data.sites, k, privacy, &rngs)?.whitened,
        Method::Local => agn(&data.sites[0], k, privacy, &mut rngs.stream(Role::Site(0), 1))?,
        Method::PooledDp => agn(&data.pooled, k, privacy, &mut rngs.stream(Role::Aggregator, 1))?,
        Method::NonPrivate => whiten_and_project(&data.pooled.m2, &data.pooled.m3, k)?,
    };
    let out = decompose(&whitened, &PowerConfig::default(), &mut power_rng(seed, method))?;
    let comps = match data.model.kind() {
        cape_core::dp::ModelKind::Stm => stm_postprocess(&out.components).0,
        cape_core::dp::ModelKind::Mog => out.components,
    };
    q_comp(&comps, data.model.components())
}

enum TrialData {
    Pca(Vec<SiteDataset>),
    Otd(OtdData),
}

fn trial_data(cfg: &SweepConfig, n_s: usize, s: usize, k: usize, seed: u64) -> cape_core::Result<TrialData> {
    if let Some(data) = &cfg.data {
        return split_ingested(data, s, seed)
            .map(TrialData::Pca)
            .map_err(|e| match e {
                ExpError::Core(c) => c,
                other => cape_core::Error::InvalidArgument(other.to_string()),
            });
    }
    let spec = data_spec(cfg, n_s, s, k, seed);
    match cfg.family {
        Family::Pca => Ok(TrialData::Pca(gen_pca_data(&spec)?.sites)),
        _ => Ok(TrialData::Otd(gen_otd_data(&spec)?)),
    }
}

fn privacy_for(eps: f64, delta: f64, noiseless: bool) -> cape_core::Result<Privacy> {
    if noiseless {
        Ok(Privacy::Noiseless)
    } else {
        Ok(Privacy::Dp(PrivacySpec::new(eps, delta)?))
    }
}

fn run_trial(cfg: &SweepConfig, n_s: usize, s: usize, k: usize, trial: usize) -> Vec<ResultRow> {
    let seed = trial_seed(cfg.seed, n_s, s, k, trial);
    let data = trial_data(cfg, n_s, s, k, seed);
    // ingested data fixes the per-site count
    let n_s = match (&data, &cfg.data) {
        (Ok(TrialData::Pca(sites)), Some(_)) => sites[0].n_samples(),
        _ => n_s,
    };
    let metric = Metric::for_family(cfg.family);
    let opts = cfg.options();
    let mut rows = Vec::new();
    for (eps, delta) in cfg.privacy_cells() {
        for &method in &cfg.methods {
            let start = Instant::now();
            let value = match &data {
                Err(e) => Err(e.clone()),
                Ok(TrialData::Pca(sites)) => privacy_for(eps, delta, cfg.noiseless)
                    .and_then(|p| pca_metric(method, sites, &p, k, seed, opts)),
                Ok(TrialData::Otd(d)) => {
                    let staged = if cfg.noiseless {
                        Ok(StagedPrivacy::noiseless())
                    } else {
                        PrivacySpec::new(eps, delta).map(StagedPrivacy::even_split)
                    };
                    staged.and_then(|p| otd_metric(method, d, &p, k, seed, opts))
                }
            };
            let value = match value {
                Ok(v) if v.is_finite() => Some(v),
                Ok(v) => {
                    log::warn!("{method} eps={eps} n_s={n_s} s={s} k={k} trial={trial}: non-finite metric {v}");
                    None
                }
                Err(e) => {
                    log::warn!("{method} eps={eps} n_s={n_s} s={s} k={k} trial={trial}: {e}");
                    None
                }
            };
            let wall_ms = if cfg.timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            rows.push(ResultRow {
                family: cfg.family,
                method,
                epsilon: eps,
                delta,
                n_s,
                s,
                k,
                trial,
                seed,
                metric,
                value,
                wall_ms,
            });
        }
    }
    rows
}

/// Runs every cell and trial. Trials run in parallel; the returned rows are
/// sorted, so the thread count never changes the output.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &n_s in &cfg.ns_grid {
        for &s in &cfg.sites_grid {
            for &k in &cfg.k_grid {
                for trial in 0..cfg.trials {
                    jobs.push((n_s, s, k, trial));
                }
            }
        }
    }
    let mut rows: Vec<ResultRow> = jobs
        .par_iter()
        .flat_map_iter(|&(n_s, s, k, trial)| run_trial(cfg, n_s, s, k, trial))
        .collect();
    sort_rows(&mut rows);
    Ok(rows)
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes rows as CSV with the fixed header and LF line endings. Floats use
/// the shortest representation that parses back to the same value.
pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.family.as_str().to_string(),
            r.method.as_str().to_string(),
            fmt_f64(r.epsilon),
            fmt_f64(r.delta),
            r.n_s.to_string(),
            r.s.to_string(),
            r.k.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.metric.as_str().to_string(),
            r.value.map_or_else(|| DEGENERATE.to_string(), fmt_f64),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_results(rows, File::create(path)?)
}

pub fn results_to_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_results(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Inverse of [`write_results`].
pub fn parse_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return config_err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| ExpError::Parse {
            path: "results".into(),
            line,
            msg,
        };
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("missing column {}", HEADER[i])));
        fn num<T: FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {name} `{s}`"))
        }
        let value = match field(10)? {
            DEGENERATE => None,
            v => Some(num(v, "value").map_err(bad)?),
        };
        rows.push(ResultRow {
            family: parse_family(field(0)?)?,
            method: field(1)?.parse()?,
            epsilon: num(field(2)?, "epsilon").map_err(bad)?,
            delta: num(field(3)?, "delta").map_err(bad)?,
            n_s: num(field(4)?, "n_s").map_err(bad)?,
            s: num(field(5)?, "s").map_err(bad)?,
            k: num(field(6)?, "k").map_err(bad)?,
            trial: num(field(7)?, "trial").map_err(bad)?,
            seed: num(field(8)?, "seed").map_err(bad)?,
            metric: field(9)?.parse()?,
            value,
            wall_ms: num(field(11)?, "wall_ms").map_err(bad)?,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation over the trials of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub family: Family,
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub n_s: usize,
    pub s: usize,
    pub k: usize,
    pub metric: Metric,
    /// `None` when every trial was degenerate.
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    pub count: usize,
    pub excluded: usize,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let same_cell = |a: &ResultRow, b: &ResultRow| {
        a.family == b.family
            && a.method == b.method
            && a.epsilon.total_cmp(&b.epsilon).is_eq()
            && a.delta.total_cmp(&b.delta).is_eq()
            && (a.n_s, a.s, a.k, a.metric) == (b.n_s, b.s, b.k, b.metric)
    };
    sorted
        .chunk_by(|a, b| same_cell(a, b))
        .map(|cell| {
            let vals: Vec<f64> = cell.iter().filter_map(|r| r.value).collect();
            let n = vals.len();
            let (mean, stddev) = if n == 0 {
                (None, None)
            } else {
                let m = vals.iter().sum::<f64>() / n as f64;
                let sd = if n == 1 {
                    0.0
                } else {
                    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                };
                (Some(m), Some(sd))
            };
            let r = &cell[0];
            SummaryRow {
                family: r.family,
                method: r.method,
                epsilon: r.epsilon,
                delta: r.delta,
                n_s: r.n_s,
                s: r.s,
                k: r.k,
                metric: r.metric,
                mean,
                stddev,
                count: n,
                excluded: cell.len() - n,
            }
        })
        .collect()
}

/// Whitespace-separated summary with a `#` header, loadable by gnuplot.
pub fn write_summary<W: Write>(summary: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "# family method epsilon delta n_s s k metric mean stddev count excluded")?;
    for r in summary {
        let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), fmt_f64);
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            r.family.as_str(),
            r.method,
            fmt_f64(r.epsilon),
            fmt_f64(r.delta),
            r.n_s,
            r.s,
            r.k,
            r.metric.as_str(),
            opt(r.mean),
            opt(r.stddev),
            r.count,
            r.excluded
        )?;
    }
    Ok(())
}

/// True when at least one row carries a finite metric.
pub fn any_succeeded(rows: &[ResultRow]) -> bool {
    rows.iter().any(|r| r.value.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, eps: f64, trial: usize, value: Option<f64>) -> ResultRow {
        ResultRow {
            family: Family::Pca,
            method,
            epsilon: eps,
            delta: 0.01,
            n_s: 10,
            s: 3,
            k: 2,
            trial,
            seed: 7,
            metric: Metric::QCe,
            value,
            wall_ms: 0,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        assert_eq!(
            results_to_string(&[]).unwrap(),
            "family,method,epsilon,delta,n_s,s,k,trial,seed,metric,value,wall_ms\n"
        );
    }

    #[test]
    fn round_trip_keeps_every_bit() {
        let rows = vec![
            row(Method::Cape, 0.1, 0, Some(0.1 + 0.2)),
            row(Method::Conv, 1e-300, 1, Some(-1.0 / 3.0)),
            row(Method::Local, f64::INFINITY, 2, None),
            row(Method::PooledDp, 5.0, 3, Some(123456789.125)),
        ];
        let text = results_to_string(&rows).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(parse_results(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn rows_sort_by_cell_then_trial() {
        let mut rows = vec![
            row(Method::NonPrivate, 1.0, 0, None),
            row(Method::Cape, 2.0, 1, None),
            row(Method::Cape, 0.5, 1, None),
            row(Method::Cape, 0.5, 0, None),
        ];
        sort_rows(&mut rows);
        let keys: Vec<_> = rows.iter().map(|r| (r.method, r.epsilon, r.trial)).collect();
        assert_eq!(
            keys,
            vec![
                (Method::Cape, 0.5, 0),
                (Method::Cape, 0.5, 1),
                (Method::Cape, 2.0, 1),
                (Method::NonPrivate, 1.0, 0)
            ]
        );
    }

    #[test]
    fn summary_examples() {
        let one = summarize(&[row(Method::Cape, 1.0, 0, Some(4.0))]);
        assert_eq!((one[0].mean, one[0].stddev, one[0].count), (Some(4.0), Some(0.0), 1));

        let two = summarize(&[row(Method::Cape, 1.0, 0, Some(1.0)), row(Method::Cape, 1.0, 1, Some(3.0))]);
        assert_eq!(two[0].mean, Some(2.0));
        assert!((two[0].stddev.unwrap() - 2f64.sqrt()).abs() < 1e-15);

        let mixed = summarize(&[
            row(Method::Cape, 1.0, 0, Some(1.0)),
            row(Method::Cape, 1.0, 1, None),
            row(Method::Cape, 1.0, 2, None),
            row(Method::Conv, 1.0, 0, None),
        ]);
        assert_eq!(mixed.len(), 2);
        assert_eq!((mixed[0].count, mixed[0].excluded), (1, 2));
        assert_eq!((mixed[1].mean, mixed[1].count, mixed[1].excluded), (None, 0, 1));
    }

    #[test]
    fn settings_parse_and_validate() {
        let mut s = BTreeMap::new();
        s.insert("family".to_string(), "mog".to_string());
        s.insert("methods".to_string(), "cape, conv".to_string());
        s.insert("eps-grid".to_string(), "1,10".to_string());
        s.insert("noiseless".to_string(), "false".to_string());
        let cfg = SweepConfig::from_settings(&s).unwrap();
        assert_eq!(cfg.methods, vec![Method::Cape, Method::Conv]);
        assert_eq!(cfg.eps_grid, vec![1.0, 10.0]);
        assert_eq!((cfg.dim, cfg.k_grid.clone()), (10, vec![5]));

        s.insert("bogus".to_string(), "1".to_string());
        assert!(matches!(SweepConfig::from_settings(&s), Err(ExpError::Config(_))));
        s.remove("bogus");
        s.insert("trials".to_string(), "0".to_string());
        assert!(SweepConfig::from_settings(&s).is_err());
        s.insert("trials".to_string(), "2".to_string());
        s.insert("k".to_string(), "11".to_string());
        assert!(SweepConfig::from_settings(&s).is_err());
        s.insert("k".to_string(), "2".to_string());
        s.insert("trusted-sites".to_string(), "true".to_string());
        s.insert("sites".to_string(), "2".to_string());
        assert!(SweepConfig::from_settings(&s).is_err());
    }

    #[test]
    fn noiseless_collapses_privacy_grid() {
        let mut cfg = SweepConfig::defaults(Family::Pca);
        cfg.noiseless = true;
        assert_eq!(cfg.privacy_cells(), vec![(f64::INFINITY, 0.0)]);
    }

    #[test]
    fn trial_seed_depends_on_every_coordinate() {
        let base = trial_seed(1, 10, 3, 2, 0);
        assert_eq!(base, trial_seed(1, 10, 3, 2, 0));
        for other in [
            trial_seed(2, 10, 3, 2, 0),
            trial_seed(1, 11, 3, 2, 0),
            trial_seed(1, 10, 4, 2, 0),
            trial_seed(1, 10, 3, 3, 0),
            trial_seed(1, 10, 3, 2, 1),
        ] {
            assert_ne!(base, other);
        }
    }
}
