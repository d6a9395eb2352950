use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use cape_exp::{
    any_succeeded, read_config_file, run_sweep, summarize, write_results, write_summary, ExpError, SweepConfig,
};
use clap::Parser;

/// Sweep distributed private PCA / tensor decomposition experiments and
/// write one CSV row per (cell, trial).
///
/// Exit status: 0 when at least one cell produced a metric, 1 on a
/// configuration or I/O error, 2 when every cell was degenerate.
#[derive(Parser, Debug)]
#[command(name = "cape-exp", version)]
struct Args {
    /// Flat key=value file; keys are flag names without dashes. Flags win.
    #[arg(long)]
    config: Option<String>,
    /// pca, mog or stm.
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated subset of cape,conv,local,pooled-dp,non-private.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    eps_grid: Option<String>,
    #[arg(long)]
    delta_grid: Option<String>,
    /// Samples (or documents) per site.
    #[arg(long)]
    ns_grid: Option<String>,
    /// Site counts.
    #[arg(long)]
    sites: Option<String>,
    /// Ranks / component counts.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    sigma_sq: Option<String>,
    #[arg(long)]
    words_per_doc: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Result CSV; stdout when absent.
    #[arg(long)]
    out: Option<String>,
    /// Per-cell mean/stddev table.
    #[arg(long)]
    summary: Option<String>,
    #[arg(long)]
    noiseless: bool,
    /// Sites keep the f-share-free protocol variant.
    #[arg(long)]
    trusted_sites: bool,
    /// Record wall time (makes output run-dependent).
    #[arg(long)]
    timing: bool,
    /// Ingest samples from a numeric CSV instead of generating PCA data.
    #[arg(long)]
    data_csv: Option<String>,
    #[arg(long)]
    csv_header: bool,
    /// rows (default) or columns: how samples are laid out in --data-csv.
    #[arg(long)]
    csv_orientation: Option<String>,
}

impl Args {
    fn settings(&self) -> Result<BTreeMap<String, String>, ExpError> {
        let mut s = match &self.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let values = [
            ("family", &self.family),
            ("methods", &self.methods),
            ("eps-grid", &self.eps_grid),
            ("delta-grid", &self.delta_grid),
            ("ns-grid", &self.ns_grid),
            ("sites", &self.sites),
            ("k", &self.k),
            ("dim", &self.dim),
            ("sigma-sq", &self.sigma_sq),
            ("words-per-doc", &self.words_per_doc),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("out", &self.out),
            ("summary", &self.summary),
            ("data-csv", &self.data_csv),
            ("csv-orientation", &self.csv_orientation),
        ];
        for (key, v) in values {
            if let Some(v) = v {
                s.insert(key.to_string(), v.clone());
            }
        }
        for (key, on) in [
            ("noiseless", self.noiseless),
            ("trusted-sites", self.trusted_sites),
            ("timing", self.timing),
            ("csv-header", self.csv_header),
        ] {
            if on {
                s.insert(key.to_string(), "true".to_string());
            }
        }
        Ok(s)
    }
}

fn run(args: &Args) -> Result<bool, ExpError> {
    let settings = args.settings()?;
    let cfg = SweepConfig::from_settings(&settings)?;
    let rows = run_sweep(&cfg)?;
    match settings.get("out") {
        Some(path) => write_results(&rows, BufWriter::new(File::create(path)?))?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_results(&rows, &mut lock)?;
            lock.flush()?;
        }
    }
    if let Some(path) = settings.get("summary") {
        write_summary(&summarize(&rows), BufWriter::new(File::create(path)?))?;
    }
    Ok(any_succeeded(&rows))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("cape-exp: every cell was degenerate");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("cape-exp: {e}");
            ExitCode::from(1)
        }
    }
}
