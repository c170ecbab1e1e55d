//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 when validation or a pipeline step fails, 2 on usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand};

use super::config::{FeatureMode, ReadoutMode, RunConfig};
use super::data::{load_dataset, Dataset};
use super::preprocess::PositionStats;
use super::run::{class_explanations, reload_run, run_cv, selection_csv, write_explanations, write_outputs};
use super::synth::{generate_synthetic, SynthConfig};
use super::PipelineError;
use crate::explain::{parse_coordinates, NetworkMap};
use crate::graph::Connectome;
use crate::selection::stratified_selection;
use crate::spd::{validate_spd, Metric, SpdMatrix, SymMatrix, DEFAULT_VALIDATE_EPS};

#[derive(Debug, Parser)]
#[command(name = "cgat", version, about = "Connectome classification with edge-weighted graph attention")]
pub struct Cli {
    /// TOML run configuration; flags below override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Per-field overrides of the run configuration.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub weight_decay: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub k_per_class: Option<usize>,
    #[arg(long, global = true)]
    pub hidden_dim: Option<usize>,
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    pub dropout: Option<f64>,
    #[arg(long, global = true)]
    pub negative_slope: Option<f64>,
    #[arg(long, global = true, value_parser = parse_readout)]
    pub readout: Option<ReadoutMode>,
    #[arg(long, global = true)]
    pub sparsify_quantile: Option<f64>,
    #[arg(long, global = true)]
    pub ridge_lambda: Option<f64>,
    /// Enable (`true`) or disable (`false`) sample selection.
    #[arg(long, global = true)]
    pub selection: Option<bool>,
    #[arg(long, global = true)]
    pub centralities: Option<String>,
    #[arg(long, global = true)]
    pub class_weighting: Option<bool>,
    #[arg(long, global = true, value_parser = parse_features)]
    pub features: Option<FeatureMode>,
    #[arg(long, global = true)]
    pub top_l: Option<usize>,
    #[arg(long, global = true)]
    pub directed_masks: Option<bool>,
}

fn parse_readout(s: &str) -> Result<ReadoutMode, String> {
    match s {
        "sum" => Ok(ReadoutMode::Sum),
        "mean" => Ok(ReadoutMode::Mean),
        _ => Err(format!("expected sum or mean, got '{s}'")),
    }
}

fn parse_features(s: &str) -> Result<FeatureMode, String> {
    match s {
        "standardize" => Ok(FeatureMode::Standardize),
        "fisher" => Ok(FeatureMode::Fisher),
        "raw" => Ok(FeatureMode::Raw),
        _ => Err(format!("expected standardize, fisher or raw, got '{s}'")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort (manifest, matrices, planted edges, network map).
    Synth {
        #[arg(long, default_value_t = 32)]
        d: usize,
        /// Subjects per class, comma separated.
        #[arg(long, default_value = "20,20,20,20", value_delimiter = ',')]
        per_class: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        signal: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
    },
    /// Check that every subject's connectivity matrix (plus identity) is SPD.
    Validate {
        #[arg(long, default_value_t = DEFAULT_VALIDATE_EPS)]
        eps: f64,
    },
    /// Pairwise manifold distances between subjects.
    Distances {
        #[arg(long, default_value = "lerm")]
        metric: String,
    },
    /// Stratified sample selection over the whole cohort.
    Select,
    /// Cross-validated training; requires --config.
    Train,
    /// Recompute out-of-fold metrics from a finished run's checkpoints.
    Evaluate {
        /// Run directory; defaults to --out-dir.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Class explanation masks, network summaries and viewer files.
    Explain {
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// `roi_index,roi_name,network` table; defaults to the manifest
        /// directory's network_map.csv, then to a contiguous split.
        #[arg(long)]
        network_map: Option<PathBuf>,
        /// `roi_index,x,y,z` table.
        #[arg(long)]
        coords: Option<PathBuf>,
    },
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { c.$f = v; })*};
        }
        set!(folds, epochs, lr, weight_decay, batch_size, k_per_class, hidden_dim, heads, layers, dropout);
        set!(negative_slope, readout, sparsify_quantile, ridge_lambda, selection, centralities, class_weighting);
        set!(features, top_l, directed_masks);
        if let Some(m) = &self.manifest {
            c.manifest = Some(m.clone());
        }
    }
}

enum Failure {
    Usage(String),
    Pipeline(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let m = cfg.manifest.as_ref().ok_or_else(|| usage("a manifest is required (--manifest or `manifest` in --config)"))?;
    Ok(load_dataset(m)?)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Pipeline(PipelineError::io(path, e)))
}

/// Connectomes with imputation fitted on the whole cohort.
fn cohort_connectomes(ds: &Dataset) -> Result<Vec<Connectome>, Failure> {
    let stats = PositionStats::fit(&ds.matrices)?;
    ds.manifest
        .entries
        .iter()
        .zip(&ds.matrices)
        .map(|(e, m)| Ok(Connectome::from_matrix(&stats.impute(m), e.subject_id.clone(), e.label).map_err(PipelineError::from)?))
        .collect()
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Synth { d, per_class, signal, noise } => {
            let cfg = SynthConfig {
                d: *d,
                per_class: per_class.clone(),
                signal_strength: *signal,
                noise: *noise,
                seed: cli.seed.unwrap_or(0),
            };
            let cohort = generate_synthetic(&cfg)?;
            let manifest = cohort.write(&out_dir(cli, "synthetic"))?;
            println!("wrote {} subjects to {}", cohort.matrices.len(), manifest.display());
        }
        Command::Validate { eps } => {
            let cfg = resolve_config(cli)?;
            let ds = dataset(&cfg)?;
            let mut failures = 0;
            for c in cohort_connectomes(&ds)? {
                let shifted = c.weights().as_matrix() + nalgebra::DMatrix::identity(c.dim(), c.dim());
                match SymMatrix::new(shifted).map_err(PipelineError::from).and_then(|s| Ok(validate_spd(s, *eps)?)) {
                    Ok(spd) => log::debug!("{}: ok (min eigenvalue {:e})", c.subject_id(), spd.min_eigenvalue()),
                    Err(e) => {
                        failures += 1;
                        println!("{}: {e}", c.subject_id());
                    }
                }
            }
            println!("{} of {} subjects valid", ds.len() - failures, ds.len());
            if failures > 0 {
                return Err(Failure::Pipeline(PipelineError::Validation(failures)));
            }
        }
        Command::Distances { metric } => {
            let metric: Metric = metric.parse().map_err(|_| usage(format!("--metric: unknown metric '{metric}'")))?;
            let cfg = resolve_config(cli)?;
            let ds = dataset(&cfg)?;
            let floor = crate::spd::DEFAULT_SPD_FLOOR;
            let spd: Vec<SpdMatrix> = cohort_connectomes(&ds)?
                .iter()
                .map(|c| c.to_spd(floor).map_err(PipelineError::from))
                .collect::<Result<_, _>>()?;
            let ids = ds.subject_ids();
            let mut table = format!("subject_id,{}\n", ids.join(","));
            for (i, a) in spd.iter().enumerate() {
                let mut row = vec![ids[i].clone()];
                for (j, b) in spd.iter().enumerate() {
                    let v = if i == j { 0.0 } else { metric.distance(a, b).map_err(PipelineError::from)? };
                    row.push(format!("{v}"));
                }
                table.push_str(&row.join(","));
                table.push('\n');
            }
            print!("{table}");
            if let Some(dir) = &cli.out_dir {
                write(&dir.join("distances.csv"), &table)?;
            }
        }
        Command::Select => {
            let cfg = resolve_config(cli)?;
            let ds = dataset(&cfg)?;
            let outcome = stratified_selection(&cohort_connectomes(&ds)?, &cfg.selection_config()?, cfg.seed)
                .map_err(PipelineError::from)?;
            let dir = out_dir(cli, "selection");
            write(&dir.join("selection.csv"), &selection_csv(&outcome))?;
            println!("selected {} subjects: {}", outcome.selected_ids.len(), outcome.selected_ids.join(" "));
        }
        Command::Train => {
            if cli.config.is_none() {
                return Err(usage("train requires --config <path>"));
            }
            let cfg = resolve_config(cli)?;
            let ds = dataset(&cfg)?;
            let outcome = run_cv(&ds, &cfg)?;
            let dir = out_dir(cli, "run");
            write_outputs(&outcome, &ds, &cfg, &dir)?;
            let m = &outcome.metrics;
            println!("precision {:.4} recall {:.4} f1 {:.4} auc {:.4}", m.precision, m.recall, m.f1, m.auc);
        }
        Command::Evaluate { run_dir } => {
            let dir = run_dir.clone().unwrap_or_else(|| out_dir(cli, "run"));
            let cfg = run_config_for(cli, &dir)?;
            let ds = dataset(&cfg)?;
            let outcome = reload_run(&ds, &cfg, &dir)?;
            let json = serde_json::to_string_pretty(&outcome.metrics).expect("metrics serialize");
            println!("{json}");
            write(&dir.join("evaluation.json"), &(json + "\n"))?;
        }
        Command::Explain { run_dir, network_map, coords } => {
            let dir = run_dir.clone().unwrap_or_else(|| out_dir(cli, "run"));
            let cfg = run_config_for(cli, &dir)?;
            let ds = dataset(&cfg)?;
            let d = ds.manifest.atlas_dim;
            let default_map = cfg.manifest.as_ref().and_then(|m| m.parent()).map(|p| p.join("network_map.csv"));
            let netmap = match network_map.clone().or(default_map.filter(|p| p.exists())) {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|_| PipelineError::MissingFile(p.clone()))?;
                    NetworkMap::parse(&text, d).map_err(PipelineError::from)?
                }
                None => NetworkMap::contiguous(d),
            };
            let coords = match coords {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|_| PipelineError::MissingFile(p.clone()))?;
                    Some(parse_coordinates(&text, d).map_err(PipelineError::from)?)
                }
                None => None,
            };
            let outcome = reload_run(&ds, &cfg, &dir)?;
            let expl = class_explanations(&outcome, &cfg, &netmap)?;
            write_explanations(&expl, &netmap, coords.as_deref(), &dir)?;
            println!("wrote {} class masks to {}", expl.len(), dir.join("masks").display());
        }
    }
    Ok(())
}

/// Config for commands operating on a finished run: an explicit --config
/// wins, then the run's own config.toml.
fn run_config_for(cli: &Cli, dir: &Path) -> Result<RunConfig, Failure> {
    if cli.config.is_some() {
        return resolve_config(cli);
    }
    let saved = dir.join("config.toml");
    let mut cfg = if saved.exists() { RunConfig::load(&saved)? } else { RunConfig::default() };
    cli.overrides.apply(&mut cfg);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (program name first) and runs the selected command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = Cli::command().error(ErrorKind::MissingRequiredArgument, msg).print();
            2
        }
        Err(Failure::Pipeline(PipelineError::Config(msg))) => {
            eprintln!("error: invalid configuration: {msg}");
            2
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}
