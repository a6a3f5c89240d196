//! Command-line front end: `fit`, `sweep` and `synth`.
//!
//! Exit codes: 0 on success, 1 when the pipeline fails at runtime, 2 for
//! usage, configuration and input-file errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, DatasetSpec, LoadedDataset, SynthSpec};
use crate::error::{MmcError, Result};
use crate::mapping::{build_mapping, BlockInit};
use crate::metrics::{mapping_inference_accuracy, mean_nmi_protocol, nmi, MappingAccuracy};
use crate::optimizer::{fit, ComponentRun, MmcConfig, MmcResult};

#[derive(Debug, Parser)]
#[command(name = "mmc", version, about = "Multi-source multi-view spectral clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one dataset and write labels, report.json and trace.csv.
    Fit(FitArgs),
    /// Refit a dataset for each value of one parameter and write NMI per value.
    Sweep(SweepArgs),
    /// Generate a synthetic dataset and its spec file.
    Synth(SynthArgs),
}

/// Solver settings shared by `fit` and `sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverFlags {
    /// View weight applied to every view of every source.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Pair weight applied to every source pair.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// k-means restarts, also the number of runs in the mean-NMI protocol.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cluster the raw consensus rows instead of unit-normalized rows.
    #[arg(long)]
    pub no_row_normalize: bool,
}

impl SolverFlags {
    pub fn config(&self) -> Result<MmcConfig> {
        let mut c = MmcConfig::default();
        if let Some(v) = self.alpha {
            c.default_alpha = v;
        }
        if let Some(v) = self.beta {
            c.default_beta = v;
        }
        if let Some(v) = self.inner_tol {
            c.inner_tol = v;
        }
        if let Some(v) = self.outer_tol {
            c.outer_tol = v;
        }
        if let Some(v) = self.max_inner {
            c.max_inner = v;
        }
        if let Some(v) = self.max_outer {
            c.max_outer = v;
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.row_normalize = !self.no_row_normalize;
        c.validate()?;
        Ok(c)
    }

    /// Loads a dataset and broadcasts `--alpha` / `--beta` over it.
    pub fn load(&self, spec_path: &Path) -> Result<(LoadedDataset, MmcConfig)> {
        let config = self.config()?;
        let spec = DatasetSpec::from_json_file(spec_path)?;
        let base = spec_path.parent().unwrap_or(Path::new("."));
        let mut loaded = load_dataset(&spec, base, &config)?;
        if let Some(a) = self.alpha {
            loaded.problem.set_all_alphas(a)?;
        }
        if let Some(b) = self.beta {
            loaded.problem.set_all_betas(b)?;
        }
        Ok((loaded, config))
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Dataset spec JSON.
    pub spec: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = "mmc-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Alpha,
    Beta,
    KnownFraction,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::KnownFraction => "known_fraction",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Dataset spec JSON; every source needs ground-truth labels.
    pub spec: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values, e.g. `0.001,0.01,0.1,1,10,100,1000`.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[arg(long, default_value = "mmc-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Synthetic spec JSON; missing fields take their defaults.
    pub spec: PathBuf,
    #[arg(long, default_value = "mmc-synth")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub name: String,
    pub instances: usize,
    pub clusters: usize,
    /// k-means inertia of the written labeling.
    pub inertia: f64,
    /// NMI of the written labeling against ground truth.
    pub nmi: Option<f64>,
    /// Mean and sample std of NMI over `restarts` single-restart labelings.
    pub nmi_mean: Option<f64>,
    pub nmi_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub source_a: usize,
    pub source_b: usize,
    pub known_pairs: usize,
    pub beta: f64,
    pub block_init: BlockInit,
    /// Needs ground truth on both sources.
    pub inference: Option<MappingAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: MmcConfig,
    pub sources: Vec<SourceReport>,
    pub mappings: Vec<MappingReport>,
    /// One entry per independently optimized group of sources, with its objective trace.
    pub components: Vec<ComponentRun>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub known_mapping_violations: usize,
    pub mapping_updates: usize,
    pub wall_time_secs: f64,
}

/// Fits a loaded dataset and evaluates it against whatever ground truth is present.
pub fn fit_and_report(loaded: &LoadedDataset, config: &MmcConfig) -> Result<(MmcResult, RunReport)> {
    let result = fit(&loaded.problem, config)?;
    let mut sources = Vec::new();
    for (k, s) in loaded.problem.sources().iter().enumerate() {
        let (mut score, mut mean, mut std) = (None, None, None);
        if let Some(t) = &loaded.truth[k] {
            score = Some(nmi(&result.labels[k], t)?);
            let (m, sd) = mean_nmi_protocol(
                &result.consensus[k],
                s.clusters,
                t,
                config.restarts,
                config.seed,
                config.row_normalize,
            )?;
            mean = Some(m);
            std = Some(sd);
        }
        sources.push(SourceReport {
            name: loaded.names[k].clone(),
            instances: s.instances(),
            clusters: s.clusters,
            inertia: result.inertias[k],
            nmi: score,
            nmi_mean: mean,
            nmi_std: std,
        });
    }
    let mut mappings = Vec::new();
    for ((p, m), how) in loaded.problem.pairs().iter().zip(&result.mappings).zip(&result.block_inits) {
        let (i, j) = p.sources();
        let inference = match (&loaded.truth[i], &loaded.truth[j]) {
            (Some(ti), Some(tj)) => Some(mapping_inference_accuracy(m, ti, tj)?),
            _ => None,
        };
        mappings.push(MappingReport {
            source_a: i,
            source_b: j,
            known_pairs: p.mapping.known_count(),
            beta: p.beta,
            block_init: *how,
            inference,
        });
    }
    let report = RunReport {
        seed: config.seed,
        config: config.clone(),
        sources,
        mappings,
        components: result.components.clone(),
        outer_iters: result.outer_iters(),
        inner_iters: result.total_inner_iters(),
        converged: result.converged(),
        known_mapping_violations: result.known_mapping_violations,
        mapping_updates: result.mapping_updates,
        wall_time_secs: result.wall_time.as_secs_f64(),
    };
    Ok((result, report))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| MmcError::output(path, e))
}

/// Objective trace as CSV with one row per recorded point.
pub fn trace_csv(components: &[ComponentRun]) -> String {
    let mut out = String::from("outer_iter,inner_iter,objective,component\n");
    for (c, run) in components.iter().enumerate() {
        for t in &run.trace {
            let _ = writeln!(out, "{},{},{:?},{}", t.outer, t.inner, t.objective, c);
        }
    }
    out
}

pub fn cmd_fit(args: &FitArgs) -> Result<RunReport> {
    let (loaded, config) = args.solver.load(&args.spec)?;
    let (result, report) = fit_and_report(&loaded, &config)?;
    fs::create_dir_all(&args.out).map_err(|e| MmcError::output(&args.out, e))?;
    for (name, labels) in loaded.names.iter().zip(&result.labels) {
        write_file(
            &args.out.join(format!("{name}.labels")),
            &crate::data::format_labels(labels.as_slice()),
        )?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&args.out.join("report.json"), &(json + "\n"))?;
    write_file(&args.out.join("trace.csv"), &trace_csv(&report.components))?;
    for s in &report.sources {
        match s.nmi {
            Some(v) => log::info!("{}: nmi {v:.4}", s.name),
            None => log::info!("{}: no ground truth", s.name),
        }
    }
    Ok(report)
}

/// NMI of every source for one swept value; NaN when the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub nmi: Vec<(f64, f64)>,
    pub error: Option<String>,
}

/// Keeps `⌊fraction·m⌋` of each pair's `m` known correspondences. The kept
/// pairs are a prefix of one seeded shuffle, so larger fractions keep supersets.
pub fn subsample_known(loaded: &mut LoadedDataset, fraction: f64, seed: u64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(MmcError::InvalidConfig(format!(
            "known fraction {fraction} must lie in [0, 1]"
        )));
    }
    let pairs: Vec<_> = loaded.problem.pairs().iter().map(|p| p.mapping.clone()).collect();
    for (idx, m) in pairs.into_iter().enumerate() {
        let mut known = m.known_pairs();
        known.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(idx as u64)));
        known.truncate(crate::data::floor_fraction(fraction, known.len()));
        let rebuilt = build_mapping(m.source_i, m.source_j, m.nrows(), m.ncols(), &known)?;
        loaded.problem.set_mapping(rebuilt)?;
    }
    Ok(())
}

fn sweep_one(loaded: &LoadedDataset, param: SweepParam, value: f64, config: &MmcConfig) -> Result<Vec<(f64, f64)>> {
    let mut data = loaded.clone();
    match param {
        SweepParam::Alpha => data.problem.set_all_alphas(value)?,
        SweepParam::Beta => data.problem.set_all_betas(value)?,
        SweepParam::KnownFraction => subsample_known(&mut data, value, config.seed)?,
    }
    let result = fit(&data.problem, config)?;
    data.problem
        .sources()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let truth = data.truth[k].as_ref().expect("checked before sweeping");
            mean_nmi_protocol(&result.consensus[k], s.clusters, truth, config.restarts, config.seed, config.row_normalize)
        })
        .collect()
}

/// One full fit per value, all with `config.seed`. Rows follow input order.
pub fn sweep(loaded: &LoadedDataset, param: SweepParam, values: &[f64], config: &MmcConfig) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(MmcError::InvalidConfig("sweep needs at least one value".into()));
    }
    if let Some(k) = loaded.truth.iter().position(Option::is_none) {
        return Err(MmcError::InvalidConfig(format!(
            "sweep needs ground-truth labels for every source; {} has none",
            loaded.names[k]
        )));
    }
    let k_total = loaded.problem.sources().len();
    Ok(values
        .par_iter()
        .map(|&value| match sweep_one(loaded, param, value, config) {
            Ok(nmi) => SweepRow { value, nmi, error: None },
            Err(e) => {
                log::error!("{} = {value}: {e}", param.name());
                SweepRow {
                    value,
                    nmi: vec![(f64::NAN, f64::NAN); k_total],
                    error: Some(e.to_string()),
                }
            }
        })
        .collect())
}

pub fn sweep_csv(names: &[String], rows: &[SweepRow]) -> String {
    let mut out = String::from("value");
    for n in names {
        let _ = write!(out, ",{n}_nmi_mean,{n}_nmi_std");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{:?}", r.value);
        for (m, s) in &r.nmi {
            let _ = write!(out, ",{m:?},{s:?}");
        }
        out.push('\n');
    }
    out
}

/// Writes `<out>/sweep_<param>.csv`. Returns the rows and the CSV path.
pub fn cmd_sweep(args: &SweepArgs) -> Result<(Vec<SweepRow>, PathBuf)> {
    if args.values.is_empty() {
        return Err(MmcError::InvalidConfig("sweep needs at least one value".into()));
    }
    let (loaded, config) = args.solver.load(&args.spec)?;
    let rows = sweep(&loaded, args.param, &args.values, &config)?;
    fs::create_dir_all(&args.out).map_err(|e| MmcError::output(&args.out, e))?;
    let path = args.out.join(format!("sweep_{}.csv", args.param.name()));
    write_file(&path, &sweep_csv(&loaded.names, &rows))?;
    Ok((rows, path))
}

/// Generates the dataset and writes it. Returns the path of `dataset.json`.
pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf> {
    let spec = SynthSpec::from_json_file(&args.spec)?;
    generate_synthetic(&spec)?.write(&args.out)
}

fn exit_code(e: &MmcError) -> i32 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|r| {
            println!("wrote {} (outer iterations {})", a.out.display(), r.outer_iters);
            0
        }),
        Command::Sweep(a) => cmd_sweep(a).map(|(rows, path)| {
            println!("wrote {}", path.display());
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("error: {failed} of {} sweep runs failed", rows.len());
                1
            } else {
                0
            }
        }),
        Command::Synth(a) => cmd_synth(a).map(|p| {
            println!("wrote {}", p.display());
            0
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
