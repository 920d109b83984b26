//! Command-line pipeline: generate or load a graph, cluster it, stratify
//! clusters, draw the hierarchical design, realize outcomes, analyze, and
//! run simulation studies or exact oracle checks.
//!
//! Every command is a pure function of its inputs, flags and seed; JSON
//! outputs embed a [`manifest::RunManifest`].

pub mod checks;
pub mod commands;
pub mod design;
pub mod error;
pub mod io;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "interference", version, about = "Test for interference with a hierarchical randomized design")]
pub struct Cli {
    /// Worker threads for simulation and metrics (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stochastic block model graph.
    Generate(GenerateArgs),
    /// Balanced clustering by restreaming linear deterministic greedy.
    Cluster(ClusterArgs),
    /// Group clusters into strata of similar clusters.
    Stratify(StratifyArgs),
    /// Draw the hierarchical design.
    Assign(AssignArgs),
    /// Realize outcomes of an assignment from a table or the linear model.
    Outcomes(OutcomesArgs),
    /// Estimate delta, its variance bound, and decide.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo study.
    Simulate(SimulateArgs),
    /// Exact checks by enumeration of a small design.
    Oracle(OracleArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Block model JSON: num_blocks, block_size, p_intra, p_inter, seed.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub edges_out: PathBuf,
    /// Ground-truth block clustering CSV.
    #[arg(long)]
    pub clustering_out: Option<PathBuf>,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub clusters: u64,
    #[arg(long, default_value_t = 0.0)]
    pub leniency: f64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    #[arg(long)]
    pub seed: u64,
    /// Move units until all clusters have equal size.
    #[arg(long)]
    pub rebalance: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub metrics_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StratifyArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long)]
    pub clustering: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub strata: u64,
    /// Extra per-cluster covariates CSV with a cluster_id column.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Make every stratum size a multiple of this (leftover to stratum 0).
    #[arg(long)]
    pub multiple: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismArg {
    #[default]
    Complete,
    Bernoulli,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleArg {
    #[default]
    Chebyshev,
    Gaussian,
}

#[derive(Debug, Args, Serialize)]
pub struct AssignArgs {
    #[arg(long)]
    pub clustering: PathBuf,
    #[arg(long)]
    pub stratification: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Clusters in the completely randomized arm (default M/2).
    #[arg(long, requires_all = ["n_cr_t", "m_cbr_t"])]
    pub m_cr: Option<usize>,
    /// Treated units in the completely randomized arm (default half).
    #[arg(long, requires_all = ["m_cr", "m_cbr_t"])]
    pub n_cr_t: Option<usize>,
    /// Treated clusters in the cluster-randomized arm (default half).
    #[arg(long, requires_all = ["m_cr", "n_cr_t"])]
    pub m_cbr_t: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub mechanism: MechanismArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub counts_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OutcomesArgs {
    #[arg(long)]
    pub assignment: PathBuf,
    /// Potential outcomes CSV: unit_id,y1,y0.
    #[arg(long, conflicts_with = "edges")]
    pub table: Option<PathBuf>,
    /// Graph for the linear interference model.
    #[arg(long, requires = "beta")]
    pub edges: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long, required_unless_present = "summary", requires = "outcomes")]
    pub assignment: Option<PathBuf>,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// JSON with `delta` and its standard deviation `sigma`; skips estimation.
    #[arg(long, conflicts_with_all = ["assignment", "outcomes"])]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t)]
    pub rule: RuleArg,
    /// Treatment in the completely randomized arm was re-randomized Bernoulli.
    #[arg(long, value_enum, default_value_t)]
    pub mechanism: MechanismArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyArg {
    Ratio,
    Power,
    Type1,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Must match the config's study when given.
    #[arg(long, value_enum)]
    pub study: Option<StudyArg>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Exit with status 2 if the study's properties fail.
    #[arg(long)]
    pub check: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckArg {
    /// Arm estimators are unbiased and delta is centred under no interference.
    Unbiasedness,
    /// Closed-form means under the linear interference model.
    LinearMeans,
    /// Closed-form variance of delta under Fisher's null.
    NullVariance,
    /// Expected variance bound against the exact variance of delta.
    VarianceBound,
    /// Re-randomized Bernoulli against complete randomization.
    Bernoulli,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub check: CheckArg,
    /// Small design JSON; the bundled 8-unit design when omitted.
    #[arg(long)]
    pub design: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random tables for the variance checks.
    #[arg(long, default_value_t = 100)]
    pub tables: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a command, printing a short summary to stdout.
pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Stratify(a) => commands::stratify(a),
        Command::Assign(a) => commands::assign(a),
        Command::Outcomes(a) => commands::outcomes(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Oracle(a) => commands::oracle(a),
    }
}
