use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "robust-wald", version, about = "Minimum DPD estimation and robust Wald-type tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the MDPDE for each β.
    Fit(FitArgs),
    /// Wald-type test on a dataset, or its rejection rate over simulated replicates.
    Test(TestArgs),
    /// Contiguous power table over a (d, β) grid.
    PowerTable(PowerTableArgs),
    /// Influence curves of the estimator, the test statistic and the power.
    Influence(InfluenceArgs),
    /// Chi-square inflation factor under point contamination.
    Csif(CsifArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// normal-loc, normal-loc-scale, weibull-shape, bivariate-normal or linreg.
    #[arg(long)]
    pub model: String,
    /// Known σ of the normal-loc model.
    #[arg(long)]
    pub sigma_known: Option<f64>,
    /// Design matrix CSV for linreg.
    #[arg(long)]
    pub design: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NullArgs {
    /// Null point θ₀, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta0: Option<Vec<f64>>,
    /// Fix a parameter by name, e.g. `rho=0`. Repeatable.
    #[arg(long)]
    pub fix: Vec<String>,
    /// Linear constraint `l₁,…,l_p=c` meaning lᵀθ = c. Repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub constraint: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Round reported numbers to this many decimals.
    #[arg(long)]
    pub round: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Observations CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub beta: Vec<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub null: NullArgs,
    /// Observations CSV with a header row.
    #[arg(long, required_unless_present = "replicates", conflicts_with = "replicates")]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of simulated datasets.
    #[arg(long, requires_all = ["seed", "truth"])]
    pub replicates: Option<usize>,
    /// Observations per simulated dataset; linreg uses the design rows.
    #[arg(long, default_value_t = 100)]
    pub sample_size: usize,
    /// Parameter the replicates are drawn from.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub truth: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of each simulated sample replaced by `--at`.
    #[arg(long, requires = "at")]
    pub contamination: Option<f64>,
    /// Contamination point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub at: Option<Vec<f64>>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    WeibullShape,
    Correlation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    ClosedForm,
    Sandwich,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PowerTableArgs {
    #[arg(long, value_enum)]
    pub example: Example,
    #[arg(long, value_enum, default_value = "closed-form")]
    pub route: Route,
    #[arg(long = "d", value_delimiter = ',', default_value = "0,2,3,4,5,10", allow_hyphen_values = true)]
    pub ds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.1,0.3,0.5,0.7,1")]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InfluenceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub null: NullArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.5,1")]
    pub beta: Vec<f64>,
    /// Alternative direction d; adds the power influence column.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub shift: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Grid `lo,hi,n` for the response; the bivariate model uses it on both axes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    /// Design row whose response is contaminated (linreg).
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CsifArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub null: NullArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.5,1")]
    pub beta: Vec<f64>,
    /// Contamination proportion ε.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Contamination point y.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub at: Vec<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}
