//! Command-line driver for the private recommendation toolkit.
//!
//! Four subcommands cover the experimental surface:
//!
//! * `run` sweeps a privacy-budget grid for one mechanism/predictor pair
//!   and emits one CSV row per (epsilon, fold).
//! * `noise-dist` tabulates the theoretical perturbation distribution of
//!   the bounded mechanism next to Monte Carlo histograms of the bounded
//!   and clamped samplers.
//! * `audit` replays the empirical privacy check against a mechanism and
//!   prints the measured budget.
//! * `comm` prints the per-user traffic of one training run under the
//!   compared upload protocols.
//!
//! All randomness flows from `--seed`, so an invocation repeated with the
//! same arguments writes byte-identical output. Wall-clock timings go to
//! stderr, keeping stdout and output files deterministic.
//!
//! Exit codes: 0 success, 1 configuration or privacy error (including a
//! failed audit), 2 data or I/O error, 3 numerical failure.

pub mod experiment;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use privrec_core::data::{DatasetName, DatasetSpec};
use privrec_core::mechanism::audit::{ldp_audit, AuditConfig, AuditReport};
use privrec_core::mechanism::{
    empirical_noise_histogram, noise_distribution, BlpMechanism, Mechanism, MechanismKind,
    RatingDomain,
};
use privrec_core::pipeline::{compare_communication, CommScenario};
use privrec_core::{Error, Result};

use experiment::{run_experiment, RawConfig};

#[derive(Debug, Parser)]
#[command(name = "privrec", version, about = "Private recommendation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a cross-validated experiment grid and emit a CSV report.
    Run(RunArgs),
    /// Tabulate theoretical vs. sampled perturbation distributions.
    NoiseDist(NoiseDistArgs),
    /// Measure the privacy budget of a mechanism from its samples.
    /// Exits 1 when the measured budget exceeds the claim.
    Audit(AuditArgs),
    /// Compare per-user upload/download traffic across protocols.
    Comm(CommArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat key=value manifest; flags given here override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Dataset name: movielens, jester, libimseti, synthetic.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Ratings file for the on-disk datasets.
    #[arg(long, value_name = "FILE")]
    pub data_path: Option<PathBuf>,
    /// Perturbation mechanism: blp, laplace-clamp, none.
    #[arg(long)]
    pub mechanism: Option<String>,
    /// Predictor: mog-mf, mf, svd.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Privacy budget; repeat the flag to sweep a grid.
    #[arg(long)]
    pub epsilon: Vec<f64>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Mixture components fitted to the perturbed residuals.
    #[arg(long)]
    pub k_components: Option<usize>,
    /// Latent dimension of the factor models.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of rating entries kept before splitting, in (0, 1].
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Clamp predictions to the rating domain before scoring.
    #[arg(long, value_name = "BOOL")]
    pub clip_predictions: Option<bool>,
    /// Relevance cutoff for precision/recall; defaults from the domain.
    #[arg(long)]
    pub relevance_threshold: Option<f64>,
    /// Ranking depth for the relevance metrics.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Report file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn into_raw(self) -> RawConfig {
        RawConfig {
            dataset: self.dataset,
            data_path: self.data_path,
            mechanism: self.mechanism,
            predictor: self.predictor,
            epsilons: if self.epsilon.is_empty() { None } else { Some(self.epsilon) },
            folds: self.folds,
            components: self.k_components,
            latent_dim: self.latent_dim,
            seed: self.seed,
            subsample: self.subsample,
            clip_predictions: self.clip_predictions,
            relevance_threshold: self.relevance_threshold,
            top_k: self.top_k,
            out: self.out,
        }
    }
}

#[derive(Debug, Args)]
pub struct NoiseDistArgs {
    /// Dataset supplying the rank grid and rating marginal.
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    /// Ratings file for the on-disk datasets.
    #[arg(long, value_name = "FILE")]
    pub data_path: Option<PathBuf>,
    /// Privacy budget for both mechanisms.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Table file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Mechanism under audit: blp, laplace-clamp, laplace, none.
    #[arg(long, default_value = "blp")]
    pub mechanism: String,
    /// Claimed privacy budget.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Lower edge of the rating domain.
    #[arg(long, default_value_t = 0.5)]
    pub lo: f64,
    /// Upper edge of the rating domain.
    #[arg(long, default_value_t = 5.0)]
    pub hi: f64,
    /// Spacing of the audited input grid.
    #[arg(long, default_value_t = 0.5)]
    pub rank_step: f64,
    /// Samples drawn per audited input.
    #[arg(long, default_value_t = 200_000)]
    pub samples_per_input: u64,
    /// Multiplies the calibrated noise scale. Values below 1 break the
    /// guarantee on purpose so the audit can be seen to catch it.
    #[arg(long, default_value_t = 1.0)]
    pub scale_factor: f64,
    /// Tolerated excess of the measured budget over the claim.
    #[arg(long, default_value_t = 0.05)]
    pub slack: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CommArgs {
    /// Item-catalog size. Defaults describe the Movielens-100k shape.
    #[arg(long, default_value_t = 1682)]
    pub items: u64,
    #[arg(long, default_value_t = 20)]
    pub latent_dim: u64,
    /// Ratings uploaded by the average user.
    #[arg(long, default_value_t = 106)]
    pub ratings_per_user: u64,
    /// Training iterations assumed for the iterative protocols.
    #[arg(long, default_value_t = 100)]
    pub iterations: u64,
    /// Table file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the selected subcommand, returning the process
/// exit code. Errors print to stderr.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version arrive here too; they are not failures.
            let failed = err.use_stderr();
            let _ = err.print();
            return if failed { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::NoiseDist(args) => cmd_noise_dist(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Comm(args) => cmd_comm(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let mut layered = RawConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        layered = RawConfig::from_manifest(&text)?;
    }
    let config = layered.overlay(args.into_raw()).resolve()?;
    let outcome = run_experiment(&config)?;
    for t in &outcome.timings {
        eprintln!("epsilon {}: {:.2} s wall", t.epsilon, t.seconds);
    }
    emit(config.out.as_deref(), &outcome.csv)?;
    Ok(0)
}

fn cmd_noise_dist(args: NoiseDistArgs) -> Result<i32> {
    let name = DatasetName::parse(&args.dataset)?;
    let spec = DatasetSpec::named(name, args.data_path)?;
    let matrix = spec.load()?;
    let ranks = spec.domain.ranks(spec.rank_step)?;
    let marginal = matrix.rating_marginal(&ranks)?;
    let blp = BlpMechanism::new(spec.domain, args.epsilon)?;
    let table = noise_distribution(&blp, &ranks, &marginal)?;
    let bounded = Mechanism::new(MechanismKind::Blp, spec.domain, args.epsilon)?;
    let clamped = Mechanism::new(MechanismKind::LaplaceClamp, spec.domain, args.epsilon)?;
    // The same seed drives both histograms, so they see identical rating
    // draws and differ only in the perturbation.
    let blp_emp = empirical_noise_histogram(&table, &bounded, args.samples, args.seed)?;
    let clamp_emp = empirical_noise_histogram(&table, &clamped, args.samples, args.seed)?;

    let mut csv = String::from(
        "interval_lo,interval_hi,blp_theoretical,blp_empirical,laplace_clamp_empirical\n",
    );
    for (i, (lo, hi)) in table.intervals.iter().enumerate() {
        writeln!(csv, "{lo},{hi},{},{},{}", table.probs[i], blp_emp[i], clamp_emp[i])
            .expect("formatting into a String does not fail");
    }
    emit(args.out.as_deref(), &csv)?;
    Ok(0)
}

fn cmd_audit(args: AuditArgs) -> Result<i32> {
    let kind = MechanismKind::parse(&args.mechanism)?;
    let domain = RatingDomain::new(args.lo, args.hi)?;
    let mech = Mechanism::with_scale_factor(kind, domain, args.epsilon, args.scale_factor)?;
    let mut cfg = AuditConfig::new(args.epsilon, args.rank_step);
    cfg.samples_per_input = args.samples_per_input;
    cfg.slack = args.slack;
    let report = ldp_audit(&mech, &cfg, args.seed)?;
    print!("{}", render_audit(&report));
    Ok(if report.pass { 0 } else { 1 })
}

fn render_audit(r: &AuditReport) -> String {
    let mut out = String::new();
    let mut line = |label: &str, value: String| {
        let _ = writeln!(out, "{label:<18} {value}");
    };
    line("mechanism:", r.mechanism.as_str().to_string());
    line("claimed budget:", format!("{}", r.epsilon_claimed));
    line("measured budget:", format!("{:.4}", r.measured_budget));
    line("upper bound:", format!("{:.4} (claim + slack {})", r.upper_bound, r.slack));
    line("verdict:", if r.pass { "PASS".into() } else { "FAIL".into() });
    line("worst input pair:", format!("({}, {})", r.worst_pair.0, r.worst_pair.1));
    line("worst bin:", format!("[{}, {}]", r.worst_bin.0, r.worst_bin.1));
    line("boundary mass:", format!("{:.4}", r.boundary_mass));
    line("out of range:", format!("{:.4}", r.out_of_range));
    line(
        "sampling:",
        format!(
            "{} inputs, {} samples each, {} bins",
            r.inputs.len(),
            r.samples_per_input,
            r.bins
        ),
    );
    out
}

fn cmd_comm(args: CommArgs) -> Result<i32> {
    let rows = compare_communication(&CommScenario {
        items: args.items,
        latent_dim: args.latent_dim,
        ratings_per_user: args.ratings_per_user,
        iterations: args.iterations,
    });
    let mut csv = String::from("scheme,upload_bytes,download_bytes\n");
    for r in rows {
        writeln!(csv, "{},{},{}", r.scheme, r.upload_bytes, r.download_bytes)
            .expect("formatting into a String does not fail");
    }
    emit(args.out.as_deref(), &csv)?;
    Ok(0)
}

fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(Error::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(argv: &[&str]) -> Cli {
        Cli::try_parse_from(argv).expect("argv parses")
    }

    #[test]
    fn run_flags_collect_repeated_epsilons() {
        let cli = parse(&[
            "privrec", "run", "--dataset", "synthetic", "--epsilon", "0.5", "--epsilon", "2",
            "--folds", "3",
        ]);
        let Command::Run(args) = cli.command else { panic!("expected run") };
        let raw = args.into_raw();
        assert_eq!(raw.epsilons, Some(vec![0.5, 2.0]));
        assert_eq!(raw.folds, Some(3));
        assert_eq!(raw.dataset.as_deref(), Some("synthetic"));
    }

    #[test]
    fn absent_epsilon_flag_leaves_layer_unset() {
        let cli = parse(&["privrec", "run", "--dataset", "synthetic"]);
        let Command::Run(args) = cli.command else { panic!("expected run") };
        assert_eq!(args.into_raw().epsilons, None);
    }

    #[test]
    fn audit_defaults_describe_movielens() {
        let cli = parse(&["privrec", "audit"]);
        let Command::Audit(args) = cli.command else { panic!("expected audit") };
        assert_eq!(args.mechanism, "blp");
        assert_eq!(args.lo, 0.5);
        assert_eq!(args.hi, 5.0);
        assert_eq!(args.rank_step, 0.5);
        assert_eq!(args.scale_factor, 1.0);
    }

    #[test]
    fn unknown_flag_is_a_usage_failure() {
        let code = execute(["privrec", "run", "--no-such-flag"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn help_exits_zero() {
        let code = execute(["privrec", "--help"]);
        assert_eq!(code, 0);
    }

    #[test]
    fn comm_table_has_three_schemes() {
        let rows = compare_communication(&CommScenario {
            items: 1682,
            latent_dim: 20,
            ratings_per_user: 106,
            iterations: 100,
        });
        assert_eq!(rows.len(), 3);
    }
}
