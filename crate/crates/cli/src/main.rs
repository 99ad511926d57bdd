//! `blockrr` command-line driver.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use serde::Serialize;

use blockrr::dataset::{
    generate_synthetic, measure_retention, ClassCountProfile, LabelDataset, RetentionReport,
};
use blockrr::mechanisms::regression::{build_rronbins_matrix, RegressionMechanismConfig};
use blockrr::partition::{derive_partition, run_pipeline, PipelineParams, RunManifest};
use blockrr::verifier::{
    check_label_dp, check_lp_conditions, check_monotonicity, check_unification,
    empirical_transition, EmpiricalReport, LpReport, MatrixDiff, MonotonicityReport,
    UnificationParams, VerificationReport,
};
use blockrr::{
    build_blockrr_matrix, build_rr_matrix, build_rrwithprior_matrix, estimate_prior, BlockMapping,
    Error, MechanismMatrix, PartitionConfig, PriorDistribution, RandomStream,
};

const EXIT_DP_VIOLATION: u8 = 2;
const EXIT_MALFORMED: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

/// Block randomized response for label differential privacy.
///
/// Utility is reported as label retention (the fraction of records whose
/// privatized label stays in B(y)); no model is trained.
#[derive(Parser, Debug)]
#[command(name = "blockrr", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Seed for every randomized step (required by randomized subcommands).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Privacy budget ε.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Weight-matrix temperature σ.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Number of high-prior labels in Δ.
    #[arg(long, global = true)]
    l: Option<usize>,
    /// Fraction of records used for the prior estimate.
    #[arg(long = "split-frac", global = true, default_value_t = blockrr::partition::DEFAULT_SPLIT_FRACTION)]
    split_frac: f64,
    /// Output file; `-` writes to stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Verbose diagnostics on stderr, including non-private intermediate
    /// values. Never use on real data.
    #[arg(long, global = true)]
    debug: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a private label prior from a CSV dataset.
    EstimatePrior {
        #[arg(long)]
        input: PathBuf,
        /// Number of classes; inferred from the largest label if absent.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Derive the majority/minority partition and Δ from a prior.
    Partition {
        #[arg(long)]
        prior: PathBuf,
    },
    /// Emit a transition matrix.
    Matrix {
        #[arg(long, value_enum)]
        mechanism: MatrixMechanism,
        /// Partition config (blockrr).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of classes (rr).
        #[arg(long)]
        k: Option<usize>,
        /// Prior file (rrwithprior).
        #[arg(long)]
        prior: Option<PathBuf>,
        #[command(flatten)]
        bins: BinArgs,
    },
    /// Run the full two-stage pipeline on a CSV dataset.
    Randomize {
        #[arg(long)]
        input: PathBuf,
        /// Number of classes; inferred from the largest label if absent.
        #[arg(long)]
        k: Option<usize>,
        /// Where to write the run manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Check a matrix file for ε-label-DP.
    Verify {
        #[arg(long)]
        matrix: PathBuf,
        /// Partition config for LP and monotonicity checks.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Synthetic data, pipeline, retention and sampling fidelity in one run.
    Simulate {
        /// `cifar10-1`, `cifar10-2` or comma-separated class counts.
        #[arg(long, default_value = "cifar10-2")]
        profile: String,
        /// Draws per row for the empirical transition matrix.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Compare BlockRR against the mechanisms it recovers.
    Compare {
        /// rr, rrwithprior, rronbins, rpwithprior or all.
        #[arg(long, default_value = "all")]
        mechanism: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Prior file for rrwithprior.
        #[arg(long)]
        prior: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MatrixMechanism {
    Blockrr,
    Rr,
    Rrwithprior,
    Rronbins,
}

#[derive(Args, Debug, Clone)]
struct BinArgs {
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Grid points over [lo, hi] that form the label domain.
    #[arg(long = "grid-points", default_value_t = 101)]
    grid_points: usize,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
    Malformed(Error),
    Violation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonpositiveEpsilon(_)
            | Error::NonpositiveSigma(_)
            | Error::NonpositiveN
            | Error::LOutOfRange { .. }
            | Error::InvalidSplitFraction(_)
            | Error::UnknownMechanism(_) => Failure::Usage(e.to_string()),
            e => Failure::Data(e),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn require<T: Copy>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| Failure::Usage(format!("--{flag} is required for this subcommand")))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(Error::Io(format!("{}: {e}", path.display()))))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> blockrr::Result<T> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&s)?)
}

fn sink(output: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    match output.as_deref() {
        None => Err(Failure::Usage("--output is required (use `-` for stdout)".into())),
        Some(p) if p == Path::new("-") => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Data(Error::Io(format!("{}: {e}", p.display())))),
    }
}

fn write_json<T: Serialize>(value: &T, mut w: Box<dyn Write>) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Data(e.into()))
}

/// Writes a report when `--output` is given; reports are optional.
fn maybe_write_json<T: Serialize>(value: &T, output: &Option<PathBuf>) -> CliResult {
    if output.is_some() {
        write_json(value, sink(output)?)?;
    }
    Ok(())
}

fn read_dataset(path: &Path, k: Option<usize>) -> CliResult<LabelDataset> {
    Ok(LabelDataset::read_csv(open(path)?, k)?)
}

fn estimate_prior_cmd(g: &Global, input: &Path, k: Option<usize>) -> CliResult {
    let seed = require(g.seed, "seed")?;
    let epsilon = require(g.epsilon, "epsilon")?;
    let d = read_dataset(input, k)?;
    let est = estimate_prior(&d.labels(), epsilon, d.k(), &mut RandomStream::new(seed).fork("prior"))?;
    debug!("raw class counts {:?}", est.histogram.raw_counts);
    if est.degenerate {
        log::warn!("prior estimate fell back to uniform");
    }
    write_json(&est.prior, sink(&g.output)?)
}

fn partition_cmd(g: &Global, prior: &Path) -> CliResult {
    let epsilon = require(g.epsilon, "epsilon")?;
    let sigma = require(g.sigma, "sigma")?;
    let l = require(g.l, "l")?;
    let prior: PriorDistribution = read_json(prior)?;
    let derived = derive_partition(&prior, epsilon, sigma, l, &BlockMapping::identity(prior.k()))?;
    if derived.degraded_to_rr {
        info!("no minority labels; the partition is plain randomized response");
    }
    write_json(&derived.config, sink(&g.output)?)
}

fn matrix_cmd(
    g: &Global,
    mechanism: MatrixMechanism,
    config: &Option<PathBuf>,
    k: Option<usize>,
    prior: &Option<PathBuf>,
    bins: &BinArgs,
) -> CliResult {
    let m = match mechanism {
        MatrixMechanism::Blockrr => {
            let path = config
                .as_ref()
                .ok_or_else(|| Failure::Usage("--config is required for blockrr".into()))?;
            let mut c: PartitionConfig = read_json(path)?;
            if let Some(eps) = g.epsilon {
                c = c.with_epsilon(eps)?;
            }
            build_blockrr_matrix(&c)?
        }
        MatrixMechanism::Rr => build_rr_matrix(require(k, "k")?, require(g.epsilon, "epsilon")?)?,
        MatrixMechanism::Rrwithprior => {
            let path = prior
                .as_ref()
                .ok_or_else(|| Failure::Usage("--prior is required for rrwithprior".into()))?;
            let p: PriorDistribution = read_json(path)?;
            build_rrwithprior_matrix(&p, require(g.epsilon, "epsilon")?)?
        }
        MatrixMechanism::Rronbins => {
            let eps = require(g.epsilon, "epsilon")?;
            // δ is unused by RRonBins; any positive width validates.
            let cfg = RegressionMechanismConfig::new(bins.lo, bins.hi, 1.0, eps, bins.bins, bins.grid_points)?;
            build_rronbins_matrix(&cfg)?
        }
    };
    write_json(&m, sink(&g.output)?)
}

#[derive(Serialize)]
struct CliManifest<'a> {
    command: &'static str,
    flags: BTreeMap<&'static str, String>,
    run: &'a RunManifest,
}

fn randomize_cmd(g: &Global, input: &Path, k: Option<usize>, manifest: &Option<PathBuf>) -> CliResult {
    let seed = require(g.seed, "seed")?;
    let params = PipelineParams {
        split_fraction: g.split_frac,
        ..PipelineParams::new(
            require(g.epsilon, "epsilon")?,
            require(g.sigma, "sigma")?,
            require(g.l, "l")?,
        )
    };
    if g.output.is_none() {
        return Err(Failure::Usage("--output is required (use `-` for stdout)".into()));
    }
    let d = read_dataset(input, k)?;
    let run = run_pipeline(&d, &params, seed)?;
    debug!("noisy prior {:?}", run.manifest.prior);
    info!(
        "privatized {} records; {} used for the prior",
        run.manifest.n_d2, run.manifest.n_d1
    );
    run.randomized.write_csv(sink(&g.output)?)?;
    if let Some(path) = manifest {
        let flags = BTreeMap::from([
            ("input", input.display().to_string()),
            ("seed", seed.to_string()),
            ("epsilon", params.epsilon.to_string()),
            ("sigma", params.sigma.to_string()),
            ("l", params.l.to_string()),
            ("split-frac", params.split_fraction.to_string()),
        ]);
        let m = CliManifest {
            command: "randomize",
            flags,
            run: &run.manifest,
        };
        write_json(&m, sink(&Some(path.clone()))?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyOutput {
    dp: VerificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    lp: Option<LpReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monotonicity: Option<MonotonicityReport>,
}

fn verify_cmd(g: &Global, matrix: &Path, config: &Option<PathBuf>) -> CliResult {
    let m: MechanismMatrix = read_json(matrix).map_err(Failure::Malformed)?;
    let config: Option<PartitionConfig> = match config {
        Some(p) => Some(read_json(p).map_err(Failure::Malformed)?),
        None => None,
    };
    let epsilon = match (g.epsilon, &config) {
        (Some(e), _) => e,
        (None, Some(c)) => c.epsilon(),
        (None, None) => return Err(Failure::Usage("--epsilon is required without --config".into())),
    };
    let dp = check_label_dp(&m, epsilon).map_err(|e| match e {
        Error::MalformedMatrix(_) => Failure::Malformed(e),
        e => e.into(),
    })?;
    let lp = config.as_ref().map(|c| check_lp_conditions(&m, c));
    let monotonicity = match &config {
        Some(c) => Some(check_monotonicity(c, epsilon)?),
        None => None,
    };
    eprintln!(
        "max column ratio {} against e^eps {}: {}",
        dp.max_ratio,
        dp.epsilon_bound,
        if dp.dp_pass { "pass" } else { "FAIL" }
    );
    if let Some(lp) = &lp {
        eprintln!(
            "LP feasible: {}, tight: {}",
            lp.feasible, lp.boundary_equalities_hold
        );
    }
    let pass = dp.dp_pass;
    maybe_write_json(&VerifyOutput { dp, lp, monotonicity }, &g.output)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Violation(format!("matrix is not {epsilon}-label-DP")))
    }
}

fn parse_profile(s: &str) -> CliResult<ClassCountProfile> {
    match s {
        "cifar10-1" => Ok(ClassCountProfile::cifar10_1()),
        "cifar10-2" => Ok(ClassCountProfile::cifar10_2()),
        _ => {
            let counts = s
                .split(',')
                .map(|c| c.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Failure::Usage(format!("bad --profile {s:?}: {e}")))?;
            ClassCountProfile::new(counts).map_err(|e| Failure::Usage(e.to_string()))
        }
    }
}

#[derive(Serialize)]
struct SimulateOutput {
    profile: Vec<u64>,
    manifest: RunManifest,
    matrix: MechanismMatrix,
    retention: RetentionReport,
    empirical: EmpiricalReport,
}

fn simulate_cmd(g: &Global, profile: &str, samples: usize) -> CliResult {
    let seed = require(g.seed, "seed")?;
    let params = PipelineParams {
        split_fraction: g.split_frac,
        ..PipelineParams::new(
            require(g.epsilon, "epsilon")?,
            require(g.sigma, "sigma")?,
            require(g.l, "l")?,
        )
    };
    let profile = parse_profile(profile)?;
    let root = RandomStream::new(seed);
    let d = generate_synthetic(&profile, &mut root.fork("synthetic"))?;
    let run = run_pipeline(&d, &params, seed)?;
    let matrix = run.outcome.matrix()?;
    let retention = measure_retention(
        &run.outcome.d2_dataset(),
        &run.randomized,
        &matrix,
        run.outcome.config.partition.mapping(),
    )?;
    let empirical = empirical_transition(&matrix, samples, &root.fork("empirical"))?;
    eprintln!(
        "|S2| = {}, l = {}, overall retention {:.4}, max row TV {:.4}",
        run.manifest.partition.s2.len(),
        run.manifest.l_effective,
        retention.overall_retention,
        empirical.max_tv
    );
    let out = SimulateOutput {
        profile: profile.counts().to_vec(),
        manifest: run.manifest,
        matrix,
        retention,
        empirical,
    };
    maybe_write_json(&out, &g.output)
}

fn compare_cmd(g: &Global, mechanism: &str, k: usize, prior: &Option<PathBuf>) -> CliResult {
    let epsilon = require(g.epsilon, "epsilon")?;
    let mut params = UnificationParams::new(k, epsilon);
    if let Some(p) = prior {
        let p: PriorDistribution = read_json(p)?;
        params.k = p.k();
        params.prior = Some(p);
    }
    let names: Vec<&str> = if mechanism == "all" {
        vec!["rr", "rrwithprior", "rronbins", "rpwithprior"]
    } else {
        vec![mechanism]
    };
    let mut diffs: Vec<MatrixDiff> = Vec::new();
    for name in names {
        diffs.extend(check_unification(name, &params)?);
    }
    for d in &diffs {
        eprintln!(
            "{:<12} {:<22} {:.3e} {}",
            d.mechanism,
            d.check,
            d.value,
            if d.pass { "pass" } else { "FAIL" }
        );
    }
    let pass = diffs.iter().all(|d| d.pass);
    maybe_write_json(&diffs, &g.output)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Violation("a recovered mechanism differs from its baseline".into()))
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::EstimatePrior { input, k } => estimate_prior_cmd(g, input, *k),
        Command::Partition { prior } => partition_cmd(g, prior),
        Command::Matrix {
            mechanism,
            config,
            k,
            prior,
            bins,
        } => matrix_cmd(g, *mechanism, config, *k, prior, bins),
        Command::Randomize { input, k, manifest } => randomize_cmd(g, input, *k, manifest),
        Command::Verify { matrix, config } => verify_cmd(g, matrix, config),
        Command::Simulate { profile, samples } => simulate_cmd(g, profile, *samples),
        Command::Compare { mechanism, k, prior } => compare_cmd(g, mechanism, *k, prior),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.global.debug {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Malformed(e)) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(EXIT_MALFORMED)
        }
        Err(Failure::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(EXIT_DP_VIOLATION)
        }
    }
}
