//! Command-line front end: Monte Carlo simulation, asymptotic theory
//! evaluation, model fitting and prediction, and self-check oracles.
//!
//! Every subcommand is deterministic given its flags; randomized commands
//! take --seed and default to a fixed constant, never the clock. Exit codes
//! are stable for scripting: 0 success, 2 usage or validation problems,
//! 3 numerical failures (singular fits, non-finite intermediates).

mod tabular;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mdqda::dnc::default_p0;
use mdqda::la::SpdMatrix;
use mdqda::qda::{correction_constants, fit, ClassLabel, FittedQda, Noise, Variant};
use mdqda::simgen::{
    clt_check, make_case, rmt_diag_oracle, run_monte_carlo, write_rates_csv, CaseId, MeanMode,
    Rule, SimulationConfig,
};
use mdqda::theory::{
    classify_regime, drift_terms, moment_set, psi_dnc_samples, psi_generalized, psi_optimal,
    psi_sample, rate_limit, separation_diagnostics, RateLimit, Regime, RuleKind,
    DEFAULT_THRESHOLDS,
};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

/// Default master seed. Fixed (never wall-clock) so that runs reproduce
/// without any flags.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "mdqda",
    version,
    about = "Quadratic discriminant analysis when the dimension is a fixed fraction of the sample size"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo misclassification rates for the built-in scenarios
    Simulate(SimulateArgs),
    /// Asymptotic report: moments, drifts, spreads, rate limits, regime
    Theory(TheoryArgs),
    /// Fit a classifier from two training CSVs and write it as JSON
    Fit(FitArgs),
    /// Classify observations with a fitted model
    Predict(PredictArgs),
    /// Simulation self-checks against closed-form targets
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    /// Standard normal components
    Normal,
    /// Standardized t with 5 degrees of freedom (unit variance, heavy tails)
    T5,
}

impl NoiseArg {
    fn to_noise(self) -> Noise {
        match self {
            Self::Normal => Noise::StandardNormal,
            Self::T5 => Noise::standardized_t(5).expect("df = 5 is valid"),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::T5 => "t5",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MeanModeArg {
    /// Both class means at zero
    Equal,
    /// Class-2 mean redrawn uniformly from (-0.6, 0.6) each replication
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    /// Plug-in rule with classical constants
    Sample,
    /// Corrected rule that adapts to the dimension ratio
    Generalized,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario number
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=7))]
    case: u32,
    /// Class-1 training size n1
    #[arg(long)]
    n: usize,
    /// Class-2 training size (defaults to --n)
    #[arg(long)]
    n2: Option<usize>,
    /// Dimension ratio; p = floor(ratio * n) unless --p is given
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Dimension override
    #[arg(long)]
    p: Option<usize>,
    /// Monte Carlo replications
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Master seed; replication r derives its own independent streams
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Comma-separated rules: optimal, sample, generalized, subgroup,
    /// componentwise, split-weighted, split-majority
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "optimal,sample,generalized"
    )]
    rules: Vec<String>,
    /// Component law of the training and test draws
    #[arg(long, value_enum, default_value_t = NoiseArg::T5)]
    noise: NoiseArg,
    /// How the class-2 mean is chosen
    #[arg(long, value_enum, default_value_t = MeanModeArg::Equal)]
    mean_mode: MeanModeArg,
    /// Screened dimension for subgroup/componentwise: "auto" = 3*floor(sqrt(p))
    #[arg(long, default_value = "auto")]
    p0: String,
    /// Group count for the sample-splitting rules
    #[arg(long = "H", default_value_t = 5)]
    h: usize,
    /// Worker threads (0 = library default); results do not depend on it
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Scenario number; alternatively give --sigma1/--sigma2 files
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=7))]
    case: Option<u32>,
    /// Class-1 sample size n1 entering the dimension ratios
    #[arg(long)]
    n: usize,
    /// Class-2 sample size (defaults to --n)
    #[arg(long)]
    n2: Option<usize>,
    /// Dimension ratio; p = floor(ratio * n) unless --p is given
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Dimension override (implied by --sigma1 for custom populations)
    #[arg(long)]
    p: Option<usize>,
    /// Component law fixing the fourth moment in the spread formulas
    #[arg(long, value_enum, default_value_t = NoiseArg::T5)]
    noise: NoiseArg,
    /// Spectral deviation threshold for the separation diagnostics
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Group count for the sample-splitting spread
    #[arg(long = "H", default_value_t = 5)]
    h: usize,
    /// Seed realizing the randomized scenarios (3, 4, 7)
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Custom class-1 mean (CSV vector; zero when omitted)
    #[arg(long)]
    mu1: Option<PathBuf>,
    /// Custom class-2 mean (CSV vector; zero when omitted)
    #[arg(long)]
    mu2: Option<PathBuf>,
    /// Custom class-1 covariance (CSV matrix)
    #[arg(long)]
    sigma1: Option<PathBuf>,
    /// Custom class-2 covariance (CSV matrix)
    #[arg(long)]
    sigma2: Option<PathBuf>,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Class-1 training CSV, one row per observation
    class1: PathBuf,
    /// Class-2 training CSV, one row per observation
    class2: PathBuf,
    /// Which rule's constants to bake into the model
    #[arg(long, value_enum, default_value_t = RuleArg::Generalized)]
    rule: RuleArg,
    /// Write the model JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON produced by `fit`
    model: PathBuf,
    /// Observations CSV, one row per observation
    data: PathBuf,
    /// Write the label CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(subcommand)]
    which: OracleCommand,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Mean squared diagonal of the inverse sample covariance against its
    /// closed-form limit 1/(1-p/n)^2
    Rmt(RmtArgs),
    /// Centered quadratic statistic against its limiting mean and variance
    Clt(CltArgs),
}

#[derive(Args)]
struct RmtArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CltArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = NoiseArg::Normal)]
    noise: NoiseArg,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Theory(a) => cmd_theory(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Oracle(a) => match a.which {
            OracleCommand::Rmt(a) => cmd_oracle_rmt(a),
            OracleCommand::Clt(a) => cmd_oracle_clt(a),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 3 for numerical failures, 2 for everything else (usage, validation, IO).
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<mdqda::Error>())
        .any(is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn is_numerical(e: &mdqda::Error) -> bool {
    use mdqda::Error::*;
    match e {
        AtReplication { source, .. } => is_numerical(source),
        NotPositiveDefinite { .. }
        | NotPsd { .. }
        | ClassCovarianceSingular { .. }
        | NegativeVariance { .. }
        | NonFinite => true,
        _ => false,
    }
}

/// p from the override or from floor(ratio * n).
fn resolve_p(p: Option<usize>, ratio: f64, n: usize) -> Result<usize> {
    if let Some(p) = p {
        return Ok(p);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        bail!("--ratio must lie strictly between 0 and 1, got {ratio}");
    }
    let p = (ratio * n as f64).floor() as usize;
    if p == 0 {
        bail!("floor({ratio} * {n}) = 0; give a larger --n or --p");
    }
    Ok(p)
}

fn resolve_p0(value: &str, p: usize) -> Result<usize> {
    if value == "auto" {
        return Ok(default_p0(p));
    }
    value
        .parse::<usize>()
        .with_context(|| format!("--p0 must be \"auto\" or a positive integer, got {value:?}"))
}

fn parse_rules(names: &[String], p0: usize, h: usize) -> Result<Vec<Rule>> {
    let mut rules = Vec::with_capacity(names.len());
    for name in names {
        let rule = match name.replace('_', "-").as_str() {
            "optimal" => Rule::Optimal,
            "sample" => Rule::Sample,
            "generalized" => Rule::Generalized,
            "subgroup" => Rule::Subgroup { p0 },
            "componentwise" => Rule::Componentwise { p0 },
            "split-weighted" => Rule::SplitWeighted { h },
            "split-majority" => Rule::SplitMajority { h },
            other => bail!(
                "unknown rule {other:?}; expected optimal, sample, generalized, \
                 subgroup, componentwise, split-weighted or split-majority"
            ),
        };
        rules.push(rule);
    }
    Ok(rules)
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let n1 = a.n;
    let n2 = a.n2.unwrap_or(n1);
    let p = resolve_p(a.p, a.ratio, n1)?;
    let p0 = resolve_p0(&a.p0, p)?;
    let rules = parse_rules(&a.rules, p0, a.h)?;
    if rules.is_empty() {
        bail!("--rules must name at least one rule");
    }
    let mean_mode = match a.mean_mode {
        MeanModeArg::Equal => MeanMode::Equal,
        MeanModeArg::Uniform => MeanMode::Uniform,
    };
    let case = make_case(CaseId::from_number(a.case)?, p, a.seed)?.with_mean_mode(mean_mode);
    let cfg = SimulationConfig {
        case,
        n1,
        n2,
        reps: a.reps,
        seed: a.seed,
        rules,
        noise: a.noise.to_noise(),
    };
    let estimates = if a.threads == 0 {
        run_monte_carlo(&cfg)?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.threads)
            .build()
            .context("cannot build the thread pool")?
            .install(|| run_monte_carlo(&cfg))?
    };
    match &a.out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("cannot write {}", path.display()))?;
            write_rates_csv(&mut io::BufWriter::new(file), &cfg, &estimates)?;
        }
        None => write_rates_csv(&mut io::stdout().lock(), &cfg, &estimates)?,
    }
    Ok(())
}

fn limit_json(l: &RateLimit) -> serde_json::Value {
    json!({
        "t": l.t,
        "tt": l.tt,
        "psi": l.psi,
        "psit": l.psit,
        "rate": l.rate,
        "degenerate": l.degenerate,
    })
}

fn cmd_theory(a: TheoryArgs) -> Result<()> {
    let custom = a.mu1.is_some() || a.mu2.is_some() || a.sigma1.is_some() || a.sigma2.is_some();
    let (label, mu1, mu2, sigma1, sigma2) = if custom {
        if a.case.is_some() {
            bail!("--case cannot be combined with custom population files");
        }
        let (Some(s1), Some(s2)) = (&a.sigma1, &a.sigma2) else {
            bail!("custom populations need both --sigma1 and --sigma2");
        };
        let sigma1 = SpdMatrix::new(tabular::read_matrix(s1)?)
            .with_context(|| format!("{}: not a covariance matrix", s1.display()))?;
        let sigma2 = SpdMatrix::new(tabular::read_matrix(s2)?)
            .with_context(|| format!("{}: not a covariance matrix", s2.display()))?;
        let p = sigma1.dim();
        let mu1 = match &a.mu1 {
            Some(path) => tabular::read_vector(path)?,
            None => DVector::zeros(p),
        };
        let mu2 = match &a.mu2 {
            Some(path) => tabular::read_vector(path)?,
            None => DVector::zeros(p),
        };
        ("custom".to_string(), mu1, mu2, sigma1, sigma2)
    } else {
        let Some(number) = a.case else {
            bail!("give --case or custom --sigma1/--sigma2 files");
        };
        let p = resolve_p(a.p, a.ratio, a.n)?;
        let case = make_case(CaseId::from_number(number)?, p, a.seed)?;
        (
            case.id().label().to_string(),
            case.mu1().clone(),
            case.mu2().clone(),
            case.sigma1().clone(),
            case.sigma2().clone(),
        )
    };

    let p = sigma1.dim();
    let n1 = a.n;
    let n2 = a.n2.unwrap_or(n1);
    let noise = a.noise.to_noise();
    let m = moment_set(&sigma1, &sigma2, p, n1, n2, noise.m4())?;
    let d = drift_terms(&mu1, &mu2, &sigma1, &sigma2, p)?;
    let (psi2, psit2) = psi_generalized(&m)?;
    let (psi02, psit02) = psi_optimal(&m)?;
    let constants = correction_constants(p, n1, n2)?;
    let s = psi_sample(&m, &constants, &mu1, &mu2, &sigma1, &sigma2, p)?;

    let generalized = rate_limit(RuleKind::Generalized, d.t, d.tt, psi2, psit2)?;
    let optimal = rate_limit(RuleKind::Optimal, d.t, d.tt, psi02, psit02)?;
    let sample = rate_limit(RuleKind::Sample, s.t, s.tt, s.psi2, s.psit2)?;

    // Splitting into h groups multiplies each dimension ratio by h; at or
    // beyond 1 a group's covariance fit is singular and the spread diverges,
    // so the block reports infeasibility instead of a number.
    let (split_spread, split_limit) = match psi_dnc_samples(&m, a.h) {
        Ok((psid2, psidt2)) => {
            let l = rate_limit(RuleKind::DncSamples(a.h), d.t, d.tt, psid2, psidt2)?;
            (
                json!({
                    "h": a.h, "feasible": true, "psi2": psid2, "psit2": psidt2,
                    "source": "weighted splitting into h sample groups; each group pays \
                               h times the dimension ratio and averaging recovers only \
                               1/h of it",
                }),
                limit_json(&l),
            )
        }
        Err(mdqda::Error::GroupsTooSmall { c1h, c2h }) => (
            json!({
                "h": a.h, "feasible": false, "c1_h": c1h, "c2_h": c2h,
                "source": "a group's dimension ratio reaches 1, its covariance fit is \
                           singular and the spread diverges",
            }),
            serde_json::Value::Null,
        ),
        Err(e) => return Err(e.into()),
    };

    let diag = separation_diagnostics(&mu1, &mu2, &sigma1, &sigma2, p, a.eps)?;
    let regime = match classify_regime(&diag, DEFAULT_THRESHOLDS) {
        Regime::EasySeparable => "easy_separable",
        Regime::EasyDegenerate => "easy_degenerate",
        Regime::Hard => "hard",
    };

    let report = json!({
        "inputs": {
            "scenario": label,
            "p": p,
            "n1": n1,
            "n2": n2,
            "noise": a.noise.label(),
            "m4": noise.m4(),
            "eps": a.eps,
            "h": a.h,
            "seed": a.seed,
        },
        "moments": {
            "m1": m.m1, "m2": m.m2, "m3": m.m3, "m4": m.m4, "m5": m.m5, "m6": m.m6,
            "c1": m.c1, "c2": m.c2, "kurtosis": m.kurtosis,
            "source": "trace moments of the whitened covariance pair and its inverse, \
                       at the actual dimension ratios",
        },
        "drift": {
            "t": d.t,
            "tt": d.tt,
            "source": "location of the centered quadratic statistic under class 1 (t) \
                       and class 2 (tt), per sqrt(p)",
        },
        "spreads": {
            "generalized": {
                "psi2": psi2, "psit2": psit2,
                "source": "statistic variance per class including the dimension-ratio \
                           inflation paid by estimated covariances",
            },
            "optimal": {
                "psi2": psi02, "psit2": psit02,
                "source": "statistic variance with true parameters; the ratio terms vanish",
            },
            "sample": {
                "t": s.t, "tt": s.tt, "psi2": s.psi2, "psit2": s.psit2,
                "source": "plug-in rule with classical constants; the missing corrections \
                           shift the drift as well as the spread",
            },
            "split_samples": split_spread,
        },
        "rate_limits": {
            "optimal": limit_json(&optimal),
            "generalized": limit_json(&generalized),
            "sample": limit_json(&sample),
            "split_samples": split_limit,
            "source": "normal mixture of the two conditional errors, \
                       1 - (Phi(t/psi) + Phi(tt/psit))/2",
        },
        "separation": {
            "zeta1": diag.zeta1,
            "zeta2": diag.zeta2,
            "zeta_eps": diag.zeta_eps,
            "s": diag.s,
            "s_eps": diag.s_eps,
            "eps": diag.eps,
            "source": "mean gap and counts of eigenvalues of Sigma1 Sigma2^{-1} away \
                       from 1, on the sqrt(p) scale that separates the regimes",
        },
        "regime": regime,
    });
    write_output(
        a.out.as_ref(),
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let train1 = tabular::read_observations(&a.class1)?;
    let train2 = tabular::read_observations(&a.class2)?;
    let variant = match a.rule {
        RuleArg::Sample => Variant::Sample,
        RuleArg::Generalized => Variant::Generalized,
    };
    let model = fit(&train1, &train2, variant)?;
    write_output(a.out.as_ref(), &format!("{}\n", model.to_json()))
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let text = fs::read_to_string(&a.model)
        .with_context(|| format!("cannot read {}", a.model.display()))?;
    let model = FittedQda::from_json(&text)?;
    let data = tabular::read_observations(&a.data)?;
    let mut out = String::from("row_index,label,score\n");
    for j in 0..data.count() {
        let z = data.column(j);
        let score = model.discriminant(&z)?;
        let label = match model.classify(&z)? {
            ClassLabel::Class1 => 1,
            ClassLabel::Class2 => 2,
        };
        out.push_str(&format!("{j},{label},{score}\n"));
    }
    write_output(a.out.as_ref(), &out)
}

fn cmd_oracle_rmt(a: RmtArgs) -> Result<()> {
    let v = DMatrix::<f64>::identity(a.p, a.p);
    let estimate = rmt_diag_oracle(a.p, a.n, &v, a.reps, a.seed)?;
    let c = a.p as f64 / a.n as f64;
    let target = 1.0 / ((1.0 - c) * (1.0 - c));
    let report = json!({
        "oracle": "rmt",
        "p": a.p,
        "n": a.n,
        "reps": a.reps,
        "seed": a.seed,
        "target": target,
        "estimate": estimate,
        "relative_error": (estimate - target).abs() / target,
    });
    write_output(
        a.out.as_ref(),
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )
}

fn cmd_oracle_clt(a: CltArgs) -> Result<()> {
    let noise = a.noise.to_noise();
    let summary = clt_check(a.p, a.n, noise, a.reps, a.seed)?;
    let c = a.p as f64 / a.n as f64;
    let s0 = 1.0 / (1.0 - c);
    let target_variance = (noise.m4() - 3.0) * s0 * s0 + 2.0 * s0 * s0 * s0;
    let report = json!({
        "oracle": "clt",
        "p": a.p,
        "n": a.n,
        "noise": a.noise.label(),
        "reps": a.reps,
        "seed": a.seed,
        "target_variance": target_variance,
        "variance": summary.variance,
        "relative_error": (summary.variance - target_variance).abs() / target_variance,
        "mean": summary.mean,
        "mean_se": (summary.variance / summary.reps as f64).sqrt(),
        "skewness": summary.skewness,
    });
    write_output(
        a.out.as_ref(),
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )
}
