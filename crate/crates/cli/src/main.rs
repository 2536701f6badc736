//! `abelab`: forecast scoring, pooling, expert simulation, weight learning,
//! substitutes checking, robust aggregation, contracts, and agreement
//! protocols over finite information structures.
//!
//! Every subcommand writes a single JSON document to stdout (or `--out`).
//! Outcome and expert indices are 0-based. Randomized subcommands require
//! an explicit `--seed`; identical configuration and seed give
//! byte-identical output regardless of `--threads`.
//!
//! Exit codes: 0 success, 2 argument error, 3 numeric non-convergence,
//! 4 domain error.

mod rules;
mod tables;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use abelab_core::agreement::{run_protocol, Protocol};
use abelab_core::contracts::{
    contract_payout, find_arbitrage, find_expected_arbitrage, redistribution_agreement,
    ContractFunction,
};
use abelab_core::incentivization::{
    index_report, relative_index, simulate_expert, ExpertMode, ExpertSimConfig,
};
use abelab_core::infostruct::{
    check_projective_substitutes, check_rectangle_substitutes, check_weak_substitutes,
    InformationStructure, PifSpec,
};
use abelab_core::learning::{
    example61_adversary, ogd_run, omd_run, CalibratedSampler, FixedStream, LearnerRun, OgdConfig,
    OmdConfig, Round, RoundSource,
};
use abelab_core::pooling::{
    generalized_pool, linear_pool, log_pool, qa_pool, GeneralizedKind, WeightedForecastSet,
};
use abelab_core::robust::{
    approximation_ratio_exact, approximation_ratio_mc, recommended_d, AggregationStrategy,
};
use abelab_core::rng::root_rng;
use abelab_core::scoring::{Forecast, ScalarConvex};
use abelab_core::{Error, Result};

use rules::RuleSpec;

#[derive(Parser)]
#[command(name = "abelab", version, about = "Forecast elicitation, pooling, and agreement lab")]
struct Cli {
    /// Worker threads for parallel subcommands (default: ABELAB_THREADS or
    /// all cores). Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the JSON output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a forecast under a proper scoring rule.
    Score(ScoreArgs),
    /// Pool forecasts (linear, logarithmic, or quasi-arithmetic).
    Pool(PoolArgs),
    /// Incentivization index of a normalized binary rule.
    Index(IndexArgs),
    /// Monte Carlo simulation of the coin-flipping expert.
    SimulateExpert(SimulateArgs),
    /// Online learning of expert weights (OGD or OMD).
    Learn(LearnArgs),
    /// Substitutes checkers over a finite information structure.
    Substitutes(SubstitutesArgs),
    /// Aggregation strategies and approximation ratios.
    Aggregate(AggregateArgs),
    /// Contract payouts.
    Contract(ContractArgs),
    /// Arbitrage searches against a contract.
    Arbitrage(ArbitrageArgs),
    /// Agreement protocols over two-expert structures.
    Agree(AgreeArgs),
    /// Reproduce the published tables.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// Rule spec: a name ("quadratic") or JSON like
    /// {"kind":"spherical","alpha":2.0,"n":3}.
    #[arg(long)]
    rule: String,
    /// Forecast probabilities, comma separated.
    #[arg(long)]
    forecast: String,
    /// Realized outcome (0-based).
    #[arg(long)]
    outcome: usize,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long, value_parser = ["linear", "log", "qa"])]
    method: String,
    /// Rule spec; required for qa pooling.
    #[arg(long)]
    rule: Option<String>,
    /// forecasts.json: {"n":3,"forecasts":[[...]],"weights":[...],"prior":[...]}.
    #[arg(long)]
    input: PathBuf,
    /// Prior probabilities, comma separated (overrides the file's prior).
    #[arg(long)]
    prior: Option<String>,
    /// Generalized pooling: weights need not sum to one; requires a prior.
    #[arg(long)]
    generalized: bool,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    rule: String,
    #[arg(long)]
    ell: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    rule: String,
    #[arg(long)]
    cost: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_parser = ["local", "global"], default_value = "local")]
    mode: String,
    /// Error exponent for the reported statistics.
    #[arg(long, default_value_t = 1.0)]
    ell: f64,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long, value_parser = ["ogd", "omd"])]
    algo: String,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long = "T", default_value_t = 10_000)]
    horizon: usize,
    /// Categorical-Y structure to draw calibrated rounds from; omit to use
    /// the uncalibrated adversarial demonstration stream.
    #[arg(long)]
    structure: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Write the full per-round report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SubstitutesArgs {
    #[arg(long, value_parser = ["weak", "projective", "rectangle"])]
    kind: String,
    /// Structure JSON file.
    #[arg(long, required_unless_present = "library")]
    input: Option<PathBuf>,
    /// A named library structure, e.g. "xor" or "secret_sharing".
    #[arg(long)]
    library: Option<String>,
    /// Parameters for the library structure.
    #[arg(long, value_delimiter = ',')]
    params: Vec<f64>,
    /// Bregman divergence: "square" (default) or "entropy".
    #[arg(long, default_value = "square")]
    g: String,
    /// Rectangle checker: sample this many partitions instead of the
    /// exhaustive enumeration (the delta mode). Requires --seed.
    #[arg(long)]
    delta_partitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long, value_parser = ["average", "extremize", "random-expert"])]
    strategy: String,
    /// Extremization factor, or "auto" for the recommended value.
    #[arg(long, default_value = "auto")]
    d: String,
    /// structure.json (exact mode) or pif.json (Monte Carlo mode).
    #[arg(long, required_unless_present = "library")]
    input: Option<PathBuf>,
    /// A named library structure instead of a file.
    #[arg(long)]
    library: Option<String>,
    #[arg(long, value_delimiter = ',')]
    params: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ContractArgs {
    #[arg(long, value_parser = ["thm41", "independent"])]
    kind: String,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Rule spec for the independent kind.
    #[arg(long)]
    rule: Option<String>,
    /// Score offset for the independent kind.
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    /// reports.json: {"n":2,"reports":[[...],[...]]}.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    outcome: usize,
}

#[derive(Args)]
struct ArbitrageArgs {
    #[arg(long, value_parser = ["thm41", "independent"])]
    contract: String,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    /// reports.json; in --expected mode these are the coalition's beliefs.
    #[arg(long)]
    reports: PathBuf,
    /// Coalition member indices, comma separated (0-based).
    #[arg(long, value_delimiter = ',')]
    coalition: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    budget: u64,
    #[arg(long)]
    seed: u64,
    /// Search for expected arbitrage instead of strict arbitrage.
    #[arg(long)]
    expected: bool,
    /// Also emit the redistribution agreement for an expected witness.
    #[arg(long)]
    redistribute: bool,
}

#[derive(Args)]
struct AgreeArgs {
    #[arg(long, value_parser = ["exact", "discretized", "bregman", "rounding"])]
    protocol: String,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Divergence for the bregman protocol: "entropy" or "square".
    #[arg(long, default_value = "square")]
    g: String,
    #[arg(long, required_unless_present = "library")]
    input: Option<PathBuf>,
    /// A named library structure instead of a file.
    #[arg(long)]
    library: Option<String>,
    #[arg(long, value_delimiter = ',')]
    params: Vec<f64>,
    /// Write the full per-round trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    max_rounds: usize,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, value_parser = ["table31", "tableA1", "table71", "fig35"])]
    target: String,
    /// Trials per Monte Carlo cell (tableA1).
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ForecastsFile {
    n: usize,
    forecasts: Vec<Vec<f64>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    prior: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ReportsFile {
    n: usize,
    reports: Vec<Vec<f64>>,
}

fn parse_probs(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::Argument(format!("bad probability {p}: {e}")))
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Argument(format!("cannot parse {}: {e}", path.display())))
}

fn scalar_g(name: &str) -> Result<ScalarConvex> {
    match name {
        "square" => Ok(ScalarConvex::square()),
        "entropy" => Ok(ScalarConvex::neg_entropy()),
        other => Err(Error::Argument(format!("unknown divergence {other}"))),
    }
}

fn forecast_set(file: &ForecastsFile) -> Result<WeightedForecastSet> {
    let forecasts: Vec<Forecast> =
        file.forecasts.iter().map(|v| Forecast::new(v.clone())).collect::<Result<_>>()?;
    let weights = file
        .weights
        .clone()
        .unwrap_or_else(|| vec![1.0 / forecasts.len() as f64; forecasts.len()]);
    let set = WeightedForecastSet::new(forecasts, weights)?;
    match &file.prior {
        Some(p) => set.with_prior(Forecast::new(p.clone())?),
        None => Ok(set),
    }
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Score(a) => {
            let spec = RuleSpec::parse(&a.rule)?;
            let probs = parse_probs(&a.forecast)?;
            let rule = spec.build_vector(probs.len())?;
            let f = Forecast::new(probs)?;
            let score = rule.score(&f, a.outcome)?;
            let expected = rule.expected_score(&f)?;
            let exposure = rule.exposure(&f).ok();
            Ok(json!({
                "rule": spec,
                "forecast": f.probs(),
                "outcome": a.outcome,
                "score": score,
                "expected_score": expected,
                "exposure": exposure,
            }))
        }
        Command::Pool(a) => {
            let mut file: ForecastsFile = read_json(&a.input)?;
            if let Some(p) = &a.prior {
                file.prior = Some(parse_probs(p)?);
            }
            let set = forecast_set(&file)?;
            match (a.method.as_str(), a.generalized) {
                ("linear", false) => {
                    let p = linear_pool(&set)?;
                    Ok(json!({"method": "linear", "pooled": p.probs()}))
                }
                ("log", false) => {
                    let p = log_pool(&set)?;
                    Ok(json!({"method": "log", "pooled": p.probs()}))
                }
                ("linear", true) | ("log", true) => {
                    let kind = if a.method == "linear" {
                        GeneralizedKind::Linear
                    } else {
                        GeneralizedKind::Logarithmic
                    };
                    let r = generalized_pool(kind, &set)?;
                    Ok(json!({
                        "method": format!("generalized-{}", a.method),
                        "pooled": r.values,
                        "in_range": r.in_range,
                    }))
                }
                ("qa", _) => {
                    let spec = RuleSpec::parse(a.rule.as_deref().ok_or_else(|| {
                        Error::Argument("qa pooling requires --rule".into())
                    })?)?;
                    let rule = spec.build_vector(set.dim())?;
                    let r = qa_pool(&rule, &set)?;
                    Ok(json!({
                        "method": "qa",
                        "rule": spec,
                        "pooled": r.pooled.probs(),
                        "guarantee": r.guarantee,
                        "per_outcome_margin": r.per_outcome_margin,
                    }))
                }
                _ => unreachable!("clap validated"),
            }
        }
        Command::Index(a) => {
            let spec = RuleSpec::parse(&a.rule)?;
            let rule = spec.build_normalized()?;
            let rep = index_report(&rule, a.ell)?;
            let relative = relative_index(&rule, a.ell)?;
            Ok(json!({
                "rule": spec,
                "ell": a.ell,
                "index": rep.index,
                "mu_ell": rep.mu_ell,
                "predicted_error_coeff": rep.predicted_error_coeff,
                "relative_to_optimal": relative,
            }))
        }
        Command::SimulateExpert(a) => {
            let spec = RuleSpec::parse(&a.rule)?;
            let rule = spec.build_normalized()?;
            let cfg = ExpertSimConfig {
                cost: a.cost,
                mode: if a.mode == "local" {
                    ExpertMode::LocallyAdaptive
                } else {
                    ExpertMode::GloballyAdaptive
                },
                trials: a.trials,
                seed: a.seed,
                ell: a.ell,
            };
            let rep = simulate_expert(&rule, &cfg)?;
            Ok(json!({
                "rule": spec,
                "cost": a.cost,
                "mode": a.mode,
                "trials": a.trials,
                "seed": a.seed,
                "ell": a.ell,
                "avg_error": rep.avg_error,
                "predicted_avg_error": rep.predicted,
                "ratio": rep.ratio_to_predicted,
                "avg_flips": rep.avg_flips,
                "max_flips": rep.max_flips,
                "flip_cap": rep.flip_cap,
                "cap_exceeded": rep.cap_exceeded,
            }))
        }
        Command::Learn(a) => {
            let run: LearnerRun;
            let m;
            match &a.structure {
                Some(path) => {
                    let structure: InformationStructure = read_json(path)?;
                    m = structure.n_experts();
                    let n = match structure.y_kind() {
                        abelab_core::infostruct::YKind::Categorical(n) => n,
                        _ => {
                            return Err(Error::Argument(
                                "learning needs a categorical-Y structure".into(),
                            ))
                        }
                    };
                    let sampler = CalibratedSampler::new(&structure)?;
                    let mut rng = root_rng(a.seed);
                    let mut src =
                        |_w: &[f64]| -> Option<Round> { Some(sampler.sample(&mut rng)) };
                    run = dispatch_learner(&a, &mut src, m, n)?;
                }
                None => {
                    m = 2;
                    let rounds = example61_adversary(a.horizon)?;
                    let mut src = FixedStream::new(rounds);
                    run = dispatch_learner(&a, &mut src, m, 2)?;
                }
            }
            if let Some(path) = &a.report {
                let text = serde_json::to_string_pretty(&run)
                    .map_err(|e| Error::Numeric(e.to_string()))?;
                fs::write(path, text)
                    .map_err(|e| Error::Argument(format!("cannot write report: {e}")))?;
            }
            Ok(json!({
                "algo": a.algo,
                "T": a.horizon,
                "m": m,
                "seed": a.seed,
                "total_loss": run.total_loss,
                "best_fixed_loss": run.best_fixed_loss,
                "best_fixed_weights": run.best_fixed_weights,
                "regret": run.regret_vs_best_fixed,
                "final_weights": run.weights_trajectory.last(),
                "small_gradient_violations": run.small_gradient_violations,
            }))
        }
        Command::Substitutes(a) => {
            let structure: InformationStructure = match (&a.input, &a.library) {
                (Some(path), _) => read_json(path)?,
                (None, Some(name)) => {
                    abelab_core::infostruct::library_structure(name, &a.params)?
                }
                _ => return Err(Error::Argument("need --input or --library".into())),
            };
            let g = scalar_g(&a.g)?;
            let verdict = match a.kind.as_str() {
                "weak" => check_weak_substitutes(&structure, Some(&g))?,
                "projective" => check_projective_substitutes(&structure)?,
                "rectangle" => {
                    let delta_mode = match a.delta_partitions {
                        Some(k) => Some((
                            k,
                            a.seed.ok_or_else(|| {
                                Error::Argument("delta mode requires --seed".into())
                            })?,
                        )),
                        None => None,
                    };
                    check_rectangle_substitutes(&structure, Some(&g), delta_mode)?
                }
                _ => unreachable!(),
            };
            serde_json::to_value(&verdict).map_err(|e| Error::Numeric(e.to_string()))
        }
        Command::Aggregate(a) => {
            enum Target {
                Exact(InformationStructure),
                Mc(PifSpec),
            }
            let target = match (&a.input, &a.library) {
                (Some(path), _) => {
                    let text = fs::read_to_string(path).map_err(|e| {
                        Error::Argument(format!("cannot read {}: {e}", path.display()))
                    })?;
                    if let Ok(structure) = serde_json::from_str::<InformationStructure>(&text) {
                        Target::Exact(structure)
                    } else if let Ok(spec) = serde_json::from_str::<PifSpec>(&text) {
                        spec.validate()?;
                        Target::Mc(spec)
                    } else {
                        return Err(Error::Argument(
                            "input is neither a structure nor a PIF spec".into(),
                        ));
                    }
                }
                (None, Some(name)) => Target::Exact(
                    abelab_core::infostruct::library_structure(name, &a.params)?,
                ),
                _ => return Err(Error::Argument("need --input or --library".into())),
            };
            let m = match &target {
                Target::Exact(s) => s.n_experts(),
                Target::Mc(p) => p.m,
            };
            let strategy = match a.strategy.as_str() {
                "average" => AggregationStrategy::Average,
                "random-expert" => AggregationStrategy::RandomExpert,
                "extremize" => {
                    let d = if a.d == "auto" {
                        recommended_d(m)?
                    } else {
                        a.d.parse::<f64>()
                            .map_err(|e| Error::Argument(format!("bad --d: {e}")))?
                    };
                    AggregationStrategy::Extremize { d }
                }
                _ => unreachable!(),
            };
            match target {
                Target::Exact(structure) => {
                    let rep = approximation_ratio_exact(&structure, &strategy)?;
                    serde_json::to_value(&rep).map_err(|e| Error::Numeric(e.to_string()))
                }
                Target::Mc(spec) => {
                    let seed = a.seed.ok_or_else(|| {
                        Error::Argument("Monte Carlo mode requires --seed".into())
                    })?;
                    let rep = approximation_ratio_mc(&spec, &strategy, a.trials, seed)?;
                    serde_json::to_value(&rep).map_err(|e| Error::Numeric(e.to_string()))
                }
            }
        }
        Command::Contract(a) => {
            let file: ReportsFile = read_json(&a.reports)?;
            let reports: Vec<Forecast> =
                file.reports.iter().map(|v| Forecast::new(v.clone())).collect::<Result<_>>()?;
            let contract = build_contract(&a.kind, a.alpha, a.rule.as_deref(), a.offset,
                reports.len(), file.n)?;
            let payouts = contract_payout(&contract, &reports, a.outcome)?;
            let total: f64 = payouts.iter().sum();
            Ok(json!({
                "kind": a.kind,
                "outcome": a.outcome,
                "payouts": payouts,
                "total": total,
            }))
        }
        Command::Arbitrage(a) => {
            let file: ReportsFile = read_json(&a.reports)?;
            let reports: Vec<Forecast> =
                file.reports.iter().map(|v| Forecast::new(v.clone())).collect::<Result<_>>()?;
            let contract = build_contract(&a.contract, a.alpha, a.rule.as_deref(), a.offset,
                reports.len(), file.n)?;
            if a.expected {
                let witness =
                    find_expected_arbitrage(&contract, &reports, &a.coalition, a.budget, a.seed)?;
                let redistribution = match (&witness, a.redistribute) {
                    (Some(w), true) => Some(redistribution_agreement(&contract, w)?),
                    _ => None,
                };
                Ok(json!({
                    "mode": "expected",
                    "budget": a.budget,
                    "found": witness.is_some(),
                    "witness": witness,
                    "redistribution": redistribution,
                }))
            } else {
                let witness = find_arbitrage(&contract, &reports, &a.coalition, a.budget, a.seed)?;
                Ok(json!({
                    "mode": "strict",
                    "budget": a.budget,
                    "found": witness.is_some(),
                    "witness": witness,
                }))
            }
        }
        Command::Agree(a) => {
            let structure: InformationStructure = match (&a.input, &a.library) {
                (Some(path), _) => read_json(path)?,
                (None, Some(name)) => {
                    abelab_core::infostruct::library_structure(name, &a.params)?
                }
                _ => return Err(Error::Argument("need --input or --library".into())),
            };
            let protocol = match a.protocol.as_str() {
                "exact" => Protocol::ExactExchange,
                "discretized" => Protocol::Discretized { eps: a.eps },
                "bregman" => Protocol::BregmanDiscretized { g: scalar_g(&a.g)?, eps: a.eps },
                "rounding" => Protocol::Rounding { eps: a.eps },
                _ => unreachable!(),
            };
            let run = run_protocol(&structure, &protocol, a.max_rounds)?;
            if let Some(path) = &a.trace {
                let text = serde_json::to_string_pretty(&run)
                    .map_err(|e| Error::Numeric(e.to_string()))?;
                fs::write(path, text)
                    .map_err(|e| Error::Argument(format!("cannot write trace: {e}")))?;
            }
            Ok(json!({
                "protocol": a.protocol,
                "eps": a.eps,
                "t_end": run.t_end,
                "horizon": run.horizon,
                "stationary_at": run.stationary_at,
                "rounds_simulated": run.rounds.len() - 1,
                "final": run.final_metrics,
            }))
        }
        Command::Reproduce(a) => match a.target.as_str() {
            "table31" => tables::table31(),
            "tableA1" => tables::table_a1(a.trials, a.seed),
            "table71" => tables::table71(),
            "fig35" => tables::fig35(),
            _ => unreachable!(),
        },
    }
}

fn dispatch_learner(
    a: &LearnArgs,
    src: &mut dyn RoundSource,
    m: usize,
    n: usize,
) -> Result<LearnerRun> {
    match a.algo.as_str() {
        "ogd" => {
            let cfg = OgdConfig {
                rule: abelab_core::scoring::ScoringRule::quadratic(n),
                exposure_bound: 2.0 * 2f64.sqrt(),
                horizon: a.horizon,
            };
            ogd_run(&cfg, src, m)
        }
        "omd" => {
            let cfg =
                OmdConfig { alpha: a.alpha, horizon: a.horizon, m, n, eta: None, gamma: None };
            omd_run(&cfg, src)
        }
        _ => unreachable!(),
    }
}

fn build_contract(
    kind: &str,
    alpha: Option<f64>,
    rule: Option<&str>,
    offset: f64,
    m: usize,
    n: usize,
) -> Result<ContractFunction> {
    match kind {
        "thm41" => {
            let alpha =
                alpha.ok_or_else(|| Error::Argument("thm41 requires --alpha".into()))?;
            ContractFunction::thm41(alpha, m, n, false)
        }
        "independent" => {
            let spec = RuleSpec::parse(rule.unwrap_or("quadratic"))?;
            Ok(ContractFunction::independent(spec.build_vector(n)?, offset))
        }
        other => Err(Error::Argument(format!("unknown contract kind {other}"))),
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) | Error::Dimension(_) | Error::InvalidRule(_) => 2,
        Error::Numeric(_) | Error::NotNormalizable(_) | Error::ApproximationFailure(_) => 3,
        Error::Domain(_) | Error::Unsupported(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads.or_else(|| {
        std::env::var("ABELAB_THREADS").ok().and_then(|v| v.parse().ok())
    }) {
        // per-run pool; results are thread-count independent
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let out = cli.out.clone();
    match run(cli) {
        Ok(value) => {
            let text = serde_json::to_string_pretty(&value).expect("serializable output");
            match out {
                Some(path) => {
                    if let Err(e) = fs::write(&path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        std::process::exit(2);
                    }
                }
                None => println!("{text}"),
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
