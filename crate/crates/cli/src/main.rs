//! `fqpat`: census, threshold sweeps, Poisson fits, extremal sets, samples and
//! exact containment probabilities, written as self-describing CSV or JSON.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 resource cap exceeded, 4 internal error.
//! `FQPAT_CAPS="points=..,patterns=..,pairwise=..,subspaces=.."` overrides the caps.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fqpat::census::{condition_report, delta_for_mean, er_containment_prob, family_size, threshold};
use fqpat::extremal::{extremal_row, ExtremalRow};
use fqpat::output::{csv_document, json_document};
use fqpat::sampler::{sample_bernoulli, sample_uniform_m, GENERATOR_ID};
use fqpat::stats::{distribution_x, poisson_fit, poisson_pmf, threshold_sweep, SweepRow, R_MAX};
use fqpat::{make_field, Caps, PatternFamily, PatternKind, Space};

#[derive(Parser)]
#[command(name = "fqpat", version, about = "Patterns in random subsets of F_q^n")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact |A|, intersection classes and second-moment ratios.
    Census(CensusArgs),
    /// Coupled sweep of P(X >= 1) over multiples of the threshold.
    Sweep(SweepArgs),
    /// Law of X at E(X) = lambda against Po(lambda).
    Poisson(PoissonArgs),
    /// Deletion-method pattern-free sets.
    Extremal(ExtremalArgs),
    /// One random subset as a bitset dump.
    Sample(SampleArgs),
    /// Exact containment probability in the uniform-M model.
    Exactprob(ExactArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum Family {
    #[value(name = "3ap")]
    #[serde(rename = "3ap")]
    ThreeAp,
    #[serde(rename = "pg")]
    Pg,
    #[serde(rename = "rt")]
    Rt,
    #[serde(rename = "plane")]
    Plane,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Model {
    Bernoulli,
    Uniform,
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    q: u64,
    #[arg(long)]
    n: usize,
    /// Plane dimension (planes only).
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CensusArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Density for E(X), E(Y) and C2; defaults to the threshold t(n,q).
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Multipliers s of the threshold, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.125,0.25,0.5,1,2,4,8")]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PoissonArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Target mean E(X); the density is (lambda / |A|)^(1/a).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ExtremalArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    q: u64,
    /// One or more dimensions, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Seeds tried per size; the largest set is reported.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum, default_value = "bernoulli")]
    model: Model,
    #[arg(long)]
    q: u64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "M")]
    big_m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    q: u64,
    #[arg(long)]
    n: u32,
    #[arg(long = "M")]
    big_m: u64,
    #[arg(long)]
    f: u64,
    #[command(flatten)]
    output: OutputArgs,
}

/// Everything needed to regenerate an output file.
#[derive(Serialize, Default)]
struct RunConfig {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<Family>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    big_m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scales: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seeds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trial: Option<u64>,
    caps: Caps,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
    generator: &'static str,
    version: &'static str,
}

enum Failure {
    Invalid(String),
    Cap(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Cap(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Cap(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<fqpat::Error> for Failure {
    fn from(e: fqpat::Error) -> Self {
        if e.is_cap() {
            Failure::Cap(e.to_string())
        } else if e.is_invariant() {
            Failure::Internal(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn invalid<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Invalid(msg.into()))
}

fn caps_from_env() -> Outcome<Caps> {
    let mut caps = Caps::default();
    let Ok(raw) = std::env::var("FQPAT_CAPS") else {
        return Ok(caps);
    };
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((key, value)) = item.split_once('=') else {
            return invalid(format!("FQPAT_CAPS entry '{item}' is not key=value"));
        };
        let Ok(v) = value.trim().parse::<u64>() else {
            return invalid(format!("FQPAT_CAPS value '{value}' is not an integer"));
        };
        match key.trim() {
            "points" => caps.max_points = v as usize,
            "patterns" => caps.max_patterns = v,
            "pairwise" => caps.max_pairwise = v,
            "subspaces" => caps.max_subspaces = v,
            other => return invalid(format!("unknown FQPAT_CAPS key '{other}'")),
        }
    }
    Ok(caps)
}

fn kind_of(family: Family, m: Option<usize>) -> Outcome<PatternKind> {
    match (family, m) {
        (Family::ThreeAp, _) => Ok(PatternKind::ThreeAp),
        (Family::Pg, _) => Ok(PatternKind::Parallelogram),
        (Family::Rt, _) => Ok(PatternKind::RightTriangle),
        (Family::Plane, Some(m)) => Ok(PatternKind::Plane { m }),
        (Family::Plane, None) => invalid("planes need --m"),
    }
}

fn space(q: u64, n: usize) -> Outcome<Arc<Space>> {
    Ok(Arc::new(Space::new(make_field(q)?, n)?))
}

fn build_family(family: Family, q: u64, n: usize, m: Option<usize>, caps: Caps) -> Outcome<PatternFamily> {
    Ok(PatternFamily::with_caps(space(q, n)?, kind_of(family, m)?, caps)?)
}

fn check_trials(trials: u64) -> Outcome<()> {
    if trials == 0 {
        return invalid("--trials must be at least 1");
    }
    Ok(())
}

fn check_delta(delta: f64) -> Outcome<()> {
    if !(0.0..=1.0).contains(&delta) {
        return invalid(format!("--delta must lie in [0, 1] (got {delta})"));
    }
    Ok(())
}

fn emit(text: &str, out: &Option<PathBuf>) -> Outcome<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn base_config(command: &'static str, caps: Caps, format: Format, out: &Option<PathBuf>) -> RunConfig {
    RunConfig {
        command,
        caps,
        format: Some(format),
        out: out.as_ref().map(|p| p.display().to_string()),
        generator: GENERATOR_ID,
        version: env!("CARGO_PKG_VERSION"),
        ..RunConfig::default()
    }
}

fn with_family(mut cfg: RunConfig, f: &FamilyArgs) -> RunConfig {
    cfg.family = Some(f.family);
    cfg.q = Some(f.q);
    cfg.n = Some(vec![f.n]);
    cfg.m = f.m;
    cfg
}

fn run_census(args: CensusArgs, caps: Caps) -> Outcome<()> {
    let format = args.output.format.unwrap_or(Format::Json);
    let fa = &args.family;
    let fam = build_family(fa.family, fa.q, fa.n, fa.m, caps)?;
    let delta = args
        .delta
        .unwrap_or_else(|| threshold(fam.kind(), fam.q(), fam.n()).min(1.0));
    check_delta(delta)?;
    let mut cfg = with_family(base_config("census", caps, format, &args.output.out), fa);
    cfg.delta = Some(delta);
    let report = condition_report(&fam, delta)?;
    let text = match format {
        Format::Csv => csv_document(
            &cfg,
            &fqpat::census::CensusReport::CSV_HEADER,
            report.csv_rows().into_iter().map(Vec::from),
        )?,
        _ => json_document(&cfg, &report)?,
    };
    emit(&text, &args.output.out)
}

fn run_sweep(args: SweepArgs, caps: Caps) -> Outcome<()> {
    let format = args.output.format.unwrap_or(Format::Csv);
    let fa = &args.family;
    let fam = build_family(fa.family, fa.q, fa.n, fa.m, caps)?;
    check_trials(args.trials)?;
    if args.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return invalid("--scales must be positive");
    }
    let mut cfg = with_family(base_config("sweep", caps, format, &args.output.out), fa);
    cfg.scales = Some(args.scales.clone());
    cfg.trials = Some(args.trials);
    cfg.seed = Some(args.seed);
    let rows = threshold_sweep(&fam, &args.scales, args.trials, args.seed)?;
    let text = match format {
        Format::Json => json_document(&cfg, &rows)?,
        _ => csv_document(&cfg, &SweepRow::CSV_HEADER, rows.iter().map(SweepRow::csv_record))?,
    };
    emit(&text, &args.output.out)
}

fn run_poisson(args: PoissonArgs, caps: Caps) -> Outcome<()> {
    let format = args.output.format.unwrap_or(Format::Csv);
    let fa = &args.family;
    let fam = build_family(fa.family, fa.q, fa.n, fa.m, caps)?;
    check_trials(args.trials)?;
    if !(args.lambda > 0.0 && args.lambda.is_finite()) {
        return invalid("--lambda must be positive");
    }
    let size = family_size(&fam)?;
    let delta = delta_for_mean(&size, fam.a(), args.lambda);
    if delta > 1.0 {
        return invalid(format!("lambda {} exceeds |A| = {size}", args.lambda));
    }
    let mut cfg = with_family(base_config("poisson", caps, format, &args.output.out), fa);
    cfg.lambda = Some(args.lambda);
    cfg.trials = Some(args.trials);
    cfg.seed = Some(args.seed);
    let hist = distribution_x(&fam, delta, args.trials, args.seed)?;
    let fit = poisson_fit(&hist, args.lambda, R_MAX)?;
    let text = match format {
        Format::Json => json_document(&cfg, &serde_json::json!({"delta": delta, "histogram": hist, "fit": fit}))?,
        _ => {
            let mut header = vec![
                "family", "q", "n", "m", "delta", "lambda", "trials", "seed", "k", "count", "empirical", "poisson",
                "tv",
            ];
            let names = ["r1", "r2", "r3", "r4"];
            header.extend(&names[..R_MAX]);
            let pmf = poisson_pmf(args.lambda, hist.max_value());
            let rows = (0..=hist.max_value()).map(|k| {
                let mut row = vec![
                    fam.kind().name().to_string(),
                    fam.q().to_string(),
                    fam.n().to_string(),
                    fam.kind().m().map(|m| m.to_string()).unwrap_or_default(),
                    delta.to_string(),
                    args.lambda.to_string(),
                    hist.trials.to_string(),
                    args.seed.to_string(),
                    k.to_string(),
                    hist.count(k).to_string(),
                    (hist.count(k) as f64 / hist.trials as f64).to_string(),
                    pmf[k as usize].to_string(),
                    fit.tv_distance.to_string(),
                ];
                row.extend(fit.moments.iter().map(|m| m.estimate.to_string()));
                row
            });
            let table = csv_document(&cfg, &header, rows)?;
            // The full fit, with moment standard errors, goes next to the table.
            if let Some(path) = &args.output.out {
                let fit_doc = json_document(&cfg, &serde_json::json!({"delta": delta, "fit": fit}))?;
                emit(&fit_doc, &Some(path.with_extension("fit.json")))?;
            }
            table
        }
    };
    emit(&text, &args.output.out)
}

fn run_extremal(args: ExtremalArgs, caps: Caps) -> Outcome<()> {
    let format = args.output.format.unwrap_or(Format::Json);
    if args.seeds == 0 {
        return invalid("--seeds must be at least 1");
    }
    let families = args
        .n
        .iter()
        .map(|&n| build_family(args.family, args.q, n, args.m, caps))
        .collect::<Outcome<Vec<_>>>()?;
    let mut cfg = base_config("extremal", caps, format, &args.output.out);
    cfg.family = Some(args.family);
    cfg.q = Some(args.q);
    cfg.n = Some(args.n.clone());
    cfg.m = args.m;
    cfg.seeds = Some(args.seeds);
    let rows = families
        .iter()
        .map(|fam| extremal_row(fam, args.seeds))
        .collect::<Result<Vec<_>, _>>()?;
    if rows.iter().any(|r| !r.certified) {
        return Err(Failure::Internal("uncertified extremal set".into()));
    }
    let text = match format {
        Format::Csv => csv_document(&cfg, &ExtremalRow::CSV_HEADER, rows.iter().map(ExtremalRow::csv_record))?,
        _ => json_document(&cfg, &rows)?,
    };
    emit(&text, &args.output.out)
}

fn run_sample(args: SampleArgs, caps: Caps) -> Outcome<()> {
    let format = args.output.format.unwrap_or(Format::Json);
    let s = space(args.q, args.n)?;
    let mut cfg = base_config("sample", caps, format, &args.output.out);
    cfg.model = Some(args.model);
    cfg.q = Some(args.q);
    cfg.n = Some(vec![args.n]);
    cfg.seed = Some(args.seed);
    cfg.trial = Some(args.trial);
    let set = match (args.model, args.delta, args.big_m) {
        (Model::Bernoulli, Some(d), None) => {
            check_delta(d)?;
            cfg.delta = Some(d);
            sample_bernoulli(s, d, args.seed, args.trial)?
        }
        (Model::Uniform, None, Some(m)) => {
            cfg.big_m = Some(m as u64);
            sample_uniform_m(s, m, args.seed, args.trial)?
        }
        (Model::Bernoulli, _, _) => return invalid("the bernoulli model takes --delta only"),
        (Model::Uniform, _, _) => return invalid("the uniform model takes --M only"),
    };
    let text = match format {
        Format::Csv => csv_document(
            &cfg,
            &["popcount", "hex"],
            [vec![set.len().to_string(), set.to_hex()]],
        )?,
        _ => json_document(
            &cfg,
            &serde_json::json!({"popcount": set.len(), "hex": set.to_hex(), "points": set.points()}),
        )?,
    };
    emit(&text, &args.output.out)
}

fn run_exactprob(args: ExactArgs, caps: Caps) -> Outcome<()> {
    let format = args.output.format.unwrap_or(Format::Text);
    let p = er_containment_prob(args.q, args.n, args.big_m, args.f)?;
    let text = match format {
        Format::Text => format!("{p}\n"),
        Format::Json => {
            let mut cfg = base_config("exactprob", caps, format, &args.output.out);
            cfg.q = Some(args.q);
            cfg.n = Some(vec![args.n as usize]);
            cfg.big_m = Some(args.big_m);
            cfg.f = Some(args.f);
            json_document(&cfg, &serde_json::json!({"probability": p.to_string()}))?
        }
        Format::Csv => return invalid("exactprob writes text or json"),
    };
    emit(&text, &args.output.out)
}

fn run(cli: Cli) -> Outcome<()> {
    let caps = caps_from_env()?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return invalid("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Census(a) => run_census(a, caps),
        Command::Sweep(a) => run_sweep(a, caps),
        Command::Poisson(a) => run_poisson(a, caps),
        Command::Extremal(a) => run_extremal(a, caps),
        Command::Sample(a) => run_sample(a, caps),
        Command::Exactprob(a) => run_exactprob(a, caps),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
