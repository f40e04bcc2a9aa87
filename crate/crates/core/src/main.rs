//! Command-line entry point wiring the whole pipeline: dataset synthesis,
//! vocabulary training, index building, single queries with traces,
//! benchmark sweeps, per-query profiles, and the stopping-bound race
//! simulator.
//!
//! Conventions: human-readable progress goes to stderr, machine output goes
//! to files or stdout, all randomness flows from explicit seeds, and any
//! flag may also be supplied through `--config <json>` (command-line flags
//! win). Exit codes: 0 success, 1 validation error, 2 I/O error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use anybow::dataset::Dataset;
use anybow::eval::{self, evaluate, features_needed_profile, sweep, EvalConfig, RuleFamily};
use anybow::query::{run_query_trace, run_query_with, QueryOptions, StopReason, TraceOptions};
use anybow::stopping::{race_simulate, StoppingRule};
use anybow::synth::{synthesize, SynthConfig};
use anybow::vocab::{KMeansConfig, Vocabulary};
use anybow::{Error, InvertedIndex, Result};

#[derive(Parser)]
#[command(name = "anybow", version, about = "Anytime bag-of-words image retrieval")]
struct Cli {
    /// Seed for all randomness in the invoked subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for benchmark-style commands (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Stderr verbosity.
    #[arg(long, global = true, value_parser = ["off", "info", "debug"])]
    log_level: Option<String>,
    /// JSON file supplying defaults for any flag (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted easy/hard queries.
    Synth(SynthArgs),
    /// Train a k-means vocabulary on a dataset's database half.
    TrainVocab(TrainVocabArgs),
    /// Build the inverted index for a dataset's database half.
    BuildIndex(BuildIndexArgs),
    /// Run one anytime query, optionally tracing every step.
    Query(QueryArgs),
    /// Evaluate stopping rules over all queries (Monte Carlo averaged).
    Bench(BenchArgs),
    /// Sweep one rule family over a parameter ladder.
    Sweep(SweepArgs),
    /// Per-query minimal prefix fractions under a fixed permutation.
    Profile(ProfileArgs),
    /// Simulate the two-distribution stopping race.
    Race(RaceArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    num_images: Option<usize>,
    #[arg(long)]
    features_per_image: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    num_clusters: Option<usize>,
    #[arg(long)]
    hard_fraction: Option<f64>,
    #[arg(long)]
    confuser_count: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Output dataset path; ground truth lands next to it as <out>.gt.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainVocabArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RuleArgs {
    /// Stopping rule: rule1, rule2, rule3, hoeffding, or never.
    #[arg(long)]
    rule: Option<String>,
    /// Threshold for rule1/rule2.
    #[arg(long)]
    threshold: Option<f64>,
    /// Patience (features) for rule3.
    #[arg(long)]
    patience: Option<usize>,
    /// Confidence parameter for hoeffding.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    query_id: Option<u32>,
    #[command(flatten)]
    rule: RuleArgs,
    /// Number of ranked matches to return.
    #[arg(long)]
    n: Option<usize>,
    /// Write a per-step trace CSV (step,word_id,argmax,gap,max,mean).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write histogram snapshots (step,image_id,score) alongside the trace.
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// Snapshot interval as a percentage of the query's features.
    #[arg(long)]
    snapshot_every: Option<f64>,
    /// Drop ranked entries scoring below this value.
    #[arg(long)]
    min_score: Option<f64>,
    /// Weight votes by quantization distance.
    #[arg(long)]
    distance_weight: bool,
    /// Sigma for distance weighting (default: mean quantization distance of
    /// the database half).
    #[arg(long)]
    vote_sigma: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Rule specs like `rule1:0.25,0.2`, `rule3:40,80`, `hoeffding:0.05`,
    /// or `never`. Repeatable.
    #[arg(long)]
    rules: Vec<String>,
    /// Comma-separated top-n levels, e.g. `3,5,10`.
    #[arg(long)]
    n: Option<String>,
    /// Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    precision_floor: Option<f64>,
    /// Report CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Rule family to sweep: rule1, rule2, or rule3.
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated parameter ladder, e.g. `0.5,0.4,0.3`.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    precision_floor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Per-query CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decile histogram CSV destination.
    #[arg(long)]
    deciles_out: Option<PathBuf>,
}

#[derive(Args)]
struct RaceArgs {
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// One-row CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Format { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Values from the optional `--config <json>` file, consulted for any flag
/// not given on the command line.
struct Ctx {
    cfg: serde_json::Map<String, serde_json::Value>,
    seed: u64,
    verbosity: u8,
}

impl Ctx {
    fn value(&self, key: &str) -> Option<&serde_json::Value> {
        self.cfg.get(key)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
                .map(Some)
                .ok_or_else(|| Error::InvalidConfig(format!("config key {key:?} is not a number"))),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|u| u as usize)
                .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
                .map(Some)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!("config key {key:?} is not an integer"))
                }),
        }
    }

    fn u32(&self, key: &str) -> Result<Option<u32>> {
        Ok(self.usize(key)?.map(|u| u as u32))
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.value(key) {
            None => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Ok(Some(other.to_string())),
        }
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.value(key) {
            None => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(Error::InvalidConfig(format!(
                "config key {key:?} is not a path string"
            ))),
        }
    }

    fn strings(&self, key: &str) -> Result<Option<Vec<String>>> {
        match self.value(key) {
            None => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(vec![s.clone()])),
            Some(serde_json::Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_str().map(str::to_string).ok_or_else(|| {
                        Error::InvalidConfig(format!("config key {key:?} must hold strings"))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(_) => Err(Error::InvalidConfig(format!(
                "config key {key:?} must be a string or array of strings"
            ))),
        }
    }

    fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn debug(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 2 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn need<T>(value: Option<T>, flag: &str, usage: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidConfig(format!("missing {flag}\nusage: {usage}")))
}

fn pick<T>(cli: Option<T>, cfg: Option<T>, default: T) -> T {
    cli.or(cfg).unwrap_or(default)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            match serde_json::from_str::<serde_json::Value>(&text) {
                Ok(serde_json::Value::Object(map)) => map,
                Ok(_) => {
                    return Err(Error::InvalidConfig(
                        "config file must hold a JSON object".into(),
                    ))
                }
                Err(e) => return Err(Error::InvalidConfig(format!("bad config JSON: {e}"))),
            }
        }
        None => serde_json::Map::new(),
    };
    let mut ctx = Ctx {
        cfg,
        seed: 0,
        verbosity: 1,
    };
    ctx.seed = match cli.seed {
        Some(s) => s,
        None => ctx.f64("seed")?.map(|v| v as u64).unwrap_or(0),
    };
    let level = match cli.log_level {
        Some(l) => l,
        None => ctx.string("log_level")?.unwrap_or_else(|| "info".into()),
    };
    ctx.verbosity = match level.as_str() {
        "off" => 0,
        "debug" => 2,
        _ => 1,
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => ctx.usize("threads")?,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Synth(args) => cmd_synth(&ctx, args),
        Command::TrainVocab(args) => cmd_train_vocab(&ctx, args),
        Command::BuildIndex(args) => cmd_build_index(&ctx, args),
        Command::Query(args) => cmd_query(&ctx, args),
        Command::Bench(args) => cmd_bench(&ctx, args),
        Command::Sweep(args) => cmd_sweep(&ctx, args),
        Command::Profile(args) => cmd_profile(&ctx, args),
        Command::Race(args) => cmd_race(&ctx, args),
    }
}

const SYNTH_USAGE: &str = "anybow synth --out <path> [--num-images N] [--features-per-image F] \
[--dimension D] [--num-clusters C] [--hard-fraction H] [--confuser-count K] [--sigma S] [--seed S]";

fn cmd_synth(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        num_images: pick(args.num_images, ctx.usize("num_images")?, defaults.num_images),
        features_per_image: pick(
            args.features_per_image,
            ctx.usize("features_per_image")?,
            defaults.features_per_image,
        ),
        dimension: pick(args.dimension, ctx.usize("dimension")?, defaults.dimension),
        num_clusters: pick(
            args.num_clusters,
            ctx.usize("num_clusters")?,
            defaults.num_clusters,
        ),
        hard_fraction: pick(
            args.hard_fraction,
            ctx.f64("hard_fraction")?,
            defaults.hard_fraction,
        ),
        confuser_count: pick(
            args.confuser_count,
            ctx.usize("confuser_count")?,
            defaults.confuser_count,
        ),
        sigma: pick(args.sigma, ctx.f64("sigma")?, defaults.sigma),
    };
    let out = need(args.out.or(ctx.path("out")?), "--out", SYNTH_USAGE)?;
    let ds = synthesize(&cfg, ctx.seed)?;
    ds.save(&out)?;
    ctx.info(format!(
        "wrote {} images (dim {}, {} queries) to {}",
        ds.num_images(),
        ds.dimension,
        ds.queries().len(),
        out.display()
    ));
    Ok(())
}

const TRAIN_USAGE: &str = "anybow train-vocab --input <dataset> --k <K> --out <vocab> [--seed S] \
[--max-iterations I] [--tolerance T]";

fn cmd_train_vocab(ctx: &Ctx, args: TrainVocabArgs) -> Result<()> {
    let input = need(args.input.or(ctx.path("input")?), "--input", TRAIN_USAGE)?;
    let k = need(args.k.or(ctx.usize("k")?), "--k", TRAIN_USAGE)?;
    let out = need(args.out.or(ctx.path("out")?), "--out", TRAIN_USAGE)?;
    let ds = Dataset::load(&input)?;
    let database = ds.database();
    if database.is_empty() {
        return Err(Error::InvalidConfig("dataset database half is empty".into()));
    }
    let descriptors: Vec<_> = database
        .iter()
        .flat_map(|im| im.descriptors.iter().cloned())
        .collect();
    let mut kcfg = KMeansConfig::new(k, ctx.seed);
    if let Some(m) = args.max_iterations.or(ctx.usize("max_iterations")?) {
        kcfg.max_iterations = m;
    }
    if let Some(t) = args.tolerance.or(ctx.f64("tolerance")?) {
        kcfg.tolerance = t;
    }
    ctx.info(format!(
        "training k={k} on {} descriptors from {} database images",
        descriptors.len(),
        database.len()
    ));
    let outcome = Vocabulary::train(&descriptors, &kcfg)?;
    if outcome.duplicate_centroids > 0 {
        ctx.info(format!(
            "warning: {} duplicate centroids (degenerate input)",
            outcome.duplicate_centroids
        ));
    }
    ctx.debug(format!(
        "converged after {} iterations, final distortion {:?}",
        outcome.iterations,
        outcome.distortion_per_iteration.last()
    ));
    let vocab = outcome.vocabulary.compute_idf(database)?;
    vocab.save(&out)?;
    ctx.info(format!("wrote vocabulary to {}", out.display()));
    Ok(())
}

const BUILD_USAGE: &str = "anybow build-index --vocab <file> --input <dataset> --out <index>";

fn cmd_build_index(ctx: &Ctx, args: BuildIndexArgs) -> Result<()> {
    let vocab = need(args.vocab.or(ctx.path("vocab")?), "--vocab", BUILD_USAGE)?;
    let input = need(args.input.or(ctx.path("input")?), "--input", BUILD_USAGE)?;
    let out = need(args.out.or(ctx.path("out")?), "--out", BUILD_USAGE)?;
    let v = Vocabulary::load(&vocab)?;
    let ds = Dataset::load(&input)?;
    let ix = InvertedIndex::build(&v, ds.database())?;
    ix.save(&out)?;
    ctx.info(format!(
        "indexed {} images over {} words to {}",
        ix.num_images(),
        ix.k(),
        out.display()
    ));
    Ok(())
}

const QUERY_USAGE: &str = "anybow query --index <file> --vocab <file> --dataset <file> \
--query-id <id> --rule <rule1|rule2|rule3|hoeffding|never> [--threshold T | --patience P | \
--delta D] [--n N] [--seed S] [--trace out.csv]";

fn build_rule(ctx: &Ctx, args: &RuleArgs, usage: &str) -> Result<StoppingRule> {
    let name = need(args.rule.clone().or(ctx.string("rule")?), "--rule", usage)?;
    let threshold = args.threshold.or(ctx.f64("threshold")?);
    let patience = args.patience.or(ctx.usize("patience")?);
    let delta = args.delta.or(ctx.f64("delta")?);
    let rule = match name.as_str() {
        "rule1" => StoppingRule::Rule1 {
            threshold: need(threshold, "--threshold", usage)?,
        },
        "rule2" => StoppingRule::Rule2 {
            threshold: need(threshold, "--threshold", usage)?,
        },
        "rule3" => StoppingRule::Rule3 {
            patience: need(patience, "--patience", usage)?,
        },
        "hoeffding" => StoppingRule::Hoeffding {
            delta: need(delta, "--delta", usage)?,
        },
        "never" => StoppingRule::Never,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown rule {other:?}\nusage: {usage}"
            )))
        }
    };
    rule.validate()?;
    Ok(rule)
}

fn cmd_query(ctx: &Ctx, args: QueryArgs) -> Result<()> {
    let index = need(args.index.or(ctx.path("index")?), "--index", QUERY_USAGE)?;
    let vocab = need(args.vocab.or(ctx.path("vocab")?), "--vocab", QUERY_USAGE)?;
    let dataset = need(args.dataset.or(ctx.path("dataset")?), "--dataset", QUERY_USAGE)?;
    let query_id = need(args.query_id.or(ctx.u32("query_id")?), "--query-id", QUERY_USAGE)?;
    let rule = build_rule(ctx, &args.rule, QUERY_USAGE)?;
    let n = pick(args.n, ctx.usize("n")?, 5);

    let ix = InvertedIndex::load(&index)?;
    let v = Vocabulary::load(&vocab)?;
    let ds = Dataset::load(&dataset)?;
    let record = ds
        .image_by_id(query_id)
        .ok_or_else(|| Error::InvalidConfig(format!("query id {query_id} not found in dataset")))?;

    let mut opts = QueryOptions {
        keep_histogram: false,
        min_score: args.min_score.or(ctx.f64("min_score")?),
        distance_weighting: None,
    };
    if args.distance_weight {
        let sigma = match args.vote_sigma.or(ctx.f64("vote_sigma")?) {
            Some(s) => s,
            None => mean_quantization_distance(&v, &ds)?,
        };
        ctx.debug(format!("distance weighting with sigma {sigma}"));
        opts.distance_weighting = Some(sigma);
    }

    let mut stdout = std::io::stdout().lock();
    if args.trace.is_some() || args.snapshot_out.is_some() {
        let every = args
            .snapshot_every
            .or(ctx.f64("snapshot_every")?)
            .unwrap_or(5.0);
        let features = record.descriptors.len();
        let every_features = (((every / 100.0) * features as f64).round() as usize).max(1);
        let trace = run_query_trace(
            &ix,
            &v,
            record,
            &rule,
            n,
            ctx.seed,
            &opts,
            &TraceOptions {
                snapshot_every: Some(every_features),
            },
        )?;
        if let Some(path) = &args.trace {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "step,word_id,argmax,gap,max,mean")?;
            for s in &trace.steps {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    s.step, s.word_id, s.argmax, s.gap, s.max, s.mean
                )?;
            }
            w.flush()?;
            ctx.info(format!("wrote trace to {}", path.display()));
        }
        if let Some(path) = &args.snapshot_out {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "step,image_id,score")?;
            for snap in &trace.snapshots {
                for (pos, score) in snap.bins.iter().enumerate() {
                    writeln!(w, "{},{},{}", snap.step, pos, score)?;
                }
            }
            w.flush()?;
            ctx.info(format!("wrote snapshots to {}", path.display()));
        }
        report_query(ctx, &mut stdout, &trace.result)?;
    } else {
        let result = run_query_with(&ix, &v, record, &rule, n, ctx.seed, &opts)?;
        report_query(ctx, &mut stdout, &result)?;
    }
    Ok(())
}

fn report_query(ctx: &Ctx, out: &mut impl Write, result: &anybow::QueryResult) -> Result<()> {
    ctx.info(format!(
        "processed {} features ({:.1}%), {}",
        result.features_processed,
        result.fraction_processed * 100.0,
        match result.stop_reason {
            StopReason::RuleFired => "stopping rule fired",
            StopReason::Exhausted => "exhausted all features",
        }
    ));
    writeln!(out, "rank,image_id,score")?;
    for (rank, (image_id, score)) in result.ranked.iter().enumerate() {
        writeln!(out, "{},{},{}", rank + 1, image_id, score)?;
    }
    Ok(())
}

/// Mean quantization distance of the database half; the default vote-damping
/// sigma.
fn mean_quantization_distance(v: &Vocabulary, ds: &Dataset) -> Result<f64> {
    let mut total = 0f64;
    let mut count = 0usize;
    for im in ds.database() {
        for d in &im.descriptors {
            total += v.quantize(&d.values)?.1;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidConfig("empty database".into()));
    }
    Ok(total / count as f64)
}

const BENCH_USAGE: &str = "anybow bench --index <file> --vocab <file> --dataset <file> \
[--rules rule1:0.25,0.2] [--rules never] [--n 3,5,10] [--runs 10] [--seed S] [--out report.csv]";

/// Parses rule specs like `rule1:0.25,0.2`, `hoeffding:0.05`, or `never`.
fn parse_rule_specs(specs: &[String]) -> Result<Vec<StoppingRule>> {
    let mut rules = Vec::new();
    for spec in specs {
        let spec = spec.trim();
        if spec == "never" {
            rules.push(StoppingRule::Never);
            continue;
        }
        let (family, params) = spec.split_once(':').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "rule spec {spec:?} must look like family:p1,p2 or never"
            ))
        })?;
        for param in params.split(',') {
            let value: f64 = param.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("bad parameter {param:?} in rule spec {spec:?}"))
            })?;
            let rule = match family {
                "hoeffding" => StoppingRule::Hoeffding { delta: value },
                _ => RuleFamily::parse(family)?.instantiate(value)?,
            };
            rule.validate()?;
            rules.push(rule);
        }
    }
    Ok(rules)
}

fn parse_n_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad top-n value {p:?}")))
        })
        .collect()
}

fn load_triple(
    index: &Path,
    vocab: &Path,
    dataset: &Path,
) -> Result<(InvertedIndex, Vocabulary, Dataset)> {
    Ok((
        InvertedIndex::load(index)?,
        Vocabulary::load(vocab)?,
        Dataset::load(dataset)?,
    ))
}

fn cmd_bench(ctx: &Ctx, args: BenchArgs) -> Result<()> {
    let index = need(args.index.or(ctx.path("index")?), "--index", BENCH_USAGE)?;
    let vocab = need(args.vocab.or(ctx.path("vocab")?), "--vocab", BENCH_USAGE)?;
    let dataset = need(args.dataset.or(ctx.path("dataset")?), "--dataset", BENCH_USAGE)?;
    let specs = if args.rules.is_empty() {
        ctx.strings("rules")?.unwrap_or_else(|| vec!["never".into()])
    } else {
        args.rules
    };
    let rules = parse_rule_specs(&specs)?;
    let cfg = EvalConfig {
        top_n: parse_n_list(&pick(args.n, ctx.string("n")?, "3,5,10".into()))?,
        rules,
        monte_carlo_runs: pick(args.runs, ctx.usize("runs")?, 10),
        base_seed: ctx.seed,
        precision_floor: pick(args.precision_floor, ctx.f64("precision_floor")?, 0.90),
    };
    let (ix, v, ds) = load_triple(&index, &vocab, &dataset)?;
    ctx.info(format!(
        "benchmarking {} rules x {} queries x {} runs",
        cfg.rules.len(),
        ds.queries().len(),
        cfg.monte_carlo_runs
    ));
    let report = evaluate(&ix, &v, &ds, &cfg)?;
    write_csv_to(args.out.or(ctx.path("out")?), |w| {
        eval::write_report_csv(w, &[&report])
    })
}

const SWEEP_USAGE: &str = "anybow sweep --index <file> --vocab <file> --dataset <file> \
--family <rule1|rule2|rule3> --thresholds 0.5,0.4,0.3 [--n 3,5,10] [--runs 10] [--out curve.csv]";

fn cmd_sweep(ctx: &Ctx, args: SweepArgs) -> Result<()> {
    let index = need(args.index.or(ctx.path("index")?), "--index", SWEEP_USAGE)?;
    let vocab = need(args.vocab.or(ctx.path("vocab")?), "--vocab", SWEEP_USAGE)?;
    let dataset = need(args.dataset.or(ctx.path("dataset")?), "--dataset", SWEEP_USAGE)?;
    let family = RuleFamily::parse(&need(
        args.family.or(ctx.string("family")?),
        "--family",
        SWEEP_USAGE,
    )?)?;
    let thresholds: Vec<f64> = need(
        args.thresholds.or(ctx.string("thresholds")?),
        "--thresholds",
        SWEEP_USAGE,
    )?
    .split(',')
    .map(|p| {
        p.trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad threshold {p:?}")))
    })
    .collect::<Result<_>>()?;
    let cfg = EvalConfig {
        top_n: parse_n_list(&pick(args.n, ctx.string("n")?, "3,5,10".into()))?,
        rules: vec![StoppingRule::Never],
        monte_carlo_runs: pick(args.runs, ctx.usize("runs")?, 10),
        base_seed: ctx.seed,
        precision_floor: pick(args.precision_floor, ctx.f64("precision_floor")?, 0.90),
    };
    let (ix, v, ds) = load_triple(&index, &vocab, &dataset)?;
    let reports = sweep(&ix, &v, &ds, family, &thresholds, &cfg)?;
    let refs: Vec<&eval::EvalReport> = reports.iter().collect();
    write_csv_to(args.out.or(ctx.path("out")?), |w| {
        eval::write_report_csv(w, &refs)
    })
}

const PROFILE_USAGE: &str =
    "anybow profile --index <file> --vocab <file> --dataset <file> [--seed S] [--out profile.csv]";

fn cmd_profile(ctx: &Ctx, args: ProfileArgs) -> Result<()> {
    let index = need(args.index.or(ctx.path("index")?), "--index", PROFILE_USAGE)?;
    let vocab = need(args.vocab.or(ctx.path("vocab")?), "--vocab", PROFILE_USAGE)?;
    let dataset = need(args.dataset.or(ctx.path("dataset")?), "--dataset", PROFILE_USAGE)?;
    let (ix, v, ds) = load_triple(&index, &vocab, &dataset)?;
    let report = features_needed_profile(&ix, &v, &ds, ctx.seed)?;
    write_csv_to(args.out.or(ctx.path("out")?), |w| {
        eval::write_profile_csv(w, &report)
    })?;
    if let Some(path) = args.deciles_out.or(ctx.path("deciles_out")?) {
        let mut w = BufWriter::new(File::create(&path)?);
        eval::write_decile_csv(&mut w, &report)?;
        w.flush()?;
        ctx.info(format!("wrote decile histogram to {}", path.display()));
    } else {
        for (i, count) in report.decile_counts.iter().enumerate() {
            ctx.info(format!(
                "{:>3}%-{:>3}% of features: {count} queries",
                i * 10,
                (i + 1) * 10
            ));
        }
    }
    Ok(())
}

const RACE_USAGE: &str =
    "anybow race --mu1 X --mu2 Y --delta D --trials N [--seed S] [--out race.csv]";

fn cmd_race(ctx: &Ctx, args: RaceArgs) -> Result<()> {
    let mu1 = need(args.mu1.or(ctx.f64("mu1")?), "--mu1", RACE_USAGE)?;
    let mu2 = need(args.mu2.or(ctx.f64("mu2")?), "--mu2", RACE_USAGE)?;
    let delta = need(args.delta.or(ctx.f64("delta")?), "--delta", RACE_USAGE)?;
    let trials = need(args.trials.or(ctx.usize("trials")?), "--trials", RACE_USAGE)?;
    let report = race_simulate(mu1, mu2, delta, trials, ctx.seed)?;
    write_csv_to(args.out.or(ctx.path("out")?), |w| {
        writeln!(w, "mu1,mu2,delta,trials,seed,error_rate,mean_stop_time")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            mu1, mu2, delta, trials, ctx.seed, report.error_rate, report.mean_stop_time
        )
    })
}

fn write_csv_to(
    out: Option<PathBuf>,
    write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(&path)?);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout().lock();
            let mut w = BufWriter::new(stdout);
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}
