//! Command-line pipeline: corpus generation, embedding import, the
//! two-phase trainer, encoding, Hamming retrieval, metrics, the
//! alignment-weight sweep, and the gradient audit.
//!
//! Exit codes: 0 success, 1 contract violation (diagnostic on stderr),
//! 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::checks::gradient_suite;
use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::embedding::GloveTable;
use crate::error::{Error, Result};
use crate::evaluation::{annotate_topk, mean_average_precision, overall_prf, pr_curve, RelevanceRule};
use crate::models::ViewModel;
use crate::objective::LabelMatrix;
use crate::retrieval::PackedCodeSet;
use crate::synth::{generate_synthetic, split, SplitSpec, SynthConfig};
use crate::trainer::{pretrain_view, train, TrainingSet};

/// Alignment weights exercised by `sweep-lambda`.
pub const LAMBDA_GRID: [f64; 5] = [0.05, 0.2, 0.5, 0.8, 1.0];

#[derive(Parser)]
#[command(
    name = "crossview",
    version,
    about = "Shared binary codes for paired image-feature/text data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus and its embedding table.
    GenData(GenDataArgs),
    /// Validate a word-vector table, optionally pruning it to a corpus.
    ImportGlove(ImportGloveArgs),
    /// Classification-only pretraining of one view.
    Pretrain(PretrainArgs),
    /// Full two-phase training of both views.
    Train(TrainArgs),
    /// Binary codes for corpus instances under a trained view.
    Encode(EncodeArgs),
    /// Validate a code file and cut it down to a split role.
    Index(IndexArgs),
    /// Rank or radius-lookup queries against an indexed database.
    Retrieve(RetrieveArgs),
    /// Mean average precision of Hamming ranking.
    EvalMap(EvalArgs),
    /// Precision-recall over lookup radii, as CSV.
    EvalPr(EvalPrArgs),
    /// Top-k category prediction with overall precision/recall/F1.
    Annotate(AnnotateArgs),
    /// Train and evaluate across the alignment-weight grid.
    SweepLambda(SweepArgs),
    /// Finite-difference audit of all gradients.
    GradCheck,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out_corpus: PathBuf,
    #[arg(long)]
    out_glove: PathBuf,
    #[arg(long, default_value_t = 2500)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    categories: usize,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    #[arg(long, default_value_t = 12)]
    vocab_per_class: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    max_words: usize,
    #[arg(long, default_value_t = 16)]
    glove_dim: usize,
    /// Also write a query/database split.
    #[arg(long, requires = "n_query")]
    out_split: Option<PathBuf>,
    #[arg(long)]
    n_query: Option<usize>,
    /// Restrict the training pool to this many database instances.
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long, default_value_t = 1)]
    split_seed: u64,
}

#[derive(Args)]
struct ImportGloveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Keep only tokens that appear in this corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ViewArg {
    Image,
    Text,
}

impl ViewArg {
    fn name(self) -> &'static str {
        match self {
            ViewArg::Image => "image",
            ViewArg::Text => "text",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Query,
    Database,
    Train,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    glove: PathBuf,
    /// Restrict instances to one role of this split.
    #[arg(long, requires = "role")]
    split: Option<PathBuf>,
    #[arg(long)]
    role: Option<Role>,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    view: ViewArg,
    #[arg(long)]
    out: PathBuf,
    /// Per-step loss records, one JSON object per line.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    view: ViewArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    codes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, requires = "role")]
    split: Option<PathBuf>,
    #[arg(long)]
    role: Option<Role>,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["k", "radius"])))]
struct RetrieveArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Hamming-ranked top k per query.
    #[arg(long)]
    k: Option<usize>,
    /// All ids within this Hamming radius per query.
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    database: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalPrArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    database: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    view: ViewArg,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Per-instance predictions, one JSON object per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    glove: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

/// Parses and executes `args` (first element is the program name).
/// Returns the process exit code instead of exiting, so tests can drive it.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too, with exit code 0.
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::ImportGlove(args) => import_glove(args),
        Command::Pretrain(args) => run_pretrain(args),
        Command::Train(args) => run_train(args),
        Command::Encode(args) => run_encode(args),
        Command::Index(args) => run_index(args),
        Command::Retrieve(args) => run_retrieve(args),
        Command::EvalMap(args) => run_eval_map(args),
        Command::EvalPr(args) => run_eval_pr(args),
        Command::Annotate(args) => run_annotate(args),
        Command::SweepLambda(args) => run_sweep(args),
        Command::GradCheck => run_grad_check(),
    }
}

// ---- shared plumbing ----

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn role_ids(spec: &SplitSpec, role: Role) -> &[u64] {
    match role {
        Role::Query => &spec.query_ids,
        Role::Database => &spec.database_ids,
        Role::Train => &spec.train_ids,
    }
}

/// The corpus slice selected by `--split`/`--role`, or the whole corpus.
fn select(corpus: &Corpus, split: &Option<PathBuf>, role: Option<Role>) -> Result<Corpus> {
    match (split, role) {
        (Some(path), Some(role)) => {
            let spec = SplitSpec::read(path)?;
            corpus.subset_by_ids(role_ids(&spec, role))
        }
        _ => Ok(corpus.clone()),
    }
}

fn label_matrix(corpus: &Corpus) -> Result<LabelMatrix> {
    let rows: Vec<Vec<usize>> = corpus.instances().iter().map(|i| i.labels.clone()).collect();
    LabelMatrix::from_rows(corpus.categories(), &rows)
}

fn load_set(data: &DataArgs, config: &RunConfig) -> Result<(Corpus, GloveTable, TrainingSet)> {
    let corpus = Corpus::read(&data.corpus)?;
    let table = GloveTable::load(&data.glove)?;
    let selected = select(&corpus, &data.split, data.role)?;
    let set = selected.to_training_set(&table, config.model.oov)?;
    Ok((corpus, table, set))
}

fn build_models(config: &RunConfig, corpus: &Corpus, table: &GloveTable) -> Result<(ViewModel, ViewModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    config.build_models(
        corpus.feature_dim(),
        table.dimension(),
        corpus.max_words(),
        corpus.categories(),
        &mut rng,
    )
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Format(format!("record serialization failed: {e}")))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn emit<T: Serialize>(record: &T, out: &Option<PathBuf>) -> Result<()> {
    let line = serde_json::to_string(record)
        .map_err(|e| Error::Format(format!("record serialization failed: {e}")))?;
    println!("{line}");
    if let Some(path) = out {
        std::fs::write(path, format!("{line}\n"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PretrainLogRecord {
    iteration: u64,
    loss: f64,
    rate: f64,
}

#[derive(Serialize)]
struct TrainLogRecord {
    iteration: u64,
    l_image: f64,
    l_text: f64,
    j_align: f64,
    total: f64,
    rate: f64,
}

#[derive(Serialize)]
struct MapRecord {
    map: f64,
    queries: usize,
    database: usize,
    code_bits: usize,
}

#[derive(Serialize)]
struct PrfRecord {
    k: usize,
    o_precision: f64,
    o_recall: f64,
    o_f1: f64,
}

#[derive(Serialize)]
struct SweepRecord {
    lambda: f64,
    map_i2t: f64,
    map_t2i: f64,
    map_i2i: f64,
    o_f1: f64,
}

// ---- commands ----

fn gen_data(args: GenDataArgs) -> Result<()> {
    let config = SynthConfig {
        n: args.n,
        categories: args.categories,
        feature_dim: args.feature_dim,
        vocab_per_class: args.vocab_per_class,
        noise: args.noise,
        seed: args.seed,
        max_words: args.max_words,
        glove_dim: args.glove_dim,
    };
    let (corpus, table) = generate_synthetic(&config)?;
    corpus.write(&args.out_corpus)?;
    table.write(&args.out_glove)?;
    if let Some(out_split) = &args.out_split {
        let n_query = args.n_query.expect("clap enforces n_query with out_split");
        let spec = split(&corpus, n_query, args.n_train, args.split_seed)?;
        spec.write(out_split)?;
    }
    eprintln!(
        "wrote {} instances, {} tokens",
        corpus.len(),
        table.len()
    );
    Ok(())
}

fn import_glove(args: ImportGloveArgs) -> Result<()> {
    let mut table = GloveTable::load(&args.input)?;
    if let Some(corpus_path) = &args.corpus {
        let corpus = Corpus::read(corpus_path)?;
        let mut keep = std::collections::HashSet::new();
        for inst in corpus.instances() {
            for token in &inst.tokens {
                keep.insert(crate::embedding::normalize_token(token));
            }
        }
        table.retain_tokens(&keep);
        if table.is_empty() {
            return Err(Error::Contract(
                "no table tokens survive pruning to the corpus vocabulary".into(),
            ));
        }
    }
    table.write(&args.output)?;
    eprintln!("wrote {} vectors of dimension {}", table.len(), table.dimension());
    Ok(())
}

fn run_pretrain(args: PretrainArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    let (corpus, table, set) = load_set(&args.data, &config)?;
    let (image, text) = build_models(&config, &corpus, &table)?;
    let (mut model, view) = match args.view {
        ViewArg::Image => (image, crate::trainer::View::Image),
        ViewArg::Text => (text, crate::trainer::View::Text),
    };
    let history = pretrain_view(&mut model, view, &set, &config.train)?;
    if let Some(log) = &args.log {
        let records: Vec<PretrainLogRecord> = history
            .iter()
            .enumerate()
            .map(|(i, &loss)| PretrainLogRecord {
                iteration: i as u64,
                loss,
                rate: config.train.pretrain_rate.rate(i as u64),
            })
            .collect();
        write_jsonl(log, &records)?;
    }
    let iterations = history.len() as u64;
    Checkpoint {
        meta: config.to_toml(),
        iteration: iterations,
        models: vec![(args.view.name().to_string(), model)],
    }
    .write(&args.out)?;
    eprintln!("pretrained {} view for {iterations} iterations", args.view.name());
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(lambda) = args.lambda {
        config.train.lambda = lambda;
    }
    config.validate()?;
    let (corpus, table, set) = load_set(&args.data, &config)?;
    let (image, text) = build_models(&config, &corpus, &table)?;
    let state = train(image, text, &set, &config.train)?;
    if let Some(log) = &args.log {
        let records: Vec<TrainLogRecord> = state
            .history
            .iter()
            .enumerate()
            .map(|(i, r)| TrainLogRecord {
                iteration: i as u64,
                l_image: r.l_image,
                l_text: r.l_text,
                j_align: r.j_align,
                total: r.total,
                rate: config.train.joint_rate.rate(i as u64),
            })
            .collect();
        write_jsonl(log, &records)?;
    }
    let final_total = state.history.last().map(|r| r.total);
    Checkpoint {
        meta: config.to_toml(),
        iteration: state.iteration,
        models: vec![("image".into(), state.image), ("text".into(), state.text)],
    }
    .write(&args.out)?;
    match final_total {
        Some(total) => eprintln!("trained {} joint iterations, final total {total:.6}", state.iteration),
        None => eprintln!("trained with no joint iterations"),
    }
    Ok(())
}

fn run_encode(args: EncodeArgs) -> Result<()> {
    let mut ckpt = Checkpoint::read(&args.checkpoint)?;
    let model = ckpt.take_model(args.view.name())?;
    let config = RunConfig::from_toml(&ckpt.meta)?;
    let (_, _, set) = load_set(&args.data, &config)?;
    let x = match args.view {
        ViewArg::Image => set.features(),
        ViewArg::Text => set.text_vectors(),
    };
    let codes = model.codes(x)?;
    let packed = PackedCodeSet::pack(&codes, set.ids())?;
    packed.write(&args.out)?;
    eprintln!("encoded {} instances at {} bits", packed.len(), packed.code_bits());
    Ok(())
}

fn run_index(args: IndexArgs) -> Result<()> {
    let codes = PackedCodeSet::read(&args.codes)?;
    let indexed = match (&args.split, args.role) {
        (Some(path), Some(role)) => {
            let spec = SplitSpec::read(path)?;
            codes.subset(role_ids(&spec, role))?
        }
        _ => codes,
    };
    indexed.write(&args.out)?;
    eprintln!("indexed {} codes at {} bits", indexed.len(), indexed.code_bits());
    Ok(())
}

#[derive(Serialize)]
struct RankedRecord {
    query_id: u64,
    hits: Vec<Hit>,
}

#[derive(Serialize)]
struct Hit {
    id: u64,
    distance: u32,
}

#[derive(Serialize)]
struct LookupRecord {
    query_id: u64,
    ids: Vec<u64>,
}

fn run_retrieve(args: RetrieveArgs) -> Result<()> {
    let database = PackedCodeSet::read(&args.index)?;
    let queries = PackedCodeSet::read(&args.queries)?;
    let mut lines = Vec::with_capacity(queries.len());
    match (args.k, args.radius) {
        (Some(k), None) => {
            for (i, &query_id) in queries.ids().iter().enumerate() {
                let hits = database
                    .rank(queries.row(i), k)?
                    .into_iter()
                    .map(|h| Hit { id: h.id, distance: h.distance })
                    .collect();
                lines.push(
                    serde_json::to_string(&RankedRecord { query_id, hits })
                        .map_err(|e| Error::Format(e.to_string()))?,
                );
            }
        }
        (None, Some(radius)) => {
            for (i, &query_id) in queries.ids().iter().enumerate() {
                let ids = database.lookup(queries.row(i), radius)?;
                lines.push(
                    serde_json::to_string(&LookupRecord { query_id, ids })
                        .map_err(|e| Error::Format(e.to_string()))?,
                );
            }
        }
        // The argument group guarantees exactly one mode.
        _ => unreachable!("clap enforces exactly one of --k/--radius"),
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, lines.join("\n") + "\n")?;
            eprintln!("wrote {} result rows", lines.len());
        }
        None => {
            for line in lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn eval_inputs(
    queries: &Path,
    database: &Path,
    corpus: &Path,
) -> Result<(PackedCodeSet, PackedCodeSet, Corpus, Corpus)> {
    let queries = PackedCodeSet::read(queries)?;
    let database = PackedCodeSet::read(database)?;
    let corpus = Corpus::read(corpus)?;
    let query_corpus = corpus.subset_by_ids(queries.ids())?;
    let database_corpus = corpus.subset_by_ids(database.ids())?;
    Ok((queries, database, query_corpus, database_corpus))
}

fn run_eval_map(args: EvalArgs) -> Result<()> {
    let (queries, database, query_corpus, database_corpus) =
        eval_inputs(&args.queries, &args.database, &args.corpus)?;
    let qlabels = label_matrix(&query_corpus)?;
    let dlabels = label_matrix(&database_corpus)?;
    let rule = RelevanceRule::new(queries.ids(), &qlabels, database.ids(), &dlabels)?;
    let map = mean_average_precision(&queries, &database, &rule)?;
    emit(
        &MapRecord {
            map,
            queries: queries.len(),
            database: database.len(),
            code_bits: queries.code_bits(),
        },
        &args.out,
    )
}

fn run_eval_pr(args: EvalPrArgs) -> Result<()> {
    let (queries, database, query_corpus, database_corpus) =
        eval_inputs(&args.queries, &args.database, &args.corpus)?;
    let qlabels = label_matrix(&query_corpus)?;
    let dlabels = label_matrix(&database_corpus)?;
    let rule = RelevanceRule::new(queries.ids(), &qlabels, database.ids(), &dlabels)?;
    let curve = pr_curve(&queries, &database, &rule)?;
    curve.write_csv(&args.out)?;
    eprintln!("wrote {} radius points", curve.points.len());
    Ok(())
}

#[derive(Serialize)]
struct PredictionRecord {
    id: u64,
    predictions: Vec<usize>,
}

fn run_annotate(args: AnnotateArgs) -> Result<()> {
    let mut ckpt = Checkpoint::read(&args.checkpoint)?;
    let model = ckpt.take_model(args.view.name())?;
    let config = RunConfig::from_toml(&ckpt.meta)?;
    let (_, _, set) = load_set(&args.data, &config)?;
    let x = match args.view {
        ViewArg::Image => set.features(),
        ViewArg::Text => set.text_vectors(),
    };
    let logits = model.classifier.classify(&model.encode(x)?, &model.params)?;
    let predictions = annotate_topk(&logits, args.k)?;
    if let Some(out) = &args.out {
        let records: Vec<PredictionRecord> = set
            .ids()
            .iter()
            .zip(&predictions)
            .map(|(&id, preds)| PredictionRecord { id, predictions: preds.clone() })
            .collect();
        write_jsonl(out, &records)?;
    }
    let (o_precision, o_recall, o_f1) = overall_prf(&predictions, set.labels())?;
    emit(&PrfRecord { k: args.k, o_precision, o_recall, o_f1 }, &None)
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let mut base = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        base.train.seed = seed;
    }
    let corpus = Corpus::read(&args.corpus)?;
    let table = GloveTable::load(&args.glove)?;
    let spec = SplitSpec::read(&args.split)?;
    if spec.query_ids.is_empty() {
        return Err(Error::Argument("sweep needs a split with a non-empty query set".into()));
    }

    let train_set = corpus.subset_by_ids(&spec.train_ids)?.to_training_set(&table, base.model.oov)?;
    let query_corpus = corpus.subset_by_ids(&spec.query_ids)?;
    let database_corpus = corpus.subset_by_ids(&spec.database_ids)?;
    let query_set = query_corpus.to_training_set(&table, base.model.oov)?;
    let database_set = database_corpus.to_training_set(&table, base.model.oov)?;
    let qlabels = label_matrix(&query_corpus)?;
    let dlabels = label_matrix(&database_corpus)?;

    let mut records = Vec::with_capacity(LAMBDA_GRID.len());
    for &lambda in &LAMBDA_GRID {
        let mut config = base.clone();
        config.train.lambda = lambda;
        config.validate()?;
        let (image, text) = build_models(&config, &corpus, &table)?;
        let state = train(image, text, &train_set, &config.train)?;

        let pack = |model: &ViewModel, set: &TrainingSet, image_view: bool| -> Result<PackedCodeSet> {
            let x = if image_view { set.features() } else { set.text_vectors() };
            PackedCodeSet::pack(&model.codes(x)?, set.ids())
        };
        let query_image = pack(&state.image, &query_set, true)?;
        let query_text = pack(&state.text, &query_set, false)?;
        let db_image = pack(&state.image, &database_set, true)?;
        let db_text = pack(&state.text, &database_set, false)?;

        let rule = RelevanceRule::new(&spec.query_ids, &qlabels, &spec.database_ids, &dlabels)?;
        let map_i2t = mean_average_precision(&query_image, &db_text, &rule)?;
        let map_t2i = mean_average_precision(&query_text, &db_image, &rule)?;
        let map_i2i = mean_average_precision(&query_image, &db_image, &rule)?;

        let logits = state
            .image
            .classifier
            .classify(&state.image.encode(query_set.features())?, &state.image.params)?;
        let k = 3.min(corpus.categories());
        let predictions = annotate_topk(&logits, k)?;
        let (_, _, o_f1) = overall_prf(&predictions, query_set.labels())?;

        eprintln!(
            "lambda {lambda}: i2t {map_i2t:.4}, t2i {map_t2i:.4}, i2i {map_i2i:.4}, o-f1 {o_f1:.4}"
        );
        records.push(SweepRecord { lambda, map_i2t, map_t2i, map_i2i, o_f1 });
    }
    write_jsonl(&args.out, &records)?;
    Ok(())
}

fn run_grad_check() -> Result<()> {
    let reports = gradient_suite()?;
    let mut failed = 0;
    for r in &reports {
        println!(
            "{} {:<28} worst {:>10.3e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.worst
        );
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::Contract(format!("{failed} gradient audits failed")));
    }
    Ok(())
}
