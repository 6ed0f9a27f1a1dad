use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use convrank::checkpoint::{load_checkpoint, load_user_vector, save_checkpoint, save_user_vector, UserVector};
use convrank::config::RunConfig;
use convrank::corpus::{
    dataset_stats, extract_corpus, load_examples, partition_of, read_trees, save_examples, with_negatives, write_trees,
    Example, Label, Partition, PostTree,
};
use convrank::embed::{encode_all, EncodedExample, Feature};
use convrank::eval::{
    ablation_sweep, accuracy_precision_correlation, build_pools, classifier_accuracy, count_wins, encode_pools,
    load_pools, save_pools, AblationGrid, EvalReport, SeriesPoint, MIN_CORRELATION_POINTS,
};
use convrank::model::{Arch, FeatureSet, ModelParams};
use convrank::pipeline::{build_examples, build_vocabulary, ingest};
use convrank::synth::{generate, SynthConfig};
use convrank::train::{adapt_new_user, mean_score_with_author, train_with_monitor, TableSizes};
use convrank::vocab::{normalize, Dictionary, Vocabulary};
use convrank::{Error, Result};

const TREES: &str = "trees.jsonl";
const VOCAB: &str = "vocab.bin";
const MODEL: &str = "model.ckpt";
const POOLS: &str = "pools.bin";

/// Response selection for threaded conversations.
///
/// Stages read and write fixed file names inside the work directory:
/// ingest -> trees.jsonl, vocab -> vocab.bin, examples -> {train,dev,test}.bin,
/// train -> model.ckpt and train.tsv, eval -> eval.tsv.
#[derive(Parser, Debug)]
#[command(name = "convrank", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training workers and evaluation threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override any configuration key, e.g. `--set lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic comment dump with planted context and author signal.
    Synth(SynthArgs),
    /// Parse a JSONL dump and link comments into trees.
    Ingest { dump: PathBuf },
    /// Write CDF tables of the tree store to <work>/stats/.
    Stats,
    /// Build the n-gram vocabulary and user population.
    Vocab,
    /// Extract examples, sample negatives and split by post.
    Examples,
    /// Train a model on the train split, selecting on dev.
    Train {
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        features: Option<FeatureSet>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Also evaluate test P@1 at every checkpoint and write series.tsv.
        #[arg(long)]
        track: bool,
    },
    /// Evaluate P@1 on test pools.
    Eval {
        /// Pool file to evaluate instead of sampling from the test split.
        #[arg(long)]
        pools: Option<PathBuf>,
        /// Pool size N.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Learn an author vector for a user outside the population.
    Adapt {
        #[arg(long)]
        user: String,
        /// Dump with the user's conversations; defaults to the tree store.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score candidate responses for an ad-hoc conversation.
    Rank {
        /// Context messages, one per line, oldest first.
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long)]
        input: String,
        /// Author name from the user population.
        #[arg(long, conflicts_with = "user_vector")]
        author: Option<String>,
        /// Author vector written by `adapt`.
        #[arg(long)]
        user_vector: Option<PathBuf>,
        /// Candidate responses, one per line.
        #[arg(long)]
        candidates: PathBuf,
    },
    /// Train the context-length and feature-subset grids.
    Sweep {
        /// Context lengths, comma separated.
        #[arg(long, value_delimiter = ',')]
        context_lengths: Option<Vec<usize>>,
        /// Pool sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        pool_sizes: Option<Vec<usize>>,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML generator settings.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    posts: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    if let Some(t) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(args) => cmd_synth(&cli.global, args),
        Command::Ingest { dump } => cmd_ingest(&cfg, &dump),
        Command::Stats => cmd_stats(&cfg),
        Command::Vocab => cmd_vocab(&cfg),
        Command::Examples => cmd_examples(&cfg),
        Command::Train {
            arch,
            features,
            lr,
            epochs,
            track,
        } => {
            let mut cfg = cfg;
            cfg.arch = arch.unwrap_or(cfg.arch);
            cfg.features = features.unwrap_or(cfg.features);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.validate()?;
            cmd_train(&cfg, track)
        }
        Command::Eval { pools, n, count } => {
            let mut cfg = cfg;
            cfg.pool_size = n.unwrap_or(cfg.pool_size);
            cfg.pool_count = count.unwrap_or(cfg.pool_count);
            cfg.validate()?;
            cmd_eval(&cfg, pools.as_deref())
        }
        Command::Adapt { user, dump, out } => cmd_adapt(&cfg, &user, dump.as_deref(), out),
        Command::Rank {
            context,
            input,
            author,
            user_vector,
            candidates,
        } => cmd_rank(
            &cfg,
            context.as_deref(),
            &input,
            author.as_deref(),
            user_vector.as_deref(),
            &candidates,
        ),
        Command::Sweep {
            context_lengths,
            pool_sizes,
        } => cmd_sweep(&cfg, context_lengths, pool_sizes),
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut table: toml::Table = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse()
                .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for kv in &g.overrides {
        let one: toml::Table = kv
            .parse()
            .or_else(|_| {
                // Bare strings: `--set arch=single`.
                let (k, v) = kv.split_once('=').ok_or(())?;
                format!("{} = {:?}", k.trim(), v.trim()).parse().map_err(|_| ())
            })
            .map_err(|_| Error::Config(format!("bad override `{kv}`, expected KEY=VALUE")))?;
        table.extend(one);
    }
    let mut cfg = RunConfig::from_toml(&table.to_string())?;
    if let Some(d) = &g.work_dir {
        cfg.work_dir = d.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.threads {
        cfg.workers = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_trees(cfg: &RunConfig) -> Result<Vec<PostTree>> {
    read_trees(open(&cfg.path(TREES))?)
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    Vocabulary::load(open(&cfg.path(VOCAB))?)
}

fn load_split(cfg: &RunConfig, name: &str) -> Result<Vec<Example>> {
    load_examples(open(&cfg.path(&format!("{name}.bin")))?)
}

fn load_model(cfg: &RunConfig, vocab: &Vocabulary) -> Result<ModelParams> {
    Ok(load_checkpoint(open(&cfg.path(MODEL))?, vocab)?.params)
}

fn cmd_synth(g: &Global, args: SynthArgs) -> Result<()> {
    let mut sc = match &args.synth_config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    sc.posts = args.posts.unwrap_or(sc.posts);
    sc.users = args.users.unwrap_or(sc.users);
    sc.seed = g.seed.unwrap_or(sc.seed);
    let corpus = generate(&sc)?;
    let mut w = create(&args.out)?;
    corpus.write_jsonl(&mut w, sc.seed)?;
    w.flush()?;
    println!(
        "wrote {} posts and {} comments to {}",
        corpus.posts.len(),
        corpus.comments.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_ingest(cfg: &RunConfig, dump: &Path) -> Result<()> {
    let (forest, skipped) = ingest(open(dump)?, cfg.strict)?;
    let mut w = create(&cfg.path(TREES))?;
    write_trees(&mut w, &forest.trees)?;
    w.flush()?;
    let comments: usize = forest.trees.iter().map(PostTree::len).sum();
    println!(
        "{} trees, {comments} comments, {} orphans dropped, {skipped} malformed lines skipped",
        forest.trees.len(),
        forest.orphans.len()
    );
    Ok(())
}

fn cmd_stats(cfg: &RunConfig) -> Result<()> {
    let trees = load_trees(cfg)?;
    let dir = cfg.path("stats");
    dataset_stats(&trees).write_dir(&dir)?;
    println!("wrote CDF tables to {}", dir.display());
    Ok(())
}

fn cmd_vocab(cfg: &RunConfig) -> Result<()> {
    let trees = load_trees(cfg)?;
    let (vocab, report) = build_vocabulary(&trees, &cfg.vocab(), cfg.max_post_size)?;
    let mut w = create(&cfg.path(VOCAB))?;
    vocab.save(&mut w)?;
    w.flush()?;
    println!(
        "{} of {} unigrams, {} of {} bigrams, {} users",
        report.unigrams_kept,
        report.distinct_unigrams,
        report.bigrams_kept,
        report.distinct_bigrams,
        vocab.users.len()
    );
    Ok(())
}

fn cmd_examples(cfg: &RunConfig) -> Result<()> {
    let trees = load_trees(cfg)?;
    let vocab = load_vocab(cfg)?;
    let data = build_examples(&trees, &vocab, &cfg.extract(), &cfg.ratios())?;
    for (name, set) in [
        ("train", &data.split.train),
        ("dev", &data.split.dev),
        ("test", &data.split.test),
    ] {
        let mut w = create(&cfg.path(&format!("{name}.bin")))?;
        save_examples(&mut w, set)?;
        w.flush()?;
    }
    println!(
        "{} positives; train {}, dev {}, test {}; {} oversized posts skipped",
        data.positives,
        data.split.train.len(),
        data.split.dev.len(),
        data.split.test.len(),
        data.mega_threads.len()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, track: bool) -> Result<()> {
    let vocab = load_vocab(cfg)?;
    let train = encode_all(&load_split(cfg, "train")?, &vocab.ngrams);
    let dev = encode_all(&load_split(cfg, "dev")?, &vocab.ngrams);
    let pools = if track {
        let test = load_split(cfg, "test")?;
        let pools = build_pools(&test, cfg.pool_size, cfg.pool_count, cfg.pool_seed())?;
        Some(encode_pools(&pools, &vocab.ngrams))
    } else {
        None
    };
    let sizes = TableSizes {
        ngrams: vocab.ngrams.len(),
        users: vocab.users.len(),
    };
    let tc = cfg.train();
    let mut series = Vec::new();
    let mut monitor = |m: &ModelParams, r: &convrank::train::CheckpointRecord| -> Result<()> {
        if let Some(pools) = &pools {
            let wins = count_wins(m, pools)?;
            series.push(SeriesPoint {
                checkpoint: r.checkpoint,
                examples: r.examples,
                dev_accuracy: r.dev.accuracy,
                p_at_1: wins as f64 / pools.len() as f64,
            });
        }
        Ok(())
    };
    let start = Instant::now();
    let (model, report) = train_with_monitor(&train, &dev, sizes, &tc, &mut monitor)?;
    info!("trained in {:.1}s", start.elapsed().as_secs_f64());
    let mut w = create(&cfg.path(MODEL))?;
    save_checkpoint(&mut w, &model, &vocab, cfg.seed)?;
    w.flush()?;
    let mut w = create(&cfg.path("train.tsv"))?;
    report.write_tsv(&mut w)?;
    w.flush()?;
    let best = report.best_record();
    println!(
        "best checkpoint {} after {} examples: dev accuracy {:.4} ({:?})",
        best.checkpoint, best.examples, best.dev.accuracy, report.stop
    );
    if let Some(pools) = &pools {
        let final_p = count_wins(&model, pools)?;
        let mut er = EvalReport::new(final_p, pools.len(), cfg.pool_size);
        let pairs: Vec<(f64, f64)> = series.iter().map(|p| (p.dev_accuracy, p.p_at_1)).collect();
        er.correlation = Some(accuracy_precision_correlation(&pairs).map_err(|e| e.to_string()));
        er.series = series;
        let mut w = create(&cfg.path("series.tsv"))?;
        er.write_tsv(&mut w)?;
        w.flush()?;
        if er.series.len() < MIN_CORRELATION_POINTS {
            log::warn!("only {} checkpoints in the series", er.series.len());
        }
        println!("{}", er.summary());
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, pool_file: Option<&Path>) -> Result<()> {
    let vocab = load_vocab(cfg)?;
    let model = load_model(cfg, &vocab)?;
    let (pools, test) = match pool_file {
        Some(p) => (load_pools(open(p)?)?, None),
        None => {
            let test = load_split(cfg, "test")?;
            let pools = build_pools(&test, cfg.pool_size, cfg.pool_count, cfg.pool_seed())?;
            let mut w = create(&cfg.path(POOLS))?;
            save_pools(&mut w, &pools)?;
            w.flush()?;
            (pools, Some(test))
        }
    };
    let n = pools.first().map_or(cfg.pool_size, |p| p.len());
    let encoded = encode_pools(&pools, &vocab.ngrams);
    let mut report = EvalReport::new(count_wins(&model, &encoded)?, encoded.len(), n);
    if let Some(test) = test {
        report.accuracy = Some(classifier_accuracy(&model, &encode_all(&test, &vocab.ngrams))?);
    }
    let mut w = create(&cfg.path("eval.tsv"))?;
    report.write_tsv(&mut w)?;
    w.flush()?;
    println!("{}", report.summary());
    Ok(())
}

fn cmd_adapt(cfg: &RunConfig, user: &str, dump: Option<&Path>, out: Option<PathBuf>) -> Result<()> {
    let vocab = load_vocab(cfg)?;
    let model = load_model(cfg, &vocab)?;
    if vocab.users.get(user).is_some() {
        log::warn!("`{user}` is already in the user population");
    }
    let trees = match dump {
        Some(p) => ingest(open(p)?, cfg.strict)?.0.trees,
        None => load_trees(cfg)?,
    };
    let only = Dictionary::from_ranked(vec![(user.to_string(), 1)])?;
    let positives = extract_corpus(&trees, &cfg.extract(), &only)?.positives;
    if positives.is_empty() {
        return Err(Error::Empty("the user's conversation history"));
    }
    let ratios = cfg.ratios();
    let (history, held_out): (Vec<Example>, Vec<Example>) = positives
        .into_iter()
        .partition(|e| partition_of(&e.post_id, &ratios) == Partition::Train);
    // Negatives come from the user's own responses when there are enough.
    let history = match with_negatives(history.clone(), cfg.neg_per_pos, cfg.extract().seed) {
        Ok(h) => h,
        Err(Error::Sampling(_)) => history,
        Err(e) => return Err(e),
    };
    let history = encode_all(&history, &vocab.ngrams);
    let adaptation = adapt_new_user(&model, &history, &cfg.adapt())?;
    let out = out.unwrap_or_else(|| cfg.path(&format!("user-{user}.bin")));
    let mut w = create(&out)?;
    save_user_vector(
        &mut w,
        &UserVector {
            name: user.to_string(),
            vector: adaptation.vector.clone(),
        },
    )?;
    w.flush()?;
    println!("adapted on {} examples; wrote {}", history.len(), out.display());
    let held_out: Vec<EncodedExample> = encode_all(&held_out, &vocab.ngrams)
        .into_iter()
        .filter(|e| e.label == Label::Positive)
        .collect();
    if !held_out.is_empty() {
        let before = mean_score_with_author(&model, &held_out, &adaptation.initial)?;
        let after = mean_score_with_author(&model, &held_out, &adaptation.vector)?;
        println!(
            "mean score on {} held-out responses: {before:.4} -> {after:.4}",
            held_out.len()
        );
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

fn cmd_rank(
    cfg: &RunConfig,
    context: Option<&Path>,
    input: &str,
    author: Option<&str>,
    user_vector: Option<&Path>,
    candidates: &Path,
) -> Result<()> {
    let vocab = load_vocab(cfg)?;
    let model = load_model(cfg, &vocab)?;
    let context: Vec<Vec<String>> = match context {
        Some(p) => read_lines(p)?.iter().map(|l| normalize(l)).collect(),
        None => Vec::new(),
    };
    let candidates = read_lines(candidates)?;
    if candidates.is_empty() {
        return Err(Error::Empty("candidate file"));
    }
    let author_vec = match (author, user_vector) {
        (Some(name), _) => {
            let i = vocab
                .users
                .get(name)
                .ok_or_else(|| Error::Config(format!("`{name}` is not in the user population")))?;
            model.tables.user.row(i).to_vec()
        }
        (None, Some(p)) => load_user_vector(open(p)?)?.vector,
        (None, None) => {
            if model.config.features.contains(Feature::Author) {
                return Err(Error::Config("this model needs --author or --user-vector".into()));
            }
            vec![0.0; model.config.user_dim]
        }
    };
    let mut scored = Vec::with_capacity(candidates.len());
    for text in &candidates {
        let ex = Example {
            post_id: String::new(),
            source_id: String::new(),
            context: context.clone(),
            input: normalize(input),
            author: 0,
            response: normalize(text),
            label: Label::Positive,
        };
        let enc = EncodedExample::new(&ex, &vocab.ngrams);
        let score = model.forward(&model.featurize_with_author(&enc, &author_vec)?)?.score();
        scored.push((score, text));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = io::stdout().lock();
    for (score, text) in scored {
        writeln!(out, "{score:.6}\t{text}")?;
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, context_lengths: Option<Vec<usize>>, pool_sizes: Option<Vec<usize>>) -> Result<()> {
    let trees = load_trees(cfg)?;
    let vocab = load_vocab(cfg)?;
    let mut grid = AblationGrid {
        pool_count: cfg.pool_count,
        pool_seed: cfg.pool_seed(),
        ..Default::default()
    };
    grid.context_lengths = context_lengths.unwrap_or(grid.context_lengths);
    grid.pool_sizes = pool_sizes.unwrap_or(grid.pool_sizes);
    let longest = grid.context_lengths.iter().copied().max().unwrap_or(0);
    let extract = convrank::corpus::ExtractConfig {
        max_context: longest,
        ..cfg.extract()
    };
    let data = build_examples(&trees, &vocab, &extract, &cfg.ratios())?;
    let (context, features) = ablation_sweep(
        &data.split.train,
        &data.split.dev,
        &data.split.test,
        &vocab,
        &cfg.train(),
        &grid,
    )?;
    for (name, table) in [("ablation_context.tsv", &context), ("ablation_features.tsv", &features)] {
        let mut w = create(&cfg.path(name))?;
        w.write_all(table.to_tsv().as_bytes())?;
        w.flush()?;
    }
    print!("{}\n{}", context.to_tsv(), features.to_tsv());
    Ok(())
}
