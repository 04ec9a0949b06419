use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use detox_core::corpus::{
    count_tokens, import_csv, load_corpus, roundtrip_study, sample_plan, save_corpus, translate_batch, IdentityProvider,
    Label, LabeledSample, LossyProvider, MtProvider, RemoteMtProvider, SamplingPlan, TranslateOptions,
};
use detox_core::datastore::{load_datastore, save_datastore, Datastore, DatastoreConfig};
use detox_core::decoder::{
    generate_all, load_prompts, save_prompts, BackendKind, BackendResources, Decoder, EnsembleConfig, FilterStage,
    GenerationConfig, GenerationRecord, RetrievalResources,
};
use detox_core::experts::{ExpertPair, ExpertTrainingConfig};
use detox_core::http::ClientConfig;
use detox_core::lm::{load_lm, save_lm, ContextKeyConfig, ContextKeyer, NgramLm, SmoothingConfig, Vocab};
use detox_core::metrics::{EmtResult, ScoreMatrix};
use detox_core::orchestrator::{
    run_ablation, run_continual, run_static, AblationAxis, DataSource, ExperimentConfig, FileData, ScorerKind,
};
use detox_core::scorer::{
    score_batch, BatchOptions, CachedScorer, LexiconScorer, PerspectiveScorer, ScoreCache, ToxicityScorer,
    DEFAULT_ENDPOINT,
};
use detox_core::synth::{ToyConfig, ToyWorld};

#[derive(Parser)]
#[command(name = "detox", version, about = "Decoding-time toxicity mitigation experiments")]
struct Cli {
    /// Log at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Base language model.
    #[command(subcommand)]
    Lm(LmCommand),
    /// Retrieval datastores.
    #[command(subcommand)]
    Datastore(DatastoreCommand),
    /// Expert / anti-expert pairs.
    #[command(subcommand)]
    Experts(ExpertsCommand),
    /// Sample continuations for a prompt file.
    Generate(GenerateArgs),
    /// Score a generations file and report EMT.
    Score(ScoreArgs),
    /// Corpus utilities.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Run an experiment from a config file.
    Run(RunArgs),
    /// Write a synthetic dataset and a matching experiment config.
    Toy(ToyArgs),
}

#[derive(Subcommand)]
enum LmCommand {
    /// Train an n-gram model on JSONL corpora.
    Train {
        /// Training corpora.
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Extra corpora whose words join the vocabulary without training.
        #[arg(long, num_args = 1..)]
        vocab_from: Vec<PathBuf>,
        /// Prompt files whose words join the vocabulary.
        #[arg(long, num_args = 1..)]
        vocab_prompts: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// Interpolation weights, lowest order first.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.6])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        add_k: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perplexity of a corpus under a model.
    Perplexity {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Polarity {
    Toxic,
    Nontoxic,
}

impl From<Polarity> for Label {
    fn from(p: Polarity) -> Label {
        match p {
            Polarity::Toxic => Label::Toxic,
            Polarity::Nontoxic => Label::Nontoxic,
        }
    }
}

#[derive(Args)]
struct KeyArgs {
    /// Context tokens that form a retrieval key.
    #[arg(long, default_value_t = ContextKeyConfig::default().window)]
    window: usize,
    #[arg(long, default_value_t = ContextKeyConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = ContextKeyConfig::default().seed)]
    key_seed: u64,
}

impl KeyArgs {
    fn config(&self) -> ContextKeyConfig {
        ContextKeyConfig {
            dim: self.dim,
            window: self.window,
            seed: self.key_seed,
        }
    }
}

#[derive(Subcommand)]
enum DatastoreCommand {
    /// Build a datastore from the samples of one polarity.
    Build {
        #[arg(long, value_enum)]
        polarity: Polarity,
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Base model, for its vocabulary.
        #[arg(long)]
        lm: PathBuf,
        /// Existing datastore to append to.
        #[arg(long)]
        append_to: Option<PathBuf>,
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a datastore's header and provenance.
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExpertsCommand {
    /// Train an expert on non-toxic and an anti-expert on toxic samples.
    Train {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long, default_value_t = ExpertTrainingConfig::default().base_weight)]
        base_weight: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Before,
    After,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "base_only")]
    backend: BackendKind,
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    top_p: f64,
    /// Continuations per prompt.
    #[arg(long, default_value_t = 25)]
    k: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    max_new_tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Nucleus filter placement; defaults per backend.
    #[arg(long, value_enum)]
    filter_stage: Option<Stage>,
    #[arg(long)]
    toxic: Option<PathBuf>,
    #[arg(long)]
    nontoxic: Option<PathBuf>,
    #[arg(long, default_value_t = DatastoreConfig::default().neighbors)]
    neighbors: usize,
    #[arg(long, default_value_t = DatastoreConfig::default().temperature)]
    knn_temperature: f64,
    /// Directory written by `experts train`.
    #[arg(long)]
    experts: Option<PathBuf>,
}

#[derive(Args)]
struct ScorerArgs {
    /// Lexicon JSON: {"lang": {"word": weight}}.
    #[arg(long, conflicts_with = "perspective")]
    lexicon: Option<PathBuf>,
    /// Use the remote scorer; the key is read from the environment.
    #[arg(long)]
    perspective: bool,
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    endpoint: String,
    /// Persistent score cache.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

impl ScorerArgs {
    fn build(&self) -> Result<Box<dyn ToxicityScorer>> {
        if self.perspective {
            let remote = PerspectiveScorer::from_env(&self.endpoint, &ClientConfig::default())?;
            let cache = match &self.cache {
                Some(p) => ScoreCache::open(p)?,
                None => ScoreCache::in_memory(),
            };
            return Ok(Box::new(CachedScorer::new(remote, cache)));
        }
        match &self.lexicon {
            Some(p) => Ok(Box::new(LexiconScorer::load(p).with_context(|| format!("loading {}", p.display()))?)),
            None => bail!("pass --lexicon or --perspective"),
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    gens: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Largest fraction of continuations allowed to go unscored.
    #[arg(long, default_value_t = 0.1)]
    max_unscored: f64,
    /// Where to write the EMT summary and score matrix as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Identity,
    Lossy,
    Remote,
}

#[derive(Args)]
struct ProviderArgs {
    #[arg(long, value_enum, default_value = "identity")]
    provider: Provider,
    /// Word deletion rate of the lossy provider.
    #[arg(long, default_value_t = 0.0)]
    deletion_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Remote translation endpoint.
    #[arg(long)]
    mt_endpoint: Option<String>,
    /// Environment variable holding the remote API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value_t = 4)]
    mt_max_in_flight: usize,
}

impl ProviderArgs {
    fn build(&self) -> Result<Box<dyn MtProvider>> {
        Ok(match self.provider {
            Provider::Identity => Box::new(IdentityProvider),
            Provider::Lossy => Box::new(LossyProvider::new(self.seed, self.deletion_rate)?),
            Provider::Remote => {
                let Some(endpoint) = &self.mt_endpoint else { bail!("--provider remote needs --mt-endpoint") };
                let key = match &self.api_key_env {
                    Some(var) => Some(std::env::var(var).with_context(|| format!("{var} is not set"))?),
                    None => None,
                };
                Box::new(RemoteMtProvider::new(endpoint.clone(), key, &ClientConfig::default()))
            }
        })
    }
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Seeded sample of a pool without replacement.
    Sample {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Keep only this language.
        #[arg(long)]
        lang: Option<String>,
        #[arg(long)]
        toxic: usize,
        #[arg(long)]
        nontoxic: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Samples and word tokens per language and label.
    Count {
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Count with this model's vocabulary instead of plain words.
        #[arg(long)]
        lm: Option<PathBuf>,
    },
    /// Machine-translate a corpus into another language.
    Translate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        to: String,
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate, back-translate and score every sample.
    Roundtrip {
        #[arg(long = "in")]
        input: PathBuf,
        /// Pivot language.
        #[arg(long)]
        via: String,
        #[command(flatten)]
        provider: ProviderArgs,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a labeled CSV export to JSONL.
    Import {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "comment_text")]
        text_column: String,
        #[arg(long, default_value = "toxicity")]
        label_column: String,
        #[arg(long)]
        id_column: Option<String>,
        #[arg(long)]
        lang: String,
        /// Rows scoring at or above this are toxic.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RunKind {
    Static,
    Continual,
    Ablation,
}

#[derive(Args)]
struct RunArgs {
    #[arg(value_enum)]
    kind: RunKind,
    /// TOML config, or a report.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Ablation axis; defaults to the config's.
    #[arg(long)]
    axis: Option<AblationAxis>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the generation seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pool: usize,
    #[arg(long, default_value_t = 2000)]
    base_sentences: usize,
    #[arg(long, default_value_t = 100)]
    prompts: usize,
    #[arg(long, default_value_t = ToyConfig::default().seed)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Lm(c) => lm(c),
        Command::Datastore(c) => datastore(c),
        Command::Experts(ExpertsCommand::Train { input, lm, base_weight, out }) => {
            let base = Arc::new(load_lm(&lm)?);
            let samples = load_all(&input)?;
            let (toxic, nontoxic): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.label == Label::Toxic);
            let cfg = ExpertTrainingConfig { base_weight, ..Default::default() };
            let pair = ExpertPair::train(&toxic, &nontoxic, base, &cfg)?;
            pair.save(&out)?;
            println!("trained on {} toxic and {} non-toxic samples -> {}", toxic.len(), nontoxic.len(), out.display());
            Ok(())
        }
        Command::Generate(a) => generate(a),
        Command::Score(a) => score(a),
        Command::Corpus(c) => corpus(c),
        Command::Run(a) => run(a),
        Command::Toy(a) => toy(a),
    }
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_corpus(p).with_context(|| format!("loading {}", p.display()))?);
    }
    Ok(out)
}

fn lm(cmd: LmCommand) -> Result<()> {
    match cmd {
        LmCommand::Train { input, vocab_from, vocab_prompts, min_count, order, lambdas, add_k, out } => {
            let train = load_all(&input)?;
            let extra = load_all(&vocab_from)?;
            let mut prompt_texts = Vec::new();
            for p in &vocab_prompts {
                prompt_texts.extend(load_prompts(p)?.into_iter().map(|p| p.text));
            }
            let texts = train.iter().chain(&extra).map(|s| s.text.as_str()).chain(prompt_texts.iter().map(String::as_str));
            let vocab = Arc::new(Vocab::build(texts, min_count));
            let seqs: Vec<_> = train.iter().map(|s| vocab.encode(&s.text, &s.lang)).collect();
            let lm = NgramLm::train(&seqs, order, SmoothingConfig { lambdas, add_k }, vocab.clone())?;
            save_lm(&lm, &out)?;
            println!("order-{order} model over {} tokens, {} sentences -> {}", vocab.len(), seqs.len(), out.display());
        }
        LmCommand::Perplexity { lm, input } => {
            let lm = load_lm(&lm)?;
            let samples = load_corpus(&input)?;
            let mut total = 0.0;
            for s in &samples {
                total += lm.perplexity(&lm.vocab().encode(&s.text, &s.lang).ids)?;
            }
            println!("mean perplexity {:.4} over {} samples", total / samples.len() as f64, samples.len());
        }
    }
    Ok(())
}

fn datastore(cmd: DatastoreCommand) -> Result<()> {
    match cmd {
        DatastoreCommand::Build { polarity, input, lm, append_to, key, out } => {
            let lm = load_lm(&lm)?;
            let label = Label::from(polarity);
            let samples: Vec<_> = load_all(&input)?.into_iter().filter(|s| s.label == label).collect();
            if samples.is_empty() {
                bail!("no {label} samples in the input");
            }
            let ds = match append_to {
                Some(p) => {
                    let old = load_datastore(&p)?;
                    let keyer = ContextKeyer::new(*old.key_config(), lm.vocab_size())?;
                    old.append(&samples, lm.vocab(), &keyer)?
                }
                None => {
                    let keyer = ContextKeyer::new(key.config(), lm.vocab_size())?;
                    Datastore::build(&samples, lm.vocab(), &keyer, label)?
                }
            };
            save_datastore(&ds, &out)?;
            println!("{} entries ({} distinct keys) from {} samples -> {}", ds.len(), ds.distinct_keys(), samples.len(), out.display());
        }
        DatastoreCommand::Info { input } => {
            let ds = load_datastore(&input)?;
            let info = json!({
                "polarity": ds.polarity(),
                "entries": ds.len(),
                "distinct_keys": ds.distinct_keys(),
                "vocab_size": ds.vocab_size(),
                "key": ds.key_config(),
                "provenance": ds.provenance(),
            });
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let base = Arc::new(load_lm(&a.lm)?);
    let mut resources = BackendResources::default();
    match a.backend {
        BackendKind::Retrieval => {
            let (Some(t), Some(n)) = (&a.toxic, &a.nontoxic) else {
                bail!("the retrieval backend needs --toxic and --nontoxic datastores");
            };
            let toxic = load_datastore(t)?;
            let nontoxic = load_datastore(n)?;
            let keyer = ContextKeyer::new(*toxic.key_config(), base.vocab_size())?;
            let cfg = DatastoreConfig {
                neighbors: a.neighbors,
                temperature: a.knn_temperature,
                ..Default::default()
            };
            resources.retrieval = Some(RetrievalResources::new(toxic, nontoxic, keyer, cfg)?);
        }
        BackendKind::Experts => {
            let Some(dir) = &a.experts else { bail!("the experts backend needs --experts") };
            resources.experts = Some(ExpertPair::load(dir, base.clone())?);
        }
        BackendKind::BaseOnly => {}
    }
    let ensemble = EnsembleConfig {
        backend: a.backend,
        alpha: a.alpha,
        top_p: a.top_p,
        filter_stage: a.filter_stage.map(|s| match s {
            Stage::Before => FilterStage::BeforeEnsemble,
            Stage::After => FilterStage::AfterEnsemble,
        }),
    };
    let decoder = Decoder::new(base, resources, ensemble)?;
    let prompts = load_prompts(&a.prompts)?;
    let gen = GenerationConfig {
        continuations: a.k,
        max_new_tokens: a.max_new_tokens,
        seed: a.seed,
        temperature: a.temperature,
    };
    let records = generate_all(&decoder, &prompts, &gen)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    for r in &records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!("{} prompts x {} continuations -> {}", records.len(), a.k, a.out.display());
    Ok(())
}

fn load_generations(path: &Path) -> Result<Vec<GenerationRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn score(a: ScoreArgs) -> Result<()> {
    let records = load_generations(&a.gens)?;
    let scorer = a.scorer.build()?;
    let opts = BatchOptions {
        max_in_flight: a.scorer.max_in_flight,
        max_unscored_fraction: a.max_unscored,
    };
    let batch = score_batch(&records, scorer.as_ref(), &opts)?;
    let mut by_language: BTreeMap<String, ScoreMatrix> = BTreeMap::new();
    for (r, row) in records.iter().zip(&batch.matrix) {
        by_language.entry(r.lang.clone()).or_default().push(row.clone());
    }
    let emt = EmtResult::from_matrices(&by_language)?;
    println!("EMT {:.4} over {} prompts (scorer {})", emt.overall, emt.prompts, batch.scorer_id);
    for (lang, v) in &emt.per_language {
        println!("  {lang}: {v:.4}");
    }
    if let Some(out) = a.out {
        let report = json!({
            "scorer": batch.scorer_id,
            "emt": emt,
            "scores": batch.matrix,
            "failures": batch.failures,
        });
        fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn corpus(cmd: CorpusCommand) -> Result<()> {
    match cmd {
        CorpusCommand::Sample { input, lang, toxic, nontoxic, seed, out } => {
            let pool: Vec<_> = load_all(&input)?
                .into_iter()
                .filter(|s| lang.as_ref().is_none_or(|l| &s.lang == l))
                .collect();
            let chosen = sample_plan(&pool, &SamplingPlan::new(toxic, nontoxic, seed))?;
            save_corpus(&chosen, &out)?;
            println!("{} samples -> {}", chosen.len(), out.display());
        }
        CorpusCommand::Count { input, lm } => {
            let samples = load_all(&input)?;
            let vocab = match lm {
                Some(p) => load_lm(&p)?.vocab().clone(),
                None => Arc::new(Vocab::build(samples.iter().map(|s| s.text.as_str()), 1)),
            };
            let mut by_lang: BTreeMap<&str, Vec<LabeledSample>> = BTreeMap::new();
            for s in &samples {
                by_lang.entry(&s.lang).or_default().push(s.clone());
            }
            println!("lang,toxic_samples,nontoxic_samples,toxic_tokens,nontoxic_tokens");
            for (lang, v) in &by_lang {
                let c = count_tokens(v, &vocab, 1024);
                let t = v.iter().filter(|s| s.label == Label::Toxic).count();
                println!("{lang},{t},{},{},{}", v.len() - t, c.toxic, c.nontoxic);
            }
        }
        CorpusCommand::Translate { input, to, provider, out } => {
            let samples = load_corpus(&input)?;
            let p = provider.build()?;
            let opts = TranslateOptions {
                max_in_flight: provider.mt_max_in_flight,
                ..Default::default()
            };
            let batch = translate_batch(&samples, p.as_ref(), &to, &opts)?;
            for f in &batch.failures {
                log::warn!("{}: {}", f.source_id, f.error);
            }
            save_corpus(&batch.samples, &out)?;
            println!("{} translated, {} failed -> {}", batch.samples.len(), batch.failures.len(), out.display());
        }
        CorpusCommand::Roundtrip { input, via, provider, scorer, out } => {
            let samples = load_corpus(&input)?;
            let p = provider.build()?;
            let s = scorer.build()?;
            let study = roundtrip_study(&samples, p.as_ref(), &via, s.as_ref(), provider.mt_max_in_flight)?;
            for st in &study.summary {
                println!("{:?}: mean {:.4}, median {:.4}", st.stage, st.mean, st.median);
            }
            fs::write(&out, serde_json::to_string_pretty(&study)? + "\n")?;
        }
        CorpusCommand::Import { csv, text_column, label_column, id_column, lang, threshold, out } => {
            let samples = import_csv(&csv, &text_column, &label_column, id_column.as_deref(), &lang, threshold)?;
            save_corpus(&samples, &out)?;
            let t = samples.iter().filter(|s| s.label == Label::Toxic).count();
            println!("{} samples ({t} toxic) -> {}", samples.len(), out.display());
        }
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = a.seed {
        cfg.generation.seed = seed;
    }
    match a.kind {
        RunKind::Static => {
            let r = run_static(&cfg)?;
            println!(
                "{}: EMT {:.4} vs base {:.4}, relative {}",
                cfg.backend,
                r.mitigated.emt.overall,
                r.baseline.emt.overall,
                fmt_opt(r.relative_emt.overall)
            );
        }
        RunKind::Continual => {
            let r = run_continual(&cfg)?;
            for row in &r.clme {
                println!("step {} (+{}): CLME {:.4}", row.step, row.added, row.clme);
            }
        }
        RunKind::Ablation => {
            let Some(axis) = a.axis.or(cfg.ablation.axis) else {
                bail!("pass --axis or set ablation.axis in the config");
            };
            let r = run_ablation(&cfg, axis)?;
            for p in &r.points {
                match &p.error {
                    Some(e) => println!("{}: failed: {e}", p.label),
                    None => println!("{}: relative EMT {}", p.label, fmt_opt(p.relative_emt)),
                }
            }
        }
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn toy(a: ToyArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let world_cfg = ToyConfig { seed: a.seed, ..Default::default() };
    let world = ToyWorld::new(world_cfg.clone())?;
    let pool = world.parallel_pool(a.pool, a.pool, 1);
    let base = world.base_corpus(a.base_sentences, 0.05, 0)?;
    save_corpus(&pool, a.out.join("pool.jsonl"))?;
    save_corpus(&base, a.out.join("base.jsonl"))?;
    save_prompts(&world.prompts(a.prompts, 0), a.out.join("prompts.jsonl"))?;
    world.lexicon().save(a.out.join("lexicon.json"))?;

    let mut cfg = ExperimentConfig::toy("out", BackendKind::Retrieval);
    cfg.data.toy.world = world_cfg;
    cfg.data.source = DataSource::Files;
    cfg.data.files = Some(FileData {
        base_corpus: "base.jsonl".into(),
        pool: "pool.jsonl".into(),
        prompts: "prompts.jsonl".into(),
        vocab_min_count: 1,
    });
    let per_lang = (a.pool / world.codes().len()).max(1);
    cfg.sampling.default = SamplingPlan::new(per_lang.min(1000), per_lang.min(3000), 0);
    cfg.scorer.kind = ScorerKind::Lexicon;
    cfg.scorer.lexicon = Some("lexicon.json".into());
    fs::write(a.out.join("experiment.toml"), cfg.to_toml_string()?)?;
    println!(
        "{} pool samples, {} base sentences, {} prompts -> {}",
        pool.len(),
        base.len(),
        a.prompts,
        a.out.display()
    );
    Ok(())
}
