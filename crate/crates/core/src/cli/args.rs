use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::embedding::{EmbedderConfig, EmbedderKind, DEFAULT_DIM};
use crate::metrics::Pooling;
use crate::retrieval::{DEFAULT_B, DEFAULT_CONCEPT_WEIGHT, DEFAULT_K1};
use crate::terminology::LanguageFilter;

#[derive(Debug, Parser)]
#[command(name = "medct", version, about = "Clinical terminology graph engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Where the terminology graph comes from: a snapshot written by `ingest`,
/// or the three release files.
#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    #[arg(long, conflicts_with_all = ["concepts", "descriptions", "relationships"])]
    pub graph: Option<PathBuf>,
    #[arg(long, requires_all = ["descriptions", "relationships"])]
    pub concepts: Option<PathBuf>,
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    #[arg(long)]
    pub relationships: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderChoice {
    Builtin,
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value = "builtin")]
    pub embedder: EmbedderChoice,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub embed_dim: usize,
    /// Base URL of the remote embedding service (MEDCT_EMBED_URL overrides).
    #[arg(long)]
    pub embed_url: Option<String>,
    /// Synonym languages to use, e.g. `en,zh`; default all.
    #[arg(long, default_value = "all")]
    pub languages: String,
}

impl EmbedArgs {
    pub fn config(&self) -> EmbedderConfig {
        let mut cfg = EmbedderConfig::builtin(self.embed_dim);
        if self.embedder == EmbedderChoice::Remote {
            cfg.kind = EmbedderKind::Remote;
            cfg.remote_url = self.embed_url.clone();
        }
        cfg
    }

    pub fn languages(&self) -> LanguageFilter {
        LanguageFilter::parse(&self.languages)
    }
}

/// Everything needed to assemble a linker.
#[derive(Debug, Clone, Args)]
pub struct LinkerArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Concept index from `embed-index`; built in memory when omitted.
    #[arg(long = "concept-index")]
    pub concept_index: Option<PathBuf>,
    /// Static dictionary from `build-dict`.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    PerNote,
    Global,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::PerNote => Pooling::PerNote,
            PoolingArg::Global => Pooling::Global,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SummaryModeArg {
    Zero,
    Guided,
}

#[derive(Debug, Subcommand)]
pub enum PromptCommand {
    /// Contextual translation prompt(s) for concept synonyms.
    Translation {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long = "concept-id", requires = "synonym")]
        concept_id: Option<String>,
        #[arg(long)]
        synonym: Option<String>,
        /// Target language as written in the prompt.
        #[arg(long, default_value = "Chinese")]
        language: String,
        /// Build one prompt per synonym in this language tag instead.
        #[arg(long = "all-from", conflicts_with = "concept_id")]
        all_from: Option<String>,
        /// Language tag recorded for the translated terms.
        #[arg(long = "lang-tag", default_value = "zh")]
        lang_tag: String,
        /// Write prompt JSONL here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Few-shot NER prompt for one note.
    Ner {
        /// File holding the note text.
        #[arg(long, conflicts_with = "text")]
        note: Option<PathBuf>,
        #[arg(long)]
        text: Option<String>,
    },
    /// Summary generation prompt.
    Summary {
        /// File holding the hospital course and discharge diagnosis.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "zero")]
        mode: SummaryModeArg,
        /// Entity mentions, one per line (guided mode).
        #[arg(long)]
        entities: Option<PathBuf>,
        /// Link the input to find entities instead (guided mode).
        #[arg(long = "link-entities", conflicts_with = "entities")]
        link_entities: bool,
        #[command(flatten)]
        linker: LinkerArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a release and write the graph snapshot.
    Ingest {
        #[arg(long)]
        concepts: PathBuf,
        #[arg(long)]
        descriptions: PathBuf,
        #[arg(long)]
        relationships: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed every concept and write the concept index.
    EmbedIndex {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count gold mention→concept pairs into a static dictionary.
    BuildDict {
        #[arg(long)]
        annotations: PathBuf,
        /// Only use notes listed in this file (one id per line).
        #[arg(long)]
        notes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split annotated notes into k folds.
    SplitFolds {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Validate reviewer corrections, log them, update the dictionary.
    IngestCorrections {
        #[arg(long)]
        dictionary: Option<PathBuf>,
        #[arg(long)]
        corrections: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link the mentions of every note.
    Link {
        #[command(flatten)]
        linker: LinkerArgs,
        /// JSONL with `note_id` and `text` (annotation files work too).
        #[arg(long)]
        notes: PathBuf,
        /// External spans JSONL (`note_id`, `start`, `end`, optional `hierarchy`).
        #[arg(long)]
        spans: Option<PathBuf>,
        #[arg(long = "no-static")]
        no_static: bool,
        #[arg(long = "top-k", default_value_t = 5)]
        top_k: usize,
        #[arg(long = "no-restrict")]
        no_restrict: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach concept ids to every corpus document.
    TagCorpus {
        #[command(flatten)]
        linker: LinkerArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the search index from a tagged corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K1)]
        k1: f64,
        #[arg(long, default_value_t = DEFAULT_B)]
        b: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search the index; with --judgments, evaluate instead.
    Search(SearchArgs),
    /// Evaluate retrieval modes against relevance judgments.
    EvalSearch(SearchArgs),
    /// Character-level concept-averaged IoU of predictions against gold.
    EvalNel {
        /// Linker output or annotation JSONL.
        #[arg(long)]
        pred: PathBuf,
        /// Gold annotation JSONL.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, value_enum, default_value = "per-note")]
        pooling: PoolingArg,
        /// Also print per-key scores.
        #[arg(long = "per-key")]
        per_key: bool,
        /// Write one JSON record per table row here.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Build prompts.
    #[command(subcommand)]
    Prompt(PromptCommand),
    /// Send prompts to a chat-completion endpoint.
    RunBatch {
        /// JSONL of `prompt_id`, `prompt` (translation prompts may also carry
        /// `concept_id`, `term`, `lang`).
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long = "base-url")]
        base_url: String,
        #[arg(long, default_value = "default")]
        model: String,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long = "timeout-secs", default_value_t = 60)]
        timeout_secs: u64,
        #[arg(long = "max-tokens", default_value_t = 1024)]
        max_tokens: u32,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Results JSONL; appended to across resumed runs.
        #[arg(long)]
        out: PathBuf,
        /// Write translated terms as description rows here.
        #[arg(long = "descriptions-out")]
        descriptions_out: Option<PathBuf>,
    },
    /// Cosine similarity between summary groups, with mean lengths.
    EvalSummaries {
        /// JSONL with `raw`, `human`, `llm`, `medct` per example.
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated embedder tags: builtin, remote.
        #[arg(long, default_value = "builtin")]
        embedders: String,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        embed_dim: usize,
        #[arg(long)]
        embed_url: Option<String>,
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        /// Config file; defaults to $MEDCT_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Index from `medct index`.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, short)]
    pub q: Option<String>,
    /// Queries JSONL (`query_id`, `text`, optional `concept_ids`).
    #[arg(long, conflicts_with = "q")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// Comma-separated: sparse, hybrid_boost, concept_filter.
    #[arg(long, default_value = "sparse,hybrid_boost,concept_filter")]
    pub modes: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long = "w-c", default_value_t = DEFAULT_CONCEPT_WEIGHT)]
    pub w_c: f64,
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Needed only for queries without concept_ids.
    #[command(flatten)]
    pub linker: LinkerArgs,
}
