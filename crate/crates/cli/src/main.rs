use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use polyvec::chunking::plan_index;
use polyvec::document_model::{DocumentTree, LabelForm, NormIdentity};
use polyvec::embedding::{EmbeddingProvider, ProviderConfig};
use polyvec::evaluation::{load_suite, run_eval};
use polyvec::index::{build_index, BuildOptions, VectorIndex, VectorPrecision};
use polyvec::ingestion::parse_document;
use polyvec::retrieval::{assemble_prompt, retrieve, RetrievalOptions, SelectionPolicy, SelectionReport, DEFAULT_K};
use polyvec::tokenizer::{Tokenizer, WordPunctTokenizer};
use polyvec::{Error, MethodConfig, Result};

const TREE_FILE: &str = "tree.json";
const REPORT_FILE: &str = "parse_report.json";

#[derive(Parser)]
#[command(name = "polyvec", version, about = "Poly-vector retrieval over structured legal texts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a plain-text corpus into a document tree.
    Ingest {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Build the index one method needs.
    Index {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, value_parser = parse_method)]
        method: MethodConfig,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
        #[arg(long, value_enum, default_value_t = Label::Canonical)]
        label_form: Label,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Retrieve context for one question.
    Query {
        #[arg(long)]
        index: PathBuf,
        text: String,
        /// Defaults to the method the index was built for.
        #[arg(long, value_parser = parse_method)]
        method: Option<MethodConfig>,
        #[arg(long, conflicts_with = "no_normalize")]
        normalize: bool,
        #[arg(long)]
        no_normalize: bool,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Write report.json and prompt.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Run a query suite against several methods and write tables.
    Eval {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "all", value_parser = parse_methods)]
        methods: Methods,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        provider: ProviderArgs,
    },
}

#[derive(Args)]
struct NormArgs {
    #[arg(long, default_value = "Constituição da República Federativa do Brasil de 1988")]
    full_name: String,
    #[arg(long, default_value = "CRFB")]
    short_name: String,
    #[arg(long, default_value = "urn:lex:br:federal:constituicao:1988-10-05;1988")]
    urn_base: String,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Tree written by `ingest`.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Plain-text corpus, parsed with the CRFB identity.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, default_value_t = 4000)]
    budget: usize,
    #[arg(long, default_value_t = 0.20)]
    drop: f64,
    #[arg(long, default_value_t = 5)]
    min_segments: usize,
    /// Records fetched before dedup and selection.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
}

#[derive(Args)]
struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = Provider::Deterministic)]
    provider: Provider,
    /// Vector dimension used for search.
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Dimension the remote model returns before truncation.
    #[arg(long)]
    native_dim: Option<usize>,
    #[arg(long)]
    no_renormalize: bool,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// On-disk embedding cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Provider {
    Deterministic,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Label {
    Canonical,
    Display,
}

#[derive(Clone)]
struct Methods(Vec<MethodConfig>);

fn parse_method(s: &str) -> std::result::Result<MethodConfig, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_methods(s: &str) -> std::result::Result<Methods, String> {
    MethodConfig::parse_list(s).map(Methods).map_err(|e| e.to_string())
}

impl PolicyArgs {
    fn options(&self) -> Result<RetrievalOptions> {
        let policy = SelectionPolicy {
            token_budget: self.budget,
            drop_fraction: self.drop,
            min_segments: self.min_segments,
        };
        policy.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(RetrievalOptions {
            policy,
            k: self.k,
            ..Default::default()
        })
    }
}

impl ProviderArgs {
    fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let mut cfg = match self.provider {
            Provider::Deterministic => {
                let mut c = ProviderConfig::deterministic(self.dim);
                c.seed = self.seed;
                c
            }
            Provider::Remote => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::Config("--endpoint is required with --provider remote".into()))?;
                let model = self
                    .model
                    .clone()
                    .ok_or_else(|| Error::Config("--model is required with --provider remote".into()))?;
                let mut c = ProviderConfig::remote(endpoint, model, self.native_dim.unwrap_or(self.dim));
                c.target_dim = self.dim;
                c.renormalize = !self.no_renormalize;
                c
            }
        };
        cfg.batch_size = self.batch_size;
        cfg.cache_path = self.cache.clone();
        Ok(Box::new(cfg.build()?))
    }
}

fn load_source(src: &SourceArgs) -> Result<DocumentTree> {
    if let Some(path) = &src.tree {
        let tree: DocumentTree = serde_json::from_str(&fs::read_to_string(path)?)?;
        tree.validate()?;
        return Ok(tree);
    }
    let path = src.corpus.as_ref().expect("clap requires one source");
    let (tree, report) = parse_document(&fs::read_to_string(path)?, &NormIdentity::crfb())?;
    for w in &report.warnings {
        eprintln!("warning: line {}: {}", w.line, w.message);
    }
    Ok(tree)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn cmd_ingest(corpus: &Path, out: &Path, norm: &NormArgs) -> Result<()> {
    let norm = NormIdentity::new(&norm.full_name, &norm.short_name, &norm.urn_base)?;
    let (tree, report) = parse_document(&fs::read_to_string(corpus)?, &norm)?;
    fs::create_dir_all(out)?;
    write_json(&out.join(TREE_FILE), &tree)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    for (kind, n) in &report.unit_count_by_kind {
        println!("{:<14} {n}", kind.name());
    }
    println!("{:<14} {}", "total", report.total_units());
    for w in &report.warnings {
        eprintln!("warning: line {}: {}", w.line, w.message);
    }
    Ok(())
}

fn cmd_index(
    source: &SourceArgs,
    method: &MethodConfig,
    out: &Path,
    precision: Precision,
    label: Label,
    provider: &ProviderArgs,
) -> Result<()> {
    let tree = load_source(source)?;
    let tok = WordPunctTokenizer;
    let label_form = match label {
        Label::Canonical => LabelForm::Canonical,
        Label::Display => LabelForm::Display,
    };
    let plan = plan_index(&tree, method.strategy, method.poly, &tok, label_form)?;
    let provider = provider.build()?;
    let opts = BuildOptions {
        precision: match precision {
            Precision::F32 => VectorPrecision::F32,
            Precision::F64 => VectorPrecision::F64,
        },
        label_form,
        tokenizer: tok.name().to_string(),
    };
    let index = build_index(&plan, &provider, method, &opts)?;
    index.save(out)?;
    let m = index.manifest();
    println!(
        "method {} ({}): {} records, {} chunks, dim {}",
        method.id,
        method.name(),
        m.record_count,
        m.chunk_count,
        m.dim
    );
    Ok(())
}

fn print_report(report: &SelectionReport) {
    println!("query: {}", report.query);
    if report.effective_query != report.query {
        println!("embedded as: {}", report.effective_query);
    }
    for (i, item) in report.items.iter().enumerate() {
        println!(
            "{:>3}  {:<5} {:.4}  {:>6}  {}",
            i + 1,
            item.tag.as_str(),
            item.similarity,
            item.token_count,
            item.display_label
        );
    }
    let m = &report.metrics;
    println!(
        "max {:.4}  mean {:.4}  min {:.4}  std {:.4}  segments {}  tokens {}",
        m.max, m.mean, m.min, m.std_dev, m.segments, m.total_tokens
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_query(
    index_dir: &Path,
    text: &str,
    method: Option<&MethodConfig>,
    normalize: Option<bool>,
    policy: &PolicyArgs,
    out: Option<&Path>,
    json: bool,
    provider: &ProviderArgs,
) -> Result<()> {
    let mut opts = policy.options()?;
    opts.normalize = normalize;
    let index = VectorIndex::load(index_dir)?;
    let method = match method {
        Some(m) => *m,
        None => MethodConfig::by_id(index.manifest().method_id)?,
    };
    let provider = provider.build()?;
    let report = retrieve(text, &method, &index, &provider, &opts)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_report(&report);
    }
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        write_json(&out.join("report.json"), &report)?;
        fs::write(out.join("prompt.txt"), assemble_prompt(&report, &index)?)?;
    }
    Ok(())
}

fn cmd_eval(source: &SourceArgs, suite: &Path, methods: &[MethodConfig], out: &Path, policy: &PolicyArgs, provider: &ProviderArgs) -> Result<()> {
    let opts = policy.options()?;
    let tree = load_source(source)?;
    let suite = load_suite(suite)?;
    let provider = provider.build()?;
    let tok = WordPunctTokenizer;
    let build = BuildOptions {
        tokenizer: tok.name().to_string(),
        ..Default::default()
    };
    let files = run_eval(&tree, &suite, methods, &provider, &tok, &build, &opts, out)?;
    println!(
        "{} queries x {} methods, {} files in {}",
        suite.len(),
        methods.len(),
        files.len(),
        out.display()
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) => 2,
        Error::Parse { .. } | Error::Json(_) | Error::Structural(_) => 3,
        Error::Provider(_) => 4,
        Error::Io(_) => 5,
        Error::Index(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest { corpus, out, norm } => cmd_ingest(corpus, out, norm),
        Command::Index {
            source,
            method,
            out,
            precision,
            label_form,
            provider,
        } => cmd_index(source, method, out, *precision, *label_form, provider),
        Command::Query {
            index,
            text,
            method,
            normalize,
            no_normalize,
            policy,
            out,
            json,
            provider,
        } => {
            let force = match (normalize, no_normalize) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            cmd_query(index, text, method.as_ref(), force, policy, out.as_deref(), *json, provider)
        }
        Command::Eval {
            source,
            suite,
            methods,
            out,
            policy,
            provider,
        } => cmd_eval(source, suite, &methods.0, out, policy, provider),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
