//! Method × query experiment matrix and its CSV/LaTeX artifacts.
//!
//! Files written by [`write_outputs`]:
//!
//! | file | columns |
//! |---|---|
//! | `tables.csv` | query, method, method_name, min, max, mean, std_dev, tokens, segments, hit_rank |
//! | `{qid}_summary.csv` | same columns, one question |
//! | `{qid}_items.csv` | method, rank, tag, chunk_id, label, tokens, similarity |
//! | `{qid}.tex` | `Name & min & max & mean & std & tokens & segments \\` |
//! | `heatmap_max_similarity.csv` | method, then one column per query |
//! | `boxplot_scores.csv` | method, query, rank, similarity |
//! | `reports.jsonl` | one serialized result per line |
//!
//! Numbers are rounded to four decimals, half away from zero, only here.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chunking::{plan_index, ChunkId};
use crate::document_model::DocumentTree;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::index::{build_index, BuildOptions, VectorIndex};
use crate::method::MethodConfig;
use crate::retrieval::{normalize_query, retrieve, RetrievalOptions, SelectionReport};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub id: String,
    pub original: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<String>,
    /// Expected rank-1 chunk id per key: "blind", "flat", "multilayer" or "poly".
    #[serde(default)]
    pub expected_top1: BTreeMap<String, String>,
}

pub fn parse_suite(json: &str) -> Result<Vec<QuerySpec>> {
    let suite: Vec<QuerySpec> = serde_json::from_str(json)?;
    let mut ids = HashSet::new();
    for q in &suite {
        if q.id.trim().is_empty() || q.original.trim().is_empty() {
            return Err(Error::Input("query id and text must be non-empty".into()));
        }
        if !ids.insert(q.id.as_str()) {
            return Err(Error::Input(format!("duplicate query id {:?}", q.id)));
        }
    }
    Ok(suite)
}

pub fn load_suite(path: impl AsRef<Path>) -> Result<Vec<QuerySpec>> {
    parse_suite(&fs::read_to_string(path)?)
}

/// Which `expected_top1` entry applies to a method.
pub fn expectation_key(method: &MethodConfig) -> &'static str {
    if method.poly {
        "poly"
    } else {
        method.strategy.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method_id: char,
    pub query_id: String,
    pub report: SelectionReport,
    /// 1-based rank of the expected chunk among the selected items.
    pub expected_hit_rank: Option<usize>,
}

/// One index per distinct `index_key` among `methods`.
pub fn build_method_indexes(
    tree: &DocumentTree,
    methods: &[MethodConfig],
    provider: &dyn EmbeddingProvider,
    tokenizer: &dyn Tokenizer,
    opts: &BuildOptions,
) -> Result<BTreeMap<String, VectorIndex>> {
    let mut out = BTreeMap::new();
    for m in methods {
        let key = m.index_key();
        if out.contains_key(&key) {
            continue;
        }
        let plan = plan_index(tree, m.strategy, m.poly, tokenizer, opts.label_form)?;
        out.insert(key, build_index(&plan, provider, m, opts)?);
    }
    Ok(out)
}

pub fn run_matrix(
    suite: &[QuerySpec],
    methods: &[MethodConfig],
    indexes: &BTreeMap<String, VectorIndex>,
    provider: &dyn EmbeddingProvider,
    opts: &RetrievalOptions,
) -> Result<Vec<ExperimentResult>> {
    let mut out = Vec::with_capacity(suite.len() * methods.len());
    for q in suite {
        for m in methods {
            let index = indexes
                .get(&m.index_key())
                .ok_or_else(|| Error::Index(format!("no index built for {} ({})", m.index_key(), m.id)))?;
            // the suite's own normalized text wins over the rule table
            let normalize = opts.normalize.unwrap_or(m.normalize_query);
            let text = if normalize {
                q.normalized
                    .clone()
                    .unwrap_or_else(|| normalize_query(&q.original, &opts.rules).text)
            } else {
                q.original.clone()
            };
            let run_opts = RetrievalOptions {
                normalize: Some(false),
                ..opts.clone()
            };
            let mut report = retrieve(&text, m, index, provider, &run_opts)?;
            report.query = q.original.clone();
            let expected_hit_rank = q
                .expected_top1
                .get(expectation_key(m))
                .and_then(|id| report.items.iter().position(|i| i.chunk_id == ChunkId(id.clone())))
                .map(|p| p + 1);
            out.push(ExperimentResult {
                method_id: m.id,
                query_id: q.id.clone(),
                report,
                expected_hit_rank,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Emission

/// Four decimals, ties away from zero, decided on the shortest decimal
/// representation of `x` (so 0.63705 becomes 0.6371).
pub fn round4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{}", x.abs());
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let mut digits: Vec<u8> = int.bytes().chain(frac.bytes().chain(std::iter::repeat(b'0')).take(4)).collect();
    if frac.len() > 4 && frac.as_bytes()[4] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, b'1');
                break;
            }
            i -= 1;
            if digits[i] == b'9' {
                digits[i] = b'0';
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 4;
    let body = format!(
        "{}.{}",
        std::str::from_utf8(&digits[..split]).expect("ascii"),
        std::str::from_utf8(&digits[split..]).expect("ascii")
    );
    if x.is_sign_negative() && body.bytes().any(|b| (b'1'..=b'9').contains(&b)) {
        format!("-{body}")
    } else {
        body
    }
}

const TABLE_HEADER: [&str; 10] = [
    "query", "method", "method_name", "min", "max", "mean", "std_dev", "tokens", "segments", "hit_rank",
];

fn method_name(id: char) -> String {
    MethodConfig::by_id(id).map(|m| m.name()).unwrap_or_else(|_| id.to_string())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn table_row(r: &ExperimentResult) -> Vec<String> {
    let m = &r.report.metrics;
    vec![
        r.query_id.clone(),
        r.method_id.to_string(),
        method_name(r.method_id),
        round4(m.min),
        round4(m.max),
        round4(m.mean),
        round4(m.std_dev),
        m.total_tokens.to_string(),
        m.segments.to_string(),
        r.expected_hit_rank.map(|h| h.to_string()).unwrap_or_default(),
    ]
}

pub fn emit_tables(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    csv_bytes(&TABLE_HEADER, results.iter().map(table_row))
}

pub fn emit_question_summary(results: &[ExperimentResult], query_id: &str) -> Result<Vec<u8>> {
    csv_bytes(
        &TABLE_HEADER,
        results.iter().filter(|r| r.query_id == query_id).map(table_row),
    )
}

pub fn emit_question_items(results: &[ExperimentResult], query_id: &str) -> Result<Vec<u8>> {
    let rows = results
        .iter()
        .filter(|r| r.query_id == query_id)
        .flat_map(|r| {
            r.report.items.iter().enumerate().map(move |(i, it)| {
                vec![
                    r.method_id.to_string(),
                    (i + 1).to_string(),
                    it.tag.to_string(),
                    it.chunk_id.to_string(),
                    it.display_label.clone(),
                    it.token_count.to_string(),
                    round4(it.similarity),
                ]
            })
        });
    csv_bytes(
        &["method", "rank", "tag", "chunk_id", "label", "tokens", "similarity"],
        rows,
    )
}

pub fn emit_latex(results: &[ExperimentResult], query_id: &str) -> String {
    let mut s = String::from("% Method & Min Sim. & Max Sim. & Mean Sim. & Std Dev. & Tokens & Segments\n");
    for r in results.iter().filter(|r| r.query_id == query_id) {
        let m = &r.report.metrics;
        s.push_str(&format!(
            "{} & {} & {} & {} & {} & {} & {} \\\\\n",
            method_name(r.method_id),
            round4(m.min),
            round4(m.max),
            round4(m.mean),
            round4(m.std_dev),
            m.total_tokens,
            m.segments
        ));
    }
    s
}

fn query_order(results: &[ExperimentResult]) -> Vec<&str> {
    let mut seen = HashSet::new();
    results
        .iter()
        .map(|r| r.query_id.as_str())
        .filter(|q| seen.insert(*q))
        .collect()
}

/// Max similarity per (method, query); methods as rows, queries as columns.
pub fn emit_heatmap(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    let queries = query_order(results);
    let mut methods: Vec<char> = results.iter().map(|r| r.method_id).collect();
    methods.sort_unstable();
    methods.dedup();
    let cell: BTreeMap<(char, &str), f64> = results
        .iter()
        .map(|r| ((r.method_id, r.query_id.as_str()), r.report.metrics.max))
        .collect();
    let mut header = vec!["method"];
    header.extend(queries.iter().copied());
    let rows = methods.iter().map(|&m| {
        let mut row = vec![m.to_string()];
        row.extend(
            queries
                .iter()
                .map(|q| cell.get(&(m, *q)).map(|v| round4(*v)).unwrap_or_default()),
        );
        row
    });
    csv_bytes(&header, rows)
}

pub fn emit_boxplot_data(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    let rows = results.iter().flat_map(|r| {
        r.report.items.iter().enumerate().map(move |(i, it)| {
            vec![
                r.method_id.to_string(),
                r.query_id.clone(),
                (i + 1).to_string(),
                round4(it.similarity),
            ]
        })
    });
    csv_bytes(&["method", "query", "rank", "similarity"], rows)
}

fn safe_name(id: &str) -> Result<&str> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(Error::Input(format!(
            "query id {id:?} cannot be used in a file name (use letters, digits, '-' or '_')"
        )));
    }
    Ok(id)
}

/// Writes every artifact under `dir`; returns the paths written, in order.
pub fn write_outputs(results: &[ExperimentResult], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put("tables.csv".into(), emit_tables(results)?)?;
    for q in query_order(results) {
        let q = safe_name(q)?;
        put(format!("{q}_summary.csv"), emit_question_summary(results, q)?)?;
        put(format!("{q}_items.csv"), emit_question_items(results, q)?)?;
        put(format!("{q}.tex"), emit_latex(results, q).into_bytes())?;
    }
    put("heatmap_max_similarity.csv".into(), emit_heatmap(results)?)?;
    put("boxplot_scores.csv".into(), emit_boxplot_data(results)?)?;
    let mut jsonl = Vec::new();
    for r in results {
        jsonl.extend(serde_json::to_vec(r)?);
        jsonl.push(b'\n');
    }
    put("reports.jsonl".into(), jsonl)?;
    Ok(written)
}

/// Builds the indexes `methods` need, runs the suite and writes all
/// artifacts under `out`.
#[allow(clippy::too_many_arguments)]
pub fn run_eval(
    tree: &DocumentTree,
    suite: &[QuerySpec],
    methods: &[MethodConfig],
    provider: &dyn EmbeddingProvider,
    tokenizer: &dyn Tokenizer,
    build: &BuildOptions,
    retrieval: &RetrievalOptions,
    out: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    retrieval.policy.validate()?;
    let indexes = if suite.is_empty() {
        BTreeMap::new()
    } else {
        build_method_indexes(tree, methods, provider, tokenizer, build)?
    };
    let results = run_matrix(suite, methods, &indexes, provider, retrieval)?;
    write_outputs(&results, out)
}

/// A `tables.csv` row read back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TableRow {
    pub query: String,
    pub method: char,
    pub method_name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub tokens: usize,
    pub segments: usize,
    pub hit_rank: Option<usize>,
}

pub fn parse_tables(bytes: &[u8]) -> Result<Vec<TableRow>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<Vec<TableRow>, _>>()
        .map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })
}
