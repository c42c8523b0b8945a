//! wasm-bindgen surface for `www/index.html`. Every export takes and
//! returns plain strings (JSON), so the page needs no bundler.

use std::cell::OnceCell;
use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use polyvec::corpus;
use polyvec::document_model::{build_label, build_urn, DocumentTree, NormIdentity};
use polyvec::embedding::{EmbeddingProvider, ProviderConfig};
use polyvec::evaluation::build_method_indexes;
use polyvec::index::{BuildOptions, VectorIndex};
use polyvec::ingestion::parse_document;
use polyvec::retrieval::{assemble_prompt, compute_metrics, retrieve, RetrievalOptions, SelectionPolicy};
use polyvec::tokenizer::{Tokenizer, WordPunctTokenizer};
use polyvec::MethodConfig;

const FIXTURE: &str = include_str!("../../core/data/appendix_tables.json");

struct Engine {
    provider: Box<dyn EmbeddingProvider>,
    indexes: BTreeMap<String, VectorIndex>,
}

thread_local! {
    static ENGINE: OnceCell<Result<Engine, String>> = const { OnceCell::new() };
}

fn build_engine() -> Result<Engine, String> {
    let (tree, _) = corpus::crfb_excerpt().map_err(|e| e.to_string())?;
    let provider: Box<dyn EmbeddingProvider> =
        Box::new(ProviderConfig::deterministic(256).build().map_err(|e| e.to_string())?);
    let opts = BuildOptions {
        tokenizer: WordPunctTokenizer.name().into(),
        ..Default::default()
    };
    let indexes = build_method_indexes(&tree, &MethodConfig::all(), &provider, &WordPunctTokenizer, &opts)
        .map_err(|e| e.to_string())?;
    Ok(Engine { provider, indexes })
}

#[derive(Serialize)]
struct UnitView {
    urn: String,
    kind: &'static str,
    label: String,
    canonical: String,
    tokens: usize,
    depth: usize,
}

fn units(tree: &DocumentTree) -> Result<Vec<UnitView>, String> {
    tree.iter()
        .map(|u| {
            let label = build_label(tree, u.id).map_err(|e| e.to_string())?;
            Ok(UnitView {
                urn: build_urn(tree, u.id).map_err(|e| e.to_string())?.value,
                kind: u.kind.name(),
                label: label.display,
                canonical: label.canonical,
                tokens: WordPunctTokenizer.count(&u.full_text),
                depth: tree.ancestors(u.id).count(),
            })
        })
        .collect()
}

pub fn parse_json(text: &str) -> Result<String, String> {
    let source = if text.trim().is_empty() { corpus::CRFB_EXCERPT } else { text };
    let (tree, report) = parse_document(source, &NormIdentity::crfb()).map_err(|e| e.to_string())?;
    Ok(json!({
        "units": units(&tree)?,
        "counts": report.unit_count_by_kind,
        "warnings": report.warnings,
    })
    .to_string())
}

pub fn search_json(query: &str, method: &str, budget: usize, drop: f64, min_segments: usize) -> Result<String, String> {
    let method: MethodConfig = method.parse().map_err(|e: polyvec::Error| e.to_string())?;
    let opts = RetrievalOptions {
        policy: SelectionPolicy {
            token_budget: budget,
            drop_fraction: drop,
            min_segments,
        },
        ..Default::default()
    };
    ENGINE.with(|cell| {
        let engine = cell.get_or_init(build_engine).as_ref().map_err(Clone::clone)?;
        let index = &engine.indexes[&method.index_key()];
        let report = retrieve(query, &method, index, &engine.provider, &opts).map_err(|e| e.to_string())?;
        let prompt = assemble_prompt(&report, index).map_err(|e| e.to_string())?;
        Ok(json!({ "method": method.name(), "report": report, "prompt": prompt }).to_string())
    })
}

/// `candidates` is a JSON array of `[similarity, tokens]` pairs in rank order.
pub fn selection_json(candidates: &str, budget: usize, drop: f64, min_segments: usize) -> Result<String, String> {
    let ranked: Vec<(f64, usize)> = serde_json::from_str(candidates).map_err(|e| e.to_string())?;
    let policy = SelectionPolicy {
        token_budget: budget,
        drop_fraction: drop,
        min_segments,
    };
    policy.validate().map_err(|e| e.to_string())?;
    let n = policy.select_count(&ranked);
    let metrics = if n == 0 {
        None
    } else {
        Some(compute_metrics(&ranked[..n]).map_err(|e| e.to_string())?)
    };
    let threshold = ranked.first().map(|c| (1.0 - drop) * c.0);
    Ok(json!({ "selected": n, "threshold": threshold, "metrics": metrics }).to_string())
}

#[wasm_bindgen]
pub fn parse_provisions(text: &str) -> Result<String, JsError> {
    parse_json(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn search(query: &str, method: &str, budget: usize, drop: f64, min_segments: usize) -> Result<String, JsError> {
    search_json(query, method, budget, drop, min_segments).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn explore_selection(candidates: &str, budget: usize, drop: f64, min_segments: usize) -> Result<String, JsError> {
    selection_json(candidates, budget, drop, min_segments).map_err(|e| JsError::new(&e))
}

/// The appendix rows, for the selection explorer's presets.
#[wasm_bindgen]
pub fn fixture_rows() -> String {
    FIXTURE.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_to_excerpt() {
        let v: serde_json::Value = serde_json::from_str(&parse_json("").unwrap()).unwrap();
        assert_eq!(v["counts"]["Article"], 15);
        let small = parse_json("Art. 1º Texto.\n§ 1º Mais.").unwrap();
        assert!(small.contains("art1_par1"), "{small}");
    }

    #[test]
    fn urn_search_hits_poly_index() {
        let out = search_json("urn:lex:br:federal:constituicao:1988-10-05;1988!art69", "g", 4000, 0.2, 5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["report"]["items"][0]["chunk_id"], "art69");
        assert!(search_json("x", "q", 4000, 0.2, 5).is_err());
    }

    #[test]
    fn selection_replays_poly_blind_row() {
        let fx: serde_json::Value = serde_json::from_str(FIXTURE).unwrap();
        let row = fx["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["question"] == "Q1" && r["method"] == "e")
            .unwrap();
        let ranked: Vec<(f64, u64)> = row["items"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| (i["similarity"].as_f64().unwrap(), i["tokens"].as_u64().unwrap()))
            .collect();
        let out = selection_json(&serde_json::to_string(&ranked).unwrap(), 4000, 0.2, 5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["selected"], 13);
        assert_eq!(v["metrics"]["total_tokens"], 6702);
        assert!(selection_json("[]", 0, 0.2, 5).is_err());
    }
}
