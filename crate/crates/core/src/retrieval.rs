//! Query pipeline: normalize, embed, search, dedup, prune, select.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::chunking::{ChunkId, EmbedTag};
use crate::embedding::{embed_one, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::index::{Hit, VectorIndex};
use crate::method::MethodConfig;

pub const DEFAULT_K: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub token_budget: usize,
    pub drop_fraction: f64,
    pub min_segments: usize,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            token_budget: 4000,
            drop_fraction: 0.20,
            min_segments: 5,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.token_budget == 0 {
            return Err(Error::Config("token budget must be positive".into()));
        }
        if !(self.drop_fraction > 0.0 && self.drop_fraction < 1.0) {
            return Err(Error::Config(format!(
                "drop fraction must be in (0, 1), got {}",
                self.drop_fraction
            )));
        }
        if self.min_segments == 0 {
            return Err(Error::Config("min segments must be at least 1".into()));
        }
        Ok(())
    }

    /// How many leading candidates, given as (similarity, tokens) in rank
    /// order, the selection keeps.
    ///
    /// A candidate is taken while fewer than `min_segments` are selected, or
    /// while it is within `drop_fraction` of the top score and the budget was
    /// not yet reached before adding it.
    pub fn select_count(&self, ranked: &[(f64, usize)]) -> usize {
        let Some(&(s_max, _)) = ranked.first() else {
            return 0;
        };
        let threshold = (1.0 - self.drop_fraction) * s_max;
        let mut total = 0usize;
        let mut taken = 0usize;
        for &(sim, tokens) in ranked {
            let floor = taken < self.min_segments;
            let within = sim >= threshold && total < self.token_budget;
            if !(floor || within) {
                break;
            }
            taken += 1;
            total += tokens;
        }
        taken
    }
}

/// A unique payload chunk after collapsing the records that matched it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub chunk_id: ChunkId,
    /// Tag of the best-scoring record for this payload.
    pub tag: EmbedTag,
    pub display_label: String,
    pub record_id: String,
    pub similarity: f64,
    pub token_count: usize,
    /// Enclosing unit chunks, innermost first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ancestors: Vec<ChunkId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionItem {
    pub chunk_id: ChunkId,
    pub tag: EmbedTag,
    pub display_label: String,
    pub similarity: f64,
    pub token_count: usize,
}

impl From<&Candidate> for SelectionItem {
    fn from(c: &Candidate) -> Self {
        SelectionItem {
            chunk_id: c.chunk_id.clone(),
            tag: c.tag,
            display_label: c.display_label.clone(),
            similarity: c.similarity,
            token_count: c.token_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub max: f64,
    pub mean: f64,
    pub min: f64,
    pub std_dev: f64,
    pub segments: usize,
    pub total_tokens: usize,
}

/// Max, mean, min and sample standard deviation of the scores; a single
/// score has deviation 0.
pub fn compute_metrics(scored: &[(f64, usize)]) -> Result<Metrics> {
    if scored.is_empty() {
        return Err(Error::Input("metrics need at least one item".into()));
    }
    let n = scored.len() as f64;
    let max = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let min = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let mean = scored.iter().map(|s| s.0).sum::<f64>() / n;
    let std_dev = if scored.len() < 2 {
        0.0
    } else {
        (scored.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(Metrics {
        max,
        mean,
        min,
        std_dev,
        segments: scored.len(),
        total_tokens: scored.iter().map(|s| s.1).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub query: String,
    /// What was embedded: the normalized query, or the query itself.
    pub effective_query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_id: Option<char>,
    pub items: Vec<SelectionItem>,
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SelectionReport {
    pub fn scored(&self) -> Vec<(f64, usize)> {
        self.items.iter().map(|i| (i.similarity, i.token_count)).collect()
    }
}

/// Keeps the longest prefix of `ranked` allowed by the policy.
pub fn select_context(ranked: &[Candidate], policy: &SelectionPolicy) -> Result<(Vec<SelectionItem>, Metrics)> {
    if ranked.is_empty() {
        return Err(Error::Input("no candidates to select from".into()));
    }
    let scored: Vec<(f64, usize)> = ranked.iter().map(|c| (c.similarity, c.token_count)).collect();
    let n = policy.select_count(&scored);
    let items: Vec<SelectionItem> = ranked[..n].iter().map(SelectionItem::from).collect();
    let metrics = compute_metrics(&scored[..n])?;
    Ok((items, metrics))
}

/// Collapses records that share a payload; the first (best-ranked) record
/// of each payload provides the score and matched tag.
pub fn dedup_by_payload(hits: &[Hit], index: &VectorIndex) -> Vec<Candidate> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for h in hits {
        let r = index.record(h.record);
        if !seen.insert(&r.payload) {
            continue;
        }
        out.push(Candidate {
            chunk_id: r.payload.clone(),
            tag: r.tag,
            display_label: r.display_label.clone(),
            record_id: r.record_id.clone(),
            similarity: h.similarity,
            token_count: r.token_count,
            ancestors: index
                .chunk(&r.payload)
                .map(|c| c.ancestors.clone())
                .unwrap_or_default(),
        });
    }
    out
}

/// Drops a candidate when one of its ancestor units ranks above it.
///
/// With `exempt_references`, candidates reached through a label, URN or I+L
/// record are never dropped: the user named that unit explicitly.
pub fn prune_contained(ranked: Vec<Candidate>, exempt_references: bool) -> Vec<Candidate> {
    let mut earlier: HashSet<ChunkId> = HashSet::new();
    let mut out = Vec::with_capacity(ranked.len());
    for c in ranked {
        let covered = c.ancestors.iter().any(|a| earlier.contains(a));
        earlier.insert(c.chunk_id.clone());
        if covered && !(exempt_references && c.tag.is_reference()) {
            continue;
        }
        out.push(c);
    }
    out
}

// ---------------------------------------------------------------------------
// Query normalization

/// Prefix rules stripped from the start of a query, longest first.
const SPEECH_ACT_PREFIXES: &[&str] = &[
    "por favor, você poderia me explicar ",
    "você poderia me explicar ",
    "você pode me explicar ",
    "por favor, ",
    "por favor ",
    "quais são os ",
    "quais são as ",
    "qual é o ",
    "qual é a ",
    "quais os ",
    "quais as ",
    "quais são ",
    "qual o ",
    "qual a ",
    "explique o ",
    "explique a ",
    "explique ",
    "me explique ",
];

/// Question pairs whose normalized form needs re-inflection rather than
/// prefix stripping.
const KNOWN_PAIRS: &[(&str, &str)] = &[
    (
        "Quais são os objetivos fundamentais da República Federativa do Brasil?",
        "Objetivos fundamentais da República Federativa do Brasil",
    ),
    (
        "Por favor, você poderia me explicar quais direitos a Constituição garante aos povos indígenas?",
        "Direitos garantidos aos povos indígenas pela Constituição",
    ),
    (
        "Quais direitos são assegurados pelo art. 5º da Constituição?",
        "Direitos assegurados pelo art. 5º da Constituição",
    ),
    (
        "Quais são os direitos previstos no art. 7º da Constituição?",
        "Direitos previstos no art. 7º da Constituição",
    ),
    (
        "Qual o tema do Capítulo VI do Título VIII da Constituição?",
        "Tema do Capítulo VI do Título VIII da Constituição",
    ),
    (
        "Explique o art. 69 da Constituição",
        "Art. 69 da Constituição",
    ),
    (
        "Explique a norma urn:lex:br:federal:constituicao:1988-10-05;1988!art69",
        "Norma urn:lex:br:federal:constituicao:1988-10-05;1988!art69",
    ),
    (
        "Quais as diferenças entre o art. 51 e o art. 52 da Constituição?",
        "Diferenças entre o art. 51 e o art. 52 da Constituição",
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRules {
    pub prefixes: Vec<String>,
    /// Exact-match overrides, keyed by the trimmed original.
    pub table: HashMap<String, String>,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        NormalizationRules {
            prefixes: SPEECH_ACT_PREFIXES.iter().map(|s| s.to_string()).collect(),
            table: KNOWN_PAIRS
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedQuery {
    pub text: String,
    pub warning: Option<String>,
}

pub fn normalize_query(query: &str, rules: &NormalizationRules) -> NormalizedQuery {
    let trimmed = query.trim();
    if let Some(hit) = rules.table.get(trimmed) {
        return NormalizedQuery {
            text: hit.clone(),
            warning: None,
        };
    }
    let mut text = trimmed.to_string();
    loop {
        let before = text.len();
        let lower = text.to_lowercase();
        if let Some(p) = rules.prefixes.iter().find(|p| lower.starts_with(p.as_str())) {
            // prefixes are matched case-insensitively; cut by char count
            let n = p.chars().count();
            text = text.chars().skip(n).collect::<String>().trim_start().to_string();
        }
        text = text
            .trim_end_matches(|c: char| c == '?' || c == '.' || c == '!' || c.is_whitespace())
            .to_string();
        if text.len() == before {
            break;
        }
    }
    if text.is_empty() {
        return NormalizedQuery {
            text: trimmed.to_string(),
            warning: Some(format!("normalization left nothing of {trimmed:?}; using it unchanged")),
        };
    }
    let mut chars = text.chars();
    let first = chars.next().expect("non-empty");
    NormalizedQuery {
        text: first.to_uppercase().chain(chars).collect(),
        warning: None,
    }
}

// ---------------------------------------------------------------------------
// Full pipeline

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOptions {
    pub policy: SelectionPolicy,
    /// Records fetched from the index before dedup and selection.
    pub k: usize,
    pub rules: NormalizationRules,
    /// Force normalization on or off regardless of the method.
    pub normalize: Option<bool>,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        RetrievalOptions {
            policy: SelectionPolicy::default(),
            k: DEFAULT_K,
            rules: NormalizationRules::default(),
            normalize: None,
        }
    }
}

/// Checks that `index` was built for the chunking and poly setting of
/// `method`, with the same embedding space as `provider`.
pub fn check_compatible(index: &VectorIndex, method: &MethodConfig, provider: &dyn EmbeddingProvider) -> Result<()> {
    let m = index.manifest();
    if m.strategy != method.strategy.name() || m.poly != method.poly {
        return Err(Error::Config(format!(
            "index was built for {}{} but method ({}) needs {}",
            m.strategy,
            if m.poly { "+poly" } else { "" },
            method.id,
            method.index_key()
        )));
    }
    if m.provider_fingerprint != provider.fingerprint() {
        return Err(Error::Config(format!(
            "index embeddings come from {:?}, query provider is {:?}",
            m.provider_fingerprint,
            provider.fingerprint()
        )));
    }
    Ok(())
}

pub fn retrieve(
    query: &str,
    method: &MethodConfig,
    index: &VectorIndex,
    provider: &dyn EmbeddingProvider,
    opts: &RetrievalOptions,
) -> Result<SelectionReport> {
    opts.policy.validate()?;
    check_compatible(index, method, provider)?;
    if query.trim().is_empty() {
        return Err(Error::Input("query is blank".into()));
    }
    let mut warnings = Vec::new();
    let effective = if opts.normalize.unwrap_or(method.normalize_query) {
        let n = normalize_query(query, &opts.rules);
        warnings.extend(n.warning);
        n.text
    } else {
        query.trim().to_string()
    };
    let qv = embed_one(provider, &effective)?;
    let hits = index.knn(&qv, opts.k)?;
    let mut candidates = dedup_by_payload(&hits, index);
    if method.prunes() {
        candidates = prune_contained(candidates, true);
    }
    let (items, metrics) = select_context(&candidates, &opts.policy)?;
    Ok(SelectionReport {
        query: query.to_string(),
        effective_query: effective,
        method_id: Some(method.id),
        items,
        metrics,
        warnings,
    })
}

/// Plain-text prompt: the query followed by each selected chunk in rank order.
pub fn assemble_prompt(report: &SelectionReport, index: &VectorIndex) -> Result<String> {
    let mut out = format!("Question: {}\n\nContext:\n", report.effective_query);
    for (rank, item) in report.items.iter().enumerate() {
        let chunk = index
            .chunk(&item.chunk_id)
            .ok_or_else(|| Error::Index(format!("unknown chunk {}", item.chunk_id)))?;
        out.push_str(&format!("\n[{}] {}\n{}\n", rank + 1, item.display_label, chunk.text));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigRational, ToPrimitive, Zero};
    use proptest::prelude::*;

    fn cand(id: &str, tag: EmbedTag, sim: f64, tokens: usize, ancestors: &[&str]) -> Candidate {
        Candidate {
            chunk_id: ChunkId(id.into()),
            tag,
            display_label: id.into(),
            record_id: format!("{}:{id}", tag.as_str()),
            similarity: sim,
            token_count: tokens,
            ancestors: ancestors.iter().map(|a| ChunkId(a.to_string())).collect(),
        }
    }

    #[test]
    fn metrics_of_the_blind_row() {
        let scores = [0.7067, 0.6805, 0.6096, 0.5983, 0.5899];
        let m = compute_metrics(&scores.map(|s| (s, 800))).unwrap();
        assert!((m.mean - 0.6370).abs() < 5e-5);
        assert!((m.std_dev - 0.0530).abs() < 5e-5);
        assert_eq!((m.min, m.max, m.segments, m.total_tokens), (0.5899, 0.7067, 5, 4000));
        let one = compute_metrics(&[(0.5, 10)]).unwrap();
        assert_eq!((one.std_dev, one.mean, one.max, one.min), (0.0, 0.5, 0.5, 0.5));
        assert!(compute_metrics(&[]).is_err());
    }

    /// Mean and variance computed exactly over the rationals.
    fn exact_mean_std(xs: &[f64]) -> (f64, f64) {
        let n = BigRational::from_integer(xs.len().into());
        let vals: Vec<BigRational> = xs.iter().map(|x| BigRational::from_float(*x).unwrap()).collect();
        let mean = vals.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
        if xs.len() < 2 {
            return (mean.to_f64().unwrap(), 0.0);
        }
        let ss = vals
            .iter()
            .map(|v| (v - &mean) * (v - &mean))
            .fold(BigRational::zero(), |a, b| a + b);
        let var = ss / (n - BigRational::from_integer(1.into()));
        (mean.to_f64().unwrap(), var.to_f64().unwrap().sqrt())
    }

    proptest! {
        #[test]
        fn metrics_match_exact_arithmetic(xs in prop::collection::vec(-1.0f64..1.0, 1..40)) {
            let m = compute_metrics(&xs.iter().map(|x| (*x, 1)).collect::<Vec<_>>()).unwrap();
            let (mean, std) = exact_mean_std(&xs);
            prop_assert!((m.mean - mean).abs() < 1e-10);
            prop_assert!((m.std_dev - std).abs() < 1e-10);
        }

        #[test]
        fn selection_is_a_prefix_with_floor(
            sims in prop::collection::vec(0.0f64..1.0, 1..30),
            tokens in prop::collection::vec(1usize..2000, 30),
            min in 1usize..8,
        ) {
            let mut sims = sims;
            sims.sort_by(|a, b| b.total_cmp(a));
            let ranked: Vec<(f64, usize)> = sims.iter().zip(&tokens).map(|(s, t)| (*s, *t)).collect();
            let policy = SelectionPolicy { min_segments: min, ..Default::default() };
            let n = policy.select_count(&ranked);
            prop_assert!(n >= min.min(ranked.len()));
            prop_assert!(n <= ranked.len());
            // every accepted item past the floor passed both tests
            let thr = 0.8 * ranked[0].0;
            let mut total = 0;
            for (i, (s, t)) in ranked[..n].iter().enumerate() {
                if i >= min {
                    prop_assert!(*s >= thr && total < 4000);
                }
                total += t;
            }
        }

        #[test]
        fn dedup_matches_group_by_max(entries in prop::collection::vec((0usize..6, 0.0f64..1.0), 1..40)) {
            // group-by oracle over (payload, score)
            let mut best: HashMap<usize, f64> = HashMap::new();
            for (p, s) in &entries {
                let e = best.entry(*p).or_insert(f64::MIN);
                *e = e.max(*s);
            }
            let mut sorted = entries.clone();
            sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
            let mut seen = HashSet::new();
            let firsts: Vec<(usize, f64)> = sorted.into_iter().filter(|(p, _)| seen.insert(*p)).collect();
            prop_assert_eq!(firsts.len(), best.len());
            for (p, s) in firsts {
                prop_assert_eq!(s, best[&p]);
            }
        }

        #[test]
        fn prune_matches_quadratic_scan(parents in prop::collection::vec(0usize..100, 1..25), order_seed in 0u64..1000) {
            // random forest: node i's parent is some j < i (or none)
            let n = parents.len();
            let parent: Vec<Option<usize>> = (0..n).map(|i| if i == 0 || parents[i] % 4 == 0 { None } else { Some(parents[i] % i) }).collect();
            let ancestors = |mut i: usize| {
                let mut out = Vec::new();
                while let Some(p) = parent[i] { out.push(p); i = p; }
                out
            };
            let mut order: Vec<usize> = (0..n).collect();
            let mut s = order_seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let ranked: Vec<Candidate> = order.iter().enumerate().map(|(r, &i)| {
                let anc: Vec<String> = ancestors(i).iter().map(|a| format!("u{a}")).collect();
                let anc: Vec<&str> = anc.iter().map(String::as_str).collect();
                cand(&format!("u{i}"), EmbedTag::Art, 1.0 - r as f64 / 100.0, 1, &anc)
            }).collect();
            let got: Vec<String> = prune_contained(ranked.clone(), false).iter().map(|c| c.chunk_id.0.clone()).collect();
            let want: Vec<String> = (0..n)
                .filter(|&r| !(0..r).any(|e| ancestors(order[r]).contains(&order[e])))
                .map(|r| format!("u{}", order[r]))
                .collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn prune_examples() {
        let art = cand("art3", EmbedTag::Art, 0.86, 123, &[]);
        let cpt = cand("art3_cpt", EmbedTag::Cpt, 0.80, 97, &["art3"]);
        let kept = prune_contained(vec![art.clone(), cpt.clone()], true);
        assert_eq!(kept.len(), 1);
        let both = prune_contained(vec![cpt.clone(), art.clone()], true);
        assert_eq!(both.len(), 2);
        let by_label = cand("art3_cpt", EmbedTag::IdLabel, 0.80, 97, &["art3"]);
        assert_eq!(prune_contained(vec![art.clone(), by_label.clone()], true).len(), 2);
        assert_eq!(prune_contained(vec![art, by_label], false).len(), 1);
    }

    #[test]
    fn selection_examples() {
        let p = SelectionPolicy::default();
        // floor overrides the budget
        let floor = [(0.8144, 3791), (0.7231, 3815), (0.7137, 170), (0.7130, 239), (0.7102, 274), (0.70, 10)];
        assert_eq!(p.select_count(&floor), 5);
        // drop threshold stops after the floor
        let drop = [(0.8622, 97), (0.8256, 123), (0.7703, 490), (0.6362, 172), (0.6072, 58), (0.60, 10)];
        assert_eq!(p.select_count(&drop), 5);
        // budget crossing item is included
        let cross = [(0.9, 1000), (0.9, 1000), (0.9, 1000), (0.9, 900), (0.9, 50), (0.9, 3000), (0.9, 1)];
        assert_eq!(p.select_count(&cross), 6);
        assert_eq!(p.select_count(&[]), 0);
        assert!(SelectionPolicy { token_budget: 0, ..p }.validate().is_err());
        assert!(SelectionPolicy { drop_fraction: 1.0, ..p }.validate().is_err());
    }

    #[test]
    fn normalization_examples() {
        let rules = NormalizationRules::default();
        let n = |q: &str| normalize_query(q, &rules).text;
        assert_eq!(
            n("Por favor, você poderia me explicar quais direitos a Constituição garante aos povos indígenas?"),
            "Direitos garantidos aos povos indígenas pela Constituição"
        );
        assert_eq!(n("Explique o art. 69 da Constituição"), "Art. 69 da Constituição");
        assert_eq!(n("Explique o art. 69 da Constituição."), "Art. 69 da Constituição");
        assert_eq!(n("Qual o tema do Título II?"), "Tema do Título II");
        for (orig, _) in KNOWN_PAIRS {
            let once = n(orig);
            assert_eq!(n(&once), once);
        }
        let empty = normalize_query("Explique ?", &rules);
        assert_eq!(empty.text, "Explique ?");
        assert!(empty.warning.is_some());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(q in "(Por favor, |Quais são os |Explique a |Qual o )?[A-Za-zçãé0-9 .]{0,30}[?.]?") {
            let rules = NormalizationRules::default();
            let once = normalize_query(&q, &rules).text;
            prop_assert_eq!(normalize_query(&once, &rules).text, once.clone());
        }
    }
}
