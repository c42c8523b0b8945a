//! Content chunk sets for the three base strategies, plus the reference
//! records (label, URN, identifier+label) that poly-vector indexes add for
//! every structural unit.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::document_model::{
    build_label, build_urn, urn_fragment, DocumentTree, LabelForm, UnitId, UnitKind,
};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

/// Window and overlap used by the blind baseline, in tokens.
pub const BLIND_WINDOW: usize = 800;
pub const BLIND_OVERLAP: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmbedTag {
    #[serde(rename = "Blind")]
    Blind,
    #[serde(rename = "ART")]
    Art,
    #[serde(rename = "CPT")]
    Cpt,
    #[serde(rename = "PAR")]
    Par,
    #[serde(rename = "INC")]
    Inc,
    #[serde(rename = "ALI")]
    Ali,
    #[serde(rename = "SEC")]
    Sec,
    #[serde(rename = "SUB")]
    Sub,
    #[serde(rename = "CAP")]
    Cap,
    #[serde(rename = "TIT")]
    Tit,
    #[serde(rename = "DOC")]
    Doc,
    #[serde(rename = "LBL")]
    Lbl,
    #[serde(rename = "URN")]
    Urn,
    #[serde(rename = "I+L")]
    IdLabel,
}

impl EmbedTag {
    pub const ALL: [EmbedTag; 14] = [
        EmbedTag::Blind,
        EmbedTag::Art,
        EmbedTag::Cpt,
        EmbedTag::Par,
        EmbedTag::Inc,
        EmbedTag::Ali,
        EmbedTag::Sec,
        EmbedTag::Sub,
        EmbedTag::Cap,
        EmbedTag::Tit,
        EmbedTag::Doc,
        EmbedTag::Lbl,
        EmbedTag::Urn,
        EmbedTag::IdLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmbedTag::Blind => "Blind",
            EmbedTag::Art => "ART",
            EmbedTag::Cpt => "CPT",
            EmbedTag::Par => "PAR",
            EmbedTag::Inc => "INC",
            EmbedTag::Ali => "ALI",
            EmbedTag::Sec => "SEC",
            EmbedTag::Sub => "SUB",
            EmbedTag::Cap => "CAP",
            EmbedTag::Tit => "TIT",
            EmbedTag::Doc => "DOC",
            EmbedTag::Lbl => "LBL",
            EmbedTag::Urn => "URN",
            EmbedTag::IdLabel => "I+L",
        }
    }

    /// LBL, URN and I+L: vectors of a name rather than of content.
    pub fn is_reference(self) -> bool {
        matches!(self, EmbedTag::Lbl | EmbedTag::Urn | EmbedTag::IdLabel)
    }

    pub fn for_kind(kind: UnitKind) -> EmbedTag {
        match kind {
            UnitKind::Title => EmbedTag::Tit,
            UnitKind::Chapter => EmbedTag::Cap,
            UnitKind::Section => EmbedTag::Sec,
            UnitKind::Subsection => EmbedTag::Sub,
            UnitKind::Article => EmbedTag::Art,
            UnitKind::Caput => EmbedTag::Cpt,
            UnitKind::Paragraph | UnitKind::SoleParagraph => EmbedTag::Par,
            UnitKind::Inciso => EmbedTag::Inc,
            UnitKind::Alinea => EmbedTag::Ali,
        }
    }
}

impl fmt::Display for EmbedTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbedTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "I,L" {
            return Ok(EmbedTag::IdLabel);
        }
        EmbedTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Input(format!("unknown embedding tag {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(pub String);

impl ChunkId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChunkSource {
    Unit { unit: UnitId },
    Window { index: usize, start_token: usize, end_token: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: ChunkId,
    pub source: ChunkSource,
    pub tag: EmbedTag,
    pub display_label: String,
    pub text: String,
    pub token_count: usize,
    /// What the embedder sees for the content record; equals `text`.
    pub embed_input: String,
    /// Chunk ids of the enclosing units, innermost first. Empty for windows.
    #[serde(default)]
    pub ancestors: Vec<ChunkId>,
}

/// A name-based record pointing at a unit's content chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub payload: ChunkId,
    pub tag: EmbedTag,
    pub embed_input: String,
    pub display_label: String,
    pub urn: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChunkingStrategy {
    Blind { window: usize, overlap: usize },
    Flat,
    Multilayer,
}

impl ChunkingStrategy {
    pub fn blind_default() -> Self {
        ChunkingStrategy::Blind {
            window: BLIND_WINDOW,
            overlap: BLIND_OVERLAP,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ChunkingStrategy::Blind { .. } => "blind",
            ChunkingStrategy::Flat => "flat",
            ChunkingStrategy::Multilayer => "multilayer",
        }
    }
}

/// The content chunk of one structural unit: its full text, id'd by URN fragment.
pub fn unit_chunk(tree: &DocumentTree, id: UnitId, tokenizer: &dyn Tokenizer) -> Result<Chunk> {
    let unit = tree
        .get(id)
        .ok_or_else(|| Error::structural(format!("unknown unit {id}")))?;
    let token_count = tokenizer.count(&unit.full_text);
    if token_count == 0 {
        return Err(Error::structural(format!(
            "{} {} has no text to index",
            unit.kind, unit.ordinal
        )));
    }
    let ancestors = tree
        .ancestors(id)
        .map(|a| urn_fragment(tree, a.id).map(ChunkId))
        .collect::<Result<Vec<_>>>()?;
    Ok(Chunk {
        id: ChunkId(urn_fragment(tree, id)?),
        source: ChunkSource::Unit { unit: id },
        tag: EmbedTag::for_kind(unit.kind),
        display_label: build_label(tree, id)?.display,
        text: unit.full_text.clone(),
        token_count,
        embed_input: unit.full_text.clone(),
        ancestors,
    })
}

/// Start offsets (in tokens) of every window over a stream of `n` tokens.
/// The last window may be partial.
pub fn window_starts(n: usize, window: usize, overlap: usize) -> Result<Vec<usize>> {
    if window == 0 || window <= overlap {
        return Err(Error::config(format!(
            "window ({window}) must be larger than overlap ({overlap})"
        )));
    }
    let stride = window - overlap;
    Ok((0..n).step_by(stride).collect())
}

/// Sliding windows over the whole document token stream.
pub fn chunk_blind(
    tree: &DocumentTree,
    tokenizer: &dyn Tokenizer,
    window: usize,
    overlap: usize,
) -> Result<Vec<Chunk>> {
    let text = tree.document_text();
    chunk_text_blind(&text, tokenizer, window, overlap)
}

pub fn chunk_text_blind(
    text: &str,
    tokenizer: &dyn Tokenizer,
    window: usize,
    overlap: usize,
) -> Result<Vec<Chunk>> {
    let spans = tokenizer.spans(text);
    let starts = window_starts(spans.len(), window, overlap)?;
    if spans.is_empty() {
        return Err(Error::structural("document has no tokens"));
    }
    Ok(starts
        .into_iter()
        .enumerate()
        .map(|(i, start)| {
            let end = (start + window).min(spans.len());
            let slice = &text[spans[start].start..spans[end - 1].end];
            let index = i + 1;
            Chunk {
                id: ChunkId(format!("blind-{index:05}")),
                source: ChunkSource::Window {
                    index,
                    start_token: start,
                    end_token: end,
                },
                tag: EmbedTag::Blind,
                display_label: format!("Chunk #{index}"),
                text: slice.to_string(),
                token_count: end - start,
                embed_input: slice.to_string(),
                ancestors: Vec::new(),
            }
        })
        .collect())
}

/// One chunk per article, holding the article's full text.
pub fn chunk_flat(tree: &DocumentTree, tokenizer: &dyn Tokenizer) -> Result<Vec<Chunk>> {
    tree.iter()
        .filter(|u| u.kind == UnitKind::Article)
        .map(|u| unit_chunk(tree, u.id, tokenizer))
        .collect()
}

/// One chunk per structural unit at every level of the hierarchy.
pub fn chunk_multilayer(tree: &DocumentTree, tokenizer: &dyn Tokenizer) -> Result<Vec<Chunk>> {
    tree.iter()
        .map(|u| unit_chunk(tree, u.id, tokenizer))
        .collect()
}

/// LBL, URN and I+L records for each unit, all pointing at the unit's content.
pub fn make_reference_records(
    tree: &DocumentTree,
    units: &[UnitId],
    form: LabelForm,
) -> Result<Vec<ReferenceRecord>> {
    let mut out = Vec::with_capacity(units.len() * 3);
    for &id in units {
        let urn = build_urn(tree, id)?;
        let label = build_label(tree, id)?;
        let payload = ChunkId(urn.fragment().to_string());
        out.push(ReferenceRecord {
            payload: payload.clone(),
            tag: EmbedTag::Lbl,
            embed_input: label.select(form).to_string(),
            display_label: label.display.clone(),
            urn: urn.value.clone(),
        });
        out.push(ReferenceRecord {
            payload: payload.clone(),
            tag: EmbedTag::Urn,
            embed_input: urn.value.clone(),
            display_label: urn.value.clone(),
            urn: urn.value.clone(),
        });
        out.push(ReferenceRecord {
            payload,
            tag: EmbedTag::IdLabel,
            embed_input: format!("{}, {}", urn.value, label.select(form)),
            display_label: format!("{}, {}", urn.value, label.display),
            urn: urn.value,
        });
    }
    Ok(out)
}

/// Everything an index for one configuration needs, before embedding.
#[derive(Debug, Clone)]
pub struct IndexPlan {
    /// Chunks that receive a content embedding.
    pub content: Vec<Chunk>,
    /// Chunks only reachable through reference records.
    pub payload_only: Vec<Chunk>,
    pub references: Vec<ReferenceRecord>,
}

impl IndexPlan {
    pub fn record_count(&self) -> usize {
        self.content.len() + self.references.len()
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.content.iter().chain(self.payload_only.iter())
    }
}

pub fn plan_index(
    tree: &DocumentTree,
    strategy: ChunkingStrategy,
    poly: bool,
    tokenizer: &dyn Tokenizer,
    form: LabelForm,
) -> Result<IndexPlan> {
    let content = match strategy {
        ChunkingStrategy::Blind { window, overlap } => chunk_blind(tree, tokenizer, window, overlap)?,
        ChunkingStrategy::Flat => chunk_flat(tree, tokenizer)?,
        ChunkingStrategy::Multilayer => chunk_multilayer(tree, tokenizer)?,
    };
    if content.is_empty() {
        return Err(Error::structural(format!(
            "{} chunking produced no chunks",
            strategy.name()
        )));
    }
    if !poly {
        return Ok(IndexPlan {
            content,
            payload_only: Vec::new(),
            references: Vec::new(),
        });
    }
    let units: Vec<UnitId> = tree.iter().map(|u| u.id).collect();
    let references = make_reference_records(tree, &units, form)?;
    let have: HashSet<&ChunkId> = content.iter().map(|c| &c.id).collect();
    let payload_only = units
        .iter()
        .filter(|id| {
            urn_fragment(tree, **id)
                .map(|f| !have.contains(&ChunkId(f)))
                .unwrap_or(true)
        })
        .map(|id| unit_chunk(tree, *id, tokenizer))
        .collect::<Result<Vec<_>>>()?;
    Ok(IndexPlan {
        content,
        payload_only,
        references,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document_model::NormIdentity;
    use crate::ingestion::parse_document;
    use crate::tokenizer::WordPunctTokenizer;

    fn tree(src: &str) -> DocumentTree {
        parse_document(src, &NormIdentity::crfb()).unwrap().0
    }

    /// Brute force: every position p with p % stride == 0.
    fn oracle_starts(n: usize, window: usize, overlap: usize) -> Vec<usize> {
        (0..n).filter(|p| p % (window - overlap) == 0).collect()
    }

    #[test]
    fn window_starts_match_enumeration() {
        assert_eq!(window_starts(1200, 800, 400).unwrap(), vec![0, 400, 800]);
        assert_eq!(oracle_starts(1200, 800, 400), vec![0, 400, 800]);
        assert_eq!(window_starts(10, 800, 400).unwrap(), vec![0]);
        for n in [0, 1, 399, 400, 401, 799, 800, 801, 1599, 1600, 5000] {
            for (w, o) in [(800, 400), (10, 3), (5, 0), (2, 1)] {
                assert_eq!(window_starts(n, w, o).unwrap(), oracle_starts(n, w, o));
            }
        }
        assert!(matches!(window_starts(10, 4, 4), Err(Error::Config(_))));
        assert!(matches!(window_starts(10, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn blind_windows_over_exact_stream() {
        let words: Vec<String> = (0..1200).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let chunks = chunk_text_blind(&text, &WordPunctTokenizer, 800, 400).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks[0].token_count, 800);
        assert_eq!(chunks[1].token_count, 800);
        assert_eq!(chunks[2].token_count, 400);
        assert!(chunks[1].text.starts_with("w400 "));
        assert!(chunks[2].text.starts_with("w800 ") && chunks[2].text.ends_with("w1199"));
        for c in &chunks {
            assert_eq!(WordPunctTokenizer.count(&c.text), c.token_count);
        }
        let short = chunk_text_blind("dez palavras", &WordPunctTokenizer, 800, 400).unwrap();
        assert_eq!(short.len(), 1);
    }

    #[test]
    fn flat_chunks_are_article_texts() {
        let t = tree("TÍTULO I\nArt. 1º A: I – x; II – y.\nArt. 2º B.");
        let chunks = chunk_flat(&t, &WordPunctTokenizer).unwrap();
        assert_eq!(chunks.len(), 2);
        for c in &chunks {
            let ChunkSource::Unit { unit } = c.source else { panic!() };
            assert_eq!(c.text, t.unit(unit).full_text);
            assert!(t.document_text().contains(&c.text));
            assert_eq!(c.tag, EmbedTag::Art);
        }
        assert_eq!(chunks[0].ancestors, vec![ChunkId("tit1".into())]);
        let single = tree("Art. 1º Único.");
        assert_eq!(chunk_flat(&single, &WordPunctTokenizer).unwrap().len(), 1);
    }

    #[test]
    fn multilayer_enumerates_every_unit() {
        let t = tree("Art. 5º Caput:\nI – um;\nII – dois.\n§ 1º Parágrafo.");
        let chunks = chunk_multilayer(&t, &WordPunctTokenizer).unwrap();
        let ids: Vec<&str> = chunks.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["art5", "art5_cpt", "art5_cpt_inc1", "art5_cpt_inc2", "art5_par1"]);
        let tags: Vec<EmbedTag> = chunks.iter().map(|c| c.tag).collect();
        assert_eq!(
            tags,
            vec![EmbedTag::Art, EmbedTag::Cpt, EmbedTag::Inc, EmbedTag::Inc, EmbedTag::Par]
        );
        assert_eq!(
            chunks[2].ancestors,
            vec![ChunkId("art5_cpt".into()), ChunkId("art5".into())]
        );
    }

    #[test]
    fn reference_records_come_in_threes() {
        let t = tree("TÍTULO I\nArt. 2º São Poderes.");
        let units: Vec<UnitId> = t.iter().map(|u| u.id).collect();
        let refs = make_reference_records(&t, &units, LabelForm::Display).unwrap();
        assert_eq!(refs.len(), 3 * units.len());
        let il = refs
            .iter()
            .find(|r| r.tag == EmbedTag::IdLabel && r.payload.as_str() == "art2")
            .unwrap();
        assert_eq!(
            il.embed_input,
            "urn:lex:br:federal:constituicao:1988-10-05;1988!art2, CRFB, Art. 2º"
        );
    }

    #[test]
    fn poly_plan_sizes() {
        let t = tree("TÍTULO I\nArt. 1º A: I – x; II – y.\nParágrafo único. P.\nArt. 2º B.");
        let n_units = t.len();
        let tok = WordPunctTokenizer;
        for strategy in [
            ChunkingStrategy::Blind { window: 4, overlap: 2 },
            ChunkingStrategy::Flat,
            ChunkingStrategy::Multilayer,
        ] {
            let base = plan_index(&t, strategy, false, &tok, LabelForm::Canonical).unwrap();
            let poly = plan_index(&t, strategy, true, &tok, LabelForm::Canonical).unwrap();
            assert_eq!(poly.record_count(), base.record_count() + 3 * n_units);
            let store: HashSet<&ChunkId> = poly.chunks().map(|c| &c.id).collect();
            assert!(poly.references.iter().all(|r| store.contains(&r.payload)));
        }
    }

    #[test]
    fn tag_codes_round_trip() {
        for tag in EmbedTag::ALL {
            assert_eq!(tag.as_str().parse::<EmbedTag>().unwrap(), tag);
            let json = serde_json::to_string(&tag).unwrap();
            assert_eq!(json, format!("\"{}\"", tag.as_str()));
        }
        assert_eq!("I,L".parse::<EmbedTag>().unwrap(), EmbedTag::IdLabel);
    }
}
