//! Line-oriented parser for legal texts following Brazilian drafting
//! conventions.
//!
//! Markers are recognised at the start of a line and also inline, right
//! after sentence-ending punctuation (`"… avulso. Art. 8º …"`). Anything that
//! does not open a unit is attached to the innermost open unit.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::document_model::{
    check_urn_uniqueness, roman_to_arabic, DocumentTree, NormIdentity, StructuralUnit, TreeBuilder, UnitId,
    UnitKind,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub unit_count_by_kind: BTreeMap<UnitKind, usize>,
    pub warnings: Vec<ParseWarning>,
}

impl ParseReport {
    pub fn total_units(&self) -> usize {
        self.unit_count_by_kind.values().sum()
    }

    pub fn count(&self, kind: UnitKind) -> usize {
        self.unit_count_by_kind.get(&kind).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment<'a> {
    Marker {
        kind: UnitKind,
        ordinal: &'a str,
        /// Text that stays with the marker in the unit's own text.
        head: &'a str,
        rest: &'a str,
    },
    Text(&'a str),
}

struct Patterns {
    title: Regex,
    chapter: Regex,
    section: Regex,
    subsection: Regex,
    article: Regex,
    paragraph: Regex,
    sole: Regex,
    inciso: Regex,
    alinea: Regex,
    inline: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        let re = |p: &str| Regex::new(p).expect("static pattern");
        Patterns {
            title: re(r"^(T[ÍI]TULO\s+([IVXLCDM]+|ÚNICO)\b)\s*(.*)$"),
            chapter: re(r"^(CAP[ÍI]TULO\s+([IVXLCDM]+|ÚNICO)\b)\s*(.*)$"),
            section: re(r"^((?:Seção|SEÇÃO)\s+([IVXLCDM]+|ÚNICA|Única)\b)\s*(.*)$"),
            subsection: re(r"^((?:Subseção|SUBSEÇÃO)\s+([IVXLCDM]+|ÚNICA|Única)\b)\s*(.*)$"),
            article: re(r"^(Art\.\s*(\d+(?:-[A-Z])?[º°.]?))\s*(.*)$"),
            paragraph: re(r"^(§\s*(\d+[º°.]?))\s*(.*)$"),
            sole: re(r"^((Parágrafo\s+único)\.?)\s*(.*)$"),
            inciso: re(r"^(([IVXLCDM]+)\s*[–—-])\s+(.*)$"),
            alinea: re(r"^(([a-z])\))\s+(.*)$"),
            inline: re(
                r"[.;:]\s+(Art\.\s*\d|§\s*\d|Parágrafo\s+único|[IVXLCDM]+\s*[–—-]\s|[a-z]\)\s)",
            ),
        }
    })
}

fn classify(text: &str) -> Segment<'_> {
    let p = patterns();
    let table: [(&Regex, UnitKind); 9] = [
        (&p.title, UnitKind::Title),
        (&p.chapter, UnitKind::Chapter),
        (&p.subsection, UnitKind::Subsection),
        (&p.section, UnitKind::Section),
        (&p.article, UnitKind::Article),
        (&p.paragraph, UnitKind::Paragraph),
        (&p.sole, UnitKind::SoleParagraph),
        (&p.inciso, UnitKind::Inciso),
        (&p.alinea, UnitKind::Alinea),
    ];
    for (re, kind) in table {
        if let Some(c) = re.captures(text) {
            let ordinal = match kind {
                UnitKind::SoleParagraph => "único",
                _ => c.get(2).map_or("", |m| m.as_str()),
            };
            // "CIVIL – ..." is a heading, not inciso 149.
            if kind == UnitKind::Inciso && roman_to_arabic(ordinal).is_none() {
                continue;
            }
            return Segment::Marker {
                kind,
                ordinal,
                head: c.get(1).map_or("", |m| m.as_str()),
                rest: c.get(3).map_or("", |m| m.as_str()),
            };
        }
    }
    Segment::Text(text)
}

/// Splits one source line at inline markers that follow sentence punctuation.
fn split_inline(line: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for c in patterns().inline.captures_iter(line) {
        let at = c.get(1).expect("group").start();
        if at > start {
            pieces.push(line[start..at].trim());
            start = at;
        }
    }
    pieces.push(line[start..].trim());
    pieces.retain(|p| !p.is_empty());
    pieces
}

#[derive(Default)]
struct Cursor {
    title: Option<UnitId>,
    chapter: Option<UnitId>,
    section: Option<UnitId>,
    subsection: Option<UnitId>,
    article: Option<UnitId>,
    caput: Option<UnitId>,
    paragraph: Option<UnitId>,
    inciso: Option<UnitId>,
    alinea: Option<UnitId>,
    /// Grouping whose heading lines ("DOS PRINCÍPIOS FUNDAMENTAIS") are still
    /// being read.
    heading: Option<UnitId>,
}

impl Cursor {
    fn innermost_grouping(&self) -> Option<UnitId> {
        self.subsection
            .or(self.section)
            .or(self.chapter)
            .or(self.title)
    }

    fn innermost(&self) -> Option<UnitId> {
        self.alinea
            .or(self.inciso)
            .or(self.paragraph)
            .or(self.caput)
            .or_else(|| self.innermost_grouping())
    }

    fn close_article(&mut self) {
        self.article = None;
        self.caput = None;
        self.paragraph = None;
        self.inciso = None;
        self.alinea = None;
    }
}

/// Parses `source` into a document tree.
pub fn parse_document(source: &str, norm: &NormIdentity) -> Result<(DocumentTree, ParseReport)> {
    norm.validate()?;
    if source.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "document is empty".into(),
        });
    }

    let mut builder = TreeBuilder::new(norm.clone());
    let mut cur = Cursor::default();
    let mut warnings = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        for piece in split_inline(line) {
            match classify(piece) {
                Segment::Marker {
                    kind,
                    ordinal,
                    head,
                    rest,
                } => open_unit(
                    &mut builder,
                    &mut cur,
                    kind,
                    ordinal,
                    head,
                    rest,
                    line_no,
                )?,
                Segment::Text(text) => {
                    attach_text(&mut builder, &cur, text, line_no, &mut warnings)
                }
            }
        }
    }

    let tree = builder.finish();
    for u in tree.iter() {
        if u.kind.is_textual() && u.full_text.trim().is_empty() {
            warnings.push(ParseWarning {
                line: u.line,
                message: format!("{} {} has no text", u.kind, u.ordinal),
            });
        }
    }
    tree.validate()?;
    check_urn_uniqueness(&tree)?;

    let report = ParseReport {
        unit_count_by_kind: tree.count_by_kind(),
        warnings,
    };
    Ok((tree, report))
}

fn open_unit(
    b: &mut TreeBuilder,
    cur: &mut Cursor,
    kind: UnitKind,
    ordinal: &str,
    head: &str,
    rest: &str,
    line: usize,
) -> Result<()> {
    let orphan = |what: &str| Error::Parse {
        line,
        message: format!("{kind} {ordinal:?} appears {what}"),
    };
    let whole = if rest.is_empty() {
        head.to_string()
    } else {
        format!("{head} {rest}")
    };
    cur.heading = None;
    match kind {
        UnitKind::Title => {
            *cur = Cursor::default();
            let id = b.push_at(kind, ordinal, None, whole, line)?;
            cur.title = Some(id);
            cur.heading = Some(id);
        }
        UnitKind::Chapter => {
            cur.close_article();
            cur.section = None;
            cur.subsection = None;
            let id = b.push_at(kind, ordinal, cur.title, whole, line)?;
            cur.chapter = Some(id);
            cur.heading = Some(id);
        }
        UnitKind::Section => {
            cur.close_article();
            cur.subsection = None;
            let id = b.push_at(kind, ordinal, cur.chapter.or(cur.title), whole, line)?;
            cur.section = Some(id);
            cur.heading = Some(id);
        }
        UnitKind::Subsection => {
            let section = cur.section.ok_or_else(|| orphan("outside any section"))?;
            cur.close_article();
            let id = b.push_at(kind, ordinal, Some(section), whole, line)?;
            cur.subsection = Some(id);
            cur.heading = Some(id);
        }
        UnitKind::Article => {
            cur.close_article();
            let parent = cur.innermost_grouping();
            let article = b.push_at(kind, ordinal, parent, head, line)?;
            let caput = b.push_at(UnitKind::Caput, "", Some(article), rest, line)?;
            cur.article = Some(article);
            cur.caput = Some(caput);
        }
        UnitKind::Paragraph | UnitKind::SoleParagraph => {
            let article = cur.article.ok_or_else(|| orphan("before any article"))?;
            let id = b.push_at(kind, ordinal, Some(article), whole, line)?;
            cur.paragraph = Some(id);
            cur.inciso = None;
            cur.alinea = None;
        }
        UnitKind::Inciso => {
            let parent = cur
                .paragraph
                .or(cur.caput)
                .ok_or_else(|| orphan("before any article"))?;
            let id = b.push_at(kind, ordinal, Some(parent), whole, line)?;
            cur.inciso = Some(id);
            cur.alinea = None;
        }
        UnitKind::Alinea => {
            let inciso = cur.inciso.ok_or_else(|| orphan("outside any inciso"))?;
            let id = b.push_at(kind, ordinal, Some(inciso), whole, line)?;
            cur.alinea = Some(id);
        }
        UnitKind::Caput => unreachable!("caput is never a marker"),
    }
    Ok(())
}

fn attach_text(
    b: &mut TreeBuilder,
    cur: &Cursor,
    text: &str,
    line: usize,
    warnings: &mut Vec<ParseWarning>,
) {
    if let Some(heading) = cur.heading {
        b.append_text(heading, text);
        return;
    }
    let Some(target) = cur.innermost() else {
        // Title page, preamble and anything else before the first marker.
        b.append_preamble(text);
        return;
    };
    let unit = b.unit(target);
    let silent = unit.kind == UnitKind::Caput && unit.own_text.is_empty() && unit.children.is_empty();
    if !silent {
        warnings.push(ParseWarning {
            line,
            message: format!(
                "unrecognized line attached to {} {}",
                unit.kind, unit.ordinal
            ),
        });
    }
    b.append_text(target, text);
}

/// Units of the requested kinds, in document order.
pub fn enumerate_units<'t>(tree: &'t DocumentTree, kinds: &[UnitKind]) -> Vec<&'t StructuralUnit> {
    tree.iter().filter(|u| kinds.contains(&u.kind)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document_model::{build_label, build_urn};

    fn parse(src: &str) -> (DocumentTree, ParseReport) {
        parse_document(src, &NormIdentity::crfb()).expect("parse")
    }

    #[test]
    fn minimal_article_has_one_caput() {
        let (tree, report) = parse("Art. 1º Texto.");
        assert_eq!(tree.len(), 2);
        assert_eq!(tree.units[0].kind, UnitKind::Article);
        assert_eq!(tree.units[1].kind, UnitKind::Caput);
        assert_eq!(tree.units[1].own_text, "Texto.");
        assert_eq!(tree.units[0].full_text, "Art. 1º\nTexto.");
        assert_eq!(report.count(UnitKind::Article), 1);
        assert_eq!(report.count(UnitKind::Caput), 1);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn incisos_and_paragraphs_nest() {
        let src = "Art. 3º Objetivos:\nI – construir;\nII – garantir;\n§ 1º Um parágrafo.\n";
        let (tree, _) = parse(src);
        let kinds: Vec<_> = tree.iter().map(|u| u.kind).collect();
        assert_eq!(
            kinds,
            vec![
                UnitKind::Article,
                UnitKind::Caput,
                UnitKind::Inciso,
                UnitKind::Inciso,
                UnitKind::Paragraph
            ]
        );
        assert_eq!(tree.units[2].parent, Some(UnitId(1)));
        assert_eq!(tree.units[4].parent, Some(UnitId(0)));
        assert_eq!(build_urn(&tree, UnitId(3)).unwrap().fragment(), "art3_cpt_inc2");
    }

    #[test]
    fn inline_markers_open_units() {
        let src = "Art. 7º São direitos: I – um; II – outro. Parágrafo único. Fim do artigo. Art. 8º Livre.";
        let (tree, report) = parse(src);
        let frags: Vec<_> = tree
            .iter()
            .map(|u| build_urn(&tree, u.id).unwrap().fragment().to_string())
            .collect();
        assert_eq!(
            frags,
            vec!["art7", "art7_cpt", "art7_cpt_inc1", "art7_cpt_inc2", "art7_par1u", "art8", "art8_cpt"]
        );
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn grouping_headings_and_preamble() {
        let src = "CONSTITUIÇÃO\nPREÂMBULO texto\nTÍTULO I\nDOS PRINCÍPIOS FUNDAMENTAIS\nArt. 1º A.\nTÍTULO II\nDOS DIREITOS\nCAPÍTULO I\nDOS DEVERES\nArt. 5º B.\nTÍTULO IV\nCAPÍTULO I\nSeção VIII\nSubseção III\nDAS LEIS\nArt. 69. C.";
        let (tree, report) = parse(src);
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
        assert_eq!(tree.preamble, "CONSTITUIÇÃO PREÂMBULO texto");
        let art69 = tree.iter().find(|u| u.ordinal == "69.").unwrap();
        let sub = tree.unit(art69.parent.unwrap());
        assert_eq!(sub.kind, UnitKind::Subsection);
        assert_eq!(
            build_label(&tree, sub.id).unwrap().display,
            "CRFB, TÍTULO IV, CAPÍTULO I, Seção VIII, Subseção III"
        );
        assert_eq!(build_urn(&tree, sub.id).unwrap().fragment(), "tit4_cap1_sec8_sub3");
        assert_eq!(report.count(UnitKind::Title), 3);
    }

    #[test]
    fn orphan_paragraph_is_an_error_with_line() {
        let err = parse_document("TÍTULO I\n§ 1º Sem artigo.", &NormIdentity::crfb()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_document("Art. 1º X.\na) solta", &NormIdentity::crfb()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_line_attaches_with_warning() {
        let (tree, report) = parse("Art. 1º Caput.\nI – inciso;\ncontinuação solta");
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].line, 3);
        assert_eq!(tree.units[2].own_text, "I – inciso; continuação solta");
    }

    #[test]
    fn empty_document_is_rejected() {
        assert!(matches!(
            parse_document("  \n\n", &NormIdentity::crfb()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn enumerate_filters_in_document_order() {
        let (tree, _) = parse("Art. 1º A: I – x; II – y.\nArt. 2º B.");
        let arts = enumerate_units(&tree, &[UnitKind::Article]);
        assert_eq!(arts.len(), 2);
        assert!(enumerate_units(&tree, &[]).is_empty());
        let all = enumerate_units(&tree, &UnitKind::ALL);
        assert_eq!(all.len(), tree.len());
        assert!(all.windows(2).all(|w| w[0].id < w[1].id));
    }
}
