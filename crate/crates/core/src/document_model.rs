//! Legal-document hierarchy, canonical labels and `urn:lex` identifiers.
//!
//! A [`DocumentTree`] is an arena of [`StructuralUnit`]s stored in pre-order,
//! so a unit's id is also its position in document order. The document node
//! itself is implicit: units with `parent == None` hang off it, and any text
//! that precedes the first marker (title page, preamble) is kept as
//! [`DocumentTree::preamble`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormIdentity {
    pub full_name: String,
    pub short_name: String,
    /// `urn:lex` prefix without the `!` fragment separator.
    pub urn_base: String,
}

impl NormIdentity {
    pub fn new(
        full_name: impl Into<String>,
        short_name: impl Into<String>,
        urn_base: impl Into<String>,
    ) -> Result<Self> {
        let norm = NormIdentity {
            full_name: full_name.into(),
            short_name: short_name.into(),
            urn_base: urn_base.into(),
        };
        norm.validate()?;
        Ok(norm)
    }

    /// The 1988 Brazilian Federal Constitution.
    pub fn crfb() -> Self {
        NormIdentity {
            full_name: "Constituição da República Federativa do Brasil de 1988".into(),
            short_name: "CRFB".into(),
            urn_base: "urn:lex:br:federal:constituicao:1988-10-05;1988".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.full_name.trim().is_empty() {
            return Err(Error::config("norm full name is empty"));
        }
        if self.urn_base.trim().is_empty() {
            return Err(Error::config("norm urn base is empty"));
        }
        if self.urn_base.contains('!') {
            return Err(Error::config(format!(
                "urn base {:?} must not contain the fragment separator '!'",
                self.urn_base
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    Title,
    Chapter,
    Section,
    Subsection,
    Article,
    Caput,
    Paragraph,
    SoleParagraph,
    Inciso,
    Alinea,
}

impl UnitKind {
    pub const ALL: [UnitKind; 10] = [
        UnitKind::Title,
        UnitKind::Chapter,
        UnitKind::Section,
        UnitKind::Subsection,
        UnitKind::Article,
        UnitKind::Caput,
        UnitKind::Paragraph,
        UnitKind::SoleParagraph,
        UnitKind::Inciso,
        UnitKind::Alinea,
    ];

    pub fn is_grouping(self) -> bool {
        matches!(
            self,
            UnitKind::Title | UnitKind::Chapter | UnitKind::Section | UnitKind::Subsection
        )
    }

    pub fn is_textual(self) -> bool {
        !self.is_grouping()
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Title => "title",
            UnitKind::Chapter => "chapter",
            UnitKind::Section => "section",
            UnitKind::Subsection => "subsection",
            UnitKind::Article => "article",
            UnitKind::Caput => "caput",
            UnitKind::Paragraph => "paragraph",
            UnitKind::SoleParagraph => "sole_paragraph",
            UnitKind::Inciso => "inciso",
            UnitKind::Alinea => "alinea",
        }
    }

    /// Heading word used in labels for grouping kinds.
    fn designator(self) -> &'static str {
        match self {
            UnitKind::Title => "TÍTULO",
            UnitKind::Chapter => "CAPÍTULO",
            UnitKind::Section => "Seção",
            UnitKind::Subsection => "Subseção",
            _ => "",
        }
    }

    fn parent_allowed(self, parent: Option<UnitKind>) -> bool {
        use UnitKind::*;
        match self {
            Title => parent.is_none(),
            Chapter => matches!(parent, None | Some(Title)),
            Section => matches!(parent, None | Some(Title) | Some(Chapter)),
            Subsection => matches!(parent, Some(Section)),
            Article => parent.is_none_or(UnitKind::is_grouping),
            Caput | Paragraph | SoleParagraph => parent == Some(Article),
            Inciso => matches!(parent, Some(Caput) | Some(Paragraph) | Some(SoleParagraph)),
            Alinea => parent == Some(Inciso),
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub usize);

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralUnit {
    pub id: UnitId,
    pub kind: UnitKind,
    /// Designator as printed in the source: "VIII", "5º", "170.", "a", "único".
    pub ordinal: String,
    pub parent: Option<UnitId>,
    pub children: Vec<UnitId>,
    pub own_text: String,
    pub full_text: String,
    /// 1-based source line where the unit opened (0 when built by hand).
    #[serde(default)]
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentTree {
    pub norm: NormIdentity,
    pub preamble: String,
    pub roots: Vec<UnitId>,
    pub units: Vec<StructuralUnit>,
}

impl DocumentTree {
    pub fn unit(&self, id: UnitId) -> &StructuralUnit {
        &self.units[id.0]
    }

    pub fn get(&self, id: UnitId) -> Option<&StructuralUnit> {
        self.units.get(id.0)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StructuralUnit> {
        self.units.iter()
    }

    /// Ancestors from the direct parent up to the top-level unit.
    pub fn ancestors(&self, id: UnitId) -> impl Iterator<Item = &StructuralUnit> + '_ {
        std::iter::successors(self.unit(id).parent, move |p| self.unit(*p).parent)
            .map(move |p| self.unit(p))
    }

    pub fn is_ancestor(&self, ancestor: UnitId, descendant: UnitId) -> bool {
        self.ancestors(descendant).any(|u| u.id == ancestor)
    }

    /// Path from the top-level unit down to `id`, inclusive.
    pub fn path(&self, id: UnitId) -> Vec<&StructuralUnit> {
        let mut path: Vec<_> = self.ancestors(id).collect();
        path.reverse();
        path.push(self.unit(id));
        path
    }

    /// Full document text: preamble followed by every top-level unit.
    pub fn document_text(&self) -> String {
        let mut parts: Vec<&str> = Vec::with_capacity(self.roots.len() + 1);
        if !self.preamble.is_empty() {
            parts.push(&self.preamble);
        }
        parts.extend(
            self.roots
                .iter()
                .map(|r| self.unit(*r).full_text.as_str())
                .filter(|t| !t.is_empty()),
        );
        parts.join("\n")
    }

    pub fn count_by_kind(&self) -> BTreeMap<UnitKind, usize> {
        let mut counts = BTreeMap::new();
        for u in &self.units {
            *counts.entry(u.kind).or_insert(0) += 1;
        }
        counts
    }

    /// Checks the tree invariants: pre-order ids, consistent parent/child
    /// links, allowed parent kinds, and full_text containment.
    pub fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        for (i, u) in self.units.iter().enumerate() {
            if u.id.0 != i {
                return Err(Error::structural(format!("unit at {i} has id {}", u.id)));
            }
            let parent_kind = match u.parent {
                Some(p) => {
                    let parent = self
                        .get(p)
                        .ok_or_else(|| Error::structural(format!("{} has dangling parent", u.id)))?;
                    if p.0 >= i || !parent.children.contains(&u.id) {
                        return Err(Error::structural(format!("{} is not linked from {p}", u.id)));
                    }
                    Some(parent.kind)
                }
                None => {
                    if !self.roots.contains(&u.id) {
                        return Err(Error::structural(format!("{} is not a root", u.id)));
                    }
                    None
                }
            };
            if !u.kind.parent_allowed(parent_kind) {
                return Err(Error::structural(format!(
                    "{} ({}) cannot be placed under {}",
                    u.id,
                    u.kind,
                    parent_kind.map_or("the document".to_string(), |k| k.to_string())
                )));
            }
            let mut last = u.id.0;
            for c in &u.children {
                let child = self
                    .get(*c)
                    .ok_or_else(|| Error::structural(format!("{} has dangling child", u.id)))?;
                if c.0 <= last || child.parent != Some(u.id) {
                    return Err(Error::structural(format!("child {c} of {} out of order", u.id)));
                }
                if !u.full_text.contains(&child.full_text) {
                    return Err(Error::structural(format!(
                        "full text of {} does not contain child {c}",
                        u.id
                    )));
                }
                last = c.0;
            }
        }
        Ok(())
    }
}

/// Incremental, order-preserving construction of a [`DocumentTree`].
#[derive(Debug)]
pub struct TreeBuilder {
    tree: DocumentTree,
}

impl TreeBuilder {
    pub fn new(norm: NormIdentity) -> Self {
        TreeBuilder {
            tree: DocumentTree {
                norm,
                preamble: String::new(),
                roots: Vec::new(),
                units: Vec::new(),
            },
        }
    }

    pub fn push(
        &mut self,
        kind: UnitKind,
        ordinal: impl Into<String>,
        parent: Option<UnitId>,
        own_text: impl Into<String>,
    ) -> Result<UnitId> {
        self.push_at(kind, ordinal, parent, own_text, 0)
    }

    pub fn push_at(
        &mut self,
        kind: UnitKind,
        ordinal: impl Into<String>,
        parent: Option<UnitId>,
        own_text: impl Into<String>,
        line: usize,
    ) -> Result<UnitId> {
        let parent_kind = match parent {
            Some(p) => Some(
                self.tree
                    .get(p)
                    .ok_or_else(|| Error::structural(format!("unknown parent {p}")))?
                    .kind,
            ),
            None => None,
        };
        if !kind.parent_allowed(parent_kind) {
            return Err(Error::structural(format!(
                "{kind} cannot be placed under {}",
                parent_kind.map_or("the document".to_string(), |k| k.to_string())
            )));
        }
        let id = UnitId(self.tree.units.len());
        self.tree.units.push(StructuralUnit {
            id,
            kind,
            ordinal: ordinal.into(),
            parent,
            children: Vec::new(),
            own_text: own_text.into(),
            full_text: String::new(),
            line,
        });
        match parent {
            Some(p) => self.tree.units[p.0].children.push(id),
            None => self.tree.roots.push(id),
        }
        Ok(id)
    }

    pub fn append_text(&mut self, id: UnitId, text: &str) {
        append_joined(&mut self.tree.units[id.0].own_text, text);
    }

    pub fn append_preamble(&mut self, text: &str) {
        append_joined(&mut self.tree.preamble, text);
    }

    pub fn unit(&self, id: UnitId) -> &StructuralUnit {
        self.tree.unit(id)
    }

    pub fn is_empty(&self) -> bool {
        self.tree.units.is_empty()
    }

    pub fn finish(mut self) -> DocumentTree {
        // Children always have larger ids, so a reverse sweep sees them first.
        for i in (0..self.tree.units.len()).rev() {
            let mut parts: Vec<String> = Vec::new();
            let unit = &self.tree.units[i];
            if !unit.own_text.is_empty() {
                parts.push(unit.own_text.clone());
            }
            for c in &unit.children {
                let text = &self.tree.units[c.0].full_text;
                if !text.is_empty() {
                    parts.push(text.clone());
                }
            }
            self.tree.units[i].full_text = parts.join("\n");
        }
        self.tree
    }
}

fn append_joined(target: &mut String, text: &str) {
    let text = text.trim();
    if text.is_empty() {
        return;
    }
    if !target.is_empty() {
        target.push(' ');
    }
    target.push_str(text);
}

// ---------------------------------------------------------------------------
// Labels

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitLabel {
    /// Embedding input: full norm name plus the unit designation.
    pub canonical: String,
    /// Abbreviated form used in reports ("CRFB, Art. 3º, caput").
    pub display: String,
}

/// Which label string feeds the LBL and I+L embeddings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelForm {
    #[default]
    Canonical,
    Display,
}

impl UnitLabel {
    pub fn select(&self, form: LabelForm) -> &str {
        match form {
            LabelForm::Canonical => &self.canonical,
            LabelForm::Display => &self.display,
        }
    }
}

pub fn build_label(tree: &DocumentTree, id: UnitId) -> Result<UnitLabel> {
    let unit = tree
        .get(id)
        .ok_or_else(|| Error::structural(format!("unknown unit {id}")))?;
    let norm = &tree.norm;
    let path = tree.path(id);

    if unit.kind.is_grouping() {
        let designation = path
            .iter()
            .map(|u| format!("{} {}", u.kind.designator(), u.ordinal))
            .collect::<Vec<_>>()
            .join(", ");
        return Ok(UnitLabel {
            canonical: format!("{}, {designation}", norm.full_name),
            display: format!("{}, {designation}", norm.short_name),
        });
    }

    let article_pos = path
        .iter()
        .position(|u| u.kind == UnitKind::Article)
        .ok_or_else(|| Error::structural(format!("{id} ({}) has no enclosing article", unit.kind)))?;
    let article = path[article_pos];
    let mut canonical = format!(
        "{}, Artigo {}",
        norm.full_name,
        strip_trailing_period(&article.ordinal)
    );
    let mut display = format!("{}, Art. {}", norm.short_name, article.ordinal);
    for u in &path[article_pos + 1..] {
        let (long, short) = match u.kind {
            // The caput is only named when it is the unit itself; its incisos
            // hang directly off the article in the long form.
            UnitKind::Caput => (
                (u.id == id).then(|| "caput".to_string()),
                "caput".to_string(),
            ),
            UnitKind::Paragraph => (
                Some(format!("§ {}", strip_trailing_period(&u.ordinal))),
                format!("§ {}", u.ordinal),
            ),
            UnitKind::SoleParagraph => (
                Some("Parágrafo único".to_string()),
                "Parágrafo único.".to_string(),
            ),
            UnitKind::Inciso => (
                Some(format!("Inciso {}", u.ordinal)),
                format!("Inciso {}", u.ordinal),
            ),
            UnitKind::Alinea => (
                Some(format!("Alínea {}", u.ordinal)),
                format!("Alínea {}", u.ordinal),
            ),
            other => {
                return Err(Error::structural(format!(
                    "{other} cannot appear inside an article"
                )))
            }
        };
        if let Some(long) = long {
            canonical.push_str(", ");
            canonical.push_str(&long);
        }
        display.push_str(", ");
        display.push_str(&short);
    }
    Ok(UnitLabel { canonical, display })
}

fn strip_trailing_period(s: &str) -> &str {
    s.strip_suffix('.').unwrap_or(s)
}

// ---------------------------------------------------------------------------
// URNs

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitUrn {
    pub value: String,
}

impl UnitUrn {
    pub fn new(norm: &NormIdentity, fragment: &str) -> Result<Self> {
        let valid = !fragment.is_empty()
            && fragment.split('_').all(|s| !s.is_empty())
            && fragment
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-');
        if !valid {
            return Err(Error::structural(format!("invalid urn fragment {fragment:?}")));
        }
        Ok(UnitUrn {
            value: format!("{}!{fragment}", norm.urn_base),
        })
    }

    pub fn fragment(&self) -> &str {
        self.value.rsplit_once('!').map_or("", |(_, f)| f)
    }
}

impl fmt::Display for UnitUrn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

pub fn build_urn(tree: &DocumentTree, id: UnitId) -> Result<UnitUrn> {
    let fragment = urn_fragment(tree, id)?;
    UnitUrn::new(&tree.norm, &fragment)
}

/// Fragment after the `!`, e.g. `art5_cpt_inc1` or `tit8_cap6`.
pub fn urn_fragment(tree: &DocumentTree, id: UnitId) -> Result<String> {
    let unit = tree
        .get(id)
        .ok_or_else(|| Error::structural(format!("unknown unit {id}")))?;
    let parent_fragment = || -> Result<String> {
        let parent = unit
            .parent
            .ok_or_else(|| Error::structural(format!("{id} ({}) has no parent", unit.kind)))?;
        urn_fragment(tree, parent)
    };
    let nested = |segment: String| -> Result<String> {
        match unit.parent {
            Some(p) => Ok(format!("{}_{segment}", urn_fragment(tree, p)?)),
            None => Ok(segment),
        }
    };
    match unit.kind {
        UnitKind::Title => Ok(format!("tit{}", grouping_number(&unit.ordinal)?)),
        UnitKind::Chapter => nested(format!("cap{}", grouping_number(&unit.ordinal)?)),
        UnitKind::Section => nested(format!("sec{}", grouping_number(&unit.ordinal)?)),
        UnitKind::Subsection => nested(format!("sub{}", grouping_number(&unit.ordinal)?)),
        UnitKind::Article => Ok(format!("art{}", article_number(&unit.ordinal)?)),
        UnitKind::Caput => Ok(format!("{}_cpt", parent_fragment()?)),
        UnitKind::Paragraph => Ok(format!(
            "{}_par{}",
            parent_fragment()?,
            arabic_ordinal(&unit.ordinal)?
        )),
        UnitKind::SoleParagraph => Ok(format!("{}_par1u", parent_fragment()?)),
        UnitKind::Inciso => Ok(format!(
            "{}_inc{}",
            parent_fragment()?,
            roman_to_arabic(&unit.ordinal)
                .ok_or_else(|| bad_ordinal(unit))?
        )),
        UnitKind::Alinea => {
            let letter = unit.ordinal.trim().trim_end_matches(')').to_lowercase();
            if letter.is_empty() || !letter.chars().all(|c| c.is_ascii_lowercase()) {
                return Err(bad_ordinal(unit));
            }
            Ok(format!("{}_ali{letter}", parent_fragment()?))
        }
    }
}

fn bad_ordinal(unit: &StructuralUnit) -> Error {
    Error::structural(format!(
        "{} ({}) has unusable ordinal {:?}",
        unit.id, unit.kind, unit.ordinal
    ))
}

/// Roman designator of a grouping, or "ÚNICO"/"ÚNICA" for a sole grouping.
fn grouping_number(ordinal: &str) -> Result<String> {
    let ord = ordinal.trim();
    if ord.eq_ignore_ascii_case("único")
        || ord.eq_ignore_ascii_case("única")
        || ord == "ÚNICO"
        || ord == "ÚNICA"
    {
        return Ok("1u".into());
    }
    roman_to_arabic(ord)
        .map(|n| n.to_string())
        .or_else(|| arabic_ordinal(ord).ok().map(|n| n.to_string()))
        .ok_or_else(|| Error::structural(format!("unusable grouping ordinal {ordinal:?}")))
}

/// "5º" -> "5", "51." -> "51", "103-A" -> "103-a".
pub fn article_number(ordinal: &str) -> Result<String> {
    let cleaned = clean_ordinal(ordinal);
    let (digits, suffix) = match cleaned.split_once('-') {
        Some((d, s)) => (d, Some(s)),
        None => (cleaned.as_str(), None),
    };
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::structural(format!("unusable article ordinal {ordinal:?}")));
    }
    let digits = digits.trim_start_matches('0');
    let bad = || Error::structural(format!("unusable article ordinal {ordinal:?}"));
    if digits.is_empty() {
        return Err(bad());
    }
    match suffix {
        None => Ok(digits.to_string()),
        Some(s) if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphabetic()) => {
            Ok(format!("{digits}-{}", s.to_ascii_lowercase()))
        }
        Some(_) => Err(bad()),
    }
}

/// "4º" -> 4, "10." -> 10.
pub fn arabic_ordinal(ordinal: &str) -> Result<u32> {
    clean_ordinal(ordinal)
        .parse::<u32>()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::structural(format!("unusable ordinal {ordinal:?}")))
}

fn clean_ordinal(ordinal: &str) -> String {
    ordinal
        .trim()
        .trim_end_matches(['º', '°', 'ª', '.', 'o'])
        .to_string()
}

/// Strict roman numeral parser; rejects non-canonical spellings such as "IIII".
pub fn roman_to_arabic(s: &str) -> Option<u32> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let value = |c: char| match c {
        'I' => Some(1),
        'V' => Some(5),
        'X' => Some(10),
        'L' => Some(50),
        'C' => Some(100),
        'D' => Some(500),
        'M' => Some(1000),
        _ => None,
    };
    let digits: Vec<u32> = s.chars().map(value).collect::<Option<_>>()?;
    let mut total = 0u32;
    let mut i = 0;
    while i < digits.len() {
        if i + 1 < digits.len() && digits[i] < digits[i + 1] {
            total += digits[i + 1] - digits[i];
            i += 2;
        } else {
            total += digits[i];
            i += 1;
        }
    }
    // Round-trip through the canonical spelling to reject "IIII", "VX", ...
    (total > 0 && total < 4000 && arabic_to_roman(total) == s).then_some(total)
}

pub fn arabic_to_roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for (value, numeral) in TABLE {
        while n >= value {
            out.push_str(numeral);
            n -= value;
        }
    }
    out
}

/// URN concatenated with a label, the input of the I+L embedding.
pub fn build_identifier_plus_label(
    tree: &DocumentTree,
    id: UnitId,
    form: LabelForm,
) -> Result<String> {
    let urn = build_urn(tree, id)?;
    let label = build_label(tree, id)?;
    Ok(format!("{}, {}", urn.value, label.select(form)))
}

/// Errors if two units map to the same URN.
pub fn check_urn_uniqueness(tree: &DocumentTree) -> Result<HashMap<String, UnitId>> {
    let mut seen = HashMap::with_capacity(tree.len());
    for u in tree.iter() {
        let fragment = urn_fragment(tree, u.id)?;
        if let Some(prev) = seen.insert(fragment.clone(), u.id) {
            return Err(Error::structural(format!(
                "urn fragment {fragment} shared by {prev} and {}",
                u.id
            )));
        }
    }
    Ok(seen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tree() -> (DocumentTree, HashMap<&'static str, UnitId>) {
        let mut b = TreeBuilder::new(NormIdentity::crfb());
        let mut ids = HashMap::new();
        let t1 = b.push_at(UnitKind::Title, "I", None, "TÍTULO I Dos Princípios Fundamentais", 1).unwrap();
        let a2 = b.push_at(UnitKind::Article, "2º", Some(t1), "Art. 2º", 2).unwrap();
        b.push_at(UnitKind::Caput, "", Some(a2), "São Poderes da União.", 2).unwrap();
        let t2 = b.push_at(UnitKind::Title, "II", None, "TÍTULO II", 3).unwrap();
        let a5 = b.push_at(UnitKind::Article, "5º", Some(t2), "Art. 5º", 4).unwrap();
        let c5 = b.push_at(UnitKind::Caput, "", Some(a5), "Todos são iguais perante a lei:", 4).unwrap();
        let i1 = b.push_at(UnitKind::Inciso, "I", Some(c5), "I – homens e mulheres são iguais;", 5).unwrap();
        let i19 = b.push_at(UnitKind::Inciso, "XIX", Some(c5), "XIX – as associações só poderão ser dissolvidas;", 6).unwrap();
        let t6 = b.push_at(UnitKind::Title, "VI", None, "TÍTULO VI", 7).unwrap();
        let ch2 = b.push_at(UnitKind::Chapter, "II", Some(t6), "CAPÍTULO II", 8).unwrap();
        let s2 = b.push_at(UnitKind::Section, "II", Some(ch2), "Seção II", 9).unwrap();
        let a60 = b.push_at(UnitKind::Article, "60.", Some(s2), "Art. 60.", 10).unwrap();
        b.push_at(UnitKind::Caput, "", Some(a60), "A Constituição poderá ser emendada.", 10).unwrap();
        let p4 = b.push_at(UnitKind::Paragraph, "4º", Some(a60), "§ 4º Não será objeto de deliberação:", 11).unwrap();
        let a7 = b.push_at(UnitKind::Article, "7º", Some(t2), "Art. 7º", 12).unwrap();
        b.push_at(UnitKind::Caput, "", Some(a7), "São direitos dos trabalhadores.", 12).unwrap();
        let pu = b.push_at(UnitKind::SoleParagraph, "único", Some(a7), "Parágrafo único. São assegurados.", 13).unwrap();
        let t8 = b.push_at(UnitKind::Title, "VIII", None, "TÍTULO VIII", 14).unwrap();
        let c8 = b.push_at(UnitKind::Chapter, "VIII", Some(t8), "CAPÍTULO VIII", 15).unwrap();
        let a231 = b.push_at(UnitKind::Article, "231.", Some(c8), "Art. 231.", 16).unwrap();
        b.push_at(UnitKind::Caput, "", Some(a231), "São reconhecidos aos índios.", 16).unwrap();
        for (k, v) in [
            ("a2", a2), ("a5", a5), ("c5", c5), ("i1", i1), ("i19", i19), ("s2", s2),
            ("p4", p4), ("pu", pu), ("c8", c8), ("a60", a60), ("a231", a231),
        ] {
            ids.insert(k, v);
        }
        let tree = b.finish();
        tree.validate().unwrap();
        (tree, ids)
    }

    #[test]
    fn labels() {
        let (t, id) = tree();
        let full = "Constituição da República Federativa do Brasil de 1988";
        assert_eq!(build_label(&t, id["i19"]).unwrap().canonical, format!("{full}, Artigo 5º, Inciso XIX"));
        assert_eq!(build_label(&t, id["a5"]).unwrap().canonical, format!("{full}, Artigo 5º"));
        assert_eq!(
            build_label(&t, id["s2"]).unwrap().canonical,
            format!("{full}, TÍTULO VI, CAPÍTULO II, Seção II")
        );
        let caput = build_label(&t, id["c5"]).unwrap();
        assert_eq!(caput.display, "CRFB, Art. 5º, caput");
        assert_eq!(caput.canonical, format!("{full}, Artigo 5º, caput"));
        assert_eq!(build_label(&t, id["i1"]).unwrap().display, "CRFB, Art. 5º, caput, Inciso I");
        let a60 = build_label(&t, id["p4"]).unwrap();
        assert_eq!(a60.display, "CRFB, Art. 60., § 4º");
        assert_eq!(a60.canonical, format!("{full}, Artigo 60, § 4º"));
        assert_eq!(build_label(&t, id["pu"]).unwrap().display, "CRFB, Art. 7º, Parágrafo único.");
        assert_eq!(build_label(&t, id["c8"]).unwrap().display, "CRFB, TÍTULO VIII, CAPÍTULO VIII");
        for u in t.iter() {
            let l = build_label(&t, u.id).unwrap();
            assert!(l.canonical.starts_with(full));
            assert_eq!(l, build_label(&t, u.id).unwrap());
        }
    }

    #[test]
    fn urns() {
        let (t, id) = tree();
        assert_eq!(
            build_urn(&t, id["p4"]).unwrap().value,
            "urn:lex:br:federal:constituicao:1988-10-05;1988!art60_par4"
        );
        assert_eq!(urn_fragment(&t, id["pu"]).unwrap(), "art7_par1u");
        assert_eq!(urn_fragment(&t, id["c8"]).unwrap(), "tit8_cap8");
        assert_eq!(urn_fragment(&t, id["s2"]).unwrap(), "tit6_cap2_sec2");
        assert_eq!(urn_fragment(&t, id["i19"]).unwrap(), "art5_cpt_inc19");
        assert_eq!(urn_fragment(&t, id["a231"]).unwrap(), "art231");
        assert_eq!(build_urn(&t, id["a5"]).unwrap().fragment(), "art5");
        assert!(UnitUrn::new(&t.norm, "").is_err());
        assert!(UnitUrn::new(&t.norm, "Art5").is_err());
        assert!(UnitUrn::new(&t.norm, "art5__cpt").is_err());
        assert_eq!(check_urn_uniqueness(&t).unwrap().len(), t.len());
    }

    #[test]
    fn identifier_plus_label() {
        let (t, id) = tree();
        assert_eq!(
            build_identifier_plus_label(&t, id["a2"], LabelForm::Display).unwrap(),
            "urn:lex:br:federal:constituicao:1988-10-05;1988!art2, CRFB, Art. 2º"
        );
        assert_eq!(
            build_identifier_plus_label(&t, id["i1"], LabelForm::Display).unwrap(),
            "urn:lex:br:federal:constituicao:1988-10-05;1988!art5_cpt_inc1, CRFB, Art. 5º, caput, Inciso I"
        );
    }

    #[test]
    fn duplicate_urns_are_rejected() {
        let mut b = TreeBuilder::new(NormIdentity::crfb());
        b.push_at(UnitKind::Article, "1º", None, "Art. 1º", 1).unwrap();
        b.push_at(UnitKind::Article, "1.", None, "Art. 1.", 2).unwrap();
        let t = b.finish();
        assert!(matches!(check_urn_uniqueness(&t), Err(Error::Structural(_))));
    }

    #[test]
    fn ordinals() {
        assert_eq!(article_number("5º").unwrap(), "5");
        assert_eq!(article_number("51.").unwrap(), "51");
        assert_eq!(article_number("103-A").unwrap(), "103-a");
        assert!(article_number("quinto").is_err());
        assert_eq!(arabic_ordinal("4º").unwrap(), 4);
        assert_eq!(roman_to_arabic("XIX"), Some(19));
        assert_eq!(roman_to_arabic("IIII"), None);
        assert_eq!(roman_to_arabic("VX"), None);
        assert_eq!(roman_to_arabic(""), None);
        assert!(NormIdentity::new("x", "x", "urn:a!b").is_err());
    }

    /// Naive additive/subtractive reading with no validity checks.
    fn oracle(s: &str) -> u32 {
        let v: Vec<u32> = s
            .chars()
            .map(|c| match c {
                'I' => 1,
                'V' => 5,
                'X' => 10,
                'L' => 50,
                'C' => 100,
                'D' => 500,
                _ => 1000,
            })
            .collect();
        let mut total = 0i64;
        for i in 0..v.len() {
            if i + 1 < v.len() && v[i] < v[i + 1] {
                total -= v[i] as i64;
            } else {
                total += v[i] as i64;
            }
        }
        total as u32
    }

    proptest! {
        #[test]
        fn roman_round_trip(n in 1u32..4000) {
            let r = arabic_to_roman(n);
            prop_assert_eq!(oracle(&r), n);
            prop_assert_eq!(roman_to_arabic(&r), Some(n));
        }

        #[test]
        fn inciso_fragment_matches_roman_value(n in 1u32..120) {
            let mut b = TreeBuilder::new(NormIdentity::crfb());
            let a = b.push_at(UnitKind::Article, "1º", None, "Art. 1º", 1).unwrap();
            let c = b.push_at(UnitKind::Caput, "", Some(a), "Texto:", 1).unwrap();
            let i = b.push_at(UnitKind::Inciso, arabic_to_roman(n), Some(c), "item;", 2).unwrap();
            let t = b.finish();
            prop_assert_eq!(urn_fragment(&t, i).unwrap(), format!("art1_cpt_inc{n}"));
        }
    }
}
