//! Bundled texts: an abridged Constitution excerpt and a generated statute.

use crate::document_model::{DocumentTree, NormIdentity};
use crate::error::Result;
use crate::ingestion::{parse_document, ParseReport};

/// Abridged CRFB text (Titles I, II, IV and VIII) in the parser's line format.
pub const CRFB_EXCERPT: &str = include_str!("../data/crfb_excerpt.txt");

/// The eight-question suite as JSON (see `evaluation::load_suite`).
pub const QUERY_SUITE: &str = include_str!("../data/queries.json");

pub fn crfb_excerpt() -> Result<(DocumentTree, ParseReport)> {
    parse_document(CRFB_EXCERPT, &NormIdentity::crfb())
}

pub fn synthetic_norm() -> NormIdentity {
    NormIdentity {
        full_name: "Lei Sintética de Teste".into(),
        short_name: "LST".into(),
        urn_base: "urn:lex:br:federal:lei:2000-01-01;1".into(),
    }
}

const SUBJECTS: &[&str] = &[
    "a cooperativa", "o conselho", "a autarquia", "o município", "a fundação", "o consórcio",
    "a agência", "o tribunal", "a comissão", "o instituto", "a empresa pública", "o fundo",
    "a ouvidoria",
];
const VERBS: &[&str] = &[
    "fiscalizará", "registrará", "publicará", "arrecadará", "homologará", "auditará", "licenciará",
    "custeará", "arquivará", "revisará", "delegará",
];
const OBJECTS: &[&str] = &[
    "os contratos de pesca", "as tarifas portuárias", "os estoques de sementes",
    "as concessões florestais", "os relatórios hídricos", "as licenças de mineração",
    "os cadastros rurais", "as patentes têxteis", "os bilhetes ferroviários",
    "as vacinas veterinárias", "os acervos museológicos", "as redes elétricas",
    "os mapas geológicos", "as frotas pesqueiras", "os registros cartoriais",
    "as bolsas acadêmicas", "os leilões de energia",
];
const WHEN: &[&str] = &[
    "anualmente", "a cada semestre", "mediante requerimento", "após consulta pública",
    "no prazo de noventa dias", "sempre que houver denúncia", "com publicidade prévia",
];

fn pick<'a>(pool: &[&'a str], i: usize, salt: usize) -> &'a str {
    pool[(i.wrapping_mul(7919) + salt.wrapping_mul(104729) + salt) % pool.len()]
}

fn sentence(i: usize, salt: usize) -> String {
    format!(
        "{} {} {} {}",
        pick(SUBJECTS, i, salt),
        pick(VERBS, i, salt + 1),
        pick(OBJECTS, i, salt + 2),
        pick(WHEN, i, salt + 3)
    )
}

/// Source text of a statute with `n_articles` articles spread over titles
/// and chapters. Every third article has incisos, every fifth a paragraph.
/// The text is a pure function of `n_articles`.
pub fn synthetic_source(n_articles: usize) -> String {
    let mut s = String::new();
    for a in 1..=n_articles {
        if a % 10 == 1 {
            let t = (a - 1) / 10 + 1;
            s.push_str(&format!(
                "TÍTULO {}\nDAS MATÉRIAS DO GRUPO {}\n",
                crate::document_model::arabic_to_roman(t as u32),
                t
            ));
        }
        if a % 5 == 1 {
            let c = ((a - 1) % 10) / 5 + 1;
            s.push_str(&format!(
                "CAPÍTULO {}\nDAS REGRAS DA PARTE {}\n",
                crate::document_model::arabic_to_roman(c as u32),
                c
            ));
        }
        let ord = if a < 10 { format!("{a}º") } else { format!("{a}.") };
        if a % 3 == 0 {
            s.push_str(&format!("Art. {ord} Compete a {}:\n", sentence(a, 0)));
            for k in 1..=3 {
                s.push_str(&format!(
                    "{} – {};\n",
                    crate::document_model::arabic_to_roman(k),
                    sentence(a * 3 + k as usize, 5)
                ));
            }
        } else {
            s.push_str(&format!("Art. {ord} {}, e {}.\n", sentence(a, 0), sentence(a, 11)));
        }
        if a % 5 == 0 {
            s.push_str(&format!("Parágrafo único. {}.\n", sentence(a, 17)));
        }
    }
    s
}

pub fn synthetic_corpus(n_articles: usize) -> Result<(DocumentTree, ParseReport)> {
    parse_document(&synthetic_source(n_articles), &synthetic_norm())
}
