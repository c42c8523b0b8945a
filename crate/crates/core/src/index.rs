//! Unified embedding space: one record per content chunk and per reference
//! record, each mapped to a payload chunk. Exact cosine kNN over all records.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chunking::{Chunk, ChunkId, EmbedTag, IndexPlan};
use crate::document_model::LabelForm;
use crate::embedding::{cosine_slices, embed_batch, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::method::MethodConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_FILE: &str = "vectors.bin";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorPrecision {
    F32,
    #[default]
    F64,
}

impl VectorPrecision {
    fn width(self) -> usize {
        match self {
            VectorPrecision::F32 => 4,
            VectorPrecision::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub method_id: char,
    pub strategy: String,
    pub poly: bool,
    pub record_count: usize,
    pub chunk_count: usize,
    pub dim: usize,
    pub precision: VectorPrecision,
    pub provider_fingerprint: String,
    pub tokenizer: String,
    pub label_form: LabelForm,
}

/// Metadata of one stored vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub record_id: String,
    pub tag: EmbedTag,
    pub payload: ChunkId,
    pub display_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urn: Option<String>,
    /// Token count of the payload chunk.
    pub token_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub record: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub precision: VectorPrecision,
    pub label_form: LabelForm,
    pub tokenizer: String,
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    manifest: IndexManifest,
    records: Vec<EmbeddingRecord>,
    /// Row-major, `record_count × dim`, already rounded to the stored precision.
    vectors: Vec<f64>,
    chunks: Vec<Chunk>,
    chunk_pos: HashMap<ChunkId, usize>,
}

fn record_id(tag: EmbedTag, payload: &ChunkId) -> String {
    format!("{}:{}", tag.as_str().to_ascii_lowercase(), payload)
}

pub fn build_index(
    plan: &IndexPlan,
    provider: &dyn EmbeddingProvider,
    method: &MethodConfig,
    opts: &BuildOptions,
) -> Result<VectorIndex> {
    if plan.content.is_empty() {
        return Err(Error::Index("no content chunks to index".into()));
    }
    let tokens: HashMap<&ChunkId, usize> = plan.chunks().map(|c| (&c.id, c.token_count)).collect();
    let mut records = Vec::with_capacity(plan.record_count());
    let mut inputs: Vec<&str> = Vec::with_capacity(plan.record_count());
    for c in &plan.content {
        records.push(EmbeddingRecord {
            record_id: record_id(c.tag, &c.id),
            tag: c.tag,
            payload: c.id.clone(),
            display_label: c.display_label.clone(),
            urn: None,
            token_count: c.token_count,
        });
        inputs.push(&c.embed_input);
    }
    for r in &plan.references {
        let token_count = *tokens.get(&r.payload).ok_or_else(|| {
            Error::Index(format!("reference record points at unknown chunk {}", r.payload))
        })?;
        records.push(EmbeddingRecord {
            record_id: record_id(r.tag, &r.payload),
            tag: r.tag,
            payload: r.payload.clone(),
            display_label: r.display_label.clone(),
            urn: Some(r.urn.clone()),
            token_count,
        });
        inputs.push(&r.embed_input);
    }
    let embedded = embed_batch(provider, &inputs)?;
    let dim = provider.dim();
    let mut vectors = Vec::with_capacity(records.len() * dim);
    for v in &embedded {
        match opts.precision {
            VectorPrecision::F64 => vectors.extend_from_slice(v.values()),
            VectorPrecision::F32 => vectors.extend(v.values().iter().map(|&x| x as f32 as f64)),
        }
    }
    let chunks: Vec<Chunk> = plan.chunks().cloned().collect();
    let manifest = IndexManifest {
        format_version: FORMAT_VERSION,
        method_id: method.id,
        strategy: method.strategy.name().to_string(),
        poly: method.poly,
        record_count: records.len(),
        chunk_count: chunks.len(),
        dim,
        precision: opts.precision,
        provider_fingerprint: provider.fingerprint(),
        tokenizer: opts.tokenizer.clone(),
        label_form: opts.label_form,
    };
    VectorIndex::from_parts(manifest, records, vectors, chunks)
}

/// Ranking order: similarity descending, then payload token count
/// descending, then record id ascending.
pub fn compare_ranked(a_sim: f64, a: &EmbeddingRecord, b_sim: f64, b: &EmbeddingRecord) -> Ordering {
    b_sim
        .total_cmp(&a_sim)
        .then_with(|| b.token_count.cmp(&a.token_count))
        .then_with(|| a.record_id.cmp(&b.record_id))
}

impl VectorIndex {
    /// Validates and wraps parts built elsewhere (or read back from disk).
    pub fn from_parts(
        manifest: IndexManifest,
        records: Vec<EmbeddingRecord>,
        vectors: Vec<f64>,
        chunks: Vec<Chunk>,
    ) -> Result<Self> {
        if manifest.record_count != records.len() {
            return Err(Error::Index(format!(
                "manifest says {} records, found {}",
                manifest.record_count,
                records.len()
            )));
        }
        if vectors.len() != records.len() * manifest.dim {
            return Err(Error::Index("vector data does not match record count".into()));
        }
        let mut chunk_pos = HashMap::with_capacity(chunks.len());
        for (i, c) in chunks.iter().enumerate() {
            if chunk_pos.insert(c.id.clone(), i).is_some() {
                return Err(Error::Index(format!("duplicate chunk id {}", c.id)));
            }
        }
        let mut seen = HashMap::with_capacity(records.len());
        for r in &records {
            if !chunk_pos.contains_key(&r.payload) {
                return Err(Error::Index(format!(
                    "record {} points at unknown chunk {}",
                    r.record_id, r.payload
                )));
            }
            if seen.insert(r.record_id.as_str(), ()).is_some() {
                return Err(Error::Index(format!("duplicate record id {}", r.record_id)));
            }
        }
        Ok(VectorIndex {
            manifest,
            records,
            vectors,
            chunks,
            chunk_pos,
        })
    }

    pub fn manifest(&self) -> &IndexManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &EmbeddingRecord {
        &self.records[i]
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        let d = self.manifest.dim;
        &self.vectors[i * d..(i + 1) * d]
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, id: &ChunkId) -> Option<&Chunk> {
        self.chunk_pos.get(id).map(|&i| &self.chunks[i])
    }

    /// Exact top-k by cosine over every record.
    pub fn knn(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<Hit>> {
        if self.records.is_empty() {
            return Err(Error::Index("index is empty".into()));
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if query.dim() != self.manifest.dim {
            return Err(Error::Input(format!(
                "query has {} dimensions, index has {}",
                query.dim(),
                self.manifest.dim
            )));
        }
        let mut hits = (0..self.records.len())
            .map(|i| {
                cosine_slices(query.values(), self.vector(i)).map(|similarity| Hit {
                    record: i,
                    similarity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cmp = |a: &Hit, b: &Hit| {
            compare_ranked(a.similarity, &self.records[a.record], b.similarity, &self.records[b.record])
        };
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_unstable_by(cmp);
        Ok(hits)
    }

    /// Writes the index directory. Files are staged in a sibling directory
    /// and moved into place only when all of them were written.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let staging = staging_path(dir);
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        if let Err(e) = self.write_files(&staging) {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)?;
        Ok(())
    }

    fn write_files(&self, dir: &Path) -> Result<()> {
        let mut manifest = serde_json::to_string_pretty(&self.manifest)?;
        manifest.push('\n');
        fs::write(dir.join(MANIFEST_FILE), manifest)?;

        let mut w = BufWriter::new(fs::File::create(dir.join(VECTORS_FILE))?);
        for &v in &self.vectors {
            match self.manifest.precision {
                VectorPrecision::F32 => w.write_all(&(v as f32).to_le_bytes())?,
                VectorPrecision::F64 => w.write_all(&v.to_le_bytes())?,
            }
        }
        w.flush()?;

        write_jsonl(&dir.join(RECORDS_FILE), &self.records)?;
        write_jsonl(&dir.join(CHUNKS_FILE), &self.chunks)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: IndexManifest = serde_json::from_str(&read_index_file(dir, MANIFEST_FILE)?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Index(format!(
                "unsupported index format version {}",
                manifest.format_version
            )));
        }
        let records: Vec<EmbeddingRecord> = read_jsonl(&dir.join(RECORDS_FILE))?;
        let chunks: Vec<Chunk> = read_jsonl(&dir.join(CHUNKS_FILE))?;
        let bytes = fs::read(dir.join(VECTORS_FILE))?;
        let width = manifest.precision.width();
        if bytes.len() != manifest.record_count * manifest.dim * width {
            return Err(Error::Index(format!(
                "{VECTORS_FILE} has {} bytes, expected {}",
                bytes.len(),
                manifest.record_count * manifest.dim * width
            )));
        }
        let vectors = match manifest.precision {
            VectorPrecision::F32 => bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect(),
            VectorPrecision::F64 => bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect(),
        };
        Self::from_parts(manifest, records, vectors, chunks)
    }
}

fn staging_path(dir: &Path) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "index".into());
    dir.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

fn read_index_file(dir: &Path, name: &str) -> Result<String> {
    fs::read_to_string(dir.join(name)).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Index(format!("{} is not an index directory", dir.display())),
        _ => e.into(),
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::plan_index;
    use crate::document_model::NormIdentity;
    use crate::embedding::{embed_one, HashingEmbedder};
    use crate::ingestion::parse_document;
    use crate::tokenizer::WordPunctTokenizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SRC: &str = "Art. 1º A República é formada pela união dos Estados.\n\
Art. 2º São Poderes da União:\nI – o Legislativo;\nII – o Executivo.\n\
Parágrafo único. Os Poderes são independentes.\n";

    fn built(method: char) -> (VectorIndex, HashingEmbedder) {
        let tree = parse_document(SRC, &NormIdentity::crfb()).unwrap().0;
        let m = MethodConfig::by_id(method).unwrap();
        let plan = plan_index(&tree, m.strategy, m.poly, &WordPunctTokenizer, LabelForm::Canonical).unwrap();
        let e = HashingEmbedder::new(64, 0).unwrap();
        (build_index(&plan, &e, &m, &BuildOptions::default()).unwrap(), e)
    }

    #[test]
    fn record_counts_follow_plan() {
        let (c, _) = built('c');
        let (g, _) = built('g');
        let units = c.chunks().len();
        assert_eq!(c.len(), units);
        assert_eq!(g.len(), units + 3 * units);
        let (f, _) = built('f');
        let articles = 2;
        assert_eq!(f.len(), articles + 3 * units);
        assert_eq!(f.chunks().len(), units);
    }

    #[test]
    fn stored_vector_ranks_itself_first() {
        let (g, _) = built('g');
        for i in 0..g.len() {
            let q = EmbeddingVector::from_raw(g.vector(i).to_vec()).unwrap();
            let hits = g.knn(&q, 3).unwrap();
            assert!((hits[0].similarity - 1.0).abs() < 1e-12);
            assert!((g.vector(hits[0].record).iter().zip(g.vector(i)).all(|(a, b)| a == b)));
        }
    }

    #[test]
    fn k_saturates() {
        let (c, e) = built('c');
        let q = embed_one(&e, "Poderes").unwrap();
        let hits = c.knn(&q, 1000).unwrap();
        assert_eq!(hits.len(), c.len());
        assert!(hits.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        assert!(c.knn(&q, 0).is_err());
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        for precision in [VectorPrecision::F32, VectorPrecision::F64] {
            let tree = parse_document(SRC, &NormIdentity::crfb()).unwrap().0;
            let m = MethodConfig::by_id('h').unwrap();
            let plan = plan_index(&tree, m.strategy, m.poly, &WordPunctTokenizer, LabelForm::Canonical).unwrap();
            let e = HashingEmbedder::new(32, 0).unwrap();
            let opts = BuildOptions {
                precision,
                ..Default::default()
            };
            let idx = build_index(&plan, &e, &m, &opts).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("idx");
            idx.save(&path).unwrap();
            let back = VectorIndex::load(&path).unwrap();
            assert_eq!(back.vectors, idx.vectors);
            assert_eq!(back.records, idx.records);
            assert_eq!(back.manifest, idx.manifest);
            let before: Vec<Vec<u8>> = [MANIFEST_FILE, VECTORS_FILE, RECORDS_FILE, CHUNKS_FILE]
                .iter()
                .map(|f| fs::read(path.join(f)).unwrap())
                .collect();
            build_index(&plan, &e, &m, &opts).unwrap().save(&path).unwrap();
            let after: Vec<Vec<u8>> = [MANIFEST_FILE, VECTORS_FILE, RECORDS_FILE, CHUNKS_FILE]
                .iter()
                .map(|f| fs::read(path.join(f)).unwrap())
                .collect();
            assert_eq!(before, after);
            assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        }
    }

    #[test]
    fn load_rejects_missing_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(VectorIndex::load(dir.path()), Err(Error::Index(_))));
        let (c, _) = built('c');
        let path = dir.path().join("c");
        c.save(&path).unwrap();
        let bytes = fs::read(path.join(VECTORS_FILE)).unwrap();
        fs::write(path.join(VECTORS_FILE), &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(VectorIndex::load(&path), Err(Error::Index(_))));
    }

    /// Full sort of every record under the same ordering.
    #[test]
    fn knn_matches_full_sort_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 8;
        let n = 300;
        // few distinct vectors so that similarity ties are common
        let pool: Vec<Vec<f64>> = (0..20)
            .map(|_| EmbeddingVector::normalized((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap().into_values())
            .collect();
        let mut vectors = Vec::new();
        let mut records = Vec::new();
        let mut chunks = Vec::new();
        for i in 0..n {
            vectors.extend_from_slice(&pool[rng.gen_range(0..pool.len())]);
            let id = ChunkId(format!("c{i}"));
            records.push(EmbeddingRecord {
                record_id: format!("r{:03}", rng.gen_range(0..1000) * 1000 + i),
                tag: EmbedTag::Art,
                payload: id.clone(),
                display_label: String::new(),
                urn: None,
                token_count: rng.gen_range(1..4),
            });
            chunks.push(Chunk {
                id,
                source: crate::chunking::ChunkSource::Window { index: i, start_token: 0, end_token: 1 },
                tag: EmbedTag::Blind,
                display_label: String::new(),
                text: "x".into(),
                token_count: 1,
                embed_input: "x".into(),
                ancestors: Vec::new(),
            });
        }
        let manifest = IndexManifest {
            format_version: FORMAT_VERSION,
            method_id: 'a',
            strategy: "blind".into(),
            poly: false,
            record_count: n,
            chunk_count: n,
            dim,
            precision: VectorPrecision::F64,
            provider_fingerprint: "test".into(),
            tokenizer: "test".into(),
            label_form: LabelForm::Canonical,
        };
        let idx = VectorIndex::from_parts(manifest, records, vectors, chunks).unwrap();
        for _ in 0..30 {
            let q = EmbeddingVector::from_raw(pool[rng.gen_range(0..pool.len())].clone()).unwrap();
            let mut all: Vec<(f64, usize)> = (0..n)
                .map(|i| (cosine_slices(q.values(), idx.vector(i)).unwrap(), i))
                .collect();
            all.sort_by(|a, b| compare_ranked(a.0, idx.record(a.1), b.0, idx.record(b.1)));
            for k in [1, 7, 50, n] {
                let got: Vec<usize> = idx.knn(&q, k).unwrap().iter().map(|h| h.record).collect();
                let want: Vec<usize> = all[..k].iter().map(|x| x.1).collect();
                assert_eq!(got, want);
            }
        }
    }
}
