//! Embedding datasets: validated ingestion from JSONL or raw float32 files,
//! canonical export, and partitioning into candidate batches.
//!
//! Vectors are kept exactly as ingested (no re-normalization); anything that
//! needs cosine geometry normalizes on the fly.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: non-finite vector component at index {index}")]
    NonFinite { line: usize, index: usize },
    #[error("line {line}: vector is empty")]
    EmptyVector { line: usize },
    #[error("no records found")]
    Empty,
    #[error("vectors file has {len} bytes, not a multiple of {row_bytes} (dim {dim} x 4 bytes)")]
    BinaryLength { len: u64, dim: usize, row_bytes: usize },
    #[error("index lists {index_rows} rows but the vectors file holds {vector_rows}")]
    IndexRowMismatch {
        index_rows: usize,
        vector_rows: usize,
    },
    #[error("index line {line}: expected row {expected}, found {found}")]
    IndexRowOrder {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("fixed-size batches need k >= 1")]
    ZeroBatchSize,
    #[error("unknown record id `{0}`")]
    UnknownId(String),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One data chunk or question with its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub source: String,
    #[serde(default)]
    pub text: Option<String>,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, source: impl Into<String>, vector: Vec<f64>) -> Self {
        EmbeddingRecord {
            id: id.into(),
            source: source.into(),
            text: None,
            vector,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

/// What a dataset stands for in the curation loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// The crawled pool `S`.
    Space,
    /// The curated corpus `C`.
    Corpus,
    /// The question set `Q`.
    Questions,
    /// A candidate batch `X`.
    Batch,
}

/// An ordered, validated set of embedding records sharing one dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    role: Role,
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.role == other.role
            && self.dim == other.dim
            && self.records == other.records
    }
}

impl Dataset {
    /// An empty dataset with a fixed dimension.
    pub fn empty(name: impl Into<String>, role: Role, dim: usize) -> Self {
        Dataset {
            name: name.into(),
            role,
            dim,
            records: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Builds a dataset from records, inferring `dim` from the first one.
    pub fn from_records(
        name: impl Into<String>,
        role: Role,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self, StoreError> {
        let dim = records.first().ok_or(StoreError::Empty)?.vector.len();
        let mut dataset = Dataset::empty(name, role, dim);
        dataset.records.reserve(records.len());
        for (i, record) in records.into_iter().enumerate() {
            dataset.push_at(record, i + 1)?;
        }
        Ok(dataset)
    }

    /// Appends a record, enforcing the dataset invariants.
    pub fn push(&mut self, record: EmbeddingRecord) -> Result<(), StoreError> {
        let line = self.records.len() + 1;
        self.push_at(record, line)
    }

    fn push_at(&mut self, record: EmbeddingRecord, line: usize) -> Result<(), StoreError> {
        if record.vector.is_empty() {
            return Err(StoreError::EmptyVector { line });
        }
        if record.vector.len() != self.dim {
            return Err(StoreError::DimensionMismatch {
                line,
                expected: self.dim,
                found: record.vector.len(),
            });
        }
        if let Some(index) = record.vector.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite { line, index });
        }
        if self.index.contains_key(&record.id) {
            return Err(StoreError::DuplicateId {
                line,
                id: record.id,
            });
        }
        self.index.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn iter(&self) -> std::slice::Iter<'_, EmbeddingRecord> {
        self.records.iter()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// The records named by `ids`, in the order given.
    pub fn subset(
        &self,
        name: impl Into<String>,
        role: Role,
        ids: &[String],
    ) -> Result<Dataset, StoreError> {
        let mut out = Dataset::empty(name, role, self.dim);
        for id in ids {
            let record = self
                .get(id)
                .ok_or_else(|| StoreError::UnknownId(id.clone()))?;
            out.push(record.clone())?;
        }
        Ok(out)
    }

    /// Canonical JSONL: one record per line, keys in `id, source, text, vector` order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn export_jsonl(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| StoreError::io(path, e))?;
        self.write_jsonl(BufWriter::new(file))
            .map_err(|e| StoreError::io(path, e))
    }

    /// Writes the header-less float32 little-endian matrix plus its JSONL index.
    /// Text is not carried by this format and components are narrowed to `f32`.
    pub fn write_binary<V: Write, I: Write>(&self, mut vectors: V, mut index: I) -> std::io::Result<()> {
        for (row, record) in self.records.iter().enumerate() {
            for &v in &record.vector {
                vectors.write_all(&(v as f32).to_le_bytes())?;
            }
            let entry = IndexEntry {
                row,
                id: record.id.clone(),
                source: record.source.clone(),
            };
            serde_json::to_writer(&mut index, &entry)?;
            index.write_all(b"\n")?;
        }
        vectors.flush()?;
        index.flush()
    }

    pub fn export_binary(
        &self,
        vectors_path: impl AsRef<Path>,
        index_path: impl AsRef<Path>,
    ) -> Result<(), StoreError> {
        let (vp, ip) = (vectors_path.as_ref(), index_path.as_ref());
        let vf = File::create(vp).map_err(|e| StoreError::io(vp, e))?;
        let xf = File::create(ip).map_err(|e| StoreError::io(ip, e))?;
        self.write_binary(BufWriter::new(vf), BufWriter::new(xf))
            .map_err(|e| StoreError::io(vp, e))
    }
}

/// One line of the binary-format index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub row: usize,
    pub id: String,
    pub source: String,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

/// Reads JSONL records. Blank lines are skipped but still counted for diagnostics.
pub fn read_jsonl<R: BufRead>(
    reader: R,
    name: impl Into<String>,
    role: Role,
) -> Result<Dataset, StoreError> {
    let mut dataset: Option<Dataset> = None;
    let name = name.into();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| StoreError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| StoreError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let ds = dataset.get_or_insert_with(|| Dataset::empty(name.clone(), role, record.vector.len()));
        ds.push_at(record, line_no)?;
    }
    dataset.ok_or(StoreError::Empty)
}

/// Ingests a JSONL embedding file. The dataset is named after the file stem
/// and tagged as the space `S`; use [`Dataset::with_role`] to retag.
pub fn ingest_jsonl(path: impl AsRef<Path>) -> Result<Dataset, StoreError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    read_jsonl(BufReader::new(file), stem(path), Role::Space)
}

/// Ingests the float32 matrix plus index pair. When `dim` is `None` it is
/// inferred from the byte length and the index row count.
pub fn ingest_binary(
    vectors_path: impl AsRef<Path>,
    index_path: impl AsRef<Path>,
    dim: Option<usize>,
) -> Result<Dataset, StoreError> {
    let (vp, ip) = (vectors_path.as_ref(), index_path.as_ref());
    let mut bytes = Vec::new();
    File::open(vp)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| StoreError::io(vp, e))?;
    let file = File::open(ip).map_err(|e| StoreError::io(ip, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(ip, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: IndexEntry = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if entry.row != entries.len() {
            return Err(StoreError::IndexRowOrder {
                line: i + 1,
                expected: entries.len(),
                found: entry.row,
            });
        }
        entries.push(entry);
    }
    decode_binary(&bytes, entries, dim, stem(vp))
}

fn decode_binary(
    bytes: &[u8],
    entries: Vec<IndexEntry>,
    dim: Option<usize>,
    name: String,
) -> Result<Dataset, StoreError> {
    let len = bytes.len() as u64;
    let dim = match dim {
        Some(d) => d,
        None if entries.is_empty() => return Err(StoreError::Empty),
        None => {
            let per_row = bytes.len() / entries.len();
            if per_row == 0 || !bytes.len().is_multiple_of(entries.len()) || !per_row.is_multiple_of(4) {
                return Err(StoreError::IndexRowMismatch {
                    index_rows: entries.len(),
                    vector_rows: bytes.len() / 4,
                });
            }
            per_row / 4
        }
    };
    if dim == 0 {
        return Err(StoreError::EmptyVector { line: 1 });
    }
    let row_bytes = dim * 4;
    if !bytes.len().is_multiple_of(row_bytes) {
        return Err(StoreError::BinaryLength { len, dim, row_bytes });
    }
    let rows = bytes.len() / row_bytes;
    if rows != entries.len() {
        return Err(StoreError::IndexRowMismatch {
            index_rows: entries.len(),
            vector_rows: rows,
        });
    }
    if rows == 0 {
        return Err(StoreError::Empty);
    }
    let mut dataset = Dataset::empty(name, Role::Space, dim);
    for (entry, chunk) in entries.into_iter().zip(bytes.chunks_exact(row_bytes)) {
        let vector = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let line = entry.row + 1;
        dataset.push_at(
            EmbeddingRecord {
                id: entry.id,
                source: entry.source,
                text: None,
                vector,
            },
            line,
        )?;
    }
    Ok(dataset)
}

/// How a dataset is cut into candidate batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BatchStrategy {
    /// One batch per source tag, in order of first appearance.
    BySource,
    /// Seed-shuffled record order cut into chunks of `k`.
    FixedSize { k: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub id: String,
    pub record_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPartition {
    pub batches: Vec<Batch>,
    pub strategy: BatchStrategy,
    pub seed: u64,
}

impl BatchPartition {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// True when the batches are disjoint and cover exactly the ids of `d`.
    pub fn is_partition_of(&self, d: &Dataset) -> bool {
        let mut seen = HashSet::with_capacity(d.len());
        for id in self.batches.iter().flat_map(|b| &b.record_ids) {
            if !d.contains(id) || !seen.insert(id.as_str()) {
                return false;
            }
        }
        seen.len() == d.len()
    }
}

pub fn partition_batches(
    d: &Dataset,
    strategy: BatchStrategy,
    seed: u64,
) -> Result<BatchPartition, StoreError> {
    let batches = match strategy {
        BatchStrategy::BySource => {
            let mut order: Vec<&str> = Vec::new();
            let mut groups: HashMap<&str, Vec<String>> = HashMap::new();
            for r in d.iter() {
                groups
                    .entry(r.source.as_str())
                    .or_insert_with(|| {
                        order.push(r.source.as_str());
                        Vec::new()
                    })
                    .push(r.id.clone());
            }
            order
                .into_iter()
                .map(|source| Batch {
                    id: source.to_string(),
                    record_ids: groups.remove(source).unwrap_or_default(),
                })
                .collect()
        }
        BatchStrategy::FixedSize { k } => {
            if k == 0 {
                return Err(StoreError::ZeroBatchSize);
            }
            let mut ids: Vec<String> = d.iter().map(|r| r.id.clone()).collect();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            ids.chunks(k)
                .enumerate()
                .map(|(i, chunk)| Batch {
                    id: format!("batch-{i:04}"),
                    record_ids: chunk.to_vec(),
                })
                .collect()
        }
    };
    Ok(BatchPartition {
        batches,
        strategy,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn rec(id: &str, source: &str, v: &[f64]) -> EmbeddingRecord {
        EmbeddingRecord::new(id, source, v.to_vec())
    }

    fn parse(text: &str) -> Result<Dataset, StoreError> {
        read_jsonl(Cursor::new(text), "t", Role::Space)
    }

    #[test]
    fn three_valid_lines() {
        let text = r#"{"id":"a","source":"s","text":null,"vector":[1,2,3,4]}
{"id":"b","source":"s","vector":[0,0,0,0]}
{"id":"c","source":"t","text":"hello","vector":[1.5,-2,3,4e-3]}
"#;
        let d = parse(text).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 4);
        assert_eq!(d.get("c").unwrap().text.as_deref(), Some("hello"));
        assert_eq!(d.position("b"), Some(1));
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let text = "{\"id\":\"a\",\"source\":\"s\",\"vector\":[1,2,3,4]}\n{\"id\":\"b\",\"source\":\"s\",\"vector\":[1,2,3,4,5]}\n";
        match parse(text) {
            Err(StoreError::DimensionMismatch { line, expected, found }) => {
                assert_eq!((line, expected, found), (2, 4, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_empty_rejected() {
        let text = "{\"id\":\"a\",\"source\":\"s\",\"vector\":[1]}\n{\"id\":\"a\",\"source\":\"s\",\"vector\":[2]}\n";
        assert!(matches!(parse(text), Err(StoreError::DuplicateId { line: 2, .. })));
        assert!(matches!(parse(""), Err(StoreError::Empty)));
        assert!(matches!(parse("\n\n"), Err(StoreError::Empty)));
        assert!(matches!(parse("{\"id\":1}"), Err(StoreError::Parse { line: 1, .. })));
    }

    #[test]
    fn non_finite_rejected_in_memory() {
        let mut d = Dataset::empty("t", Role::Space, 2);
        let err = d.push(rec("a", "s", &[1.0, f64::NAN])).unwrap_err();
        assert!(matches!(err, StoreError::NonFinite { line: 1, index: 1 }));
        // out-of-range literals never parse
        assert!(parse("{\"id\":\"a\",\"source\":\"s\",\"vector\":[1e999]}").is_err());
    }

    #[test]
    fn binary_two_rows() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes.len(), 24);
        let entries = vec![
            IndexEntry { row: 0, id: "x".into(), source: "a".into() },
            IndexEntry { row: 1, id: "y".into(), source: "b".into() },
        ];
        let d = decode_binary(&bytes, entries.clone(), Some(3), "b".into()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.get("y").unwrap().vector, vec![4.0, 5.0, 6.0]);
        let inferred = decode_binary(&bytes, entries, None, "b".into()).unwrap();
        assert_eq!(inferred.dim(), 3);
    }

    #[test]
    fn binary_length_not_divisible() {
        let bytes = vec![0u8; 25];
        let entries = vec![IndexEntry { row: 0, id: "x".into(), source: "a".into() }];
        assert!(matches!(
            decode_binary(&bytes, entries, Some(3), "b".into()),
            Err(StoreError::BinaryLength { len: 25, dim: 3, row_bytes: 12 })
        ));
    }

    #[test]
    fn binary_index_count_mismatch() {
        let bytes = vec![0u8; 24];
        let entries = vec![IndexEntry { row: 0, id: "x".into(), source: "a".into() }];
        assert!(matches!(
            decode_binary(&bytes, entries, Some(3), "b".into()),
            Err(StoreError::IndexRowMismatch { index_rows: 1, vector_rows: 2 })
        ));
    }

    fn ten() -> Dataset {
        let records = (0..10)
            .map(|i| rec(&format!("r{i}"), if i < 6 { "a" } else { "b" }, &[i as f64]))
            .collect();
        Dataset::from_records("ten", Role::Space, records).unwrap()
    }

    #[test]
    fn fixed_size_ceiling() {
        let p = partition_batches(&ten(), BatchStrategy::FixedSize { k: 4 }, 7).unwrap();
        let sizes: Vec<usize> = p.batches.iter().map(|b| b.record_ids.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(p.is_partition_of(&ten()));
    }

    #[test]
    fn by_source_first_appearance() {
        let d = Dataset::from_records(
            "s",
            Role::Space,
            vec![rec("1", "a", &[0.0]), rec("2", "a", &[1.0]), rec("3", "b", &[2.0])],
        )
        .unwrap();
        let p = partition_batches(&d, BatchStrategy::BySource, 0).unwrap();
        let sizes: Vec<usize> = p.batches.iter().map(|b| b.record_ids.len()).collect();
        assert_eq!(sizes, vec![2, 1]);
        assert_eq!(p.batches[0].id, "a");
    }

    #[test]
    fn zero_k_rejected() {
        assert!(matches!(
            partition_batches(&ten(), BatchStrategy::FixedSize { k: 0 }, 0),
            Err(StoreError::ZeroBatchSize)
        ));
    }

    #[test]
    fn seeds_change_fixed_partition() {
        let a = partition_batches(&ten(), BatchStrategy::FixedSize { k: 3 }, 1).unwrap();
        let b = partition_batches(&ten(), BatchStrategy::FixedSize { k: 3 }, 1).unwrap();
        assert_eq!(a, b);
        let differing = (2..20)
            .filter(|&s| partition_batches(&ten(), BatchStrategy::FixedSize { k: 3 }, s).unwrap() != a)
            .count();
        assert!(differing >= 15);
    }
}
