//! On-disk formats: the binary embedding dump, its JSONL metadata sidecar,
//! a CSV fixture reader, and JSON persistence for fitted models.
//!
//! Embedding file layout (all integers little-endian):
//!
//! | offset | size  | field                              |
//! |--------|-------|------------------------------------|
//! | 0      | 4     | magic `EMB1`                       |
//! | 4      | 4     | `u32` version = 1                  |
//! | 8      | 4     | `u32` dtype code (1 = `f32`)       |
//! | 12     | 8     | `u64` rows `N`                     |
//! | 20     | 8     | `u64` columns `d`                  |
//! | 28     | 4·N·d | row-major little-endian `f32`      |

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier_ood::BinaryClassifier;
use crate::combiner::LinearCombiner;
use crate::error::{Error, Result};
use crate::gaussian_ood::{GaussianModel, GaussianPair, RmdScorer, Side};
use crate::linalg::{CholeskyFactor, EmbeddingMatrix, Matrix};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
pub const HEADER_LEN: u64 = 28;
pub const MODEL_SCHEMA_VERSION: u64 = 1;

/// Serializes a matrix in the `EMB1` layout. Values are narrowed to `f32`.
pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let n = matrix.nrows();
    let d = matrix.ncols();
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * n * d);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for &v in matrix.as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

/// Parses an `EMB1` buffer, widening the payload to `f64`.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let truncated = |expected: u64| Error::TruncatedPayload {
        offset: bytes.len() as u64,
        expected,
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dtype = u32_at(8);
    if dtype != DTYPE_F32 {
        return Err(Error::DtypeMismatch(dtype));
    }
    let n = u64_at(12);
    let d = u64_at(20);
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::InvalidArgument(format!("header shape {n}x{d} overflows")))?;
    if (bytes.len() as u64) < expected {
        return Err(truncated(expected));
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::InvalidArgument(format!(
            "{} trailing bytes after payload",
            bytes.len() as u64 - expected
        )));
    }
    let data: Vec<f64> = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Matrix::from_vec(n as usize, d as usize, data)
}

pub fn write_embeddings(path: impl AsRef<Path>, matrix: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

/// Per-example metadata, one JSON object per line of the sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub id: String,
    pub dataset: String,
    #[serde(default)]
    pub split: String,
    #[serde(default = "default_side")]
    pub side: Side,
    /// Mean per-token negative log-likelihood transform of the generated output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub quality: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tokens: Option<u64>,
}

fn default_side() -> Side {
    Side::Input
}

impl ExampleMeta {
    fn validate(&self) -> std::result::Result<(), String> {
        if let Some(p) = self.perplexity {
            if !p.is_finite() {
                return Err("perplexity is not finite".into());
            }
        }
        if let Some((k, _)) = self.quality.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("quality `{k}` is not finite"));
        }
        Ok(())
    }
}

/// Parses JSONL metadata. Blank lines are skipped; line numbers in errors
/// are 1-based physical lines.
pub fn parse_metadata<R: BufRead>(reader: R, expected_n: usize) -> Result<Vec<ExampleMeta>> {
    let mut out = Vec::with_capacity(expected_n);
    let mut seen = HashSet::with_capacity(expected_n);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: ExampleMeta = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        meta.validate().map_err(|message| Error::MalformedLine {
            line: line_no,
            message,
        })?;
        if !seen.insert(meta.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: meta.id,
            });
        }
        out.push(meta);
    }
    if out.len() != expected_n {
        return Err(Error::LineCountMismatch {
            expected: expected_n,
            found: out.len(),
        });
    }
    Ok(out)
}

pub fn read_metadata(path: impl AsRef<Path>, expected_n: usize) -> Result<Vec<ExampleMeta>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_metadata(BufReader::new(file), expected_n)
}

pub fn write_metadata(path: impl AsRef<Path>, meta: &[ExampleMeta]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in meta {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sidecar path for an embedding file: same stem, `.jsonl` extension.
pub fn sidecar_path(embedding_path: &Path) -> PathBuf {
    embedding_path.with_extension("jsonl")
}

/// Embedding matrix plus row-aligned metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    pub matrix: EmbeddingMatrix,
    pub meta: Vec<ExampleMeta>,
}

impl EmbeddingStore {
    pub fn new(matrix: EmbeddingMatrix, meta: Vec<ExampleMeta>) -> Result<Self> {
        if matrix.nrows() != meta.len() {
            return Err(Error::LineCountMismatch {
                expected: matrix.nrows(),
                found: meta.len(),
            });
        }
        let mut seen = HashSet::with_capacity(meta.len());
        for (i, m) in meta.iter().enumerate() {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::DuplicateId {
                    line: i + 1,
                    id: m.id.clone(),
                });
            }
        }
        Ok(EmbeddingStore { matrix, meta })
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Reads `<name>.emb` (or whatever `path` is) and its `.jsonl` sidecar.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let matrix = read_embeddings(path)?;
        let meta = read_metadata(sidecar_path(path), matrix.nrows())?;
        EmbeddingStore::new(matrix, meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_embeddings(path, &self.matrix)?;
        write_metadata(sidecar_path(path), &self.meta)
    }

    /// Rows whose metadata satisfies `keep`, in original order.
    pub fn filter(&self, keep: impl Fn(&ExampleMeta) -> bool) -> EmbeddingStore {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.meta[i])).collect();
        EmbeddingStore {
            matrix: self.matrix.select_rows(&idx),
            meta: idx.iter().map(|&i| self.meta[i].clone()).collect(),
        }
    }

    /// Concatenates two stores with the same width.
    pub fn concat(&self, other: &EmbeddingStore) -> Result<EmbeddingStore> {
        let matrix = self.matrix.vstack(&other.matrix)?;
        let mut meta = self.meta.clone();
        meta.extend(other.meta.iter().cloned());
        EmbeddingStore::new(matrix, meta)
    }
}

/// Reads a hand-built fixture with header `id,dataset,split,v0,…,v{d-1}`.
/// Every row is tagged as an input-side embedding.
pub fn read_csv_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let fixed = ["id", "dataset", "split"];
    if headers.len() < fixed.len() || headers.iter().take(3).ne(fixed.iter().copied()) {
        return Err(Error::MalformedLine {
            line: 1,
            message: "header must start with id,dataset,split".into(),
        });
    }
    let d = headers.len() - fixed.len();
    for (j, h) in headers.iter().skip(3).enumerate() {
        if h != format!("v{j}") {
            return Err(Error::MalformedLine {
                line: 1,
                message: format!("expected column v{j}, found `{h}`"),
            });
        }
    }
    let mut data = Vec::new();
    let mut meta = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::MalformedLine {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for field in rec.iter().skip(3) {
            let v: f64 = field.trim().parse().map_err(|_| Error::MalformedLine {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedLine {
                    line,
                    message: "non-finite value".into(),
                });
            }
            data.push(v);
        }
        meta.push(ExampleMeta {
            id: rec[0].to_string(),
            dataset: rec[1].to_string(),
            split: rec[2].to_string(),
            side: Side::Input,
            perplexity: None,
            quality: BTreeMap::new(),
            n_tokens: None,
        });
    }
    let matrix = Matrix::from_vec(meta.len(), d, data)?;
    EmbeddingStore::new(matrix, meta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GaussianRecord {
    dim: usize,
    n_fit: usize,
    ridge: f64,
    mean: Vec<f64>,
    /// Row `i` holds `L[i][0..=i]`.
    chol_lower: Vec<Vec<f64>>,
}

impl From<&GaussianModel> for GaussianRecord {
    fn from(g: &GaussianModel) -> Self {
        let l = g.chol().lower();
        GaussianRecord {
            dim: g.dim(),
            n_fit: g.n_fit(),
            ridge: g.ridge(),
            mean: g.mean().to_vec(),
            chol_lower: (0..g.dim()).map(|i| l.row(i)[..=i].to_vec()).collect(),
        }
    }
}

impl GaussianRecord {
    fn into_model(self) -> Result<GaussianModel> {
        let d = self.dim;
        if self.mean.len() != d || self.chol_lower.len() != d {
            return Err(Error::SchemaMismatch(format!(
                "gaussian of dim {d} has mean length {} and {} factor rows",
                self.mean.len(),
                self.chol_lower.len()
            )));
        }
        let mut lower = Matrix::zeros(d, d);
        for (i, row) in self.chol_lower.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::SchemaMismatch(format!(
                    "factor row {i} has {} entries, expected {}",
                    row.len(),
                    i + 1
                )));
            }
            lower.row_mut(i)[..=i].copy_from_slice(row);
        }
        let chol = CholeskyFactor::from_lower(lower)
            .map_err(|e| Error::SchemaMismatch(format!("invalid Cholesky factor: {e}")))?;
        GaussianModel::from_parts(self.mean, chol, self.n_fit, self.ridge)
            .map_err(|e| Error::SchemaMismatch(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PairRecord {
    foreground: GaussianRecord,
    background: GaussianRecord,
}

impl PairRecord {
    fn from_pair(p: &GaussianPair) -> Self {
        PairRecord {
            foreground: (&p.foreground).into(),
            background: (&p.background).into(),
        }
    }

    fn into_pair(self) -> Result<GaussianPair> {
        GaussianPair::new(self.foreground.into_model()?, self.background.into_model()?)
            .map_err(|e| Error::SchemaMismatch(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RmdRecord {
    #[serde(default)]
    input: Option<PairRecord>,
    #[serde(default)]
    output: Option<PairRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ClassifierRecord {
    intercept: f64,
    weights: Vec<f64>,
    l2: f64,
    n_iter: usize,
    converged: bool,
}

/// Any model the CLI persists.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Gaussian(GaussianModel),
    RmdScorer(RmdScorer),
    BinaryClassifier(BinaryClassifier),
    LinearCombiner(LinearCombiner),
}

impl ModelFile {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Gaussian(_) => "gaussian",
            ModelFile::RmdScorer(_) => "rmd_scorer",
            ModelFile::BinaryClassifier(_) => "binary_classifier",
            ModelFile::LinearCombiner(_) => "linear_combiner",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let body = match self {
            ModelFile::Gaussian(g) => serde_json::to_value(GaussianRecord::from(g))?,
            ModelFile::RmdScorer(s) => serde_json::to_value(RmdRecord {
                input: s.input.as_ref().map(PairRecord::from_pair),
                output: s.output.as_ref().map(PairRecord::from_pair),
            })?,
            ModelFile::BinaryClassifier(c) => serde_json::to_value(ClassifierRecord {
                intercept: c.intercept,
                weights: c.weights.clone(),
                l2: c.l2,
                n_iter: c.n_iter,
                converged: c.converged,
            })?,
            ModelFile::LinearCombiner(c) => serde_json::to_value(c)?,
        };
        let envelope = serde_json::json!({
            "kind": self.kind(),
            "version": MODEL_SCHEMA_VERSION,
            "model": body,
        });
        Ok(serde_json::to_string_pretty(&envelope)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::SchemaMismatch("missing numeric `version`".into()))?;
        if version != MODEL_SCHEMA_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let kind = value
            .get("kind")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| Error::SchemaMismatch("missing string `kind`".into()))?;
        let body = value
            .get("model")
            .cloned()
            .ok_or_else(|| Error::SchemaMismatch("missing `model`".into()))?;
        let bad = |e: serde_json::Error| Error::SchemaMismatch(format!("{kind}: {e}"));
        Ok(match kind {
            "gaussian" => ModelFile::Gaussian(
                serde_json::from_value::<GaussianRecord>(body)
                    .map_err(bad)?
                    .into_model()?,
            ),
            "rmd_scorer" => {
                let r: RmdRecord = serde_json::from_value(body).map_err(bad)?;
                ModelFile::RmdScorer(RmdScorer {
                    input: r.input.map(PairRecord::into_pair).transpose()?,
                    output: r.output.map(PairRecord::into_pair).transpose()?,
                })
            }
            "binary_classifier" => {
                let r: ClassifierRecord = serde_json::from_value(body).map_err(bad)?;
                if r.weights
                    .iter()
                    .chain([&r.intercept])
                    .any(|w| !w.is_finite())
                {
                    return Err(Error::SchemaMismatch("non-finite classifier weight".into()));
                }
                ModelFile::BinaryClassifier(BinaryClassifier {
                    intercept: r.intercept,
                    weights: r.weights,
                    l2: r.l2,
                    n_iter: r.n_iter,
                    converged: r.converged,
                })
            }
            "linear_combiner" => {
                ModelFile::LinearCombiner(serde_json::from_value(body).map_err(bad)?)
            }
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "unknown model kind `{other}`"
                )))
            }
        })
    }

    fn expect_kind(self, want: &'static str) -> Error {
        Error::SchemaMismatch(format!("expected a {want} model, found {}", self.kind()))
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    let mut text = model.to_json()?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}

pub fn load_gaussian(path: impl AsRef<Path>) -> Result<GaussianModel> {
    match load_model(path)? {
        ModelFile::Gaussian(g) => Ok(g),
        other => Err(other.expect_kind("gaussian")),
    }
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<BinaryClassifier> {
    match load_model(path)? {
        ModelFile::BinaryClassifier(c) => Ok(c),
        other => Err(other.expect_kind("binary_classifier")),
    }
}

pub fn load_linear_combiner(path: impl AsRef<Path>) -> Result<LinearCombiner> {
    match load_model(path)? {
        ModelFile::LinearCombiner(c) => Ok(c),
        other => Err(other.expect_kind("linear_combiner")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cholesky, SpdMatrix};

    fn meta_line(id: &str) -> String {
        format!(
            r#"{{"id":"{id}","dataset":"xsum","split":"test","side":"output","perplexity":3.5,"quality":{{"rouge1":0.4}}}}"#
        )
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let bytes = encode_embeddings(&Matrix::empty(7)).unwrap();
        assert_eq!(bytes.len() as u64, HEADER_LEN);
        let back = decode_embeddings(&bytes).unwrap();
        assert_eq!(back.nrows(), 0);
        assert_eq!(back.ncols(), 7);
    }

    #[test]
    fn header_layout() {
        let m = Matrix::from_rows(&[[1.0, -2.5]]).unwrap();
        let b = encode_embeddings(&m).unwrap();
        assert_eq!(&b[0..4], b"EMB1");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..20], &1u64.to_le_bytes());
        assert_eq!(&b[20..28], &2u64.to_le_bytes());
        assert_eq!(&b[28..32], &1.0f32.to_le_bytes());
        assert_eq!(&b[32..36], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn corrupt_files() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = encode_embeddings(&m).unwrap();

        let err = decode_embeddings(&b[..b.len() - 3]).unwrap_err();
        assert!(
            matches!(
                err,
                Error::TruncatedPayload {
                    offset: 41,
                    expected: 44
                }
            ),
            "{err:?}"
        );
        assert!(matches!(
            decode_embeddings(&b[..10]),
            Err(Error::TruncatedPayload {
                offset: 10,
                expected: 28
            })
        ));

        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_embeddings(&bad),
            Err(Error::BadMagic { .. })
        ));
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_embeddings(&bad),
            Err(Error::UnsupportedVersion(2))
        ));
        let mut bad = b.clone();
        bad[8] = 2;
        assert!(matches!(
            decode_embeddings(&bad),
            Err(Error::DtypeMismatch(2))
        ));
    }

    #[test]
    fn write_rejects_non_finite() {
        let m = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        assert!(matches!(encode_embeddings(&m), Err(Error::NonFiniteInput)));
        let m = Matrix::from_rows(&[[1e300]]).unwrap();
        assert!(matches!(encode_embeddings(&m), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn metadata_cases() {
        let ok = (0..3)
            .map(|i| meta_line(&format!("e{i}")))
            .collect::<Vec<_>>()
            .join("\n");
        let meta = parse_metadata(ok.as_bytes(), 3).unwrap();
        assert_eq!(meta.len(), 3);
        assert_eq!(meta[0].side, Side::Output);
        assert_eq!(meta[0].perplexity, Some(3.5));
        assert_eq!(meta[0].quality["rouge1"], 0.4);

        let two = (0..2)
            .map(|i| meta_line(&format!("e{i}")))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(
            parse_metadata(two.as_bytes(), 3),
            Err(Error::LineCountMismatch {
                expected: 3,
                found: 2
            })
        ));

        let mut lines: Vec<String> = (0..6).map(|i| meta_line(&format!("e{i}"))).collect();
        lines.push(meta_line("e2"));
        assert!(matches!(
            parse_metadata(lines.join("\n").as_bytes(), 7),
            Err(Error::DuplicateId { line: 7, .. })
        ));

        let broken = format!("{}\n{{not json", meta_line("a"));
        assert!(matches!(
            parse_metadata(broken.as_bytes(), 2),
            Err(Error::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn metadata_defaults() {
        let m = parse_metadata(r#"{"id":"a","dataset":"d"}"#.as_bytes(), 1).unwrap();
        assert_eq!(m[0].side, Side::Input);
        assert_eq!(m[0].perplexity, None);
        assert!(m[0].quality.is_empty());
    }

    #[test]
    fn wrong_kind_and_version() {
        let c = LinearCombiner {
            intercept: 1.0,
            weights: [("ppx".to_string(), 2.0)].into_iter().collect(),
            fit_rmse: 0.0,
        };
        let text = ModelFile::LinearCombiner(c.clone()).to_json().unwrap();
        assert_eq!(
            ModelFile::from_json(&text).unwrap(),
            ModelFile::LinearCombiner(c)
        );

        let wrong = text.replace("linear_combiner", "gaussian");
        assert!(matches!(
            ModelFile::from_json(&wrong),
            Err(Error::SchemaMismatch(_))
        ));
        let unknown = text.replace("linear_combiner", "forest");
        assert!(matches!(
            ModelFile::from_json(&unknown),
            Err(Error::SchemaMismatch(_))
        ));
        let v2 = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            ModelFile::from_json(&v2),
            Err(Error::VersionUnsupported(2))
        ));
    }

    #[test]
    fn identity_gaussian_from_json() {
        let chol = cholesky(&SpdMatrix::new(Matrix::identity(3)).unwrap()).unwrap();
        let g = GaussianModel::from_parts(vec![0.0; 3], chol, 10, 0.0).unwrap();
        let text = ModelFile::Gaussian(g).to_json().unwrap();
        let ModelFile::Gaussian(back) = ModelFile::from_json(&text).unwrap() else {
            panic!("kind changed");
        };
        assert_eq!(back.md_score(&[1.0, 2.0, 2.0]).unwrap(), 9.0);
    }

    #[test]
    fn malformed_gaussian_factor() {
        let text = r#"{"kind":"gaussian","version":1,"model":{"dim":2,"n_fit":5,"ridge":0.0,
            "mean":[0,0],"chol_lower":[[1.0],[0.5,-1.0]]}}"#;
        assert!(matches!(
            ModelFile::from_json(text),
            Err(Error::SchemaMismatch(_))
        ));
    }
}
