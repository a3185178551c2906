//! Text file formats. All documents are compact JSON; multi-record files hold
//! one JSON object per line. Every float is written in exponent form with 17
//! significant digits so that write -> read -> write is byte-identical.
//! Layouts are described in `docs/FORMATS.md`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::disentangle::SemanticBasis;
use crate::error::{Error, Result};
use crate::estimator::SemanticDirection;
use crate::fusion::TraitOutcome;
use crate::genetics::{GeneticsRuleSet, PhenotypeDecision};
use crate::labels::{CodeRecord, LandmarkSet};
use crate::latent::{Dataset, LayerMask, LayeredLatentCode, Sample};

/// `serde_json` formatter that prints floats as `d.dddddddddddddddde±x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SignificantDigits;

impl serde_json::ser::Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes one value to a single line (no trailing newline).
pub fn to_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn from_line<T: DeserializeOwned>(line: &str, what: &str, lineno: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse(format!("{what}, line {lineno}: {e}")))
}

fn file_error(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::File {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(file_error(path))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(file_error(path))
}

fn read_document<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = read_text(path)?;
    from_line(text.trim_end(), &format!("{what} {}", path.display()), 1)
}

fn read_lines<T: DeserializeOwned>(path: &Path, what: &str) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path).map_err(file_error(path))?);
    let what = format!("{what} {}", path.display());
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(file_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(from_line(&line, &what, i + 1)?);
    }
    Ok(out)
}

fn lines_to_string<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&to_line(&item)?);
        out.push('\n');
    }
    Ok(out)
}

// ---- latent codes ----------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeDoc {
    layers: usize,
    dim: usize,
    data: Vec<Vec<f64>>,
}

impl CodeDoc {
    fn from_code(c: &LayeredLatentCode) -> Self {
        Self {
            layers: c.layers(),
            dim: c.dim(),
            data: c.to_rows(),
        }
    }

    fn into_code(self) -> Result<LayeredLatentCode> {
        if self.data.len() != self.layers || self.data.iter().any(|r| r.len() != self.dim) {
            return Err(Error::Parse(format!(
                "data does not match declared shape {}x{}",
                self.layers, self.dim
            )));
        }
        LayeredLatentCode::from_rows(&self.data)
    }
}

pub fn code_to_string(code: &LayeredLatentCode) -> Result<String> {
    Ok(to_line(&CodeDoc::from_code(code))? + "\n")
}

pub fn code_from_str(text: &str) -> Result<LayeredLatentCode> {
    from_line::<CodeDoc>(text.trim_end(), "latent code", 1)?.into_code()
}

pub fn write_code(path: &Path, code: &LayeredLatentCode) -> Result<()> {
    write_text(path, &code_to_string(code)?)
}

pub fn read_code(path: &Path) -> Result<LayeredLatentCode> {
    read_document::<CodeDoc>(path, "latent code")?.into_code()
}

// ---- datasets and code lists ---------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordDoc {
    id: String,
    layers: usize,
    dim: usize,
    data: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attributes: Option<BTreeMap<String, f64>>,
}

type Labels = BTreeMap<String, f64>;

impl RecordDoc {
    fn split(self) -> Result<(String, LayeredLatentCode, Option<Labels>)> {
        let code = CodeDoc {
            layers: self.layers,
            dim: self.dim,
            data: self.data,
        }
        .into_code()?;
        Ok((self.id, code, self.attributes))
    }
}

pub fn dataset_to_string(ds: &Dataset) -> Result<String> {
    lines_to_string(ds.samples().iter().map(|s| RecordDoc {
        id: s.id.clone(),
        layers: s.code.layers(),
        dim: s.code.dim(),
        data: s.code.to_rows(),
        attributes: Some(s.labels.clone()),
    }))
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_text(path, &dataset_to_string(ds)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut samples = Vec::new();
    for doc in read_lines::<RecordDoc>(path, "dataset")? {
        let (id, code, labels) = doc.split()?;
        let labels = labels.ok_or_else(|| Error::Parse(format!("sample '{id}' has no attributes")))?;
        samples.push(Sample { id, code, labels });
    }
    Dataset::new(samples)
}

pub fn code_records_to_string(records: &[CodeRecord]) -> Result<String> {
    lines_to_string(records.iter().map(|r| RecordDoc {
        id: r.id.clone(),
        layers: r.code.layers(),
        dim: r.code.dim(),
        data: r.code.to_rows(),
        attributes: None,
    }))
}

pub fn write_code_records(path: &Path, records: &[CodeRecord]) -> Result<()> {
    write_text(path, &code_records_to_string(records)?)
}

/// Reads a code list; any `attributes` present are ignored.
pub fn read_code_records(path: &Path) -> Result<Vec<CodeRecord>> {
    read_lines::<RecordDoc>(path, "code list")?
        .into_iter()
        .map(|doc| {
            let (id, code, _) = doc.split()?;
            Ok(CodeRecord { id, code })
        })
        .collect()
}

// ---- landmarks --------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkDoc {
    id: String,
    landmarks: Vec<[f64; 2]>,
}

pub fn landmarks_to_string(sets: &[LandmarkSet]) -> Result<String> {
    lines_to_string(sets.iter().map(|s| LandmarkDoc {
        id: s.id.clone(),
        landmarks: s.points().to_vec(),
    }))
}

pub fn write_landmarks(path: &Path, sets: &[LandmarkSet]) -> Result<()> {
    write_text(path, &landmarks_to_string(sets)?)
}

pub fn read_landmarks(path: &Path) -> Result<Vec<LandmarkSet>> {
    read_lines::<LandmarkDoc>(path, "landmarks")?
        .into_iter()
        .map(|d| LandmarkSet::new(d.id, d.landmarks))
        .collect()
}

// ---- semantic bases -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectionDoc {
    attribute: String,
    magnitude: f64,
    normalized: bool,
    data: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisDoc {
    layers: usize,
    dim: usize,
    mask: Vec<usize>,
    orthonormal: bool,
    directions: Vec<DirectionDoc>,
    #[serde(default)]
    thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    spreads: BTreeMap<String, f64>,
}

pub fn basis_to_string(basis: &SemanticBasis) -> Result<String> {
    let (layers, dim) = basis.shape();
    let doc = BasisDoc {
        layers,
        dim,
        mask: basis.mask().iter().collect(),
        orthonormal: basis.orthonormal,
        directions: basis
            .directions
            .iter()
            .map(|d| DirectionDoc {
                attribute: d.attribute.clone(),
                magnitude: d.magnitude,
                normalized: d.normalized,
                data: d.vector.to_rows(),
            })
            .collect(),
        thresholds: basis.thresholds.clone(),
        spreads: basis.spreads.clone(),
    };
    Ok(to_line(&doc)? + "\n")
}

pub fn basis_from_str(text: &str) -> Result<SemanticBasis> {
    let doc: BasisDoc = from_line(text.trim_end(), "basis", 1)?;
    let mask = LayerMask::new(doc.layers, doc.mask.iter().copied())?;
    let directions = doc
        .directions
        .into_iter()
        .map(|d| {
            let vector = CodeDoc {
                layers: doc.layers,
                dim: doc.dim,
                data: d.data,
            }
            .into_code()?;
            if !vector.is_zero_outside(&mask) {
                return Err(Error::Parse(format!(
                    "direction '{}' is non-zero outside its mask",
                    d.attribute
                )));
            }
            Ok(SemanticDirection {
                attribute: d.attribute,
                vector,
                mask: mask.clone(),
                magnitude: d.magnitude,
                normalized: d.normalized,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut basis = SemanticBasis::new(directions)?;
    basis.orthonormal = doc.orthonormal;
    basis.thresholds = doc.thresholds;
    basis.spreads = doc.spreads;
    Ok(basis)
}

pub fn write_basis(path: &Path, basis: &SemanticBasis) -> Result<()> {
    write_text(path, &basis_to_string(basis)?)
}

pub fn read_basis(path: &Path) -> Result<SemanticBasis> {
    basis_from_str(&read_text(path)?)
}

// ---- rules, oracle specs and reports ----------------------------------------

pub fn rules_to_string(rules: &GeneticsRuleSet) -> Result<String> {
    Ok(to_line(rules)? + "\n")
}

pub fn write_rules(path: &Path, rules: &GeneticsRuleSet) -> Result<()> {
    write_text(path, &rules_to_string(rules)?)
}

pub fn read_rules(path: &Path) -> Result<GeneticsRuleSet> {
    let rules: GeneticsRuleSet = read_document(path, "rules")?;
    rules.validate()?;
    Ok(rules)
}

pub fn read_oracle_spec(path: &Path) -> Result<crate::oracle::OracleSpec> {
    read_document(path, "oracle spec")
}

/// Per-attribute outcome of one fusion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub seed: u64,
    /// How phenotypes were classified and which modelling assumptions apply.
    pub assumptions: Vec<String>,
    pub decisions: Vec<PhenotypeDecision>,
    pub traits: Vec<TraitOutcome>,
}

pub fn report_to_string(report: &FusionReport) -> Result<String> {
    Ok(to_line(report)? + "\n")
}
