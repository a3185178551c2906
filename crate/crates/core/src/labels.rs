//! Attribute pseudo-labels from 68-point facial landmarks.
//!
//! Each attribute is the mean Euclidean distance over a fixed list of
//! landmark pairs. Landmark numbering is 1-based (dlib 68-point layout):
//! position `i` in [`LandmarkSet::points`] holds landmark `i + 1`.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::latent::{Dataset, LayeredLatentCode, Sample};

pub const LANDMARK_COUNT: usize = 68;

/// Outer eye corners, used by the optional interocular normalization.
const LEFT_EYE_OUTER: usize = 37;
const RIGHT_EYE_OUTER: usize = 46;

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub id: String,
    points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(id: impl Into<String>, points: Vec<[f64; 2]>) -> Result<Self> {
        let id = id.into();
        if points.len() != LANDMARK_COUNT {
            return Err(Error::InvalidLandmarks {
                id,
                reason: format!("expected {LANDMARK_COUNT} points, got {}", points.len()),
            });
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite() && *c >= 0.0))
        {
            return Err(Error::InvalidLandmarks {
                id,
                reason: format!("landmark {} is not finite and non-negative", i + 1),
            });
        }
        Ok(Self { id, points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Landmark by its 1-based number.
    pub fn point(&self, index: usize) -> Result<[f64; 2]> {
        if index == 0 || index > LANDMARK_COUNT {
            return Err(Error::LandmarkOutOfRange(index));
        }
        Ok(self.points[index - 1])
    }

    pub fn distance(&self, a: usize, b: usize) -> Result<f64> {
        let (p, q) = (self.point(a)?, self.point(b)?);
        Ok((p[0] - q[0]).hypot(p[1] - q[1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDefinition {
    pub name: String,
    pub pairs: Vec<(usize, usize)>,
}

impl AttributeDefinition {
    pub fn new(name: impl Into<String>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let name = name.into();
        if pairs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "attribute '{name}' has no landmark pairs"
            )));
        }
        for &(a, b) in &pairs {
            for i in [a, b] {
                if i == 0 || i > LANDMARK_COUNT {
                    return Err(Error::LandmarkOutOfRange(i));
                }
            }
        }
        Ok(Self { name, pairs })
    }
}

/// The nine landmark-distance attributes.
pub fn builtin_attribute_table() -> Vec<AttributeDefinition> {
    let table: [(&str, &[(usize, usize)]); 9] = [
        ("eyebrow_length", &[(18, 22), (23, 27)]),
        ("eye_width", &[(38, 42), (45, 47)]),
        ("eye_length", &[(37, 40), (43, 46)]),
        ("nose_width", &[(34, 36), (32, 34)]),
        ("upper_lip_thickness", &[(52, 63), (51, 62), (53, 64)]),
        ("lower_lip_thickness", &[(58, 67), (59, 68), (57, 66)]),
        ("mouth_width", &[(52, 58), (51, 59), (53, 57)]),
        ("mouth_length", &[(49, 55)]),
        ("chin_sharpness", &[(8, 10), (7, 11)]),
    ];
    table
        .iter()
        .map(|(name, pairs)| AttributeDefinition {
            name: name.to_string(),
            pairs: pairs.to_vec(),
        })
        .collect()
}

/// Mean landmark-pair distance for one attribute.
pub fn compute_label(lm: &LandmarkSet, attr: &AttributeDefinition) -> Result<f64> {
    let mut total = 0.0;
    for &(a, b) in &attr.pairs {
        total += lm.distance(a, b)?;
    }
    Ok(total / attr.pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelOptions {
    /// Divide every label by the outer-eye-corner distance.
    pub interocular_normalize: bool,
}

/// All built-in labels for one landmark set, keyed by attribute name.
pub fn compute_labels(lm: &LandmarkSet, opts: LabelOptions) -> Result<BTreeMap<String, f64>> {
    let scale = if opts.interocular_normalize {
        let d = lm.distance(LEFT_EYE_OUTER, RIGHT_EYE_OUTER)?;
        if d <= 0.0 {
            return Err(Error::InvalidLandmarks {
                id: lm.id.clone(),
                reason: "degenerate interocular distance".into(),
            });
        }
        d
    } else {
        1.0
    };
    builtin_attribute_table()
        .iter()
        .map(|a| Ok((a.name.clone(), compute_label(lm, a)? / scale)))
        .collect()
}

/// An unlabeled latent code as read from a code file.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeRecord {
    pub id: String,
    pub code: LayeredLatentCode,
}

/// Joins codes with landmark sets by id and attaches the built-in labels.
/// Output follows the order of `codes`.
pub fn label_dataset(
    codes: &[CodeRecord],
    landmarks: &[LandmarkSet],
    opts: LabelOptions,
) -> Result<Dataset> {
    let mut by_id: HashMap<&str, &LandmarkSet> = HashMap::new();
    for lm in landmarks {
        if by_id.insert(lm.id.as_str(), lm).is_some() {
            return Err(Error::DuplicateId(lm.id.clone()));
        }
    }
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(codes.len());
    for rec in codes {
        if !seen.insert(rec.id.as_str()) {
            return Err(Error::DuplicateId(rec.id.clone()));
        }
        let lm = by_id
            .get(rec.id.as_str())
            .ok_or_else(|| Error::MissingId(rec.id.clone()))?;
        samples.push(Sample {
            id: rec.id.clone(),
            code: rec.code.clone(),
            labels: compute_labels(lm, opts)?,
        });
    }
    if let Some(extra) = landmarks.iter().find(|lm| !seen.contains(lm.id.as_str())) {
        return Err(Error::MissingId(extra.id.clone()));
    }
    Dataset::new(samples)
}
