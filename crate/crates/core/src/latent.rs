//! Layered latent codes, layer masks and labeled datasets.
//!
//! A code is an `L x D` matrix of finite reals: `L` stacked style vectors of
//! dimension `D`, two per generator resolution layer. Layer indices are
//! 0-based; resolution layers are 1-based (`1..=L/2`) and the conversion
//! between the two lives in [`resolution_rows`].

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub const DEFAULT_LAYERS: usize = 18;
pub const DEFAULT_DIM: usize = 512;

/// An `L x D` latent code stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredLatentCode {
    layers: usize,
    dim: usize,
    data: Vec<f64>,
}

impl LayeredLatentCode {
    pub fn zeros(layers: usize, dim: usize) -> Result<Self> {
        check_shape(layers, dim)?;
        Ok(Self {
            layers,
            dim,
            data: vec![0.0; layers * dim],
        })
    }

    /// Builds a code from row-major data, rejecting NaN/Inf.
    pub fn from_vec(layers: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(layers, dim)?;
        if data.len() != layers * dim {
            return Err(Error::InvalidShape(format!(
                "expected {} values for {layers}x{dim}, got {}",
                layers * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: pos / dim,
                index: pos % dim,
            });
        }
        Ok(Self { layers, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let layers = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::InvalidShape(format!(
                "ragged rows: expected width {dim}, found {}",
                bad.len()
            )));
        }
        Self::from_vec(layers, dim, rows.concat())
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.layers, self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        &self.data[layer * self.dim..(layer + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.data[layer * self.dim..(layer + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected_layers: self.layers,
                expected_dim: self.dim,
                layers: other.layers,
                dim: other.dim,
            });
        }
        Ok(())
    }

    /// Inner product restricted to the mask's layers.
    pub fn masked_dot(&self, other: &Self, mask: &LayerMask) -> f64 {
        mask.iter()
            .map(|l| dot(self.row(l), other.row(l)))
            .sum()
    }

    pub fn masked_norm(&self, mask: &LayerMask) -> f64 {
        self.masked_dot(self, mask).sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Reports whether every entry outside `mask` is exactly zero.
    pub fn is_zero_outside(&self, mask: &LayerMask) -> bool {
        (0..self.layers)
            .filter(|l| !mask.contains(*l))
            .all(|l| self.row(l).iter().all(|v| *v == 0.0))
    }
}

fn check_shape(layers: usize, dim: usize) -> Result<()> {
    if layers == 0 || dim == 0 {
        return Err(Error::InvalidShape(format!(
            "layers and dim must be positive, got {layers}x{dim}"
        )));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Set of active (editable) layer indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerMask {
    active: BTreeSet<usize>,
}

impl LayerMask {
    pub fn new(layers: usize, active: impl IntoIterator<Item = usize>) -> Result<Self> {
        let active: BTreeSet<usize> = active.into_iter().collect();
        if active.is_empty() {
            return Err(Error::EmptyMask);
        }
        if let Some(&index) = active.iter().find(|&&i| i >= layers) {
            return Err(Error::LayerOutOfRange { index, layers });
        }
        Ok(Self { active })
    }

    pub fn all(layers: usize) -> Result<Self> {
        Self::new(layers, 0..layers)
    }

    /// Layers 2..=11: the first two and the last six of 18 style vectors stay fixed.
    pub fn facial(layers: usize) -> Result<Self> {
        if layers < 12 {
            return Err(Error::InvalidShape(format!(
                "the facial mask needs at least 12 layers, got {layers}"
            )));
        }
        Self::new(layers, 2..layers.saturating_sub(6).max(3))
    }

    /// Parses `"2..11"` (inclusive), `"3"`, or comma lists such as `"0,2..4"`.
    pub fn parse(text: &str, layers: usize) -> Result<Self> {
        let mut active = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let num = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad layer mask '{text}'")))
            };
            match part.split_once("..") {
                Some((lo, hi)) => {
                    let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
                    if lo > hi {
                        return Err(Error::Parse(format!("bad layer range '{part}'")));
                    }
                    active.extend(lo..=hi);
                }
                None => active.push(num(part)?),
            }
        }
        Self::new(layers, active)
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.active.contains(&layer)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().copied()
    }

    pub fn max_index(&self) -> usize {
        *self.active.last().expect("mask is non-empty")
    }

    pub fn check_fits(&self, layers: usize) -> Result<()> {
        let index = self.max_index();
        if index >= layers {
            return Err(Error::LayerOutOfRange { index, layers });
        }
        Ok(())
    }

    /// Layers in `0..layers` that are not active.
    pub fn complement(&self, layers: usize) -> Vec<usize> {
        (0..layers).filter(|l| !self.contains(*l)).collect()
    }

    /// Compact text form, inverse of [`LayerMask::parse`].
    pub fn to_spec_string(&self) -> String {
        let mut parts = Vec::new();
        let mut iter = self.iter().peekable();
        while let Some(start) = iter.next() {
            let mut end = start;
            while iter.peek() == Some(&(end + 1)) {
                end = iter.next().unwrap();
            }
            parts.push(if start == end {
                start.to_string()
            } else {
                format!("{start}..{end}")
            });
        }
        parts.join(",")
    }
}

/// 0-based rows owned by a 1-based resolution layer.
pub fn resolution_rows(resolution_layer: usize, layers: usize) -> Result<[usize; 2]> {
    let max = layers / 2;
    if resolution_layer == 0 || resolution_layer > max {
        return Err(Error::ResolutionLayerOutOfRange {
            layer: resolution_layer,
            max,
        });
    }
    Ok([2 * resolution_layer - 2, 2 * resolution_layer - 1])
}

/// Concatenation of the active rows in ascending layer order.
pub fn vector_view(code: &LayeredLatentCode, mask: &LayerMask) -> Result<Vec<f64>> {
    mask.check_fits(code.layers())?;
    let mut out = Vec::with_capacity(mask.len() * code.dim());
    for l in mask.iter() {
        out.extend_from_slice(code.row(l));
    }
    Ok(out)
}

/// Copy of `code` with both rows of one resolution layer set to zero.
pub fn ablate_layers(code: &LayeredLatentCode, resolution_layer: usize) -> Result<LayeredLatentCode> {
    let rows = resolution_rows(resolution_layer, code.layers())?;
    let mut out = code.clone();
    for r in rows {
        out.row_mut(r).fill(0.0);
    }
    Ok(out)
}

/// Moves `code` by `amount` along a unit direction. Rows outside the
/// direction's mask are copied untouched.
pub fn shift_along(
    code: &LayeredLatentCode,
    dir: &crate::estimator::SemanticDirection,
    amount: f64,
) -> Result<LayeredLatentCode> {
    code.ensure_same_shape(&dir.vector)?;
    if !dir.is_unit() {
        return Err(Error::NotNormalized(dir.attribute.clone()));
    }
    if !amount.is_finite() {
        return Err(Error::InvalidArgument(format!("shift amount {amount}")));
    }
    let mut out = code.clone();
    for l in dir.mask.iter() {
        let d = dir.vector.row(l);
        for (o, v) in out.row_mut(l).iter_mut().zip(d) {
            *o += amount * v;
        }
    }
    Ok(out)
}

/// A latent code with its attribute labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub code: LayeredLatentCode,
    pub labels: BTreeMap<String, f64>,
}

/// Ordered samples sharing one shape and one label-key set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    layers: usize,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
        let (layers, dim) = first.code.shape();
        let keys: Vec<&String> = first.labels.keys().collect();
        let mut ids = BTreeSet::new();
        for s in &samples {
            first.code.ensure_same_shape(&s.code)?;
            if !s.labels.keys().eq(keys.iter().copied()) {
                return Err(Error::InconsistentLabels(s.id.clone()));
            }
            if let Some((k, _)) = s.labels.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "label '{k}' of sample '{}' is not finite",
                    s.id
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            samples,
            layers,
            dim,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.layers, self.dim)
    }

    pub fn attributes(&self) -> Vec<String> {
        self.samples[0].labels.keys().cloned().collect()
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.samples[0].labels.contains_key(name)
    }

    /// Column of labels for one attribute, in sample order.
    pub fn labels_of(&self, name: &str) -> Result<Vec<f64>> {
        if !self.has_attribute(name) {
            return Err(Error::UnknownAttribute(name.to_string()));
        }
        Ok(self.samples.iter().map(|s| s.labels[name]).collect())
    }

    /// Returns a copy with every label of `name` mapped through `f`.
    pub fn map_labels(&self, name: &str, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !self.has_attribute(name) {
            return Err(Error::UnknownAttribute(name.to_string()));
        }
        let mut out = self.clone();
        for s in &mut out.samples {
            let v = s.labels.get_mut(name).expect("checked above");
            *v = f(*v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SemanticDirection;

    fn small() -> LayeredLatentCode {
        LayeredLatentCode::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()
    }

    fn counting(layers: usize, dim: usize) -> LayeredLatentCode {
        let data = (0..layers * dim).map(|i| i as f64 * 0.5 - 3.0).collect();
        LayeredLatentCode::from_vec(layers, dim, data).unwrap()
    }

    #[test]
    fn full_mask_concatenates() {
        let m = LayerMask::all(2).unwrap();
        assert_eq!(vector_view(&small(), &m).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn single_layer_selection() {
        let m = LayerMask::new(2, [1]).unwrap();
        assert_eq!(vector_view(&small(), &m).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn facial_mask_view_length() {
        let code = LayeredLatentCode::zeros(18, 512).unwrap();
        let m = LayerMask::facial(18).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), (2..=11).collect::<Vec<_>>());
        assert_eq!(vector_view(&code, &m).unwrap().len(), 10 * 512);
    }

    #[test]
    fn mask_out_of_range() {
        let m = LayerMask::new(4, [3]).unwrap();
        assert!(matches!(
            vector_view(&small(), &m),
            Err(Error::LayerOutOfRange { index: 3, layers: 2 })
        ));
        assert!(LayerMask::new(2, []).is_err());
    }

    #[test]
    fn mask_parsing() {
        let m = LayerMask::parse("2..11", 18).unwrap();
        assert_eq!(m, LayerMask::facial(18).unwrap());
        let m = LayerMask::parse("0, 3..4,7", 8).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 3, 4, 7]);
        assert_eq!(m.to_spec_string(), "0,3..4,7");
        assert!(LayerMask::parse("5..2", 8).is_err());
        assert!(LayerMask::parse("x", 8).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            LayeredLatentCode::from_vec(1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { layer: 0, index: 1 })
        ));
        assert!(LayeredLatentCode::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn ablate_first_and_last_resolution_layer() {
        let code = counting(18, 4);
        let a = ablate_layers(&code, 1).unwrap();
        assert!(a.row(0).iter().chain(a.row(1)).all(|v| *v == 0.0));
        for l in 2..18 {
            assert_eq!(a.row(l), code.row(l));
        }
        let z = ablate_layers(&code, 9).unwrap();
        assert!(z.row(16).iter().chain(z.row(17)).all(|v| *v == 0.0));
        assert_eq!(ablate_layers(&z, 9).unwrap(), z);
        assert!(ablate_layers(&code, 0).is_err());
        assert!(ablate_layers(&code, 10).is_err());
    }

    #[test]
    fn ablation_touches_exactly_two_rows() {
        let code = counting(18, 4);
        for r in 1..=9 {
            let a = ablate_layers(&code, r).unwrap();
            let changed = code
                .as_slice()
                .iter()
                .zip(a.as_slice())
                .filter(|(x, y)| x != y)
                .count();
            // counting() has one exact zero at flat index 6 (row 1)
            let zeros_in_rows = resolution_rows(r, 18)
                .unwrap()
                .iter()
                .flat_map(|&row| code.row(row).iter())
                .filter(|v| **v == 0.0)
                .count();
            assert_eq!(changed + zeros_in_rows, 2 * 4);
        }
    }

    fn unit_dir(layers: usize, dim: usize, mask: LayerMask) -> SemanticDirection {
        let mut v = LayeredLatentCode::zeros(layers, dim).unwrap();
        let n = (mask.len() * dim) as f64;
        for l in mask.iter() {
            v.row_mut(l).fill(1.0 / n.sqrt());
        }
        SemanticDirection::from_vector("gender", v, mask).unwrap()
    }

    #[test]
    fn shift_zero_and_inverse() {
        let code = counting(6, 3);
        let dir = unit_dir(6, 3, LayerMask::new(6, [2, 3]).unwrap());
        assert_eq!(shift_along(&code, &dir, 0.0).unwrap(), code);
        let there = shift_along(&code, &dir, 2.0).unwrap();
        let back = shift_along(&there, &dir, -2.0).unwrap();
        for (a, b) in back.as_slice().iter().zip(code.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for l in [0, 1, 4, 5] {
            assert_eq!(there.row(l), code.row(l));
        }
        let moved: f64 = there
            .as_slice()
            .iter()
            .zip(code.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((moved - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shift_rejects_bad_inputs() {
        let code = counting(6, 3);
        let mut dir = unit_dir(6, 3, LayerMask::new(6, [2]).unwrap());
        assert!(matches!(
            shift_along(&counting(5, 3), &dir, 1.0),
            Err(Error::ShapeMismatch { .. })
        ));
        dir.vector.row_mut(2)[0] += 1.0;
        assert!(matches!(
            shift_along(&code, &dir, 1.0),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn dataset_validation() {
        let code = small();
        let mk = |id: &str, keys: &[&str]| Sample {
            id: id.into(),
            code: code.clone(),
            labels: keys.iter().map(|k| (k.to_string(), 1.0)).collect(),
        };
        assert!(Dataset::new(vec![mk("a", &["x"]), mk("b", &["x"])]).is_ok());
        assert!(matches!(
            Dataset::new(vec![mk("a", &["x"]), mk("b", &["y"])]),
            Err(Error::InconsistentLabels(id)) if id == "b"
        ));
        assert!(matches!(
            Dataset::new(vec![mk("a", &["x"]), mk("a", &["x"])]),
            Err(Error::DuplicateId(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shift_leaves_complement_untouched(
                data in proptest::collection::vec(-5.0f64..5.0, 24),
                amount in -3.0f64..3.0,
                active in proptest::collection::btree_set(0usize..6, 1..4),
            ) {
                let code = LayeredLatentCode::from_vec(6, 4, data).unwrap();
                let mask = LayerMask::new(6, active).unwrap();
                let dir = unit_dir(6, 4, mask.clone());
                let shifted = shift_along(&code, &dir, amount).unwrap();
                let comp = mask.complement(6);
                prop_assume!(!comp.is_empty());
                let comp = LayerMask::new(6, comp).unwrap();
                prop_assert_eq!(
                    vector_view(&shifted, &comp).unwrap(),
                    vector_view(&code, &comp).unwrap()
                );
            }
        }
    }
}
