//! Pairwise-difference estimation of semantic directions.
//!
//! For a target attribute `l`, every admissible pair `i < j` contributes
//! `(w_i - w_j) / (u_il - u_jl)`. The basic estimator averages these terms;
//! the weighted estimator multiplies each term by
//! `prod_m exp(-|du_m / du_l|)` over the conditioned attributes and divides
//! by the total weight.
//!
//! Because the sum is linear in the codes, it is accumulated as one scalar
//! coefficient per sample (`sum_k alpha_k w_k`), which keeps the cost at
//! `O(N^2 + N * |mask| * D)` instead of `O(N^2 * |mask| * D)`. The reference
//! reduction visits pairs in ascending `(i, j)` order.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::latent::{Dataset, LayerMask, LayeredLatentCode};

const UNIT_TOLERANCE: f64 = 1e-10;

/// Default pair-discard threshold for integer (pixel) labels.
pub const PIXEL_MIN_DELTA: f64 = 1.0;
/// Default pair-discard threshold for real-valued labels.
pub const REAL_MIN_DELTA: f64 = 1e-6;

/// An estimated (or orthogonalized) semantic direction.
///
/// `vector` is zero outside `mask`. When `normalized` is set, its norm is 1 and
/// `magnitude` holds the norm it had before normalization, in code units per
/// label unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticDirection {
    pub attribute: String,
    pub vector: LayeredLatentCode,
    pub mask: LayerMask,
    pub magnitude: f64,
    pub normalized: bool,
}

impl SemanticDirection {
    /// Restricts `vector` to `mask` and normalizes it.
    pub fn from_vector(
        attribute: impl Into<String>,
        mut vector: LayeredLatentCode,
        mask: LayerMask,
    ) -> Result<Self> {
        let attribute = attribute.into();
        mask.check_fits(vector.layers())?;
        for l in mask.complement(vector.layers()) {
            vector.row_mut(l).fill(0.0);
        }
        let magnitude = vector.masked_norm(&mask);
        if !(magnitude > 0.0 && magnitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "direction for '{attribute}' has zero or non-finite norm"
            )));
        }
        for l in mask.iter() {
            for v in vector.row_mut(l) {
                *v /= magnitude;
            }
        }
        Ok(Self {
            attribute,
            vector,
            mask,
            magnitude,
            normalized: true,
        })
    }

    pub fn is_unit(&self) -> bool {
        self.normalized && (self.vector.masked_norm(&self.mask) - 1.0).abs() <= UNIT_TOLERANCE
    }

    /// Inner product of `code` with this direction over the mask.
    pub fn project(&self, code: &LayeredLatentCode) -> Result<f64> {
        code.ensure_same_shape(&self.vector)?;
        Ok(self.vector.masked_dot(code, &self.mask))
    }

    pub fn cosine(&self, other: &SemanticDirection) -> Result<f64> {
        self.vector.ensure_same_shape(&other.vector)?;
        let d = crate::latent::dot(self.vector.as_slice(), other.vector.as_slice());
        Ok(d / (self.vector.frobenius_norm() * other.vector.frobenius_norm()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Basic,
    Weighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub method: Method,
    pub target: String,
    pub conditioned: Vec<String>,
    /// Pairs with `|du_l| < min_delta` are discarded.
    pub min_delta: f64,
    pub max_pairs: Option<usize>,
    pub mask: LayerMask,
    pub seed: u64,
    /// Selects the sequential reference reduction.
    pub deterministic: bool,
}

impl EstimatorConfig {
    pub fn basic(target: impl Into<String>, mask: LayerMask) -> Self {
        Self {
            method: Method::Basic,
            target: target.into(),
            conditioned: Vec::new(),
            min_delta: REAL_MIN_DELTA,
            max_pairs: None,
            mask,
            seed: 0,
            deterministic: true,
        }
    }

    pub fn weighted(target: impl Into<String>, conditioned: Vec<String>, mask: LayerMask) -> Self {
        Self {
            method: Method::Weighted,
            conditioned,
            ..Self::basic(target, mask)
        }
    }

    pub fn with_min_delta(mut self, min_delta: f64) -> Self {
        self.min_delta = min_delta;
        self
    }

    fn validate(&self, ds: &Dataset) -> Result<()> {
        if !(self.min_delta > 0.0 && self.min_delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "min_delta must be positive, got {}",
                self.min_delta
            )));
        }
        if self.conditioned.contains(&self.target) {
            return Err(Error::InvalidConfig(format!(
                "target '{}' is also conditioned",
                self.target
            )));
        }
        if self.method == Method::Weighted && self.conditioned.is_empty() {
            return Err(Error::InvalidConfig(
                "weighted estimation needs at least one conditioned attribute".into(),
            ));
        }
        if self.max_pairs == Some(0) {
            return Err(Error::InvalidConfig("max_pairs must be positive".into()));
        }
        for name in std::iter::once(&self.target).chain(&self.conditioned) {
            if !ds.has_attribute(name) {
                return Err(Error::UnknownAttribute(name.clone()));
            }
        }
        self.mask.check_fits(ds.shape().0)
    }
}

/// Picks the pair-discard threshold: 1 for integer-valued labels, 1e-6 otherwise.
pub fn default_min_delta(labels: &[f64]) -> f64 {
    if labels.iter().all(|v| v.fract() == 0.0) {
        PIXEL_MIN_DELTA
    } else {
        REAL_MIN_DELTA
    }
}

/// Dispatches on `cfg.method`.
pub fn estimate(ds: &Dataset, cfg: &EstimatorConfig) -> Result<SemanticDirection> {
    match cfg.method {
        Method::Basic => estimate_basic(ds, cfg),
        Method::Weighted => estimate_weighted(ds, cfg),
    }
}

/// Mean of `(w_i - w_j) / (u_il - u_jl)` over admissible pairs.
/// Any `conditioned` list in `cfg` is ignored.
pub fn estimate_basic(ds: &Dataset, cfg: &EstimatorConfig) -> Result<SemanticDirection> {
    let cfg = EstimatorConfig {
        method: Method::Basic,
        conditioned: Vec::new(),
        ..cfg.clone()
    };
    run(ds, &cfg)
}

/// Irrelevance-weighted mean; needs a non-empty `conditioned` list.
pub fn estimate_weighted(ds: &Dataset, cfg: &EstimatorConfig) -> Result<SemanticDirection> {
    let cfg = EstimatorConfig {
        method: Method::Weighted,
        ..cfg.clone()
    };
    run(ds, &cfg)
}

/// Weight of one pair: product of `exp(-|du_m / du_l|)` over conditioned columns.
pub fn pair_weight(du_target: f64, du_conditioned: &[f64]) -> f64 {
    du_conditioned
        .iter()
        .map(|dm| (-(dm / du_target).abs()).exp())
        .product()
}

/// Per-sample coefficients and total weight from the pair sweep.
struct PairSums {
    coeffs: Vec<f64>,
    weight_total: f64,
    admissible: usize,
}

struct Columns {
    target: Vec<f64>,
    conditioned: Vec<Vec<f64>>,
    min_delta: f64,
}

impl Columns {
    /// Contribution of pair `(i, j)`: `(weight, weight / du_l)`, or `None` if discarded.
    #[inline]
    fn term(&self, i: usize, j: usize, scratch: &mut Vec<f64>) -> Option<(f64, f64)> {
        let du = self.target[i] - self.target[j];
        if du.abs() < self.min_delta {
            return None;
        }
        scratch.clear();
        scratch.extend(self.conditioned.iter().map(|c| c[i] - c[j]));
        let w = pair_weight(du, scratch);
        Some((w, w / du))
    }

    fn sweep_sequential(&self, pairs: Option<&[(usize, usize)]>) -> PairSums {
        let n = self.target.len();
        let mut sums = PairSums {
            coeffs: vec![0.0; n],
            weight_total: 0.0,
            admissible: 0,
        };
        let mut scratch = Vec::with_capacity(self.conditioned.len());
        let mut visit = |i: usize, j: usize| {
            if let Some((w, c)) = self.term(i, j, &mut scratch) {
                sums.coeffs[i] += c;
                sums.coeffs[j] -= c;
                sums.weight_total += w;
                sums.admissible += 1;
            }
        };
        match pairs {
            Some(list) => list.iter().for_each(|&(i, j)| visit(i, j)),
            None => {
                for i in 0..n {
                    for j in i + 1..n {
                        visit(i, j);
                    }
                }
            }
        }
        sums
    }

    /// Row-parallel sweep over all pairs. Deterministic in value up to the
    /// floating-point reduction order chosen by the thread pool.
    fn sweep_parallel(&self) -> PairSums {
        let n = self.target.len();
        let empty = || PairSums {
            coeffs: vec![0.0; n],
            weight_total: 0.0,
            admissible: 0,
        };
        (0..n)
            .into_par_iter()
            .fold(empty, |mut acc, i| {
                let mut scratch = Vec::with_capacity(self.conditioned.len());
                let mut row = 0.0;
                for j in i + 1..n {
                    if let Some((w, c)) = self.term(i, j, &mut scratch) {
                        row += c;
                        acc.coeffs[j] -= c;
                        acc.weight_total += w;
                        acc.admissible += 1;
                    }
                }
                acc.coeffs[i] += row;
                acc
            })
            .reduce(empty, |mut a, b| {
                a.coeffs.iter_mut().zip(&b.coeffs).for_each(|(x, y)| *x += y);
                a.weight_total += b.weight_total;
                a.admissible += b.admissible;
                a
            })
    }
}

/// Seeded uniform subsample of `count` pairs out of all `n(n-1)/2`, in ascending order.
fn subsample_pairs(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, total, count.min(total)).into_vec();
    picked.sort_unstable();
    let mut out = Vec::with_capacity(picked.len());
    let (mut i, mut row_start) = (0usize, 0usize);
    for k in picked {
        while k >= row_start + (n - 1 - i) {
            row_start += n - 1 - i;
            i += 1;
        }
        out.push((i, i + 1 + (k - row_start)));
    }
    out
}

fn run(ds: &Dataset, cfg: &EstimatorConfig) -> Result<SemanticDirection> {
    cfg.validate(ds)?;
    let n = ds.len();
    if n < 2 {
        return Err(Error::NoAdmissiblePairs);
    }
    let cols = Columns {
        target: ds.labels_of(&cfg.target)?,
        conditioned: cfg
            .conditioned
            .iter()
            .map(|m| ds.labels_of(m))
            .collect::<Result<_>>()?,
        min_delta: cfg.min_delta,
    };

    let total_pairs = n * (n - 1) / 2;
    let sums = match cfg.max_pairs {
        Some(cap) if cap < total_pairs => {
            cols.sweep_sequential(Some(&subsample_pairs(n, cap, cfg.seed)))
        }
        _ if cfg.deterministic => cols.sweep_sequential(None),
        _ => cols.sweep_parallel(),
    };
    if sums.admissible == 0 {
        return Err(Error::NoAdmissiblePairs);
    }
    if sums.weight_total <= 0.0 {
        return Err(Error::WeightsUnderflow);
    }

    let (layers, dim) = ds.shape();
    let mut acc = LayeredLatentCode::zeros(layers, dim)?;
    for (sample, &alpha) in ds.samples().iter().zip(&sums.coeffs) {
        if alpha == 0.0 {
            continue;
        }
        for l in cfg.mask.iter() {
            for (a, w) in acc.row_mut(l).iter_mut().zip(sample.code.row(l)) {
                *a += alpha * w;
            }
        }
    }
    for l in cfg.mask.iter() {
        for a in acc.row_mut(l) {
            *a /= sums.weight_total;
        }
    }
    SemanticDirection::from_vector(cfg.target.clone(), acc, cfg.mask.clone())
}
