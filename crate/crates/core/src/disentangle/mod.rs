//! Orthogonalization of estimated directions and analysis of the
//! irrelevance weighting.

mod bias;
mod orthogonalize;

pub use bias::{
    bias_ratio_quadrature, bias_variance_grid, default_b_grid, default_sigma_grid,
    variance_ratio_monte_carlo, weighted_mean_quadrature, write_plot_csv, CouplingAnalysis,
    GridConfig, VarianceRatios, PLOT_CSV_HEADER,
};
pub use orthogonalize::{
    calibrate, coupling_matrix, gram_schmidt, max_abs_off_diagonal_dot, principal_angles,
    span_reconstruction_error,
};

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::estimator::SemanticDirection;
use crate::latent::LayerMask;

/// Tolerances for calling a set of directions orthonormal.
pub const ORTHO_DOT_TOL: f64 = 1e-10;
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Ordered directions over one shared mask, plus per-attribute projection
/// thresholds and projection spreads once calibrated on a reference dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticBasis {
    pub directions: Vec<SemanticDirection>,
    pub orthonormal: bool,
    pub thresholds: BTreeMap<String, f64>,
    pub spreads: BTreeMap<String, f64>,
}

impl SemanticBasis {
    pub fn new(directions: Vec<SemanticDirection>) -> Result<Self> {
        let first = directions
            .first()
            .ok_or_else(|| Error::InvalidArgument("basis has no directions".into()))?;
        let mut names = BTreeSet::new();
        for d in &directions {
            first.vector.ensure_same_shape(&d.vector)?;
            if d.mask != first.mask {
                return Err(Error::MixedMasks);
            }
            if !names.insert(d.attribute.as_str()) {
                return Err(Error::DuplicateId(d.attribute.clone()));
            }
        }
        Ok(Self {
            directions,
            orthonormal: false,
            thresholds: BTreeMap::new(),
            spreads: BTreeMap::new(),
        })
    }

    pub fn mask(&self) -> &LayerMask {
        &self.directions[0].mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.directions[0].vector.shape()
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn attributes(&self) -> Vec<&str> {
        self.directions.iter().map(|d| d.attribute.as_str()).collect()
    }

    pub fn get(&self, attribute: &str) -> Option<&SemanticDirection> {
        self.directions.iter().find(|d| d.attribute == attribute)
    }

    /// Checks unit norms and pairwise orthogonality at the crate tolerances.
    pub fn verify_orthonormal(&self) -> bool {
        let mask = self.mask();
        self.directions
            .iter()
            .all(|d| (d.vector.masked_norm(mask) - 1.0).abs() <= UNIT_NORM_TOL)
            && max_abs_off_diagonal_dot(self) <= ORTHO_DOT_TOL
    }
}
