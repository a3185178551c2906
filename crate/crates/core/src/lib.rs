//! Semantic directions in layered latent codes: landmark labels, pairwise
//! difference estimators, Gram-Schmidt disentanglement and heredity-guided
//! fusion of two parent codes, checked against a synthetic linear model.

pub mod cli;
pub mod disentangle;
pub mod error;
pub mod estimator;
pub mod fusion;
pub mod genetics;
pub mod io;
pub mod labels;
pub mod latent;
pub mod oracle;
pub mod quadrature;

pub use disentangle::SemanticBasis;
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, Method, SemanticDirection};
pub use fusion::{FusionCase, MacroConfig, MacroMethod, MicroFusion, Parent};
pub use genetics::{GeneticsRuleSet, Phenotype, PhenotypeDecision, TraitRule};
pub use labels::{CodeRecord, LandmarkSet};
pub use latent::{Dataset, LayerMask, LayeredLatentCode, Sample};
pub use oracle::OracleSpec;
