//! Macro fusion of two parent codes and heredity-guided micro fusion along an
//! orthonormal semantic basis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disentangle::SemanticBasis;
use crate::error::{Error, Result};
use crate::estimator::SemanticDirection;
use crate::genetics::{
    classify_value, sample_phenotype, DominantSide, GeneticsRuleSet, InheritanceMode, Phenotype,
    PhenotypeDecision, ThresholdSource, TraitRule,
};
use crate::latent::{resolution_rows, shift_along, LayeredLatentCode};

/// Step cap when pushing a projection across to the recessive side.
pub const MAX_RECESSIVE_STEPS: usize = 100;
/// Step size as a fraction of the attribute's projection spread.
pub const STEP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parent {
    Father,
    Mother,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shift {
    pub direction: SemanticDirection,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacroMethod {
    /// `(1 - lambda) * father + lambda * mother`.
    Blend(f64),
    /// Parent owning each resolution layer, in order `1..=L/2`.
    LayerSplit(Vec<Parent>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroConfig {
    pub method: MacroMethod,
    /// Applied to one parent before mixing.
    pub gender_shift: Option<(Shift, Parent)>,
    /// Applied to the mixed code.
    pub age_shift: Option<Shift>,
}

impl MacroConfig {
    pub fn blend(lambda: f64) -> Self {
        Self {
            method: MacroMethod::Blend(lambda),
            gender_shift: None,
            age_shift: None,
        }
    }
}

pub fn macro_fuse(
    father: &LayeredLatentCode,
    mother: &LayeredLatentCode,
    cfg: &MacroConfig,
) -> Result<LayeredLatentCode> {
    father.ensure_same_shape(mother)?;
    let (mut father, mut mother) = (father.clone(), mother.clone());
    if let Some((shift, parent)) = &cfg.gender_shift {
        let target = match parent {
            Parent::Father => &mut father,
            Parent::Mother => &mut mother,
        };
        *target = shift_along(target, &shift.direction, shift.amount)?;
    }

    let mixed = match &cfg.method {
        MacroMethod::Blend(lambda) => {
            let lambda = *lambda;
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::InvalidArgument(format!(
                    "lambda must lie in [0, 1], got {lambda}"
                )));
            }
            if lambda == 0.0 {
                father
            } else if lambda == 1.0 {
                mother
            } else {
                let data = father
                    .as_slice()
                    .iter()
                    .zip(mother.as_slice())
                    .map(|(f, m)| (1.0 - lambda) * f + lambda * m)
                    .collect();
                LayeredLatentCode::from_vec(father.layers(), father.dim(), data)?
            }
        }
        MacroMethod::LayerSplit(assignment) => {
            let layers = father.layers();
            if layers % 2 != 0 || assignment.len() != layers / 2 {
                return Err(Error::InvalidArgument(format!(
                    "layer split needs one parent per resolution layer ({} for {layers} layers), got {}",
                    layers / 2,
                    assignment.len()
                )));
            }
            let mut out = father.clone();
            for (r, parent) in assignment.iter().enumerate() {
                if *parent == Parent::Mother {
                    for row in resolution_rows(r + 1, layers)? {
                        out.row_mut(row).copy_from_slice(mother.row(row));
                    }
                }
            }
            out
        }
    };

    match &cfg.age_shift {
        Some(shift) => shift_along(&mixed, &shift.direction, shift.amount),
        None => Ok(mixed),
    }
}

/// A code split into its basis projections and the orthogonal remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionDecomposition {
    pub residual: LayeredLatentCode,
    /// `(attribute, projection)` in basis order.
    pub projections: Vec<(String, f64)>,
}

impl FusionDecomposition {
    pub fn projection(&self, attribute: &str) -> Option<f64> {
        self.projections
            .iter()
            .find(|(a, _)| a == attribute)
            .map(|(_, p)| *p)
    }
}

fn require_orthonormal(basis: &SemanticBasis) -> Result<()> {
    if !basis.orthonormal || !basis.verify_orthonormal() {
        return Err(Error::NotOrthonormal);
    }
    Ok(())
}

pub fn decompose(code: &LayeredLatentCode, basis: &SemanticBasis) -> Result<FusionDecomposition> {
    require_orthonormal(basis)?;
    let projections = basis
        .directions
        .iter()
        .map(|d| Ok((d.attribute.clone(), d.project(code)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut residual = code.clone();
    for (d, (_, p)) in basis.directions.iter().zip(&projections) {
        for l in basis.mask().iter() {
            for (r, n) in residual.row_mut(l).iter_mut().zip(d.vector.row(l)) {
                *r -= p * n;
            }
        }
    }
    Ok(FusionDecomposition {
        residual,
        projections,
    })
}

/// `residual + sum_l p_l n_l`; rows outside the basis mask are copied.
pub fn resynthesize(dec: &FusionDecomposition, basis: &SemanticBasis) -> Result<LayeredLatentCode> {
    let matches = dec.projections.len() == basis.len()
        && dec
            .projections
            .iter()
            .zip(&basis.directions)
            .all(|((a, _), d)| *a == d.attribute);
    if !matches {
        return Err(Error::InvalidArgument(
            "decomposition does not match the basis".into(),
        ));
    }
    dec.residual.ensure_same_shape(&basis.directions[0].vector)?;
    let mut out = dec.residual.clone();
    for (d, (_, p)) in basis.directions.iter().zip(&dec.projections) {
        for l in basis.mask().iter() {
            for (o, n) in out.row_mut(l).iter_mut().zip(d.vector.row(l)) {
                *o += p * n;
            }
        }
    }
    Ok(out)
}

/// Which inheritance branch set a projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionCase {
    /// One dominant and one recessive parent: copy the matching parent.
    CopyParent,
    /// Both dominant, recessive child: step past the threshold.
    CrossToRecessive,
    /// Uniform between the parents' projections.
    WithinParents,
    /// Midpoint of the parents' projections.
    Blend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitOutcome {
    pub attribute: String,
    pub case: FusionCase,
    pub threshold: Option<f64>,
    pub father_projection: f64,
    pub mother_projection: f64,
    pub child_before: f64,
    pub child_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroFusion {
    pub child: LayeredLatentCode,
    pub decisions: Vec<PhenotypeDecision>,
    pub traits: Vec<TraitOutcome>,
}

/// Threshold for `rule` in projection space: explicit, else the basis calibration.
fn resolve_threshold(rule: &TraitRule, basis: &SemanticBasis) -> Result<f64> {
    match rule.threshold {
        ThresholdSource::Explicit(v) => Ok(v),
        ThresholdSource::Named(_) => basis
            .thresholds
            .get(&rule.attribute)
            .copied()
            .ok_or_else(|| Error::UnresolvedThreshold(rule.attribute.clone())),
    }
}

fn uniform_between<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let u: f64 = rng.random();
    (lo + (hi - lo) * u).clamp(lo, hi)
}

/// Moves each basis projection of `child_macro` according to the parents'
/// phenotypes and the inheritance rules, then resynthesizes.
///
/// Phenotypes are read from projections against per-attribute thresholds.
/// Directions are visited in basis order; the generator is consumed once per
/// phenotype draw and once per uniform placement.
pub fn micro_fuse<R: Rng + ?Sized>(
    child_macro: &LayeredLatentCode,
    father: &LayeredLatentCode,
    mother: &LayeredLatentCode,
    basis: &SemanticBasis,
    rules: &GeneticsRuleSet,
    rng: &mut R,
) -> Result<MicroFusion> {
    child_macro.ensure_same_shape(father)?;
    child_macro.ensure_same_shape(mother)?;
    let mut child = decompose(child_macro, basis)?;
    let dec_f = decompose(father, basis)?;
    let dec_m = decompose(mother, basis)?;

    let mut decisions = Vec::new();
    let mut traits = Vec::with_capacity(basis.len());
    for (k, d) in basis.directions.iter().enumerate() {
        let attribute = d.attribute.as_str();
        let (pf, pm, pc) = (dec_f.projections[k].1, dec_m.projections[k].1, child.projections[k].1);
        let rule = rules.get(attribute);

        let (case, threshold, value) = match rule {
            Some(rule) if rule.mode == InheritanceMode::Blend => (FusionCase::Blend, None, 0.5 * (pf + pm)),
            Some(rule) if rule.has_dominance_law() => {
                let side = rule.dominant_side.expect("dominance law has a side");
                let tau = resolve_threshold(rule, basis)?;
                let (ff, mf) = (classify_value(pf, tau, side), classify_value(pm, tau, side));
                let decision = sample_phenotype(ff, mf, rule, rng);
                let drawn = decision.child_phenotype;
                decisions.push(decision);
                use Phenotype::*;
                let (case, value) = match (ff, mf, drawn) {
                    (Dominant, Recessive, _) | (Recessive, Dominant, _) => {
                        let value = if ff == drawn { pf } else { pm };
                        (FusionCase::CopyParent, value)
                    }
                    (Dominant, Dominant, Recessive) => {
                        let value = cross_to_recessive(attribute, pf, pm, tau, side, basis)?;
                        (FusionCase::CrossToRecessive, value)
                    }
                    _ => (FusionCase::WithinParents, uniform_between(pf, pm, rng)),
                };
                (case, Some(tau), value)
            }
            // no rule, no dominance law, or a law not tied to a direction
            _ => (FusionCase::WithinParents, None, uniform_between(pf, pm, rng)),
        };
        child.projections[k].1 = value;
        traits.push(TraitOutcome {
            attribute: attribute.to_string(),
            case,
            threshold,
            father_projection: pf,
            mother_projection: pm,
            child_before: pc,
            child_after: value,
        });
    }

    Ok(MicroFusion {
        child: resynthesize(&child, basis)?,
        decisions,
        traits,
    })
}

/// Starts at the dominant parent closer to the threshold and steps toward the
/// recessive side until the projection classifies as recessive.
fn cross_to_recessive(
    attribute: &str,
    pf: f64,
    pm: f64,
    tau: f64,
    side: DominantSide,
    basis: &SemanticBasis,
) -> Result<f64> {
    let spread = basis
        .spreads
        .get(attribute)
        .copied()
        .ok_or_else(|| Error::UnresolvedThreshold(format!("{attribute} (projection spread)")))?;
    let delta = STEP_FRACTION * spread;
    let start = if (pf - tau).abs() <= (pm - tau).abs() { pf } else { pm };
    let toward_recessive = match side {
        DominantSide::Above => -1.0,
        DominantSide::Below => 1.0,
    };
    (1..=MAX_RECESSIVE_STEPS)
        .map(|k| start + toward_recessive * k as f64 * delta)
        .find(|p| classify_value(*p, tau, side) == Phenotype::Recessive)
        .ok_or_else(|| Error::StepCapExceeded(attribute.to_string()))
}
