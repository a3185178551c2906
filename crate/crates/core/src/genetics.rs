//! Inheritance priors and the phenotype sampler used by micro fusion.
//!
//! Dominant phenotypes are genotype `AA` or `Aa` with equal probability;
//! recessive phenotypes are `aa`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InheritanceMode {
    Mendelian,
    Blend,
    SexInfluencedBaldness,
}

/// Which side of the threshold carries the dominant phenotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominantSide {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSource {
    Explicit(f64),
    Named(NamedThreshold),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedThreshold {
    DatasetMean,
}

impl ThresholdSource {
    pub const DATASET_MEAN: ThresholdSource = ThresholdSource::Named(NamedThreshold::DatasetMean);

    pub fn explicit(&self) -> Option<f64> {
        match self {
            ThresholdSource::Explicit(v) => Some(*v),
            ThresholdSource::Named(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phenotype {
    Dominant,
    Recessive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitRule {
    pub attribute: String,
    pub mode: InheritanceMode,
    /// `None` for blend mode and for traits without a known dominance law.
    pub dominant_side: Option<DominantSide>,
    pub threshold: ThresholdSource,
}

impl TraitRule {
    pub fn mendelian(attribute: &str, side: Option<DominantSide>) -> Self {
        Self {
            attribute: attribute.to_string(),
            mode: InheritanceMode::Mendelian,
            dominant_side: side,
            threshold: ThresholdSource::DATASET_MEAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidRule {
            attribute: self.attribute.clone(),
            reason: reason.to_string(),
        };
        if self.mode == InheritanceMode::Blend && self.dominant_side.is_some() {
            return Err(bad("blend mode has no dominant side"));
        }
        if let ThresholdSource::Explicit(v) = self.threshold {
            if !v.is_finite() {
                return Err(bad("threshold is not finite"));
            }
        }
        Ok(())
    }

    /// True when the rule carries a Mendelian dominance law.
    pub fn has_dominance_law(&self) -> bool {
        self.mode == InheritanceMode::Mendelian && self.dominant_side.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneticsRuleSet {
    pub rules: BTreeMap<String, TraitRule>,
    pub seed: u64,
}

impl GeneticsRuleSet {
    pub fn new(rules: impl IntoIterator<Item = TraitRule>, seed: u64) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in rules {
            r.validate()?;
            let name = r.attribute.clone();
            if map.insert(name.clone(), r).is_some() {
                return Err(Error::DuplicateId(name));
            }
        }
        Ok(Self { rules: map, seed })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in &self.rules {
            if name != &r.attribute {
                return Err(Error::InvalidRule {
                    attribute: name.clone(),
                    reason: format!("keyed under '{name}' but names '{}'", r.attribute),
                });
            }
            r.validate()?;
        }
        Ok(())
    }

    pub fn get(&self, attribute: &str) -> Option<&TraitRule> {
        self.rules.get(attribute)
    }
}

/// Built-in inheritance priors for the landmark attributes plus skin color
/// and baldness.
pub fn default_ruleset() -> GeneticsRuleSet {
    use DominantSide::*;
    let mut rules = vec![
        TraitRule::mendelian("eye_width", Some(Above)),
        TraitRule::mendelian("eye_length", Some(Above)),
        TraitRule::mendelian("nose_width", Some(Above)),
        TraitRule::mendelian("chin_sharpness", Some(Above)),
        TraitRule::mendelian("upper_lip_thickness", Some(Below)),
        TraitRule::mendelian("lower_lip_thickness", Some(Above)),
        TraitRule::mendelian("eyebrow_length", None),
        TraitRule::mendelian("mouth_width", None),
        TraitRule::mendelian("mouth_length", None),
    ];
    rules.push(TraitRule {
        attribute: "skin_color".into(),
        mode: InheritanceMode::Blend,
        dominant_side: None,
        threshold: ThresholdSource::DATASET_MEAN,
    });
    rules.push(TraitRule {
        attribute: "baldness".into(),
        mode: InheritanceMode::SexInfluencedBaldness,
        dominant_side: None,
        threshold: ThresholdSource::DATASET_MEAN,
    });
    GeneticsRuleSet::new(rules, 0).expect("built-in rules are valid")
}

/// Probability that the child shows the recessive phenotype.
pub fn offspring_recessive_probability(father: Phenotype, mother: Phenotype) -> f64 {
    use Phenotype::*;
    match (father, mother) {
        (Recessive, Recessive) => 1.0,
        // the dominant parent is Aa w.p. 1/2 and then passes a w.p. 1/2
        (Dominant, Recessive) | (Recessive, Dominant) => 0.25,
        (Dominant, Dominant) => 1.0 / 16.0,
    }
}

/// Number of `B` alleles, with prior weight, given a parent's phenotype.
fn baldness_genotypes(bald: bool, sex: Sex) -> &'static [(u8, f64)] {
    match (sex, bald) {
        (Sex::Male, true) => &[(1, 0.5), (2, 0.5)],
        (Sex::Male, false) => &[(0, 1.0)],
        (Sex::Female, true) => &[(2, 1.0)],
        (Sex::Female, false) => &[(0, 0.5), (1, 0.5)],
    }
}

/// Probability the child is bald: males need one `B`, females need `BB`.
/// Exact enumeration over parental genotypes and transmitted alleles.
pub fn baldness_probability(father_bald: bool, mother_bald: bool, child_sex: Sex) -> f64 {
    let needed = match child_sex {
        Sex::Male => 1,
        Sex::Female => 2,
    };
    let mut p = 0.0;
    for &(fb, fp) in baldness_genotypes(father_bald, Sex::Male) {
        for &(mb, mp) in baldness_genotypes(mother_bald, Sex::Female) {
            let pass_f = fb as f64 / 2.0;
            let pass_m = mb as f64 / 2.0;
            for (from_f, from_m) in [(1u8, 1u8), (1, 0), (0, 1), (0, 0)] {
                let pf = if from_f == 1 { pass_f } else { 1.0 - pass_f };
                let pm = if from_m == 1 { pass_m } else { 1.0 - pass_m };
                if from_f + from_m >= needed {
                    p += fp * mp * pf * pm;
                }
            }
        }
    }
    p
}

/// Dominant iff `value` lies strictly on the dominant side of `threshold`.
pub fn classify_value(value: f64, threshold: f64, side: DominantSide) -> Phenotype {
    let dominant = match side {
        DominantSide::Above => value > threshold,
        DominantSide::Below => value < threshold,
    };
    if dominant {
        Phenotype::Dominant
    } else {
        Phenotype::Recessive
    }
}

/// Classifies with the rule's explicit threshold.
pub fn classify_trait(value: f64, rule: &TraitRule) -> Result<Phenotype> {
    let side = match (rule.mode, rule.dominant_side) {
        (InheritanceMode::Mendelian, Some(side)) => side,
        _ => {
            return Err(Error::InvalidRule {
                attribute: rule.attribute.clone(),
                reason: "no Mendelian dominance law".into(),
            })
        }
    };
    let threshold = rule
        .threshold
        .explicit()
        .ok_or_else(|| Error::UnresolvedThreshold(rule.attribute.clone()))?;
    Ok(classify_value(value, threshold, side))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeDecision {
    pub attribute: String,
    pub father_phenotype: Phenotype,
    pub mother_phenotype: Phenotype,
    pub child_phenotype: Phenotype,
    pub probability_used: f64,
}

/// Draws the child's phenotype: recessive with the Mendelian probability.
/// Consumes exactly one uniform draw.
pub fn sample_phenotype<R: Rng + ?Sized>(
    father: Phenotype,
    mother: Phenotype,
    rule: &TraitRule,
    rng: &mut R,
) -> PhenotypeDecision {
    let p = offspring_recessive_probability(father, mother);
    let u: f64 = rng.random();
    PhenotypeDecision {
        attribute: rule.attribute.clone(),
        father_phenotype: father,
        mother_phenotype: mother,
        child_phenotype: if u < p {
            Phenotype::Recessive
        } else {
            Phenotype::Dominant
        },
        probability_used: p,
    }
}
