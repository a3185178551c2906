//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use latent_heredity::disentangle::{
    bias_ratio_quadrature, bias_variance_grid, calibrate, default_b_grid, default_sigma_grid,
    gram_schmidt, principal_angles, GridConfig, SemanticBasis,
};
use latent_heredity::estimator::{
    estimate_basic, estimate_weighted, EstimatorConfig, SemanticDirection, PIXEL_MIN_DELTA,
};
use latent_heredity::fusion::{decompose, macro_fuse, micro_fuse, resynthesize, MacroConfig};
use latent_heredity::genetics::{
    baldness_probability, sample_phenotype, DominantSide, GeneticsRuleSet, InheritanceMode,
    Phenotype, Sex, ThresholdSource, TraitRule,
};
use latent_heredity::io;
use latent_heredity::labels::{label_dataset, LabelOptions};
use latent_heredity::latent::{LayerMask, LayeredLatentCode};
use latent_heredity::oracle::{generate, OracleSpec};
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.2}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

// 1 ------------------------------------------------------------------------

fn direction_recovery() -> Outcome {
    let start = Instant::now();
    let spec = OracleSpec::independent(4, 16, 4, 7).with_pixel_labels(50.0, 10.0);
    let (ds, truth) = generate(&spec, 500).unwrap();
    let mask = spec.mask().unwrap();
    let mut worst = f64::INFINITY;
    for t in &truth.directions {
        let cfg = EstimatorConfig::basic(t.attribute.clone(), mask.clone()).with_min_delta(PIXEL_MIN_DELTA);
        let est = estimate_basic(&ds, &cfg).unwrap();
        worst = worst.min(est.cosine(t).unwrap());
    }
    let (fast, time) = within(start, Duration::from_secs(5));
    outcome(worst >= 0.99 && fast, format!("min cosine {worst:.5} (>= 0.99), {time}"))
}

// 2 ------------------------------------------------------------------------

/// Self-normalized weighted mean of N(b, sigma^2) draws and its delta-method
/// standard error.
fn weighted_mean_monte_carlo(b: f64, sigma: f64, n: usize, seed: u64) -> (f64, f64) {
    let normal = Normal::new(b, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s_w, mut s_xw, mut s_w2, mut s_xw2, mut s_x2w2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let x: f64 = normal.sample(&mut rng);
        let w = (-x.abs()).exp();
        s_w += w;
        s_xw += x * w;
        s_w2 += w * w;
        s_xw2 += x * w * w;
        s_x2w2 += x * x * w * w;
    }
    let r = s_xw / s_w;
    let resid = s_x2w2 - 2.0 * r * s_xw2 + r * r * s_w2;
    (r, resid.sqrt() / s_w)
}

fn bias_ratio() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut max_ratio = f64::NEG_INFINITY;
    for &b in &default_b_grid() {
        for &sigma in &default_sigma_grid() {
            let r = bias_ratio_quadrature(b, sigma).unwrap().ratio;
            max_ratio = max_ratio.max(r);
            if r.is_nan() || r >= 1.0 {
                failures.push(format!("ratio {r} at b={b} sigma={sigma}"));
            }
        }
        let sigmas: Vec<f64> = (0..20).map(|i| 0.25 + 3.75 * i as f64 / 19.0).collect();
        let ratios: Vec<f64> = sigmas
            .iter()
            .map(|&s| bias_ratio_quadrature(b, s).unwrap().ratio)
            .collect();
        if !ratios.windows(2).all(|w| w[1] < w[0]) {
            failures.push(format!("not decreasing in sigma at b={b}"));
        }
        let tiny = bias_ratio_quadrature(b, 1e-4).unwrap().ratio;
        if (tiny - 1.0).abs() > 1e-3 {
            failures.push(format!("sigma=1e-4 ratio {tiny} at b={b}"));
        }
    }
    let quad = bias_ratio_quadrature(0.5, 1.0).unwrap().b_prime;
    let (mc, se) = weighted_mean_monte_carlo(0.5, 1.0, 10_000_000, 2);
    let z = (quad - mc).abs() / se;
    if z > 3.0 {
        failures.push(format!("quadrature {quad} vs Monte Carlo {mc} is {z:.2} SE"));
    }
    let (fast, time) = within(start, Duration::from_secs(60));
    let detail = format!(
        "max b'/b {max_ratio:.4}, MC gap {z:.2} SE, {time}{}",
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    outcome(failures.is_empty() && fast, detail)
}

// 3 ------------------------------------------------------------------------

fn variance_ratio() -> Outcome {
    let start = Instant::now();
    let cfg = GridConfig {
        seed: 1,
        ..GridConfig::default()
    };
    let cells = bias_variance_grid(&cfg).unwrap();
    let worst = cells
        .iter()
        .max_by(|a, b| a.variance_ratio.unwrap().total_cmp(&b.variance_ratio.unwrap()))
        .unwrap();
    let v = worst.variance_ratio.unwrap();
    let (fast, time) = within(start, Duration::from_secs(120));
    outcome(
        v < 1.0 && fast && cells.iter().all(|c| c.sigma >= 0.25),
        format!(
            "max V'/V {v:.4} at b={} sigma={} over {} cells, {time}",
            worst.b,
            worst.sigma,
            cells.len()
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn decoupling() -> Outcome {
    let mut wins = 0;
    let (mut sum_basic, mut sum_weighted) = (0.0, 0.0);
    for rep in 0..100u64 {
        let spec = OracleSpec::independent(4, 16, 2, 1000 + rep)
            .with_pixel_labels(50.0, 10.0)
            .with_correlation(0, 1, 0.6);
        let (ds, truth) = generate(&spec, 1000).unwrap();
        let mask = spec.mask().unwrap();
        let other = &truth.directions[1];
        let basic = EstimatorConfig::basic("attr0", mask.clone()).with_min_delta(PIXEL_MIN_DELTA);
        let weighted = EstimatorConfig::weighted("attr0", vec!["attr1".into()], mask)
            .with_min_delta(PIXEL_MIN_DELTA);
        let cb = estimate_basic(&ds, &basic).unwrap().cosine(other).unwrap().abs();
        let cw = estimate_weighted(&ds, &weighted).unwrap().cosine(other).unwrap().abs();
        sum_basic += cb;
        sum_weighted += cw;
        if cw < cb {
            wins += 1;
        }
    }
    outcome(
        wins >= 95,
        format!(
            "weighted less coupled in {wins}/100 (>= 95); mean |cos| basic {:.3}, weighted {:.3}",
            sum_basic / 100.0,
            sum_weighted / 100.0
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn skewed_basis(layers: usize, dim: usize, k: usize, seed: u64) -> SemanticBasis {
    let mask = LayerMask::facial(layers).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let shared: Vec<f64> = (0..layers * dim).map(|_| normal.sample(&mut rng)).collect();
    let dirs = (0..k)
        .map(|i| {
            let mut data = vec![0.0; layers * dim];
            for l in mask.iter() {
                for d in 0..dim {
                    let g: f64 = normal.sample(&mut rng);
                    data[l * dim + d] = g + 0.7 * shared[l * dim + d];
                }
            }
            let v = LayeredLatentCode::from_vec(layers, dim, data).unwrap();
            SemanticDirection::from_vector(format!("d{i}"), v, mask.clone()).unwrap()
        })
        .collect();
    SemanticBasis::new(dirs).unwrap()
}

fn flat_dot(a: &LayeredLatentCode, b: &LayeredLatentCode) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn orthogonalization() -> Outcome {
    let basis = skewed_basis(18, 16, 5, 5);
    let identity: Vec<usize> = (0..5).collect();
    let reference = gram_schmidt(&basis, &identity).unwrap();
    let (mut max_dot, mut max_norm_err, mut max_angle) = (0.0f64, 0.0f64, 0.0f64);
    let mut perm = identity.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let ortho = gram_schmidt(&basis, &perm).unwrap();
        for (i, a) in ortho.directions.iter().enumerate() {
            max_norm_err = max_norm_err.max((flat_dot(&a.vector, &a.vector).sqrt() - 1.0).abs());
            for b in &ortho.directions[..i] {
                max_dot = max_dot.max(flat_dot(&a.vector, &b.vector).abs());
            }
        }
        let angles = principal_angles(&reference, &ortho).unwrap();
        max_angle = angles.into_iter().fold(max_angle, f64::max);
    }
    outcome(
        max_dot <= 1e-10 && max_norm_err <= 1e-12 && max_angle < 1e-8,
        format!("max |dot| {max_dot:.1e}, max |norm-1| {max_norm_err:.1e}, max principal angle {max_angle:.1e}"),
    )
}

// 6 ------------------------------------------------------------------------

/// Child baldness by enumerating parental genotypes and one allele from each.
fn baldness_oracle(father_bald: bool, mother_bald: bool, child_male: bool) -> Ratio<i64> {
    let father: &[(&str, Ratio<i64>)] = if father_bald {
        &[("Bb", Ratio::new(1, 2)), ("BB", Ratio::new(1, 2))]
    } else {
        &[("bb", Ratio::new(1, 1))]
    };
    let mother: &[(&str, Ratio<i64>)] = if mother_bald {
        &[("BB", Ratio::new(1, 1))]
    } else {
        &[("Bb", Ratio::new(1, 2)), ("bb", Ratio::new(1, 2))]
    };
    let mut p = Ratio::new(0, 1);
    for (fg, fp) in father {
        for (mg, mp) in mother {
            for fa in fg.chars() {
                for ma in mg.chars() {
                    let b_count = [fa, ma].iter().filter(|c| **c == 'B').count();
                    let bald = if child_male { b_count >= 1 } else { b_count == 2 };
                    if bald {
                        p += fp * mp * Ratio::new(1, 4);
                    }
                }
            }
        }
    }
    p
}

fn mendelian() -> Outcome {
    let rule = TraitRule::mendelian("eye_width", Some(DominantSide::Above));
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rate = |f, m| {
        let n = (0..draws)
            .filter(|_| sample_phenotype(f, m, &rule, &mut rng).child_phenotype == Phenotype::Recessive)
            .count();
        n as f64 / draws as f64
    };
    let dr = rate(Phenotype::Dominant, Phenotype::Recessive);
    let dd = rate(Phenotype::Dominant, Phenotype::Dominant);
    let mut exact = 0;
    for fb in [false, true] {
        for mb in [false, true] {
            for (male, sex) in [(true, Sex::Male), (false, Sex::Female)] {
                let o = baldness_oracle(fb, mb, male);
                if baldness_probability(fb, mb, sex) == *o.numer() as f64 / *o.denom() as f64 {
                    exact += 1;
                }
            }
        }
    }
    outcome(
        (dr - 0.25).abs() <= 0.01 && (dd - 1.0 / 16.0).abs() <= 0.005 && exact == 8,
        format!("dom x rec {dr:.4} (0.25 +- 0.01), dom x dom {dd:.4} (0.0625 +- 0.005), baldness exact {exact}/8"),
    )
}

// 7 ------------------------------------------------------------------------

fn fusion_setup() -> (Vec<LayeredLatentCode>, SemanticBasis, GeneticsRuleSet) {
    let mut spec = OracleSpec::independent(18, 16, 4, 11).with_pixel_labels(50.0, 10.0);
    spec.active_layers = Some((2..=11).collect());
    spec.noise_std = 1.0;
    spec.attributes = vec![
        "eye_width".into(),
        "upper_lip_thickness".into(),
        "mouth_width".into(),
        "skin_color".into(),
    ];
    let (ds, truth) = generate(&spec, 200).unwrap();
    let basis = calibrate(&truth, &ds).unwrap();
    let mut rules: Vec<TraitRule> = vec![
        TraitRule::mendelian("eye_width", Some(DominantSide::Above)),
        TraitRule::mendelian("upper_lip_thickness", Some(DominantSide::Below)),
        TraitRule::mendelian("mouth_width", None),
    ];
    rules.push(TraitRule {
        attribute: "skin_color".into(),
        mode: InheritanceMode::Blend,
        dominant_side: None,
        threshold: ThresholdSource::DATASET_MEAN,
    });
    let codes = ds.samples().iter().map(|s| s.code.clone()).collect();
    (codes, basis, GeneticsRuleSet::new(rules, 0).unwrap())
}

fn bits(c: &LayeredLatentCode) -> Vec<u64> {
    c.as_slice().iter().map(|v| v.to_bits()).collect()
}

fn max_abs_diff(a: &LayeredLatentCode, b: &LayeredLatentCode) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn run_cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_latent-heredity"))
        .current_dir(dir)
        .args(args)
        .status()
        .unwrap();
    assert!(status.success(), "{args:?} failed");
}

/// synth -> estimate -> orthogonalize -> fuse; returns every output file.
fn pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut spec = OracleSpec::independent(18, 8, 3, 4).with_pixel_labels(50.0, 10.0);
    spec.attributes = vec!["eye_width".into(), "nose_width".into(), "skin_color".into()];
    spec.active_layers = Some((2..=11).collect());
    spec.noise_std = 0.5;
    std::fs::write(dir.join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    run_cli(dir, &["synth", "--spec", "spec.json", "--n", "120", "--out", "data.jsonl", "--truth", "truth.json"]);
    run_cli(
        dir,
        &["estimate", "--dataset", "data.jsonl", "--attribute", "eye_width", "--attribute", "nose_width",
          "--attribute", "skin_color", "--method", "weighted", "--out", "est.json"],
    );
    run_cli(dir, &["orthogonalize", "--basis", "est.json", "--calibrate", "data.jsonl", "--out", "ortho.json"]);
    let data = io::read_dataset(&dir.join("data.jsonl")).unwrap();
    io::write_code(&dir.join("father.json"), &data.samples()[0].code).unwrap();
    io::write_code(&dir.join("mother.json"), &data.samples()[1].code).unwrap();
    run_cli(
        dir,
        &["fuse", "--father", "father.json", "--mother", "mother.json", "--basis", "ortho.json",
          "--seed", "9", "--out", "child.json", "--report", "report.json"],
    );
    ["data.jsonl", "truth.json", "est.json", "ortho.json", "child.json", "report.json"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

fn fusion_identities() -> Outcome {
    let (codes, basis, rules) = fusion_setup();
    let mask = basis.mask().clone();

    let round_trip = codes
        .iter()
        .map(|c| max_abs_diff(&resynthesize(&decompose(c, &basis).unwrap(), &basis).unwrap(), c))
        .fold(0.0, f64::max);

    let (father, mother) = (&codes[0], &codes[1]);
    let endpoints = bits(&macro_fuse(father, mother, &MacroConfig::blend(0.0)).unwrap()) == bits(father)
        && bits(&macro_fuse(father, mother, &MacroConfig::blend(1.0)).unwrap()) == bits(mother);

    let (mut residual_err, mut outside_exact) = (0.0f64, true);
    for (i, pair) in codes.chunks(2).take(20).enumerate() {
        let child_macro = macro_fuse(&pair[0], &pair[1], &MacroConfig::blend(0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let micro = micro_fuse(&child_macro, &pair[0], &pair[1], &basis, &rules, &mut rng).unwrap();
        let before = decompose(&child_macro, &basis).unwrap().residual;
        let after = decompose(&micro.child, &basis).unwrap().residual;
        residual_err = residual_err.max(max_abs_diff(&before, &after));
        for l in (0..child_macro.layers()).filter(|l| !mask.contains(*l)) {
            let a: Vec<u64> = micro.child.row(l).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = child_macro.row(l).iter().map(|v| v.to_bits()).collect();
            outside_exact &= a == b;
        }
    }

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let deterministic = pipeline(a.path()) == pipeline(b.path());

    outcome(
        round_trip <= 1e-9 && endpoints && residual_err <= 1e-9 && outside_exact && deterministic,
        format!(
            "round trip {round_trip:.1e}, endpoints bit-exact {endpoints}, residual drift {residual_err:.1e}, \
             unmasked layers bit-exact {outside_exact}, pipeline byte-identical {deterministic}"
        ),
    )
}

// 8 ------------------------------------------------------------------------

/// Mean pair distances computed independently with Python's `math.hypot`.
const FIXTURE_LABELS: [(&str, [(&str, f64); 9]); 3] = [
    ("face_a", [
        ("eyebrow_length", 161.85911620939623),
        ("eye_width", 198.37760058130522),
        ("eye_length", 124.5383707525203),
        ("nose_width", 71.8245870147301),
        ("upper_lip_thickness", 74.04621027882064),
        ("lower_lip_thickness", 154.04507679642916),
        ("mouth_width", 95.12572960897569),
        ("mouth_length", 128.1076207725364),
        ("chin_sharpness", 155.49333961609477),
    ]),
    ("face_b", [
        ("eyebrow_length", 229.30221405944172),
        ("eye_width", 60.98636074595584),
        ("eye_length", 133.04246666682934),
        ("nose_width", 110.19932056385737),
        ("upper_lip_thickness", 143.2021245660607),
        ("lower_lip_thickness", 142.03724815224314),
        ("mouth_width", 76.63922972501628),
        ("mouth_length", 222.43257405335217),
        ("chin_sharpness", 161.76738236971192),
    ]),
    ("face_c", [
        ("eyebrow_length", 133.859579705977),
        ("eye_width", 91.14112963473475),
        ("eye_length", 107.23171613332318),
        ("nose_width", 105.1037738246187),
        ("upper_lip_thickness", 181.34699146121284),
        ("lower_lip_thickness", 191.81145762012807),
        ("mouth_width", 158.33488822092133),
        ("mouth_length", 35.4400902933387),
        ("chin_sharpness", 254.66262288000792),
    ]),
];

fn labeling() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let landmarks = io::read_landmarks(&fixtures.join("landmarks.jsonl")).unwrap();
    let codes = io::read_code_records(&fixtures.join("codes.jsonl")).unwrap();
    let ds = label_dataset(&codes, &landmarks, LabelOptions::default()).unwrap();
    let mut worst = 0.0f64;
    let mut complete = true;
    for (sample, (id, expected)) in ds.samples().iter().zip(FIXTURE_LABELS) {
        assert_eq!(sample.id, id);
        complete &= sample.labels.len() == 9;
        for (name, value) in expected {
            match sample.labels.get(name) {
                Some(v) => worst = worst.max((v - value).abs()),
                None => complete = false,
            }
        }
    }
    outcome(
        worst <= 1e-9 && complete && ds.len() == 3,
        format!("max label error {worst:.1e} (<= 1e-9), nine attributes present {complete}"),
    )
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("direction recovery", direction_recovery),
        ("bias ratio", bias_ratio),
        ("variance ratio", variance_ratio),
        ("decoupling effect", decoupling),
        ("orthogonalization", orthogonalization),
        ("mendelian probabilities", mendelian),
        ("fusion identities", fusion_identities),
        ("labeling", labeling),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
