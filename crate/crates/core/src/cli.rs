//! Command-line front end. Every command reads its inputs from files, writes
//! its outputs to files (or stdout for tables) and is a pure function of the
//! inputs, flags and seed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::disentangle::{
    bias_variance_grid, calibrate, coupling_matrix, default_b_grid, default_sigma_grid,
    gram_schmidt, max_abs_off_diagonal_dot, principal_angles, write_plot_csv, GridConfig,
    SemanticBasis,
};
use crate::error::{Error, Result};
use crate::estimator::{default_min_delta, estimate, EstimatorConfig, Method};
use crate::fusion::{macro_fuse, micro_fuse, MacroConfig, MacroMethod, Parent, Shift};
use crate::genetics::default_ruleset;
use crate::io;
use crate::labels::{label_dataset, LabelOptions};
use crate::latent::{ablate_layers, LayerMask};
use crate::oracle::generate;

#[derive(Debug, Parser)]
#[command(name = "latent-heredity", version, about)]
pub struct Cli {
    /// JSON file with defaults for seed, parallel, mask and estimator options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Allow parallel reductions whose results may differ in the last bits.
    #[arg(long, global = true)]
    pub parallel: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attach landmark-derived attribute labels to latent codes.
    Labels(LabelsArgs),
    /// Estimate semantic directions from a labelled dataset.
    Estimate(EstimateArgs),
    /// Gram-Schmidt a basis, optionally calibrating thresholds on a dataset.
    Orthogonalize(OrthogonalizeArgs),
    /// Fuse two parent codes into a child code.
    Fuse(FuseArgs),
    /// Evaluation tables.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Sample a dataset and its true basis from a synthetic linear model.
    Synth(SynthArgs),
    /// Write the built-in inheritance rules as an editable template.
    Rules(RulesArgs),
}

#[derive(Debug, Args)]
pub struct LabelsArgs {
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub codes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Divide labels by the outer-eye-corner distance.
    #[arg(long)]
    pub interocular: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Basic,
    Weighted,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Target attribute; repeat for several directions.
    #[arg(long = "attribute", required = true)]
    pub attributes: Vec<String>,
    /// Conditioned attribute; repeat. Defaults to every other dataset attribute.
    #[arg(long = "condition")]
    pub conditions: Vec<String>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Latent layers, e.g. "2..11" or "0,3..4".
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OrthogonalizeArgs {
    #[arg(long)]
    pub basis: PathBuf,
    /// Comma-separated attribute order; defaults to file order.
    #[arg(long, value_delimiter = ',')]
    pub order: Vec<String>,
    /// Dataset used to set thresholds and spreads.
    #[arg(long)]
    pub calibrate: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParentArg {
    Father,
    Mother,
}

impl From<ParentArg> for Parent {
    fn from(p: ParentArg) -> Self {
        match p {
            ParentArg::Father => Parent::Father,
            ParentArg::Mother => Parent::Mother,
        }
    }
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub father: PathBuf,
    #[arg(long)]
    pub mother: PathBuf,
    #[arg(long)]
    pub basis: PathBuf,
    /// Inheritance rules; defaults to the built-in set.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Mother's share in the macro blend.
    #[arg(long, conflicts_with = "layer_split")]
    pub lambda: Option<f64>,
    /// Parent per resolution layer, e.g. "father,father,mother,...".
    #[arg(long, value_delimiter = ',', value_enum)]
    pub layer_split: Vec<ParentArg>,
    /// Basis holding the gender and age directions; defaults to --basis.
    #[arg(long)]
    pub shift_basis: Option<PathBuf>,
    #[arg(long, requires = "gender_amount")]
    pub gender_attribute: Option<String>,
    #[arg(long, requires = "gender_attribute")]
    pub gender_amount: Option<f64>,
    #[arg(long, value_enum, default_value = "mother")]
    pub gender_parent: ParentArg,
    #[arg(long, requires = "age_amount")]
    pub age_attribute: Option<String>,
    #[arg(long, requires = "age_attribute")]
    pub age_amount: Option<f64>,
    /// Skip the heredity step and write the macro code.
    #[arg(long)]
    pub macro_only: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Cosine of every estimated direction with every true direction.
    Recover {
        #[arg(long)]
        estimated: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise cosines between the directions of a basis.
    Coupling {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bias and variance ratios of the weighted estimator over a b/sigma grid.
    RatioGrid {
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        sigma: Vec<f64>,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One copy of a code per resolution layer with that layer zeroed.
    Ablate {
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Principal angles between the spans of two bases.
    Subspace {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of `--config`. Flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub parallel: Option<bool>,
    pub mask: Option<String>,
    pub method: Option<MethodArg>,
    pub min_delta: Option<f64>,
    pub max_pairs: Option<usize>,
    pub lambda: Option<f64>,
    pub n_pairs: Option<usize>,
    pub replications: Option<usize>,
}

struct Context {
    file: RunConfig,
    seed: Option<u64>,
    deterministic: bool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let file: RunConfig = match &cli.config {
            Some(path) => serde_json::from_str(&io::read_text(path)?)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
            None => RunConfig::default(),
        };
        let seed = cli.seed.or(file.seed);
        let deterministic = !(cli.parallel || file.parallel.unwrap_or(false));
        Ok(Self {
            file,
            seed,
            deterministic,
        })
    }

    fn require_seed(&self, what: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidConfig(format!("{what} samples randomly and needs --seed")))
    }
}

/// 3 for numerical failures, 2 for everything else.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Labels(a) => cmd_labels(a),
        Command::Estimate(a) => cmd_estimate(a, &ctx),
        Command::Orthogonalize(a) => cmd_orthogonalize(a),
        Command::Fuse(a) => cmd_fuse(a, &ctx),
        Command::Eval(e) => cmd_eval(e, &ctx),
        Command::Synth(a) => cmd_synth(a, &ctx),
        Command::Rules(a) => emit(a.out.as_deref(), &io::rules_to_string(&default_ruleset())?),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => io::write_text(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_labels(a: &LabelsArgs) -> Result<()> {
    let landmarks = io::read_landmarks(&a.landmarks)?;
    let codes = io::read_code_records(&a.codes)?;
    let opts = LabelOptions {
        interocular_normalize: a.interocular,
    };
    let ds = label_dataset(&codes, &landmarks, opts)?;
    io::write_dataset(&a.out, &ds)
}

fn cmd_estimate(a: &EstimateArgs, ctx: &Context) -> Result<()> {
    let ds = io::read_dataset(&a.dataset)?;
    let layers = ds.shape().0;
    let mask = match a.mask.as_ref().or(ctx.file.mask.as_ref()) {
        Some(text) => LayerMask::parse(text, layers)?,
        None => LayerMask::facial(layers)?,
    };
    let method = match a.method.or(ctx.file.method).unwrap_or(MethodArg::Weighted) {
        MethodArg::Basic => Method::Basic,
        MethodArg::Weighted => Method::Weighted,
    };
    let max_pairs = a.max_pairs.or(ctx.file.max_pairs);
    let seed = match max_pairs {
        Some(_) => ctx.require_seed("pair subsampling")?,
        None => ctx.seed.unwrap_or(0),
    };
    let mut directions = Vec::with_capacity(a.attributes.len());
    for target in &a.attributes {
        let conditioned: Vec<String> = if a.conditions.is_empty() {
            ds.attributes().into_iter().filter(|c| c != target).collect()
        } else {
            a.conditions.iter().filter(|c| *c != target).cloned().collect()
        };
        let min_delta = match a.min_delta.or(ctx.file.min_delta) {
            Some(v) => v,
            None => default_min_delta(&ds.labels_of(target)?),
        };
        let cfg = EstimatorConfig {
            method,
            target: target.clone(),
            conditioned,
            min_delta,
            max_pairs,
            mask: mask.clone(),
            seed,
            deterministic: ctx.deterministic,
        };
        directions.push(estimate(&ds, &cfg)?);
    }
    io::write_basis(&a.out, &SemanticBasis::new(directions)?)
}

fn cmd_orthogonalize(a: &OrthogonalizeArgs) -> Result<()> {
    let basis = io::read_basis(&a.basis)?;
    let order: Vec<usize> = if a.order.is_empty() {
        (0..basis.len()).collect()
    } else {
        a.order
            .iter()
            .map(|name| {
                basis
                    .directions
                    .iter()
                    .position(|d| d.attribute == *name)
                    .ok_or_else(|| Error::UnknownAttribute(name.clone()))
            })
            .collect::<Result<_>>()?
    };
    let mut ortho = gram_schmidt(&basis, &order)?;
    if let Some(path) = &a.calibrate {
        ortho = calibrate(&ortho, &io::read_dataset(path)?)?;
    }
    println!("max |<e_i, e_j>| = {:e}", max_abs_off_diagonal_dot(&ortho));
    io::write_basis(&a.out, &ortho)
}

fn shift(basis: &SemanticBasis, attribute: &str, amount: f64) -> Result<Shift> {
    let direction = basis
        .get(attribute)
        .cloned()
        .ok_or_else(|| Error::UnknownAttribute(attribute.to_string()))?;
    Ok(Shift { direction, amount })
}

const REPORT_ASSUMPTIONS: [&str; 6] = [
    "phenotypes are read from basis projections against per-attribute thresholds",
    "attributes without a dominance law are placed uniformly between the parents",
    "baldness and other sex-influenced traits are not tied to a direction and are placed uniformly between the parents",
    "skin color is blended to the parents' midpoint",
    "dominant parents are AA or Aa with equal probability; non-bald women are Bb or bb with equal probability",
    "label differences across pairs are modelled as Gaussian when judging residual coupling",
];

fn cmd_fuse(a: &FuseArgs, ctx: &Context) -> Result<()> {
    let father = io::read_code(&a.father)?;
    let mother = io::read_code(&a.mother)?;
    let basis = io::read_basis(&a.basis)?;
    let shift_basis = match &a.shift_basis {
        Some(path) => io::read_basis(path)?,
        None => basis.clone(),
    };
    let method = if a.layer_split.is_empty() {
        MacroMethod::Blend(a.lambda.or(ctx.file.lambda).unwrap_or(0.5))
    } else {
        MacroMethod::LayerSplit(a.layer_split.iter().map(|p| Parent::from(*p)).collect())
    };
    let gender_shift = match (&a.gender_attribute, a.gender_amount) {
        (Some(attr), Some(amount)) => Some((shift(&shift_basis, attr, amount)?, a.gender_parent.into())),
        _ => None,
    };
    let age_shift = match (&a.age_attribute, a.age_amount) {
        (Some(attr), Some(amount)) => Some(shift(&shift_basis, attr, amount)?),
        _ => None,
    };
    let cfg = MacroConfig {
        method,
        gender_shift,
        age_shift,
    };
    let child_macro = macro_fuse(&father, &mother, &cfg)?;
    if a.macro_only {
        return io::write_code(&a.out, &child_macro);
    }

    let rules = match &a.rules {
        Some(path) => io::read_rules(path)?,
        None => default_ruleset(),
    };
    let seed = ctx.require_seed("micro fusion")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fused = micro_fuse(&child_macro, &father, &mother, &basis, &rules, &mut rng)?;
    io::write_code(&a.out, &fused.child)?;
    if let Some(path) = &a.report {
        let report = io::FusionReport {
            seed,
            assumptions: REPORT_ASSUMPTIONS.iter().map(|s| s.to_string()).collect(),
            decisions: fused.decisions,
            traits: fused.traits,
        };
        io::write_text(path, &io::report_to_string(&report)?)?;
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn cmd_eval(e: &EvalCommand, ctx: &Context) -> Result<()> {
    match e {
        EvalCommand::Recover {
            estimated,
            truth,
            out,
        } => {
            let est = io::read_basis(estimated)?;
            let truth = io::read_basis(truth)?;
            let mut text = String::from("estimated,truth,cosine\n");
            for d in &est.directions {
                for t in &truth.directions {
                    writeln!(text, "{},{},{}", d.attribute, t.attribute, fmt(d.cosine(t)?)).unwrap();
                }
            }
            emit(out.as_deref(), &text)
        }
        EvalCommand::Coupling { basis, out } => {
            let basis = io::read_basis(basis)?;
            let names = basis.attributes();
            let mut text = format!("attribute,{}\n", names.join(","));
            for (name, row) in names.iter().zip(coupling_matrix(&basis)) {
                let cells: Vec<String> = row.into_iter().map(fmt).collect();
                writeln!(text, "{name},{}", cells.join(",")).unwrap();
            }
            emit(out.as_deref(), &text)
        }
        EvalCommand::RatioGrid {
            b,
            sigma,
            n_pairs,
            replications,
            out,
        } => {
            let defaults = GridConfig::default();
            let cfg = GridConfig {
                b_values: if b.is_empty() { default_b_grid() } else { b.clone() },
                sigma_values: if sigma.is_empty() { default_sigma_grid() } else { sigma.clone() },
                n_pairs: n_pairs.or(ctx.file.n_pairs).unwrap_or(defaults.n_pairs),
                replications: replications.or(ctx.file.replications).unwrap_or(defaults.replications),
                seed: ctx.require_seed("the variance ratio")?,
            };
            let rows = bias_variance_grid(&cfg)?;
            let mut buf = Vec::new();
            write_plot_csv(&rows, &mut buf)?;
            emit(out.as_deref(), &String::from_utf8(buf).expect("ASCII table"))
        }
        EvalCommand::Ablate { code, out_dir } => {
            let code = io::read_code(code)?;
            fs::create_dir_all(out_dir).map_err(|source| Error::File { path: out_dir.clone(), source })?;
            for r in 1..=code.layers() / 2 {
                let ablated = ablate_layers(&code, r)?;
                io::write_code(&out_dir.join(format!("resolution_{r:02}.json")), &ablated)?;
            }
            Ok(())
        }
        EvalCommand::Subspace { a, b, out } => {
            let angles = principal_angles(&io::read_basis(a)?, &io::read_basis(b)?)?;
            let mut text = String::from("index,angle\n");
            for (i, t) in angles.into_iter().enumerate() {
                writeln!(text, "{i},{}", fmt(t)).unwrap();
            }
            emit(out.as_deref(), &text)
        }
    }
}

fn cmd_synth(a: &SynthArgs, ctx: &Context) -> Result<()> {
    let mut spec = io::read_oracle_spec(&a.spec)?;
    if let Some(seed) = ctx.seed {
        spec.seed = seed;
    }
    let (ds, truth) = generate(&spec, a.n)?;
    io::write_dataset(&a.out, &ds)?;
    io::write_basis(&a.truth, &truth)
}
