//! Residual coupling and variance of the weighted estimator under a Gaussian
//! model for the label-difference ratio `x = du_m / du_l ~ N(b, sigma^2)`.
//!
//! The basic estimator's component along the conditioned direction has mean
//! `b`; the weighted estimator's has mean
//! `b' = E[x e^{-|x|}] / E[e^{-|x|}]`, evaluated here by quadrature.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breaks, Tolerance};

pub const PLOT_CSV_HEADER: &str = "b,sigma,b_prime,ratio,variance_ratio";

/// Half-width of the integration support in units of sigma.
const SUPPORT_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingAnalysis {
    pub b: f64,
    pub sigma: f64,
    pub b_prime: f64,
    /// `b' / b`.
    pub ratio: f64,
    /// `V' / V` with the weighted terms averaged over the pair count.
    pub variance_ratio: Option<f64>,
    /// `V' / V` with the weighted terms divided by the total weight.
    pub normalized_variance_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRatios {
    pub averaged: f64,
    pub self_normalized: f64,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// `b'` for any real `b`. Integrates in the standardized variable
/// `z = (x - b) / sigma` over `[-10, 10]`, split at the kink `x = 0`.
pub fn weighted_mean_quadrature(b: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !b.is_finite() {
        return Err(Error::InvalidArgument(format!("b must be finite, got {b}")));
    }
    let kink = [-b / sigma];
    let tol = Tolerance::default();
    let density = |z: f64| {
        let x = b + sigma * z;
        (-0.5 * z * z - x.abs()).exp()
    };
    let mass = integrate_with_breaks(density, -SUPPORT_SIGMAS, SUPPORT_SIGMAS, &kink, tol)?;
    let first = integrate_with_breaks(
        |z| (b + sigma * z) * density(z),
        -SUPPORT_SIGMAS,
        SUPPORT_SIGMAS,
        &kink,
        tol,
    )?;
    if mass.value.is_nan() || mass.value <= 0.0 {
        return Err(Error::QuadratureNonConvergent(format!(
            "vanishing normalizer at b={b}, sigma={sigma}"
        )));
    }
    Ok(first.value / mass.value)
}

/// `b'` and `b'/b` for `0 < b < 1`, `sigma > 0`.
pub fn bias_ratio_quadrature(b: f64, sigma: f64) -> Result<CouplingAnalysis> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidArgument(format!("b must lie in (0, 1), got {b}")));
    }
    let b_prime = weighted_mean_quadrature(b, sigma)?;
    Ok(CouplingAnalysis {
        b,
        sigma,
        b_prime,
        ratio: b_prime / b,
        variance_ratio: None,
        normalized_variance_ratio: None,
    })
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Monte Carlo variance of the conditioned-direction component, weighted
/// versus unweighted, over `replications` batches of `n_pairs` draws.
pub fn variance_ratio_monte_carlo<R: Rng + ?Sized>(
    b: f64,
    sigma: f64,
    n_pairs: usize,
    replications: usize,
    rng: &mut R,
) -> Result<VarianceRatios> {
    check_sigma(sigma)?;
    if n_pairs == 0 || replications < 2 {
        return Err(Error::InvalidArgument(
            "need n_pairs >= 1 and replications >= 2".into(),
        ));
    }
    let normal = Normal::new(b, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut plain = Vec::with_capacity(replications);
    let mut averaged = Vec::with_capacity(replications);
    let mut self_norm = Vec::with_capacity(replications);
    for _ in 0..replications {
        let (mut sx, mut sxw, mut sw) = (0.0, 0.0, 0.0);
        for _ in 0..n_pairs {
            let x: f64 = normal.sample(rng);
            let w = (-x.abs()).exp();
            sx += x;
            sxw += x * w;
            sw += w;
        }
        plain.push(sx / n_pairs as f64);
        averaged.push(sxw / n_pairs as f64);
        self_norm.push(sxw / sw);
    }
    let v = sample_variance(&plain);
    Ok(VarianceRatios {
        averaged: sample_variance(&averaged) / v,
        self_normalized: sample_variance(&self_norm) / v,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub b_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub n_pairs: usize,
    pub replications: usize,
    pub seed: u64,
}

/// 0.1, 0.2, ..., 0.9
pub fn default_b_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// 0.25, 0.5, ..., 4.0
pub fn default_sigma_grid() -> Vec<f64> {
    (1..=16).map(|i| i as f64 * 0.25).collect()
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            b_values: default_b_grid(),
            sigma_values: default_sigma_grid(),
            n_pairs: 200,
            replications: 500,
            seed: 0,
        }
    }
}

/// Generator for one grid cell; independent of evaluation order.
fn cell_rng(seed: u64, b_index: usize, sigma_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((b_index as u64) << 32) | sigma_index as u64);
    rng
}

/// Quadrature ratio and Monte Carlo variance ratio for every `(b, sigma)`
/// cell, `b`-major. Cells run in parallel; results do not depend on it.
pub fn bias_variance_grid(cfg: &GridConfig) -> Result<Vec<CouplingAnalysis>> {
    if cfg.b_values.is_empty() || cfg.sigma_values.is_empty() {
        return Err(Error::InvalidArgument("empty b or sigma grid".into()));
    }
    if cfg.replications < 100 {
        return Err(Error::InvalidArgument(format!(
            "replications must be at least 100, got {}",
            cfg.replications
        )));
    }
    let cells: Vec<(usize, usize)> = (0..cfg.b_values.len())
        .flat_map(|bi| (0..cfg.sigma_values.len()).map(move |si| (bi, si)))
        .collect();
    cells
        .par_iter()
        .map(|&(bi, si)| {
            let (b, sigma) = (cfg.b_values[bi], cfg.sigma_values[si]);
            let mut cell = bias_ratio_quadrature(b, sigma)?;
            let mut rng = cell_rng(cfg.seed, bi, si);
            let v = variance_ratio_monte_carlo(b, sigma, cfg.n_pairs, cfg.replications, &mut rng)?;
            cell.variance_ratio = Some(v.averaged);
            cell.normalized_variance_ratio = Some(v.self_normalized);
            Ok(cell)
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the plot-data table. Missing variance ratios are left empty.
pub fn write_plot_csv<W: Write>(rows: &[CouplingAnalysis], mut out: W) -> Result<()> {
    writeln!(out, "{PLOT_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(r.b),
            fmt_num(r.sigma),
            fmt_num(r.b_prime),
            fmt_num(r.ratio),
            r.variance_ratio.map(fmt_num).unwrap_or_default()
        )?;
    }
    Ok(())
}
