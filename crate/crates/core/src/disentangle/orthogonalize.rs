use nalgebra::DMatrix;

use super::{SemanticBasis, ORTHO_DOT_TOL};
use crate::error::{Error, Result};
use crate::estimator::SemanticDirection;
use crate::latent::{dot, vector_view, Dataset, LayeredLatentCode};

/// Residual norms below this fraction of the input norm count as dependent.
const DEPENDENCE_TOL: f64 = 1e-8;

fn flat(d: &SemanticDirection) -> Vec<f64> {
    vector_view(&d.vector, &d.mask).expect("direction mask fits its vector")
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

fn max_off_diagonal(vs: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..vs.len() {
        for j in 0..i {
            worst = worst.max(dot(&vs[i], &vs[j]).abs());
        }
    }
    worst
}

/// Largest `|<n_i, n_j>|` over distinct pairs, on masked coordinates.
pub fn max_abs_off_diagonal_dot(basis: &SemanticBasis) -> f64 {
    let vs: Vec<Vec<f64>> = basis.directions.iter().map(flat).collect();
    max_off_diagonal(&vs)
}

/// Classical Gram-Schmidt in the given order, followed by one
/// re-orthogonalization sweep if any pairwise dot exceeds 1e-10.
///
/// Output directions are listed in processing order, each unit-normalized;
/// `magnitude` becomes the input magnitude times the relative residual norm.
/// Thresholds and spreads are dropped since projections change.
pub fn gram_schmidt(basis: &SemanticBasis, order: &[usize]) -> Result<SemanticBasis> {
    let k = basis.len();
    let mut seen = vec![false; k];
    if order.len() != k || order.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::InvalidOrder(format!(
            "{order:?} is not a permutation of 0..{k}"
        )));
    }

    let inputs: Vec<&SemanticDirection> = order.iter().map(|&i| &basis.directions[i]).collect();
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    for d in &inputs {
        let v = flat(d);
        let mut n = v.clone();
        for prev in &ortho {
            let coeff = dot(&v, prev) / dot(prev, prev);
            axpy(-coeff, prev, &mut n);
        }
        let (vn, nn) = (dot(&v, &v).sqrt(), dot(&n, &n).sqrt());
        if nn.is_nan() || nn < DEPENDENCE_TOL * vn || vn == 0.0 {
            return Err(Error::NearDependence(d.attribute.clone()));
        }
        n.iter_mut().for_each(|x| *x /= nn);
        ortho.push(n);
        scales.push(nn / vn);
    }

    if max_off_diagonal(&ortho) > ORTHO_DOT_TOL {
        for l in 0..k {
            let (done, rest) = ortho.split_at_mut(l);
            let n = &mut rest[0];
            for prev in done.iter() {
                let c = dot(n, prev);
                axpy(-c, prev, n);
            }
            let nn = dot(n, n).sqrt();
            n.iter_mut().for_each(|x| *x /= nn);
        }
    }

    let mask = basis.mask().clone();
    let (layers, dim) = basis.shape();
    let directions = inputs
        .iter()
        .zip(ortho)
        .zip(scales)
        .map(|((d, n), scale)| {
            let mut vector = LayeredLatentCode::zeros(layers, dim)?;
            for (l, chunk) in mask.iter().zip(n.chunks(dim)) {
                vector.row_mut(l).copy_from_slice(chunk);
            }
            Ok(SemanticDirection {
                attribute: d.attribute.clone(),
                vector,
                mask: mask.clone(),
                magnitude: d.magnitude * scale,
                normalized: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = SemanticBasis::new(directions)?;
    out.orthonormal = out.verify_orthonormal();
    Ok(out)
}

/// Pairwise cosine similarities, `K x K`, row-major by basis order.
pub fn coupling_matrix(basis: &SemanticBasis) -> Vec<Vec<f64>> {
    let vs: Vec<Vec<f64>> = basis.directions.iter().map(flat).collect();
    let norms: Vec<f64> = vs.iter().map(|v| dot(v, v).sqrt()).collect();
    (0..vs.len())
        .map(|i| {
            (0..vs.len())
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        dot(&vs[i], &vs[j]) / (norms[i] * norms[j])
                    }
                })
                .collect()
        })
        .collect()
}

fn as_columns(basis: &SemanticBasis) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = basis
        .directions
        .iter()
        .map(|d| d.vector.as_slice().to_vec())
        .collect();
    let rows = cols[0].len();
    DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

/// Principal angles (radians, ascending) between the spans of two
/// orthonormal bases of equal size.
///
/// Computed from the singular values of `(I - Q_b Q_b^T) Q_a`, which are the
/// sines of the angles and stay accurate for tiny angles.
pub fn principal_angles(a: &SemanticBasis, b: &SemanticBasis) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        let (el, ed) = a.shape();
        let (l, d) = b.shape();
        return Err(Error::ShapeMismatch {
            expected_layers: el,
            expected_dim: ed,
            layers: l,
            dim: d,
        });
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "bases have {} and {} directions",
            a.len(),
            b.len()
        )));
    }
    if !a.verify_orthonormal() || !b.verify_orthonormal() {
        return Err(Error::NotOrthonormal);
    }
    let qa = as_columns(a);
    let qb = as_columns(b);
    let residual = &qa - &qb * (qb.transpose() * &qa);
    let mut angles: Vec<f64> = residual
        .singular_values()
        .iter()
        .map(|s| s.min(1.0).asin())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Largest relative error when projecting each `original` direction onto
/// the span of `ortho` (assumed orthonormal).
pub fn span_reconstruction_error(original: &SemanticBasis, ortho: &SemanticBasis) -> f64 {
    let ns: Vec<Vec<f64>> = ortho.directions.iter().map(flat).collect();
    original
        .directions
        .iter()
        .map(|d| {
            let v = flat(d);
            let mut rec = vec![0.0; v.len()];
            for n in &ns {
                axpy(dot(&v, n), n, &mut rec);
            }
            let err: f64 = v.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum();
            err.sqrt() / dot(&v, &v).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Sets each direction's threshold to the mean projection over `ds` and its
/// spread to the max-minus-min projection.
pub fn calibrate(basis: &SemanticBasis, ds: &Dataset) -> Result<SemanticBasis> {
    let mut out = basis.clone();
    for d in &basis.directions {
        let proj = ds
            .samples()
            .iter()
            .map(|s| d.project(&s.code))
            .collect::<Result<Vec<f64>>>()?;
        let mean = proj.iter().sum::<f64>() / proj.len() as f64;
        let (lo, hi) = proj
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
        out.thresholds.insert(d.attribute.clone(), mean);
        out.spreads.insert(d.attribute.clone(), hi - lo);
    }
    Ok(out)
}
