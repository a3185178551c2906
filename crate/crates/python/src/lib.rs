//! Python bindings: latent codes, datasets, bases, the estimators, the
//! coupling analysis, Mendelian probabilities and fusion.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use latent_heredity::disentangle::{self, SemanticBasis};
use latent_heredity::estimator::{self, EstimatorConfig, Method, SemanticDirection};
use latent_heredity::fusion::{self, MacroConfig};
use latent_heredity::genetics::{self, Phenotype, Sex};
use latent_heredity::io;
use latent_heredity::labels::{self, LabelOptions, LandmarkSet};
use latent_heredity::latent::{self, LayerMask, LayeredLatentCode};
use latent_heredity::oracle::{self, OracleSpec};
use latent_heredity::Error;

fn py_err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for latent_heredity::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A layers x dim latent code.
#[pyclass(name = "LatentCode", module = "latent_heredity_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLatentCode(LayeredLatentCode);

#[pymethods]
impl PyLatentCode {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        LayeredLatentCode::from_rows(&rows).py().map(Self)
    }

    #[staticmethod]
    fn zeros(layers: usize, dim: usize) -> PyResult<Self> {
        LayeredLatentCode::zeros(layers, dim).py().map(Self)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::read_code(&path).py().map(Self)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::code_from_str(text).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_code(&path, &self.0).py()
    }

    fn to_json(&self) -> PyResult<String> {
        io::code_to_string(&self.0).py()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    /// Copy with both rows of a 1-based resolution layer set to zero.
    fn ablate(&self, resolution_layer: usize) -> PyResult<Self> {
        latent::ablate_layers(&self.0, resolution_layer).py().map(Self)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        let (l, d) = self.0.shape();
        format!("LatentCode(layers={l}, dim={d})")
    }
}

/// Latent codes with named attribute labels.
#[pyclass(name = "Dataset", module = "latent_heredity_py", frozen)]
struct PyDataset(latent::Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::read_dataset(&path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_dataset(&path, &self.0).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn ids(&self) -> Vec<String> {
        self.0.samples().iter().map(|s| s.id.clone()).collect()
    }

    fn attributes(&self) -> Vec<String> {
        self.0.attributes()
    }

    fn labels(&self, attribute: &str) -> PyResult<Vec<f64>> {
        self.0.labels_of(attribute).py()
    }

    fn code(&self, index: usize) -> PyResult<PyLatentCode> {
        self.0
            .samples()
            .get(index)
            .map(|s| PyLatentCode(s.code.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))
    }
}

/// A semantic direction restricted to a layer mask.
#[pyclass(name = "Direction", module = "latent_heredity_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyDirection(SemanticDirection);

#[pymethods]
impl PyDirection {
    #[getter]
    fn attribute(&self) -> String {
        self.0.attribute.clone()
    }

    #[getter]
    fn magnitude(&self) -> f64 {
        self.0.magnitude
    }

    #[getter]
    fn mask(&self) -> String {
        self.0.mask.to_spec_string()
    }

    fn vector(&self) -> PyLatentCode {
        PyLatentCode(self.0.vector.clone())
    }

    fn cosine(&self, other: &PyDirection) -> PyResult<f64> {
        self.0.cosine(&other.0).py()
    }

    fn project(&self, code: &PyLatentCode) -> PyResult<f64> {
        self.0.project(&code.0).py()
    }

    /// `code` moved by `amount` along this direction on its masked layers.
    fn shift(&self, code: &PyLatentCode, amount: f64) -> PyResult<PyLatentCode> {
        latent::shift_along(&code.0, &self.0, amount).py().map(PyLatentCode)
    }

    fn __repr__(&self) -> String {
        format!("Direction({:?}, mask={:?})", self.0.attribute, self.0.mask.to_spec_string())
    }
}

/// An ordered set of directions sharing one mask.
#[pyclass(name = "Basis", module = "latent_heredity_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBasis(SemanticBasis);

#[pymethods]
impl PyBasis {
    #[new]
    fn new(directions: Vec<PyDirection>) -> PyResult<Self> {
        SemanticBasis::new(directions.into_iter().map(|d| d.0).collect()).py().map(Self)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        io::read_basis(&path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_basis(&path, &self.0).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn attributes(&self) -> Vec<String> {
        self.0.attributes().into_iter().map(String::from).collect()
    }

    fn direction(&self, attribute: &str) -> PyResult<PyDirection> {
        self.0
            .get(attribute)
            .cloned()
            .map(PyDirection)
            .ok_or_else(|| PyValueError::new_err(format!("no direction for '{attribute}'")))
    }

    #[getter]
    fn orthonormal(&self) -> bool {
        self.0.orthonormal
    }

    #[getter]
    fn thresholds(&self) -> std::collections::BTreeMap<String, f64> {
        self.0.thresholds.clone()
    }

    /// Gram-Schmidt in the given attribute order (file order by default).
    #[pyo3(signature = (order=None))]
    fn orthogonalize(&self, order: Option<Vec<String>>) -> PyResult<Self> {
        let names = self.attributes();
        let order: Vec<usize> = match order {
            None => (0..names.len()).collect(),
            Some(order) => order
                .iter()
                .map(|n| {
                    names
                        .iter()
                        .position(|m| m == n)
                        .ok_or_else(|| PyValueError::new_err(format!("unknown attribute '{n}'")))
                })
                .collect::<PyResult<_>>()?,
        };
        disentangle::gram_schmidt(&self.0, &order).py().map(Self)
    }

    fn calibrate(&self, dataset: &PyDataset) -> PyResult<Self> {
        disentangle::calibrate(&self.0, &dataset.0).py().map(Self)
    }

    fn coupling_matrix(&self) -> Vec<Vec<f64>> {
        disentangle::coupling_matrix(&self.0)
    }

    fn principal_angles(&self, other: &PyBasis) -> PyResult<Vec<f64>> {
        disentangle::principal_angles(&self.0, &other.0).py()
    }
}

/// Estimates one direction. `min_delta` defaults to 1 for integer labels and
/// 1e-6 otherwise; `mask` defaults to layers 2..11.
#[pyfunction]
#[pyo3(signature = (dataset, attribute, conditioned=None, method="weighted", mask=None, min_delta=None, max_pairs=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    dataset: &PyDataset,
    attribute: &str,
    conditioned: Option<Vec<String>>,
    method: &str,
    mask: Option<&str>,
    min_delta: Option<f64>,
    max_pairs: Option<usize>,
    seed: u64,
) -> PyResult<PyDirection> {
    let ds = &dataset.0;
    let layers = ds.shape().0;
    let method = match method {
        "basic" => Method::Basic,
        "weighted" => Method::Weighted,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    };
    let mask = match mask {
        Some(text) => LayerMask::parse(text, layers),
        None => LayerMask::facial(layers),
    }
    .py()?;
    let conditioned = conditioned.unwrap_or_else(|| {
        ds.attributes().into_iter().filter(|a| a != attribute).collect()
    });
    let min_delta = match min_delta {
        Some(v) => v,
        None => estimator::default_min_delta(&ds.labels_of(attribute).py()?),
    };
    let cfg = EstimatorConfig {
        method,
        target: attribute.to_string(),
        conditioned,
        min_delta,
        max_pairs,
        mask,
        seed,
        deterministic: true,
    };
    estimator::estimate(ds, &cfg).py().map(PyDirection)
}

/// `(b', b'/b)` for the Gaussian coupling model.
#[pyfunction]
fn bias_ratio(b: f64, sigma: f64) -> PyResult<(f64, f64)> {
    let c = disentangle::bias_ratio_quadrature(b, sigma).py()?;
    Ok((c.b_prime, c.ratio))
}

/// `(averaged, self_normalized)` Monte Carlo variance ratios.
#[pyfunction]
#[pyo3(signature = (b, sigma, n_pairs=200, replications=500, seed=0))]
fn variance_ratio(b: f64, sigma: f64, n_pairs: usize, replications: usize, seed: u64) -> PyResult<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = disentangle::variance_ratio_monte_carlo(b, sigma, n_pairs, replications, &mut rng).py()?;
    Ok((v.averaged, v.self_normalized))
}

fn phenotype(name: &str) -> PyResult<Phenotype> {
    match name {
        "dominant" => Ok(Phenotype::Dominant),
        "recessive" => Ok(Phenotype::Recessive),
        other => Err(PyValueError::new_err(format!("unknown phenotype '{other}'"))),
    }
}

#[pyfunction]
fn recessive_probability(father: &str, mother: &str) -> PyResult<f64> {
    Ok(genetics::offspring_recessive_probability(phenotype(father)?, phenotype(mother)?))
}

#[pyfunction]
fn baldness_probability(father_bald: bool, mother_bald: bool, child_sex: &str) -> PyResult<f64> {
    let sex = match child_sex {
        "male" => Sex::Male,
        "female" => Sex::Female,
        other => return Err(PyValueError::new_err(format!("unknown sex '{other}'"))),
    };
    Ok(genetics::baldness_probability(father_bald, mother_bald, sex))
}

/// The nine landmark labels for 68 `(x, y)` points.
#[pyfunction]
#[pyo3(signature = (points, interocular=false))]
fn landmark_labels(points: Vec<[f64; 2]>, interocular: bool) -> PyResult<std::collections::BTreeMap<String, f64>> {
    let lm = LandmarkSet::new("points", points).py()?;
    labels::compute_labels(&lm, LabelOptions { interocular_normalize: interocular }).py()
}

#[pyfunction]
fn blend(father: &PyLatentCode, mother: &PyLatentCode, lam: f64) -> PyResult<PyLatentCode> {
    fusion::macro_fuse(&father.0, &mother.0, &MacroConfig::blend(lam)).py().map(PyLatentCode)
}

/// Macro blend followed by heredity-guided adjustment. Returns the child and
/// the report as JSON. Uses the built-in rules unless `rules` names a file.
#[pyfunction]
#[pyo3(signature = (father, mother, basis, seed, lam=0.5, rules=None))]
fn fuse(
    father: &PyLatentCode,
    mother: &PyLatentCode,
    basis: &PyBasis,
    seed: u64,
    lam: f64,
    rules: Option<PathBuf>,
) -> PyResult<(PyLatentCode, String)> {
    let rules = match rules {
        Some(path) => io::read_rules(&path).py()?,
        None => genetics::default_ruleset(),
    };
    let child = fusion::macro_fuse(&father.0, &mother.0, &MacroConfig::blend(lam)).py()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = fusion::micro_fuse(&child, &father.0, &mother.0, &basis.0, &rules, &mut rng).py()?;
    let report = io::FusionReport {
        seed,
        assumptions: Vec::new(),
        decisions: out.decisions,
        traits: out.traits,
    };
    Ok((PyLatentCode(out.child), io::report_to_string(&report).py()?))
}

/// Samples `n` codes from a synthetic model given as an oracle-spec JSON
/// document; returns the dataset and the true basis.
#[pyfunction]
fn synthesize(spec_json: &str, n: usize) -> PyResult<(PyDataset, PyBasis)> {
    let spec: OracleSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (ds, truth) = oracle::generate(&spec, n).py()?;
    Ok((PyDataset(ds), PyBasis(truth)))
}

#[pymodule]
fn latent_heredity_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLatentCode>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyDirection>()?;
    m.add_class::<PyBasis>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(bias_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(variance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(recessive_probability, m)?)?;
    m.add_function(wrap_pyfunction!(baldness_probability, m)?)?;
    m.add_function(wrap_pyfunction!(landmark_labels, m)?)?;
    m.add_function(wrap_pyfunction!(blend, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
