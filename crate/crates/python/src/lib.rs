//! Python bindings for skelreg.
//!
//! Points cross the boundary as lists of `(x, y, z, nx, ny, nz)` tuples and
//! vectors as `(x, y, z)` tuples.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use skelreg::driver::{self, RegistrationConfig, RegistrationReport};
use skelreg::energy::assign;
use skelreg::geometry::{OrientedPoint, ProjectionMode, Vec3};
use skelreg::io::{self as sio, CloudFormat};
use skelreg::skeleton::{self, Skeleton};
use skelreg::synth::{self, Hole, NoiseModel, SynthSpec};

type Point6 = (f64, f64, f64, f64, f64, f64);
type Triple = (f64, f64, f64);

fn to_py(e: skelreg::Error) -> PyErr {
    match e {
        skelreg::Error::Io { .. } | skelreg::Error::MissingNormals { .. } => {
            PyIOError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vec3(t: Triple) -> Vec3 {
    Vec3::new(t.0, t.1, t.2)
}

fn triple(v: &Vec3) -> Triple {
    (v.x, v.y, v.z)
}

fn points_in(points: Vec<Point6>) -> PyResult<Vec<OrientedPoint>> {
    points
        .into_iter()
        .map(|p| OrientedPoint::new(Vec3::new(p.0, p.1, p.2), Vec3::new(p.3, p.4, p.5)))
        .collect::<skelreg::Result<_>>()
        .map_err(to_py)
}

fn points_out(points: &[OrientedPoint]) -> Vec<Point6> {
    points
        .iter()
        .map(|p| {
            let (q, n) = (&p.position, &p.normal);
            (q.x, q.y, q.z, n.x, n.y, n.z)
        })
        .collect()
}

fn mode(name: &str) -> PyResult<ProjectionMode> {
    match name {
        "normal" => Ok(ProjectionMode::NormalConstrained),
        "orthogonal" => Ok(ProjectionMode::Orthogonal),
        _ => Err(PyValueError::new_err(format!(
            "mode must be 'normal' or 'orthogonal', got '{name}'"
        ))),
    }
}

/// An articulated sphere-mesh skeleton.
#[pyclass(name = "Skeleton", module = "pyskelreg", skip_from_py_object)]
#[derive(Clone)]
pub struct PySkeleton {
    inner: Skeleton,
}

#[pymethods]
impl PySkeleton {
    /// Parses template text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Skeleton::parse(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Loads a template file, or a builtin given as `builtin:NAME`.
    #[staticmethod]
    fn load(source: &str) -> PyResult<Self> {
        Skeleton::load(source)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        skeleton::builtin(name)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Reference pose of a builtin template.
    #[staticmethod]
    fn builtin_pose(name: &str) -> PyResult<Self> {
        skeleton::builtin_pose(name)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn builtin_names() -> Vec<&'static str> {
        skeleton::builtin_names()
    }

    fn to_template(&self) -> String {
        self.inner.to_template()
    }

    /// `(id, (x, y, z), radius)` per joint.
    fn joints(&self) -> Vec<(String, Triple, f64)> {
        self.inner
            .joints()
            .iter()
            .map(|j| (j.id.clone(), triple(&j.position), j.radius))
            .collect()
    }

    /// `(id, joint_a, joint_b)` per bone.
    fn bones(&self) -> Vec<(String, String, String)> {
        let joints = self.inner.joints();
        self.inner
            .bones()
            .iter()
            .map(|b| {
                (
                    b.id.clone(),
                    joints[b.joint_a].id.clone(),
                    joints[b.joint_b].id.clone(),
                )
            })
            .collect()
    }

    /// Chain ids in registration order.
    fn chains(&self) -> Vec<String> {
        self.inner.chains().iter().map(|c| c.id.clone()).collect()
    }

    fn total_length(&self) -> f64 {
        self.inner.total_length()
    }

    /// Copy translated so that the root joint sits at `anchor`.
    fn place_root(&self, anchor: Triple) -> Self {
        Self {
            inner: self.inner.place_root(&vec3(anchor)),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.bones().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Skeleton({} joints, {} bones, {} chains)",
            self.inner.joints().len(),
            self.inner.bones().len(),
            self.inner.chains().len()
        )
    }
}

/// Outcome of a registration.
#[pyclass(name = "Report", module = "pyskelreg")]
pub struct PyReport {
    inner: RegistrationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn passes(&self) -> usize {
        self.inner.passes()
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.inner.final_energy()
    }

    #[getter]
    fn mean_distance(&self) -> f64 {
        self.inner.final_mean_distance()
    }

    #[getter]
    fn skeleton(&self) -> PySkeleton {
        PySkeleton {
            inner: self.inner.skeleton.clone(),
        }
    }

    #[getter]
    fn empty_bones(&self) -> Vec<String> {
        self.inner.empty_bones.clone()
    }

    #[getter]
    fn failures(&self) -> Vec<String> {
        self.inner.failures.clone()
    }

    /// `(pass, direction, energy, mean_distance, millis)` per pass.
    fn history(&self) -> Vec<(usize, &'static str, f64, f64, f64)> {
        self.inner
            .history
            .iter()
            .map(|r| {
                (
                    r.pass,
                    r.direction.as_str(),
                    r.energy,
                    r.mean_distance,
                    r.millis,
                )
            })
            .collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(converged={}, passes={}, mean_distance={})",
            self.inner.converged,
            self.inner.passes(),
            self.inner.final_mean_distance()
        )
    }
}

/// Registers `skeleton` against `points` with the sequential procedure, or
/// with the simultaneous baseline when `baseline` is `"simultaneous"`.
#[pyfunction]
#[pyo3(signature = (points, skeleton, anchor=None, auto_init=false, mode="normal", max_iters=20, tol=1e-5, baseline=None))]
#[allow(clippy::too_many_arguments)]
fn register(
    py: Python<'_>,
    points: Vec<Point6>,
    skeleton: &PySkeleton,
    anchor: Option<Triple>,
    auto_init: bool,
    mode: &str,
    max_iters: usize,
    tol: f64,
    baseline: Option<&str>,
) -> PyResult<PyReport> {
    let points = points_in(points)?;
    let config = RegistrationConfig {
        max_outer_iters: max_iters,
        convergence_tol: tol,
        mode: self::mode(mode)?,
        auto_init,
        anchor: anchor.map(vec3),
        ..RegistrationConfig::default()
    };
    if max_iters == 0 || !(tol.is_finite() && tol > 0.0) {
        return Err(PyValueError::new_err("max_iters must be >= 1 and tol > 0"));
    }
    let skeleton = skeleton.inner.clone();
    let report = py.detach(|| match baseline {
        None => driver::register_skeleton(&points, &skeleton, &config),
        Some("simultaneous") => {
            let anchor = match config.anchor {
                Some(a) => a,
                None => driver::auto_anchor(&points)?,
            };
            driver::register_simultaneous(&points, &skeleton.place_root(&anchor), &config)
        }
        Some(other) => Err(skelreg::Error::InvalidArgument(format!(
            "unknown baseline '{other}'"
        ))),
    });
    report.map(|inner| PyReport { inner }).map_err(to_py)
}

/// Samples an oriented cloud from the surface of `skeleton`.
#[pyfunction]
#[pyo3(signature = (skeleton, points=5000, noise="none", holes=None, seed=0))]
fn synthesize(
    skeleton: &PySkeleton,
    points: usize,
    noise: &str,
    holes: Option<&str>,
    seed: u64,
) -> PyResult<Vec<Point6>> {
    let noise: NoiseModel = noise.parse().map_err(to_py)?;
    let holes = holes
        .map(Hole::parse_list)
        .transpose()
        .map_err(to_py)?
        .unwrap_or_default();
    let cloud = synth::generate(&SynthSpec {
        skeleton: skeleton.inner.clone(),
        points,
        noise,
        holes,
        seed,
    })
    .map_err(to_py)?;
    Ok(points_out(&cloud.points))
}

/// `(mean_distance, total_energy)` of `points` against `skeleton`.
#[pyfunction]
#[pyo3(signature = (points, skeleton, mode="normal"))]
fn evaluate(points: Vec<Point6>, skeleton: &PySkeleton, mode: &str) -> PyResult<(f64, f64)> {
    let points = points_in(points)?;
    if points.is_empty() {
        return Err(PyValueError::new_err("cloud is empty"));
    }
    let a = assign(&points, &skeleton.inner, self::mode(mode)?);
    Ok((a.mean_distance(), a.total_energy()))
}

/// Centre of the bounding box of the points.
#[pyfunction]
fn auto_anchor(points: Vec<Point6>) -> PyResult<Triple> {
    driver::auto_anchor(&points_in(points)?)
        .map(|a| triple(&a))
        .map_err(to_py)
}

/// Reads an oriented cloud (`.ply` or `x y z nx ny nz` text).
#[pyfunction]
fn read_cloud(path: PathBuf) -> PyResult<Vec<Point6>> {
    let format = CloudFormat::from_path(&path);
    sio::read_cloud(&path, format)
        .map(|p| points_out(&p))
        .map_err(to_py)
}

#[pyfunction]
fn write_cloud(path: PathBuf, points: Vec<Point6>) -> PyResult<()> {
    let format = CloudFormat::from_path(&path);
    sio::write_cloud(&path, &points_in(points)?, format).map_err(to_py)
}

/// Unit normals from `k`-neighbour plane fits, consistently oriented.
#[pyfunction]
#[pyo3(signature = (positions, k=sio::DEFAULT_NEIGHBORS))]
fn estimate_normals(positions: Vec<Triple>, k: usize) -> PyResult<Vec<Point6>> {
    let positions: Vec<Vec3> = positions.into_iter().map(vec3).collect();
    sio::estimate_normals(&positions, k)
        .map(|p| points_out(&p))
        .map_err(to_py)
}

/// Writes the tessellated skeleton as an OBJ file.
#[pyfunction]
#[pyo3(signature = (skeleton, path, segments=24))]
fn export_mesh(skeleton: &PySkeleton, path: PathBuf, segments: usize) -> PyResult<()> {
    sio::export_mesh(&skeleton.inner, segments, &path).map_err(to_py)
}

#[pymodule]
fn pyskelreg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySkeleton>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(auto_anchor, m)?)?;
    m.add_function(wrap_pyfunction!(read_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(write_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_normals, m)?)?;
    m.add_function(wrap_pyfunction!(export_mesh, m)?)?;
    Ok(())
}
