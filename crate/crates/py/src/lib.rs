//! Python bindings: grids, sets, triples, and the main operations of the
//! spherical symmetrization toolkit. Built as the extension module
//! `_sphere_symm` (see python/smoke_test.py for a usage tour).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::sync::Arc;

use sphere_symm as core;

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
struct PyGrid {
    inner: Arc<core::Grid>,
}

#[pymethods]
impl PyGrid {
    /// Uniform angular grid on the circle.
    #[staticmethod]
    fn circle(n: usize) -> PyGrid {
        PyGrid {
            inner: core::Grid::circle(n),
        }
    }

    /// Equal-area azimuth-by-height grid on the 2-sphere.
    #[staticmethod]
    fn sphere(n_phi: usize, n_t: usize) -> PyGrid {
        PyGrid {
            inner: core::Grid::sphere(n_phi, n_t),
        }
    }

    #[getter]
    fn dim(&self) -> u8 {
        self.inner.dim()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    #[getter]
    fn cell_measure(&self) -> f64 {
        self.inner.cell_measure()
    }

    #[getter]
    fn eps_grid(&self) -> f64 {
        self.inner.eps_grid()
    }

    /// Coordinates of one cell center.
    fn node(&self, cell: usize) -> PyResult<(f64, f64, f64)> {
        if cell >= self.inner.n_cells() {
            return Err(PyValueError::new_err(format!("cell {cell} out of range")));
        }
        let p = self.inner.node(cell);
        Ok((p.x(), p.y(), p.z()))
    }

    fn __repr__(&self) -> String {
        match self.inner.dim() {
            1 => format!("Grid.circle({})", self.inner.n_cells()),
            _ => format!(
                "Grid.sphere({}, {})",
                self.inner.ring_len(),
                self.inner.n_t()
            ),
        }
    }
}

#[pyclass(name = "Triple", frozen, skip_from_py_object)]
struct PyTriple {
    inner: core::AdmissibleTriple,
}

#[pymethods]
impl PyTriple {
    #[getter]
    fn d(&self) -> u8 {
        self.inner.d
    }
    #[getter]
    fn e1(&self) -> f64 {
        self.inner.e1
    }
    #[getter]
    fn e2(&self) -> f64 {
        self.inner.e2
    }
    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }
    #[getter]
    fn heights(&self) -> (f64, f64) {
        (self.inner.h1, self.inner.h2)
    }
    #[getter]
    fn radii(&self) -> (f64, f64, f64) {
        (self.inner.r1, self.inner.r2, self.inner.r3)
    }
    #[getter]
    fn gammas(&self) -> (f64, f64) {
        (self.inner.gamma1, self.inner.gamma2)
    }
    #[getter]
    fn class_name(&self) -> String {
        format!("{:?}", self.inner.class)
    }
    #[getter]
    fn strict(&self) -> bool {
        self.inner.is_strict()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Triple(e1={}, e2={}, a={}, d={}, class={:?})",
            self.inner.e1, self.inner.e2, self.inner.a, self.inner.d, self.inner.class
        )
    }
}

#[pyclass(name = "SphereSet", frozen, skip_from_py_object)]
struct PySet {
    inner: core::SphericalSet,
}

#[pymethods]
impl PySet {
    /// Seeded random set of the given measure.
    #[staticmethod]
    fn random(grid: &PyGrid, e: f64, seed: u64) -> PyResult<PySet> {
        Ok(PySet {
            inner: core::random_set(e, seed, &grid.inner).map_err(err)?,
        })
    }

    /// Rasterized polar cap of the given measure.
    #[staticmethod]
    fn cap(grid: &PyGrid, e: f64) -> PyResult<PySet> {
        Ok(PySet {
            inner: core::north_cap(e, &grid.inner).map_err(err)?,
        })
    }

    /// Rasterized cap of measure `e` centered at the direction (x, y, z).
    #[staticmethod]
    fn cap_at(grid: &PyGrid, x: f64, y: f64, z: f64, e: f64) -> PyResult<PySet> {
        let center = core::Point::normalized(x, y, z).map_err(err)?;
        let cap = core::Cap::from_measure(center, e, grid.inner.dim()).map_err(err)?;
        Ok(PySet {
            inner: core::rasterize_cap(&cap, &grid.inner).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PySet> {
        Ok(PySet {
            inner: core::SphericalSet::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn measure(&self) -> f64 {
        self.inner.measure()
    }

    #[getter]
    fn occupied_count(&self) -> usize {
        self.inner.occupied_count()
    }

    fn symm_diff(&self, other: &PySet) -> PyResult<f64> {
        self.inner.symm_diff_measure(&other.inner).map_err(err)
    }

    fn rearrange(&self) -> PySet {
        PySet {
            inner: self.inner.rearrange(),
        }
    }

    fn complement(&self) -> PySet {
        PySet {
            inner: self.inner.complement(),
        }
    }

    fn rotate_azimuth(&self, cells: usize) -> PySet {
        PySet {
            inner: self.inner.rotate_azimuth(cells),
        }
    }

    /// Two-point symmetrization across the plane with the given normal.
    fn polarize(&self, nx: f64, ny: f64, nz: f64) -> PyResult<PySet> {
        let h = core::Hyperplane::from_direction(nx, ny, nz).map_err(err)?;
        Ok(PySet {
            inner: core::polarize(&self.inner, &h),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "SphereSet(measure={:.6}, cells={})",
            self.inner.measure(),
            self.inner.occupied_count()
        )
    }
}

/// Derived triple for a pair of cap measures and a threshold.
#[pyfunction]
fn classify_triple(e1: f64, e2: f64, a: f64, d: u8) -> PyResult<PyTriple> {
    Ok(PyTriple {
        inner: core::classify_triple(e1, e2, a, d).map_err(err)?,
    })
}

/// Trilinear form between two sets with the threshold kernel.
#[pyfunction]
fn evaluate_t(s1: &PySet, s2: &PySet, a: f64) -> PyResult<f64> {
    core::evaluate_t(&s1.inner, &s2.inner, a).map_err(err)
}

/// Closed/quadrature value of the form on the triple's cap pair.
#[pyfunction]
fn t_caps(triple: &PyTriple) -> f64 {
    core::t_caps(&triple.inner)
}

/// Cap-intersection kernel of one set at a height.
#[pyfunction]
fn kernel_k(triple: &PyTriple, j: usize, t: f64) -> PyResult<f64> {
    core::kernel_k(&triple.inner, j, t).map_err(err)
}

/// Scalar action of the boundary kernel on harmonics of one degree.
#[pyfunction]
fn eigenvalue(n: u32, triple: &PyTriple) -> f64 {
    core::eigenvalue(n, &triple.inner)
}

/// Spectral report (eigenvalues against the strict bound) as JSON.
#[pyfunction]
fn spectral_report(triple: &PyTriple, n_max: u32) -> PyResult<String> {
    let report = core::spectral_check(&triple.inner, n_max).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Distance of the pair to the orbit of its cap pair:
/// (value, center, per_set, iterations).
#[pyfunction]
fn dist_to_orbit(
    s1: &PySet,
    s2: &PySet,
    triple: &PyTriple,
) -> PyResult<(f64, (f64, f64, f64), (f64, f64), usize)> {
    let r = core::dist_to_orbit(&s1.inner, &s2.inner, &triple.inner).map_err(err)?;
    Ok((
        r.value,
        (r.center.x(), r.center.y(), r.center.z()),
        (r.per_set[0], r.per_set[1]),
        r.iterations,
    ))
}

/// Polarization flow toward the cap pair:
/// (converged, steps, final_dist1, final_dist2).
#[pyfunction]
fn converge_to_caps(
    s1: &PySet,
    s2: &PySet,
    a: f64,
    seed: u64,
    max_steps: usize,
    target: f64,
) -> PyResult<(bool, usize, f64, f64)> {
    let flow = core::converge_to_caps(
        &s1.inner,
        &s2.inner,
        a,
        core::Schedule::Random { seed },
        max_steps,
        target,
    )
    .map_err(err)?;
    let d = flow.final_dist();
    Ok((flow.converged, flow.steps.len(), d[0], d[1]))
}

/// Rotation removing the degree-1 boundary component:
/// (angles, residual, input_norm).
#[pyfunction]
fn balance(s1: &PySet, triple: &PyTriple) -> PyResult<(Vec<f64>, f64, f64)> {
    let r = core::balance(&s1.inner, &triple.inner).map_err(err)?;
    Ok((r.angles, r.residual, r.input_norm))
}

/// Deficit sweep of a pure-harmonic family (degree 0 selects the rigid
/// rotation family); returns the full report as JSON.
#[pyfunction]
fn deficit_sweep(
    grid: &PyGrid,
    e1: f64,
    e2: f64,
    a: f64,
    degree: u32,
    s_values: Vec<f64>,
) -> PyResult<String> {
    let triple = core::classify_triple(e1, e2, a, grid.inner.dim()).map_err(err)?;
    let family = if degree == 0 {
        core::PerturbationFamily::rotation(triple, grid.inner.clone(), s_values)
    } else {
        core::PerturbationFamily::pure_harmonic(triple, grid.inner.clone(), degree, s_values)
    }
    .map_err(err)?;
    let report = core::measure_deficit(&family).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Slice decomposition of the form (must equal evaluate_t).
#[pyfunction]
fn slice_decompose_t(s1: &PySet, s2: &PySet, a: f64) -> PyResult<f64> {
    core::slice_decompose_t(&s1.inner, &s2.inner, a).map_err(err)
}

#[pymodule]
fn _sphere_symm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyTriple>()?;
    m.add_class::<PySet>()?;
    m.add_function(wrap_pyfunction!(classify_triple, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_t, m)?)?;
    m.add_function(wrap_pyfunction!(t_caps, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_k, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_report, m)?)?;
    m.add_function(wrap_pyfunction!(dist_to_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(converge_to_caps, m)?)?;
    m.add_function(wrap_pyfunction!(balance, m)?)?;
    m.add_function(wrap_pyfunction!(deficit_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(slice_decompose_t, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
