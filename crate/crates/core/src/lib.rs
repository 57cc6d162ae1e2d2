//! Numerical toolkit for the trilinear convolution form on spheres:
//! discretized sets on S^1 and S^2, two-point symmetrization flows,
//! distance to the orbit of polar cap pairs, boundary spectra of the
//! second-order form, and measurement of the quadratic deficit law.

pub mod error;
pub mod functional;
pub mod geometry;
pub mod grid;
pub mod harmonics;
pub mod numeric;
pub mod orbit;
pub mod perturbation;
pub mod polarization;

pub use error::{Error, Result};
pub use functional::{classify_triple, evaluate_t, gamma, kernel_k, t_caps, TrilinearEvaluator};
pub use geometry::{
    cap_height, cap_measure, north, reflect, weight, AdmissibleTriple, Cap, Hyperplane, Point,
    TripleClass,
};
pub use grid::{north_cap, random_set, rasterize_cap, Grid, SphericalSet};
pub use harmonics::{
    associated_function, balance, eigenvalue, project, q_form, spectral_check, BalanceResult,
    BoundaryFunction, SpectralReport,
};
pub use orbit::{cap_overlap, dist_to_orbit, DistanceResult};
pub use perturbation::{
    build_perturbed_sets, measure_deficit, slice_decompose_t, solve_phi, truncate_to_collar,
    DeficitReport, PerturbationFamily,
};
pub use polarization::{
    build_pairing, converge_to_caps, land_in_band, polarize, FlowTrajectory, PairingTable,
    Polarizer, Schedule,
};
