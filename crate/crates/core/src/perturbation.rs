//! Harmonic perturbations of cap pairs, the collar truncation that pins
//! set deviations to a band around the cap boundary, the slice
//! decomposition of the functional, and measurement of the quadratic
//! deficit law.

use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functional::{same_grid_pair_count, window_halfwidth, RingStats, TrilinearEvaluator};
use crate::geometry::{cap_measure, weight, AdmissibleTriple};
use crate::grid::{Grid, SphericalSet};
use crate::harmonics::{q_form, BoundaryFunction};
use crate::numeric::Kahan;

/// Signed boundary displacement: solves
/// `∫_{h-φ}^{h} w_d(t) dt = s * g_value` for φ. Positive mass lowers the
/// boundary; negative φ removes mass above it.
pub fn solve_phi(g_value: f64, s: f64, h: f64, d: u8) -> Result<f64> {
    let target = s * g_value;
    let above = cap_measure(h, d)?;
    let headroom_neg = -above;
    let headroom_pos = 1.0 - above;
    if target <= headroom_neg || target >= headroom_pos {
        let bound = if target > 0.0 {
            headroom_pos
        } else {
            -headroom_neg
        };
        let max_feasible = if g_value.abs() < 1e-300 {
            f64::INFINITY
        } else {
            (bound / g_value.abs()).abs()
        };
        return Err(Error::Amplitude { max_feasible });
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    match d {
        2 => Ok(2.0 * target),
        1 => {
            // arcsin(h) - arcsin(h - φ) = π target.
            let phi = h - (h.asin() - std::f64::consts::PI * target).sin();
            Ok(phi)
        }
        _ => {
            // Newton on A(φ) = capmeas(h-φ) - capmeas(h), with bisection
            // safeguards; A' = w(h-φ).
            let a_of = |phi: f64| cap_measure((h - phi).clamp(-1.0, 1.0), d).unwrap() - above;
            let mut lo = -(1.0 + h);
            let mut hi = 1.0 + h.abs() + 1.0; // beyond h - φ = -1
            let mut phi = target / weight(h, d)?;
            for _ in 0..200 {
                let val = a_of(phi) - target;
                if val.abs() <= 1e-12 {
                    return Ok(phi);
                }
                if val > 0.0 {
                    hi = phi;
                } else {
                    lo = phi;
                }
                let t_at = (h - phi).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                let deriv = weight(t_at, d)?;
                let mut next = phi - val / deriv;
                if !(lo..=hi).contains(&next) {
                    next = 0.5 * (lo + hi);
                }
                phi = next;
            }
            Err(Error::NonConvergence(
                "boundary displacement solve stalled".into(),
            ))
        }
    }
}

/// A pair of boundary harmonics driving a one-parameter family of
/// perturbed cap pairs on a fixed grid.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    pub triple: AdmissibleTriple,
    pub grid: Arc<Grid>,
    pub degree: u32,
    pub g1: BoundaryFunction,
    pub g2: BoundaryFunction,
    pub s_values: Vec<f64>,
}

impl PerturbationFamily {
    pub fn new(
        triple: AdmissibleTriple,
        grid: Arc<Grid>,
        degree: u32,
        g1: BoundaryFunction,
        g2: BoundaryFunction,
        s_values: Vec<f64>,
    ) -> Result<Self> {
        if grid.dim() != triple.d {
            return Err(Error::GridMismatch(
                "family grid and triple dimensions differ".into(),
            ));
        }
        let expected = if triple.d == 2 { grid.ring_len() } else { 2 };
        if g1.values.len() != expected || g2.values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "boundary functions need {expected} nodes for this grid"
            )));
        }
        Ok(PerturbationFamily {
            triple,
            grid,
            degree,
            g1,
            g2,
            s_values,
        })
    }

    /// Equal pure harmonics `sqrt(2) cos(nφ)` on both boundaries (each of
    /// unit norm), on the grid's azimuth nodes.
    pub fn pure_harmonic(
        triple: AdmissibleTriple,
        grid: Arc<Grid>,
        degree: u32,
        s_values: Vec<f64>,
    ) -> Result<Self> {
        let g1 = BoundaryFunction::harmonic(degree, 1.0, 0.0, grid.ring_len())?;
        let g2 = g1.clone();
        PerturbationFamily::new(triple, grid, degree, g1, g2, s_values)
    }

    /// Degree-1 family whose amplitudes are matched so both caps tilt
    /// rigidly together: `G_j = w(h_j) sqrt(1 - h_j^2) cos φ`. The
    /// functional is invariant along this direction.
    pub fn rotation(triple: AdmissibleTriple, grid: Arc<Grid>, s_values: Vec<f64>) -> Result<Self> {
        let n = grid.ring_len();
        let mk = |h: f64| -> Result<BoundaryFunction> {
            let amp = weight(h, triple.d)? * (1.0 - h * h).max(0.0).sqrt();
            let values = (0..n)
                .map(|q| {
                    let phi = (q as f64 + 0.5) * std::f64::consts::TAU / n as f64;
                    amp * phi.cos()
                })
                .collect();
            BoundaryFunction::circle(values)
        };
        let g1 = mk(triple.h1)?;
        let g2 = mk(triple.h2)?;
        PerturbationFamily::new(triple, grid, 1, g1, g2, s_values)
    }

    /// Default geometric amplitude ladder: 8 points spanning one decade.
    pub fn default_amplitudes() -> Vec<f64> {
        let lo: f64 = 0.005;
        let hi: f64 = 0.05;
        (0..8)
            .map(|i| lo * (hi / lo).powf(i as f64 / 7.0))
            .collect()
    }
}

/// Rasterizes the pair `E_j(s) = {(θ, t) : t >= h_j - φ_j(θ, s)}`:
/// each azimuth column is filled from its displaced boundary upward.
pub fn build_perturbed_sets(
    family: &PerturbationFamily,
    s: f64,
) -> Result<(SphericalSet, SphericalSet)> {
    let one = build_one(family, &family.g1, family.triple.h1, s)?;
    let two = build_one(family, &family.g2, family.triple.h2, s)?;
    Ok((one, two))
}

fn build_one(
    family: &PerturbationFamily,
    g: &BoundaryFunction,
    h: f64,
    s: f64,
) -> Result<SphericalSet> {
    let grid = &family.grid;
    let d = family.triple.d;
    match d {
        2 => {
            let n_phi = grid.ring_len();
            let n_t = grid.rings();
            let mut thresholds = Vec::with_capacity(n_phi);
            for q in 0..n_phi {
                thresholds.push(h - solve_phi(g.values[q], s, h, d)?);
            }
            // Ring k occupied iff its center height clears the column
            // threshold: k >= ceil((n_t (τ+1) - 1) / 2).
            let mut set = SphericalSet::empty(grid.clone());
            for (q, &tau) in thresholds.iter().enumerate() {
                let kmin_f = (n_t as f64 * (tau + 1.0) - 1.0) / 2.0;
                let kmin = kmin_f.ceil().max(0.0) as usize;
                for k in kmin..n_t {
                    set.insert(grid.cell_index(k, q));
                }
            }
            Ok(set)
        }
        1 => {
            let tau = [
                h - solve_phi(g.values[0], s, h, d)?,
                h - solve_phi(g.values[1], s, h, d)?,
            ];
            Ok(SphericalSet::from_fn(grid.clone(), |i| {
                let p = grid.node(i);
                let col = if p.x() > 0.0 { 0 } else { 1 };
                p.y() >= tau[col]
            }))
        }
        d => Err(Error::Argument(format!("no set model for dimension {d}"))),
    }
}

/// Collar truncation: toggles every deviation cell farther than `collar`
/// (in height) from the cap boundary back to the cap, then restores the
/// exact occupied count with deviation cells nearest the boundary.
///
/// The result `E†` satisfies, in exact cell arithmetic:
/// same count as `E`; `E Δ B` splits disjointly into `E† Δ B` and
/// `E Δ E†`; the far part of `E Δ B` lies inside `E Δ E†`; and
/// `|E Δ E†| <= 2 |far part|`.
pub fn truncate_to_collar(
    set: &SphericalSet,
    triple: &AdmissibleTriple,
    j: usize,
    collar: f64,
) -> Result<SphericalSet> {
    let grid = set.grid();
    if grid.dim() != triple.d {
        return Err(Error::GridMismatch(
            "set and triple dimensions differ".into(),
        ));
    }
    let (h, e) = match j {
        1 => (triple.h1, triple.e1),
        2 => (triple.h2, triple.e2),
        _ => return Err(Error::Argument(format!("set index {j} must be 1 or 2"))),
    };
    let min_collar = match grid.dim() {
        2 => 2.0 * grid.dt(),
        _ => 2.0 * grid.azimuth_step(),
    };
    if collar <= min_collar {
        return Err(Error::Collar(format!(
            "collar {collar} must exceed two cell heights ({min_collar})"
        )));
    }
    let cap = crate::grid::north_cap(e, grid)?;
    let mut out = set.clone();
    let mut balance = 0i64; // added minus removed
    let mut near: Vec<(f64, usize)> = Vec::new();
    for i in 0..grid.n_cells() {
        let in_e = set.contains(i);
        let in_b = cap.contains(i);
        if in_e == in_b {
            continue;
        }
        let gap = (grid.node_height(i) - h).abs();
        if gap > collar {
            if in_e {
                out.remove(i);
                balance -= 1;
            } else {
                out.insert(i);
                balance += 1;
            }
        } else {
            near.push((gap, i));
        }
    }
    if balance != 0 {
        // Rebalance strictly inside the deviation, nearest the boundary
        // first (height gap, then cell index).
        near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut remaining = balance.unsigned_abs();
        for &(_, i) in &near {
            if remaining == 0 {
                break;
            }
            let in_e = set.contains(i);
            if balance > 0 && in_e && out.contains(i) {
                // Too many added: remove near cells of E \ B.
                out.remove(i);
                remaining -= 1;
            } else if balance < 0 && !in_e && !out.contains(i) {
                // Too many removed: add near cells of B \ E.
                out.insert(i);
                remaining -= 1;
            }
        }
        if remaining != 0 {
            return Err(Error::Collar(format!(
                "collar {collar} cannot host {remaining} rebalancing cells"
            )));
        }
    }
    Ok(out)
}

/// Recomputes the trilinear form through horizontal slices: per ring
/// pair, the circle form of the two slice sets at the induced threshold,
/// weighted by the height density of each slice. Identical to the direct
/// evaluation as a reordering of one finite sum.
pub fn slice_decompose_t(e1: &SphericalSet, e2: &SphericalSet, a: f64) -> Result<f64> {
    let grid = e1.grid();
    if grid.dim() != 2 || e2.grid().dim() != 2 {
        return Err(Error::Argument(
            "slice decomposition needs sets on S^2".into(),
        ));
    }
    if grid.as_ref() != e2.grid().as_ref() {
        return Err(Error::GridMismatch(
            "slice decomposition needs one grid".into(),
        ));
    }
    let rs1 = RingStats::build(e1);
    let rs2 = RingStats::build(e2);
    let n_phi = grid.ring_len() as f64;
    let dt = grid.dt();
    let table = grid.cos_table();
    let rings = grid.rings();
    let mut acc = Kahan::new();
    for k1 in 0..rings {
        let w1 = weight(grid.ring_t(k1), 2)? * dt;
        for k2 in 0..rings {
            // Inner circle form with threshold clamped through the exact
            // ring-pair predicate (kernel ≡ 1 once t1 t2 - s1 s2 >= a).
            let base = grid.ring_t(k1) * grid.ring_t(k2);
            let coef = grid.ring_s(k1) * grid.ring_s(k2);
            let m = window_halfwidth(base, coef, table, a);
            let count = same_grid_pair_count(&rs1, k1, &rs2, k2, m);
            if count == 0 {
                continue;
            }
            let inner = count as f64 / (n_phi * n_phi);
            let w2 = weight(grid.ring_t(k2), 2)? * dt;
            acc.add(inner * w1 * w2);
        }
    }
    Ok(acc.total())
}

/// Measured and predicted quadratic deficit of one perturbation family.
#[derive(Debug, Clone, Serialize)]
pub struct DeficitReport {
    pub triple: AdmissibleTriple,
    pub degree: u32,
    pub s_values: Vec<f64>,
    pub t_star: f64,
    pub t_values: Vec<f64>,
    pub deficits: Vec<f64>,
    /// Least-squares coefficients of `c2 s^2 + c3 s^3`.
    pub c2: f64,
    pub c3: f64,
    /// `(γ1/w(h1) ||G1||^2 + γ2/w(h2) ||G2||^2)/2 - Q(G1, G2)`.
    pub predicted_c2: f64,
    pub rel_error: f64,
    /// Log-log slope of deficit against amplitude (positive deficits only).
    pub loglog_slope: Option<f64>,
}

/// Evaluates the functional along the family, fits the deficit to
/// `c2 s^2 + c3 s^3`, and compares against the spectral prediction.
pub fn measure_deficit(family: &PerturbationFamily) -> Result<DeficitReport> {
    if !family.triple.is_strict() {
        return Err(Error::Precondition(
            "deficit law needs a strict triple".into(),
        ));
    }
    if family.degree < 1 {
        return Err(Error::Argument("family degree must be at least 1".into()));
    }
    if family.s_values.len() < 4 {
        return Err(Error::Argument(
            "need at least 4 amplitudes for the fit".into(),
        ));
    }
    let (lo, hi) = family
        .s_values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| {
            (lo.min(s.abs()), hi.max(s.abs()))
        });
    if !(lo > 0.0 && hi / lo >= 9.99) {
        return Err(Error::Argument(
            "amplitudes must be nonzero and span at least a decade".into(),
        ));
    }

    let triple = &family.triple;
    let evaluator = TrilinearEvaluator::new(family.grid.clone(), family.grid.clone(), triple.a)?;
    let (b1, b2) = build_perturbed_sets(family, 0.0)?;
    let t_star = evaluator.evaluate(&b1, &b2)?;

    let t_values: Vec<f64> = family
        .s_values
        .par_iter()
        .map(|&s| -> Result<f64> {
            let (p1, p2) = build_perturbed_sets(family, s)?;
            evaluator.evaluate(&p1, &p2)
        })
        .collect::<Result<Vec<_>>>()?;
    let deficits: Vec<f64> = t_values.iter().map(|t| t_star - t).collect();

    // Least squares for deficit = c2 s^2 + c3 s^3.
    let (mut s4, mut s5, mut s6, mut r2, mut r3) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&s, &d) in family.s_values.iter().zip(&deficits) {
        let s2 = s * s;
        s4 += s2 * s2;
        s5 += s2 * s2 * s;
        s6 += s2 * s2 * s2;
        r2 += d * s2;
        r3 += d * s2 * s;
    }
    let det = s4 * s6 - s5 * s5;
    if det.abs() < 1e-300 {
        return Err(Error::Argument("degenerate amplitude ladder".into()));
    }
    let c2 = (r2 * s6 - r3 * s5) / det;
    let c3 = (s4 * r3 - s5 * r2) / det;

    let w1 = weight(triple.h1, triple.d)?;
    let w2 = weight(triple.h2, triple.d)?;
    let predicted_c2 = 0.5
        * (triple.gamma1 / w1 * family.g1.norm_sq() + triple.gamma2 / w2 * family.g2.norm_sq())
        - q_form(&family.g1, &family.g2, triple)?;
    let rel_error = if predicted_c2.abs() > 0.0 {
        (c2 - predicted_c2).abs() / predicted_c2.abs()
    } else {
        c2.abs()
    };

    // Log-log regression over strictly positive deficits.
    let pts: Vec<(f64, f64)> = family
        .s_values
        .iter()
        .zip(&deficits)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&s, &d)| (s.ln(), d.ln()))
        .collect();
    let loglog_slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx > 0.0 {
            Some(sxy / sxx)
        } else {
            None
        }
    } else {
        None
    };

    Ok(DeficitReport {
        triple: *triple,
        degree: family.degree,
        s_values: family.s_values.clone(),
        t_star,
        t_values,
        deficits,
        c2,
        c3,
        predicted_c2,
        rel_error,
        loglog_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{classify_triple, evaluate_t};
    use crate::grid::{north_cap, random_set};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solve_phi_zero_and_linear() {
        assert_eq!(solve_phi(0.0, 0.1, 0.3, 2).unwrap(), 0.0);
        // Constant density on S^2 makes the solve exactly linear.
        assert_eq!(solve_phi(0.2, 0.05, 0.3, 2).unwrap(), 2.0 * 0.05 * 0.2);
    }

    #[test]
    fn solve_phi_first_order_matches_density() {
        for (d, h) in [(1u8, 0.2), (2, 0.3), (3, -0.1)] {
            let g = 0.7;
            let w = weight(h, d).unwrap();
            let mut prev_err = f64::INFINITY;
            for &s in &[1e-2, 5e-3, 2.5e-3] {
                let phi = solve_phi(g, s, h, d).unwrap();
                let err = (phi - s * g / w).abs() / s;
                assert!(err < prev_err + 1e-12, "first-order error not shrinking");
                prev_err = err;
            }
        }
    }

    #[test]
    fn solve_phi_residual_is_tiny() {
        for (d, h, g, s) in [
            (1u8, 0.2, 0.6, 0.04),
            (3, 0.25, -0.5, 0.03),
            (4, -0.3, 0.8, 0.02),
        ] {
            let phi = solve_phi(g, s, h, d).unwrap();
            let lhs = cap_measure(h - phi, d).unwrap() - cap_measure(h, d).unwrap();
            assert_abs_diff_eq!(lhs, s * g, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_phi_headroom_error() {
        // Headroom above the boundary is 1 - capmeas(0.9, 2) = 0.95.
        let err = solve_phi(1.0, 0.96, 0.9, 2).unwrap_err();
        match err {
            Error::Amplitude { max_feasible } => {
                assert!(max_feasible < 0.96 && max_feasible > 0.9)
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn perturbed_sets_at_zero_are_caps() {
        let grid = Grid::sphere(128, 128);
        let t = classify_triple(0.3, 0.45, 0.2, 2).unwrap();
        let fam = PerturbationFamily::pure_harmonic(
            t,
            grid.clone(),
            2,
            PerturbationFamily::default_amplitudes(),
        )
        .unwrap();
        let (p1, p2) = build_perturbed_sets(&fam, 0.0).unwrap();
        assert_eq!(p1, north_cap(0.3, &grid).unwrap());
        assert_eq!(p2, north_cap(0.45, &grid).unwrap());
    }

    #[test]
    fn perturbed_sets_keep_measure_for_mean_zero_harmonics() {
        let grid = Grid::sphere(256, 256);
        let t = classify_triple(0.5, 0.5, 0.0, 2).unwrap();
        let fam =
            PerturbationFamily::pure_harmonic(t, grid.clone(), 2, vec![0.01, 0.02, 0.05, 0.1])
                .unwrap();
        for &s in &fam.s_values {
            let (p1, _) = build_perturbed_sets(&fam, s).unwrap();
            assert!(
                (p1.measure() - 0.5).abs() <= 64.0 / grid.n_cells() as f64,
                "measure drift {}",
                (p1.measure() - 0.5).abs()
            );
        }
    }

    #[test]
    fn associated_function_of_family_is_linear_in_s() {
        let grid = Grid::sphere(256, 256);
        let t = classify_triple(0.5, 0.5, 0.0, 2).unwrap();
        let fam = PerturbationFamily::pure_harmonic(
            t,
            grid.clone(),
            2,
            PerturbationFamily::default_amplitudes(),
        )
        .unwrap();
        // ‖F(s) - s G‖ should decay quadratically; fit the constant.
        let mut worst_ratio: f64 = 0.0;
        for &s in &[0.02, 0.04] {
            let (p1, _) = build_perturbed_sets(&fam, s).unwrap();
            let (f, _, _) = crate::harmonics::associated_function(&p1, &t, 1).unwrap();
            let mut dev = 0.0;
            for (q, &fv) in f.values.iter().enumerate() {
                dev += (fv - s * fam.g1.values[q]).powi(2);
            }
            let dev = (dev / f.values.len() as f64).sqrt();
            // Raster quantization adds ~ w*dt per column; allow it on top
            // of the quadratic term.
            let allowance = 2.0 * s * s + 1.5 * grid.dt() * 0.5;
            worst_ratio = worst_ratio.max(dev / allowance);
        }
        assert!(
            worst_ratio <= 1.0,
            "deviation beyond O(s^2) + cell: {worst_ratio}"
        );
    }

    #[test]
    fn collar_truncation_identity_when_inside() {
        let grid = Grid::sphere(96, 96);
        let t = classify_triple(0.3, 0.4, 0.2, 2).unwrap();
        let fam =
            PerturbationFamily::pure_harmonic(t, grid.clone(), 2, vec![0.001, 0.002, 0.005, 0.01])
                .unwrap();
        let (p1, _) = build_perturbed_sets(&fam, 0.004).unwrap();
        let out = truncate_to_collar(&p1, &t, 1, 0.2).unwrap();
        assert_eq!(out, p1);
    }

    #[test]
    fn collar_truncation_constructed_instance() {
        let grid = Grid::sphere(64, 64);
        let e = 0.4;
        let t = classify_triple(e, e, 0.0, 2).unwrap();
        let cap = north_cap(e, &grid).unwrap();
        // Add a far patch and carve a near slab of the same cell count.
        let mut set = cap.clone();
        let far_ring = 4usize; // deep south, far from the boundary
        let patch = 16usize;
        for q in 0..patch {
            set.insert(grid.cell_index(far_ring, q));
        }
        let boundary_ring = (0..grid.rings())
            .filter(|&k| cap.contains(grid.cell_index(k, 0)))
            .min()
            .unwrap();
        for q in 0..patch {
            set.remove(grid.cell_index(boundary_ring, q));
        }
        assert_eq!(set.occupied_count(), cap.occupied_count());
        let collar = 0.1;
        let out = truncate_to_collar(&set, &t, 1, collar).unwrap();
        // The far patch goes away; the refill happens at the boundary.
        let moved = out.symm_diff_count(&set).unwrap();
        assert_eq!(moved, 2 * patch as u64);
        for q in 0..patch {
            assert!(!out.contains(grid.cell_index(far_ring, q)));
        }
    }

    #[test]
    fn collar_truncation_properties_audit() {
        let grid = Grid::sphere(48, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut checked = 0;
        while checked < 50 {
            let e = 0.2 + 0.6 * rng.random::<f64>();
            let t = classify_triple(e, 0.5, 0.1, 2).unwrap();
            let cap = north_cap(e, &grid).unwrap();
            // Random near-cap set: flip a sprinkling of cells.
            let mut set = cap.clone();
            for _ in 0..200 {
                let i = rng.random_range(0..grid.n_cells());
                if set.contains(i) {
                    set.remove(i);
                } else {
                    set.insert(i);
                }
            }
            let collar = 0.15 + 0.3 * rng.random::<f64>();
            let out = match truncate_to_collar(&set, &t, 1, collar) {
                Ok(out) => out,
                Err(Error::Collar(_)) => continue,
                Err(other) => panic!("unexpected error {other}"),
            };
            checked += 1;
            // (1) counts agree.
            assert_eq!(out.occupied_count(), set.occupied_count());
            let mut far_cells = 0u64;
            let mut toggled = 0u64;
            for i in 0..grid.n_cells() {
                let in_e = set.contains(i);
                let in_b = cap.contains(i);
                let in_out = out.contains(i);
                // (2) disjoint split of E Δ B into E† Δ B and E Δ E†.
                if in_e != in_b {
                    assert!((in_out != in_b) != (in_out != in_e));
                } else {
                    assert_eq!(in_out, in_e);
                }
                let far = (grid.node_height(i) - t.h1).abs() > collar;
                if in_e != in_b && far {
                    far_cells += 1;
                    // (3) far deviations are always toggled.
                    assert_ne!(in_out, in_e);
                }
                if in_out != in_e {
                    toggled += 1;
                }
            }
            // (4) at most twice the far mass moves.
            assert!(toggled <= 2 * far_cells);
        }
    }

    #[test]
    fn slice_identity_is_exact() {
        let grid = Grid::sphere(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = -0.7 + 1.4 * rng.random::<f64>();
            let e1 = random_set(rng.random(), rng.random(), &grid).unwrap();
            let e2 = random_set(rng.random(), rng.random(), &grid).unwrap();
            let direct = evaluate_t(&e1, &e2, a).unwrap();
            let sliced = slice_decompose_t(&e1, &e2, a).unwrap();
            assert!(
                (direct - sliced).abs() <= 1e-12,
                "direct {direct} vs sliced {sliced}"
            );
        }
    }

    #[test]
    fn slice_identity_on_caps_hits_full_rings() {
        let grid = Grid::sphere(96, 96);
        let c1 = north_cap(0.4, &grid).unwrap();
        let c2 = north_cap(0.55, &grid).unwrap();
        // Threshold low enough that some ring pairs are fully admissible.
        let direct = evaluate_t(&c1, &c2, -0.5).unwrap();
        let sliced = slice_decompose_t(&c1, &c2, -0.5).unwrap();
        assert!((direct - sliced).abs() <= 1e-12);
        // On caps both collapse to the quadrature value.
        let t = classify_triple(0.4, 0.55, -0.5, 2).unwrap();
        assert!((sliced - crate::functional::t_caps(&t)).abs() <= 2.0 * grid.cell_diameter());
    }

    #[test]
    fn deficit_on_circle_matches_two_point_prediction() {
        // The circle boundary is two points; the odd component is the
        // only nontrivial degree. Unequal amplitudes break the neutral
        // rotation direction, so a genuine quadratic deficit remains.
        // This exercises the non-constant height density end to end.
        let grid = Grid::circle(1 << 15);
        let t = classify_triple(0.3, 0.4, 0.1, 1).unwrap();
        let g1 = crate::harmonics::BoundaryFunction::two_point(1.0, -1.0);
        let g2 = crate::harmonics::BoundaryFunction::two_point(-0.5, 0.5);
        let fam = PerturbationFamily::new(
            t,
            grid,
            1,
            g1,
            g2,
            PerturbationFamily::default_amplitudes(),
        )
        .unwrap();
        let report = measure_deficit(&fam).unwrap();
        assert!(report.predicted_c2 > 0.0);
        assert!(
            report.rel_error <= 0.1,
            "fitted {} vs predicted {}",
            report.c2,
            report.predicted_c2
        );
    }

    #[test]
    fn harmonic_families_leave_the_cap_orbit() {
        // Level sets of degree >= 2 harmonics are not caps: the perturbed
        // pair sits at a genuinely positive orbit distance.
        let grid = Grid::sphere(128, 128);
        let t = classify_triple(0.5, 0.5, 0.0, 2).unwrap();
        for degree in [2u32, 3] {
            let fam = PerturbationFamily::pure_harmonic(
                t,
                grid.clone(),
                degree,
                vec![0.01, 0.02, 0.05, 0.1],
            )
            .unwrap();
            let (p1, p2) = build_perturbed_sets(&fam, 0.05).unwrap();
            let dist = crate::orbit::dist_to_orbit(&p1, &p2, &t).unwrap();
            assert!(
                dist.value > 10.0 * grid.cell_measure(),
                "degree {degree}: distance {} too small",
                dist.value
            );
        }
    }

    #[test]
    fn deficit_rejects_thin_ladders() {
        let grid = Grid::sphere(32, 32);
        let t = classify_triple(0.5, 0.5, 0.0, 2).unwrap();
        let fam =
            PerturbationFamily::pure_harmonic(t, grid.clone(), 2, vec![0.01, 0.02, 0.03]).unwrap();
        assert!(measure_deficit(&fam).is_err());
        let fam2 =
            PerturbationFamily::pure_harmonic(t, grid, 2, vec![0.01, 0.02, 0.03, 0.04]).unwrap();
        assert!(measure_deficit(&fam2).is_err(), "span below a decade");
    }

    #[test]
    fn deficit_quadratic_for_degree_two() {
        let grid = Grid::sphere(512, 256);
        let t = classify_triple(0.5, 0.5, 0.0, 2).unwrap();
        let fam =
            PerturbationFamily::pure_harmonic(t, grid, 2, PerturbationFamily::default_amplitudes())
                .unwrap();
        let report = measure_deficit(&fam).unwrap();
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(report.predicted_c2, 1.0 / pi, epsilon = 1e-4);
        assert!(
            (report.c2 - 1.0 / pi).abs() <= 0.15 / pi,
            "fitted c2 {} vs predicted {}",
            report.c2,
            1.0 / pi
        );
        for &d in &report.deficits {
            assert!(d >= -fam_grid_eps(), "negative deficit {d}");
        }
        let slope = report.loglog_slope.expect("positive deficits");
        assert!((slope - 2.0).abs() <= 0.2, "slope {slope}");
    }

    fn fam_grid_eps() -> f64 {
        Grid::sphere(512, 256).eps_grid()
    }
}
