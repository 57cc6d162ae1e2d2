//! Two-point symmetrization across oriented hyperplanes, hyperplane
//! schedules that drive arbitrary sets to polar caps, and the
//! band-landing search along a continuous path of hyperplanes.
//!
//! Cells are paired with their mirror images by mutual nearest neighbors;
//! leftovers (and a thin band along the hyperplane) stay fixed, so the
//! swap preserves the occupied count exactly.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::TrilinearEvaluator;
use crate::geometry::{cap_height, north, Hyperplane, Point};
use crate::grid::{Grid, SphericalSet};
use crate::orbit;

/// Mirror pairing of grid cells across one hyperplane. Pairs store the
/// positive-side cell first; cells without a mutual partner, or closer to
/// the hyperplane than half a local cell width, are left fixed.
#[derive(Debug, Clone)]
pub struct PairingTable {
    grid: Arc<Grid>,
    hyperplane: Hyperplane,
    pairs: Vec<(u32, u32)>,
    fixed: Vec<u32>,
}

impl PairingTable {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn hyperplane(&self) -> &Hyperplane {
        &self.hyperplane
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn fixed_cells(&self) -> &[u32] {
        &self.fixed
    }

    pub fn fixed_fraction(&self) -> f64 {
        self.fixed.len() as f64 / self.grid.n_cells() as f64
    }
}

#[inline]
fn strictly_opposite(a: f64, b: f64) -> bool {
    (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0)
}

/// Mutual-nearest-neighbor pairing of cells with their reflections.
///
/// First pass: pairs whose containing cells point at each other. Second
/// pass: leftovers matched greedily (in index order) to the nearest free
/// cell adjacent to their reflected image. Remaining cells — those on the
/// hyperplane or squeezed out near it — stay fixed.
pub fn build_pairing(grid: &Arc<Grid>, h: &Hyperplane) -> PairingTable {
    let n = grid.n_cells();
    let nodes = grid.nodes_xyz();
    let nrm = h.normal();
    let mut side = vec![0.0f64; n];
    let mut refl = vec![[0.0f64; 3]; n];
    let mut target = vec![0u32; n];
    for i in 0..n {
        let p = nodes[i];
        let s = p[0] * nrm.x() + p[1] * nrm.y() + p[2] * nrm.z();
        side[i] = s;
        let y = [
            p[0] - 2.0 * s * nrm.x(),
            p[1] - 2.0 * s * nrm.y(),
            p[2] - 2.0 * s * nrm.z(),
        ];
        refl[i] = y;
        target[i] = grid.locate(&Point(y)) as u32;
    }

    let mut partner = vec![u32::MAX; n];
    let mut pairs = Vec::with_capacity(n / 2);
    let push = |pairs: &mut Vec<(u32, u32)>, i: usize, j: usize, side: &[f64]| {
        if side[i] > 0.0 {
            pairs.push((i as u32, j as u32));
        } else {
            pairs.push((j as u32, i as u32));
        }
    };

    for i in 0..n {
        let j = target[i] as usize;
        if j <= i || target[j] as usize != i || !strictly_opposite(side[i], side[j]) {
            continue;
        }
        partner[i] = j as u32;
        partner[j] = i as u32;
        push(&mut pairs, i, j, &side);
    }

    let len = grid.ring_len();
    let rings = grid.rings();
    for i in 0..n {
        if partner[i] != u32::MAX || side[i] == 0.0 {
            continue;
        }
        let (k0, q0) = grid.split_index(target[i] as usize);
        let mut best: Option<(f64, usize)> = None;
        let k_lo = k0.saturating_sub(1);
        let k_hi = (k0 + 1).min(rings - 1);
        for k in k_lo..=k_hi {
            for dq in -1i64..=1 {
                let q = (q0 as i64 + dq).rem_euclid(len as i64) as usize;
                let cand = grid.cell_index(k, q);
                if cand == i || partner[cand] != u32::MAX || !strictly_opposite(side[i], side[cand])
                {
                    continue;
                }
                let y = refl[i];
                let c = nodes[cand];
                let d2 = (y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2) + (y[2] - c[2]).powi(2);
                if best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && cand < bi)) {
                    best = Some((d2, cand));
                }
            }
        }
        if let Some((_, j)) = best {
            partner[i] = j as u32;
            partner[j] = i as u32;
            push(&mut pairs, i, j, &side);
        }
    }

    let fixed = (0..n)
        .filter(|&i| partner[i] == u32::MAX)
        .map(|i| i as u32)
        .collect();
    PairingTable {
        grid: grid.clone(),
        hyperplane: *h,
        pairs,
        fixed,
    }
}

/// Two-point symmetrization with a prebuilt pairing: each mirror pair
/// keeps its union on the positive side and its intersection on the
/// negative side. The occupied count is preserved exactly.
pub fn polarize_with(set: &SphericalSet, table: &PairingTable) -> SphericalSet {
    let mut out = set.clone();
    for &(plus, minus) in &table.pairs {
        let (p, m) = (plus as usize, minus as usize);
        let a = set.contains(p);
        let b = set.contains(m);
        if a != b {
            // (a|b, a&b) differs from (a, b) only when mass sits on the
            // negative side alone.
            if b {
                out.insert(p);
                out.remove(m);
            }
        }
    }
    out
}

/// Two-point symmetrization, building the pairing on the fly.
pub fn polarize(set: &SphericalSet, h: &Hyperplane) -> SphericalSet {
    polarize_with(set, &build_pairing(set.grid(), h))
}

/// Pairing tables cached by the quantized hyperplane normal.
pub struct Polarizer {
    grid: Arc<Grid>,
    cache: HashMap<[i64; 3], Arc<PairingTable>>,
}

impl Polarizer {
    pub fn new(grid: Arc<Grid>) -> Self {
        Polarizer {
            grid,
            cache: HashMap::new(),
        }
    }

    pub fn table(&mut self, h: &Hyperplane) -> Arc<PairingTable> {
        let n = h.normal();
        let key = [
            (n.x() * 1e6).round() as i64,
            (n.y() * 1e6).round() as i64,
            (n.z() * 1e6).round() as i64,
        ];
        // Random schedules rarely repeat a normal; keep the cache bounded.
        if self.cache.len() >= 64 && !self.cache.contains_key(&key) {
            self.cache.clear();
        }
        self.cache
            .entry(key)
            .or_insert_with(|| Arc::new(build_pairing(&self.grid, h)))
            .clone()
    }

    pub fn polarize(&mut self, set: &SphericalSet, h: &Hyperplane) -> SphericalSet {
        polarize_with(set, &self.table(h))
    }
}

/// Hyperplane schedule for the convergence flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Seeded uniform normals on the hemisphere around the pole.
    Random { seed: u64 },
    /// Low-discrepancy (golden-angle) normals on the same hemisphere.
    Deterministic,
}

enum ScheduleState {
    Random(ChaCha8Rng),
    Deterministic(u64),
}

impl ScheduleState {
    fn new(schedule: Schedule) -> Self {
        match schedule {
            Schedule::Random { seed } => ScheduleState::Random(ChaCha8Rng::seed_from_u64(seed)),
            Schedule::Deterministic => ScheduleState::Deterministic(0),
        }
    }

    /// Next normal with nonnegative pole component, so the pole lies in
    /// the positive half-space and mass migrates toward it.
    fn next(&mut self, d: u8) -> Hyperplane {
        match self {
            ScheduleState::Random(rng) => loop {
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                let z: f64 = if d == 1 {
                    0.0
                } else {
                    StandardNormal.sample(rng)
                };
                let norm = (x * x + y * y + z * z).sqrt();
                if norm < 1e-9 {
                    continue;
                }
                let mut v = [x / norm, y / norm, z / norm];
                let pole = d as usize; // index of the pole coordinate
                if v[pole] < 0.0 {
                    v = [-v[0], -v[1], -v[2]];
                }
                return Hyperplane::new(Point(v)).expect("unit normal");
            },
            ScheduleState::Deterministic(i) => {
                *i += 1;
                let k = *i as f64;
                let h = if d == 1 {
                    let theta = (k * 0.618_033_988_749_894_9).fract() * std::f64::consts::PI;
                    Hyperplane::from_direction(theta.cos(), theta.sin(), 0.0)
                } else {
                    let z = (k * 0.618_033_988_749_894_9).fract();
                    let s = (1.0 - z * z).max(0.0).sqrt();
                    let beta = k * 2.399_963_229_728_653;
                    Hyperplane::from_direction(s * beta.cos(), s * beta.sin(), z)
                };
                h.expect("unit normal")
            }
        }
    }
}

/// One recorded step of the convergence flow.
#[derive(Debug, Clone, Serialize)]
pub struct FlowStep {
    pub normal: Point,
    pub t_value: f64,
    pub dist: [f64; 2],
}

/// Trace of a polarization flow. `dist` entries measure the symmetric
/// difference of each set to its own polar rearrangement.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub steps: Vec<FlowStep>,
    pub converged: bool,
    pub initial_t: f64,
    pub initial_dist: [f64; 2],
    pub terminal: (SphericalSet, SphericalSet),
}

impl FlowTrajectory {
    pub fn final_dist(&self) -> [f64; 2] {
        self.steps
            .last()
            .map(|s| s.dist)
            .unwrap_or(self.initial_dist)
    }

    /// CSV export: header row, then one row per applied hyperplane.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,normal_x,normal_y,normal_z,T_value,dist1,dist2")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                i + 1,
                s.normal.x(),
                s.normal.y(),
                s.normal.z(),
                s.t_value,
                s.dist[0],
                s.dist[1]
            )?;
        }
        Ok(())
    }
}

fn rearrangement_distance(set: &SphericalSet, target: &SphericalSet) -> f64 {
    set.symm_diff_measure(target).expect("same grid")
}

/// Empirical centroid direction of the union of both sets.
fn centroid(e1: &SphericalSet, e2: &SphericalSet) -> Option<Point> {
    let grid = e1.grid();
    let mut acc = [0.0f64; 3];
    for i in e1.occupied().chain(e2.occupied()) {
        let p = grid.node(i);
        acc[0] += p.x();
        acc[1] += p.y();
        acc[2] += p.z();
    }
    Point::normalized(acc[0], acc[1], acc[2]).ok()
}

/// Applies the schedule's polarizations to both sets until each is within
/// `target` of its polar rearrangement or `max_steps` is exhausted.
/// Every 25th step uses the bisector plane of (centroid, pole), which
/// recenters a nearly converged off-center bulk in one reflection.
pub fn converge_to_caps(
    e1: &SphericalSet,
    e2: &SphericalSet,
    a: f64,
    schedule: Schedule,
    max_steps: usize,
    target: f64,
) -> Result<FlowTrajectory> {
    if e1.grid().as_ref() != e2.grid().as_ref() {
        return Err(Error::GridMismatch(
            "flow needs both sets on one grid".into(),
        ));
    }
    let grid = e1.grid().clone();
    let d = grid.dim();
    let pole = north(d);
    let evaluator = TrilinearEvaluator::new(grid.clone(), grid.clone(), a)?;
    let target1 = e1.rearrange();
    let target2 = e2.rearrange();
    let mut cur1 = e1.clone();
    let mut cur2 = e2.clone();
    let mut state = ScheduleState::new(schedule);
    let mut polarizer = Polarizer::new(grid.clone());

    let mut dist = [
        rearrangement_distance(&cur1, &target1),
        rearrangement_distance(&cur2, &target2),
    ];
    let initial_t = evaluator.evaluate(&cur1, &cur2)?;
    let initial_dist = dist;
    let mut steps = Vec::new();
    let mut converged = dist[0].max(dist[1]) <= target;

    let mut step_index = 0usize;
    while !converged && step_index < max_steps {
        step_index += 1;
        let h = if step_index.is_multiple_of(25) {
            match centroid(&cur1, &cur2) {
                Some(c) => {
                    let v = [pole.x() - c.x(), pole.y() - c.y(), pole.z() - c.z()];
                    match Point::normalized(v[0], v[1], v[2]) {
                        Ok(nrm) => Hyperplane::new(nrm).expect("unit"),
                        Err(_) => state.next(d), // centroid already at the pole
                    }
                }
                None => state.next(d),
            }
        } else {
            state.next(d)
        };
        let table = polarizer.table(&h);
        cur1 = polarize_with(&cur1, &table);
        cur2 = polarize_with(&cur2, &table);
        dist = [
            rearrangement_distance(&cur1, &target1),
            rearrangement_distance(&cur2, &target2),
        ];
        let t_value = evaluator.evaluate(&cur1, &cur2)?;
        steps.push(FlowStep {
            normal: *h.normal(),
            t_value,
            dist,
        });
        converged = dist[0].max(dist[1]) <= target;
    }

    Ok(FlowTrajectory {
        steps,
        converged,
        initial_t,
        initial_dist,
        terminal: (cur1, cur2),
    })
}

fn orbit_distance_of_pair(e1: &SphericalSet, e2: &SphericalSet) -> Result<f64> {
    let d = e1.grid().dim();
    let h = [
        cap_height(e1.measure().clamp(0.0, 1.0), d)?,
        cap_height(e2.measure().clamp(0.0, 1.0), d)?,
    ];
    Ok(orbit::dist_to_cap_orbit(e1, e2, h)?.value)
}

/// Searches a one-parameter rotation path of hyperplanes starting at `h0`
/// for one whose polarized pair has orbit distance strictly inside the
/// band `(lo, hi)`.
///
/// Requires the jump-across configuration: polarizing with `h0` lands
/// below `lo` while the unpolarized pair sits above `hi`. Returns the
/// landed hyperplane and the polarized pair.
pub fn land_in_band(
    e1: &SphericalSet,
    e2: &SphericalSet,
    h0: &Hyperplane,
    band: (f64, f64),
) -> Result<(Hyperplane, (SphericalSet, SphericalSet))> {
    let (lo, hi) = band;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::Argument(format!("band ({lo}, {hi}) is empty")));
    }
    let grid = e1.grid().clone();
    let polarized_dist = |h: &Hyperplane| -> Result<(f64, (SphericalSet, SphericalSet))> {
        let table = build_pairing(&grid, h);
        let p1 = polarize_with(e1, &table);
        let p2 = polarize_with(e2, &table);
        let dist = orbit_distance_of_pair(&p1, &p2)?;
        Ok((dist, (p1, p2)))
    };

    let (d0, sets0) = polarized_dist(h0)?;
    if d0 > lo && d0 < hi {
        return Ok((*h0, sets0));
    }
    let unpolarized = orbit_distance_of_pair(e1, e2)?;
    if !(d0 <= lo && unpolarized >= hi) {
        return Err(Error::Precondition(format!(
            "band landing needs dist(E_H0) <= {lo} and dist(E) >= {hi}; got {d0} and {unpolarized}"
        )));
    }

    // Rotate the normal toward a perpendicular direction; at angle tau the
    // polarization weakens continuously toward a plane unrelated to the pair.
    let n0 = *h0.normal();
    let d = grid.dim();
    let pole = north(d);
    let along = pole.dot(&n0);
    let axis = Point::normalized(
        pole.x() - along * n0.x(),
        pole.y() - along * n0.y(),
        pole.z() - along * n0.z(),
    )
    .or_else(|_| Point::normalized(1.0 - n0.x() * n0.x(), -n0.x() * n0.y(), -n0.x() * n0.z()))?;
    let at = |tau: f64| -> Hyperplane {
        let (s, c) = tau.sin_cos();
        Hyperplane::new(
            Point::normalized(
                c * n0.x() + s * axis.x(),
                c * n0.y() + s * axis.y(),
                c * n0.z() + s * axis.z(),
            )
            .expect("nonzero"),
        )
        .expect("unit")
    };

    // Coarse sweep to bracket the band, recording the first crossing.
    let mut tau_lo = 0.0f64;
    let mut bracket_hi = None;
    for i in 1..=16 {
        let tau = std::f64::consts::PI * i as f64 / 16.0;
        let (dist, sets) = polarized_dist(&at(tau))?;
        if dist > lo && dist < hi {
            return Ok((at(tau), sets));
        }
        if dist >= hi {
            bracket_hi = Some(tau);
            break;
        }
        tau_lo = tau;
    }
    let mut tau_hi = bracket_hi.ok_or_else(|| {
        Error::Precondition("no hyperplane on the path pushes the distance above the band".into())
    })?;

    for _ in 0..80 {
        let mid = 0.5 * (tau_lo + tau_hi);
        let (dist, sets) = polarized_dist(&at(mid))?;
        if dist > lo && dist < hi {
            return Ok((at(mid), sets));
        }
        if dist <= lo {
            tau_lo = mid;
        } else {
            tau_hi = mid;
        }
    }
    Err(Error::NonConvergence(
        "band landing bisection exhausted; the band may be thinner than one cell flip".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::evaluate_t;
    use crate::geometry::Cap;
    use crate::grid::{north_cap, random_set, rasterize_cap};
    use rand::{Rng, SeedableRng};

    #[test]
    fn pairing_on_aligned_circle_plane_is_perfect() {
        let n = 256;
        let grid = Grid::circle(n);
        // Reflection across the line at angle beta maps node q to a node
        // exactly when 2*beta is a multiple of the cell width.
        let beta = 8.0 * grid.azimuth_step() - std::f64::consts::FRAC_PI_2;
        let h = Hyperplane::from_direction(beta.cos(), beta.sin(), 0.0).unwrap();
        let table = build_pairing(&grid, &h);
        for &f in table.fixed_cells() {
            let side = h.side(&grid.node(f as usize));
            assert!(
                side.abs() < grid.azimuth_step(),
                "fixed cell away from the hyperplane"
            );
        }
        assert!(table.fixed_cells().len() <= 2);
    }

    #[test]
    fn pairing_on_equator_swaps_rings() {
        let grid = Grid::sphere(16, 12);
        let h = Hyperplane::from_direction(0.0, 0.0, 1.0).unwrap();
        let table = build_pairing(&grid, &h);
        assert!(table.fixed_cells().is_empty());
        for &(p, m) in table.pairs() {
            let (kp, qp) = grid.split_index(p as usize);
            let (km, qm) = grid.split_index(m as usize);
            assert_eq!(qp, qm);
            assert_eq!(kp, 12 - 1 - km);
            assert!(grid.ring_t(kp) > 0.0 && grid.ring_t(km) < 0.0);
        }
    }

    #[test]
    fn pairing_fixed_fraction_is_small() {
        let grid = Grid::sphere(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            let h = Hyperplane::from_direction(x, y, z).unwrap();
            worst = worst.max(build_pairing(&grid, &h).fixed_fraction());
        }
        assert!(worst <= 8.0 / 64.0, "fixed fraction {worst} too large");
    }

    #[test]
    fn polarize_preserves_count_and_is_idempotent() {
        let grid = Grid::sphere(48, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let set = random_set(rng.random(), rng.random(), &grid).unwrap();
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            let h = Hyperplane::from_direction(x, y, z).unwrap();
            let table = build_pairing(&grid, &h);
            let once = polarize_with(&set, &table);
            assert_eq!(once.occupied_count(), set.occupied_count());
            assert_eq!(polarize_with(&once, &table), once);
        }
    }

    #[test]
    fn polarize_fixes_sets_on_positive_side() {
        let grid = Grid::sphere(32, 32);
        let h = Hyperplane::from_direction(0.0, 0.0, 1.0).unwrap();
        let cap = north_cap(0.2, &grid).unwrap();
        assert_eq!(polarize(&cap, &h), cap);
        // A southern cap reflects onto its mirror image.
        let south = rasterize_cap(
            &Cap::from_measure(Point::new(0.0, 0.0, -1.0), 0.2, 2).unwrap(),
            &grid,
        )
        .unwrap();
        let reflected = polarize(&south, &h);
        assert_eq!(reflected, cap);
    }

    #[test]
    fn polarize_never_decreases_positive_mass() {
        let grid = Grid::sphere(40, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let set = random_set(rng.random(), rng.random(), &grid).unwrap();
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            let h = Hyperplane::from_direction(x, y, z).unwrap();
            let before = set
                .occupied()
                .filter(|&i| h.side(&grid.node(i)) > 0.0)
                .count();
            let after = polarize(&set, &h)
                .occupied()
                .filter(|&i| h.side(&grid.node(i)) > 0.0)
                .count();
            assert!(after >= before);
        }
    }

    #[test]
    fn polarize_monotonicity_within_grid_slack() {
        let grid = Grid::sphere(48, 48);
        let eps = grid.eps_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let a = -0.6 + 1.2 * rng.random::<f64>();
            let e = random_set(0.2 + 0.6 * rng.random::<f64>(), rng.random(), &grid).unwrap();
            let f = random_set(0.2 + 0.6 * rng.random::<f64>(), rng.random(), &grid).unwrap();
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            let h = Hyperplane::from_direction(x, y, z).unwrap();
            let table = build_pairing(&grid, &h);
            let before = evaluate_t(&e, &f, a).unwrap();
            let after =
                evaluate_t(&polarize_with(&e, &table), &polarize_with(&f, &table), a).unwrap();
            assert!(
                after >= before - eps,
                "monotonicity violated: {before} -> {after}"
            );
        }
    }

    #[test]
    fn converge_stops_immediately_on_caps() {
        let grid = Grid::sphere(32, 32);
        let c1 = north_cap(0.3, &grid).unwrap();
        let c2 = north_cap(0.5, &grid).unwrap();
        let flow =
            converge_to_caps(&c1, &c2, 0.0, Schedule::Random { seed: 1 }, 100, 0.01).unwrap();
        assert!(flow.converged);
        assert!(flow.steps.is_empty());
    }

    #[test]
    fn single_reflection_centers_offset_cap() {
        let grid = Grid::sphere(128, 128);
        let center = Point::normalized(0.6, -0.3, 0.74).unwrap();
        let cap = rasterize_cap(&Cap::from_measure(center, 0.25, 2).unwrap(), &grid).unwrap();
        let h = Hyperplane::from_direction(-center.x(), -center.y(), 1.0 - center.z()).unwrap();
        let polarized = polarize(&cap, &h);
        let target = cap.rearrange();
        let dist = polarized.symm_diff_measure(&target).unwrap();
        assert!(
            dist <= grid.eps_grid(),
            "distance after recentering: {dist}"
        );
    }

    #[test]
    fn flow_reaches_caps_on_small_grid() {
        let grid = Grid::sphere(64, 64);
        let e1 = random_set(0.35, 41, &grid).unwrap();
        let e2 = random_set(0.5, 42, &grid).unwrap();
        let flow =
            converge_to_caps(&e1, &e2, 0.0, Schedule::Random { seed: 7 }, 500, 0.05).unwrap();
        assert!(flow.converged, "final dist {:?}", flow.final_dist());
        // The functional never drops along the flow beyond grid slack.
        let eps = grid.eps_grid();
        let mut prev = flow.initial_t;
        for s in &flow.steps {
            assert!(s.t_value >= prev - eps);
            prev = s.t_value;
        }
    }

    #[test]
    fn polarizer_caches_by_quantized_normal() {
        let grid = Grid::sphere(16, 16);
        let mut polarizer = Polarizer::new(grid);
        let h = Hyperplane::from_direction(0.3, -0.1, 0.95).unwrap();
        let a = polarizer.table(&h);
        let b = polarizer.table(&h);
        assert!(Arc::ptr_eq(&a, &b), "same normal must hit the cache");
        // A normal differing beyond the quantum gets its own table.
        let h2 = Hyperplane::from_direction(0.3, -0.1, 0.96).unwrap();
        let c = polarizer.table(&h2);
        assert!(!Arc::ptr_eq(&a, &c));
    }

    #[test]
    fn flow_on_circle_with_deterministic_schedule() {
        let grid = Grid::circle(1024);
        let e1 = random_set(0.3, 13, &grid).unwrap();
        let e2 = random_set(0.55, 14, &grid).unwrap();
        let flow = converge_to_caps(&e1, &e2, 0.2, Schedule::Deterministic, 500, 0.05).unwrap();
        assert!(flow.converged, "final dist {:?}", flow.final_dist());
        // Deterministic schedule: rerunning reproduces the trace exactly.
        let again = converge_to_caps(&e1, &e2, 0.2, Schedule::Deterministic, 500, 0.05).unwrap();
        assert_eq!(flow.steps.len(), again.steps.len());
        assert_eq!(flow.terminal.0, again.terminal.0);
    }

    #[test]
    fn flow_rejects_mismatched_grids() {
        let a = random_set(0.3, 1, &Grid::sphere(16, 16)).unwrap();
        let b = random_set(0.3, 1, &Grid::sphere(16, 12)).unwrap();
        assert!(matches!(
            converge_to_caps(&a, &b, 0.0, Schedule::Deterministic, 10, 0.1),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let grid = Grid::sphere(24, 24);
        let e1 = random_set(0.4, 1, &grid).unwrap();
        let e2 = random_set(0.4, 2, &grid).unwrap();
        let flow = converge_to_caps(&e1, &e2, 0.0, Schedule::Deterministic, 8, 0.0).unwrap();
        let mut buf = Vec::new();
        flow.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,normal_x,normal_y,normal_z,T_value,dist1,dist2"
        );
        assert_eq!(lines.count(), flow.steps.len());
    }

    #[test]
    fn vacuous_band_returns_initial_hyperplane() {
        let grid = Grid::sphere(24, 24);
        let e1 = random_set(0.35, 5, &grid).unwrap();
        let e2 = random_set(0.45, 6, &grid).unwrap();
        let h0 = Hyperplane::from_direction(0.2, 0.1, 0.97).unwrap();
        let (h, _) = land_in_band(&e1, &e2, &h0, (0.0, 1.0)).unwrap();
        assert_eq!(h.normal(), h0.normal());
    }

    /// Antipodal cap pair: polarizing across the plane orthogonal to the
    /// axis reflects the far cap onto the near one (distance collapses);
    /// rotating that plane away drags the distance back up through any
    /// band in between.
    #[test]
    fn band_landing_on_antipodal_cap_pair() {
        let grid = Grid::sphere(64, 64);
        let p = Point::normalized(0.5, 0.2, 0.84).unwrap();
        let e = 0.1;
        let cap_at = |c: Point| rasterize_cap(&Cap::from_measure(c, e, 2).unwrap(), &grid).unwrap();
        let e1 = cap_at(p);
        let e2 = cap_at(Point::new(-p.x(), -p.y(), -p.z()));
        let h0 = Hyperplane::new(p).unwrap();
        let band = (0.02, 0.1);
        let (h, sets) = land_in_band(&e1, &e2, &h0, band).unwrap();
        // The landed hyperplane differs from the collapsing one.
        assert!(h.normal().dot(&p) < 1.0 - 1e-12);
        let heights = [
            crate::geometry::cap_height(sets.0.measure(), 2).unwrap(),
            crate::geometry::cap_height(sets.1.measure(), 2).unwrap(),
        ];
        let landed = orbit::dist_to_cap_orbit(&sets.0, &sets.1, heights)
            .unwrap()
            .value;
        assert!(
            landed > band.0 && landed < band.1,
            "landed distance {landed} outside ({}, {})",
            band.0,
            band.1
        );
    }

    #[test]
    fn band_landing_rejects_unbracketed_input() {
        let grid = Grid::sphere(32, 32);
        let c1 = north_cap(0.3, &grid).unwrap();
        let c2 = north_cap(0.4, &grid).unwrap();
        let h0 = Hyperplane::from_direction(0.1, 0.0, 0.99).unwrap();
        // Caps are already at distance ~0: nothing sits above the band.
        let err = land_in_band(&c1, &c2, &h0, (0.05, 0.1)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "got {err}");
    }
}
