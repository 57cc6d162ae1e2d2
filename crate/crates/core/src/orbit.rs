//! Distance from a pair of sets to the orbit of their polar cap pair
//! under the symmetry group of the functional.
//!
//! Every orthogonal map sends a cap to a cap of the same radius, and both
//! caps of the rearranged pair share one center, so the infimum over the
//! group is an infimum over a single center point on the sphere. The
//! search sweeps every grid node (plus the poles), then refines the best
//! few candidates by derivative-free geodesic descent.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::RingStats;
use crate::geometry::{AdmissibleTriple, Point};
use crate::grid::{Grid, SphericalSet};
use crate::numeric::clamp_unit;

/// Result of the orbit-distance search.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceResult {
    /// max over the two sets of the symmetric difference to its cap.
    pub value: f64,
    /// Optimal common cap center found.
    pub center: Point,
    /// Per-set symmetric differences at that center.
    pub per_set: [f64; 2],
    /// Objective evaluations spent.
    pub iterations: usize,
}

/// Measure of `E` inside the cap of radius `r` around `p`.
pub fn cap_overlap(set: &SphericalSet, p: &Point, r: f64) -> f64 {
    let grid = set.grid();
    let thr = r.cos();
    let pp = grid.decompose(p);
    let hits = set
        .occupied()
        .filter(|&i| grid.node_dot(i, &pp) >= thr)
        .count();
    hits as f64 * grid.cell_measure()
}

/// Candidate cap center in ring coordinates. The azimuth is carried as an
/// anchor cell index plus an offset, so joint whole-cell rotations of the
/// input shift the anchor and leave every computed quantity bit-identical.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    t: f64,
    s: f64,
    anchor: i64,
    dphi: f64,
}

impl Candidate {
    fn at_node(grid: &Grid, cell: usize) -> Candidate {
        let (k, q) = grid.split_index(cell);
        Candidate {
            t: grid.ring_t(k),
            s: grid.ring_s(k),
            anchor: q as i64,
            dphi: 0.0,
        }
    }

    fn to_point(self, grid: &Grid) -> Point {
        let phi = (self.anchor as f64 + 0.5) * grid.azimuth_step() + self.dphi;
        match grid.dim() {
            1 => Point::new(phi.cos(), phi.sin(), 0.0),
            _ => Point::new(self.s * phi.cos(), self.s * phi.sin(), self.t),
        }
    }
}

enum RingWindow {
    Empty,
    Full,
    Range(i64, i64),
}

struct Objective<'a> {
    grid: &'a Grid,
    stats: [&'a RingStats; 2],
    totals: [u64; 2],
    heights: [f64; 2],
}

impl<'a> Objective<'a> {
    /// Admissible azimuth window of one ring around the candidate center:
    /// a conservative arccos window whose ends are settled by the exact
    /// cell predicate, so node-centered candidates reproduce cap
    /// rasterization decisions exactly.
    fn ring_window(&self, k: usize, cand: &Candidate, thr: f64) -> RingWindow {
        let grid = self.grid;
        let len = grid.ring_len() as i64;
        let step = grid.azimuth_step();
        let base = grid.ring_t(k) * cand.t;
        let coef = grid.ring_s(k) * cand.s;
        let pred =
            |q: i64| base + coef * (((q - cand.anchor) as f64) * step - cand.dphi).cos() >= thr;
        if coef < 1e-14 {
            return if base >= thr {
                RingWindow::Full
            } else {
                RingWindow::Empty
            };
        }
        let x = (thr - base) / coef;
        let ctr = (cand.dphi / step).round() as i64 + cand.anchor;
        if x <= -1.0 {
            if pred(ctr + len / 2) {
                return RingWindow::Full;
            }
        } else if x >= 1.0 && !pred(ctr) {
            return RingWindow::Empty;
        }
        let delta = clamp_unit(x).acos();
        let mut lo = cand.anchor + ((cand.dphi - delta) / step).ceil() as i64 - 2;
        let mut hi = cand.anchor + ((cand.dphi + delta) / step).floor() as i64 + 2;
        if hi - lo + 1 > len {
            let mid = cand.anchor + (cand.dphi / step).round() as i64;
            lo = mid - len / 2;
            hi = lo + len - 1;
        }
        while lo <= hi && !pred(lo) {
            lo += 1;
        }
        while lo <= hi && !pred(hi) {
            hi -= 1;
        }
        let mut guard = 0;
        while hi - lo + 1 < len && pred(lo - 1) && guard < 4 {
            lo -= 1;
            guard += 1;
        }
        guard = 0;
        while hi - lo + 1 < len && pred(hi + 1) && guard < 4 {
            hi += 1;
            guard += 1;
        }
        if lo > hi {
            RingWindow::Empty
        } else if hi - lo + 1 >= len {
            RingWindow::Full
        } else {
            RingWindow::Range(lo, hi)
        }
    }

    /// Exact cell count of `E_j Δ cap(center, r_j)` for both sets, as the
    /// max-measure objective plus the per-set values.
    fn eval(&self, cand: &Candidate) -> (f64, [f64; 2]) {
        let cm = self.grid.cell_measure();
        let mut per_set = [0.0f64; 2];
        for (j, slot) in per_set.iter_mut().enumerate() {
            let thr = self.heights[j];
            let rs = self.stats[j];
            let mut overlap = 0u64;
            let mut cap_cells = 0u64;
            for k in 0..self.grid.rings() {
                match self.ring_window(k, cand, thr) {
                    RingWindow::Empty => {}
                    RingWindow::Full => {
                        overlap += rs.counts[k] as u64;
                        cap_cells += self.grid.ring_len() as u64;
                    }
                    RingWindow::Range(lo, hi) => {
                        overlap += rs.range_count(k, lo, hi) as u64;
                        cap_cells += (hi - lo + 1) as u64;
                    }
                }
            }
            let sym = self.totals[j] + cap_cells - 2 * overlap;
            *slot = sym as f64 * cm;
        }
        (per_set[0].max(per_set[1]), per_set)
    }
}

/// Orbit distance against caps of the given heights (used internally when
/// only the measures are known).
pub(crate) fn dist_to_cap_orbit(
    e1: &SphericalSet,
    e2: &SphericalSet,
    heights: [f64; 2],
) -> Result<DistanceResult> {
    if e1.grid().as_ref() != e2.grid().as_ref() {
        return Err(Error::GridMismatch("sets live on different grids".into()));
    }
    let grid = e1.grid().clone();
    let rs1 = RingStats::build(e1);
    let rs2 = RingStats::build(e2);
    let objective = Objective {
        grid: &grid,
        stats: [&rs1, &rs2],
        totals: [e1.occupied_count() as u64, e2.occupied_count() as u64],
        heights,
    };

    // Coarse stage: every node, plus both poles for d = 2 (the poles are
    // not nodes, yet polar caps are exactly ring-aligned there).
    let n = grid.n_cells();
    let mut candidates: Vec<(usize, Candidate)> =
        (0..n).map(|i| (i, Candidate::at_node(&grid, i))).collect();
    if grid.dim() == 2 {
        candidates.push((
            n,
            Candidate {
                t: 1.0,
                s: 0.0,
                anchor: 0,
                dphi: 0.0,
            },
        ));
        candidates.push((
            n + 1,
            Candidate {
                t: -1.0,
                s: 0.0,
                anchor: 0,
                dphi: 0.0,
            },
        ));
    }
    let mut sweep: Vec<(f64, usize, Candidate)> = candidates
        .par_iter()
        .map(|&(idx, cand)| (objective.eval(&cand).0, idx, cand))
        .collect();
    sweep.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let evals_coarse = sweep.len();
    let coarse_best = sweep[0];

    // Refinement: shrinking geodesic steps from the best few nodes.
    let stop = 0.5 * grid.cell_diameter();
    let mut evals = evals_coarse;
    let mut best = (coarse_best.0, coarse_best.2);
    for &(val0, _, start) in sweep.iter().take(5) {
        let mut cur = start;
        let mut cur_val = val0;
        let mut step = grid.cell_diameter();
        while step >= stop {
            let moves = neighbor_moves(&grid, &cur, step);
            let mut improved = false;
            for cand in moves {
                let v = objective.eval(&cand).0;
                evals += 1;
                if v < cur_val {
                    cur_val = v;
                    cur = cand;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if cur_val < best.0 {
            best = (cur_val, cur);
        }
    }

    let (value, per_set) = objective.eval(&best.1);
    Ok(DistanceResult {
        value,
        center: best.1.to_point(&grid),
        per_set,
        iterations: evals + 1,
    })
}

fn neighbor_moves(grid: &Grid, cur: &Candidate, step: f64) -> Vec<Candidate> {
    if grid.dim() == 1 {
        return vec![
            Candidate {
                dphi: cur.dphi + step,
                ..*cur
            },
            Candidate {
                dphi: cur.dphi - step,
                ..*cur
            },
        ];
    }
    let psi = clamp_unit(cur.t).acos();
    let mut out = Vec::with_capacity(4);
    for dpsi in [step, -step] {
        let p = (psi + dpsi).clamp(0.0, std::f64::consts::PI);
        out.push(Candidate {
            t: p.cos(),
            s: p.sin().max(0.0),
            ..*cur
        });
    }
    let az = step / cur.s.max(1e-6);
    out.push(Candidate {
        dphi: cur.dphi + az,
        ..*cur
    });
    out.push(Candidate {
        dphi: cur.dphi - az,
        ..*cur
    });
    out
}

/// Distance of the pair to the orbit of its rearranged cap pair. The
/// triple supplies the cap heights; its measures must match the sets at
/// grid resolution.
pub fn dist_to_orbit(
    e1: &SphericalSet,
    e2: &SphericalSet,
    triple: &AdmissibleTriple,
) -> Result<DistanceResult> {
    let tol = e1.grid().eps_grid();
    for (set, e) in [(e1, triple.e1), (e2, triple.e2)] {
        if (set.measure() - e).abs() > tol {
            return Err(Error::Precondition(format!(
                "set measure {} differs from triple measure {e} beyond grid tolerance",
                set.measure()
            )));
        }
    }
    dist_to_cap_orbit(e1, e2, triple.heights())
}
