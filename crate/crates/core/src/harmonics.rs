//! Functions on the boundary sphere of the cap pair: column-integrated
//! set deviations, harmonic projections, the second-order quadratic form
//! with its threshold kernel, the closed-form eigenvalues by which the
//! kernel acts on each harmonic degree, and the rotation that removes the
//! degree-1 component.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{weight, AdmissibleTriple, Point};
use crate::grid::{north_cap, SphericalSet};
use crate::numeric::{clamp_unit, Kahan};

const TWO_PI: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

/// A real function on the boundary sphere: `n` uniform angles on the
/// circle when the sets live on S^2, or the two points of S^0 when they
/// live on S^1. Angles are offset like grid cells, at `(q + 1/2) 2π/n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryFunction {
    /// 0 for the two-point boundary, 1 for the circle.
    pub boundary_dim: u8,
    pub values: Vec<f64>,
}

impl BoundaryFunction {
    pub fn circle(values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::Argument(
                "circle boundary needs at least 4 nodes".into(),
            ));
        }
        Ok(BoundaryFunction {
            boundary_dim: 1,
            values,
        })
    }

    pub fn two_point(plus: f64, minus: f64) -> Self {
        BoundaryFunction {
            boundary_dim: 0,
            values: vec![plus, minus],
        }
    }

    pub fn zeros_like(&self) -> Self {
        BoundaryFunction {
            boundary_dim: self.boundary_dim,
            values: vec![0.0; self.values.len()],
        }
    }

    /// Sampled pure harmonic `amp * sqrt(2) cos(n φ + phase)` on `nodes`
    /// circle nodes (unit norm when `amp = 1`).
    pub fn harmonic(degree: u32, amp: f64, phase: f64, nodes: usize) -> Result<Self> {
        let step = TWO_PI / nodes as f64;
        let values = (0..nodes)
            .map(|q| {
                let phi = (q as f64 + 0.5) * step;
                amp * std::f64::consts::SQRT_2 * (degree as f64 * phi + phase).cos()
            })
            .collect();
        BoundaryFunction::circle(values)
    }

    pub fn node_angle(&self, q: usize) -> f64 {
        (q as f64 + 0.5) * TWO_PI / self.values.len() as f64
    }

    /// Mean against the normalized boundary measure.
    pub fn mean(&self) -> f64 {
        let mut acc = Kahan::new();
        for &v in &self.values {
            acc.add(v);
        }
        acc.total() / self.values.len() as f64
    }

    /// `∫ f g dμ` with μ normalized.
    pub fn inner(&self, other: &BoundaryFunction) -> Result<f64> {
        if self.boundary_dim != other.boundary_dim || self.values.len() != other.values.len() {
            return Err(Error::GridMismatch(
                "boundary functions differ in shape".into(),
            ));
        }
        let mut acc = Kahan::new();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc.add(a * b);
        }
        Ok(acc.total() / self.values.len() as f64)
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self).expect("same shape")
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// Column-integrated deviation of a set from its polar cap: for each
/// boundary node, the height integral of the indicator of `E \ B`
/// (plus part) and of `B \ E` (minus part) against the area density.
/// Returns `(F, F_plus, F_minus)` with `F = F_plus - F_minus`.
pub fn associated_function(
    set: &SphericalSet,
    triple: &AdmissibleTriple,
    j: usize,
) -> Result<(BoundaryFunction, BoundaryFunction, BoundaryFunction)> {
    let grid = set.grid();
    if grid.dim() != triple.d {
        return Err(Error::GridMismatch(format!(
            "set dimension {} vs triple dimension {}",
            grid.dim(),
            triple.d
        )));
    }
    let ej = match j {
        1 => triple.e1,
        2 => triple.e2,
        _ => return Err(Error::Argument(format!("set index {j} must be 1 or 2"))),
    };
    let cap = north_cap(ej, grid)?;
    match grid.dim() {
        2 => {
            let n_phi = grid.ring_len();
            let dt = grid.dt();
            let mut plus = vec![0.0; n_phi];
            let mut minus = vec![0.0; n_phi];
            for k in 0..grid.rings() {
                let w = weight(grid.ring_t(k), 2)? * dt;
                for q in 0..n_phi {
                    let i = grid.cell_index(k, q);
                    match (set.contains(i), cap.contains(i)) {
                        (true, false) => plus[q] += w,
                        (false, true) => minus[q] += w,
                        _ => {}
                    }
                }
            }
            let f = plus.iter().zip(&minus).map(|(p, m)| p - m).collect();
            Ok((
                BoundaryFunction::circle(f)?,
                BoundaryFunction::circle(plus)?,
                BoundaryFunction::circle(minus)?,
            ))
        }
        1 => {
            // Columns are the two half-circles; a cell's exact height
            // extent integrates the density to (arc length)/π.
            let w = grid.azimuth_step() / PI;
            let mut plus = [0.0f64; 2];
            let mut minus = [0.0f64; 2];
            for i in 0..grid.n_cells() {
                let col = if grid.node(i).x() > 0.0 { 0 } else { 1 };
                match (set.contains(i), cap.contains(i)) {
                    (true, false) => plus[col] += w,
                    (false, true) => minus[col] += w,
                    _ => {}
                }
            }
            // Column integrals are per unit of boundary measure (each
            // point carries mass 1/2).
            let scale = 2.0;
            Ok((
                BoundaryFunction::two_point(
                    scale * (plus[0] - minus[0]),
                    scale * (plus[1] - minus[1]),
                ),
                BoundaryFunction::two_point(scale * plus[0], scale * plus[1]),
                BoundaryFunction::two_point(scale * minus[0], scale * minus[1]),
            ))
        }
        d => Err(Error::Argument(format!(
            "no boundary grid for dimension {d}"
        ))),
    }
}

/// Projection onto the harmonics of one degree: Fourier modes on the
/// circle boundary, the mean and the odd part on the two-point boundary.
pub fn project(f: &BoundaryFunction, degree: u32) -> BoundaryFunction {
    match f.boundary_dim {
        0 => {
            let (p, m) = (f.values[0], f.values[1]);
            match degree {
                0 => BoundaryFunction::two_point(0.5 * (p + m), 0.5 * (p + m)),
                1 => BoundaryFunction::two_point(0.5 * (p - m), -0.5 * (p - m)),
                _ => BoundaryFunction::two_point(0.0, 0.0),
            }
        }
        _ => {
            let n = f.values.len();
            let mut out = f.zeros_like();
            if degree == 0 {
                let mean = f.mean();
                out.values.iter_mut().for_each(|v| *v = mean);
                return out;
            }
            if degree as usize > n / 2 {
                return out;
            }
            let mut ac = Kahan::new();
            let mut bc = Kahan::new();
            for (q, &v) in f.values.iter().enumerate() {
                let ang = degree as f64 * f.node_angle(q);
                ac.add(v * ang.cos());
                bc.add(v * ang.sin());
            }
            // At the Nyquist degree only one mode survives on offset nodes.
            let scale = if 2 * degree as usize == n { 1.0 } else { 2.0 };
            let a = scale * ac.total() / n as f64;
            let b = scale * bc.total() / n as f64;
            for (q, v) in out.values.iter_mut().enumerate() {
                let ang = degree as f64 * f.node_angle(q);
                *v = a * ang.cos() + b * ang.sin();
            }
            out
        }
    }
}

/// Threshold for the boundary kernel: the two boundary circles of the cap
/// pair see each other through `s1 s2 θ1·θ2 + h1 h2 >= a`.
pub fn boundary_threshold(triple: &AdmissibleTriple) -> (f64, bool) {
    let s1 = (1.0 - triple.h1 * triple.h1).max(0.0).sqrt();
    let s2 = (1.0 - triple.h2 * triple.h2).max(0.0).sqrt();
    if s1 * s2 < 1e-300 {
        return (f64::INFINITY, true);
    }
    let u = (triple.a - triple.h1 * triple.h2) / (s1 * s2);
    (u, !(-1.0..=1.0).contains(&u))
}

/// The boundary quadratic form `Q(F, G)`: both functions integrated
/// against the indicator kernel `θ1·θ2 >= u_star`.
///
/// On the circle the inner integral is taken exactly against a local
/// quadratic reconstruction of `G`, so smooth integrands converge at
/// fourth order; the outer sum is a periodic midpoint rule.
pub fn q_form(
    f: &BoundaryFunction,
    g: &BoundaryFunction,
    triple: &AdmissibleTriple,
) -> Result<f64> {
    if f.boundary_dim != g.boundary_dim || f.values.len() != g.values.len() {
        return Err(Error::GridMismatch(
            "boundary functions differ in shape".into(),
        ));
    }
    let (u_star, _) = boundary_threshold(triple);
    match f.boundary_dim {
        0 => {
            let same = ((1.0 - triple.h1 * triple.h1).max(0.0)
                * (1.0 - triple.h2 * triple.h2).max(0.0))
            .sqrt()
                + triple.h1 * triple.h2
                >= triple.a;
            let diff = -((1.0 - triple.h1 * triple.h1).max(0.0)
                * (1.0 - triple.h2 * triple.h2).max(0.0))
            .sqrt()
                + triple.h1 * triple.h2
                >= triple.a;
            let (ms, md) = (same as u8 as f64, diff as u8 as f64);
            let (f1, f2) = (f.values[0], f.values[1]);
            let (g1, g2) = (g.values[0], g.values[1]);
            Ok(0.25 * (f1 * (ms * g1 + md * g2) + f2 * (md * g1 + ms * g2)))
        }
        _ => {
            if u_star >= 1.0 {
                return Ok(0.0);
            }
            let phi_star = clamp_unit(u_star).acos();
            let n = g.values.len();
            let step = TWO_PI / n as f64;
            let anti = QuadraticAntiderivative::build(&g.values, step);
            let mut acc = Kahan::new();
            for (q, &fv) in f.values.iter().enumerate() {
                let phi = (q as f64 + 0.5) * step;
                let window = anti.eval(phi + phi_star) - anti.eval(phi - phi_star);
                acc.add(fv * window);
            }
            Ok(acc.total() / (n as f64 * TWO_PI))
        }
    }
}

/// Piecewise antiderivative of a circle function known at cell midpoints,
/// reconstructed cell by cell from the three nearest midpoints.
struct QuadraticAntiderivative {
    step: f64,
    prefix: Vec<f64>,
    values: Vec<f64>,
    total: f64,
}

impl QuadraticAntiderivative {
    fn build(values: &[f64], step: f64) -> Self {
        let n = values.len();
        let mut prefix = Vec::with_capacity(n + 1);
        let mut acc = Kahan::new();
        prefix.push(0.0);
        for j in 0..n {
            let gm = values[(j + n - 1) % n];
            let g0 = values[j];
            let gp = values[(j + 1) % n];
            // Integral of the local quadratic over the cell.
            acc.add(step * (g0 + (gp - 2.0 * g0 + gm) / 24.0));
            prefix.push(acc.total());
        }
        QuadraticAntiderivative {
            step,
            prefix,
            values: values.to_vec(),
            total: acc.total(),
        }
    }

    /// `∫_0^x g` for any real x, extended periodically.
    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let period = self.step * n as f64;
        let wraps = (x / period).floor();
        let xr = x - wraps * period;
        let j = ((xr / self.step) as usize).min(n - 1);
        let gm = self.values[(j + n - 1) % n];
        let g0 = self.values[j];
        let gp = self.values[(j + 1) % n];
        // Local coordinates centered at the cell midpoint.
        let u = xr - (j as f64 + 0.5) * self.step;
        let h = self.step;
        let b = (gp - gm) / (2.0 * h);
        let c = (gp - 2.0 * g0 + gm) / (2.0 * h * h);
        let at = |v: f64| g0 * v + 0.5 * b * v * v + c * v * v * v / 3.0;
        self.prefix[j] + (at(u) - at(-0.5 * h)) + wraps * self.total
    }
}

/// Scalar by which the boundary kernel acts on harmonics of one degree.
///
/// On the circle: `λ_0 = φ*/π` and `λ_n = sin(n φ*)/(n π)` with
/// `φ* = arccos(u_star)`; a clamped threshold degenerates to the zero or
/// the mean kernel. On the two-point boundary the kernel is an explicit
/// symmetric 2x2 matrix whose eigenvalues sit on the even and odd parts.
pub fn eigenvalue(degree: u32, triple: &AdmissibleTriple) -> f64 {
    let (u_star, _) = boundary_threshold(triple);
    match triple.d {
        1 => {
            let s1 = (1.0 - triple.h1 * triple.h1).max(0.0).sqrt();
            let s2 = (1.0 - triple.h2 * triple.h2).max(0.0).sqrt();
            let same = (s1 * s2 + triple.h1 * triple.h2 >= triple.a) as u8 as f64;
            let diff = (-s1 * s2 + triple.h1 * triple.h2 >= triple.a) as u8 as f64;
            match degree {
                0 => 0.5 * (same + diff),
                1 => 0.5 * (same - diff),
                _ => 0.0,
            }
        }
        _ => {
            if u_star >= 1.0 {
                return 0.0;
            }
            if u_star <= -1.0 {
                return if degree == 0 { 1.0 } else { 0.0 };
            }
            let phi_star = u_star.acos();
            if degree == 0 {
                phi_star / PI
            } else {
                (degree as f64 * phi_star).sin() / (degree as f64 * PI)
            }
        }
    }
}

/// Spectral diagnosis of the boundary form against the strict-triple
/// threshold `sqrt(γ1 γ2 / (w(h1) w(h2)))`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub triple: AdmissibleTriple,
    pub u_star: f64,
    pub clamped: bool,
    pub bound: f64,
    pub lambda: Vec<f64>,
    pub verdicts: Vec<bool>,
    pub saturation_n1: f64,
}

/// Checks `|λ_n| < bound` for every degree `1..=n_max`. The degree-1
/// value saturates the bound exactly on symmetric configurations (the
/// neutral rotation direction), which `saturation_n1` records.
pub fn spectral_check(triple: &AdmissibleTriple, n_max: u32) -> Result<SpectralReport> {
    if !triple.is_strict() {
        return Err(Error::Precondition(
            "spectral bound needs a strict triple (kernel slopes can vanish otherwise)".into(),
        ));
    }
    let (u_star, clamped) = boundary_threshold(triple);
    let w1 = weight(triple.h1, triple.d)?;
    let w2 = weight(triple.h2, triple.d)?;
    let bound = (triple.gamma1 * triple.gamma2 / (w1 * w2)).sqrt();
    let lambda: Vec<f64> = (0..=n_max).map(|n| eigenvalue(n, triple)).collect();
    let verdicts = lambda[1..].iter().map(|l| l.abs() < bound).collect();
    let saturation_n1 = if n_max >= 1 {
        lambda[1].abs() / bound
    } else {
        f64::NAN
    };
    Ok(SpectralReport {
        triple: *triple,
        u_star,
        clamped,
        bound,
        lambda,
        verdicts,
        saturation_n1,
    })
}

/// Rotation found by [`balance`], with the residual degree-1 moment.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceResult {
    /// Rotation angles: one per meridian plane through the pole axis
    /// (two for S^2, one for the circle).
    pub angles: Vec<f64>,
    /// Euclidean norm of the angles.
    pub parameter_norm: f64,
    /// `‖π_1 F̃‖` after the rotation.
    pub residual: f64,
    pub iterations: usize,
    /// Norm of the input's associated function (the tolerance reference).
    pub input_norm: f64,
}

/// Degree-1 moment of the rotated set: since the polar cap carries no
/// degree-1 component, the moment of the rotated set's deviation equals
/// the integral of the boundary harmonics over the rotated set itself.
fn degree1_moment_s2(set: &SphericalSet, angles: [f64; 2]) -> [f64; 2] {
    let grid = set.grid();
    let (sa, ca) = angles[0].sin_cos();
    let (sb, cb) = angles[1].sin_cos();
    let cm = grid.cell_measure();
    let mut mx = Kahan::new();
    let mut my = Kahan::new();
    for i in set.occupied() {
        let p = grid.node(i);
        // Rotate in the x1x3-plane, then the x2x3-plane.
        let (x0, y0, z0) = (p.x(), p.y(), p.z());
        let x1 = ca * x0 + sa * z0;
        let z1 = -sa * x0 + ca * z0;
        let y2 = cb * y0 + sb * z1;
        let s = (x1 * x1 + y2 * y2).sqrt();
        if s > 1e-14 {
            mx.add(x1 / s);
            my.add(y2 / s);
        }
    }
    [mx.total() * cm, my.total() * cm]
}

fn degree1_moment_s1(set: &SphericalSet, angle: f64) -> f64 {
    let grid = set.grid();
    let cm = grid.cell_measure();
    let step = grid.azimuth_step();
    let mut count = 0i64;
    for i in set.occupied() {
        let phi = (i as f64 + 0.5) * step + angle;
        if phi.cos() > 0.0 {
            count += 1;
        } else {
            count -= 1;
        }
    }
    count as f64 * cm
}

/// Finds a small rotation of the first set after which the degree-1
/// component of its associated function vanishes (within
/// `1e-6 * ‖F_1‖`, measured through the same moment functional).
///
/// On S^2 the two angles act in the x1x3- and x2x3-planes and the zero is
/// reached by a damped Newton iteration with finite-difference Jacobian.
/// On the circle the moment is integer-valued in cell units, so the zero
/// plateau is located by bisection and its midpoint returned; an exact
/// zero needs an even occupied count.
pub fn balance(e1: &SphericalSet, triple: &AdmissibleTriple) -> Result<BalanceResult> {
    let grid = e1.grid();
    if grid.dim() != triple.d {
        return Err(Error::GridMismatch(
            "set and triple dimensions differ".into(),
        ));
    }
    let (f1, _, _) = associated_function(e1, triple, 1)?;
    let input_norm = f1.norm();
    if input_norm == 0.0 {
        return Ok(BalanceResult {
            angles: vec![0.0; grid.dim() as usize],
            parameter_norm: 0.0,
            residual: 0.0,
            iterations: 0,
            input_norm,
        });
    }
    let tol = 1e-6 * input_norm;
    match grid.dim() {
        2 => balance_s2(e1, tol, input_norm),
        1 => balance_s1(e1, tol, input_norm),
        d => Err(Error::Argument(format!("no balancing for dimension {d}"))),
    }
}

fn balance_s2(e1: &SphericalSet, tol: f64, input_norm: f64) -> Result<BalanceResult> {
    let residual_of = |m: [f64; 2]| (2.0 * (m[0] * m[0] + m[1] * m[1])).sqrt();
    let mut angles = [0.0f64; 2];
    let mut moment = degree1_moment_s2(e1, angles);
    let mut residual = residual_of(moment);
    let fd = 1e-5;
    for iteration in 1..=50 {
        if residual <= tol {
            return Ok(BalanceResult {
                angles: angles.to_vec(),
                parameter_norm: (angles[0] * angles[0] + angles[1] * angles[1]).sqrt(),
                residual,
                iterations: iteration - 1,
                input_norm,
            });
        }
        // Finite-difference Jacobian of the moment in the two angles.
        let mut jac = [[0.0f64; 2]; 2];
        for c in 0..2 {
            let mut hi = angles;
            let mut lo = angles;
            hi[c] += fd;
            lo[c] -= fd;
            let mh = degree1_moment_s2(e1, hi);
            let ml = degree1_moment_s2(e1, lo);
            jac[0][c] = (mh[0] - ml[0]) / (2.0 * fd);
            jac[1][c] = (mh[1] - ml[1]) / (2.0 * fd);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-18 {
            break;
        }
        let dx = (-moment[0] * jac[1][1] + moment[1] * jac[0][1]) / det;
        let dy = (-jac[0][0] * moment[1] + jac[1][0] * moment[0]) / det;
        // Damped update: accept the longest step that shrinks the residual.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let trial = [angles[0] + scale * dx, angles[1] + scale * dy];
            let m = degree1_moment_s2(e1, trial);
            let r = residual_of(m);
            if r < residual {
                angles = trial;
                moment = m;
                residual = r;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if residual <= tol {
        Ok(BalanceResult {
            angles: angles.to_vec(),
            parameter_norm: (angles[0] * angles[0] + angles[1] * angles[1]).sqrt(),
            residual,
            iterations: 50,
            input_norm,
        })
    } else {
        Err(Error::Balance {
            residual,
            iterations: 50,
        })
    }
}

fn balance_s1(e1: &SphericalSet, tol: f64, input_norm: f64) -> Result<BalanceResult> {
    let v0 = degree1_moment_s1(e1, 0.0);
    if v0.abs() <= tol {
        return Ok(BalanceResult {
            angles: vec![0.0],
            parameter_norm: 0.0,
            residual: v0.abs(),
            iterations: 0,
            input_norm,
        });
    }
    // Coarse scan for a sign change, preferring the bracket closest to 0.
    let scan = 256;
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    let mut prev = (0.0f64, v0);
    for i in 1..=scan {
        let alpha = PI * i as f64 / scan as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
        let v = degree1_moment_s1(e1, alpha);
        if v == 0.0 || v.signum() != v0.signum() {
            bracket = Some((prev.0, prev.1, alpha, v));
            break;
        }
        prev = (alpha, v);
    }
    let (mut a, mut va, mut b, _vb) = bracket.ok_or(Error::Balance {
        residual: v0.abs(),
        iterations: scan,
    })?;
    let mut iterations = scan.min(64);
    for _ in 0..100 {
        iterations += 1;
        let mid = 0.5 * (a + b);
        let vm = degree1_moment_s1(e1, mid);
        if vm == 0.0 {
            // Walk the zero plateau and return its midpoint.
            let (lo, hi) = plateau_around(e1, mid);
            let alpha = 0.5 * (lo + hi);
            let residual = degree1_moment_s1(e1, alpha).abs();
            return Ok(BalanceResult {
                angles: vec![alpha],
                parameter_norm: alpha.abs(),
                residual,
                iterations,
                input_norm,
            });
        }
        if vm.signum() == va.signum() {
            a = mid;
            va = vm;
        } else {
            b = mid;
        }
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    let alpha = 0.5 * (a + b);
    let residual = degree1_moment_s1(e1, alpha).abs();
    if residual <= tol {
        Ok(BalanceResult {
            angles: vec![alpha],
            parameter_norm: alpha.abs(),
            residual,
            iterations,
            input_norm,
        })
    } else {
        Err(Error::Balance {
            residual,
            iterations,
        })
    }
}

/// Largest interval of rotation angles around `alpha` over which no
/// occupied node crosses the vertical axis.
fn plateau_around(set: &SphericalSet, alpha: f64) -> (f64, f64) {
    let grid = set.grid();
    let step = grid.azimuth_step();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in set.occupied() {
        let phi = (i as f64 + 0.5) * step + alpha;
        // Distance (in angle) to the nearest crossing of cos(phi) = 0.
        let k = ((phi - std::f64::consts::FRAC_PI_2) / PI).round();
        let crossing = std::f64::consts::FRAC_PI_2 + k * PI;
        let gap = phi - crossing;
        if gap >= 0.0 {
            lo = lo.max(alpha - gap);
            hi = hi.min(alpha + (PI - gap));
        } else {
            hi = hi.min(alpha - gap);
            lo = lo.max(alpha + (-PI - gap));
        }
    }
    (lo.max(alpha - step), hi.min(alpha + step))
}

/// Rotates a rasterized set by re-locating every occupied cell center
/// (measure is preserved only approximately; intended for tests and for
/// constructing near-cap inputs).
pub fn rotate_set_x1x3(set: &SphericalSet, angle: f64) -> SphericalSet {
    let grid = set.grid().clone();
    let (s, c) = angle.sin_cos();
    SphericalSet::from_fn(grid.clone(), |i| {
        let p = grid.node(i);
        // Inverse rotation of the cell center.
        let x = c * p.x() - s * p.z();
        let z = s * p.x() + c * p.z();
        set.contains(grid.locate(&Point::new(x, p.y(), z)))
    })
}
