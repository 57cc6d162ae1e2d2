//! Geometry and measure on the unit sphere S^d embedded in R^{d+1}
//! (d = 1 uses the xy-plane with the third coordinate zero).
//!
//! Surface measure is normalized to total mass 1 throughout. In the
//! height coordinate t = x_{d+1} the area density is
//! `w_d(t) = c_d (1 - t^2)^{(d-2)/2}` with `c_d` fixed by `∫ w_d = 1`,
//! so d = 1 gives the arcsine density and d = 2 the constant 1/2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Tolerance for the unit-norm invariant of points and normals.
pub const UNIT_TOL: f64 = 1e-12;

/// Tolerance used to detect the degenerate equality branch when
/// classifying a triple by the triangle condition on its radii.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// A point of S^d, stored as its coordinates in R^3 (z = 0 when d = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    /// Constructs a point, enforcing the unit-norm invariant.
    pub fn unit(x: f64, y: f64, z: f64) -> Result<Self> {
        let p = Point([x, y, z]);
        if (p.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::Argument(format!(
                "point norm {} deviates from 1 by more than {UNIT_TOL:e}",
                p.norm()
            )));
        }
        Ok(p)
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if n < 1e-300 {
            return Err(Error::Argument("cannot normalize the zero vector".into()));
        }
        Ok(Point([x / n, y / n, z / n]))
    }

    #[inline]
    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    pub fn z(&self) -> f64 {
        self.0[2]
    }
}

/// The pole of the height coordinate: e_2 on the circle, e_3 on S^2.
pub fn north(d: u8) -> Point {
    match d {
        1 => Point([0.0, 1.0, 0.0]),
        _ => Point([0.0, 0.0, 1.0]),
    }
}

/// Height coordinate of a point (its component along the pole axis).
pub fn height(p: &Point, d: u8) -> f64 {
    match d {
        1 => p.0[1],
        _ => p.0[2],
    }
}

/// An oriented hyperplane through the origin. The positive side is
/// `{x : x·normal >= 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: Point,
}

impl Hyperplane {
    pub fn new(normal: Point) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::Argument(format!(
                "hyperplane normal has norm {}, expected 1 within {UNIT_TOL:e}",
                normal.norm()
            )));
        }
        Ok(Hyperplane { normal })
    }

    pub fn from_direction(x: f64, y: f64, z: f64) -> Result<Self> {
        Ok(Hyperplane {
            normal: Point::normalized(x, y, z)?,
        })
    }

    pub fn normal(&self) -> &Point {
        &self.normal
    }

    /// Signed distance factor `x·normal`; nonnegative on the positive side.
    #[inline]
    pub fn side(&self, x: &Point) -> f64 {
        x.dot(&self.normal)
    }
}

/// Reflection across a hyperplane through the origin: an involutive
/// isometry of the sphere fixing the hyperplane pointwise.
#[inline]
pub fn reflect(x: &Point, h: &Hyperplane) -> Point {
    let n = h.normal();
    let s = 2.0 * x.dot(n);
    Point([
        x.0[0] - s * n.0[0],
        x.0[1] - s * n.0[1],
        x.0[2] - s * n.0[2],
    ])
}

/// `∫_0^π sin^k ψ dψ` by the Wallis recurrence (exact rational steps).
fn sin_power_integral(k: u32) -> f64 {
    let mut even = std::f64::consts::PI; // k = 0
    let mut odd = 2.0; // k = 1
    if k == 0 {
        return even;
    }
    if k == 1 {
        return odd;
    }
    for m in 2..=k {
        let next = (m as f64 - 1.0) / m as f64 * if m.is_multiple_of(2) { even } else { odd };
        if m.is_multiple_of(2) {
            even = next;
        } else {
            odd = next;
        }
    }
    if k.is_multiple_of(2) {
        even
    } else {
        odd
    }
}

/// Normalizing constant `c_d` of the height density.
pub fn density_norm(d: u8) -> f64 {
    1.0 / sin_power_integral(d as u32 - 1)
}

/// Normalized area density in the height coordinate,
/// `w_d(t) = c_d (1 - t^2)^{(d-2)/2}`.
///
/// For d = 1 the density is singular at t = ±1; evaluation there is a
/// domain error (integrals against it are taken in the polar angle,
/// where the singularity disappears).
pub fn weight(t: f64, d: u8) -> Result<f64> {
    if d == 0 {
        return Err(Error::Argument("dimension must be at least 1".into()));
    }
    if d == 1 && t.abs() >= 1.0 {
        return Err(Error::Domain(format!(
            "w_1 is singular at t = {t}; integrate in the polar angle instead"
        )));
    }
    if t.abs() > 1.0 {
        return Err(Error::Domain(format!("t = {t} outside [-1, 1]")));
    }
    let q = (1.0 - t * t).max(0.0);
    Ok(density_norm(d) * q.powf((d as f64 - 2.0) / 2.0))
}

/// Normalized measure of the cap `{x : height(x) >= t0}`.
pub fn cap_measure(t0: f64, d: u8) -> Result<f64> {
    if !(-1.0..=1.0).contains(&t0) {
        return Err(Error::Argument(format!("cap height {t0} outside [-1, 1]")));
    }
    match d {
        0 => Err(Error::Argument("dimension must be at least 1".into())),
        1 => Ok(t0.acos() / std::f64::consts::PI),
        2 => Ok(0.5 * (1.0 - t0)),
        _ => {
            // Integrate in the polar angle, where the density is smooth.
            let c = density_norm(d);
            let r = t0.acos();
            Ok(numeric::integrate(
                |psi: f64| c * psi.sin().powi(d as i32 - 1),
                0.0,
                r,
                1e-13,
            ))
        }
    }
}

/// Inverse of [`cap_measure`]: the height whose cap has measure `e`
/// (residual below 1e-12). Closed forms for d <= 2, bisection above.
pub fn cap_height(e: f64, d: u8) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::Argument(format!("cap measure {e} outside [0, 1]")));
    }
    if e == 0.0 {
        return Ok(1.0);
    }
    if e == 1.0 {
        return Ok(-1.0);
    }
    match d {
        0 => Err(Error::Argument("dimension must be at least 1".into())),
        1 => Ok((std::f64::consts::PI * e).cos()),
        2 => Ok(1.0 - 2.0 * e),
        _ => {
            let mut lo = -1.0;
            let mut hi = 1.0;
            // cap_measure is strictly decreasing in the height.
            while hi - lo > 1e-13 {
                let mid = 0.5 * (lo + hi);
                if cap_measure(mid, d)? > e {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// A spherical cap `{x : x·center >= height}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub center: Point,
    pub height: f64,
    pub dim: u8,
}

impl Cap {
    pub fn from_height(center: Point, height: f64, dim: u8) -> Result<Self> {
        if !(-1.0..=1.0).contains(&height) {
            return Err(Error::Argument(format!(
                "cap height {height} outside [-1, 1]"
            )));
        }
        Ok(Cap {
            center,
            height,
            dim,
        })
    }

    pub fn from_measure(center: Point, e: f64, dim: u8) -> Result<Self> {
        Ok(Cap {
            center,
            height: cap_height(e, dim)?,
            dim,
        })
    }

    pub fn from_radius(center: Point, r: f64, dim: u8) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&r) {
            return Err(Error::Argument(format!("cap radius {r} outside [0, pi]")));
        }
        Ok(Cap {
            center,
            height: r.cos(),
            dim,
        })
    }

    /// Geodesic radius, `arccos(height)`.
    pub fn radius(&self) -> f64 {
        numeric::clamp_unit(self.height).acos()
    }

    /// Normalized measure.
    pub fn measure(&self) -> f64 {
        cap_measure(self.height, self.dim).expect("height invariant")
    }
}

/// Triangle classification of a triple of cap radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TripleClass {
    Strict,
    Boundary,
    Fail,
}

/// A pair of cap measures together with an inner-product threshold,
/// with every derived quantity filled in: cap heights, the three
/// geodesic radii, the kernel slopes at the cap boundaries, and the
/// triangle classification of the radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleTriple {
    pub d: u8,
    pub e1: f64,
    pub e2: f64,
    pub a: f64,
    pub h1: f64,
    pub h2: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub class: TripleClass,
}

impl AdmissibleTriple {
    pub fn heights(&self) -> [f64; 2] {
        [self.h1, self.h2]
    }

    pub fn measures(&self) -> [f64; 2] {
        [self.e1, self.e2]
    }

    pub fn gammas(&self) -> [f64; 2] {
        [self.gamma1, self.gamma2]
    }

    pub fn is_strict(&self) -> bool {
        self.class == TripleClass::Strict
    }
}

/// Triangle condition on (r1, r2, r3): strict if every pairwise sum
/// exceeds the third radius, boundary if some sum is equal within
/// [`BOUNDARY_TOL`], failing otherwise.
pub fn classify_radii(r1: f64, r2: f64, r3: f64) -> TripleClass {
    let slack = (r1 + r2 - r3).min(r1 + r3 - r2).min(r2 + r3 - r1);
    if slack > BOUNDARY_TOL {
        TripleClass::Strict
    } else if slack >= -BOUNDARY_TOL {
        TripleClass::Boundary
    } else {
        TripleClass::Fail
    }
}
