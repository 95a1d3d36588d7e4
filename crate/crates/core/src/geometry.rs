//! Holomorphic cylinders `x + A(D_r x D_s^{n-1})` and tensor quadrature over them.
//!
//! For `n = 2` the ball factor is the disc `D_s`, so every cylinder is a rotated
//! bidisc. Each disc factor is integrated in polar coordinates: Gauss-Legendre
//! in `u = rho^2` (which turns the area element `rho d rho d theta` into
//! `du d theta / 2`) times the trapezoid rule in the angle.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{unitary_deviation, CMatrix, CompensatedSum, C64};

/// Tolerance on `||A A* - I||` accepted at construction.
pub const UNITARY_TOL: f64 = 1e-12;

/// Default dyadic depth used when a rule is refined toward a singular point.
pub const DEFAULT_SUBDIVISION_DEPTH: usize = 12;

/// Default quadrature order for the given dimension.
pub fn default_order(n: usize) -> usize {
    if n == 1 {
        24
    } else {
        12
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolomorphicCylinder {
    center: Vec<C64>,
    rotation: CMatrix,
    r: f64,
    s: f64,
    n: usize,
}

impl HolomorphicCylinder {
    pub fn new(center: Vec<C64>, rotation: CMatrix, r: f64, s: f64, n: usize) -> Result<Self> {
        if n == 0 || n > 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if center.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: center.len() });
        }
        if rotation.nrows() != n || rotation.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rotation.nrows() });
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidRadius { name: "r", value: r });
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidRadius { name: "s", value: s });
        }
        let deviation = unitary_deviation(&rotation);
        if !(deviation <= UNITARY_TOL) {
            return Err(Error::NonUnitary { deviation });
        }
        Ok(Self { center, rotation, r, s, n })
    }

    /// The disc `x + D_r` in the plane.
    pub fn disc(center: C64, r: f64) -> Result<Self> {
        Self::new(vec![center], CMatrix::identity(1, 1), r, r, 1)
    }

    /// The bidisc `x + A(D_r x D_s)` in `C^2`.
    pub fn bidisc(center: [C64; 2], rotation: CMatrix, r: f64, s: f64) -> Result<Self> {
        Self::new(center.to_vec(), rotation, r, s, 2)
    }

    pub fn center(&self) -> &[C64] {
        &self.center
    }

    pub fn rotation(&self) -> &CMatrix {
        &self.rotation
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `sqrt(r^2/2 + (n-1) s^2 / n)`, the root mean square of `|z - x|` over the cylinder.
    pub fn diameter(&self) -> f64 {
        self.diameter_squared().sqrt()
    }

    pub fn diameter_squared(&self) -> f64 {
        let n = self.n as f64;
        0.5 * self.r * self.r + (n - 1.0) / n * self.s * self.s
    }

    pub fn volume(&self) -> f64 {
        let disc = PI * self.r * self.r;
        if self.n == 1 {
            disc
        } else {
            disc * PI * self.s * self.s
        }
    }

    /// Radius of the smallest ball around the center containing the cylinder.
    pub fn circumradius(&self) -> f64 {
        if self.n == 1 {
            self.r
        } else {
            self.r.hypot(self.s)
        }
    }

    /// Same center and rotation with both radii scaled by `t`.
    pub fn shrink(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidShrink(t));
        }
        Ok(Self { r: t * self.r, s: t * self.s, ..self.clone() })
    }

    /// The same shape centered at another point.
    pub fn translated(&self, center: Vec<C64>) -> Result<Self> {
        if center.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: center.len() });
        }
        Ok(Self { center, ..self.clone() })
    }

    /// Global coordinates `x + A w` of a local point `w`.
    pub fn to_global(&self, w: &[C64]) -> Vec<C64> {
        (0..self.n).map(|i| self.center[i] + (0..self.n).map(|j| self.rotation[(i, j)] * w[j]).sum::<C64>()).collect()
    }

    /// Local coordinates `A* (z - x)`.
    pub fn to_local(&self, z: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.rotation[(j, i)].conj() * (z[j] - self.center[j])).sum::<C64>())
            .collect()
    }

    pub fn contains(&self, z: &[C64]) -> bool {
        let w = self.to_local(z);
        if w[0].norm() >= self.r {
            return false;
        }
        self.n == 1 || w[1].norm() < self.s
    }
}

#[derive(Serialize, Deserialize)]
struct CylinderRepr {
    center: Vec<[f64; 2]>,
    rotation: Vec<[f64; 2]>,
    r: f64,
    s: f64,
    n: usize,
}

impl Serialize for HolomorphicCylinder {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut rotation = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let a = self.rotation[(i, j)];
                rotation.push([a.re, a.im]);
            }
        }
        CylinderRepr {
            center: self.center.iter().map(|c| [c.re, c.im]).collect(),
            rotation,
            r: self.r,
            s: self.s,
            n: self.n,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HolomorphicCylinder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = CylinderRepr::deserialize(deserializer)?;
        let entries: Vec<C64> = repr.rotation.iter().map(|p| C64::new(p[0], p[1])).collect();
        if entries.len() != repr.n * repr.n {
            return Err(serde::de::Error::custom("rotation must have n*n entries"));
        }
        let rotation = CMatrix::from_row_slice(repr.n, repr.n, &entries);
        let center = repr.center.iter().map(|p| C64::new(p[0], p[1])).collect();
        HolomorphicCylinder::new(center, rotation, repr.r, repr.s, repr.n).map_err(serde::de::Error::custom)
    }
}

/// Nodes and positive weights realizing Lebesgue measure on a cylinder.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    cylinder: HolomorphicCylinder,
    nodes: Vec<Vec<C64>>,
    local: Vec<Vec<C64>>,
    weights: Vec<f64>,
    order: usize,
}

/// One-dimensional rule for a single disc factor, in local polar form.
fn disc_factor(radius: f64, order: usize) -> Vec<(C64, f64)> {
    let radial = order + 1;
    let angular = 2 * order + 1;
    let gl = GaussLegendre::new(NonZeroUsize::new(radial).expect("radial > 0"));
    let u_max = radius * radius;
    let dtheta = 2.0 * PI / angular as f64;
    let mut out = Vec::with_capacity(radial * angular);
    for &(x, w) in gl.as_node_weight_pairs() {
        let u = 0.5 * u_max * (x + 1.0);
        let rho = u.sqrt();
        // dA = rho d rho d theta = du d theta / 2; du = u_max/2 dx.
        let weight = w * 0.25 * u_max * dtheta;
        for k in 0..angular {
            let theta = dtheta * k as f64;
            out.push((C64::from_polar(rho, theta), weight));
        }
    }
    out
}

impl QuadratureRule {
    pub fn cylinder(&self) -> &HolomorphicCylinder {
        &self.cylinder
    }

    /// Nodes in global coordinates.
    pub fn nodes(&self) -> &[Vec<C64>] {
        &self.nodes
    }

    /// Nodes in local coordinates `A*(z - x)`.
    pub fn local_nodes(&self) -> &[Vec<C64>] {
        &self.local
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `sum_i w_i f(z_i)`; a non-finite node value poisons the result.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[C64]) -> f64,
    {
        let mut acc = CompensatedSum::default();
        for (index, (z, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let value = f(z);
            if !value.is_finite() {
                return Err(Error::PoisonedNode { index, value });
            }
            acc.add(w * value);
        }
        Ok(acc.value())
    }

    pub fn integrate_complex<F>(&self, f: F) -> Result<C64>
    where
        F: Fn(&[C64]) -> C64,
    {
        let mut re = CompensatedSum::default();
        let mut im = CompensatedSum::default();
        for (index, (z, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let value = f(z);
            if !(value.re.is_finite() && value.im.is_finite()) {
                return Err(Error::PoisonedNode { index, value: value.norm() });
            }
            re.add(w * value.re);
            im.add(w * value.im);
        }
        Ok(C64::new(re.value(), im.value()))
    }

    /// Mean value `(1/Vol) \int f`.
    pub fn mean<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[C64]) -> f64,
    {
        Ok(self.integrate(f)? / self.cylinder.volume())
    }
}

/// Tensor rule of the given order on `P`.
pub fn build_quadrature(cylinder: &HolomorphicCylinder, order: usize) -> Result<QuadratureRule> {
    if order == 0 {
        return Err(Error::InvalidOrder(order));
    }
    let mut local = Vec::new();
    let mut weights = Vec::new();
    match cylinder.dim() {
        1 => {
            for (w, wt) in disc_factor(cylinder.r(), order) {
                local.push(vec![w]);
                weights.push(wt);
            }
        }
        2 => {
            let first = disc_factor(cylinder.r(), order);
            let second = disc_factor(cylinder.s(), order);
            local.reserve(first.len() * second.len());
            for &(w1, a) in &first {
                for &(w2, b) in &second {
                    local.push(vec![w1, w2]);
                    weights.push(a * b);
                }
            }
        }
        n => return Err(Error::UnsupportedDimension(n)),
    }
    let nodes = local.iter().map(|w| cylinder.to_global(w)).collect();
    Ok(QuadratureRule { cylinder: cylinder.clone(), nodes, local, weights, order })
}

/// Rule on a disc refined toward an interior point `singular`, for integrands with
/// an integrable singularity there (e.g. `log|z - a|`).
///
/// Uses polar coordinates centered at the singular point with dyadic radial
/// panels `[rho_max 2^{-j-1}, rho_max 2^{-j}]`, each carrying its own
/// Gauss-Legendre rule. Falls back to [`build_quadrature`] when the point lies
/// outside the disc.
pub fn build_quadrature_singular(
    cylinder: &HolomorphicCylinder,
    order: usize,
    singular: C64,
    depth: usize,
) -> Result<QuadratureRule> {
    if cylinder.dim() != 1 {
        return Err(Error::UnsupportedDimension(cylinder.dim()));
    }
    if order == 0 {
        return Err(Error::InvalidOrder(order));
    }
    let x = cylinder.center()[0];
    let r = cylinder.r();
    let d = singular - x;
    if d.norm() >= r {
        return build_quadrature(cylinder, order);
    }
    let gl = GaussLegendre::new(NonZeroUsize::new(order + 1).expect("order + 1 > 0"));
    let angular = 2 * order + 1;
    let dtheta = 2.0 * PI / angular as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for k in 0..angular {
        let dir = C64::from_polar(1.0, dtheta * k as f64);
        // |d + rho dir| = r  =>  rho^2 + 2 rho Re(conj(dir) d) + |d|^2 - r^2 = 0
        let b = (dir.conj() * d).re;
        let rho_max = -b + (b * b + r * r - d.norm_sqr()).sqrt();
        let mut panels = Vec::with_capacity(depth + 1);
        panels.push((0.0, rho_max * 0.5_f64.powi(depth as i32)));
        for j in (0..depth).rev() {
            panels.push((rho_max * 0.5_f64.powi(j as i32 + 1), rho_max * 0.5_f64.powi(j as i32)));
        }
        for (a, b) in panels {
            let half = 0.5 * (b - a);
            for &(t, w) in gl.as_node_weight_pairs() {
                let rho = a + half * (t + 1.0);
                nodes.push(vec![singular + dir * rho]);
                weights.push(w * half * rho * dtheta);
            }
        }
    }
    let local = nodes.iter().map(|z| cylinder.to_local(z)).collect();
    Ok(QuadratureRule { cylinder: cylinder.clone(), nodes, local, weights, order })
}
