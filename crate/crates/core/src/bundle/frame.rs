//! Holomorphic unitary frames for flat metrics, built by Chern parallel
//! transport from the center of a cylinder.
//!
//! For holomorphic sections the Chern connection reduces to
//! `dg/dt = -M^{-1} (sum_i u_i d_i M) g` along `t -> x + t u`. Transport
//! preserves `g* M g`, so the frame starts at `L^{-*}` (`M(x) = L L*`) and stays
//! unitary. On a flat bundle it is path independent and holomorphic.

use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::metric::HermitianMetricField;
use crate::classify::serialize_point;
use crate::error::{Error, Result};
use crate::geometry::HolomorphicCylinder;
use crate::linalg::{cholesky_lower, CMatrix, C64, I};

pub const RK4_STEPS_PER_LEG: usize = 256;
pub const DERIVATIVE_STEP: f64 = 1e-3;
pub const CR_STEP: f64 = 1e-2;
pub const CR_POINTS: usize = 9;
pub const DEFAULT_RESOLUTION: usize = 5;
pub const DEFAULT_ODE_TOL: f64 = 1e-8;

fn serialize_matrices<S: Serializer>(v: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<Vec<[f64; 2]>>> = v
        .iter()
        .map(|m| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect())
        .collect();
    rows.serialize(s)
}

fn serialize_matrix<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    serialize_matrices(std::slice::from_ref(m), s)
}

fn serialize_points<S: Serializer>(v: &[Vec<C64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct P<'a>(#[serde(serialize_with = "serialize_point")] &'a [C64]);
    let pts: Vec<P<'_>> = v.iter().map(|p| P(p)).collect();
    pts.serialize(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameResiduals {
    /// `max ||g* M g - I||`.
    pub unitarity: f64,
    /// Largest difference between the two transport path orders.
    pub path: f64,
    /// Largest `|dbar g|` from centered stencils.
    pub cauchy_riemann: f64,
}

/// Frame values `g(z)` on a grid. Columns of `g` are the frame sections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameTransform {
    pub cylinder: HolomorphicCylinder,
    #[serde(serialize_with = "serialize_points")]
    pub grid: Vec<Vec<C64>>,
    #[serde(serialize_with = "serialize_matrices")]
    pub values: Vec<CMatrix>,
    #[serde(serialize_with = "serialize_matrix")]
    pub base_factor: CMatrix,
    pub residuals: FrameResiduals,
}

struct Transport<'a> {
    h: &'a HermitianMetricField,
    cylinder: &'a HolomorphicCylinder,
}

impl Transport<'_> {
    /// `sum_i u_i d_i M` at `z` as `(D_u M - i D_{iu} M)/2`, five-point stencils.
    fn holomorphic_derivative(&self, z: &[C64], u: &[C64]) -> CMatrix {
        let h = DERIVATIVE_STEP;
        let directional = |dir: &[C64]| -> CMatrix {
            let at = |t: f64| -> CMatrix {
                let p: Vec<C64> = z.iter().zip(dir).map(|(a, d)| a + d * t).collect();
                self.h.evaluate(&p)
            };
            (at(-2.0 * h) - at(-h) * C64::new(8.0, 0.0) + at(h) * C64::new(8.0, 0.0) - at(2.0 * h))
                / C64::new(12.0 * h, 0.0)
        };
        let iu: Vec<C64> = u.iter().map(|c| c * I).collect();
        (directional(u) - directional(&iu) * I) * C64::new(0.5, 0.0)
    }

    fn rhs(&self, z: &[C64], u: &[C64], g: &CMatrix) -> Result<CMatrix> {
        let m = self.h.checked(z)?;
        let d = self.holomorphic_derivative(z, u);
        let lu = m.lu();
        let sol = lu.solve(&(d * g)).ok_or_else(|| Error::NotPositiveDefinite("singular metric".into()))?;
        Ok(-sol)
    }

    /// RK4 along `z + t u`, `t in [0, 1]`.
    fn leg(&self, start: &[C64], u: &[C64], g: CMatrix) -> Result<CMatrix> {
        let steps = RK4_STEPS_PER_LEG;
        let dt = 1.0 / steps as f64;
        let point = |t: f64| -> Vec<C64> { start.iter().zip(u).map(|(a, d)| a + d * t).collect() };
        let mut g = g;
        for k in 0..steps {
            let t = k as f64 * dt;
            let half = point(t + 0.5 * dt);
            let k1 = self.rhs(&point(t), u, &g)?;
            let k2 = self.rhs(&half, u, &(&g + &k1 * C64::new(0.5 * dt, 0.0)))?;
            let k3 = self.rhs(&half, u, &(&g + &k2 * C64::new(0.5 * dt, 0.0)))?;
            let k4 = self.rhs(&point(t + dt), u, &(&g + &k3 * C64::new(dt, 0.0)))?;
            g += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        }
        Ok(g)
    }

    /// Legs `Re w_k A e_k` and `i Im w_k A e_k`, in the given order.
    fn legs(&self, w: &[C64]) -> Vec<Vec<C64>> {
        let a = self.cylinder.rotation();
        let n = w.len();
        let mut out = Vec::with_capacity(2 * n);
        for k in 0..n {
            for part in [C64::new(w[k].re, 0.0), C64::new(0.0, w[k].im)] {
                if part != C64::new(0.0, 0.0) {
                    out.push((0..n).map(|i| a[(i, k)] * part).collect());
                }
            }
        }
        out
    }

    fn transport(&self, g0: &CMatrix, w: &[C64], reversed: bool) -> Result<CMatrix> {
        let mut legs = self.legs(w);
        if reversed {
            legs.reverse();
        }
        let mut z = self.cylinder.center().to_vec();
        let mut g = g0.clone();
        for u in legs {
            g = self.leg(&z, &u, g)?;
            for (a, d) in z.iter_mut().zip(&u) {
                *a += d;
            }
        }
        Ok(g)
    }
}

fn local_grid(cylinder: &HolomorphicCylinder, res: usize) -> Vec<Vec<C64>> {
    let axis = |radius: f64| -> Vec<f64> {
        let half = radius * FRAC_1_SQRT_2;
        if res == 1 {
            return vec![0.0];
        }
        (0..res).map(|k| -half + 2.0 * half * k as f64 / (res - 1) as f64).collect()
    };
    let factor = |radius: f64| -> Vec<C64> {
        let ax = axis(radius);
        ax.iter().flat_map(|&b| ax.iter().map(move |&a| C64::new(a, b))).collect()
    };
    let first = factor(cylinder.r());
    if cylinder.dim() == 1 {
        return first.into_iter().map(|w| vec![w]).collect();
    }
    let second = factor(cylinder.s());
    second.iter().flat_map(|&w2| first.iter().map(move |&w1| vec![w1, w2])).collect()
}

fn max_entry(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Build a holomorphic `h`-unitary frame on a grid in `cylinder`, or return
/// `NonFlatEvidence` when unitarity or path independence fails beyond `ode_tol`.
pub fn flat_frame(
    h: &HermitianMetricField,
    cylinder: &HolomorphicCylinder,
    res: usize,
    ode_tol: f64,
) -> Result<FrameTransform> {
    if h.dim() != cylinder.dim() {
        return Err(Error::DimensionMismatch { expected: cylinder.dim(), got: h.dim() });
    }
    if res == 0 {
        return Err(Error::InvalidParams("grid resolution must be positive".into()));
    }
    if !(ode_tol > 0.0) {
        return Err(Error::InvalidParams(format!("ODE tolerance must be positive, got {ode_tol}")));
    }
    let center = cylinder.center();
    let m0 = h.checked(center)?;
    let l = cholesky_lower(&m0).ok_or_else(|| Error::NotPositiveDefinite("metric at the center".into()))?;
    let base_factor = l.adjoint().try_inverse().ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))?;
    let tr = Transport { h, cylinder };
    let rank = h.rank();
    let identity = CMatrix::identity(rank, rank);

    let local = local_grid(cylinder, res);
    let rows: Vec<(CMatrix, f64, f64)> = local
        .par_iter()
        .map(|w| {
            let forward = tr.transport(&base_factor, w, false)?;
            let backward = tr.transport(&base_factor, w, true)?;
            let m = h.checked(&cylinder.to_global(w))?;
            let unitarity = max_entry(&(forward.adjoint() * m * &forward - &identity));
            let path = max_entry(&(&forward - backward));
            Ok((forward, unitarity, path))
        })
        .collect::<Result<Vec<_>>>()?;
    let unitarity = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let path = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    if unitarity > ode_tol || path > ode_tol {
        return Err(Error::NonFlatEvidence { unitarity, path, tolerance: ode_tol });
    }
    let cauchy_riemann = cr_residual(&tr, &base_factor, &local)?;
    Ok(FrameTransform {
        cylinder: cylinder.clone(),
        grid: local.iter().map(|w| cylinder.to_global(w)).collect(),
        values: rows.into_iter().map(|r| r.0).collect(),
        base_factor,
        residuals: FrameResiduals { unitarity, path, cauchy_riemann },
    })
}

/// `max |dbar_k g|` at up to `CR_POINTS` grid points, with `dbar_k` taken in
/// local coordinates (the frame is holomorphic there iff it is globally).
fn cr_residual(tr: &Transport<'_>, g0: &CMatrix, local: &[Vec<C64>]) -> Result<f64> {
    let stride = local.len().div_ceil(CR_POINTS).max(1);
    let picks: Vec<&Vec<C64>> = local.iter().step_by(stride).take(CR_POINTS).collect();
    let d = CR_STEP;
    let results: Vec<f64> = picks
        .par_iter()
        .map(|w| {
            let mut worst = 0.0_f64;
            for k in 0..w.len() {
                let shifted = |delta: C64| -> Result<CMatrix> {
                    let mut p = (*w).clone();
                    p[k] += delta;
                    tr.transport(g0, &p, false)
                };
                let stencil = |dir: C64| -> Result<CMatrix> {
                    let f = |t: f64| shifted(dir * t);
                    Ok((f(-2.0 * d)? - f(-d)? * C64::new(8.0, 0.0) + f(d)? * C64::new(8.0, 0.0) - f(2.0 * d)?)
                        / C64::new(12.0 * d, 0.0))
                };
                let dx = stencil(C64::new(1.0, 0.0))?;
                let dy = stencil(I)?;
                worst = worst.max(max_entry(&((dx + dy * I) * C64::new(0.5, 0.0))));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().fold(0.0, f64::max))
}
