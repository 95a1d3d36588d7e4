//! Chern curvature of a Hermitian metric field and its Griffiths form.
//!
//! For `M(z)` with `|v|^2 = v* M v` the curvature blocks are
//! `X^{(ij)} = (dbar_j M) M^{-1} (d_i M) - d_i dbar_j M`, and the component
//! `R_{i jbar alpha betabar}` is the `(beta, alpha)` entry of `X^{(ij)}`, so
//! that `sum R a_i conj(a_j) xi_alpha conj(xi_beta) = sum a_i conj(a_j) xi* X^{(ij)} xi`.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use super::metric::HermitianMetricField;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, hermitian_min_eigenpair, hermitian_part, quadratic_form, CMatrix, C64, I};

pub const DEFAULT_CURVATURE_STEP: f64 = 1e-3;
pub const GRIFFITHS_RESTARTS: usize = 20;
pub const GRIFFITHS_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    point: Vec<C64>,
    n: usize,
    rank: usize,
    /// `X^{(ij)}` at index `i * n + j`.
    blocks: Vec<CMatrix>,
}

impl Serialize for CurvatureTensor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let point: Vec<[f64; 2]> = self.point.iter().map(|c| [c.re, c.im]).collect();
        // components[i][j][alpha][beta] = R_{i jbar alpha betabar}
        let mut comps = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut row = Vec::with_capacity(self.n);
            for j in 0..self.n {
                let mut block = Vec::with_capacity(self.rank);
                for a in 0..self.rank {
                    block.push(
                        (0..self.rank)
                            .map(|b| {
                                let v = self.component(i, j, a, b);
                                [v.re, v.im]
                            })
                            .collect::<Vec<_>>(),
                    );
                }
                row.push(block);
            }
            comps.push(row);
        }
        let mut st = s.serialize_struct("CurvatureTensor", 4)?;
        st.serialize_field("point", &point)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("rank", &self.rank)?;
        st.serialize_field("components", &comps)?;
        st.end()
    }
}

impl CurvatureTensor {
    pub fn from_blocks(point: Vec<C64>, n: usize, rank: usize, blocks: Vec<CMatrix>) -> Self {
        assert_eq!(blocks.len(), n * n, "need n^2 blocks");
        Self { point, n, rank, blocks }
    }

    pub fn point(&self) -> &[C64] {
        &self.point
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn block(&self, i: usize, j: usize) -> &CMatrix {
        &self.blocks[i * self.n + j]
    }

    /// `R_{i jbar alpha betabar}`.
    pub fn component(&self, i: usize, j: usize, alpha: usize, beta: usize) -> C64 {
        self.block(i, j)[(beta, alpha)]
    }

    /// Largest `|R_{i jbar alpha betabar} - conj(R_{j ibar beta alphabar})|`.
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                for a in 0..self.rank {
                    for b in 0..self.rank {
                        let d = self.component(i, j, a, b) - self.component(j, i, b, a).conj();
                        worst = worst.max(d.norm());
                    }
                }
            }
        }
        worst
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.iter()).map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn real_direction(n: usize, k: usize) -> Vec<C64> {
    let mut e = vec![C64::new(0.0, 0.0); n];
    e[k / 2] = if k.is_multiple_of(2) { C64::new(1.0, 0.0) } else { I };
    e
}

fn offset(z: &[C64], dirs: &[(&[C64], f64)]) -> Vec<C64> {
    let mut out = z.to_vec();
    for (d, t) in dirs {
        for (o, di) in out.iter_mut().zip(d.iter()) {
            *o += di * *t;
        }
    }
    out
}

/// First and second real partial derivatives of `M` over the `2n` real
/// coordinates `(x_1, y_1, x_2, y_2)` by central differences.
fn real_derivatives(h: &HermitianMetricField, z: &[C64], step: f64) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
    let n = h.dim();
    let m = 2 * n;
    let dirs: Vec<Vec<C64>> = (0..m).map(|k| real_direction(n, k)).collect();
    let at = |pts: &[(&[C64], f64)]| h.checked(&offset(z, pts));
    let center = at(&[])?;
    let mut first = Vec::with_capacity(m);
    let mut second = vec![CMatrix::zeros(h.rank(), h.rank()); m * m];
    for k in 0..m {
        let plus = at(&[(&dirs[k], step)])?;
        let minus = at(&[(&dirs[k], -step)])?;
        first.push((&plus - &minus) / C64::new(2.0 * step, 0.0));
        second[k * m + k] = (&plus - &center * C64::new(2.0, 0.0) + &minus) / C64::new(step * step, 0.0);
    }
    for k in 0..m {
        for l in (k + 1)..m {
            let pp = at(&[(&dirs[k], step), (&dirs[l], step)])?;
            let pm = at(&[(&dirs[k], step), (&dirs[l], -step)])?;
            let mp = at(&[(&dirs[k], -step), (&dirs[l], step)])?;
            let mm = at(&[(&dirs[k], -step), (&dirs[l], -step)])?;
            let d = (pp - pm - mp + mm) / C64::new(4.0 * step * step, 0.0);
            second[l * m + k] = d.clone();
            second[k * m + l] = d;
        }
    }
    Ok((first, second))
}

fn blocks_from_derivatives(m0: &CMatrix, first: &[CMatrix], second: &[CMatrix], n: usize) -> Result<Vec<CMatrix>> {
    let inv = m0.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite("metric is singular".into()))?;
    let half = C64::new(0.5, 0.0);
    let quarter = C64::new(0.25, 0.0);
    let m = 2 * n;
    // d_i = (dx - i dy)/2, dbar_j = (dx + i dy)/2
    let d: Vec<CMatrix> = (0..n).map(|i| (&first[2 * i] - &first[2 * i + 1] * I) * half).collect();
    let dbar: Vec<CMatrix> = (0..n).map(|j| (&first[2 * j] + &first[2 * j + 1] * I) * half).collect();
    let mut blocks = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            let ddbar =
                (&second[xi * m + xj] + &second[yi * m + yj] + (&second[xi * m + yj] - &second[yi * m + xj]) * I)
                    * quarter;
            blocks.push(&dbar[j] * &inv * &d[i] - ddbar);
        }
    }
    Ok(blocks)
}

/// Chern curvature by central differences with one Richardson step (`step`, `step/2`).
pub fn chern_curvature_fd(h: &HermitianMetricField, z: &[C64], step: f64) -> Result<CurvatureTensor> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParams(format!("step must be positive, got {step}")));
    }
    if z.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: z.len() });
    }
    let m0 = h.checked(z)?;
    let (f1, s1) = real_derivatives(h, z, step)?;
    let (f2, s2) = real_derivatives(h, z, 0.5 * step)?;
    let third = C64::new(1.0 / 3.0, 0.0);
    let extrap = |a: &[CMatrix], b: &[CMatrix]| -> Vec<CMatrix> {
        a.iter().zip(b).map(|(coarse, fine)| (fine * C64::new(4.0, 0.0) - coarse) * third).collect()
    };
    let first = extrap(&f1, &f2);
    let second = extrap(&s1, &s2);
    let blocks = blocks_from_derivatives(&m0, &first, &second, h.dim())?;
    Ok(CurvatureTensor::from_blocks(z.to_vec(), h.dim(), h.rank(), blocks))
}

/// Chern curvature at `z`: the closed form when the metric carries one,
/// finite differences otherwise.
pub fn chern_curvature(h: &HermitianMetricField, z: &[C64], step: f64) -> Result<CurvatureTensor> {
    if z.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: z.len() });
    }
    match h.exact_curvature(z) {
        Some(t) => {
            h.checked(z)?;
            Ok(t)
        }
        None => chern_curvature_fd(h, z, step),
    }
}

/// Value of the Griffiths form with the imaginary part kept as a residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GriffithsValue {
    pub value: f64,
    pub imaginary_residual: f64,
}

/// `sum R_{i jbar alpha betabar} a_i conj(a_j) xi_alpha conj(xi_beta)`.
pub fn griffiths_form(r: &CurvatureTensor, a: &[C64], xi: &[C64]) -> Result<GriffithsValue> {
    if a.len() != r.dim() {
        return Err(Error::DimensionMismatch { expected: r.dim(), got: a.len() });
    }
    if xi.len() != r.rank() {
        return Err(Error::DimensionMismatch { expected: r.rank(), got: xi.len() });
    }
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..r.dim() {
        for j in 0..r.dim() {
            let b = r.block(i, j);
            let mut q = C64::new(0.0, 0.0);
            for (al, x_al) in xi.iter().enumerate() {
                for (be, x_be) in xi.iter().enumerate() {
                    q += x_be.conj() * b[(be, al)] * x_al;
                }
            }
            acc += a[i] * a[j].conj() * q;
        }
    }
    Ok(GriffithsValue { value: acc.re, imaginary_residual: acc.im })
}

/// Minimal Griffiths form over unit `a` and `|xi|_h = 1` fibers, with the minimizers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GriffithsBound {
    pub value: f64,
    #[serde(serialize_with = "crate::classify::serialize_point")]
    pub a: Vec<C64>,
    #[serde(serialize_with = "crate::classify::serialize_point")]
    pub xi: Vec<C64>,
}

/// `min { G(a, xi) : |a| = 1, |xi|_h = 1 }` with `h = M` at the tensor's point.
///
/// Exact when `n = 1` or `rank = 1` (a single Hermitian eigenproblem); otherwise
/// alternating minimization over `a` and `xi` from basis starts plus
/// `GRIFFITHS_RESTARTS` seeded random starts.
pub fn griffiths_lower_bound(r: &CurvatureTensor, m: &CMatrix) -> Result<GriffithsBound> {
    let (n, rank) = (r.dim(), r.rank());
    if m.nrows() != rank {
        return Err(Error::DimensionMismatch { expected: rank, got: m.nrows() });
    }
    let l = cholesky_lower(m).ok_or_else(|| Error::NotPositiveDefinite("metric at the point".into()))?;
    let l_inv = l.try_inverse().ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))?;
    // xi = L^{-*} eta turns |xi|_M into |eta|.
    let l_inv_adj = l_inv.adjoint();
    let y: Vec<CMatrix> = r.blocks.iter().map(|b| &l_inv * b * &l_inv_adj).collect();
    let y_at = |i: usize, j: usize| &y[i * n + j];
    let z_of = |a: &[C64]| {
        let mut z = CMatrix::zeros(rank, rank);
        for i in 0..n {
            for j in 0..n {
                z += y_at(i, j) * (a[i] * a[j].conj());
            }
        }
        hermitian_part(&z)
    };
    let a_of = |eta: &[C64]| {
        // A_ij = eta* Y^{(ij)} eta, form = b* A b with b = conj(a)
        let mut am = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let yij = y_at(i, j);
                let mut q = C64::new(0.0, 0.0);
                for (p, ep) in eta.iter().enumerate() {
                    for (s, es) in eta.iter().enumerate() {
                        q += es.conj() * yij[(s, p)] * ep;
                    }
                }
                am[(i, j)] = q;
            }
        }
        hermitian_part(&am)
    };
    let to_xi = |eta: &[C64]| -> Vec<C64> {
        let v = &l_inv_adj * nalgebra::DVector::from_vec(eta.to_vec());
        v.iter().copied().collect()
    };
    let mut starts: Vec<Vec<C64>> = (0..n)
        .map(|k| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[k] = C64::new(1.0, 0.0);
            e
        })
        .collect();
    if n > 1 && rank > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(GRIFFITHS_SEED);
        for _ in 0..GRIFFITHS_RESTARTS {
            let v: Vec<C64> =
                (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            starts.push(v.into_iter().map(|c| c / norm).collect());
        }
    } else {
        starts.truncate(1);
    }
    let mut best: Option<GriffithsBound> = None;
    for start in starts {
        let mut a = start;
        let mut value = f64::INFINITY;
        let single = n == 1 || rank == 1;
        for _ in 0..200 {
            let (_, eta) = hermitian_min_eigenpair(&z_of(&a));
            let (next, b) = hermitian_min_eigenpair(&a_of(&eta));
            a = b.iter().map(|c| c.conj()).collect();
            let done = single || (value - next).abs() <= 1e-15 * (1.0 + next.abs());
            value = next;
            if done {
                break;
            }
        }
        let zm = z_of(&a);
        let (_, eta) = hermitian_min_eigenpair(&zm);
        let candidate = GriffithsBound { value: quadratic_form(&zm, &eta), a, xi: to_xi(&eta) };
        if best.as_ref().is_none_or(|b| candidate.value < b.value) {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| Error::InvalidParams("empty start set".into()))
}
