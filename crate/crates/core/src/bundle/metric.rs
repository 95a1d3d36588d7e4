//! Hermitian metric fields on trivial bundles over domains in C^n.
//!
//! A metric is a matrix field `M(z)` with `|v|_h^2 = v* M(z) v`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::curvature::CurvatureTensor;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_deviation, hermitian_eigenvalues, CMatrix, C64};
use crate::weights::{CatalogSpec, Evaluator};

pub type MatrixField = Arc<dyn Fn(&[C64]) -> CMatrix + Send + Sync>;
pub type CurvatureOracle = Arc<dyn Fn(&[C64]) -> CurvatureTensor + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricLabel {
    Flat,
    GriffithsPositiveC,
    GriffithsNegative,
    None,
}

impl fmt::Display for MetricLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricLabel::Flat => "flat",
            MetricLabel::GriffithsPositiveC => "griffiths-positive-c",
            MetricLabel::GriffithsNegative => "griffiths-negative",
            MetricLabel::None => "none",
        })
    }
}

#[derive(Clone)]
pub struct HermitianMetricField {
    id: String,
    params: BTreeMap<String, f64>,
    n: usize,
    rank: usize,
    eval: MatrixField,
    smooth: bool,
    truth: MetricLabel,
    curvature_bound: Option<f64>,
    exact_curvature: Option<CurvatureOracle>,
}

impl fmt::Debug for HermitianMetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HermitianMetricField")
            .field("id", &self.id)
            .field("params", &self.params)
            .field("n", &self.n)
            .field("rank", &self.rank)
            .field("truth", &self.truth)
            .finish()
    }
}

impl HermitianMetricField {
    pub fn custom(id: impl Into<String>, n: usize, rank: usize, eval: MatrixField) -> Self {
        Self {
            id: id.into(),
            params: BTreeMap::new(),
            n,
            rank,
            eval,
            smooth: true,
            truth: MetricLabel::None,
            curvature_bound: None,
            exact_curvature: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn truth_label(&self) -> MetricLabel {
        self.truth
    }

    /// Best constant `c` with `i Theta >= c omega (x) Id`, when known in closed form.
    pub fn curvature_bound(&self) -> Option<f64> {
        self.curvature_bound
    }

    pub fn evaluate(&self, z: &[C64]) -> CMatrix {
        (self.eval)(z)
    }

    pub fn exact_curvature(&self, z: &[C64]) -> Option<CurvatureTensor> {
        self.exact_curvature.as_ref().map(|f| f(z))
    }

    /// `M(z)`, verified Hermitian positive definite with finite positive determinant.
    pub fn checked(&self, z: &[C64]) -> Result<CMatrix> {
        let m = self.evaluate(z);
        if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!("non-finite metric at {z:?}")));
        }
        let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if hermitian_deviation(&m) > 1e-12 * scale.max(1.0) {
            return Err(Error::NotPositiveDefinite(format!("metric not Hermitian at {z:?}")));
        }
        let lo = hermitian_eigenvalues(&m)[0];
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {lo:e} at {z:?}")));
        }
        Ok(m)
    }

    /// `|v|_h` at `z`.
    pub fn norm(&self, z: &[C64], v: &[C64]) -> f64 {
        crate::linalg::quadratic_form(&self.evaluate(z), v).max(0.0).sqrt()
    }
}

pub const METRIC_IDS: [&str; 6] =
    ["constant", "flat_exp", "holo_frame", "rank1_gaussian", "diag_gaussian", "scaled_gaussian"];

fn take(params: &BTreeMap<String, f64>, allowed: &[(&str, f64)]) -> Result<Vec<f64>> {
    for key in params.keys() {
        if key != "n" && !allowed.iter().any(|(k, _)| k == key) {
            return Err(Error::InvalidParams(format!("unknown parameter `{key}`")));
        }
    }
    allowed
        .iter()
        .map(|(k, default)| {
            let v = params.get(*k).copied().unwrap_or(*default);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidParams(format!("parameter `{k}` must be finite")))
            }
        })
        .collect()
}

fn rank_param(v: f64) -> Result<usize> {
    if v == 1.0 || v == 2.0 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidParams(format!("rank must be 1 or 2, got {v}")))
    }
}

/// Constant PD matrix from `h11, h22, h12re, h12im`.
fn constant_matrix(rank: usize, v: &[f64]) -> Result<CMatrix> {
    let m = if rank == 1 {
        CMatrix::from_element(1, 1, C64::new(v[0], 0.0))
    } else {
        let off = C64::new(v[2], v[3]);
        CMatrix::from_row_slice(2, 2, &[C64::new(v[0], 0.0), off, off.conj(), C64::new(v[1], 0.0)])
    };
    let lo = hermitian_eigenvalues(&m)[0];
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("constant matrix has eigenvalue {lo:e}")));
    }
    Ok(m)
}

const H_PARAMS: [(&str, f64); 4] = [("h11", 1.0), ("h22", 2.0), ("h12re", 0.5), ("h12im", 0.25)];

fn norm_sqr(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

/// `R^{(ij)} = psi_{i jbar} M(z)` for metrics `e^{-psi} H`.
fn conformal_curvature(n: usize, hess: CMatrix, field: MatrixField) -> CurvatureOracle {
    Arc::new(move |z: &[C64]| {
        let m = field(z);
        let blocks = (0..n * n).map(|k| &m * hess[(k / n, k % n)]).collect();
        CurvatureTensor::from_blocks(z.to_vec(), n, m.nrows(), blocks)
    })
}

fn label_for(c: f64) -> MetricLabel {
    if c > 0.0 {
        MetricLabel::GriffithsPositiveC
    } else if c < 0.0 {
        MetricLabel::GriffithsNegative
    } else {
        MetricLabel::Flat
    }
}

/// Look up a catalog metric. Dimension from `n` (default 1).
///
/// * `constant` (`rank`, `h11`, `h22`, `h12re`, `h12im`): constant `H`.
/// * `flat_exp` (same plus `a`, `a2`): `e^{-2 Re(a z_1 + a2 z_2)} H`.
/// * `holo_frame`: `G* G` with `G = [[e^{z_1/2}, z_1], [0, 1]]`.
/// * `rank1_gaussian` (`c`): `e^{-c|z|^2}`.
/// * `diag_gaussian` (`c1`, `c2`): `diag(e^{-c1|z|^2}, e^{-c2|z|^2})`.
/// * `scaled_gaussian` (`c`, `rank`): `e^{-c|z|^2} I`.
pub fn metric_get(id: &str, params: &BTreeMap<String, f64>) -> Result<HermitianMetricField> {
    let n_raw = params.get("n").copied().unwrap_or(1.0);
    if n_raw != 1.0 && n_raw != 2.0 {
        return Err(Error::InvalidParams(format!("n must be 1 or 2, got {n_raw}")));
    }
    let n = n_raw as usize;
    let zero = |n: usize, r: usize| -> CurvatureOracle {
        Arc::new(move |z: &[C64]| CurvatureTensor::from_blocks(z.to_vec(), n, r, vec![CMatrix::zeros(r, r); n * n]))
    };
    let (rank, eval, truth, bound, exact): (usize, MatrixField, MetricLabel, f64, CurvatureOracle) = match id {
        "constant" => {
            let mut allowed = vec![("rank", 2.0)];
            allowed.extend(H_PARAMS);
            let v = take(params, &allowed)?;
            let rank = rank_param(v[0])?;
            let h = constant_matrix(rank, &v[1..])?;
            (rank, Arc::new(move |_| h.clone()), MetricLabel::Flat, 0.0, zero(n, rank))
        }
        "flat_exp" => {
            let mut allowed = vec![("rank", 2.0), ("a", 1.0), ("a2", 0.0)];
            allowed.extend(H_PARAMS);
            let v = take(params, &allowed)?;
            let rank = rank_param(v[0])?;
            let (a, a2) = (v[1], v[2]);
            let h = constant_matrix(rank, &v[3..])?;
            let eval: MatrixField = Arc::new(move |z: &[C64]| {
                let mut s = a * z[0].re;
                if z.len() > 1 {
                    s += a2 * z[1].re;
                }
                h.scale((-2.0 * s).exp())
            });
            (rank, eval, MetricLabel::Flat, 0.0, zero(n, rank))
        }
        "holo_frame" => {
            take(params, &[])?;
            let eval: MatrixField = Arc::new(|z: &[C64]| {
                let g = holo_frame_g(z[0]);
                g.adjoint() * g
            });
            (2, eval, MetricLabel::Flat, 0.0, zero(n, 2))
        }
        "rank1_gaussian" => {
            let c = take(params, &[("c", 1.0)])?[0];
            let eval: MatrixField =
                Arc::new(move |z: &[C64]| CMatrix::from_element(1, 1, C64::new((-c * norm_sqr(z)).exp(), 0.0)));
            let exact = conformal_curvature(n, CMatrix::identity(n, n).scale(c), eval.clone());
            (1, eval, label_for(c), c, exact)
        }
        "scaled_gaussian" => {
            let v = take(params, &[("c", 1.0), ("rank", 2.0)])?;
            let (c, rank) = (v[0], rank_param(v[1])?);
            let eval: MatrixField =
                Arc::new(move |z: &[C64]| CMatrix::identity(rank, rank).scale((-c * norm_sqr(z)).exp()));
            let exact = conformal_curvature(n, CMatrix::identity(n, n).scale(c), eval.clone());
            (rank, eval, label_for(c), c, exact)
        }
        "diag_gaussian" => {
            let v = take(params, &[("c1", 1.0), ("c2", 2.0)])?;
            let (c1, c2) = (v[0], v[1]);
            let eval: MatrixField = Arc::new(move |z: &[C64]| {
                let s = norm_sqr(z);
                CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    C64::new((-c1 * s).exp(), 0.0),
                    C64::new((-c2 * s).exp(), 0.0),
                ]))
            });
            let field = eval.clone();
            let exact: CurvatureOracle = Arc::new(move |z: &[C64]| {
                let m = field(z);
                let blocks = (0..n * n)
                    .map(|k| {
                        let mut b = CMatrix::zeros(2, 2);
                        if k / n == k % n {
                            b[(0, 0)] = m[(0, 0)] * c1;
                            b[(1, 1)] = m[(1, 1)] * c2;
                        }
                        b
                    })
                    .collect();
                CurvatureTensor::from_blocks(z.to_vec(), n, 2, blocks)
            });
            let truth = if c1 > 0.0 && c2 > 0.0 {
                MetricLabel::GriffithsPositiveC
            } else if c1 <= 0.0 && c2 <= 0.0 && (c1 < 0.0 || c2 < 0.0) {
                MetricLabel::GriffithsNegative
            } else if c1 == 0.0 && c2 == 0.0 {
                MetricLabel::Flat
            } else {
                MetricLabel::None
            };
            (2, eval, truth, c1.min(c2), exact)
        }
        other => return Err(Error::UnknownId { kind: "metric", id: other.to_string() }),
    };
    Ok(HermitianMetricField {
        id: id.to_string(),
        params: params.clone(),
        n,
        rank,
        eval,
        smooth: true,
        truth,
        curvature_bound: Some(bound),
        exact_curvature: Some(exact),
    })
}

/// The holomorphic matrix `[[e^{z/2}, z], [0, 1]]`.
pub fn holo_frame_g(z: C64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[(z * 0.5).exp(), z, C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
}

pub fn metric_from_spec(spec: &str) -> Result<HermitianMetricField> {
    let parsed = CatalogSpec::parse(spec)?;
    metric_get(&parsed.id, &parsed.params)
}

/// `G(z)* M(z) G(z)` for a holomorphic frame change `G`: the same bundle in
/// another frame, hence the same curvature class.
pub fn pulled_back(h: &HermitianMetricField, id: impl Into<String>, g: MatrixField) -> HermitianMetricField {
    let inner = h.eval.clone();
    let mut out = HermitianMetricField::custom(
        id,
        h.n,
        h.rank,
        Arc::new(move |z: &[C64]| {
            let gz = g(z);
            gz.adjoint() * inner(z) * gz
        }),
    );
    if h.truth == MetricLabel::Flat {
        out.truth = MetricLabel::Flat;
        out.curvature_bound = Some(0.0);
    }
    out
}

/// `M(z) = e^{-phi(z)} I_rank` from a scalar evaluator.
pub fn conformal_metric(id: impl Into<String>, n: usize, rank: usize, phi: Evaluator) -> HermitianMetricField {
    HermitianMetricField::custom(
        id,
        n,
        rank,
        Arc::new(move |z: &[C64]| CMatrix::identity(rank, rank).scale((-phi(z)).exp())),
    )
}
