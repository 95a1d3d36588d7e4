//! Catalog of scalar weights `phi` used as fixtures and CLI inputs.
//!
//! Every entry carries its exact complex Hessian `d^2 phi / dz_j dzbar_k` and a
//! ground-truth label, so classification results can be checked against known
//! answers.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, CMatrix, C64, I};

pub type Evaluator = Arc<dyn Fn(&[C64]) -> f64 + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&[C64]) -> CMatrix + Send + Sync>;

/// Default finite-difference step for [`complex_hessian_fd`].
pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthLabel {
    Pluriharmonic,
    StrictlyPsh,
    PshNotPh,
    NotPsh,
    SingularPsh,
}

impl TruthLabel {
    /// Whether the label describes a plurisubharmonic function.
    pub fn is_psh(self) -> bool {
        !matches!(self, TruthLabel::NotPsh)
    }
}

impl fmt::Display for TruthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TruthLabel::Pluriharmonic => "pluriharmonic",
            TruthLabel::StrictlyPsh => "strictly-psh",
            TruthLabel::PshNotPh => "psh-not-ph",
            TruthLabel::NotPsh => "not-psh",
            TruthLabel::SingularPsh => "singular-psh",
        };
        f.write_str(s)
    }
}

#[derive(Clone)]
pub struct WeightFunction {
    id: String,
    params: BTreeMap<String, f64>,
    n: usize,
    eval: Evaluator,
    hessian: Option<HessianFn>,
    truth: TruthLabel,
    singular_points: Vec<Vec<C64>>,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFunction")
            .field("id", &self.id)
            .field("params", &self.params)
            .field("n", &self.n)
            .field("truth", &self.truth)
            .finish()
    }
}

impl WeightFunction {
    /// A weight outside the catalog, e.g. `|u|_h^p` for a section `u`.
    pub fn custom(id: impl Into<String>, n: usize, eval: Evaluator, truth: TruthLabel) -> Self {
        Self { id: id.into(), params: BTreeMap::new(), n, eval, hessian: None, truth, singular_points: Vec::new() }
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

    pub fn truth_label(&self) -> TruthLabel {
        self.truth
    }

    pub fn singular_points(&self) -> &[Vec<C64>] {
        &self.singular_points
    }

    pub fn evaluate(&self, z: &[C64]) -> f64 {
        (self.eval)(z)
    }

    pub fn evaluator(&self) -> Evaluator {
        self.eval.clone()
    }

    pub fn exact_hessian(&self, z: &[C64]) -> Option<CMatrix> {
        self.hessian.as_ref().map(|h| h(z))
    }

    pub fn has_exact_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    /// Distance from `z` to the declared singular set (infinite if empty).
    pub fn singular_distance(&self, z: &[C64]) -> f64 {
        self.singular_points
            .iter()
            .map(|p| p.iter().zip(z).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// `-phi` with the mirrored label.
    pub fn negated(&self) -> WeightFunction {
        let eval = self.eval.clone();
        let hessian = self.hessian.clone();
        let truth = match self.truth {
            TruthLabel::Pluriharmonic => TruthLabel::Pluriharmonic,
            _ => TruthLabel::NotPsh,
        };
        WeightFunction {
            id: format!("neg_{}", self.id),
            params: self.params.clone(),
            n: self.n,
            eval: Arc::new(move |z| -eval(z)),
            hessian: hessian.map(|h| -> HessianFn { Arc::new(move |z| -h(z)) }),
            truth,
            singular_points: self.singular_points.clone(),
        }
    }
}

/// A parsed `id:key=val,key=val` weight or metric specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogSpec {
    pub id: String,
    pub params: BTreeMap<String, f64>,
}

impl CatalogSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (id, rest) = match spec.split_once(':') {
            Some((id, rest)) => (id.trim(), rest.trim()),
            None => (spec.trim(), ""),
        };
        if id.is_empty() {
            return Err(Error::InvalidParams(format!("empty id in `{spec}`")));
        }
        let mut params = BTreeMap::new();
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidParams(format!("expected key=value, got `{item}`")))?;
            let value: f64 =
                value.trim().parse().map_err(|_| Error::InvalidParams(format!("`{item}` is not numeric")))?;
            params.insert(key.trim().to_string(), value);
        }
        Ok(Self { id: id.to_string(), params })
    }
}

pub const CATALOG_IDS: [&str; 7] = ["constant", "re_linear", "re_quadratic", "gaussian_c", "log_norm", "abs4", "mix"];

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

fn norm_sqr(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

fn zero_hessian(n: usize) -> HessianFn {
    Arc::new(move |_| CMatrix::zeros(n, n))
}

fn scaled_identity(n: usize, c: f64) -> HessianFn {
    Arc::new(move |_| CMatrix::identity(n, n).scale(c))
}

fn label_for_c(c: f64) -> TruthLabel {
    if c > 0.0 {
        TruthLabel::StrictlyPsh
    } else if c < 0.0 {
        TruthLabel::NotPsh
    } else {
        TruthLabel::Pluriharmonic
    }
}

/// Look up a catalog weight. The dimension is read from the `n` parameter (default 1).
pub fn catalog_get(id: &str, params: &BTreeMap<String, f64>) -> Result<WeightFunction> {
    let n_raw = params.get("n").copied().unwrap_or(1.0);
    if n_raw != 1.0 && n_raw != 2.0 {
        return Err(Error::InvalidParams(format!("n must be 1 or 2, got {n_raw}")));
    }
    let n = n_raw as usize;
    let mut singular_points = Vec::new();
    let (eval, hessian, truth): (Evaluator, HessianFn, TruthLabel) = match id {
        "constant" => {
            let c = take(params, &[("c", 0.0)])?[0];
            (Arc::new(move |_| c), zero_hessian(n), TruthLabel::Pluriharmonic)
        }
        "re_linear" => {
            let v = take(params, &[("a", 1.0), ("a2", 0.0)])?;
            let (a, a2) = (v[0], v[1]);
            let eval: Evaluator = Arc::new(move |z| {
                let second = if z.len() > 1 { a2 * z[1].re } else { 0.0 };
                2.0 * (a * z[0].re + second)
            });
            (eval, zero_hessian(n), TruthLabel::Pluriharmonic)
        }
        "re_quadratic" => {
            let v = take(params, &[("b", 1.0), ("b2", 0.0)])?;
            let (b, b2) = (v[0], v[1]);
            let eval: Evaluator = Arc::new(move |z| {
                let cross = if z.len() > 1 { b2 * (z[0] * z[1]).re } else { 0.0 };
                b * (z[0] * z[0]).re + cross
            });
            (eval, zero_hessian(n), TruthLabel::Pluriharmonic)
        }
        "gaussian_c" => {
            let c = take(params, &[("c", 1.0)])?[0];
            (Arc::new(move |z| c * norm_sqr(z)), scaled_identity(n, c), label_for_c(c))
        }
        "log_norm" => {
            take(params, &[])?;
            if n != 1 {
                return Err(Error::InvalidParams("log_norm is only supported for n = 1".into()));
            }
            singular_points.push(vec![C64::new(0.0, 0.0)]);
            let eval: Evaluator = Arc::new(|z| {
                let m = z[0].norm_sqr();
                if m == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    m.ln()
                }
            });
            (eval, zero_hessian(1), TruthLabel::SingularPsh)
        }
        "abs4" => {
            take(params, &[])?;
            let hessian: HessianFn = Arc::new(move |z| {
                let s = norm_sqr(z);
                let mut h = CMatrix::zeros(n, n);
                for j in 0..n {
                    for k in 0..n {
                        let delta = if j == k { s } else { 0.0 };
                        h[(j, k)] = (z[j].conj() * z[k] + delta) * 2.0;
                    }
                }
                h
            });
            (Arc::new(|z| norm_sqr(z).powi(2)), hessian, TruthLabel::PshNotPh)
        }
        "mix" => {
            let v = take(params, &[("c", 1.0), ("a", 1.0), ("a2", 0.0)])?;
            let (c, a, a2) = (v[0], v[1], v[2]);
            let eval: Evaluator = Arc::new(move |z| {
                let second = if z.len() > 1 { a2 * z[1].re } else { 0.0 };
                c * norm_sqr(z) + a * z[0].re + second
            });
            (eval, scaled_identity(n, c), label_for_c(c))
        }
        other => return Err(Error::UnknownId { kind: "weight", id: other.to_string() }),
    };
    Ok(WeightFunction {
        id: id.to_string(),
        params: params.clone(),
        n,
        eval,
        hessian: Some(hessian),
        truth,
        singular_points,
    })
}

/// Parse `id:key=val,...` and look it up.
pub fn catalog_from_spec(spec: &str) -> Result<WeightFunction> {
    let parsed = CatalogSpec::parse(spec)?;
    catalog_get(&parsed.id, &parsed.params)
}

/// Central-difference complex Hessian `H_jk = d^2 phi / dz_j dzbar_k`, Hermitian-symmetrized.
pub fn complex_hessian_fd(w: &WeightFunction, z: &[C64], step: f64) -> Result<CMatrix> {
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("step must be positive, got {step}")));
    }
    let n = w.dim();
    if z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z.len() });
    }
    if w.singular_distance(z) <= 2.0 * step {
        return Err(Error::Singularity(format!("{z:?} within 2*step of the singular set")));
    }
    let eval = |offsets: &[(usize, f64)]| -> Result<f64> {
        let mut p = z.to_vec();
        for &(coord, h) in offsets {
            if coord % 2 == 0 {
                p[coord / 2] += C64::new(h, 0.0);
            } else {
                p[coord / 2] += C64::new(0.0, h);
            }
        }
        let v = w.evaluate(&p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Singularity(format!("{p:?}")))
        }
    };
    let h = step;
    let center = eval(&[])?;
    // Real Hessian over coordinates (x_1, y_1, ..., x_n, y_n).
    let m = 2 * n;
    let mut real = vec![vec![0.0; m]; m];
    for a in 0..m {
        real[a][a] = (eval(&[(a, h)])? - 2.0 * center + eval(&[(a, -h)])?) / (h * h);
        for b in (a + 1)..m {
            let v = (eval(&[(a, h), (b, h)])? - eval(&[(a, h), (b, -h)])? - eval(&[(a, -h), (b, h)])?
                + eval(&[(a, -h), (b, -h)])?)
                / (4.0 * h * h);
            real[a][b] = v;
            real[b][a] = v;
        }
    }
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            let re = real[xj][xk] + real[yj][yk];
            let im = real[xj][yk] - real[yj][xk];
            out[(j, k)] = (C64::new(re, 0.0) + I * im) * 0.25;
        }
    }
    Ok(hermitian_part(&out))
}
