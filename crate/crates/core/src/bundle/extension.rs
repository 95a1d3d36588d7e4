//! Vector-valued extension indices, the curvature estimator built on them,
//! and the flatness test.

use std::f64::consts::SQRT_2;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::curvature::{chern_curvature_fd, DEFAULT_CURVATURE_STEP};
use super::metric::HermitianMetricField;
use crate::bergman::{ExtensionSolution, PolynomialBasis, SolverConfig, MAX_CONDITION};
use crate::classify::{cylinder_family, family_margin, ClassificationReport, Evidence, Region, Verdict};
use crate::error::{Error, Result};
use crate::extrapolate::richardson;
use crate::geometry::{build_quadrature, HolomorphicCylinder, QuadratureRule};
use crate::linalg::{hermitian_eigenvalues, quadratic_form, CMatrix, CompensatedSum, C64};

/// Per-node data for minimizing `\int f* M f` over polynomial sections.
#[derive(Debug, Clone)]
pub struct VectorProblem {
    rule: QuadratureRule,
    basis: PolynomialBasis,
    rank: usize,
    values: Vec<C64>,
    metrics: Vec<CMatrix>,
    metric_center: CMatrix,
}

impl VectorProblem {
    pub fn new(h: &HermitianMetricField, cylinder: &HolomorphicCylinder, degree: usize, order: usize) -> Result<Self> {
        if h.dim() != cylinder.dim() {
            return Err(Error::DimensionMismatch { expected: cylinder.dim(), got: h.dim() });
        }
        let rule = build_quadrature(cylinder, order)?;
        let basis = PolynomialBasis::new(cylinder, degree);
        let metric_center = h.checked(cylinder.center())?;
        let metrics = rule.nodes().iter().map(|z| h.checked(z)).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(rule.len() * basis.len());
        for w in rule.local_nodes() {
            values.extend(basis.eval_local(w));
        }
        Ok(Self { rule, basis, rank: h.rank(), values, metrics, metric_center })
    }

    pub fn basis(&self) -> &PolynomialBasis {
        &self.basis
    }

    fn row(&self, i: usize) -> &[C64] {
        let k = self.basis.len();
        &self.values[i * k..(i + 1) * k]
    }

    /// Section values at the nodes for coefficients interleaved as `k * rank + alpha`.
    pub fn eval_nodes(&self, c: &[C64]) -> Vec<Vec<C64>> {
        let r = self.rank;
        (0..self.rule.len())
            .map(|i| {
                let mut f = vec![C64::new(0.0, 0.0); r];
                for (k, b) in self.row(i).iter().enumerate() {
                    for (alpha, fa) in f.iter_mut().enumerate() {
                        *fa += b * c[k * r + alpha];
                    }
                }
                f
            })
            .collect()
    }

    /// `sum_i w_i |f_i|_h^p`.
    pub fn objective(&self, c: &[C64], p: f64) -> f64 {
        let f = self.eval_nodes(c);
        self.rule
            .weights()
            .iter()
            .zip(&f)
            .zip(&self.metrics)
            .map(|((w, fi), m)| w * quadratic_form(m, fi).max(0.0).powf(0.5 * p))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Block Gram matrix `G_{(k,a),(l,b)} = sum_i w_i s_i conj(b_k) b_l M_ab`,
    /// so that `c* G c = sum_i w_i s_i f_i* M_i f_i`.
    pub fn gram(&self, scale: Option<&[f64]>) -> CMatrix {
        let (k, r) = (self.basis.len(), self.rank);
        let dim = k * r;
        let mut g = CMatrix::zeros(dim, dim);
        for i in 0..self.rule.len() {
            let s = self.rule.weights()[i] * scale.map_or(1.0, |v| v[i]);
            let row = self.row(i);
            let m = &self.metrics[i];
            for kk in 0..k {
                let bk = row[kk].conj() * s;
                for ll in 0..k {
                    let coef = bk * row[ll];
                    for a in 0..r {
                        for b in 0..r {
                            g[(kk * r + a, ll * r + b)] += coef * m[(a, b)];
                        }
                    }
                }
            }
        }
        crate::linalg::hermitian_part(&g)
    }

    /// Minimize `c* G c` with the first `rank` coefficients pinned to `v`.
    pub fn solve_l2(&self, v: &[C64], scale: Option<&[f64]>) -> Result<(Vec<C64>, f64)> {
        let g = self.gram(scale);
        let eig = hermitian_eigenvalues(&g);
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::DegreeTooHigh { condition, degree: self.basis.degree() });
        }
        let r = self.rank;
        let dim = g.nrows();
        let u = dim - r;
        let mut coefficients = v.to_vec();
        if u == 0 {
            let value = quadratic_form(&g, v);
            return Ok((coefficients, value));
        }
        let guu = g.view((r, r), (u, u)).into_owned();
        let guf = g.view((r, 0), (u, r)).into_owned();
        let gff = g.view((0, 0), (r, r)).into_owned();
        let chol = nalgebra::Cholesky::new(guu)
            .ok_or_else(|| Error::DegreeTooHigh { condition, degree: self.basis.degree() })?;
        let x = chol.solve(&guf);
        // Schur complement G_FF - G_FU G_UU^{-1} G_UF, independent of v.
        let schur = crate::linalg::hermitian_part(&(&gff - guf.adjoint() * &x));
        let vv = nalgebra::DVector::from_vec(v.to_vec());
        let cu = -(&x * &vv);
        coefficients.extend(cu.iter().copied());
        Ok((coefficients, quadratic_form(&schur, v)))
    }

    pub fn norm_at_center(&self, v: &[C64]) -> f64 {
        quadratic_form(&self.metric_center, v).max(0.0).sqrt()
    }
}

/// Scale by a power of two so the largest component has modulus in `[1, 2)`.
/// Power-of-two scaling is exact, so `v` and `2^k v` share this representative.
fn canonical_fiber(v: &[C64]) -> Vec<C64> {
    let big = v.iter().map(|c| c.re.abs().max(c.im.abs())).fold(0.0, f64::max);
    let e = big.log2().floor() as i32;
    let s = 2f64.powi(-e);
    v.iter().map(|c| c * s).collect()
}

/// `min \int |f|_h^p` over polynomial sections with `f(x) = v`, normalized by
/// `Vol(P) |v|_h^p`.
pub fn vector_extension_index(
    h: &HermitianMetricField,
    cylinder: &HolomorphicCylinder,
    v: &[C64],
    p: f64,
    config: &SolverConfig,
) -> Result<ExtensionSolution> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(p));
    }
    if v.len() != h.rank() {
        return Err(Error::DimensionMismatch { expected: h.rank(), got: v.len() });
    }
    if v.iter().all(|c| *c == C64::new(0.0, 0.0)) {
        return Err(Error::InvalidParams("fiber vector must be nonzero".into()));
    }
    let n = cylinder.dim();
    let problem = VectorProblem::new(h, cylinder, config.degree_for(n), config.order_for(n))?;
    solve_vector(&problem, v, p, config, cylinder.volume())
}

fn solve_vector(
    problem: &VectorProblem,
    v: &[C64],
    p: f64,
    config: &SolverConfig,
    volume: f64,
) -> Result<ExtensionSolution> {
    let v = canonical_fiber(v);
    let target = volume * problem.norm_at_center(&v).powf(p);
    let (mut c, l2) = problem.solve_l2(&v, None)?;
    let degree = problem.basis().degree();
    if p == 2.0 {
        return Ok(ExtensionSolution {
            index: l2 / target,
            minimal_integral: l2,
            p,
            degree,
            converged: true,
            iterations: 1,
            coefficients: c,
        });
    }
    let mut obj = problem.objective(&c, p);
    let mut best = (c.clone(), obj);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        let scale: Vec<f64> = problem
            .eval_nodes(&c)
            .iter()
            .zip(&problem.metrics)
            .map(|(f, m)| quadratic_form(m, f).max(1e-300).powf(0.5 * (p - 2.0)))
            .collect();
        let (next_ls, _) = problem.solve_l2(&v, Some(&scale))?;
        let next: Vec<C64> = c.iter().zip(&next_ls).map(|(old, new)| old + (new - old) * config.damping).collect();
        let next_obj = problem.objective(&next, p);
        if next_obj < best.1 {
            best = (next.clone(), next_obj);
        }
        let change = (next_obj - obj).abs();
        c = next;
        obj = next_obj;
        if change <= config.tol * next_obj {
            converged = true;
            break;
        }
    }
    let (coefficients, minimal_integral) = best;
    Ok(ExtensionSolution {
        index: minimal_integral / target,
        minimal_integral,
        p,
        degree,
        converged,
        iterations,
        coefficients,
    })
}

pub const DEFAULT_LEVELS: usize = 5;
pub const DEFAULT_BASE_DIAMETER: f64 = 0.1;
pub const DEFAULT_FIBER_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub diameter: f64,
    /// `min (1 - L) / d^2` over fibers and cylinders at this level.
    pub c_raw: f64,
    pub cylinders: usize,
    pub fibers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureEstimate {
    pub c_est: f64,
    pub extrapolation_error: f64,
    pub low_confidence: bool,
    pub levels: Vec<LevelRow>,
}

/// Cylinders of diameter `d` at `x` used by the estimator.
fn level_cylinders(x: &[C64], d: f64) -> Result<Vec<HolomorphicCylinder>> {
    if x.len() == 1 {
        Ok(vec![HolomorphicCylinder::disc(x[0], SQRT_2 * d)?])
    } else {
        // cylinder_family spreads diameters over [gamma/4, gamma); keep only the top one.
        let fam = cylinder_family(x, d / 0.999)?;
        Ok(fam.into_iter().filter(|p| (p.diameter() - d).abs() <= 1e-12 * d).collect())
    }
}

/// `r` basis vectors plus `samples` seeded random fibers, all with `|xi|_h = 1` at `x`.
pub fn fiber_sample(h: &HermitianMetricField, x: &[C64], samples: usize, seed: u64) -> Result<Vec<Vec<C64>>> {
    let m = h.checked(x)?;
    let r = h.rank();
    let mut out = Vec::with_capacity(r + samples);
    for k in 0..r {
        let mut e = vec![C64::new(0.0, 0.0); r];
        e[k] = C64::new(1.0, 0.0);
        out.push(e);
    }
    if r > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            out.push((0..r).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
        }
    }
    Ok(out
        .into_iter()
        .map(|v| {
            let norm = quadratic_form(&m, &v).sqrt();
            v.into_iter().map(|c| c / norm).collect()
        })
        .collect())
}

/// Estimate the best `c` with `i Theta >= c omega (x) Id` at `x` from `L^2`
/// extension indices on shrinking cylinders, `c_raw = (1 - L)/d^2`, extrapolated
/// in `d^2`.
pub fn curvature_from_extension(
    h: &HermitianMetricField,
    x: &[C64],
    levels: usize,
    base_diameter: f64,
    fiber_samples: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<CurvatureEstimate> {
    if levels == 0 {
        return Err(Error::InvalidParams("need at least one level".into()));
    }
    if !(base_diameter > 0.0 && base_diameter.is_finite()) {
        return Err(Error::InvalidRadius { name: "base diameter", value: base_diameter });
    }
    let fibers = fiber_sample(h, x, fiber_samples, seed)?;
    let diameters: Vec<f64> = (0..levels).map(|k| base_diameter * 0.5_f64.powi(k as i32)).collect();
    let mut jobs = Vec::new();
    let mut counts = Vec::with_capacity(levels);
    for (lvl, &d) in diameters.iter().enumerate() {
        let cyls = level_cylinders(x, d)?;
        counts.push(cyls.len());
        for p in cyls {
            for v in &fibers {
                jobs.push((lvl, p.clone(), v.clone()));
            }
        }
    }
    let raws: Vec<(usize, f64)> = jobs
        .into_par_iter()
        .map(|(lvl, p, v)| {
            let sol = vector_extension_index(h, &p, &v, 2.0, config)?;
            Ok((lvl, (1.0 - sol.index) / p.diameter_squared()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mins = vec![f64::INFINITY; levels];
    for (lvl, c) in raws {
        mins[lvl] = mins[lvl].min(c);
    }
    let rows: Vec<LevelRow> = diameters
        .iter()
        .zip(&mins)
        .zip(&counts)
        .map(|((&d, &c), &cyl)| LevelRow { diameter: d, c_raw: c, cylinders: cyl, fibers: fibers.len() })
        .collect();
    let ex = richardson(&mins, 2.0, 2);
    let diffs: Vec<f64> = mins.windows(2).map(|w| w[1] - w[0]).collect();
    let noise = 1e-8;
    let low_confidence = diffs.windows(2).any(|w| w[0] * w[1] < 0.0 && w[0].abs().min(w[1].abs()) > noise);
    Ok(CurvatureEstimate { c_est: ex.value, extrapolation_error: ex.error_estimate, low_confidence, levels: rows })
}

pub const CURVATURE_CHECK_TOL: f64 = 1e-6;

/// Vector extension indices over a cylinder family and basis fibers at each
/// grid center; flat iff every `|L - 1| <= tol`. Smooth metrics also get a
/// finite-difference curvature check at every center.
pub fn flatness_test(
    h: &HermitianMetricField,
    region: &Region,
    p: f64,
    gamma: f64,
    grid: usize,
    tol: f64,
    config: &SolverConfig,
) -> Result<ClassificationReport> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidRadius { name: "gamma", value: gamma });
    }
    if region.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: region.dim() });
    }
    let centers = region.grid(grid, family_margin(gamma, h.dim()))?;
    let mut jobs = Vec::new();
    for x in &centers {
        let fibers = fiber_sample(h, x, 0, 0)?;
        for cyl in cylinder_family(x, gamma)? {
            for v in &fibers {
                jobs.push((cyl.clone(), v.clone()));
            }
        }
    }
    let mut evidence: Vec<Evidence> = jobs
        .into_par_iter()
        .map(|(cylinder, v)| {
            let point = cylinder.center().to_vec();
            match vector_extension_index(h, &cylinder, &v, p, config) {
                Ok(sol) => Evidence {
                    cylinder,
                    point,
                    statistic: sol.index - 1.0,
                    threshold: tol,
                    note: (!sol.converged).then(|| format!("no convergence after {} iterations", sol.iterations)),
                },
                Err(e) => Evidence { cylinder, point, statistic: f64::NAN, threshold: tol, note: Some(e.to_string()) },
            }
        })
        .collect();
    let index_flat = evidence.iter().all(|e| e.statistic.abs() <= tol);
    let failed = evidence.iter().any(|e| e.note.is_some());
    let mut curvature_disagrees = false;
    if h.is_smooth() {
        for x in &centers {
            let r = chern_curvature_fd(h, x, DEFAULT_CURVATURE_STEP)?;
            let size = r.max_abs();
            let curved = size > CURVATURE_CHECK_TOL;
            if curved == index_flat {
                curvature_disagrees = true;
            }
            evidence.push(Evidence {
                cylinder: cylinder_family(x, gamma)?.swap_remove(0),
                point: x.clone(),
                statistic: size,
                threshold: CURVATURE_CHECK_TOL,
                note: Some("max |R| by finite differences".into()),
            });
        }
    }
    let verdict = if failed {
        Verdict::Inconclusive
    } else if index_flat && !curvature_disagrees {
        Verdict::Flat
    } else if !index_flat {
        Verdict::NotFlat
    } else {
        Verdict::Inconclusive
    };
    Ok(ClassificationReport { verdict, evidence, tolerance: tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::extension_index;
    use crate::bundle::metric::{metric_get, HermitianMetricField};
    use crate::linalg::I;
    use crate::weights::catalog_get;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn metric(id: &str, pairs: &[(&str, f64)]) -> HermitianMetricField {
        let params: BTreeMap<String, f64> = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        metric_get(id, &params).unwrap()
    }

    fn unit_disc() -> HolomorphicCylinder {
        HolomorphicCylinder::disc(C64::new(0.0, 0.0), 1.0).unwrap()
    }

    #[test]
    fn identity_metric_gives_constant_section() {
        let h = metric("constant", &[("h11", 1.0), ("h22", 1.0), ("h12re", 0.0), ("h12im", 0.0)]);
        let v = [C64::new(0.3, -1.2), C64::new(2.0, 0.5)];
        let sol = vector_extension_index(&h, &unit_disc(), &v, 2.0, &SolverConfig::default()).unwrap();
        assert!((sol.index - 1.0).abs() < 1e-12);
        assert!(sol.coefficients[2..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn flat_exponential_metric_equality() {
        let h = metric("flat_exp", &[]);
        let cfg = SolverConfig::default();
        for v in [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.5, 0.5), I]] {
            for p in [2.0, 1.0] {
                let sol = vector_extension_index(&h, &unit_disc(), &v, p, &cfg).unwrap();
                assert!((sol.index - 1.0).abs() < 1e-6, "p={p}: {}", sol.index);
            }
        }
    }

    #[test]
    fn scaled_gaussian_reduces_to_scalar() {
        let h = metric("scaled_gaussian", &[("c", 1.0)]);
        let v = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let sol = vector_extension_index(&h, &unit_disc(), &v, 2.0, &SolverConfig::default()).unwrap();
        assert!((sol.index - (1.0 - (-1.0_f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn rank_one_matches_scalar_solver() {
        let cfg = SolverConfig::default();
        let disc = HolomorphicCylinder::disc(C64::new(0.2, 0.1), 0.6).unwrap();
        for p in [2.0, 1.0, 1.5] {
            // |f|_h^p = |f|^p e^{-p c |z|^2 / 2}
            let w = catalog_get("gaussian_c", &BTreeMap::from([("c".to_string(), 1.5 * p / 2.0)])).unwrap();
            let h = metric("rank1_gaussian", &[("c", 1.5)]);
            let a = vector_extension_index(&h, &disc, &[C64::new(1.0, 0.0)], p, &cfg).unwrap();
            let b = extension_index(&disc, &w, p, &cfg).unwrap();
            assert!((a.index - b.index).abs() < 1e-9, "p={p}: {} vs {}", a.index, b.index);
        }
    }

    #[test]
    fn homogeneity_is_exact_for_binary_and_unit_scalings() {
        let h = metric("diag_gaussian", &[]);
        let cfg = SolverConfig::default();
        let v = [C64::new(0.7, -0.2), C64::new(0.1, 0.9)];
        for p in [2.0, 1.5] {
            let base = vector_extension_index(&h, &unit_disc(), &v, p, &cfg).unwrap();
            for t in [C64::new(2.0, 0.0), C64::new(-0.25, 0.0), C64::new(0.0, 8.0), C64::new(0.0, -1.0)] {
                let tv: Vec<C64> = v.iter().map(|c| c * t).collect();
                let scaled = vector_extension_index(&h, &unit_disc(), &tv, p, &cfg).unwrap();
                assert_eq!(scaled.index, base.index, "t={t}");
            }
            let tv: Vec<C64> = v.iter().map(|c| c * 3.7).collect();
            let scaled = vector_extension_index(&h, &unit_disc(), &tv, p, &cfg).unwrap();
            assert!((scaled.index - base.index).abs() < 1e-12 * base.index);
        }
    }

    #[test]
    fn zero_fiber_rejected() {
        let h = metric("constant", &[]);
        let zero = [C64::new(0.0, 0.0); 2];
        assert!(vector_extension_index(&h, &unit_disc(), &zero, 2.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn curvature_estimator_on_gaussians() {
        let cfg = SolverConfig::default();
        let x = [C64::new(0.0, 0.0)];
        for c in [-1.0, 0.0, 1.0] {
            let h = metric("rank1_gaussian", &[("c", c)]);
            let est = curvature_from_extension(&h, &x, 5, 0.1, 8, 42, &cfg).unwrap();
            assert!((est.c_est - c).abs() < 5e-3, "c={c}: {}", est.c_est);
            assert_eq!(est.levels.len(), 5);
        }
        // r = 0.1 row from the closed form
        let h = metric("rank1_gaussian", &[("c", 1.0)]);
        let est = curvature_from_extension(&h, &x, 1, 0.1 / SQRT_2, 0, 42, &cfg).unwrap();
        let r2: f64 = 0.01;
        let closed = (1.0 - (1.0 - (-r2).exp()) / r2) / (r2 / 2.0);
        assert!((est.levels[0].c_raw - closed).abs() < 1e-8);
        assert!((closed - 0.99667).abs() < 1e-5);
    }

    #[test]
    fn curvature_estimator_rank_two() {
        let cfg = SolverConfig::default();
        let h = metric("diag_gaussian", &[("c1", 0.5), ("c2", 1.5)]);
        let est = curvature_from_extension(&h, &[C64::new(0.1, 0.0)], 4, 0.1, 4, 42, &cfg).unwrap();
        assert!((est.c_est - 0.5).abs() < 5e-3, "{}", est.c_est);
    }

    #[test]
    fn flatness_verdicts() {
        let cfg = SolverConfig::default();
        let region = Region::Box { half: 1.0, n: 1 };
        let flat = flatness_test(&metric("flat_exp", &[]), &region, 2.0, 0.2, 2, 1e-5, &cfg).unwrap();
        assert_eq!(flat.verdict, Verdict::Flat);
        let holo = flatness_test(&metric("holo_frame", &[]), &region, 2.0, 0.2, 2, 1e-5, &cfg).unwrap();
        assert_eq!(holo.verdict, Verdict::Flat);
        let curved = flatness_test(&metric("scaled_gaussian", &[]), &region, 2.0, 0.3, 2, 1e-5, &cfg).unwrap();
        assert_eq!(curved.verdict, Verdict::NotFlat);
    }

    #[test]
    fn homogeneity_custom_metric() {
        let h = HermitianMetricField::custom(
            "c",
            1,
            1,
            std::sync::Arc::new(|z: &[C64]| CMatrix::from_element(1, 1, C64::new(1.0 + z[0].norm_sqr(), 0.0))),
        );
        let a = vector_extension_index(&h, &unit_disc(), &[C64::new(1.0, 0.0)], 2.0, &SolverConfig::default()).unwrap();
        let b =
            vector_extension_index(&h, &unit_disc(), &[C64::new(0.0, -4.0)], 2.0, &SolverConfig::default()).unwrap();
        assert_eq!(a.index, b.index);
        // 1 + |z|^2 is psh-flipped: the constant gives 1 + 1/2 on the unit disc.
        assert!(a.minimal_integral <= PI * 1.5 + 1e-12);
    }
}
