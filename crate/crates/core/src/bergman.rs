//! Weighted p-Bergman spaces on holomorphic cylinders.
//!
//! The candidate space is polynomials of bounded degree in the local
//! coordinates `w = A*(z - x)`, scaled by the cylinder radii. The basis is
//! graded so that only its first element (the constant) is nonzero at the
//! center; the constraint `f(x) = 1` therefore pins one coefficient and the
//! remaining problem is unconstrained. For `p = 2` the minimum is
//! `1 / (e_0^* G^{-1} e_0)` with `G` the weighted Gram matrix.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::extrapolate::neville_to_zero;
use crate::geometry::{build_quadrature, default_order, HolomorphicCylinder, QuadratureRule};
use crate::linalg::{hermitian_eigenvalues, CMatrix, CompensatedSum, C64};
use crate::lp_iter;
use crate::weights::WeightFunction;

/// Condition number beyond which a Gram matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Floor applied to `|f|` before taking logarithms of candidate functions.
pub const MODULUS_FLOOR: f64 = 1e-300;

const GRAM_CHUNK: usize = 4096;

pub fn default_degree(n: usize) -> usize {
    if n == 1 {
        10
    } else {
        6
    }
}

/// Monomials `(w_1/r)^a (w_2/s)^b` with `a + b <= degree`, graded by total degree.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialBasis {
    n: usize,
    degree: usize,
    monomials: Vec<[usize; 2]>,
    scale: [f64; 2],
}

impl PolynomialBasis {
    pub fn new(cylinder: &HolomorphicCylinder, degree: usize) -> Self {
        let n = cylinder.dim();
        let mut monomials = Vec::new();
        for total in 0..=degree {
            if n == 1 {
                monomials.push([total, 0]);
            } else {
                for a in (0..=total).rev() {
                    monomials.push([a, total - a]);
                }
            }
        }
        Self { n, degree, monomials, scale: [cylinder.r(), cylinder.s()] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[[usize; 2]] {
        &self.monomials
    }

    /// Values of every basis element at a local point.
    pub fn eval_local(&self, w: &[C64]) -> Vec<C64> {
        let mut powers = [vec![C64::new(1.0, 0.0)], vec![C64::new(1.0, 0.0)]];
        for (i, p) in powers.iter_mut().enumerate().take(self.n) {
            let t = w[i] / self.scale[i];
            for k in 1..=self.degree {
                let prev = p[k - 1];
                p.push(prev * t);
            }
        }
        self.monomials
            .iter()
            .map(|&[a, b]| if self.n == 1 { powers[0][a] } else { powers[0][a] * powers[1][b] })
            .collect()
    }
}

/// Evaluate `sum_k c_k b_k` at a global point of `cylinder`.
pub fn evaluate_polynomial(
    basis: &PolynomialBasis,
    cylinder: &HolomorphicCylinder,
    coefficients: &[C64],
    z: &[C64],
) -> C64 {
    let values = basis.eval_local(&cylinder.to_local(z));
    values.iter().zip(coefficients).map(|(b, c)| b * c).sum()
}

fn serialize_complex_vec<S: Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
    pairs.serialize(s)
}

/// A minimizer of the constrained weighted `L^p` problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionSolution {
    pub index: f64,
    pub minimal_integral: f64,
    pub p: f64,
    pub degree: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(serialize_with = "serialize_complex_vec")]
    pub coefficients: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BergmanValue {
    pub value: f64,
    pub p: f64,
}

/// Solver knobs shared by the scalar and vector problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Polynomial degree; `None` picks the dimension default.
    pub degree: Option<usize>,
    /// Quadrature order; `None` picks the dimension default.
    pub order: Option<usize>,
    pub damping: f64,
    pub tol: f64,
    pub max_iterations: usize,
    /// Reweighted iteration settings, used for `0 < p < 1`.
    pub gz_max_steps: usize,
    pub gz_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            degree: None,
            order: None,
            damping: 0.5,
            tol: 1e-10,
            max_iterations: 500,
            gz_max_steps: 40,
            gz_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn degree_for(&self, n: usize) -> usize {
        self.degree.unwrap_or_else(|| default_degree(n))
    }

    pub fn order_for(&self, n: usize) -> usize {
        self.order.unwrap_or_else(|| default_order(n))
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = Some(degree);
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = Some(order);
        self
    }
}

/// Weighted Gram matrix `G_ab = sum_i w_i b_a(z_i) conj(b_b(z_i)) e^{-phi(z_i)}`.
pub fn gram_matrix(basis: &PolynomialBasis, rule: &QuadratureRule, w: &WeightFunction) -> Result<CMatrix> {
    let problem = ScalarProblem::from_parts(rule.clone(), basis.clone(), w)?;
    Ok(problem.gram(None))
}

/// Outcome of a single weighted least-squares solve.
#[derive(Debug, Clone)]
pub struct L2Solve {
    pub coefficients: Vec<C64>,
    pub minimal_integral: f64,
    pub condition: f64,
}

/// Precomputed data for the scalar extension problem on one cylinder.
#[derive(Debug, Clone)]
pub struct ScalarProblem {
    rule: QuadratureRule,
    basis: PolynomialBasis,
    values: Vec<C64>,
    phi: Vec<f64>,
    phi_center: f64,
}

impl ScalarProblem {
    pub fn new(cylinder: &HolomorphicCylinder, w: &WeightFunction, degree: usize, order: usize) -> Result<Self> {
        if w.dim() != cylinder.dim() {
            return Err(Error::DimensionMismatch { expected: cylinder.dim(), got: w.dim() });
        }
        if w.singular_points().iter().any(|p| cylinder.contains(p)) {
            return Err(Error::Singularity(format!(
                "e^(-phi) of `{}` is not integrable on a cylinder containing its singular set",
                w.id()
            )));
        }
        let rule = build_quadrature(cylinder, order)?;
        Self::from_parts(rule, PolynomialBasis::new(cylinder, degree), w)
    }

    pub fn from_parts(rule: QuadratureRule, basis: PolynomialBasis, w: &WeightFunction) -> Result<Self> {
        let phi_center = w.evaluate(rule.cylinder().center());
        if !phi_center.is_finite() {
            return Err(Error::Singularity(format!(
                "phi(x) = {phi_center} at the center {:?}",
                rule.cylinder().center()
            )));
        }
        let mut phi = Vec::with_capacity(rule.len());
        for (index, z) in rule.nodes().iter().enumerate() {
            let value = w.evaluate(z);
            if !value.is_finite() || !(-value).exp().is_finite() {
                return Err(Error::PoisonedNode { index, value });
            }
            phi.push(value);
        }
        let k = basis.len();
        let mut values = Vec::with_capacity(rule.len() * k);
        for wl in rule.local_nodes() {
            values.extend(basis.eval_local(wl));
        }
        Ok(Self { rule, basis, values, phi, phi_center })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn basis(&self) -> &PolynomialBasis {
        &self.basis
    }

    pub fn phi_nodes(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_center(&self) -> f64 {
        self.phi_center
    }

    /// `Vol(P) e^{-phi(x)}`, the optimal bound.
    pub fn target(&self) -> f64 {
        self.rule.cylinder().volume() * (-self.phi_center).exp()
    }

    fn row(&self, i: usize) -> &[C64] {
        let k = self.basis.len();
        &self.values[i * k..(i + 1) * k]
    }

    /// Values of `f = sum c_k b_k` at the quadrature nodes.
    pub fn eval_nodes(&self, coefficients: &[C64]) -> Vec<C64> {
        (0..self.rule.len()).map(|i| self.row(i).iter().zip(coefficients).map(|(b, c)| b * c).sum()).collect()
    }

    /// `sum_i w_i |f_i|^p e^{-phi_i}`.
    pub fn objective(&self, coefficients: &[C64], p: f64) -> f64 {
        let f = self.eval_nodes(coefficients);
        self.rule
            .weights()
            .iter()
            .zip(&f)
            .zip(&self.phi)
            .map(|((w, fi), phi)| w * fi.norm().powf(p) * (-phi).exp())
            .collect::<CompensatedSum>()
            .value()
    }

    /// Gram matrix for the weight `phi + extra` (extra given per node).
    pub fn gram(&self, extra: Option<&[f64]>) -> CMatrix {
        use rayon::prelude::*;
        let k = self.basis.len();
        // Fixed chunks summed in order keep the result independent of the thread count.
        let len = self.rule.len();
        let chunks: Vec<Vec<C64>> = (0..len.div_ceil(GRAM_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut upper = vec![C64::new(0.0, 0.0); k * k];
                for i in c * GRAM_CHUNK..((c + 1) * GRAM_CHUNK).min(len) {
                    let shift = extra.map_or(0.0, |e| e[i]);
                    let omega = self.rule.weights()[i] * (-(self.phi[i] + shift)).exp();
                    let row = self.row(i);
                    for a in 0..k {
                        let t = row[a] * omega;
                        for b in a..k {
                            upper[a * k + b] += t * row[b].conj();
                        }
                    }
                }
                upper
            })
            .collect();
        let mut upper = vec![C64::new(0.0, 0.0); k * k];
        for part in chunks {
            for (u, v) in upper.iter_mut().zip(part) {
                *u += v;
            }
        }
        let mut g = CMatrix::zeros(k, k);
        for a in 0..k {
            for b in a..k {
                g[(a, b)] = upper[a * k + b];
                g[(b, a)] = upper[a * k + b].conj();
            }
            g[(a, a)] = C64::new(g[(a, a)].re, 0.0);
        }
        g
    }

    /// Constrained weighted `L^2` minimization with weight `e^{-(phi + extra)}`.
    pub fn solve_l2(&self, extra: Option<&[f64]>) -> Result<L2Solve> {
        let g = self.gram(extra);
        // With G_ab = sum b_a conj(b_b), the integral of |sum c_k b_k|^2 is
        // d* G d for d = conj(c).
        let mut solve = solve_constrained(&g, self.basis.degree())?;
        for c in solve.coefficients.iter_mut() {
            *c = c.conj();
        }
        Ok(solve)
    }

    pub fn index_of(&self, minimal_integral: f64, p: f64) -> f64 {
        let _ = p;
        minimal_integral / self.target()
    }
}

/// Lower Cholesky factor computed column by column. The factor of a leading
/// block is the leading block of the factor, bit for bit.
fn prefix_cholesky(g: &CMatrix) -> Option<CMatrix> {
    let k = g.nrows();
    let mut l = CMatrix::zeros(k, k);
    for j in 0..k {
        let mut d = g[(j, j)].re;
        for m in 0..j {
            d -= l[(j, m)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..k {
            let mut s = g[(i, j)];
            for m in 0..j {
                s -= l[(i, m)] * l[(j, m)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Minimize `c* G c` subject to `c_0 = 1`.
pub fn solve_constrained(g: &CMatrix, degree: usize) -> Result<L2Solve> {
    let eig = hermitian_eigenvalues(g);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegreeTooHigh { condition, degree });
    }
    let l = prefix_cholesky(g).ok_or(Error::DegreeTooHigh { condition, degree })?;
    let k = g.nrows();
    // y = L^{-1} e_0
    let mut y = vec![C64::new(0.0, 0.0); k];
    for i in 0..k {
        let mut s = if i == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        for m in 0..i {
            s -= l[(i, m)] * y[m];
        }
        y[i] = s / l[(i, i)].re;
    }
    let mut norm = 0.0;
    for v in &y {
        norm += v.norm_sqr();
    }
    let minimal_integral = 1.0 / norm;
    // c = G^{-1} e_0 / (e_0* G^{-1} e_0) = L^{-*} y / norm
    let mut c = vec![C64::new(0.0, 0.0); k];
    for i in (0..k).rev() {
        let mut s = y[i];
        for m in (i + 1)..k {
            s -= l[(m, i)].conj() * c[m];
        }
        c[i] = s / l[(i, i)].re;
    }
    for v in c.iter_mut() {
        *v /= norm;
    }
    c[0] = C64::new(1.0, 0.0);
    Ok(L2Solve { coefficients: c, minimal_integral, condition })
}

/// Minimal `L^2` extension of `1` from the center of `cylinder`.
pub fn min_l2_extension(
    cylinder: &HolomorphicCylinder,
    w: &WeightFunction,
    config: &SolverConfig,
) -> Result<ExtensionSolution> {
    let n = cylinder.dim();
    let problem = ScalarProblem::new(cylinder, w, config.degree_for(n), config.order_for(n))?;
    l2_solution(&problem)
}

fn l2_solution(problem: &ScalarProblem) -> Result<ExtensionSolution> {
    let solve = problem.solve_l2(None)?;
    Ok(ExtensionSolution {
        index: problem.index_of(solve.minimal_integral, 2.0),
        minimal_integral: solve.minimal_integral,
        p: 2.0,
        degree: problem.basis().degree(),
        converged: true,
        iterations: 1,
        coefficients: solve.coefficients,
    })
}

/// Log-weight shift `-(p - 2) log|f|` turning `|f|^{p-2} e^{-phi}` into `e^{-(phi + shift)}`.
pub fn modulus_shift(f: &[C64], exponent: f64) -> Vec<f64> {
    f.iter().map(|v| -exponent * v.norm().max(MODULUS_FLOOR).ln()).collect()
}

/// Damped iteratively reweighted least squares for `p >= 1`.
pub fn irls(problem: &ScalarProblem, p: f64, config: &SolverConfig) -> Result<ExtensionSolution> {
    let seed = problem.solve_l2(None)?;
    let mut c = seed.coefficients;
    let mut obj = problem.objective(&c, p);
    let mut best = (c.clone(), obj);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        let f = problem.eval_nodes(&c);
        let shift = modulus_shift(&f, p - 2.0);
        let ls = problem.solve_l2(Some(&shift))?;
        let next: Vec<C64> =
            c.iter().zip(&ls.coefficients).map(|(old, new)| old + (new - old) * config.damping).collect();
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
    let (mut coefficients, minimal_integral) = best;
    coefficients[0] = C64::new(1.0, 0.0);
    Ok(ExtensionSolution {
        index: problem.index_of(minimal_integral, p),
        minimal_integral,
        p,
        degree: problem.basis().degree(),
        converged,
        iterations,
        coefficients,
    })
}

/// `L^p` extension index `min \int |f|^p e^{-phi} / (Vol(P) e^{-phi(x)})` over `f(x) = 1`.
pub fn extension_index(
    cylinder: &HolomorphicCylinder,
    w: &WeightFunction,
    p: f64,
    config: &SolverConfig,
) -> Result<ExtensionSolution> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidExponent(p));
    }
    let n = cylinder.dim();
    let (degree, order) = (config.degree_for(n), config.order_for(n));
    if p < 1.0 {
        let trace = lp_iter::guan_zhou_extend(cylinder, w, p, config.gz_max_steps, config.gz_tol, degree, order)?;
        return Ok(trace.final_solution);
    }
    let problem = ScalarProblem::new(cylinder, w, degree, order)?;
    solve_problem(&problem, p, config)
}

pub fn solve_problem(problem: &ScalarProblem, p: f64, config: &SolverConfig) -> Result<ExtensionSolution> {
    if p == 2.0 {
        l2_solution(problem)
    } else if p >= 1.0 {
        irls(problem, p, config)
    } else {
        let trace = lp_iter::guan_zhou_problem(problem, p, config.gz_max_steps, config.gz_tol)?;
        Ok(trace.final_solution)
    }
}

/// `B_p(x; e^{-phi}) = 1 / min \int |f|^p e^{-phi}`.
pub fn p_bergman_kernel(
    cylinder: &HolomorphicCylinder,
    w: &WeightFunction,
    p: f64,
    config: &SolverConfig,
) -> Result<BergmanValue> {
    let sol = extension_index(cylinder, w, p, config)?;
    Ok(BergmanValue { value: 1.0 / sol.minimal_integral, p })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainLimitScan {
    /// `(t, B on shrink(P, t))`, ascending in `t`.
    pub rows: Vec<(f64, f64)>,
    /// Polynomial extrapolation of the rows to `t = 1`.
    pub extrapolated: f64,
    pub extrapolation_error: f64,
    pub monotone: bool,
}

/// Kernels on the exhaustion `shrink(P, t)` for ascending `t`.
pub fn kernel_domain_limit_scan(
    cylinder: &HolomorphicCylinder,
    w: &WeightFunction,
    p: f64,
    t_grid: &[f64],
    config: &SolverConfig,
) -> Result<DomainLimitScan> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParams("empty t grid".into()));
    }
    if t_grid.windows(2).any(|pair| pair[1] <= pair[0]) {
        return Err(Error::InvalidParams("t grid must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let shrunk = cylinder.shrink(t)?;
        rows.push((t, p_bergman_kernel(&shrunk, w, p, config)?.value));
    }
    let monotone = rows.windows(2).all(|pair| pair[1].1 <= pair[0].1);
    let tail = &rows[rows.len().saturating_sub(4)..];
    let hs: Vec<f64> = tail.iter().map(|(t, _)| 1.0 - t).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, b)| *b).collect();
    let (extrapolated, extrapolation_error) = if hs.last() == Some(&0.0) {
        (ys[ys.len() - 1], 0.0)
    } else {
        let e = neville_to_zero(&hs, &ys);
        (e.value, e.error_estimate)
    };
    Ok(DomainLimitScan { rows, extrapolated, extrapolation_error, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityScan {
    #[serde(serialize_with = "serialize_points")]
    pub points: Vec<Vec<C64>>,
    pub values: Vec<f64>,
    /// Largest `|B(x_{k+1}) - B(x_k)|` over consecutive grid points.
    pub modulus: f64,
}

fn serialize_points<S: Serializer>(v: &[Vec<C64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pts: Vec<Vec<[f64; 2]>> = v.iter().map(|p| p.iter().map(|c| [c.re, c.im]).collect()).collect();
    pts.serialize(s)
}

/// `x -> B_{x+P,p}(x)` sampled on a grid of centers.
pub fn kernel_continuity_scan(
    cylinder: &HolomorphicCylinder,
    w: &WeightFunction,
    centers: &[Vec<C64>],
    p: f64,
    config: &SolverConfig,
) -> Result<ContinuityScan> {
    use rayon::prelude::*;
    let values: Vec<Result<f64>> = centers
        .par_iter()
        .map(|x| {
            let shifted = cylinder.translated(x.clone())?;
            match p_bergman_kernel(&shifted, w, p, config) {
                Ok(b) => Ok(b.value),
                Err(Error::PoisonedNode { .. }) | Err(Error::Singularity(_)) => {
                    Err(Error::DomainEscape(format!("{x:?} + P leaves the finiteness domain")))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let modulus = values.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
    Ok(ContinuityScan { points: centers.to_vec(), values, modulus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::catalog_get;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn weight(id: &str, pairs: &[(&str, f64)]) -> WeightFunction {
        let params: BTreeMap<String, f64> = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        catalog_get(id, &params).unwrap()
    }

    fn unit_disc() -> HolomorphicCylinder {
        HolomorphicCylinder::disc(C64::new(0.0, 0.0), 1.0).unwrap()
    }

    #[test]
    fn basis_size_and_center_values() {
        let p = HolomorphicCylinder::new(
            vec![C64::new(0.1, 0.2), C64::new(0.0, -0.3)],
            CMatrix::identity(2, 2),
            0.5,
            0.4,
            2,
        )
        .unwrap();
        let b = PolynomialBasis::new(&p, 4);
        assert_eq!(b.len(), 15); // C(6, 2)
        let at_center = b.eval_local(&p.to_local(p.center()));
        assert_eq!(at_center[0], C64::new(1.0, 0.0));
        assert!(at_center[1..].iter().all(|v| *v == C64::new(0.0, 0.0)));
        let small = PolynomialBasis::new(&p, 3);
        assert_eq!(&b.monomials()[..small.len()], small.monomials());
    }

    #[test]
    fn gram_flat_unit_disc_is_diagonal() {
        let disc = unit_disc();
        let rule = build_quadrature(&disc, 24).unwrap();
        let basis = PolynomialBasis::new(&disc, 2);
        let g = gram_matrix(&basis, &rule, &weight("constant", &[])).unwrap();
        let expected = [PI, PI / 2.0, PI / 3.0];
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { expected[a] } else { 0.0 };
                assert!((g[(a, b)] - C64::new(want, 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn gram_radial_weight_is_diagonal() {
        let disc = unit_disc();
        let rule = build_quadrature(&disc, 24).unwrap();
        let basis = PolynomialBasis::new(&disc, 6);
        for w in [weight("gaussian_c", &[("c", 1.3)]), weight("abs4", &[])] {
            let g = gram_matrix(&basis, &rule, &w).unwrap();
            for a in 0..basis.len() {
                for b in 0..basis.len() {
                    if a != b {
                        assert!(g[(a, b)].norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn gram_off_diagonal_for_re_linear() {
        // G_01 = \int conj(w) e^{-2 Re w}; the angular integral gives
        // 2 pi rho * (-I_1(2 rho)) so G_01 = -2 pi \int_0^1 rho^2 I_1(2 rho) d rho.
        let disc = unit_disc();
        let rule = build_quadrature(&disc, 24).unwrap();
        let basis = PolynomialBasis::new(&disc, 1);
        let g = gram_matrix(&basis, &rule, &weight("re_linear", &[])).unwrap();
        let bessel_i1 =
            |x: f64| (0..40usize).map(|k| (x / 2.0).powi(2 * k as i32 + 1) / (fact(k) * fact(k + 1))).sum::<f64>();
        let m = 4000;
        let h = 1.0 / m as f64;
        let mut integral = 0.0;
        for j in 0..=m {
            let rho = j as f64 * h;
            let wgt = if j == 0 || j == m {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            integral += wgt * rho * rho * bessel_i1(2.0 * rho);
        }
        integral *= h / 3.0;
        let expected = -2.0 * PI * integral;
        assert!((g[(0, 1)].re - expected).abs() < 1e-9, "{} vs {}", g[(0, 1)], expected);
        assert!(g[(0, 1)].im.abs() < 1e-12);
    }

    fn fact(k: usize) -> f64 {
        (1..=k).map(|v| v as f64).product()
    }

    #[test]
    fn flat_weight_gives_constant_minimizer() {
        for r in [0.3, 1.0, 2.0] {
            let disc = HolomorphicCylinder::disc(C64::new(0.2, -0.1), r).unwrap();
            let sol = min_l2_extension(&disc, &weight("constant", &[]), &SolverConfig::default()).unwrap();
            assert_relative_eq!(sol.minimal_integral, PI * r * r, max_relative = 1e-12);
            assert_relative_eq!(sol.index, 1.0, max_relative = 1e-12);
            assert!(sol.coefficients[1..].iter().all(|c| c.norm() < 1e-12));
        }
    }

    #[test]
    fn gaussian_index_matches_radial_formula() {
        let sol =
            min_l2_extension(&unit_disc(), &weight("gaussian_c", &[("c", 1.0)]), &SolverConfig::default()).unwrap();
        assert!((sol.index - 0.6321205588285577).abs() < 1e-10);
    }

    #[test]
    fn re_linear_equality_and_exponential_minimizer() {
        let disc = HolomorphicCylinder::disc(C64::new(0.0, 0.0), 1.0).unwrap();
        let sol = min_l2_extension(&disc, &weight("re_linear", &[]), &SolverConfig::default()).unwrap();
        assert!((sol.index - 1.0).abs() < 1e-10);
        // f = e^{w}: coefficients 1/k!
        for (k, c) in sol.coefficients.iter().enumerate().take(6) {
            assert!((c - C64::new(1.0 / fact(k), 0.0)).norm() < 1e-8, "k={k}: {c}");
        }
    }

    #[test]
    fn constraint_is_exact() {
        let disc = HolomorphicCylinder::disc(C64::new(0.3, 0.3), 0.4).unwrap();
        let cfg = SolverConfig::default();
        let basis = PolynomialBasis::new(&disc, cfg.degree_for(1));
        for (id, params) in [("mix", vec![("c", 0.7)]), ("re_quadratic", vec![]), ("abs4", vec![])] {
            for p in [2.0, 1.0, 1.5] {
                let sol = extension_index(&disc, &weight(id, &params), p, &cfg).unwrap();
                let fx = evaluate_polynomial(&basis, &disc, &sol.coefficients, disc.center());
                assert!((fx - C64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn objective_matches_minimum_off_axis() {
        let disc = HolomorphicCylinder::disc(C64::new(0.3, -0.4), 0.5).unwrap();
        let w = weight("mix", &[("c", 0.8), ("a", 1.5)]);
        let problem = ScalarProblem::new(&disc, &w, 8, 24).unwrap();
        let solve = problem.solve_l2(None).unwrap();
        assert!(solve.coefficients[1].im.abs() > 1e-3);
        let direct = problem.objective(&solve.coefficients, 2.0);
        assert!((direct - solve.minimal_integral).abs() < 1e-13 * direct);
        // Conjugated coefficients are a worse competitor.
        let conj: Vec<C64> = solve.coefficients.iter().map(|c| c.conj()).collect();
        assert!(problem.objective(&conj, 2.0) > direct * (1.0 + 1e-6));
    }

    #[test]
    fn p_one_flat_and_gaussian() {
        let cfg = SolverConfig::default();
        let flat = extension_index(&unit_disc(), &weight("constant", &[]), 1.0, &cfg).unwrap();
        assert!((flat.index - 1.0).abs() < 1e-10);
        let g = extension_index(&unit_disc(), &weight("gaussian_c", &[("c", 1.0)]), 1.0, &cfg).unwrap();
        assert!((g.index - (1.0 - (-1.0_f64).exp())).abs() < 1e-8);
        assert!(g.converged);
    }

    #[test]
    fn p_two_delegates_to_closed_form() {
        let cfg = SolverConfig::default();
        for (id, params) in [
            ("constant", vec![]),
            ("re_linear", vec![]),
            ("re_quadratic", vec![]),
            ("gaussian_c", vec![("c", -0.5)]),
            ("abs4", vec![]),
            ("mix", vec![("c", 0.3)]),
        ] {
            let w = weight(id, &params);
            let disc = HolomorphicCylinder::disc(C64::new(0.1, 0.0), 0.6).unwrap();
            let a = extension_index(&disc, &w, 2.0, &cfg).unwrap();
            let b = min_l2_extension(&disc, &w, &cfg).unwrap();
            assert!((a.index - b.index).abs() <= 1e-12);
        }
    }

    #[test]
    fn non_positive_exponent_rejected() {
        let cfg = SolverConfig::default();
        for p in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                extension_index(&unit_disc(), &weight("constant", &[]), p, &cfg),
                Err(Error::InvalidExponent(_))
            ));
        }
    }

    #[test]
    fn singular_weight_rejected_when_pole_inside() {
        let w = weight("log_norm", &[]);
        let cfg = SolverConfig::default();
        assert!(matches!(extension_index(&unit_disc(), &w, 2.0, &cfg), Err(Error::Singularity(_))));
        // Away from the pole log|z|^2 is harmonic, so the index is 1.
        let disc = HolomorphicCylinder::disc(C64::new(1.0, 0.5), 0.4).unwrap();
        let sol = extension_index(&disc, &w, 2.0, &cfg).unwrap();
        assert!((sol.index - 1.0).abs() < 1e-8, "{}", sol.index);
    }

    #[test]
    fn too_high_degree_is_reported() {
        let disc = unit_disc();
        // 15 nodes cannot separate 41 monomials.
        let cfg = SolverConfig::default().with_degree(40).with_order(2);
        assert!(matches!(min_l2_extension(&disc, &weight("constant", &[]), &cfg), Err(Error::DegreeTooHigh { .. })));
    }

    #[test]
    fn kernel_values() {
        let cfg = SolverConfig::default();
        let r = 0.7;
        let disc = HolomorphicCylinder::disc(C64::new(0.0, 0.0), r).unwrap();
        let b = p_bergman_kernel(&disc, &weight("constant", &[]), 2.0, &cfg).unwrap();
        assert_relative_eq!(b.value, 1.0 / (PI * r * r), max_relative = 1e-12);
        let g = p_bergman_kernel(&unit_disc(), &weight("gaussian_c", &[("c", 1.0)]), 2.0, &cfg).unwrap();
        assert!((PI * g.value - 1.5819767068693265).abs() < 1e-9);
        let h = p_bergman_kernel(&unit_disc(), &weight("re_linear", &[]), 2.0, &cfg).unwrap();
        assert!((PI * h.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn domain_scan_monotone_and_extrapolates() {
        let cfg = SolverConfig::default();
        let grid = [0.5, 0.9, 0.99, 0.993, 0.996, 0.999];
        let scan = kernel_domain_limit_scan(&unit_disc(), &weight("constant", &[]), 2.0, &grid, &cfg).unwrap();
        assert!(scan.monotone);
        for (t, b) in &scan.rows {
            assert_relative_eq!(*b, 1.0 / (PI * t * t), max_relative = 1e-12);
        }
        assert!((scan.extrapolated - 1.0 / PI).abs() < 1e-9);
        let gw = weight("gaussian_c", &[("c", 1.0)]);
        let scan = kernel_domain_limit_scan(&unit_disc(), &gw, 2.0, &grid, &cfg).unwrap();
        let full = p_bergman_kernel(&unit_disc(), &gw, 2.0, &cfg).unwrap().value;
        assert!(scan.rows.iter().all(|(_, b)| *b >= full));
        assert!((scan.extrapolated - full).abs() < 1e-8);
    }

    #[test]
    fn continuity_scan_translation_invariance() {
        let cfg = SolverConfig::default();
        let disc = HolomorphicCylinder::disc(C64::new(0.0, 0.0), 0.5).unwrap();
        let xs: Vec<Vec<C64>> = (0..5).map(|k| vec![C64::new(-0.5 + 0.25 * k as f64, 0.1)]).collect();
        let scan = kernel_continuity_scan(&disc, &weight("constant", &[]), &xs, 2.0, &cfg).unwrap();
        assert!(scan.modulus < 1e-12);
        let w = weight("log_norm", &[]);
        assert!(matches!(kernel_continuity_scan(&disc, &w, &xs, 2.0, &cfg), Err(Error::DomainEscape(_))));
    }
}
