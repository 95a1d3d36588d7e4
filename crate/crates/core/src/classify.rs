//! Decision procedures for plurisubharmonicity, pluriharmonicity and
//! harmonicity on the unit disc.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bergman::{extension_index, kernel_domain_limit_scan, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    build_quadrature, build_quadrature_singular, default_order, HolomorphicCylinder, DEFAULT_SUBDIVISION_DEPTH,
};
use crate::linalg::{su2, CMatrix, C64, I};
use crate::weights::WeightFunction;

pub const DEFAULT_MEAN_VALUE_TOL: f64 = 1e-8;
pub const MAX_RESAMPLES: usize = 100;

/// Exhaustion used by the disc harmonicity test.
pub const DISC_T_GRID: [f64; 4] = [0.99, 0.993, 0.996, 0.999];

pub fn default_index_tol(p: f64) -> f64 {
    if p == 2.0 {
        1e-5
    } else {
        1e-4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pluriharmonic,
    Psh,
    NotPsh,
    HarmonicOnDisc,
    NotHarmonicOnDisc,
    Flat,
    NotFlat,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Pluriharmonic => "pluriharmonic",
            Verdict::Psh => "psh",
            Verdict::NotPsh => "not-psh",
            Verdict::HarmonicOnDisc => "harmonic-on-disc",
            Verdict::NotHarmonicOnDisc => "not-harmonic-on-disc",
            Verdict::Flat => "flat",
            Verdict::NotFlat => "not-flat",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

pub(crate) fn serialize_point<S: Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let pts: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
    pts.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub cylinder: HolomorphicCylinder,
    #[serde(serialize_with = "serialize_point")]
    pub point: Vec<C64>,
    pub statistic: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
    pub tolerance: f64,
}

impl ClassificationReport {
    /// Largest `|statistic|` over the evidence.
    pub fn max_abs_statistic(&self) -> f64 {
        self.evidence.iter().map(|e| e.statistic.abs()).fold(0.0, f64::max)
    }
}

/// A compact set of centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    /// Points with every real coordinate in `[-half, half]`.
    Box { half: f64, n: usize },
    /// The disc `|z| < radius` in the plane.
    Disc { radius: f64 },
}

impl Region {
    /// Parse `box=h` or `disc=r`.
    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        let (kind, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidParams(format!("region must look like box=h, got `{spec}`")))?;
        let value: f64 =
            value.trim().parse().map_err(|_| Error::InvalidParams(format!("region size `{value}` is not numeric")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidRadius { name: "region", value });
        }
        match kind.trim() {
            "box" => Ok(Region::Box { half: value, n }),
            "disc" if n == 1 => Ok(Region::Disc { radius: value }),
            "disc" => Err(Error::InvalidParams("disc regions are planar".into())),
            other => Err(Error::InvalidParams(format!("unknown region kind `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Box { n, .. } => *n,
            Region::Disc { .. } => 1,
        }
    }

    /// Distance from `x` to the complement of the region (0 outside).
    pub fn boundary_distance(&self, x: &[C64]) -> f64 {
        match self {
            Region::Box { half, .. } => {
                let worst = x.iter().map(|c| c.re.abs().max(c.im.abs())).fold(0.0, f64::max);
                (half - worst).max(0.0)
            }
            Region::Disc { radius } => (radius - x[0].norm()).max(0.0),
        }
    }

    /// Inradius of the region.
    pub fn size(&self) -> f64 {
        match self {
            Region::Box { half, .. } => *half,
            Region::Disc { radius } => *radius,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<C64> {
        match self {
            Region::Box { half, n } => {
                (0..*n).map(|_| C64::new(rng.random_range(-*half..*half), rng.random_range(-*half..*half))).collect()
            }
            Region::Disc { radius } => {
                let rho = radius * rng.random::<f64>().sqrt();
                vec![C64::from_polar(rho, rng.random_range(0.0..2.0 * PI))]
            }
        }
    }

    /// A `g^2`-point lattice of centers keeping `margin` from the boundary.
    ///
    /// In two dimensions the lattice is the plane `(a + b i/2, b - a i/2)`, which
    /// moves both real and imaginary parts of both coordinates.
    pub fn grid(&self, g: usize, margin: f64) -> Result<Vec<Vec<C64>>> {
        if g == 0 {
            return Err(Error::InvalidParams("grid must be at least 1".into()));
        }
        let reach = match self {
            Region::Box { half, .. } => half - margin,
            Region::Disc { radius } => (radius - margin) * FRAC_1_SQRT_2,
        };
        if !(reach > 0.0) {
            return Err(Error::InvalidParams(format!(
                "region of size {} cannot hold cylinders of circumradius {margin}",
                self.size()
            )));
        }
        let axis: Vec<f64> =
            if g == 1 { vec![0.0] } else { (0..g).map(|k| -reach + 2.0 * reach * k as f64 / (g - 1) as f64).collect() };
        let mut pts = Vec::with_capacity(g * g);
        for &a in &axis {
            for &b in &axis {
                let x = if self.dim() == 1 {
                    vec![C64::new(a, b)]
                } else {
                    // |a|, |b| <= reach keeps every real coordinate inside.
                    vec![C64::new(a, 0.5 * b), C64::new(b, -0.5 * a)]
                };
                pts.push(x);
            }
        }
        Ok(pts)
    }
}

/// Mean of `phi` over `cylinder`, refining toward singular points inside it.
pub fn cylinder_mean(w: &WeightFunction, cylinder: &HolomorphicCylinder, order: usize) -> Result<f64> {
    let inside: Vec<&Vec<C64>> = w.singular_points().iter().filter(|p| cylinder.contains(p)).collect();
    let near = w.singular_points().iter().any(|p| {
        let local = cylinder.to_local(p);
        local.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() < 2.0 * cylinder.circumradius()
    });
    let rule = match inside.as_slice() {
        [] if near => return refined_mean(w, cylinder, order),
        [] => build_quadrature(cylinder, order)?,
        [point] if cylinder.dim() == 1 => {
            build_quadrature_singular(cylinder, order, point[0], DEFAULT_SUBDIVISION_DEPTH)?
        }
        _ => {
            return Err(Error::Singularity(format!(
                "no refined rule for the singular set of `{}` in dimension {}",
                w.id(),
                cylinder.dim()
            )))
        }
    };
    rule.mean(|z| w.evaluate(z))
}

/// Doubles the order until successive means agree, for integrands with a pole
/// just outside the cylinder.
fn refined_mean(w: &WeightFunction, cylinder: &HolomorphicCylinder, order: usize) -> Result<f64> {
    let mut previous = build_quadrature(cylinder, order)?.mean(|z| w.evaluate(z))?;
    let cap = if cylinder.dim() == 1 { 32 * order } else { 4 * order };
    let mut o = 2 * order;
    while o <= cap {
        let next = build_quadrature(cylinder, o)?.mean(|z| w.evaluate(z))?;
        if (next - previous).abs() <= 1e-13 * (1.0 + next.abs()) {
            return Ok(next);
        }
        previous = next;
        o *= 2;
    }
    Ok(previous)
}

fn random_cylinder(rng: &mut ChaCha8Rng, x: Vec<C64>, max_diameter: f64) -> Result<HolomorphicCylinder> {
    let d = max_diameter * rng.random_range(0.05..0.999);
    if x.len() == 1 {
        HolomorphicCylinder::new(x, CMatrix::identity(1, 1), SQRT_2 * d, SQRT_2 * d, 1)
    } else {
        let alpha = rng.random_range(0.2..(PI / 2.0 - 0.2));
        let rotation = su2(rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        HolomorphicCylinder::new(x, rotation, SQRT_2 * d * alpha.cos(), SQRT_2 * d * alpha.sin(), 2)
    }
}

/// Sub-mean-value test on `trials` random cylinders with `d(P) < dist(x, boundary)/2`.
pub fn mean_value_psh_test(
    w: &WeightFunction,
    region: &Region,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ClassificationReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    if region.dim() != w.dim() {
        return Err(Error::DimensionMismatch { expected: w.dim(), got: region.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut accepted = None;
        for _ in 0..MAX_RESAMPLES {
            let x = region.sample(&mut rng);
            let dist = region.boundary_distance(&x);
            let phi_x = w.evaluate(&x);
            if dist <= 0.0 || !phi_x.is_finite() || w.singular_distance(&x) < 1e-6 {
                continue;
            }
            accepted = Some((random_cylinder(&mut rng, x, 0.5 * dist)?, phi_x));
            break;
        }
        let sample = accepted
            .ok_or_else(|| Error::Singularity(format!("no admissible center after {MAX_RESAMPLES} resamples")))?;
        samples.push(sample);
    }
    let order = default_order(w.dim());
    let evidence = samples
        .into_par_iter()
        .map(|(cylinder, phi_x)| {
            let mean = cylinder_mean(w, &cylinder, order)?;
            Ok(Evidence {
                point: cylinder.center().to_vec(),
                cylinder,
                statistic: mean - phi_x,
                threshold: -tol,
                note: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = if evidence.iter().any(|e| e.statistic < -tol) { Verdict::NotPsh } else { Verdict::Psh };
    Ok(ClassificationReport { verdict, evidence, tolerance: tol })
}

/// Diameters tested per center, all below `gamma`.
pub fn family_diameters(gamma: f64) -> [f64; 3] {
    [0.25 * gamma, 0.5 * gamma, 0.999 * gamma]
}

/// The structured cylinder family around `x`: three diameters, and in two
/// dimensions three aspect ratios `s/r` and two rotations.
pub fn cylinder_family(x: &[C64], gamma: f64) -> Result<Vec<HolomorphicCylinder>> {
    let mut out = Vec::new();
    if x.len() == 1 {
        for d in family_diameters(gamma) {
            out.push(HolomorphicCylinder::disc(x[0], SQRT_2 * d)?);
        }
        return Ok(out);
    }
    let k = FRAC_1_SQRT_2;
    let rotations =
        [CMatrix::identity(2, 2), CMatrix::from_row_slice(2, 2, &[C64::new(k, 0.0), I * k, I * k, C64::new(k, 0.0)])];
    for d in family_diameters(gamma) {
        for aspect in [0.5_f64, 1.0, 2.0] {
            // d^2 = r^2/2 + s^2/2 with s = aspect * r
            let r = SQRT_2 * d / (1.0 + aspect * aspect).sqrt();
            for a in &rotations {
                out.push(HolomorphicCylinder::new(x.to_vec(), a.clone(), r, aspect * r, 2)?);
            }
        }
    }
    Ok(out)
}

/// Largest circumradius of the family, used to keep it inside a region.
pub fn family_margin(gamma: f64, n: usize) -> f64 {
    // disc: r = sqrt(2) d; bidisc: sqrt(r^2 + s^2) = sqrt(2) d
    let _ = n;
    SQRT_2 * gamma
}

fn index_verdict(evidence: &[Evidence], tol: f64) -> Verdict {
    if evidence.iter().any(|e| e.note.is_some()) {
        return Verdict::Inconclusive;
    }
    let above = evidence.iter().any(|e| e.statistic > tol);
    let below = evidence.iter().any(|e| e.statistic < -tol);
    if above {
        Verdict::NotPsh
    } else if below {
        Verdict::Psh
    } else {
        Verdict::Pluriharmonic
    }
}

/// Extension indices over a cylinder family per grid center.
///
/// Pluriharmonic iff `max |L - 1| <= tol`; psh if every `L <= 1 + tol` with some
/// `L < 1 - tol`; not psh if some `L > 1 + tol`.
pub fn pluriharmonic_test(
    w: &WeightFunction,
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
    if region.dim() != w.dim() {
        return Err(Error::DimensionMismatch { expected: w.dim(), got: region.dim() });
    }
    let centers = region.grid(grid, family_margin(gamma, w.dim()))?;
    let mut jobs = Vec::new();
    for x in &centers {
        jobs.extend(cylinder_family(x, gamma)?);
    }
    let evidence: Vec<Evidence> = jobs
        .into_par_iter()
        .map(|cylinder| {
            let point = cylinder.center().to_vec();
            match extension_index(&cylinder, w, p, config) {
                Ok(sol) if sol.converged => {
                    Evidence { cylinder, point, statistic: sol.index - 1.0, threshold: tol, note: None }
                }
                Ok(sol) => Evidence {
                    cylinder,
                    point,
                    statistic: sol.index - 1.0,
                    threshold: tol,
                    note: Some(format!("solver stopped after {} iterations without converging", sol.iterations)),
                },
                Err(e) => Evidence { cylinder, point, statistic: f64::NAN, threshold: tol, note: Some(e.to_string()) },
            }
        })
        .collect();
    let verdict = index_verdict(&evidence, tol);
    Ok(ClassificationReport { verdict, evidence, tolerance: tol })
}

/// `pi B_D(0; e^{-phi})` against `e^{phi(0)}` on the unit disc, which agree
/// exactly when a subharmonic `phi` is harmonic.
pub fn disc_harmonicity_test(
    w: &WeightFunction,
    tol: f64,
    seed: u64,
    config: &SolverConfig,
) -> Result<ClassificationReport> {
    if w.dim() != 1 {
        return Err(Error::UnsupportedDimension(w.dim()));
    }
    let origin = [C64::new(0.0, 0.0)];
    let phi0 = w.evaluate(&origin);
    if !phi0.is_finite() {
        return Err(Error::Singularity(format!("phi(0) = {phi0}")));
    }
    let precheck = mean_value_psh_test(w, &Region::Disc { radius: 1.0 }, 50, seed, DEFAULT_MEAN_VALUE_TOL)?;
    if precheck.verdict == Verdict::NotPsh {
        let worst = precheck.evidence.iter().map(|e| e.statistic).fold(f64::INFINITY, f64::min);
        return Err(Error::NotSubharmonic(format!(
            "`{}` violates the sub-mean-value inequality by {:e}",
            w.id(),
            -worst
        )));
    }
    let disc = HolomorphicCylinder::disc(origin[0], 1.0)?;
    let scan = kernel_domain_limit_scan(&disc, w, 2.0, &DISC_T_GRID, config)?;
    let pi_b = PI * scan.extrapolated;
    let expected = phi0.exp();
    let statistic = (pi_b - expected) / expected;
    let verdict = if statistic.abs() <= tol { Verdict::HarmonicOnDisc } else { Verdict::NotHarmonicOnDisc };
    Ok(ClassificationReport {
        verdict,
        evidence: vec![Evidence {
            cylinder: disc,
            point: origin.to_vec(),
            statistic,
            threshold: tol,
            note: Some(format!("pi B = {pi_b:.12}, e^phi(0) = {expected:.12}")),
        }],
        tolerance: tol,
    })
}

/// `pi B_D(0; e^{-phi})` from the extrapolated exhaustion.
pub fn disc_kernel_times_pi(w: &WeightFunction, config: &SolverConfig) -> Result<f64> {
    let disc = HolomorphicCylinder::disc(C64::new(0.0, 0.0), 1.0)?;
    Ok(PI * kernel_domain_limit_scan(&disc, w, 2.0, &DISC_T_GRID, config)?.extrapolated)
}
