//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use bergman_core::bergman::{
    extension_index, kernel_continuity_scan, kernel_domain_limit_scan, min_l2_extension, SolverConfig,
};
use bergman_core::bundle::curvature::{chern_curvature_fd, griffiths_lower_bound, DEFAULT_CURVATURE_STEP};
use bergman_core::bundle::extension::{curvature_from_extension, flatness_test, vector_extension_index};
use bergman_core::bundle::frame::flat_frame;
use bergman_core::bundle::metric::{metric_get, HermitianMetricField};
use bergman_core::classify::{disc_harmonicity_test, Region, Verdict};
use bergman_core::geometry::{build_quadrature, HolomorphicCylinder};
use bergman_core::linalg::{su2, CMatrix};
use bergman_core::lp_iter::guan_zhou_extend;
use bergman_core::weights::{catalog_get, WeightFunction};
use bergman_core::{Error, C64};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn weight(id: &str, pairs: &[(&str, f64)]) -> WeightFunction {
    let params: BTreeMap<String, f64> = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    catalog_get(id, &params).unwrap()
}

fn metric(id: &str, pairs: &[(&str, f64)]) -> HermitianMetricField {
    let params: BTreeMap<String, f64> = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    metric_get(id, &params).unwrap()
}

fn origin_disc(r: f64) -> HolomorphicCylinder {
    HolomorphicCylinder::disc(C64::new(0.0, 0.0), r).unwrap()
}

fn random_center(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread))).collect()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> CMatrix {
    su2(rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI))
}

/// Random cylinder with diameter at most `max_diameter`.
fn random_cylinder(rng: &mut ChaCha8Rng, n: usize, max_diameter: f64) -> HolomorphicCylinder {
    let center = random_center(rng, n, 0.5);
    if n == 1 {
        let r = std::f64::consts::SQRT_2 * max_diameter * rng.random_range(0.2..1.0);
        return HolomorphicCylinder::disc(center[0], r).unwrap();
    }
    let d = max_diameter * rng.random_range(0.2..1.0);
    let aspect: f64 = rng.random_range(0.5..2.0);
    let r = std::f64::consts::SQRT_2 * d / (1.0 + aspect * aspect).sqrt();
    HolomorphicCylinder::new(center, random_rotation(rng), r, aspect * r, 2).unwrap()
}

fn ensure(ok: bool, pass: String, fail: String) -> Check {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for k in 0..50 {
        let n = 1 + k % 2;
        let center = random_center(&mut rng, n, 2.0);
        let r = rng.random_range(0.05..2.0);
        let s = rng.random_range(0.05..2.0);
        let rotation = if n == 1 { CMatrix::identity(1, 1) } else { random_rotation(&mut rng) };
        let cyl = HolomorphicCylinder::new(center.clone(), rotation, r, s, n).unwrap();
        let rule = build_quadrature(&cyl, if n == 1 { 24 } else { 12 }).map_err(|e| e.to_string())?;
        let lhs = rule
            .integrate(|z| z.iter().zip(&center).map(|(a, b)| (a - b).norm_sqr()).sum())
            .map_err(|e| e.to_string())?;
        // closed forms, written out independently of the geometry module
        let (d2, vol) =
            if n == 1 { (r * r / 2.0, PI * r * r) } else { (r * r / 2.0 + s * s / 2.0, PI * r * r * PI * s * s) };
        worst = worst.max((lhs - d2 * vol).abs() / (d2 * vol));
    }
    ensure(worst <= 1e-8, format!("max rel err {worst:.2e} <= 1e-8"), format!("max rel err {worst:.2e} > 1e-8"))
}

fn criterion_2() -> Check {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0_f64; 2];
    for (id, params) in [("constant", vec![]), ("re_linear", vec![("a2", 0.5)]), ("re_quadratic", vec![("b2", 0.5)])] {
        for k in 0..20 {
            let n = 1 + k % 2;
            let mut pairs = params.clone();
            pairs.push(("n", n as f64));
            let w = weight(id, &pairs);
            let cyl = random_cylinder(&mut rng, n, 0.5);
            for (slot, p) in [(0, 2.0), (1, 1.0)] {
                let sol = extension_index(&cyl, &w, p, &cfg).map_err(|e| format!("{id} p={p}: {e}"))?;
                worst[slot] = worst[slot].max((sol.index - 1.0).abs());
            }
        }
    }
    let ok = worst[0] <= 1e-5 && worst[1] <= 1e-4;
    let msg = format!("max |L-1|: p=2 {:.2e} (<= 1e-5), p=1 {:.2e} (<= 1e-4)", worst[0], worst[1]);
    ensure(ok, msg.clone(), msg)
}

fn criterion_3() -> Check {
    let cfg = SolverConfig::default();
    let mut worst = 0.0_f64;
    for c in [-1.0, 1.0, 2.0] {
        for r in [0.1, 0.5, 1.0] {
            let sol = extension_index(&origin_disc(r), &weight("gaussian_c", &[("c", c)]), 2.0, &cfg)
                .map_err(|e| e.to_string())?;
            let t: f64 = c * r * r;
            worst = worst.max((sol.index - (-(-t).exp_m1()) / t).abs());
        }
    }
    ensure(worst <= 1e-6, format!("max err {worst:.2e} <= 1e-6"), format!("max err {worst:.2e} > 1e-6"))
}

fn criterion_4() -> Check {
    let cfg = SolverConfig::default();
    let x = [C64::new(0.0, 0.0)];
    let mut lines = Vec::new();
    let mut ok = true;
    for c in [-1.0, 0.0, 1.0] {
        let h = metric("rank1_gaussian", &[("c", c)]);
        let est = curvature_from_extension(&h, &x, 5, 0.1, 8, 42, &cfg).map_err(|e| e.to_string())?;
        let tensor = chern_curvature_fd(&h, &x, DEFAULT_CURVATURE_STEP).map_err(|e| e.to_string())?;
        let bound = griffiths_lower_bound(&tensor, &h.evaluate(&x)).map_err(|e| e.to_string())?.value;
        let err = (est.c_est - c).abs();
        let tol = (5e-3_f64).max(0.005 * c.abs());
        let gap = (est.c_est - bound).abs();
        ok &= err <= tol && gap <= 1e-3;
        lines.push(format!("c={c}: est {:.6} (err {err:.1e}), vs griffiths {gap:.1e}", est.c_est));
    }
    ensure(ok, lines.join("; "), lines.join("; "))
}

fn criterion_5() -> Check {
    let cfg = SolverConfig::default();
    let harmonic = disc_harmonicity_test(&weight("re_linear", &[]), 1e-5, 42, &cfg).map_err(|e| e.to_string())?;
    let h_err = harmonic.evidence[0].statistic.abs();
    let bump =
        disc_harmonicity_test(&weight("gaussian_c", &[("c", 1.0)]), 1e-5, 42, &cfg).map_err(|e| e.to_string())?;
    // statistic = (pi B - e^phi(0)) / e^phi(0), and phi(0) = 0
    let pi_b = 1.0 + bump.evidence[0].statistic;
    let oracle = 1.0 / (1.0 - (-1.0_f64).exp());
    let b_err = (pi_b - oracle).abs();
    let ok = h_err <= 1e-5
        && harmonic.verdict == Verdict::HarmonicOnDisc
        && b_err <= 1e-5
        && bump.verdict == Verdict::NotHarmonicOnDisc;
    let msg = format!(
        "2Re z: |piB-1| {h_err:.1e} ({:?}); |z|^2: piB {pi_b:.8} vs {oracle:.8} err {b_err:.1e} ({:?})",
        harmonic.verdict, bump.verdict
    );
    ensure(ok, msg.clone(), msg)
}

fn criterion_6() -> Check {
    let cfg = SolverConfig::default();
    let region = Region::Box { half: 1.0, n: 1 };
    let disc = origin_disc(1.0);
    let mut lines = Vec::new();
    let mut ok = true;
    for (id, params) in [("constant", vec![]), ("flat_exp", vec![]), ("holo_frame", vec![])] {
        let h = metric(id, &params);
        let report = flatness_test(&h, &region, 2.0, 0.2, 3, 1e-5, &cfg).map_err(|e| e.to_string())?;
        let worst = report.evidence.iter().filter(|e| e.note.is_none()).map(|e| e.statistic.abs()).fold(0.0, f64::max);
        let frame = flat_frame(&h, &disc, 5, 1e-8).map_err(|e| format!("{id}: {e}"))?;
        let r = frame.residuals;
        ok &= report.verdict == Verdict::Flat && worst <= 1e-5 && r.unitarity <= 1e-8 && r.path <= 1e-8;
        lines
            .push(format!("{id}: {:?} |L-1| {worst:.1e} unit {:.1e} path {:.1e}", report.verdict, r.unitarity, r.path));
    }
    let curved = metric("scaled_gaussian", &[("c", 1.0)]);
    let report = flatness_test(&curved, &region, 2.0, 0.2, 3, 1e-5, &cfg).map_err(|e| e.to_string())?;
    let raised = matches!(flat_frame(&curved, &disc, 5, 1e-8), Err(Error::NonFlatEvidence { .. }));
    ok &= report.verdict == Verdict::NotFlat && raised;
    lines.push(format!("e^-|z|^2 I: {:?}, non-flat evidence raised: {raised}", report.verdict));
    ensure(ok, lines.join("; "), lines.join("; "))
}

fn criterion_7() -> Check {
    let disc = origin_disc(1.0);
    let mut worst_ratio = 0.0_f64;
    let mut worst_gap = 0.0_f64;
    for (id, params) in [("constant", vec![]), ("gaussian_c", vec![("c", 1.0)]), ("re_linear", vec![])] {
        let w = weight(id, &params);
        for p in [0.5, 1.0, 1.5] {
            let trace = guan_zhou_extend(&disc, &w, p, 40, 1e-8, 20, 24).map_err(|e| format!("{id} p={p}: {e}"))?;
            for s in &trace.steps {
                worst_ratio = worst_ratio.max(s.objective / s.bound - 1.0);
            }
            if p == 1.0 {
                let gap = (trace.bound_at(40) - trace.target).abs() / trace.target;
                worst_gap = worst_gap.max(gap);
            }
        }
    }
    let ok = worst_ratio <= 1e-8 && worst_gap <= 1e-10;
    let msg = format!("max objective/bound - 1 = {worst_ratio:.1e} (<= 1e-8), k=40 gap {worst_gap:.1e} (<= 1e-10)");
    ensure(ok, msg.clone(), msg)
}

fn criterion_8() -> Check {
    let cfg = SolverConfig::default();
    let grid = [0.99, 0.993, 0.996, 0.999];
    let mut worst_limit = 0.0_f64;
    let mut raw_gap = 0.0_f64;
    for r in [0.5, 1.0] {
        let scan = kernel_domain_limit_scan(&origin_disc(r), &weight("constant", &[]), 2.0, &grid, &cfg)
            .map_err(|e| e.to_string())?;
        let target = 1.0 / (PI * r * r);
        worst_limit = worst_limit.max((scan.extrapolated - target).abs() / target);
        raw_gap = raw_gap.max((scan.rows.last().unwrap().1 - target).abs() / target);
    }
    let r = 0.5;
    let centers: Vec<Vec<C64>> = (0..11).map(|k| vec![C64::new(-1.0 + 0.2 * k as f64, 0.1)]).collect();
    let w = weight("re_linear", &[]);
    let scan = kernel_continuity_scan(&origin_disc(r), &w, &centers, 2.0, &cfg).map_err(|e| e.to_string())?;
    let worst_scan = scan
        .points
        .iter()
        .zip(&scan.values)
        .map(|(x, b)| {
            let oracle = w.evaluate(x).exp() / (PI * r * r);
            (b - oracle).abs() / oracle
        })
        .fold(0.0, f64::max);
    let ok = worst_limit <= 1e-6 && worst_scan <= 1e-5;
    let msg = format!(
        "limit of B(t) through t=0.999: rel err {worst_limit:.1e} (<= 1e-6; unextrapolated B(0.999) is off by {raw_gap:.1e}); continuity scan rel err {worst_scan:.1e} (<= 1e-5)"
    );
    ensure(ok, msg.clone(), msg)
}

fn run_cli(args: &[&str], threads: &str) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_bergman"))
        .args(args)
        .env("BERGMAN_THREADS", threads)
        .output()
        .expect("spawn bergman");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn criterion_9() -> Check {
    // Monotonicity in the degree, compared with no tolerance.
    let mut violations = 0;
    let mut checked = 0;
    for (id, params, n) in [
        ("gaussian_c", vec![("c", 1.0)], 1),
        ("mix", vec![("c", 0.5)], 1),
        ("abs4", vec![], 1),
        ("re_quadratic", vec![("b2", 0.5), ("n", 2.0)], 2),
        ("gaussian_c", vec![("c", -0.5), ("n", 2.0)], 2),
    ] {
        let w = weight(id, &params);
        let cyl = if n == 1 {
            HolomorphicCylinder::disc(C64::new(0.2, -0.1), 0.8).unwrap()
        } else {
            HolomorphicCylinder::new(vec![C64::new(0.1, 0.0); 2], su2(0.4, 0.3, -0.2), 0.7, 0.5, 2).unwrap()
        };
        let top = if n == 1 { 14 } else { 7 };
        let mut previous = f64::INFINITY;
        for d in 0..=top {
            let cfg = SolverConfig::default().with_degree(d);
            let m = min_l2_extension(&cyl, &w, &cfg).map_err(|e| e.to_string())?.minimal_integral;
            checked += 1;
            if m > previous {
                violations += 1;
            }
            previous = m;
        }
    }

    // Homogeneity under v -> t v.
    let cfg = SolverConfig::default();
    let disc = HolomorphicCylinder::disc(C64::new(0.1, 0.2), 0.9).unwrap();
    let mut homogeneity_breaks = 0;
    for (id, params) in [("diag_gaussian", vec![]), ("holo_frame", vec![]), ("constant", vec![])] {
        let h = metric(id, &params);
        let v = [C64::new(0.7, -0.3), C64::new(-0.2, 0.9)];
        for p in [2.0, 1.5] {
            let base = vector_extension_index(&h, &disc, &v, p, &cfg).map_err(|e| e.to_string())?;
            for t in [C64::new(2.0, 0.0), C64::new(-0.5, 0.0), C64::new(0.0, 4.0), C64::new(0.0, -1.0)] {
                let tv: Vec<C64> = v.iter().map(|c| c * t).collect();
                let scaled = vector_extension_index(&h, &disc, &tv, p, &cfg).map_err(|e| e.to_string())?;
                if scaled.index != base.index {
                    homogeneity_breaks += 1;
                }
            }
        }
    }

    // Byte-identical reports across runs and thread counts.
    let runs: [&[&str]; 3] = [
        &["classify", "--weight", "mix:c=0.5", "--mean-value", "--trials", "60"],
        &["curvature", "--metric", "diag_gaussian", "--levels", "3"],
        &["index", "--weight", "gaussian_c:n=2", "--cylinder", "r=0.5,s=0.4,rot=mix", "--p", "1"],
    ];
    let mut nondeterministic = 0;
    for args in runs {
        let a = run_cli(args, "1");
        let b = run_cli(args, "4");
        let c = run_cli(args, "4");
        if a != b || b != c {
            nondeterministic += 1;
        }
    }
    let ok = violations == 0 && homogeneity_breaks == 0 && nondeterministic == 0;
    let msg = format!(
        "monotonicity violations {violations}/{checked}, homogeneity mismatches {homogeneity_breaks}, nondeterministic reports {nondeterministic}"
    );
    ensure(ok, msg.clone(), msg)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("second-moment identity", criterion_1),
        ("pluriharmonic equality", criterion_2),
        ("strictly psh index", criterion_3),
        ("curvature estimator", criterion_4),
        ("disc harmonicity", criterion_5),
        ("flat metrics and frames", criterion_6),
        ("L^p iteration certificate", criterion_7),
        ("exhaustion and continuity scans", criterion_8),
        ("structural invariants", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS [{name}] {detail} ({secs:.1}s)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL [{name}] {detail} ({secs:.1}s)", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
