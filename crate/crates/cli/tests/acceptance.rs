//! End-to-end acceptance run. Prints one line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use fraclap_cli::{execute, oracle, Command, RunConfig, Status};
use fraclap_core::antisym::{decomposition_identity_check, i2_tail, i2_tail_numeric};
use fraclap_core::fields::{self, CoefficientField, FieldId};
use fraclap_core::hopf::{self, contradiction_check, contradiction_from_report, delta_scan, verify_estimates, DeltaGrid, Outcome};
use fraclap_core::moving_planes::{run_moving_plane, PlaneScanConfig};
use fraclap_core::{frac_laplacian, FracOrder, Point, QuadSpec, RegionParams};

type Check = Result<String, String>;

/// (n, alpha, epsilon) of the headline scans; the delta grid is one decade
/// below epsilon / 4.
const HEADLINE: [(usize, f64, f64); 4] = [(1, 0.5, 0.1), (2, 0.5, 0.1), (1, 1.5, 1e-3), (2, 1.5, 1e-3)];
const WIDTH: f64 = 2.0;
const BIG_R: f64 = 8.0;

fn order(a: f64) -> FracOrder {
    FracOrder::new(a).unwrap()
}

fn headline_setup(eps: f64, eps0: f64) -> (RegionParams, DeltaGrid) {
    let grid = DeltaGrid::decade(0.25 * eps0, 7);
    (RegionParams::with_default_eta(grid.max, eps, BIG_R).unwrap(), grid)
}

fn oracle_equivalence() -> Check {
    let spec = QuadSpec::default();
    let mut worst: f64 = 0.0;
    let mut points = 0;
    let mut combos = 0;
    let mut failures = Vec::new();
    let mut skipped = Vec::new();
    for (k, kind) in ["gaussian", "bubble"].iter().enumerate() {
        for n in 1..=2 {
            for (j, a) in [0.5, 1.0, 1.5].into_iter().enumerate() {
                let u = if *kind == "gaussian" {
                    fields::gaussian(n, Point::origin(n), 1.0).unwrap()
                } else if (n as f64) > a {
                    fields::standard_bubble(n, a, Point::origin(n), 1.0).unwrap()
                } else {
                    skipped.push(format!("bubble n={n} α={a}"));
                    continue;
                };
                let size = if n == 1 { 4096 } else { 512 };
                let r = oracle::reference(&u, order(a), size, 32.0).map_err(|e| e.to_string())?;
                let nodes = oracle::seeded_nodes(&r, 2.0, 20, (100 * k + 10 * n + j) as u64);
                let rows = oracle::compare(&u, order(a), &spec, &r, &nodes).map_err(|e| e.to_string())?;
                combos += 1;
                points += rows.len();
                if rows.len() < 20 {
                    failures.push(format!("{kind} n={n} α={a}: only {} nodes", rows.len()));
                }
                for row in &rows {
                    worst = worst.max(row.gap / row.tolerance);
                    if !row.passed || !row.converged {
                        failures.push(format!("{kind} n={n} α={a} x={:?}: gap {:e} > {:e}", row.x, row.gap, row.tolerance));
                    }
                }
            }
        }
    }
    let detail = format!("{combos} combinations, {points} points, worst gap/tolerance {worst:.3e}; skipped (bubble needs n > α): {}", skipped.join(", "));
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn compact_support() -> Check {
    // (-Δ)^{α/2} (1 - |x|^2)_+^{α/2} = 2^α Γ(1 + α/2) Γ((n + α)/2) / Γ(n/2) inside the ball
    let (n, a) = (1.0, 1.0);
    let exact = 2f64.powf(a) * gamma(1.0 + 0.5 * a) * gamma(0.5 * (n + a)) / gamma(0.5 * n);
    let r = frac_laplacian(&fields::sqrt_cap(1), &Point::origin(1), order(a), &QuadSpec::default()).map_err(|e| e.to_string())?;
    let gap = (r.value - exact).abs();
    let detail = format!("value {} closed form {exact} gap {gap:.3e}", r.value);
    if gap <= 1e-3 && r.converged {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn decomposition_identity() -> Check {
    let catalog = [
        "x1_gaussian",
        "degenerate_w(width=1)",
        "degenerate_w(width=2)",
        "antisym_gaussian(sigma=0.8, center=0.5)",
        "antisym_bubble(scale=1, center=0.5)",
        "zero",
    ];
    let spec = QuadSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checks = 0;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut skipped = Vec::new();
    for id in catalog {
        for n in 1..=2 {
            for a in [0.5, 1.0, 1.5] {
                let field = match FieldId::parse(id).and_then(|f| f.build(n, a)) {
                    Ok(f) => f,
                    Err(_) => {
                        skipped.push(format!("{id} n={n} α={a}"));
                        continue;
                    }
                };
                let w = field.antisymmetric().expect("anti-symmetric catalog entry");
                for _ in 0..10 {
                    let mut c = vec![10f64.powf(rng.gen_range(-1.3..0.3))];
                    c.extend((1..n).map(|_| rng.gen_range(-1.0..1.0)));
                    let x = Point::new(&c).unwrap();
                    let chk = decomposition_identity_check(w, &x, order(a), &spec).map_err(|e| e.to_string())?;
                    checks += 1;
                    worst = worst.max(chk.row.gap / chk.tolerance);
                    if !chk.passed {
                        failures.push(format!("{id} n={n} α={a} x={c:?}: gap {:e} tolerance {:e}", chk.row.gap, chk.tolerance));
                    }
                }
            }
        }
    }
    let detail = format!("{checks} points over {} fields, worst gap/tolerance {worst:.3e}; skipped (bubble needs n > α): {}", catalog.len(), skipped.join(", "));
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn i2_closed_form() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let n = 1 + k % 3;
        let a = rng.gen_range(0.1..1.9);
        let x1 = 10f64.powf(rng.gen_range(-2.0..0.7));
        let exact = i2_tail(&Point::on_axis(n, x1), order(a), n).map_err(|e| e.to_string())?;
        let num = i2_tail_numeric(x1, a, n);
        worst = worst.max((exact - num).abs() / exact.abs());
    }
    let detail = format!("10 configurations, worst relative gap {worst:.3e}");
    if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hopf_reconstruction() -> Check {
    let spec = QuadSpec::default();
    let c = CoefficientField::inv_sqrt(1.0);
    let mut parts = Vec::new();
    let mut ok = true;
    for (n, a, eps) in HEADLINE {
        let w = fields::degenerate_w(n, WIDTH).unwrap();
        let (base, grid) = headline_setup(eps, eps);
        let report = delta_scan(&w, Some(&c), order(a), &base, &grid, &spec).map_err(|e| e.to_string())?;
        let v = verify_estimates(&report).map_err(|e| e.to_string())?;
        let con = contradiction_from_report(&w, &c, &report);
        let slope = v.i2_slope.map_or(f64::NAN, |f| f.slope);
        let pass = v.passed && con.outcome == Outcome::Pass && con.delta_star.is_some_and(|d| d > 0.0);
        let failed: Vec<&str> = v.verdicts.iter().filter(|x| !x.passed).map(|x| x.estimate_id.as_str()).collect();
        parts.push(format!(
            "n={n} α={a}: c1={:.4} I2-slope={slope:.3} δ*={}{}",
            v.c1.unwrap_or(f64::NAN),
            con.delta_star.map_or("none".to_string(), |d| d.to_string()),
            if pass { String::new() } else { format!(" FAILED {failed:?} {:?}", con.outcome) }
        ));
        ok &= pass;
    }
    if ok {
        Ok(parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

fn c1_epsilon_independence() -> Check {
    let spec = QuadSpec::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (n, a, eps0) in HEADLINE {
        let w = fields::degenerate_w(n, WIDTH).unwrap();
        let mut c1s = Vec::new();
        for eps in [0.5 * eps0, eps0, 2.0 * eps0] {
            let (base, grid) = headline_setup(eps, eps0);
            let report = delta_scan(&w, None, order(a), &base, &grid, &spec).map_err(|e| e.to_string())?;
            c1s.push(hopf::fit_c1(&report).ok_or("too few rows")?.0);
        }
        let lo = c1s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let spread = (hi - lo) / lo;
        ok &= lo > 0.0 && spread < 0.25;
        parts.push(format!("n={n} α={a}: spread {spread:.2e}"));
    }
    if ok {
        Ok(parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

fn negative_controls() -> Check {
    let spec = QuadSpec::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (n, a, eps) in HEADLINE {
        let (base, grid) = headline_setup(eps, eps);
        let strict = fields::x1_gaussian(n).unwrap();
        let v = contradiction_check(&strict, &CoefficientField::zero(), order(a), &base, &grid, &spec).map_err(|e| e.to_string())?;
        ok &= v.outcome != Outcome::Pass;
        let mut line = format!("n={n} α={a}: strict slope {:?}", v.outcome);
        let w = fields::degenerate_w(n, WIDTH).unwrap();
        for m in [1.0, 100.0] {
            let v = contradiction_check(&w, &CoefficientField::inv_square(m), order(a), &base, &grid, &spec).map_err(|e| e.to_string())?;
            ok &= v.outcome != Outcome::Pass && !v.coefficient_ok;
            line.push_str(&format!(", M/δ² (M={m}) {:?}", v.outcome));
        }
        parts.push(line);
    }
    if ok {
        Ok(parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

fn moving_planes() -> Check {
    let h = 0.1;
    let mut parts = Vec::new();
    let mut ok = true;
    for n in 1..=2 {
        for c in [0.0, 0.7, -0.3] {
            let u = fields::standard_bubble(n, 0.5, Point::on_axis(n, c), 1.0).unwrap();
            let cfg = PlaneScanConfig { lambda_hi: 3.0, lambda_lo: -3.0, extent: 12.0, spacing: h, tolerance: 1e-10 };
            let r = run_moving_plane(&u, &cfg).map_err(|e| e.to_string())?;
            let err = (r.search.lambda_o - c).abs();
            ok &= err <= 0.25 * h && r.hopf_positive;
            parts.push(format!("n={n} c={c}: |λ_o - c| = {err:.4} slopes>0 {}", r.hopf_positive));
        }
    }
    if ok {
        Ok(parts.join("; "))
    } else {
        Err(parts.join("; "))
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Check {
    let runs: [(Command, &str); 4] = [
        (Command::VerifyHopf, "n = 2\nalpha = 1.5\nfield = \"degenerate_w(width=2)\"\ncoefficient = \"inv_sqrt(amp=1)\"\nseed = 11\n[regions]\nepsilon = 0.001\n"),
        (Command::MovingPlane, "n = 2\nalpha = 0.5\nfield = \"bubble(center=0.7)\"\nseed = 11\n[plane]\nlambda_hi = 3.0\nlambda_lo = -3.0\nspacing = 0.1\nextent = 12.0\n"),
        (Command::OracleCheck, "n = 1\nalpha = 0.5\nfield = \"bubble\"\nseed = 11\n[oracle]\ncount = 20\n"),
        (Command::Eval, "n = 3\nalpha = 1.0\nfield = \"gaussian\"\nseed = 11\n[quad]\nrel_tol = 1e-3\n[eval]\npoints = [[0.0, 0.0, 0.0], [0.5, 0.1, -0.2]]\n"),
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (k, (cmd, text)) in runs.iter().enumerate() {
        let cfg = RunConfig::parse(text).map_err(|e| e.to_string())?;
        let a = tmp.path().join(format!("{k}a"));
        let b = tmp.path().join(format!("{k}b"));
        let ra = execute(*cmd, &cfg, &a, Some(1));
        let rb = execute(*cmd, &cfg, &b, Some(2));
        if ra.status != Status::Pass || rb.status != Status::Pass {
            return Err(format!("{} did not pass: {} / {}", cmd.name(), ra.message, rb.message));
        }
        let (fa, fb) = (files(&a), files(&b));
        if fa.is_empty() || fa != fb {
            return Err(format!("{} outputs differ between runs", cmd.name()));
        }
        compared += fa.len();
    }
    Ok(format!("{compared} report files byte-identical across two runs (1 and 2 worker threads)"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("compact-support benchmark", compact_support),
        ("decomposition identity", decomposition_identity),
        ("I2 tail closed form", i2_closed_form),
        ("Hopf reconstruction", hopf_reconstruction),
        ("c1 independent of epsilon", c1_epsilon_independence),
        ("negative controls", negative_controls),
        ("moving planes", moving_planes),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("criterion {} [{name}]: PASS ({secs:.1}s) {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({secs:.1}s) {d}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
