//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs with `cargo test --test acceptance`.

use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use cone_breaker::quad::{quotient_radial, radial_integrals, sphere_measures};
use cone_breaker::radial::{default_grid, lagrange_multiplier, ode_residual};
use cone_breaker::secondvar::{
    breaking_verdict, direction_integrals, proposition_residual, proposition_residual_with,
    verdict_for,
};
use cone_breaker::sectorfem::{assemble, run_breaking_experiment, AssembleOptions};
use cone_breaker::speceig::{lambda1_arc, lambda1_cap};
use cone_breaker::{
    derive_exponents, validate, CapSpec, DerivedExponents, MinimizeConfig, QuadConfig,
    RadialProfile, SectorMesh, Verdict,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const SWEEP: [(u32, f64, f64); 12] = [
    (2, 1.3, 0.3),
    (2, 1.8, 1.0),
    (2, 1.8, 0.7),
    (3, 2.0, 1.0),
    (3, 1.3, 0.7),
    (3, 2.5, 0.3),
    (3, 2.8, 1.0),
    (4, 2.0, 0.7),
    (4, 3.8, 0.3),
    (4, 2.5, 1.0),
    (6, 1.3, 1.0),
    (6, 5.8, 0.7),
];

type Outcome = Result<String, String>;

fn exps(n: u32, p: f64, sigma: f64) -> DerivedExponents {
    derive_exponents(validate(n, p, sigma).expect("admissible triple"))
}

fn profile(d: &DerivedExponents) -> Result<RadialProfile, String> {
    RadialProfile::new(d, 1.0).map_err(|e| e.to_string())
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Worst value of `f` over the sweep, with the triple it occurred at.
fn sweep_max(
    mut f: impl FnMut(&DerivedExponents) -> Result<f64, String>,
) -> Result<(f64, (u32, f64, f64)), String> {
    let mut worst = (0.0, SWEEP[0]);
    for t in SWEEP {
        let v = f(&exps(t.0, t.1, t.2)).map_err(|e| format!("{t:?}: {e}"))?;
        if !(v <= worst.0) {
            worst = (v, t);
        }
    }
    Ok(worst)
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn multiplier() -> Outcome {
    let (dev, at) = sweep_max(|d| {
        lagrange_multiplier(d, &default_grid())
            .map(|m| m.1)
            .map_err(|e| e.to_string())
    })?;
    let (lam, _) =
        lagrange_multiplier(&exps(3, 2.0, 1.0), &default_grid()).map_err(|e| e.to_string())?;
    check(
        dev < 1e-8 && (lam - 3.0).abs() < 1e-10,
        format!("max deviation {dev:.2e} at {at:?}; (3,2,1) multiplier {lam:.15}"),
    )
}

fn ode() -> Outcome {
    let (res, at) =
        sweep_max(|d| Ok(ode_residual(&profile(d)?, &default_grid()).max_rel_residual))?;
    let mut weakest = f64::INFINITY;
    for (n, p, s) in SWEEP {
        let u = profile(&exps(n, p, s))?;
        weakest = weakest
            .min(ode_residual(&u.with_amplitude(1.1 * u.c), &default_grid()).max_rel_residual);
    }
    check(
        res < 1e-8 && weakest > 1e-2,
        format!("max residual {res:.2e} at {at:?}; smallest residual with C x 1.1 {weakest:.3e}"),
    )
}

fn nehari() -> Outcome {
    let cfg = QuadConfig::default();
    let (defect, at) = sweep_max(|d| {
        Ok(radial_integrals(&profile(d)?, &cfg)
            .map_err(|e| e.to_string())?
            .nehari_defect)
    })?;
    let d = exps(3, 2.0, 1.0);
    let ig = radial_integrals(&profile(&d)?, &cfg)
        .map_err(|e| e.to_string())?
        .i_grad;
    let exact = 3.0 * 3f64.sqrt() * PI / 16.0;
    check(
        defect < 1e-6 && rel(ig, exact) < 1e-8,
        format!(
            "max defect {defect:.2e} at {at:?}; (3,2,1) I_grad rel err {:.2e}",
            rel(ig, exact)
        ),
    )
}

fn quotient_oracle() -> Outcome {
    let d = exps(3, 2.0, 1.0);
    let ints =
        radial_integrals(&profile(&d)?, &QuadConfig::default()).map_err(|e| e.to_string())?;
    let (full, half) = sphere_measures(3).map_err(|e| e.to_string())?;
    let qf = quotient_radial(&d, &ints, full);
    let qh = quotient_radial(&d, &ints, half);
    let exact = 3.0 * (PI / 2.0).powf(4.0 / 3.0);
    let ratio_err = rel(qh / qf, 2f64.powf(-2.0 / 3.0));
    check(
        rel(qf, exact) < 1e-6 && ratio_err < 1e-10,
        format!(
            "Q {qf:.9} vs {exact:.9} (rel {:.2e}); ratio rel err {ratio_err:.2e}",
            rel(qf, exact)
        ),
    )
}

fn proposition() -> Outcome {
    let (res, at) =
        sweep_max(|d| Ok(proposition_residual(&profile(d)?, &default_grid()).max_rel_residual))?;
    let mut weakest = f64::INFINITY;
    for (n, p, s) in SWEEP {
        let d = exps(n, p, s);
        let r = proposition_residual_with(&profile(&d)?, &default_grid(), d.lambda_star + 0.1)
            .max_rel_residual;
        weakest = weakest.min(r);
    }
    check(
        res < 1e-8 && weakest > 1e-3,
        format!("max residual {res:.2e} at {at:?}; smallest with Lambda*+0.1 {weakest:.3e}"),
    )
}

fn identity_and_sign() -> Outcome {
    let cfg = QuadConfig::default();
    let mut worst = (0.0, SWEEP[0]);
    let mut mismatches = Vec::new();
    for t in SWEEP {
        let d = exps(t.0, t.1, t.2);
        let ints = direction_integrals(&profile(&d)?, &cfg).map_err(|e| format!("{t:?}: {e}"))?;
        let r = ints.identity_residual(&d);
        if !(r <= worst.0) {
            worst = (r, t);
        }
        for k in [0.5, 0.99, 1.01, 2.0] {
            let lam = k * d.threshold;
            let d2j = ints.d2j(&d, lam, 1.0);
            if d2j.signum() != (lam + d.lambda_star).signum() {
                mismatches.push((t, k));
            }
        }
    }
    check(
        worst.0 < 1e-6 && mismatches.is_empty(),
        format!(
            "max identity residual {:.2e} at {:?}; sign mismatches {mismatches:?}",
            worst.0, worst.1
        ),
    )
}

fn eigen_benchmarks() -> Outcome {
    let mut arc_err: f64 = 0.0;
    for theta in [0.5, 1.0, PI / 2.0, 3.0, 5.0, 6.0] {
        let e = lambda1_arc(theta).map_err(|e| e.to_string())?;
        arc_err = arc_err.max(rel(e.lambda1, (PI / theta).powi(2)));
    }
    let cases = [
        (3, PI / 2.0, 2.0, 1e-3),
        (4, PI / 2.0, 3.0, 1e-3),
        (3, PI - 1e-3, 2.0, 5e-3),
    ];
    let mut ok = arc_err < 1e-12;
    let mut parts = vec![format!("arc rel err {arc_err:.1e}")];
    for (n, cap, exact, tol) in cases {
        let spec = CapSpec::new(n, cap).map_err(|e| e.to_string())?;
        let e = lambda1_cap(&spec, 512).map_err(|e| e.to_string())?;
        let err = (e.best() - exact).abs();
        let order = e.observed_order.unwrap_or(f64::NAN);
        ok &= err < tol && (order - 2.0).abs() <= 0.3;
        parts.push(format!(
            "cap({n},{cap:.4}) = {:.7} (err {err:.1e}, order {order:.2})",
            e.best()
        ));
    }
    check(ok, parts.join("; "))
}

fn verdict_boundary() -> Outcome {
    let d = exps(2, 1.5, 0.9);
    let exact = PI / d.threshold.sqrt();
    let step = 0.05;
    let thetas: Vec<f64> = (0..=40).map(|i| 3.5 + step * f64::from(i)).collect();
    let mut verdicts = Vec::new();
    for &t in &thetas {
        verdicts.push(verdict_for(&lambda1_arc(t).map_err(|e| e.to_string())?, &d));
    }
    let flips: Vec<usize> = (1..thetas.len())
        .filter(|&i| verdicts[i] != verdicts[i - 1])
        .collect();
    let [i] = flips[..] else {
        return Err(format!("expected one flip, found {}", flips.len()));
    };
    let (lo, hi) = (thetas[i - 1], thetas[i]);
    let ordered = verdicts[i - 1] == Verdict::Inconclusive && verdicts[i] == Verdict::Breaks;
    check(
        ordered && lo <= exact + step && hi >= exact - step,
        format!("flip between {lo:.2} and {hi:.2}; predicted {exact:.6}"),
    )
}

fn constructive_breaking() -> Outcome {
    let d = exps(2, 1.5, 0.9);
    let mesh = SectorMesh::new(5.0, 8.0, 128, 64).map_err(|e| e.to_string())?;
    let cfg = MinimizeConfig {
        eps_reg: 1e-8,
        ..Default::default()
    };
    let start = Instant::now();
    let (_, rep) = run_breaking_experiment(&d, mesh, &cfg, AssembleOptions::default(), None)
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let ok = rep.q_min_h < rep.q_radial_h * (1.0 - 1e-4)
        && rep.asym > 0.01
        && rep.converged
        && rep.consistency_rel.abs() < 0.02
        && secs < 600.0
        && breaking_verdict((PI / 5.0).powi(2), &d) == Verdict::Breaks;
    check(
        ok,
        format!(
            "Q_min_h {:.7} vs Q_radial_h {:.7}; asym {:.3}; converged {}; consistency {:.2e}; {secs:.1}s",
            rep.q_min_h, rep.q_radial_h, rep.asym, rep.converged, rep.consistency_rel
        ),
    )
}

fn gradient_checks() -> Outcome {
    let d = exps(2, 1.5, 0.9);
    let mesh = SectorMesh::new(5.0, 8.0, 24, 12).map_err(|e| e.to_string())?;
    let ev = assemble(mesh, &d, AssembleOptions::default()).map_err(|e| e.to_string())?;
    let m = mesh.nodes();
    let mut rng = StdRng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.2)).collect();
        let dir: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut ge = vec![0.0; m];
        let mut gm = vec![0.0; m];
        ev.energy_with_grad(&u, Some(&mut ge));
        ev.mass_with_grad(&u, Some(&mut gm));
        let h = 1e-6;
        let at = |t: f64| -> Vec<f64> { u.iter().zip(&dir).map(|(a, b)| a + t * b).collect() };
        let (up, dn) = (at(h), at(-h));
        let fd_e = (ev.energy_with_grad(&up, None) - ev.energy_with_grad(&dn, None)) / (2.0 * h);
        let fd_m = (ev.mass_with_grad(&up, None) - ev.mass_with_grad(&dn, None)) / (2.0 * h);
        let an_e: f64 = ge.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let an_m: f64 = gm.iter().zip(&dir).map(|(a, b)| a * b).sum();
        worst = worst.max(rel(fd_e, an_e)).max(rel(fd_m, an_m));
    }
    check(
        worst < 1e-5,
        format!("worst relative mismatch over 20 fields {worst:.2e}"),
    )
}

fn run_cli(args: &[&str], jobs: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cone-breaker"))
        .args(args)
        .args(["--jobs", jobs])
        .env_remove("CONE_BREAKER_JOBS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 7] = [
        &["derive", "--n", "4", "--p", "2", "--sigma", "0.5"],
        &["radial-check", "--n", "3", "--p", "2.5", "--sigma", "0.3"],
        &[
            "verdict", "--n", "3", "--p", "2", "--sigma", "1", "--cap", "2.0",
        ],
        &[
            "scan", "--n", "3", "--p", "2", "--sigma", "1", "--over", "cap", "--from", "0.3",
            "--to", "3.1", "--step", "0.1",
        ],
        &[
            "scan", "--n", "2", "--p", "1.5", "--sigma", "0.9", "--over", "arc", "--from", "3.5",
            "--to", "5.5", "--step", "0.05", "--format", "csv",
        ],
        &[
            "minimize", "--n", "2", "--p", "1.5", "--sigma", "0.9", "--arc", "5.0", "--n-rho",
            "48", "--n-phi", "24",
        ],
        &[
            "minimize", "--n", "2", "--p", "1.5", "--sigma", "0.9", "--arc", "5.0", "--format",
            "csv",
        ],
    ];
    let mut differing = Vec::new();
    for args in runs {
        let one = run_cli(args, "1")?;
        let again = run_cli(args, "1")?;
        let eight = run_cli(args, "8")?;
        if one != again || one != eight {
            differing.push(args[0]);
        }
    }
    check(
        differing.is_empty(),
        format!(
            "{} invocations x 3 runs; differing: {differing:?}",
            runs.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("multiplier constancy", multiplier),
        ("ODE residual", ode),
        ("Nehari identity", nehari),
        ("quotient oracle", quotient_oracle),
        ("f equation residual", proposition),
        (
            "integration-by-parts identity and d2j sign",
            identity_and_sign,
        ),
        ("eigenvalue benchmarks", eigen_benchmarks),
        ("verdict boundary", verdict_boundary),
        ("constructive breaking", constructive_breaking),
        ("gradient checks", gradient_checks),
        ("determinism across --jobs", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, msg) = match run() {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!(
            "{tag} {:>2} {name}: {msg} [{:.1}s]",
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
