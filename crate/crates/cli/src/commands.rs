use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use cone_breaker::quad::{
    arc_measure, cap_measure, radial_integrals, sphere_measures, sufficient_condition_sigma1,
};
use cone_breaker::radial::{default_grid, lagrange_multiplier, normalize, ode_residual};
use cone_breaker::secondvar::{
    direction_integrals, proposition_residual, report_from, verdict_for, DirectionIntegrals,
};
use cone_breaker::sectorfem::{run_breaking_experiment, AssembleOptions, OuterBoundary};
use cone_breaker::speceig::{lambda1_arc, lambda1_cap, lambda1_user};
use cone_breaker::{
    derive_exponents, validate, CapSpec, DerivedExponents, DiscreteField, EigResult,
    MinimizeConfig, QuadConfig, RadialProfile, SectorMesh,
};

use crate::args::{
    CommonArgs, DomainArgs, Format, MinimizeArgs, Outer, RadialCheckArgs, ScanArgs, ScanOver,
    VerdictArgs,
};
use crate::failure::Failure;
use crate::settings::FileLayer;

const DEFAULT_CAP_GRID: usize = 512;
const DEFAULT_TOL: f64 = 1e-6;

/// Wall-clock phases, recorded only on request so that reports stay
/// reproducible by default.
pub struct Timings {
    enabled: bool,
    entries: BTreeMap<String, f64>,
}

impl Timings {
    fn new(enabled: bool) -> Self {
        Timings {
            enabled,
            entries: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, key: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            self.entries
                .insert(format!("{key}_s"), start.elapsed().as_secs_f64());
        }
        out
    }
}

pub struct Report {
    pub config: Value,
    pub derived: DerivedExponents,
    pub results: Value,
    pub residuals: Value,
    pub timings: Timings,
    pub csv: String,
    pub format: Format,
    /// 0 when every check passed, 1 otherwise.
    pub status: u8,
}

impl Report {
    pub fn render(&self) -> String {
        match self.format {
            Format::Csv => self.csv.clone(),
            Format::Json => {
                let doc = json!({
                    "config": self.config,
                    "derived": self.derived,
                    "results": self.results,
                    "residuals": self.residuals,
                    "timings": self.timings.entries,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
                s.push('\n');
                s
            }
        }
    }
}

struct Common {
    derived: DerivedExponents,
    format: Format,
    quad: QuadConfig,
    timings: Timings,
}

fn resolve_common(c: &CommonArgs, layer: &FileLayer) -> Result<Common, Failure> {
    let n = layer
        .pick(c.n, "n")?
        .ok_or_else(|| Failure::usage("missing --n"))?;
    let p = layer
        .pick(c.p, "p")?
        .ok_or_else(|| Failure::usage("missing --p"))?;
    let sigma = layer
        .pick(c.sigma, "sigma")?
        .ok_or_else(|| Failure::usage("missing --sigma"))?;
    let derived = derive_exponents(validate(n, p, sigma)?);
    let base = QuadConfig::default();
    let quad = QuadConfig {
        rel_tol: layer.pick(c.rel_tol, "rel_tol")?.unwrap_or(base.rel_tol),
        abs_tol: layer.pick(c.abs_tol, "abs_tol")?.unwrap_or(base.abs_tol),
        l0: layer.pick(c.l0, "l0")?.unwrap_or(base.l0),
        l_max: layer.pick(c.l_max, "l_max")?.unwrap_or(base.l_max),
        ..base
    };
    quad.validate()?;
    Ok(Common {
        derived,
        format: layer.pick_enum(c.format, "format")?.unwrap_or(Format::Json),
        quad,
        timings: Timings::new(c.timings),
    })
}

fn params_json(d: &DerivedExponents) -> Value {
    json!({ "n": d.params.n(), "p": d.p(), "sigma": d.sigma() })
}

/// CSV float: plain notation in a readable range, exponent notation outside it.
struct Num(f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn derive(args: &CommonArgs) -> Result<Report, Failure> {
    let layer = FileLayer::load(args.config.as_deref())?;
    let c = resolve_common(args, &layer)?;
    let d = c.derived;
    let results = json!({
        "threshold": d.threshold,
        "lambda_star": d.lambda_star,
        "alpha_direct": cone_breaker::params::alpha_direct(&d.params),
        "gamma_beta": d.gamma * d.beta,
        "hardy_power": d.hardy_power(),
        "scale_power": d.scale_power(),
    });
    let csv = format!(
        "n,p,sigma,q,alpha,lambda_star,threshold,beta,gamma\n{},{},{},{},{},{},{},{},{}\n",
        d.params.n(),
        d.p(),
        d.sigma(),
        d.q,
        d.alpha,
        d.lambda_star,
        d.threshold,
        d.beta,
        d.gamma
    );
    Ok(Report {
        config: json!({ "command": "derive", "params": params_json(&d) }),
        derived: d,
        results,
        residuals: json!({}),
        timings: c.timings,
        csv,
        format: c.format,
        status: 0,
    })
}

pub fn radial_check(args: &RadialCheckArgs) -> Result<Report, Failure> {
    let layer = FileLayer::load(args.common.config.as_deref())?;
    let mut c = resolve_common(&args.common, &layer)?;
    let tol = layer.pick(args.tol, "tol")?.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(Failure::usage(format!("tol = {tol} must be positive")));
    }
    let d = c.derived;
    let grid = default_grid();

    let (lambda_w, multiplier_dev) = c
        .timings
        .time("multiplier", || lagrange_multiplier(&d, &grid))?;
    let profile = normalize(&d, lambda_w, 1.0);
    let ode = c.timings.time("ode", || ode_residual(&profile, &grid));
    let prop = c
        .timings
        .time("proposition", || proposition_residual(&profile, &grid));
    let ints = c
        .timings
        .time("radial_integrals", || radial_integrals(&profile, &c.quad))?;
    let dir = c.timings.time("direction_integrals", || {
        direction_integrals(&profile, &c.quad)
    })?;
    let identity = dir.identity_residual(&d);
    let (full, _) = sphere_measures(d.params.n())?;

    let checks = [
        ("multiplier_deviation", multiplier_dev),
        ("ode", ode.max_rel_residual),
        ("proposition", prop.max_rel_residual),
        ("nehari", ints.nehari_defect),
        ("identity", identity),
    ];
    let pass = checks.iter().all(|(_, v)| *v < tol);
    let mut residuals = serde_json::Map::new();
    for (k, v) in checks {
        residuals.insert(k.to_string(), json!(v));
    }
    residuals.insert("ode_location".into(), json!(ode.location));
    residuals.insert("proposition_location".into(), json!(prop.location));
    residuals.insert("tolerance".into(), json!(tol));
    residuals.insert("pass".into(), json!(pass));

    let results = json!({
        "lambda_w": lambda_w,
        "C": profile.c,
        "I_grad": ints.i_grad,
        "I_mass": ints.i_mass,
        "quadrature_err_est": ints.err_est,
        "quotient_full_sphere": cone_breaker::quad::quotient_radial(&d, &ints, full),
        "A1": dir.a1,
        "A2": dir.a2,
        "A3": dir.a3,
    });
    let csv = format!(
        "lambda_w,C,I_grad,I_mass,multiplier_deviation,ode,proposition,nehari,identity,pass\n{},{},{},{},{},{},{},{},{},{}\n",
        lambda_w,
        Num(profile.c),
        Num(ints.i_grad),
        Num(ints.i_mass),
        Num(multiplier_dev),
        Num(ode.max_rel_residual),
        Num(prop.max_rel_residual),
        Num(ints.nehari_defect),
        Num(identity),
        pass
    );
    Ok(Report {
        config: json!({
            "command": "radial-check",
            "params": params_json(&d),
            "quad": c.quad,
            "grid": { "lo": grid[0], "hi": grid[grid.len() - 1], "points": grid.len() },
            "tol": tol,
        }),
        derived: d,
        results,
        residuals: Value::Object(residuals),
        timings: c.timings,
        csv,
        format: c.format,
        status: if pass { 0 } else { 1 },
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
enum DomainSpec {
    Arc(f64),
    Cap(f64),
    Lambda1(f64),
    Measure(f64),
}

fn resolve_domain(
    a: &DomainArgs,
    layer: &FileLayer,
) -> Result<(DomainSpec, Option<f64>, usize), Failure> {
    let arc = layer.pick(a.arc, "arc")?;
    let cap = layer.pick(a.cap, "cap")?;
    let lambda1 = layer.pick(a.lambda1, "lambda1")?;
    let measure = layer.pick(a.measure, "measure")?;
    let grid = layer.pick(a.grid, "grid")?.unwrap_or(DEFAULT_CAP_GRID);
    let spec = match (arc, cap, lambda1) {
        (Some(t), None, None) => DomainSpec::Arc(t),
        (None, Some(t), None) => DomainSpec::Cap(t),
        (None, None, Some(l)) => DomainSpec::Lambda1(l),
        (None, None, None) => match measure {
            Some(m) => DomainSpec::Measure(m),
            None => {
                return Err(Failure::usage(
                    "give one of --arc, --cap, --lambda1, --measure",
                ))
            }
        },
        _ => {
            return Err(Failure::usage(
                "--arc, --cap and --lambda1 are mutually exclusive",
            ))
        }
    };
    if measure.is_some() && !matches!(spec, DomainSpec::Lambda1(_) | DomainSpec::Measure(_)) {
        return Err(Failure::usage(
            "--measure is derived from --arc/--cap and cannot be given with them",
        ));
    }
    Ok((spec, measure, grid))
}

/// `lambda_1` and `|D|` of a geometric domain.
fn eigen_for(
    d: &DerivedExponents,
    over: ScanOver,
    value: f64,
    grid: usize,
) -> cone_breaker::Result<(EigResult, f64)> {
    match over {
        ScanOver::Arc => Ok((lambda1_arc(value)?, arc_measure(value)?)),
        ScanOver::Cap => {
            let spec = CapSpec::new(d.params.n(), value)?;
            Ok((lambda1_cap(&spec, grid)?, cap_measure(d.params.n(), value)?))
        }
    }
}

fn check_dimension(d: &DerivedExponents, over: ScanOver) -> Result<(), Failure> {
    match over {
        ScanOver::Arc if d.params.n() != 2 => Err(Failure::usage("arcs live on S^1: need n = 2")),
        ScanOver::Cap if d.params.n() < 3 => {
            Err(Failure::usage("caps need n >= 3; use an arc for n = 2"))
        }
        _ => Ok(()),
    }
}

fn sufficient(d: &DerivedExponents, measure: Option<f64>) -> Result<Option<bool>, Failure> {
    match measure {
        Some(m) if d.params.is_sobolev() => {
            Ok(Some(sufficient_condition_sigma1(d.params.n(), d.p(), m)?))
        }
        _ => Ok(None),
    }
}

const ROW_HEADER: &str = "param,D,lambda1,branch,threshold,verdict,d2j,sufficient_condition_sigma1";

#[derive(Debug, Clone, Serialize)]
struct Row {
    param: f64,
    #[serde(rename = "D")]
    d_measure: Option<f64>,
    lambda1: Option<f64>,
    branch: Option<&'static str>,
    threshold: f64,
    verdict: &'static str,
    d2j: Option<f64>,
    sufficient_condition_sigma1: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl Row {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}\n",
            self.param,
            fmt_opt(self.d_measure),
            fmt_opt(self.lambda1),
            self.branch.unwrap_or(""),
            self.threshold,
            self.verdict,
            fmt_opt(self.d2j.map(Num)),
            fmt_opt(self.sufficient_condition_sigma1)
        )
    }
}

pub fn verdict(args: &VerdictArgs) -> Result<Report, Failure> {
    let layer = FileLayer::load(args.common.config.as_deref())?;
    let mut c = resolve_common(&args.common, &layer)?;
    let d = c.derived;
    let (spec, given_measure, grid) = resolve_domain(&args.domain, &layer)?;

    let (eig, measure, param) = match spec {
        DomainSpec::Arc(t) => {
            check_dimension(&d, ScanOver::Arc)?;
            let (e, m) = c
                .timings
                .time("eigenvalue", || eigen_for(&d, ScanOver::Arc, t, grid))?;
            (Some(e), Some(m), t)
        }
        DomainSpec::Cap(t) => {
            check_dimension(&d, ScanOver::Cap)?;
            let (e, m) = c
                .timings
                .time("eigenvalue", || eigen_for(&d, ScanOver::Cap, t, grid))?;
            (Some(e), Some(m), t)
        }
        DomainSpec::Lambda1(l) => (Some(lambda1_user(l)?), given_measure, l),
        DomainSpec::Measure(m) => (None, Some(m), m),
    };
    if let Some(m) = measure {
        if !(m > 0.0) {
            return Err(Failure::usage(format!("|D| = {m} must be positive")));
        }
    }
    let suff = sufficient(&d, measure)?;

    let mut residuals = serde_json::Map::new();
    let mut second = Value::Null;
    let mut verdict_label = None;
    let mut d2j = None;
    if let Some(e) = &eig {
        let profile = RadialProfile::new(&d, 1.0)?;
        let dir = c.timings.time("direction_integrals", || {
            direction_integrals(&profile, &c.quad)
        })?;
        // without |D|, d2j is reported per unit measure
        let rep = report_from(&d, &dir, e.best(), measure.unwrap_or(1.0));
        residuals.insert("identity".into(), json!(rep.identity_residual));
        residuals.insert(
            "d2j_vs_shortcut".into(),
            json!(
                (rep.d2j - rep.d2j_shortcut).abs() / rep.d2j_shortcut.abs().max(f64::MIN_POSITIVE)
            ),
        );
        verdict_label = Some(verdict_for(e, &d).label());
        d2j = Some(rep.d2j);
        second = json!(rep);
    }

    let row = Row {
        param,
        d_measure: measure,
        lambda1: eig.map(|e| e.best()),
        branch: eig.map(|e| e.branch.label()),
        threshold: d.threshold,
        verdict: verdict_label.unwrap_or("none"),
        d2j,
        sufficient_condition_sigma1: suff,
        error: None,
    };
    let results = json!({
        "domain": spec,
        "D": measure,
        "measure_supplied": measure.is_some(),
        "eigen": eig,
        "threshold": d.threshold,
        "verdict": verdict_label,
        "second_variation": second,
        "sufficient_condition_sigma1": suff,
    });
    Ok(Report {
        config: json!({
            "command": "verdict",
            "params": params_json(&d),
            "domain": spec,
            "measure": given_measure,
            "grid": grid,
            "quad": c.quad,
        }),
        derived: d,
        results,
        residuals: Value::Object(residuals),
        timings: c.timings,
        csv: format!("{ROW_HEADER}\n{}", row.csv_line()),
        format: c.format,
        status: 0,
    })
}

fn scan_row(
    d: &DerivedExponents,
    dir: &DirectionIntegrals,
    over: ScanOver,
    param: f64,
    grid: usize,
) -> Row {
    match eigen_for(d, over, param, grid) {
        Ok((e, m)) => {
            let rep = report_from(d, dir, e.best(), m);
            Row {
                param,
                d_measure: Some(m),
                lambda1: Some(e.best()),
                branch: Some(e.branch.label()),
                threshold: d.threshold,
                verdict: verdict_for(&e, d).label(),
                d2j: Some(rep.d2j),
                sufficient_condition_sigma1: if d.params.is_sobolev() {
                    sufficient_condition_sigma1(d.params.n(), d.p(), m).ok()
                } else {
                    None
                },
                error: None,
            }
        }
        Err(err) => Row {
            param,
            d_measure: None,
            lambda1: None,
            branch: None,
            threshold: d.threshold,
            verdict: "failed",
            d2j: None,
            sufficient_condition_sigma1: None,
            error: Some(err.to_string()),
        },
    }
}

/// Points `from + k step` up to `to`, allowing for rounding at the end.
fn scan_points(from: f64, to: f64, step: f64) -> Result<Vec<f64>, Failure> {
    if !(step > 0.0) || !step.is_finite() || !from.is_finite() || !to.is_finite() {
        return Err(Failure::usage(format!("bad scan step {step}")));
    }
    if to < from {
        return Err(Failure::usage(format!("empty scan range [{from}, {to}]")));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| from + k as f64 * step).collect())
}

pub fn scan(args: &ScanArgs) -> Result<Report, Failure> {
    let layer = FileLayer::load(args.common.config.as_deref())?;
    let mut c = resolve_common(&args.common, &layer)?;
    let d = c.derived;
    let over = layer
        .pick_enum(args.over, "over")?
        .ok_or_else(|| Failure::usage("missing --over arc|cap"))?;
    check_dimension(&d, over)?;
    let need =
        |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::usage(format!("missing --{name}")));
    let from = need(layer.pick(args.from, "from")?, "from")?;
    let to = need(layer.pick(args.to, "to")?, "to")?;
    let step = need(layer.pick(args.step, "step")?, "step")?;
    let grid = layer.pick(args.grid, "grid")?.unwrap_or(DEFAULT_CAP_GRID);
    let points = scan_points(from, to, step)?;

    let profile = RadialProfile::new(&d, 1.0)?;
    let dir = c.timings.time("direction_integrals", || {
        direction_integrals(&profile, &c.quad)
    })?;
    // indexed parallel collect keeps the input order
    let rows: Vec<Row> = c.timings.time("rows", || {
        points
            .par_iter()
            .map(|&t| scan_row(&d, &dir, over, t, grid))
            .collect()
    });

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let flips: Vec<Value> = rows
        .windows(2)
        .filter(|w| w[0].verdict != w[1].verdict && w[0].error.is_none() && w[1].error.is_none())
        .map(|w| json!({ "between": [w[0].param, w[1].param], "from": w[0].verdict, "to": w[1].verdict }))
        .collect();
    let mut csv = String::from(ROW_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
    }
    let over_label = match over {
        ScanOver::Arc => "arc",
        ScanOver::Cap => "cap",
    };
    let mut residuals = serde_json::Map::new();
    residuals.insert("identity".into(), json!(dir.identity_residual(&d)));
    residuals.insert("failed_rows".into(), json!(failed));
    let results = json!({ "rows": rows, "flips": flips });
    Ok(Report {
        config: json!({
            "command": "scan",
            "params": params_json(&d),
            "over": over_label,
            "from": from,
            "to": to,
            "step": step,
            "points": points.len(),
            "grid": grid,
            "quad": c.quad,
        }),
        derived: d,
        results,
        residuals: Value::Object(residuals),
        timings: c.timings,
        csv,
        format: c.format,
        status: if failed == 0 { 0 } else { 1 },
    })
}

pub fn minimize(args: &MinimizeArgs) -> Result<Report, Failure> {
    let layer = FileLayer::load(args.common.config.as_deref())?;
    let mut c = resolve_common(&args.common, &layer)?;
    let d = c.derived;
    let theta0 = layer
        .pick(args.arc, "arc")?
        .ok_or_else(|| Failure::usage("missing --arc (sector opening)"))?;
    let n_rho = layer.pick(args.n_rho, "n_rho")?.unwrap_or(128);
    let n_phi = layer.pick(args.n_phi, "n_phi")?.unwrap_or(64);
    let half_width = layer.pick(args.half_width, "L")?.unwrap_or(8.0);
    let mesh = SectorMesh::new(theta0, half_width, n_rho, n_phi)?;

    let base = MinimizeConfig::default();
    let eps_schedule = match layer.pick::<String>(args.eps_schedule.clone(), "eps_schedule")? {
        None => Vec::new(),
        Some(s) if s.trim().is_empty() => Vec::new(),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Failure::usage(format!("eps_schedule {t:?}: {e}")))
            })
            .collect::<Result<_, _>>()?,
    };
    let cfg = MinimizeConfig {
        eps_reg: layer.pick(args.eps_reg, "eps_reg")?.unwrap_or(base.eps_reg),
        max_iter: layer
            .pick(args.max_iter, "max_iter")?
            .unwrap_or(base.max_iter),
        grad_tol: layer
            .pick(args.grad_tol, "grad_tol")?
            .unwrap_or(base.grad_tol),
        init_perturb: layer
            .pick(args.init_perturb, "init_perturb")?
            .unwrap_or(base.init_perturb),
        eps_schedule,
        ..base
    };
    cfg.validate()?;
    let outer = match layer
        .pick_enum(args.outer, "outer")?
        .unwrap_or(Outer::Dirichlet)
    {
        Outer::Dirichlet => OuterBoundary::Dirichlet,
        Outer::Neumann => OuterBoundary::Neumann,
    };
    let allow_sigma_one = layer.pick_switch(args.allow_sigma_one, "allow_sigma_one")?;
    let opts = AssembleOptions {
        eps_reg: cfg.eps_reg,
        outer,
        allow_sigma_one,
    };

    let init_path = layer.pick(args.init.clone(), "init")?;
    let init = match &init_path {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            let field = DiscreteField::from_csv(&text)?;
            if field.mesh != mesh {
                return Err(Failure::usage(
                    "initial field mesh differs from the requested mesh",
                ));
            }
            Some(field)
        }
    };

    let eig = lambda1_arc(theta0)?;
    let (field, rep) = c.timings.time("minimize", || {
        run_breaking_experiment(&d, mesh, &cfg, opts, init)
    })?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = layer.pick(args.field_out.clone(), "field_out")? {
        std::fs::write(&path, field.to_csv())
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    }

    let breaks = rep.q_min_h < rep.q_radial_best_h * (1.0 - 1e-4) && rep.asym > 0.01;
    let results = json!({
        "experiment": rep,
        "lambda1": eig.lambda1,
        "threshold": d.threshold,
        "verdict": verdict_for(&eig, &d).label(),
        "nonradial_minimizer_found": breaks,
    });
    let residuals = json!({
        "grad_norm_rel": rep.grad_norm_rel,
        "consistency_rel": rep.consistency_rel,
        "converged": rep.converged,
    });
    let csv = format!(
        "theta0,Q_continuum,Q_radial_h,Q_radial_best_h,Q_min_h,asym,iterations,converged\n{},{},{},{},{},{},{},{}\n",
        theta0, rep.q_continuum, rep.q_radial_h, rep.q_radial_best_h, rep.q_min_h, rep.asym, rep.iterations, rep.converged
    );
    Ok(Report {
        config: json!({
            "command": "minimize",
            "params": params_json(&d),
            "mesh": mesh,
            "minimize": cfg,
            "outer": outer,
            "allow_sigma_one": allow_sigma_one,
            "init": init_path.map(|p| p.display().to_string()),
        }),
        derived: d,
        results,
        residuals,
        timings: c.timings,
        csv,
        format: c.format,
        status: if rep.converged { 0 } else { 1 },
    })
}
