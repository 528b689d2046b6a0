use mtrate_core::bd_reduce::{bt_sum_rate_preserved, detect, MATCH_TOL};
use mtrate_core::bt_solver::{solve, solve_block_circulant};
use mtrate_core::matlib::{BlockPattern, SymMatrix};
use mtrate_core::report::{CheckReport, Verdict};
use mtrate_core::tightness::{
    check_corollary1, check_wang, check_wang_block_circulant, search_noise, verify_theorem2, SearchOptions,
};
use mtrate_core::two_terminal::{bounds, feasible_theta_range, normalize};
use mtrate_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::problem::{Base, NoiseSpec, Validated};

/// Tolerance for checks on user input when nothing else is given.
pub const DEFAULT_TOL: f64 = 1e-8;

/// What a command prints and how the process exits.
#[derive(Debug)]
pub struct Output {
    pub body: String,
    pub exit: i32,
}

impl Output {
    fn json(value: &impl Serialize, exit: i32) -> Self {
        Output { body: serde_json::to_string_pretty(value).expect("reports serialize"), exit }
    }
}

/// Exit code for a library error: 3 for numerical failures, 1 when a check
/// does not apply, 2 for anything wrong with the input.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::NotApplicable(_)) {
        1
    } else {
        2
    }
}

pub fn verdict_exit(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail | Verdict::NotApplicable => 1,
    }
}

/// Rescales report values that carry a rate.
fn rates_in(mut report: CheckReport, base: Base) -> CheckReport {
    for (k, v) in report.values.iter_mut() {
        if k.ends_with("sum_rate") {
            *v = base.rate(*v);
        }
    }
    report
}

pub fn solve_bt(input: &Validated, base: Base, block_circulant: bool) -> Result<Output> {
    let p = &input.problem;
    let sol = if block_circulant { solve_block_circulant(p)? } else { solve(p)? };
    let body = json!({
        "solver": if block_circulant { "block-circulant" } else { "active-set" },
        "base": base,
        "sum_rate": base.rate(sol.sum_rate),
        "d_tilde": sol.d_tilde.to_rows(),
        "w": sol.w,
        "active": sol.active.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i + 1).collect::<Vec<_>>(),
        "converged": sol.converged,
        "residual": sol.residual,
        "iterations": sol.iterations,
    });
    Ok(Output::json(&body, if sol.converged { 0 } else { 3 }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Theorem2,
    Corollary1,
    Wang,
    WangBc,
    Bd,
}

pub fn method_name(m: Method) -> String {
    use clap::ValueEnum;
    m.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn need<'a, T>(x: &'a Option<T>, what: &str) -> Result<&'a T> {
    x.as_ref().ok_or_else(|| Error::InvalidInput(format!("this method needs a `{what}` section")))
}

pub fn check(input: &Validated, method: Method, tol: f64, base: Base) -> Result<Output> {
    let p = &input.problem;
    let mut structure = Value::Null;
    let report = match method {
        Method::Theorem2 => {
            let np = need(&input.noise, "noise")?;
            let cert = need(&input.certificate, "certificate")?;
            let dt = solve(p)?.d_tilde;
            verify_theorem2(p, np, &dt, cert, tol)?
        }
        Method::Corollary1 => check_corollary1(p, need(&input.noise, "noise")?, tol)?,
        Method::Wang => {
            let np = need(&input.noise, "noise")?;
            check_wang(p, &np.sigma_n, tol)?
        }
        Method::WangBc => check_wang_block_circulant(p, tol)?,
        Method::Bd => match detect(p, MATCH_TOL) {
            None => CheckReport::not_applicable(1e-6, "no block-degraded structure found"),
            Some(bd) => {
                structure = serde_json::to_value(&bd).expect("structure serializes");
                bt_sum_rate_preserved(p, &bd)?
            }
        },
    };
    let exit = verdict_exit(report.verdict);
    let mut body = json!({
        "method": method_name(method),
        "base": base,
        "report": rates_in(report, base),
    });
    if !structure.is_null() {
        body["structure"] = structure;
    }
    Ok(Output::json(&body, exit))
}

#[derive(Clone, Copy, Debug)]
pub struct CurveParams {
    pub var1: f64,
    pub var2: f64,
    pub rho: f64,
    pub d1: f64,
    pub d2: f64,
    pub steps: usize,
}

/// Two-terminal bounds on a grid over the open feasible range of the
/// distortion correlation, as CSV.
pub fn curves(c: CurveParams, base: Base) -> Result<Output> {
    if c.steps == 0 {
        return Err(Error::InvalidInput("steps must be positive".into()));
    }
    if !(c.var1 > 0.0 && c.var2 > 0.0) {
        return Err(Error::InvalidInput("source variances must be positive".into()));
    }
    let cov = c.rho * (c.var1 * c.var2).sqrt();
    let sigma = SymMatrix::from_row_slice(2, &[c.var1, cov, cov, c.var2])?;
    let base_inst = normalize(&sigma, &SymMatrix::from_diagonal(&[c.d1, c.d2]))?;
    let (lo, hi) = feasible_theta_range(&base_inst)?;
    if hi <= lo {
        return Err(Error::Infeasible("empty range of distortion correlations".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["theta", "r_mu", "r_lb", "r_ub", "lower_bound", "bt_upper", "wagner_composite", "gap"];
    w.write_record(header).map_err(csv_err)?;
    for i in 1..=c.steps {
        let t = lo + (hi - lo) * i as f64 / (c.steps + 1) as f64;
        let b = bounds(&base_inst.with_theta(t))?;
        let row = [
            base_inst.sign() * t,
            base.rate(b.r_mu),
            base.rate(b.r_lb),
            base.rate(b.r_ub),
            base.rate(b.lower_bound),
            base.rate(b.bt_upper),
            base.rate(b.wagner_composite),
            base.rate(b.gap),
        ];
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(Output { body: String::from_utf8(bytes).expect("csv output is utf-8"), exit: 0 })
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

pub fn search(input: &Validated, pattern: BlockPattern, opts: SearchOptions, base: Base) -> Result<Output> {
    let found = search_noise(&input.problem, &pattern, opts)?;
    let exit = verdict_exit(found.report.verdict);
    let body = json!({
        "noise": NoiseSpec::from_pattern(&found.noise),
        "score": found.score,
        "evaluations": found.evaluations,
        "report": rates_in(found.report, base),
    });
    Ok(Output::json(&body, exit))
}
