//! Bundled reference instances: full pipeline runs diffed against the
//! published values.

use mtrate_core::bd_reduce::{bt_sum_rate_preserved, detect, MATCH_TOL};
use mtrate_core::bt_solver::{solve, solve_block_circulant};
use mtrate_core::fixtures::{self, ReferenceInstance};
use mtrate_core::matlib::{BlockPattern, SymMatrix};
use mtrate_core::remote_model::{gamma_tilde, NoisePattern, RemoteModel};
use mtrate_core::report::Verdict;
use mtrate_core::tightness::{
    check_corollary1, check_wang_block_circulant, search_noise, verify_theorem2, SearchOptions,
};
use mtrate_core::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::Output;
use crate::problem::{CertificateSpec, NoiseSpec, Options, ProblemFile};

/// Tolerance for verdicts on rounded published data.
pub const FIXTURE_TOL: f64 = 5e-3;
/// Tolerance for entries compared against four-decimal published values.
const PRINTED: f64 = 5e-4;
/// BT sum-rate of the third instance in nats, from the solver.
const EXAMPLE3_SUM_RATE: f64 = 0.8394428429;

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    got: Value,
    expected: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    ok: bool,
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn near(&mut self, name: impl Into<String>, got: f64, expected: f64, tol: f64) {
        let ok = (got - expected).abs() <= tol;
        self.0.push(Check { name: name.into(), got: json!(got), expected: json!(expected), tolerance: Some(tol), ok });
    }

    /// Largest entrywise difference, expected to be at most `tol`.
    fn within(&mut self, name: impl Into<String>, diff: f64, tol: f64) {
        self.near(name, diff, 0.0, tol);
    }

    fn equal<T: Serialize + PartialEq>(&mut self, name: impl Into<String>, got: T, expected: T) {
        let ok = got == expected;
        self.0.push(Check { name: name.into(), got: json!(got), expected: json!(expected), tolerance: None, ok });
    }
}

fn noise_of(ex: &ReferenceInstance) -> Result<NoisePattern> {
    NoisePattern::new(ex.pattern.clone(), ex.sigma_n.clone())
}

fn example1(c: &mut Checks, tol: f64) -> Result<()> {
    let ex = fixtures::example1();
    let p = ex.problem();
    let bt = solve(&p)?;
    c.within("d_tilde max abs diff", bt.d_tilde.max_abs_diff(&fixtures::example1_d_tilde()), PRINTED);
    c.equal("w4", bt.w[3], 0.0);
    c.near("d_tilde[4,4]", bt.d_tilde.get(3, 3), 0.4, PRINTED);

    let rm = RemoteModel::from_svd(&ex.sigma_y, &ex.sigma_n)?;
    for (i, (got, want)) in rm.sigma_x.iter().zip(fixtures::example1_sigma_x()).enumerate() {
        c.near(format!("sigma_x[{}]", i + 1), *got, want, PRINTED);
    }
    let printed = fixtures::example1_h();
    let h_err = (0..4)
        .map(|r| (rm.h.row(r) - printed.row(r)).amax().min((rm.h.row(r) + printed.row(r)).amax()))
        .fold(0.0, f64::max);
    c.within("h max abs diff up to row sign", h_err, PRINTED);

    let np = noise_of(&ex)?;
    let g = gamma_tilde(&p, &np, &bt.d_tilde)?.gamma;
    c.within("gamma_tilde max abs diff", g.max_abs_diff(&fixtures::example1_gamma()), PRINTED);

    let r = verify_theorem2(&p, &np, &bt.d_tilde, &fixtures::example1_certificate(), tol)?;
    c.equal("certificate verdict", r.verdict, Verdict::Pass);
    let (mu, lb) = fixtures::EXAMPLE1_SEGMENT;
    c.near("segment endpoint (mu side)", r.values["pair1_endpoint_mu"], mu, PRINTED);
    c.near("segment endpoint (lb side)", r.values["pair1_endpoint_lb"], lb, PRINTED);

    let closed = check_corollary1(&p, &np, tol)?;
    c.equal("closed-form check verdict", closed.verdict, Verdict::NotApplicable);

    match detect(&p, MATCH_TOL) {
        None => c.equal("block-degraded partition", Value::Null, json!([[1], [2], [3, 4]])),
        Some(bd) => {
            let groups: Vec<Vec<usize>> = bd.partition.iter().map(|g| g.iter().map(|i| i + 1).collect()).collect();
            c.equal("block-degraded partition", json!(groups), json!([[1], [2], [3, 4]]));
            let (_, _, sz) = fixtures::example1_induced();
            c.within("sigma_z max abs diff", bd.sigma_z.max_abs_diff(&sz), 1e-6);
            let kept = bt_sum_rate_preserved(&p, &bd)?;
            c.within("induced sum-rate difference", kept.residuals["sum_rate_difference"], 1e-6);
        }
    }
    Ok(())
}

fn example2(c: &mut Checks, tol: f64) -> Result<()> {
    let ex = fixtures::example2();
    let p = ex.problem();
    let bt = solve_block_circulant(&p)?;
    c.within("d_tilde max abs diff", bt.d_tilde.max_abs_diff(&fixtures::example2_d_tilde()), PRINTED);

    let w = check_wang_block_circulant(&p, tol)?;
    let lhs = &w.matrices["lhs_diagonal"][0];
    for (i, x) in lhs.iter().enumerate() {
        c.near(format!("diagonal-noise lhs[{}]", i + 1), *x, fixtures::EXAMPLE2_WANG_LHS, PRINTED);
    }
    let rhs = SymMatrix::from_rows(&w.matrices["rhs"])?;
    c.within("diagonal-noise rhs max abs diff", rhs.max_abs_diff(&fixtures::example2_wang_rhs()), FIXTURE_TOL);
    c.equal("diagonal-noise verdict", w.verdict, Verdict::Fail);

    let r = check_corollary1(&p, &noise_of(&ex)?, tol)?;
    let (want_lhs, want_rhs) = fixtures::EXAMPLE2_PAIR;
    for k in 1..=2 {
        c.near(format!("pair {k} left side"), r.values[&format!("pair{k}_lhs")], want_lhs, PRINTED);
        c.near(format!("pair {k} right side"), r.values[&format!("pair{k}_rhs")], want_rhs, PRINTED);
    }
    c.equal("closed-form check verdict", r.verdict, Verdict::Pass);
    Ok(())
}

fn example3(c: &mut Checks, tol: f64) -> Result<()> {
    let ex = fixtures::example3();
    let p = ex.problem();
    c.near("bt sum-rate (nats)", solve(&p)?.sum_rate, EXAMPLE3_SUM_RATE, 1e-8);
    let r = check_corollary1(&p, &noise_of(&ex)?, tol)?;
    let (want_lhs, want_rhs) = fixtures::EXAMPLE3_PAIR;
    c.near("pair 1 left side", r.values["pair1_lhs"], want_lhs, PRINTED);
    c.near("pair 1 right side", r.values["pair1_rhs"], want_rhs, PRINTED);
    c.equal("closed-form check verdict", r.verdict, Verdict::Pass);

    let diag = BlockPattern::identity(3, 0)?;
    let found = search_noise(&p, &diag, SearchOptions { budget: 10_000, tol, ..Default::default() })?;
    c.equal("diagonal-noise search verdict", found.report.verdict, Verdict::Fail);
    Ok(())
}

pub fn run(id: u8, tol: f64) -> Result<Output> {
    let mut checks = Checks::default();
    match id {
        1 => example1(&mut checks, tol)?,
        2 => example2(&mut checks, tol)?,
        3 => example3(&mut checks, tol)?,
        _ => return Err(Error::InvalidInput(format!("unknown example {id}; expected 1, 2 or 3"))),
    }
    let failed = checks.0.iter().filter(|c| !c.ok).count();
    let body = json!({
        "example": id,
        "tolerance": tol,
        "passed": checks.0.len() - failed,
        "failed": failed,
        "checks": checks.0,
    });
    Ok(Output {
        body: serde_json::to_string_pretty(&body).expect("checks serialize"),
        exit: if failed == 0 { 0 } else { 1 },
    })
}

/// The instance as a problem file, ready for `check` and `solve-bt`.
pub fn problem_file(id: u8) -> Result<ProblemFile> {
    let ex = match id {
        1 => fixtures::example1(),
        2 => fixtures::example2(),
        3 => fixtures::example3(),
        _ => return Err(Error::InvalidInput(format!("unknown example {id}; expected 1, 2 or 3"))),
    };
    let noise = NoiseSpec::from_pattern(&noise_of(&ex)?);
    Ok(ProblemFile {
        sigma_y: ex.sigma_y.to_rows(),
        d: ex.d.clone(),
        noise: Some(noise),
        certificate: (id == 1).then(|| CertificateSpec::from_certificate(&fixtures::example1_certificate())),
        options: Some(Options { tol: Some(FIXTURE_TOL), base: None }),
    })
}
