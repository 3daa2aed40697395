use bobkov_core::bellman::{bellman_value, hjb_check, DomainPoint};
use bobkov_core::gauss::{norm_cdf, Probability};
use bobkov_core::quadrature::QuadratureSpec;
use bobkov_core::slope::{slope_partials, solve_slope as solve, SlopeQuery};
use bobkov_core::variational::{certify_value, consistent_mass, CollocationGrid};
use bobkov_core::verifier::{
    bobkov_deficit, endpoint_limits, equality_characterization, random_corpus, random_corpus_2d,
    tensorize_check_2d, TestFunction1D, TestFunction2D,
};
use bobkov_core::LabError;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::report::{Report, Table, Value};
use crate::{GridArgs, UsageError};

pub const THREADS_VAR: &str = "BOBKOV_LAB_THREADS";

/// Rayon pool capped by `BOBKOV_LAB_THREADS`; unset means rayon's default.
pub fn thread_pool() -> Result<ThreadPool, UsageError> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| UsageError(format!("{THREADS_VAR}={v} is not a positive integer")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| UsageError(format!("cannot start thread pool: {e}")))
}

fn positive(name: &str, v: f64) -> Result<f64, UsageError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(UsageError(format!("--{name} must be positive, got {v}")))
    }
}

fn fraction(v: f64) -> Result<f64, UsageError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(UsageError(format!("λ must lie in (0, 1), got {v}")))
    }
}

/// Grid points in (t, p, λ) lexicographic order.
fn sweep_points(grid: &GridArgs) -> Result<Vec<(f64, f64, f64)>, UsageError> {
    let lambdas = grid.lambda.values();
    for &l in &lambdas {
        fraction(l)?;
    }
    let mut pts = vec![];
    for t in grid.t.values() {
        for p in grid.p.values() {
            for &l in &lambdas {
                pts.push((t, p, l));
            }
        }
    }
    Ok(pts)
}

fn flag_for(e: &LabError) -> &'static str {
    match e {
        LabError::IllConditioned { .. } => "ill_conditioned",
        _ => "error",
    }
}

fn grid_inputs(r: &mut Report, grid: &GridArgs) {
    for (name, range) in [("t", grid.t), ("p", grid.p), ("lambda", grid.lambda)] {
        r.input(&format!("{name}_lo"), range.lo)
            .input(&format!("{name}_hi"), range.hi)
            .input(&format!("{name}_n"), range.n);
    }
}

/// Count flagged rows into a check; `flag` is the last column.
fn tally_flags(r: &mut Report, rows: &[Vec<Value>]) {
    let flagged = rows
        .iter()
        .filter(|row| row.last() != Some(&Value::from("ok")))
        .count();
    r.check("flagged_rows", flagged, 0.0, flagged == 0);
}

pub fn hjb_sweep(pool: &ThreadPool, grid: &GridArgs, tol: f64) -> Result<Report, UsageError> {
    let tol = positive("tol", tol)?;
    let pts = sweep_points(grid)?;
    let rows: Vec<Vec<Value>> = pool.install(|| {
        pts.par_iter()
            .map(|&(t, p, lam)| {
                let check = SlopeQuery::from_fraction(t, p, lam).and_then(|q| hjb_check(&q));
                let (a, m, res, rel, flag) = match check {
                    Ok(c) => {
                        let ok = c.rel_residual.abs() <= tol;
                        let flag = if ok { "ok" } else { "tolerance_exceeded" };
                        (c.eval.a, c.eval.m, c.residual, c.rel_residual, flag)
                    }
                    Err(e) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, flag_for(&e)),
                };
                [t, p, lam, a, m, res, rel].map(Value::from).into_iter().chain([flag.into()]).collect()
            })
            .collect()
    });
    let mut r = Report::new("hjb-sweep");
    grid_inputs(&mut r, grid);
    r.input("tol", tol);
    let worst = rows
        .iter()
        .filter_map(|row| match row[6] {
            Value::Real(x) if x.is_finite() => Some(x.abs()),
            _ => None,
        })
        .fold(0.0, f64::max);
    r.check("max_rel_residual", worst, tol, worst <= tol);
    tally_flags(&mut r, &rows);
    r.table = Some(Table {
        columns: vec!["t", "p", "lambda", "a", "M", "residual", "rel_residual", "flag"],
        rows,
    });
    Ok(r)
}

/// Central difference with step `h·max(1, |x|)`.
fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let step = h * x.abs().max(1.0);
    (f(x + step) - f(x - step)) / (2.0 * step)
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(f64::MIN_POSITIVE)
}

/// Worst relative error of `(∂_t, ∂_p, ∂_y)f` against `exact`. The `y` step is
/// scaled by the distance to the nearer end of `(0, Φ(t))`.
fn worst_partial_error(
    f: &dyn Fn(f64, f64, f64) -> Result<f64, LabError>,
    (t, p, y): (f64, f64, f64),
    h: f64,
    exact: [f64; 3],
) -> Result<f64, LabError> {
    let fail = std::cell::Cell::new(None);
    let g = |t: f64, p: f64, y: f64| {
        f(t, p, y).unwrap_or_else(|e| {
            fail.set(Some(e));
            f64::NAN
        })
    };
    let y_step = h * y.min(norm_cdf(t) - y);
    let fd = [
        central(|s| g(s, p, y), t, h),
        central(|s| g(t, s, y), p, h),
        (g(t, p, y + y_step) - g(t, p, y - y_step)) / (2.0 * y_step),
    ];
    if let Some(e) = fail.take() {
        return Err(e);
    }
    Ok(fd.iter().zip(exact).map(|(&d, e)| rel_err(d, e)).fold(0.0, f64::max))
}

pub fn derivative_check(
    pool: &ThreadPool,
    grid: &GridArgs,
    step: f64,
    tol: f64,
) -> Result<Report, UsageError> {
    let (step, tol) = (positive("step", step)?, positive("tol", tol)?);
    let pts = sweep_points(grid)?;
    let slope = |t, p, y| -> Result<f64, LabError> {
        Ok(solve(&SlopeQuery::new(t, p, y)?, bobkov_core::slope::DEFAULT_SLOPE_TOL)?.a)
    };
    let m = |t, p, y| -> Result<f64, LabError> { Ok(bellman_value(&DomainPoint::new(t, p, y)?)?.m) };
    let rows: Vec<Vec<Value>> = pool.install(|| {
        pts.par_iter()
            .map(|&(t, p, lam)| {
                let errs = (|| -> Result<(f64, f64), LabError> {
                    let q = SlopeQuery::from_fraction(t, p, lam)?;
                    let d = slope_partials(&q)?;
                    let e = bellman_value(&q)?;
                    let pt = (t, p, q.y);
                    Ok((
                        worst_partial_error(&slope, pt, step, [d.a_t, d.a_p, d.a_y])?,
                        worst_partial_error(&m, pt, step, [e.m_t, e.m_p, e.m_y])?,
                    ))
                })();
                let (ea, em, flag) = match errs {
                    Ok((ea, em)) => (ea, em, if ea.max(em) <= tol { "ok" } else { "tolerance_exceeded" }),
                    Err(e) => (f64::NAN, f64::NAN, flag_for(&e)),
                };
                [t, p, lam, ea, em].map(Value::from).into_iter().chain([flag.into()]).collect()
            })
            .collect()
    });
    let mut r = Report::new("derivative-check");
    grid_inputs(&mut r, grid);
    r.input("step", step).input("tol", tol);
    for (col, name) in [(3, "max_rel_err_slope"), (4, "max_rel_err_bellman")] {
        let worst = rows
            .iter()
            .filter_map(|row| match row[col] {
                Value::Real(x) if x.is_finite() => Some(x),
                _ => None,
            })
            .fold(0.0, f64::max);
        r.check(name, worst, tol, worst <= tol);
    }
    tally_flags(&mut r, &rows);
    r.table = Some(Table {
        columns: vec!["t", "p", "lambda", "rel_err_slope", "rel_err_bellman", "flag"],
        rows,
    });
    Ok(r)
}

pub struct BobkovTolerances {
    pub equality: f64,
    pub residual: f64,
    pub inequality: f64,
    pub identity: f64,
}

struct BobkovOutcome {
    lhs: f64,
    rhs: f64,
    deficit: f64,
    psi_integral: f64,
    sup_residual: f64,
    equality: bool,
}

fn bobkov_outcome(f: &TestFunction1D, tols: &BobkovTolerances) -> Result<BobkovOutcome, LabError> {
    let spec = QuadratureSpec::default();
    let d = bobkov_deficit(f, &spec)?;
    let eq = equality_characterization(f, tols.residual, &spec)?;
    Ok(BobkovOutcome {
        lhs: d.lhs,
        rhs: d.rhs,
        deficit: d.deficit,
        psi_integral: d.psi_integral,
        sup_residual: eq.sup_residual,
        equality: eq.equality,
    })
}

impl BobkovOutcome {
    fn inequality_holds(&self, tols: &BobkovTolerances) -> bool {
        self.deficit >= -tols.inequality
    }

    fn identity_gap(&self) -> f64 {
        (self.deficit - self.psi_integral).abs()
    }

    /// The ODE classification agrees with the deficit classification.
    fn consistent(&self, tols: &BobkovTolerances) -> bool {
        self.equality == (self.deficit <= tols.equality)
    }
}

pub fn bobkov_check(f: &TestFunction1D, tols: &BobkovTolerances) -> Report {
    let mut r = Report::new("bobkov-check");
    r.input("function", f.to_string())
        .input("equality_tol", tols.equality)
        .input("residual_tol", tols.residual)
        .input("inequality_tol", tols.inequality)
        .input("identity_tol", tols.identity);
    match bobkov_outcome(f, tols) {
        Ok(o) => {
            r.info("lhs", o.lhs)
                .info("rhs", o.rhs)
                .check("deficit", o.deficit, tols.inequality, o.inequality_holds(tols))
                .info("psi_integral", o.psi_integral)
                .check("identity_gap", o.identity_gap(), tols.identity, o.identity_gap() <= tols.identity)
                .compared("sup_residual", o.sup_residual, tols.residual)
                .check("equality", o.equality, tols.equality, o.consistent(tols));
        }
        Err(e) => {
            r.fail(e.to_string());
        }
    }
    r
}

pub fn bobkov_corpus(pool: &ThreadPool, seed: u64, n: usize, tols: &BobkovTolerances) -> Report {
    let entries = random_corpus(seed, n);
    let rows: Vec<Vec<Value>> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                let mut row: Vec<Value> = vec![entry.id.clone().into(), entry.function.to_string().into()];
                match bobkov_outcome(&entry.function, tols) {
                    Ok(o) => {
                        let ok = o.inequality_holds(tols)
                            && o.identity_gap() <= tols.identity
                            && o.consistent(tols);
                        row.extend(
                            [o.lhs, o.rhs, o.deficit, o.psi_integral, o.identity_gap(), o.sup_residual]
                                .map(Value::from),
                        );
                        row.push(o.equality.into());
                        row.push(if ok { "ok" } else { "tolerance_exceeded" }.into());
                    }
                    Err(e) => {
                        row.extend([f64::NAN; 6].map(Value::from));
                        row.push(Value::Text(String::new()));
                        row.push(flag_for(&e).into());
                    }
                }
                row
            })
            .collect()
    });
    let mut r = Report::new("bobkov-check");
    r.seed = Some(seed);
    r.input("corpus", n)
        .input("equality_tol", tols.equality)
        .input("residual_tol", tols.residual)
        .input("inequality_tol", tols.inequality)
        .input("identity_tol", tols.identity);
    let real = |row: &Vec<Value>, k: usize| match row[k] {
        Value::Real(x) => x,
        _ => f64::NAN,
    };
    let min_deficit = rows.iter().map(|row| real(row, 4)).fold(f64::INFINITY, f64::min);
    let max_gap = rows.iter().map(|row| real(row, 6)).fold(0.0, f64::max);
    r.check("min_deficit", min_deficit, tols.inequality, min_deficit >= -tols.inequality)
        .check("max_identity_gap", max_gap, tols.identity, max_gap <= tols.identity);
    tally_flags(&mut r, &rows);
    r.table = Some(Table {
        columns: vec![
            "id",
            "function",
            "lhs",
            "rhs",
            "deficit",
            "psi_integral",
            "identity_gap",
            "sup_residual",
            "equality",
            "flag",
        ],
        rows,
    });
    r
}

pub fn solve_slope(
    t: f64,
    p: f64,
    lambda: Option<f64>,
    y: Option<f64>,
    tol: f64,
) -> Result<Report, UsageError> {
    let tol = positive("tol", tol)?;
    let q = match (lambda, y) {
        (Some(l), _) => SlopeQuery::from_fraction(t, p, fraction(l)?)?,
        (None, Some(y)) => SlopeQuery::new(t, p, y)?,
        (None, None) => unreachable!("clap enforces the mass group"),
    };
    let mut r = Report::new("solve-slope");
    r.input("t", t).input("p", p).input("y", q.y).input("lambda", q.fraction()).input("tol", tol);
    match solve(&q, tol) {
        Ok(s) => {
            r.info("a", s.a)
                .check("residual", s.residual, tol, s.residual.abs() <= tol)
                .info("iterations", s.iterations)
                .info("bracket_lo", s.bracket.0)
                .info("bracket_hi", s.bracket.1);
        }
        Err(e) => {
            r.fail(e.to_string());
        }
    }
    Ok(r)
}

pub struct Endpoint {
    pub x: Option<f64>,
    pub p: Option<f64>,
}

pub struct Mass {
    pub lambda: Option<f64>,
    pub y: Option<f64>,
    pub slope: Option<f64>,
}

pub fn certify(t: f64, endpoint: Endpoint, mass: Mass, nodes: usize) -> Result<Report, UsageError> {
    let x = match (endpoint.x, endpoint.p) {
        (Some(x), _) => Probability::new(x)?,
        (None, Some(p)) => Probability::new(norm_cdf(p))?,
        (None, None) => unreachable!("clap enforces the endpoint group"),
    };
    let y = match (mass.lambda, mass.y, mass.slope) {
        (Some(l), ..) => fraction(l)? * norm_cdf(t),
        (None, Some(y), _) => y,
        (None, None, Some(a)) => consistent_mass(t, x, a),
        _ => unreachable!("clap enforces the mass group"),
    };
    // Rejects y outside (0, Φ(t)) before any optimization starts.
    SlopeQuery::new(t, bobkov_core::gauss::inv_cdf(x), y)?;
    let grid = CollocationGrid::new(t, nodes)?;
    let mut r = Report::new("certify");
    r.input("t", t).input("x", x.value()).input("y", y).input("nodes", nodes);
    match certify_value(t, x, y, &grid) {
        Ok(c) => {
            let tol = c.tolerance;
            r.info("analytic_b", c.analytic_b)
                .info("optimum", c.optimum)
                .info("candidate_cost", c.candidate_cost)
                .info("candidate_a", c.candidate.a)
                .info("candidate_b", c.candidate.b)
                .check("optimum_gap", c.optimum_gap, tol, c.optimum_gap <= tol)
                .check("candidate_gap", c.candidate_gap, tol, c.candidate_gap <= tol)
                .info("refinement_estimate", c.refinement_estimate)
                .info("refined_optimum", c.refined_optimum)
                .info("sup_distance", c.sup_distance)
                .info("constraint_residual", c.constraint_residual)
                .info("gradient_norm", c.gradient_norm)
                .check("converged", c.converged, tol, c.converged)
                .check("certified", c.certified, tol, c.certified);
            r.message = Some(c.note);
        }
        Err(e) => {
            r.fail(e.to_string());
        }
    }
    Ok(r)
}

pub fn limits(f: &TestFunction1D, horizon: f64, tol: f64) -> Result<Report, UsageError> {
    let (horizon, tol) = (positive("horizon", horizon)?, positive("tol", tol)?);
    let mut r = Report::new("limits");
    r.input("function", f.to_string()).input("horizon", horizon).input("tol", tol);
    match endpoint_limits(f, horizon, &QuadratureSpec::default()) {
        Ok(l) => {
            let truncated = l.truncated(horizon);
            r.check("low_end", l.low_end, tol, l.low_end <= tol)
                .check("high_end_gap", l.high_end_gap, tol, l.high_end_gap <= tol)
                .info("target", l.target)
                .info("t_low", l.t_low)
                .info("t_high", l.t_high)
                .check("truncated", truncated, tol, !truncated);
        }
        Err(e) => {
            r.fail(e.to_string());
        }
    }
    Ok(r)
}

struct TensorOutcome {
    slacks: [f64; 3],
    values: [f64; 5],
    deficit_ok: bool,
}

fn tensor_outcome(g: &TestFunction2D, deficit_tol: f64) -> Result<TensorOutcome, LabError> {
    let t = tensorize_check_2d(g, &QuadratureSpec::default())?;
    Ok(TensorOutcome {
        slacks: [t.slack_marginal, t.slack_inner, t.slack_minkowski],
        values: [t.isoperimetric, t.s1, t.s2, t.s3, t.deficit_2d],
        // Only the probit-affine class is expected to attain the bound.
        deficit_ok: !g.is_probit_affine() || t.deficit_2d.abs() <= deficit_tol,
    })
}

pub fn tensor_check(g: &TestFunction2D, tol: f64, deficit_tol: f64) -> Report {
    let mut r = Report::new("tensor-check");
    r.input("function", g.to_string()).input("tol", tol).input("deficit_tol", deficit_tol);
    match tensor_outcome(g, deficit_tol) {
        Ok(o) => {
            for (name, s) in ["slack_marginal", "slack_inner", "slack_minkowski"].iter().zip(o.slacks) {
                r.check(name, s, tol, s >= -tol);
            }
            let [iso, s1, s2, s3, deficit] = o.values;
            r.info("isoperimetric", iso)
                .info("s1", s1)
                .info("s2", s2)
                .info("s3", s3)
                .info("probit_affine", g.is_probit_affine());
            if g.is_probit_affine() {
                r.check("deficit_2d", deficit, deficit_tol, o.deficit_ok);
            } else {
                r.info("deficit_2d", deficit);
            }
        }
        Err(e) => {
            r.fail(e.to_string());
        }
    }
    r
}

pub fn tensor_corpus(pool: &ThreadPool, seed: u64, n: usize, tol: f64, deficit_tol: f64) -> Report {
    let corpus = random_corpus_2d(seed, n);
    let rows: Vec<Vec<Value>> = pool.install(|| {
        corpus
            .par_iter()
            .map(|(id, g)| {
                let mut row: Vec<Value> = vec![id.clone().into(), g.to_string().into()];
                match tensor_outcome(g, deficit_tol) {
                    Ok(o) => {
                        let ok = o.slacks.iter().all(|&s| s >= -tol) && o.deficit_ok;
                        row.extend(o.slacks.into_iter().chain([o.values[4]]).map(Value::from));
                        row.push(if ok { "ok" } else { "tolerance_exceeded" }.into());
                    }
                    Err(e) => {
                        row.extend([f64::NAN; 4].map(Value::from));
                        row.push(flag_for(&e).into());
                    }
                }
                row
            })
            .collect()
    });
    let mut r = Report::new("tensor-check");
    r.seed = Some(seed);
    r.input("corpus", n).input("tol", tol).input("deficit_tol", deficit_tol);
    let min_slack = rows
        .iter()
        .flat_map(|row| row[2..5].iter())
        .filter_map(|v| match v {
            Value::Real(x) => Some(*x),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    r.check("min_slack", min_slack, tol, min_slack >= -tol);
    tally_flags(&mut r, &rows);
    r.table = Some(Table {
        columns: vec![
            "id",
            "function",
            "slack_marginal",
            "slack_inner",
            "slack_minkowski",
            "deficit_2d",
            "flag",
        ],
        rows,
    });
    r
}
