//! Direct collocation of the Bellman problem
//!
//! `B(t, x, y) = inf ∫_{−∞}^t √(I²(f) + f′²) dγ` over `f` with `f(t) = x` and
//! `∫_{−∞}^t f dγ = y`,
//!
//! truncated to `[−T_low, t]`, discretized by the midpoint rule and solved by an
//! augmented Lagrangian on the probits `z = Φ⁻¹(x)`.

use serde::Serialize;

use crate::bellman::b_surface;
use crate::error::{LabError, Result};
use crate::gauss::{inv_cdf, iso_from_tails, norm_cdf, norm_pdf, probit_from_tails, Probability};
use crate::slope::{solve_slope, SlopeQuery, DEFAULT_SLOPE_TOL};

pub const DEFAULT_T_LOW: f64 = 8.0;

/// Grids coarser than this are solved but never certified.
pub const MIN_CERTIFIABLE_NODES: usize = 64;

/// Probits are kept in `[−PROBIT_CLAMP, PROBIT_CLAMP]` so `Φ(z)` and `Φ(−z)` stay normal floats.
const PROBIT_CLAMP: f64 = 37.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollocationGrid {
    s_values: Vec<f64>,
    delta: f64,
}

impl CollocationGrid {
    /// `nodes` equally spaced points on `[−t_low, t]`.
    pub fn uniform(t: f64, nodes: usize, t_low: f64) -> Result<Self> {
        if !t.is_finite() || !t_low.is_finite() {
            return Err(LabError::InvalidParameter(format!(
                "grid end points t={t}, t_low={t_low}"
            )));
        }
        if nodes < 2 {
            return Err(LabError::InvalidParameter(format!(
                "a grid needs at least 2 nodes, got {nodes}"
            )));
        }
        if t <= -t_low {
            return Err(LabError::InvalidParameter(format!(
                "t = {t} must exceed −t_low = {}",
                -t_low
            )));
        }
        let delta = (t + t_low) / (nodes - 1) as f64;
        let mut s_values: Vec<f64> = (0..nodes).map(|i| -t_low + delta * i as f64).collect();
        s_values[nodes - 1] = t;
        Ok(Self { s_values, delta })
    }

    pub fn new(t: f64, nodes: usize) -> Result<Self> {
        Self::uniform(t, nodes, DEFAULT_T_LOW)
    }

    /// Same interval with the spacing halved (`2N − 1` nodes, nested).
    pub fn refined(&self) -> Self {
        Self::uniform(self.t(), 2 * self.nodes() - 1, -self.s_values[0])
            .expect("refining a valid grid")
    }

    pub fn nodes(&self) -> usize {
        self.s_values.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    pub fn t(&self) -> f64 {
        self.s_values[self.nodes() - 1]
    }

    pub fn is_certifiable(&self) -> bool {
        self.nodes() >= MIN_CERTIFIABLE_NODES
    }

    /// Midpoint weights `φ(s̄ᵢ)Δ`.
    fn weights(&self) -> Vec<f64> {
        self.s_values
            .windows(2)
            .map(|w| norm_pdf(0.5 * (w[0] + w[1])) * self.delta)
            .collect()
    }
}

/// Discretized `f`, stored through its probits so values near 0 and 1 keep
/// full relative precision in both tails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlTrajectory {
    probits: Vec<f64>,
}

impl ControlTrajectory {
    pub fn from_values(x_values: &[f64]) -> Result<Self> {
        let probits = x_values
            .iter()
            .map(|&x| Probability::new(x).map(inv_cdf))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { probits })
    }

    pub fn from_probits(probits: Vec<f64>) -> Result<Self> {
        if let Some(&z) = probits.iter().find(|z| !z.is_finite()) {
            return Err(LabError::NonFinite {
                context: "ControlTrajectory",
                value: z,
            });
        }
        Ok(Self { probits })
    }

    pub fn probits(&self) -> &[f64] {
        &self.probits
    }

    pub fn x_values(&self) -> Vec<f64> {
        self.probits.iter().map(|&z| norm_cdf(z)).collect()
    }

    pub fn len(&self) -> usize {
        self.probits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probits.is_empty()
    }

    /// `x_N`.
    pub fn endpoint(&self) -> f64 {
        norm_cdf(*self.probits.last().expect("non-empty trajectory"))
    }

    /// Largest `|xᵢ − x̃ᵢ|` against another trajectory on the same grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.probits
            .iter()
            .zip(&other.probits)
            .map(|(&a, &b)| (norm_cdf(a) - norm_cdf(b)).abs())
            .fold(0.0, f64::max)
    }
}

fn tails(z: f64) -> (f64, f64) {
    (norm_cdf(z), norm_cdf(-z))
}

/// Midpoint value, its complement and the difference quotient, each taken
/// from whichever tail keeps precision.
fn interval(lo: (f64, f64), hi: (f64, f64), delta: f64) -> (f64, f64, f64) {
    let m = 0.5 * (lo.0 + hi.0);
    let mc = 0.5 * (lo.1 + hi.1);
    let d = if m <= 0.5 { hi.0 - lo.0 } else { lo.1 - hi.1 } / delta;
    (m, mc, d)
}

fn check_sizes(traj: &ControlTrajectory, grid: &CollocationGrid) -> Result<()> {
    if traj.len() != grid.nodes() {
        return Err(LabError::SizeMismatch {
            what: "trajectory",
            got: traj.len(),
            expected: grid.nodes(),
        });
    }
    Ok(())
}

/// `Σᵢ √(I²(x̄ᵢ) + ((xᵢ₊₁ − xᵢ)/Δ)²) φ(s̄ᵢ) Δ`.
pub fn discretized_cost(traj: &ControlTrajectory, grid: &CollocationGrid) -> Result<f64> {
    check_sizes(traj, grid)?;
    let t: Vec<_> = traj.probits.iter().map(|&z| tails(z)).collect();
    Ok(t.windows(2)
        .zip(grid.weights())
        .map(|(p, w)| {
            let (m, mc, d) = interval(p[0], p[1], grid.delta);
            w * iso_from_tails(m, mc).hypot(d)
        })
        .sum())
}

/// `Σᵢ x̄ᵢ φ(s̄ᵢ) Δ`, the discretized running mass.
pub fn discretized_mass(traj: &ControlTrajectory, grid: &CollocationGrid) -> Result<f64> {
    check_sizes(traj, grid)?;
    Ok(traj
        .probits
        .windows(2)
        .zip(grid.weights())
        .map(|(z, w)| w * 0.5 * (norm_cdf(z[0]) + norm_cdf(z[1])))
        .sum())
}

/// Probit-affine minimizer `f(s) = Φ(a s + b)` predicted by the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub a: f64,
    pub b: f64,
}

impl Candidate {
    pub fn sample(&self, grid: &CollocationGrid) -> ControlTrajectory {
        ControlTrajectory {
            probits: grid.s_values.iter().map(|&s| self.a * s + self.b).collect(),
        }
    }
}

/// `a* = a(t, Φ⁻¹(x), y)` and `b* = Φ⁻¹(x) − a* t`.
pub fn analytic_candidate(t: f64, x: Probability, y: f64) -> Result<Candidate> {
    let p = inv_cdf(x);
    let a = solve_slope(&SlopeQuery::new(t, p, y)?, DEFAULT_SLOPE_TOL)?.a;
    Ok(Candidate { a, b: p - a * t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// The constant trajectory `x ≡ x_end`, feasible and optimal for its own
    /// mass, followed by continuation of the mass constraint to `y`. Grids
    /// above 160 nodes instead start from the interpolated optimum of the grid
    /// with half as many nodes, itself found this way.
    Continuation,
    /// Start at the sampled analytic candidate.
    Candidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimizeOptions {
    pub constraint_tol: f64,
    /// On the sup norm of the Lagrangian gradient in the probit variables.
    pub gradient_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    pub init: Initialization,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-8,
            gradient_tol: 1e-6,
            max_outer: 40,
            max_inner: 200,
            initial_penalty: 1e2,
            init: Initialization::Continuation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    /// Discretized cost at the returned trajectory.
    pub value: f64,
    pub trajectory: ControlTrajectory,
    /// `|Σ x̄ᵢφ(s̄ᵢ)Δ − y|`.
    pub constraint_residual: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub multiplier: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Why the run stopped.
    pub message: String,
}

/// Free variables are the probits of nodes `0..N−1`; `z_N` is pinned to the endpoint.
#[derive(Clone)]
struct Problem {
    weights: Vec<f64>,
    delta: f64,
    y: f64,
    z_end: f64,
}

/// Augmented Lagrangian `C + μc + ρc²/2` with its gradient, the tridiagonal part
/// of its Hessian and the rank-one factor `u = ∇c` (full Hessian `T + ρuuᵀ`).
struct Model {
    value: f64,
    cost: f64,
    c: f64,
    grad: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    u: Vec<f64>,
}

impl Problem {
    fn full(&self, z: &[f64]) -> Vec<f64> {
        let mut all = z.to_vec();
        all.push(self.z_end);
        all
    }

    fn phase(&self, z: &[f64]) -> (f64, f64) {
        let all = self.full(z);
        let tl: Vec<_> = all.iter().map(|&v| tails(v)).collect();
        let mut cost = 0.0;
        let mut mass = 0.0;
        for (p, &w) in tl.windows(2).zip(&self.weights) {
            let (m, mc, d) = interval(p[0], p[1], self.delta);
            cost += w * iso_from_tails(m, mc).hypot(d);
            mass += w * m;
        }
        (cost, mass - self.y)
    }

    fn value(&self, z: &[f64], mu: f64, rho: f64) -> f64 {
        let (cost, c) = self.phase(z);
        cost + mu * c + 0.5 * rho * c * c
    }

    fn model(&self, z: &[f64], mu: f64, rho: f64) -> Model {
        let all = self.full(z);
        let n = all.len();
        let tl: Vec<_> = all.iter().map(|&v| tails(v)).collect();
        let mut gx = vec![0.0; n];
        let mut cx = vec![0.0; n];
        let mut hd = vec![0.0; n];
        let mut ho = vec![0.0; n - 1];
        let mut cost = 0.0;
        let mut mass = 0.0;
        let inv = 1.0 / self.delta;
        for i in 0..n - 1 {
            let w = self.weights[i];
            let (m, mc, d) = interval(tl[i], tl[i + 1], self.delta);
            let iso = iso_from_tails(m, mc);
            let q = probit_from_tails(m, mc);
            let r = iso.hypot(d);
            mass += w * m;
            cx[i] += 0.5 * w;
            cx[i + 1] += 0.5 * w;
            let r3 = r * r * r;
            if !(r3 > 0.0) {
                // Both ends pinned deep in the same tail: the term has underflowed
                // and carries no cost to first or second order.
                continue;
            }
            let r_m = -iso * q / r;
            let r_d = d / r;
            let r_mm = (q * q - 1.0) / r - (iso * q) * (iso * q) / r3;
            let r_dd = iso * iso / r3;
            let r_md = iso * q * d / r3;
            cost += w * r;
            gx[i] += w * (0.5 * r_m - r_d * inv);
            gx[i + 1] += w * (0.5 * r_m + r_d * inv);
            hd[i] += w * (0.25 * r_mm - r_md * inv + r_dd * inv * inv);
            hd[i + 1] += w * (0.25 * r_mm + r_md * inv + r_dd * inv * inv);
            ho[i] += w * (0.25 * r_mm - r_dd * inv * inv);
        }
        let c = mass - self.y;
        let kappa = mu + rho * c;
        let k = n - 1;
        let dens: Vec<f64> = all.iter().map(|&v| norm_pdf(v)).collect();
        let mut grad = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut u = vec![0.0; k];
        for j in 0..k {
            let gj = gx[j] + kappa * cx[j];
            grad[j] = dens[j] * gj;
            diag[j] = dens[j] * dens[j] * hd[j] - all[j] * dens[j] * gj;
            u[j] = dens[j] * cx[j];
        }
        let off = (0..k.saturating_sub(1))
            .map(|j| dens[j] * dens[j + 1] * ho[j])
            .collect();
        Model {
            value: cost + mu * c + 0.5 * rho * c * c,
            cost,
            c,
            grad,
            diag,
            off,
            u,
        }
    }
}

/// `LDLᵀ` of `T + τS`, with `T` symmetric tridiagonal and `S` the diagonal of
/// its absolute row sums; `None` on a (numerically) zero pivot.
struct Tridiagonal {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Tridiagonal {
    fn factor(diag: &[f64], off: &[f64], tau: f64) -> Option<Self> {
        Self::factor_with(diag, off, tau, false)
    }

    /// With `modify`, pivots below `1e-8` of the row scale are replaced by
    /// `max(|d|, 1e-8·scale)`, giving a positive definite matrix that only
    /// differs from `T + τS` in the offending rows.
    fn factor_with(diag: &[f64], off: &[f64], tau: f64, modify: bool) -> Option<Self> {
        let k = diag.len();
        let mut d = vec![0.0; k];
        let mut l = vec![0.0; k];
        let row_scale = |i: usize| {
            let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < k { off[i].abs() } else { 0.0 };
            diag[i].abs() + left + right
        };
        // Rows deep in the tails can underflow entirely; measure them against
        // the largest row so the shift still reaches them.
        let floor = 1e-20 * (0..k).map(row_scale).fold(0.0, f64::max) + f64::MIN_POSITIVE;
        for i in 0..k {
            let left = if i > 0 { off[i - 1] } else { 0.0 };
            let scale = row_scale(i).max(floor);
            let a = diag[i] + tau * scale;
            d[i] = if i > 0 {
                l[i] = left / d[i - 1];
                a - l[i] * left
            } else {
                a
            };
            if modify && !(d[i] >= 1e-8 * scale) {
                d[i] = d[i].abs().max(1e-8 * scale);
            }
            if !d[i].is_finite() || d[i].abs() <= 1e-13 * scale {
                return None;
            }
        }
        Some(Self { d, l })
    }

    /// Number of negative eigenvalues (Sylvester's law of inertia).
    fn negatives(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.d.len();
        let mut v = b.to_vec();
        for i in 1..k {
            v[i] -= self.l[i] * v[i - 1];
        }
        for i in 0..k {
            v[i] /= self.d[i];
        }
        for i in (0..k.saturating_sub(1)).rev() {
            v[i] -= self.l[i + 1] * v[i + 1];
        }
        v
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton direction for `(T + τS + ρuuᵀ) d = −g`, or `None` unless that matrix
/// is positive definite. `T + τS` may carry one negative eigenvalue that the
/// rank-one term lifts; the matrix determinant lemma tells the cases apart.
fn newton_direction(model: &Model, rho: f64, tau: f64) -> Option<Vec<f64>> {
    let exact = Tridiagonal::factor(&model.diag, &model.off, tau).and_then(|f| {
        let v2 = f.solve(&model.u);
        let den = 1.0 + rho * dot(&model.u, &v2);
        let definite = match f.negatives() {
            0 => den > 0.0,
            1 => den < 0.0,
            _ => false,
        };
        definite.then_some((f, v2, den))
    });
    let (f, v2, den) = exact?;
    let neg: Vec<f64> = model.grad.iter().map(|g| -g).collect();
    let v1 = f.solve(&neg);
    let coef = rho * dot(&model.u, &v1) / den;
    Some(v1.iter().zip(&v2).map(|(a, b)| a - coef * b).collect())
}

/// `Hd` for `H = T + ρuuᵀ`.
fn hessian_times(model: &Model, rho: f64, d: &[f64]) -> Vec<f64> {
    let k = d.len();
    let ud = rho * dot(&model.u, d);
    (0..k)
        .map(|i| {
            let mut v = model.diag[i] * d[i] + ud * model.u[i];
            if i > 0 {
                v += model.off[i - 1] * d[i - 1];
            }
            if i + 1 < k {
                v += model.off[i] * d[i + 1];
            }
            v
        })
        .collect()
}

/// Levenberg–Marquardt on the augmented Lagrangian, with the damping driven by
/// the ratio of actual to predicted decrease. Returns the final model and the
/// number of iterations.
fn inner_minimize(
    problem: &Problem,
    z: &mut [f64],
    mu: f64,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> (Model, usize) {
    let mut model = problem.model(z, mu, rho);
    let mut tau = 0.0_f64;
    let mut trial = z.to_vec();
    for iter in 0..max_iter {
        if sup_norm(&model.grad) <= tol {
            return (model, iter);
        }
        let mut dir = loop {
            if let Some(d) = newton_direction(&model, rho, tau) {
                break d;
            }
            tau = (tau * 4.0).max(1e-10);
            if tau > 1e6 {
                // Give up on curvature; steepest descent with a unit-scale step.
                let g = sup_norm(&model.grad);
                break model.grad.iter().map(|v| -v / g).collect();
            }
        };
        let longest = sup_norm(&dir);
        if longest > 4.0 {
            dir.iter_mut().for_each(|d| *d *= 4.0 / longest);
        }
        for ((t, &zi), &di) in trial.iter_mut().zip(z.iter()).zip(&dir) {
            *t = (zi + di).clamp(-PROBIT_CLAMP, PROBIT_CLAMP);
        }
        let hd = hessian_times(&model, rho, &dir);
        let predicted = -(dot(&model.grad, &dir) + 0.5 * dot(&dir, &hd));
        let actual = model.value - problem.value(&trial, mu, rho);
        let ratio = if predicted > 0.0 {
            actual / predicted
        } else {
            -1.0
        };
        if ratio > 0.75 {
            tau = if tau < 1e-10 { 0.0 } else { tau / 3.0 };
        } else if ratio < 0.25 {
            tau = (tau * 4.0).max(1e-6);
        }
        if ratio > 1e-4 || (actual > 0.0 && predicted <= 0.0) {
            z.copy_from_slice(&trial);
            model = problem.model(z, mu, rho);
        } else if actual.abs() <= 1e-16 * model.value.abs() && tau > 1e4 {
            // Neither the model nor the function can make progress any more.
            return (model, iter);
        }
    }
    (model, max_iter)
}

/// Minimize the discretized cost subject to `x_N = x_end` and the discrete mass
/// constraint. Non-convergence is reported through `converged = false`.
pub fn constrained_minimize(
    t: f64,
    x_end: Probability,
    y: f64,
    grid: &CollocationGrid,
    opts: &MinimizeOptions,
) -> Result<OptimizationResult> {
    SlopeQuery::new(t, inv_cdf(x_end), y)?;
    if grid.t() != t {
        return Err(LabError::InvalidParameter(format!(
            "grid ends at {} but the query time is {t}",
            grid.t()
        )));
    }
    let problem = Problem {
        weights: grid.weights(),
        delta: grid.delta,
        y,
        z_end: inv_cdf(x_end),
    };
    let mut totals = (0, 0);
    let nested = match opts.init {
        Initialization::Continuation if grid.nodes() > NESTED_ABOVE => {
            nested_start(t, x_end, y, grid, opts, &mut totals)?
        }
        _ => None,
    };
    let (run, z, how) = match nested {
        Some((mut z, mu, coarse)) => {
            let run = polish(&problem, &mut z, mu, opts, &mut totals);
            if run.converged {
                (run, z, format!("a {coarse}-node warm start"))
            } else {
                let (run, z, stages) = from_scratch(&problem, grid, t, x_end, y, opts, &mut totals)?;
                (run, z, format!("{stages} continuation stages"))
            }
        }
        None => {
            let (run, z, stages) = from_scratch(&problem, grid, t, x_end, y, opts, &mut totals)?;
            (run, z, format!("{stages} continuation stages"))
        }
    };
    let message = if run.converged {
        format!("converged after {how}")
    } else {
        format!(
            "no convergence after {} outer iterations: constraint residual {:.3e}, gradient norm {:.3e}",
            run.outer,
            run.model.c.abs(),
            sup_norm(&run.model.grad)
        )
    };
    Ok(result(
        &problem,
        &z,
        &run.model,
        run.mu,
        totals,
        run.converged,
        message,
    ))
}

/// Probit magnitude past which `Φ(z)` has no usable gradient.
const SATURATED: f64 = 8.0;

const MAX_REPAIRS: usize = 3;

/// Nodes pinned in the opposite tail from the unsaturated nodes flanking their
/// saturated run, reset to the flank's tail; `None` when there are none.
///
/// A smooth optimum never jumps between tails from one node to the next, but
/// the concavity of `I` near `0` and `1` makes such holes local minima of the
/// discrete problem that the Newton iteration cannot leave: `∂x/∂z` vanishes.
fn repair_saturated_runs(z: &[f64]) -> Option<Vec<f64>> {
    let mut out = z.to_vec();
    let mut changed = false;
    let n = z.len();
    let mut i = 0;
    while i < n {
        if z[i].abs() < SATURATED {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && z[i].abs() >= SATURATED {
            i += 1;
        }
        let flanks: Vec<f64> = [start.checked_sub(1), (i < n).then_some(i)]
            .into_iter()
            .flatten()
            .map(|k| z[k].signum())
            .collect();
        let Some(&sign) = flanks.first() else {
            continue;
        };
        if flanks.iter().any(|&f| f != sign) {
            continue;
        }
        // The pinned endpoint is never saturated-and-wrong, so it is never touched.
        for v in &mut out[start..i] {
            if v.signum() != sign {
                *v = sign * SATURATED;
                changed = true;
            }
        }
    }
    changed.then_some(out)
}

/// Grids with more nodes are warm-started from the optimum on the grid with
/// about half as many (nested iteration); the mass continuation from a constant
/// is reliable only while the tail nodes are few.
const NESTED_ABOVE: usize = 160;

/// Probits of the converged optimum on the coarser grid, interpolated onto
/// `grid` (free nodes only), with its multiplier and node count.
fn nested_start(
    t: f64,
    x_end: Probability,
    y: f64,
    grid: &CollocationGrid,
    opts: &MinimizeOptions,
    totals: &mut (usize, usize),
) -> Result<Option<(Vec<f64>, f64, usize)>> {
    let coarse = CollocationGrid::uniform(t, grid.nodes().div_ceil(2), -grid.s_values[0])?;
    let r = constrained_minimize(t, x_end, y, &coarse, opts)?;
    totals.0 += r.outer_iterations;
    totals.1 += r.inner_iterations;
    if !r.converged {
        return Ok(None);
    }
    let (cs, cz) = (coarse.s_values(), r.trajectory.probits());
    let k = grid.nodes() - 1;
    let z = grid.s_values[..k]
        .iter()
        .map(|&s| {
            let j = cs.partition_point(|&c| c <= s).clamp(1, cs.len() - 1);
            let w = (s - cs[j - 1]) / (cs[j] - cs[j - 1]);
            cz[j - 1] + w * (cz[j] - cz[j - 1])
        })
        .collect();
    Ok(Some((z, r.multiplier, coarse.nodes())))
}

/// Constant or candidate start, mass continuation for the former, then [`polish`].
fn from_scratch(
    problem: &Problem,
    grid: &CollocationGrid,
    t: f64,
    x_end: Probability,
    y: f64,
    opts: &MinimizeOptions,
    totals: &mut (usize, usize),
) -> Result<(Run, Vec<f64>, usize)> {
    let mut z = match opts.init {
        Initialization::Continuation => vec![problem.z_end; grid.nodes() - 1],
        Initialization::Candidate => {
            let mut full = analytic_candidate(t, x_end, y)?.sample(grid).probits;
            full.pop();
            full
        }
    };
    z.iter_mut()
        .for_each(|v| *v = v.clamp(-PROBIT_CLAMP, PROBIT_CLAMP));

    // Least-squares multiplier: minimizes |∇C + μ∇c| at the start point.
    let start = problem.model(&z, 0.0, 0.0);
    let mut mu = -dot(&start.grad, &start.u) / dot(&start.u, &start.u);
    let mut steps = 0;
    if opts.init == Initialization::Continuation {
        // The constant trajectory is optimal for the mass it carries; walk that
        // mass to `y`, warm-starting each solve from the previous optimum.
        let start_mass = problem.phase(&z).1 + y;
        let mut tau = 0.0_f64;
        let mut step = 0.25_f64;
        // Last accepted stage, for a secant predictor along the path.
        let mut previous: Option<(f64, Vec<f64>, f64)> = None;
        while tau < 1.0 {
            let next = (tau + step).min(1.0);
            let stage = Problem {
                y: start_mass + (y - start_mass) * next,
                ..problem.clone()
            };
            let (mut trial, guess_mu) = match &previous {
                Some((tp, zp, mp)) => {
                    let r = (next - tau) / (tau - tp);
                    let zs = z.iter().zip(zp).map(|(a, b)| a + r * (a - b)).collect();
                    (zs, mu + r * (mu - mp))
                }
                None => (z.clone(), mu),
            };
            let run = augmented_lagrangian(&stage, &mut trial, guess_mu, &continuation_stage(opts));
            totals.0 += run.outer;
            totals.1 += run.inner;
            steps += 1;
            if run.converged {
                previous = Some((tau, std::mem::replace(&mut z, trial), mu));
                mu = run.mu;
                tau = next;
                step = (step * 1.5).min(0.25);
            } else {
                step *= 0.5;
                if step < 1e-4 {
                    // Fall through to the final solve from the last accepted stage.
                    break;
                }
            }
        }
    }
    let run = polish(problem, &mut z, mu, opts, totals);
    Ok((run, z, steps))
}

/// Final augmented-Lagrangian solve, followed by up to [`MAX_REPAIRS`] rounds of
/// saturated-run repair, each kept only if it converges to a lower cost.
fn polish(
    problem: &Problem,
    z: &mut Vec<f64>,
    mu: f64,
    opts: &MinimizeOptions,
    totals: &mut (usize, usize),
) -> Run {
    let mut run = augmented_lagrangian(problem, z, mu, opts);
    totals.0 += run.outer;
    totals.1 += run.inner;
    for _ in 0..MAX_REPAIRS {
        if !run.converged {
            break;
        }
        let Some(mut repaired) = repair_saturated_runs(&problem.full(z)) else {
            break;
        };
        repaired.pop();
        let retry = augmented_lagrangian(problem, &mut repaired, run.mu, opts);
        totals.0 += retry.outer;
        totals.1 += retry.inner;
        if !(retry.converged && retry.model.cost < run.model.cost) {
            break;
        }
        *z = repaired;
        run = retry;
    }
    run
}

/// Intermediate stages only have to be good warm starts.
fn continuation_stage(opts: &MinimizeOptions) -> MinimizeOptions {
    MinimizeOptions {
        constraint_tol: opts.constraint_tol.max(1e-6),
        gradient_tol: opts.gradient_tol.max(1e-4),
        max_outer: opts.max_outer.min(8),
        max_inner: opts.max_inner.min(25),
        ..*opts
    }
}

fn result(
    problem: &Problem,
    z: &[f64],
    model: &Model,
    mu: f64,
    (outer, inner): (usize, usize),
    converged: bool,
    message: String,
) -> OptimizationResult {
    OptimizationResult {
        value: model.cost,
        trajectory: ControlTrajectory {
            probits: problem.full(z),
        },
        constraint_residual: model.c.abs(),
        gradient_norm: sup_norm(&model.grad),
        converged,
        multiplier: mu,
        outer_iterations: outer,
        inner_iterations: inner,
        message,
    }
}

struct Run {
    converged: bool,
    /// Evaluated with zero penalty, so its gradient is that of `C + μc`.
    model: Model,
    mu: f64,
    outer: usize,
    inner: usize,
}

fn augmented_lagrangian(problem: &Problem, z: &mut [f64], mu0: f64, opts: &MinimizeOptions) -> Run {
    let mut mu = mu0;
    let mut rho = opts.initial_penalty;
    let mut inner = 0;
    let mut last_c = f64::INFINITY;
    let inner_tol = 0.1 * opts.gradient_tol;
    for outer in 1..=opts.max_outer {
        let (last, used) = inner_minimize(problem, z, mu, rho, inner_tol, opts.max_inner);
        inner += used;
        let c = last.c;
        mu += rho * c;
        let model = problem.model(z, mu, 0.0);
        if c.abs() <= opts.constraint_tol && sup_norm(&model.grad) <= opts.gradient_tol {
            return Run {
                converged: true,
                model,
                mu,
                outer,
                inner,
            };
        }
        // Raise the penalty only while the constraint lags; past the tolerance a
        // larger ρ just amplifies rounding in ρc∇c.
        if c.abs() > opts.constraint_tol && c.abs() > 0.25 * last_c {
            rho = (rho * 10.0).min(1e12);
        }
        last_c = c.abs();
    }
    let model = problem.model(z, mu, 0.0);
    Run {
        converged: false,
        model,
        mu,
        outer: opts.max_outer,
        inner,
    }
}

/// Safety factor on the Richardson estimate of the discretization error.
pub const CERT_SAFETY: f64 = 4.0;

/// Lower bound on the certification tolerance (solver and truncation noise).
pub const CERT_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub nodes: usize,
    pub candidate: Candidate,
    pub analytic_b: f64,
    /// Value certified against; equals `analytic_b` unless overridden.
    pub reference_b: f64,
    pub optimum: f64,
    pub candidate_cost: f64,
    pub optimum_gap: f64,
    pub candidate_gap: f64,
    /// `(4/3)·max|value_N − value_{2N}|` over the optimum and the sampled candidate.
    pub refinement_estimate: f64,
    /// Optimum on the refined grid.
    pub refined_optimum: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub constraint_residual: f64,
    pub gradient_norm: f64,
    /// Distance between the optimized trajectory and the sampled candidate.
    pub sup_distance: f64,
    pub certified: bool,
    pub note: String,
}

pub fn certify_value(
    t: f64,
    x: Probability,
    y: f64,
    grid: &CollocationGrid,
) -> Result<CertificationReport> {
    certify_against(t, x, y, grid, None, &MinimizeOptions::default())
}

/// Certify the collocation optimum and the sampled candidate against
/// `reference` (the analytic `B(t, x, y)` when `None`).
pub fn certify_against(
    t: f64,
    x: Probability,
    y: f64,
    grid: &CollocationGrid,
    reference: Option<f64>,
    opts: &MinimizeOptions,
) -> Result<CertificationReport> {
    let analytic_b = b_surface(t, x, y)?.b;
    let reference_b = reference.unwrap_or(analytic_b);
    let candidate = analytic_candidate(t, x, y)?;
    let sampled = candidate.sample(grid);
    let candidate_cost = discretized_cost(&sampled, grid)?;
    let fine = grid.refined();
    let fine_cost = discretized_cost(&candidate.sample(&fine), &fine)?;
    let opt = constrained_minimize(t, x, y, grid, opts)?;
    let fine_opt = constrained_minimize(t, x, y, &fine, opts)?;
    // Richardson: for an O(Δ²) error, error(N) ≈ (4/3)|value(N) − value(2N)|.
    let refinement_estimate = 4.0 / 3.0
        * (candidate_cost - fine_cost)
            .abs()
            .max((opt.value - fine_opt.value).abs());
    let tolerance = (CERT_SAFETY * refinement_estimate).max(CERT_FLOOR);
    let optimum_gap = (opt.value - reference_b).abs();
    let candidate_gap = (candidate_cost - reference_b).abs();
    let within = optimum_gap <= tolerance && candidate_gap <= tolerance;
    let converged = opt.converged && fine_opt.converged;
    let certified = converged && grid.is_certifiable() && within;
    let note = if !grid.is_certifiable() {
        format!(
            "grid has {} nodes; certification needs at least {MIN_CERTIFIABLE_NODES}",
            grid.nodes()
        )
    } else if !converged {
        if opt.converged {
            fine_opt.message.clone()
        } else {
            opt.message.clone()
        }
    } else if !within {
        format!("gaps ({optimum_gap:.3e}, {candidate_gap:.3e}) exceed tolerance {tolerance:.3e}")
    } else {
        "certified".into()
    };
    Ok(CertificationReport {
        t,
        x: x.value(),
        y,
        nodes: grid.nodes(),
        candidate,
        analytic_b,
        reference_b,
        optimum: opt.value,
        candidate_cost,
        optimum_gap,
        candidate_gap,
        refinement_estimate,
        refined_optimum: fine_opt.value,
        tolerance,
        converged,
        constraint_residual: opt.constraint_residual,
        gradient_norm: opt.gradient_norm,
        sup_distance: opt.trajectory.sup_distance(&sampled),
        certified,
        note,
    })
}

/// `y` on the trajectory `Φ(a s + b)` through `(t, x)`: the mass of the
/// truncated half-space, used to build consistent test points.
pub fn consistent_mass(t: f64, x: Probability, a: f64) -> f64 {
    crate::quadrature::halfspace_mass_closed_form(t, inv_cdf(x), a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = CollocationGrid::new(1.0, 512).unwrap();
        assert_eq!(g.nodes(), 512);
        assert_eq!(g.t(), 1.0);
        assert_eq!(g.s_values()[0], -8.0);
        let f = g.refined();
        assert_eq!(f.nodes(), 1023);
        assert!((f.delta() - 0.5 * g.delta()).abs() < 1e-15);
        assert!(CollocationGrid::new(-9.0, 64).is_err());
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let diag = [4.0, 5.0, 3.0, 6.0];
        let off = [1.0, -2.0, 0.5];
        let b = [1.0, 2.0, 3.0, 4.0];
        let v = Tridiagonal::factor(&diag, &off, 0.0).unwrap().solve(&b);
        for i in 0..4 {
            let mut r = diag[i] * v[i];
            if i > 0 {
                r += off[i - 1] * v[i - 1];
            }
            if i < 3 {
                r += off[i] * v[i + 1];
            }
            assert!((r - b[i]).abs() < 1e-13);
        }
        assert_eq!(
            Tridiagonal::factor(&[-1.0, 2.0], &[0.5], 0.0)
                .unwrap()
                .negatives(),
            1
        );
        assert!(Tridiagonal::factor(&[1.0, 1.0], &[1.0], 0.0).is_none());
    }

    #[test]
    fn model_gradient_matches_difference_quotient() {
        let grid = CollocationGrid::new(0.5, 16).unwrap();
        let problem = Problem {
            weights: grid.weights(),
            delta: grid.delta,
            y: 0.3,
            z_end: 0.4,
        };
        let z: Vec<f64> = grid.s_values()[..15]
            .iter()
            .map(|s| 0.6 * s - 0.1 + 0.05 * s * s)
            .collect();
        let (mu, rho) = (0.3, 7.0);
        let m = problem.model(&z, mu, rho);
        for j in [0, 5, 14] {
            let h = 1e-6;
            let mut zp = z.clone();
            zp[j] += h;
            let mut zm = z.clone();
            zm[j] -= h;
            let fd = (problem.value(&zp, mu, rho) - problem.value(&zm, mu, rho)) / (2.0 * h);
            assert!(
                (fd - m.grad[j]).abs() < 1e-8 * (1.0 + fd.abs()),
                "grad {j}: {fd} vs {}",
                m.grad[j]
            );
            let gp = problem.model(&zp, mu, rho);
            let gm = problem.model(&zm, mu, rho);
            let fd_diag = (gp.grad[j] - gm.grad[j]) / (2.0 * h) - rho * m.u[j] * m.u[j];
            assert!(
                (fd_diag - m.diag[j]).abs() < 1e-6 * (1.0 + fd_diag.abs()),
                "diag {j}"
            );
            if j < 14 {
                let fd_off =
                    (gp.grad[j + 1] - gm.grad[j + 1]) / (2.0 * h) - rho * m.u[j] * m.u[j + 1];
                assert!(
                    (fd_off - m.off[j]).abs() < 1e-6 * (1.0 + fd_off.abs()),
                    "off {j}"
                );
            }
        }
    }
}
