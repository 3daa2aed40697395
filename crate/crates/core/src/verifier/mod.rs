//! Numerical verification of Bobkov's inequality through the Bellman function:
//! the deficit, the pointwise HJB inequality and its minimizer, the Ψ-integrand,
//! the endpoint limits, the equality-case ODE and the two-dimensional
//! tensorization chain.

mod corpus;
mod functions;
mod running;
mod tensor;

pub use corpus::{
    domain_point_sample, endpoint_sample, random_corpus, random_corpus_2d, CorpusEntry,
    DomainSample,
};
pub use functions::{BlendComponent, Tabulated, TestFunction1D, TABULATED_EPS};
pub use running::RunningMass;
pub use tensor::{tensorize_check_2d, TensorReport, TestFunction2D};

use std::cell::Cell;

use serde::Serialize;

use crate::bellman::{b_surface, b_surface_at_slope, bellman_at_slope, BellmanEval};
use crate::error::{LabError, Result};
use crate::gauss::{iso_from_tails, norm_pdf, Probability};
use crate::quadrature::{gauss_weighted_integral_pieces, integrate, interval_cuts, QuadratureSpec};
use crate::slope::{solve_slope, SlopeQuery, DEFAULT_SLOPE_TOL};

/// Half-width of the window over which Ψ is integrated. Outside it both the
/// Bobkov integrand and the boundary terms are below `Φ(−8) ≈ 6e-16`.
pub const PSI_HORIZON: f64 = 8.0;

/// Nodes of the grid on which the equality-case ODE residual is sampled.
pub const EQUALITY_GRID: (f64, f64, usize) = (-3.0, 3.0, 61);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeficitReport {
    pub lhs: f64,
    /// `I(∫ f dγ)`.
    pub rhs: f64,
    pub deficit: f64,
    pub min_psi: f64,
    pub psi_integral: f64,
    /// Interval over which Ψ was integrated.
    pub psi_window: (f64, f64),
    pub mean: f64,
}

/// `(∫ f dγ, ∫ (1 − f) dγ)`, each integrated separately.
pub fn gaussian_mean(f: &TestFunction1D, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let b = f.breakpoints();
    let mean =
        gauss_weighted_integral_pieces(|t| f.value(t), f64::NEG_INFINITY, f64::INFINITY, b, spec)?;
    let comp = gauss_weighted_integral_pieces(
        |t| f.complement(t),
        f64::NEG_INFINITY,
        f64::INFINITY,
        b,
        spec,
    )?;
    Ok((mean, comp))
}

/// `∫ √(I²(f) + f′²) dγ`.
pub fn bobkov_lhs(f: &TestFunction1D, spec: &QuadratureSpec) -> Result<f64> {
    gauss_weighted_integral_pieces(
        |t| f.bobkov_integrand(t),
        f64::NEG_INFINITY,
        f64::INFINITY,
        f.breakpoints(),
        spec,
    )
}

/// Slope solve along the trajectory `(t, h(t), y)`.
fn trajectory_slope(f: &TestFunction1D, t: f64, y: f64) -> Result<(f64, f64)> {
    let p = f.probit(t);
    let sol = solve_slope(&SlopeQuery::new(t, p, y)?, DEFAULT_SLOPE_TOL)?;
    Ok((p, sol.a))
}

/// `Ψ(t)` given the running mass `y = ∫_{−∞}^t f dγ`.
pub fn psi_at(f: &TestFunction1D, t: f64, y: f64) -> Result<f64> {
    let (p, a) = trajectory_slope(f, t, y)?;
    let b = b_surface_at_slope(t, p, a);
    let phi_t = norm_pdf(t);
    let total_derivative = b.b_t + b.b_x * f.derivative(t) + b.b_y * f.value(t) * phi_t;
    Ok(f.bobkov_integrand(t) * phi_t - total_derivative)
}

/// `Ψ(t) = √(I²(f) + f′²)φ(t) − d/dt B(t, f(t), ∫_{−∞}^t f dγ)`, with the
/// total derivative expanded by the chain rule and the running mass integrated afresh.
pub fn psi_integrand(f: &TestFunction1D, t: f64, spec: &QuadratureSpec) -> Result<f64> {
    let y = RunningMass::new(f, t, spec)?.at(t);
    psi_at(f, t, y)
}

/// Deficit `∫ √(I²(f)+f′²) dγ − I(∫ f dγ)` together with `∫ Ψ`.
pub fn bobkov_deficit(f: &TestFunction1D, spec: &QuadratureSpec) -> Result<DeficitReport> {
    let lhs = bobkov_lhs(f, spec)?;
    let (mean, comp) = gaussian_mean(f, spec)?;
    let rhs = iso_from_tails(mean, comp);
    let psi = psi_integral(f, PSI_HORIZON, spec)?;
    Ok(DeficitReport {
        lhs,
        rhs,
        deficit: lhs - rhs,
        min_psi: psi.min_psi,
        psi_integral: psi.integral,
        psi_window: psi.window,
        mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiIntegral {
    pub integral: f64,
    /// Smallest Ψ seen at a quadrature node.
    pub min_psi: f64,
    pub window: (f64, f64),
}

/// Step of the outward scan in [`psi_window`].
const WINDOW_STEP: f64 = 0.25;

/// Relative distance of `y` from the ends of `(0, Φ(t))` below which the
/// trajectory is considered too close to the slope singularity.
const WINDOW_MARGIN: f64 = 1e-10;

/// Largest `[lo, hi] ⊆ [−horizon, horizon]` around the origin on which the
/// trajectory `(t, h(t), y(t))` stays well inside the slope domain.
///
/// Functions that saturate (e.g. `Φ(t² − 1)`) push `y(t)` to within rounding of
/// `0` or `Φ(t)` far out; there both Ψ and the boundary terms `M(±T)` are
/// bounded by the Bobkov integrand beyond the window, which is negligible.
pub fn psi_window(f: &TestFunction1D, running: &RunningMass, horizon: f64) -> (f64, f64) {
    let usable = |t: f64| {
        let y = running.at(t);
        let cap = crate::gauss::norm_cdf(t);
        y.min(cap - y) >= WINDOW_MARGIN * cap && trajectory_slope(f, t, y).is_ok()
    };
    let scan = |sign: f64| {
        let mut last = 0.0;
        let mut s = WINDOW_STEP;
        while s <= horizon + 1e-12 {
            if !usable(sign * s) {
                // Back off one more step so no quadrature node lands near the failure.
                return sign * (last - WINDOW_STEP).max(0.0);
            }
            last = s;
            s += WINDOW_STEP;
        }
        sign * horizon
    };
    (scan(-1.0), scan(1.0))
}

/// `∫ Ψ` over [`psi_window`] clipped to `[−horizon, horizon]`.
pub fn psi_integral(
    f: &TestFunction1D,
    horizon: f64,
    spec: &QuadratureSpec,
) -> Result<PsiIntegral> {
    let running = RunningMass::new(f, horizon, spec)?;
    let window = psi_window(f, &running, horizon);
    let failure = Cell::new(None);
    let min_psi = Cell::new(f64::INFINITY);
    let psi = |t: f64| match psi_at(f, t, running.at(t)) {
        Ok(v) => {
            min_psi.set(min_psi.get().min(v));
            v
        }
        Err(e) => {
            failure.set(Some(e));
            0.0
        }
    };
    if !(window.0 < window.1) {
        return Err(LabError::InvalidParameter(format!(
            "no well-conditioned window for Ψ around the origin for {f}"
        )));
    }
    let local = QuadratureSpec {
        abs_tol: spec.abs_tol.max(1e-12),
        ..*spec
    };
    let cuts = interval_cuts(window.0, window.1, f.breakpoints());
    let piece = QuadratureSpec {
        abs_tol: local.abs_tol / (cuts.len() - 1) as f64,
        ..local
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let part = integrate(&psi, w[0], w[1], &piece);
        if let Some(e) = failure.take() {
            return Err(e);
        }
        total += part?;
    }
    Ok(PsiIntegral {
        integral: total,
        min_psi: min_psi.get(),
        window,
    })
}

/// `v* = I(x)B_x / √(φ²(t) − B_x²)`, the unique minimizer of
/// `v ↦ φ(t)√(I²(x) + v²) − vB_x`.
pub fn optimal_velocity(t: f64, x: Probability, y: f64) -> Result<f64> {
    let b = b_surface(t, x, y)?;
    let phi_t = norm_pdf(t);
    Ok(norm_pdf(b.p) * b.b_x / (phi_t * phi_t - b.b_x * b.b_x).sqrt())
}

/// `φ(t)√(I²(x) + v²) − (B_t + B_x v + B_y xφ(t))`, non-negative and zero only at `v*`.
pub fn pointwise_hjb_slack(t: f64, x: Probability, y: f64, v: f64) -> Result<f64> {
    let b = b_surface(t, x, y)?;
    let phi_t = norm_pdf(t);
    Ok(phi_t * norm_pdf(b.p).hypot(v) - (b.b_t + b.b_x * v + b.b_y * x.value() * phi_t))
}

/// `v ↦ φ(t)√(I²(x) + v²) − vB_x`, the quantity minimized by [`optimal_velocity`].
pub fn velocity_objective(t: f64, x: Probability, y: f64) -> Result<impl Fn(f64) -> f64> {
    let b = b_surface(t, x, y)?;
    let phi_t = norm_pdf(t);
    let iso = norm_pdf(b.p);
    let b_x = b.b_x;
    Ok(move |v: f64| phi_t * iso.hypot(v) - v * b_x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointLimits {
    /// `M(−T, h(−T), ∫_{−∞}^{−T} f dγ)`.
    pub low_end: f64,
    /// `|M(T, h(T), ∫_{−∞}^{T} f dγ) − I(∫ f dγ)|`.
    pub high_end_gap: f64,
    /// Horizon actually used at each end; smaller than requested when the
    /// slope solve was ill-conditioned there.
    pub t_low: f64,
    pub t_high: f64,
    pub target: f64,
}

impl EndpointLimits {
    pub fn truncated(&self, requested: f64) -> bool {
        self.t_low < requested || self.t_high < requested
    }
}

fn bellman_on_trajectory(f: &TestFunction1D, t: f64, y: f64) -> Result<BellmanEval> {
    let (p, a) = trajectory_slope(f, t, y)?;
    Ok(bellman_at_slope(t, p, a))
}

const ENDPOINT_BACKOFF: f64 = 0.25;

/// Values of `M` along the trajectory at `±T`. If the slope cannot be solved at an
/// end, the horizon there is reduced in steps of 0.25 and the usable value reported.
pub fn endpoint_limits(
    f: &TestFunction1D,
    horizon: f64,
    spec: &QuadratureSpec,
) -> Result<EndpointLimits> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let (mean, comp) = gaussian_mean(f, spec)?;
    let target = iso_from_tails(mean, comp);
    let running = RunningMass::new(f, horizon, spec)?;

    let end = |sign: f64| -> Result<(f64, f64)> {
        let mut t_abs = horizon;
        loop {
            let t = sign * t_abs;
            match bellman_on_trajectory(f, t, running.at(t)) {
                Ok(e) => return Ok((t_abs, e.m)),
                Err(
                    err @ (LabError::IllConditioned { .. }
                    | LabError::RootNotFound(_)
                    | LabError::Domain { .. }),
                ) => {
                    t_abs -= ENDPOINT_BACKOFF;
                    if t_abs <= 0.0 {
                        return Err(err);
                    }
                }
                Err(err) => return Err(err),
            }
        }
    };
    let (t_low, low) = end(-1.0)?;
    let (t_high, high) = end(1.0)?;
    Ok(EndpointLimits {
        low_end: low,
        high_end_gap: (high - target).abs(),
        t_low,
        t_high,
        target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqualityProfile {
    pub equality: bool,
    pub sup_residual: f64,
    /// Grid nodes actually used (the well-conditioned part of the grid).
    pub grid: Vec<f64>,
    /// `h′(t) − a(t, h(t), ∫_{−∞}^t f dγ)` at each grid node.
    pub residuals: Vec<f64>,
}

/// Compare `h′(t)` with the slope along the trajectory. Equality holds in
/// Bobkov's inequality exactly when they coincide, i.e. when `h` is affine.
pub fn equality_characterization(
    f: &TestFunction1D,
    tol: f64,
    spec: &QuadratureSpec,
) -> Result<EqualityProfile> {
    let (lo, hi, n) = EQUALITY_GRID;
    let running = RunningMass::new(f, hi, spec)?;
    // Nodes where the trajectory saturates against the domain boundary are dropped.
    let (w_lo, w_hi) = psi_window(f, &running, hi.max(-lo));
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .filter(|&t| (w_lo..=w_hi).contains(&t))
        .collect();
    let residuals = grid
        .iter()
        .map(|&t| {
            let (_, a) = trajectory_slope(f, t, running.at(t))?;
            Ok(f.probit_derivative(t) - a)
        })
        .collect::<Result<Vec<f64>>>()?;
    let sup_residual = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok(EqualityProfile {
        equality: sup_residual <= tol,
        sup_residual,
        grid,
        residuals,
    })
}
