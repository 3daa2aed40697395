//! The implicit slope `a(t, p, y)`: the unique `a` for which the truncated
//! half-space `{s ≤ t, u ≤ (s − t)a + p}` has Gaussian mass `y`, together with
//! its closed-form partial derivatives.

use serde::Serialize;

use crate::bellman::rotated_coords;
use crate::error::{ensure_finite, LabError, Result};
use crate::gauss::{integrated_cdf, norm_cdf, norm_pdf};
use crate::quadrature::halfspace_mass_closed_form;
use crate::roots::brent;

/// Default bound on `|mass(a) − y|`.
pub const DEFAULT_SLOPE_TOL: f64 = 1e-12;

/// Queries with `min(y, Φ(t) − y) < BOUNDARY_GUARD · Φ(t)` are refused.
pub const BOUNDARY_GUARD: f64 = 1e-12;

/// Largest `|a|` the bracket search will reach before giving up.
pub const BRACKET_CAP: f64 = 1e6;

const MAX_BRENT_ITER: usize = 200;

/// A point `(t, p, y)` with `0 < y < Φ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeQuery {
    pub t: f64,
    pub p: f64,
    pub y: f64,
}

impl SlopeQuery {
    pub fn new(t: f64, p: f64, y: f64) -> Result<Self> {
        ensure_finite("SlopeQuery.t", t)?;
        ensure_finite("SlopeQuery.p", p)?;
        ensure_finite("SlopeQuery.y", y)?;
        let cap = norm_cdf(t);
        if !(y > 0.0 && y < cap) {
            return Err(LabError::Domain {
                context: "SlopeQuery",
                value: y,
                detail: format!("y must lie strictly inside (0, Φ(t)) = (0, {cap:e})"),
            });
        }
        Ok(Self { t, p, y })
    }

    /// The query with `y = λ·Φ(t)`.
    pub fn from_fraction(t: f64, p: f64, lambda: f64) -> Result<Self> {
        ensure_finite("SlopeQuery.lambda", lambda)?;
        Self::new(t, p, lambda * norm_cdf(t))
    }

    /// `y / Φ(t)`.
    pub fn fraction(&self) -> f64 {
        self.y / norm_cdf(self.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeSolution {
    pub a: f64,
    /// `mass(t, p, a) − y`.
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopePartials {
    pub a_t: f64,
    pub a_p: f64,
    pub a_y: f64,
}

fn check_conditioning(q: &SlopeQuery) -> Result<()> {
    let cap = norm_cdf(q.t);
    let gap = q.y.min(cap - q.y);
    if gap < BOUNDARY_GUARD * cap {
        return Err(LabError::IllConditioned {
            t: q.t,
            p: q.p,
            y: q.y,
            detail: format!(
                "y is within {:.3e} (relative) of the boundary of (0, Φ(t)); the slope diverges",
                gap / cap
            ),
        });
    }
    Ok(())
}

/// Solve `mass(t, p, a) = y` for `a`.
///
/// The mass is strictly decreasing in `a`, so the bracket `[−1, 1]` is doubled
/// on the appropriate side until it straddles `y`, then refined with Brent's
/// method to full double precision in `a`.
pub fn solve_slope(q: &SlopeQuery, tol: f64) -> Result<SlopeSolution> {
    if !(tol > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "slope tolerance must be positive, got {tol}"
        )));
    }
    let q = SlopeQuery::new(q.t, q.p, q.y)?;
    check_conditioning(&q)?;

    let g = |a: f64| halfspace_mass_closed_form(q.t, q.p, a) - q.y;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    while g_hi > 0.0 {
        if hi >= BRACKET_CAP {
            return Err(bracket_failure(&q, hi));
        }
        lo = hi;
        g_lo = g_hi;
        hi = (2.0 * hi).min(BRACKET_CAP);
        g_hi = g(hi);
    }
    while g_lo < 0.0 {
        if lo <= -BRACKET_CAP {
            return Err(bracket_failure(&q, lo));
        }
        hi = lo;
        lo = (2.0 * lo).max(-BRACKET_CAP);
        g_lo = g(lo);
    }

    let root = brent(g, lo, hi, 0.0, MAX_BRENT_ITER)?;
    if !(root.fx.abs() <= tol) {
        return Err(LabError::RootNotFound(format!(
            "slope residual {:e} exceeds tolerance {tol:e} at a = {}",
            root.fx, root.x
        )));
    }
    Ok(SlopeSolution {
        a: root.x,
        residual: root.fx,
        iterations: root.iterations,
        bracket: root.bracket,
    })
}

fn bracket_failure(q: &SlopeQuery, reached: f64) -> LabError {
    LabError::IllConditioned {
        t: q.t,
        p: q.p,
        y: q.y,
        detail: format!(
            "bracket expansion reached |a| = {:e} without straddling y",
            reached.abs()
        ),
    }
}

/// Closed-form `(a_t, a_p, a_y)` at a known slope `a`.
pub fn slope_partials_at(t: f64, p: f64, a: f64) -> SlopePartials {
    let scale = a.hypot(1.0);
    let (big_p, big_q) = rotated_coords(t, p, a);
    let phi_p = norm_pdf(big_p);
    let cdf_q = norm_cdf(big_q);
    let denom = integrated_cdf(big_q);
    let one_plus_a2 = scale * scale;
    SlopePartials {
        a_t: one_plus_a2 * (norm_cdf(p) * norm_pdf(t) - (a / scale) * phi_p * cdf_q)
            / (phi_p * denom),
        a_p: cdf_q * scale / denom,
        a_y: -one_plus_a2 / (phi_p * denom),
    }
}

/// Solve for `a` and return its partial derivatives.
pub fn slope_partials(q: &SlopeQuery) -> Result<SlopePartials> {
    let sol = solve_slope(q, DEFAULT_SLOPE_TOL)?;
    Ok(slope_partials_at(q.t, q.p, sol.a))
}

/// `∂ mass / ∂a = −φ(P)(φ(Q) + QΦ(Q)) / (1 + a²)`.
pub fn mass_slope_derivative(t: f64, p: f64, a: f64) -> f64 {
    let (big_p, big_q) = rotated_coords(t, p, a);
    -norm_pdf(big_p) * integrated_cdf(big_q) / (1.0 + a * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{truncated_halfspace_mass, QuadratureSpec};

    #[test]
    fn zero_slope_at_product_mass() {
        for &(t, p) in &[(0.5, -0.3), (-1.2, 0.8), (2.0, 1.5)] {
            let q = SlopeQuery::new(t, p, norm_cdf(p) * norm_cdf(t)).unwrap();
            let s = solve_slope(&q, DEFAULT_SLOPE_TOL).unwrap();
            assert!(s.a.abs() < 1e-12, "a = {}", s.a);
        }
    }

    #[test]
    fn forward_round_trip() {
        let y = truncated_halfspace_mass(0.8, 0.2, 1.3, &QuadratureSpec::default()).unwrap();
        let s = solve_slope(&SlopeQuery::new(0.8, 0.2, y).unwrap(), DEFAULT_SLOPE_TOL).unwrap();
        assert!((s.a - 1.3).abs() < 1e-10, "a = {}", s.a);
        assert!(s.residual.abs() <= DEFAULT_SLOPE_TOL);
        assert!(s.bracket.0 <= s.a && s.a <= s.bracket.1);
    }

    #[test]
    fn rejects_boundary_and_outside() {
        let cap = norm_cdf(0.5);
        assert!(matches!(
            SlopeQuery::new(0.5, 0.0, cap),
            Err(LabError::Domain { .. })
        ));
        assert!(matches!(
            SlopeQuery::new(0.5, 0.0, -0.1),
            Err(LabError::Domain { .. })
        ));
        let q = SlopeQuery::new(0.5, 0.0, cap * (1.0 - 1e-13)).unwrap();
        assert!(matches!(
            solve_slope(&q, 1e-12),
            Err(LabError::IllConditioned { .. })
        ));
        let q = SlopeQuery::new(0.5, 0.0, cap * 1e-13).unwrap();
        assert!(matches!(
            solve_slope(&q, 1e-12),
            Err(LabError::IllConditioned { .. })
        ));
        let q = SlopeQuery::new(0.5, 0.0, 0.3).unwrap();
        assert!(solve_slope(&q, 0.0).is_err());
    }

    #[test]
    fn partial_signs() {
        for &(t, p, lam) in &[
            (0.0, 0.0, 0.5),
            (-2.0, 1.5, 0.1),
            (1.7, -1.9, 0.95),
            (-6.0, -3.0, 0.3),
        ] {
            let q = SlopeQuery::from_fraction(t, p, lam).unwrap();
            let d = slope_partials(&q).unwrap();
            assert!(d.a_y < 0.0 && d.a_p > 0.0, "{d:?} at {q:?}");
        }
    }

    #[test]
    fn mass_derivative_matches_difference_quotient() {
        let (t, p, a) = (0.3, -0.4, 0.9);
        let h = 1e-5;
        let fd = (halfspace_mass_closed_form(t, p, a + h)
            - halfspace_mass_closed_form(t, p, a - h))
            / (2.0 * h);
        let exact = mass_slope_derivative(t, p, a);
        assert!(((fd - exact) / exact).abs() < 1e-7, "{fd} vs {exact}");
    }
}
