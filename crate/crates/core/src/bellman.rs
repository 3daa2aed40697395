//! The Bellman value `M(t, p, y) = φ(P)Φ(Q)` in rotated coordinates, its
//! closed-form partials, the HJB residual, and the surface
//! `B(t, x, y) = M(t, Φ⁻¹(x), y)`.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::gauss::{norm_cdf, norm_pdf, norm_quantile, Probability};
use crate::slope::{solve_slope, SlopeQuery, DEFAULT_SLOPE_TOL};

/// Points of the Bellman domain share the slope query invariant `0 < y < Φ(t)`.
pub type DomainPoint = SlopeQuery;

/// `P = (p − at)/√(1+a²)`, `Q = (t + ap)/√(1+a²)`.
pub fn rotated_coords(t: f64, p: f64, a: f64) -> (f64, f64) {
    let h = a.hypot(1.0);
    ((p - a * t) / h, (t + a * p) / h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellmanEval {
    pub a: f64,
    #[serde(rename = "P")]
    pub big_p: f64,
    #[serde(rename = "Q")]
    pub big_q: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "M_t")]
    pub m_t: f64,
    #[serde(rename = "M_p")]
    pub m_p: f64,
    #[serde(rename = "M_y")]
    pub m_y: f64,
}

/// Value and partials of `M` at `(t, p)` for a given slope `a`.
pub fn bellman_at_slope(t: f64, p: f64, a: f64) -> BellmanEval {
    let h = a.hypot(1.0);
    let (big_p, big_q) = rotated_coords(t, p, a);
    let phi_p = norm_pdf(big_p);
    let density = phi_p * norm_pdf(big_q);
    BellmanEval {
        a,
        big_p,
        big_q,
        m: phi_p * norm_cdf(big_q),
        m_t: density / h + big_p * norm_pdf(t) * norm_cdf(p),
        m_p: a * density / h,
        m_y: -big_p,
    }
}

/// `M_p` written in the original coordinates, `aφ(p)φ(t)/√(1+a²)`.
pub fn m_p_unrotated(t: f64, p: f64, a: f64) -> f64 {
    a * norm_pdf(p) * norm_pdf(t) / a.hypot(1.0)
}

/// Solve for the slope at `pt` and evaluate `M` with all partials.
pub fn bellman_value(pt: &DomainPoint) -> Result<BellmanEval> {
    let sol = solve_slope(pt, DEFAULT_SLOPE_TOL)?;
    Ok(bellman_at_slope(pt.t, pt.p, sol.a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BellmanPartials {
    pub m_t: f64,
    pub m_p: f64,
    pub m_y: f64,
}

pub fn bellman_partials(pt: &DomainPoint) -> Result<BellmanPartials> {
    let e = bellman_value(pt)?;
    Ok(BellmanPartials {
        m_t: e.m_t,
        m_p: e.m_p,
        m_y: e.m_y,
    })
}

/// Both sides of the HJB identity at a domain point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbCheck {
    pub eval: BellmanEval,
    /// `√(φ²(t)φ²(p) − M_p²)`.
    pub lhs: f64,
    /// `M_t + Φ(p)φ(t)M_y`.
    pub rhs: f64,
    /// `lhs − rhs`.
    pub residual: f64,
    /// `residual / (φ(t)φ(p))`.
    pub rel_residual: f64,
    /// Common analytic value of both sides, `φ(P)φ(Q)/√(1+a²)`.
    pub reference: f64,
}

pub fn hjb_check(pt: &DomainPoint) -> Result<HjbCheck> {
    let eval = bellman_value(pt)?;
    let scale = norm_pdf(pt.t) * norm_pdf(pt.p);
    let radicand = scale * scale - eval.m_p * eval.m_p;
    if radicand < 0.0 || radicand.is_nan() {
        return Err(LabError::NegativeRadicand {
            t: pt.t,
            p: pt.p,
            y: pt.y,
            radicand,
        });
    }
    let lhs = radicand.sqrt();
    let rhs = eval.m_t + norm_cdf(pt.p) * norm_pdf(pt.t) * eval.m_y;
    let residual = lhs - rhs;
    Ok(HjbCheck {
        eval,
        lhs,
        rhs,
        residual,
        rel_residual: residual / scale,
        reference: norm_pdf(eval.big_p) * norm_pdf(eval.big_q) / eval.a.hypot(1.0),
    })
}

/// `√(φ²(t)φ²(p) − M_p²) − (M_t + Φ(p)φ(t)M_y)`; zero by the Bellman identity.
pub fn hjb_residual(pt: &DomainPoint) -> Result<f64> {
    Ok(hjb_check(pt)?.residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BSurfaceEval {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "B_t")]
    pub b_t: f64,
    #[serde(rename = "B_x")]
    pub b_x: f64,
    #[serde(rename = "B_y")]
    pub b_y: f64,
    /// `Φ⁻¹(x)`.
    pub p: f64,
    pub a: f64,
}

impl BSurfaceEval {
    fn from_eval(t: f64, p: f64, e: &BellmanEval) -> Self {
        // M_p / φ(p) with the φ(p) cancelled analytically.
        let b_x = e.a * norm_pdf(t) / e.a.hypot(1.0);
        Self {
            b: e.m,
            b_t: e.m_t,
            b_x,
            b_y: e.m_y,
            p,
            a: e.a,
        }
    }

    /// `I(x)√(φ²(t) − B_x²) − (B_t + xφ(t)B_y)`, which vanishes identically.
    pub fn transport_residual(&self, t: f64, x: Probability) -> f64 {
        let phi_t = norm_pdf(t);
        let iso = norm_pdf(self.p);
        iso * (phi_t * phi_t - self.b_x * self.b_x).max(0.0).sqrt()
            - (self.b_t + x.value() * phi_t * self.b_y)
    }
}

/// `B(t, x, y)` and its partials, sharing one slope solve at `p = Φ⁻¹(x)`.
pub fn b_surface(t: f64, x: Probability, y: f64) -> Result<BSurfaceEval> {
    let p = norm_quantile(x.value());
    let pt = DomainPoint::new(t, p, y)?;
    let e = bellman_value(&pt)?;
    Ok(BSurfaceEval::from_eval(t, p, &e))
}

/// `B` at a known slope; used where the slope is already available.
pub fn b_surface_at_slope(t: f64, p: f64, a: f64) -> BSurfaceEval {
    BSurfaceEval::from_eval(t, p, &bellman_at_slope(t, p, a))
}
