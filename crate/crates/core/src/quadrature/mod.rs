//! Gaussian-weighted integration in one and two dimensions, the mass of the
//! truncated half-space `{s ≤ t, u ≤ (s − t)a + p}`, and the bivariate normal
//! distribution function that gives the same mass in closed form.

mod bvn;
mod kronrod;

pub use bvn::{bvn_cdf, bvn_lower, orthant_probability};
pub(crate) use kronrod::gk15;
pub use kronrod::Integration;

use serde::Serialize;

use crate::error::{ensure_finite, LabError, Result};
use crate::gauss::norm_pdf;

/// Tolerances and truncation for Gaussian-weighted integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    /// Target absolute error.
    pub abs_tol: f64,
    /// Target relative error; `0` disables the relative criterion.
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// `|s|` beyond which a φ-weighted integrand is treated as zero.
    pub tail_cutoff: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 0.0,
            max_subdivisions: 4000,
            tail_cutoff: 8.5,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, max_subdivisions: usize, tail_cutoff: f64) -> Result<Self> {
        Self {
            abs_tol,
            rel_tol: 0.0,
            max_subdivisions,
            tail_cutoff,
        }
        .validated()
    }

    pub fn with_abs_tol(self, abs_tol: f64) -> Result<Self> {
        Self { abs_tol, ..self }.validated()
    }

    pub fn with_rel_tol(self, rel_tol: f64) -> Result<Self> {
        Self { rel_tol, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.abs_tol > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "rel_tol must be non-negative, got {}",
                self.rel_tol
            )));
        }
        // φ(8) ≈ 5e-15 is the last point where the weight is still resolvable.
        if !(self.tail_cutoff >= 8.0) || !self.tail_cutoff.is_finite() {
            return Err(LabError::InvalidParameter(format!(
                "tail_cutoff must be finite and >= 8, got {}",
                self.tail_cutoff
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(LabError::InvalidParameter(
                "max_subdivisions must be positive".into(),
            ));
        }
        Ok(self)
    }
}

fn initial_panels(lower: f64, upper: f64) -> usize {
    ((upper - lower).ceil() as usize).clamp(1, 64)
}

fn finish(outcome: Integration) -> Result<f64> {
    if outcome.converged {
        Ok(outcome.value)
    } else {
        Err(LabError::QuadratureNotConverged {
            estimate: outcome.value,
            error_estimate: outcome.error_estimate,
            subdivisions: outcome.subdivisions,
        })
    }
}

/// Plain adaptive integral of `g` over the finite interval `[lower, upper]`.
pub fn integrate<F: Fn(f64) -> f64>(
    g: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    finish(integrate_detailed(g, lower, upper, spec)?)
}

/// Like [`integrate`], but returns the full outcome even when the error target is missed.
pub fn integrate_detailed<F: Fn(f64) -> f64>(
    g: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<Integration> {
    let lower = ensure_finite("integrate lower", lower)?;
    let upper = ensure_finite("integrate upper", upper)?;
    if lower == upper {
        return Ok(Integration {
            value: 0.0,
            error_estimate: 0.0,
            subdivisions: 0,
            converged: true,
        });
    }
    if lower > upper {
        return Err(LabError::InvalidParameter(format!(
            "integration bounds out of order: {lower} > {upper}"
        )));
    }
    Ok(kronrod::adaptive(
        &g,
        lower,
        upper,
        spec.abs_tol,
        spec.rel_tol,
        spec.max_subdivisions,
        initial_panels(lower, upper),
    ))
}

/// `∫ g(s) φ(s) ds` over `[lower, upper]`, where either bound may be infinite.
///
/// The interval is intersected with `[−tail_cutoff, tail_cutoff]`; an empty
/// intersection yields `0`.
pub fn gauss_weighted_integral<F: Fn(f64) -> f64>(
    g: F,
    lower: f64,
    upper: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if lower.is_nan() || upper.is_nan() {
        return Err(LabError::NonFinite {
            context: "gauss_weighted_integral",
            value: f64::NAN,
        });
    }
    if !(lower < upper) {
        return Err(LabError::InvalidParameter(format!(
            "gauss_weighted_integral requires lower < upper, got [{lower}, {upper}]"
        )));
    }
    let lo = lower.max(-spec.tail_cutoff);
    let hi = upper.min(spec.tail_cutoff);
    if lo >= hi {
        return Ok(0.0);
    }
    integrate(|s| g(s) * norm_pdf(s), lo, hi, spec)
}

/// [`gauss_weighted_integral`] split at `breaks`, for integrands that are only
/// piecewise smooth. Each piece gets an equal share of `abs_tol`.
pub fn gauss_weighted_integral_pieces<F: Fn(f64) -> f64>(
    g: F,
    lower: f64,
    upper: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    if breaks.is_empty() {
        return gauss_weighted_integral(g, lower, upper, spec);
    }
    if !(lower < upper) {
        return Err(LabError::InvalidParameter(format!(
            "gauss_weighted_integral requires lower < upper, got [{lower}, {upper}]"
        )));
    }
    let lo = lower.max(-spec.tail_cutoff);
    let hi = upper.min(spec.tail_cutoff);
    if lo >= hi {
        return Ok(0.0);
    }
    let cuts = interval_cuts(lo, hi, breaks);
    let piece = QuadratureSpec {
        abs_tol: spec.abs_tol / (cuts.len() - 1) as f64,
        ..*spec
    };
    cuts.windows(2)
        .map(|w| integrate(|s| g(s) * norm_pdf(s), w[0], w[1], &piece))
        .sum()
}

/// `[lo, breaks ∩ (lo, hi)..., hi]`, sorted and deduplicated.
pub(crate) fn interval_cuts(lo: f64, hi: f64, breaks: &[f64]) -> Vec<f64> {
    let mut cuts = vec![lo, hi];
    cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// `∫∫ g(x, y) φ(x) φ(y) dx dy` over `[−tail_cutoff, tail_cutoff]²`.
///
/// Nested adaptive integration: the inner integral in `y` runs at a tenth of
/// the outer tolerance so that its error does not masquerade as structure.
pub fn gauss_weighted_integral_2d<F: Fn(f64, f64) -> f64>(
    g: F,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let inner = QuadratureSpec {
        abs_tol: spec.abs_tol * 0.1,
        ..*spec
    };
    let failure = std::cell::Cell::new(None);
    let outer = gauss_weighted_integral(
        |x| match gauss_weighted_integral(|y| g(x, y), f64::NEG_INFINITY, f64::INFINITY, &inner) {
            Ok(v) => v,
            Err(e) => {
                let estimate = match &e {
                    LabError::QuadratureNotConverged { estimate, .. } => *estimate,
                    _ => f64::NAN,
                };
                failure.set(Some(e));
                estimate
            }
        },
        f64::NEG_INFINITY,
        f64::INFINITY,
        spec,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    outer
}

/// γ²-mass of `{(s,u) : s ≤ t, u ≤ (s − t)a + p}` by quadrature of
/// `∫_{−∞}^t Φ((s − t)a + p) φ(s) ds`.
pub fn truncated_halfspace_mass(t: f64, p: f64, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    ensure_finite("truncated_halfspace_mass t", t)?;
    ensure_finite("truncated_halfspace_mass p", p)?;
    ensure_finite("truncated_halfspace_mass a", a)?;
    let lo = -spec.tail_cutoff;
    if t <= lo {
        return Ok(0.0);
    }
    let hi = t.min(spec.tail_cutoff);
    // Φ((s − t)a + p) switches from 0 to 1 across a band of width ~1/|a|
    // around s = t − p/a; those points become breakpoints so no panel straddles it.
    let mut cuts = vec![lo, hi];
    if a != 0.0 {
        let center = t - p / a;
        let band = 8.0 / a.abs();
        for c in [center - band, center, center + band] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let integrand = |s: f64| crate::gauss::norm_cdf((s - t) * a + p) * norm_pdf(s);
    let piece_spec = QuadratureSpec {
        abs_tol: spec.abs_tol / (cuts.len() - 1) as f64,
        ..*spec
    };
    cuts.windows(2)
        .map(|w| integrate(integrand, w[0], w[1], &piece_spec))
        .sum()
}

/// The same mass in closed form: `(S, (U − aS)/√(1+a²))` is a standard pair
/// with correlation `−a/√(1+a²)`, so the mass is `Φ₂(t, P; ρ)` with
/// `P = (p − at)/√(1+a²)`.
pub fn halfspace_mass_closed_form(t: f64, p: f64, a: f64) -> f64 {
    let norm = a.hypot(1.0);
    let rho = -a / norm;
    let big_p = (p - a * t) / norm;
    if rho.abs() < 0.925 {
        return bvn_lower(t, big_p, rho);
    }
    // 1 − ρ² = 1/(1 + a²) exactly, and P − t·sign ρ without cancellation.
    let sign = rho.signum();
    let gap = ((p - sign * t / (norm + a.abs())) / norm).abs();
    bvn::bvn_lower_near_unit(t, big_p, rho, 1.0 / (norm * norm), gap)
}
