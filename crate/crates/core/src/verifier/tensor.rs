//! Two-dimensional test functions and the tensorization chain
//! `I(∫∫g) ≤ S₁ ≤ S₂ ≤ S₃ = ∫∫√(I²(g) + |∇g|²)`.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::gauss::{iso_from_tails, norm_cdf, norm_pdf};
use crate::quadrature::{gauss_weighted_integral, gauss_weighted_integral_2d, QuadratureSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum TestFunction2D {
    /// `Φ(αx + βy + c)`.
    ProbitAffine { alpha: f64, beta: f64, c: f64 },
    /// `Φ(u(x)·y + v(x))` with polynomial `u`, `v` (ascending coefficients).
    ProbitSeparable { u: Vec<f64>, v: Vec<f64> },
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn poly_derivative(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, &k)| acc * x + i as f64 * k)
}

impl TestFunction2D {
    pub fn probit_affine(alpha: f64, beta: f64, c: f64) -> Result<Self> {
        if ![alpha, beta, c].iter().all(|v| v.is_finite()) {
            return Err(LabError::InvalidParameter(
                "non-finite probit-affine coefficient".into(),
            ));
        }
        Ok(Self::ProbitAffine { alpha, beta, c })
    }

    pub fn probit_separable(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.is_empty() || v.is_empty() || u.iter().chain(&v).any(|k| !k.is_finite()) {
            return Err(LabError::InvalidParameter(
                "probit-separable needs finite, non-empty coefficient lists".into(),
            ));
        }
        Ok(Self::ProbitSeparable { u, v })
    }

    /// `(h, h_x, h_y)` for the probit `h = Φ⁻¹ ∘ g`.
    pub fn probit_jet(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match self {
            Self::ProbitAffine { alpha, beta, c } => (alpha * x + beta * y + c, *alpha, *beta),
            Self::ProbitSeparable { u, v } => {
                let ux = poly(u, x);
                (
                    ux * y + poly(v, x),
                    poly_derivative(u, x) * y + poly_derivative(v, x),
                    ux,
                )
            }
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        norm_cdf(self.probit_jet(x, y).0)
    }

    pub fn complement(&self, x: f64, y: f64) -> f64 {
        norm_cdf(-self.probit_jet(x, y).0)
    }

    /// `(g_x, g_y)`.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (h, hx, hy) = self.probit_jet(x, y);
        let d = norm_pdf(h);
        (d * hx, d * hy)
    }

    /// Whether `g = Φ ∘ ℓ` for an affine `ℓ` by construction.
    pub fn is_probit_affine(&self) -> bool {
        match self {
            Self::ProbitAffine { .. } => true,
            Self::ProbitSeparable { u, v } => {
                u.iter().skip(1).all(|&k| k == 0.0) && v.iter().skip(2).all(|&k| k == 0.0)
            }
        }
    }
}

impl FromStr for TestFunction2D {
    type Err = LabError;

    /// Grammar: `probit-affine:α,β,c` or `probit-separable:u0,u1,…;v0,v1,…`.
    fn from_str(s: &str) -> Result<Self> {
        let err = |token: &str, reason: &str| LabError::Parse {
            token: token.to_string(),
            reason: reason.to_string(),
        };
        let nums = |list: &str| -> Result<Vec<f64>> {
            list.split(',')
                .map(|tok| {
                    let tok = tok.trim();
                    tok.parse::<f64>().map_err(|e| err(tok, &e.to_string()))
                })
                .collect()
        };
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| err(s, "expected `<family>:<parameters>`"))?;
        match kind.trim() {
            "probit-affine" => {
                let v = nums(body)?;
                if v.len() != 3 {
                    return Err(err(body, "probit-affine takes `alpha,beta,c`"));
                }
                Self::probit_affine(v[0], v[1], v[2])
            }
            "probit-separable" => {
                let (u, v) = body
                    .split_once(';')
                    .ok_or_else(|| err(body, "probit-separable takes `u0,u1,…;v0,v1,…`"))?;
                Self::probit_separable(nums(u)?, nums(v)?)
            }
            other => Err(err(
                other,
                "unknown 2D family (probit-affine, probit-separable)",
            )),
        }
    }
}

impl fmt::Display for TestFunction2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |c: &[f64]| {
            c.iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            Self::ProbitAffine { alpha, beta, c } => write!(f, "probit-affine:{alpha},{beta},{c}"),
            Self::ProbitSeparable { u, v } => write!(f, "probit-separable:{};{}", join(u), join(v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TensorReport {
    /// `I(∫∫ g dγ²)`.
    pub isoperimetric: f64,
    /// `∫ √(I²(G) + G′²) dγ(x)` with `G(x) = ∫ g(x, ·) dγ`.
    pub s1: f64,
    /// `∫ √((∫ √(I²(g) + g_y²) dγ(y))² + G′²) dγ(x)`.
    pub s2: f64,
    /// `∫∫ √(I²(g) + g_x² + g_y²) dγ²`, as an iterated integral.
    pub s3: f64,
    pub slack_marginal: f64,
    pub slack_inner: f64,
    pub slack_minkowski: f64,
    /// Sum of the three slacks.
    pub total_slack: f64,
    /// The deficit computed directly by two-dimensional quadrature.
    pub deficit_2d: f64,
}

#[derive(Clone, Copy)]
struct Section {
    mass: f64,
    complement: f64,
    mass_x: f64,
    inner_bobkov: f64,
    full: f64,
}

fn section(g: &TestFunction2D, x: f64, spec: &QuadratureSpec) -> Result<Section> {
    let all = (f64::NEG_INFINITY, f64::INFINITY);
    let integral = |h: &dyn Fn(f64) -> f64| gauss_weighted_integral(h, all.0, all.1, spec);
    Ok(Section {
        mass: integral(&|y| g.value(x, y))?,
        complement: integral(&|y| g.complement(x, y))?,
        mass_x: integral(&|y| g.gradient(x, y).0)?,
        inner_bobkov: integral(&|y| {
            let (h, _, hy) = g.probit_jet(x, y);
            norm_pdf(h) * hy.hypot(1.0)
        })?,
        full: integral(&|y| {
            let (h, hx, hy) = g.probit_jet(x, y);
            norm_pdf(h) * (1.0 + hx * hx + hy * hy).sqrt()
        })?,
    })
}

/// Evaluate each step of the tensorization chain and the direct 2D deficit.
pub fn tensorize_check_2d(g: &TestFunction2D, spec: &QuadratureSpec) -> Result<TensorReport> {
    let inner_spec = QuadratureSpec {
        abs_tol: spec.abs_tol * 0.1,
        ..*spec
    };
    let failure = Cell::new(None);
    let outer = |pick: &dyn Fn(&Section) -> f64| -> Result<f64> {
        let r = gauss_weighted_integral(
            |x| match section(g, x, &inner_spec) {
                Ok(s) => pick(&s),
                Err(e) => {
                    failure.set(Some(e));
                    0.0
                }
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            spec,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        r
    };

    let mass = outer(&|s| s.mass)?;
    let complement = outer(&|s| s.complement)?;
    let isoperimetric = iso_from_tails(mass, complement);
    let s1 = outer(&|s| iso_from_tails(s.mass, s.complement).hypot(s.mass_x))?;
    let s2 = outer(&|s| s.inner_bobkov.hypot(s.mass_x))?;
    let s3 = outer(&|s| s.full)?;

    let direct_lhs = gauss_weighted_integral_2d(
        |x, y| {
            let (h, hx, hy) = g.probit_jet(x, y);
            norm_pdf(h) * (1.0 + hx * hx + hy * hy).sqrt()
        },
        spec,
    )?;
    let direct_mass = gauss_weighted_integral_2d(|x, y| g.value(x, y), spec)?;
    let direct_comp = gauss_weighted_integral_2d(|x, y| g.complement(x, y), spec)?;
    let deficit_2d = direct_lhs - iso_from_tails(direct_mass, direct_comp);

    let slack_marginal = s1 - isoperimetric;
    let slack_inner = s2 - s1;
    let slack_minkowski = s3 - s2;
    Ok(TensorReport {
        isoperimetric,
        s1,
        s2,
        s3,
        slack_marginal,
        slack_inner,
        slack_minkowski,
        total_slack: slack_marginal + slack_inner + slack_minkowski,
        deficit_2d,
    })
}
