//! One-dimensional test functions `f : ℝ → (0, 1)` with analytic derivatives.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::gauss::{iso_from_tails, norm_cdf, norm_pdf, norm_quantile, probit_from_tails};

/// Clamp applied to tabulated values.
pub const TABULATED_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlendComponent {
    pub w: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum TestFunction1D {
    /// `Φ(c₀ + c₁t + c₂t² + c₃t³)`.
    ProbitPoly {
        coeffs: [f64; 4],
    },
    Constant {
        c: f64,
    },
    /// `Σ wᵢ Φ(uᵢt + vᵢ)` with positive weights summing to one.
    Blend {
        components: Vec<BlendComponent>,
    },
    Tabulated(Tabulated),
}

impl TestFunction1D {
    pub fn probit_poly(coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > 4 {
            return Err(LabError::InvalidParameter(format!(
                "probit polynomial needs 1 to 4 coefficients, got {}",
                coeffs.len()
            )));
        }
        let mut c = [0.0; 4];
        c[..coeffs.len()].copy_from_slice(coeffs);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidParameter(
                "non-finite probit coefficient".into(),
            ));
        }
        Ok(Self::ProbitPoly { coeffs: c })
    }

    /// `Φ(ut + v)`.
    pub fn probit_affine(u: f64, v: f64) -> Result<Self> {
        Self::probit_poly(&[v, u])
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(LabError::Domain {
                context: "TestFunction1D::constant",
                value: c,
                detail: "constant must lie strictly inside (0, 1)".into(),
            });
        }
        Ok(Self::Constant { c })
    }

    pub fn blend(components: Vec<BlendComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(LabError::InvalidParameter(
                "blend needs at least one component".into(),
            ));
        }
        let mut total = 0.0;
        for comp in &components {
            if !(comp.w > 0.0) || !comp.u.is_finite() || !comp.v.is_finite() {
                return Err(LabError::InvalidParameter(format!(
                    "blend component {comp:?} needs w > 0 and finite u, v"
                )));
            }
            total += comp.w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidParameter(format!(
                "blend weights sum to {total}, not 1"
            )));
        }
        Ok(Self::Blend { components })
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(Self::Tabulated(Tabulated::new(knots, values)?))
    }

    /// `f(t)`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::ProbitPoly { coeffs } => norm_cdf(horner(coeffs, t)),
            Self::Constant { c } => *c,
            Self::Blend { components } => components
                .iter()
                .map(|b| b.w * norm_cdf(b.u * t + b.v))
                .sum(),
            Self::Tabulated(tab) => tab.eval(t).0,
        }
    }

    /// `1 − f(t)`, computed without cancellation.
    pub fn complement(&self, t: f64) -> f64 {
        match self {
            Self::ProbitPoly { coeffs } => norm_cdf(-horner(coeffs, t)),
            Self::Constant { c } => 1.0 - c,
            Self::Blend { components } => components
                .iter()
                .map(|b| b.w * norm_cdf(-(b.u * t + b.v)))
                .sum(),
            Self::Tabulated(tab) => 1.0 - tab.eval(t).0,
        }
    }

    /// `f′(t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Self::ProbitPoly { coeffs } => {
                norm_pdf(horner(coeffs, t)) * horner_derivative(coeffs, t)
            }
            Self::Constant { .. } => 0.0,
            Self::Blend { components } => components
                .iter()
                .map(|b| b.w * b.u * norm_pdf(b.u * t + b.v))
                .sum(),
            Self::Tabulated(tab) => tab.eval(t).1,
        }
    }

    /// `h(t) = Φ⁻¹(f(t))`.
    pub fn probit(&self, t: f64) -> f64 {
        match self {
            Self::ProbitPoly { coeffs } => horner(coeffs, t),
            Self::Constant { c } => norm_quantile(*c),
            _ => probit_from_tails(self.value(t), self.complement(t)),
        }
    }

    /// `I(f(t))`.
    pub fn iso(&self, t: f64) -> f64 {
        match self {
            Self::ProbitPoly { coeffs } => norm_pdf(horner(coeffs, t)),
            _ => iso_from_tails(self.value(t), self.complement(t)),
        }
    }

    /// `h′(t) = f′(t) / I(f(t))`.
    pub fn probit_derivative(&self, t: f64) -> f64 {
        match self {
            Self::ProbitPoly { coeffs } => horner_derivative(coeffs, t),
            Self::Constant { .. } => 0.0,
            _ => self.derivative(t) / self.iso(t),
        }
    }

    /// `√(I²(f(t)) + f′(t)²)`.
    pub fn bobkov_integrand(&self, t: f64) -> f64 {
        match self {
            Self::ProbitPoly { coeffs } => {
                norm_pdf(horner(coeffs, t)) * horner_derivative(coeffs, t).hypot(1.0)
            }
            _ => self.iso(t).hypot(self.derivative(t)),
        }
    }

    /// Points where the function is only piecewise smooth.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Self::Tabulated(tab) => &tab.knots,
            _ => &[],
        }
    }

    /// Whether the function belongs to the family `Φ(ut + v)` by construction.
    pub fn is_probit_affine(&self) -> bool {
        match self {
            Self::ProbitPoly { coeffs } => coeffs[2] == 0.0 && coeffs[3] == 0.0,
            Self::Constant { .. } => true,
            Self::Blend { components } => components
                .windows(2)
                .all(|w| w[0].u == w[1].u && w[0].v == w[1].v),
            Self::Tabulated(_) => false,
        }
    }

    /// `max |h|` over `[−r, r]`, sampled; used to bound randomized draws.
    pub fn probit_range(&self, r: f64) -> f64 {
        (0..=400)
            .map(|i| self.probit(-r + 2.0 * r * i as f64 / 400.0).abs())
            .fold(0.0, f64::max)
    }
}

fn horner(c: &[f64; 4], t: f64) -> f64 {
    ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
}

fn horner_derivative(c: &[f64; 4], t: f64) -> f64 {
    (3.0 * c[3] * t + 2.0 * c[2]) * t + c[1]
}

/// Monotone piecewise-cubic (Fritsch–Carlson) interpolant of samples, held
/// constant outside the sampled range and clamped to `[ε, 1 − ε]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tabulated {
    knots: Vec<f64>,
    values: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
}

impl Tabulated {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(LabError::SizeMismatch {
                what: "tabulated values",
                got: values.len(),
                expected: knots.len(),
            });
        }
        if knots.len() < 2 {
            return Err(LabError::InvalidParameter(
                "tabulated function needs at least two samples".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(LabError::InvalidParameter(
                "tabulated knots must be finite and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(LabError::InvalidParameter(
                "tabulated values must lie in [0, 1]".into(),
            ));
        }
        let slopes = pchip_slopes(&knots, &values);
        Ok(Self {
            knots,
            values,
            slopes,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(value, derivative)` at `t`.
    fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.knots.len();
        let (raw, slope) = if t <= self.knots[0] {
            (self.values[0], 0.0)
        } else if t >= self.knots[n - 1] {
            (self.values[n - 1], 0.0)
        } else {
            let k = self.knots.partition_point(|&s| s <= t) - 1;
            let h = self.knots[k + 1] - self.knots[k];
            let s = (t - self.knots[k]) / h;
            let (y0, y1) = (self.values[k], self.values[k + 1]);
            let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
            let s2 = s * s;
            let s3 = s2 * s;
            let value = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
                + (s3 - 2.0 * s2 + s) * h * d0
                + (-2.0 * s3 + 3.0 * s2) * y1
                + (s3 - s2) * h * d1;
            let deriv = (6.0 * s2 - 6.0 * s) * (y0 - y1) / h
                + (3.0 * s2 - 4.0 * s + 1.0) * d0
                + (3.0 * s2 - 2.0 * s) * d1;
            (value, deriv)
        };
        if raw < TABULATED_EPS {
            (TABULATED_EPS, 0.0)
        } else if raw > 1.0 - TABULATED_EPS {
            (1.0 - TABULATED_EPS, 0.0)
        } else {
            (raw, slope)
        }
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

// One-sided three-point end slope, limited to preserve shape.
fn pchip_end(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

fn parse_numbers(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>().map_err(|e| LabError::Parse {
                token: tok.to_string(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn parse_error(token: &str, reason: impl Into<String>) -> LabError {
    LabError::Parse {
        token: token.to_string(),
        reason: reason.into(),
    }
}

/// Grammar: `probit-poly:c0,c1[,c2,c3]`, `const:c`, `blend:w1,u1,v1;w2,u2,v2;…`,
/// `tabulated:t0,x0;t1,x1;…`.
impl FromStr for TestFunction1D {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| parse_error(s, "expected `<family>:<parameters>`"))?;
        match kind.trim() {
            "probit-poly" => {
                let c = parse_numbers(body)?;
                if !(2..=4).contains(&c.len()) {
                    return Err(parse_error(body, "probit-poly takes 2 to 4 coefficients"));
                }
                Self::probit_poly(&c)
            }
            "const" => {
                let c = parse_numbers(body)?;
                if c.len() != 1 {
                    return Err(parse_error(body, "const takes exactly one value"));
                }
                Self::constant(c[0]).map_err(|e| parse_error(body, e.to_string()))
            }
            "blend" => {
                let mut comps = Vec::new();
                for part in body.split(';') {
                    let v = parse_numbers(part)?;
                    if v.len() != 3 {
                        return Err(parse_error(part, "blend components are `w,u,v`"));
                    }
                    comps.push(BlendComponent {
                        w: v[0],
                        u: v[1],
                        v: v[2],
                    });
                }
                Self::blend(comps).map_err(|e| parse_error(body, e.to_string()))
            }
            "tabulated" => {
                let (mut knots, mut values) = (Vec::new(), Vec::new());
                for part in body.split(';') {
                    let v = parse_numbers(part)?;
                    if v.len() != 2 {
                        return Err(parse_error(part, "tabulated samples are `t,x`"));
                    }
                    knots.push(v[0]);
                    values.push(v[1]);
                }
                Self::tabulated(knots, values).map_err(|e| parse_error(body, e.to_string()))
            }
            other => Err(parse_error(
                other,
                "unknown family (probit-poly, const, blend, tabulated)",
            )),
        }
    }
}

impl fmt::Display for TestFunction1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ProbitPoly { coeffs } => {
                let used = if coeffs[3] != 0.0 {
                    4
                } else if coeffs[2] != 0.0 {
                    3
                } else {
                    2
                };
                let parts: Vec<String> = coeffs[..used].iter().map(|c| c.to_string()).collect();
                write!(f, "probit-poly:{}", parts.join(","))
            }
            Self::Constant { c } => write!(f, "const:{c}"),
            Self::Blend { components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|b| format!("{},{},{}", b.w, b.u, b.v))
                    .collect();
                write!(f, "blend:{}", parts.join(";"))
            }
            Self::Tabulated(tab) => {
                let parts: Vec<String> = tab
                    .knots
                    .iter()
                    .zip(&tab.values)
                    .map(|(t, x)| format!("{t},{x}"))
                    .collect();
                write!(f, "tabulated:{}", parts.join(";"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in [
            "probit-poly:-0.2,0.7",
            "probit-poly:-1,0,1",
            "const:0.3",
            "blend:0.25,1,0;0.75,-0.5,0.2",
        ] {
            let f: TestFunction1D = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
    }

    #[test]
    fn parse_reports_offending_token() {
        match "probit-poly:1,zz".parse::<TestFunction1D>() {
            Err(LabError::Parse { token, .. }) => assert_eq!(token, "zz"),
            other => panic!("{other:?}"),
        }
        assert!("const:1.5".parse::<TestFunction1D>().is_err());
        assert!("blend:0.5,1,0;0.4,1,1".parse::<TestFunction1D>().is_err());
        assert!("wobble:1".parse::<TestFunction1D>().is_err());
    }

    #[test]
    fn derivatives_match_difference_quotients() {
        let fs = [
            "probit-poly:0.1,0.4,-0.05,0.002"
                .parse::<TestFunction1D>()
                .unwrap(),
            "blend:0.3,1.2,-0.5;0.7,-0.3,0.4".parse().unwrap(),
        ];
        for f in &fs {
            for &t in &[-2.0, -0.3, 0.8, 2.5] {
                let h = 1e-6;
                let fd = (f.value(t + h) - f.value(t - h)) / (2.0 * h);
                assert!((fd - f.derivative(t)).abs() < 1e-8);
                assert!((f.value(t) + f.complement(t) - 1.0).abs() < 1e-15);
                assert!((norm_cdf(f.probit(t)) - f.value(t)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pchip_reproduces_samples_and_stays_monotone() {
        let knots: Vec<f64> = (0..9).map(|i| -2.0 + 0.5 * i as f64).collect();
        let values: Vec<f64> = knots.iter().map(|&t| norm_cdf(0.8 * t)).collect();
        let f = TestFunction1D::tabulated(knots.clone(), values.clone()).unwrap();
        for (t, x) in knots.iter().zip(&values) {
            assert!((f.value(*t) - x).abs() < 1e-15);
        }
        let mut prev = 0.0;
        for i in 0..=400 {
            let t = -2.0 + 4.0 * i as f64 / 400.0;
            let v = f.value(t);
            assert!(v >= prev);
            assert!(f.derivative(t) >= 0.0);
            prev = v;
        }
        assert_eq!(f.value(-5.0), values[0]);
        assert_eq!(f.derivative(5.0), 0.0);
    }

    #[test]
    fn tabulated_clamps() {
        let f = TestFunction1D::tabulated(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(f.value(-1.0), TABULATED_EPS);
        assert_eq!(f.value(2.0), 1.0 - TABULATED_EPS);
    }

    #[test]
    fn affine_classification() {
        assert!("probit-poly:0.3,1.1"
            .parse::<TestFunction1D>()
            .unwrap()
            .is_probit_affine());
        assert!(!"probit-poly:0.3,1.1,0.01"
            .parse::<TestFunction1D>()
            .unwrap()
            .is_probit_affine());
        assert!("const:0.4"
            .parse::<TestFunction1D>()
            .unwrap()
            .is_probit_affine());
        assert!(!"blend:0.5,1,0;0.5,1,1"
            .parse::<TestFunction1D>()
            .unwrap()
            .is_probit_affine());
    }
}
