//! Scalar Gaussian special functions: density, distribution function, quantile,
//! and the isoperimetric profile `I(x) = φ(Φ⁻¹(x))`.
//!
//! The `norm_*` kernels are infallible and return `NaN` outside their domain;
//! they are what the rest of the crate calls in inner loops. The checked
//! wrappers (`pdf`, `cdf`, `inv_cdf`, `iso_profile`) validate their arguments.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::error::{ensure_finite, LabError, Result};

#[allow(clippy::excessive_precision)]
pub const FRAC_1_SQRT_2PI: f64 =
    0.398_942_280_401_432_677_939_946_059_934_381_868_475_858_631_164_9;

/// Inputs closer than this to `0` or `1` are rejected by [`iso_profile`].
pub const PROFILE_BOUNDARY_GUARD: f64 = 1e-15;

/// A probability strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(LabError::Domain {
                context: "Probability",
                value,
                detail: "must lie strictly inside (0, 1)".into(),
            })
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 − p`, exact for `p ≥ 1/2`.
    #[inline]
    pub fn complement(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = LabError;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function, via `erfc` so that the lower tail
/// keeps full relative precision.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 − Φ(z)`, computed without cancellation.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    norm_cdf(-z)
}

/// Standard normal quantile: AS241 (PPND16) rational approximation refined
/// by one Newton step against [`norm_cdf`]. Returns `NaN` outside `(0, 1)`.
pub fn norm_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    if p > 0.5 {
        // 1 − p is exact here (Sterbenz).
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

/// Quantile for `p ≤ 1/2`, where the residual `Φ(x) − p` has full relative precision.
fn lower_quantile(p: f64) -> f64 {
    let x0 = as241(p);
    let density = norm_pdf(x0);
    if density > 0.0 && density.is_finite() {
        x0 - (norm_cdf(x0) - p) / density
    } else {
        x0
    }
}

#[allow(clippy::excessive_precision)]
fn as241(p: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;

    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083_0e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061_0e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561_0e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_90e0,
        5.769_497_221_460_691_405_50e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_70e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_40e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_40e0,
        6.897_673_349_851_000_045_50e-1,
        1.481_039_764_274_800_745_90e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946_00e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20e0,
        5.463_784_911_164_114_369_90e0,
        1.784_826_539_917_291_335_80e0,
        2.965_605_718_285_048_912_30e-1,
        2.653_218_952_657_612_309_30e-2,
        1.242_660_947_388_078_438_60e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90e-1,
        1.369_298_809_227_358_053_10e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591_00e-4,
        1.846_318_317_510_054_681_80e-5,
        1.421_511_758_316_445_888_70e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn ratio(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
        let n = num.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        let d = den.iter().rev().fold(0.0, |acc, &c| acc * r + c);
        n / d
    }

    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        let r = CONST1 - q * q;
        return q * ratio(&A, &B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= SPLIT2 {
        r -= CONST2;
        ratio(&C, &D, r)
    } else {
        r -= SPLIT2;
        ratio(&E, &F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Probit of a value given both its lower tail `x` and upper tail `1 − x`,
/// each computed independently. Uses the smaller one; saturates to `±∞`.
pub fn probit_from_tails(lower: f64, upper: f64) -> f64 {
    if lower <= upper {
        if lower <= 0.0 {
            f64::NEG_INFINITY
        } else {
            norm_quantile(lower)
        }
    } else if upper <= 0.0 {
        f64::INFINITY
    } else {
        -norm_quantile(upper)
    }
}

/// `I(x)` from both tails of `x`; returns `0` when the smaller tail underflows.
pub fn iso_from_tails(lower: f64, upper: f64) -> f64 {
    let tail = lower.min(upper);
    if tail <= 0.0 {
        0.0
    } else {
        norm_pdf(norm_quantile(tail))
    }
}

/// `∫_{−∞}^q Φ(u) du = φ(q) + qΦ(q)`, positive for every real `q`.
///
/// For `q ≤ −2` the two terms cancel; there the Mills-ratio continued
/// fraction gives the result as `φ(q)·c/(|q| + c)` without subtraction.
pub fn integrated_cdf(q: f64) -> f64 {
    if q > -2.0 {
        return norm_pdf(q) + q * norm_cdf(q);
    }
    let x = -q;
    let mut c = 0.0;
    for k in (2..=100).rev() {
        c = k as f64 / (x + c);
    }
    c = 1.0 / (x + c);
    norm_pdf(x) * c / (x + c)
}

/// Checked density.
pub fn pdf(z: f64) -> Result<f64> {
    Ok(norm_pdf(ensure_finite("pdf", z)?))
}

/// Checked distribution function.
pub fn cdf(z: f64) -> Result<f64> {
    Ok(norm_cdf(ensure_finite("cdf", z)?))
}

pub fn inv_cdf(p: Probability) -> f64 {
    norm_quantile(p.value())
}

/// Isoperimetric profile `I(x) = φ(Φ⁻¹(x))`.
///
/// Inputs with `min(x, 1 − x) < 1e-15` are rejected instead of clamped.
pub fn iso_profile(x: Probability) -> Result<f64> {
    let tail = x.value().min(x.complement());
    if tail < PROFILE_BOUNDARY_GUARD {
        return Err(LabError::Domain {
            context: "iso_profile",
            value: x.value(),
            detail: format!("within {PROFILE_BOUNDARY_GUARD:e} of the boundary"),
        });
    }
    Ok(norm_pdf(norm_quantile(tail)))
}
