//! Standard bivariate normal distribution function.
//!
//! Drezner–Wesolowsky quadrature over the correlation parameter with Genz's
//! double-precision modifications (the `BVND` routine of TVPACK): 20-point
//! Gauss–Legendre in `arcsin ρ` for `|ρ| < 0.925`, and an asymptotic expansion
//! plus correction quadrature in `√(1−ρ²)` for `|ρ|` close to one.

#![allow(clippy::excessive_precision)]

use std::f64::consts::{PI, TAU};

use crate::error::{LabError, Result};
use crate::gauss::norm_cdf;

// (weight, abscissa) pairs on [-1, 0); each abscissa x is used at 1 ± x.
// Genz switches to 6 and 12 points for small |ρ|, which keeps absolute accuracy
// but loses relative accuracy once both limits are deep in the lower tail.
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// `P(X ≤ h, Y ≤ k)` for a standard bivariate normal pair with correlation `rho`.
///
/// `h` and `k` may be infinite. `|rho| ≥ 1` is rejected.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> Result<f64> {
    if h.is_nan() || k.is_nan() {
        return Err(LabError::NonFinite {
            context: "bvn_cdf",
            value: f64::NAN,
        });
    }
    if !(rho.abs() < 1.0) {
        return Err(LabError::Domain {
            context: "bvn_cdf",
            value: rho,
            detail: "correlation must satisfy |rho| < 1".into(),
        });
    }
    Ok(bvn_lower(h, k, rho))
}

/// Unchecked variant of [`bvn_cdf`]; `|rho| < 1` is the caller's responsibility.
pub fn bvn_lower(h: f64, k: f64, rho: f64) -> f64 {
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return norm_cdf(k);
    }
    if k == f64::INFINITY {
        return norm_cdf(h);
    }
    upper_orthant(-h, -k, rho).clamp(0.0, 1.0)
}

/// [`bvn_lower`] for `|rho| ≥ 0.925` with `1 − ρ²` and `|ρ̂k − h|` (`ρ̂ = sign ρ`)
/// supplied by the caller. Near `|ρ| = 1` both lose most of their digits
/// when formed from a rounded `ρ`, and the result is only as accurate as they are.
pub(crate) fn bvn_lower_near_unit(h: f64, k: f64, rho: f64, one_minus_rho_sq: f64, gap: f64) -> f64 {
    debug_assert!(rho.abs() >= 0.925);
    high_correlation(-h, -k, rho, one_minus_rho_sq, gap).clamp(0.0, 1.0)
}

/// `P(X > h, Y > k)`, Genz's `BVND`.
fn upper_orthant(dh: f64, dk: f64, r: f64) -> f64 {
    if r.abs() >= 0.925 {
        let k = if r < 0.0 { -dk } else { dk };
        return high_correlation(dh, dk, r, (1.0 - r) * (1.0 + r), (dh - k).abs());
    }
    let rule = &GL20;
    let (h, k) = (dh, dk);
    let hk = h * k;
    let mut bvn = 0.0;
    if r != 0.0 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        for &(w, x) in rule {
            for node in [1.0 + x, 1.0 - x] {
                let sn = (0.5 * asr * node).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn *= asr / (2.0 * TAU);
    }
    bvn + norm_cdf(-h) * norm_cdf(-k)
}

/// The `|r| ≥ 0.925` branch of `BVND`, with `a_sq = 1 − r²` and `b = |h − k|`
/// (after `k ↦ −k` for negative `r`) passed in.
fn high_correlation(h: f64, dk: f64, r: f64, a_sq: f64, b: f64) -> f64 {
    let rule = &GL20;
    let k = if r < 0.0 { -dk } else { dk };
    let hk = h * k;
    let a = a_sq.sqrt();
    let b_sq = b * b;
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;

    let asr = -0.5 * (b_sq / a_sq + hk);
    let mut bvn = 0.0;
    if asr > -100.0 {
        bvn = a
            * asr.exp()
            * (1.0 - c * (b_sq - a_sq) * (1.0 - d * b_sq / 5.0) / 3.0 + c * d * a_sq * a_sq / 5.0);
    }
    if hk > -160.0 {
        bvn -= (-0.5 * hk).exp()
            * TAU.sqrt()
            * norm_cdf(-b / a)
            * b
            * (1.0 - c * b_sq * (1.0 - d * b_sq / 5.0) / 3.0);
    }
    let half_a = 0.5 * a;
    for &(w, x) in rule {
        for node in [1.0 + x, 1.0 - x] {
            let xs = (half_a * node).powi(2);
            let rs = (1.0 - xs).sqrt();
            let asr = -0.5 * (b_sq / xs + hk);
            if asr > -100.0 {
                bvn += half_a
                    * w
                    * asr.exp()
                    * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                        - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    bvn = -bvn / TAU;

    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            out += if h < 0.0 {
                norm_cdf(k) - norm_cdf(h)
            } else {
                norm_cdf(-h) - norm_cdf(-k)
            };
        }
        out
    }
}

/// Sheppard's closed form for the orthant `P(X ≤ 0, Y ≤ 0)`.
pub fn orthant_probability(rho: f64) -> f64 {
    0.25 + rho.asin() / (2.0 * PI)
}
