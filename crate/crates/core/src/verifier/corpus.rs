//! Seeded random test-function corpora and domain-point samples.
//!
//! Every draw keeps its probit within `|h| ≤ 4` on `[−8.5, 8.5]` (or the
//! square, in 2D). Non-affine members carry enough curvature or component
//! separation that their deficit is far from zero, so the equality
//! classification has a clear margin on both sides.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gauss::{norm_cdf, norm_quantile, Probability};
use crate::slope::{solve_slope, SlopeQuery, DEFAULT_SLOPE_TOL};

use super::functions::{BlendComponent, TestFunction1D};
use super::tensor::TestFunction2D;

const PROBIT_BOUND: f64 = 4.0;
const RANGE: f64 = 8.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusEntry {
    pub id: String,
    pub function: TestFunction1D,
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn affine(rng: &mut ChaCha8Rng) -> TestFunction1D {
    let u = rng.gen_range(-0.4..0.4);
    let room = PROBIT_BOUND - RANGE * f64::abs(u);
    let v = rng.gen_range(-room..room) * 0.9;
    TestFunction1D::probit_affine(u, v).expect("finite coefficients")
}

fn bounded(
    rng: &mut ChaCha8Rng,
    draw: impl Fn(&mut ChaCha8Rng) -> TestFunction1D,
) -> TestFunction1D {
    loop {
        let f = draw(rng);
        if f.probit_range(RANGE) <= PROBIT_BOUND {
            return f;
        }
    }
}

fn quadratic(rng: &mut ChaCha8Rng) -> TestFunction1D {
    bounded(rng, |r| {
        let c = [
            r.gen_range(-0.5..0.5),
            r.gen_range(-0.15..0.15),
            signed(r, 0.01, 0.035),
        ];
        TestFunction1D::probit_poly(&c).expect("finite")
    })
}

fn cubic(rng: &mut ChaCha8Rng) -> TestFunction1D {
    bounded(rng, |r| {
        let c = [
            r.gen_range(-0.5..0.5),
            r.gen_range(-0.3..0.3),
            r.gen_range(-0.02..0.02),
            signed(r, 0.001, 0.004),
        ];
        TestFunction1D::probit_poly(&c).expect("finite")
    })
}

fn blend(rng: &mut ChaCha8Rng) -> TestFunction1D {
    // Slopes are stratified over [−0.4, 0.4], so neighbouring components differ
    // in u by at least half a stratum.
    let k = rng.gen_range(2..=3);
    let width = 0.8 / k as f64;
    let mut comps: Vec<BlendComponent> = (0..k)
        .map(|i| {
            let u: f64 = -0.4 + width * (i as f64 + 0.25 + 0.5 * rng.gen::<f64>());
            let room = PROBIT_BOUND - RANGE * u.abs();
            let v = rng.gen_range(-room..room) * 0.9;
            BlendComponent {
                w: rng.gen_range(0.2..1.0),
                u,
                v,
            }
        })
        .collect();
    let total: f64 = comps.iter().map(|c| c.w).sum();
    for c in &mut comps {
        c.w /= total;
    }
    // Renormalize exactly so the weights pass the sum check.
    let rest: f64 = comps[1..].iter().map(|c| c.w).sum();
    comps[0].w = 1.0 - rest;
    TestFunction1D::blend(comps).expect("valid blend")
}

fn tabulated(rng: &mut ChaCha8Rng) -> TestFunction1D {
    let source = quadratic(rng);
    let knots: Vec<f64> = (0..=34).map(|i| -RANGE + 0.5 * i as f64).collect();
    let values: Vec<f64> = knots.iter().map(|&t| source.value(t)).collect();
    TestFunction1D::tabulated(knots, values).expect("valid samples")
}

/// Mixed corpus: per block of ten, three probit-affine, one constant, two
/// quadratic and one cubic probit, two blends and one tabulated function.
pub fn random_corpus(seed: u64, n: usize) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let function = match i % 10 {
                0..=2 => affine(&mut rng),
                3 => TestFunction1D::constant(rng.gen_range(0.05..0.95)).expect("inside (0,1)"),
                4 | 5 => quadratic(&mut rng),
                6 => cubic(&mut rng),
                7 | 8 => blend(&mut rng),
                _ => tabulated(&mut rng),
            };
            CorpusEntry {
                id: format!("f{i:03}"),
                function,
            }
        })
        .collect()
}

/// Alternating probit-affine and blend functions.
pub fn endpoint_sample(seed: u64, n: usize) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let function = if i % 2 == 0 {
                affine(&mut rng)
            } else {
                blend(&mut rng)
            };
            CorpusEntry {
                id: format!("e{i:03}"),
                function,
            }
        })
        .collect()
}

/// Half probit-affine, half probit-separable with non-affine `v`.
pub fn random_corpus_2d(seed: u64, n: usize) -> Vec<(String, TestFunction2D)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..=68).map(|i| -RANGE + 0.25 * i as f64).collect();
    (0..n)
        .map(|i| {
            let g = if i % 2 == 0 {
                let alpha: f64 = rng.gen_range(-0.25..0.25);
                let beta: f64 = rng.gen_range(-0.2..0.2);
                let room = PROBIT_BOUND - RANGE * (alpha.abs() + beta.abs());
                let c = rng.gen_range(-room..room) * 0.9;
                TestFunction2D::probit_affine(alpha, beta, c).expect("finite")
            } else {
                loop {
                    let u = vec![rng.gen_range(-0.25..0.25), rng.gen_range(-0.02..0.02)];
                    let v = vec![
                        rng.gen_range(-0.4..0.4),
                        rng.gen_range(-0.1..0.1),
                        signed(&mut rng, 0.01, 0.02),
                    ];
                    let ok = grid.iter().all(|&x| {
                        let ux = u[0] + u[1] * x;
                        let vx = v[0] + v[1] * x + v[2] * x * x;
                        RANGE * ux.abs() + vx.abs() <= PROBIT_BOUND
                    });
                    if ok {
                        break TestFunction2D::probit_separable(u, v).expect("finite");
                    }
                }
            };
            (format!("g{i:03}"), g)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainSample {
    pub t: f64,
    pub x: f64,
    pub lambda: f64,
    pub y: f64,
}

/// Domain points `(t, x, y = λΦ(t))` with `t ∈ [−2, 2]`, `x ∈ [0.05, 0.95]`,
/// `λ ∈ [0.1, 0.9]`, keeping only those whose optimal velocity `aφ(Φ⁻¹(x))`
/// has magnitude at most `max_velocity`.
pub fn domain_point_sample(seed: u64, n: usize, max_velocity: f64) -> Vec<DomainSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let t = rng.gen_range(-2.0..2.0);
        let x: f64 = rng.gen_range(0.05..0.95);
        let lambda = rng.gen_range(0.1..0.9);
        let y = lambda * norm_cdf(t);
        let p = norm_quantile(Probability::new(x).expect("inside (0,1)").value());
        let Ok(q) = SlopeQuery::new(t, p, y) else {
            continue;
        };
        let Ok(sol) = solve_slope(&q, DEFAULT_SLOPE_TOL) else {
            continue;
        };
        if (sol.a * crate::gauss::norm_pdf(p)).abs() <= max_velocity {
            out.push(DomainSample { t, x, lambda, y });
        }
    }
    out
}
