#![allow(dead_code)]

/// Central difference of `f` at `x` with step `h·max(1, |x|)`.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let step = h * x.abs().max(1.0);
    (f(x + step) - f(x - step)) / (2.0 * step)
}

pub fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(f64::MIN_POSITIVE)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Step scale for the `y` coordinate: distance to the nearer end of `(0, Φ(t))`.
pub fn y_scale(t: f64, y: f64) -> f64 {
    y.min(bobkov_core::gauss::norm_cdf(t) - y)
}

/// Central difference in `y` with step `h·y_scale(t, y)`.
pub fn central_diff_y<F: Fn(f64) -> f64>(f: F, t: f64, y: f64, h: f64) -> f64 {
    let step = h * y_scale(t, y);
    (f(y + step) - f(y - step)) / (2.0 * step)
}

/// Seeded domain points `(t, p, λΦ(t))` with `t, p ∈ [−2, 2]`, `λ ∈ [0.1, 0.9]`.
pub fn random_points(seed: u64, n: usize) -> Vec<(f64, f64, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = rng.gen_range(-2.0..2.0);
            let p = rng.gen_range(-2.0..2.0);
            let lam: f64 = rng.gen_range(0.1..0.9);
            (t, p, lam * bobkov_core::gauss::norm_cdf(t))
        })
        .collect()
}
