//! Running mass `y(t) = ∫_{−∞}^t f dγ` with checkpoints.

use crate::error::Result;
use crate::gauss::norm_pdf;
use crate::quadrature::{gk15, interval_cuts, Integration, QuadratureSpec};

use super::TestFunction1D;

/// Spacing of the checkpoint grid.
const STEP: f64 = 0.125;

/// The sweep starts this far below the tail cutoff, so that `y(t)` keeps its
/// relative accuracy for `t` near `−tail_cutoff`.
const EXTRA_TAIL: f64 = 4.0;

pub struct RunningMass<'a> {
    f: &'a TestFunction1D,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl<'a> RunningMass<'a> {
    /// Cumulative integrals at checkpoints from `−(tail_cutoff + 4)` up to `upper`.
    /// Breakpoints of `f` are checkpoints, so every cell is smooth.
    pub fn new(f: &'a TestFunction1D, upper: f64, spec: &QuadratureSpec) -> Result<Self> {
        let start = -(spec.tail_cutoff + EXTRA_TAIL);
        let end = upper.max(start + STEP);
        let count = ((end - start) / STEP).ceil() as usize;
        let regular: Vec<f64> = (1..count).map(|i| start + STEP * i as f64).collect();
        let mut nodes = interval_cuts(start, end, &regular);
        nodes = interval_cuts(start, end, &[nodes, f.breakpoints().to_vec()].concat());

        let integrand = |s: f64| f.value(s) * norm_pdf(s);
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in nodes.windows(2) {
            acc += cell_integral(&integrand, w[0], w[1], spec)?;
            cumulative.push(acc);
        }
        Ok(Self {
            f,
            nodes,
            cumulative,
        })
    }

    /// `∫_{−∞}^t f dγ`.
    pub fn at(&self, t: f64) -> f64 {
        let integrand = |s: f64| self.f.value(s) * norm_pdf(s);
        if t <= self.nodes[0] {
            return 0.0;
        }
        let k = self.nodes.partition_point(|&s| s <= t) - 1;
        let base = self.cumulative[k];
        let from = self.nodes[k];
        if t == from {
            return base;
        }
        if k + 1 == self.nodes.len() {
            // Past the last checkpoint: integrate the remainder piece by piece.
            let cuts = interval_cuts(from, t, self.f.breakpoints());
            return base
                + cuts
                    .windows(2)
                    .map(|w| gk15(&integrand, w[0], w[1]).value)
                    .sum::<f64>();
        }
        base + gk15(&integrand, from, t).value
    }
}

fn cell_integral<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    // Relative accuracy per cell; absolute tolerance is irrelevant this deep in the tail.
    let local = QuadratureSpec {
        abs_tol: f64::MIN_POSITIVE,
        rel_tol: 1e-13,
        ..*spec
    };
    let Integration { value, .. } = crate::quadrature::integrate_detailed(g, a, b, &local)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::norm_cdf;
    use crate::quadrature::halfspace_mass_closed_form;

    #[test]
    fn matches_closed_form_for_probit_affine() {
        let (u, v) = (0.4, -0.2);
        let f = TestFunction1D::probit_affine(u, v).unwrap();
        let spec = QuadratureSpec::default();
        let rm = RunningMass::new(&f, 8.0, &spec).unwrap();
        for &t in &[-8.0, -6.3, -1.01, 0.0, 2.7, 8.0] {
            let exact = halfspace_mass_closed_form(t, u * t + v, u);
            let got = rm.at(t);
            assert!(
                ((got - exact) / exact).abs() < 1e-9,
                "t={t}: {got:e} vs {exact:e}"
            );
        }
    }

    #[test]
    fn constant_gives_scaled_cdf() {
        let f = TestFunction1D::constant(0.4).unwrap();
        let rm = RunningMass::new(&f, 3.0, &QuadratureSpec::default()).unwrap();
        for &t in &[-7.0, -2.0, 0.3, 3.0, 4.5] {
            let exact = 0.4 * norm_cdf(t);
            assert!(((rm.at(t) - exact) / exact).abs() < 1e-12, "t={t}");
        }
    }
}
