//! Gauss–Legendre rules and a panel-adaptive integrator for complex integrands.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

use crate::arith::KahanSum;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge within {budget} panels on [{a}, {b}]")]
    NonConvergent { a: f64, b: f64, budget: usize },
    #[error("integration interval [{0}, {1}] is not finite")]
    BadInterval(f64, f64),
}

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `n` points, nodes found by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Apply the rule on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, mut f: F) -> Complex64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += *w * f(mid + half * x);
        }
        acc * half
    }

    pub fn integrate_real<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Rule applied on `[a, b]` to `f` and to `|f|` with shared evaluations.
fn panel<F: Fn(f64) -> Complex64>(g: &GaussLegendre, a: f64, b: f64, f: &F) -> (Complex64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    for (x, w) in g.nodes.iter().zip(&g.weights) {
        let v = f(mid + half * x);
        acc += *w * v;
        abs += w * v.norm();
    }
    (acc * half, abs * half)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn rule8() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(8))
}

pub fn rule20() -> &'static GaussLegendre {
    static R: OnceLock<GaussLegendre> = OnceLock::new();
    R.get_or_init(|| GaussLegendre::new(20))
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Upper bound on the width of any panel.
    pub max_panel_width: f64,
    /// Target error relative to `∫|f|`.
    pub rel_tol: f64,
    pub panel_budget: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            max_panel_width: f64::INFINITY,
            rel_tol: 1e-10,
            panel_budget: 1_000_000,
        }
    }
}

impl QuadOptions {
    /// Panels no wider than an eighth of the period of `e(freq·x)`.
    pub fn oscillatory(freq: f64) -> Self {
        let mut o = QuadOptions::default();
        if freq != 0.0 {
            o.max_panel_width = 1.0 / (8.0 * freq.abs());
        }
        o
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    /// Estimate of `∫|f|`, the scale for the relative error.
    pub abs_integral: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

/// Adaptive composite Gauss–Legendre integration of `f` over `[a, b]`.
///
/// Each panel is accepted when the 8-point rule on the panel agrees with the
/// 8-point rule on its two halves to within the panel's share of
/// `rel_tol · ∫|f|`.
pub fn integrate<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(QuadError::BadInterval(a, b));
    }
    if a == b {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            abs_integral: 0.0,
            error_estimate: 0.0,
            panels: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let width = hi - lo;
    let n0 = (width / opts.max_panel_width).ceil().max(1.0);
    if n0 > opts.panel_budget as f64 {
        return Err(QuadError::NonConvergent {
            a,
            b,
            budget: opts.panel_budget,
        });
    }
    let n0 = n0 as usize;
    let h = width / n0 as f64;
    let g = rule8();

    // The L1 scale starts from the coarse pass and is refined as panels split.
    let mut l1 = 0.0;
    let mut stack: Vec<(f64, f64, Complex64, f64)> = Vec::with_capacity(n0);
    for i in (0..n0).rev() {
        let pa = lo + i as f64 * h;
        let pb = if i + 1 == n0 { hi } else { pa + h };
        let (v, abs) = panel(g, pa, pb, &f);
        l1 += abs;
        stack.push((pa, pb, v, abs));
    }

    let mut total = KahanSum::new();
    let mut err = 0.0;
    let mut panels = 0usize;
    while let Some((pa, pb, whole, whole_abs)) = stack.pop() {
        panels += 1;
        if panels > opts.panel_budget {
            return Err(QuadError::NonConvergent {
                a,
                b,
                budget: opts.panel_budget,
            });
        }
        let mid = 0.5 * (pa + pb);
        let (left, left_abs) = panel(g, pa, mid, &f);
        let (right, right_abs) = panel(g, mid, pb, &f);
        l1 += left_abs + right_abs - whole_abs;
        let diff = (left + right - whole).norm();
        let share = opts.rel_tol * l1 * (pb - pa) / width;
        if diff <= share || (pb - pa) <= 1e-12 * width.max(1.0) {
            total.add(left + right);
            err += diff;
        } else {
            stack.push((mid, pb, right, right_abs));
            stack.push((pa, mid, left, left_abs));
        }
    }
    Ok(QuadResult {
        value: sign * total.value(),
        abs_integral: l1,
        error_estimate: err,
        panels,
    })
}

/// Real-valued convenience wrapper around [`integrate`].
pub fn integrate_real<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<f64, QuadError> {
    integrate(|x| Complex64::new(f(x), 0.0), a, b, opts).map(|r| r.value.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        let g = GaussLegendre::new(8);
        let w: f64 = g.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
        // degree 15 is exact for 8 points
        let v = g.integrate_real(0.0, 1.0, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-15);
        let g20 = GaussLegendre::new(20);
        let v = g20.integrate_real(-1.0, 1.0, |x| x.powi(38));
        assert!((v - 2.0 / 39.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_oscillatory() {
        let freq = 37.5;
        let opts = QuadOptions::oscillatory(freq);
        let r = integrate(|x| crate::arith::e(-freq * x), 0.0, 1.0, &opts).unwrap();
        // ∫_0^1 e(-fx) dx = (1 - e(-f)) / (2πi f)
        let exact = (Complex64::new(1.0, 0.0) - crate::arith::e(-freq))
            / Complex64::new(0.0, 2.0 * PI * freq);
        assert!((r.value - exact).norm() < 1e-13);
    }

    #[test]
    fn adaptive_peaked() {
        let opts = QuadOptions::default();
        let v = integrate_real(|x| (-(x * 200.0).powi(2)).exp(), -1.0, 1.0, &opts).unwrap();
        assert!((v - PI.sqrt() / 200.0).abs() < 1e-14);
    }

    #[test]
    fn reversed_interval() {
        let opts = QuadOptions::default();
        let v = integrate_real(|x| x, 1.0, 0.0, &opts).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
    }
}
