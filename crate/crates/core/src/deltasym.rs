//! The delta-symbol expansion
//!
//! ```text
//! δ(n = 0) = (1/C) Σ_{c,d ≥ 1} (cd)^{-1} S(0,n;c) F(cd/C, n/(cdC)),
//! F(x, y)  = C (Σ_c W(c/C))^{-1} (W(x)U(x)U(y) − W(y)U(x)U(y)),
//! ```
//!
//! with `U` even, equal to 1 on `[−2, 2]` and supported in `[−S, S]`, and
//! `W` a non-negative bump supported in `[−2,−1] ∪ [1,2]`.

use std::sync::OnceLock;

use thiserror::Error;

use crate::arith::KahanSum;
use crate::charsums::ramanujan_sum;
use crate::quad::GaussLegendre;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeltaError {
    #[error("no integer c has W(c/C) > 0 for C = {0}")]
    NormalizerVanishes(f64),
    #[error("scale C = {0} must exceed 2")]
    ScaleTooSmall(f64),
    #[error("U support {0} must exceed 2")]
    BadSupport(f64),
    #[error("W support [{0}, {1}] must lie inside [1, 2]")]
    BadBumpInterval(f64, f64),
    #[error("delta sum for n = {n} needs more than {budget} terms")]
    TruncationIncomplete { n: i64, budget: usize },
}

pub const TERM_BUDGET: usize = 10_000_000;

/// `exp(−1/(1−t²))` on `(−1, 1)`, zero outside.
pub fn standard_bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Cells in the cumulative table of the standard bump.
const STEP_CELLS: usize = 1024;

fn cumulative_table() -> &'static [f64] {
    static T: OnceLock<Vec<f64>> = OnceLock::new();
    T.get_or_init(|| {
        let g = GaussLegendre::new(12);
        let h = 2.0 / STEP_CELLS as f64;
        let mut acc = KahanSum::new();
        let mut out = Vec::with_capacity(STEP_CELLS + 1);
        out.push(0.0);
        for i in 0..STEP_CELLS {
            let a = -1.0 + i as f64 * h;
            acc.add_real(g.integrate_real(a, a + h, standard_bump));
            out.push(acc.value().re);
        }
        out
    })
}

/// `∫_{-1}^{t} exp(−1/(1−s²)) ds`: table lookup plus one short Gauss–Legendre panel.
fn cumulative_bump(t: f64) -> f64 {
    let table = cumulative_table();
    if t <= -1.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return table[STEP_CELLS];
    }
    let h = 2.0 / STEP_CELLS as f64;
    let k = (((t + 1.0) / h).floor() as usize).min(STEP_CELLS - 1);
    let a = -1.0 + k as f64 * h;
    table[k] + crate::quad::rule8().integrate_real(a, t, standard_bump)
}

fn bump_mass() -> f64 {
    cumulative_table()[STEP_CELLS]
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, the normalized running
/// integral of the standard bump in between.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else if s > 0.5 {
        // Integrate the short side for accuracy near 1.
        1.0 - cumulative_bump(1.0 - 2.0 * s) / bump_mass()
    } else {
        cumulative_bump(2.0 * s - 1.0) / bump_mass()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BumpKind {
    /// Even, 1 on `[−2, 2]`, vanishing outside `[−S, S]`.
    U { support: f64 },
    /// Even, `u(|x|)` with `u` a bump on `[lo, hi] ⊂ [1, 2]`.
    W { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpFunction {
    kind: BumpKind,
}

impl BumpFunction {
    pub fn u_type(support: f64) -> Result<Self, DeltaError> {
        if !(support > 2.0) {
            return Err(DeltaError::BadSupport(support));
        }
        Ok(BumpFunction {
            kind: BumpKind::U { support },
        })
    }

    pub fn w_type() -> Self {
        BumpFunction {
            kind: BumpKind::W { lo: 1.0, hi: 2.0 },
        }
    }

    /// W-type bump with support `[lo, hi] ⊂ [1, 2]`.
    pub fn w_type_on(lo: f64, hi: f64) -> Result<Self, DeltaError> {
        if !(1.0 <= lo && lo < hi && hi <= 2.0) {
            return Err(DeltaError::BadBumpInterval(lo, hi));
        }
        Ok(BumpFunction {
            kind: BumpKind::W { lo, hi },
        })
    }

    pub fn kind(&self) -> BumpKind {
        self.kind
    }

    /// Half-width of the support.
    pub fn support(&self) -> f64 {
        match self.kind {
            BumpKind::U { support } => support,
            BumpKind::W { hi, .. } => hi,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        match self.kind {
            BumpKind::U { support } => {
                if ax <= 2.0 {
                    1.0
                } else if ax >= support {
                    0.0
                } else {
                    1.0 - smooth_step((ax - 2.0) / (support - 2.0))
                }
            }
            BumpKind::W { lo, hi } => {
                if ax <= lo || ax >= hi {
                    0.0
                } else {
                    standard_bump(2.0 * (ax - lo) / (hi - lo) - 1.0)
                }
            }
        }
    }
}

/// The function `F` of the expansion, with its normalizer cached.
#[derive(Debug, Clone)]
pub struct DeltaExpansion {
    c: f64,
    w: BumpFunction,
    u: BumpFunction,
    normalizer: f64,
}

impl DeltaExpansion {
    /// Default bumps: `U` with `S = 4`, `W` on `[1, 2]`.
    pub fn new(c: f64) -> Result<Self, DeltaError> {
        Self::with_bumps(c, BumpFunction::w_type(), BumpFunction::u_type(4.0)?)
    }

    pub fn with_bumps(c: f64, w: BumpFunction, u: BumpFunction) -> Result<Self, DeltaError> {
        if !(c > 2.0) {
            return Err(DeltaError::ScaleTooSmall(c));
        }
        assert!(matches!(w.kind, BumpKind::W { .. }), "first bump must be W-type");
        assert!(matches!(u.kind, BumpKind::U { .. }), "second bump must be U-type");
        let hi = (w.support() * c).ceil() as u64;
        let normalizer: f64 = (1..=hi).map(|k| w.eval(k as f64 / c)).sum();
        if normalizer <= 0.0 {
            return Err(DeltaError::NormalizerVanishes(c));
        }
        Ok(DeltaExpansion { c, w, u, normalizer })
    }

    pub fn scale(&self) -> f64 {
        self.c
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn u(&self) -> &BumpFunction {
        &self.u
    }

    pub fn w(&self) -> &BumpFunction {
        &self.w
    }

    /// `C / Σ_c W(c/C)`.
    pub fn prefactor(&self) -> f64 {
        self.c / self.normalizer
    }

    pub fn f_eval(&self, x: f64, y: f64) -> f64 {
        let ux = self.u.eval(x);
        if ux == 0.0 {
            return 0.0;
        }
        let uy = self.u.eval(y);
        if uy == 0.0 {
            return 0.0;
        }
        self.prefactor() * ux * uy * (self.w.eval(x) - self.w.eval(y))
    }

    /// The separated pieces `F(x, y) = F₁(x)U₁(y) + F₂(x)U₂(y)`: returns `[F₁(x), F₂(x)]`.
    pub fn f_parts(&self, x: f64) -> [f64; 2] {
        let k = self.prefactor();
        let ux = self.u.eval(x);
        [k * self.w.eval(x) * ux, -k * ux]
    }

    /// `[U₁(y), U₂(y)] = [U(y), W(y)U(y)]`.
    pub fn u_parts(&self, y: f64) -> [f64; 2] {
        let uy = self.u.eval(y);
        [uy, self.w.eval(y) * uy]
    }

    /// The right side of the expansion at `n`; equals `δ(n = 0)` up to rounding.
    pub fn delta_eval(&self, n: i64) -> Result<f64, DeltaError> {
        self.delta_eval_with_budget(n, TERM_BUDGET)
    }

    pub fn delta_eval_with_budget(&self, n: i64, budget: usize) -> Result<f64, DeltaError> {
        let s = self.u.support();
        // U(cd/C) ≠ 0 forces cd < S·C.
        let r_max = (s * self.c).ceil() as u64;
        let nf = n as f64;
        let mut acc = KahanSum::new();
        let mut terms = 0usize;
        for c in 1..r_max {
            let rs = ramanujan_sum(n, c) as f64;
            let mut d = 1u64;
            while c * d < r_max {
                terms += 1;
                if terms > budget {
                    return Err(DeltaError::TruncationIncomplete { n, budget });
                }
                let r = (c * d) as f64;
                if rs != 0.0 {
                    let f = self.f_eval(r / self.c, nf / (r * self.c));
                    if f != 0.0 {
                        acc.add_real(rs * f / r);
                    }
                }
                d += 1;
            }
        }
        Ok(acc.value().re / self.c)
    }

    /// Largest absolute mixed partial `∂^i_x ∂^j_y F` over a grid, by central differences.
    pub fn max_partial_derivative(&self, i: u32, j: u32, step: f64, grid: &[(f64, f64)]) -> f64 {
        grid.iter()
            .map(|&(x, y)| central_difference_2d(|a, b| self.f_eval(a, b), x, y, i, j, step).abs())
            .fold(0.0, f64::max)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central finite difference of order `(i, j)` with step `h`.
pub fn central_difference_2d<F: Fn(f64, f64) -> f64>(f: F, x: f64, y: f64, i: u32, j: u32, h: f64) -> f64 {
    let mut acc = 0.0;
    for a in 0..=i {
        let wa = binomial(i, a) * if a % 2 == 0 { 1.0 } else { -1.0 };
        let dx = (i as f64 / 2.0 - a as f64) * h;
        for b in 0..=j {
            let wb = binomial(j, b) * if b % 2 == 0 { 1.0 } else { -1.0 };
            let dy = (j as f64 / 2.0 - b as f64) * h;
            acc += wa * wb * f(x + dx, y + dy);
        }
    }
    acc / h.powi((i + j) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_mass_constant() {
        // ∫_{-1}^{1} exp(-1/(1-t²)) dt
        assert!((bump_mass() - 0.443_993_816_168_079_4).abs() < 1e-14);
    }

    #[test]
    fn smooth_step_is_monotone_and_symmetric() {
        let mut prev = 0.0;
        for k in 0..=200 {
            let s = k as f64 / 200.0;
            let v = smooth_step(s);
            assert!(v >= prev - 1e-15);
            assert!((v + smooth_step(1.0 - s) - 1.0).abs() < 1e-14);
            prev = v;
        }
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
    }

    #[test]
    fn bump_shapes() {
        let u = BumpFunction::u_type(4.0).unwrap();
        assert_eq!(u.eval(0.0), 1.0);
        assert_eq!(u.eval(-2.0), 1.0);
        assert_eq!(u.eval(4.0), 0.0);
        assert!(u.eval(3.0) > 0.0 && u.eval(3.0) < 1.0);
        let w = BumpFunction::w_type();
        assert_eq!(w.eval(0.5), 0.0);
        assert_eq!(w.eval(2.0), 0.0);
        assert!(w.eval(-1.5) > 0.0);
        assert_eq!(w.eval(1.5), w.eval(-1.5));
        assert!(BumpFunction::u_type(2.0).is_err());
        assert!(BumpFunction::w_type_on(0.5, 1.5).is_err());
    }

    #[test]
    fn f_examples() {
        let d = DeltaExpansion::new(40.0).unwrap();
        assert_eq!(d.f_eval(0.3, 0.7), 0.0);
        for x in [-3.5, -1.2, 0.0, 1.5, 2.7] {
            assert_eq!(d.f_eval(x, x), 0.0);
        }
        assert!(d.f_eval(1.5, 0.2) > 0.0);
        assert_eq!(d.f_eval(5.0, 1.5), 0.0);
    }

    #[test]
    fn f_parts_reassemble() {
        let d = DeltaExpansion::new(12.0).unwrap();
        for &(x, y) in &[(1.3, 0.4), (0.2, 1.7), (3.1, 1.2), (1.6, 3.5)] {
            let fx = d.f_parts(x);
            let uy = d.u_parts(y);
            let v = fx[0] * uy[0] + fx[1] * uy[1];
            assert!((v - d.f_eval(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_examples() {
        let d = DeltaExpansion::new(40.0).unwrap();
        assert!((d.delta_eval(0).unwrap() - 1.0).abs() < 1e-6);
        assert!(d.delta_eval(7).unwrap().abs() < 1e-6);
        let d = DeltaExpansion::new(12.0).unwrap();
        assert!(d.delta_eval(-100).unwrap().abs() < 1e-6);
    }

    #[test]
    fn tight_budget_reports_truncation() {
        let d = DeltaExpansion::new(20.0).unwrap();
        assert!(matches!(
            d.delta_eval_with_budget(0, 10),
            Err(DeltaError::TruncationIncomplete { .. })
        ));
    }

    #[test]
    fn scale_checks() {
        assert!(matches!(DeltaExpansion::new(2.0), Err(DeltaError::ScaleTooSmall(_))));
        let narrow = BumpFunction::w_type_on(1.01, 1.02).unwrap();
        let u = BumpFunction::u_type(4.0).unwrap();
        assert!(matches!(
            DeltaExpansion::with_bumps(3.0, narrow, u),
            Err(DeltaError::NormalizerVanishes(_))
        ));
    }

    #[test]
    fn derivative_bounds_are_uniform_in_scale() {
        let grid: Vec<(f64, f64)> = (-40..=40)
            .flat_map(|i| (-40..=40).map(move |j| (i as f64 * 0.1 + 0.0123, j as f64 * 0.1 + 0.0071)))
            .collect();
        let orders = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 2), (0, 4), (4, 0)];
        let maxima: Vec<Vec<f64>> = [10.0, 40.0, 160.0]
            .iter()
            .map(|&c| {
                let d = DeltaExpansion::new(c).unwrap();
                orders.iter().map(|&(i, j)| d.max_partial_derivative(i, j, 1e-3, &grid)).collect()
            })
            .collect();
        for k in 0..2 {
            assert!(maxima.iter().all(|m| m[k] <= 100.0));
        }
        for k in 0..orders.len() {
            let lo = maxima.iter().map(|m| m[k]).fold(f64::INFINITY, f64::min);
            let hi = maxima.iter().map(|m| m[k]).fold(0.0, f64::max);
            assert!(hi <= 1.05 * lo, "order {:?}: {lo} .. {hi}", orders[k]);
        }
    }
}
