//! Bessel functions, smooth test functions, the level-1 Voronoi formula and
//! Fourier integrals of products of windows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{self, gcd_i, inv_mod, KahanSum};
use crate::deltasym::smooth_step;
use crate::modforms::CoefficientSequence;
use crate::quad::{self, QuadError, QuadOptions, QuadResult};

pub const BESSEL_MAX_ORDER: u32 = 50;
pub const BESSEL_MAX_ARG: f64 = 1e6;
/// Per-integral tolerance, relative to `∫|f|`.
pub const QUAD_REL_TOL: f64 = 1e-9;
pub const VORONOI_TOLERANCE: f64 = 1e-5;
/// Dual terms stop once this many in a row fall below `DUAL_CUTOFF·max`.
pub const DUAL_QUIET_RUN: usize = 8;
pub const DUAL_CUTOFF: f64 = 1e-14;
pub const DUAL_LENGTH_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OscError {
    #[error(transparent)]
    QuadratureNonConvergent(#[from] QuadError),
    #[error("a = {a} is not invertible modulo c = {c}")]
    NotCoprime { a: i64, c: u64 },
    #[error("test function support [{0}, {1}] must lie in (0, ∞)")]
    SupportNotPositive(f64, f64),
    #[error("sequence has {have} coefficients, {need} are needed")]
    SequenceTooShort { need: u64, have: usize },
    #[error("the Voronoi check is implemented for level 1 only, got level {0}")]
    NotLevelOne(u64),
    #[error("invalid test function: {0}")]
    BadTestFunction(String),
}

// ---------------------------------------------------------------- Bessel J

/// `J_n(x)` for integer `0 ≤ n ≤ 50` and `0 ≤ x ≤ 10^6`.
///
/// Power series for `x ≤ 1`, Miller's backward recurrence when `x < 25` or
/// `x < n`, and otherwise Hankel's expansion for `J_0, J_1` followed by the
/// (then stable) forward recurrence.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    assert!(n <= BESSEL_MAX_ORDER, "bessel_j: order {n} above {BESSEL_MAX_ORDER}");
    assert!(
        (0.0..=BESSEL_MAX_ARG).contains(&x),
        "bessel_j: argument {x} outside [0, {BESSEL_MAX_ARG}]"
    );
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x <= 1.0 {
        bessel_series(n, x)
    } else if x < 25.0 || x < n as f64 {
        bessel_miller(n, x)
    } else {
        let j0 = hankel(0, x);
        if n == 0 {
            return j0;
        }
        let mut prev = j0;
        let mut cur = hankel(1, x);
        for k in 1..n {
            let next = 2.0 * k as f64 / x * cur - prev;
            prev = cur;
            cur = next;
        }
        cur
    }
}

fn bessel_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=n {
        lead *= half / k as f64;
    }
    let q = -half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..60 {
        term *= q / (m as f64 * (m + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    lead * sum
}

fn bessel_miller(n: u32, x: f64) -> f64 {
    let top = (n as f64).max(x).ceil() as usize + 60;
    let top = top + top % 2;
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut sum = 0.0;
    let mut result = 0.0;
    for k in (1..=top).rev() {
        // cur = J_k up to scale; step to J_{k-1}
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        let idx = k - 1;
        if idx == n as usize {
            result = cur;
        }
        if idx % 2 == 0 && idx > 0 {
            sum += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            sum *= 1e-250;
            result *= 1e-250;
        }
    }
    sum += cur;
    result / sum
}

/// Hankel's expansion for orders 0 and 1, valid to full precision for `x ≥ 25`.
fn hankel(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        // terms alternate in pairs: P gets k even, Q gets k odd
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    // χ = x − (ν/2 + 1/4)π, expanded so that only sin/cos of x itself are needed.
    let (sx, cx) = x.sin_cos();
    let (c, s) = match nu {
        0 => (FRAC_1_SQRT_2 * (cx + sx), FRAC_1_SQRT_2 * (sx - cx)),
        _ => (FRAC_1_SQRT_2 * (sx - cx), -FRAC_1_SQRT_2 * (cx + sx)),
    };
    (2.0 / (PI * x)).sqrt() * (p * c - q * s)
}

/// `|J_{k−1}(2πx) − cos(2πx − (k−1)π/2 − π/4)/(π√x)|`.
pub fn bessel_asymptotic_residual(k: u32, x: f64) -> f64 {
    assert!(k >= 1 && x >= 1.0);
    let nu = (k - 1) as f64;
    let lead = (2.0 * PI * x - nu * PI / 2.0 - PI / 4.0).cos() / (PI * x.sqrt());
    (bessel_j(k - 1, 2.0 * PI * x) - lead).abs()
}

// ---------------------------------------------------------------- test functions

/// Support of the Gaussian window in units of the width.
pub const WINDOW_RADIUS: f64 = 4.0;
/// The cutoff starts bending the Gaussian down at this many widths.
pub const WINDOW_FLAT: f64 = 3.0;

/// `A·exp(−t²)·cut(|t|)` with `t = (x − center)/width`, where `cut` is 1 up
/// to 3 and falls smoothly to 0 at 4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothTestFunction {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl SmoothTestFunction {
    pub fn new(center: f64, width: f64) -> Result<Self, OscError> {
        Self::with_amplitude(center, width, 1.0)
    }

    pub fn with_amplitude(center: f64, width: f64, amplitude: f64) -> Result<Self, OscError> {
        if !(width > 0.0 && width.is_finite() && center.is_finite() && amplitude.is_finite()) {
            return Err(OscError::BadTestFunction(format!(
                "center {center}, width {width}, amplitude {amplitude}"
            )));
        }
        Ok(SmoothTestFunction {
            center,
            width,
            amplitude,
        })
    }

    /// The zero function (amplitude 0).
    pub fn zero(center: f64, width: f64) -> Self {
        SmoothTestFunction {
            center,
            width,
            amplitude: 0.0,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (
            self.center - WINDOW_RADIUS * self.width,
            self.center + WINDOW_RADIUS * self.width,
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = ((x - self.center) / self.width).abs();
        if t >= WINDOW_RADIUS || self.amplitude == 0.0 {
            return 0.0;
        }
        let g = self.amplitude * (-t * t).exp();
        if t <= WINDOW_FLAT {
            g
        } else {
            g * (1.0 - smooth_step((t - WINDOW_FLAT) / (WINDOW_RADIUS - WINDOW_FLAT)))
        }
    }
}

/// `x ↦ window(scale·x + shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineWindow {
    pub window: SmoothTestFunction,
    pub scale: f64,
    pub shift: f64,
}

impl AffineWindow {
    pub fn new(window: SmoothTestFunction, scale: f64, shift: f64) -> Self {
        assert!(scale != 0.0 && scale.is_finite());
        AffineWindow { window, scale, shift }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.window.eval(self.scale * x + self.shift)
    }

    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.window.support();
        let (a, b) = ((lo - self.shift) / self.scale, (hi - self.shift) / self.scale);
        (a.min(b), a.max(b))
    }
}

/// Pointwise product of affine windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowProduct(pub Vec<AffineWindow>);

impl WindowProduct {
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = 1.0;
        for w in &self.0 {
            v *= w.eval(x);
            if v == 0.0 {
                break;
            }
        }
        v
    }

    /// Intersection of the factor supports; `None` when it is empty.
    pub fn support(&self) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for w in &self.0 {
            let (a, b) = w.support();
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo < hi && lo.is_finite() && hi.is_finite()).then_some((lo, hi))
    }
}

/// `∫ g(x) e(−freq·x) dx` for a product of windows `g`.
pub fn fourier_integral(g: &WindowProduct, freq: f64) -> Result<QuadResult, OscError> {
    fourier_integral_with(g, freq, QUAD_REL_TOL)
}

/// [`fourier_integral`] with error target `rel_tol·∫|g|`.
pub fn fourier_integral_with(g: &WindowProduct, freq: f64, rel_tol: f64) -> Result<QuadResult, OscError> {
    let Some((lo, hi)) = g.support() else {
        return Ok(QuadResult {
            value: Complex64::new(0.0, 0.0),
            abs_integral: 0.0,
            error_estimate: 0.0,
            panels: 0,
        });
    };
    let mut opts = QuadOptions::oscillatory(freq);
    opts.rel_tol = rel_tol;
    Ok(quad::integrate(|x| g.eval(x) * arith::e(-freq * x), lo, hi, &opts)?)
}

/// Both sides of Parseval on the periodization of `g` with period `T`:
/// `Σ_{|m|≤m_max} |ĝ(m/T)|²` and `T·∫|g|²`. They agree once `m_max` covers
/// the decay of `ĝ` and the support of `g` is shorter than `T`.
pub fn periodized_parseval(g: &WindowProduct, period: f64, m_max: i64) -> Result<(f64, f64), OscError> {
    let mut lhs = KahanSum::new();
    for m in -m_max..=m_max {
        lhs.add_real(fourier_integral(g, m as f64 / period)?.value.norm_sqr());
    }
    let l2 = match g.support() {
        Some((lo, hi)) => {
            let mut opts = QuadOptions::default();
            opts.rel_tol = QUAD_REL_TOL;
            quad::integrate_real(|x| g.eval(x).powi(2), lo, hi, &opts)?
        }
        None => 0.0,
    };
    Ok((lhs.value().re, period * l2))
}

// ---------------------------------------------------------------- Voronoi

/// `Σ_n λ(n) e(an/c) h(n)`.
pub fn direct_side(seq: &CoefficientSequence, a: i64, c: u64, h: &SmoothTestFunction) -> Result<Complex64, OscError> {
    let (lo, hi) = h.support();
    if lo <= 0.0 {
        return Err(OscError::SupportNotPositive(lo, hi));
    }
    let top = hi.floor() as u64;
    if top as usize > seq.n_max() {
        return Err(OscError::SequenceTooShort {
            need: top,
            have: seq.n_max(),
        });
    }
    let mut acc = KahanSum::new();
    for n in (lo.ceil().max(1.0) as u64)..=top {
        let w = h.eval(n as f64);
        if w != 0.0 {
            acc.add(seq.lambda(n) * arith::e_frac_wide(a as i128 * n as i128, c) * w);
        }
    }
    Ok(acc.value())
}

/// `∫ h(x) J_{k−1}(4π√(nx)/c) dx`.
///
/// Integrated in `u = √x`, where the Bessel phase advances at the constant
/// rate of `2√n/c` cycles per unit.
pub fn hankel_transform(h: &SmoothTestFunction, k: u32, n: u64, c: u64) -> Result<QuadResult, OscError> {
    let (lo, hi) = h.support();
    if lo <= 0.0 {
        return Err(OscError::SupportNotPositive(lo, hi));
    }
    let scale = 4.0 * PI * (n as f64).sqrt() / c as f64;
    let mut opts = QuadOptions::oscillatory(scale / (2.0 * PI));
    opts.rel_tol = QUAD_REL_TOL;
    let order = k - 1;
    Ok(quad::integrate(
        |u| Complex64::new(2.0 * u * h.eval(u * u) * bessel_j(order, scale * u), 0.0),
        lo.sqrt(),
        hi.sqrt(),
        &opts,
    )?)
}

/// When to stop the dual sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualTruncation {
    /// A term is quiet when `|∫ h J| < cutoff · max_so_far`.
    pub cutoff: f64,
    /// Stop after this many quiet terms in a row.
    pub quiet_run: usize,
    /// Hard cap on the number of dual terms.
    pub n_dual_max: u64,
}

impl DualTruncation {
    pub fn capped_at(n_dual_max: u64) -> Self {
        DualTruncation {
            cutoff: DUAL_CUTOFF,
            quiet_run: DUAL_QUIET_RUN,
            n_dual_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HankelSide {
    pub value: Complex64,
    /// Dual terms summed.
    pub terms: u64,
    /// True if the sum stopped at the cap rather than by decay.
    pub capped: bool,
}

/// Dual side `(2π i^k/c) Σ_n conj λ(n) e(−ā n/c) ∫ h(x) J_{k−1}(4π√(nx)/c) dx` at level 1.
pub fn hankel_side(
    seq: &CoefficientSequence,
    a: i64,
    c: u64,
    h: &SmoothTestFunction,
    n_dual_max: u64,
) -> Result<HankelSide, OscError> {
    hankel_side_with(seq, a, c, h, &DualTruncation::capped_at(n_dual_max))
}

pub fn hankel_side_with(
    seq: &CoefficientSequence,
    a: i64,
    c: u64,
    h: &SmoothTestFunction,
    trunc: &DualTruncation,
) -> Result<HankelSide, OscError> {
    if seq.level() != 1 {
        return Err(OscError::NotLevelOne(seq.level()));
    }
    if gcd_i(a, c) != 1 {
        return Err(OscError::NotCoprime { a, c });
    }
    let (lo, hi) = h.support();
    if lo <= 0.0 {
        return Err(OscError::SupportNotPositive(lo, hi));
    }
    let zero = Complex64::new(0.0, 0.0);
    if h.amplitude == 0.0 {
        return Ok(HankelSide {
            value: zero,
            terms: 0,
            capped: false,
        });
    }
    let abar = inv_mod(a, c).expect("checked coprime") as i64;
    let k = seq.weight() as u32;
    let cap = trunc.n_dual_max.min(seq.n_max() as u64);
    let mut acc = KahanSum::new();
    let mut peak: f64 = 0.0;
    let mut quiet = 0usize;
    let mut terms = 0u64;
    let mut capped = true;
    for n in 1..=cap {
        let integral = hankel_transform(h, k, n, c)?.value;
        terms = n;
        acc.add(seq.lambda(n).conj() * arith::e_frac_wide(-(abar as i128) * n as i128, c) * integral);
        let mag = integral.norm();
        peak = peak.max(mag);
        if mag < trunc.cutoff * peak {
            quiet += 1;
            if quiet >= trunc.quiet_run {
                capped = false;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let ik = Complex64::new(0.0, 1.0).powu(k);
    Ok(HankelSide {
        value: 2.0 * PI * ik / c as f64 * acc.value(),
        terms,
        capped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoronoiReport {
    pub a: i64,
    pub c: u64,
    pub center: f64,
    pub width: f64,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub rel_error: f64,
    pub dual_terms: u64,
    pub capped: bool,
    pub pass: bool,
}

/// Dual terms needed for `h`: `20·c²·center/width²`.
///
/// In `u = √x` the weight has width about `width/(2√center)`, so the transform
/// of the `n`-th term is negligible once `√n/c` passes a few inverse widths.
pub fn dual_length(c: u64, h: &SmoothTestFunction) -> u64 {
    (DUAL_LENGTH_FACTOR * (c * c) as f64 * h.center / (h.width * h.width)).ceil() as u64
}

pub fn voronoi_check(
    seq: &CoefficientSequence,
    a: i64,
    c: u64,
    h: &SmoothTestFunction,
    n_dual_max: u64,
) -> Result<VoronoiReport, OscError> {
    voronoi_check_with(seq, a, c, h, &DualTruncation::capped_at(n_dual_max))
}

pub fn voronoi_check_with(
    seq: &CoefficientSequence,
    a: i64,
    c: u64,
    h: &SmoothTestFunction,
    trunc: &DualTruncation,
) -> Result<VoronoiReport, OscError> {
    let rhs = hankel_side_with(seq, a, c, h, trunc)?;
    let lhs = direct_side(seq, a, c, h)?;
    let rel_error = (lhs - rhs.value).norm() / lhs.norm().max(rhs.value.norm()).max(1e-30);
    Ok(VoronoiReport {
        a,
        c,
        center: h.center,
        width: h.width,
        lhs,
        rhs: rhs.value,
        rel_error,
        dual_terms: rhs.terms,
        capped: rhs.capped,
        pass: rel_error <= VORONOI_TOLERANCE,
    })
}
