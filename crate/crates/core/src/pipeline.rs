//! A desk-scale replay of the argument's exact steps: the weighted sum
//! `S(N)`, amplification, insertion of the delta expansion, the Poisson
//! identity for `V`, and the additive partitions of `T′`.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{self, gcd, modulo_wide, KahanSum};
use crate::charsums::{characters_mod, ramanujan_sum};
use crate::deltasym::{smooth_step, DeltaError, DeltaExpansion};
use crate::modforms::{
    amplifier_primes, amplifier_weight, coeffs_delta_form, coeffs_divisor, coeffs_synthetic, CoefficientSequence,
    ModformError,
};
use crate::oscint::{fourier_integral, fourier_integral_with, AffineWindow, OscError, SmoothTestFunction, WindowProduct};
use crate::sheval::{shat_bruteforce, shat_spectrum, shat_zero, ShevalError, ShevalInstance, SPECTRUM_BUDGET};

pub const TERM_BUDGET: u64 = 100_000_000;
pub const AMPLIFIER_TOLERANCE: f64 = 1e-9;
pub const DELTA_TOLERANCE: f64 = 1e-5;
pub const POISSON_TOLERANCE: f64 = 1e-4;
pub const PARTITION_TOLERANCE: f64 = 1e-9;
/// `Ŝ(m)Î(m)` is summed over `|m| ≤ 4·c₁c₂·|(ℓ₁, ℓ₂)|/(Z·width)`.
pub const TRUNCATION_MULTIPLIER: f64 = 4.0;
/// Largest `|Î(m)|/∫|W₁W₂|` allowed just beyond the truncation radius.
pub const IHAT_TAIL_TOLERANCE: f64 = 1e-8;
/// Quadrature target for the tail probes, well below the tail tolerance.
pub const TAIL_QUAD_TOLERANCE: f64 = 1e-11;
/// Nonzero `Ŝ(0)` off the diagonal `c₁ = c₂` is flagged above this.
pub const ZERO_FREQUENCY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{terms} terms exceed the budget of {budget}")]
    BudgetExceeded { terms: u64, budget: u64 },
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Modform(#[from] ModformError),
    #[error(transparent)]
    Delta(#[from] DeltaError),
    #[error(transparent)]
    Osc(#[from] OscError),
    #[error(transparent)]
    Sheval(#[from] ShevalError),
    #[error("csv output failed: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn budget(terms: u64) -> Result<()> {
    if terms > TERM_BUDGET {
        return Err(PipelineError::BudgetExceeded {
            terms,
            budget: TERM_BUDGET,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub p: u64,
    pub n: u64,
    pub l: u64,
    pub j: u32,
    /// Level `p` form with nebentypus `χ mod p`.
    pub seq_f: CoefficientSequence,
    /// Level 1 form.
    pub seq_g: CoefficientSequence,
    /// Amplitude of `w_N`; 0 gives the empty sum.
    pub w_amplitude: f64,
    /// Width parameter of the oscillatory-range windows `W((mℓ − np)/Z)`.
    pub z: f64,
    /// Moduli `c ∈ (Q, 2Q]`.
    pub q: u64,
    /// Dual lengths `n ∈ (N′, 2N′]`.
    pub n_prime: u64,
    /// `N` for the delta-expansion check, which is quadratic in `N`.
    pub delta_n: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GForm {
    Divisor,
    Delta,
}

impl PipelineConfig {
    /// A configuration with synthetic `f` of level `p` and the given `g`,
    /// with `Z = pL^j/2`, `Q = 4`, `N′ = 4` and a delta check at `N = 200`.
    pub fn desk(p: u64, n: u64, l: u64, j: u32, g: GForm, seed: u64) -> Result<Self> {
        check_shape(p, n, l, j)?;
        let lj = l.pow(j);
        let delta_n = 200.min(n);
        let n_prime = 4;
        let f_max = (2 * n * lj).max(9 * delta_n * lj / 4 + 2) as usize;
        let g_max = (2 * n).max(2 * n_prime).max(2 * delta_n) as usize + 1;
        let chars = characters_mod(p);
        let chi = &chars[1 + (seed % (chars.len() as u64 - 1)) as usize];
        let seq_f = coeffs_synthetic(f_max, chi, Complex64::new(1.0, 0.0), seed)?;
        let seq_g = match g {
            GForm::Divisor => coeffs_divisor(g_max)?,
            GForm::Delta => coeffs_delta_form(g_max)?,
        };
        let cfg = PipelineConfig {
            p,
            n,
            l,
            j,
            seq_f,
            seq_g,
            w_amplitude: 1.0,
            z: (p * lj) as f64 / 2.0,
            q: 4,
            n_prime,
            delta_n,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.p, self.n, self.l, self.j)?;
        if self.seq_f.nebentypus().modulus() != self.p {
            return Err(PipelineError::Config("seq_f must have nebentypus modulo p".into()));
        }
        if self.seq_g.level() != 1 {
            return Err(PipelineError::Config("seq_g must have level 1".into()));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(PipelineError::Config(format!("Z = {} must be positive", self.z)));
        }
        let lj = self.l.pow(self.j);
        let need_f = (2 * self.n * lj).max(9 * self.delta_n * lj / 4 + 1);
        if (self.seq_f.n_max() as u64) < need_f {
            return Err(PipelineError::Config(format!(
                "seq_f covers {} coefficients, {need_f} needed",
                self.seq_f.n_max()
            )));
        }
        let need_g = (2 * self.n).max(2 * self.n_prime).max(2 * self.delta_n);
        if (self.seq_g.n_max() as u64) < need_g {
            return Err(PipelineError::Config(format!(
                "seq_g covers {} coefficients, {need_g} needed",
                self.seq_g.n_max()
            )));
        }
        Ok(())
    }

    /// `C = √(N L^j)`.
    pub fn c_scale(&self) -> f64 {
        ((self.n * self.l.pow(self.j)) as f64).sqrt()
    }

    /// `w_N`, supported on `[N/2, 2N]`.
    pub fn w_n(&self) -> SmoothTestFunction {
        w_for(self.n, self.w_amplitude)
    }

    /// `(ℓ, a_j(ν))` with `ℓ = ν^j` over primes `ν ∈ (L/2, L]`.
    pub fn amplifier(&self) -> Vec<(u64, Complex64)> {
        amplifier_primes(self.l)
            .into_iter()
            .map(|nu| (nu.pow(self.j), amplifier_weight(&self.seq_f, self.j, nu)))
            .collect()
    }
}

fn check_shape(p: u64, n: u64, l: u64, j: u32) -> Result<()> {
    if !arith::is_prime(p) {
        return Err(PipelineError::Config(format!("p = {p} is not prime")));
    }
    if !(2..p).contains(&l) {
        return Err(PipelineError::Config(format!("L = {l} must satisfy 2 ≤ L ≤ p − 1")));
    }
    if !(1..=2).contains(&j) {
        return Err(PipelineError::Config(format!("j = {j} must be 1 or 2")));
    }
    if n < 2 {
        return Err(PipelineError::Config(format!("N = {n} must be at least 2")));
    }
    Ok(())
}

fn w_for(n: u64, amplitude: f64) -> SmoothTestFunction {
    let n = n as f64;
    SmoothTestFunction {
        center: 1.25 * n,
        width: 0.1875 * n,
        amplitude,
    }
}

fn support_range(w: &SmoothTestFunction) -> std::ops::RangeInclusive<u64> {
    let (lo, hi) = w.support();
    (lo.ceil().max(1.0) as u64)..=(hi.floor().max(0.0) as u64)
}

// ---------------------------------------------------------------- S(N)

/// `S(N, r) = Σ_n λ_f(nr) λ_g(n) w_N(n)`.
pub fn s_shifted(cfg: &PipelineConfig, r: u64) -> Complex64 {
    let w = cfg.w_n();
    arith::ksum(
        support_range(&w).map(|n| cfg.seq_f.lambda(n * r) * cfg.seq_g.lambda(n) * w.eval(n as f64)),
    )
}

/// `S(N) = Σ_n λ_f(n) λ_g(n) w_N(n)`.
pub fn s_direct(cfg: &PipelineConfig) -> Complex64 {
    s_shifted(cfg, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplifiedReport {
    pub j: u32,
    /// `S(N, A_j) = Σ_ν a_j(ν) S(N, ν^j)`.
    pub s_amplified: Complex64,
    pub s_direct: Complex64,
    pub amplifier: Complex64,
    /// The `d = ν` part of the Hecke expansion.
    pub hecke_subsum: Complex64,
    pub residual: f64,
    pub scale: f64,
    pub pass: bool,
}

/// Checks `S(N, A_j) = S(N)·A_j(L) + (d = ν sub-sum)`, where the sub-sum is
/// `−Σ_ν a_j(ν) λ_f(ν^{j−1}) χ(ν) Σ_n λ_f(n) λ_g(nν) w_N(νn)`.
pub fn s_amplified(cfg: &PipelineConfig) -> Result<AmplifiedReport> {
    cfg.validate()?;
    let w = cfg.w_n();
    let range = support_range(&w);
    budget(cfg.amplifier().len() as u64 * (range.end() - range.start() + 1))?;
    let s = s_direct(cfg);
    let mut amplified = KahanSum::new();
    let mut amp = KahanSum::new();
    let mut sub = KahanSum::new();
    let mut scale = 0.0;
    for nu in amplifier_primes(cfg.l) {
        let a = amplifier_weight(&cfg.seq_f, cfg.j, nu);
        let ell = nu.pow(cfg.j);
        amplified.add(a * s_shifted(cfg, ell));
        amp.add(a * cfg.seq_f.lambda(ell));
        scale += a.norm()
            * arith::ksum_real(
                range
                    .clone()
                    .map(|n| (cfg.seq_f.lambda(n * ell) * cfg.seq_g.lambda(n)).norm() * w.eval(n as f64).abs()),
            );
        let inner = arith::ksum((1..=range.end() / nu).map(|n| {
            cfg.seq_f.lambda(n) * cfg.seq_g.lambda(n * nu) * w.eval((n * nu) as f64)
        }));
        let pre = a * cfg.seq_f.lambda(nu.pow(cfg.j - 1)) * cfg.seq_f.chi(nu as i64);
        sub.add(-pre * inner);
        scale += pre.norm()
            * arith::ksum_real((1..=range.end() / nu).map(|n| {
                (cfg.seq_f.lambda(n) * cfg.seq_g.lambda(n * nu)).norm() * w.eval((n * nu) as f64).abs()
            }));
    }
    let (amplified, amp, sub) = (amplified.value(), amp.value(), sub.value());
    let residual = (amplified - (s * amp + sub)).norm();
    let scale = scale.max(1.0);
    Ok(AmplifiedReport {
        j: cfg.j,
        s_amplified: amplified,
        s_direct: s,
        amplifier: amp,
        hecke_subsum: sub,
        residual,
        scale,
        pass: residual <= AMPLIFIER_TOLERANCE * scale,
    })
}

// ---------------------------------------------------------------- delta

/// 1 on `[lo, hi]`, tapering smoothly to 0 at `lo/2` and `9hi/8`.
pub fn plateau(x: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo / 2.0 || x >= 1.125 * hi {
        0.0
    } else if x < lo {
        smooth_step((x - lo / 2.0) / (lo / 2.0))
    } else if x <= hi {
        1.0
    } else {
        1.0 - smooth_step((x - hi) / (0.125 * hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaIdentityReport {
    pub ell: u64,
    pub n: u64,
    pub c: f64,
    pub lhs: Complex64,
    pub rhs: Complex64,
    /// `|lhs − rhs|` over `Σ_n |λ_f(nℓ) λ_g(n) w_N(n)|`.
    pub residual: f64,
    pub shifts: u64,
    pub pass: bool,
}

/// Replaces `δ(m = nℓ)` in `S(N, ℓ) = Σ_{m,n} λ_f(m)λ_g(n)δ(m = nℓ)w_N(n)w_{Nℓ}(m)`
/// by the full expansion at scale `C = √(N L^j)`.
///
/// The `h`-sum of each `(c, d)` term is a Ramanujan sum of `m − nℓ`, so the
/// right side is grouped by the shift `k = m − nℓ`.
pub fn delta_identity_check(cfg: &PipelineConfig, ell: u64) -> Result<DeltaIdentityReport> {
    if ell == 0 {
        return Err(PipelineError::Config("ℓ must be positive".into()));
    }
    let nd = cfg.delta_n;
    let c = ((nd * cfg.l.pow(cfg.j)) as f64).sqrt();
    let w = w_for(nd, cfg.w_amplitude);
    let (lo, hi) = (nd as f64 * ell as f64 / 2.0, 2.0 * nd as f64 * ell as f64);
    let m_lo = (lo / 2.0).floor() as u64 + 1;
    let m_hi = (1.125 * hi).ceil() as u64;
    if m_hi as usize > cfg.seq_f.n_max() {
        return Err(PipelineError::Config(format!("seq_f needs {m_hi} coefficients")));
    }
    let ns: Vec<u64> = support_range(&w).filter(|&n| w.eval(n as f64) != 0.0).collect();
    let ms: Vec<u64> = (m_lo..=m_hi).filter(|&m| plateau(m as f64, lo, hi) != 0.0).collect();

    let mut lhs = KahanSum::new();
    let mut mass = 0.0;
    for &n in &ns {
        let t = cfg.seq_f.lambda(n * ell) * cfg.seq_g.lambda(n) * w.eval(n as f64);
        lhs.add(t * plateau((n * ell) as f64, lo, hi));
        mass += t.norm();
    }
    let lhs = lhs.value();
    if ns.is_empty() || ms.is_empty() {
        return Ok(DeltaIdentityReport {
            ell,
            n: nd,
            c,
            lhs,
            rhs: Complex64::new(0.0, 0.0),
            residual: lhs.norm(),
            shifts: 0,
            pass: lhs.norm() == 0.0,
        });
    }
    let expansion = DeltaExpansion::new(c)?;
    let k_min = *ms.first().unwrap() as i64 - (*ns.last().unwrap() * ell) as i64;
    let k_max = *ms.last().unwrap() as i64 - (*ns.first().unwrap() * ell) as i64;
    let shifts = (k_max - k_min + 1) as u64;
    let r = expansion.u().support() * c;
    budget(shifts * (r * r.ln().max(1.0)) as u64 + ns.len() as u64 * ms.len() as u64)?;

    // G(k) = Σ_{m − nℓ = k} λ_f(m) w_{Nℓ}(m) λ_g(n) w_N(n)
    let mut g = vec![Complex64::new(0.0, 0.0); shifts as usize];
    for &n in &ns {
        let gn = cfg.seq_g.lambda(n) * w.eval(n as f64);
        for &m in &ms {
            let k = m as i64 - (n * ell) as i64;
            g[(k - k_min) as usize] += cfg.seq_f.lambda(m) * plateau(m as f64, lo, hi) * gn;
        }
    }
    let terms = g
        .par_iter()
        .enumerate()
        .filter(|(_, v)| v.norm() != 0.0)
        .map(|(i, v)| Ok(*v * expansion.delta_eval(k_min + i as i64)?))
        .collect::<std::result::Result<Vec<Complex64>, DeltaError>>()?;
    let rhs = arith::ksum(terms);
    let residual = (lhs - rhs).norm() / mass.max(f64::MIN_POSITIVE);
    Ok(DeltaIdentityReport {
        ell,
        n: nd,
        c,
        lhs,
        rhs,
        residual: if mass == 0.0 { rhs.norm() } else { residual },
        shifts,
        pass: if mass == 0.0 {
            rhs.norm() == 0.0
        } else {
            residual <= DELTA_TOLERANCE
        },
    })
}

// ---------------------------------------------------------------- Poisson for V

/// `W₁(x) W₂(x)` with `W_i(x) = window((xℓ_i − n_i p)/Z)`.
pub fn v_windows(inst: &ShevalInstance, z: f64, window: &SmoothTestFunction) -> WindowProduct {
    let p = inst.p as f64;
    WindowProduct(vec![
        AffineWindow::new(*window, inst.l1 as f64 / z, -(inst.n1 as f64) * p / z),
        AffineWindow::new(*window, inst.l2 as f64 / z, -(inst.n2 as f64) * p / z),
    ])
}

/// `V = Σ_m S(0, pn₁ − mℓ₁; c₁) S(0, pn₂ − mℓ₂; c₂) W₁(m) W₂(m)` over all integers `m`.
pub fn v_direct(inst: &ShevalInstance, z: f64, window: &SmoothTestFunction) -> Result<Complex64> {
    let g = v_windows(inst, z, window);
    let Some((lo, hi)) = g.support() else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    let (lo, hi) = (lo.ceil() as i64, hi.floor() as i64);
    budget((hi - lo + 1).max(0) as u64)?;
    let p = inst.p as i128;
    let mut acc = KahanSum::new();
    for m in lo..=hi {
        let wv = g.eval(m as f64);
        if wv == 0.0 {
            continue;
        }
        let r1 = ramanujan_sum((p * inst.n1 as i128 - m as i128 * inst.l1 as i128) as i64, inst.c1);
        let r2 = ramanujan_sum((p * inst.n2 as i128 - m as i128 * inst.l2 as i128) as i64, inst.c2);
        acc.add_real((r1 * r2) as f64 * wv);
    }
    Ok(acc.value())
}

/// `Î(m) = ∫ W₁(x) W₂(x) e(−xm/c₁c₂) dx`.
pub fn ihat(inst: &ShevalInstance, z: f64, window: &SmoothTestFunction, m: i64) -> Result<crate::quad::QuadResult> {
    Ok(fourier_integral(&v_windows(inst, z, window), m as f64 / inst.modulus() as f64)?)
}

pub fn truncation_radius(inst: &ShevalInstance, z: f64, window: &SmoothTestFunction) -> i64 {
    let l = (inst.l1 as f64).hypot(inst.l2 as f64);
    (TRUNCATION_MULTIPLIER * inst.modulus() as f64 * l / (z * window.width)).ceil() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VPoissonReport {
    pub instance: ShevalInstance,
    pub z: f64,
    pub v_direct: Complex64,
    pub v_poisson: Complex64,
    pub zero_frequency: Complex64,
    pub residual: f64,
    pub tolerance: f64,
    pub truncation: i64,
    /// `max |Î(m)| / ∫|W₁W₂|` over `R < |m| ≤ 2R`.
    pub ihat_tail: f64,
    pub windows_overlap: bool,
    pub pass: bool,
}

/// `V = Σ_m Ŝ(m) Î(m)`, with the dual sum truncated at the decay radius of `Î`.
pub fn v_poisson_check(inst: &ShevalInstance, z: f64, window: &SmoothTestFunction) -> Result<VPoissonReport> {
    let vd = v_direct(inst, z, window)?;
    let radius = truncation_radius(inst, z, window);
    let q = inst.modulus();
    let overlap = v_windows(inst, z, window).support().is_some();
    let spectrum = if q * q <= SPECTRUM_BUDGET {
        Some(shat_spectrum(inst)?)
    } else {
        None
    };
    let shat = |m: i64| -> Result<Complex64> {
        Ok(match &spectrum {
            Some(s) => s[m.rem_euclid(q as i64) as usize],
            None => shat_bruteforce(inst, m)?,
        })
    };
    budget((2 * radius + 1) as u64)?;
    let mut acc = KahanSum::new();
    let mut zero = Complex64::new(0.0, 0.0);
    let mut mass = 0.0f64;
    if overlap {
        for m in -radius..=radius {
            let s = shat(m)?;
            if s.norm() == 0.0 {
                continue;
            }
            let i = ihat(inst, z, window, m)?;
            mass = mass.max(i.abs_integral);
            acc.add(s * i.value);
            if m == 0 {
                zero = s * i.value;
            }
        }
    }
    let vp = acc.value();
    let mut tail = 0.0f64;
    if overlap {
        let g = v_windows(inst, z, window);
        let norm = ihat(inst, z, window, 0)?.abs_integral;
        // Î(−m) is the conjugate of Î(m) since the windows are real.
        for m in radius + 1..=2 * radius + 1 {
            let i = fourier_integral_with(&g, m as f64 / q as f64, TAIL_QUAD_TOLERANCE)?;
            tail = tail.max(i.value.norm() / norm);
        }
    }
    let residual = (vd - vp).norm();
    let tolerance = POISSON_TOLERANCE * vd.norm().max(1.0);
    Ok(VPoissonReport {
        instance: *inst,
        z,
        v_direct: vd,
        v_poisson: vp,
        zero_frequency: zero,
        residual,
        tolerance,
        truncation: radius,
        ihat_tail: tail,
        windows_overlap: overlap,
        pass: residual <= tolerance && tail <= IHAT_TAIL_TOLERANCE,
    })
}

/// Six instances: `D ≠ 0` with distinct moduli, `D = 0`, equal moduli,
/// a wider modulus pair, `(ℓ₁, ℓ₂) > 1`, and disjoint windows.
pub fn shipped_poisson_instances() -> Vec<(ShevalInstance, f64)> {
    let mk = |p, l1, l2, n1, n2, c1, c2| ShevalInstance::new(p, l1, l2, n1, n2, c1, c2).expect("valid instance");
    vec![
        (mk(11, 3, 5, 2, 3, 10, 8), 40.0),
        (mk(11, 3, 5, 3, 5, 7, 8), 40.0),
        (mk(13, 5, 7, 4, 5, 9, 9), 80.0),
        (mk(13, 7, 11, 3, 2, 12, 10), 160.0),
        (mk(11, 3, 6, 2, 3, 5, 7), 40.0),
        (mk(11, 3, 5, 1, 40, 4, 6), 20.0),
    ]
}

// ---------------------------------------------------------------- partitions

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PieceRow {
    pub name: &'static str,
    pub value: Complex64,
    /// Analytic size bound with `p^ε ↦ 1` and `d = 1`, where one is known.
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub t_prime_square: Complex64,
    pub t_prime: Complex64,
    pub t_zero_diag: Complex64,
    pub t_double_prime: Complex64,
    pub t: Complex64,
    pub t_p_divides_m: Complex64,
    pub t_zero_freq: Complex64,
    pub t_nonzero: Complex64,
    pub t_nonzero_offdiag: Complex64,
    pub t_nonzero_diag: Complex64,
    pub scale: f64,
    pub identities: Vec<IdentityCheck>,
    /// Largest `|Ŝ(0)|` over tuples with `c₁ ≠ c₂`.
    pub zero_freq_offdiag_max: f64,
    /// Largest `|Ŝ(0) − S(D, 0; c)|` over tuples with `c₁ = c₂`.
    pub zero_formula_max: f64,
    pub tuples: u64,
    pub m_range: (i64, i64),
    pub pieces: Vec<PieceRow>,
    pub pass: bool,
}

impl PartitionReport {
    /// The partition table as CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| PipelineError::Csv(e.to_string());
        wtr.write_record(["piece", "re", "im", "abs", "bound", "ratio"]).map_err(err)?;
        for row in &self.pieces {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
            wtr.write_record([
                row.name.to_string(),
                format!("{:e}", row.value.re),
                format!("{:e}", row.value.im),
                format!("{:e}", row.value.norm()),
                opt(row.bound),
                opt(row.ratio),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| PipelineError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// One `(ℓ, c, n)` factor of the squared sum in `T′`.
struct Factor {
    ell: u64,
    c: u64,
    n: u64,
    coeff: Complex64,
    /// `S(0, pn − mℓ; c)·W((mℓ − np)/Z)` over the shared `m` range.
    phi: Vec<f64>,
}

/// Every piece of `T′ = T^(0) + T″`, `T″ = T − T^(00)`, `T = T₀ + T_{≠0}`,
/// `T_{≠0} = T″_{≠0} + T^diag_{≠0}` by its defining finite sum.
pub fn partition_report(cfg: &PipelineConfig) -> Result<PartitionReport> {
    cfg.validate()?;
    let window = SmoothTestFunction::new(0.0, 1.0)?;
    let p = cfg.p;
    let amp = cfg.amplifier();
    let cs: Vec<u64> = (cfg.q + 1..=2 * cfg.q).collect();
    let ns: Vec<u64> = (cfg.n_prime + 1..=2 * cfg.n_prime).collect();
    let (wlo, whi) = window.support();
    let mut m_lo = i64::MAX;
    let mut m_hi = i64::MIN;
    for &(ell, _) in &amp {
        for &n in &ns {
            let a = ((n * p) as f64 + wlo * cfg.z) / ell as f64;
            let b = ((n * p) as f64 + whi * cfg.z) / ell as f64;
            m_lo = m_lo.min(a.floor() as i64);
            m_hi = m_hi.max(b.ceil() as i64);
        }
    }
    let width = if ns.is_empty() { 0 } else { (m_hi - m_lo + 1) as u64 };

    let mut factors = Vec::new();
    for &(ell, b) in &amp {
        for &c in &cs {
            if gcd(c, ell) != 1 {
                continue;
            }
            let table: Vec<i64> = (0..c).map(|r| ramanujan_sum(r as i64, c)).collect();
            for &n in &ns {
                let coeff = b * cfg.seq_f.chi(c as i64) * cfg.seq_g.lambda(n);
                let phi = (m_lo..m_lo + width as i64)
                    .map(|m| {
                        let wv = window.eval((m as f64 * ell as f64 - (n * p) as f64) / cfg.z);
                        if wv == 0.0 {
                            return 0.0;
                        }
                        let r = modulo_wide(n as i128 * p as i128 - m as i128 * ell as i128, c);
                        table[r as usize] as f64 * wv
                    })
                    .collect();
                factors.push(Factor { ell, c, n, coeff, phi });
            }
        }
    }
    let tuples = (factors.len() * factors.len()) as u64;
    budget(tuples * width.max(1))?;

    // T′ as a sum of squares over p ∤ m
    let mut square = KahanSum::new();
    for (i, m) in (m_lo..m_lo + width as i64).enumerate() {
        if m.rem_euclid(p as i64) == 0 {
            continue;
        }
        let inner = arith::ksum(factors.iter().map(|f| f.coeff * f.phi[i]));
        square.add_real(inner.norm_sqr());
    }

    // Î(0) for each window pair, independent of the moduli
    let mut ihat0: HashMap<(u64, u64, u64, u64), f64> = HashMap::new();
    for f1 in &factors {
        for f2 in &factors {
            let key = (f1.ell, f1.n, f2.ell, f2.n);
            if ihat0.contains_key(&key) {
                continue;
            }
            let inst = ShevalInstance::new(p, f1.ell, f2.ell, f1.n as i64, f2.n as i64, 1, 1)?;
            ihat0.insert(key, fourier_integral(&v_windows(&inst, cfg.z, &window), 0.0)?.value.re);
        }
    }

    #[derive(Default, Clone, Copy)]
    struct Acc {
        t_prime: Complex64,
        t_zero_diag: Complex64,
        t_double_prime: Complex64,
        t: Complex64,
        t00: Complex64,
        t0: Complex64,
        t_nonzero: Complex64,
        offdiag: Complex64,
        diag: Complex64,
        scale: f64,
        zero_offdiag: f64,
        zero_formula: f64,
    }

    let pm = p as i64;
    let mult: Vec<(bool, bool)> = (m_lo..m_lo + width as i64)
        .map(|m| (m.rem_euclid(pm) == 0, true))
        .collect();
    let rows: Vec<Acc> = factors
        .par_iter()
        .map(|f1| -> Result<Acc> {
            let mut a = Acc::default();
            for f2 in &factors {
                let kappa = f1.coeff * f2.coeff.conj();
                let (mut v, mut v_prime, mut v00, mut mass) = (KahanSum::new(), KahanSum::new(), KahanSum::new(), 0.0);
                for (i, &(p_div, _)) in mult.iter().enumerate() {
                    let t = f1.phi[i] * f2.phi[i];
                    if t == 0.0 {
                        continue;
                    }
                    v.add_real(t);
                    mass += t.abs();
                    if p_div {
                        v00.add_real(t);
                    } else {
                        v_prime.add_real(t);
                    }
                }
                let (v, v_prime, v00) = (v.value().re, v_prime.value().re, v00.value().re);
                let d = f2.ell as i64 * f1.n as i64 - f1.ell as i64 * f2.n as i64;
                a.t_prime += kappa * v_prime;
                a.scale += kappa.norm() * mass;
                if d == 0 {
                    a.t_zero_diag += kappa * v_prime;
                    continue;
                }
                a.t_double_prime += kappa * v_prime;
                a.t += kappa * v;
                a.t00 += kappa * v00;
                let inst = ShevalInstance::new(p, f1.ell, f2.ell, f1.n as i64, f2.n as i64, f1.c, f2.c)?;
                let s0 = shat_bruteforce(&inst, 0)?;
                if f1.c != f2.c {
                    a.zero_offdiag = a.zero_offdiag.max(s0.norm());
                } else if let Ok(z) = shat_zero(&inst) {
                    a.zero_formula = a.zero_formula.max((z - s0).norm());
                }
                let v0 = s0 * ihat0[&(f1.ell, f1.n, f2.ell, f2.n)];
                a.scale += kappa.norm() * v0.norm();
                a.t0 += kappa * v0;
                a.t_nonzero += kappa * (v - v0);
                if f1.ell == f2.ell {
                    a.diag += kappa * (v - v0);
                } else {
                    a.offdiag += kappa * (v - v0);
                }
            }
            Ok(a)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tot = Acc::default();
    let mut sums: [KahanSum; 9] = Default::default();
    for r in &rows {
        for (s, v) in sums.iter_mut().zip([
            r.t_prime,
            r.t_zero_diag,
            r.t_double_prime,
            r.t,
            r.t00,
            r.t0,
            r.t_nonzero,
            r.offdiag,
            r.diag,
        ]) {
            s.add(v);
        }
        tot.scale += r.scale;
        tot.zero_offdiag = tot.zero_offdiag.max(r.zero_offdiag);
        tot.zero_formula = tot.zero_formula.max(r.zero_formula);
    }
    let [t_prime, t_zero_diag, t_double_prime, t, t00, t0, t_nonzero, offdiag, diag] = sums.map(|s| s.value());
    let scale = tot.scale.max(1.0);
    let check = |name: &'static str, lhs: Complex64, rhs: Complex64| {
        let residual = (lhs - rhs).norm();
        IdentityCheck {
            name,
            lhs,
            rhs,
            residual,
            pass: residual <= PARTITION_TOLERANCE * scale,
        }
    };
    let identities = vec![
        check("square_expansion", square.value(), t_prime),
        check("t_prime_split", t_prime, t_zero_diag + t_double_prime),
        check("inclusion_exclusion", t_double_prime, t - t00),
        check("zero_frequency_split", t, t0 + t_nonzero),
        check("diagonal_split", t_nonzero, offdiag + diag),
    ];
    let (q, l, j) = (cfg.q as f64, cfg.l as f64, cfg.j as f64);
    let bounds = [
        ("T_prime", t_prime, None),
        ("T_zero_diag", t_zero_diag, Some(q * q * l.powf(1.0 + j) * p as f64)),
        ("T_double_prime", t_double_prime, None),
        ("T", t, None),
        ("T_p_divides_m", t00, Some(l.powf(2.0 + 2.0 * j) * q.powi(3))),
        (
            "T_zero_freq",
            t0,
            Some(q * q * l.powf(1.0 + 2.5 * j) * p as f64 / (cfg.n as f64).sqrt()),
        ),
        ("T_nonzero", t_nonzero, None),
        ("T_nonzero_offdiag", offdiag, None),
        ("T_nonzero_diag", diag, None),
    ];
    let pieces = bounds
        .into_iter()
        .map(|(name, value, bound)| PieceRow {
            name,
            value,
            bound,
            ratio: bound.map(|b| value.norm() / b),
        })
        .collect();
    let pass = identities.iter().all(|c| c.pass) && tot.zero_offdiag <= ZERO_FREQUENCY_TOLERANCE;
    Ok(PartitionReport {
        t_prime_square: square.value(),
        t_prime,
        t_zero_diag,
        t_double_prime,
        t,
        t_p_divides_m: t00,
        t_zero_freq: t0,
        t_nonzero,
        t_nonzero_offdiag: offdiag,
        t_nonzero_diag: diag,
        scale,
        identities,
        zero_freq_offdiag_max: tot.zero_offdiag,
        zero_formula_max: tot.zero_formula,
        tuples,
        m_range: (m_lo, m_lo + width as i64 - 1),
        pieces,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub p: u64,
    pub n: u64,
    pub l: u64,
    pub j: u32,
    pub z: f64,
    pub q: u64,
    pub n_prime: u64,
    pub seed: u64,
    pub s_direct: Complex64,
    pub amplified: AmplifiedReport,
    pub delta: DeltaIdentityReport,
    pub poisson: Option<VPoissonReport>,
    pub partition: PartitionReport,
    pub pass: bool,
}

/// Runs every stage. The Poisson check uses the `D ≠ 0` tuple of the
/// partition with the largest `|V|`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let amplified = s_amplified(cfg)?;
    let amp = cfg.amplifier();
    let ell = amp.first().map(|&(l, _)| l).unwrap_or(1);
    let delta = delta_identity_check(cfg, ell)?;
    let partition = partition_report(cfg)?;
    let window = SmoothTestFunction::new(0.0, 1.0)?;
    let mut best: Option<(f64, ShevalInstance)> = None;
    for &(l1, _) in &amp {
        for &(l2, _) in &amp {
            for n1 in cfg.n_prime + 1..=2 * cfg.n_prime {
                for n2 in cfg.n_prime + 1..=2 * cfg.n_prime {
                    if l2 * n1 == l1 * n2 {
                        continue;
                    }
                    for c1 in (cfg.q + 1..=2 * cfg.q).filter(|&c| gcd(c, l1) == 1) {
                        for c2 in (cfg.q + 1..=2 * cfg.q).filter(|&c| gcd(c, l2) == 1) {
                            let inst = ShevalInstance::new(cfg.p, l1, l2, n1 as i64, n2 as i64, c1, c2)?;
                            let v = v_direct(&inst, cfg.z, &window)?.norm();
                            if best.is_none_or(|(b, _)| v > b) {
                                best = Some((v, inst));
                            }
                        }
                    }
                }
            }
        }
    }
    let poisson = match best {
        Some((_, inst)) => Some(v_poisson_check(&inst, cfg.z, &window)?),
        None => None,
    };
    let pass = amplified.pass && delta.pass && partition.pass && poisson.as_ref().is_none_or(|r| r.pass);
    Ok(PipelineReport {
        p: cfg.p,
        n: cfg.n,
        l: cfg.l,
        j: cfg.j,
        z: cfg.z,
        q: cfg.q,
        n_prime: cfg.n_prime,
        seed: cfg.seed,
        s_direct: amplified.s_direct,
        amplified,
        delta,
        poisson,
        partition,
        pass,
    })
}

/// The three shipped configurations.
pub fn shipped_configs(seed: u64) -> Result<Vec<PipelineConfig>> {
    Ok(vec![
        PipelineConfig::desk(11, 500, 3, 1, GForm::Divisor, seed)?,
        PipelineConfig::desk(101, 5000, 5, 2, GForm::Divisor, seed)?,
        PipelineConfig::desk(101, 2000, 8, 1, GForm::Delta, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(j: u32) -> PipelineConfig {
        PipelineConfig::desk(11, 300, 3, j, GForm::Divisor, 5).unwrap()
    }

    #[test]
    fn plateau_shape() {
        assert_eq!(plateau(10.0, 10.0, 40.0), 1.0);
        assert_eq!(plateau(40.0, 10.0, 40.0), 1.0);
        assert_eq!(plateau(5.0, 10.0, 40.0), 0.0);
        assert_eq!(plateau(45.0, 10.0, 40.0), 0.0);
        assert!(plateau(7.0, 10.0, 40.0) > 0.0 && plateau(7.0, 10.0, 40.0) < 1.0);
    }

    #[test]
    fn s_direct_is_linear_and_bounded() {
        let mut cfg = small(1);
        let s = s_direct(&cfg);
        let w = cfg.w_n();
        let ceiling: f64 = support_range(&w)
            .map(|n| (cfg.seq_f.lambda(n) * cfg.seq_g.lambda(n)).norm() * w.eval(n as f64))
            .sum();
        assert!(s.norm() <= ceiling + 1e-9);
        cfg.w_amplitude = 2.0;
        assert!((s_direct(&cfg) - 2.0 * s).norm() < 1e-9 * ceiling);
        cfg.w_amplitude = 0.0;
        assert_eq!(s_direct(&cfg).norm(), 0.0);
    }

    #[test]
    fn amplified_identity() {
        for j in [1, 2] {
            let r = s_amplified(&small(j)).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let cfg = PipelineConfig::desk(11, 300, 2, 1, GForm::Divisor, 1).unwrap();
        assert_eq!(cfg.amplifier().len(), 1);
        assert!(s_amplified(&cfg).unwrap().pass);
    }

    #[test]
    fn delta_identity() {
        let cfg = PipelineConfig::desk(11, 200, 3, 1, GForm::Divisor, 2).unwrap();
        for ell in [1, 3] {
            let r = delta_identity_check(&cfg, ell).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let mut empty = cfg.clone();
        empty.w_amplitude = 0.0;
        let r = delta_identity_check(&empty, 3).unwrap();
        assert!(r.pass && r.lhs.norm() == 0.0);
    }

    #[test]
    fn poisson_instances() {
        for (inst, z) in shipped_poisson_instances() {
            let r = v_poisson_check(&inst, z, &SmoothTestFunction::new(0.0, 1.0).unwrap()).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn disjoint_windows_vanish() {
        let (inst, z) = shipped_poisson_instances()[5];
        let r = v_poisson_check(&inst, z, &SmoothTestFunction::new(0.0, 1.0).unwrap()).unwrap();
        assert!(!r.windows_overlap && r.v_direct.norm() == 0.0 && r.v_poisson.norm() == 0.0);
    }

    #[test]
    fn partitions_balance() {
        let r = partition_report(&small(1)).unwrap();
        assert!(r.pass, "{:?}", r.identities);
        assert!(r.t.norm() > 0.0);
    }

    #[test]
    fn empty_dual_range() {
        let mut cfg = small(1);
        cfg.n_prime = 0;
        // n ∈ (0, 0] is empty
        let r = partition_report(&cfg).unwrap();
        assert_eq!(r.tuples, 0);
        assert_eq!(r.t_prime.norm() + r.t.norm() + r.t_zero_freq.norm(), 0.0);
    }

    #[test]
    fn partition_csv() {
        let r = partition_report(&small(2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("piece,re,im,abs,bound,ratio\nT_prime,"));
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn bad_configs() {
        assert!(PipelineConfig::desk(12, 300, 3, 1, GForm::Divisor, 0).is_err());
        assert!(PipelineConfig::desk(11, 300, 11, 1, GForm::Divisor, 0).is_err());
        assert!(PipelineConfig::desk(11, 300, 3, 3, GForm::Divisor, 0).is_err());
    }
}
