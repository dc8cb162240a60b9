//! The Poisson-dual character sum `Ŝ(m)`: brute force, CRT closed form,
//! reciprocity variants, the `α₀` kernel and its Fourier decomposition over
//! characters modulo `c₁₀c₂₀`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{self, gcd, gcd_i, inv_mod, modulo_wide, KahanSum, RootTable};
use crate::charsums::{characters_mod, ramanujan_sum, DirichletCharacter};

/// Largest `c₁c₂` for a single brute-force evaluation.
pub const BRUTEFORCE_MAX: u64 = 1_000_000;
/// Largest `(c₁c₂)²` for a full brute-force spectrum.
pub const SPECTRUM_BUDGET: u64 = 100_000_000;
/// Closed forms are compared against brute force at this multiple of `c₁c₂`.
pub const SHAT_TOLERANCE: f64 = 1e-8;
pub const ETA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShevalError {
    #[error("{terms} terms exceed the budget of {budget}")]
    BudgetExceeded { terms: u64, budget: u64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, ShevalError>;

fn violated(msg: impl Into<String>) -> ShevalError {
    ShevalError::PreconditionViolated(msg.into())
}

/// `c₁ = c₁₀c₁′`, `c₂ = c₂₀c₂′` with `rad(c₁₀) = rad(c₂₀)` and the primed
/// parts coprime to each other and to `c₁₀c₂₀`; `c₀ = (c₁₀, c₂₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CSplit {
    pub c10: u64,
    pub c1p: u64,
    pub c20: u64,
    pub c2p: u64,
    pub c0: u64,
}

/// The full part of `c` supported on primes dividing `shared`.
fn part_supported_on(mut c: u64, shared: u64) -> u64 {
    let mut out = 1;
    for q in arith::factorize(shared).primes() {
        while c.is_multiple_of(q) {
            c /= q;
            out *= q;
        }
    }
    out
}

pub fn c_split(c1: u64, c2: u64) -> CSplit {
    assert!(c1 >= 1 && c2 >= 1, "c_split: moduli must be positive");
    let g = gcd(c1, c2);
    let c10 = part_supported_on(c1, g);
    let c20 = part_supported_on(c2, g);
    CSplit {
        c10,
        c1p: c1 / c10,
        c20,
        c2p: c2 / c20,
        c0: g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShevalInstance {
    pub p: u64,
    pub l1: u64,
    pub l2: u64,
    pub n1: i64,
    pub n2: i64,
    pub c1: u64,
    pub c2: u64,
    pub split: CSplit,
}

impl ShevalInstance {
    pub fn new(p: u64, l1: u64, l2: u64, n1: i64, n2: i64, c1: u64, c2: u64) -> Result<Self> {
        if !arith::is_prime(p) {
            return Err(ShevalError::InvalidInstance(format!("p = {p} is not prime")));
        }
        if l1 == 0 || l2 == 0 || c1 == 0 || c2 == 0 {
            return Err(ShevalError::InvalidInstance("ℓ and c must be positive".into()));
        }
        Ok(ShevalInstance {
            p,
            l1,
            l2,
            n1,
            n2,
            c1,
            c2,
            split: c_split(c1, c2),
        })
    }

    /// `D = ℓ₂n₁ − ℓ₁n₂`.
    pub fn d(&self) -> i64 {
        self.l2 as i64 * self.n1 - self.l1 as i64 * self.n2
    }

    pub fn modulus(&self) -> u64 {
        self.c1 * self.c2
    }

    /// `(c₁, ℓ₁) = (c₂, ℓ₂) = 1`, required by every closed form.
    pub fn closed_form_ok(&self) -> bool {
        gcd(self.c1, self.l1) == 1 && gcd(self.c2, self.l2) == 1
    }

    fn require_closed_form(&self) -> Result<()> {
        if !self.closed_form_ok() {
            return Err(violated(format!(
                "(c1, l1) = {} and (c2, l2) = {} must both be 1",
                gcd(self.c1, self.l1),
                gcd(self.c2, self.l2)
            )));
        }
        Ok(())
    }

    /// Whether the closed form forces `Ŝ(m) = 0`.
    pub fn forced_zero(&self, m: i64) -> bool {
        let s = &self.split;
        m.rem_euclid(s.c0 as i64) != 0 || gcd_i(m, s.c1p * s.c2p) > 1
    }
}

/// `e(num/q)` for a wide numerator.
fn em(num: i128, q: u64) -> Complex64 {
    arith::e_frac_wide(num, q)
}

fn inv(a: i128, q: u64) -> i128 {
    let r = modulo_wide(a, q);
    inv_mod(r as i64, q).expect("caller checked coprimality") as i128
}

/// `S(0, r; c)` for every residue `r mod c`.
fn ramanujan_table(c: u64) -> Vec<i64> {
    (0..c).map(|r| ramanujan_sum(r as i64, c)).collect()
}

/// `c₁c₂·Ŝ` summand weights: `S(0, pn₁ − xℓ₁; c₁)·S(0, pn₂ − xℓ₂; c₂)` for `x mod c₁c₂`.
fn ramanujan_products(inst: &ShevalInstance) -> Vec<i64> {
    let (t1, t2) = (ramanujan_table(inst.c1), ramanujan_table(inst.c2));
    let (p, l1, l2) = (inst.p as i128, inst.l1 as i128, inst.l2 as i128);
    (0..inst.modulus())
        .map(|x| {
            let x = x as i128;
            let r1 = modulo_wide(p * inst.n1 as i128 - x * l1, inst.c1);
            let r2 = modulo_wide(p * inst.n2 as i128 - x * l2, inst.c2);
            t1[r1 as usize] * t2[r2 as usize]
        })
        .collect()
}

/// `Ŝ(m) = (1/c₁c₂) Σ_{x mod c₁c₂} S(0, pn₁ − xℓ₁; c₁) S(0, pn₂ − xℓ₂; c₂) e(xm/c₁c₂)`.
pub fn shat_bruteforce(inst: &ShevalInstance, m: i64) -> Result<Complex64> {
    let q = inst.modulus();
    if q > BRUTEFORCE_MAX {
        return Err(ShevalError::BudgetExceeded {
            terms: q,
            budget: BRUTEFORCE_MAX,
        });
    }
    let f = ramanujan_products(inst);
    let roots = RootTable::new(q);
    let mr = arith::modulo(m, q) as u128;
    let mut acc = KahanSum::new();
    for (x, &v) in f.iter().enumerate() {
        if v != 0 {
            acc.add(roots.at_residue((x as u128 * mr % q as u128) as u64) * v as f64);
        }
    }
    Ok(acc.value() / q as f64)
}

/// Brute-force `Ŝ(m)` for every `m mod c₁c₂`.
pub fn shat_spectrum(inst: &ShevalInstance) -> Result<Vec<Complex64>> {
    let q = inst.modulus();
    if q * q > SPECTRUM_BUDGET {
        return Err(ShevalError::BudgetExceeded {
            terms: q * q,
            budget: SPECTRUM_BUDGET,
        });
    }
    let f = ramanujan_products(inst);
    let support: Vec<(u64, f64)> = f
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(x, &v)| (x as u64, v as f64))
        .collect();
    let roots = RootTable::new(q);
    Ok((0..q)
        .map(|m| {
            let mut acc = KahanSum::new();
            for &(x, v) in &support {
                acc.add(roots.at_residue(x * m % q) * v);
            }
            acc.value() / q as f64
        })
        .collect())
}

/// `Σ*_{t₁ mod c₁₀} Σ*_{t₂ mod c₂₀} e_{c₁₀}(a₁t₁) e_{c₂₀}(a₂t₂)` over `c₂₀t₁ + c₁₀t₂ ≡ m (mod c₁₀c₂₀)`.
///
/// For each `t₁` the congruence fixes `t₂ mod c₂₀` when `c₁₀ | m − c₂₀t₁`.
pub fn constrained_pair_sum(c10: u64, c20: u64, a1: i128, a2: i128, m: i64) -> Complex64 {
    let big = (c10 * c20) as i128;
    let mut acc = KahanSum::new();
    for t1 in 0..c10 {
        if gcd(t1, c10) != 1 {
            continue;
        }
        let r = (m as i128 - c20 as i128 * t1 as i128).rem_euclid(big);
        if r % c10 as i128 != 0 {
            continue;
        }
        let t2 = (r / c10 as i128) as u64 % c20;
        if gcd(t2, c20) != 1 {
            continue;
        }
        acc.add(em(a1 * t1 as i128, c10) * em(a2 * t2 as i128, c20));
    }
    acc.value()
}

/// CRT closed form of `Ŝ(m)`, zero unless `c₀ | m` and `(m, c₁′c₂′) = 1`.
pub fn shat_closed(inst: &ShevalInstance, m: i64) -> Result<Complex64> {
    inst.require_closed_form()?;
    if inst.forced_zero(m) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let s = &inst.split;
    let (p, l1, l2, m_w) = (inst.p as i128, inst.l1 as i128, inst.l2 as i128, m as i128);
    let (n1, n2) = (inst.n1 as i128, inst.n2 as i128);
    let (c1, c2) = (inst.c1 as i128, inst.c2 as i128);
    let y = (s.c1p * s.c2p) as i128;
    let first = em(inv(s.c10 as i128 * c2 * l1, s.c1p) * p * n1 % s.c1p as i128 * m_w, s.c1p);
    let second = em(inv(s.c20 as i128 * c1 * l2, s.c2p) * p * n2 % s.c2p as i128 * m_w, s.c2p);
    let a1 = inv(y * l1, s.c10) * p * n1;
    let a2 = inv(y * l2, s.c20) * p * n2;
    Ok(first * second * constrained_pair_sum(s.c10, s.c20, a1, a2, m))
}

/// `Ŝ(0) = S(n₁ℓ₂ − n₂ℓ₁, 0; c)` when `c₁ = c₂ = c`; needs `(p, c) = 1`.
pub fn shat_zero(inst: &ShevalInstance) -> Result<Complex64> {
    inst.require_closed_form()?;
    if inst.c1 != inst.c2 {
        return Err(violated("the zero-frequency formula needs c1 = c2"));
    }
    if gcd(inst.p, inst.c1) != 1 {
        return Err(violated("the zero-frequency formula needs (p, c) = 1"));
    }
    Ok(Complex64::new(ramanujan_sum(inst.d(), inst.c1) as f64, 0.0))
}

/// `α_∞ = e_{c₁c₂ℓ₂}(pn₂m)`.
pub fn alpha_infinity(inst: &ShevalInstance, m: i64) -> Complex64 {
    em(
        inst.p as i128 * inst.n2 as i128 * m as i128,
        inst.modulus() * inst.l2,
    )
}

/// `α₀` with the product `c₁′c₂′` replaced by a unit `y mod c₁₀c₂₀`.
pub fn alpha0_at(inst: &ShevalInstance, y: i64, m: i64) -> Result<Complex64> {
    inst.require_closed_form()?;
    let s = &inst.split;
    let big = s.c10 * s.c20;
    if gcd_i(y, big) != 1 {
        return Err(violated(format!("y = {y} is not a unit modulo {big}")));
    }
    let (p, l1, l2) = (inst.p as i128, inst.l1 as i128, inst.l2 as i128);
    let (n1, n2, y) = (inst.n1 as i128, inst.n2 as i128, y as i128);
    let lead = em(-(inv(y * l2, big) * p * n2 % big as i128) * m as i128, big);
    let a1 = inv(y * l1, s.c10) * p * n1;
    let a2 = inv(y * l2, s.c20) * p * n2;
    Ok(lead * constrained_pair_sum(s.c10, s.c20, a1, a2, m))
}

/// `α₀(m)`, the `c₁₀c₂₀` part of `Ŝ(m)` after reciprocity.
pub fn alpha0(inst: &ShevalInstance, m: i64) -> Result<Complex64> {
    let y = (inst.split.c1p * inst.split.c2p) as i64;
    alpha0_at(inst, y, m)
}

/// `Ŝ(m) = α_∞ · α₀(m) · e_{c₁′}(\overline{c₁₀c₂ℓ₁} pn₁m) · e_{c₁′ℓ₂}(−\overline{c₁₀c₂} pn₂m)`.
pub fn shat_via_alpha0(inst: &ShevalInstance, m: i64) -> Result<Complex64> {
    inst.require_closed_form()?;
    let s = &inst.split;
    if gcd_i(m, s.c1p * s.c2p) != 1 {
        return Err(violated("needs (m, c1'c2') = 1"));
    }
    let (p, m_w) = (inst.p as i128, m as i128);
    let c2 = inst.c2 as i128;
    let first = em(
        inv(s.c10 as i128 * c2 * inst.l1 as i128, s.c1p) * p * inst.n1 as i128 % s.c1p as i128 * m_w,
        s.c1p,
    );
    let q = s.c1p * inst.l2;
    let second = em(-(inv(s.c10 as i128 * c2, q) * p * inst.n2 as i128 % q as i128) * m_w, q);
    Ok(alpha_infinity(inst, m) * alpha0(inst, m)? * first * second)
}

/// The phase multiplying `α_∞·α₀(m)` after combining by `D`, in both cases
/// `(ℓ₁, ℓ₂) = 1` and `(ℓ₁, ℓ₂) > 1`.
pub fn reciprocity_phase(inst: &ShevalInstance, m: i64) -> Result<Complex64> {
    inst.require_closed_form()?;
    let s = &inst.split;
    if gcd_i(m, s.c1p * s.c2p) != 1 {
        return Err(violated("needs (m, c1'c2') = 1"));
    }
    let (p, m_w, d) = (inst.p as i128, m as i128, inst.d() as i128);
    let (l1, l2) = (inst.l1 as i128, inst.l2 as i128);
    let c2 = inst.c2 as i128;
    if gcd(inst.l1, inst.l2) == 1 {
        let q = s.c1p * inst.l2;
        Ok(em(inv(s.c10 as i128 * c2 * l1, q) * p % q as i128 * m_w % q as i128 * d, q))
    } else {
        if gcd(inst.l2, s.c1p) != 1 {
            return Err(violated("needs (l2, c1') = 1 when (l1, l2) > 1"));
        }
        let outer = em(
            -(inv(inst.c1 as i128 * c2, inst.l2) * p * inst.n2 as i128 % l2) * m_w,
            inst.l2,
        );
        let inner = em(
            inv(s.c10 as i128 * c2 * l1 * l2, s.c1p) * p % s.c1p as i128 * m_w % s.c1p as i128 * d,
            s.c1p,
        );
        Ok(outer * inner)
    }
}

/// `Ŝ(m) = α_∞ · α₀(m) · (reciprocity phase)`.
pub fn shat_reciprocity(inst: &ShevalInstance, m: i64) -> Result<Complex64> {
    let phase = reciprocity_phase(inst, m)?;
    Ok(alpha_infinity(inst, m) * alpha0(inst, m)? * phase)
}

// ---------------------------------------------------------------- α̂

/// Values of `α₀` at every unit `y mod c₁₀c₂₀`, ready for transforms.
#[derive(Debug, Clone)]
pub struct Alpha0Table {
    pub modulus: u64,
    pub m: i64,
    pub units: Vec<u64>,
    pub values: Vec<Complex64>,
}

pub fn alpha0_table(inst: &ShevalInstance, m: i64) -> Result<Alpha0Table> {
    let big = inst.split.c10 * inst.split.c20;
    let units: Vec<u64> = (0..big).filter(|&y| gcd(y, big) == 1).collect();
    let values = units
        .iter()
        .map(|&y| alpha0_at(inst, y as i64, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Alpha0Table {
        modulus: big,
        m,
        units,
        values,
    })
}

impl Alpha0Table {
    /// `α̂(ψ, m) = (1/φ) Σ_x ψ̄(x) α₀(x, m)`.
    pub fn transform(&self, psi: &DirichletCharacter) -> Result<Complex64> {
        if psi.modulus() != self.modulus {
            return Err(violated(format!(
                "character modulus {} differs from c10*c20 = {}",
                psi.modulus(),
                self.modulus
            )));
        }
        let mut acc = KahanSum::new();
        for (&y, &v) in self.units.iter().zip(&self.values) {
            acc.add(psi.eval(y as i64).conj() * v);
        }
        Ok(acc.value() / self.units.len() as f64)
    }
}

pub fn alphahat(inst: &ShevalInstance, psi: &DirichletCharacter, m: i64) -> Result<Complex64> {
    alpha0_table(inst, m)?.transform(psi)
}

/// `α̂(ψ, m)` for every `ψ mod c₁₀c₂₀`, in the order of [`characters_mod`].
pub fn alphahat_all(inst: &ShevalInstance, m: i64) -> Result<(Vec<DirichletCharacter>, Vec<Complex64>)> {
    let table = alpha0_table(inst, m)?;
    let chars = characters_mod(table.modulus);
    let vals = chars
        .iter()
        .map(|psi| table.transform(psi))
        .collect::<Result<Vec<_>>>()?;
    Ok((chars, vals))
}

/// `m = c₀·m₀′·m′` with `m₀′ | (c₁₀c₂₀)^∞` positive and `(m′, c₁₀c₂₀) = 1`;
/// `None` when `c₀ ∤ m` or `m = 0`.
pub fn split_frequency(m: i64, split: &CSplit) -> Option<(i64, i64)> {
    if m == 0 || m.rem_euclid(split.c0 as i64) != 0 {
        return None;
    }
    let rest = m / split.c0 as i64;
    let m0 = part_supported_on(rest.unsigned_abs(), split.c10 * split.c20) as i64;
    Some((m0, rest / m0))
}

/// Largest deviation in `α₀(y) = Σ_ψ α̂(ψ)ψ(y)` over all units `y`.
pub fn reconstruction_error(inst: &ShevalInstance, m: i64) -> Result<f64> {
    let table = alpha0_table(inst, m)?;
    let chars = characters_mod(table.modulus);
    let hats = chars
        .iter()
        .map(|psi| table.transform(psi))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0f64;
    for (&y, &v) in table.units.iter().zip(&table.values) {
        let sum = arith::ksum(chars.iter().zip(&hats).map(|(psi, &h)| h * psi.eval(y as i64)));
        worst = worst.max((sum - v).norm());
    }
    Ok(worst)
}

/// Largest deviation in `α̂(ψ, m) = ψ̄(m′)·α̂(ψ, c₀m₀′)` over all `ψ`; `None`
/// when `m` has no such factorization.
pub fn factorization_error(inst: &ShevalInstance, m: i64) -> Result<Option<f64>> {
    let Some((m0, mp)) = split_frequency(m, &inst.split) else {
        return Ok(None);
    };
    let c0 = inst.split.c0 as i64;
    let (chars, full) = alphahat_all(inst, m)?;
    let (_, reduced) = alphahat_all(inst, c0 * m0)?;
    let worst = chars
        .iter()
        .zip(full.iter().zip(&reduced))
        .map(|(psi, (&f, &r))| (f - psi.eval(mp).conj() * r).norm())
        .fold(0.0, f64::max);
    Ok(Some(worst))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Report {
    pub c10: u64,
    pub c20: u64,
    pub d: i64,
    pub m0: i64,
    pub l1: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `Σ_ψ |α̂(ψ, c₀m₀′)|` against `d(c₁₀c₂₀)²·(D, c₁₀, c₂₀)·Π_{v_q(c₁₀)=v_q(c₂₀)} √q`.
pub fn alphahat_l1_check(inst: &ShevalInstance, m0: i64) -> Result<L1Report> {
    let s = inst.split;
    let (_, vals) = alphahat_all(inst, s.c0 as i64 * m0)?;
    let l1 = arith::ksum_real(vals.iter().map(|z| z.norm()));
    let f1 = arith::factorize(s.c10);
    let f2 = arith::factorize(s.c20);
    let balanced: f64 = f1
        .primes()
        .filter(|&q| f1.valuation(q) == f2.valuation(q))
        .map(|q| (q as f64).sqrt())
        .product();
    let d = inst.d();
    let bound = (arith::num_divisors(s.c10 * s.c20) as f64).powi(2) * gcd_i(d, s.c0) as f64 * balanced;
    Ok(L1Report {
        c10: s.c10,
        c20: s.c20,
        d,
        m0,
        l1,
        bound,
        pass: l1 <= bound * (1.0 + 1e-12),
    })
}

// ---------------------------------------------------------------- η separation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaReport {
    pub l2: u64,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub abs_error: f64,
    pub pass: bool,
}

/// `e_{ℓ₂}(−\overline{c₁c₂} pn₂m) = (1/φ(ℓ₂)) Σ_{η mod ℓ₂} τ(η̄) η(−\overline{c₁c₂} pn₂m)`.
pub fn eta_separation_check(l2: u64, c1: u64, c2: u64, p: u64, n2: i64, m: i64) -> Result<EtaReport> {
    if l2 == 0 {
        return Err(violated("l2 must be positive"));
    }
    if gcd_i(n2 * m, l2) != 1 && l2 > 1 {
        return Err(violated("needs (l2, n2*m) = 1"));
    }
    if gcd(c1 * c2, l2) != 1 || gcd(p, l2) != 1 {
        return Err(violated("needs (c1*c2*p, l2) = 1"));
    }
    let arg = -(inv((c1 * c2) as i128, l2) * p as i128 % l2 as i128) * (n2 as i128 * m as i128 % l2 as i128);
    let lhs = em(arg, l2);
    let chars = characters_mod(l2);
    let a = modulo_wide(arg, l2) as i64;
    let rhs = arith::ksum(chars.iter().map(|eta| eta.conj().gauss_sum() * eta.eval(a))) / chars.len() as f64;
    let abs_error = (lhs - rhs).norm();
    Ok(EtaReport {
        l2,
        lhs,
        rhs,
        abs_error,
        pass: abs_error <= ETA_TOLERANCE * chars.len() as f64,
    })
}

// ---------------------------------------------------------------- grids

/// Exhaustive comparison grid for the closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShatGrid {
    pub c_max: u64,
    pub primes: Vec<u64>,
    pub ell_pairs: Vec<(u64, u64)>,
    pub n_max: i64,
}

impl Default for ShatGrid {
    fn default() -> Self {
        ShatGrid {
            c_max: 24,
            primes: vec![11, 13],
            ell_pairs: vec![(3, 5), (5, 7), (3, 9)],
            n_max: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShatFailure {
    pub p: u64,
    pub l1: u64,
    pub l2: u64,
    pub n1: i64,
    pub n2: i64,
    pub c1: u64,
    pub c2: u64,
    pub m: i64,
    pub check: &'static str,
    pub brute_re: f64,
    pub brute_im: f64,
    pub other_re: f64,
    pub other_im: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ShatGridReport {
    pub instances: u64,
    pub skipped_instances: u64,
    pub evaluations: u64,
    pub reciprocity_evaluations: u64,
    pub zero_formula_checks: u64,
    pub forced_zero_checks: u64,
    /// Largest `|closed − brute| / (c₁c₂)`.
    pub max_scaled_error: f64,
    pub failures: Vec<ShatFailure>,
}

impl ShatGridReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    fn merge(mut self, other: ShatGridReport) -> ShatGridReport {
        self.instances += other.instances;
        self.skipped_instances += other.skipped_instances;
        self.evaluations += other.evaluations;
        self.reciprocity_evaluations += other.reciprocity_evaluations;
        self.zero_formula_checks += other.zero_formula_checks;
        self.forced_zero_checks += other.forced_zero_checks;
        self.max_scaled_error = self.max_scaled_error.max(other.max_scaled_error);
        self.failures.extend(other.failures);
        self
    }

    /// Failing instances as CSV.
    pub fn write_failures_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for f in &self.failures {
            wtr.serialize(f).map_err(|e| ShevalError::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| ShevalError::Csv(e.to_string()))?;
        Ok(())
    }
}

fn failure(inst: &ShevalInstance, m: i64, check: &'static str, brute: Complex64, other: Complex64) -> ShatFailure {
    ShatFailure {
        p: inst.p,
        l1: inst.l1,
        l2: inst.l2,
        n1: inst.n1,
        n2: inst.n2,
        c1: inst.c1,
        c2: inst.c2,
        m,
        check,
        brute_re: brute.re,
        brute_im: brute.im,
        other_re: other.re,
        other_im: other.im,
        abs_diff: (brute - other).norm(),
    }
}

/// Checks one instance over every `m mod c₁c₂`: closed form, vanishing
/// pattern, reciprocity form and the zero-frequency formula.
pub fn check_instance(inst: &ShevalInstance) -> Result<ShatGridReport> {
    let mut rep = ShatGridReport::default();
    if !inst.closed_form_ok() {
        rep.skipped_instances = 1;
        return Ok(rep);
    }
    rep.instances = 1;
    let q = inst.modulus();
    let tol = SHAT_TOLERANCE * q as f64;
    let spectrum = shat_spectrum(inst)?;
    for (m, &brute) in spectrum.iter().enumerate() {
        let m = m as i64;
        let closed = shat_closed(inst, m)?;
        rep.evaluations += 1;
        let err = (closed - brute).norm();
        rep.max_scaled_error = rep.max_scaled_error.max(err / q as f64);
        if err > tol {
            rep.failures.push(failure(inst, m, "closed", brute, closed));
        }
        if inst.forced_zero(m) {
            rep.forced_zero_checks += 1;
            if brute.norm() > SHAT_TOLERANCE {
                rep.failures.push(failure(inst, m, "vanishing", brute, Complex64::new(0.0, 0.0)));
            }
        } else {
            let rec = shat_reciprocity(inst, m)?;
            let via = shat_via_alpha0(inst, m)?;
            rep.reciprocity_evaluations += 1;
            if (rec - brute).norm() > tol {
                rep.failures.push(failure(inst, m, "reciprocity", brute, rec));
            }
            if (via - brute).norm() > tol {
                rep.failures.push(failure(inst, m, "alpha0_form", brute, via));
            }
        }
    }
    let zero = spectrum[0];
    if inst.c1 != inst.c2 {
        rep.zero_formula_checks += 1;
        if zero.norm() > SHAT_TOLERANCE {
            rep.failures.push(failure(inst, 0, "zero_offdiagonal", zero, Complex64::new(0.0, 0.0)));
        }
    } else if gcd(inst.p, inst.c1) == 1 {
        rep.zero_formula_checks += 1;
        let z = shat_zero(inst)?;
        if (z - zero).norm() > tol {
            rep.failures.push(failure(inst, 0, "zero_formula", zero, z));
        }
    }
    Ok(rep)
}

pub fn run_shat_grid(grid: &ShatGrid) -> Result<ShatGridReport> {
    let mut instances = Vec::new();
    for &p in &grid.primes {
        for &(l1, l2) in &grid.ell_pairs {
            for n1 in 1..=grid.n_max {
                for n2 in 1..=grid.n_max {
                    for c1 in 1..=grid.c_max {
                        for c2 in 1..=grid.c_max {
                            instances.push(ShevalInstance::new(p, l1, l2, n1, n2, c1, c2)?);
                        }
                    }
                }
            }
        }
    }
    instances
        .par_iter()
        .map(check_instance)
        .try_reduce(ShatGridReport::default, |a, b| Ok(a.merge(b)))
}

/// Grid for the `α̂` machinery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaGrid {
    /// Largest `c₁₀c₂₀` in the reconstruction and factorization checks.
    pub product_max: u64,
    /// Largest prime power `q^j` for `c₁₀` and `c₂₀` in the L1 check.
    pub prime_power_max: u64,
    pub primes: Vec<u64>,
    pub ell_pairs: Vec<(u64, u64)>,
    pub n_max: i64,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid {
            product_max: 36,
            prime_power_max: 27,
            primes: vec![11, 13],
            ell_pairs: vec![(3, 5), (5, 7), (3, 9), (7, 11)],
            n_max: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AlphaGridReport {
    pub reconstruction_checks: u64,
    pub factorization_checks: u64,
    pub l1_checks: u64,
    /// Largest reconstruction or factorization deviation over `c₁₀c₂₀`.
    pub max_scaled_error: f64,
    pub l1_failures: Vec<L1Report>,
    /// Largest `l1 / bound`.
    pub worst_l1_ratio: f64,
    pub identity_failures: u64,
}

impl AlphaGridReport {
    pub fn pass(&self) -> bool {
        self.l1_failures.is_empty() && self.identity_failures == 0
    }
}

/// Pairs `(c₁₀, c₂₀)` with equal radicals and `c₁₀c₂₀ ≤ max`.
pub fn same_radical_pairs(max: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for a in 1..=max {
        for b in 1..=max / a {
            if arith::factorize(a).radical() == arith::factorize(b).radical() {
                out.push((a, b));
            }
        }
    }
    out
}

/// `(c₁₀, c₂₀) = (q^a, q^b)` with both at most `max`.
pub fn prime_power_pairs(max: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for q in arith::primes_up_to(max) {
        let mut powers = Vec::new();
        let mut v = q;
        while v <= max {
            powers.push(v);
            v *= q;
        }
        for &a in &powers {
            for &b in &powers {
                out.push((a, b));
            }
        }
    }
    out
}

pub fn run_alpha_grid(grid: &AlphaGrid) -> Result<AlphaGridReport> {
    let mut jobs: Vec<(bool, ShevalInstance)> = Vec::new();
    let admissible = |p: u64, l1: u64, l2: u64, c1: u64, c2: u64| {
        gcd(c1, l1) == 1 && gcd(c2, l2) == 1 && gcd(p, c1 * c2) == 1
    };
    for &p in &grid.primes {
        for &(l1, l2) in &grid.ell_pairs {
            for n1 in 1..=grid.n_max {
                for n2 in 1..=grid.n_max {
                    for (c1, c2) in same_radical_pairs(grid.product_max) {
                        if admissible(p, l1, l2, c1, c2) {
                            jobs.push((false, ShevalInstance::new(p, l1, l2, n1, n2, c1, c2)?));
                        }
                    }
                    for (c1, c2) in prime_power_pairs(grid.prime_power_max) {
                        if admissible(p, l1, l2, c1, c2) {
                            jobs.push((true, ShevalInstance::new(p, l1, l2, n1, n2, c1, c2)?));
                        }
                    }
                }
            }
        }
    }
    let reports = jobs
        .par_iter()
        .map(|(l1_job, inst)| -> Result<AlphaGridReport> {
            let mut rep = AlphaGridReport::default();
            let s = inst.split;
            let big = s.c10 * s.c20;
            let tol = SHAT_TOLERANCE * big as f64;
            if *l1_job {
                let mut powers = vec![1i64];
                let q = arith::factorize(big).primes().next().unwrap_or(1) as i64;
                while q > 1 && (*powers.last().unwrap() as u64) < big * q as u64 {
                    powers.push(powers.last().unwrap() * q);
                }
                for m0 in powers {
                    let r = alphahat_l1_check(inst, m0)?;
                    rep.l1_checks += 1;
                    rep.worst_l1_ratio = rep.worst_l1_ratio.max(r.l1 / r.bound);
                    if !r.pass {
                        rep.l1_failures.push(r);
                    }
                }
            } else {
                for m in 0..2 * big as i64 {
                    if m < big as i64 {
                        let e = reconstruction_error(inst, m)?;
                        rep.reconstruction_checks += 1;
                        rep.max_scaled_error = rep.max_scaled_error.max(e / big as f64);
                        if e > tol {
                            rep.identity_failures += 1;
                        }
                    }
                    if let Some(e) = factorization_error(inst, m)? {
                        rep.factorization_checks += 1;
                        rep.max_scaled_error = rep.max_scaled_error.max(e / big as f64);
                        if e > tol {
                            rep.identity_failures += 1;
                        }
                    }
                }
            }
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reports.into_iter().fold(AlphaGridReport::default(), |mut a, b| {
        a.reconstruction_checks += b.reconstruction_checks;
        a.factorization_checks += b.factorization_checks;
        a.l1_checks += b.l1_checks;
        a.max_scaled_error = a.max_scaled_error.max(b.max_scaled_error);
        a.worst_l1_ratio = a.worst_l1_ratio.max(b.worst_l1_ratio);
        a.identity_failures += b.identity_failures;
        a.l1_failures.extend(b.l1_failures);
        a
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(p: u64, l1: u64, l2: u64, n1: i64, n2: i64, c1: u64, c2: u64) -> ShevalInstance {
        ShevalInstance::new(p, l1, l2, n1, n2, c1, c2).unwrap()
    }

    /// Splitting by scanning every divisor pair.
    fn split_by_scan(c1: u64, c2: u64) -> Vec<(u64, u64)> {
        let rad = |x: u64| arith::factorize(x).radical();
        let mut found = Vec::new();
        for a in arith::divisors(c1) {
            for b in arith::divisors(c2) {
                let (ap, bp) = (c1 / a, c2 / b);
                if rad(a) == rad(b) && gcd(ap, bp) == 1 && gcd(ap * bp, a * b) == 1 {
                    found.push((a, b));
                }
            }
        }
        found
    }

    #[test]
    fn split_is_the_unique_decomposition() {
        for c1 in 1..=40 {
            for c2 in 1..=40 {
                let s = c_split(c1, c2);
                assert_eq!(split_by_scan(c1, c2), vec![(s.c10, s.c20)], "{c1} {c2}");
                assert_eq!(s.c10 * s.c1p, c1);
                assert_eq!(s.c0, gcd(s.c10, s.c20));
            }
        }
        let s = c_split(12, 18);
        assert_eq!((s.c10, s.c1p, s.c20, s.c2p), (12, 1, 18, 1));
        let s = c_split(7, 7);
        assert_eq!((s.c10, s.c20, s.c1p, s.c2p), (7, 7, 1, 1));
        let s = c_split(8, 15);
        assert_eq!((s.c10, s.c20), (1, 1));
    }

    #[test]
    fn trivial_moduli() {
        let i = inst(11, 3, 5, 2, 3, 1, 1);
        assert!((shat_bruteforce(&i, 7).unwrap() - 1.0).norm() < 1e-15);
        assert!((shat_closed(&i, 7).unwrap() - 1.0).norm() < 1e-15);
        assert!((alpha0(&i, 5).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn brute_force_is_periodic() {
        let i = inst(11, 5, 7, 2, 3, 12, 18);
        let q = i.modulus() as i64;
        for m in [0, 4, 17, -3] {
            let a = shat_bruteforce(&i, m).unwrap();
            let b = shat_bruteforce(&i, m + q).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn desk_instance_matches() {
        let i = inst(11, 5, 7, 2, 3, 12, 18);
        let spectrum = shat_spectrum(&i).unwrap();
        for m in 0..i.modulus() as i64 {
            let b = shat_bruteforce(&i, m).unwrap();
            assert!((spectrum[m as usize] - b).norm() < 1e-10);
            let c = shat_closed(&i, m).unwrap();
            assert!((c - b).norm() < 1e-8 * i.modulus() as f64, "m = {m}: {c} vs {b}");
        }
    }

    #[test]
    fn mixed_split_with_reciprocity() {
        // c1 = 12 = 4·3, c2 = 10 = 2·5: c10 = 4, c20 = 2, c1' = 3, c2' = 5
        for (l1, l2) in [(7, 11), (7, 49)] {
            let i = inst(13, l1, l2, 3, 2, 12, 10);
            assert_eq!((i.split.c10, i.split.c20, i.split.c1p, i.split.c2p), (4, 2, 3, 5));
            for m in -40..40 {
                let b = shat_bruteforce(&i, m).unwrap();
                let c = shat_closed(&i, m).unwrap();
                assert!((c - b).norm() < 1e-9, "{l1} {l2} m = {m}");
                if !i.forced_zero(m) {
                    assert!((shat_reciprocity(&i, m).unwrap() - b).norm() < 1e-9);
                    assert!((shat_via_alpha0(&i, m).unwrap() - b).norm() < 1e-9);
                } else {
                    assert!(b.norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn alpha_infinity_cancels_against_the_integral_phase() {
        let i = inst(11, 3, 5, 2, 3, 7, 9);
        for m in [1i64, 2, 4, 5, 8] {
            if i.forced_zero(m) {
                continue;
            }
            let ihat_phase = arith::e(-(m as f64) * i.n2 as f64 * i.p as f64 / (i.l2 * i.modulus()) as f64);
            let stripped = shat_reciprocity(&i, m).unwrap() * ihat_phase;
            let expect = alpha0(&i, m).unwrap() * reciprocity_phase(&i, m).unwrap();
            assert!((stripped - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_phase_when_d_vanishes() {
        // D = 5·3 − 3·5 = 0
        let i = inst(13, 3, 5, 3, 5, 7, 8);
        assert_eq!(i.d(), 0);
        assert!((reciprocity_phase(&i, 1).unwrap() - 1.0).norm() < 1e-14);
    }

    #[test]
    fn zero_frequency() {
        let i = inst(11, 7, 5, 5, 3, 6, 6);
        assert_eq!(i.d(), 4);
        let expect = ramanujan_sum(4, 6) as f64;
        assert!((shat_zero(&i).unwrap() - expect).norm() < 1e-14);
        assert!((shat_bruteforce(&i, 0).unwrap() - expect).norm() < 1e-9);
        // D = 0 gives φ(c)
        let i = inst(11, 3, 5, 3, 5, 8, 8);
        assert!((shat_zero(&i).unwrap() - 4.0).norm() < 1e-14);
        // prime modulus not dividing D gives μ(q) = −1
        let i = inst(11, 3, 5, 2, 3, 7, 7);
        assert!((shat_bruteforce(&i, 0).unwrap() + 1.0).norm() < 1e-9);
        assert!(matches!(shat_zero(&inst(11, 3, 5, 2, 3, 11, 11)), Err(ShevalError::PreconditionViolated(_))));
    }

    #[test]
    fn closed_form_preconditions() {
        let i = inst(11, 3, 5, 2, 3, 6, 7);
        assert!(matches!(shat_closed(&i, 1), Err(ShevalError::PreconditionViolated(_))));
        assert!(ShevalInstance::new(12, 3, 5, 1, 1, 1, 1).is_err());
    }

    #[test]
    fn small_grid_passes() {
        let grid = ShatGrid {
            c_max: 10,
            primes: vec![11],
            ell_pairs: vec![(3, 5), (3, 9)],
            n_max: 2,
        };
        let r = run_shat_grid(&grid).unwrap();
        assert!(r.pass(), "{:?}", &r.failures[..r.failures.len().min(3)]);
        assert!(r.instances > 0 && r.skipped_instances > 0 && r.reciprocity_evaluations > 0);
    }

    #[test]
    fn alphahat_trivial_modulus() {
        let i = inst(11, 3, 5, 2, 3, 7, 9);
        let (chars, vals) = alphahat_all(&i, 4).unwrap();
        assert_eq!(chars.len(), 1);
        assert!((vals[0] - alpha0(&i, 4).unwrap()).norm() < 1e-14);
        let r = alphahat_l1_check(&i, 1).unwrap();
        assert!((r.l1 - 1.0).abs() < 1e-14 && r.pass);
    }

    #[test]
    fn alphahat_reconstruction_and_factorization() {
        let i = inst(13, 5, 7, 2, 1, 12, 18);
        for m in 0..30 {
            assert!(reconstruction_error(&i, m).unwrap() < 1e-9);
            if let Some(e) = factorization_error(&i, m).unwrap() {
                assert!(e < 1e-9, "m = {m}");
            }
        }
    }

    #[test]
    fn unbalanced_prime_power_only_principal() {
        // c10 = 2 < c20 = 8: only principal ψ, equal to S(D, 0; 2)
        let i = inst(11, 3, 5, 3, 1, 2, 8);
        let (chars, vals) = alphahat_all(&i, i.split.c0 as i64).unwrap();
        let expect = ramanujan_sum(i.d(), 2) as f64;
        for (psi, v) in chars.iter().zip(vals) {
            if psi.is_principal() {
                assert!((v - expect).norm() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn alphahat_vanishes_off_the_gcd() {
        let i = inst(11, 3, 5, 2, 3, 4, 8);
        for m in [1, 2, 3, 5, 6, 7] {
            let (_, vals) = alphahat_all(&i, m).unwrap();
            assert!(vals.iter().all(|v| v.norm() < 1e-12), "m = {m}");
        }
    }

    #[test]
    fn eta_separation() {
        let r = eta_separation_check(1, 3, 4, 11, 2, 3).unwrap();
        assert!((r.lhs - 1.0).norm() < 1e-14 && r.pass);
        for (l2, c1, c2, n2, m) in [(5, 3, 4, 2, 3), (5, 7, 8, 1, -2), (9, 5, 7, 2, 4), (7, 12, 5, 3, 10)] {
            let r = eta_separation_check(l2, c1, c2, 11, n2, m).unwrap();
            assert!(r.pass, "{r:?}");
        }
        assert!(eta_separation_check(5, 5, 4, 11, 2, 3).is_err());
        assert!(eta_separation_check(5, 3, 4, 11, 5, 3).is_err());
    }

    #[test]
    fn failure_csv_has_header() {
        let mut rep = ShatGridReport::default();
        let i = inst(11, 3, 5, 2, 3, 4, 6);
        rep.failures.push(failure(&i, 1, "closed", Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)));
        let mut buf = Vec::new();
        rep.write_failures_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p,l1,l2,n1,n2,c1,c2,m,check,brute_re"));
    }
}
