//! Hecke eigenvalue sequences and the prime amplifier.
//!
//! Three families are built in: the divisor function (Eisenstein series of
//! level 1), Ramanujan's Δ normalized to weight 0, and synthetic sequences
//! that satisfy the Hecke relations of a level-`p` newform with nebentypus χ
//! by construction. Sequences can also be imported from CSV.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{self, gcd, KahanSum};
use crate::charsums::DirichletCharacter;

pub const DIVISOR_MAX: usize = 10_000_000;
pub const DELTA_MAX: usize = 100_000;
pub const SYNTHETIC_MAX: usize = 1_000_000;
pub const HECKE_TOLERANCE: f64 = 1e-9;
pub const AMPLIFIER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModformError {
    #[error("|lambda_p| = {0} exceeds 1")]
    InvalidLambdaP(f64),
    #[error("level {level} must exceed the amplifier length {l}")]
    LevelTooSmall { level: u64, l: u64 },
    #[error("character modulus {0} is not prime")]
    ModulusNotPrime(u64),
    #[error("requested {requested} coefficients, the limit is {limit}")]
    TooManyCoefficients { requested: usize, limit: usize },
    #[error("coefficient {n} is beyond the cached range 1..={n_max}")]
    OutOfRange { n: u64, n_max: usize },
    #[error("CSV import failed: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SequenceKind {
    DivisorEisenstein,
    DeltaForm,
    SyntheticHecke,
    Imported,
}

/// `λ(1..=n_max)` together with the data of the form it belongs to.
#[derive(Debug, Clone)]
pub struct CoefficientSequence {
    kind: SequenceKind,
    level: u64,
    weight: i32,
    nebentypus: DirichletCharacter,
    /// Carried for completeness; no tested identity depends on its value.
    fricke_eigenvalue: Complex64,
    values: Arc<Vec<Complex64>>,
}

fn check_size(n_max: usize, limit: usize) -> Result<(), ModformError> {
    if n_max > limit {
        return Err(ModformError::TooManyCoefficients {
            requested: n_max,
            limit,
        });
    }
    Ok(())
}

impl CoefficientSequence {
    /// Wraps explicit values `λ(1), λ(2), …`.
    pub fn from_values(
        kind: SequenceKind,
        level: u64,
        weight: i32,
        nebentypus: DirichletCharacter,
        values: Vec<Complex64>,
    ) -> Self {
        let mut v = Vec::with_capacity(values.len() + 1);
        v.push(Complex64::new(0.0, 0.0));
        v.extend(values);
        CoefficientSequence {
            kind,
            level,
            weight,
            nebentypus,
            fricke_eigenvalue: Complex64::new(1.0, 0.0),
            values: Arc::new(v),
        }
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    pub fn weight(&self) -> i32 {
        self.weight
    }

    pub fn nebentypus(&self) -> &DirichletCharacter {
        &self.nebentypus
    }

    pub fn fricke_eigenvalue(&self) -> Complex64 {
        self.fricke_eigenvalue
    }

    pub fn with_fricke_eigenvalue(mut self, eta: Complex64) -> Self {
        self.fricke_eigenvalue = eta / eta.norm();
        self
    }

    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `λ(n)`; panics beyond the cached range.
    pub fn lambda(&self, n: u64) -> Complex64 {
        self.values[n as usize]
    }

    pub fn get(&self, n: u64) -> Result<Complex64, ModformError> {
        if n == 0 || n as usize > self.n_max() {
            return Err(ModformError::OutOfRange {
                n,
                n_max: self.n_max(),
            });
        }
        Ok(self.values[n as usize])
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values[1..]
    }

    pub fn chi(&self, n: i64) -> Complex64 {
        self.nebentypus.eval(n)
    }

    /// Writes `n,re,im` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ModformError> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| ModformError::Csv(e.to_string());
        wr.write_record(["n", "re", "im"]).map_err(err)?;
        for (n, z) in self.values().iter().enumerate() {
            wr.write_record([(n + 1).to_string(), format!("{:e}", z.re), format!("{:e}", z.im)])
                .map_err(err)?;
        }
        wr.flush().map_err(|e| ModformError::Csv(e.to_string()))
    }

    /// Reads rows written by [`write_csv`](Self::write_csv); `n` must run `1, 2, …` without gaps.
    pub fn read_csv<R: Read>(
        r: R,
        level: u64,
        weight: i32,
        nebentypus: DirichletCharacter,
    ) -> Result<Self, ModformError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut values = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| ModformError::Csv(e.to_string()))?;
            let field = |k: usize| -> Result<&str, ModformError> {
                rec.get(k).ok_or_else(|| ModformError::Csv(format!("row {} has too few fields", i + 1)))
            };
            let n: usize = field(0)?
                .trim()
                .parse()
                .map_err(|e| ModformError::Csv(format!("row {}: {e}", i + 1)))?;
            if n != i + 1 {
                return Err(ModformError::Csv(format!("expected n = {}, found {n}", i + 1)));
            }
            let parse = |s: &str| -> Result<f64, ModformError> {
                s.trim()
                    .parse()
                    .map_err(|e| ModformError::Csv(format!("row {}: {e}", i + 1)))
            };
            values.push(Complex64::new(parse(field(1)?)?, parse(field(2)?)?));
        }
        Ok(Self::from_values(SequenceKind::Imported, level, weight, nebentypus, values))
    }
}

/// `λ(n) = d(n)`, the Hecke eigenvalues of the weight-0 Eisenstein series.
pub fn coeffs_divisor(n_max: usize) -> Result<CoefficientSequence, ModformError> {
    check_size(n_max, DIVISOR_MAX)?;
    let mut d = vec![0u32; n_max + 1];
    for i in 1..=n_max {
        for j in (i..=n_max).step_by(i) {
            d[j] += 1;
        }
    }
    let values = d[1..].iter().map(|&x| Complex64::new(x as f64, 0.0)).collect();
    Ok(CoefficientSequence::from_values(
        SequenceKind::DivisorEisenstein,
        1,
        0,
        DirichletCharacter::principal(1),
        values,
    ))
}

/// `P(q)^3 = Π(1 − q^m)^3 = Σ_k (−1)^k (2k+1) q^{k(k+1)/2}` up to `q^len`, as sparse pairs.
fn cube_of_euler_product(len: usize) -> Vec<(usize, i128)> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let e = k * (k + 1) / 2;
        if e > len {
            break;
        }
        let c = (2 * k + 1) as i128;
        out.push((e, if k.is_multiple_of(2) { c } else { -c }));
        k += 1;
    }
    out
}

/// Ramanujan's `τ(1..=n_max)` from `q·Π(1 − q^m)^24`.
///
/// The product is `(P^3)^8`, and `P^3` is sparse, so each of the eight
/// multiplications costs `O(n_max^{3/2})`.
pub fn ramanujan_tau(n_max: usize) -> Vec<i128> {
    let len = n_max.saturating_sub(1);
    let sparse = cube_of_euler_product(len);
    let mut acc = vec![0i128; len + 1];
    acc[0] = 1;
    for _ in 0..8 {
        let mut next = vec![0i128; len + 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for &(e, c) in &sparse {
                if i + e > len {
                    break;
                }
                next[i + e] += a * c;
            }
        }
        acc = next;
    }
    // τ(n) is the coefficient of q^{n−1} in P^24
    acc.truncate(n_max);
    acc
}

/// `λ(n) = τ(n)/n^{11/2}` for Δ, the weight-12 level-1 cusp form.
pub fn coeffs_delta_form(n_max: usize) -> Result<CoefficientSequence, ModformError> {
    check_size(n_max, DELTA_MAX)?;
    let tau = ramanujan_tau(n_max);
    let values = tau
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let n = (i + 1) as f64;
            Complex64::new(t as f64 / n.powf(5.5), 0.0)
        })
        .collect();
    Ok(CoefficientSequence::from_values(
        SequenceKind::DeltaForm,
        1,
        12,
        DirichletCharacter::principal(1),
        values,
    ))
}

/// The square root of a unit complex number with argument in `[0, π)`.
pub fn upper_sqrt(z: Complex64) -> Complex64 {
    let mut theta = z.arg();
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    if theta >= 2.0 * PI {
        theta -= 2.0 * PI;
    }
    Complex64::from_polar(1.0, theta / 2.0)
}

/// A sequence with the Hecke structure of a newform of prime level `p = mod χ`.
///
/// For each prime `q ≠ p`, in increasing order, an angle `t_q ∈ [0, π)` is
/// drawn from ChaCha8 seeded with `seed` and `λ(q) = 2cos(t_q)·s_q` with
/// `s_q² = χ(q)`. Prime powers follow the Hecke recursion and the rest is
/// multiplicative. `λ(p^r) = lambda_p^r`.
pub fn coeffs_synthetic(
    n_max: usize,
    chi: &DirichletCharacter,
    lambda_p: Complex64,
    seed: u64,
) -> Result<CoefficientSequence, ModformError> {
    check_size(n_max, SYNTHETIC_MAX)?;
    let p = chi.modulus();
    if !arith::is_prime(p) {
        return Err(ModformError::ModulusNotPrime(p));
    }
    if lambda_p.norm() > 1.0 + 1e-15 {
        return Err(ModformError::InvalidLambdaP(lambda_p.norm()));
    }
    let spf = arith::smallest_prime_factors(n_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = Complex64::new(0.0, 0.0);
    let mut lam = vec![zero; n_max + 1];
    if n_max >= 1 {
        lam[1] = Complex64::new(1.0, 0.0);
    }
    for q in 2..=n_max {
        if spf[q] as usize != q {
            continue;
        }
        let (l1, chi_q) = if q as u64 == p {
            (lambda_p, zero)
        } else {
            let t: f64 = rng.gen::<f64>() * PI;
            let cq = chi.eval(q as i64);
            (2.0 * t.cos() * upper_sqrt(cq), cq)
        };
        // λ(q^{r+1}) = λ(q)λ(q^r) − χ(q)λ(q^{r−1})
        let (mut prev, mut cur) = (Complex64::new(1.0, 0.0), l1);
        let mut qr = q;
        loop {
            lam[qr] = cur;
            match qr.checked_mul(q) {
                Some(next) if next <= n_max => {
                    let nxt = l1 * cur - chi_q * prev;
                    prev = cur;
                    cur = nxt;
                    qr = next;
                }
                _ => break,
            }
        }
    }
    for n in 2..=n_max {
        let q = spf[n] as usize;
        let mut m = n;
        let mut qr = 1;
        while m % q == 0 {
            m /= q;
            qr *= q;
        }
        if m > 1 {
            lam[n] = lam[qr] * lam[m];
        }
    }
    lam.remove(0);
    Ok(CoefficientSequence::from_values(
        SequenceKind::SyntheticHecke,
        p,
        2,
        chi.clone(),
        lam,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeckeReport {
    pub m: u64,
    /// Worst deviation in `λ(mn) = Σ_{d|(m,n)} μ(d)χ(d)λ(m/d)λ(n/d)`.
    pub max_dev_product: f64,
    /// Worst deviation in `λ(m)λ(n) = Σ_{d|(m,n)} χ(d)λ(mn/d²)`.
    pub max_dev_inverse: f64,
    /// Worst deviation in `λ(n) = χ(n)·conj(λ(n))` for `gcd(n, level) = 1`, `n ≤ m²`.
    pub max_dev_conjugation: f64,
    pub pass: bool,
}

impl HeckeReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_dev_product
            .max(self.max_dev_inverse)
            .max(self.max_dev_conjugation)
    }
}

/// Checks both Hecke identities for all `m, n ≤ M`.
pub fn hecke_check(seq: &CoefficientSequence, m_max: u64) -> Result<HeckeReport, ModformError> {
    let need = m_max * m_max;
    if need as usize > seq.n_max() {
        return Err(ModformError::OutOfRange {
            n: need,
            n_max: seq.n_max(),
        });
    }
    let divs: Vec<Vec<u64>> = (0..=m_max)
        .map(|g| if g == 0 { vec![] } else { arith::divisors(g) })
        .collect();
    let mut dev_prod: f64 = 0.0;
    let mut dev_inv: f64 = 0.0;
    for m in 1..=m_max {
        for n in m..=m_max {
            let g = gcd(m, n);
            let mut fwd = KahanSum::new();
            let mut inv = KahanSum::new();
            for &d in &divs[g as usize] {
                let cd = seq.chi(d as i64);
                let mu = arith::mobius(d) as f64;
                if mu != 0.0 {
                    fwd.add(mu * cd * seq.lambda(m / d) * seq.lambda(n / d));
                }
                inv.add(cd * seq.lambda(m * n / (d * d)));
            }
            dev_prod = dev_prod.max((seq.lambda(m * n) - fwd.value()).norm());
            dev_inv = dev_inv.max((seq.lambda(m) * seq.lambda(n) - inv.value()).norm());
        }
    }
    let mut dev_conj: f64 = 0.0;
    for n in 1..=need {
        if gcd(n, seq.level) == 1 {
            let z = seq.lambda(n);
            dev_conj = dev_conj.max((z - seq.chi(n as i64) * z.conj()).norm());
        }
    }
    let pass = dev_prod.max(dev_inv).max(dev_conj) <= HECKE_TOLERANCE;
    Ok(HeckeReport {
        m: m_max,
        max_dev_product: dev_prod,
        max_dev_inverse: dev_inv,
        max_dev_conjugation: dev_conj,
        pass,
    })
}

/// Primes `ν` with `L/2 < ν ≤ L`.
pub fn amplifier_primes(l: u64) -> Vec<u64> {
    arith::primes_up_to(l).into_iter().filter(|&v| 2 * v > l).collect()
}

fn check_level(seq: &CoefficientSequence, l: u64) -> Result<(), ModformError> {
    if seq.level > 1 && seq.level <= l {
        return Err(ModformError::LevelTooSmall { level: seq.level, l });
    }
    Ok(())
}

/// `a_j(ν)`: `conj λ(ν)` for `j = 1` and `−conj χ(ν)` for `j = 2`.
pub fn amplifier_weight(seq: &CoefficientSequence, j: u32, nu: u64) -> Complex64 {
    match j {
        1 => seq.lambda(nu).conj(),
        2 => -seq.chi(nu as i64).conj(),
        _ => panic!("amplifier power must be 1 or 2"),
    }
}

/// The pairs `(ℓ, b_j(ℓ))` with `ℓ = ν^j`, `b_1(ℓ) = conj λ(ℓ)` and
/// `b_2(ℓ) = conj χ(√ℓ)`. For `j = 2` this is `−a_2(ν)`, so `Σ b_j(ℓ) λ(ℓ)`
/// equals `A_1(L)` and `−A_2(L)` respectively.
pub fn amplifier_coefficients(
    seq: &CoefficientSequence,
    l: u64,
    j: u32,
) -> Result<Vec<(u64, Complex64)>, ModformError> {
    check_level(seq, l)?;
    let out = amplifier_primes(l)
        .into_iter()
        .map(|nu| {
            let ell = nu.pow(j);
            let b = match j {
                1 => seq.lambda(nu).conj(),
                _ => seq.chi(nu as i64).conj(),
            };
            (ell, b)
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplifierReport {
    pub l: u64,
    pub a1: Complex64,
    pub a2: Complex64,
    pub a: Complex64,
    pub prime_count: u64,
}

impl AmplifierReport {
    pub fn deviation(&self) -> f64 {
        (self.a - Complex64::new(self.prime_count as f64, 0.0)).norm()
    }
}

/// `A_1(L) = Σ|λ(ν)|²` and `A_2(L) = −Σ conj χ(ν)·λ(ν²)` over primes in `(L/2, L]`.
pub fn amplifier_eval(seq: &CoefficientSequence, l: u64) -> Result<AmplifierReport, ModformError> {
    check_level(seq, l)?;
    if (l * l) as usize > seq.n_max() {
        return Err(ModformError::OutOfRange {
            n: l * l,
            n_max: seq.n_max(),
        });
    }
    let primes = amplifier_primes(l);
    let mut a1 = KahanSum::new();
    let mut a2 = KahanSum::new();
    for &nu in &primes {
        a1.add(amplifier_weight(seq, 1, nu) * seq.lambda(nu));
        a2.add(amplifier_weight(seq, 2, nu) * seq.lambda(nu * nu));
    }
    let (a1, a2) = (a1.value(), a2.value());
    Ok(AmplifierReport {
        l,
        a1,
        a2,
        a: a1 + a2,
        prime_count: primes.len() as u64,
    })
}

/// `Σ_{n≤N} |λ(n)|² / N`.
pub fn l2_ratio(seq: &CoefficientSequence, n: usize) -> Result<f64, ModformError> {
    if n == 0 || n > seq.n_max() {
        return Err(ModformError::OutOfRange {
            n: n as u64,
            n_max: seq.n_max(),
        });
    }
    let s = arith::ksum_real(seq.values()[..n].iter().map(|z| z.norm_sqr()));
    Ok(s / n as f64)
}
