//! Bilinear and trilinear forms in Kloosterman fractions `e(a·m̄/n)`, the
//! Duke–Friedlander–Iwaniec and Bettin–Chandee right-hand sides, and a seeded
//! cancellation experiment.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{self, gcd, inv_mod, KahanSum, RootTable};
use crate::charsums::{characters_mod, DirichletCharacter};

pub const TERM_BUDGET: u64 = 1_000_000_000;
pub const DEFAULT_EPS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KfracError {
    #[error("{terms} terms exceed the budget of {budget}")]
    BudgetExceeded { terms: u64, budget: u64 },
    #[error("coefficient vector {name} has length {got}, expected {expected}")]
    Shape {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// Coefficients `α` on `(M, 2M]`, `β` on `(N, 2N]` and `γ` on `[K, 2K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KfracInstance {
    pub a: i64,
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub gamma: Vec<Complex64>,
}

fn check_len(name: &'static str, v: &[Complex64], expected: u64) -> Result<(), KfracError> {
    if v.len() as u64 != expected {
        return Err(KfracError::Shape {
            name,
            got: v.len(),
            expected: expected as usize,
        });
    }
    Ok(())
}

pub fn norm(v: &[Complex64]) -> f64 {
    arith::ksum_real(v.iter().map(|z| z.norm_sqr())).sqrt()
}

impl KfracInstance {
    /// `alpha.len() == M`, `beta.len() == N`, `gamma.len() == K + 1`.
    pub fn new(
        a: i64,
        alpha: Vec<Complex64>,
        beta: Vec<Complex64>,
        k: u64,
        gamma: Vec<Complex64>,
    ) -> Result<Self, KfracError> {
        let (m, n) = (alpha.len() as u64, beta.len() as u64);
        check_len("gamma", &gamma, k + 1)?;
        if m == 0 || n == 0 || k == 0 {
            return Err(KfracError::Config("ranges must be positive".into()));
        }
        Ok(KfracInstance {
            a,
            m,
            n,
            k,
            alpha,
            beta,
            gamma,
        })
    }

    /// Bilinear instance; `γ` is the single weight 1 at `k = 1` (and 0 at `k = 2`).
    pub fn bilinear(a: i64, alpha: Vec<Complex64>, beta: Vec<Complex64>) -> Result<Self, KfracError> {
        let gamma = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        Self::new(a, alpha, beta, 1, gamma)
    }

    pub fn norms(&self) -> (f64, f64, f64) {
        (norm(&self.alpha), norm(&self.beta), norm(&self.gamma))
    }

    /// `‖α‖‖β‖√(MN)`, the Cauchy–Schwarz ceiling for the bilinear form.
    pub fn trivial_bilinear(&self) -> f64 {
        norm(&self.alpha) * norm(&self.beta) * ((self.m * self.n) as f64).sqrt()
    }

    /// `‖α‖‖β‖‖γ‖√((K+1)MN)`, the same ceiling for the trilinear form.
    pub fn trivial_trilinear(&self) -> f64 {
        let (a, b, g) = self.norms();
        a * b * g * (((self.k + 1) * self.m * self.n) as f64).sqrt()
    }
}

const NOT_COPRIME: u32 = u32::MAX;

/// `a·m̄ mod n` for every `m ∈ (M, 2M]`, `n ∈ (N, 2N]`, with per-`n` root tables.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    a: i64,
    m: u64,
    n: u64,
    /// Row-major by `n`, then `m`.
    index: Vec<u32>,
    roots: Vec<RootTable>,
}

impl PhaseTable {
    pub fn new(a: i64, m: u64, n: u64) -> Result<Self, KfracError> {
        let terms = m * n;
        if terms > TERM_BUDGET {
            return Err(KfracError::BudgetExceeded {
                terms,
                budget: TERM_BUDGET,
            });
        }
        let mut index = Vec::with_capacity(terms as usize);
        let mut roots = Vec::with_capacity(n as usize);
        for nn in n + 1..=2 * n {
            let ar = arith::modulo(a, nn) as u128;
            for mm in m + 1..=2 * m {
                if gcd(mm, nn) == 1 {
                    let inv = inv_mod(mm as i64, nn).expect("coprime") as u128;
                    index.push((ar * inv % nn as u128) as u32);
                } else {
                    index.push(NOT_COPRIME);
                }
            }
            roots.push(RootTable::new(nn));
        }
        Ok(PhaseTable { a, m, n, index, roots })
    }

    pub fn a(&self) -> i64 {
        self.a
    }

    fn check(&self, inst: &KfracInstance) -> Result<(), KfracError> {
        check_len("alpha", &inst.alpha, self.m)?;
        check_len("beta", &inst.beta, self.n)?;
        Ok(())
    }

    /// `Σ_{(m,n)=1} α_m β_n e(a m̄/n)`.
    pub fn bilinear(&self, alpha: &[Complex64], beta: &[Complex64]) -> Complex64 {
        let mut total = KahanSum::new();
        for (j, b) in beta.iter().enumerate() {
            let row = &self.index[j * self.m as usize..(j + 1) * self.m as usize];
            let roots = &self.roots[j];
            let mut inner = KahanSum::new();
            for (i, &idx) in row.iter().enumerate() {
                if idx != NOT_COPRIME {
                    inner.add(alpha[i] * roots.at_residue(idx as u64));
                }
            }
            total.add(*b * inner.value());
        }
        total.value()
    }

    /// `Σ_k γ_k Σ_{(m,n)=1} α_m β_n e(a k m̄/n)` for `k ∈ [K, 2K]`.
    ///
    /// `Σ_k γ_k e(jk/n)` depends only on `(n, j)` with `j = a m̄ mod n`, so it
    /// is computed once per residue that occurs.
    pub fn trilinear(&self, alpha: &[Complex64], beta: &[Complex64], k: u64, gamma: &[Complex64]) -> Complex64 {
        let mut total = KahanSum::new();
        for (j, b) in beta.iter().enumerate() {
            let nn = self.n + 1 + j as u64;
            let row = &self.index[j * self.m as usize..(j + 1) * self.m as usize];
            let roots = &self.roots[j];
            let mut memo: Vec<Option<Complex64>> = vec![None; nn as usize];
            let mut inner = KahanSum::new();
            for (i, &idx) in row.iter().enumerate() {
                if idx == NOT_COPRIME {
                    continue;
                }
                let g = *memo[idx as usize].get_or_insert_with(|| {
                    let mut s = KahanSum::new();
                    for (t, gk) in gamma.iter().enumerate() {
                        let kk = k + t as u64;
                        s.add(*gk * roots.at_residue(((idx as u128 * kk as u128) % nn as u128) as u64));
                    }
                    s.value()
                });
                inner.add(alpha[i] * g);
            }
            total.add(*b * inner.value());
        }
        total.value()
    }
}

pub fn bilinear_sum(inst: &KfracInstance) -> Result<Complex64, KfracError> {
    let table = PhaseTable::new(inst.a, inst.m, inst.n)?;
    table.check(inst)?;
    Ok(table.bilinear(&inst.alpha, &inst.beta))
}

pub fn trilinear_sum(inst: &KfracInstance) -> Result<Complex64, KfracError> {
    let terms = (inst.k + 1) * inst.m * inst.n;
    if terms > TERM_BUDGET {
        return Err(KfracError::BudgetExceeded {
            terms,
            budget: TERM_BUDGET,
        });
    }
    let table = PhaseTable::new(inst.a, inst.m, inst.n)?;
    table.check(inst)?;
    Ok(table.trilinear(&inst.alpha, &inst.beta, inst.k, &inst.gamma))
}

/// `‖α‖‖β‖ (|a| + MN)^{3/8} (M+N)^{11/48+ε}`.
pub fn dfi_rhs(a: i64, m: u64, n: u64, norm_a: f64, norm_b: f64, eps: f64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    norm_a * norm_b * ((a as f64).abs() + m * n).powf(3.0 / 8.0) * (m + n).powf(11.0 / 48.0 + eps)
}

/// `‖α‖‖β‖‖γ‖ (1 + |a|K/(MN))^{1/2} ((KMN)^{7/20+ε}(M+N)^{1/4} + (KMN)^{3/8+ε}(KM+KN)^{1/8})`.
#[allow(clippy::too_many_arguments)]
pub fn bc_rhs(a: i64, m: u64, n: u64, k: u64, norm_a: f64, norm_b: f64, norm_g: f64, eps: f64) -> f64 {
    let (m, n, k) = (m as f64, n as f64, k as f64);
    let kmn = k * m * n;
    let first = kmn.powf(7.0 / 20.0 + eps) * (m + n).powf(0.25);
    let second = kmn.powf(3.0 / 8.0 + eps) * (k * m + k * n).powf(0.125);
    norm_a * norm_b * norm_g * (1.0 + (a as f64).abs() * k / (m * n)).sqrt() * (first + second)
}

// ---------------------------------------------------------------- experiment

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientModel {
    PlusMinusOne,
    UnitPhase,
    /// `α_A = χ(A/ℓ₂)` on multiples of `ℓ₂`, `β_B = χ̄(B/ℓ₁)` on multiples of
    /// `ℓ₁`, with primes `ℓ₁, ℓ₂ ∈ (L/2, L]`, a non-principal `χ mod p` and
    /// `a = m₀·p·(n₂ℓ₁ − n₁ℓ₂)` for random `m₀, n₁, n₂ ≤ L` (for the trilinear
    /// form the factor `m₀` is the summed variable instead).
    Structured { p: u64, amplifier: u64 },
}

impl CoefficientModel {
    pub fn name(&self) -> &'static str {
        match self {
            CoefficientModel::PlusMinusOne => "pm1",
            CoefficientModel::UnitPhase => "phase",
            CoefficientModel::Structured { .. } => "structured",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub m: u64,
    pub n: u64,
    /// 0 for the bilinear form; otherwise the trilinear form over `k ∈ [K, 2K]`.
    pub k: u64,
    /// Ignored by the structured model, which draws its own.
    pub a: i64,
    pub trials: usize,
    pub seed: u64,
    pub model: CoefficientModel,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub a: i64,
    pub model: &'static str,
    pub abs_sum: f64,
    pub rhs: f64,
    pub trivial: f64,
    pub ratio_rhs: f64,
    pub ratio_trivial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantiles; `None` for an empty sample.
pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quantiles {
        min: v[0],
        q25: at(0.25),
        median: at(0.5),
        q75: at(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialRow>,
    pub ratio_trivial: Option<Quantiles>,
    pub ratio_rhs: Option<Quantiles>,
}

impl ExperimentReport {
    /// One row per trial.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), KfracError> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wtr.serialize(row).map_err(|e| KfracError::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| KfracError::Csv(e.to_string()))
    }
}

/// Independent stream for one trial, derived from the master seed.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn draw_pm1(rng: &mut ChaCha8Rng, len: u64) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0))
        .collect()
}

fn draw_phase(rng: &mut ChaCha8Rng, len: u64) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::from_polar(1.0, 2.0 * PI * rng.gen::<f64>()))
        .collect()
}

struct Structured {
    a: i64,
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
}

fn draw_structured(
    rng: &mut ChaCha8Rng,
    cfg: &ExperimentConfig,
    p: u64,
    amplifier: u64,
    chars: &[DirichletCharacter],
) -> Structured {
    let primes: Vec<u64> = arith::primes_up_to(amplifier)
        .into_iter()
        .filter(|&v| 2 * v > amplifier)
        .collect();
    let pick = |rng: &mut ChaCha8Rng| primes[rng.gen_range(0..primes.len())];
    let (l1, l2) = (pick(rng), pick(rng));
    let chi = &chars[rng.gen_range(1..chars.len())];
    let a = loop {
        let n1 = rng.gen_range(1..=amplifier) as i64;
        let n2 = rng.gen_range(1..=amplifier) as i64;
        let m0 = if cfg.k == 0 {
            rng.gen_range(1..=amplifier) as i64
        } else {
            1
        };
        let a = m0 * p as i64 * (n2 * l1 as i64 - n1 * l2 as i64);
        if a != 0 {
            break a;
        }
    };
    let alpha = (cfg.m + 1..=2 * cfg.m)
        .map(|x| if x % l2 == 0 { chi.eval((x / l2) as i64) } else { Complex64::new(0.0, 0.0) })
        .collect();
    let beta = (cfg.n + 1..=2 * cfg.n)
        .map(|x| {
            if x % l1 == 0 {
                chi.eval((x / l1) as i64).conj()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Structured { a, alpha, beta }
}

/// Runs `trials` seeded draws and reports `|sum|` against both bounds.
pub fn cancellation_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, KfracError> {
    if cfg.m == 0 || cfg.n == 0 {
        return Err(KfracError::Config("M and N must be positive".into()));
    }
    let terms = (cfg.k + 1) * cfg.m * cfg.n;
    if terms > TERM_BUDGET {
        return Err(KfracError::BudgetExceeded {
            terms,
            budget: TERM_BUDGET,
        });
    }
    let chars = match cfg.model {
        CoefficientModel::Structured { p, amplifier } => {
            if !arith::is_prime(p) || p < 3 {
                return Err(KfracError::Config(format!("structured model needs an odd prime p, got {p}")));
            }
            if amplifier < 2 {
                return Err(KfracError::Config("amplifier length must be at least 2".into()));
            }
            characters_mod(p)
        }
        _ => {
            if cfg.a == 0 {
                return Err(KfracError::Config("a must be non-zero".into()));
            }
            Vec::new()
        }
    };
    let shared = match cfg.model {
        CoefficientModel::Structured { .. } => None,
        _ => Some(PhaseTable::new(cfg.a, cfg.m, cfg.n)?),
    };
    let gamma_ones = vec![Complex64::new(1.0, 0.0); cfg.k as usize + 1];

    let rows: Vec<TrialRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let (a, alpha, beta, gamma) = match cfg.model {
                CoefficientModel::PlusMinusOne => {
                    let g = if cfg.k > 0 { draw_pm1(&mut rng, cfg.k + 1) } else { vec![] };
                    (cfg.a, draw_pm1(&mut rng, cfg.m), draw_pm1(&mut rng, cfg.n), g)
                }
                CoefficientModel::UnitPhase => {
                    let g = if cfg.k > 0 { draw_phase(&mut rng, cfg.k + 1) } else { vec![] };
                    (cfg.a, draw_phase(&mut rng, cfg.m), draw_phase(&mut rng, cfg.n), g)
                }
                CoefficientModel::Structured { p, amplifier } => {
                    let s = draw_structured(&mut rng, cfg, p, amplifier, &chars);
                    (s.a, s.alpha, s.beta, gamma_ones.clone())
                }
            };
            let own;
            let table = match &shared {
                Some(t) => t,
                None => {
                    own = PhaseTable::new(a, cfg.m, cfg.n).expect("budget checked");
                    &own
                }
            };
            let (na, nb) = (norm(&alpha), norm(&beta));
            let (sum, rhs, trivial) = if cfg.k == 0 {
                let s = table.bilinear(&alpha, &beta);
                let triv = na * nb * ((cfg.m * cfg.n) as f64).sqrt();
                (s, dfi_rhs(a, cfg.m, cfg.n, na, nb, cfg.eps), triv)
            } else {
                let s = table.trilinear(&alpha, &beta, cfg.k, &gamma);
                let ng = norm(&gamma);
                let triv = na * nb * ng * (((cfg.k + 1) * cfg.m * cfg.n) as f64).sqrt();
                (s, bc_rhs(a, cfg.m, cfg.n, cfg.k, na, nb, ng, cfg.eps), triv)
            };
            let abs_sum = sum.norm();
            let ratio = |d: f64| if d > 0.0 { abs_sum / d } else { 0.0 };
            TrialRow {
                trial,
                m: cfg.m,
                n: cfg.n,
                k: cfg.k,
                a,
                model: cfg.model.name(),
                abs_sum,
                rhs,
                trivial,
                ratio_rhs: ratio(rhs),
                ratio_trivial: ratio(trivial),
            }
        })
        .collect();
    let rt: Vec<f64> = rows.iter().map(|r| r.ratio_trivial).collect();
    let rr: Vec<f64> = rows.iter().map(|r| r.ratio_rhs).collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        ratio_trivial: quantiles(&rt),
        ratio_rhs: quantiles(&rr),
        rows,
    })
}
